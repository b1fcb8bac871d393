#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "lwsep/io/binary.hpp"
#include "lwsep/kmeans.hpp"
#include "lwsep/partition.hpp"

namespace lwsep::primitives {

inline constexpr Eigen::Index kGeomDim = 5;
inline constexpr Eigen::Index kReflDim = static_cast<Eigen::Index>(kReflectanceChannels);
inline constexpr Eigen::Index kHandcraftedDim = kGeomDim + kReflDim;

/// Per-superpoint means of per-point rows.
template <typename Derived>
RowMatrixXd pool_features(const Eigen::MatrixBase<Derived>& point_features, const SuperpointPartition& partition) {
  if (static_cast<std::size_t>(point_features.rows()) != partition.point_count()) {
    throw Error("pool_features: partition does not cover the feature rows");
  }
  RowMatrixXd pooled = RowMatrixXd::Zero(static_cast<Eigen::Index>(partition.count()), point_features.cols());
  for (std::size_t i = 0; i < partition.point_count(); ++i) {
    pooled.row(partition.id(i)) += point_features.row(static_cast<Eigen::Index>(i)).template cast<double>();
  }
  for (std::size_t s = 0; s < partition.count(); ++s) {
    pooled.row(static_cast<Eigen::Index>(s)) /= static_cast<double>(partition.sizes()[s]);
  }
  return pooled;
}

struct AugmentWeights {
  double w_geof = 2.0;
  double w_rgb = 1.0;
  double decay_epochs = 100.0;  // D_coef
  double decay_floor = 0.2;     // w*
};

/// Linearly decaying weight of the handcrafted blocks: max(1 - E/D, w*).
inline double decay_coefficient(double epoch, double decay_epochs, double floor) {
  return std::max(1.0 - epoch / decay_epochs, floor);
}

/// f ⊕ (w·w_geof·geom) ⊕ (w·w_rgb·refl) for coefficient w.
inline RowMatrixXd augment_with_coefficient(const RowMatrixXd& pooled, const RowMatrixXd& geom,
                                            const RowMatrixXd& refl, double w_coef, const AugmentWeights& w) {
  if (geom.rows() != pooled.rows() || refl.rows() != pooled.rows()) {
    throw Error("augment_features: row counts differ");
  }
  if (geom.cols() != kGeomDim || refl.cols() != kReflDim) {
    throw Error("augment_features: expected 5 geometric and 3 reflectance columns");
  }
  RowMatrixXd out(pooled.rows(), pooled.cols() + kHandcraftedDim);
  out.leftCols(pooled.cols()) = pooled;
  out.middleCols(pooled.cols(), kGeomDim) = (w_coef * w.w_geof) * geom;
  out.rightCols(kReflDim) = (w_coef * w.w_rgb) * refl;
  return out;
}

inline RowMatrixXd augment_features(const RowMatrixXd& pooled, const RowMatrixXd& geom, const RowMatrixXd& refl,
                                    double epoch, const AugmentWeights& w) {
  return augment_with_coefficient(pooled, geom, refl, decay_coefficient(epoch, w.decay_epochs, w.decay_floor), w);
}

/// Semantic primitives: k-means centroids over augmented superpoint
/// features. The first `neural_dim` columns are the learned-feature block.
struct PrimitiveModel {
  RowMatrixXd centroids;
  std::size_t neural_dim = 0;
  AugmentWeights weights;
  double fit_coefficient = 1.0;  // decay coefficient in effect when fitted

  std::size_t count() const { return static_cast<std::size_t>(centroids.rows()); }
};

struct PrimitiveFit {
  PrimitiveModel model;
  /// Primitive index of every superpoint, per tile.
  std::vector<std::vector<std::uint32_t>> superpoint_labels;
  Warnings warnings;
};

/// Clusters the augmented superpoint rows of all tiles jointly (rows are
/// concatenated in tile order) into S primitives.
inline PrimitiveFit fit_primitives(const std::vector<RowMatrixXd>& per_tile, std::size_t s, std::size_t neural_dim,
                                   std::mt19937_64& rng, const AugmentWeights& weights, double fit_coefficient,
                                   const KMeansConfig& cfg = {}) {
  PrimitiveFit fit;
  Eigen::Index total = 0, cols = -1;
  for (const auto& t : per_tile) {
    if (cols >= 0 && t.cols() != cols) throw Error("fit_primitives: tiles disagree on feature width");
    cols = t.cols();
    total += t.rows();
  }
  if (total == 0) throw Error("fit_primitives: no superpoints");
  if (static_cast<std::size_t>(cols) != neural_dim + static_cast<std::size_t>(kHandcraftedDim)) {
    throw Error("fit_primitives: feature width does not match the neural dimension");
  }
  RowMatrixXd all(total, cols);
  Eigen::Index row = 0;
  for (const auto& t : per_tile) {
    all.middleRows(row, t.rows()) = t;
    row += t.rows();
  }
  std::size_t k = s;
  if (static_cast<std::size_t>(total) < s) {
    k = static_cast<std::size_t>(total);
    fit.warnings.add("only " + std::to_string(total) + " superpoints; using " + std::to_string(k) +
                     " primitives instead of " + std::to_string(s));
  }
  auto km = kmeans(all, k, rng, cfg);
  fit.model.centroids = std::move(km.centroids);
  fit.model.neural_dim = neural_dim;
  fit.model.weights = weights;
  fit.model.fit_coefficient = fit_coefficient;
  row = 0;
  for (const auto& t : per_tile) {
    fit.superpoint_labels.emplace_back(km.assignment.begin() + row, km.assignment.begin() + row + t.rows());
    row += t.rows();
  }
  return fit;
}

/// Per-point pseudo-labels: each point inherits its superpoint's primitive.
inline std::vector<std::uint32_t> point_labels(const SuperpointPartition& partition,
                                               std::span<const std::uint32_t> superpoint_labels) {
  std::vector<std::uint32_t> out(partition.point_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = superpoint_labels[partition.id(i)];
  return out;
}

/// Unit-length rows of the neural block of the centroids (zero rows stay
/// zero).
template <typename Scalar>
RowMatrix<Scalar> normalized_neural_centroids(const PrimitiveModel& model) {
  RowMatrix<Scalar> c = model.centroids.leftCols(static_cast<Eigen::Index>(model.neural_dim)).cast<Scalar>();
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    const Scalar n = c.row(r).norm();
    if (n > Scalar(0)) c.row(r) /= n;
  }
  return c;
}

/// Cosine similarity between each feature row and the neural block of each
/// centroid. Zero-norm rows get zero logits.
template <typename Scalar>
RowMatrix<Scalar> classify_logits(const RowMatrix<Scalar>& features, const PrimitiveModel& model) {
  if (static_cast<std::size_t>(features.cols()) != model.neural_dim) {
    throw Error("classify_logits: feature width does not match the model");
  }
  const auto c = normalized_neural_centroids<Scalar>(model);
  RowMatrix<Scalar> logits = features * c.transpose();
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const Scalar n = features.row(r).norm();
    if (n > Scalar(0)) {
      logits.row(r) /= n;
    } else {
      logits.row(r).setZero();
    }
  }
  return logits;
}

inline constexpr std::uint32_t kModelVersion = 1;

inline void write_model(io::ByteWriter& w, const PrimitiveModel& m) {
  w.put_bytes("LWPM", 4);
  w.put(kModelVersion);
  w.put(static_cast<std::uint64_t>(m.centroids.rows()));
  w.put(static_cast<std::uint64_t>(m.centroids.cols()));
  w.put(static_cast<std::uint64_t>(m.neural_dim));
  w.put(m.weights.w_geof);
  w.put(m.weights.w_rgb);
  w.put(m.weights.decay_epochs);
  w.put(m.weights.decay_floor);
  w.put(m.fit_coefficient);
  w.put_bytes(m.centroids.data(), static_cast<std::size_t>(m.centroids.size()) * sizeof(double));
}

inline PrimitiveModel read_model(io::ByteReader& r) {
  r.expect_magic("LWPM");
  const auto version_at = r.position();
  if (r.get<std::uint32_t>("model version") != kModelVersion) {
    throw io::ParseError("unsupported primitive model version", version_at);
  }
  PrimitiveModel m;
  const auto rows = r.get<std::uint64_t>("centroid rows");
  const auto cols = r.get<std::uint64_t>("centroid columns");
  m.neural_dim = r.get<std::uint64_t>("neural dimension");
  if (m.neural_dim > cols) throw io::ParseError("neural dimension exceeds centroid width", r.position());
  m.weights.w_geof = r.get<double>("w_geof");
  m.weights.w_rgb = r.get<double>("w_rgb");
  m.weights.decay_epochs = r.get<double>("decay epochs");
  m.weights.decay_floor = r.get<double>("decay floor");
  m.fit_coefficient = r.get<double>("fit coefficient");
  if (cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / cols) {
    throw io::ParseError("implausible centroid shape", r.position());
  }
  const auto values = r.get_array<double>(rows * cols, "centroids");
  m.centroids = Eigen::Map<const RowMatrixXd>(values.data(), static_cast<Eigen::Index>(rows),
                                              static_cast<Eigen::Index>(cols));
  return m;
}

}  // namespace lwsep::primitives
