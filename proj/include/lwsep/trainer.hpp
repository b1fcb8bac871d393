#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "lwsep/extractor.hpp"
#include "lwsep/geomfeat.hpp"
#include "lwsep/io/binary.hpp"
#include "lwsep/primitives.hpp"

namespace lwsep::trainer {

struct TrainConfig {
  std::size_t epochs_pretrain = 150;
  std::size_t epochs_grow = 60;
  std::size_t refresh_interval = 10;  // Ê
  std::size_t m_start = 1500;         // M¹
  std::size_t m_end = 1200;           // M^T
  std::size_t batch_size = 16;
  double lr = 0.1;
  double momentum = 0.9;
  double poly_power = 0.9;
  std::size_t primitives = 300;  // S
  double w_xyz = 0.2;
  primitives::AugmentWeights weights;
  /// Reflectance channels (0-based) entering the handcrafted block of the
  /// clustering vectors. The others are zeroed.
  std::vector<std::size_t> cluster_channels{0, 1, 2};
  extractor::VoxelMlpConfig network;
  bool augment = false;
  KMeansConfig kmeans;
  std::uint64_t seed = 0;

  std::size_t total_epochs() const { return epochs_pretrain + epochs_grow; }
};

inline void validate(const TrainConfig& c) {
  if (c.m_end > c.m_start) throw Error("train config: M^T must not exceed M^1");
  if (c.refresh_interval == 0) throw Error("train config: refresh interval must be positive");
  if (c.batch_size == 0) throw Error("train config: batch size must be positive");
  if (c.primitives == 0) throw Error("train config: primitive count must be positive");
  if (!(c.lr > 0.0)) throw Error("train config: learning rate must be positive");
  if (c.momentum < 0.0 || c.momentum >= 1.0) throw Error("train config: momentum must be in [0, 1)");
  for (auto ch : c.cluster_channels) {
    if (ch >= kReflectanceChannels) throw Error("train config: cluster channel out of range");
  }
}

/// Polynomial decay lr0·(1 − epoch/total)^power.
inline double learning_rate(const TrainConfig& c, std::size_t epoch) {
  const double total = static_cast<double>(c.total_epochs());
  return c.lr * std::pow(1.0 - static_cast<double>(epoch) / total, c.poly_power);
}

/// Number of growth events: ceil(E_grow / Ê).
inline std::size_t growth_event_count(const TrainConfig& c) {
  return (c.epochs_grow + c.refresh_interval - 1) / c.refresh_interval;
}

/// Superpoint target of growth event j (1-based): M¹ − j(M¹ − M^T)/T.
inline std::size_t growth_target(const TrainConfig& c, std::size_t j) {
  const std::size_t t = growth_event_count(c);
  if (t == 0) return c.m_start;
  const double m = static_cast<double>(c.m_start) -
                   static_cast<double>(j) * static_cast<double>(c.m_start - c.m_end) / static_cast<double>(t);
  return static_cast<std::size_t>(std::llround(m));
}

/// Epochs at which primitives are refitted (before that epoch's training)
/// and, from E_pretrain on, superpoints grown first.
inline bool is_refresh_epoch(const TrainConfig& c, std::size_t epoch) {
  if (epoch < c.epochs_pretrain) return epoch % c.refresh_interval == 0;
  return (epoch - c.epochs_pretrain) % c.refresh_interval == 0;
}

/// Pseudo-label counts per feature unit (CSR layout).
struct UnitLabels {
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> label;
  std::vector<std::uint32_t> count;

  std::size_t units() const { return offsets.size() - 1; }
};

inline UnitLabels group_labels(std::span<const std::uint32_t> unit_of_point, std::size_t unit_count,
                               std::span<const std::uint32_t> point_labels) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs(unit_of_point.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = {unit_of_point[i], point_labels[i]};
  std::sort(pairs.begin(), pairs.end());
  UnitLabels out;
  out.offsets.assign(unit_count + 1, 0);
  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i;
    while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
    out.label.push_back(pairs[i].second);
    out.count.push_back(static_cast<std::uint32_t>(j - i));
    ++out.offsets[pairs[i].first + 1];
    i = j;
  }
  for (std::size_t u = 0; u < unit_count; ++u) out.offsets[u + 1] += out.offsets[u];
  return out;
}

/// Softmax cross-entropy summed over points, with points grouped by unit:
/// unit u has label counts (label, count). Returns the summed loss and
/// writes d(loss)/d(logits) into `grad`.
template <typename Scalar>
double cross_entropy(const RowMatrix<Scalar>& logits, const UnitLabels& labels, RowMatrix<Scalar>* grad) {
  if (static_cast<std::size_t>(logits.rows()) != labels.units()) throw Error("cross_entropy: unit count mismatch");
  if (grad) grad->resize(logits.rows(), logits.cols());
  double total = 0.0;
  std::vector<double> p(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index u = 0; u < logits.rows(); ++u) {
    const auto row = logits.row(u);
    const double m = static_cast<double>(row.maxCoeff());
    double z = 0.0;
    for (Eigen::Index s = 0; s < row.size(); ++s) {
      p[static_cast<std::size_t>(s)] = std::exp(static_cast<double>(row[s]) - m);
      z += p[static_cast<std::size_t>(s)];
    }
    const double lse = m + std::log(z);
    double n = 0.0;
    for (auto k = labels.offsets[u]; k < labels.offsets[u + 1]; ++k) {
      n += labels.count[k];
      total += labels.count[k] * (lse - static_cast<double>(row[labels.label[k]]));
    }
    if (grad) {
      for (Eigen::Index s = 0; s < row.size(); ++s) {
        (*grad)(u, s) = static_cast<Scalar>(n * p[static_cast<std::size_t>(s)] / z);
      }
      for (auto k = labels.offsets[u]; k < labels.offsets[u + 1]; ++k) {
        (*grad)(u, labels.label[k]) -= static_cast<Scalar>(labels.count[k]);
      }
    }
  }
  return total;
}

/// Backpropagates d(loss)/d(cosine logits) to the unnormalized features,
/// given unit-length class directions `c_hat` (one row per class).
template <typename Scalar>
RowMatrix<Scalar> cosine_backward(const RowMatrix<Scalar>& features, const RowMatrix<Scalar>& c_hat,
                                  const RowMatrix<Scalar>& grad_logits) {
  RowMatrix<Scalar> q = grad_logits * c_hat;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const Scalar n = features.row(r).norm();
    if (!(n > Scalar(0))) {
      q.row(r).setZero();
      continue;
    }
    const auto u = features.row(r) / n;
    const Scalar uq = u.dot(q.row(r));
    q.row(r) = (q.row(r) - uq * u) / n;
  }
  return q;
}

/// SGD with momentum: v ← μv + g; p ← p − lr·v.
template <typename Scalar>
struct SgdMomentum {
  std::vector<Scalar> velocity;

  void step(std::span<Scalar> params, std::span<const Scalar> grad, double lr, double momentum) {
    if (velocity.size() != params.size()) velocity.assign(params.size(), Scalar(0));
    for (std::size_t k = 0; k < params.size(); ++k) {
      velocity[k] = static_cast<Scalar>(momentum) * velocity[k] + grad[k];
      params[k] -= static_cast<Scalar>(lr) * velocity[k];
    }
  }
};

/// One training tile: preprocessed points (reflectance imputed and
/// normalized), multi-scale geometric features and initial superpoints.
struct TrainingTile {
  Tile tile;
  geomfeat::GeomFeatures geom;
  SuperpointPartition initial;
};

using Network = extractor::VoxelMlp<float>;

inline Network make_reference_extractor(const TrainConfig& cfg) {
  Network net(cfg.network);
  auto rng = make_rng(cfg.seed, {0x696e6974});
  net.initialize(rng);
  return net;
}

/// Per-point handcrafted rows: the five geometric descriptors and the three
/// reflectance channels, unselected cluster channels zeroed.
inline RowMatrixXd handcrafted_geom(const geomfeat::GeomFeatures& g) { return g.values.cast<double>(); }

inline RowMatrixXd handcrafted_refl(const Tile& t, std::span<const std::size_t> channels) {
  RowMatrixXd r = RowMatrixXd::Zero(static_cast<Eigen::Index>(t.size()), primitives::kReflDim);
  for (auto c : channels) {
    for (std::size_t i = 0; i < t.size(); ++i) r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = t.reflectance[c][i];
  }
  return r;
}

/// Pooled neural features, each superpoint row scaled to unit length so
/// Euclidean k-means on them agrees with the cosine classifier.
template <typename Derived>
RowMatrixXd pooled_unit_features(const Eigen::MatrixBase<Derived>& point_features, const SuperpointPartition& p) {
  RowMatrixXd f = primitives::pool_features(point_features, p);
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    const double n = f.row(r).norm();
    if (n > 0.0) f.row(r) /= n;
  }
  return f;
}

/// Clustering vectors of the superpoints of `p`: f̄ ⊕ w·w_geof·geom ⊕
/// w·w_rgb·refl, optionally followed by w_xyz·centroid.
inline RowMatrixXd superpoint_vectors(const RowMatrixXf& point_features, const TrainingTile& t,
                                      const SuperpointPartition& p, double w_coef, const TrainConfig& cfg,
                                      bool with_centroid) {
  const RowMatrixXd f = pooled_unit_features(point_features, p);
  const RowMatrixXd g = primitives::pool_features(handcrafted_geom(t.geom), p);
  const RowMatrixXd r = primitives::pool_features(handcrafted_refl(t.tile, cfg.cluster_channels), p);
  RowMatrixXd v = primitives::augment_with_coefficient(f, g, r, w_coef, cfg.weights);
  if (!with_centroid) return v;
  RowMatrixXd out(v.rows(), v.cols() + 3);
  out.leftCols(v.cols()) = v;
  for (std::size_t s = 0; s < p.count(); ++s) {
    out.row(static_cast<Eigen::Index>(s)).tail<3>() = cfg.w_xyz * p.centroids()[s].transpose();
  }
  return out;
}

/// Merges superpoints of the initial partition into `target` groups by
/// k-means on their clustering vectors. Tiles with at most `target`
/// superpoints are returned unchanged.
inline SuperpointPartition grow_superpoints(const TrainingTile& t, const RowMatrixXf& point_features,
                                            std::size_t target, double w_coef, const TrainConfig& cfg,
                                            std::mt19937_64& rng) {
  if (t.initial.count() <= target) return t.initial;
  const RowMatrixXd v = superpoint_vectors(point_features, t, t.initial, w_coef, cfg, true);
  const auto km = kmeans(v, target, rng, cfg.kmeans);
  std::vector<std::uint32_t> labels(t.tile.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = km.assignment[t.initial.id(i)];
  return SuperpointPartition::from_labels(labels, t.tile.points);
}

/// Random rotation about z, scaling in [0.9, 1.1] and 5 mm jitter.
inline Tile augment_tile(const Tile& in, std::mt19937_64& rng) {
  Tile out = in;
  const double theta = 6.283185307179586 * uniform01(rng);
  const double scale = 0.9 + 0.2 * uniform01(rng);
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  for (auto& p : out.points) {
    p = scale * (rot * p);
    for (int d = 0; d < 3; ++d) p[d] += normal_sample(rng, 0.0, 0.005);
  }
  return out;
}

/// Everything needed to continue a run from the start of `epoch`.
struct TrainState {
  std::size_t epoch = 0;
  std::vector<float> parameters;
  std::vector<float> velocity;
  primitives::PrimitiveModel model;
  std::vector<std::vector<std::uint32_t>> superpoint_labels;
  std::vector<std::vector<std::uint32_t>> partitions;  // current superpoint id per point
};

inline std::uint64_t config_fingerprint(const TrainConfig& c) {
  io::ByteWriter w;
  for (auto v : {c.epochs_pretrain, c.epochs_grow, c.refresh_interval, c.m_start, c.m_end, c.batch_size, c.primitives,
                 c.network.hidden1, c.network.hidden2, c.network.output}) {
    w.put(static_cast<std::uint64_t>(v));
  }
  for (auto v : {c.lr, c.momentum, c.poly_power, c.w_xyz, c.weights.w_geof, c.weights.w_rgb, c.weights.decay_epochs,
                 c.weights.decay_floor, c.network.voxel_size, c.network.input.coordinate_scale,
                 c.kmeans.relative_tolerance}) {
    w.put(v);
  }
  w.put(static_cast<std::uint64_t>(c.kmeans.max_iterations));
  for (auto ch : c.cluster_channels) w.put(static_cast<std::uint32_t>(ch));
  w.put(std::uint32_t{0xffffffff});
  for (auto ch : c.network.input.reflectance_channels) w.put(static_cast<std::uint32_t>(ch));
  w.put(static_cast<std::uint8_t>(c.augment));
  w.put(c.seed);
  return fnv1a64(w.bytes().data(), w.bytes().size());
}

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_state(io::ByteWriter& w, const TrainState& s, std::uint64_t fingerprint) {
  w.put_bytes("LWCK", 4);
  w.put(kCheckpointVersion);
  w.put(fingerprint);
  w.put(static_cast<std::uint64_t>(s.epoch));
  w.put(static_cast<std::uint64_t>(s.parameters.size()));
  w.put_array(s.parameters);
  w.put(static_cast<std::uint64_t>(s.velocity.size()));
  w.put_array(s.velocity);
  primitives::write_model(w, s.model);
  w.put(static_cast<std::uint64_t>(s.partitions.size()));
  for (std::size_t t = 0; t < s.partitions.size(); ++t) {
    w.put(static_cast<std::uint64_t>(s.partitions[t].size()));
    w.put_array(s.partitions[t]);
    w.put(static_cast<std::uint64_t>(s.superpoint_labels[t].size()));
    w.put_array(s.superpoint_labels[t]);
  }
}

inline TrainState read_state(io::ByteReader& r, std::uint64_t* fingerprint = nullptr) {
  r.expect_magic("LWCK");
  const auto at = r.position();
  if (r.get<std::uint32_t>("checkpoint version") != kCheckpointVersion) {
    throw io::ParseError("unsupported checkpoint version", at);
  }
  TrainState s;
  const auto fp = r.get<std::uint64_t>("config fingerprint");
  if (fingerprint) *fingerprint = fp;
  s.epoch = r.get<std::uint64_t>("epoch");
  s.parameters = r.get_array<float>(r.get<std::uint64_t>("parameter count"), "parameters");
  s.velocity = r.get_array<float>(r.get<std::uint64_t>("velocity count"), "velocity");
  s.model = primitives::read_model(r);
  const auto tiles = r.get<std::uint64_t>("tile count");
  for (std::uint64_t t = 0; t < tiles; ++t) {
    s.partitions.push_back(r.get_array<std::uint32_t>(r.get<std::uint64_t>("point count"), "partition"));
    s.superpoint_labels.push_back(r.get_array<std::uint32_t>(r.get<std::uint64_t>("superpoint count"), "labels"));
  }
  return s;
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04zu.lwck", epoch);
  return dir / name;
}

/// Most recent checkpoint in `dir`, if any.
inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  std::optional<std::filesystem::path> best;
  if (!std::filesystem::exists(dir)) return best;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && e.path().extension() == ".lwck") {
      if (!best || e.path().filename() > best->filename()) best = e.path();
    }
  }
  return best;
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::size_t m_current = 0;  // superpoints summed over tiles
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::optional<TrainState> resume;
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const std::string&)> on_event;
};

struct TrainResult {
  Network extractor;
  primitives::PrimitiveModel model;
  std::vector<SuperpointPartition> partitions;
  std::vector<EpochLog> log;
  std::size_t refits = 0;
  std::size_t growth_events = 0;
  Warnings warnings;
  TrainState final_state;
};

/// Two-stage training: pretraining on the initial superpoints with
/// primitive refits every Ê epochs, then growth events (each followed by a
/// refit) every Ê epochs. A final refit after the last epoch produces the
/// returned primitives. Fully determined by cfg.seed.
inline TrainResult run_training(const std::vector<TrainingTile>& tiles, const TrainConfig& cfg,
                                const TrainOptions& opt = {}) {
  validate(cfg);
  if (tiles.empty()) throw Error("run_training: no tiles");
  const std::uint64_t fingerprint = config_fingerprint(cfg);
  const std::size_t total = cfg.total_epochs();
  const std::size_t k = cfg.network.output;
  auto event = [&](const std::string& msg) {
    if (opt.on_event) opt.on_event(msg);
  };

  TrainResult res{make_reference_extractor(cfg), {}, {}, {}, 0, 0, {}, {}};
  auto& net = res.extractor;
  SgdMomentum<float> sgd;
  std::vector<SuperpointPartition> current;
  std::vector<std::vector<std::uint32_t>> sp_labels;
  std::size_t start = 0;

  if (opt.resume) {
    const auto& s = *opt.resume;
    if (s.parameters.size() != net.parameters().size()) throw Error("resume: parameter count mismatch");
    if (s.partitions.size() != tiles.size()) throw Error("resume: tile count mismatch");
    std::copy(s.parameters.begin(), s.parameters.end(), net.parameters().begin());
    sgd.velocity = s.velocity;
    res.model = s.model;
    sp_labels = s.superpoint_labels;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      if (s.partitions[t].size() != tiles[t].tile.size()) throw Error("resume: partition size mismatch");
      current.push_back(SuperpointPartition::from_labels(s.partitions[t], tiles[t].tile.points));
    }
    start = s.epoch;
    event("resumed at epoch " + std::to_string(start));
  } else {
    for (const auto& t : tiles) current.push_back(t.initial);
  }

  std::vector<std::unique_ptr<extractor::Prepared>> prepared;
  for (const auto& t : tiles) prepared.push_back(net.prepare(t.tile));

  auto point_features = [&](std::size_t t) {
    const auto pass = net.forward(*prepared[t]);
    RowMatrixXf out(static_cast<Eigen::Index>(tiles[t].tile.size()), pass->features.cols());
    for (std::size_t i = 0; i < tiles[t].tile.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = pass->features.row(prepared[t]->unit_of_point[i]);
    }
    return out;
  };

  auto snapshot = [&](std::size_t epoch) {
    TrainState s;
    s.epoch = epoch;
    s.parameters.assign(net.parameters().begin(), net.parameters().end());
    s.velocity = sgd.velocity;
    s.model = res.model;
    s.superpoint_labels = sp_labels;
    for (const auto& p : current) s.partitions.push_back(p.ids());
    return s;
  };

  // Growth (when due) and refit at the start of `epoch`.
  auto refresh = [&](std::size_t epoch) {
    std::vector<RowMatrixXf> feats;
    for (std::size_t t = 0; t < tiles.size(); ++t) feats.push_back(point_features(t));
    const double w_coef = primitives::decay_coefficient(static_cast<double>(epoch), cfg.weights.decay_epochs,
                                                        cfg.weights.decay_floor);
    if (epoch >= cfg.epochs_pretrain && epoch < total) {
      const std::size_t j = (epoch - cfg.epochs_pretrain) / cfg.refresh_interval + 1;
      const std::size_t target = growth_target(cfg, j);
      for (std::size_t t = 0; t < tiles.size(); ++t) {
        auto rng = make_rng(cfg.seed, {0x67726f77, epoch, t});
        current[t] = grow_superpoints(tiles[t], feats[t], target, w_coef, cfg, rng);
      }
      ++res.growth_events;
      event("growth event " + std::to_string(j) + " at epoch " + std::to_string(epoch) + ", target " +
            std::to_string(target));
    }
    std::vector<RowMatrixXd> vectors;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      vectors.push_back(superpoint_vectors(feats[t], tiles[t], current[t], w_coef, cfg, false));
    }
    auto rng = make_rng(cfg.seed, {0x72656669, epoch});
    auto fit = primitives::fit_primitives(vectors, cfg.primitives, k, rng, cfg.weights, w_coef, cfg.kmeans);
    for (auto& m : fit.warnings.messages) res.warnings.add(m);
    res.model = std::move(fit.model);
    sp_labels = std::move(fit.superpoint_labels);
    ++res.refits;
    event("primitives refitted at epoch " + std::to_string(epoch));
    if (opt.checkpoint_dir) {
      io::ByteWriter w;
      write_state(w, snapshot(epoch), fingerprint);
      io::write_file_atomic(checkpoint_path(*opt.checkpoint_dir, epoch), w.bytes());
    }
  };

  for (std::size_t epoch = start; epoch < total; ++epoch) {
    // A resumed state already holds the refresh of its own epoch.
    if (is_refresh_epoch(cfg, epoch) && !(opt.resume && epoch == start)) refresh(epoch);
    const double lr = learning_rate(cfg, epoch);
    const auto c_hat = primitives::normalized_neural_centroids<float>(res.model);

    std::vector<std::size_t> order(tiles.size());
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_rng(cfg.seed, {0x73687566, epoch});
    portable_shuffle(order, shuffle_rng);

    double loss_sum = 0.0;
    std::size_t point_sum = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      std::size_t batch_points = 0;
      for (std::size_t q = b; q < e; ++q) batch_points += tiles[order[q]].tile.size();
      net.zero_gradient();
      for (std::size_t q = b; q < e; ++q) {
        const std::size_t t = order[q];
        std::unique_ptr<extractor::Prepared> aug;
        const extractor::Prepared* prep = prepared[t].get();
        if (cfg.augment) {
          auto rng = make_rng(cfg.seed, {0x61756720, epoch, t});
          aug = net.prepare(augment_tile(tiles[t].tile, rng));
          prep = aug.get();
        }
        const auto labels = primitives::point_labels(current[t], sp_labels[t]);
        const auto grouped = group_labels(prep->unit_of_point, prep->unit_count(), labels);
        const auto pass = net.forward(*prep);
        const RowMatrixXf logits = primitives::classify_logits<float>(pass->features, res.model);
        RowMatrixXf grad_logits;
        const double loss = cross_entropy(logits, grouped, &grad_logits);
        if (!std::isfinite(loss)) {
          throw Error("non-finite loss at epoch " + std::to_string(epoch) + " on tile '" + tiles[t].tile.tile_id +
                      "' (lr " + std::to_string(lr) + ")");
        }
        loss_sum += loss;
        grad_logits /= static_cast<float>(batch_points);
        net.backward(*prep, *pass, cosine_backward<float>(pass->features, c_hat, grad_logits));
      }
      point_sum += batch_points;
      sgd.step(net.parameters(), net.gradient(), lr, cfg.momentum);
    }
    std::size_t m_current = 0;
    for (const auto& p : current) m_current += p.count();
    res.log.push_back({epoch, loss_sum / static_cast<double>(point_sum), lr, m_current});
    if (opt.on_epoch) opt.on_epoch(res.log.back());
  }

  if (!(opt.resume && start == total)) refresh(total);
  res.partitions = current;
  res.final_state = snapshot(total);
  return res;
}

/// Final artifact of a run: extractor and primitives, independent of the
/// training config.
struct SavedModel {
  Network extractor;
  primitives::PrimitiveModel model;
  std::uint64_t fingerprint = 0;
};

inline constexpr std::uint32_t kSavedModelVersion = 1;

inline std::vector<char> encode_model(const Network& net, const primitives::PrimitiveModel& model,
                                      std::uint64_t fingerprint) {
  io::ByteWriter w;
  w.put_bytes("LWSM", 4);
  w.put(kSavedModelVersion);
  w.put(fingerprint);
  net.save(w);
  primitives::write_model(w, model);
  return w.bytes();
}

inline SavedModel decode_model(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("LWSM");
  const auto at = r.position();
  if (r.get<std::uint32_t>("model version") != kSavedModelVersion) throw io::ParseError("unsupported model version", at);
  const auto fp = r.get<std::uint64_t>("config fingerprint");
  auto net = Network::from_stream(r);
  auto model = primitives::read_model(r);
  if (model.neural_dim != net.feature_dim()) {
    throw io::ParseError("primitive model does not match the extractor width", r.position());
  }
  return {std::move(net), std::move(model), fp};
}

/// Model at a training checkpoint; the config supplies the architecture and
/// must match the checkpoint's fingerprint.
inline SavedModel model_from_checkpoint(std::vector<char> bytes, const TrainConfig& cfg) {
  io::ByteReader r(std::move(bytes));
  std::uint64_t fp = 0;
  auto state = read_state(r, &fp);
  if (fp != config_fingerprint(cfg)) throw Error("checkpoint was written with a different training config");
  auto net = make_reference_extractor(cfg);
  if (state.parameters.size() != net.parameters().size()) throw Error("checkpoint parameter count mismatch");
  std::copy(state.parameters.begin(), state.parameters.end(), net.parameters().begin());
  return {std::move(net), std::move(state.model), fp};
}

struct PredictConfig {
  std::size_t c_over = 14;
  double l_min = 0.55;
  /// When false, the oversegmented class itself is the predicted label (the
  /// C_over = 2 variant, matched to ground truth by the Hungarian method).
  bool use_linearity_threshold = true;
  KMeansConfig kmeans;
  std::uint64_t seed = 0;
};

struct TilePrediction {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint32_t> overseg;
};

struct PredictResult {
  std::vector<TilePrediction> tiles;
  std::vector<std::uint32_t> class_of_primitive;
  std::vector<double> class_linearity;  // NaN for empty classes
  std::vector<std::uint8_t> class_label;
  Warnings warnings;
};

/// Reference without learning: superpoints clustered on their handcrafted
/// descriptors alone (epoch-0 weights), points inheriting their superpoint's
/// primitive. Classes then follow the same C_over grouping and linearity rule.
inline PredictResult predict_handcrafted(std::span<const TrainingTile> tiles, const TrainConfig& tcfg,
                                         const PredictConfig& cfg);

/// Groups the primitives into C_over classes by k-means over their centroid
/// vectors, with handcrafted blocks rescaled to the decay floor.
inline std::vector<std::uint32_t> oversegment_primitives(const primitives::PrimitiveModel& model,
                                                         const PredictConfig& cfg, Warnings& warnings) {
  RowMatrixXd c = model.centroids;
  const auto nd = static_cast<Eigen::Index>(model.neural_dim);
  c.rightCols(c.cols() - nd) *= model.weights.decay_floor / model.fit_coefficient;
  std::size_t k = cfg.c_over;
  if (k == 0) throw Error("predict: C_over must be positive");
  if (k > model.count()) {
    warnings.add("C_over " + std::to_string(k) + " exceeds the primitive count; using " +
                 std::to_string(model.count()));
    k = model.count();
  }
  auto rng = make_rng(cfg.seed, {0x70726564});
  return kmeans(c, k, rng, cfg.kmeans).assignment;
}

/// Mean linearity per oversegmented class over all tiles of the call, then
/// the wood/foliage decision (or the class id itself without thresholding).
inline void label_classes(std::span<const TrainingTile> tiles, std::size_t classes, const PredictConfig& cfg,
                          PredictResult& res) {
  std::vector<double> lin_sum(classes, 0.0);
  std::vector<std::size_t> lin_count(classes, 0);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    for (std::size_t i = 0; i < res.tiles[t].overseg.size(); ++i) {
      const auto c = res.tiles[t].overseg[i];
      lin_sum[c] += tiles[t].geom.linearity(i);
      ++lin_count[c];
    }
  }
  res.class_linearity.assign(classes, std::numeric_limits<double>::quiet_NaN());
  res.class_label.assign(classes, kFoliage);
  for (std::size_t c = 0; c < classes; ++c) {
    if (!lin_count[c]) continue;  // empty class: nothing to label
    res.class_linearity[c] = lin_sum[c] / static_cast<double>(lin_count[c]);
    res.class_label[c] = res.class_linearity[c] >= cfg.l_min ? kWood : kFoliage;
  }
  if (!cfg.use_linearity_threshold && classes > 255) throw Error("predict: too many classes for 8-bit labels");
  for (auto& p : res.tiles) {
    p.labels.resize(p.overseg.size());
    for (std::size_t i = 0; i < p.overseg.size(); ++i) {
      p.labels[i] = cfg.use_linearity_threshold ? res.class_label[p.overseg[i]] : static_cast<std::uint8_t>(p.overseg[i]);
    }
  }
}

/// Per-point predictions over a set of tiles. Class linearity is averaged
/// over member points of all tiles in the call.
inline PredictResult predict(std::span<const TrainingTile> tiles, const Network& net,
                             const primitives::PrimitiveModel& model, const PredictConfig& cfg) {
  PredictResult res;
  res.class_of_primitive = oversegment_primitives(model, cfg, res.warnings);
  std::size_t classes = 0;
  for (auto c : res.class_of_primitive) classes = std::max<std::size_t>(classes, c + 1);
  for (const auto& t : tiles) {
    const RowMatrixXf feats = net.point_features(t.tile);
    const RowMatrixXf logits = primitives::classify_logits<float>(feats, model);
    TilePrediction p;
    p.overseg.resize(t.tile.size());
    for (std::size_t i = 0; i < t.tile.size(); ++i) {
      Eigen::Index arg;
      logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      p.overseg[i] = res.class_of_primitive[static_cast<std::size_t>(arg)];
    }
    res.tiles.push_back(std::move(p));
  }
  label_classes(tiles, classes, cfg, res);
  return res;
}

inline PredictResult predict_handcrafted(std::span<const TrainingTile> tiles, const TrainConfig& tcfg,
                                         const PredictConfig& cfg) {
  std::vector<RowMatrixXd> vectors;
  for (const auto& t : tiles) {
    const RowMatrixXd g = primitives::pool_features(handcrafted_geom(t.geom), t.initial);
    const RowMatrixXd r = primitives::pool_features(handcrafted_refl(t.tile, tcfg.cluster_channels), t.initial);
    vectors.push_back(primitives::augment_with_coefficient(RowMatrixXd(g.rows(), 0), g, r, 1.0, tcfg.weights));
  }
  auto rng = make_rng(tcfg.seed, {0x72656669, 0});
  const auto fit = primitives::fit_primitives(vectors, tcfg.primitives, 0, rng, tcfg.weights, 1.0, tcfg.kmeans);
  PredictResult res;
  res.warnings = fit.warnings;
  res.class_of_primitive = oversegment_primitives(fit.model, cfg, res.warnings);
  std::size_t classes = 0;
  for (auto c : res.class_of_primitive) classes = std::max<std::size_t>(classes, c + 1);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    TilePrediction p;
    const auto prim = primitives::point_labels(tiles[t].initial, fit.superpoint_labels[t]);
    p.overseg.resize(prim.size());
    for (std::size_t i = 0; i < prim.size(); ++i) p.overseg[i] = res.class_of_primitive[prim[i]];
    res.tiles.push_back(std::move(p));
  }
  label_classes(tiles, classes, cfg, res);
  return res;
}

}  // namespace lwsep::trainer
