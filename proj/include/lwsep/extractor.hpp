#pragma once

#include <array>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/StdVector>

#include "lwsep/io/binary.hpp"
#include "lwsep/spatial/voxel_grid.hpp"

namespace lwsep::extractor {

/// Which per-point attributes feed the network: coordinates scaled by
/// `coordinate_scale`, then the listed reflectance channels (0-based).
struct InputSpec {
  std::vector<std::size_t> reflectance_channels{0};
  double coordinate_scale = 0.1;

  std::size_t dim() const { return 3 + reflectance_channels.size(); }
};

inline RowMatrixXd point_inputs(const Tile& tile, const InputSpec& spec) {
  RowMatrixXd x(static_cast<Eigen::Index>(tile.size()), static_cast<Eigen::Index>(spec.dim()));
  for (std::size_t i = 0; i < tile.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x.row(r).head<3>() = (tile.points[i] * spec.coordinate_scale).transpose();
    for (std::size_t k = 0; k < spec.reflectance_channels.size(); ++k) {
      const auto c = spec.reflectance_channels[k];
      if (c >= kReflectanceChannels) throw Error("input spec: reflectance channel out of range");
      const float v = tile.reflectance[c][i];
      if (is_missing(v)) throw Error("input spec: missing reflectance reached the extractor (impute first)");
      x(r, static_cast<Eigen::Index>(3 + k)) = v;
    }
  }
  return x;
}

/// Data an extractor derives once per tile (e.g. voxelization). Features
/// are produced per unit; every point maps to one unit.
struct Prepared {
  virtual ~Prepared() = default;
  std::vector<std::uint32_t> unit_of_point;
  std::vector<std::uint32_t> unit_sizes;
  std::size_t unit_count() const { return unit_sizes.size(); }
};

/// Output of a forward pass: one feature row per unit, plus whatever the
/// extractor needs to run the backward pass.
template <typename Scalar>
struct Pass {
  virtual ~Pass() = default;
  RowMatrix<Scalar> features;
};

/// A trainable point feature extractor with a flat parameter vector.
template <typename Scalar>
class FeatureExtractor {
 public:
  using Matrix = RowMatrix<Scalar>;
  virtual ~FeatureExtractor() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual std::unique_ptr<Prepared> prepare(const Tile& tile) const = 0;
  virtual std::unique_ptr<Pass<Scalar>> forward(const Prepared& prep) const = 0;
  /// Adds d(loss)/d(parameters) to gradient() given d(loss)/d(unit features).
  virtual void backward(const Prepared& prep, const Pass<Scalar>& pass, const Matrix& grad_features) = 0;

  virtual std::span<Scalar> parameters() = 0;
  virtual std::span<const Scalar> parameters() const = 0;
  virtual std::span<Scalar> gradient() = 0;
  void zero_gradient() {
    auto g = gradient();
    std::fill(g.begin(), g.end(), Scalar(0));
  }

  virtual void save(io::ByteWriter& w) const = 0;
  virtual void load(io::ByteReader& r) = 0;

  /// Per-point features (unit rows expanded).
  Matrix point_features(const Tile& tile) const {
    const auto prep = prepare(tile);
    const auto pass = forward(*prep);
    Matrix out(static_cast<Eigen::Index>(tile.size()), pass->features.cols());
    for (std::size_t i = 0; i < tile.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = pass->features.row(prep->unit_of_point[i]);
    }
    return out;
  }
};

struct VoxelMlpConfig {
  double voxel_size = 0.05;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 128;
  std::size_t output = 128;
  InputSpec input;
};

/// Voxelized tile: mean input per occupied voxel and, per voxel, the
/// occupied voxels of its 3x3x3 block (itself included).
template <typename Scalar>
struct VoxelPrepared : Prepared {
  RowMatrix<Scalar> inputs;
  std::vector<std::size_t> ring_offsets;
  std::vector<std::uint32_t> ring;
};

template <typename Scalar>
struct VoxelPass : Pass<Scalar> {
  RowMatrix<Scalar> a1, h1, a2, h2, pooled;
  Eigen::Matrix<std::uint32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> source;  // argmax voxel
};

/// Reference extractor: per-voxel two-layer perceptron, max-pooling over the
/// occupied 26-neighborhood, then a linear layer.
template <typename Scalar>
class VoxelMlp final : public FeatureExtractor<Scalar> {
 public:
  using Matrix = RowMatrix<Scalar>;
  using MatMap = Eigen::Map<Matrix>;
  using ConstMatMap = Eigen::Map<const Matrix>;
  using VecMap = Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
  using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;

  explicit VoxelMlp(VoxelMlpConfig cfg) : cfg_(std::move(cfg)) {
    if (!(cfg_.voxel_size > 0.0)) throw Error("voxel size must be positive");
    const auto c = cfg_.input.dim();
    layout_ = {{c, cfg_.hidden1}, {cfg_.hidden1, cfg_.hidden2}, {cfg_.hidden2, cfg_.output}};
    std::size_t n = 0;
    for (const auto& [in, out] : layout_) n += in * out + out;
    params_.assign(n, Scalar(0));
    grad_.assign(n, Scalar(0));
  }

  /// He-style normal initialization for the ReLU layers; the output layer
  /// uses 1/fan_in variance. Biases start at zero.
  void initialize(std::mt19937_64& rng) {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layout_.size(); ++l) {
      const auto [in, out] = layout_[l];
      const double sd = std::sqrt((l + 1 < layout_.size() ? 2.0 : 1.0) / static_cast<double>(in));
      for (std::size_t k = 0; k < in * out; ++k) params_[off + k] = static_cast<Scalar>(normal_sample(rng, 0.0, sd));
      off += in * out;
      for (std::size_t k = 0; k < out; ++k) params_[off + k] = Scalar(0);
      off += out;
    }
  }

  const VoxelMlpConfig& config() const { return cfg_; }
  std::string kind() const override { return "voxel-mlp"; }
  std::size_t feature_dim() const override { return cfg_.output; }

  std::unique_ptr<Prepared> prepare(const Tile& tile) const override {
    auto prep = std::make_unique<VoxelPrepared<Scalar>>();
    const RowMatrixXd x = point_inputs(tile, cfg_.input);
    std::map<std::array<std::int64_t, 3>, std::uint32_t> index;  // ordered: deterministic voxel order
    std::vector<std::array<std::int64_t, 3>> key_of(tile.size());
    for (std::size_t i = 0; i < tile.size(); ++i) {
      for (int d = 0; d < 3; ++d) key_of[i][d] = static_cast<std::int64_t>(std::floor(tile.points[i][d] / cfg_.voxel_size));
      index.emplace(key_of[i], 0);
    }
    std::uint32_t next = 0;
    for (auto& [key, id] : index) id = next++;
    prep->unit_of_point.resize(tile.size());
    prep->unit_sizes.assign(next, 0);
    RowMatrixXd sums = RowMatrixXd::Zero(next, x.cols());
    for (std::size_t i = 0; i < tile.size(); ++i) {
      const auto v = index[key_of[i]];
      prep->unit_of_point[i] = v;
      ++prep->unit_sizes[v];
      sums.row(v) += x.row(static_cast<Eigen::Index>(i));
    }
    for (std::uint32_t v = 0; v < next; ++v) sums.row(v) /= static_cast<double>(prep->unit_sizes[v]);
    prep->inputs = sums.cast<Scalar>();
    prep->ring_offsets.reserve(next + 1);
    prep->ring_offsets.push_back(0);
    for (const auto& [key, id] : index) {
      for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
          for (std::int64_t dz = -1; dz <= 1; ++dz) {
            auto it = index.find({key[0] + dx, key[1] + dy, key[2] + dz});
            if (it != index.end()) prep->ring.push_back(it->second);
          }
      prep->ring_offsets.push_back(prep->ring.size());
    }
    return prep;
  }

  std::unique_ptr<Pass<Scalar>> forward(const Prepared& base) const override {
    const auto& prep = dynamic_cast<const VoxelPrepared<Scalar>&>(base);
    auto pass = std::make_unique<VoxelPass<Scalar>>();
    const auto v = prep.inputs.rows();
    pass->a1 = prep.inputs * weight(0);
    pass->a1.rowwise() += bias(0);
    pass->h1 = pass->a1.cwiseMax(Scalar(0));
    pass->a2 = pass->h1 * weight(1);
    pass->a2.rowwise() += bias(1);
    pass->h2 = pass->a2.cwiseMax(Scalar(0));
    const auto c = pass->h2.cols();
    pass->pooled.resize(v, c);
    pass->source.resize(v, c);
    for (Eigen::Index u = 0; u < v; ++u) {
      const auto begin = prep.ring_offsets[static_cast<std::size_t>(u)];
      const auto end = prep.ring_offsets[static_cast<std::size_t>(u) + 1];
      auto out = pass->pooled.row(u);
      auto src = pass->source.row(u);
      out = pass->h2.row(prep.ring[begin]);
      src.setConstant(prep.ring[begin]);
      for (auto k = begin + 1; k < end; ++k) {
        const auto nb = prep.ring[k];
        const auto row = pass->h2.row(nb);
        for (Eigen::Index j = 0; j < c; ++j) {
          if (row[j] > out[j]) {
            out[j] = row[j];
            src[j] = nb;
          }
        }
      }
    }
    pass->features = pass->pooled * weight(2);
    pass->features.rowwise() += bias(2);
    return pass;
  }

  void backward(const Prepared& base, const Pass<Scalar>& pass_base, const Matrix& grad_out) override {
    const auto& prep = dynamic_cast<const VoxelPrepared<Scalar>&>(base);
    const auto& pass = dynamic_cast<const VoxelPass<Scalar>&>(pass_base);
    grad_weight(2).noalias() += pass.pooled.transpose() * grad_out;
    grad_bias(2) += grad_out.colwise().sum();
    const Matrix d_pooled = grad_out * weight(2).transpose();
    Matrix d_h2 = Matrix::Zero(pass.h2.rows(), pass.h2.cols());
    for (Eigen::Index u = 0; u < d_pooled.rows(); ++u) {
      for (Eigen::Index j = 0; j < d_pooled.cols(); ++j) d_h2(pass.source(u, j), j) += d_pooled(u, j);
    }
    const Matrix d_a2 = d_h2.cwiseProduct((pass.a2.array() > Scalar(0)).matrix().template cast<Scalar>());
    grad_weight(1).noalias() += pass.h1.transpose() * d_a2;
    grad_bias(1) += d_a2.colwise().sum();
    const Matrix d_h1 = d_a2 * weight(1).transpose();
    const Matrix d_a1 = d_h1.cwiseProduct((pass.a1.array() > Scalar(0)).matrix().template cast<Scalar>());
    grad_weight(0).noalias() += prep.inputs.transpose() * d_a1;
    grad_bias(0) += d_a1.colwise().sum();
  }

  std::span<Scalar> parameters() override { return params_; }
  std::span<const Scalar> parameters() const override { return params_; }
  std::span<Scalar> gradient() override { return grad_; }

  void save(io::ByteWriter& w) const override {
    w.put_bytes("LWVM", 4);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(sizeof(Scalar)));
    w.put(cfg_.voxel_size);
    w.put(static_cast<std::uint64_t>(cfg_.hidden1));
    w.put(static_cast<std::uint64_t>(cfg_.hidden2));
    w.put(static_cast<std::uint64_t>(cfg_.output));
    w.put(cfg_.input.coordinate_scale);
    w.put(static_cast<std::uint32_t>(cfg_.input.reflectance_channels.size()));
    for (auto c : cfg_.input.reflectance_channels) w.put(static_cast<std::uint32_t>(c));
    w.put(static_cast<std::uint64_t>(params_.size()));
    w.put_array(params_);
  }

  /// Reads parameters saved by save(); the architecture must match.
  void load(io::ByteReader& r) override {
    const auto cfg = read_config(r);
    if (cfg.hidden1 != cfg_.hidden1 || cfg.hidden2 != cfg_.hidden2 || cfg.output != cfg_.output ||
        cfg.input.reflectance_channels != cfg_.input.reflectance_channels) {
      throw io::ParseError("extractor architecture mismatch", r.position());
    }
    cfg_ = cfg;
    read_params(r);
  }

  /// Constructs an extractor from a saved stream.
  static VoxelMlp from_stream(io::ByteReader& r) {
    VoxelMlp m(read_config(r));
    m.read_params(r);
    return m;
  }

 private:
  static constexpr std::uint32_t kVersion = 1;

  static VoxelMlpConfig read_config(io::ByteReader& r) {
    r.expect_magic("LWVM");
    const auto at = r.position();
    if (r.get<std::uint32_t>("extractor version") != kVersion) throw io::ParseError("unsupported extractor version", at);
    if (r.get<std::uint32_t>("scalar size") != sizeof(Scalar)) {
      throw io::ParseError("extractor scalar type mismatch", r.position());
    }
    VoxelMlpConfig cfg;
    cfg.voxel_size = r.get<double>("voxel size");
    cfg.hidden1 = r.get<std::uint64_t>("hidden1");
    cfg.hidden2 = r.get<std::uint64_t>("hidden2");
    cfg.output = r.get<std::uint64_t>("output");
    cfg.input.coordinate_scale = r.get<double>("coordinate scale");
    const auto nch = r.get<std::uint32_t>("channel count");
    if (nch > kReflectanceChannels) throw io::ParseError("too many input channels", r.position());
    cfg.input.reflectance_channels.clear();
    for (std::uint32_t k = 0; k < nch; ++k) cfg.input.reflectance_channels.push_back(r.get<std::uint32_t>("channel"));
    return cfg;
  }

  void read_params(io::ByteReader& r) {
    const auto n = r.get<std::uint64_t>("parameter count");
    if (n != params_.size()) throw io::ParseError("extractor parameter count mismatch", r.position());
    const auto v = r.get_array<Scalar>(n, "parameters");
    params_.assign(v.begin(), v.end());
  }

  std::size_t offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += layout_[l].first * layout_[l].second + layout_[l].second;
    return off;
  }
  ConstMatMap weight(std::size_t l) const {
    return ConstMatMap(params_.data() + offset(l), static_cast<Eigen::Index>(layout_[l].first),
                       static_cast<Eigen::Index>(layout_[l].second));
  }
  ConstVecMap bias(std::size_t l) const {
    return ConstVecMap(params_.data() + offset(l) + layout_[l].first * layout_[l].second,
                       static_cast<Eigen::Index>(layout_[l].second));
  }
  MatMap grad_weight(std::size_t l) {
    return MatMap(grad_.data() + offset(l), static_cast<Eigen::Index>(layout_[l].first),
                  static_cast<Eigen::Index>(layout_[l].second));
  }
  VecMap grad_bias(std::size_t l) {
    return VecMap(grad_.data() + offset(l) + layout_[l].first * layout_[l].second,
                  static_cast<Eigen::Index>(layout_[l].second));
  }

  VoxelMlpConfig cfg_;
  std::vector<std::pair<std::size_t, std::size_t>> layout_;
  // Aligned so vectorized reductions over the weight maps peel identically
  // in every process; results otherwise depend on heap layout.
  std::vector<Scalar, Eigen::aligned_allocator<Scalar>> params_;
  std::vector<Scalar, Eigen::aligned_allocator<Scalar>> grad_;
};

}  // namespace lwsep::extractor
