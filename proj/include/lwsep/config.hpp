#pragma once

#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "lwsep/pipeline.hpp"
#include "lwsep/synthforest.hpp"

namespace lwsep::config {

using nlohmann::json;

/// Invalid configuration document (unknown key, wrong type, bad value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class EvalMode { kPlot, kTile };

struct EvalConfig {
  EvalMode mode = EvalMode::kPlot;
};

struct PipelineConfig {
  preprocess::TilingConfig tiling;
  pipeline::ReflectanceConfig reflectance;
  geomfeat::NeighborhoodConfig features;
  pipeline::SuperpointConfig superpoints;
  trainer::TrainConfig train;
  trainer::PredictConfig predict;
  EvalConfig eval;
  bool train_seed_set = false;

  pipeline::PrepareConfig prepare() const { return {features, superpoints, reflectance}; }
};

namespace detail {

template <typename E>
struct EnumNames {
  std::vector<std::pair<E, const char*>> names;
};

inline const EnumNames<preprocess::NormVariant>& names(preprocess::NormVariant*) {
  static const EnumNames<preprocess::NormVariant> n{
      {{preprocess::NormVariant::kLiteral, "literal"}, {preprocess::NormVariant::kScaledMin, "scaled-min"}}};
  return n;
}
inline const EnumNames<superpoint::NearestRule>& names(superpoint::NearestRule*) {
  static const EnumNames<superpoint::NearestRule> n{
      {{superpoint::NearestRule::kCentroid, "centroid"}, {superpoint::NearestRule::kClosestPoint, "closest-point"}}};
  return n;
}
inline const EnumNames<EvalMode>& names(EvalMode*) {
  static const EnumNames<EvalMode> n{{{EvalMode::kPlot, "plot"}, {EvalMode::kTile, "tile"}}};
  return n;
}
inline const EnumNames<synth::CrownShape>& names(synth::CrownShape*) {
  static const EnumNames<synth::CrownShape> n{
      {{synth::CrownShape::kEllipsoid, "ellipsoid"}, {synth::CrownShape::kCone, "cone"}}};
  return n;
}

template <typename E>
std::string enum_to_string(E v) {
  for (const auto& [e, s] : names(static_cast<E*>(nullptr)).names) {
    if (e == v) return s;
  }
  throw Error("unnamed enum value");
}

template <typename E>
E enum_from_string(const std::string& s, const std::string& path) {
  std::string allowed;
  for (const auto& [e, name] : names(static_cast<E*>(nullptr)).names) {
    if (s == name) return e;
    allowed += std::string(allowed.empty() ? "" : ", ") + name;
  }
  throw ConfigError(path + ": unknown value '" + s + "' (expected one of: " + allowed + ")");
}

template <typename T>
concept Enum = std::is_enum_v<T>;

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  /// Throws on any key that was never requested.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + where(it.key()) + "'");
    }
  }

  /// Marks a key as handled by the caller.
  void mark(const char* key) { seen_.insert(key); }

  template <typename T>
  bool operator()(const char* key, T& field) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    read(*it, field, where(key));
    return true;
  }

  /// 1-based channel list in JSON, 0-based in memory.
  bool channels(const char* key, std::vector<std::size_t>& field) {
    std::vector<std::size_t> one_based;
    if (!(*this)(key, one_based)) return false;
    field.clear();
    for (auto c : one_based) {
      if (c < 1 || c > kReflectanceChannels) throw ConfigError(where(key) + ": channel must be 1, 2 or 3");
      field.push_back(c - 1);
    }
    return true;
  }

  template <typename F>
  void object(const char* key, F&& visit_fields) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    Reader sub(*it, where(key));
    visit_fields(sub);
    sub.finish();
  }

  const std::string& path() const { return path_; }

 private:
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  static void read(const json& v, T& out, const std::string& path) {
    try {
      if constexpr (Enum<T>) {
        if (!v.is_string()) throw ConfigError(path + ": expected a string");
        out = enum_from_string<T>(v.get<std::string>(), path);
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.is_number_integer() && v.get<std::int64_t>() < 0 &&
                                        !v.is_number_unsigned())) {
          throw ConfigError(path + ": expected a non-negative integer");
        }
        out = v.get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(path + ": expected a number");
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, synth::Range>) {
        if (!v.is_array() || v.size() != 2) throw ConfigError(path + ": expected [lo, hi]");
        read(v[0], out.lo, path + "[0]");
        read(v[1], out.hi, path + "[1]");
      } else if constexpr (requires { std::tuple_size<T>::value; }) {
        if (!v.is_array() || v.size() != std::tuple_size<T>::value) {
          throw ConfigError(path + ": expected an array of " + std::to_string(std::tuple_size<T>::value) + " values");
        }
        for (std::size_t k = 0; k < v.size(); ++k) read(v[k], out[k], path + "[" + std::to_string(k) + "]");
      } else {
        if (!v.is_array()) throw ConfigError(path + ": expected an array");
        out.clear();
        for (std::size_t k = 0; k < v.size(); ++k) {
          typename T::value_type x{};
          read(v[k], x, path + "[" + std::to_string(k) + "]");
          out.push_back(x);
        }
      }
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Emits fields into a JSON object (effective configuration dumps).
class Writer {
 public:
  explicit Writer(json& j) : j_(j) { j_ = json::object(); }

  template <typename T>
  bool operator()(const char* key, T& field) {
    j_[key] = write(field);
    return true;
  }
  bool channels(const char* key, std::vector<std::size_t>& field) {
    json a = json::array();
    for (auto c : field) a.push_back(c + 1);
    j_[key] = a;
    return true;
  }
  template <typename F>
  void object(const char* key, F&& visit_fields) {
    json sub;
    Writer w(sub);
    visit_fields(w);
    j_[key] = sub;
  }

 private:
  template <typename T>
  static json write(const T& v) {
    if constexpr (Enum<T>) {
      return enum_to_string(v);
    } else if constexpr (std::is_same_v<T, synth::Range>) {
      return json::array({v.lo, v.hi});
    } else if constexpr (std::is_arithmetic_v<T>) {
      return v;
    } else {
      json a = json::array();
      for (const auto& x : v) a.push_back(write(x));
      return a;
    }
  }

  json& j_;
};

template <typename V>
void visit_preprocess(V& v, PipelineConfig& c) {
  v("r_c", c.tiling.r_c);
  v("min_points_per_tile", c.tiling.min_points_per_tile);
  v("reflectance_norm_variant", c.reflectance.variant);
  v("normalize_before_impute", c.reflectance.normalize_before_impute);
}

template <typename V>
void visit_features(V& v, PipelineConfig& c) {
  v("r_n", c.features.r_n);
  v("scales", c.features.scales);
}

template <typename V>
void visit_superpoints(V& v, PipelineConfig& c) {
  auto& cp = c.superpoints.cut_pursuit;
  auto& m = c.superpoints.merge;
  v("lambda", cp.lambda);
  v("feature_weight", cp.feature_weight);
  v("max_iterations", cp.max_iterations);
  v("flow_tolerance", cp.flow_tolerance);
  v("flow_steps", cp.flow_steps);
  v("sp_max", m.sp_max);
  v("dbscan_eps", m.dbscan_eps);
  v("dbscan_min_samples", m.dbscan_min_samples);
  v("nearest", m.nearest);
}

template <typename V>
void visit_train(V& v, PipelineConfig& c) {
  auto& t = c.train;
  v("epochs_pretrain", t.epochs_pretrain);
  v("epochs_grow", t.epochs_grow);
  v("refresh_interval", t.refresh_interval);
  v("m_start", t.m_start);
  v("m_end", t.m_end);
  v("batch_size", t.batch_size);
  v("lr", t.lr);
  v("momentum", t.momentum);
  v("poly_power", t.poly_power);
  v("primitives", t.primitives);
  v("w_xyz", t.w_xyz);
  v("w_geof", t.weights.w_geof);
  v("w_rgb", t.weights.w_rgb);
  v("decay_epochs", t.weights.decay_epochs);
  v("decay_floor", t.weights.decay_floor);
  v("voxel_size", t.network.voxel_size);
  std::vector<std::size_t> hidden{t.network.hidden1, t.network.hidden2};
  if (v("hidden_widths", hidden)) {
    if (hidden.size() != 2 || !hidden[0] || !hidden[1]) throw ConfigError("train.hidden_widths: expected two positive widths");
    t.network.hidden1 = hidden[0];
    t.network.hidden2 = hidden[1];
  }
  v("feature_dim", t.network.output);
  v.channels("input_channels", t.network.input.reflectance_channels);
  v.channels("cluster_channels", t.cluster_channels);
  v("coordinate_scale", t.network.input.coordinate_scale);
  v("augment", t.augment);
  v("kmeans_max_iterations", t.kmeans.max_iterations);
  v("kmeans_tolerance", t.kmeans.relative_tolerance);
  if (v("seed", t.seed)) c.train_seed_set = true;
}

template <typename V>
void visit_predict(V& v, PipelineConfig& c) {
  v("c_over", c.predict.c_over);
  v("l_min", c.predict.l_min);
  v("use_linearity_threshold", c.predict.use_linearity_threshold);
  v("seed", c.predict.seed);
}

template <typename V>
void visit_pipeline(V& v, PipelineConfig& c) {
  v.object("preprocess", [&](auto& s) { visit_preprocess(s, c); });
  v.object("features", [&](auto& s) { visit_features(s, c); });
  v.object("superpoints", [&](auto& s) { visit_superpoints(s, c); });
  v.object("train", [&](auto& s) { visit_train(s, c); });
  v.object("predict", [&](auto& s) { visit_predict(s, c); });
  v.object("eval", [&](auto& s) { s("mode", c.eval.mode); });
}

template <typename V>
void visit_normal(V& v, synth::Normal& n) {
  v("mean", n.mean);
  v("stddev", n.stddev);
}

template <typename V>
void visit_species(V& v, synth::SpeciesParams& s) {
  v("weight", s.weight);
  v("crown", s.crown);
  v("height", s.height);
  v("trunk_radius", s.trunk_radius);
  v("crown_base", s.crown_base);
  v("crown_width", s.crown_width);
  v("branch_count", s.branch_count);
  v("branch_length", s.branch_length);
}

}  // namespace detail

inline void validate(const PipelineConfig& c) {
  if (!(c.tiling.r_c > 0.0)) throw ConfigError("preprocess.r_c must be positive");
  if (!(c.features.r_n > 0.0)) throw ConfigError("features.r_n must be positive");
  if (c.features.scales.empty()) throw ConfigError("features.scales must not be empty");
  for (auto k : c.features.scales) {
    if (k == 0) throw ConfigError("features.scales must be positive");
  }
  if (!(c.superpoints.cut_pursuit.lambda >= 0.0)) throw ConfigError("superpoints.lambda must be non-negative");
  if (c.superpoints.merge.sp_max == 0) throw ConfigError("superpoints.sp_max must be positive");
  if (c.train.network.input.reflectance_channels.empty()) {
    throw ConfigError("train.input_channels must list at least one channel");
  }
  if (!(c.train.network.voxel_size > 0.0)) throw ConfigError("train.voxel_size must be positive");
  if (c.train.network.output == 0) throw ConfigError("train.feature_dim must be positive");
  if (c.predict.c_over == 0) throw ConfigError("predict.c_over must be positive");
  try {
    trainer::validate(c.train);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

/// Applies a JSON document on top of `base` (defaults when omitted).
inline PipelineConfig pipeline_from_json(const json& j, PipelineConfig base = {}) {
  detail::Reader r(j, "");
  detail::visit_pipeline(r, base);
  r.finish();
  validate(base);
  return base;
}

inline json pipeline_to_json(PipelineConfig c) {
  json j;
  detail::Writer w(j);
  detail::visit_pipeline(w, c);
  return j;
}

inline synth::ForestParams forest_from_json(const json& j, synth::ForestParams p = {}) {
  {
    detail::Reader r(j, "");
    r.mark("species");
    r.mark("reflectance");
    r("plot_radius", p.plot_radius);
    r("tree_count", p.tree_count);
    r("trunk_density", p.trunk_density);
    r("branch_density", p.branch_density);
    r("foliage_density", p.foliage_density);
    r("clump_points", p.clump_points);
    r("clump_sigma", p.clump_sigma);
    r("crown_shell", p.crown_shell);
    r("min_tree_spacing", p.min_tree_spacing);
    r("missing_rate", p.missing_rate);
    r("noise", p.noise);
    r("seed", p.seed);
    if (auto it = j.find("species"); it != j.end()) {
      if (!it->is_array()) throw ConfigError("species: expected an array");
      p.species.clear();
      for (std::size_t k = 0; k < it->size(); ++k) {
        synth::SpeciesParams s;
        detail::Reader sr((*it)[k], "species[" + std::to_string(k) + "]");
        detail::visit_species(sr, s);
        sr.finish();
        p.species.push_back(s);
      }
    }
    if (auto it = j.find("reflectance"); it != j.end()) {
      if (it->is_string()) {
        const auto name = it->get<std::string>();
        if (name == "easy") {
          p.reflectance = synth::easy_reflectance();
        } else if (name == "hard") {
          p.reflectance = synth::hard_reflectance();
        } else {
          throw ConfigError("reflectance: expected \"easy\", \"hard\" or an object");
        }
      } else {
        detail::Reader rr(*it, "reflectance");
        for (const char* cls : {"foliage", "wood"}) {
          auto& arr = std::string(cls) == "foliage" ? p.reflectance.foliage : p.reflectance.wood;
          rr.mark(cls);
          auto c = it->find(cls);
          if (c == it->end()) continue;
          if (!c->is_array() || c->size() != kReflectanceChannels) {
            throw ConfigError(std::string("reflectance.") + cls + ": expected 3 {mean, stddev} entries");
          }
          for (std::size_t ch = 0; ch < kReflectanceChannels; ++ch) {
            detail::Reader nr((*c)[ch], std::string("reflectance.") + cls + "[" + std::to_string(ch) + "]");
            detail::visit_normal(nr, arr[ch]);
            nr.finish();
          }
        }
        rr.finish();
      }
    }
    r.finish();
  }
  try {
    synth::validate(p);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return p;
}

inline json forest_to_json(synth::ForestParams p) {
  json j;
  detail::Writer w(j);
  w("plot_radius", p.plot_radius);
  w("tree_count", p.tree_count);
  w("trunk_density", p.trunk_density);
  w("branch_density", p.branch_density);
  w("foliage_density", p.foliage_density);
  w("clump_points", p.clump_points);
  w("clump_sigma", p.clump_sigma);
  w("crown_shell", p.crown_shell);
  w("min_tree_spacing", p.min_tree_spacing);
  w("missing_rate", p.missing_rate);
  w("noise", p.noise);
  w("seed", p.seed);
  json species = json::array();
  for (auto& s : p.species) {
    json sj;
    detail::Writer sw(sj);
    detail::visit_species(sw, s);
    species.push_back(sj);
  }
  j["species"] = species;
  json refl;
  for (const char* cls : {"foliage", "wood"}) {
    auto& arr = std::string(cls) == "foliage" ? p.reflectance.foliage : p.reflectance.wood;
    json a = json::array();
    for (auto& n : arr) a.push_back({{"mean", n.mean}, {"stddev", n.stddev}});
    refl[cls] = a;
  }
  j["reflectance"] = refl;
  return j;
}

}  // namespace lwsep::config
