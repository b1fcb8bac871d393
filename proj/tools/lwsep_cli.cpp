#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lwsep/config.hpp"
#include "lwsep/io/csv.hpp"
#include "lwsep/io/geomfile.hpp"
#include "lwsep/io/mspc.hpp"
#include "lwsep/io/ply.hpp"
#include "lwsep/metrics.hpp"
#include "lwsep/pipeline.hpp"
#include "lwsep/synthforest.hpp"
#include "lwsep/trainer.hpp"

namespace fs = std::filesystem;
using namespace lwsep;
using config::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : Error {
  using Error::Error;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("'" + path.string() + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

/// Tile files named on the command line; directories expand to their sorted
/// .mspc entries.
std::vector<fs::path> tile_files(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& s : inputs) {
    const fs::path p(s);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.path().extension() == ".mspc") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw UsageError("no such input '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError("no input tiles");
  return out;
}

Tile load_input(const fs::path& p) {
  if (p.extension() == ".csv") return io::import_csv(p);
  return io::load_tile(p);
}

fs::path sidecar_path(const fs::path& tile_path, const std::optional<std::string>& features_dir) {
  const fs::path dir = features_dir ? fs::path(*features_dir) : tile_path.parent_path();
  return dir / (tile_path.stem().string() + ".geom");
}

std::vector<trainer::TrainingTile> load_training_tiles(const std::vector<fs::path>& files,
                                                       const std::optional<std::string>& features_dir) {
  std::vector<trainer::TrainingTile> tiles;
  for (const auto& f : files) {
    trainer::TrainingTile t;
    t.tile = io::load_tile(f);
    if (!t.tile.superpoint_ids) throw UsageError("'" + f.string() + "' has no superpoints; run `superpoints` first");
    t.geom = io::load_geom_features(sidecar_path(f, features_dir));
    if (t.geom.size() != t.tile.size()) throw UsageError("feature sidecar does not match '" + f.string() + "'");
    t.initial = SuperpointPartition::from_labels(*t.tile.superpoint_ids, t.tile.points);
    tiles.push_back(std::move(t));
  }
  return tiles;
}

/// Shared flags: config file, worker count.
struct Common {
  std::optional<std::string> config_path;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "Pipeline config JSON");
    app->add_option("--workers", workers, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);
  }

  json config_json() const { return config_path ? read_json(*config_path) : json::object(); }

  config::PipelineConfig pipeline() const { return config::pipeline_from_json(config_json()); }
};

/// Provenance beside every output: what ran, with which settings.
void write_manifest(const fs::path& dir, const std::string& command, const json& cfg, std::optional<std::uint64_t> seed,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  fs::create_directories(dir);
  const std::string dumped = cfg.dump();
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(dumped.data(), dumped.size())));
  json m;
  m["command"] = command;
  m["lwsep_version"] = kVersion;
  m["config"] = cfg;
  m["config_hash"] = hash;
  m["seed"] = seed ? json(*seed) : json(nullptr);
  m["formats"] = {{"mspc", io::kMspcVersion},
                  {"geom", io::kGeomFileVersion},
                  {"checkpoint", trainer::kCheckpointVersion},
                  {"model", trainer::kSavedModelVersion}};
  m["inputs"] = json::array();
  for (const auto& p : inputs) m["inputs"].push_back(p.string());
  m["outputs"] = json::array();
  for (const auto& p : outputs) m["outputs"].push_back(p.filename().string());
  write_text(dir / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

void print_warnings(const Warnings& w) {
  for (const auto& m : w.messages) std::cerr << "warning: " << m << "\n";
}

json metrics_json(const eval::MetricsReport& r) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json j{{"oAcc", num(r.oacc)}, {"mAcc", num(r.macc)}, {"mIoU", num(r.miou)}, {"evaluated", r.evaluated}};
  j["iou"] = json::array();
  j["class_accuracy"] = json::array();
  for (auto v : r.iou) j["iou"].push_back(num(v));
  for (auto v : r.class_accuracy) j["class_accuracy"].push_back(num(v));
  j["confusion"] = r.confusion;
  return j;
}

std::string metrics_row(const std::string& name, const eval::MetricsReport& r) {
  auto pct = [](double v) {
    char buf[16];
    if (std::isnan(v)) {
      std::snprintf(buf, sizeof(buf), "%8s", "-");
    } else {
      std::snprintf(buf, sizeof(buf), "%8.1f", 100.0 * v);
    }
    return std::string(buf);
  };
  char head[64];
  std::snprintf(head, sizeof(head), "%-24s", name.c_str());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return head + pct(r.oacc) + pct(r.macc) + pct(r.miou) + pct(r.iou.size() > 0 ? r.iou[0] : nan) +
         pct(r.iou.size() > 1 ? r.iou[1] : nan);
}

// --- subcommands -----------------------------------------------------------

struct SynthCmd {
  Common common;
  std::optional<std::string> forest_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "Generate a labeled synthetic forest plot");
    c->add_option("--forest", forest_path, "Forest parameters JSON");
    c->add_option("--seed", seed, "Generator seed")->required();
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    common.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    set_worker_count(common.workers);
    synth::ForestParams p = forest_path ? config::forest_from_json(read_json(*forest_path)) : synth::ForestParams{};
    p.seed = *seed;
    const Tile plot = synth::generate_plot(p);
    fs::create_directories(out_dir);
    const fs::path tile_path = fs::path(out_dir) / "plot.mspc";
    io::save_tile(plot, tile_path);
    const json params = config::forest_to_json(p);
    write_text(fs::path(out_dir) / "params.json", params.dump(2) + "\n");
    write_manifest(out_dir, "synth", params, p.seed, {}, {tile_path});
    std::cout << json{{"points", plot.size()}, {"wood_fraction", synth::wood_fraction(plot)}}.dump() << "\n";
  }
};

struct PreprocessCmd {
  Common common;
  std::string input;
  std::string out_dir;
  std::optional<double> r_c;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("preprocess", "Split a plot into centered cylindrical tiles");
    c->add_option("--input", input, "Plot file (.mspc or .csv)")->required();
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_option("--r-c", r_c, "Tile radius, meters");
    common.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    set_worker_count(common.workers);
    auto cfg = common.pipeline();
    if (r_c) cfg.tiling.r_c = *r_c;
    config::validate(cfg);
    const Tile plot = load_input(input);
    const Dataset tiles = preprocess::extract_tiles(plot, cfg.tiling);
    fs::create_directories(out_dir);
    std::vector<fs::path> outputs;
    for (const auto& t : tiles.tiles()) {
      outputs.push_back(fs::path(out_dir) / (t.tile_id + ".mspc"));
      io::save_tile(preprocess::center_tile(t), outputs.back());
    }
    write_manifest(out_dir, "preprocess", config::pipeline_to_json(cfg), std::nullopt, {input}, outputs);
    std::cout << json{{"tiles", tiles.size()}}.dump() << "\n";
  }
};

struct FeaturesCmd {
  Common common;
  std::vector<std::string> inputs;
  std::optional<std::string> out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("features", "Multi-scale geometric features per tile (.geom sidecars)");
    c->add_option("--input", inputs, "Tile files or directories")->required();
    c->add_option("--out-dir", out_dir, "Sidecar directory (default: beside each tile)");
    common.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    set_worker_count(common.workers);
    const auto cfg = common.pipeline();
    config::validate(cfg);
    const auto files = tile_files(inputs);
    std::vector<fs::path> outputs;
    for (const auto& f : files) {
      const Tile t = io::load_tile(f);
      const auto g = geomfeat::multiscale_features(t.points, cfg.features);
      if (out_dir) fs::create_directories(*out_dir);
      outputs.push_back(sidecar_path(f, out_dir));
      io::save_geom_features(g, outputs.back());
      if (g.degenerate_points) std::cerr << "warning: " << f.filename().string() << ": " << g.degenerate_points
                                         << " points with degenerate neighborhoods\n";
    }
    write_manifest(out_dir ? fs::path(*out_dir) : files.front().parent_path(), "features",
                   config::pipeline_to_json(cfg), std::nullopt, files, outputs);
  }
};

struct SuperpointsCmd {
  Common common;
  std::vector<std::string> inputs;
  std::optional<std::string> features_dir;
  std::string out_dir;
  bool report_purity = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("superpoints",
                                 "Initial superpoints; fills and normalizes reflectance and stores superpoint ids");
    c->add_option("--input", inputs, "Tile files or directories")->required();
    c->add_option("--features", features_dir, "Sidecar directory (default: beside each tile)");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_flag("--report-purity", report_purity, "Print superpoint purity when labels exist");
    common.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    set_worker_count(common.workers);
    const auto cfg = common.pipeline();
    config::validate(cfg);
    const auto files = tile_files(inputs);
    fs::create_directories(out_dir);
    std::vector<fs::path> outputs;
    if (report_purity) {
      std::printf("%-24s%8s%8s%8s%8s%8s%10s%10s\n", "tile", "oAcc", "mAcc", "mIoU", "IoU_f", "IoU_w", "cp", "merged");
    }
    for (const auto& f : files) {
      Tile t = io::load_tile(f);
      const auto geom = io::load_geom_features(sidecar_path(f, features_dir));
      if (geom.size() != t.size()) throw UsageError("feature sidecar does not match '" + f.string() + "'");
      pipeline::PrepareStats stats;
      const auto partition = pipeline::build_superpoints(t, geom, cfg.superpoints, &stats);
      Warnings w;
      t = pipeline::finalize_reflectance(std::move(t), partition, cfg.reflectance, &w);
      print_warnings(w);
      t.superpoint_ids = partition.ids();
      outputs.push_back(fs::path(out_dir) / f.filename());
      io::save_tile(t, outputs.back());
      // The geometry is unchanged, so the sidecar travels with the tile.
      const auto sidecar_out = sidecar_path(outputs.back(), std::nullopt);
      if (fs::absolute(sidecar_out) != fs::absolute(sidecar_path(f, features_dir))) {
        io::save_geom_features(geom, sidecar_out);
      }
      if (report_purity && t.labels) {
        const auto r = superpoint::superpoint_purity(partition, *t.labels);
        std::printf("%s%10zu%10zu\n", metrics_row(t.tile_id, r).c_str(), stats.cut_pursuit_superpoints,
                    partition.count());
      }
    }
    write_manifest(out_dir, "superpoints", config::pipeline_to_json(cfg), std::nullopt, files, outputs);
  }
};

struct TrainCmd {
  Common common;
  std::vector<std::string> inputs;
  std::optional<std::string> features_dir;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool resume = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train the extractor and semantic primitives");
    c->add_option("--input", inputs, "Tile files or directories (with superpoints)")->required();
    c->add_option("--features", features_dir, "Sidecar directory (default: beside each tile)");
    c->add_option("--seed", seed, "Training seed (or train.seed in the config)");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_flag("--resume", resume, "Continue from the latest checkpoint in the output directory");
    common.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    set_worker_count(common.workers);
    auto cfg = common.pipeline();
    if (seed) {
      cfg.train.seed = *seed;
      cfg.train_seed_set = true;
    }
    if (!cfg.train_seed_set) throw UsageError("train needs a seed (--seed or train.seed)");
    config::validate(cfg);
    const auto files = tile_files(inputs);
    const auto tiles = load_training_tiles(files, features_dir);
    const fs::path dir(out_dir);
    const fs::path ckpt_dir = dir / "checkpoints";
    fs::create_directories(ckpt_dir);

    trainer::TrainOptions opt;
    opt.checkpoint_dir = ckpt_dir;
    if (resume) {
      const auto latest = trainer::latest_checkpoint(ckpt_dir);
      if (!latest) throw UsageError("--resume: no checkpoint in '" + ckpt_dir.string() + "'");
      io::ByteReader r(io::read_file(*latest));
      std::uint64_t fp = 0;
      opt.resume = trainer::read_state(r, &fp);
      if (fp != trainer::config_fingerprint(cfg.train)) {
        throw UsageError("checkpoint '" + latest->string() + "' was written with a different training config");
      }
      std::cerr << "resuming from epoch " << opt.resume->epoch << "\n";
    }
    std::ofstream log(dir / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
    opt.on_epoch = [&](const trainer::EpochLog& e) {
      const std::string line =
          json{{"epoch", e.epoch}, {"loss", e.loss}, {"lr", e.lr}, {"M_current", e.m_current}}.dump();
      std::cout << line << std::endl;
      log << line << "\n";
    };
    opt.on_event = [](const std::string& m) { std::cerr << m << "\n"; };

    auto res = trainer::run_training(tiles, cfg.train, opt);
    print_warnings(res.warnings);
    const fs::path model_path = dir / "model.lwsm";
    io::write_file_atomic(model_path,
                          trainer::encode_model(res.extractor, res.model, trainer::config_fingerprint(cfg.train)));
    // Resolved config with the seed, usable as --config for checkpoints.
    const fs::path cfg_path = dir / "config.json";
    write_text(cfg_path, config::pipeline_to_json(cfg).dump(2) + "\n");
    write_manifest(dir, "train", config::pipeline_to_json(cfg), cfg.train.seed, files, {model_path, cfg_path});
  }
};

struct PredictCmd {
  Common common;
  std::vector<std::string> inputs;
  std::optional<std::string> features_dir;
  std::string checkpoint;
  std::string out_dir;
  std::optional<std::size_t> c_over;
  std::optional<double> l_min;
  bool no_threshold = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("predict", "Wood/foliage labels for tiles");
    c->add_option("--input", inputs, "Tile files or directories (with superpoints)")->required();
    c->add_option("--features", features_dir, "Sidecar directory (default: beside each tile)");
    c->add_option("--checkpoint", checkpoint, "model.lwsm, or a training checkpoint together with --config")
        ->required();
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_option("--c-over", c_over, "Oversegmented classes")->check(CLI::PositiveNumber);
    c->add_option("--l-min", l_min, "Wood linearity threshold");
    c->add_flag("--no-threshold", no_threshold, "Emit oversegmented class ids instead of wood/foliage");
    common.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    set_worker_count(common.workers);
    auto cfg = common.pipeline();
    if (c_over) cfg.predict.c_over = *c_over;
    if (l_min) cfg.predict.l_min = *l_min;
    if (no_threshold) cfg.predict.use_linearity_threshold = false;
    config::validate(cfg);
    auto bytes = io::read_file(checkpoint);
    const bool is_checkpoint = bytes.size() >= 4 && std::string(bytes.data(), 4) == "LWCK";
    if (is_checkpoint && !common.config_path) throw UsageError("a training checkpoint needs the run's --config");
    const auto saved = is_checkpoint ? trainer::model_from_checkpoint(std::move(bytes), cfg.train)
                                     : trainer::decode_model(std::move(bytes));
    const auto files = tile_files(inputs);
    const auto tiles = load_training_tiles(files, features_dir);
    const auto res = trainer::predict(tiles, saved.extractor, saved.model, cfg.predict);
    print_warnings(res.warnings);

    fs::create_directories(out_dir);
    std::vector<fs::path> outputs;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      Tile out = tiles[t].tile;
      out.labels = res.tiles[t].labels;
      outputs.push_back(fs::path(out_dir) / files[t].filename());
      io::save_tile(out, outputs.back());
    }
    json classes = json::array();
    for (std::size_t c = 0; c < res.class_label.size(); ++c) {
      classes.push_back({{"class", c},
                         {"linearity", std::isnan(res.class_linearity[c]) ? json(nullptr) : json(res.class_linearity[c])},
                         {"label", res.class_label[c] == kWood ? "wood" : "foliage"}});
    }
    write_text(fs::path(out_dir) / "classes.json", classes.dump(2) + "\n");
    write_manifest(out_dir, "predict", config::pipeline_to_json(cfg), cfg.predict.seed, files, outputs);
  }
};

struct EvalCmd {
  Common common;
  std::vector<std::string> preds;
  std::vector<std::string> gts;
  std::optional<std::string> mode;
  std::optional<std::string> json_out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Hungarian-matched metrics against ground truth");
    c->add_option("--pred", preds, "Predicted tiles (files or directories)")->required();
    c->add_option("--gt", gts, "Ground-truth plot or tiles")->required();
    c->add_option("--mode", mode, "plot: resolve tile overlaps onto the plot; tile: pair tiles by id")
        ->check(CLI::IsMember({"plot", "tile"}));
    c->add_option("--json", json_out, "Write the JSON report here");
    common.add_to(c);
    c->callback([this] { run(); });
  }

  void run() {
    const auto cfg = common.pipeline();
    const bool plot_mode = mode ? *mode == "plot" : cfg.eval.mode == config::EvalMode::kPlot;
    std::vector<Tile> pred;
    for (const auto& f : tile_files(preds)) pred.push_back(io::load_tile(f));
    std::vector<Tile> gt;
    for (const auto& f : tile_files(gts)) gt.push_back(io::load_tile(f));
    for (const auto& t : pred) {
      if (!t.labels) throw UsageError("prediction '" + t.tile_id + "' has no labels");
    }
    for (const auto& t : gt) {
      if (!t.labels) throw UsageError("ground truth '" + t.tile_id + "' has no labels");
    }

    json report;
    std::vector<std::pair<std::string, eval::MetricsReport>> rows;
    const bool all_indexed = std::all_of(pred.begin(), pred.end(), [](const Tile& t) { return t.source_index; });
    if (plot_mode && gt.size() == 1 && all_indexed && !(pred.size() == 1 && pred[0].tile_id == gt[0].tile_id)) {
      std::vector<const Tile*> ptrs;
      std::vector<std::vector<std::uint8_t>> labels;
      for (const auto& t : pred) {
        ptrs.push_back(&t);
        labels.push_back(*t.labels);
      }
      const auto resolved = pipeline::resolve_overlaps(gt[0], ptrs, labels);
      const auto truth = pipeline::covered_ground_truth(gt[0], ptrs);
      rows.emplace_back("plot " + gt[0].tile_id, eval::compute_metrics(truth, resolved));
      report["mode"] = "plot";
    } else {
      // Pair by tile id; a single pair is compared directly.
      std::vector<std::uint8_t> all_gt, all_pred;
      for (const auto& p : pred) {
        const Tile* g = nullptr;
        if (pred.size() == 1 && gt.size() == 1) {
          g = &gt[0];
        } else {
          for (const auto& cand : gt) {
            if (cand.tile_id == p.tile_id) g = &cand;
          }
        }
        if (!g) throw UsageError("no ground truth for tile '" + p.tile_id + "'");
        if (g->size() != p.size()) throw UsageError("tile '" + p.tile_id + "' differs in size from its ground truth");
        rows.emplace_back(p.tile_id, eval::compute_metrics(*g->labels, *p.labels));
        all_gt.insert(all_gt.end(), g->labels->begin(), g->labels->end());
        all_pred.insert(all_pred.end(), p.labels->begin(), p.labels->end());
      }
      if (rows.size() > 1) rows.emplace_back("all tiles", eval::compute_metrics(all_gt, all_pred));
      report["mode"] = "tile";
    }

    report["results"] = json::array();
    std::printf("%-24s%8s%8s%8s%8s%8s\n", "", "oAcc", "mAcc", "mIoU", "IoU_f", "IoU_w");
    for (const auto& [name, r] : rows) {
      print_warnings(r.warnings);
      auto j = metrics_json(r);
      j["name"] = name;
      report["results"].push_back(j);
      std::printf("%s\n", metrics_row(name, r).c_str());
    }
    if (json_out) {
      write_text(*json_out, report.dump(2) + "\n");
    } else {
      std::cout << report.dump() << "\n";
    }
  }
};

struct ExportPlyCmd {
  std::string input;
  std::string output;
  std::string color = "labels";
  bool ascii = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("export-ply", "Colored PLY for inspection");
    c->add_option("--input", input, "Tile file")->required();
    c->add_option("--out", output, "PLY path")->required();
    c->add_option("--color", color, "labels, superpoints or reflectance")
        ->check(CLI::IsMember({"labels", "superpoints", "reflectance"}));
    c->add_flag("--ascii", ascii, "ASCII instead of binary PLY");
    c->callback([this] { run(); });
  }

  void run() {
    const Tile t = load_input(input);
    const auto coloring = color == "labels"        ? io::PlyColoring::kLabels
                          : color == "superpoints" ? io::PlyColoring::kSuperpoints
                                                   : io::PlyColoring::kReflectance;
    io::export_ply(t, coloring, output, ascii ? io::PlyEncoding::kAscii : io::PlyEncoding::kBinaryLittleEndian);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised leaf/wood separation for multispectral point clouds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  SynthCmd synth_cmd;
  PreprocessCmd preprocess_cmd;
  FeaturesCmd features_cmd;
  SuperpointsCmd superpoints_cmd;
  TrainCmd train_cmd;
  PredictCmd predict_cmd;
  EvalCmd eval_cmd;
  ExportPlyCmd ply_cmd;
  synth_cmd.add(app);
  preprocess_cmd.add(app);
  features_cmd.add(app);
  superpoints_cmd.add(app);
  train_cmd.add(app);
  predict_cmd.add(app);
  eval_cmd.add(app);
  ply_cmd.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    // Library errors are precondition failures on user-supplied data.
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
