#include "deeprank/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "deeprank/checkpoint.hpp"
#include "deeprank/dataset.hpp"
#include "deeprank/eval.hpp"
#include "deeprank/score_io.hpp"
#include "deeprank/synth.hpp"
#include "deeprank/trainer.hpp"

namespace deeprank {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
std::string stringify(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_real(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    return std::to_string(v);
  }
}

/// Options bound to one subcommand plus the manifest view of their values.
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& help) : app_(parent.add_subcommand(name, help)) {}

  template <typename T>
  CLI::Option* opt(const std::string& flag, T& var, const std::string& help) {
    record(flag, var);
    return app_->add_option("--" + flag, var, help)->capture_default_str();
  }
  CLI::Option* flag(const std::string& flag, bool& var, const std::string& help) {
    record(flag, var);
    return app_->add_flag("--" + flag, var, help);
  }

  CLI::App* app() const { return app_; }
  bool known(const std::string& key) const { return getters_.contains(key); }
  bool is_flag(const std::string& key) const { return flags_.contains(key); }

  ordered_json resolved() const {
    ordered_json j = ordered_json::object();
    for (const auto& [key, get] : getters_) j[key] = get();
    return j;
  }

 private:
  template <typename T>
  void record(const std::string& key, T& var) {
    getters_[key] = [&var] { return stringify(var); };
    if constexpr (std::is_same_v<T, bool>) flags_.insert(key);
  }

  CLI::App* app_;
  std::map<std::string, std::function<std::string()>> getters_;
  std::set<std::string> flags_;
};

struct CommonOptions {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string config;
};

struct DataOptions {
  std::string dataset;
  std::string split = "test";  // train | test | all
  double split_fraction = 0.5;
  std::uint64_t split_seed = 1;
};

struct ScoreOptions {
  std::string checkpoint;
  std::string scorer = "model";  // model | raw | histogram
  bool tta = false;
};

struct CurveOptions {
  std::size_t trials = 10;
  std::size_t gallery_shots = 1;
  std::string multishot = "max";
  std::string ties = "pessimistic";
};

// Reads `key = value` lines (or the "config" object of a manifest.json) and
// prepends the corresponding flags; anything on the command line wins.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const std::map<std::string, Command*>& commands) {
  std::string path, command;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (command.empty() && commands.contains(args[i])) command = args[i];
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || command.empty()) return args;

  std::vector<std::pair<std::string, std::string>> entries;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  if (fs::path(path).extension() == ".json") {
    ordered_json j;
    try {
      j = ordered_json::parse(in);
    } catch (const std::exception& e) {
      throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.contains("command") && j["command"] != command) {
      throw UsageError("manifest '" + path + "' is for command '" + j["command"].get<std::string>() + "'");
    }
    const ordered_json config = j.value("config", ordered_json::object());
    for (const auto& [k, v] : config.items()) entries.emplace_back(k, v.get<std::string>());
  } else {
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  const Command& cmd = *commands.at(command);
  std::set<std::string> given;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  std::vector<std::string> out(args);
  for (const auto& [key, value] : entries) {
    if (key == "config") continue;
    if (!cmd.known(key)) throw UsageError("config file '" + path + "': unknown key '" + key + "' for " + command);
    if (given.contains(key)) continue;
    if (cmd.is_flag(key)) {
      if (value == "true") out.push_back("--" + key);
      else if (value != "false") throw UsageError("config key '" + key + "' expects true or false");
    } else if (!value.empty()) {
      out.push_back("--" + key);
      out.push_back(value);
    }
  }
  return out;
}

/// Files this run created; removed again if the run fails.
class OutputGuard {
 public:
  explicit OutputGuard(const fs::path& dir) : dir_(dir), created_dir_(!fs::exists(dir)) { fs::create_directories(dir); }
  fs::path track(const fs::path& name) {
    files_.push_back(dir_ / name);
    return files_.back();
  }
  void commit() { committed_ = true; }
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    if (created_dir_) {
      fs::remove_all(dir_, ec);
      return;
    }
    for (const auto& f : files_) fs::remove(f, ec);
  }

 private:
  fs::path dir_;
  bool created_dir_;
  bool committed_ = false;
  std::vector<fs::path> files_;
};

void write_manifest(const fs::path& path, const std::string& command, const Command& cmd, const CommonOptions& common,
                    const ordered_json& inputs, const ordered_json& outputs) {
  ordered_json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["seed"] = common.seed;
  j["config"] = cmd.resolved();
  j["config"].erase("config");
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write manifest '" + path.string() + "'");
}

struct ProbeGallery {
  std::vector<PersonImage> probes, gallery;
};

ProbeGallery load_eval_images(const DataOptions& d) {
  if (d.dataset.empty()) throw UsageError("--dataset is required");
  const DatasetIndex index = ingest(d.dataset);
  const auto cams = index.cameras();
  if (cams.size() < 2) throw DatasetError("dataset '" + d.dataset + "' needs two cameras for evaluation");
  DatasetIndex part = index;
  if (d.split != "all") {
    const SplitSpec s = split(index, d.split_fraction, d.split_seed);
    part = restrict_to(index, d.split == "train" ? s.train_identities : s.test_identities);
  }
  ProbeGallery pg;
  for (auto& im : load_images(part)) {
    if (im.camera == cams[0]) pg.probes.push_back(std::move(im));
    else if (im.camera == cams[1]) pg.gallery.push_back(std::move(im));
  }
  return pg;
}

std::vector<PersonImage> load_train_images(const DataOptions& d) {
  if (d.dataset.empty()) throw UsageError("--dataset is required");
  const DatasetIndex index = ingest(d.dataset);
  if (d.split == "all") return load_images(index);
  const SplitSpec s = split(index, d.split_fraction, d.split_seed);
  return load_images(restrict_to(index, d.split == "test" ? s.test_identities : s.train_identities));
}

ScoreMatrix compute_scores(const ScoreOptions& so, const DataOptions& d, std::size_t threads) {
  const ProbeGallery pg = load_eval_images(d);
  if (so.scorer == "raw") return raw_pixel_scores(pg.probes, pg.gallery);
  if (so.scorer == "histogram") return histogram_scores(pg.probes, pg.gallery);
  if (so.scorer != "model") throw UsageError("--scorer must be model, raw or histogram");
  if (so.checkpoint.empty()) throw UsageError("--checkpoint is required with --scorer model");
  const Checkpoint ckpt = load_checkpoint(so.checkpoint);
  const auto net = network_from_checkpoint(ckpt);
  ScoringOptions opts;
  opts.use_tta = so.tta;
  opts.threads = threads;
  if (const auto it = ckpt.meta.extra.find("stitch_side"); it != ckpt.meta.extra.end()) opts.stitch_side = std::stoul(it->second);
  return score_matrix(net, pg.probes, pg.gallery, opts);
}

CmcCurve curve_of(const ScoreMatrix& m, const CurveOptions& c, std::uint64_t seed) {
  TrialOptions t;
  t.trials = c.trials;
  t.gallery_shots = c.gallery_shots;
  t.policy = parse_multishot_policy(c.multishot);
  t.ties = parse_tie_policy(c.ties);
  t.seed = seed;
  return cmc_trials(m, t);
}

void report_curve(std::ostream& out, const CmcCurve& c) {
  out << "rank-1 " << format_real(c.rates[0]);
  for (std::size_t k : {5u, 10u, 20u}) {
    if (k <= c.rates.size()) out << "  rank-" << k << " " << format_real(c.rates[k - 1]);
  }
  out << "\n";
}

void add_common(Command& cmd, CommonOptions& c) {
  cmd.opt("out", c.out, "output directory")->required();
  cmd.opt("seed", c.seed, "random seed (falls back to DRNK_SEED)");
  cmd.opt("threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd.opt("config", c.config, "key = value file or a previous manifest.json; flags override it");
}

void add_data(Command& cmd, DataOptions& d, const std::string& default_split) {
  d.split = default_split;
  cmd.opt("dataset", d.dataset, "dataset root (cam_<label>/<id>_<idx>.png)")->required();
  cmd.opt("split", d.split, "identity subset: train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  cmd.opt("split-fraction", d.split_fraction, "fraction of identities used for training");
  cmd.opt("split-seed", d.split_seed, "seed of the identity split");
}

void add_scorer(Command& cmd, ScoreOptions& s) {
  cmd.opt("checkpoint", s.checkpoint, "trained model");
  cmd.opt("scorer", s.scorer, "model, raw or histogram")->check(CLI::IsMember({"model", "raw", "histogram"}));
  cmd.flag("tta", s.tta, "average the 8 flip/swap variants at test time");
}

void add_curve(Command& cmd, CurveOptions& c) {
  cmd.opt("trials", c.trials, "random gallery draws averaged into the curve")->check(CLI::PositiveNumber);
  cmd.opt("gallery-shots", c.gallery_shots, "gallery images per identity")->check(CLI::PositiveNumber);
  cmd.opt("multishot", c.multishot, "aggregation over gallery shots")->check(CLI::IsMember({"max", "mean"}));
  cmd.opt("ties", c.ties, "tie handling")->check(CLI::IsMember({"pessimistic", "optimistic"}));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"deep ranking for person re-identification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommonOptions common;

  Command synth_cmd(app, "synth", "write a synthetic cross-view dataset");
  SynthParams sp;
  add_common(synth_cmd, common);
  synth_cmd.opt("identities", sp.identities, "number of identities");
  synth_cmd.opt("images-per-view", sp.images_per_view, "images per identity and camera");
  synth_cmd.opt("height", sp.height, "image height");
  synth_cmd.opt("width", sp.width, "image width");
  synth_cmd.opt("brightness-shift", sp.brightness_shift, "camera b brightness range");
  synth_cmd.opt("hue-shift", sp.hue_shift, "camera b hue rotation range (radians)");
  synth_cmd.opt("jitter", sp.jitter, "figure offset range in pixels");
  synth_cmd.opt("noise", sp.noise, "pixel noise sigma");
  synth_cmd.opt("clutter", sp.clutter, "background clutter strength");

  struct TrainOptions {
    std::string preset = "desk_small";
    std::string checkpoint;
    std::size_t crop = 0;
    std::size_t epochs = 30;
    double lr = 1e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_units = 16;
    std::string curriculum = "thirds";
    bool relax = false;
    std::size_t snapshot_every = 0;
    std::string init = "fan_in_normal";
    bool heldout = false;
  };
  TrainOptions to;
  DataOptions train_data;
  Command train_cmd(app, "train", "train a model; writes model.drnk and loss.csv");
  Command finetune_cmd(app, "finetune", "continue training from --checkpoint; writes model.drnk and loss.csv");
  for (Command* cmd : {&train_cmd, &finetune_cmd}) {
    add_common(*cmd, common);
    add_data(*cmd, train_data, "train");
    cmd->opt("preset", to.preset, "network preset")->check(CLI::IsMember({"desk_small", "alexnet_like"}));
    cmd->opt("crop", to.crop, "crop side; 0 uses the network input side");
    cmd->opt("epochs", to.epochs, "training epochs");
    cmd->opt("lr", to.lr, "learning rate");
    cmd->opt("momentum", to.momentum, "SGD momentum");
    cmd->opt("weight-decay", to.weight_decay, "L2 weight decay");
    cmd->opt("batch-units", to.batch_units, "ranking units per minibatch")->check(CLI::PositiveNumber);
    cmd->opt("curriculum", to.curriculum, "'thirds' or epoch:size list such as 0:1,10:2,20:4");
    cmd->flag("relax-cross-view", to.relax, "draw mismatches from both cameras");
    cmd->opt("snapshot-every", to.snapshot_every, "epochs between snapshots; 0 disables");
    cmd->flag("heldout", to.heldout, "log held-out loss on the test identities");
  }
  train_cmd.opt("init", to.init, "weight init")->check(CLI::IsMember({"fan_in_normal", "uniform", "zeros"}));
  finetune_cmd.opt("checkpoint", to.checkpoint, "pretrained model")->required();

  DataOptions eval_data;
  ScoreOptions score_opts;
  CurveOptions curve_opts;
  Command eval_cmd(app, "eval", "CMC curve on the test identities; writes cmc.csv");
  add_common(eval_cmd, common);
  add_data(eval_cmd, eval_data, "test");
  add_scorer(eval_cmd, score_opts);
  add_curve(eval_cmd, curve_opts);

  std::size_t targets = 0;
  Command ow_cmd(app, "openworld", "target-set verification sweep; writes openworld.csv");
  add_common(ow_cmd, common);
  add_data(ow_cmd, eval_data, "test");
  add_scorer(ow_cmd, score_opts);
  ow_cmd.opt("targets", targets, "number of target identities p")->required()->check(CLI::PositiveNumber);

  Command scores_cmd(app, "scores", "probe x gallery score matrix; writes scores.csv");
  add_common(scores_cmd, common);
  add_data(scores_cmd, eval_data, "test");
  add_scorer(scores_cmd, score_opts);

  std::vector<std::string> fuse_inputs;
  std::string norm = "none";
  Command fuse_cmd(app, "fuse", "sum two score CSVs; writes scores.csv and cmc.csv");
  add_common(fuse_cmd, common);
  add_curve(fuse_cmd, curve_opts);
  fuse_cmd.app()->add_option("inputs", fuse_inputs, "two score CSVs")->required()->expected(2);
  fuse_cmd.opt("norm", norm, "per-matrix normalisation before summing")->check(CLI::IsMember({"none", "minmax", "zscore"}));

  const std::map<std::string, Command*> commands{{"synth", &synth_cmd},   {"train", &train_cmd}, {"finetune", &finetune_cmd},
                                                 {"eval", &eval_cmd},     {"openworld", &ow_cmd}, {"scores", &scores_cmd},
                                                 {"fuse", &fuse_cmd}};

  try {
    std::vector<std::string> expanded = expand_config(args, commands);
    std::vector<std::string> rev(expanded.rbegin(), expanded.rend() - 1);
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const Command& cmd = *commands.at(command);
  if (cmd.app()->count("--seed") == 0) {
    if (const char* env = std::getenv("DRNK_SEED")) {
      try {
        common.seed = std::stoull(env);
      } catch (const std::exception&) {
        err << "error: DRNK_SEED must be an unsigned integer, got '" << env << "'\n";
        return 2;
      }
    }
  }

  try {
    const fs::path dir(common.out);
    OutputGuard guard(dir);
    const fs::path manifest = guard.track("manifest.json");
    ordered_json inputs = ordered_json::object(), outputs = ordered_json::object();

    if (command == "synth") {
      sp.seed = common.seed;
      sp.name = dir.filename().string();
      const DatasetIndex index = synth_generate(sp);
      write_manifest(manifest, command, cmd, common, inputs, {{"root", dir.string()}, {"images", index.entries.size()}});
      for (const auto& e : index.entries) guard.track(entry_relative_path(e));
      export_dataset(index, dir);
      out << "wrote " << index.entries.size() << " images for " << sp.identities << " identities to " << dir.string() << "\n";
    } else if (command == "train" || command == "finetune") {
      const NetworkConfig config = preset_config(to.preset);
      inputs["dataset"] = train_data.dataset;
      if (command == "finetune") inputs["checkpoint"] = to.checkpoint;
      outputs["checkpoint"] = (dir / "model.drnk").string();
      outputs["loss"] = (dir / "loss.csv").string();
      write_manifest(manifest, command, cmd, common, inputs, outputs);

      TrainConfig tc;
      tc.epochs = to.epochs;
      tc.batch_units = to.batch_units;
      tc.sgd.learning_rate = to.lr;
      tc.sgd.momentum = to.momentum;
      tc.sgd.weight_decay = to.weight_decay;
      tc.crop = to.crop;
      tc.seed = common.seed;
      tc.threads = common.threads;
      tc.snapshot_every = to.snapshot_every;
      tc.snapshot_dir = dir;
      for (std::size_t e = to.snapshot_every; to.snapshot_every && e <= to.epochs; e += to.snapshot_every) {
        guard.track("snap_" + std::to_string(e) + ".drnk");
      }
      SamplerPolicy policy;
      policy.cross_view_relaxed = to.relax;
      policy.curriculum = to.curriculum == "thirds" ? Curriculum::thirds(to.epochs) : Curriculum::parse(to.curriculum);
      policy.seed = common.seed;

      const auto images = load_train_images(train_data);
      std::vector<PersonImage> heldout;
      if (to.heldout) {
        DataOptions other = train_data;
        other.split = train_data.split == "test" ? "train" : "test";
        if (train_data.split == "all") throw UsageError("--heldout needs --split train or test");
        heldout = load_train_images(other);
      }
      TrainHooks hooks;
      hooks.on_epoch_end = [&](const EpochRecord& r, const Network<float>&) {
        out << "epoch " << r.epoch << " loss " << format_real(r.train_loss);
        if (r.heldout_loss) out << " heldout " << format_real(*r.heldout_loss);
        out << "\n";
        return true;
      };
      TrainResult result;
      if (command == "train") {
        InitOptions init;
        init.scheme = parse_init_scheme(to.init);
        init.seed = common.seed;
        auto net = build_network<float>(config, init);
        result = train(net, images, tc, policy, hooks, heldout);
      } else {
        result = fine_tune(load_checkpoint(to.checkpoint), config, images, tc, policy, hooks, heldout);
      }
      save_checkpoint(result.checkpoint, guard.track("model.drnk"));
      result.log.write_csv(guard.track("loss.csv"));
    } else if (command == "eval" || command == "scores" || command == "openworld") {
      inputs["dataset"] = eval_data.dataset;
      if (score_opts.scorer == "model") inputs["checkpoint"] = score_opts.checkpoint;
      const std::string name = command == "eval" ? "cmc.csv" : command == "scores" ? "scores.csv" : "openworld.csv";
      outputs[command == "eval" ? "cmc" : command == "scores" ? "scores" : "openworld"] = (dir / name).string();
      write_manifest(manifest, command, cmd, common, inputs, outputs);
      const ScoreMatrix m = compute_scores(score_opts, eval_data, common.threads);
      const fs::path target = guard.track(name);
      if (command == "eval") {
        const CmcCurve c = curve_of(m, curve_opts, common.seed);
        write_cmc_csv(c, target);
        report_curve(out, c);
      } else if (command == "scores") {
        write_score_csv(m, target);
        out << "wrote " << m.rows() << " x " << m.cols() << " scores\n";
      } else {
        const auto chosen = pick_targets(m, targets, common.seed);
        const auto sweep = open_world_sweep(m, chosen);
        write_open_world_csv(sweep, target);
        for (double f : {0.01, 0.05, 0.1, 0.2, 0.3}) out << "TTR@FTR" << format_real(f) << " " << format_real(ttr_at_ftr(sweep, f)) << "\n";
      }
    } else if (command == "fuse") {
      inputs["scores"] = fuse_inputs;
      outputs["scores"] = (dir / "scores.csv").string();
      outputs["cmc"] = (dir / "cmc.csv").string();
      write_manifest(manifest, command, cmd, common, inputs, outputs);
      const ScoreMatrix fused = fuse_scores(read_score_csv(fuse_inputs[0]), read_score_csv(fuse_inputs[1]), parse_fusion_norm(norm));
      write_score_csv(fused, guard.track("scores.csv"));
      const CmcCurve c = curve_of(fused, curve_opts, common.seed);
      write_cmc_csv(c, guard.track("cmc.csv"));
      report_curve(out, c);
    }
    guard.commit();
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace deeprank
