#include "dssl/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "dssl/config.hpp"
#include "dssl/trainer.hpp"

namespace dssl {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  bool verbose = false;
};

ExperimentConfig load(const Common& c) {
  return c.config_path.empty() ? parse_config_json(nlohmann::json::object(), c.overrides)
                               : parse_config(c.config_path, c.overrides);
}

int gen_data(const Common& common, const std::string& out_dir, std::ostream& out) {
  const ExperimentConfig cfg = load(common);
  const fs::path dir = out_dir.empty() ? cfg.run_dir() / "data" : fs::path(out_dir);
  fs::create_directories(dir);
  const Dataset train = generate(cfg.data.profile, cfg.data.image_size, cfg.master_seed);
  const Dataset test = generate_balanced(cfg.data.profile.class_count, cfg.data.test_per_class,
                                         cfg.data.image_size, cfg.master_seed);
  write_idx(dir / "train-images.idx", train);
  write_idx(dir / "test-images.idx", test);
  DatasetManifest m;
  m.profile = cfg.data.profile;
  m.image_size = cfg.data.image_size;
  m.test_per_class = cfg.data.test_per_class;
  m.seed = cfg.master_seed;
  m.label_fraction = cfg.split.label_fraction;
  m.split_mode = cfg.split.mode;
  m.train_images = "train-images.idx";
  m.test_images = "test-images.idx";
  write_manifest(dir / "manifest.json", m);
  write_resolved_config(dir / "resolved.json", cfg);
  out << (dir / "manifest.json").string() << '\n';
  return kExitOk;
}

int train(const Common& common, std::ostream& out) {
  const ExperimentConfig cfg = load(common);
  const ExperimentData data = prepare_data(cfg);
  const fs::path dir = cfg.run_dir();
  fs::create_directories(dir);
  write_resolved_config(dir / "resolved.json", cfg);
  FitOptions opts;
  opts.metrics_csv = dir / "metrics.csv";
  opts.checkpoint = dir / "checkpoint.bin";
  opts.log = common.verbose ? &out : nullptr;
  const FitResult r = fit(cfg, data, opts);
  out << "final instance_top1 " << r.final_eval.instance_top1 << " classwise_top1 "
      << r.final_eval.classwise_top1 << " (best epoch " << r.best_epoch << ": "
      << r.best_eval.instance_top1 << ")\n";
  return kExitOk;
}

int evaluate_cmd(const Common& common, const std::string& checkpoint, std::ostream& out) {
  const ExperimentConfig cfg = load(common);
  const fs::path ckpt = checkpoint.empty() ? cfg.run_dir() / "checkpoint.bin" : fs::path(checkpoint);
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint not found: '" + ckpt.string() + "'");
  const ExperimentData data = prepare_data(cfg);
  const Mlp<double> model = load_checkpoint(ckpt);
  const ClassPrior prior(data.labeled_counts, cfg.debias.momentum);
  const EvalResult r =
      evaluate(model, data.test, prior.pi(), cfg.toggles.logit_adjust_on, cfg.debias.tau_la);
  nlohmann::ordered_json j;
  j["checkpoint"] = ckpt.string();
  j["logit_adjust_on"] = cfg.toggles.logit_adjust_on;
  j["instance_top1"] = r.instance_top1;
  j["classwise_top1"] = r.classwise_top1;
  j["per_class_recall"] = r.per_class_recall;
  const fs::path dir = cfg.run_dir();
  fs::create_directories(dir);
  std::ofstream(dir / "eval.json") << j.dump(2) << '\n';
  out << j.dump(2) << '\n';
  return kExitOk;
}

int ablate(const Common& common, std::ostream& out) {
  const ExperimentConfig cfg = load(common);
  const fs::path dir = cfg.run_dir();
  write_resolved_config(dir / "resolved.json", cfg);
  const auto rows = run_ablation(cfg, default_ablation_grid(), common.verbose ? &out : nullptr);
  write_ablation_csv(dir / "tables" / "ablation.csv", rows);
  out << (dir / "tables" / "ablation.csv").string() << '\n';
  return kExitOk;
}

int sweep(const Common& common, const std::vector<double>& fractions, std::ostream& out) {
  ExperimentConfig cfg = load(common);
  if (!fractions.empty()) {
    cfg.sweep_fractions = fractions;
    cfg.validate();
  }
  const fs::path dir = cfg.run_dir();
  write_resolved_config(dir / "resolved.json", cfg);
  const auto rows = run_sweep(cfg, cfg.sweep_fractions, common.verbose ? &out : nullptr);
  write_sweep_csv(dir / "tables" / "sweep.csv", rows);
  out << (dir / "tables" / "sweep.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Debiased semi-supervised learning on synthetic long-tailed rasters", "dssl"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "JSON experiment config (default: all defaults)");
    sub->add_option("-s,--set", common.overrides, "Override a config field: dotted.key=value")
        ->take_all();
    sub->add_flag("-v,--verbose", common.verbose, "Per-epoch progress");
  };

  std::string out_dir;
  std::string manifest;
  std::string checkpoint;
  std::vector<double> fractions;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate train/test IDX files and a manifest");
  add_common(gen);
  gen->add_option("-o,--out", out_dir, "Output directory (default: <output.dir>/<run_id>/data)");

  CLI::App* tr = app.add_subcommand("train", "Train one configuration");
  add_common(tr);
  tr->add_option("-m,--manifest", manifest, "Dataset manifest (same as --set data.manifest=...)");

  CLI::App* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test set");
  add_common(ev);
  ev->add_option("-m,--manifest", manifest, "Dataset manifest");
  ev->add_option("-k,--checkpoint", checkpoint, "Checkpoint (default: <run dir>/checkpoint.bin)");

  CLI::App* ab = app.add_subcommand("ablate", "Augmentation / debiasing ablation grid");
  add_common(ab);

  CLI::App* sw = app.add_subcommand("sweep", "Label-fraction sweep");
  add_common(sw);
  sw->add_option("-f,--fractions", fractions, "Label fractions")->delimiter(',');

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (!manifest.empty()) common.overrides.push_back("data.manifest=\"" + manifest + "\"");

  try {
    if (gen->parsed()) return gen_data(common, out_dir, out);
    if (tr->parsed()) return train(common, out);
    if (ev->parsed()) return evaluate_cmd(common, checkpoint, out);
    if (ab->parsed()) return ablate(common, out);
    if (sw->parsed()) return sweep(common, fractions, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace dssl
