// Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
// criterion fails. Long-running experiments log progress to stderr.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "dssl/config.hpp"
#include "dssl/trainer.hpp"
#include "reference.hpp"

using namespace dssl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Final-epoch results per (resolved config, seed), so experiments shared by
// several criteria run once.
struct RunRecord {
  double instance = 0.0;
  double classwise = 0.0;
  double kl = 0.0;
};

class RunCache {
 public:
  RunRecord get(ExperimentConfig c, std::uint64_t seed) {
    c.master_seed = seed;
    const std::string key = to_json(c).dump();
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    const FitResult r = fit(c);
    RunRecord rec{r.final_eval.instance_top1, r.final_eval.classwise_top1,
                  r.rows.empty() ? 0.0 : r.rows.back().kl_pseudo};
    std::cerr << "    seed " << seed << " frac " << c.split.label_fraction << " debias "
              << c.toggles.debias_on << " weak " << to_string(c.weak.kind) << " rot "
              << c.strong.rotation_degrees << " scale " << c.strong.scale_range.first
              << ": instance " << rec.instance << " classwise " << rec.classwise << " kl " << rec.kl
              << " (" << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
              << " s)\n";
    return cache_[key] = rec;
  }

  RunRecord mean(const ExperimentConfig& c) {
    RunRecord m;
    for (std::uint64_t s : c.seeds) {
      const RunRecord r = get(c, s);
      m.instance += r.instance / static_cast<double>(c.seeds.size());
      m.classwise += r.classwise / static_cast<double>(c.seeds.size());
      m.kl += r.kl / static_cast<double>(c.seeds.size());
    }
    return m;
  }

 private:
  std::map<std::string, RunRecord> cache_;
};

ExperimentConfig desk_scale() {
  ExperimentConfig c;  // defaults: C=10, n0=1000, rho=100, 32x32, 10% labels, 30 epochs, mu=4
  c.seeds = {0, 1, 2};
  return c;
}

ExperimentConfig with_debias(ExperimentConfig c, bool on) {
  c.toggles = FeatureToggles{on, on, on};
  return c;
}

Outcome gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) worst = std::max(worst, reference::gradient_check(seed));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-4 && secs < 60.0,
          "max relative error " + fmt("%.3g", worst) + " over 20 seeds in " + fmt("%.2f", secs) + " s"};
}

Outcome reductions() {
  ExperimentConfig c = desk_scale();
  const ExperimentData data = prepare_data(c);
  std::vector<StepViews> views;
  const RandomStream root(0, {0xACCE});
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::vector<Index> lab, unl;
    RandomStream pick = root.child({0, s});
    for (int i = 0; i < c.sgd.batch_size_labeled; ++i)
      lab.push_back(data.split.labeled[pick.below(data.split.labeled.size())]);
    for (int i = 0; i < c.sgd.batch_size_labeled * c.sgd.unlabeled_ratio; ++i)
      unl.push_back(data.split.unlabeled[pick.below(data.split.unlabeled.size())]);
    views.push_back(make_step_views(data.train, lab, unl, c.weak, c.strong, root.child({1, s}), 1));
  }

  const auto trace_gap = [&](ExperimentConfig cfg, std::uint64_t init_seed, Index* accepted) {
    Mlp<double> model = Mlp<double>::glorot(cfg.layer_sizes(), init_seed);
    reference::FixMatch ref(reference::copy_of(model), cfg.sgd.learning_rate, cfg.sgd.momentum,
                            cfg.sgd.weight_decay, cfg.debias.tau, cfg.lambda_u);
    Sgd<double> opt(cfg.sgd);
    ClassPrior prior(data.labeled_counts, cfg.debias.momentum);
    double gap = 0.0;
    for (const StepViews& v : views) {
      const StepResult r = train_step(model, opt, v, prior, cfg);
      if (accepted) *accepted += r.pseudo.accepted_count();
      const double want = ref.step(reference::rows_of(v.labeled_weak), v.labeled_targets,
                                   reference::rows_of(v.unlabeled_weak),
                                   reference::rows_of(v.unlabeled_strong));
      gap = std::max(gap, std::abs(r.total - want));
    }
    return gap;
  };

  ExperimentConfig supervised = c;
  supervised.lambda_u = 0.0;
  const double gap_a = trace_gap(supervised, 11, nullptr);

  // A low threshold makes pseudo-labels flow from the first step on.
  ExperimentConfig plain = with_debias(c, false);
  plain.debias.tau = 0.2;
  Index accepted = 0;
  const double gap_b = trace_gap(plain, 12, &accepted);

  RandomStream rs(5, {0xCE});
  double gap_c = 0.0;
  const VectorXd zero = VectorXd::Zero(10);
  for (int i = 0; i < 1000; ++i) {
    MatrixXd z(1, 10);
    for (Index k = 0; k < 10; ++k) z(0, k) = rs.uniform(-8.0, 8.0);
    const std::vector<int> t{static_cast<int>(rs.below(10))};
    gap_c = std::max(gap_c, std::abs(margin_cross_entropy(z, t[0], zero) - cross_entropy_from_logits(z, t)));
  }
  return {gap_a <= 1e-9 && gap_b <= 1e-9 && accepted > 0 && gap_c <= 1e-12,
          "(a) supervised gap " + fmt("%.3g", gap_a) + ", (b) FixMatch gap " + fmt("%.3g", gap_b) +
              " with " + std::to_string(accepted) + " accepted, (c) margin gap " + fmt("%.3g", gap_c)};
}

Outcome debias_gain(RunCache& cache) {
  const ExperimentConfig c = desk_scale();
  const auto t0 = std::chrono::steady_clock::now();
  const RunRecord on = cache.mean(with_debias(c, true));
  const RunRecord off = cache.mean(with_debias(c, false));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double gain = 100.0 * (on.classwise - off.classwise);
  return {gain >= 2.0 && secs < 1800.0,
          "class-wise ON " + fmt("%.4f", on.classwise) + " vs OFF " + fmt("%.4f", off.classwise) +
              ", gain " + fmt("%.2f", gain) + " points (need >= 2.0), " + fmt("%.0f", secs) + " s"};
}

Outcome rebalancing(RunCache& cache) {
  const ExperimentConfig c = desk_scale();
  const RunRecord on = cache.mean(with_debias(c, true));
  const RunRecord off = cache.mean(with_debias(c, false));
  const double ratio = off.kl > 0.0 ? on.kl / off.kl : 1.0;
  return {on.kl <= 0.8 * off.kl, "mean KL ON " + fmt("%.4f", on.kl) + " vs OFF " + fmt("%.4f", off.kl) +
                                     ", ratio " + fmt("%.3f", ratio) + " (need <= 0.8)"};
}

Outcome fraction_trend(RunCache& cache, const fs::path& out_dir) {
  const ExperimentConfig base = desk_scale();
  const std::vector<double> fractions{0.05, 0.1, 0.2, 0.3};
  std::vector<SweepRow> rows;
  std::string detail;
  bool ok = true;
  double prev = -1.0;
  for (double f : fractions) {
    ExperimentConfig c = base;
    c.split.label_fraction = f;
    SweepRow row{f, {}};
    for (std::uint64_t s : c.seeds) {
      const RunRecord r = cache.get(c, s);
      row.summary.instance_top1.push_back(r.instance);
      row.summary.classwise_top1.push_back(r.classwise);
      row.summary.kl_pseudo.push_back(r.kl);
    }
    const double m = row.summary.mean_instance();
    if (prev >= 0.0 && m < prev - 0.005) ok = false;
    prev = m;
    detail += (detail.empty() ? "" : ", ") + fmt("%.2f", f) + ": " + fmt("%.4f", m);
    rows.push_back(std::move(row));
  }
  write_sweep_csv(out_dir / "sweep.csv", rows);
  return {ok, "mean instance " + detail};
}

Outcome augmentation_ablation(RunCache& cache, const fs::path& out_dir) {
  const ExperimentConfig base = desk_scale();
  std::vector<AblationRow> rows;
  double best = -1.0;
  std::string best_name;
  double full = -1.0;
  double without = -1.0;
  for (const AblationCell& cell : default_ablation_grid()) {
    const ExperimentConfig c = cell.apply(base);
    AblationRow row{cell, {}};
    for (std::uint64_t s : c.seeds) {
      const RunRecord r = cache.get(c, s);
      row.summary.instance_top1.push_back(r.instance);
      row.summary.classwise_top1.push_back(r.classwise);
      row.summary.kl_pseudo.push_back(r.kl);
    }
    const double m = row.summary.mean_instance();
    if (m > best) {
      best = m;
      best_name = cell.name();
    }
    if (cell.weak_on && cell.debias_on && cell.rotation_on && cell.scaling_on) full = m;
    if (cell.weak_on && cell.debias_on && !cell.rotation_on && !cell.scaling_on) without = m;
    rows.push_back(std::move(row));
  }
  write_ablation_csv(out_dir / "ablation.csv", rows);
  const double delta = 100.0 * (full - without);
  const double behind = 100.0 * (best - full);
  return {delta >= -0.5 && behind <= 0.5,
          "rotation+scaling changes accuracy by " + fmt("%+.2f", delta) + " points (need >= -0.5); full " +
              fmt("%.4f", full) + ", best " + fmt("%.4f", best) + " (" + best_name + "), gap " +
              fmt("%.2f", behind) + " points (need <= 0.5)"};
}

Outcome invariants(const fs::path& out_dir) {
  std::vector<std::string> failed;
  RandomStream rs(99, {0x17});
  MatrixXd logits(10000, 10);
  for (Index i = 0; i < logits.size(); ++i) logits.data()[i] = rs.uniform(-10.0, 10.0);
  const auto argmaxes = [](const MatrixXd& m) {
    std::vector<Index> out;
    for (Index r = 0; r < m.rows(); ++r) out.push_back(argmax(m.row(r)));
    return out;
  };
  const auto plain = argmaxes(logits);
  const ClassPrior uniform(10, 0.999);
  for (double lambda : {0.5, 1.0, 3.0}) {
    if (argmaxes(debias_logits(logits, uniform, lambda)) != plain) failed.push_back("uniform p_hat argmax");
    if (argmaxes(adjust_logits_eval(logits, uniform.pi(), lambda)) != plain) failed.push_back("uniform pi argmax");
  }

  ClassPrior prior(10, 0.9);
  for (int i = 0; i < 10000; ++i) {
    MatrixXd batch(4, 10);
    for (Index k = 0; k < batch.size(); ++k) batch.data()[k] = rs.uniform(-12.0, 12.0);
    prior.update(softmax(batch));
    if (prior.p_hat().minCoeff() < 0.0 || std::abs(prior.p_hat().sum() - 1.0) > 1e-9) {
      failed.push_back("p_hat simplex");
      break;
    }
  }

  // Round trip through the resolved config file, then run twice and with 8 workers.
  ExperimentConfig c = desk_scale();
  c.sgd.epochs = 3;
  write_resolved_config(out_dir / "resolved.json", c);
  ExperimentConfig resolved = parse_config(out_dir / "resolved.json");
  const auto run = [&](const ExperimentConfig& cfg, const std::string& tag) {
    fit(cfg, FitOptions{out_dir / (tag + ".csv"), out_dir / (tag + ".bin"), nullptr});
  };
  run(resolved, "first");
  run(resolved, "second");
  resolved.workers = 8;
  run(resolved, "workers8");
  const std::string first = slurp(out_dir / "first.csv");
  if (first.empty() || first != slurp(out_dir / "second.csv")) failed.push_back("byte-identical CSV");
  if (first != slurp(out_dir / "workers8.csv") ||
      slurp(out_dir / "first.bin") != slurp(out_dir / "workers8.bin")) {
    failed.push_back("workers 1 vs 8");
  }

  std::string detail = "argmax invariance (p_hat, pi), simplex over 10^4 updates, CSV determinism, workers 1 vs 8";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " [" + f + "]";
  }
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out_dir = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::create_directories(out_dir);
  RunCache cache;

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient oracle", gradient_oracle},
      {2, "reduction equivalences", reductions},
      {3, "debiasing gain", [&] { return debias_gain(cache); }},
      {4, "pseudo-label rebalancing", [&] { return rebalancing(cache); }},
      {5, "label-fraction trend", [&] { return fraction_trend(cache, out_dir); }},
      {6, "augmentation ablation", [&] { return augmentation_ablation(cache, out_dir); }},
      {7, "exact invariants", [&] { return invariants(out_dir); }},
  };

  int failures = 0;
  std::vector<std::string> lines;
  for (const Criterion& c : criteria) {
    std::cerr << "criterion " << c.id << " (" << c.name << ") ...\n";
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    const std::string line =
        std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + " " + c.name + ": " + o.detail;
    std::cout << line << '\n' << std::flush;
    lines.push_back(line);
  }
  std::cout << "summary: " << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " criteria passed\n";
  std::ofstream(out_dir / "acceptance.txt") << [&] {
    std::string s;
    for (const auto& l : lines) s += l + '\n';
    return s;
  }();
  return failures == 0 ? 0 : 1;
}
