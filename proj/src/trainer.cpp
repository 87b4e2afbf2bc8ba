#include "dssl/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

namespace dssl {

namespace {

// Stream roots under master_seed.
constexpr std::uint64_t kShuffleRoot = 0x21;
constexpr std::uint64_t kUnlabeledDrawRoot = 0x22;
constexpr std::uint64_t kAugmentRoot = 0x23;

constexpr Index kEvalChunk = 512;

template <typename Fn>
void parallel_for(Index n, int workers, Fn&& fn) {
  const Index threads = std::clamp<Index>(workers, 1, std::max<Index>(n, 1));
  if (threads <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (Index t = 0; t < threads; ++t) {
    pool.emplace_back([&fn, t, n, threads] {
      for (Index i = t; i < n; i += threads) fn(i);
    });
  }
}

void fail(const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); }

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (data.profile.class_count < 2) fail("data.class_count", "must be >= 2");
  if (data.profile.class_count > 256) fail("data.class_count", "must be <= 256");
  if (data.profile.head_count < data.profile.class_count) {
    fail("data.head_count", "must be >= data.class_count");
  }
  if (!(data.profile.imbalance_ratio >= 1.0)) fail("data.imbalance_ratio", "must be >= 1");
  try {
    class_counts(data.profile);
  } catch (const ArgumentError& e) {
    fail("data.imbalance_ratio", e.what());
  }
  if (data.image_size.height < 8) fail("data.height", "must be >= 8");
  if (data.image_size.width < 8) fail("data.width", "must be >= 8");
  if (data.test_per_class < 1) fail("data.test_per_class", "must be >= 1");
  if (!(split.label_fraction > 0.0 && split.label_fraction <= 1.0)) {
    fail("split.label_fraction", "must be in (0, 1]");
  }
  auto check_aug = [](const AugmentSpec& spec, const std::string& name) {
    try {
      spec.validate();
    } catch (const ArgumentError& e) {
      fail("augment." + name, e.what());
    }
  };
  check_aug(weak, "weak");
  check_aug(strong, "strong");
  for (int h : hidden_layers) {
    if (h < 1) fail("model.hidden_layers", "sizes must be positive");
  }
  sgd.validate();
  debias.validate();
  if (!(lambda_u >= 0.0)) fail("debias.lambda_u", "must be >= 0");
  if (workers < 1) fail("workers", "must be >= 1");
  if (run_id.empty()) fail("run_id", "must be non-empty");
  if (seeds.empty()) fail("seeds", "must be non-empty");
  for (double f : sweep_fractions) {
    if (!(f > 0.0 && f <= 1.0)) fail("sweep_fractions", "entries must be in (0, 1]");
  }
}

std::vector<int> ExperimentConfig::layer_sizes() const {
  std::vector<int> sizes{data.image_size.height * data.image_size.width};
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(data.profile.class_count);
  return sizes;
}

ExperimentData prepare_data(const ExperimentConfig& config) {
  ExperimentData d;
  if (config.data.manifest.empty()) {
    d.train = generate(config.data.profile, config.data.image_size, config.master_seed);
    d.test = generate_balanced(config.data.profile.class_count, config.data.test_per_class,
                               config.data.image_size, config.master_seed);
  } else {
    const DatasetManifest m = read_manifest(config.data.manifest);
    for (const auto& p : {m.train_images, labels_path_for(m.train_images), m.test_images,
                          labels_path_for(m.test_images)}) {
      if (!std::filesystem::exists(p)) {
        throw ConfigError("dataset file not found: '" + p.string() + "'");
      }
    }
    d.train = read_idx(m.train_images, m.profile.class_count);
    d.test = read_idx(m.test_images, m.profile.class_count);
  }
  d.split = stratified_split(d.train, config.split.label_fraction, config.master_seed,
                             config.split.mode);
  d.labeled_counts = subset_counts(d.train, d.split.labeled);
  return d;
}

// ---------------------------------------------------------------------------
// Step
// ---------------------------------------------------------------------------

StepViews make_step_views(const Dataset& train, const std::vector<Index>& labeled,
                          const std::vector<Index>& unlabeled, const AugmentSpec& weak,
                          const AugmentSpec& strong, const RandomStream& step_stream,
                          int workers) {
  StepViews v;
  const Index pixels = train.pixels();
  const auto nl = static_cast<Index>(labeled.size());
  const auto nu = static_cast<Index>(unlabeled.size());
  v.labeled_weak.resize(nl, pixels);
  v.unlabeled_weak.resize(nu, pixels);
  v.unlabeled_strong.resize(nu, pixels);
  v.labeled_targets.resize(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    v.labeled_targets[i] = train.labels[static_cast<std::size_t>(labeled[i])];
  }

  auto put = [&](MatrixXd& dst, Index row, const MatrixXd& img) {
    dst.row(row) = Eigen::Map<const RowVectorXd>(img.data(), img.size());
  };
  parallel_for(nl + nu, workers, [&](Index job) {
    const auto slot = static_cast<std::uint64_t>(job < nl ? job : job - nl);
    if (job < nl) {
      const MatrixXd img = train.image(labeled[static_cast<std::size_t>(job)]);
      put(v.labeled_weak, job, apply(img, weak, step_stream.child({0, slot})));
    } else {
      const Index row = job - nl;
      const MatrixXd img = train.image(unlabeled[static_cast<std::size_t>(row)]);
      put(v.unlabeled_weak, row, apply(img, weak, step_stream.child({1, slot})));
      put(v.unlabeled_strong, row, apply(img, strong, step_stream.child({2, slot})));
    }
  });
  return v;
}

StepResult train_step(Mlp<double>& model, Sgd<double>& optimizer, const StepViews& views,
                      ClassPrior& prior, const ExperimentConfig& config) {
  StepResult r;
  const double lambda_debias = config.toggles.debias_on ? config.debias.lambda_debias : 0.0;

  const MatrixXd weak_logits = model.forward(views.unlabeled_weak);
  r.pseudo = select_pseudo_labels(weak_logits, prior, lambda_debias, config.debias.tau);

  if (weak_logits.rows() > 0) {
    if (config.prior_source == PriorSource::kRaw) {
      prior.update(softmax(weak_logits));
    } else {
      prior.update(softmax(r.pseudo.debiased_logits));
    }
  }

  const VectorXd deltas = config.toggles.margin_on
                              ? margin_deltas(prior, config.debias.lambda_margin)
                              : VectorXd::Zero(model.class_count());
  const MatrixXd& unlabeled_input =
      config.margin_view == MarginView::kStrong ? views.unlabeled_strong : views.unlabeled_weak;

  const LossAndGrad<double> lg =
      loss_and_grad(model, views.labeled_weak, views.labeled_targets, unlabeled_input,
                    r.pseudo.pseudo_label, r.pseudo.accepted, config.lambda_u, deltas);
  optimizer.step(model, lg.grads);
  r.total = lg.total;
  r.loss_s = lg.loss_s;
  r.loss_u = lg.loss_u;
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalResult score_predictions(std::span<const int> labels, std::span<const int> predictions,
                             int class_count) {
  if (labels.empty()) throw ArgumentError("evaluate: empty test set");
  if (labels.size() != predictions.size()) throw ShapeError("evaluate: prediction count mismatch");
  std::vector<long> total(static_cast<std::size_t>(class_count), 0);
  std::vector<long> correct(static_cast<std::size_t>(class_count), 0);
  long hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    ++total[y];
    if (predictions[i] == labels[i]) {
      ++correct[y];
      ++hits;
    }
  }
  EvalResult r;
  r.instance_top1 = static_cast<double>(hits) / static_cast<double>(labels.size());
  r.per_class_recall.assign(static_cast<std::size_t>(class_count), 0.0);
  double recall_sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < total.size(); ++c) {
    if (total[c] == 0) continue;
    r.per_class_recall[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    recall_sum += r.per_class_recall[c];
    ++present;
  }
  r.classwise_top1 = recall_sum / present;
  return r;
}

EvalResult evaluate(const Mlp<double>& model, const Dataset& test, const VectorXd& pi,
                    bool logit_adjust_on, double tau_la) {
  if (test.size() == 0) throw ArgumentError("evaluate: empty test set");
  std::vector<int> predictions(static_cast<std::size_t>(test.size()));
  for (Index start = 0; start < test.size(); start += kEvalChunk) {
    const Index rows = std::min(kEvalChunk, test.size() - start);
    MatrixXd logits = model.forward(test.images.middleRows(start, rows));
    if (logit_adjust_on) logits = adjust_logits_eval(logits, pi, tau_la);
    for (Index r = 0; r < rows; ++r) {
      predictions[static_cast<std::size_t>(start + r)] = static_cast<int>(argmax(logits.row(r)));
    }
  }
  return score_predictions(test.labels, predictions, test.class_count);
}

// ---------------------------------------------------------------------------
// Fit
// ---------------------------------------------------------------------------

std::string metrics_csv_header(int class_count) {
  std::string h = "epoch,loss_s,loss_u,accepted_fraction,instance_top1,classwise_top1,kl_pseudo";
  for (int c = 0; c < class_count; ++c) h += ",pl_count_" + std::to_string(c);
  for (int c = 0; c < class_count; ++c) h += ",p_hat_" + std::to_string(c);
  return h;
}

std::string to_csv_line(const MetricsRow& row) {
  std::string s = std::to_string(row.epoch);
  for (double v : {row.loss_s, row.loss_u, row.accepted_fraction, row.instance_top1,
                   row.classwise_top1, row.kl_pseudo}) {
    s += ',' + format_g(v);
  }
  for (long n : row.pl_counts) s += ',' + std::to_string(n);
  for (double p : row.p_hat) s += ',' + format_g(p);
  return s;
}

FitResult fit(const ExperimentConfig& config, const ExperimentData& data,
              const FitOptions& options) {
  config.validate();
  const Dataset& train = data.train;
  const int classes = train.class_count;
  if (train.pixels() != config.layer_sizes().front() || classes != config.layer_sizes().back()) {
    throw ConfigError("data: dataset shape does not match the configured image size / class count");
  }

  FitResult result;
  result.model = Mlp<double>::glorot(config.layer_sizes(), config.master_seed);
  result.prior = ClassPrior(data.labeled_counts, config.debias.momentum);
  Sgd<double> optimizer(config.sgd);

  std::ofstream csv;
  if (options.metrics_csv) {
    csv.open(*options.metrics_csv, std::ios::trunc);
    if (!csv) throw Error("cannot open '" + options.metrics_csv->string() + "' for writing");
    csv << metrics_csv_header(classes) << '\n' << std::flush;
  }

  const RandomStream root(config.master_seed);
  std::vector<Index> order = data.split.labeled;
  const auto& pool = data.split.unlabeled;
  const auto batch = static_cast<std::size_t>(config.sgd.batch_size_labeled);

  for (int epoch = 1; epoch <= config.sgd.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    RandomStream shuffle = root.child({kShuffleRoot, e});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.below(i))]);
    }

    double loss_s = 0.0;
    double loss_u = 0.0;
    long seen = 0;
    long accepted = 0;
    std::vector<long> pl_counts(static_cast<std::size_t>(classes), 0);
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++steps) {
      const std::vector<Index> labeled(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(start + batch, order.size())));
      std::vector<Index> unlabeled;
      if (!pool.empty()) {
        RandomStream draw = root.child({kUnlabeledDrawRoot, e, steps});
        unlabeled.resize(labeled.size() * static_cast<std::size_t>(config.sgd.unlabeled_ratio));
        for (auto& idx : unlabeled) idx = pool[static_cast<std::size_t>(draw.below(pool.size()))];
      }
      const StepViews views =
          make_step_views(train, labeled, unlabeled, config.weak, config.strong,
                          root.child({kAugmentRoot, e, steps}), config.workers);
      StepResult step;
      try {
        step = train_step(result.model, optimizer, views, result.prior, config);
      } catch (const NumericError& err) {
        throw NumericError("epoch " + std::to_string(epoch) + " step " + std::to_string(steps) +
                           ": " + err.what());
      }
      loss_s += step.loss_s;
      loss_u += step.loss_u;
      seen += static_cast<long>(step.pseudo.size());
      for (Index j = 0; j < step.pseudo.size(); ++j) {
        if (!step.pseudo.accepted[static_cast<std::size_t>(j)]) continue;
        ++accepted;
        ++pl_counts[static_cast<std::size_t>(step.pseudo.pseudo_label[static_cast<std::size_t>(j)])];
      }
    }

    const EvalResult ev = evaluate(result.model, data.test, result.prior.pi(),
                                   config.toggles.logit_adjust_on, config.debias.tau_la);
    MetricsRow row;
    row.epoch = epoch;
    row.loss_s = steps ? loss_s / static_cast<double>(steps) : 0.0;
    row.loss_u = steps ? loss_u / static_cast<double>(steps) : 0.0;
    row.accepted_fraction = seen ? static_cast<double>(accepted) / static_cast<double>(seen) : 0.0;
    row.instance_top1 = ev.instance_top1;
    row.classwise_top1 = ev.classwise_top1;
    row.kl_pseudo = kl_to_uniform(pl_counts);
    row.pl_counts = std::move(pl_counts);
    row.p_hat.assign(result.prior.p_hat().data(), result.prior.p_hat().data() + classes);
    if (csv.is_open()) csv << to_csv_line(row) << '\n' << std::flush;
    if (options.log) {
      *options.log << "epoch " << epoch << "  loss_s " << format_g(row.loss_s) << "  loss_u "
                   << format_g(row.loss_u) << "  accepted " << format_g(row.accepted_fraction)
                   << "  top1 " << format_g(row.instance_top1) << "  classwise "
                   << format_g(row.classwise_top1) << "  kl " << format_g(row.kl_pseudo) << '\n';
    }
    if (result.rows.empty() || ev.instance_top1 > result.best_eval.instance_top1) {
      result.best_epoch = epoch;
      result.best_eval = ev;
    }
    result.final_eval = ev;
    result.rows.push_back(std::move(row));
  }

  if (result.rows.empty()) {
    result.final_eval = evaluate(result.model, data.test, result.prior.pi(),
                                 config.toggles.logit_adjust_on, config.debias.tau_la);
    result.best_eval = result.final_eval;
  }
  if (options.checkpoint) save_checkpoint(*options.checkpoint, result.model);
  return result;
}

FitResult fit(const ExperimentConfig& config, const FitOptions& options) {
  config.validate();
  return fit(config, prepare_data(config), options);
}

// ---------------------------------------------------------------------------
// Harnesses
// ---------------------------------------------------------------------------

std::string AblationCell::name() const {
  std::string strong = "crop+flip";
  if (rotation_on) strong += "+rot";
  if (scaling_on) strong += "+scale";
  return std::string(weak_on ? "weak=full" : "weak=none") + " strong=" + strong +
         (debias_on ? " debias=on" : " debias=off");
}

ExperimentConfig AblationCell::apply(const ExperimentConfig& base) const {
  ExperimentConfig c = base;
  if (!weak_on) c.weak.kind = AugmentKind::kNone;
  if (!rotation_on) c.strong.rotation_degrees = 0.0;
  if (!scaling_on) c.strong.scale_range = {1.0, 1.0};
  c.toggles = FeatureToggles{debias_on, debias_on, debias_on};
  return c;
}

std::vector<AblationCell> default_ablation_grid() {
  std::vector<AblationCell> grid;
  for (bool debias : {true, false}) {
    for (bool weak : {false, true}) {
      grid.push_back({weak, false, false, debias});
      grid.push_back({weak, true, false, debias});
      grid.push_back({weak, true, true, debias});
    }
  }
  return grid;
}

namespace {
double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}
}  // namespace

double SeedSummary::mean_instance() const { return mean_of(instance_top1); }
double SeedSummary::std_instance() const { return std_of(instance_top1); }
double SeedSummary::mean_classwise() const { return mean_of(classwise_top1); }
double SeedSummary::std_classwise() const { return std_of(classwise_top1); }
double SeedSummary::mean_kl() const { return mean_of(kl_pseudo); }

SeedSummary run_seeds(const ExperimentConfig& config, std::ostream* log) {
  SeedSummary s;
  for (std::uint64_t seed : config.seeds) {
    ExperimentConfig c = config;
    c.master_seed = seed;
    const FitResult r = fit(c);
    s.instance_top1.push_back(r.final_eval.instance_top1);
    s.classwise_top1.push_back(r.final_eval.classwise_top1);
    s.kl_pseudo.push_back(r.rows.empty() ? 0.0 : r.rows.back().kl_pseudo);
    if (log) {
      *log << "  seed " << seed << ": top1 " << format_g(r.final_eval.instance_top1)
           << " classwise " << format_g(r.final_eval.classwise_top1) << " kl "
           << format_g(s.kl_pseudo.back()) << '\n'
           << std::flush;
    }
  }
  return s;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base,
                                      const std::vector<AblationCell>& grid, std::ostream* log) {
  std::vector<AblationRow> rows;
  for (const AblationCell& cell : grid) {
    if (log) *log << "ablation cell: " << cell.name() << '\n';
    rows.push_back({cell, run_seeds(cell.apply(base), log)});
  }
  return rows;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::vector<double>& fractions,
                                std::ostream* log) {
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    ExperimentConfig c = base;
    c.split.label_fraction = f;
    if (log) *log << "sweep fraction " << format_g(f) << '\n';
    rows.push_back({f, run_seeds(c, log)});
  }
  return rows;
}

namespace {
std::ofstream open_table(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

void put_summary(std::ostream& out, const SeedSummary& s) {
  out << ',' << s.instance_top1.size() << ',' << format_g(s.mean_instance()) << ','
      << format_g(s.std_instance()) << ',' << format_g(s.mean_classwise()) << ','
      << format_g(s.std_classwise()) << ',' << format_g(s.mean_kl()) << '\n';
}
}  // namespace

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out = open_table(path);
  out << "weak,rotation,scaling,debias,seeds,instance_mean,instance_std,classwise_mean,"
         "classwise_std,kl_pseudo_mean\n";
  for (const auto& r : rows) {
    out << (r.cell.weak_on ? "full" : "none") << ',' << int{r.cell.rotation_on} << ','
        << int{r.cell.scaling_on} << ',' << int{r.cell.debias_on};
    put_summary(out, r.summary);
  }
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out = open_table(path);
  out << "label_fraction,seeds,instance_mean,instance_std,classwise_mean,classwise_std,"
         "kl_pseudo_mean\n";
  for (const auto& r : rows) {
    out << format_g(r.label_fraction);
    put_summary(out, r.summary);
  }
}

std::string to_string(PriorSource s) { return s == PriorSource::kRaw ? "raw" : "debiased"; }
std::string to_string(MarginView v) { return v == MarginView::kStrong ? "strong" : "weak"; }

PriorSource prior_source_from_string(const std::string& s) {
  if (s == "raw") return PriorSource::kRaw;
  if (s == "debiased") return PriorSource::kDebiased;
  throw ArgumentError("unknown prior source '" + s + "' (expected raw|debiased)");
}

MarginView margin_view_from_string(const std::string& s) {
  if (s == "strong") return MarginView::kStrong;
  if (s == "weak") return MarginView::kWeak;
  throw ArgumentError("unknown margin view '" + s + "' (expected strong|weak)");
}

}  // namespace dssl
