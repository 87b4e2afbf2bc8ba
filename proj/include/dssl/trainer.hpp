#ifndef DSSL_TRAINER_HPP_
#define DSSL_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dssl/augment.hpp"
#include "dssl/datagen.hpp"
#include "dssl/debias.hpp"
#include "dssl/mlp.hpp"

namespace dssl {

enum class PriorSource { kRaw, kDebiased };
enum class MarginView { kStrong, kWeak };

struct DataConfig {
  LongTailProfile profile;
  ImageSize image_size;
  int test_per_class = 200;
  /// When non-empty, train/test sets are read from this manifest instead of
  /// being generated.
  std::string manifest;
};

struct SplitConfig {
  double label_fraction = 0.1;
  SplitMode mode = SplitMode::kStratified;
};

struct FeatureToggles {
  bool debias_on = true;
  bool margin_on = true;
  bool logit_adjust_on = true;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  DataConfig data;
  SplitConfig split;
  AugmentSpec weak = AugmentSpec::weak();
  AugmentSpec strong = AugmentSpec::strong();
  std::vector<int> hidden_layers{256, 128};
  SgdConfig sgd;
  DebiasConfig debias;
  double lambda_u = 1.0;
  FeatureToggles toggles;
  PriorSource prior_source = PriorSource::kRaw;
  MarginView margin_view = MarginView::kStrong;
  int workers = 1;
  std::string output_dir = "out";
  std::string run_id = "run";
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> sweep_fractions{0.05, 0.1, 0.2, 0.3};

  /// Throws ConfigError naming the offending dotted field.
  void validate() const;
  std::vector<int> layer_sizes() const;
  std::filesystem::path run_dir() const { return std::filesystem::path(output_dir) / run_id; }
};

/// Train / test sets plus the labeled split of the training set.
struct ExperimentData {
  Dataset train;
  Dataset test;
  Split split;
  std::vector<int> labeled_counts;
};

/// Generates (or loads, when data.manifest is set) the datasets and splits
/// the training set with master_seed.
ExperimentData prepare_data(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// One training step
// ---------------------------------------------------------------------------

/// Augmented inputs for one step. Each sample's randomness comes from its
/// own stream path, so the result does not depend on `workers`.
struct StepViews {
  MatrixXd labeled_weak;
  std::vector<int> labeled_targets;
  MatrixXd unlabeled_weak;
  MatrixXd unlabeled_strong;
};

/// Streams: step_stream.child({0, slot}) for labeled samples,
/// child({1, slot}) for the weak unlabeled view and child({2, slot}) for the
/// strong unlabeled view.
StepViews make_step_views(const Dataset& train, const std::vector<Index>& labeled,
                          const std::vector<Index>& unlabeled, const AugmentSpec& weak,
                          const AugmentSpec& strong, const RandomStream& step_stream,
                          int workers);

struct StepResult {
  double total = 0.0;
  double loss_s = 0.0;
  double loss_u = 0.0;
  PseudoLabelBatch pseudo;
};

/// Pseudo-label the weak unlabeled views, update the prior, build margins,
/// take the combined loss and one SGD step.
StepResult train_step(Mlp<double>& model, Sgd<double>& optimizer, const StepViews& views,
                      ClassPrior& prior, const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double instance_top1 = 0.0;
  /// Mean of per-class recalls over classes present in the test set.
  double classwise_top1 = 0.0;
  std::vector<double> per_class_recall;
};

EvalResult score_predictions(std::span<const int> labels, std::span<const int> predictions,
                             int class_count);

EvalResult evaluate(const Mlp<double>& model, const Dataset& test, const VectorXd& pi,
                    bool logit_adjust_on, double tau_la);

// ---------------------------------------------------------------------------
// Full runs
// ---------------------------------------------------------------------------

struct MetricsRow {
  int epoch = 0;
  double loss_s = 0.0;
  double loss_u = 0.0;
  double accepted_fraction = 0.0;
  double instance_top1 = 0.0;
  double classwise_top1 = 0.0;
  double kl_pseudo = 0.0;
  std::vector<long> pl_counts;
  std::vector<double> p_hat;
};

std::string metrics_csv_header(int class_count);
std::string to_csv_line(const MetricsRow& row);

struct FitOptions {
  /// Written incrementally, one line per epoch, when set.
  std::optional<std::filesystem::path> metrics_csv;
  std::optional<std::filesystem::path> checkpoint;
  /// Progress lines go here when set.
  std::ostream* log = nullptr;
};

struct FitResult {
  std::vector<MetricsRow> rows;
  Mlp<double> model;
  ClassPrior prior{2, 0.0};
  EvalResult final_eval;
  /// Best epoch by instance accuracy (0 when no epochs ran).
  int best_epoch = 0;
  EvalResult best_eval;
};

FitResult fit(const ExperimentConfig& config, const ExperimentData& data,
              const FitOptions& options = {});
FitResult fit(const ExperimentConfig& config, const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Harnesses
// ---------------------------------------------------------------------------

/// One ablation cell. debias_on switches debiasing, margins and logit
/// adjustment together; off is plain FixMatch.
struct AblationCell {
  bool weak_on = true;
  bool rotation_on = true;
  bool scaling_on = true;
  bool debias_on = true;

  std::string name() const;
  ExperimentConfig apply(const ExperimentConfig& base) const;
};

/// {weak none, full} x {crop+flip, +rotation, +rotation+scaling} x {debias on, off}.
std::vector<AblationCell> default_ablation_grid();

struct SeedSummary {
  std::vector<double> instance_top1;
  std::vector<double> classwise_top1;
  std::vector<double> kl_pseudo;
  double mean_instance() const;
  double std_instance() const;
  double mean_classwise() const;
  double std_classwise() const;
  double mean_kl() const;
};

/// Final-epoch metrics of `config` over config.seeds.
SeedSummary run_seeds(const ExperimentConfig& config, std::ostream* log = nullptr);

struct AblationRow {
  AblationCell cell;
  SeedSummary summary;
};

std::vector<AblationRow> run_ablation(const ExperimentConfig& base,
                                      const std::vector<AblationCell>& grid,
                                      std::ostream* log = nullptr);

struct SweepRow {
  double label_fraction = 0.0;
  SeedSummary summary;
};

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::vector<double>& fractions,
                                std::ostream* log = nullptr);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

std::string to_string(PriorSource s);
std::string to_string(MarginView v);
PriorSource prior_source_from_string(const std::string& s);
MarginView margin_view_from_string(const std::string& s);

}  // namespace dssl

#endif  // DSSL_TRAINER_HPP_
