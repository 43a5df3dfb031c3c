#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "oscbp/bp_model.hpp"
#include "oscbp/tensor.hpp"

namespace oscbp::train {

enum class Optimizer { GradientDescent, Adam };

Optimizer parse_optimizer(std::string_view s);
std::string to_string(Optimizer o);

struct TrainingConfig {
  double initial_lr = 0.001;
  std::size_t lr_patience = 10;
  double lr_factor = 0.1;
  std::size_t early_stop_patience = 30;
  double l1_lambda = 0.0001;
  std::size_t max_epochs = 500;
  std::uint64_t seed = 0;
  model::Target target = model::Target::SBP;
  Optimizer optimizer = Optimizer::GradientDescent;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Fit against z-scored labels, then fold the scaling back into the output layer.
  bool standardize_targets = false;
};

void validate(const TrainingConfig& config);

/// One labelled representation. grid is row-major grid_size x grid_size.
struct Sample {
  std::string subject_id;
  std::string record_id;
  std::vector<double> grid;
  double sbp = 0.0;
  double dbp = 0.0;

  double label(model::Target t) const { return t == model::Target::SBP ? sbp : dbp; }
};

using Dataset = std::vector<Sample>;

struct FoldPlan {
  std::size_t fold_id = 0;
  std::string test_subject;
  std::vector<std::string> train_records;
  std::vector<std::string> validation_records;
  std::vector<std::string> test_records;
};

struct RecordKey {
  std::string subject_id;
  std::string record_id;
};

/// One fold per subject (sorted by id). Each training subject with two or more records
/// gives one uniformly chosen record to validation; single-record subjects train only.
std::vector<FoldPlan> loso_folds(std::span<const RecordKey> records, std::uint64_t seed);
std::vector<FoldPlan> loso_folds(const Dataset& data, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_error = 0.0;
  double lr = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
};

/// What the epoch loop optimizes. train_loss() builds a fresh graph over the parameters.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::vector<ad::Var> parameters() = 0;
  virtual ad::Var train_loss() = 0;
  virtual double validation_error() = 0;
};

/// Full-batch loop: one step per epoch, validation every epoch, plateau learning-rate
/// reduction, early stopping, and restoration of the best epoch's parameters.
TrainingHistory optimize(Objective& objective, const TrainingConfig& config);

/// MSE over the batch plus l1_lambda times the L1 norm of the non-bias weights.
ad::Var total_loss(const model::BpRegressor& model, std::span<const Sample* const> batch,
                   model::Target target, double l1_lambda);

struct FitResult {
  model::BpRegressor model;
  TrainingHistory history;
};

/// Trains a deep copy of model on the fold's training records.
FitResult fit(const model::BpRegressor& model, const FoldPlan& fold, const Dataset& data,
              const TrainingConfig& config);

struct PredictionRow {
  std::size_t run = 0;
  std::size_t fold = 0;
  std::string subject_id;
  std::string record_id;
  model::Target target = model::Target::SBP;
  double prediction = 0.0;
  double reference = 0.0;
};

struct FoldOutcome {
  std::size_t run;
  const FoldPlan& fold;
  const model::BpRegressor& model;
  const TrainingHistory& history;
};

/// n_runs x LOSO. Run r, fold f initializes from derive_seed(config.seed, {init, r, f});
/// fold plans for run r come from derive_seed(config.seed, {folds, r}).
std::vector<PredictionRow> run_experiment(
    const Dataset& data, const model::ModelConfig& model_config, const TrainingConfig& config,
    std::size_t n_runs = 10, const std::function<void(const FoldOutcome&)>& on_fold = {});

/// Columns: run,fold,subject_id,record_id,target,prediction_mmHg,reference_mmHg.
void write_predictions_csv(std::ostream& out, std::span<const PredictionRow> rows);
std::vector<PredictionRow> read_predictions_csv(std::istream& in);

/// Columns: epoch,train_loss,val_error,lr.
void write_history_csv(std::ostream& out, const TrainingHistory& history);

}  // namespace oscbp::train
