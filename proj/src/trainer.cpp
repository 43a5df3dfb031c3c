#include "oscbp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <unordered_map>

#include "oscbp/error.hpp"
#include "oscbp/seed.hpp"
#include "oscbp/text.hpp"

namespace oscbp::train {

Optimizer parse_optimizer(std::string_view s) {
  if (s == "gd" || s == "sgd") return Optimizer::GradientDescent;
  if (s == "adam") return Optimizer::Adam;
  throw Error(ErrorKind::InvalidConfiguration, "unknown optimizer '" + std::string(s) + "'");
}

std::string to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "gd"; }

void validate(const TrainingConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvalidConfiguration, what);
  };
  require(c.initial_lr > 0.0, "initial_lr must be positive");
  require(c.lr_factor > 0.0 && c.lr_factor < 1.0, "lr_factor must be in (0, 1)");
  require(c.lr_patience >= 1, "lr_patience must be >= 1");
  require(c.early_stop_patience >= 1, "early_stop_patience must be >= 1");
  require(c.l1_lambda >= 0.0, "l1_lambda must be non-negative");
  require(c.max_epochs >= 1, "max_epochs must be positive");
  require(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  require(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  require(c.adam_epsilon > 0.0, "adam_epsilon must be positive");
}

// ---------------------------------------------------------------------------
// Folds

std::vector<FoldPlan> loso_folds(std::span<const RecordKey> records, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_subject;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.record_id).second) {
      throw Error(ErrorKind::InvalidConfiguration, "duplicate record id '" + r.record_id + "'");
    }
    by_subject[r.subject_id].push_back(r.record_id);
  }
  if (by_subject.size() < 3) {
    throw Error(ErrorKind::InsufficientData, "LOSO needs at least 3 subjects, got " +
                                                 std::to_string(by_subject.size()));
  }

  std::vector<FoldPlan> folds;
  std::size_t fold_id = 0;
  for (const auto& [test_subject, test_records] : by_subject) {
    FoldPlan plan;
    plan.fold_id = fold_id;
    plan.test_subject = test_subject;
    plan.test_records = test_records;
    std::mt19937_64 rng(derive_seed(seed, {kStreamFolds, fold_id}));
    for (const auto& [subject, recs] : by_subject) {
      if (subject == test_subject) continue;
      std::size_t held_out = recs.size();
      if (recs.size() >= 2) held_out = static_cast<std::size_t>(rng() % recs.size());
      for (std::size_t i = 0; i < recs.size(); ++i) {
        (i == held_out ? plan.validation_records : plan.train_records).push_back(recs[i]);
      }
    }
    folds.push_back(std::move(plan));
    ++fold_id;
  }
  return folds;
}

std::vector<FoldPlan> loso_folds(const Dataset& data, std::uint64_t seed) {
  std::vector<RecordKey> keys;
  keys.reserve(data.size());
  for (const auto& s : data) keys.push_back({s.subject_id, s.record_id});
  return loso_folds(keys, seed);
}

// ---------------------------------------------------------------------------
// Epoch loop

namespace {

class Stepper {
 public:
  Stepper(const TrainingConfig& c, const std::vector<ad::Var>& params) : c_(c) {
    if (c.optimizer == Optimizer::Adam) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
  }

  void step(std::vector<ad::Var>& params, double lr) {
    ++t_;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& w = params[k].mutable_value().values;
      const auto g = params[k].grad();
      if (c_.optimizer == Optimizer::GradientDescent) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        continue;
      }
      const double b1 = c_.adam_beta1, b2 = c_.adam_beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + c_.adam_epsilon);
      }
    }
  }

 private:
  const TrainingConfig& c_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::vector<std::vector<double>> snapshot(const std::vector<ad::Var>& params) {
  std::vector<std::vector<double>> s;
  s.reserve(params.size());
  for (const auto& p : params) s.emplace_back(p.data().begin(), p.data().end());
  return s;
}

}  // namespace

TrainingHistory optimize(Objective& objective, const TrainingConfig& config) {
  validate(config);
  std::vector<ad::Var> params = objective.parameters();
  Stepper stepper(config, params);

  TrainingHistory history;
  double best = std::numeric_limits<double>::infinity();
  auto best_params = snapshot(params);
  std::size_t since_best = 0;
  std::size_t since_reduction = 0;
  std::size_t reductions = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    // Dividing by the inverse factor keeps 0.001 x 0.1 at exactly 0.0001.
    const double lr =
        config.initial_lr / std::pow(1.0 / config.lr_factor, static_cast<double>(reductions));
    for (auto& p : params) p.zero_grad();
    const ad::Var loss = objective.train_loss();
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw Error(ErrorKind::Divergence, "non-finite training loss at epoch " + std::to_string(epoch));
    }
    ad::backward(loss);
    stepper.step(params, lr);

    const double val = objective.validation_error();
    history.epochs.push_back({epoch, loss_value, val, lr});
    history.stopped_epoch = epoch;

    if (val < best) {
      best = val;
      history.best_epoch = epoch;
      best_params = snapshot(params);
      since_best = 0;
      since_reduction = 0;
      continue;
    }
    ++since_best;
    ++since_reduction;
    if (since_best >= config.early_stop_patience) break;
    if (since_reduction >= config.lr_patience) {
      ++reductions;
      since_reduction = 0;
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k].mutable_value().values = best_params[k];
  }
  return history;
}

// ---------------------------------------------------------------------------
// Model training

namespace {

ad::Var grid_var(const Sample& s, std::size_t g) {
  if (s.grid.size() != g * g) {
    throw Error(ErrorKind::Shape, "record " + s.record_id + " grid has " +
                                      std::to_string(s.grid.size()) + " values, model expects " +
                                      std::to_string(g * g));
  }
  return ad::constant(ad::Tensor({g, g}, s.grid));
}

ad::Var batch_predictions(const model::BpRegressor& m, std::span<const ad::Var> grids) {
  std::vector<ad::Var> outs;
  outs.reserve(grids.size());
  for (const auto& g : grids) outs.push_back(m.forward(g));
  return ad::concat(outs);
}

ad::Var penalized(const ad::Var& data_loss, const model::BpRegressor& m, double l1_lambda) {
  if (l1_lambda == 0.0) return data_loss;
  const auto w = m.weights();
  return ad::add(data_loss, ad::scale(ad::l1_penalty(w), l1_lambda));
}

class ModelObjective final : public Objective {
 public:
  ModelObjective(model::BpRegressor& model, std::vector<ad::Var> train_grids,
                 std::vector<double> train_targets, std::vector<ad::Var> val_grids,
                 std::vector<double> val_targets, double l1_lambda, double center, double spread)
      : model_(model),
        train_grids_(std::move(train_grids)),
        val_grids_(std::move(val_grids)),
        val_targets_(std::move(val_targets)),
        l1_lambda_(l1_lambda),
        center_(center),
        spread_(spread) {
    for (double& y : train_targets) y = (y - center_) / spread_;
    const std::size_t n = train_targets.size();
    train_targets_ = ad::constant(ad::Tensor({n}, std::move(train_targets)));
  }

  std::vector<ad::Var> parameters() override { return model_.parameters(); }

  ad::Var train_loss() override {
    const ad::Var pred = batch_predictions(model_, train_grids_);
    return penalized(ad::mse(pred, train_targets_), model_, l1_lambda_);
  }

  // Validation MSE in mmHg^2. With no validation records the training MSE is monitored.
  double validation_error() override {
    if (val_grids_.empty()) {
      const ad::Var pred = batch_predictions(model_, train_grids_);
      return ad::mse(pred, train_targets_).item() * spread_ * spread_;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < val_grids_.size(); ++i) {
      const double p = model_.forward(val_grids_[i]).item() * spread_ + center_;
      s += (p - val_targets_[i]) * (p - val_targets_[i]);
    }
    return s / static_cast<double>(val_grids_.size());
  }

 private:
  model::BpRegressor& model_;
  std::vector<ad::Var> train_grids_;
  ad::Var train_targets_;
  std::vector<ad::Var> val_grids_;
  std::vector<double> val_targets_;
  double l1_lambda_;
  double center_;
  double spread_;
};

}  // namespace

ad::Var total_loss(const model::BpRegressor& m, std::span<const Sample* const> batch,
                   model::Target target, double l1_lambda) {
  if (batch.empty()) throw Error(ErrorKind::EmptyBatch, "total_loss over an empty batch");
  std::vector<ad::Var> grids;
  std::vector<double> targets;
  for (const Sample* s : batch) {
    grids.push_back(grid_var(*s, m.config().grid_size));
    targets.push_back(s->label(target));
  }
  const std::size_t n = targets.size();
  const ad::Var pred = batch_predictions(m, grids);
  return penalized(ad::mse(pred, ad::constant(ad::Tensor({n}, std::move(targets)))), m, l1_lambda);
}

FitResult fit(const model::BpRegressor& initial, const FoldPlan& fold, const Dataset& data,
              const TrainingConfig& config) {
  validate(config);
  std::unordered_map<std::string, const Sample*> index;
  for (const auto& s : data) index[s.record_id] = &s;
  auto lookup = [&](const std::string& id) {
    const auto it = index.find(id);
    if (it == index.end()) {
      throw Error(ErrorKind::InvalidConfiguration,
                  "fold " + std::to_string(fold.fold_id) + " names unknown record '" + id + "'");
    }
    if (it->second->subject_id == fold.test_subject) {
      throw Error(ErrorKind::InvalidConfiguration,
                  "record '" + id + "' of the test subject appears outside the test set");
    }
    return it->second;
  };
  if (fold.train_records.empty()) {
    throw Error(ErrorKind::EmptyBatch, "fold " + std::to_string(fold.fold_id) + " has no training records");
  }

  const std::size_t g = initial.config().grid_size;
  std::vector<ad::Var> train_grids, val_grids;
  std::vector<double> train_y, val_y;
  for (const auto& id : fold.train_records) {
    const Sample* s = lookup(id);
    train_grids.push_back(grid_var(*s, g));
    train_y.push_back(s->label(config.target));
  }
  for (const auto& id : fold.validation_records) {
    const Sample* s = lookup(id);
    val_grids.push_back(grid_var(*s, g));
    val_y.push_back(s->label(config.target));
  }

  double center = 0.0, spread = 1.0;
  if (config.standardize_targets) {
    const double n = static_cast<double>(train_y.size());
    for (double y : train_y) center += y / n;
    double ss = 0.0;
    for (double y : train_y) ss += (y - center) * (y - center);
    spread = std::sqrt(ss / n);
    if (!(spread > 0.0)) spread = 1.0;
  }

  FitResult result{initial.clone(), {}};
  ModelObjective objective(result.model, std::move(train_grids), std::move(train_y),
                           std::move(val_grids), std::move(val_y), config.l1_lambda, center,
                           spread);
  result.history = optimize(objective, config);

  if (config.standardize_targets) {
    // prediction = spread * raw + center, folded into the linear output layer.
    auto out = result.model.output_layer();
    for (double& w : out.weights.mutable_value().values) w *= spread;
    for (double& b : out.bias.mutable_value().values) b = b * spread + center;
  }
  return result;
}

std::vector<PredictionRow> run_experiment(const Dataset& data,
                                          const model::ModelConfig& model_config,
                                          const TrainingConfig& config, std::size_t n_runs,
                                          const std::function<void(const FoldOutcome&)>& on_fold) {
  validate(config);
  model::validate(model_config);
  if (n_runs == 0) throw Error(ErrorKind::InvalidConfiguration, "n_runs must be positive");

  std::unordered_map<std::string, const Sample*> index;
  for (const auto& s : data) index[s.record_id] = &s;

  std::vector<PredictionRow> rows;
  for (std::size_t run = 0; run < n_runs; ++run) {
    const auto folds = loso_folds(data, derive_seed(config.seed, {kStreamFolds, run}));
    for (const auto& fold : folds) {
      const auto init_seed = derive_seed(config.seed, {kStreamInit, run, fold.fold_id});
      const auto model = model::BpRegressor::init(model_config, init_seed);
      const FitResult fitted = fit(model, fold, data, config);
      for (const auto& id : fold.test_records) {
        const Sample& s = *index.at(id);
        rows.push_back({run, fold.fold_id, s.subject_id, s.record_id, config.target,
                        fitted.model.predict(s.grid), s.label(config.target)});
      }
      if (on_fold) on_fold({run, fold, fitted.model, fitted.history});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

void write_predictions_csv(std::ostream& out, std::span<const PredictionRow> rows) {
  out << "run,fold,subject_id,record_id,target,prediction_mmHg,reference_mmHg\n";
  for (const auto& r : rows) {
    out << r.run << ',' << r.fold << ',' << r.subject_id << ',' << r.record_id << ','
        << model::to_string(r.target) << ',' << text::format_double(r.prediction) << ','
        << text::format_double(r.reference) << '\n';
  }
}

std::vector<PredictionRow> read_predictions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "prediction table: missing header");
  if (text::split(line) != std::vector<std::string>{"run", "fold", "subject_id", "record_id",
                                                    "target", "prediction_mmHg", "reference_mmHg"}) {
    throw Error(ErrorKind::Parse, "prediction table: unexpected header '" + line + "'");
  }
  std::vector<PredictionRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line);
    const auto where = "prediction table line " + std::to_string(line_no);
    if (f.size() != 7) throw Error(ErrorKind::Parse, where + ": expected 7 fields");
    const auto run = text::parse_int(f[0]);
    const auto fold = text::parse_int(f[1]);
    const auto pred = text::parse_double(f[5]);
    const auto ref = text::parse_double(f[6]);
    if (!run || !fold || *run < 0 || *fold < 0 || !pred || !ref) {
      throw Error(ErrorKind::Parse, where + ": malformed numeric field");
    }
    PredictionRow r;
    r.run = static_cast<std::size_t>(*run);
    r.fold = static_cast<std::size_t>(*fold);
    r.subject_id = f[2];
    r.record_id = f[3];
    try {
      r.target = model::parse_target(f[4]);
    } catch (const Error&) {
      throw Error(ErrorKind::Parse, where + ": unknown target '" + f[4] + "'");
    }
    r.prediction = *pred;
    r.reference = *ref;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_history_csv(std::ostream& out, const TrainingHistory& history) {
  out << "epoch,train_loss,val_error,lr\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << text::format_double(e.train_loss) << ','
        << text::format_double(e.val_error) << ',' << text::format_double(e.lr) << '\n';
  }
}

}  // namespace oscbp::train
