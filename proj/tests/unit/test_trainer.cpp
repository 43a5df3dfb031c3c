#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "oscbp/error.hpp"
#include "oscbp/trainer.hpp"

using namespace oscbp;
using namespace oscbp::train;
using model::BpRegressor;
using model::ModelConfig;
using model::Target;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.grid_size = 9;
  c.n_kernels = 2;
  c.kernel_width = 3;
  c.lstm_layers = 1;
  c.lstm_hidden = 2;
  c.dense_widths = {4};
  return c;
}

Dataset tiny_dataset(std::size_t subjects, std::size_t per_subject) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  Dataset d;
  for (std::size_t s = 0; s < subjects; ++s) {
    for (std::size_t r = 0; r < per_subject; ++r) {
      Sample x;
      x.subject_id = "S" + std::to_string(s);
      x.record_id = x.subject_id + "_R" + std::to_string(r);
      x.grid.resize(81);
      for (double& v : x.grid) v = u(rng);
      x.sbp = 110 + 20 * u(rng);
      x.dbp = 70 + 10 * u(rng);
      d.push_back(std::move(x));
    }
  }
  return d;
}

std::vector<RecordKey> keys(std::size_t subjects, std::size_t per_subject) {
  std::vector<RecordKey> k;
  for (std::size_t s = 0; s < subjects; ++s) {
    for (std::size_t r = 0; r < per_subject; ++r) {
      k.push_back({"S" + std::to_string(s), "S" + std::to_string(s) + "_R" + std::to_string(r)});
    }
  }
  return k;
}

// Validation error follows a scripted sequence; training loss is a fixed quadratic.
class Scripted : public Objective {
 public:
  explicit Scripted(std::vector<double> val) : val_(std::move(val)) {
    w_ = ad::parameter(ad::Tensor({1}, {1.0}));
  }
  std::vector<ad::Var> parameters() override { return {w_}; }
  ad::Var train_loss() override { return ad::mul(w_, w_); }
  double validation_error() override {
    trace_.push_back(w_.data()[0]);
    return val_[std::min(calls_++, val_.size() - 1)];
  }
  const std::vector<double>& trace() const { return trace_; }
  ad::Var w_;

 private:
  std::vector<double> val_;
  std::vector<double> trace_;
  std::size_t calls_ = 0;
};

}  // namespace

TEST_CASE("loso_folds partition the dataset") {
  const auto k = keys(10, 3);
  const auto folds = loso_folds(k, 42);
  REQUIRE(folds.size() == 10);
  std::multiset<std::string> tested;
  for (const auto& f : folds) {
    tested.insert(f.test_records.begin(), f.test_records.end());
    std::set<std::string> train(f.train_records.begin(), f.train_records.end());
    std::set<std::string> val(f.validation_records.begin(), f.validation_records.end());
    CHECK(f.test_records.size() == 3);
    CHECK(val.size() == 9);
    CHECK(train.size() == 18);
    for (const auto& r : f.test_records) {
      CHECK(r.rfind(f.test_subject + "_", 0) == 0);
      CHECK(train.count(r) == 0);
      CHECK(val.count(r) == 0);
    }
    for (const auto& r : val) CHECK(train.count(r) == 0);
    for (const auto& r : train) CHECK(r.rfind(f.test_subject + "_", 0) != 0);
  }
  CHECK(tested.size() == 30);
  CHECK(std::set<std::string>(tested.begin(), tested.end()).size() == 30);

  const auto again = loso_folds(k, 42);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    CHECK(again[i].validation_records == folds[i].validation_records);
  }
}

TEST_CASE("single-record subjects only train") {
  const auto k = keys(4, 1);
  for (const auto& f : loso_folds(k, 1)) {
    CHECK(f.validation_records.empty());
    CHECK(f.train_records.size() == 3);
  }
}

TEST_CASE("total_loss examples") {
  auto c = tiny_model();
  c.lstm_layers = 0;
  auto m = BpRegressor::zeros(c);
  auto bias = m.output_layer().bias;
  bias.mutable_value().values[0] = 100.0;

  Sample a, b;
  a.grid.assign(81, 0.5);
  b.grid.assign(81, -0.25);
  a.sbp = 100.0;
  b.sbp = 100.0;
  const std::vector<const Sample*> batch{&a, &b};
  CHECK(total_loss(m, batch, Target::SBP, 1e-4).item() == 0.0);

  a.sbp = 99.0;
  b.sbp = 101.0;
  // Dense weights stay zero, so this weight changes the penalty but not the prediction.
  m.weights().front().mutable_value().values[0] = 10.0;
  CHECK(total_loss(m, batch, Target::SBP, 1e-4).item() == doctest::Approx(1.001).epsilon(1e-12));

  const double before = total_loss(m, batch, Target::SBP, 1.0).item();
  auto pm = BpRegressor::zeros(c);
  pm.load_state(m.state());
  for (auto b2 : pm.biases()) {
    if (b2.node() == pm.output_layer().bias.node()) continue;
    for (double& v : b2.mutable_value().values) v -= 0.5;
  }
  // Zero dense weights keep hidden biases from reaching the output.
  CHECK(total_loss(pm, batch, Target::SBP, 1.0).item() == doctest::Approx(before));
  const std::vector<const Sample*> none;
  CHECK_THROWS_AS(total_loss(m, none, Target::SBP, 1e-4), Error);
}

TEST_CASE("one gradient-descent step on a quadratic") {
  TrainingConfig cfg;
  cfg.max_epochs = 1;
  cfg.initial_lr = 0.05;
  Scripted obj({1.0});
  optimize(obj, cfg);
  // d(w^2)/dw = 2w, so w1 = 1 - 0.05 * 2.
  CHECK(std::abs(obj.w_.data()[0] - 0.9) < 1e-10);
}

TEST_CASE("early stopping restores the best epoch") {
  TrainingConfig cfg;
  cfg.max_epochs = 500;
  std::vector<double> rising;
  for (int i = 0; i < 100; ++i) rising.push_back(1.0 + i);
  Scripted obj(rising);
  const auto h = optimize(obj, cfg);
  CHECK(h.best_epoch == 1);
  CHECK(h.stopped_epoch == 31);
  CHECK(obj.w_.data()[0] == obj.trace()[0]);
  CHECK(h.epochs[10].lr == 0.001);
  CHECK(h.epochs[11].lr == 0.0001);
  double prev = cfg.initial_lr;
  for (const auto& e : h.epochs) {
    CHECK(e.lr <= prev);
    const double k = std::log(cfg.initial_lr / e.lr) / std::log(10.0);
    CHECK(std::abs(k - std::round(k)) < 1e-9);
    prev = e.lr;
  }
}

TEST_CASE("restoration matches the minimum validation error") {
  TrainingConfig cfg;
  cfg.max_epochs = 20;
  Scripted obj({5, 4, 3, 3.5, 2, 2.5, 6, 7, 8, 9});
  const auto h = optimize(obj, cfg);
  CHECK(h.best_epoch == 5);
  CHECK(obj.w_.data()[0] == obj.trace()[4]);
  double mn = 1e9;
  for (const auto& e : h.epochs) mn = std::min(mn, e.val_error);
  CHECK(h.epochs[h.best_epoch - 1].val_error == mn);
}

TEST_CASE("training config validation") {
  TrainingConfig c;
  c.lr_factor = 1.5;
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.initial_lr = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
  CHECK(parse_optimizer("adam") == Optimizer::Adam);
  CHECK_THROWS_AS(parse_optimizer("sgd2"), Error);
}

TEST_CASE("run_experiment shape, determinism and seeds") {
  const auto data = tiny_dataset(3, 2);
  TrainingConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 77;
  const auto rows = run_experiment(data, tiny_model(), cfg, 2);
  CHECK(rows.size() == 2 * data.size());
  const auto again = run_experiment(data, tiny_model(), cfg, 2);
  bool differ_across_runs = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(again[i].prediction == rows[i].prediction);
    CHECK(again[i].record_id == rows[i].record_id);
  }
  for (const auto& r0 : rows) {
    for (const auto& r1 : rows) {
      if (r0.run == 0 && r1.run == 1 && r0.record_id == r1.record_id && r0.prediction != r1.prediction) {
        differ_across_runs = true;
      }
    }
  }
  CHECK(differ_across_runs);

  SUBCASE("predictions CSV round-trips") {
    std::stringstream ss;
    write_predictions_csv(ss, rows);
    const auto back = read_predictions_csv(ss);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(back[i].prediction == rows[i].prediction);
      CHECK(back[i].reference == rows[i].reference);
      CHECK(back[i].subject_id == rows[i].subject_id);
      CHECK(back[i].target == rows[i].target);
      CHECK(back[i].fold == rows[i].fold);
    }
  }
}
