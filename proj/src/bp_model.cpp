#include "oscbp/bp_model.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>

#include "oscbp/error.hpp"
#include "oscbp/text.hpp"

namespace oscbp::model {

std::string to_string(Target t) { return t == Target::SBP ? "SBP" : "DBP"; }

Target parse_target(std::string_view s) {
  if (s == "SBP" || s == "sbp") return Target::SBP;
  if (s == "DBP" || s == "dbp") return Target::DBP;
  throw Error(ErrorKind::InvalidConfiguration, "unknown target '" + std::string(s) + "'");
}

void validate(const ModelConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::InvalidConfiguration, what);
  };
  require(c.n_kernels > 0, "n_kernels must be positive");
  require(c.kernel_width > 0, "kernel_width must be positive");
  require(c.grid_size > 0, "grid_size must be positive");
  require(c.kernel_width <= c.grid_size, "kernel_width must not exceed grid_size");
  require(c.lstm_layers <= 2, "lstm_layers must be 0, 1 or 2");
  require(c.lstm_hidden > 0, "lstm_hidden must be positive");
  require(!c.dense_widths.empty(), "dense_widths must be non-empty");
  for (auto w : c.dense_widths) require(w > 0, "dense widths must be positive");
}

Variant parse_variant(std::string_view s) {
  if (s == "cnn") return Variant::Cnn;
  if (s == "cnn_lstm1") return Variant::CnnLstm1;
  if (s == "cnn_lstm2") return Variant::CnnLstm2;
  throw Error(ErrorKind::InvalidConfiguration, "unknown variant '" + std::string(s) + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Cnn: return "cnn";
    case Variant::CnnLstm1: return "cnn_lstm1";
    case Variant::CnnLstm2: return "cnn_lstm2";
  }
  return "cnn_lstm2";
}

ModelConfig with_variant(ModelConfig config, Variant v) {
  config.lstm_layers = v == Variant::Cnn ? 0 : v == Variant::CnnLstm1 ? 1 : 2;
  return config;
}

BpRegressor::BpRegressor(ModelConfig config) : config_(std::move(config)) {
  validate(config_);
  const auto& c = config_;
  conv_kernels_ = ad::parameter(ad::Tensor({c.n_kernels, c.grid_size, c.kernel_width}));
  conv_bias_ = ad::parameter(ad::Tensor({c.n_kernels}));
  std::size_t in = c.n_kernels;
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    const std::size_t g4 = 4 * c.lstm_hidden;
    lstm_.push_back({ad::parameter(ad::Tensor({g4, in})),
                     ad::parameter(ad::Tensor({g4, c.lstm_hidden})),
                     ad::parameter(ad::Tensor({g4}))});
    in = c.lstm_hidden;
  }
  std::size_t width = in * c.grid_size;
  for (std::size_t w : c.dense_widths) {
    dense_.push_back({ad::parameter(ad::Tensor({w, width})), ad::parameter(ad::Tensor({w}))});
    width = w;
  }
  output_ = {ad::parameter(ad::Tensor({1, width})), ad::parameter(ad::Tensor({1}))};
}

BpRegressor BpRegressor::zeros(const ModelConfig& config) { return BpRegressor(config); }

BpRegressor BpRegressor::init(const ModelConfig& config, std::uint64_t seed) {
  BpRegressor m(config);
  std::mt19937_64 rng(seed);
  // 53 random bits mapped to [0, 1); avoids implementation-defined distributions.
  auto uniform = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto glorot = [&](ad::Var& w, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.mutable_value().values) v = (2.0 * uniform() - 1.0) * limit;
  };
  const auto& ks = m.conv_kernels_.shape();
  glorot(m.conv_kernels_, static_cast<double>(ks[1] * ks[2]), static_cast<double>(ks[0] * ks[2]));
  for (auto w : m.weights()) {
    if (w.node() == m.conv_kernels_.node()) continue;
    glorot(w, static_cast<double>(w.shape()[1]), static_cast<double>(w.shape()[0]));
  }
  return m;
}

ad::Var BpRegressor::forward(const ad::Var& grid) const {
  const std::size_t g = config_.grid_size;
  if (grid.shape() != ad::Shape{g, g}) {
    throw Error(ErrorKind::Shape, "model expects a " + std::to_string(g) + "x" +
                                      std::to_string(g) + " grid, got " +
                                      ad::to_string(grid.shape()));
  }
  const std::size_t w = config_.kernel_width;
  const std::size_t pad_left = (w - 1) / 2;
  ad::Var x = ad::relu(ad::conv1d(grid, conv_kernels_, conv_bias_, pad_left, w - 1 - pad_left));
  if (!lstm_.empty()) {
    x = ad::transpose(x);
    if (config_.reverse_time) x = ad::reverse_rows(x);
    for (const auto& layer : lstm_) x = ad::lstm_layer(x, layer);
  }
  x = ad::flatten(x);
  for (const auto& d : dense_) x = ad::dense(x, d.weights, d.bias, ad::Activation::Relu);
  return ad::dense(x, output_.weights, output_.bias, ad::Activation::Linear);
}

double BpRegressor::predict(std::span<const double> grid_values) const {
  const std::size_t g = config_.grid_size;
  ad::Tensor t({g, g}, std::vector<double>(grid_values.begin(), grid_values.end()));
  return forward(ad::constant(std::move(t))).item();
}

std::vector<ad::Shape> BpRegressor::shape_trace() const {
  const auto& c = config_;
  std::vector<ad::Shape> trace{{c.grid_size, c.grid_size}, {c.n_kernels, c.grid_size}};
  if (c.lstm_layers > 0) {
    trace.push_back({c.grid_size, c.n_kernels});
    for (std::size_t l = 0; l < c.lstm_layers; ++l) trace.push_back({c.grid_size, c.lstm_hidden});
  }
  trace.push_back({flattened_width()});
  for (auto d : c.dense_widths) trace.push_back({d});
  trace.push_back({1});
  return trace;
}

std::size_t BpRegressor::flattened_width() const {
  return (config_.lstm_layers > 0 ? config_.lstm_hidden : config_.n_kernels) * config_.grid_size;
}

std::vector<ad::Var> BpRegressor::parameters() const {
  std::vector<ad::Var> out{conv_kernels_, conv_bias_};
  for (const auto& l : lstm_) {
    out.push_back(l.input_weights);
    out.push_back(l.recurrent_weights);
    out.push_back(l.bias);
  }
  for (const auto& d : dense_) {
    out.push_back(d.weights);
    out.push_back(d.bias);
  }
  out.push_back(output_.weights);
  out.push_back(output_.bias);
  return out;
}

std::vector<ad::Var> BpRegressor::weights() const {
  std::vector<ad::Var> out{conv_kernels_};
  for (const auto& l : lstm_) {
    out.push_back(l.input_weights);
    out.push_back(l.recurrent_weights);
  }
  for (const auto& d : dense_) out.push_back(d.weights);
  out.push_back(output_.weights);
  return out;
}

std::vector<ad::Var> BpRegressor::biases() const {
  std::vector<ad::Var> out{conv_bias_};
  for (const auto& l : lstm_) out.push_back(l.bias);
  for (const auto& d : dense_) out.push_back(d.bias);
  out.push_back(output_.bias);
  return out;
}

std::size_t BpRegressor::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

void BpRegressor::zero_grad() const {
  for (auto p : parameters()) p.zero_grad();
}

std::vector<ad::NamedTensor> BpRegressor::state() const {
  std::vector<ad::NamedTensor> out{{"conv.kernels", conv_kernels_.value()},
                                   {"conv.bias", conv_bias_.value()}};
  for (std::size_t l = 0; l < lstm_.size(); ++l) {
    const std::string p = "lstm" + std::to_string(l) + ".";
    out.push_back({p + "input_weights", lstm_[l].input_weights.value()});
    out.push_back({p + "recurrent_weights", lstm_[l].recurrent_weights.value()});
    out.push_back({p + "bias", lstm_[l].bias.value()});
  }
  for (std::size_t l = 0; l < dense_.size(); ++l) {
    const std::string p = "dense" + std::to_string(l) + ".";
    out.push_back({p + "weights", dense_[l].weights.value()});
    out.push_back({p + "bias", dense_[l].bias.value()});
  }
  out.push_back({"output.weights", output_.weights.value()});
  out.push_back({"output.bias", output_.bias.value()});
  return out;
}

void BpRegressor::load_state(std::span<const ad::NamedTensor> state) {
  const auto mine = this->state();
  auto params = parameters();
  if (state.size() != mine.size()) {
    throw Error(ErrorKind::Shape, "state has " + std::to_string(state.size()) +
                                      " tensors, model expects " + std::to_string(mine.size()));
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (state[i].name != mine[i].name || state[i].tensor.shape != mine[i].tensor.shape) {
      throw Error(ErrorKind::Shape, "state tensor '" + state[i].name + "' " +
                                        ad::to_string(state[i].tensor.shape) +
                                        " does not match '" + mine[i].name + "' " +
                                        ad::to_string(mine[i].tensor.shape));
    }
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    params[i].mutable_value().values = state[i].tensor.values;
  }
}

BpRegressor BpRegressor::clone() const {
  BpRegressor copy(config_);
  copy.load_state(state());
  return copy;
}

namespace {

std::string join_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(w[i]);
  }
  return s;
}

}  // namespace

void save_model(std::ostream& out, const BpRegressor& model, Target target) {
  const auto& c = model.config();
  out << "oscbp-model target=" << to_string(target) << " n_kernels=" << c.n_kernels
      << " kernel_width=" << c.kernel_width << " lstm_layers=" << c.lstm_layers
      << " lstm_hidden=" << c.lstm_hidden << " dense_widths=" << join_widths(c.dense_widths)
      << " grid_size=" << c.grid_size << " reverse_time=" << (c.reverse_time ? 1 : 0) << '\n';
  const auto state = model.state();
  ad::write_tensors(out, state);
}

LoadedModel load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "model checkpoint: empty stream");
  const auto fields = text::split(line, ' ');
  if (fields.empty() || fields[0] != "oscbp-model") {
    throw Error(ErrorKind::Parse, "model checkpoint: missing 'oscbp-model' header");
  }
  std::map<std::string, std::string> kv;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto eq = fields[i].find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Parse, "model header field '" + fields[i] + "'");
    kv[fields[i].substr(0, eq)] = fields[i].substr(eq + 1);
  }
  auto count = [&](const std::string& key) -> std::size_t {
    const auto it = kv.find(key);
    const auto v = it == kv.end() ? std::nullopt : text::parse_int(it->second);
    if (!v || *v < 0) throw Error(ErrorKind::Parse, "model header: bad or missing '" + key + "'");
    return static_cast<std::size_t>(*v);
  };
  ModelConfig c;
  c.n_kernels = count("n_kernels");
  c.kernel_width = count("kernel_width");
  c.lstm_layers = count("lstm_layers");
  c.lstm_hidden = count("lstm_hidden");
  c.grid_size = count("grid_size");
  c.reverse_time = count("reverse_time") != 0;
  c.dense_widths.clear();
  for (const auto& w : text::split(kv["dense_widths"])) {
    const auto v = text::parse_int(w);
    if (!v || *v <= 0) throw Error(ErrorKind::Parse, "model header: bad dense_widths");
    c.dense_widths.push_back(static_cast<std::size_t>(*v));
  }
  if (!kv.contains("target")) throw Error(ErrorKind::Parse, "model header: missing target");
  const Target target = parse_target(kv["target"]);

  BpRegressor model = BpRegressor::zeros(c);
  const auto tensors = ad::read_tensors(in);
  model.load_state(tensors);
  return {std::move(model), target};
}

}  // namespace oscbp::model
