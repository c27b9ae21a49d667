#include "cfrl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace cfrl::nn {

namespace {

constexpr int kFormatVersion = 1;

const char* head_name(Head h) { return h == Head::Identity ? "identity" : "scaled_tanh"; }

Head head_from_name(const std::string& s) {
  if (s == "identity") return Head::Identity;
  if (s == "scaled_tanh") return Head::ScaledTanh;
  throw std::domain_error("unknown network head '" + s + "'");
}

bool finite(const Matrix& m) { return m.allFinite(); }

std::vector<Layer> zeros_like(const std::vector<Layer>& layers) {
  std::vector<Layer> out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    out.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return out;
}

nlohmann::json layers_to_json(const std::vector<Layer>& layers) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    arr.push_back({{"rows", l.weight.rows()},
                   {"cols", l.weight.cols()},
                   {"weight", w},
                   {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return arr;
}

void layers_from_json(const nlohmann::json& arr, std::vector<Layer>& layers) {
  if (!arr.is_array() || arr.size() != layers.size()) throw std::domain_error("checkpoint: layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const auto& j = arr[i];
    if (j.at("rows").get<Eigen::Index>() != l.weight.rows() || j.at("cols").get<Eigen::Index>() != l.weight.cols()) {
      throw std::domain_error("checkpoint: layer shape mismatch");
    }
    const auto w = j.at("weight").get<std::vector<double>>();
    const auto b = j.at("bias").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(l.weight.size()) || b.size() != static_cast<std::size_t>(l.bias.size())) {
      throw std::domain_error("checkpoint: parameter count mismatch");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = w[k++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = b[static_cast<std::size_t>(r)];
  }
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> dims, Head head, Vec low, Vec high)
    : dims_(std::move(dims)), head_(head), low_(std::move(low)), high_(std::move(high)) {
  if (dims_.size() < 2) throw std::domain_error("mlp needs at least input and output dims");
  for (auto d : dims_) {
    if (d == 0) throw std::domain_error("mlp layer dims must be >= 1");
  }
  if (head_ == Head::ScaledTanh) {
    if (low_.size() != dims_.back() || high_.size() != dims_.back()) {
      throw std::domain_error("mlp: scaled tanh head needs bounds of output size");
    }
    for (std::size_t i = 0; i < low_.size(); ++i) {
      if (!(low_[i] < high_[i])) throw std::domain_error("mlp: head bounds must satisfy low < high");
    }
  }
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(dims_[i]);
    const auto out = static_cast<Eigen::Index>(dims_[i + 1]);
    layers_.push_back({Matrix::Zero(out, in), Vector::Zero(out)});
  }
}

void Mlp::init_uniform(Rng& rng) {
  for (auto& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = dist(rng);
      l.bias(r) = dist(rng);
    }
  }
}

std::size_t Mlp::num_params() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void Mlp::check_input(Eigen::Index rows) const {
  if (layers_.empty()) throw std::domain_error("mlp is uninitialised");
  if (rows != static_cast<Eigen::Index>(dims_.front())) {
    throw std::domain_error("mlp input has " + std::to_string(rows) + " rows, expected " +
                            std::to_string(dims_.front()));
  }
}

Matrix Mlp::forward(const Matrix& x) const {
  Tape tape;
  return forward(x, tape);
}

Matrix Mlp::forward(const Matrix& x, Tape& tape) const {
  check_input(x.rows());
  tape.inputs.clear();
  tape.inputs.reserve(layers_.size());
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    Matrix z = l.weight * h;
    z.colwise() += l.bias;
    tape.inputs.push_back(std::move(h));
    if (i + 1 < layers_.size()) {
      h = z.array().tanh().matrix();
    } else if (head_ == Head::Identity) {
      h = std::move(z);
    } else {
      tape.head_tanh = z.array().tanh().matrix();
      h.resize(z.rows(), z.cols());
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const auto lo = low_[static_cast<std::size_t>(r)];
        const auto span = high_[static_cast<std::size_t>(r)] - lo;
        h.row(r) = ((tape.head_tanh.row(r).array() + 1.0) * (0.5 * span) + lo).matrix();
      }
    }
  }
  tape.output = h;
  return h;
}

Vec Mlp::forward(std::span<const double> x) const {
  Matrix in(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) in(static_cast<Eigen::Index>(i), 0) = x[i];
  const Matrix out = forward(in);
  return Vec(out.data(), out.data() + out.size());
}

Gradients Mlp::backward(const Tape& tape, const Matrix& upstream) const {
  if (tape.inputs.size() != layers_.size()) throw std::domain_error("mlp backward: tape does not match network");
  if (upstream.rows() != static_cast<Eigen::Index>(dims_.back()) || upstream.cols() != tape.output.cols()) {
    throw std::domain_error("mlp backward: upstream gradient shape mismatch");
  }
  Gradients g;
  g.layers.resize(layers_.size());
  Matrix delta;
  if (head_ == Head::Identity) {
    delta = upstream;
  } else {
    delta = upstream;
    for (Eigen::Index r = 0; r < delta.rows(); ++r) {
      const auto half_span = 0.5 * (high_[static_cast<std::size_t>(r)] - low_[static_cast<std::size_t>(r)]);
      delta.row(r) = (delta.row(r).array() * (1.0 - tape.head_tanh.row(r).array().square()) * half_span).matrix();
    }
  }
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& in = tape.inputs[k];
    g.layers[k].weight = delta * in.transpose();
    g.layers[k].bias = delta.rowwise().sum();
    Matrix d_in = layers_[k].weight.transpose() * delta;
    if (k > 0) {
      // inputs[k] = tanh(z_{k-1})
      delta = (d_in.array() * (1.0 - in.array().square())).matrix();
    } else {
      g.input = std::move(d_in);
    }
  }
  return g;
}

Vec Mlp::flat_params() const {
  Vec out;
  out.reserve(num_params());
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
  }
  return out;
}

void Mlp::set_flat_params(std::span<const double> flat) {
  if (flat.size() != num_params()) throw std::domain_error("set_flat_params: size mismatch");
  std::size_t k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = flat[k++];
  }
}

bool Mlp::same_architecture(const Mlp& other) const noexcept {
  return dims_ == other.dims_ && head_ == other.head_ && low_ == other.low_ && high_ == other.high_;
}

bool Mlp::all_finite() const noexcept {
  for (const auto& l : layers_) {
    if (!finite(l.weight) || !l.bias.allFinite()) return false;
  }
  return true;
}

AdamState::AdamState(const Mlp& net, AdamConfig cfg)
    : config(cfg), m(zeros_like(net.layers())), v(zeros_like(net.layers())) {}

void adam_step(Mlp& net, AdamState& opt, const Gradients& grads) {
  auto& layers = net.layers();
  if (grads.layers.size() != layers.size() || opt.m.size() != layers.size()) {
    throw std::domain_error("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (grads.layers[i].weight.rows() != layers[i].weight.rows() ||
        grads.layers[i].weight.cols() != layers[i].weight.cols() ||
        grads.layers[i].bias.size() != layers[i].bias.size()) {
      throw std::domain_error("adam_step: gradient shape mismatch");
    }
    if (!finite(grads.layers[i].weight) || !grads.layers[i].bias.allFinite()) {
      throw TrainingError("adam_step: non-finite gradient");
    }
  }
  const auto& c = opt.config;
  ++opt.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  const double step_size = c.lr / bc1;
  const double inv_sqrt_bc2 = 1.0 / std::sqrt(bc2);
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = (c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square()).matrix();
    param.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + c.eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, opt.m[i].weight, opt.v[i].weight, grads.layers[i].weight);
    update(layers[i].bias, opt.m[i].bias, opt.v[i].bias, grads.layers[i].bias);
  }
}

void soft_update(Mlp& target, const Mlp& online, double eta) {
  if (!target.same_architecture(online)) throw std::domain_error("soft_update: architecture mismatch");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::domain_error("soft_update: eta must lie in [0, 1]");
  auto& t = target.layers();
  const auto& o = online.layers();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (eta == 1.0) {
      t[i] = o[i];
    } else if (eta != 0.0) {
      t[i].weight = eta * o[i].weight + (1.0 - eta) * t[i].weight;
      t[i].bias = eta * o[i].bias + (1.0 - eta) * t[i].bias;
    }
  }
}

nlohmann::json to_json(const Mlp& net) {
  return {{"format", "cfrl.mlp"},
          {"version", kFormatVersion},
          {"dims", net.dims()},
          {"hidden_activation", "tanh"},
          {"head", head_name(net.head())},
          {"low", net.low()},
          {"high", net.high()},
          {"layers", layers_to_json(net.layers())}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cfrl.mlp") throw std::domain_error("checkpoint: not a cfrl.mlp container");
  if (j.at("version").get<int>() != kFormatVersion) throw std::domain_error("checkpoint: unsupported version");
  if (j.at("hidden_activation").get<std::string>() != "tanh") {
    throw std::domain_error("checkpoint: unsupported hidden activation");
  }
  Mlp net(j.at("dims").get<std::vector<std::size_t>>(), head_from_name(j.at("head").get<std::string>()),
          j.at("low").get<Vec>(), j.at("high").get<Vec>());
  layers_from_json(j.at("layers"), net.layers());
  return net;
}

nlohmann::json to_json(const AdamState& opt) {
  return {{"lr", opt.config.lr},
          {"beta1", opt.config.beta1},
          {"beta2", opt.config.beta2},
          {"eps", opt.config.eps},
          {"step", opt.step},
          {"m", layers_to_json(opt.m)},
          {"v", layers_to_json(opt.v)}};
}

AdamState adam_from_json(const nlohmann::json& j, const Mlp& net) {
  AdamState opt(net, AdamConfig{j.at("lr").get<double>(), j.at("beta1").get<double>(),
                                j.at("beta2").get<double>(), j.at("eps").get<double>()});
  opt.step = j.at("step").get<long>();
  layers_from_json(j.at("m"), opt.m);
  layers_from_json(j.at("v"), opt.v);
  return opt;
}

}  // namespace cfrl::nn
