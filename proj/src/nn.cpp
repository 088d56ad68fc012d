#include "infodesign/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "infodesign/errors.hpp"

namespace infodesign::nn {

void NetworkConfig::validate() const {
  if (input_dim_theta == 0 || input_dim_y == 0)
    throw ConfigError("network: input dimensions must be >= 1");
  if (hidden_layer_sizes.empty()) throw ConfigError("network: at least one hidden layer is required");
  for (auto h : hidden_layer_sizes)
    if (h == 0) throw ConfigError("network: hidden layer sizes must be >= 1");
}

Network::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t fan_in = config_.input_dim();
  std::size_t offset = 0;
  auto add = [&](std::size_t fan_out) {
    layers_.push_back({fan_in, fan_out, offset});
    offset += fan_in * fan_out + fan_out;
    fan_in = fan_out;
  };
  for (auto h : config_.hidden_layer_sizes) add(h);
  add(1);
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

Eigen::Map<const RowMatrix> Network::weight(std::size_t layer) const {
  const auto& s = layers_.at(layer);
  return {params_.data() + s.offset, static_cast<Eigen::Index>(s.fan_in),
          static_cast<Eigen::Index>(s.fan_out)};
}

Eigen::Map<RowMatrix> Network::weight(std::size_t layer) {
  const auto& s = layers_.at(layer);
  return {params_.data() + s.offset, static_cast<Eigen::Index>(s.fan_in),
          static_cast<Eigen::Index>(s.fan_out)};
}

Eigen::Map<const Eigen::VectorXd> Network::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), static_cast<Eigen::Index>(layers_.at(layer).fan_out)};
}

Eigen::Map<Eigen::VectorXd> Network::bias(std::size_t layer) {
  return {params_.data() + bias_offset(layer), static_cast<Eigen::Index>(layers_.at(layer).fan_out)};
}

double init_weight_std(std::size_t fan_in) {
  return 1.0 / std::sqrt(3.0 * static_cast<double>(fan_in));
}

Network init_network(const NetworkConfig& config) {
  Network net(config);
  std::mt19937_64 rng(config.seed);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.fan_in(l)));
    std::uniform_real_distribution<double> u(-bound, bound);
    // fill in storage order
    double* w = net.parameters().data() + net.weight_offset(l);
    for (std::size_t i = 0; i < net.fan_in(l) * net.fan_out(l); ++i) w[i] = u(rng);
  }
  return net;
}

namespace {

RowMatrix join_inputs(const Network& net, std::span<const double> theta,
                               std::span<const double> y) {
  const auto& c = net.config();
  if (theta.size() != c.input_dim_theta || y.size() != c.input_dim_y) {
    std::ostringstream os;
    os << "network: expected theta dim " << c.input_dim_theta << " and y dim " << c.input_dim_y
       << ", got " << theta.size() << " and " << y.size();
    throw InputError(os.str());
  }
  RowMatrix x(1, static_cast<Eigen::Index>(c.input_dim()));
  for (std::size_t i = 0; i < theta.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = theta[i];
  for (std::size_t i = 0; i < y.size(); ++i) x(0, static_cast<Eigen::Index>(theta.size() + i)) = y[i];
  return x;
}

}  // namespace

using detail::kLanes;
using detail::Pack;
using detail::pack_count;

namespace {

double hsum(Pack v) {
  double s = 0.0;
  for (std::size_t q = 0; q < kLanes; ++q) s += v[q];
  return s;
}

Pack relu(Pack v) {
  const Pack zero{};
  return v > zero ? v : zero;
}

double* as_doubles(std::vector<Pack>& v) { return reinterpret_cast<double*>(v.data()); }

std::size_t grad_packs(const PackedNetwork::Layer& layer) { return layer.w.size() + layer.b.size(); }

}  // namespace

PackedNetwork::PackedNetwork(const Network& net) : net_(&net) {
  const std::size_t L = net.num_layers();
  layers_.resize(L);
  const double* params = net.parameters().data();
  for (std::size_t l = 0; l < L; ++l) {
    Layer& P = layers_[l];
    P.fin = net.fan_in(l);
    P.fout = net.fan_out(l);
    const double* W = params + net.weight_offset(l);
    const double* b = params + net.bias_offset(l);
    if (l + 1 < L) {
      P.groups_out = pack_count(P.fout);
      P.w.assign(P.fin * P.groups_out, Pack{});
      P.b.assign(P.groups_out, Pack{});
      double* w = as_doubles(P.w);
      for (std::size_t k = 0; k < P.fin; ++k)
        for (std::size_t j = 0; j < P.fout; ++j) w[k * P.groups_out * kLanes + j] = W[k * P.fout + j];
      std::copy(b, b + P.fout, as_doubles(P.b));
    } else {
      P.groups_out = 1;
      P.w.assign(pack_count(P.fin), Pack{});
      P.b.assign(1, Pack{});
      std::copy(W, W + P.fin, as_doubles(P.w));
      P.b[0][0] = b[0];
    }
  }
}

// Hidden activations live in zero-padded packs, so padding lanes stay 0
// through ReLU and never leak into the next layer.

void forward_rows(const PackedNetwork& pnet, const RowMatrix& inputs, RowPass& pass) {
  const Network& net = pnet.source();
  if (static_cast<std::size_t>(inputs.cols()) != net.config().input_dim())
    throw InputError("network: input block has the wrong number of columns");
  const auto& layers = pnet.layers();
  const std::size_t L = layers.size();
  const auto B = static_cast<std::size_t>(inputs.rows());
  pass.rows = B;
  pass.act.resize(L - 1);
  pass.output.resize(static_cast<Eigen::Index>(B));

  const double* in = inputs.data();
  std::size_t stride = layers[0].fin;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const auto& P = layers[l];
    const std::size_t G = P.groups_out;
    auto& out = pass.act[l];
    out.resize(B * G);
    const Pack* __restrict w = P.w.data();
    std::size_t r = 0;
    for (; r + 4 <= B; r += 4) {
      const double* x0 = in + r * stride;
      const double* x1 = x0 + stride;
      const double* x2 = x1 + stride;
      const double* x3 = x2 + stride;
      for (std::size_t g = 0; g < G; ++g) {
        Pack a0 = P.b[g], a1 = a0, a2 = a0, a3 = a0;
        for (std::size_t k = 0; k < P.fin; ++k) {
          const Pack wk = w[k * G + g];
          a0 += x0[k] * wk;
          a1 += x1[k] * wk;
          a2 += x2[k] * wk;
          a3 += x3[k] * wk;
        }
        out[r * G + g] = relu(a0);
        out[(r + 1) * G + g] = relu(a1);
        out[(r + 2) * G + g] = relu(a2);
        out[(r + 3) * G + g] = relu(a3);
      }
    }
    for (; r < B; ++r) {
      const double* x0 = in + r * stride;
      for (std::size_t g = 0; g < G; ++g) {
        Pack a0 = P.b[g];
        for (std::size_t k = 0; k < P.fin; ++k) a0 += x0[k] * w[k * G + g];
        out[r * G + g] = relu(a0);
      }
    }
    in = as_doubles(out);
    stride = G * kLanes;
  }

  const auto& P = layers[L - 1];
  const std::size_t Gin = P.w.size();
  const Pack* act = reinterpret_cast<const Pack*>(in);
  for (std::size_t r = 0; r < B; ++r) {
    Pack acc{};
    for (std::size_t g = 0; g < Gin; ++g) acc += act[r * Gin + g] * P.w[g];
    pass.output[static_cast<Eigen::Index>(r)] = P.b[0][0] + hsum(acc);
  }
}

void forward_rows(const Network& net, const RowMatrix& inputs, RowPass& pass) {
  forward_rows(PackedNetwork(net), inputs, pass);
}

void backward_rows(const PackedNetwork& pnet, const RowMatrix& inputs, RowPass& pass,
                   const Eigen::Ref<const Eigen::VectorXd>& seeds, Eigen::VectorXd* param_grad,
                   RowMatrix* input_grad) {
  const Network& net = pnet.source();
  const auto& layers = pnet.layers();
  const std::size_t L = layers.size();
  const auto B = static_cast<std::size_t>(inputs.rows());
  if (pass.rows != B || pass.act.size() + 1 != L)
    throw InputError("network: backward pass does not match the forward pass");
  if (static_cast<std::size_t>(seeds.size()) != B) throw InputError("network: one seed per row is required");
  if (param_grad && param_grad->size() != static_cast<Eigen::Index>(net.num_parameters()))
    throw InputError("network: gradient buffer has the wrong size");

  std::size_t total = 0;
  for (const auto& P : layers) total += grad_packs(P);
  pass.grad.assign(param_grad ? total : 0, Pack{});
  std::size_t goff = total;

  // final layer
  {
    const auto& P = layers[L - 1];
    const std::size_t Gin = P.w.size();
    goff -= grad_packs(P);
    const Pack* act = pass.act[L - 2].data();
    pass.delta.resize(B * Gin);
    if (param_grad) {
      Pack* __restrict gw = pass.grad.data() + goff;
      double gb = 0.0;
      for (std::size_t r = 0; r < B; ++r) {
        const double s = seeds[static_cast<Eigen::Index>(r)];
        for (std::size_t g = 0; g < Gin; ++g) gw[g] += s * act[r * Gin + g];
        gb += s;
      }
      gw[Gin][0] = gb;
    }
    const Pack zero{};
    for (std::size_t r = 0; r < B; ++r) {
      const double s = seeds[static_cast<Eigen::Index>(r)];
      // ReLU'(0) = 0; padded lanes have act 0 and so carry no signal
      for (std::size_t g = 0; g < Gin; ++g)
        pass.delta[r * Gin + g] = act[r * Gin + g] > zero ? s * P.w[g] : zero;
    }
  }

  for (std::size_t l = L - 1; l-- > 0;) {
    const auto& P = layers[l];
    const std::size_t G = P.groups_out;
    goff -= grad_packs(P);
    const double* in = l == 0 ? inputs.data() : as_doubles(pass.act[l - 1]);
    const std::size_t stride = l == 0 ? P.fin : pack_count(P.fin) * kLanes;
    const Pack* __restrict d = pass.delta.data();

    if (param_grad) {
      Pack* __restrict gw = pass.grad.data() + goff;
      Pack* __restrict gb = gw + P.fin * G;
      std::size_t r = 0;
      for (; r + 4 <= B; r += 4) {
        const double* x0 = in + r * stride;
        const double* x1 = x0 + stride;
        const double* x2 = x1 + stride;
        const double* x3 = x2 + stride;
        const Pack* d0 = d + r * G;
        const Pack* d1 = d0 + G;
        const Pack* d2 = d1 + G;
        const Pack* d3 = d2 + G;
        for (std::size_t k = 0; k < P.fin; ++k) {
          Pack* gk = gw + k * G;
          for (std::size_t g = 0; g < G; ++g)
            gk[g] += x0[k] * d0[g] + x1[k] * d1[g] + x2[k] * d2[g] + x3[k] * d3[g];
        }
        for (std::size_t g = 0; g < G; ++g) gb[g] += (d0[g] + d1[g]) + (d2[g] + d3[g]);
      }
      for (; r < B; ++r) {
        const double* x0 = in + r * stride;
        const Pack* d0 = d + r * G;
        for (std::size_t k = 0; k < P.fin; ++k)
          for (std::size_t g = 0; g < G; ++g) gw[k * G + g] += x0[k] * d0[g];
        for (std::size_t g = 0; g < G; ++g) gb[g] += d0[g];
      }
    }

    if (l == 0 && input_grad == nullptr) break;
    // upstream u[r, k] = sum_j delta[r, j] W[k, j], masked by the previous ReLU
    const std::size_t Gin = pack_count(P.fin);
    double* u = nullptr;
    if (l == 0) {
      input_grad->resize(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(P.fin));
      u = input_grad->data();
    } else {
      pass.delta_prev.assign(B * Gin, Pack{});
      u = as_doubles(pass.delta_prev);
    }
    const std::size_t ustride = l == 0 ? P.fin : Gin * kLanes;
    for (std::size_t r = 0; r < B; ++r) {
      const Pack* dr = d + r * G;
      const double* prev = l == 0 ? nullptr : in + r * stride;
      for (std::size_t k = 0; k < P.fin; ++k) {
        if (prev && !(prev[k] > 0.0)) {
          u[r * ustride + k] = 0.0;
          continue;
        }
        const Pack* wk = P.w.data() + k * G;
        Pack acc{};
        for (std::size_t g = 0; g < G; ++g) acc += dr[g] * wk[g];
        u[r * ustride + k] = hsum(acc);
      }
    }
    if (l == 0) break;
    std::swap(pass.delta, pass.delta_prev);
  }

  if (param_grad) {
    // unpad into the flat parameter layout
    double* out = param_grad->data();
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
      const auto& P = layers[l];
      const double* g = as_doubles(pass.grad) + off * kLanes;
      double* W = out + net.weight_offset(l);
      double* b = out + net.bias_offset(l);
      if (l + 1 < L) {
        const std::size_t G = P.groups_out;
        for (std::size_t k = 0; k < P.fin; ++k)
          for (std::size_t j = 0; j < P.fout; ++j) W[k * P.fout + j] += g[k * G * kLanes + j];
        const double* gb = g + P.fin * G * kLanes;
        for (std::size_t j = 0; j < P.fout; ++j) b[j] += gb[j];
      } else {
        for (std::size_t k = 0; k < P.fin; ++k) W[k] += g[k];
        b[0] += g[P.w.size() * kLanes];
      }
      off += grad_packs(P);
    }
  }
}

void backward_rows(const Network& net, const RowMatrix& inputs, RowPass& pass,
                   const Eigen::Ref<const Eigen::VectorXd>& seeds, Eigen::VectorXd* param_grad,
                   RowMatrix* input_grad) {
  backward_rows(PackedNetwork(net), inputs, pass, seeds, param_grad, input_grad);
}

double forward(const Network& net, std::span<const double> theta, std::span<const double> y) {
  const RowMatrix x = join_inputs(net, theta, y);
  RowPass pass;
  forward_rows(net, x, pass);
  return pass.output[0];
}

Eigen::VectorXd backward_params(const Network& net, std::span<const double> theta,
                                std::span<const double> y) {
  const RowMatrix x = join_inputs(net, theta, y);
  RowPass pass;
  forward_rows(net, x, pass);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_parameters()));
  backward_rows(net, x, pass, Eigen::VectorXd::Ones(1), &grad, nullptr);
  return grad;
}

Eigen::VectorXd backward_input_y(const Network& net, std::span<const double> theta,
                                 std::span<const double> y) {
  const RowMatrix x = join_inputs(net, theta, y);
  RowPass pass;
  forward_rows(net, x, pass);
  RowMatrix gx;
  backward_rows(net, x, pass, Eigen::VectorXd::Ones(1), nullptr, &gx);
  return gx.row(0).tail(static_cast<Eigen::Index>(net.config().input_dim_y)).transpose();
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamState& state, double rate) {
  if (params.size() != grads.size()) throw InputError("adam: parameter/gradient size mismatch");
  if (state.m.size() != params.size()) {
    if (state.t != 0 || state.m.size() != 0) throw InputError("adam: state does not match parameters");
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  if (!grads.allFinite()) {
    Eigen::Index bad = 0;
    for (; bad < grads.size() && std::isfinite(grads[bad]); ++bad) {
    }
    std::ostringstream os;
    os << "adam: non-finite gradient entry " << bad << " (" << grads[bad] << ") at step "
       << state.t + 1;
    throw NumericalError(os.str());
  }
  ++state.t;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  params.array() += rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

void LrSchedule::validate() const {
  if (!(initial_rate >= 0.0) || !std::isfinite(initial_rate)) throw ConfigError("schedule: initial rate must be finite and >= 0");
  if (!(multiplier > 0.0 && multiplier <= 1.0)) throw ConfigError("schedule: multiplier must lie in (0, 1]");
  if (period == 0) throw ConfigError("schedule: period must be >= 1");
}

double schedule_rate(const LrSchedule& s, std::uint64_t epoch) {
  const auto k = static_cast<double>(epoch / s.period);
  return s.initial_rate * std::pow(s.multiplier, k);
}

}  // namespace infodesign::nn
