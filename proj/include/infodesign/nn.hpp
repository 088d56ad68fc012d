#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace infodesign::nn {

enum class Activation { relu };

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Architecture of the scalar critic T(theta, y). The network consumes the
/// concatenation [theta, y] and emits a single real value.
struct NetworkConfig {
  std::size_t input_dim_theta = 1;
  std::size_t input_dim_y = 1;
  std::vector<std::size_t> hidden_layer_sizes{100};
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return input_dim_theta + input_dim_y; }
  /// Throws ConfigError on zero dimensions or an empty hidden stack.
  void validate() const;
};

/// Feed-forward ReLU network with all parameters held in one flat vector.
///
/// Layer l maps fan_in(l) -> fan_out(l) as z = a W + b, with W stored
/// row-major (fan_in x fan_out) followed by b. Flat storage lets the
/// optimizer and finite-difference checks treat parameters as a plain vector.
class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_parameters() const { return static_cast<std::size_t>(params_.size()); }
  std::size_t fan_in(std::size_t layer) const { return layers_.at(layer).fan_in; }
  std::size_t fan_out(std::size_t layer) const { return layers_.at(layer).fan_out; }

  Eigen::Map<const RowMatrix> weight(std::size_t layer) const;
  Eigen::Map<RowMatrix> weight(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  /// Offsets of layer l's weight block and bias block in the flat vector.
  std::size_t weight_offset(std::size_t layer) const { return layers_.at(layer).offset; }
  std::size_t bias_offset(std::size_t layer) const {
    const auto& s = layers_.at(layer);
    return s.offset + s.fan_in * s.fan_out;
  }

  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }

  friend bool operator==(const Network& a, const Network& b) {
    return a.config_.input_dim_theta == b.config_.input_dim_theta &&
           a.config_.input_dim_y == b.config_.input_dim_y &&
           a.config_.hidden_layer_sizes == b.config_.hidden_layer_sizes && a.params_ == b.params_;
  }

 private:
  struct LayerShape {
    std::size_t fan_in;
    std::size_t fan_out;
    std::size_t offset;
  };

  NetworkConfig config_;
  std::vector<LayerShape> layers_;
  Eigen::VectorXd params_;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. The standard
/// deviation of a first-layer weight is therefore 1/sqrt(3 fan_in).
Network init_network(const NetworkConfig& config);

/// Standard deviation of the initialization law for a layer with this fan-in.
double init_weight_std(std::size_t fan_in);

double forward(const Network& net, std::span<const double> theta, std::span<const double> y);

/// dT/dpsi, laid out like Network::parameters().
Eigen::VectorXd backward_params(const Network& net, std::span<const double> theta,
                                std::span<const double> y);

/// dT/dy at (theta, y). ReLU'(0) is taken as 0.
Eigen::VectorXd backward_input_y(const Network& net, std::span<const double> theta,
                                 std::span<const double> y);

namespace detail {
// Eight doubles; one AVX-512 register, or several narrower ones elsewhere.
using Pack = double __attribute__((vector_size(64)));
inline constexpr std::size_t kLanes = 8;
inline std::size_t pack_count(std::size_t n) { return (n + kLanes - 1) / kLanes; }
}  // namespace detail

/// Activations for a block of rows (rows are samples), plus backward scratch.
struct RowPass {
  Eigen::VectorXd output;
  std::vector<std::vector<detail::Pack>> act;  // hidden layers, rows x groups
  std::vector<detail::Pack> delta, delta_prev, grad;
  std::size_t rows = 0;
};

/// Weights copied into zero-padded, aligned blocks for batched evaluation.
/// A snapshot: later changes to the source network are not seen.
class PackedNetwork {
 public:
  explicit PackedNetwork(const Network& net);

  /// Hidden layers keep w as fin x groups_out packs. The final (scalar)
  /// layer keeps w as packs over its fan-in and b in lane 0.
  struct Layer {
    std::size_t fin = 0, fout = 0, groups_out = 0;
    std::vector<detail::Pack> w;
    std::vector<detail::Pack> b;
  };

  const Network& source() const { return *net_; }
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  const Network* net_;
  std::vector<Layer> layers_;
};

/// Forward pass over the rows of `inputs` (rows x input_dim).
void forward_rows(const PackedNetwork& net, const RowMatrix& inputs, RowPass& pass);
void forward_rows(const Network& net, const RowMatrix& inputs, RowPass& pass);

/// Backpropagates per-row output seeds g_i through a completed pass.
///
/// Adds sum_i g_i dT_i/dpsi into `param_grad` when non-null, and writes
/// g_i dT_i/dx (rows x input_dim) into `input_grad` when non-null.
void backward_rows(const PackedNetwork& net, const RowMatrix& inputs, RowPass& pass,
                   const Eigen::Ref<const Eigen::VectorXd>& seeds, Eigen::VectorXd* param_grad,
                   RowMatrix* input_grad);
void backward_rows(const Network& net, const RowMatrix& inputs, RowPass& pass,
                   const Eigen::Ref<const Eigen::VectorXd>& seeds, Eigen::VectorXd* param_grad,
                   RowMatrix* input_grad);

/// Adam moments for one parameter vector.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
                                      v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
};

/// One Adam step in the ascent direction: params += rate * mhat / (sqrt(vhat) + eps).
///
/// Throws NumericalError (naming the step counter) if any gradient entry is
/// non-finite; params and state are left untouched in that case.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamState& state, double rate);

/// Step-decay schedule: initial_rate * multiplier^floor(epoch / period).
struct LrSchedule {
  double initial_rate = 1e-3;
  double multiplier = 1.0;
  std::uint64_t period = 5000;

  void validate() const;
};

double schedule_rate(const LrSchedule& s, std::uint64_t epoch);

}  // namespace infodesign::nn
