#include "infodesign/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "infodesign/errors.hpp"
#include "infodesign/parallel.hpp"

namespace infodesign::estimator {

Batch make_batch(const models::SimulatorModel& model, const Eigen::VectorXd& d, std::size_t n, Rng& rng) {
  if (n < 2) throw InputError("make_batch: batch size must be >= 2");
  if (!model.domain().contains(d)) throw InputError("make_batch: design lies outside the model domain");
  Batch b;
  b.design = d;
  b.theta = model.sample_prior(rng, n);
  b.noise = model.draw_noise(rng, n);
  b.theta_marginal = model.sample_prior(rng, n);
  b.noise_marginal = model.draw_noise(rng, n);
  b.y = model.simulate(b.theta, d, b.noise);
  b.y_marginal = model.simulate(b.theta_marginal, d, b.noise_marginal);
  return b;
}

Batch rebatch_at(const models::SimulatorModel& model, const Batch& batch, const Eigen::VectorXd& d) {
  Batch b = batch;
  b.design = d;
  b.y = model.simulate(b.theta, d, b.noise);
  b.y_marginal = model.simulate(b.theta_marginal, d, b.noise_marginal);
  return b;
}

namespace {

struct ChunkPartial {
  double sum_t = 0.0, sum_t2 = 0.0;
  double sum_e = 0.0, sum_e2 = 0.0;
  std::size_t clamped = 0;
  double max_t = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad_psi;
  Eigen::VectorXd grad_design;
};

constexpr Eigen::Index kSubBlockRows = 64;

nn::RowMatrix join(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& y, Eigen::Index start,
                   Eigen::Index count) {
  nn::RowMatrix x(count, theta.cols() + y.cols());
  x.leftCols(theta.cols()) = theta.middleRows(start, count);
  x.rightCols(y.cols()) = y.middleRows(start, count);
  return x;
}

}  // namespace

BoundEvaluation evaluate_bound(const nn::Network& net, const Batch& batch, const EvaluationRequest& req) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw InputError("mi_lower_bound: empty batch");
  if (batch.y.rows() != n || batch.theta_marginal.rows() != n || batch.y_marginal.rows() != n)
    throw InputError("mi_lower_bound: batch blocks must have equal row counts");
  const auto& cfg = net.config();
  if (static_cast<std::size_t>(batch.theta.cols()) != cfg.input_dim_theta ||
      static_cast<std::size_t>(batch.y.cols()) != cfg.input_dim_y)
    throw InputError("mi_lower_bound: network input dimensions do not match the batch");
  if (req.grad_design) {
    if (req.model == nullptr) throw InputError("grad_design: a model is required");
    if (!req.model->has_gradients())
      throw CapabilityError(req.model->name() +
                            ": no sampling-path Jacobian; use Bayesian optimization for the design");
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_e = std::exp(-1.0);
  const auto dim_y = batch.y.cols();
  const auto n_params = static_cast<Eigen::Index>(net.num_parameters());
  const bool need_input = req.grad_design;
  const bool need_backward = req.grad_psi || req.grad_design;

  // Chunks [0, C) cover joint rows and [C, 2C) marginal rows.
  const std::size_t C = chunk_count(static_cast<std::size_t>(n));
  std::vector<ChunkPartial> parts(2 * C);
  const nn::PackedNetwork packed(net);

  for_each_chunk(2 * C, [&](std::size_t c) {
    const bool marginal = c >= C;
    const auto chunk_start = static_cast<Eigen::Index>((marginal ? c - C : c) * kChunkRows);
    const Eigen::Index chunk_end = std::min<Eigen::Index>(chunk_start + static_cast<Eigen::Index>(kChunkRows), n);
    const Eigen::MatrixXd& y_block = marginal ? batch.y_marginal : batch.y;
    const Eigen::MatrixXd& th = marginal ? batch.theta_marginal : batch.theta;
    const models::NoiseDraw& noise = marginal ? batch.noise_marginal : batch.noise;

    ChunkPartial& p = parts[c];
    if (req.grad_psi) p.grad_psi = Eigen::VectorXd::Zero(n_params);
    if (req.grad_design) p.grad_design = Eigen::VectorXd::Zero(batch.design.size());
    nn::RowPass pass;
    nn::RowMatrix input_grad;
    Eigen::VectorXd seeds;

    // small sub-blocks keep the activations cache-resident
    for (Eigen::Index start = chunk_start; start < chunk_end; start += kSubBlockRows) {
      const Eigen::Index count = std::min(kSubBlockRows, chunk_end - start);
      const nn::RowMatrix x = join(batch.theta, y_block, start, count);
      nn::forward_rows(packed, x, pass);
      const Eigen::VectorXd& t = pass.output;

      seeds.resize(count);
      if (!marginal) {
        p.sum_t += t.sum();
        p.sum_t2 += t.squaredNorm();
        seeds.setConstant(inv_n);
      } else {
        for (Eigen::Index i = 0; i < count; ++i) {
          double ti = t[i];
          if (!std::isfinite(ti)) {
            std::ostringstream os;
            os << "mi_lower_bound: critic output " << ti << " at marginal row " << start + i;
            throw NumericalError(os.str());
          }
          p.max_t = std::max(p.max_t, ti);
          if (ti > kExpClamp) {
            ++p.clamped;
            ti = kExpClamp;
          }
          const double e = std::exp(ti);
          p.sum_e += e;
          p.sum_e2 += e * e;
          seeds[i] = -inv_e * e * inv_n;
        }
      }
      if (!need_backward) continue;

      nn::backward_rows(packed, x, pass, seeds, req.grad_psi ? &p.grad_psi : nullptr,
                        need_input ? &input_grad : nullptr);
      if (req.grad_design) {
        // seeds carry the per-row weight, so input_grad rows are g_i * dT_i/dy
        p.grad_design += req.model->jacobian_transpose_sum(th.middleRows(start, count), batch.design,
                                                           noise.slice(start, count),
                                                           input_grad.rightCols(dim_y));
      }
    }
  });

  BoundEvaluation out;
  double sum_t = 0.0, sum_t2 = 0.0, sum_e = 0.0, sum_e2 = 0.0;
  out.max_marginal_t = -std::numeric_limits<double>::infinity();
  if (req.grad_psi) out.grad_psi = Eigen::VectorXd::Zero(n_params);
  if (req.grad_design) out.grad_design = Eigen::VectorXd::Zero(batch.design.size());
  for (const auto& p : parts) {
    sum_t += p.sum_t;
    sum_t2 += p.sum_t2;
    sum_e += p.sum_e;
    sum_e2 += p.sum_e2;
    out.clamped += p.clamped;
    out.max_marginal_t = std::max(out.max_marginal_t, p.max_t);
    if (req.grad_psi) out.grad_psi += p.grad_psi;
    if (req.grad_design) out.grad_design += p.grad_design;
  }
  auto& est = out.estimate;
  est.joint_term = sum_t * inv_n;
  est.marginal_term = sum_e * inv_n;
  est.value = est.joint_term - inv_e * est.marginal_term;
  if (!std::isfinite(est.value)) throw NumericalError("mi_lower_bound: bound is not finite");
  const double nn1 = std::max<double>(static_cast<double>(n) - 1.0, 1.0);
  const double var_t = std::max(0.0, (sum_t2 - sum_t * sum_t * inv_n) / nn1);
  const double var_e = std::max(0.0, (sum_e2 - sum_e * sum_e * inv_n) / nn1);
  // joint and marginal rows are independent, so the variances add
  est.standard_error = std::sqrt((var_t + inv_e * inv_e * var_e) * inv_n);
  return out;
}

MiEstimate mi_lower_bound(const nn::Network& net, const Batch& batch) {
  return evaluate_bound(net, batch).estimate;
}

Eigen::VectorXd grad_psi(const nn::Network& net, const Batch& batch) {
  return evaluate_bound(net, batch, {.grad_psi = true}).grad_psi;
}

Eigen::VectorXd grad_design(const nn::Network& net, const Batch& batch, const models::SimulatorModel& model) {
  return evaluate_bound(net, batch, {.grad_design = true, .model = &model}).grad_design;
}

std::vector<double> moving_average(const std::vector<double>& trace, std::size_t window) {
  if (window == 0) throw InputError("moving_average: window must be >= 1");
  std::vector<double> out(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t k = lo; k <= i; ++k) s += trace[k];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

}  // namespace infodesign::estimator
