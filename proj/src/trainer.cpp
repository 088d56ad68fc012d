#include "infodesign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "infodesign/errors.hpp"

namespace infodesign::trainer {

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (moving_average_window == 0) throw ConfigError("train: moving_average_window must be >= 1");
  lr_psi.validate();
  lr_design.validate();
}

Eigen::VectorXd apply_domain_rule(const Eigen::VectorXd& previous, const Eigen::VectorXd& proposed,
                                  const models::Domain& domain, std::size_t* ignored) {
  if (previous.size() != proposed.size() || static_cast<std::size_t>(previous.size()) != domain.dim())
    throw InputError("apply_domain_rule: dimension mismatch");
  Eigen::VectorXd out = proposed;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!domain.bounds[static_cast<std::size_t>(i)].contains(proposed[i])) {
      out[i] = previous[i];
      ++n;
    }
  }
  if (ignored) *ignored += n;
  return out;
}

namespace {

std::string describe(const Eigen::VectorXd& d) {
  std::ostringstream os;
  os << '[';
  for (Eigen::Index i = 0; i < d.size(); ++i) os << (i ? ", " : "") << d[i];
  os << ']';
  return os.str();
}

TrainResult run(const models::SimulatorModel& model, const nn::NetworkConfig& netcfg, const TrainConfig& cfg,
                Eigen::VectorXd design, bool optimize_design, const EpochCallback& on_epoch) {
  cfg.validate();
  if (netcfg.input_dim_theta != model.theta_dim() || netcfg.input_dim_y != model.data_dim())
    throw ConfigError("train: network input dimensions do not match the model");
  if (!model.domain().contains(design)) throw ConfigError("train: initial design lies outside the domain");

  TrainResult result{design, nn::init_network(netcfg), {}, 0, 0};
  auto& net = result.network;
  nn::AdamState psi_state(net.num_parameters());
  nn::AdamState design_state(static_cast<std::size_t>(design.size()));
  result.trace.reserve(cfg.epochs);
  std::vector<double> raw;
  raw.reserve(cfg.epochs);
  double last_max_t = 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      Rng rng = make_rng(cfg.seed, epoch + 1);
      const auto batch = estimator::make_batch(model, design, cfg.batch_size, rng);
      const auto ev = estimator::evaluate_bound(
          net, batch, {.grad_psi = true, .grad_design = optimize_design, .model = &model});
      result.clamp_warnings += ev.clamped;
      last_max_t = ev.max_marginal_t;

      nn::adam_step(net.parameters(), ev.grad_psi, psi_state, nn::schedule_rate(cfg.lr_psi, epoch));
      if (optimize_design) {
        Eigen::VectorXd proposed = design;
        nn::adam_step(proposed, ev.grad_design, design_state, nn::schedule_rate(cfg.lr_design, epoch));
        design = apply_domain_rule(design, proposed, model.domain(), &result.ignored_design_updates);
      }

      raw.push_back(ev.estimate.value);
      const std::size_t lo = raw.size() > cfg.moving_average_window ? raw.size() - cfg.moving_average_window : 0;
      double s = 0.0;
      for (std::size_t k = lo; k < raw.size(); ++k) s += raw[k];
      result.trace.push_back({epoch, ev.estimate.value, s / static_cast<double>(raw.size() - lo),
                              ev.estimate.standard_error, design});
      if (on_epoch) on_epoch(result.trace.back());
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "training aborted at epoch " << epoch << ", design " << describe(design)
         << ", last max marginal T " << last_max_t << ": " << e.what();
      throw NumericalError(os.str());
    }
  }
  result.design = design;
  return result;
}

Eigen::VectorXd initial_design(const models::SimulatorModel& model, const TrainConfig& cfg) {
  if (cfg.design_init) {
    if (static_cast<std::size_t>(cfg.design_init->size()) != model.design_dim())
      throw ConfigError("train: design_init has the wrong dimension");
    return *cfg.design_init;
  }
  Rng rng = make_rng(cfg.seed, 0);
  return model.domain().sample_uniform(rng);
}

}  // namespace

TrainResult train_joint(const models::SimulatorModel& model, const nn::NetworkConfig& netcfg,
                        const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (!model.has_gradients())
    throw CapabilityError(model.name() + ": joint training needs sampling-path gradients; use bo_optimize");
  return run(model, netcfg, cfg, initial_design(model, cfg), true, on_epoch);
}

TrainResult train_at_design(const models::SimulatorModel& model, const nn::NetworkConfig& netcfg,
                            const TrainConfig& cfg, const Eigen::VectorXd& design, const EpochCallback& on_epoch) {
  return run(model, netcfg, cfg, design, false, on_epoch);
}

ValidationScore validation_score(const nn::Network& net, const models::SimulatorModel& model,
                                 const Eigen::VectorXd& d, std::size_t n_sets, std::size_t set_size, Rng& rng) {
  if (n_sets == 0) throw InputError("validation_score: need at least one validation set");
  std::vector<double> values;
  values.reserve(n_sets);
  for (std::size_t k = 0; k < n_sets; ++k) {
    const auto batch = estimator::make_batch(model, d, set_size, rng);
    values.push_back(estimator::mi_lower_bound(net, batch).value);
  }
  ValidationScore s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(n_sets);
  if (n_sets == 1) {
    s.single_set = true;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(n_sets - 1));
  return s;
}

std::vector<GridEntry> grid_search(const std::vector<GridCandidate>& candidates,
                                   const models::SimulatorModel& model, const ValidationSettings& validation) {
  if (candidates.empty()) throw InputError("grid_search: candidate list is empty");
  std::vector<GridEntry> entries;
  entries.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    GridEntry e;
    e.candidate = i;
    e.label = c.label;
    try {
      TrainResult r = model.has_gradients()
                          ? train_joint(model, c.network, c.train)
                          : train_at_design(model, c.network, c.train, initial_design(model, c.train));
      Rng rng = make_rng(c.train.seed, kValidationStream);
      e.score = validation_score(r.network, model, r.design, validation.n_sets, validation.set_size, rng);
      e.design = r.design;
      e.ok = true;
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
    entries.push_back(std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(), [](const GridEntry& a, const GridEntry& b) {
    if (a.ok != b.ok) return a.ok;
    return a.score.mean > b.score.mean;
  });
  return entries;
}

}  // namespace infodesign::trainer
