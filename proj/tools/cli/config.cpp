#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "infodesign/random.hpp"
#include "io.hpp"

namespace infodesign::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::uint64_t to_u64(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw MalformedConfigError("not an unsigned integer: '" + s + "'");
  try {
    return std::stoull(s);
  } catch (const std::out_of_range&) {
    throw MalformedConfigError("integer out of range: '" + s + "'");
  }
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(to_u64(s)); }

double to_double(const std::string& s) {
  const double v = parse_double(s);
  if (!std::isfinite(v)) throw MalformedConfigError("not a finite number: '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw MalformedConfigError("expected true or false: '" + s + "'");
}

Eigen::VectorXd to_vector(const std::string& s) {
  const auto items = split(s, ',');
  if (items.empty()) throw MalformedConfigError("empty list");
  Eigen::VectorXd v(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) v[static_cast<Eigen::Index>(i)] = to_double(items[i]);
  return v;
}

Eigen::Vector2d to_pair(const std::string& s) {
  const auto v = to_vector(s);
  if (v.size() != 2) throw MalformedConfigError("expected two values: '" + s + "'");
  return v;
}

std::vector<std::size_t> to_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split(s, ',')) out.push_back(to_size(item));
  if (out.empty()) throw MalformedConfigError("empty list");
  return out;
}

template <class T, class F>
std::vector<T> alternatives(const std::string& s, F parse) {
  std::vector<T> out;
  for (const auto& item : split(s, ';')) out.push_back(parse(item));
  if (out.empty()) throw MalformedConfigError("empty alternative list");
  return out;
}

std::string show(double x) { return format_double(x); }
std::string show(std::uint64_t x) { return std::to_string(x); }
std::string show(bool b) { return b ? "true" : "false"; }

std::string show(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string show(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <class T, class F>
std::string show_alternatives(const std::vector<T>& v, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + f(v[i]);
  return s;
}

template <class T>
std::string show_opt(const std::optional<T>& v) {
  return v ? show(*v) : std::string{};
}

bool is_linear(const std::string& m) { return m == "linear" || m == "gaussian-linear"; }

double default_t_max(const std::string& m) { return m == "pk" ? 24.0 : 4.0 * std::numbers::pi; }

struct Field {
  const char* key;
  const char* doc;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> f = {
      {"seed", "master seed; --seed overrides",
       [](C& c, const std::string& v) { c.seed = to_u64(v); }, [](const C& c) { return show(c.seed); }},
      {"model.name", "linear | gaussian-linear | pk | oscillatory",
       [](C& c, const std::string& v) { c.model = v; }, [](const C& c) { return c.model; }},
      {"model.design_dim", "number of design coordinates D",
       [](C& c, const std::string& v) { c.design_dim = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.design_dim}); }},
      {"model.bound", "linear models: design box [-bound, bound] (default 10)",
       [](C& c, const std::string& v) { c.bound = to_double(v); },
       [](const C& c) { return is_linear(c.model) ? show(c.bound.value_or(10.0)) : std::string{}; }},
      {"model.t_max", "pk, oscillatory: design box [0, t_max] (defaults 24 and 4 pi)",
       [](C& c, const std::string& v) { c.t_max = to_double(v); },
       [](const C& c) { return is_linear(c.model) ? std::string{} : show(c.t_max.value_or(default_t_max(c.model))); }},
      {"model.gradients", "oscillatory: expose design gradients (default false)",
       [](C& c, const std::string& v) { c.gradients = to_bool(v); },
       [](const C& c) { return c.model == "oscillatory" ? show(c.gradients) : std::string{}; }},
      {"prior.mean", "linear models: prior mean of (theta_0, theta_1)",
       [](C& c, const std::string& v) { c.prior_mean = to_pair(v); },
       [](const C& c) { return is_linear(c.model) ? show(Eigen::VectorXd(c.prior_mean.value_or(models::LinearPrior{}.mean))) : std::string{}; }},
      {"prior.std", "linear models: prior std of (theta_0, theta_1); 0 pins a coordinate",
       [](C& c, const std::string& v) { c.prior_std = to_pair(v); },
       [](const C& c) { return is_linear(c.model) ? show(Eigen::VectorXd(c.prior_std.value_or(models::LinearPrior{}.std))) : std::string{}; }},
      {"network.hidden", "hidden layer widths, comma separated",
       [](C& c, const std::string& v) { c.hidden = to_sizes(v); }, [](const C& c) { return show(c.hidden); }},
      {"network.seed", "initialization seed (default derived from seed)",
       [](C& c, const std::string& v) { c.network_seed = to_u64(v); },
       [](const C& c) { return show(c.network_seed.value_or(derive_seed(c.seed, kNetworkSeedStream))); }},
      {"train.epochs", "gradient steps",
       [](C& c, const std::string& v) { c.train.epochs = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.train.epochs}); }},
      {"train.batch_size", "samples per epoch N",
       [](C& c, const std::string& v) { c.train.batch_size = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.train.batch_size}); }},
      {"train.lr_psi", "critic learning rate",
       [](C& c, const std::string& v) { c.train.lr_psi.initial_rate = to_double(v); },
       [](const C& c) { return show(c.train.lr_psi.initial_rate); }},
      {"train.lr_psi_multiplier", "critic rate multiplier per period",
       [](C& c, const std::string& v) { c.train.lr_psi.multiplier = to_double(v); },
       [](const C& c) { return show(c.train.lr_psi.multiplier); }},
      {"train.lr_psi_period", "epochs between critic rate changes",
       [](C& c, const std::string& v) { c.train.lr_psi.period = to_u64(v); },
       [](const C& c) { return show(c.train.lr_psi.period); }},
      {"train.lr_design", "design learning rate; 0 freezes the design",
       [](C& c, const std::string& v) { c.train.lr_design.initial_rate = to_double(v); },
       [](const C& c) { return show(c.train.lr_design.initial_rate); }},
      {"train.lr_design_multiplier", "design rate multiplier per period",
       [](C& c, const std::string& v) { c.train.lr_design.multiplier = to_double(v); },
       [](const C& c) { return show(c.train.lr_design.multiplier); }},
      {"train.lr_design_period", "epochs between design rate changes",
       [](C& c, const std::string& v) { c.train.lr_design.period = to_u64(v); },
       [](const C& c) { return show(c.train.lr_design.period); }},
      {"train.design_init", "starting design (default uniform draw)",
       [](C& c, const std::string& v) { c.train.design_init = to_vector(v); },
       [](const C& c) { return show_opt(c.train.design_init); }},
      {"train.window", "moving-average window for the smoothed trace",
       [](C& c, const std::string& v) { c.train.moving_average_window = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.train.moving_average_window}); }},
      {"bo.initial", "space-filling probes before EI",
       [](C& c, const std::string& v) { c.bo_initial = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.bo_initial}); }},
      {"bo.budget", "total probes",
       [](C& c, const std::string& v) { c.bo_budget = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.bo_budget}); }},
      {"bo.restarts", "local searches per EI maximization",
       [](C& c, const std::string& v) { c.bo_restarts = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.bo_restarts}); }},
      {"bo.validation_sets", "validation sets per probe",
       [](C& c, const std::string& v) { c.bo_validation_sets = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.bo_validation_sets}); }},
      {"bo.validation_size", "samples per validation set",
       [](C& c, const std::string& v) { c.bo_validation_size = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.bo_validation_size}); }},
      {"bo.gp_restarts", "hyperparameter search starts",
       [](C& c, const std::string& v) { c.bo_gp_restarts = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.bo_gp_restarts}); }},
      {"bo.noise_floor", "lower bound on the GP noise variance",
       [](C& c, const std::string& v) { c.bo_noise_floor = to_double(v); },
       [](const C& c) { return show(c.bo_noise_floor); }},
      {"reference.n", "nested MC outer samples",
       [](C& c, const std::string& v) { c.reference_n = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.reference_n}); }},
      {"reference.m", "nested MC inner samples",
       [](C& c, const std::string& v) { c.reference_m = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.reference_m}); }},
      {"reference.kde_samples", "noise draws for the linear-model KDE likelihood",
       [](C& c, const std::string& v) { c.reference_kde_samples = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.reference_kde_samples}); }},
      {"reference.design", "design to evaluate (default: --design file)",
       [](C& c, const std::string& v) { c.reference_design = to_vector(v); },
       [](const C& c) { return show_opt(c.reference_design); }},
      {"validate.sets", "validation sets",
       [](C& c, const std::string& v) { c.validate_sets = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.validate_sets}); }},
      {"validate.size", "samples per validation set",
       [](C& c, const std::string& v) { c.validate_size = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.validate_size}); }},
      {"posterior.theta_true", "parameters that generate the observation y*",
       [](C& c, const std::string& v) { c.theta_true = to_vector(v); },
       [](const C& c) { return show_opt(c.theta_true); }},
      {"posterior.y_star", "observation given directly instead of simulated",
       [](C& c, const std::string& v) { c.y_star = to_vector(v); }, [](const C& c) { return show_opt(c.y_star); }},
      {"posterior.prior_samples", "prior draws to re-weight",
       [](C& c, const std::string& v) { c.posterior_prior_samples = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.posterior_prior_samples}); }},
      {"posterior.samples", "posterior draws written",
       [](C& c, const std::string& v) { c.posterior_samples = to_size(v); },
       [](const C& c) { return show(std::uint64_t{c.posterior_samples}); }},
      {"grid.hidden", "';'-separated alternatives, e.g. 50;100;50,50",
       [](C& c, const std::string& v) { c.grid.hidden = alternatives<std::vector<std::size_t>>(v, to_sizes); },
       [](const C& c) { return show_alternatives(c.grid.hidden, [](const auto& h) { return show(h); }); }},
      {"grid.lr_psi", "';'-separated critic rates",
       [](C& c, const std::string& v) { c.grid.lr_psi = alternatives<double>(v, to_double); },
       [](const C& c) { return show_alternatives(c.grid.lr_psi, [](double x) { return show(x); }); }},
      {"grid.lr_design", "';'-separated design rates",
       [](C& c, const std::string& v) { c.grid.lr_design = alternatives<double>(v, to_double); },
       [](const C& c) { return show_alternatives(c.grid.lr_design, [](double x) { return show(x); }); }},
      {"grid.batch_size", "';'-separated batch sizes",
       [](C& c, const std::string& v) { c.grid.batch_size = alternatives<std::size_t>(v, to_size); },
       [](const C& c) { return show_alternatives(c.grid.batch_size, [](std::size_t x) { return show(std::uint64_t{x}); }); }},
  };
  return f;
}

}  // namespace

RawConfig parse_config_text(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw MalformedConfigError("line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw MalformedConfigError("line " + std::to_string(lineno) + ": empty key");
    raw.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return raw;
}

RawConfig read_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw MalformedConfigError(e.what());
  }
  return parse_config_text(text);
}

const std::vector<std::pair<std::string, std::string>>& config_schema() {
  static const auto schema = [] {
    std::vector<std::pair<std::string, std::string>> s;
    for (const auto& f : fields()) s.emplace_back(f.key, f.doc);
    return s;
  }();
  return schema;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::resolved() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields())
    if (auto v = f.get(*this); !v.empty()) out.emplace_back(f.key, std::move(v));
  return out;
}

ExperimentConfig build_config(const RawConfig& raw) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  for (const auto& [key, value] : raw) {
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (key == f.key) field = &f;
    if (!field) throw MalformedConfigError("unknown key '" + key + "'");
    if (!seen.insert(key).second) throw MalformedConfigError("repeated key '" + key + "'");
    try {
      field->set(cfg, value);
    } catch (const MalformedConfigError& e) {
      throw MalformedConfigError(key + ": " + e.what());
    }
  }

  const auto& m = cfg.model;
  if (m.empty()) throw UnknownModelError("model.name is required");
  if (!is_linear(m) && m != "pk" && m != "oscillatory") throw UnknownModelError("unknown model '" + m + "'");
  if (cfg.design_dim == 0) throw MalformedConfigError("model.design_dim must be >= 1");
  if (m == "oscillatory" && cfg.design_dim != 1) throw MalformedConfigError("oscillatory model has a scalar design");
  if (!is_linear(m) && (cfg.bound || cfg.prior_mean || cfg.prior_std))
    throw MalformedConfigError("model.bound and prior.* apply to linear models only");
  if (is_linear(m) && cfg.t_max) throw MalformedConfigError("model.t_max applies to pk and oscillatory only");
  if (m != "oscillatory" && seen.count("model.gradients"))
    throw MalformedConfigError("model.gradients applies to the oscillatory model only");
  return cfg;
}

std::unique_ptr<models::SimulatorModel> make_model(const ExperimentConfig& cfg) {
  std::unique_ptr<models::SimulatorModel> model;
  if (is_linear(cfg.model)) {
    models::LinearPrior prior;
    if (cfg.prior_mean) prior.mean = *cfg.prior_mean;
    if (cfg.prior_std) prior.std = *cfg.prior_std;
    if ((prior.std.array() < 0.0).any()) throw MalformedConfigError("prior.std must be >= 0");
    model = std::make_unique<models::LinearModel>(cfg.design_dim, cfg.model == "linear", prior, cfg.bound.value_or(10.0));
  } else if (cfg.model == "pk") {
    model = std::make_unique<models::PkModel>(cfg.design_dim, cfg.t_max.value_or(24.0));
  } else if (cfg.model == "oscillatory") {
    model = std::make_unique<models::OscillatoryModel>(cfg.t_max.value_or(default_t_max(cfg.model)), !cfg.gradients);
  } else {
    throw UnknownModelError("unknown model '" + cfg.model + "'");
  }
  if (cfg.theta_true && static_cast<std::size_t>(cfg.theta_true->size()) != model->theta_dim())
    throw MalformedConfigError("posterior.theta_true has " + std::to_string(cfg.theta_true->size()) +
                               " values; the model has " + std::to_string(model->theta_dim()) + " parameters");
  if (cfg.y_star && static_cast<std::size_t>(cfg.y_star->size()) != model->data_dim())
    throw MalformedConfigError("posterior.y_star length does not match the data dimension");
  return model;
}

nn::NetworkConfig network_config(const ExperimentConfig& cfg, const models::SimulatorModel& model) {
  nn::NetworkConfig n;
  n.input_dim_theta = model.theta_dim();
  n.input_dim_y = model.data_dim();
  n.hidden_layer_sizes = cfg.hidden;
  n.seed = cfg.network_seed.value_or(derive_seed(cfg.seed, kNetworkSeedStream));
  n.validate();
  return n;
}

bo::BoConfig bo_config(const ExperimentConfig& cfg, const models::SimulatorModel& model) {
  bo::BoConfig b;
  b.initial_probe_count = cfg.bo_initial;
  b.budget = cfg.bo_budget;
  b.acquisition_restarts = cfg.bo_restarts;
  b.network = network_config(cfg, model);
  b.train = cfg.train;
  b.train.seed = cfg.seed;
  b.validation_sets = cfg.bo_validation_sets;
  b.validation_size = cfg.bo_validation_size;
  b.seed = cfg.seed;
  b.gp.restarts = cfg.bo_gp_restarts;
  b.gp.noise_floor = cfg.bo_noise_floor;
  b.gp.seed = cfg.seed;
  b.validate();
  return b;
}

std::vector<trainer::GridCandidate> grid_candidates(const ExperimentConfig& cfg, const models::SimulatorModel& model) {
  const auto base_net = network_config(cfg, model);
  auto base_train = cfg.train;
  base_train.seed = cfg.seed;

  const auto hidden = cfg.grid.hidden.empty() ? std::vector<std::vector<std::size_t>>{cfg.hidden} : cfg.grid.hidden;
  const auto lr_psi = cfg.grid.lr_psi.empty() ? std::vector{cfg.train.lr_psi.initial_rate} : cfg.grid.lr_psi;
  const auto lr_design =
      cfg.grid.lr_design.empty() ? std::vector{cfg.train.lr_design.initial_rate} : cfg.grid.lr_design;
  const auto batch = cfg.grid.batch_size.empty() ? std::vector{cfg.train.batch_size} : cfg.grid.batch_size;

  std::vector<trainer::GridCandidate> out;
  for (const auto& h : hidden)
    for (double lp : lr_psi)
      for (double ld : lr_design)
        for (std::size_t n : batch) {
          trainer::GridCandidate c{base_net, base_train, {}};
          c.network.hidden_layer_sizes = h;
          c.train.lr_psi.initial_rate = lp;
          c.train.lr_design.initial_rate = ld;
          c.train.batch_size = n;
          std::string widths = show(h);
          std::replace(widths.begin(), widths.end(), ',', 'x');
          c.label = "hidden=" + widths + " lr_psi=" + show(lp) + " lr_design=" + show(ld) +
                    " batch_size=" + std::to_string(n);
          out.push_back(std::move(c));
        }
  return out;
}

}  // namespace infodesign::cli
