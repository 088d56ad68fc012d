#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "config.hpp"
#include "infodesign/bo.hpp"
#include "infodesign/parallel.hpp"
#include "infodesign/posterior.hpp"
#include "infodesign/reference.hpp"
#include "infodesign/trainer.hpp"
#include "io.hpp"

namespace infodesign::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> threads;
  std::string network;  // default <out>/network.json
  std::string design;   // default <out>/design.csv
};

class Run {
 public:
  Run(std::string command, const Options& opt)
      : command_(std::move(command)), out_(opt.out), start_(std::chrono::steady_clock::now()) {
    cfg_ = build_config(read_config_file(opt.config));
    if (opt.seed) cfg_.seed = *opt.seed;
    network_path_ = opt.network.empty() ? out_ / "network.json" : fs::path(opt.network);
    design_path_ = opt.design.empty() ? out_ / "design.csv" : fs::path(opt.design);
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  const fs::path& network_path() const { return network_path_; }
  const fs::path& design_path() const { return design_path_; }
  json& stats() { return stats_; }

  void write(const std::string& name, const std::string& content) {
    write_file_atomic(out_ / name, content);
    json entry;
    entry["file"] = name;
    entry["bytes"] = content.size();
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016zx", std::hash<std::string>{}(content));
    entry["hash"] = hex;
    outputs_.push_back(std::move(entry));
  }

  void finish() {
    json m;
    m["command"] = command_;
    m["seed"] = cfg_.seed;
    m["threads"] = thread_count();
    json config = json::object();
    for (const auto& [k, v] : cfg_.resolved()) config[k] = v;
    m["config"] = std::move(config);
    m["outputs"] = outputs_;
    m["stats"] = stats_;
    m["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file_atomic(out_ / "manifest.json", m.dump(1) + "\n");
  }

 private:
  std::string command_;
  fs::path out_;
  fs::path network_path_, design_path_;
  ExperimentConfig cfg_;
  std::chrono::steady_clock::time_point start_;
  json outputs_ = json::array();
  json stats_ = json::object();
};

std::string clean(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void append_values(std::vector<std::string>& row, const Eigen::VectorXd& v) {
  for (double x : v) row.push_back(format_double(x));
}

void check_design(const models::SimulatorModel& model, const Eigen::VectorXd& d) {
  if (static_cast<std::size_t>(d.size()) != model.design_dim())
    throw MalformedConfigError("design has " + std::to_string(d.size()) + " coordinates; the model expects " +
                               std::to_string(model.design_dim()));
  if (!model.domain().contains(d)) throw MalformedConfigError("design lies outside the model domain");
}

NetworkSnapshot load_snapshot(const Run& run, const models::SimulatorModel& model) {
  auto snap = read_network(run.network_path());
  if (snap.model != model.name())
    throw MalformedConfigError("snapshot was trained on '" + snap.model + "', config names '" + model.name() + "'");
  const auto& c = snap.network.config();
  if (c.input_dim_theta != model.theta_dim() || c.input_dim_y != model.data_dim())
    throw MalformedConfigError("snapshot input dimensions do not match the model");
  return snap;
}

std::string trace_csv(const std::vector<trainer::TraceRecord>& trace, std::size_t dim) {
  CsvTable t;
  t.header = with({"epoch", "mi_raw", "mi_smoothed"}, indexed_columns("d", dim));
  for (const auto& r : trace) {
    std::vector<std::string> row{std::to_string(r.epoch), format_double(r.mi_raw), format_double(r.mi_smoothed)};
    append_values(row, r.design);
    t.rows.push_back(std::move(row));
  }
  return to_csv(t);
}

trainer::EpochCallback progress(std::size_t epochs) {
  const std::size_t every = std::max<std::size_t>(1, epochs / 20);
  return [every, epochs](const trainer::TraceRecord& r) {
    if ((r.epoch + 1) % every == 0 || r.epoch + 1 == epochs)
      spdlog::info("epoch {}/{}  bound {:.4f}  smoothed {:.4f}", r.epoch + 1, epochs, r.mi_raw, r.mi_smoothed);
  };
}

void cmd_train(Run& run) {
  const auto& cfg = run.cfg();
  const auto model = make_model(cfg);
  const auto net = network_config(cfg, *model);
  auto tc = cfg.train;
  tc.seed = cfg.seed;
  tc.validate();

  trainer::TrainResult res = [&] {
    if (model->has_gradients()) return trainer::train_joint(*model, net, tc, progress(tc.epochs));
    // gradient-free models train the critic at a fixed design
    Eigen::VectorXd d;
    if (tc.design_init) {
      d = *tc.design_init;
    } else {
      Rng rng = make_rng(tc.seed, 0);
      d = model->domain().sample_uniform(rng);
    }
    check_design(*model, d);
    return trainer::train_at_design(*model, net, tc, d, progress(tc.epochs));
  }();

  run.write("trace.csv", trace_csv(res.trace, model->design_dim()));
  run.write("design.csv", design_csv(res.design));
  run.write("network.json", network_json({res.network, model->name(), res.design}));
  run.stats()["clamp_warnings"] = res.clamp_warnings;
  run.stats()["ignored_design_updates"] = res.ignored_design_updates;
  run.stats()["joint"] = model->has_gradients();
  if (!res.trace.empty()) run.stats()["final_mi_smoothed"] = res.trace.back().mi_smoothed;
}

void cmd_bo(Run& run) {
  const auto& cfg = run.cfg();
  const auto model = make_model(cfg);
  const auto bc = bo_config(cfg, *model);
  const auto res = bo::bo_optimize(*model, bc);

  CsvTable probes;
  probes.header = with(with({"probe", "phase", "ok", "objective"}, indexed_columns("d", model->design_dim())), {"error"});
  std::optional<std::size_t> best_training;
  std::size_t trained = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < res.probes.size(); ++i) {
    const auto& p = res.probes[i];
    std::vector<std::string> row{std::to_string(i), p.initial ? "initial" : "ei", p.ok ? "true" : "false",
                                 p.ok ? format_double(p.objective) : "nan"};
    append_values(row, p.design);
    row.push_back(clean(p.error));
    probes.rows.push_back(std::move(row));
    if (p.ok) {
      if (p.objective > best) {
        best = p.objective;
        best_training = trained;
      }
      ++trained;
    }
  }
  run.write("probes.csv", to_csv(probes));

  json gp;
  if (res.gp) {
    gp["signal_var"] = res.gp->hyper.signal_var;
    gp["lengthscale"] = res.gp->hyper.lengthscale;
    gp["noise_var"] = res.gp->noise_var;
    gp["mean"] = res.gp->mean;
    gp["jitter"] = res.gp->jitter;
    gp["log_marginal_likelihood"] = res.gp->log_marginal_likelihood;
    gp["points"] = res.gp->X.rows();
  }
  gp["best_objective"] = res.objective;
  gp["best_design"] = std::vector<double>(res.design.data(), res.design.data() + res.design.size());
  gp["incumbent"] = res.incumbent;
  run.write("gp_summary.json", gp.dump(1) + "\n");
  run.write("design.csv", design_csv(res.design));
  if (best_training && *best_training < res.trainings.size())
    run.write("network.json", network_json({res.trainings[*best_training].network, model->name(), res.design}));
  run.stats()["best_objective"] = res.objective;
}

void cmd_posterior(Run& run) {
  const auto& cfg = run.cfg();
  const auto model = make_model(cfg);
  const auto snap = load_snapshot(run, *model);
  const auto d = read_design(run.design_path());
  check_design(*model, d);

  Eigen::VectorXd y;
  if (cfg.y_star) {
    y = *cfg.y_star;
  } else if (cfg.theta_true) {
    Rng rng = make_rng(cfg.seed, kObservationStream);
    y = model->simulate_one(*cfg.theta_true, d, model->draw_noise(rng, 1));
  } else {
    throw MalformedConfigError("posterior needs posterior.theta_true or posterior.y_star");
  }
  if (cfg.posterior_prior_samples == 0 || cfg.posterior_samples < 2)
    throw MalformedConfigError("posterior.prior_samples must be >= 1 and posterior.samples >= 2");

  Rng prior_rng = make_rng(cfg.seed, kPriorDrawStream);
  const auto prior = model->sample_prior(prior_rng, cfg.posterior_prior_samples);
  const auto est = posterior::estimate_posterior(snap.network, prior, y);
  if (est.degenerate()) spdlog::warn("posterior weights are degenerate (ess {:.1f})", est.ess);
  Rng draw_rng = make_rng(cfg.seed, kResampleStream);
  const auto samples = posterior::posterior_sample(est, cfg.posterior_samples, draw_rng);
  const auto k = model->theta_dim();

  CsvTable ys;
  ys.header = indexed_columns("y", model->data_dim());
  ys.rows.emplace_back();
  append_values(ys.rows[0], y);
  run.write("y_star.csv", to_csv(ys));

  CsvTable w;
  w.header = with(indexed_columns("theta", k), {"critic", "weight"});
  for (Eigen::Index i = 0; i < prior.rows(); ++i) {
    std::vector<std::string> row;
    append_values(row, prior.row(i).transpose());
    row.push_back(format_double(est.critic[i]));
    row.push_back(format_double(est.weights[i]));
    w.rows.push_back(std::move(row));
  }
  run.write("posterior_weights.csv", to_csv(w));

  CsvTable s;
  s.header = indexed_columns("theta", k);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    s.rows.emplace_back();
    append_values(s.rows.back(), samples.row(i).transpose());
  }
  run.write("posterior_samples.csv", to_csv(s));

  CsvTable sum;
  sum.header = {"parameter", "mean", "std", "lower_16", "upper_84"};
  const auto dims = posterior::summarize(samples);
  for (std::size_t j = 0; j < dims.size(); ++j)
    sum.rows.push_back({"theta_" + std::to_string(j), format_double(dims[j].mean), format_double(dims[j].std),
                        format_double(dims[j].lower), format_double(dims[j].upper)});
  run.write("posterior_summary.csv", to_csv(sum));
  run.stats()["ess"] = est.ess;
  run.stats()["degenerate"] = est.degenerate();
}

void cmd_reference(Run& run) {
  const auto& cfg = run.cfg();
  const auto model = make_model(cfg);
  const Eigen::VectorXd d = cfg.reference_design ? *cfg.reference_design : read_design(run.design_path());
  check_design(*model, d);
  reference::NestedMcConfig nc{cfg.reference_n, cfg.reference_m, cfg.seed};
  nc.validate();
  const auto lik = reference::likelihood_for(*model, derive_seed(cfg.seed, kKdeStream), cfg.reference_kde_samples);
  const auto r = reference::nested_mc_mi(lik, *model, d, nc);

  CsvTable t;
  t.header = {"method", "value", "standard_error"};
  t.rows.push_back({"nested_mc", format_double(r.value), format_double(r.standard_error)});
  if (model->name() == "gaussian-linear") {
    const auto& p = static_cast<const models::LinearModel&>(*model).prior();
    const Eigen::Matrix2d cov = p.std.array().square().matrix().asDiagonal();
    t.rows.push_back({"analytic", format_double(reference::analytic_mi_gaussian_linear(d, cov, 1.0)), "0"});
  }
  run.write("reference_mi.csv", to_csv(t));
  run.stats()["nested_mc"] = r.value;
}

void cmd_validate(Run& run) {
  const auto& cfg = run.cfg();
  const auto model = make_model(cfg);
  const auto snap = load_snapshot(run, *model);
  const auto d = read_design(run.design_path());
  check_design(*model, d);
  Rng rng = make_rng(cfg.seed, kValidateStream);
  const auto s = trainer::validation_score(snap.network, *model, d, cfg.validate_sets, cfg.validate_size, rng);
  CsvTable t;
  t.header = {"mean", "std", "n_sets", "set_size", "single_set"};
  t.rows.push_back({format_double(s.mean), format_double(s.std), std::to_string(cfg.validate_sets),
                    std::to_string(cfg.validate_size), s.single_set ? "true" : "false"});
  run.write("validation.csv", to_csv(t));
}

void cmd_grid(Run& run) {
  const auto& cfg = run.cfg();
  const auto model = make_model(cfg);
  const auto candidates = grid_candidates(cfg, *model);
  const auto res = trainer::grid_search(candidates, *model, {cfg.validate_sets, cfg.validate_size});
  CsvTable t;
  t.header = with(with({"rank", "candidate", "label", "ok", "mean", "std"}, indexed_columns("d", model->design_dim())),
                  {"error"});
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto& e = res[i];
    std::vector<std::string> row{std::to_string(i), std::to_string(e.candidate), e.label, e.ok ? "true" : "false",
                                 e.ok ? format_double(e.score.mean) : "nan", e.ok ? format_double(e.score.std) : "nan"};
    if (e.ok && static_cast<std::size_t>(e.design.size()) == model->design_dim())
      append_values(row, e.design);
    else
      row.insert(row.end(), model->design_dim(), "nan");
    row.push_back(clean(e.error));
    t.rows.push_back(std::move(row));
  }
  run.write("grid_results.csv", to_csv(t));
  run.stats()["candidates"] = res.size();
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Information-based experimental design for simulator models"};
  app.require_subcommand(1);
  Options opt;

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(Run&);
    bool snapshot;
    bool design;
  };
  static const Command commands[] = {
      {"train", "train critic and design; writes trace.csv, design.csv, network.json", cmd_train, false, false},
      {"bo", "Bayesian optimization over designs; writes probes.csv, gp_summary.json, design.csv", cmd_bo, false,
       false},
      {"posterior", "re-weight prior draws with a trained critic; writes posterior_samples.csv", cmd_posterior, true,
       true},
      {"reference-mi", "nested Monte-Carlo MI at a design; writes reference_mi.csv", cmd_reference, false, true},
      {"validate", "score a trained critic on fresh data; writes validation.csv", cmd_validate, true, true},
      {"grid-search", "train and rank a grid of settings; writes grid_results.csv", cmd_grid, false, false},
  };

  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "key = value config file")->required();
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--threads", opt.threads, "worker threads (default $INFODESIGN_THREADS, else 1)")
        ->check(CLI::PositiveNumber);
    if (c.snapshot) sub->add_option("--network", opt.network, "network snapshot (default <out>/network.json)");
    if (c.design) sub->add_option("--design", opt.design, "design file (default <out>/design.csv)");
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (opt.threads) set_thread_count(*opt.threads);
    for (const auto& [sub, c] : subs) {
      if (!sub->parsed()) continue;
      Run r(c->name, opt);
      c->fn(r);
      r.finish();
    }
    return kOk;
  } catch (const UnknownModelError& e) {
    spdlog::error("{}", e.what());
    return kUnknownModel;
  } catch (const MissingSnapshotError& e) {
    spdlog::error("{}", e.what());
    return kMissingSnapshot;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kMalformedConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage{"infodesign"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace infodesign::cli
