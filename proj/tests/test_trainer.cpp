#include <doctest.h>

#include <cmath>
#include <vector>

#include "infodesign/errors.hpp"
#include "infodesign/trainer.hpp"

using namespace infodesign;
using namespace infodesign::trainer;

namespace {

nn::NetworkConfig critic_for(const models::SimulatorModel& m, std::vector<std::size_t> hidden, std::uint64_t seed) {
  nn::NetworkConfig c;
  c.input_dim_theta = m.theta_dim();
  c.input_dim_y = m.data_dim();
  c.hidden_layer_sizes = std::move(hidden);
  c.seed = seed;
  return c;
}

TrainConfig small(std::size_t epochs, std::uint64_t seed) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 256;
  c.lr_psi = {1e-3, 1.0, 1000};
  c.lr_design = {5e-2, 1.0, 1000};
  c.seed = seed;
  c.moving_average_window = 10;
  return c;
}

bool same(const TrainResult& a, const TrainResult& b) {
  if (!(a.network == b.network) || a.design != b.design || a.trace.size() != b.trace.size()) return false;
  for (std::size_t i = 0; i < a.trace.size(); ++i)
    if (a.trace[i].mi_raw != b.trace[i].mi_raw || a.trace[i].design != b.trace[i].design) return false;
  return true;
}

}  // namespace

TEST_CASE("domain rule ignores offending coordinates") {
  const models::Domain box{{{-10, 10}}};
  CHECK(apply_domain_rule(Eigen::VectorXd::Constant(1, -9.9), Eigen::VectorXd::Constant(1, -10.4), box)[0] == -9.9);
  CHECK(apply_domain_rule(Eigen::VectorXd::Constant(1, -9.9), Eigen::VectorXd::Constant(1, -9.95), box)[0] == -9.95);
  CHECK(apply_domain_rule(Eigen::VectorXd::Constant(1, 9.0), Eigen::VectorXd::Constant(1, 10.0), box)[0] == 10.0);

  const models::Domain box3{{{-10, 10}, {-10, 10}, {0, 1}}};
  std::size_t ignored = 0;
  const Eigen::Vector3d prev{1, 2, 0.5}, prop{11, 3, -0.1};
  const auto out = apply_domain_rule(prev, prop, box3, &ignored);
  CHECK(out == Eigen::Vector3d{1, 3, 0.5});
  CHECK(ignored == 2);
  CHECK_THROWS_AS(apply_domain_rule(prev, Eigen::Vector2d{0, 0}, box3), InputError);
}

TEST_CASE("zero epochs returns the initial state") {
  models::LinearModel m(3, true);
  const auto net = critic_for(m, {8}, 5);
  auto cfg = small(0, 9);
  const auto r = train_joint(m, net, cfg);
  CHECK(r.trace.empty());
  CHECK(r.network == nn::init_network(net));
  Rng rng = make_rng(cfg.seed, 0);
  CHECK(r.design == m.domain().sample_uniform(rng));

  cfg.design_init = Eigen::Vector3d{1, -2, 3};
  CHECK(train_joint(m, net, cfg).design == *cfg.design_init);
}

TEST_CASE("trace invariants") {
  models::LinearModel m(3, true);
  auto cfg = small(60, 2);
  cfg.lr_design = {2.0, 1.0, 1000};  // large steps push coordinates against the walls
  std::size_t callbacks = 0;
  const auto r = train_joint(m, critic_for(m, {16}, 1), cfg, [&](const TraceRecord&) { ++callbacks; });
  REQUIRE(r.trace.size() == 60);
  CHECK(callbacks == 60);
  CHECK(r.design == r.trace.back().design);
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    CHECK(r.trace[i].epoch == i);
    CHECK(m.domain().contains(r.trace[i].design));
    CHECK(std::isfinite(r.trace[i].mi_raw));
  }
  CHECK(r.ignored_design_updates > 0);
  std::vector<double> raw;
  for (const auto& t : r.trace) raw.push_back(t.mi_raw);
  const auto ma = estimator::moving_average(raw, cfg.moving_average_window);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(r.trace[i].mi_smoothed == doctest::Approx(ma[i]).epsilon(1e-12));
}

TEST_CASE("identical seeds give identical runs") {
  models::PkModel m(2);
  const auto net = critic_for(m, {12}, 3);
  const auto a = train_joint(m, net, small(25, 17));
  const auto b = train_joint(m, net, small(25, 17));
  CHECK(same(a, b));
  const auto c = train_joint(m, net, small(25, 18));
  CHECK_FALSE(same(a, c));
}

TEST_CASE("zero design rate reduces to training at a fixed design") {
  models::LinearModel m(2, false);
  const auto net = critic_for(m, {10}, 4);
  auto cfg = small(30, 6);
  cfg.lr_design.initial_rate = 0.0;
  cfg.design_init = Eigen::Vector2d{3.0, -7.0};
  const auto a = train_joint(m, net, cfg);
  const auto b = train_at_design(m, net, cfg, *cfg.design_init);
  CHECK(a.design == *cfg.design_init);
  CHECK(same(a, b));
}

TEST_CASE("fixed-design training tightens the bound") {
  // final-quartile smoothed trace rises, majority over three seeds
  models::LinearModel m(1, false);
  const Eigen::VectorXd d = Eigen::VectorXd::Constant(1, 3.0);
  int rising = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto cfg = small(400, seed);
    cfg.batch_size = 2000;
    cfg.moving_average_window = 25;
    const auto r = train_at_design(m, critic_for(m, {32}, seed), cfg, d);
    const double q3 = r.trace[300].mi_smoothed, end = r.trace.back().mi_smoothed;
    if (end >= q3) ++rising;
  }
  CHECK(rising >= 2);
}

TEST_CASE("joint training needs gradients") {
  models::OscillatoryModel m;
  CHECK_THROWS_AS(train_joint(m, critic_for(m, {4}, 0), small(3, 0)), CapabilityError);
  CHECK_NOTHROW(train_at_design(m, critic_for(m, {4}, 0), small(3, 0), Eigen::VectorXd::Constant(1, 2.0)));
}

TEST_CASE("training rejects bad configuration") {
  models::LinearModel m(1, true);
  auto cfg = small(3, 0);
  cfg.batch_size = 1;
  CHECK_THROWS_AS(train_joint(m, critic_for(m, {4}, 0), cfg), ConfigError);
  cfg = small(3, 0);
  cfg.design_init = Eigen::VectorXd::Constant(1, 11.0);
  CHECK_THROWS_AS(train_joint(m, critic_for(m, {4}, 0), cfg), ConfigError);
  cfg.design_init = Eigen::Vector2d{0, 0};
  CHECK_THROWS_AS(train_joint(m, critic_for(m, {4}, 0), cfg), ConfigError);
  models::PkModel pk(1);
  CHECK_THROWS_AS(train_joint(m, critic_for(pk, {4}, 0), small(3, 0)), ConfigError);
}

TEST_CASE("validation score") {
  models::LinearModel m(1, true);
  auto net = nn::init_network(critic_for(m, {4}, 0));
  net.parameters().setZero();
  net.bias(net.num_layers() - 1)[0] = 1.0;  // T == 1
  Rng rng(0);
  const auto s = validation_score(net, m, Eigen::VectorXd::Constant(1, 2.0), 5, 500, rng);
  CHECK(std::abs(s.mean) < 1e-15);
  CHECK(s.std < 1e-15);
  CHECK_FALSE(s.single_set);

  const auto one = validation_score(nn::init_network(critic_for(m, {4}, 0)), m, Eigen::VectorXd::Constant(1, 2.0), 1,
                                    500, rng);
  CHECK(one.single_set);
  CHECK(one.std == 0.0);
  CHECK_THROWS_AS(validation_score(net, m, Eigen::VectorXd::Constant(1, 2.0), 0, 500, rng), InputError);
}

TEST_CASE("grid search ranking") {
  models::LinearModel m(1, true);
  const ValidationSettings v{3, 500};
  GridCandidate c{critic_for(m, {8}, 1), small(20, 5), "h8"};

  const auto single = grid_search({c}, m, v);
  REQUIRE(single.size() == 1);
  CHECK(single[0].ok);
  CHECK(single[0].label == "h8");

  const auto twin = grid_search({c, c}, m, v);
  CHECK(twin[0].score.mean == twin[1].score.mean);
  CHECK(twin[0].score.std == twin[1].score.std);

  GridCandidate bad = c;
  bad.label = "bad";
  bad.train.batch_size = 0;
  GridCandidate wide{critic_for(m, {24}, 2), small(20, 6), "h24"};
  const auto mixed = grid_search({bad, c, wide}, m, v);
  REQUIRE(mixed.size() == 3);
  CHECK(mixed[0].ok);
  CHECK(mixed[1].ok);
  CHECK(mixed[0].score.mean >= mixed[1].score.mean);
  CHECK_FALSE(mixed[2].ok);
  CHECK(mixed[2].label == "bad");
  CHECK_FALSE(mixed[2].error.empty());
  CHECK_THROWS_AS(grid_search({}, m, v), InputError);
}

TEST_CASE("grid search trains gradient-free models at their initial design") {
  models::OscillatoryModel m;
  auto cfg = small(10, 1);
  cfg.design_init = Eigen::VectorXd::Constant(1, 1.0);
  const auto r = grid_search({{critic_for(m, {8}, 0), cfg, "osc"}}, m, {2, 300});
  REQUIRE(r[0].ok);
  CHECK(r[0].design[0] == 1.0);
}
