#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "infodesign/errors.hpp"
#include "infodesign/estimator.hpp"
#include "support/fd_support.hpp"

using namespace infodesign;
using namespace infodesign::estimator;
using namespace infodesign::testing;

namespace {

nn::NetworkConfig critic_for(const models::SimulatorModel& m, std::vector<std::size_t> hidden, std::uint64_t seed) {
  nn::NetworkConfig c;
  c.input_dim_theta = m.theta_dim();
  c.input_dim_y = m.data_dim();
  c.hidden_layer_sizes = std::move(hidden);
  c.seed = seed;
  return c;
}

nn::Network constant_critic(const models::SimulatorModel& m, double c) {
  auto net = nn::init_network(critic_for(m, {4}, 0));
  net.parameters().setZero();
  net.bias(net.num_layers() - 1)[0] = c;
  return net;
}

Batch permuted(const Batch& b, const std::vector<Eigen::Index>& p) {
  auto perm = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (std::size_t i = 0; i < p.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(p[i]);
    return out;
  };
  Batch out = b;
  out.theta = perm(b.theta);
  out.y = perm(b.y);
  out.theta_marginal = perm(b.theta_marginal);
  out.y_marginal = perm(b.y_marginal);
  out.noise.eps = perm(b.noise.eps);
  out.noise_marginal.eps = perm(b.noise_marginal.eps);
  if (b.noise.nu.size() > 0) {
    out.noise.nu = perm(b.noise.nu);
    out.noise_marginal.nu = perm(b.noise_marginal.nu);
  }
  return out;
}

Batch duplicated(const Batch& b) {
  auto stack = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(2 * m.rows(), m.cols());
    out << m, m;
    return out;
  };
  Batch out = b;
  out.theta = stack(b.theta);
  out.y = stack(b.y);
  out.theta_marginal = stack(b.theta_marginal);
  out.y_marginal = stack(b.y_marginal);
  out.noise.eps = stack(b.noise.eps);
  out.noise_marginal.eps = stack(b.noise_marginal.eps);
  if (b.noise.nu.size() > 0) {
    out.noise.nu = stack(b.noise.nu);
    out.noise_marginal.nu = stack(b.noise_marginal.nu);
  }
  return out;
}

}  // namespace

TEST_CASE("make_batch rows replay through the sampling path") {
  models::LinearModel m(2, true);
  Rng rng(1);
  const Eigen::Vector2d d{1.5, -4.0};
  const auto b = make_batch(m, d, 3, rng);
  REQUIRE(b.size() == 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(b.y.row(i).transpose() ==
          models::linear_sample(b.theta.row(i).transpose(), d, b.noise.row(i)));
    CHECK(b.y_marginal.row(i).transpose() ==
          models::linear_sample(b.theta_marginal.row(i).transpose(), d, b.noise_marginal.row(i)));
  }
  CHECK(b.design == d);
}

TEST_CASE("make_batch determinism and errors") {
  models::PkModel m(2);
  const Eigen::Vector2d d{1.0, 5.0};
  Rng a(42), b(42);
  const auto x = make_batch(m, d, 50, a);
  const auto y = make_batch(m, d, 50, b);
  CHECK(x.theta == y.theta);
  CHECK(x.y == y.y);
  CHECK(x.y_marginal == y.y_marginal);
  CHECK_THROWS_AS(make_batch(m, d, 1, a), InputError);
  CHECK_THROWS_AS(make_batch(m, Eigen::Vector2d{1.0, 30.0}, 10, a), InputError);
}

TEST_CASE("theta and theta' blocks are independent") {
  models::LinearModel m(1, true);
  Rng rng(7);
  const auto b = make_batch(m, Eigen::VectorXd::Zero(1), 100000, rng);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const Eigen::ArrayXd u = b.theta.col(j).array() - b.theta.col(j).mean();
    const Eigen::ArrayXd v = b.theta_marginal.col(j).array() - b.theta_marginal.col(j).mean();
    const double corr = (u * v).sum() / std::sqrt(u.square().sum() * v.square().sum());
    CHECK(std::abs(corr) < 0.01);
  }
  // fresh marginal noise too
  const Eigen::ArrayXd e = b.noise.eps.col(0).array(), f = b.noise_marginal.eps.col(0).array();
  CHECK(std::abs(((e - e.mean()) * (f - f.mean())).mean()) < 0.01);
}

TEST_CASE("constant critic identity") {
  models::LinearModel m(1, true);
  Rng rng(3);
  const auto b = make_batch(m, Eigen::VectorXd::Constant(1, 2.0), 1000, rng);
  for (double c : {-2.0, 0.0, 0.5, 1.0, 3.0}) {
    const auto est = mi_lower_bound(constant_critic(m, c), b);
    CHECK(est.value == doctest::Approx(c - std::exp(c - 1.0)).epsilon(1e-13));
    CHECK(est.value <= 1e-15);
    CHECK(est.value == doctest::Approx(est.joint_term - std::exp(-1.0) * est.marginal_term).epsilon(1e-15));
  }
  CHECK(std::abs(mi_lower_bound(constant_critic(m, 1.0), b).value) < 1e-15);
}

TEST_CASE("bound is invariant under row permutations") {
  models::PkModel m(3);
  Rng rng(5);
  const auto b = make_batch(m, Eigen::Vector3d{0.5, 4.0, 12.0}, 1500, rng);
  const auto net = nn::init_network(critic_for(m, {16, 8}, 9));
  std::vector<Eigen::Index> p(1500);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  const auto s = permuted(b, p);
  const auto x = evaluate_bound(net, b, {.grad_psi = true, .grad_design = true, .model = &m});
  const auto y = evaluate_bound(net, s, {.grad_psi = true, .grad_design = true, .model = &m});
  CHECK(y.estimate.value == doctest::Approx(x.estimate.value).epsilon(1e-12));
  CHECK(rel(y.grad_psi, x.grad_psi) < 1e-12);
  CHECK(rel(y.grad_design, x.grad_design) < 1e-12);
}

TEST_CASE("grad_psi matches finite differences") {
  models::LinearModel m(2, true);
  Rng rng(11);
  const auto full = make_batch(m, Eigen::Vector2d{-3.0, 7.0}, 400, rng);
  auto net = nn::init_network(critic_for(m, {12, 6}, 4));
  REQUIRE(static_cast<std::size_t>(grad_psi(net, full).size()) == net.num_parameters());
  std::uniform_int_distribution<std::size_t> pick(0, net.num_parameters() - 1);
  const double h = 1e-5;
  Eigen::VectorXd fd(20), an(20);
  std::size_t dropped = 0;
  for (int k = 0; k < 20; ++k) {
    const auto j = static_cast<Eigen::Index>(pick(rng));
    auto up = net, dn = net;
    up.parameters()[j] += h;
    dn.parameters()[j] -= h;
    const auto rows = smooth_rows({{&net, &full}, {&up, &full}, {&dn, &full}});
    dropped += static_cast<std::size_t>(full.size()) - rows.size();
    const auto b = select_rows(full, rows);
    fd[k] = (mi_lower_bound(up, b).value - mi_lower_bound(dn, b).value) / (2.0 * h);
    an[k] = grad_psi(net, b)[j];
  }
  CHECK(dropped < 40);
  CHECK(rel(an, fd) < 1e-5);
}

TEST_CASE("grad_psi cancels on an identical joint and marginal row at T = 1") {
  models::LinearModel m(1, false);
  auto net = nn::init_network(critic_for(m, {5}, 2));
  Batch b;
  b.design = Eigen::VectorXd::Constant(1, 1.0);
  b.theta = Eigen::RowVector2d{0.4, -0.3};
  b.y = Eigen::MatrixXd::Constant(1, 1, 0.7);
  b.theta_marginal = b.theta;
  b.y_marginal = b.y;
  b.noise.eps = Eigen::MatrixXd::Zero(1, 1);
  b.noise_marginal = b.noise;
  const double t0 = nn::forward(net, {b.theta.data(), 2}, {b.y.data(), 1});
  net.bias(net.num_layers() - 1)[0] += 1.0 - t0;
  CHECK(grad_psi(net, b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("gradients are unchanged when every row is duplicated") {
  models::PkModel m(2);
  Rng rng(13);
  const auto b = make_batch(m, Eigen::Vector2d{1.0, 8.0}, 300, rng);
  const auto net = nn::init_network(critic_for(m, {10}, 6));
  const auto x = evaluate_bound(net, b, {.grad_psi = true, .grad_design = true, .model = &m});
  const auto y = evaluate_bound(net, duplicated(b), {.grad_psi = true, .grad_design = true, .model = &m});
  CHECK(y.estimate.value == doctest::Approx(x.estimate.value).epsilon(1e-13));
  CHECK(rel(y.grad_psi, x.grad_psi) < 1e-13);
  CHECK(rel(y.grad_design, x.grad_design) < 1e-13);
}

TEST_CASE("grad_design matches common-random-number finite differences") {
  std::vector<std::unique_ptr<models::SimulatorModel>> ms;
  ms.push_back(std::make_unique<models::LinearModel>(3, true));
  ms.push_back(std::make_unique<models::LinearModel>(3, false));
  ms.push_back(std::make_unique<models::PkModel>(3));
  ms.push_back(std::make_unique<models::OscillatoryModel>(4.0 * std::numbers::pi, false));
  for (const auto& m : ms) {
    CAPTURE(m->name());
    Rng rng(31);
    // keep away from the domain edges so d +- h stays inside
    Eigen::VectorXd d = m->domain().sample_uniform(rng);
    for (Eigen::Index j = 0; j < d.size(); ++j) {
      const auto& iv = m->domain().bounds[static_cast<std::size_t>(j)];
      d[j] = iv.lower + 0.1 * (iv.upper - iv.lower) + 0.8 * (d[j] - iv.lower);
    }
    const auto full = make_batch(*m, d, 800, rng);
    const auto net = nn::init_network(critic_for(*m, {16, 8}, 3));
    REQUIRE(static_cast<std::size_t>(grad_design(net, full, *m).size()) == m->design_dim());
    const double h = 1e-4;
    Eigen::VectorXd fd(d.size()), g(d.size());
    std::size_t dropped = 0;
    for (Eigen::Index j = 0; j < d.size(); ++j) {
      Eigen::VectorXd dp = d, dm = d;
      dp[j] += h;
      dm[j] -= h;
      const auto bp = rebatch_at(*m, full, dp), bm = rebatch_at(*m, full, dm);
      const auto rows = smooth_rows({{&net, &full}, {&net, &bp}, {&net, &bm}});
      dropped += static_cast<std::size_t>(full.size()) - rows.size();
      fd[j] = (mi_lower_bound(net, select_rows(bp, rows)).value - mi_lower_bound(net, select_rows(bm, rows)).value) /
              (2.0 * h);
      g[j] = grad_design(net, select_rows(full, rows), *m)[j];
    }
    CHECK(dropped < 40);
    CHECK(rel(g, fd) < 1e-4);
  }
}

TEST_CASE("grad_design is zero when the slope is pinned at zero") {
  models::LinearModel m(2, true, models::LinearPrior{{0.0, 0.0}, {3.0, 0.0}});
  Rng rng(2);
  const auto b = make_batch(m, Eigen::Vector2d{4.0, -6.0}, 500, rng);
  const auto net = nn::init_network(critic_for(m, {8}, 1));
  CHECK(grad_design(net, b, m).isZero(0.0));
}

TEST_CASE("grad_design shape and capability") {
  for (std::size_t D : {1u, 10u, 100u}) {
    models::LinearModel m(D, true);
    Rng rng(D);
    const auto b = make_batch(m, m.domain().sample_uniform(rng), 64, rng);
    const auto net = nn::init_network(critic_for(m, {8}, 1));
    CHECK(static_cast<std::size_t>(grad_design(net, b, m).size()) == D);
  }
  models::OscillatoryModel osc;
  Rng rng(0);
  const auto b = make_batch(osc, Eigen::VectorXd::Constant(1, 1.0), 16, rng);
  const auto net = nn::init_network(critic_for(osc, {4}, 0));
  CHECK_THROWS_AS(grad_design(net, b, osc), CapabilityError);
  CHECK_NOTHROW(mi_lower_bound(net, b));
}

TEST_CASE("large critic values are clamped inside the exponential") {
  models::LinearModel m(1, false);
  Rng rng(0);
  const auto b = make_batch(m, Eigen::VectorXd::Constant(1, 1.0), 100, rng);
  const auto net = constant_critic(m, 40.0);
  const auto ev = evaluate_bound(net, b);
  CHECK(ev.clamped == 100);
  CHECK(ev.estimate.marginal_term == doctest::Approx(std::exp(kExpClamp)));
  CHECK(evaluate_bound(constant_critic(m, 2.0), b).clamped == 0);
}

TEST_CASE("bound rejects mismatched inputs") {
  models::LinearModel m(1, false);
  Rng rng(0);
  const auto b = make_batch(m, Eigen::VectorXd::Constant(1, 1.0), 10, rng);
  models::PkModel pk(1);
  const auto wrong = nn::init_network(critic_for(pk, {4}, 0));
  CHECK_THROWS_AS(mi_lower_bound(wrong, b), InputError);
  Batch empty = b;
  empty.theta.resize(0, 2);
  CHECK_THROWS_AS(mi_lower_bound(constant_critic(m, 1.0), empty), InputError);
}

TEST_CASE("moving average") {
  CHECK(moving_average({0, 1, 2, 3}, 2) == std::vector<double>{0, 0.5, 1.5, 2.5});
  const std::vector<double> v{3, -1, 4, 1, 5};
  CHECK(moving_average(v, 1) == v);
  for (double x : moving_average(std::vector<double>(7, 2.5), 3)) CHECK(x == 2.5);
  CHECK(moving_average({}, 4).empty());
  CHECK_THROWS_AS(moving_average(v, 0), InputError);
  const auto w = moving_average(v, 100);
  CHECK(w.back() == doctest::Approx(12.0 / 5.0));
}

TEST_CASE("non-finite critic output is reported") {
  models::LinearModel m(1, false);
  Rng rng(0);
  const auto b = make_batch(m, Eigen::VectorXd::Constant(1, 1.0), 10, rng);
  auto net = constant_critic(m, 0.0);
  net.bias(net.num_layers() - 1)[0] = std::nan("");
  CHECK_THROWS_AS(mi_lower_bound(net, b), NumericalError);
}
