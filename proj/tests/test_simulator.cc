#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.h"
#include "qsds/bound_analysis.h"
#include "qsds/error.h"
#include "qsds/simulator.h"
#include "qsds/switching_analysis.h"

using namespace qsds;

namespace {

Plant decaying_plant() {
  Plant plant;
  plant.sampling_period = 0.025;
  plant.modes.push_back({-MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2),
                         -MatrixXd::Identity(2, 2)});
  return plant;
}

// Piecewise ODE reference: the held input is refreshed at every sampling
// instant from the quantized state, the plant mode follows sigma.
VectorXd ode_reference(const Plant& plant, const QuantizerPartition& part,
                       const SwitchingSignal& sigma, VectorXd x, double horizon) {
  const double Ts = plant.sampling_period;
  std::vector<double> cuts;
  for (int64_t k = 0; k * Ts <= horizon; ++k) cuts.push_back(static_cast<double>(k) * Ts);
  for (const Switch& s : sigma.switches()) {
    if (s.time < horizon) cuts.push_back(s.time);
  }
  cuts.push_back(horizon);
  std::sort(cuts.begin(), cuts.end());
  VectorXd u;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    if (b <= a) continue;
    const double frac = a / Ts - std::round(a / Ts);
    if (std::abs(frac) < 1e-9) {
      u = plant.modes[sigma.mode_at(a)].K * quantize(part, x).q;
    }
    const Mode& m = plant.modes[sigma.mode_at(a)];
    x = oracle::integrate([&](double, const VectorXd& y) { return VectorXd(m.A * y + m.B * u); },
                          x, a, b, 1e-13);
  }
  return x;
}

}  // namespace

TEST(Simulate, DeadzoneGivesFreeDecay) {
  const Plant plant = decaying_plant();
  const QuantizerPartition part = build_log_quantizer(0.08, 1.2, 20);
  const auto cert = LyapunovCertificate::make(MatrixXd::Identity(2, 2), 1.0, 1.0, 0.01);
  const Eigen::Vector2d x0(0.05, -0.03);
  const Trajectory traj = simulate(plant, part, &cert, SwitchingSignal(0), x0, 1.0, 3);
  ASSERT_FALSE(traj.events.empty());
  double prev = std::numeric_limits<double>::infinity();
  for (const EventRecord& r : traj.events) {
    EXPECT_LT((r.x - std::exp(-r.t) * x0).norm(), 1e-14);
    EXPECT_TRUE(r.qx.isZero(0.0));
    EXPECT_LE(r.V, prev);
    prev = r.V;
  }
  EXPECT_EQ(traj.events.back().t, 1.0);
  EXPECT_FALSE(traj.coverage_exceeded);
}

TEST(Simulate, MatchesOdeIntegration) {
  const Plant plant = oracle::example_plant();
  const QuantizerPartition part = oracle::example_partition();
  const SwitchingSignal sigma(0, {{0.1037, 1}, {0.4012, 0}, {0.75, 1}});
  const Eigen::Vector2d x0(3.0, -2.0);
  const Trajectory traj = simulate(plant, part, nullptr, sigma, x0, 1.0, 0);
  int compared = 0;
  for (const EventRecord& r : traj.events) {
    if (r.kind != EventKind::kSample && r.kind != EventKind::kHorizon) continue;
    if (static_cast<int>(std::llround(r.t / 0.025)) % 8 != 0) continue;
    const VectorXd ref = ode_reference(plant, part, sigma, x0, r.t);
    EXPECT_LE((r.x - ref).cwiseAbs().maxCoeff(), 1e-7) << "t = " << r.t;
    ++compared;
  }
  EXPECT_GE(compared, 5);
  EXPECT_FALSE(traj.has_values);
}

TEST(Simulate, RecordsAreOrderedAndLabelled) {
  const Plant plant = oracle::example_plant();
  const QuantizerPartition part = oracle::example_partition();
  const SwitchingSignal sigma(0, {{0.0301, 1}});
  const Trajectory traj =
      simulate(plant, part, nullptr, sigma, Eigen::Vector2d(1.0, 1.0), 0.1, 2);
  for (std::size_t i = 1; i < traj.events.size(); ++i) {
    EXPECT_GT(traj.events[i].t, traj.events[i - 1].t);
  }
  bool saw_switch = false;
  for (const EventRecord& r : traj.events) {
    if (r.kind == EventKind::kSwitch) {
      saw_switch = true;
      EXPECT_DOUBLE_EQ(r.t, 0.0301);
      EXPECT_EQ(r.plant_mode, 1);
      EXPECT_EQ(r.controller_mode, 0);
      EXPECT_TRUE(r.mismatched());
    }
    if (r.t > 0.0301 && r.t < 0.05) EXPECT_TRUE(r.span_mismatched);
    if (r.t > 0.05) EXPECT_FALSE(r.span_mismatched);
  }
  EXPECT_TRUE(saw_switch);
}

TEST(Simulate, CoverageExceeded) {
  Plant plant;
  plant.sampling_period = 0.1;
  plant.modes.push_back({MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 1), MatrixXd::Zero(1, 2)});
  const QuantizerPartition part = build_log_quantizer(0.08, 1.2, 10);
  const Trajectory traj =
      simulate(plant, part, nullptr, SwitchingSignal(0), Eigen::Vector2d(0.3, 0.0), 10.0, 0);
  EXPECT_TRUE(traj.coverage_exceeded);
  EXPECT_EQ(traj.events.back().kind, EventKind::kCoverageExceeded);
  EXPECT_GT(traj.events.back().x.norm(), part.coverage_radius());
  EXPECT_LT(traj.events.back().t, 10.0);
}

TEST(Simulate, InputErrors) {
  const Plant plant = oracle::example_plant();
  const QuantizerPartition part = oracle::example_partition();
  EXPECT_THROW(simulate(plant, part, nullptr, SwitchingSignal(0), VectorXd::Zero(3), 1.0),
               StructuralError);
  EXPECT_THROW(simulate(plant, part, nullptr, SwitchingSignal(0, {{0.1, 2}}), VectorXd::Zero(2), 1.0),
               StructuralError);
  EXPECT_THROW(simulate(plant, part, nullptr, SwitchingSignal(0), VectorXd::Zero(2), -1.0),
               ParameterError);
}

TEST(LyapunovDerivative, MatchesFiniteDifference) {
  const Plant plant = oracle::example_plant();
  const auto cert = oracle::example_certificate();
  const QuantizerPartition part = oracle::example_partition();
  std::mt19937_64 rng(31);
  for (int i = 0; i < 200; ++i) {
    const VectorXd x = oracle::uniform_in_ellipsoid(cert.P, cert.outer_level(), rng);
    const VectorXd qx = quantize(part, x).q;
    const int p = i % 2, q = (i / 2) % 2;
    const auto rhs = [&](double, const VectorXd& y) {
      return VectorXd(plant.modes[p].A * y + plant.modes[p].B * (plant.modes[q].K * qx));
    };
    const double h = 1e-6;
    const VectorXd fwd = oracle::integrate(rhs, x, 0.0, h);
    const VectorXd bwd = oracle::integrate(
        [&](double t, const VectorXd& y) { return VectorXd(-rhs(t, y)); }, x, 0.0, h);
    const double fd = (cert.value(fwd) - cert.value(bwd)) / (2 * h);
    const double got = lyapunov_derivative(plant, cert, x, qx, p, q);
    EXPECT_NEAR(got, fd, 1e-5 * (1.0 + std::abs(got)));
  }
}

TEST(Verdict, SingleModeSettles) {
  // Mode 1 only; mode 0 alone is slow and reaches the attractor near t = 19.5.
  const Plant plant = oracle::example_plant();
  const QuantizerPartition part = oracle::example_partition();
  const auto cert = oracle::example_certificate();
  const double radius = std::sqrt(cert.outer_level() * 0.99 / cert.P(0, 0));
  const Trajectory traj =
      simulate(plant, part, &cert, SwitchingSignal(1), Eigen::Vector2d(radius, 0.0), 20.0, 2);
  const StabilityVerdict v = verdict(traj, cert, 1.2864);
  EXPECT_TRUE(v.contained);
  ASSERT_TRUE(v.first_entry.has_value());
  ASSERT_TRUE(v.T_r.has_value());
  EXPECT_LE(*v.T_r, 20.0);
  EXPECT_EQ(v.exits, 0);
  EXPECT_TRUE(v.all_hold());
  const Trajectory bare = simulate(plant, part, nullptr, SwitchingSignal(0), Eigen::Vector2d(1, 1), 1.0);
  EXPECT_THROW(verdict(bare, cert, 1.2864), ParameterError);
}

TEST(Verdict, EscapeIsNotContained) {
  Plant plant;
  plant.sampling_period = 0.1;
  plant.modes.push_back({MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 1), MatrixXd::Zero(1, 2)});
  const QuantizerPartition part = build_log_quantizer(0.08, 1.2, 30);
  const auto cert = LyapunovCertificate::make(MatrixXd::Identity(2, 2), 1.0, 1.0, 0.1);
  const Trajectory traj =
      simulate(plant, part, &cert, SwitchingSignal(0), Eigen::Vector2d(0.5, 0.0), 3.0, 0);
  const StabilityVerdict v = verdict(traj, cert, 1.1);
  EXPECT_FALSE(v.contained);
  EXPECT_FALSE(v.theorem_holds());
}

TEST(Audit, ExampleDwellRunHasNoViolations) {
  const Plant plant = oracle::example_plant();
  const QuantizerPartition part = oracle::example_partition();
  const auto cert = oracle::example_certificate();
  const StabilityBounds b = compute_bounds(plant, part, cert, 55.15);
  const SwitchingSignal sigma = generate_dwell_random(2, b.rates.n_min, 0.025, 0.05, 5.0, 7);
  const double radius = std::sqrt(cert.outer_level() * 0.99 / cert.P(0, 0));
  const Trajectory traj = simulate(plant, part, &cert, sigma, Eigen::Vector2d(radius, 0.0), 5.0, 4);
  const BoundAudit audit = audit_bounds(traj, plant, cert, b, 1e-9);
  EXPECT_EQ(audit.total_violations(), 0);
  EXPECT_GT(audit.sample_ratio.checked, 1000);
  EXPECT_GT(audit.decrease.checked, 100);
  BoundAudit twice = audit;
  twice.merge(audit);
  EXPECT_EQ(twice.records, 2 * audit.records);
  EXPECT_EQ(twice.decrease.checked, 2 * audit.decrease.checked);
}

TEST(TrajectoryCsv, Format) {
  const Plant plant = decaying_plant();
  const QuantizerPartition part = build_log_quantizer(0.08, 1.2, 20);
  const auto cert = LyapunovCertificate::make(MatrixXd::Identity(2, 2), 1.0, 1.0, 0.01);
  const Trajectory traj =
      simulate(plant, part, &cert, SwitchingSignal(0), Eigen::Vector2d(0.5, 0.25), 0.05, 1);
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,x1,x2,plant_mode,controller_mode,q1,q2,V,kind");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
    std::istringstream fields(line);
    std::string t, x1;
    std::getline(fields, t, ',');
    std::getline(fields, x1, ',');
    const EventRecord& r = traj.events[static_cast<std::size_t>(rows - 1)];
    EXPECT_EQ(std::stod(x1), r.x(0));
  }
  EXPECT_EQ(rows, static_cast<int>(traj.events.size()));
  EXPECT_NE(os.str().find(",sample\n"), std::string::npos);
}
