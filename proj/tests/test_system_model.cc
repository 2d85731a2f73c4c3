#include <gtest/gtest.h>

#include <random>

#include "oracles.h"
#include "qsds/error.h"
#include "qsds/system_model.h"

using namespace qsds;

namespace {

bool has_eigenvalue(const std::vector<std::complex<double>>& ev, double value, double tol) {
  for (const auto& e : ev) {
    if (std::abs(e.imag()) < tol && std::abs(e.real() - value) < tol) return true;
  }
  return false;
}

SwitchingSignal random_signal(std::mt19937_64& rng, double horizon, int num_modes) {
  std::uniform_real_distribution<double> unit;
  std::vector<Switch> sw;
  ModeId mode = 0;
  double t = 0.0;
  while (true) {
    t += 0.002 + unit(rng) * 0.03;
    if (t >= horizon) break;
    mode = (mode + 1) % num_modes;
    sw.push_back({t, mode});
  }
  return SwitchingSignal(0, sw);
}

}  // namespace

TEST(ValidatePlant, ExampleModesAreHurwitz) {
  const Plant plant = oracle::example_plant();
  const ValidationReport r = validate_plant(plant);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.state_dim, 2);
  EXPECT_EQ(r.input_dim, 1);
  ASSERT_EQ(r.modes.size(), 2u);
  for (const auto& m : r.modes) EXPECT_TRUE(m.hurwitz);
}

TEST(ValidatePlant, CrossModeEigenvalues) {
  const Plant plant = oracle::example_plant();
  EXPECT_TRUE(has_eigenvalue(cross_mode_eigenvalues(plant, 0, 1), 4.4538, 1e-3));
  const auto ev = cross_mode_eigenvalues(plant, 1, 0);
  EXPECT_TRUE(has_eigenvalue(ev, 1.4091, 1e-3));
  EXPECT_TRUE(has_eigenvalue(ev, 4.7750, 1e-3));
}

TEST(ValidatePlant, MismatchedGainFailsHurwitz) {
  Plant plant = oracle::example_plant();
  plant.modes[0].K = plant.modes[1].K;
  const ValidationReport r = validate_plant(plant);
  EXPECT_FALSE(r.ok);
  EXPECT_FALSE(r.modes[0].hurwitz);
  EXPECT_NEAR(r.modes[0].max_real_part, 4.4538, 1e-3);
}

TEST(ValidatePlant, StableOpenLoop) {
  Plant plant;
  plant.sampling_period = 0.1;
  plant.modes.push_back({-MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 1), MatrixXd::Zero(1, 2)});
  EXPECT_TRUE(validate_plant(plant).ok);
}

TEST(ValidatePlant, DimensionMismatchNamesMode) {
  Plant plant = oracle::example_plant();
  plant.modes[1].B = MatrixXd::Zero(3, 1);
  try {
    validate_plant(plant);
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
}

TEST(LqrGain, MatchesRiccatiReference) {
  const Plant plant = oracle::example_plant();
  EXPECT_NEAR(plant.modes[0].K(0, 0), 1.32793879, 1e-6);
  EXPECT_NEAR(plant.modes[0].K(0, 1), -1.8561948, 1e-6);
  EXPECT_NEAR(plant.modes[1].K(0, 0), -2.80297612, 1e-6);
  EXPECT_NEAR(plant.modes[1].K(0, 1), 3.76746024, 1e-6);
}

TEST(SwitchingSignal, RejectsBadSequences) {
  EXPECT_THROW(SwitchingSignal(0, {{0.2, 1}, {0.1, 0}}), StructuralError);
  EXPECT_THROW(SwitchingSignal(0, {{0.2, 0}}), StructuralError);
  EXPECT_THROW(SwitchingSignal(0, {{-0.1, 1}}), StructuralError);
}

TEST(SwitchingSignal, RightContinuous) {
  const SwitchingSignal s(0, {{0.5, 1}, {1.0, 0}});
  EXPECT_EQ(s.mode_at(0.0), 0);
  EXPECT_EQ(s.mode_at(0.4999), 0);
  EXPECT_EQ(s.mode_at(0.5), 1);
  EXPECT_EQ(s.mode_at(1.0), 0);
}

TEST(SwitchingSignal, AtMostOnePerInterval) {
  EXPECT_TRUE(SwitchingSignal(0, {{0.01, 1}, {0.03, 0}}).at_most_one_per_interval(0.025));
  EXPECT_FALSE(SwitchingSignal(0, {{0.01, 1}, {0.02, 0}}).at_most_one_per_interval(0.025));
  // A switch on a sampling instant does not count as interior.
  EXPECT_TRUE(SwitchingSignal(0, {{0.025, 1}, {0.03, 0}}).at_most_one_per_interval(0.025));
}

TEST(SampleClock, FloorIsConsistent) {
  const SampleClock clock(0.025);
  for (int64_t k = 0; k < 2000; ++k) {
    EXPECT_EQ(clock.index_of(clock.time_of(k)), k);
    EXPECT_EQ(clock.floor(clock.time_of(k) + 0.01), clock.time_of(k));
  }
}

TEST(TransitionMatrix, IdentityOnEmptySpan) {
  const Plant plant = oracle::example_plant();
  const SwitchingSignal s(0, {{0.3, 1}});
  EXPECT_TRUE(transition_matrix(plant, s, 0.2, 0.2).value.isApprox(MatrixXd::Identity(2, 2)));
}

TEST(TransitionMatrix, SingleModeIsExponential) {
  const Plant plant = oracle::example_plant();
  const SwitchingSignal s(1);
  const MatrixXd phi = transition_matrix(plant, s, 0.1, 0.6).value;
  EXPECT_LT((phi - expm(plant.modes[1].A, 0.5)).norm(), 1e-13);
}

TEST(TransitionMatrix, MidIntervalSwitchMatchesOde) {
  const Plant plant = oracle::example_plant();
  const SwitchingSignal s(0, {{0.0125, 1}});
  const MatrixXd phi = transition_matrix(plant, s, 0.0, 0.025).value;
  for (int col = 0; col < 2; ++col) {
    const VectorXd x = oracle::integrate(
        [&](double t, const VectorXd& y) { return VectorXd(plant.modes[s.mode_at(t)].A * y); },
        VectorXd::Unit(2, col), 0.0, 0.0125);
    const VectorXd y = oracle::integrate(
        [&](double t, const VectorXd& v) { return VectorXd(plant.modes[s.mode_at(t)].A * v); }, x,
        0.0125, 0.025);
    EXPECT_LT((phi.col(col) - y).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(TransitionMatrix, CompositionProperty) {
  const Plant plant = oracle::example_plant();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit;
  for (int trial = 0; trial < 200; ++trial) {
    const SwitchingSignal s = random_signal(rng, 1.0, 2);
    double a = unit(rng), b = unit(rng), c = unit(rng);
    if (a > b) std::swap(a, b);
    if (b > c) std::swap(b, c);
    if (a > b) std::swap(a, b);
    const MatrixXd full = transition_matrix(plant, s, a, c).value;
    const MatrixXd split =
        transition_matrix(plant, s, b, c).value * transition_matrix(plant, s, a, b).value;
    EXPECT_LE((full - split).norm(), 1e-8 * (1.0 + full.norm()));
  }
}

TEST(TransitionMatrix, GrowthBoundsOverOnePeriod) {
  const Plant plant = oracle::example_plant();
  const double Lambda = plant.max_dynamics_norm();
  const double Ts = plant.sampling_period;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit;
  const MatrixXd I = MatrixXd::Identity(2, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Switch> sw;
    ModeId mode = trial % 2;
    const ModeId initial = mode;
    double t = 0.0;
    while (true) {
      t += unit(rng) * Ts * 0.5;
      if (t >= Ts) break;
      mode = 1 - mode;
      sw.push_back({t, mode});
    }
    const SwitchingSignal s(initial, sw);
    const double tau = unit(rng) * Ts;
    const MatrixXd phi = transition_matrix(plant, s, 0.0, tau).value;
    EXPECT_LE(spectral_norm(phi - I), std::expm1(Lambda * tau) + 1e-12);
    EXPECT_LE(spectral_norm(MatrixXd(phi.inverse())), std::exp(Lambda * tau) + 1e-12);
  }
}

TEST(HoldIntegral, Trivial) {
  const Plant plant = oracle::example_plant();
  EXPECT_TRUE(hold_integral(plant.modes[0].A, plant.modes[0].B, 0.0).isZero(0.0));
  const MatrixXd B = MatrixXd::Random(2, 3);
  EXPECT_LT((hold_integral(MatrixXd::Zero(2, 2), B, 0.7) - 0.7 * B).norm(), 1e-14);
}

TEST(HoldIntegral, MatchesSimpson) {
  const Plant plant = oracle::example_plant();
  const Mode& m = plant.modes[0];
  const MatrixXd ref = oracle::simpson([&](double s) { return MatrixXd(expm(m.A, s) * m.B); }, 0.0,
                                       0.025, 10000);
  EXPECT_LT((hold_integral(m.A, m.B, 0.025) - ref).cwiseAbs().maxCoeff(), 1e-10);
}
