#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.h"
#include "qsds/error.h"
#include "qsds/experiment.h"

using namespace qsds;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"(
name: small
plant:
  sampling_period: 0.025
  modes:
    - A: {scale: 1/6, rows: [[1, -2], [-3, 2]]}
      B: {scale: 1/6, rows: [[-4], [3]]}
      K: lqr
    - A: [[1, -5], [1, 2]]
      B: [[1], [-1]]
      K: lqr
quantizer: {xi0: 0.08, eta: 1.2, levels: auto}
certificate:
  P: [[2.9171, 0.3489], [0.3489, 3.6256]]
  C: 1
  R: 68.6
  r: 0.175
bounds: {D_override: 55.15}
campaign:
  p_switch: 0.05
  horizon: 20
  seeds: [5, 6]
  probes: 2
adversarial: {n: 1, epsilon: 0.001, T: 3, variant: global}
output: out
)";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("qsds_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Config, ParsesSmallExample) {
  const ExperimentConfig cfg = parse_config(kSmallConfig, "/base");
  EXPECT_EQ(cfg.name, "small");
  ASSERT_EQ(cfg.plant.num_modes(), 2);
  EXPECT_NEAR(cfg.plant.modes[0].A(0, 1), -2.0 / 6.0, 1e-15);
  EXPECT_NEAR(cfg.plant.modes[0].K(0, 0), 1.32793879, 1e-6);
  EXPECT_EQ(cfg.quantizer.levels, 0);
  ASSERT_TRUE(cfg.certificate.has_value());
  EXPECT_EQ(cfg.certificate->R, 68.6);
  EXPECT_FALSE(cfg.synthesis.has_value());
  EXPECT_EQ(cfg.D_override, 55.15);
  EXPECT_EQ(cfg.campaign.seeds, (std::vector<uint64_t>{5, 6}));
  EXPECT_EQ(cfg.campaign.dwell_multiple, 0);
  EXPECT_EQ(cfg.output_dir, "/base/out");
}

TEST(Config, RepositoryExampleLoads) {
  const ExperimentConfig cfg = load_config(QSDS_SOURCE_DIR "/configs/paper_sec5.yaml");
  EXPECT_EQ(cfg.campaign.seeds.size(), 20u);
  EXPECT_EQ(cfg.campaign.seeds.front(), 1u);
  ASSERT_TRUE(cfg.synthesis.has_value());
  EXPECT_EQ(cfg.synthesis->samples_per_run, 100000);
  EXPECT_EQ(cfg.refined_grid, 50);
}

TEST(Config, ErrorsNameTheKey) {
  std::string bad = kSmallConfig;
  bad.replace(bad.find("sampling_period: 0.025"), 22, "sampling_period: fast");
  try {
    parse_config(bad, ".");
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("sampling_period"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("name: x\n", "."), StructuralError);
  std::string ragged = kSmallConfig;
  ragged.replace(ragged.find("[[1, -5], [1, 2]]"), 17, "[[1, -5], [1]]");
  EXPECT_THROW(parse_config(ragged, "."), StructuralError);
}

TEST(EllipsoidPolyline, UnitCircleAndLevel) {
  const auto circle = ellipsoid_polyline(MatrixXd::Identity(2, 2), 1.0, 64);
  ASSERT_EQ(circle.size(), 64u);
  for (const auto& p : circle) EXPECT_NEAR(p.norm(), 1.0, 1e-12);
  const auto cert = oracle::example_certificate();
  double max_abs = 0.0;
  for (const auto& p : ellipsoid_polyline(cert.P, cert.outer_level(), 361)) {
    EXPECT_NEAR(p.dot(cert.P * p), cert.outer_level(), 1e-9 * cert.outer_level());
    max_abs = std::max(max_abs, p.cwiseAbs().maxCoeff());
  }
  EXPECT_GT(max_abs, 68.6);
  EXPECT_LT(max_abs, 80.0);
  EXPECT_THROW(ellipsoid_polyline(MatrixXd::Identity(3, 3), 1.0, 10), UnsupportedDimension);
}

TEST(CampaignInitialState, OnShrunkBoundary) {
  const auto cert = oracle::example_certificate();
  for (uint64_t seed = 1; seed < 20; ++seed) {
    const VectorXd x0 = campaign_initial_state(cert, 0.001, seed);
    const double level = (cert.R - 0.001) * (cert.R - 0.001) * cert.lambda_max;
    EXPECT_NEAR(x0.dot(cert.P * x0), level, 1e-9 * level);
  }
  EXPECT_NE(campaign_initial_state(cert, 0.001, 1), campaign_initial_state(cert, 0.001, 2));
}

TEST(Campaign, ZeroSwitchProbabilityHasNoMismatch) {
  const ExperimentConfig cfg = parse_config(kSmallConfig, ".");
  const auto& cert = *cfg.certificate;
  const QuantizerPartition part = build_partition(cfg.quantizer, outer_ball_radius(cert), 2);
  const StabilityBounds b = compute_bounds(cfg.plant, part, cert, cfg.D_override);
  CampaignSpec spec = cfg.campaign;
  spec.p_switch = 0.0;
  const CampaignResult res = run_campaign(cfg.plant, part, cert, b, spec, 1e-6, 1);
  ASSERT_EQ(res.runs.size(), 2u);
  EXPECT_EQ(res.dwell_multiple, 76);
  for (const auto& run : res.runs) {
    EXPECT_EQ(run.mismatch_total, 0.0);
    EXPECT_TRUE(run.signal.empty());
    EXPECT_EQ(run.audit.growth.checked, 0);
  }
  EXPECT_EQ(res.audit.total_violations(), 0);
}

TEST(Run, SimulateIsByteIdenticalAcrossRuns) {
  const ExperimentConfig cfg = parse_config(kSmallConfig, ".");
  const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
  std::ostringstream log;
  RunOverrides oa, ob;
  oa.output_dir = a.string();
  ob.output_dir = b.string();
  oa.workers = 1;
  ob.workers = 2;
  EXPECT_EQ(run(cfg, Verb::kSimulate, oa, log).code, 0);
  EXPECT_EQ(run(cfg, Verb::kSimulate, ob, log).code, 0);
  for (const char* f : {"summary.txt", "trajectories/run_5.csv", "trajectories/run_6.csv",
                        "plots/trajectory_5.csv", "plots/outer_ellipsoid.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  }
  EXPECT_TRUE(fs::exists(a / "bounds.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, SeedOverrideShiftsSeeds) {
  const ExperimentConfig cfg = parse_config(kSmallConfig, ".");
  const fs::path dir = scratch("seed");
  std::ostringstream log;
  RunOverrides o;
  o.output_dir = dir.string();
  o.seed = 40;
  o.workers = 1;
  EXPECT_EQ(run(cfg, Verb::kSimulate, o, log).code, 0);
  EXPECT_TRUE(fs::exists(dir / "trajectories/run_40.csv"));
  EXPECT_TRUE(fs::exists(dir / "trajectories/run_41.csv"));
  fs::remove_all(dir);
}

TEST(Run, AdversarialFlagsExpectedUnstableScenario) {
  const ExperimentConfig cfg = parse_config(kSmallConfig, ".");
  const fs::path dir = scratch("adv");
  std::ostringstream log;
  RunOverrides o;
  o.output_dir = dir.string();
  o.workers = 1;
  const ExitReport rep = run(cfg, Verb::kAdversarial, o, log);
  EXPECT_EQ(rep.code, 0);
  const std::string summary = read_file(dir / "summary.txt");
  EXPECT_NE(summary.find("expected-unstable"), std::string::npos);
  EXPECT_NE(summary.find("informational"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Run, BadCertificateIsAStageError) {
  ExperimentConfig cfg = parse_config(kSmallConfig, ".");
  cfg.certificate = LyapunovCertificate::make(oracle::example_P(), 1.0, 0.18, 0.175);
  const fs::path dir = scratch("badcert");
  std::ostringstream log;
  RunOverrides o;
  o.output_dir = dir.string();
  const ExitReport rep = run(cfg, Verb::kBounds, o, log);
  EXPECT_NE(rep.code, 0);
  EXPECT_EQ(rep.stage, "bounds");
  EXPECT_NE(read_file(dir / "summary.txt").find("ERROR in stage bounds"), std::string::npos);
  fs::remove_all(dir);
}
