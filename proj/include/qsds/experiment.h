#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qsds/bound_analysis.h"
#include "qsds/lyapunov_synthesis.h"
#include "qsds/quantizer.h"
#include "qsds/simulator.h"
#include "qsds/switching_analysis.h"
#include "qsds/system_model.h"

namespace qsds {

struct QuantizerSpec {
  double xi0 = 0.0;
  double eta = 0.0;
  int levels = 0;  // 0: smallest count covering the outer level set
};

struct CampaignSpec {
  int dwell_multiple = 0;   // 0: n_min from the bounds
  double p_switch = 0.05;
  double horizon = 20.0;
  std::vector<uint64_t> seeds;
  double radius_offset = 0.001;  // x0 on the boundary of the outer set for R - offset
  double kappa = 0.0;            // 0: kappa from the bounds
  int probes = 8;
  ModeId initial_mode = 0;
  bool write_trajectories = true;
};

struct AdversarialSpec {
  int n = 1;
  double epsilon = 1e-3;
  double T = 20.0;
  AdversarialVariant variant = AdversarialVariant::kGlobal;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Plant plant;
  QuantizerSpec quantizer;
  std::optional<LyapunovCertificate> certificate;
  std::optional<AlgorithmParams> synthesis;
  CheckOptions check;
  double D_override = 0.0;   // D used for the rates when positive
  int refined_grid = 0;      // 0 skips the refined alpha1/beta1
  double tol_check = 0.0;    // 0: 1e-7 (1 + ||P||)
  CampaignSpec campaign;
  AdversarialSpec adversarial;
  std::string output_dir = "out";
};

/// Parses the YAML experiment description. Relative paths (certificate
/// files, output directory) resolve against base_dir. Throws
/// StructuralError or ParameterError naming the offending key.
ExperimentConfig parse_config(const std::string& yaml_text, const std::string& base_dir);
ExperimentConfig load_config(const std::string& path);

/// Log quantizer from the spec, with enough levels to cover `radius` when
/// the spec leaves levels at 0.
QuantizerPartition build_partition(const QuantizerSpec& spec, double radius, int dim);

/// Radius of the ball enclosing the outer level set of cert.
double outer_ball_radius(const LyapunovCertificate& cert);

/// `points` samples of {x : x'Px = level} for 2x2 P, through the
/// eigen-decomposition of P applied to the unit circle.
std::vector<Eigen::Vector2d> ellipsoid_polyline(const MatrixXd& P, double level, int points);

/// Worker count from QSDS_WORKERS, else the hardware concurrency (at least 1).
int worker_count();

struct CampaignRun {
  uint64_t seed = 0;
  VectorXd x0;
  SwitchingSignal signal;
  Trajectory trajectory;
  StabilityVerdict verdict;
  BoundAudit audit;
  ConditionReport conditions;  // dwell-time bounds on mu for this signal
  double mismatch_total = 0.0;
};

struct CampaignResult {
  int dwell_multiple = 0;
  double kappa = 0.0;
  std::vector<CampaignRun> runs;  // sorted by seed
  BoundAudit audit;
  int theorem_passes = 0;
  int full_passes = 0;
};

/// Initial state on the boundary of {V <= (R - offset)^2 lambda_max}, at a
/// direction drawn from the seed.
VectorXd campaign_initial_state(const LyapunovCertificate& cert, double offset, uint64_t seed);

/// Dwell-time random campaign; runs execute in a worker pool and are
/// collected in seed order.
CampaignResult run_campaign(const Plant& plant, const QuantizerPartition& partition,
                            const LyapunovCertificate& cert, const StabilityBounds& bounds,
                            const CampaignSpec& spec, double tol, int workers);

struct AdversarialRun {
  uint64_t seed = 0;
  AdversarialSignal adversarial;
  StabilityVerdict verdict;
  double mismatch_ratio = 0.0;  // mu(t, 0) / t at the witness time
};

/// Adversarial-signal simulations; their verdicts are informational.
std::vector<AdversarialRun> run_adversarial(const Plant& plant, const QuantizerPartition& partition,
                                            const LyapunovCertificate& cert, double kappa,
                                            const CampaignSpec& campaign,
                                            const AdversarialSpec& spec, int workers);

enum class Verb { kSynthesize, kBounds, kSimulate, kReproduce, kAdversarial };

struct RunOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<double> tol_check;
  std::optional<int> workers;
};

/// Exit codes: 0 success, 1 a verdict failed in a non-adversarial campaign,
/// 2 configuration error, 3 any other stage error.
struct ExitReport {
  int code = 0;
  std::string stage;
  std::string message;
};

/// Runs the pipeline for `verb` and writes its artifacts under the output
/// directory; progress goes to `log`.
ExitReport run(const ExperimentConfig& config, Verb verb, const RunOverrides& overrides,
               std::ostream& log);

}  // namespace qsds
