#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qsds/linalg.h"
#include "qsds/quantizer.h"
#include "qsds/system_model.h"

namespace qsds {

/// Knobs of the randomized common-Lyapunov synthesis.
struct AlgorithmParams {
  double outer_radius = 0.0;   // R_0
  double inner_radius = 0.0;   // r_0
  double delta = 0.0;          // gradient margin
  double delta1 = 0.0;         // projection floor, in (0, delta)
  double decrease_rate = 0.0;  // C
  int64_t samples_per_run = 0;
  int time_samples = 1;        // l
  uint64_t seed = 0;
  int max_runs = 0;
  std::optional<MatrixXd> initial_P;  // identity when unset

  void validate() const;
  /// Eigenvalue floor sqrt((delta^2 - delta1^2) / n) of the projection.
  double clamp_level(int n) const;
};

/// Common quadratic Lyapunov function V(x) = x'Px with decrease rate C on the
/// annulus between the level sets V <= r^2 lambda_min(P) (inner) and
/// V <= R^2 lambda_max(P) (outer).
struct LyapunovCertificate {
  MatrixXd P;
  double C = 0.0;
  double R = 0.0;
  double r = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;

  /// Symmetrizes P, checks positive definiteness and R > r > 0.
  static LyapunovCertificate make(const MatrixXd& P, double C, double R, double r);

  double value(const VectorXd& x) const { return quad_form(P, x); }
  /// R^2 lambda_max(P): the smallest level set containing B(R).
  double outer_level() const { return R * R * lambda_max; }
  /// (scale r)^2 lambda_min(P): the largest level set inside B(scale r).
  double inner_level(double scale = 1.0) const { return scale * scale * r * r * lambda_min; }
  /// kappa^2 r^2 lambda_min(P) < R^2 lambda_max(P).
  bool admits_kappa(double kappa) const { return inner_level(kappa) < outer_level(); }
};

/// Plain-text certificate format: one "key value" line each for C, R, r, then
/// "P n" followed by n rows, all with 17 significant digits.
void write_certificate(std::ostream& os, const LyapunovCertificate& cert);
LyapunovCertificate read_certificate(std::istream& is);
void save_certificate(const std::string& path, const LyapunovCertificate& cert);
LyapunovCertificate load_certificate(const std::string& path);

/// Scheduling function h(k) = k mod |P|; visits every mode in each window of
/// |P| consecutive iterations.
class RoundRobinSchedule {
 public:
  explicit RoundRobinSchedule(int num_modes);
  ModeId operator()(int64_t k) const { return static_cast<ModeId>(k % num_modes_); }

 private:
  int num_modes_;
};

/// State and velocity of the held-input flow at one instant.
struct FlowPoint {
  VectorXd phi;   // e^{At} x0 + int_0^t e^{As} ds B u
  VectorXd rate;  // A phi + B u
};

FlowPoint flow_point(const MatrixXd& A, const MatrixXd& B, const VectorXd& x0,
                     const VectorXd& u, double t);
VectorXd flow(const MatrixXd& A, const MatrixXd& B, const VectorXd& x0, const VectorXd& u,
              double t);

/// v(P, x, j, t) = 2 (A phi + B u)' P phi + C ||phi||^2 along the held flow.
/// Nonpositive exactly when the flowed state meets the decrease requirement.
double v_value(const MatrixXd& A, const MatrixXd& B, const MatrixXd& P, double C,
               const VectorXd& x0, const VectorXd& u, double t);
/// Gradient of v in P: (A phi + B u) phi' + phi (A phi + B u)'.
MatrixXd v_gradient(const MatrixXd& A, const MatrixXd& B, const VectorXd& x0,
                    const VectorXd& u, double t);

/// Eigenvalue clamp from below at sqrt((delta^2 - delta1^2) / n).
MatrixXd project_psd(const MatrixXd& X, double delta, double delta1);

/// A draw from the surface set: points on cell faces inside B(R_0), or on one
/// of the spheres of radius r_0 and R_0, paired with a cell.
struct SurfaceSample {
  VectorXd x;
  int cell_id = 0;
  bool on_sphere = false;
};

/// Uniform sampler over the surface set. Cell faces are weighted by their
/// measure inside B(R_0), the spheres by their surface measure.
class SurfaceSampler {
 public:
  SurfaceSampler(const QuantizerPartition& partition, double outer_radius,
                 double inner_radius);

  SurfaceSample operator()(std::mt19937_64& rng) const;

  double face_measure() const { return face_total_; }
  double sphere_measure() const { return sphere_inner_ + sphere_outer_; }
  std::size_t num_faces() const { return faces_.size(); }

 private:
  struct Face {
    int cell_id;
    int axis;
    double value;
    VectorXd lower;  // clipped box of the face, axis coordinate fixed
    VectorXd upper;
  };

  const QuantizerPartition* partition_;
  double outer_radius_;
  double inner_radius_;
  std::vector<Face> faces_;
  std::vector<double> cumulative_;  // running face measure
  double face_total_ = 0.0;
  double sphere_inner_ = 0.0;
  double sphere_outer_ = 0.0;
};

struct SynthesisResult {
  LyapunovCertificate certificate;
  int runs = 0;
  int64_t updates = 0;
  int64_t samples = 0;
};

/// Randomized gradient synthesis of a common P. Terminates after the first
/// run without updates; throws SynthesisFailure after max_runs and
/// RadiusInfeasible when the final radii do not satisfy r < R.
SynthesisResult synthesize(const Plant& plant, const QuantizerPartition& partition,
                           const AlgorithmParams& params);

/// One update of the gradient step with its witness, exposed for testing.
struct GradientStep {
  MatrixXd next;
  double step_size;
  double violation;  // v at the witness before the step
  double gradient_norm;
};

/// G(P) - mu grad with mu = (v + delta ||grad||_F) / ||grad||_F^2.
GradientStep gradient_step(const MatrixXd& P, const MatrixXd& grad, double violation,
                           double delta, double delta1);

struct CheckWitness {
  ModeId mode = 0;
  VectorXd x0;
  double t = 0.0;
  VectorXd phi;
};

struct CheckReport {
  bool pass = false;
  /// min over checked points of -C||x||^2 - Vdot_p; negative means violated.
  double worst_margin = 0.0;
  /// worst_margin divided by ||x||^2 at that point.
  double worst_relative_margin = 0.0;
  double tolerance = 0.0;
  int64_t points_checked = 0;
  int64_t points_in_inner = 0;
  std::optional<CheckWitness> witness;
};

struct CheckOptions {
  int grid_density = 50;      // points per axis over the bounding box
  int time_samples = 5;       // uniform in [0, T_s], endpoints included
  int64_t random_samples = 0;  // extra uniform draws in the outer ellipsoid
  uint64_t seed = 0;
};

/// Grid-and-random audit of the decrease condition: for every mode, initial
/// states in the annulus and held flows over one sampling period must satisfy
/// Vdot_p <= -C||x||^2 + tol or lie in the inner level set.
/// tol = 1e-7 (1 + ||P||).
CheckReport check_assumption4(const Plant& plant, const QuantizerPartition& partition,
                              const LyapunovCertificate& cert, const CheckOptions& options);

}  // namespace qsds
