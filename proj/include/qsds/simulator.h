#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qsds/bound_analysis.h"
#include "qsds/linalg.h"
#include "qsds/lyapunov_synthesis.h"
#include "qsds/quantizer.h"
#include "qsds/system_model.h"

namespace qsds {

enum class EventKind { kSample, kSwitch, kProbe, kHorizon, kCoverageExceeded };

const char* to_string(EventKind kind);

struct EventRecord {
  double t = 0.0;
  VectorXd x;              // x(t); the state is continuous so x(t^-) = x(t)
  VectorXd x_sample;       // x([t]^-)
  ModeId plant_mode = 0;   // sigma(t)
  ModeId controller_mode = 0;  // sigma([t]^-)
  VectorXd qx;             // Q(x([t]^-))
  double V = std::numeric_limits<double>::quiet_NaN();
  EventKind kind = EventKind::kSample;
  /// The span that ends at this record ran with plant and controller modes
  /// different. False for the initial record.
  bool span_mismatched = false;

  bool mismatched() const { return plant_mode != controller_mode; }
};

struct Trajectory {
  std::vector<EventRecord> events;
  double horizon = 0.0;
  bool coverage_exceeded = false;
  bool has_values = false;  // V filled in (a certificate was supplied)
};

/// Exact closed-loop simulation: between consecutive sampling and switching
/// instants the plant runs x' = A_p x + B_p K_q q_x with everything held, so
/// each span is one exponential of [[A_p, B_p K_q q_x], [0, 0]]. `probes`
/// interior records are placed uniformly in every span. Leaving the
/// quantizer's coverage at a sampling instant ends the run with a
/// kCoverageExceeded record.
Trajectory simulate(const Plant& plant, const QuantizerPartition& partition,
                    const LyapunovCertificate* cert, const SwitchingSignal& signal,
                    const VectorXd& x0, double horizon, int probes = 8);

/// Vdot_{p,q}(x, q_x) = 2 (A_p x + B_p K_q q_x)' P x; p = q gives Vdot_p.
double lyapunov_derivative(const Plant& plant, const LyapunovCertificate& cert,
                           const VectorXd& x, const VectorXd& qx, ModeId p, ModeId q);

inline constexpr double kMembershipSlack = 1e-10;

struct StabilityVerdict {
  bool contained = false;          // V < R^2 lambda_max at every record
  std::optional<double> first_entry;  // first record inside the inner level set
  std::optional<double> T_r;       // inside the kappa-scaled inner set from here on
  int exits = 0;                   // exits from the inner level set
  bool exits_on_mismatch = true;   // every exit happened in a mismatched span
  double max_excursion_V = 0.0;    // largest V after first entry
  bool excursions_bounded = true;  // max_excursion_V <= kappa^2 r^2 lambda_min
  bool coverage_exceeded = false;
  double final_time = 0.0;

  /// The two outcomes the dwell-time theorem promises: containment and
  /// permanent entry into the attractor.
  bool theorem_holds() const { return contained && T_r.has_value() && !coverage_exceeded; }
  bool all_hold() const { return theorem_holds() && exits_on_mismatch && excursions_bounded; }
};

/// Ellipsoid memberships use a relative slack of kMembershipSlack on the
/// level.
StabilityVerdict verdict(const Trajectory& trajectory, const LyapunovCertificate& cert,
                         double kappa);

/// Pointwise audit of the bound inequalities along a trajectory, on records
/// whose sampled state x([t]^-) lies in the outer level set.
struct InequalityTally {
  int64_t checked = 0;
  int64_t violations = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();  // lhs - rhs
  double worst_t = 0.0;
};

struct BoundAudit {
  InequalityTally decrease;       // matched, annulus: Vdot_p <= -C ||x||^2
  InequalityTally growth;         // mismatched: Vdot_{p,q} <= D ||x||^2
  InequalityTally sample_ratio;   // ||x([t]^-)|| < alpha1 ||x||
  InequalityTally sample_error;   // ||x - x([t]^-)|| < beta1 ||x([t]^-)||
  InequalityTally quantized_gap;  // mismatched: ||P B_p K_q (q_x - x)|| < gamma(p,q) ||x||
  int64_t records = 0;

  void merge(const BoundAudit& other);
  int64_t total_violations() const;
};

/// tol is the absolute slack for the derivative inequalities; the norm
/// inequalities use tol (1 + ||x||).
BoundAudit audit_bounds(const Trajectory& trajectory, const Plant& plant,
                        const LyapunovCertificate& cert, const StabilityBounds& bounds,
                        double tol);

/// CSV with columns t, x1..xn, plant_mode, controller_mode, q1..qn, V, kind;
/// numbers with 17 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory);

}  // namespace qsds
