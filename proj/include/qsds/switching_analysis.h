#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qsds/system_model.h"

namespace qsds {

struct MismatchInterval {
  double start;
  double end;
};

/// The set of times in [0, horizon) with sigma(t) != sigma([t]^-), as sorted
/// disjoint half-open intervals.
class MismatchProfile {
 public:
  MismatchProfile() = default;
  MismatchProfile(std::vector<MismatchInterval> intervals, double horizon,
                  bool one_switch_per_interval);

  const std::vector<MismatchInterval>& intervals() const { return intervals_; }
  double horizon() const { return horizon_; }
  /// False when some sampling interval holds more than one switch; the
  /// intervals are still exact for the definition.
  bool one_switch_per_interval() const { return one_switch_per_interval_; }

  /// mu(t1, t2): mismatch time in [t2, t1). Requires t1 >= t2.
  double mu(double t1, double t2) const;
  /// Mismatch time in [0, t).
  double cumulative(double t) const;
  double total() const { return prefix_.empty() ? 0.0 : prefix_.back(); }

 private:
  std::vector<MismatchInterval> intervals_;
  std::vector<double> prefix_;  // prefix_[i] = total length of intervals [0, i]
  double horizon_ = 0.0;
  bool one_switch_per_interval_ = true;
};

/// Exact mismatch intervals of `signal` under sampling period Ts, clipped to
/// [0, horizon).
MismatchProfile mismatch_profile(const SwitchingSignal& signal, double Ts, double horizon);

struct ConditionReport {
  bool pass = true;
  bool one_switch_per_interval = true;
  int64_t checks = 0;
  int64_t violations = 0;
  /// Smallest bound-minus-mu over all checks (negative on failure).
  double worst_slack = std::numeric_limits<double>::infinity();
  /// Earliest violation: which inequality, the time t and onset T0 (T0 is
  /// unset for the from-zero inequality).
  std::string violated;
  std::optional<double> t;
  std::optional<double> T0;
};

/// Checks mu(t, 0) <= L t and mu(t, T0) <= f_kappa + L (t - T0) for every
/// mismatch onset T0 and t >= T0 up to the horizon. Both slacks are
/// minimized at mismatch-interval right endpoints, and within an interval
/// the worst onset is its start, so those are the points evaluated.
/// Throws ParameterError when L < 0 or L >= L_max.
ConditionReport check_theorem2_conditions(const MismatchProfile& profile, double L,
                                          double f_kappa,
                                          double L_max = std::numeric_limits<double>::infinity());

/// Dwell-time upper bounds mu(t, 0) < t/n and mu(t, T0) < T_s + (t - T0)/n,
/// evaluated at the same points, with strict inequalities.
ConditionReport check_dwell_bounds(const MismatchProfile& profile, int n, double Ts);

/// True iff no switch lies in [0, Td) and consecutive switches are at least
/// Td apart.
bool check_dwell(const SwitchingSignal& signal, double Td);

/// Random signal with dwell time n T_s: after a quiet period of n T_s (from
/// 0 and after every switch), each sampling interval hosts a switch with
/// probability p_switch at a uniform time. Two modes alternate; with more,
/// the new mode is uniform over the others.
SwitchingSignal generate_dwell_random(int num_modes, int n, double Ts, double p_switch,
                                      double horizon, uint64_t seed, ModeId initial_mode = 0);

enum class AdversarialVariant { kGlobal, kAnchored };

struct AdversarialSignal {
  SwitchingSignal signal;
  double t = 0.0;                 // witness time
  std::optional<double> T0;       // onset, anchored variant only
  int m = 0;
  /// The lower bound the construction guarantees on mu(t, 0) (global) or
  /// mu(t, T0) (anchored).
  double lower_bound = 0.0;
  /// The matching dwell-time upper bound.
  double upper_bound = 0.0;
};

/// Signals that nearly attain the dwell-time upper bounds on mu. With
/// m = max(1, ceil(T / (n T_s))):
///  global:   switches at k n T_s + eps/m, k = 1..m; t = m n T_s + T_s.
///  anchored: T0 = n T_s + eps/(2(m+1)) with a switch there, further
///            switches at T0 + k n T_s + eps/(2(m+1)), k = 1..m;
///            t = T0 + m n T_s + T_s.
/// Modes alternate between 0 and 1.
AdversarialSignal generate_adversarial(int n, double Ts, double eps, double T,
                                       AdversarialVariant variant);

}  // namespace qsds
