#include "qsds/switching_analysis.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "qsds/error.h"

namespace qsds {

MismatchProfile::MismatchProfile(std::vector<MismatchInterval> intervals, double horizon,
                                 bool one_switch_per_interval)
    : intervals_(std::move(intervals)),
      horizon_(horizon),
      one_switch_per_interval_(one_switch_per_interval) {
  double sum = 0.0;
  double last_end = -std::numeric_limits<double>::infinity();
  prefix_.reserve(intervals_.size());
  for (const auto& iv : intervals_) {
    if (!(iv.start < iv.end) || iv.start < last_end) {
      throw StructuralError("mismatch intervals must be nonempty, sorted and disjoint");
    }
    last_end = iv.end;
    sum += iv.end - iv.start;
    prefix_.push_back(sum);
  }
}

double MismatchProfile::cumulative(double t) const {
  // First interval starting at or after t contributes nothing.
  auto it = std::lower_bound(intervals_.begin(), intervals_.end(), t,
                             [](const MismatchInterval& iv, double v) { return iv.start < v; });
  if (it == intervals_.begin()) return 0.0;
  const auto i = static_cast<std::size_t>(it - intervals_.begin()) - 1;
  const double before = i == 0 ? 0.0 : prefix_[i - 1];
  return before + (std::min(t, intervals_[i].end) - intervals_[i].start);
}

double MismatchProfile::mu(double t1, double t2) const {
  if (t1 < t2) throw ParameterError("mu(t1, t2) needs t1 >= t2");
  if (t1 == t2) return 0.0;
  return cumulative(t1) - cumulative(t2);
}

MismatchProfile mismatch_profile(const SwitchingSignal& signal, double Ts, double horizon) {
  const SampleClock clock(Ts);
  if (!(horizon >= 0.0)) throw ParameterError("horizon must be nonnegative");
  std::vector<MismatchInterval> out;
  bool one_switch_per_interval = true;
  auto push = [&](double a, double b) {
    b = std::min(b, horizon);
    if (!(a < b)) return;
    if (!out.empty() && out.back().end == a) {
      out.back().end = b;
    } else {
      out.push_back({a, b});
    }
  };

  const auto& sw = signal.switches();
  std::size_t i = 0;
  while (i < sw.size() && sw[i].time < horizon) {
    const int64_t k = clock.index_of(sw[i].time);
    const double lo = clock.time_of(k);
    const double hi = clock.time_of(k + 1);
    const ModeId held = signal.mode_at(lo);
    ModeId current = held;
    double segment_start = lo;
    int interior = 0;
    for (; i < sw.size() && sw[i].time < hi; ++i) {
      if (sw[i].time == lo) continue;  // at the sampling instant: no mismatch
      if (current != held) push(segment_start, sw[i].time);
      ++interior;
      current = sw[i].mode;
      segment_start = sw[i].time;
    }
    if (current != held) push(segment_start, hi);
    if (interior > 1) one_switch_per_interval = false;
  }
  return MismatchProfile(std::move(out), horizon, one_switch_per_interval);
}

namespace {

// Shared evaluation of mu(t, 0) <= a t + b0 and mu(t, T0) <= c + a (t - T0).
ConditionReport check_linear_bounds(const MismatchProfile& profile, double a, double b0,
                                    double c, bool strict) {
  ConditionReport report;
  report.one_switch_per_interval = profile.one_switch_per_interval();
  const auto& ivs = profile.intervals();
  auto violates = [&](double slack) { return strict ? !(slack > 0.0) : slack < 0.0; };
  auto note = [&](const char* which, double slack, double t, std::optional<double> T0) {
    ++report.checks;
    report.worst_slack = std::min(report.worst_slack, slack);
    if (!violates(slack)) return;
    ++report.violations;
    const bool earlier = !report.t || t < *report.t ||
                         (t == *report.t && T0.value_or(-1.0) < report.T0.value_or(-1.0));
    if (report.pass || earlier) {
      report.violated = which;
      report.t = t;
      report.T0 = T0;
    }
    report.pass = false;
  };

  // g_j = a e_j - M(e_j): the from-onset slack at e_j is c + g_j - (a s_i - M(s_i)).
  const std::size_t n = ivs.size();
  std::vector<double> M_end(n), g(n);
  for (std::size_t j = 0; j < n; ++j) {
    M_end[j] = profile.cumulative(ivs[j].end);
    g[j] = a * ivs[j].end - M_end[j];
    note("mu(t,0)", a * ivs[j].end + b0 - M_end[j], ivs[j].end, std::nullopt);
  }
  // Suffix minimum of g with its argument.
  std::vector<std::size_t> argmin(n);
  for (std::size_t j = n; j-- > 0;) {
    argmin[j] = (j + 1 < n && g[argmin[j + 1]] < g[j]) ? argmin[j + 1] : j;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double s = ivs[i].start;
    const std::size_t j = argmin[i];
    // Re-evaluate at the minimizing endpoint so the reported slack is direct.
    const double slack = c + a * (ivs[j].end - s) - profile.mu(ivs[j].end, s);
    note("mu(t,T0)", slack, ivs[j].end, s);
  }
  return report;
}

}  // namespace

ConditionReport check_theorem2_conditions(const MismatchProfile& profile, double L,
                                          double f_kappa, double L_max) {
  if (!(L >= 0.0)) throw ParameterError("L must be nonnegative");
  if (!(L < L_max)) throw ParameterError("L must be below C_P / (C_P + D_P)");
  return check_linear_bounds(profile, L, 0.0, f_kappa, false);
}

ConditionReport check_dwell_bounds(const MismatchProfile& profile, int n, double Ts) {
  if (n < 1) throw ParameterError("dwell multiple n must be positive");
  return check_linear_bounds(profile, 1.0 / n, 0.0, Ts, true);
}

bool check_dwell(const SwitchingSignal& signal, double Td) {
  double last = 0.0;
  for (const auto& s : signal.switches()) {
    if (s.time - last < Td) return false;
    last = s.time;
  }
  return true;
}

SwitchingSignal generate_dwell_random(int num_modes, int n, double Ts, double p_switch,
                                      double horizon, uint64_t seed, ModeId initial_mode) {
  if (num_modes < 1) throw ParameterError("need at least one mode");
  if (n < 1) throw ParameterError("dwell multiple n must be positive");
  if (!(p_switch >= 0.0 && p_switch <= 1.0)) throw ParameterError("p_switch must be in [0, 1]");
  if (initial_mode < 0 || initial_mode >= num_modes) throw ParameterError("bad initial mode");
  const SampleClock clock(Ts);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Switch> switches;
  if (num_modes == 1 || p_switch == 0.0) return SwitchingSignal(initial_mode);

  const double dwell = n * Ts;
  ModeId mode = initial_mode;
  double last = 0.0;
  while (true) {
    const double quiet_end = last + dwell;
    if (quiet_end >= horizon) break;
    int64_t k = clock.index_of(quiet_end);
    bool switched = false;
    for (; clock.time_of(k) < horizon; ++k) {
      double lo = std::max(clock.time_of(k), quiet_end);
      const double hi = clock.time_of(k + 1);
      while (lo < hi && lo - last < dwell) lo = std::nextafter(lo, hi);
      if (!(lo < hi)) continue;
      if (unit(rng) >= p_switch) continue;
      double t = lo + unit(rng) * (hi - lo);
      if (t >= hi) t = lo;
      if (t >= horizon) break;
      ModeId next = 0;
      if (num_modes == 2) {
        next = 1 - mode;
      } else {
        next = static_cast<ModeId>(std::uniform_int_distribution<int>(0, num_modes - 2)(rng));
        if (next >= mode) ++next;
      }
      switches.push_back({t, next});
      mode = next;
      last = t;
      switched = true;
      break;
    }
    if (!switched) break;
  }
  return SwitchingSignal(initial_mode, std::move(switches));
}

AdversarialSignal generate_adversarial(int n, double Ts, double eps, double T,
                                       AdversarialVariant variant) {
  if (n < 1) throw ParameterError("dwell multiple n must be positive");
  if (!(Ts > 0.0)) throw ParameterError("sampling period must be positive");
  if (!(eps > 0.0)) throw ParameterError("epsilon must be positive");
  if (!(T >= 0.0)) throw ParameterError("T must be nonnegative");
  AdversarialSignal out;
  const double period = n * Ts;
  out.m = std::max(1, static_cast<int>(std::ceil(T / period)));
  const int m = out.m;
  if (eps >= Ts) throw ParameterError("epsilon must be below T_s");
  std::vector<Switch> switches;
  ModeId mode = 0;
  auto add = [&](double t) {
    mode = 1 - mode;
    switches.push_back({t, mode});
  };
  if (variant == AdversarialVariant::kGlobal) {
    for (int k = 1; k <= m; ++k) add(k * period + eps / m);
    out.t = m * period + Ts;
    out.lower_bound = out.t / n - (Ts / n + eps);
    out.upper_bound = out.t / n;
  } else {
    const double offset = eps / (2.0 * (m + 1));
    const double T0 = period + offset;
    add(T0);
    for (int k = 1; k <= m; ++k) add(T0 + k * period + offset);
    out.T0 = T0;
    out.t = T0 + m * period + Ts;
    out.lower_bound = Ts + (out.t - T0) / n - (Ts / n + eps);
    out.upper_bound = Ts + (out.t - T0) / n;
  }
  out.signal = SwitchingSignal(0, std::move(switches));
  return out;
}

}  // namespace qsds
