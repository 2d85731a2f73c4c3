#include "qsds/simulator.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "qsds/error.h"

namespace qsds {

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kSample: return "sample";
    case EventKind::kSwitch: return "switch";
    case EventKind::kProbe: return "probe";
    case EventKind::kHorizon: return "horizon";
    case EventKind::kCoverageExceeded: return "coverage_exceeded";
  }
  return "unknown";
}

double lyapunov_derivative(const Plant& plant, const LyapunovCertificate& cert,
                           const VectorXd& x, const VectorXd& qx, ModeId p, ModeId q) {
  const Mode& mp = plant.modes.at(p);
  const VectorXd rate = mp.A * x + mp.B * (plant.modes.at(q).K * qx);
  return 2.0 * rate.dot(cert.P * x);
}

Trajectory simulate(const Plant& plant, const QuantizerPartition& partition,
                    const LyapunovCertificate* cert, const SwitchingSignal& signal,
                    const VectorXd& x0, double horizon, int probes) {
  const int n = plant.state_dim();
  if (x0.size() != n) throw StructuralError("initial state has the wrong dimension");
  if (partition.dim() != n) throw StructuralError("partition dimension does not match plant");
  if (!(horizon >= 0.0)) throw ParameterError("horizon must be nonnegative");
  if (probes < 0) throw ParameterError("probe count must be nonnegative");
  if (signal.max_mode() >= plant.num_modes()) {
    throw StructuralError("switching signal references an unknown mode");
  }
  if (cert && cert->P.rows() != n) throw StructuralError("certificate dimension mismatch");

  const SampleClock clock(plant.sampling_period);
  Trajectory traj;
  traj.horizon = horizon;
  traj.has_values = cert != nullptr;

  // Event times: sampling instants up to the horizon, interior switches, the horizon.
  std::vector<double> times;
  for (int64_t k = 0; clock.time_of(k) <= horizon; ++k) times.push_back(clock.time_of(k));
  for (double s : signal.switch_times_in(0.0, horizon)) times.push_back(s);
  times.push_back(horizon);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  auto is_sample = [&](double t) { return clock.time_of(clock.index_of(t)) == t; };
  auto make = [&](double t, const VectorXd& x, const VectorXd& xs, ModeId p, ModeId c,
                  const VectorXd& q, EventKind kind, bool span_mismatch) {
    EventRecord r;
    r.t = t;
    r.x = x;
    r.x_sample = xs;
    r.plant_mode = p;
    r.controller_mode = c;
    r.qx = q;
    r.kind = kind;
    r.span_mismatched = span_mismatch;
    if (cert) r.V = cert->value(x);
    return r;
  };

  VectorXd x = x0;
  VectorXd x_sample = x0;
  VectorXd q;
  ModeId controller = signal.mode_at(0.0);
  try {
    q = quantize(partition, x).q;
  } catch (const OutOfRangeError&) {
    traj.coverage_exceeded = true;
    traj.events.push_back(make(0.0, x, x, controller, controller, VectorXd::Zero(n),
                               EventKind::kCoverageExceeded, false));
    return traj;
  }
  traj.events.push_back(make(0.0, x, x, controller, controller, q, EventKind::kSample, false));

  MatrixXd aug = MatrixXd::Zero(n + 1, n + 1);
  VectorXd ext(n + 1);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double a = times[i - 1];
    const double b = times[i];
    const ModeId p = signal.mode_at(a);
    const Mode& mp = plant.modes[p];
    const bool mismatch = p != controller;
    aug.topLeftCorner(n, n) = mp.A;
    aug.topRightCorner(n, 1) = mp.B * (plant.modes[controller].K * q);
    ext.head(n) = x;
    ext(n) = 1.0;
    for (int j = 1; j <= probes; ++j) {
      const double s = a + (b - a) * j / (probes + 1);
      const VectorXd xs = (expm(aug, s - a) * ext).head(n);
      traj.events.push_back(make(s, xs, x_sample, p, controller, q, EventKind::kProbe, mismatch));
    }
    x = (expm(aug, b - a) * ext).head(n);

    EventKind kind = EventKind::kHorizon;
    if (is_sample(b)) {
      kind = EventKind::kSample;
      x_sample = x;
      controller = signal.mode_at(b);
      try {
        q = quantize(partition, x).q;
      } catch (const OutOfRangeError&) {
        traj.coverage_exceeded = true;
        traj.events.push_back(make(b, x, x, signal.mode_at(b), controller, q,
                                   EventKind::kCoverageExceeded, mismatch));
        return traj;
      }
    } else if (b < horizon) {
      kind = EventKind::kSwitch;
    }
    traj.events.push_back(make(b, x, x_sample, signal.mode_at(b), controller, q, kind, mismatch));
  }
  return traj;
}

StabilityVerdict verdict(const Trajectory& trajectory, const LyapunovCertificate& cert,
                         double kappa) {
  if (!trajectory.has_values) throw ParameterError("verdict needs a trajectory with V values");
  const double outer = cert.outer_level() * (1.0 + kMembershipSlack);
  const double inner = cert.inner_level() * (1.0 + kMembershipSlack);
  const double attractor = cert.inner_level(kappa) * (1.0 + kMembershipSlack);
  const auto& ev = trajectory.events;

  StabilityVerdict v;
  v.coverage_exceeded = trajectory.coverage_exceeded;
  v.contained = true;
  if (ev.empty()) return v;
  v.final_time = ev.back().t;
  std::optional<std::size_t> last_outside;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const double V = ev[i].V;
    if (!(V < outer)) v.contained = false;
    if (!(V < attractor)) last_outside = i;
    const bool inside = V <= inner;
    if (inside && !v.first_entry) v.first_entry = ev[i].t;
    if (v.first_entry && i > 0 && ev[i - 1].V <= inner && !inside) {
      ++v.exits;
      if (!ev[i].span_mismatched) v.exits_on_mismatch = false;
    }
    if (v.first_entry) v.max_excursion_V = std::max(v.max_excursion_V, V);
  }
  if (!last_outside) {
    v.T_r = ev.front().t;
  } else if (*last_outside + 1 < ev.size()) {
    v.T_r = ev[*last_outside + 1].t;
  }
  v.excursions_bounded = v.max_excursion_V < attractor;
  return v;
}

void BoundAudit::merge(const BoundAudit& other) {
  auto add = [](InequalityTally& a, const InequalityTally& b) {
    a.checked += b.checked;
    a.violations += b.violations;
    if (b.worst_excess > a.worst_excess) {
      a.worst_excess = b.worst_excess;
      a.worst_t = b.worst_t;
    }
  };
  add(decrease, other.decrease);
  add(growth, other.growth);
  add(sample_ratio, other.sample_ratio);
  add(sample_error, other.sample_error);
  add(quantized_gap, other.quantized_gap);
  records += other.records;
}

int64_t BoundAudit::total_violations() const {
  return decrease.violations + growth.violations + sample_ratio.violations +
         sample_error.violations + quantized_gap.violations;
}

BoundAudit audit_bounds(const Trajectory& trajectory, const Plant& plant,
                        const LyapunovCertificate& cert, const StabilityBounds& bounds,
                        double tol) {
  const double outer = cert.outer_level() * (1.0 + kMembershipSlack);
  const double inner = cert.inner_level() * (1.0 + kMembershipSlack);
  BoundAudit audit;
  auto tally = [](InequalityTally& t, double excess, double slack, double time) {
    ++t.checked;
    if (excess > slack) ++t.violations;
    if (excess > t.worst_excess) {
      t.worst_excess = excess;
      t.worst_t = time;
    }
  };
  for (const EventRecord& r : trajectory.events) {
    if (r.kind == EventKind::kCoverageExceeded) continue;
    if (!(cert.value(r.x_sample) <= outer)) continue;
    const double nx = r.x.norm();
    if (nx == 0.0) continue;
    ++audit.records;
    const ModeId p = r.plant_mode;
    const ModeId c = r.controller_mode;
    const double norm_slack = tol * (1.0 + nx);
    if (r.mismatched()) {
      const double dv = lyapunov_derivative(plant, cert, r.x, r.qx, p, c);
      tally(audit.growth, dv - bounds.D_computed * nx * nx, tol, r.t);
      const MatrixXd pbk = cert.P * plant.modes[p].B * plant.modes[c].K;
      tally(audit.quantized_gap, (pbk * (r.qx - r.x)).norm() - bounds.gamma(p, c) * nx,
            norm_slack, r.t);
    } else {
      const double V = cert.value(r.x);
      if (V > inner && V <= outer) {
        const double dv = lyapunov_derivative(plant, cert, r.x, r.qx, p, p);
        tally(audit.decrease, dv + cert.C * nx * nx, tol, r.t);
      }
    }
    tally(audit.sample_ratio, r.x_sample.norm() - bounds.alpha1 * nx, norm_slack, r.t);
    tally(audit.sample_error, (r.x - r.x_sample).norm() - bounds.beta1 * r.x_sample.norm(),
          norm_slack, r.t);
  }
  return audit;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory) {
  const int n = trajectory.events.empty() ? 0 : static_cast<int>(trajectory.events[0].x.size());
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  os << ",plant_mode,controller_mode";
  for (int i = 1; i <= n; ++i) os << ",q" << i;
  os << ",V,kind\n";
  os << std::setprecision(17);
  for (const EventRecord& r : trajectory.events) {
    os << r.t;
    for (int i = 0; i < n; ++i) os << ',' << r.x(i);
    os << ',' << r.plant_mode << ',' << r.controller_mode;
    for (int i = 0; i < n; ++i) os << ',' << r.qx(i);
    os << ',';
    if (trajectory.has_values) os << r.V;
    os << ',' << to_string(r.kind) << '\n';
  }
}

}  // namespace qsds
