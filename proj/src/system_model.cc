#include "qsds/system_model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "qsds/error.h"

namespace qsds {

double Plant::max_dynamics_norm() const {
  double lambda = 0.0;
  for (const auto& mode : modes) lambda = std::max(lambda, spectral_norm(mode.A));
  return lambda;
}

SampleClock::SampleClock(double period) : period_(period) {
  if (!(period > 0.0) || !std::isfinite(period)) {
    throw ParameterError("sampling period must be finite and positive");
  }
}

int64_t SampleClock::index_of(double t) const {
  auto k = static_cast<int64_t>(std::floor(t / period_));
  // Division can land one off near multiples of the period.
  while (time_of(k) > t) --k;
  while (time_of(k + 1) <= t) ++k;
  return k;
}

SwitchingSignal::SwitchingSignal(ModeId initial_mode, std::vector<Switch> switches)
    : initial_mode_(initial_mode), switches_(std::move(switches)) {
  if (initial_mode_ < 0) throw StructuralError("negative initial mode");
  ModeId previous = initial_mode_;
  for (std::size_t i = 0; i < switches_.size(); ++i) {
    const auto& s = switches_[i];
    if (!std::isfinite(s.time) || s.time < 0.0) {
      throw StructuralError("switch time must be finite and nonnegative");
    }
    if (i > 0 && !(s.time > switches_[i - 1].time)) {
      throw StructuralError("switch times must be strictly increasing");
    }
    if (s.mode < 0) throw StructuralError("negative mode id in switch list");
    if (s.mode == previous) {
      std::ostringstream os;
      os << "switch at t=" << s.time << " does not change the mode";
      throw StructuralError(os.str());
    }
    previous = s.mode;
  }
}

ModeId SwitchingSignal::mode_at(double t) const {
  // Last switch with time <= t.
  auto it = std::upper_bound(switches_.begin(), switches_.end(), t,
                             [](double v, const Switch& s) { return v < s.time; });
  if (it == switches_.begin()) return initial_mode_;
  return std::prev(it)->mode;
}

std::vector<double> SwitchingSignal::switch_times_in(double a, double b) const {
  std::vector<double> out;
  auto it = std::upper_bound(switches_.begin(), switches_.end(), a,
                             [](double v, const Switch& s) { return v < s.time; });
  for (; it != switches_.end() && it->time < b; ++it) out.push_back(it->time);
  return out;
}

bool SwitchingSignal::at_most_one_per_interval(double sampling_period) const {
  const SampleClock clock(sampling_period);
  int64_t last_index = -1;
  for (const auto& s : switches_) {
    const int64_t k = clock.index_of(s.time);
    // A switch exactly at a sampling instant is not inside the open interval.
    if (clock.time_of(k) == s.time) continue;
    if (k == last_index) return false;
    last_index = k;
  }
  return true;
}

ModeId SwitchingSignal::max_mode() const {
  ModeId m = initial_mode_;
  for (const auto& s : switches_) m = std::max(m, s.mode);
  return m;
}

std::vector<std::complex<double>> eigenvalues(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> es(m, false);
  std::vector<std::complex<double>> out(es.eigenvalues().data(),
                                        es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(out.begin(), out.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return out;
}

ValidationReport validate_plant(const Plant& plant) {
  if (plant.modes.empty()) throw StructuralError("plant has no modes");
  if (!(plant.sampling_period > 0.0) || !std::isfinite(plant.sampling_period)) {
    throw StructuralError("sampling period must be finite and positive");
  }
  const Eigen::Index n = plant.modes[0].A.rows();
  const Eigen::Index m = plant.modes[0].B.cols();
  ValidationReport report;
  report.state_dim = static_cast<int>(n);
  report.input_dim = static_cast<int>(m);
  report.ok = true;
  for (int i = 0; i < plant.num_modes(); ++i) {
    const Mode& mode = plant.modes[i];
    const bool consistent = n > 0 && mode.A.rows() == n && mode.A.cols() == n &&
                            mode.B.rows() == n && mode.B.cols() == m &&
                            mode.K.rows() == m && mode.K.cols() == n;
    if (!consistent) {
      std::ostringstream os;
      os << "mode " << i << ": expected A " << n << "x" << n << ", B " << n << "x" << m
         << ", K " << m << "x" << n << "; got A " << mode.A.rows() << "x" << mode.A.cols()
         << ", B " << mode.B.rows() << "x" << mode.B.cols() << ", K " << mode.K.rows()
         << "x" << mode.K.cols();
      throw StructuralError(os.str());
    }
    ModeReport mr;
    mr.index = i;
    mr.closed_loop_eigenvalues = eigenvalues(mode.closed_loop());
    mr.max_real_part = -std::numeric_limits<double>::infinity();
    for (const auto& ev : mr.closed_loop_eigenvalues) {
      mr.max_real_part = std::max(mr.max_real_part, ev.real());
    }
    mr.hurwitz = mr.max_real_part < -kHurwitzTolerance;
    report.ok = report.ok && mr.hurwitz;
    report.modes.push_back(std::move(mr));
  }
  return report;
}

std::vector<std::complex<double>> cross_mode_eigenvalues(const Plant& plant, ModeId p,
                                                         ModeId q) {
  if (p < 0 || q < 0 || p >= plant.num_modes() || q >= plant.num_modes()) {
    throw StructuralError("mode index out of range");
  }
  const auto& mp = plant.modes[p];
  return eigenvalues(mp.A + mp.B * plant.modes[q].K);
}

TransitionMatrix transition_matrix(const Plant& plant, const SwitchingSignal& signal,
                                   double tau_from, double tau_to) {
  if (!(tau_from >= 0.0) || !(tau_to >= tau_from)) {
    throw ParameterError("transition_matrix requires 0 <= tau_from <= tau_to");
  }
  if (signal.max_mode() >= plant.num_modes()) {
    throw StructuralError("switching signal references an unknown mode");
  }
  const Eigen::Index n = plant.state_dim();
  TransitionMatrix out{MatrixXd::Identity(n, n), tau_from, tau_to};
  double t = tau_from;
  auto breaks = signal.switch_times_in(tau_from, tau_to);
  breaks.push_back(tau_to);
  for (double next : breaks) {
    if (next > t) {
      const Mode& mode = plant.modes[signal.mode_at(t)];
      out.value = expm(mode.A, next - t) * out.value;
    }
    t = next;
  }
  return out;
}

MatrixXd hold_integral(const MatrixXd& A, const MatrixXd& B, double t) {
  if (!(t >= 0.0)) throw ParameterError("hold_integral requires t >= 0");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  if (A.cols() != n || B.rows() != n) throw StructuralError("hold_integral: A, B shape");
  if (t == 0.0) return MatrixXd::Zero(n, m);
  MatrixXd aug = MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = A;
  aug.topRightCorner(n, m) = B;
  return expm(aug, t).topRightCorner(n, m);
}

MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                  const MatrixXd& R) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw StructuralError("lqr_gain: inconsistent dimensions");
  }
  const MatrixXd r_inv = R.inverse();
  MatrixXd ham(2 * n, 2 * n);
  ham << A, -B * r_inv * B.transpose(), -Q, -A.transpose();
  Eigen::ComplexEigenSolver<MatrixXd> es(ham);
  Eigen::MatrixXcd stable(2 * n, n);
  Eigen::Index col = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) {
      if (col == n) break;
      stable.col(col++) = es.eigenvectors().col(i);
    }
  }
  if (col != n) throw ParameterError("lqr_gain: Hamiltonian has eigenvalues on the imaginary axis");
  const Eigen::MatrixXcd x1 = stable.topRows(n);
  const Eigen::MatrixXcd x2 = stable.bottomRows(n);
  MatrixXd riccati = (x2 * x1.inverse()).real();
  riccati = 0.5 * (riccati + riccati.transpose());
  return -r_inv * B.transpose() * riccati;
}

}  // namespace qsds
