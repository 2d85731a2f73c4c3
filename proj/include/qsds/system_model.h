#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "qsds/linalg.h"

namespace qsds {

/// Index into Plant::modes.
using ModeId = int;

/// One plant mode x' = A x + B u with its state-feedback gain u = K x.
struct Mode {
  MatrixXd A;  // n x n
  MatrixXd B;  // n x m
  MatrixXd K;  // m x n

  MatrixXd closed_loop() const { return A + B * K; }
};

/// The switched plant together with the sampling period of the sampler and
/// zero-order hold.
struct Plant {
  std::vector<Mode> modes;
  double sampling_period = 0.0;

  int num_modes() const { return static_cast<int>(modes.size()); }
  int state_dim() const { return modes.empty() ? 0 : static_cast<int>(modes[0].A.rows()); }
  int input_dim() const { return modes.empty() ? 0 : static_cast<int>(modes[0].B.cols()); }

  /// max_p ||A_p||.
  double max_dynamics_norm() const;
};

/// Maps times to sampling indices k with kT_s <= t < (k+1)T_s. Sampling
/// instants are always the doubles k * T_s, so membership tests agree across
/// modules.
class SampleClock {
 public:
  explicit SampleClock(double period);

  double period() const { return period_; }
  int64_t index_of(double t) const;
  double time_of(int64_t k) const { return static_cast<double>(k) * period_; }
  /// [t]^-: the last sampling instant at or before t.
  double floor(double t) const { return time_of(index_of(t)); }
  double next_after(double t) const { return time_of(index_of(t) + 1); }

 private:
  double period_;
};

struct Switch {
  double time;
  ModeId mode;
};

/// Right-continuous piecewise-constant mode schedule. The switch list is the
/// full, finite materialization over whatever horizon produced it; after the
/// last switch the mode stays constant.
class SwitchingSignal {
 public:
  SwitchingSignal() = default;
  explicit SwitchingSignal(ModeId initial_mode, std::vector<Switch> switches = {});

  ModeId initial_mode() const { return initial_mode_; }
  const std::vector<Switch>& switches() const { return switches_; }
  bool empty() const { return switches_.empty(); }

  /// sigma(t), right-continuous.
  ModeId mode_at(double t) const;
  /// Switch times in the open interval (a, b).
  std::vector<double> switch_times_in(double a, double b) const;
  /// Assumption: every sampling interval (kT_s, (k+1)T_s) holds at most one
  /// switch.
  bool at_most_one_per_interval(double sampling_period) const;
  /// Highest mode id referenced.
  ModeId max_mode() const;

 private:
  ModeId initial_mode_ = 0;
  std::vector<Switch> switches_;
};

/// Phi(to, from) for the unforced switched dynamics.
struct TransitionMatrix {
  MatrixXd value;
  double from = 0.0;
  double to = 0.0;
};

struct ModeReport {
  ModeId index = 0;
  bool hurwitz = false;
  std::vector<std::complex<double>> closed_loop_eigenvalues;
  double max_real_part = 0.0;
};

struct ValidationReport {
  bool ok = false;
  int state_dim = 0;
  int input_dim = 0;
  std::vector<ModeReport> modes;
};

inline constexpr double kHurwitzTolerance = 1e-9;

/// Dimensional consistency (throws StructuralError naming the mode) and
/// per-mode Hurwitz status of A_p + B_p K_p.
ValidationReport validate_plant(const Plant& plant);

std::vector<std::complex<double>> eigenvalues(const MatrixXd& m);

/// Eigenvalues of A_p + B_p K_q, the dynamics seen when the plant runs mode p
/// under the gain of mode q.
std::vector<std::complex<double>> cross_mode_eigenvalues(const Plant& plant, ModeId p,
                                                         ModeId q);

/// Exact product of matrix exponentials over the switch-partitioned
/// interval [tau_from, tau_to], latest factor leftmost.
TransitionMatrix transition_matrix(const Plant& plant, const SwitchingSignal& signal,
                                   double tau_from, double tau_to);

/// int_0^t e^{A s} ds B, read off the top-right block of exp([[A, B], [0, 0]] t).
MatrixXd hold_integral(const MatrixXd& A, const MatrixXd& B, double t);

/// Infinite-horizon LQR gain for cost int x'Qx + u'Ru, returned in the
/// u = K x convention (so K = -R^{-1} B' X). Solves the Riccati equation
/// through the stable invariant subspace of the Hamiltonian matrix.
MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                  const MatrixXd& R);

}  // namespace qsds
