#pragma once

// Independent reference computations for the tests: an adaptive ODE
// integrator, Simpson quadrature, finite differences, and the example plant.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "qsds/linalg.h"
#include "qsds/lyapunov_synthesis.h"
#include "qsds/quantizer.h"
#include "qsds/system_model.h"

namespace oracle {

using qsds::MatrixXd;
using qsds::VectorXd;

using Rhs = std::function<VectorXd(double, const VectorXd&)>;

// Dormand-Prince 5(4) with error control on the mixed abs/rel norm.
inline VectorXd integrate(const Rhs& f, VectorXd x, double t0, double t1, double tol = 1e-12) {
  static const double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1, 1};
  static const double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static const double b5[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0};
  static const double b4[7] = {5179.0 / 57600, 0, 7571.0 / 16695, 393.0 / 640,
                               -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
  double t = t0;
  double h = std::max((t1 - t0) / 100.0, 1e-12);
  VectorXd k[7];
  while (t < t1) {
    h = std::min(h, t1 - t);
    for (int s = 0; s < 7; ++s) {
      VectorXd y = x;
      for (int j = 0; j < s; ++j) y += h * a[s][j] * k[j];
      k[s] = f(t + c[s] * h, y);
    }
    VectorXd y5 = x, y4 = x;
    for (int s = 0; s < 7; ++s) {
      y5 += h * b5[s] * k[s];
      y4 += h * b4[s] * k[s];
    }
    const double scale = tol * (1.0 + std::max(x.cwiseAbs().maxCoeff(), y5.cwiseAbs().maxCoeff()));
    const double err = (y5 - y4).cwiseAbs().maxCoeff() / scale;
    if (err <= 1.0) {
      t = (t + h >= t1) ? t1 : t + h;
      x = y5;
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= factor;
  }
  return x;
}

// Composite Simpson on [a, b] for matrix-valued integrands.
inline MatrixXd simpson(const std::function<MatrixXd(double)>& f, double a, double b, int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  MatrixXd sum = f(a) + f(b);
  for (int i = 1; i < panels; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return sum * (h / 3.0);
}

// Example data: two modes with LQR gains (Q = I, R = 1), T_s = 0.025.
inline qsds::Plant example_plant() {
  qsds::Plant plant;
  plant.sampling_period = 0.025;
  MatrixXd A1(2, 2), B1(2, 1), A2(2, 2), B2(2, 1);
  A1 << 1, -2, -3, 2;
  A1 /= 6.0;
  B1 << -4, 3;
  B1 /= 6.0;
  A2 << 1, -5, 1, 2;
  B2 << 1, -1;
  const MatrixXd Q = MatrixXd::Identity(2, 2);
  const MatrixXd R = MatrixXd::Identity(1, 1);
  plant.modes.push_back({A1, B1, qsds::lqr_gain(A1, B1, Q, R)});
  plant.modes.push_back({A2, B2, qsds::lqr_gain(A2, B2, Q, R)});
  return plant;
}

inline MatrixXd example_P() {
  MatrixXd P(2, 2);
  P << 2.9171, 0.3489, 0.3489, 3.6256;
  return P;
}

inline qsds::LyapunovCertificate example_certificate() {
  return qsds::LyapunovCertificate::make(example_P(), 1.0, 68.6, 0.175);
}

inline qsds::QuantizerPartition example_partition() {
  return qsds::build_log_quantizer(0.08, 1.2, 38, 2);
}

// Uniform point in {x : x'Px <= level}.
inline VectorXd uniform_in_ellipsoid(const MatrixXd& P, double level, std::mt19937_64& rng) {
  const int n = static_cast<int>(P.rows());
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  VectorXd d(n);
  for (int i = 0; i < n; ++i) d(i) = normal(rng);
  d /= d.norm();
  const VectorXd y = std::sqrt(level) * std::pow(unit(rng), 1.0 / n) * d;
  const MatrixXd U = Eigen::LLT<MatrixXd>(P).matrixU();
  return U.triangularView<Eigen::Upper>().solve(y);
}

}  // namespace oracle
