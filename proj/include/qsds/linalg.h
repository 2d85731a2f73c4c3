#pragma once

// Small dense kernels shared by every module. Everything here is templated on
// the Eigen expression type so fixed-size callers keep their static sizes.

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace qsds {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// e^{tM}. Eigen's implementation is scaling-and-squaring with a degree-13
/// Pade approximant for double precision.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
expm(const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar t) {
  using Mat =
      Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat scaled = m * t;
  return scaled.exp();
}

/// Largest singular value, from the symmetric eigenproblem of M^T M.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return Scalar(0);
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat gram = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(Scalar(0), es.eigenvalues().maxCoeff()));
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m,
                  typename Derived::Scalar rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const auto scale = std::max(typename Derived::Scalar(1), m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// Returns (lambda_min, lambda_max) of a symmetric matrix.
template <typename Derived>
std::pair<typename Derived::Scalar, typename Derived::Scalar> extreme_eigenvalues(
    const Eigen::MatrixBase<Derived>& sym) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::SelfAdjointEigenSolver<Mat> es(Mat(sym), Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

/// Quadratic form x^T P x.
template <typename DerivedP, typename DerivedX>
typename DerivedX::Scalar quad_form(const Eigen::MatrixBase<DerivedP>& p,
                                    const Eigen::MatrixBase<DerivedX>& x) {
  return x.dot(p * x);
}

}  // namespace qsds
