#pragma once

#include <vector>

#include "qsds/linalg.h"
#include "qsds/lyapunov_synthesis.h"
#include "qsds/quantizer.h"
#include "qsds/system_model.h"

namespace qsds {

/// Rates derived from a certificate and a growth rate D.
struct RatesAndDwell {
  double C_P = 0.0;      // C / lambda_max(P)
  double D_P = 0.0;      // D / lambda_min(P)
  double kappa = 0.0;    // exp(T_s (C_P + D_P) / 2)
  double f_kappa = 0.0;  // 2 log(kappa) / (C_P + D_P); equals T_s
  double L_max = 0.0;    // C_P / (C_P + D_P), exclusive
  int n_min = 0;         // ceil(1 + D_P / C_P)
};

struct StabilityBounds {
  double Lambda = 0.0;
  double alpha0 = 0.0;
  double eta = 0.0;
  double alpha1 = 0.0;
  double beta1 = 0.0;
  MatrixXd gamma0;  // (p, q) entry for p != q; diagonal unused
  MatrixXd gamma;
  double D = 0.0;   // the value the rates were computed from
  double D_computed = 0.0;
  RatesAndDwell rates;
  int cover_cells = 0;
  double bits_per_sample = 0.0;
};

/// The cells S_f used by every per-cell maximum: those meeting the ball that
/// encloses the outer level set.
std::vector<int> cover_cells(const QuantizerPartition& partition, const LyapunovCertificate& cert);

/// max over p, q and non-origin cells of ||B_p K_q q_j|| / min_{x in cell} ||x||.
double compute_alpha0(const Plant& plant, const QuantizerPartition& partition,
                      const LyapunovCertificate& cert);

/// alpha0 (e^{Lambda T_s} - 1) / Lambda, with the Lambda -> 0 limit alpha0 T_s.
double compute_eta(double Lambda, double alpha0, double Ts);
/// e^{Lambda T_s} / (1 - eta). Throws ConditionViolated carrying eta when
/// eta >= 1.
double compute_alpha1(double Lambda, double alpha0, double Ts);
/// (e^{Lambda T_s} - 1)(1 + alpha0 / Lambda).
double compute_beta1(double Lambda, double alpha0, double Ts);

/// max(||P B_p K_q||, max over non-origin cells of
/// ||P B_p K_q|| max_dev(j) / min_norm(j)), p != q.
double compute_gamma0(const Plant& plant, const QuantizerPartition& partition,
                      const LyapunovCertificate& cert, ModeId p, ModeId q);

/// gamma(p, q) = alpha1 (beta1 ||P B_p K_q|| + gamma0(p, q)).
double compute_gamma(const Plant& plant, const LyapunovCertificate& cert, double alpha1,
                     double beta1, double gamma0, ModeId p, ModeId q);

/// D = 2 max_{p != q} (||P (A_p + B_p K_q)|| + gamma(p, q)). `gamma` is
/// indexed (p, q); its diagonal is ignored. A single-mode plant gives 0.
double compute_growth_rate_D(const Plant& plant, const LyapunovCertificate& cert,
                             const MatrixXd& gamma);

/// Throws CertificateIncompatible when kappa^2 r^2 lambda_min >= R^2 lambda_max.
RatesAndDwell compute_rates_and_dwell(const LyapunovCertificate& cert, double D, double Ts);

/// Full chain. When D_override is positive, the rates use it instead of the
/// computed D; D_computed always holds the computed value.
StabilityBounds compute_bounds(const Plant& plant, const QuantizerPartition& partition,
                               const LyapunovCertificate& cert, double D_override = 0.0);

struct RefinedBounds {
  double alpha1 = 0.0;
  double beta1 = 0.0;
};

/// Grid evaluation of the two-factor alpha1 and beta1 over p != q,
/// 0 <= t' <= t <= T_s with `grid` steps per axis. Integrals use composite
/// Simpson. Throws ConditionViolated when a denominator is not positive.
RefinedBounds refined_alpha1_beta1(const Plant& plant, double alpha0, double Ts, int grid);

}  // namespace qsds
