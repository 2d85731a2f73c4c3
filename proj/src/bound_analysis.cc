#include "qsds/bound_analysis.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsds/error.h"

namespace qsds {

namespace {

// (e^{Lambda T} - 1) / Lambda, continuous at Lambda = 0.
double growth_integral(double Lambda, double Ts) {
  return Lambda == 0.0 ? Ts : std::expm1(Lambda * Ts) / Lambda;
}

template <typename F>
double simpson(F&& f, double a, double b, int panels) {
  if (b <= a) return 0.0;
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int i = 1; i < panels; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return sum * h / 3.0;
}

std::vector<std::pair<ModeId, ModeId>> mismatched_pairs(const Plant& plant) {
  std::vector<std::pair<ModeId, ModeId>> out;
  for (ModeId p = 0; p < plant.num_modes(); ++p) {
    for (ModeId q = 0; q < plant.num_modes(); ++q) {
      if (p != q) out.emplace_back(p, q);
    }
  }
  return out;
}

}  // namespace

std::vector<int> cover_cells(const QuantizerPartition& partition, const LyapunovCertificate& cert) {
  return cells_covering_ellipsoid(partition, cert.P, cert.outer_level());
}

double compute_alpha0(const Plant& plant, const QuantizerPartition& partition,
                      const LyapunovCertificate& cert) {
  std::vector<MatrixXd> maps;
  for (const Mode& p : plant.modes) {
    for (const Mode& q : plant.modes) maps.push_back(p.B * q.K);
  }
  double best = 0.0;
  for (int id : cover_cells(partition, cert)) {
    const Cell& c = partition.cell(id);
    if (c.closure_contains_origin()) {
      cell_min_norm(c);  // enforces q = 0
      continue;
    }
    const double m = cell_min_norm(c);
    if (!(m > 0.0)) throw InvariantViolation("non-origin cell with zero minimum norm");
    for (const MatrixXd& bk : maps) best = std::max(best, (bk * c.q).norm() / m);
  }
  return best;
}

double compute_eta(double Lambda, double alpha0, double Ts) {
  if (Lambda < 0.0 || alpha0 < 0.0 || Ts < 0.0) throw ParameterError("compute_eta: negative input");
  return alpha0 * growth_integral(Lambda, Ts);
}

double compute_alpha1(double Lambda, double alpha0, double Ts) {
  const double eta = compute_eta(Lambda, alpha0, Ts);
  if (!(eta < 1.0)) {
    std::ostringstream os;
    os << "eta = " << eta
       << " >= 1: sampling period or quantizer too coarse (reduce T_s or refine the "
          "quantizer)";
    throw ConditionViolated(os.str(), eta);
  }
  return std::exp(Lambda * Ts) / (1.0 - eta);
}

double compute_beta1(double Lambda, double alpha0, double Ts) {
  if (Lambda < 0.0 || alpha0 < 0.0 || Ts < 0.0) throw ParameterError("compute_beta1: negative input");
  if (Lambda == 0.0) return alpha0 * Ts;
  return std::expm1(Lambda * Ts) * (1.0 + alpha0 / Lambda);
}

double compute_gamma0(const Plant& plant, const QuantizerPartition& partition,
                      const LyapunovCertificate& cert, ModeId p, ModeId q) {
  if (p == q) throw ParameterError("compute_gamma0 needs p != q");
  const double base = spectral_norm(cert.P * plant.modes.at(p).B * plant.modes.at(q).K);
  double hat = 0.0;
  for (int id : cover_cells(partition, cert)) {
    const Cell& c = partition.cell(id);
    const double m = cell_min_norm(c);
    if (c.closure_contains_origin()) continue;
    if (!(m > 0.0)) throw InvariantViolation("non-origin cell with zero minimum norm");
    hat = std::max(hat, base * cell_max_deviation(c) / m);
  }
  return std::max(base, hat);
}

double compute_gamma(const Plant& plant, const LyapunovCertificate& cert, double alpha1,
                     double beta1, double gamma0, ModeId p, ModeId q) {
  const double pbk = spectral_norm(cert.P * plant.modes.at(p).B * plant.modes.at(q).K);
  return alpha1 * (beta1 * pbk + gamma0);
}

double compute_growth_rate_D(const Plant& plant, const LyapunovCertificate& cert,
                             const MatrixXd& gamma) {
  double D = 0.0;
  for (const auto& [p, q] : mismatched_pairs(plant)) {
    const Mode& mp = plant.modes[p];
    const Mode& mq = plant.modes[q];
    D = std::max(D, 2.0 * (spectral_norm(cert.P * (mp.A + mp.B * mq.K)) + gamma(p, q)));
  }
  return D;
}

RatesAndDwell compute_rates_and_dwell(const LyapunovCertificate& cert, double D, double Ts) {
  if (!(D > 0.0)) throw ParameterError("growth rate D must be positive");
  if (!(Ts > 0.0)) throw ParameterError("sampling period must be positive");
  RatesAndDwell out;
  out.C_P = cert.C / cert.lambda_max;
  out.D_P = D / cert.lambda_min;
  const double sum = out.C_P + out.D_P;
  out.kappa = std::exp(Ts * sum / 2.0);
  out.f_kappa = 2.0 * std::log(out.kappa) / sum;
  out.L_max = out.C_P / sum;
  // Ratios that land on an integer up to rounding are not bumped past it.
  const double x = 1.0 + out.D_P / out.C_P;
  out.n_min = static_cast<int>(std::ceil(x * (1.0 - 1e-12)));
  if (std::abs(out.f_kappa - Ts) > 1e-12 * std::max(1.0, Ts)) {
    throw InvariantViolation("f(kappa) differs from T_s");
  }
  if (!cert.admits_kappa(out.kappa)) {
    std::ostringstream os;
    os << "kappa^2 r^2 lambda_min = " << cert.inner_level(out.kappa)
       << " is not below R^2 lambda_max = " << cert.outer_level()
       << " (shrink r, enlarge R, or shorten T_s)";
    throw CertificateIncompatible(os.str());
  }
  return out;
}

StabilityBounds compute_bounds(const Plant& plant, const QuantizerPartition& partition,
                               const LyapunovCertificate& cert, double D_override) {
  StabilityBounds b;
  const double Ts = plant.sampling_period;
  b.Lambda = plant.max_dynamics_norm();
  b.alpha0 = compute_alpha0(plant, partition, cert);
  b.eta = compute_eta(b.Lambda, b.alpha0, Ts);
  b.alpha1 = compute_alpha1(b.Lambda, b.alpha0, Ts);
  b.beta1 = compute_beta1(b.Lambda, b.alpha0, Ts);
  const int m = plant.num_modes();
  b.gamma0 = MatrixXd::Zero(m, m);
  b.gamma = MatrixXd::Zero(m, m);
  for (const auto& [p, q] : mismatched_pairs(plant)) {
    b.gamma0(p, q) = compute_gamma0(plant, partition, cert, p, q);
    b.gamma(p, q) = compute_gamma(plant, cert, b.alpha1, b.beta1, b.gamma0(p, q), p, q);
  }
  b.D_computed = compute_growth_rate_D(plant, cert, b.gamma);
  b.D = D_override > 0.0 ? D_override : b.D_computed;
  b.rates = compute_rates_and_dwell(cert, b.D, Ts);
  b.cover_cells = static_cast<int>(cover_cells(partition, cert).size());
  b.bits_per_sample = bits_per_sample(b.cover_cells, m);
  return b;
}

RefinedBounds refined_alpha1_beta1(const Plant& plant, double alpha0, double Ts, int grid) {
  if (grid < 1) throw ParameterError("refined bounds need grid >= 1");
  if (!(Ts > 0.0) || alpha0 < 0.0) throw ParameterError("refined bounds need T_s > 0, alpha0 >= 0");
  constexpr int kPanels = 16;
  std::vector<std::pair<ModeId, ModeId>> pairs = mismatched_pairs(plant);
  if (pairs.empty()) pairs.emplace_back(0, 0);
  const int n = plant.state_dim();
  const MatrixXd I = MatrixXd::Identity(n, n);

  RefinedBounds out;
  for (const auto& [p, q] : pairs) {
    const MatrixXd& Ap = plant.modes[p].A;
    const MatrixXd& Aq = plant.modes[q].A;
    for (int i = 0; i <= grid; ++i) {
      const double t = Ts * i / grid;
      for (int j = 0; j <= i; ++j) {
        const double tp = Ts * j / grid;
        const MatrixXd back_p = expm(Ap, -tp);
        // alpha1 candidate
        const double num = spectral_norm(back_p * expm(Aq, -(t - tp)));
        const double int1 = simpson(
            [&](double tau) { return spectral_norm(back_p * expm(Aq, -(tau - tp))); }, tp, t,
            kPanels);
        const double int2 =
            simpson([&](double tau) { return spectral_norm(expm(Ap, -tau)); }, 0.0, tp, kPanels);
        const double den = 1.0 - alpha0 * (int1 + int2);
        if (!(den > 0.0)) {
          std::ostringstream os;
          os << "refined alpha1 denominator " << den << " is not positive";
          throw ConditionViolated(os.str(), 1.0 - den);
        }
        out.alpha1 = std::max(out.alpha1, num / den);
        // beta1 candidate
        const MatrixXd fwd_q = expm(Aq, t - tp);
        const double jump = spectral_norm(fwd_q * expm(Ap, tp) - I);
        const double int3 =
            simpson([&](double tau) { return spectral_norm(expm(Aq, t - tau)); }, tp, t, kPanels);
        const double int4 = simpson(
            [&](double tau) { return spectral_norm(fwd_q * expm(Ap, tp - tau)); }, 0.0, tp,
            kPanels);
        out.beta1 = std::max(out.beta1, jump + alpha0 * (int3 + int4));
      }
    }
  }
  return out;
}

}  // namespace qsds
