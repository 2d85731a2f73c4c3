#include "qsds/lyapunov_synthesis.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "qsds/error.h"

namespace qsds {

namespace {

constexpr double kBoundaryTolerance = 1e-9;

double ball_surface(int n, double radius) {
  if (n == 1) return 2.0;
  const double unit = 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
  return unit * std::pow(radius, n - 1);
}

VectorXd random_direction(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd d(n);
  do {
    for (int i = 0; i < n; ++i) d(i) = normal(rng);
  } while (d.norm() == 0.0);
  return d / d.norm();
}

}  // namespace

void AlgorithmParams::validate() const {
  if (!(outer_radius > inner_radius && inner_radius > 0.0)) {
    throw ParameterError("synthesis requires R0 > r0 > 0");
  }
  if (!(delta > delta1 && delta1 > 0.0)) {
    throw ParameterError("synthesis requires delta > delta1 > 0");
  }
  if (!(decrease_rate > 0.0)) throw ParameterError("decrease rate C must be positive");
  if (samples_per_run < 1) throw ParameterError("samples_per_run must be positive");
  if (time_samples < 1) throw ParameterError("time_samples must be at least 1");
  if (max_runs < 1) throw ParameterError("max_runs must be positive");
}

double AlgorithmParams::clamp_level(int n) const {
  return std::sqrt((delta * delta - delta1 * delta1) / n);
}

LyapunovCertificate LyapunovCertificate::make(const MatrixXd& P, double C, double R, double r) {
  if (P.rows() != P.cols() || P.rows() == 0) throw StructuralError("P must be square");
  if (!is_symmetric(P, 1e-9)) throw StructuralError("P must be symmetric");
  if (!(C > 0.0)) throw ParameterError("decrease rate C must be positive");
  if (!(R > r && r > 0.0)) throw ParameterError("certificate radii need R > r > 0");
  LyapunovCertificate cert;
  cert.P = 0.5 * (P + P.transpose());
  cert.C = C;
  cert.R = R;
  cert.r = r;
  std::tie(cert.lambda_min, cert.lambda_max) = extreme_eigenvalues(cert.P);
  if (!(cert.lambda_min > 0.0)) throw ParameterError("P must be positive definite");
  return cert;
}

void write_certificate(std::ostream& os, const LyapunovCertificate& cert) {
  os << std::setprecision(17);
  os << "C " << cert.C << "\n";
  os << "R " << cert.R << "\n";
  os << "r " << cert.r << "\n";
  os << "P " << cert.P.rows() << "\n";
  for (Eigen::Index i = 0; i < cert.P.rows(); ++i) {
    for (Eigen::Index j = 0; j < cert.P.cols(); ++j) {
      os << (j ? " " : "") << cert.P(i, j);
    }
    os << "\n";
  }
}

LyapunovCertificate read_certificate(std::istream& is) {
  double C = 0.0, R = 0.0, r = 0.0;
  MatrixXd P;
  bool have_c = false, have_big_r = false, have_r = false;
  std::string key;
  while (is >> key) {
    if (!key.empty() && key[0] == '#') {
      std::string rest;
      std::getline(is, rest);
      continue;
    }
    if (key == "C") {
      have_c = static_cast<bool>(is >> C);
    } else if (key == "R") {
      have_big_r = static_cast<bool>(is >> R);
    } else if (key == "r") {
      have_r = static_cast<bool>(is >> r);
    } else if (key == "P") {
      int n = 0;
      if (!(is >> n) || n < 1) throw StructuralError("certificate: bad P dimension");
      P.resize(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (!(is >> P(i, j))) throw StructuralError("certificate: truncated P");
        }
      }
    } else {
      throw StructuralError("certificate: unknown key '" + key + "'");
    }
  }
  if (!have_c || !have_big_r || !have_r || P.size() == 0) {
    throw StructuralError("certificate: missing C, R, r or P");
  }
  return LyapunovCertificate::make(P, C, R, r);
}

void save_certificate(const std::string& path, const LyapunovCertificate& cert) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write certificate to " + path);
  write_certificate(os, cert);
}

LyapunovCertificate load_certificate(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read certificate from " + path);
  return read_certificate(is);
}

RoundRobinSchedule::RoundRobinSchedule(int num_modes) : num_modes_(num_modes) {
  if (num_modes < 1) throw ParameterError("schedule needs at least one mode");
}

FlowPoint flow_point(const MatrixXd& A, const MatrixXd& B, const VectorXd& x0,
                     const VectorXd& u, double t) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  FlowPoint out;
  if (t == 0.0) {
    out.phi = x0;
  } else {
    MatrixXd aug = MatrixXd::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = A;
    aug.topRightCorner(n, m) = B;
    const MatrixXd e = expm(aug, t);
    out.phi = e.topLeftCorner(n, n) * x0 + e.topRightCorner(n, m) * u;
  }
  out.rate = A * out.phi + B * u;
  return out;
}

VectorXd flow(const MatrixXd& A, const MatrixXd& B, const VectorXd& x0, const VectorXd& u,
              double t) {
  if (!(t >= 0.0)) throw ParameterError("flow requires t >= 0");
  return flow_point(A, B, x0, u, t).phi;
}

double v_value(const MatrixXd& A, const MatrixXd& B, const MatrixXd& P, double C,
               const VectorXd& x0, const VectorXd& u, double t) {
  const FlowPoint fp = flow_point(A, B, x0, u, t);
  return 2.0 * fp.rate.dot(P * fp.phi) + C * fp.phi.squaredNorm();
}

MatrixXd v_gradient(const MatrixXd& A, const MatrixXd& B, const VectorXd& x0,
                    const VectorXd& u, double t) {
  const FlowPoint fp = flow_point(A, B, x0, u, t);
  return fp.rate * fp.phi.transpose() + fp.phi * fp.rate.transpose();
}

MatrixXd project_psd(const MatrixXd& X, double delta, double delta1) {
  if (X.rows() != X.cols()) throw StructuralError("project_psd: matrix must be square");
  if (!is_symmetric(X, 1e-10)) throw StructuralError("project_psd: matrix must be symmetric");
  if (!(delta > delta1 && delta1 > 0.0)) throw ParameterError("project_psd: need delta > delta1 > 0");
  const double gamma = std::sqrt((delta * delta - delta1 * delta1) / X.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (X + X.transpose()));
  if (es.eigenvalues().minCoeff() >= gamma) return X;
  const VectorXd clamped = es.eigenvalues().cwiseMax(gamma);
  MatrixXd out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

GradientStep gradient_step(const MatrixXd& P, const MatrixXd& grad, double violation,
                           double delta, double delta1) {
  GradientStep step;
  step.violation = violation;
  step.gradient_norm = grad.norm();
  if (step.gradient_norm == 0.0) {
    throw ParameterError("gradient_step: zero gradient");
  }
  step.step_size = (violation + delta * step.gradient_norm) /
                   (step.gradient_norm * step.gradient_norm);
  step.next = project_psd(P, delta, delta1) - step.step_size * grad;
  step.next = 0.5 * (step.next + step.next.transpose());
  return step;
}

SurfaceSampler::SurfaceSampler(const QuantizerPartition& partition, double outer_radius,
                               double inner_radius)
    : partition_(&partition), outer_radius_(outer_radius), inner_radius_(inner_radius) {
  if (!(outer_radius > inner_radius && inner_radius > 0.0)) {
    throw ParameterError("surface sampler requires R0 > r0 > 0");
  }
  if (outer_radius > partition.coverage_radius()) {
    throw OutOfRangeError("partition does not cover B(R0)");
  }
  const int n = partition.dim();
  for (int id : cells_meeting_ball(partition, outer_radius)) {
    const Cell& c = partition.cell(id);
    for (int axis = 0; axis < n; ++axis) {
      for (double value : {c.lower(axis), c.upper(axis)}) {
        if (std::abs(value) > outer_radius) continue;
        Face f{id, axis, value, c.lower, c.upper};
        f.lower(axis) = value;
        f.upper(axis) = value;
        double measure = 1.0;
        if (n == 2) {
          const int other = 1 - axis;
          const double half = std::sqrt(outer_radius * outer_radius - value * value);
          f.lower(other) = std::max(f.lower(other), -half);
          f.upper(other) = std::min(f.upper(other), half);
          measure = f.upper(other) - f.lower(other);
        } else if (n > 2) {
          // Clip to the bounding cube, then estimate the in-ball fraction on a
          // midpoint grid; draws are rejected outside the ball.
          for (int b = 0; b < n; ++b) {
            if (b == axis) continue;
            f.lower(b) = std::max(f.lower(b), -outer_radius);
            f.upper(b) = std::min(f.upper(b), outer_radius);
            measure *= std::max(0.0, f.upper(b) - f.lower(b));
          }
          constexpr int kGrid = 8;
          int inside = 0, total = 0;
          std::vector<int> idx(n, 0);
          while (true) {
            VectorXd p = f.lower;
            for (int b = 0; b < n; ++b) {
              if (b != axis) p(b) += (idx[b] + 0.5) / kGrid * (f.upper(b) - f.lower(b));
            }
            ++total;
            if (p.norm() <= outer_radius) ++inside;
            int b = 0;
            for (; b < n; ++b) {
              if (b == axis) continue;
              if (++idx[b] < kGrid) break;
              idx[b] = 0;
            }
            if (b == n) break;
          }
          measure *= static_cast<double>(inside) / total;
        }
        if (!(measure > 0.0)) continue;
        face_total_ += measure;
        faces_.push_back(std::move(f));
        cumulative_.push_back(face_total_);
      }
    }
  }
  sphere_inner_ = ball_surface(n, inner_radius);
  sphere_outer_ = ball_surface(n, outer_radius);
}

SurfaceSample SurfaceSampler::operator()(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = partition_->dim();
  while (true) {
    const double pick = unit(rng) * (face_total_ + sphere_inner_ + sphere_outer_);
    if (pick >= face_total_) {
      const double radius = pick < face_total_ + sphere_inner_ ? inner_radius_ : outer_radius_;
      SurfaceSample s;
      s.x = radius * random_direction(n, rng);
      s.on_sphere = true;
      const auto id = partition_->locate(s.x);
      if (!id) continue;
      s.cell_id = *id;
      return s;
    }
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), pick);
    const Face& f = faces_[std::min<std::size_t>(it - cumulative_.begin(), faces_.size() - 1)];
    SurfaceSample s;
    s.x = f.lower;
    for (int b = 0; b < n; ++b) {
      if (b != f.axis) s.x(b) += unit(rng) * (f.upper(b) - f.lower(b));
    }
    if (s.x.norm() > outer_radius_) continue;
    s.cell_id = f.cell_id;
    return s;
  }
}

SynthesisResult synthesize(const Plant& plant, const QuantizerPartition& partition,
                           const AlgorithmParams& params) {
  params.validate();
  const ValidationReport report = validate_plant(plant);
  if (!report.ok) throw ParameterError("synthesis requires every A_p + B_p K_p to be Hurwitz");
  const int n = plant.state_dim();
  if (partition.dim() != n) throw StructuralError("partition dimension does not match plant");

  const SurfaceSampler sampler(partition, params.outer_radius, params.inner_radius);
  const RoundRobinSchedule schedule(plant.num_modes());
  const double C = params.decrease_rate;
  const double Ts = plant.sampling_period;
  const double escape_radius = params.outer_radius - kBoundaryTolerance;

  MatrixXd P = params.initial_P ? *params.initial_P : MatrixXd::Identity(n, n);
  if (P.rows() != n || P.cols() != n) throw StructuralError("initial P has wrong shape");

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> times(static_cast<std::size_t>(params.time_samples));

  SynthesisResult result;
  int64_t k = 0;
  bool converged = false;
  for (int run = 0; run < params.max_runs && !converged; ++run) {
    ++result.runs;
    int64_t updates_this_run = 0;
    for (int64_t s = 0; s < params.samples_per_run; ++s, ++k) {
      const Mode& mode = plant.modes[schedule(k)];
      const SurfaceSample sample = sampler(rng);
      const VectorXd u = mode.K * partition.cell(sample.cell_id).q;
      ++result.samples;
      if (sample.on_sphere) {
        const FlowPoint fp = flow_point(mode.A, mode.B, sample.x, u, 0.0);
        const double v = 2.0 * fp.rate.dot(P * fp.phi) + C * fp.phi.squaredNorm();
        if (v > 0.0) {
          const MatrixXd grad = fp.rate * fp.phi.transpose() + fp.phi * fp.rate.transpose();
          P = gradient_step(P, grad, v, params.delta, params.delta1).next;
          ++updates_this_run;
        }
        continue;
      }
      for (double& t : times) t = unit(rng) * Ts;
      std::sort(times.begin(), times.end());
      // Memberships and step sizes are evaluated at the P the sample started with.
      const MatrixXd P_start = P;
      for (double t : times) {
        const FlowPoint fp = flow_point(mode.A, mode.B, sample.x, u, t);
        const double norm = fp.phi.norm();
        if (t != 0.0 && norm >= escape_radius) break;
        if (norm <= params.inner_radius) continue;
        const double v = 2.0 * fp.rate.dot(P_start * fp.phi) + C * fp.phi.squaredNorm();
        if (v > 0.0) {
          const MatrixXd grad = fp.rate * fp.phi.transpose() + fp.phi * fp.rate.transpose();
          P = gradient_step(P, grad, v, params.delta, params.delta1).next;
          ++updates_this_run;
        }
      }
    }
    result.updates += updates_this_run;
    converged = updates_this_run == 0;
  }
  if (!converged) {
    std::ostringstream os;
    os << "synthesis did not converge: updates still occurring after " << result.runs
       << " runs (" << result.updates << " updates total)";
    throw SynthesisFailure(os.str());
  }

  const auto [lambda_min, lambda_max] = extreme_eigenvalues(P);
  if (!(lambda_min > 0.0)) throw SynthesisFailure("synthesized P is not positive definite");
  const double R = params.outer_radius * std::sqrt(lambda_min / lambda_max);
  const double r = params.inner_radius * std::sqrt(lambda_max / lambda_min);
  if (!(r < R)) {
    std::ostringstream os;
    os << "no radii with B(r0) inside the inner level set and the outer level set inside "
          "B(R0): r = "
       << r << " >= R = " << R;
    throw RadiusInfeasible(os.str());
  }
  result.certificate = LyapunovCertificate::make(P, C, R, r);
  return result;
}

CheckReport check_assumption4(const Plant& plant, const QuantizerPartition& partition,
                              const LyapunovCertificate& cert, const CheckOptions& options) {
  const int n = plant.state_dim();
  if (cert.P.rows() != n) throw StructuralError("certificate dimension does not match plant");
  if (options.grid_density < 1 || options.time_samples < 1) {
    throw ParameterError("check needs grid_density >= 1 and time_samples >= 1");
  }
  const double outer = cert.outer_level();
  const double inner = cert.inner_level();
  const double inner_slack = inner * (1.0 + 1e-10);
  const double Ts = plant.sampling_period;

  CheckReport report;
  report.tolerance = 1e-7 * (1.0 + spectral_norm(cert.P));
  report.worst_margin = std::numeric_limits<double>::infinity();
  report.worst_relative_margin = std::numeric_limits<double>::infinity();

  // Initial states: a grid over the bounding box of the outer ellipsoid plus
  // uniform random draws inside it.
  std::vector<VectorXd> initial;
  const MatrixXd p_inv = cert.P.inverse();
  VectorXd half(n);
  for (int i = 0; i < n; ++i) half(i) = std::sqrt(outer * p_inv(i, i));
  const int d = options.grid_density;
  std::vector<int> idx(n, 0);
  while (true) {
    VectorXd x(n);
    for (int i = 0; i < n; ++i) {
      x(i) = d == 1 ? 0.0 : -half(i) + 2.0 * half(i) * idx[i] / (d - 1);
    }
    const double v = cert.value(x);
    if (v <= outer && v > inner) initial.push_back(x);
    int i = n - 1;
    for (; i >= 0; --i) {
      if (++idx[i] < d) break;
      idx[i] = 0;
    }
    if (i < 0) break;
  }
  if (options.random_samples > 0) {
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Eigen::LLT<MatrixXd> llt(cert.P);
    const MatrixXd upper = llt.matrixU();
    for (int64_t s = 0; s < options.random_samples; ++s) {
      const VectorXd y = std::sqrt(outer) * std::pow(unit(rng), 1.0 / n) * random_direction(n, rng);
      const VectorXd x = upper.triangularView<Eigen::Upper>().solve(y);
      if (cert.value(x) > inner) initial.push_back(x);
    }
  }

  const int l = options.time_samples;
  for (ModeId p = 0; p < plant.num_modes(); ++p) {
    const Mode& mode = plant.modes[p];
    std::vector<double> times(l);
    std::vector<MatrixXd> state_map(l), input_map(l);
    for (int i = 0; i < l; ++i) {
      times[i] = l == 1 ? 0.0 : Ts * i / (l - 1);
      state_map[i] = expm(mode.A, times[i]);
      input_map[i] = hold_integral(mode.A, mode.B, times[i]);
    }
    for (const VectorXd& x0 : initial) {
      const VectorXd q = quantize(partition, x0).q;
      const VectorXd u = mode.K * q;
      for (int i = 0; i < l; ++i) {
        const VectorXd phi = state_map[i] * x0 + input_map[i] * u;
        ++report.points_checked;
        if (cert.value(phi) <= inner_slack) {
          ++report.points_in_inner;
          continue;
        }
        const VectorXd rate = mode.A * phi + mode.B * u;
        const double sq = phi.squaredNorm();
        const double margin = -cert.C * sq - 2.0 * rate.dot(cert.P * phi);
        if (margin < report.worst_margin) {
          report.worst_margin = margin;
          report.worst_relative_margin = margin / sq;
          if (margin < -report.tolerance) report.witness = CheckWitness{p, x0, times[i], phi};
        }
      }
    }
  }
  report.pass = report.worst_margin >= -report.tolerance;
  if (report.pass) report.witness.reset();
  return report;
}

}  // namespace qsds
