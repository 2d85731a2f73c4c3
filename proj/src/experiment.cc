#include "qsds/experiment.h"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "qsds/error.h"

namespace qsds {

namespace fs = std::filesystem;

namespace {

// ---- config parsing ----

double parse_number(const YAML::Node& node, const std::string& key) {
  if (!node || !node.IsScalar()) throw StructuralError("config: '" + key + "' must be a number");
  const std::string text = node.Scalar();
  const auto slash = text.find('/');
  try {
    if (slash != std::string::npos) {
      return std::stod(text.substr(0, slash)) / std::stod(text.substr(slash + 1));
    }
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw StructuralError("config: '" + key + "' is not a number: " + text);
  }
}

MatrixXd parse_matrix(const YAML::Node& node, const std::string& key) {
  if (!node) throw StructuralError("config: missing matrix '" + key + "'");
  double scale = 1.0;
  YAML::Node rows = node;
  if (node.IsMap()) {
    if (node["scale"]) scale = parse_number(node["scale"], key + ".scale");
    rows = node["rows"];
  }
  if (!rows || !rows.IsSequence() || rows.size() == 0) {
    throw StructuralError("config: '" + key + "' must be a list of rows");
  }
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows[0].IsSequence() ? rows[0].size() : 0);
  if (c == 0) throw StructuralError("config: '" + key + "' rows must be lists");
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const YAML::Node row = rows[static_cast<std::size_t>(i)];
    if (!row.IsSequence() || static_cast<Eigen::Index>(row.size()) != c) {
      throw StructuralError("config: '" + key + "' rows have unequal lengths");
    }
    for (Eigen::Index j = 0; j < c; ++j) {
      m(i, j) = scale * parse_number(row[static_cast<std::size_t>(j)], key);
    }
  }
  return m;
}

template <typename T>
T get_or(const YAML::Node& node, const char* key, T fallback) {
  return node && node[key] ? node[key].as<T>() : fallback;
}

double number_or(const YAML::Node& node, const char* key, double fallback,
                 const std::string& where) {
  return node && node[key] ? parse_number(node[key], where + "." + key) : fallback;
}

// Integer knob that also accepts "auto" (returned as 0).
int int_or_auto(const YAML::Node& node, const char* key, int fallback) {
  if (!node || !node[key]) return fallback;
  if (node[key].Scalar() == "auto") return 0;
  return node[key].as<int>();
}

Plant parse_plant(const YAML::Node& node) {
  if (!node) throw StructuralError("config: missing 'plant'");
  Plant plant;
  plant.sampling_period = parse_number(node["sampling_period"], "plant.sampling_period");
  const YAML::Node modes = node["modes"];
  if (!modes || !modes.IsSequence() || modes.size() == 0) {
    throw StructuralError("config: 'plant.modes' must be a nonempty list");
  }
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string where = "plant.modes[" + std::to_string(i) + "]";
    Mode m;
    m.A = parse_matrix(modes[i]["A"], where + ".A");
    m.B = parse_matrix(modes[i]["B"], where + ".B");
    const YAML::Node k = modes[i]["K"];
    if (k && k.IsScalar() && k.Scalar() == "lqr") {
      const MatrixXd Q = modes[i]["lqr_Q"] ? parse_matrix(modes[i]["lqr_Q"], where + ".lqr_Q")
                                           : MatrixXd::Identity(m.A.rows(), m.A.rows());
      const MatrixXd R = modes[i]["lqr_R"] ? parse_matrix(modes[i]["lqr_R"], where + ".lqr_R")
                                           : MatrixXd::Identity(m.B.cols(), m.B.cols());
      m.K = lqr_gain(m.A, m.B, Q, R);
    } else {
      m.K = parse_matrix(k, where + ".K");
    }
    plant.modes.push_back(std::move(m));
  }
  return plant;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? path : (fs::path(base_dir) / p).string();
}

// ---- output helpers ----

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string fmt_matrix(const MatrixXd& m) {
  std::ostringstream os;
  os << "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << (i ? "; " : "");
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? ", " : "") << fmt(m(i, j));
  }
  os << "]";
  return os.str();
}

nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

std::string fmt_eigs(const std::vector<std::complex<double>>& ev) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    os << (i ? ", " : "") << fmt(ev[i].real());
    if (ev[i].imag() != 0.0) os << (ev[i].imag() > 0 ? "+" : "-") << fmt(std::abs(ev[i].imag())) << "i";
  }
  return os.str();
}

void write_polyline(const fs::path& path, const std::vector<Eigen::Vector2d>& pts) {
  std::ostringstream os;
  os << "x1,x2\n" << std::setprecision(17);
  for (const auto& p : pts) os << p(0) << ',' << p(1) << '\n';
  write_file(path, os.str());
}

void describe_tally(std::ostream& os, const char* name, const InequalityTally& t) {
  os << "  " << std::left << std::setw(16) << name << " checked " << t.checked << ", violations "
     << t.violations << ", worst lhs-rhs " << fmt(t.worst_excess) << "\n";
}

template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const int used = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (used <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < used; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

ExperimentConfig parse_config(const std::string& yaml_text, const std::string& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw StructuralError(std::string("config: YAML parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.name = get_or<std::string>(root, "name", cfg.name);
    cfg.plant = parse_plant(root["plant"]);

    const YAML::Node q = root["quantizer"];
    if (!q) throw StructuralError("config: missing 'quantizer'");
    cfg.quantizer.xi0 = parse_number(q["xi0"], "quantizer.xi0");
    cfg.quantizer.eta = parse_number(q["eta"], "quantizer.eta");
    cfg.quantizer.levels = int_or_auto(q, "levels", 0);

    if (const YAML::Node c = root["certificate"]) {
      if (c["file"]) {
        const std::string path = resolve(base_dir, c["file"].as<std::string>());
        if (!fs::exists(path)) throw StructuralError("config: certificate file not found: " + path);
        cfg.certificate = load_certificate(path);
      } else {
        cfg.certificate = LyapunovCertificate::make(
            parse_matrix(c["P"], "certificate.P"), parse_number(c["C"], "certificate.C"),
            parse_number(c["R"], "certificate.R"), parse_number(c["r"], "certificate.r"));
      }
    }
    if (const YAML::Node s = root["synthesis"]) {
      AlgorithmParams p;
      p.outer_radius = parse_number(s["outer_radius"], "synthesis.outer_radius");
      p.inner_radius = parse_number(s["inner_radius"], "synthesis.inner_radius");
      p.delta = parse_number(s["delta"], "synthesis.delta");
      p.delta1 = parse_number(s["delta1"], "synthesis.delta1");
      p.decrease_rate = parse_number(s["C"], "synthesis.C");
      p.samples_per_run = get_or<int64_t>(s, "samples_per_run", 100000);
      p.time_samples = get_or<int>(s, "time_samples", 5);
      p.seed = get_or<uint64_t>(s, "seed", 1);
      p.max_runs = get_or<int>(s, "max_runs", 200);
      if (s["initial_P"]) p.initial_P = parse_matrix(s["initial_P"], "synthesis.initial_P");
      p.validate();
      cfg.synthesis = p;
    }
    if (const YAML::Node c = root["check"]) {
      cfg.check.grid_density = get_or<int>(c, "grid_density", cfg.check.grid_density);
      cfg.check.time_samples = get_or<int>(c, "time_samples", cfg.check.time_samples);
      cfg.check.random_samples = get_or<int64_t>(c, "random_samples", cfg.check.random_samples);
      cfg.check.seed = get_or<uint64_t>(c, "seed", cfg.check.seed);
    }
    if (const YAML::Node b = root["bounds"]) {
      cfg.D_override = number_or(b, "D_override", 0.0, "bounds");
      cfg.refined_grid = get_or<int>(b, "refined_grid", 0);
      cfg.tol_check = number_or(b, "tol_check", 0.0, "bounds");
    }
    if (const YAML::Node c = root["campaign"]) {
      CampaignSpec& cs = cfg.campaign;
      cs.dwell_multiple = int_or_auto(c, "dwell_multiple", 0);
      cs.p_switch = number_or(c, "p_switch", cs.p_switch, "campaign");
      cs.horizon = number_or(c, "horizon", cs.horizon, "campaign");
      cs.radius_offset = number_or(c, "radius_offset", cs.radius_offset, "campaign");
      if (c["kappa"] && c["kappa"].Scalar() != "auto") cs.kappa = parse_number(c["kappa"], "campaign.kappa");
      cs.probes = get_or<int>(c, "probes", cs.probes);
      cs.initial_mode = get_or<int>(c, "initial_mode", cs.initial_mode);
      cs.write_trajectories = get_or<bool>(c, "write_trajectories", cs.write_trajectories);
      const YAML::Node seeds = c["seeds"];
      if (seeds && seeds.IsSequence()) {
        for (const auto& s : seeds) cs.seeds.push_back(s.as<uint64_t>());
      } else if (seeds && seeds.IsMap()) {
        const auto first = get_or<uint64_t>(seeds, "first", 1);
        const auto count = get_or<int>(seeds, "count", 1);
        for (int i = 0; i < count; ++i) cs.seeds.push_back(first + static_cast<uint64_t>(i));
      }
    }
    if (cfg.campaign.seeds.empty()) cfg.campaign.seeds.push_back(1);
    if (const YAML::Node a = root["adversarial"]) {
      cfg.adversarial.n = get_or<int>(a, "n", cfg.adversarial.n);
      cfg.adversarial.epsilon = number_or(a, "epsilon", cfg.adversarial.epsilon, "adversarial");
      cfg.adversarial.T = number_or(a, "T", cfg.adversarial.T, "adversarial");
      const auto variant = get_or<std::string>(a, "variant", "global");
      if (variant == "global") {
        cfg.adversarial.variant = AdversarialVariant::kGlobal;
      } else if (variant == "anchored") {
        cfg.adversarial.variant = AdversarialVariant::kAnchored;
      } else {
        throw StructuralError("config: adversarial.variant must be global or anchored");
      }
    }
    cfg.output_dir = resolve(base_dir, get_or<std::string>(root, "output", "out"));
  } catch (const YAML::Exception& e) {
    throw StructuralError(std::string("config: ") + e.what());
  }
  validate_plant(cfg.plant);  // dimension errors name the mode
  if (!cfg.certificate && !cfg.synthesis) {
    throw StructuralError("config: give a 'certificate' or 'synthesis' section");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw StructuralError("config: cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), fs::path(path).parent_path().string());
}

QuantizerPartition build_partition(const QuantizerSpec& spec, double radius, int dim) {
  const int levels =
      spec.levels > 0 ? spec.levels : log_quantizer_levels_for(spec.xi0, spec.eta, radius);
  return build_log_quantizer(spec.xi0, spec.eta, levels, dim);
}

double outer_ball_radius(const LyapunovCertificate& cert) {
  return std::sqrt(cert.outer_level() / cert.lambda_min);
}

std::vector<Eigen::Vector2d> ellipsoid_polyline(const MatrixXd& P, double level, int points) {
  if (P.rows() != 2 || P.cols() != 2) throw UnsupportedDimension("ellipsoid_polyline needs n = 2");
  if (!(level >= 0.0) || points < 1) throw ParameterError("ellipsoid_polyline: bad level or count");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (P + P.transpose()));
  if (!(es.eigenvalues().minCoeff() > 0.0)) throw ParameterError("P must be positive definite");
  const Eigen::Vector2d semi = (level / es.eigenvalues().array()).sqrt();
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double th = 2.0 * std::numbers::pi * i / points;
    const Eigen::Vector2d local(semi(0) * std::cos(th), semi(1) * std::sin(th));
    out.push_back(es.eigenvectors() * local);
  }
  return out;
}

int worker_count() {
  if (const char* env = std::getenv("QSDS_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

VectorXd campaign_initial_state(const LyapunovCertificate& cert, double offset, uint64_t seed) {
  const int n = static_cast<int>(cert.P.rows());
  if (!(offset >= 0.0 && offset < cert.R)) throw ParameterError("radius offset must be in [0, R)");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  VectorXd d(n);
  if (n == 2) {
    const double th = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    d << std::cos(th), std::sin(th);
  } else {
    std::normal_distribution<double> normal;
    for (int i = 0; i < n; ++i) d(i) = normal(rng);
  }
  const double level = (cert.R - offset) * (cert.R - offset) * cert.lambda_max;
  return d * std::sqrt(level / cert.value(d));
}

CampaignResult run_campaign(const Plant& plant, const QuantizerPartition& partition,
                            const LyapunovCertificate& cert, const StabilityBounds& bounds,
                            const CampaignSpec& spec, double tol, int workers) {
  CampaignResult result;
  result.dwell_multiple = spec.dwell_multiple > 0 ? spec.dwell_multiple : bounds.rates.n_min;
  result.kappa = spec.kappa > 0.0 ? spec.kappa : bounds.rates.kappa;
  std::vector<uint64_t> seeds = spec.seeds;
  std::sort(seeds.begin(), seeds.end());
  result.runs.resize(seeds.size());
  const int n = result.dwell_multiple;
  const double Ts = plant.sampling_period;
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    CampaignRun& run = result.runs[i];
    run.seed = seeds[i];
    run.x0 = campaign_initial_state(cert, spec.radius_offset, run.seed);
    run.signal = generate_dwell_random(plant.num_modes(), n, Ts, spec.p_switch, spec.horizon,
                                       run.seed, spec.initial_mode);
    run.trajectory =
        simulate(plant, partition, &cert, run.signal, run.x0, spec.horizon, spec.probes);
    run.verdict = verdict(run.trajectory, cert, result.kappa);
    run.audit = audit_bounds(run.trajectory, plant, cert, bounds, tol);
    const MismatchProfile profile = mismatch_profile(run.signal, Ts, spec.horizon);
    run.conditions = check_dwell_bounds(profile, n, Ts);
    run.mismatch_total = profile.total();
  });
  for (const auto& run : result.runs) {
    result.audit.merge(run.audit);
    if (run.verdict.theorem_holds()) ++result.theorem_passes;
    if (run.verdict.all_hold()) ++result.full_passes;
  }
  return result;
}

std::vector<AdversarialRun> run_adversarial(const Plant& plant, const QuantizerPartition& partition,
                                            const LyapunovCertificate& cert, double kappa,
                                            const CampaignSpec& campaign,
                                            const AdversarialSpec& spec, int workers) {
  if (plant.num_modes() < 2) throw ParameterError("adversarial signals need two modes");
  std::vector<uint64_t> seeds = campaign.seeds;
  std::sort(seeds.begin(), seeds.end());
  std::vector<AdversarialRun> runs(seeds.size());
  const double Ts = plant.sampling_period;
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    AdversarialRun& run = runs[i];
    run.seed = seeds[i];
    run.adversarial = generate_adversarial(spec.n, Ts, spec.epsilon, spec.T, spec.variant);
    const VectorXd x0 = campaign_initial_state(cert, campaign.radius_offset, run.seed);
    const double horizon = run.adversarial.t;
    const Trajectory traj =
        simulate(plant, partition, &cert, run.adversarial.signal, x0, horizon, campaign.probes);
    run.verdict = verdict(traj, cert, kappa);
    const MismatchProfile profile = mismatch_profile(run.adversarial.signal, Ts, horizon);
    run.mismatch_ratio = profile.cumulative(horizon) / horizon;
  });
  return runs;
}

namespace {

struct StageError : std::runtime_error {
  StageError(std::string stage, int code, const std::string& what)
      : std::runtime_error(what), stage(std::move(stage)), code(code) {}
  std::string stage;
  int code;
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const ConditionViolated& e) {
    throw StageError(name, 3, e.what());
  } catch (const StructuralError& e) {
    throw StageError(name, 2, e.what());
  } catch (const std::exception& e) {
    throw StageError(name, 3, e.what());
  }
}

void write_bounds_json(const fs::path& path, const ExperimentConfig& cfg,
                       const LyapunovCertificate& cert, const StabilityBounds& b,
                       const std::optional<RefinedBounds>& refined) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["certificate"] = {{"P", matrix_json(cert.P)}, {"C", cert.C}, {"R", cert.R}, {"r", cert.r},
                      {"lambda_min", cert.lambda_min}, {"lambda_max", cert.lambda_max}};
  j["Lambda"] = b.Lambda;
  j["alpha0"] = b.alpha0;
  j["eta"] = b.eta;
  j["alpha1"] = b.alpha1;
  j["beta1"] = b.beta1;
  j["gamma0"] = matrix_json(b.gamma0);
  j["gamma"] = matrix_json(b.gamma);
  j["D"] = b.D;
  j["D_computed"] = b.D_computed;
  j["C_P"] = b.rates.C_P;
  j["D_P"] = b.rates.D_P;
  j["kappa"] = b.rates.kappa;
  j["f_kappa"] = b.rates.f_kappa;
  j["L_max"] = b.rates.L_max;
  j["n_min"] = b.rates.n_min;
  j["cover_cells"] = b.cover_cells;
  j["bits_per_sample"] = b.bits_per_sample;
  if (refined) j["refined"] = {{"alpha1", refined->alpha1}, {"beta1", refined->beta1}};
  write_file(path, j.dump(2) + "\n");
}

void describe_bounds(std::ostream& os, const LyapunovCertificate& cert, const StabilityBounds& b,
                     const std::optional<RefinedBounds>& refined) {
  os << "certificate\n";
  os << "  P = " << fmt_matrix(cert.P) << "\n";
  os << "  C = " << fmt(cert.C) << ", R = " << fmt(cert.R) << ", r = " << fmt(cert.r) << "\n";
  os << "  lambda_min = " << fmt(cert.lambda_min) << ", lambda_max = " << fmt(cert.lambda_max)
     << "\n";
  os << "bounds\n";
  os << "  cover cells |S_f| = " << b.cover_cells << ", bits per sample = "
     << fmt(b.bits_per_sample) << "\n";
  os << "  Lambda = " << fmt(b.Lambda) << "\n";
  os << "  alpha0 = " << fmt(b.alpha0) << "\n";
  os << "  eta = " << fmt(b.eta) << "\n";
  os << "  alpha1 = " << fmt(b.alpha1) << "\n";
  os << "  beta1 = " << fmt(b.beta1) << "\n";
  if (refined) {
    os << "  refined alpha1 = " << fmt(refined->alpha1) << ", refined beta1 = "
       << fmt(refined->beta1) << "\n";
  }
  os << "  gamma0 = " << fmt_matrix(b.gamma0) << "\n";
  os << "  gamma = " << fmt_matrix(b.gamma) << "\n";
  os << "  D (computed) = " << fmt(b.D_computed) << "\n";
  os << "  D (used) = " << fmt(b.D) << "\n";
  os << "  C_P = " << fmt(b.rates.C_P) << ", D_P = " << fmt(b.rates.D_P) << "\n";
  os << "  kappa = " << fmt(b.rates.kappa) << ", f(kappa) = " << fmt(b.rates.f_kappa) << "\n";
  os << "  L_max = " << fmt(b.rates.L_max) << " (exclusive)\n";
  os << "  n_min = " << b.rates.n_min << "\n";
}

}  // namespace

ExitReport run(const ExperimentConfig& config_in, Verb verb, const RunOverrides& overrides,
               std::ostream& log) {
  ExperimentConfig cfg = config_in;
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  if (overrides.tol_check) cfg.tol_check = *overrides.tol_check;
  if (overrides.seed) {
    if (cfg.synthesis) cfg.synthesis->seed = *overrides.seed;
    const std::size_t count = cfg.campaign.seeds.size();
    cfg.campaign.seeds.clear();
    for (std::size_t i = 0; i < count; ++i) cfg.campaign.seeds.push_back(*overrides.seed + i);
  }
  const int workers = overrides.workers.value_or(worker_count());
  std::ostringstream summary;
  summary << "experiment: " << cfg.name << "\n";
  ExitReport report;
  const fs::path out(cfg.output_dir);

  try {
    stage("output", [&] { fs::create_directories(out); });
    const Plant& plant = cfg.plant;
    const int n = plant.state_dim();

    stage("plant", [&] {
      const ValidationReport vr = validate_plant(plant);
      summary << "plant: " << plant.num_modes() << " modes, n = " << vr.state_dim
              << ", m = " << vr.input_dim << ", T_s = " << fmt(plant.sampling_period) << "\n";
      for (const auto& mr : vr.modes) {
        summary << "  mode " << mr.index << ": K = " << fmt_matrix(plant.modes[mr.index].K)
                << ", eig(A+BK) = {" << fmt_eigs(mr.closed_loop_eigenvalues) << "}"
                << (mr.hurwitz ? "" : " NOT HURWITZ") << "\n";
      }
      for (ModeId p = 0; p < plant.num_modes(); ++p) {
        for (ModeId q = 0; q < plant.num_modes(); ++q) {
          if (p == q) continue;
          summary << "  eig(A_" << p << " + B_" << p << " K_" << q << ") = {"
                  << fmt_eigs(cross_mode_eigenvalues(plant, p, q)) << "}\n";
        }
      }
      if (!vr.ok) throw ParameterError("some closed-loop mode is not Hurwitz");
    });

    std::optional<LyapunovCertificate> cert = cfg.certificate;
    if (verb == Verb::kSynthesize || !cert) {
      cert = stage("synthesis", [&] {
        if (!cfg.synthesis) throw StructuralError("config has no 'synthesis' section");
        const AlgorithmParams& params = *cfg.synthesis;
        const QuantizerPartition part = build_partition(cfg.quantizer, params.outer_radius, n);
        log << "synthesizing (" << params.samples_per_run << " samples per run)\n";
        const SynthesisResult res = synthesize(plant, part, params);
        summary << "synthesis: " << res.runs << " runs, " << res.updates << " updates, "
                << res.samples << " samples\n";
        save_certificate((out / "certificate.txt").string(), res.certificate);
        return res.certificate;
      });
    }

    const QuantizerPartition partition = stage("quantizer", [&] {
      const QuantizerPartition part = build_partition(cfg.quantizer, outer_ball_radius(*cert), n);
      summary << "quantizer: xi0 = " << fmt(cfg.quantizer.xi0) << ", eta = "
              << fmt(cfg.quantizer.eta) << ", coverage radius = " << fmt(part.coverage_radius())
              << ", cells = " << part.size() << "\n";
      return part;
    });
    const double tol = cfg.tol_check > 0.0 ? cfg.tol_check : 1e-7 * (1.0 + spectral_norm(cert->P));

    if (verb == Verb::kSynthesize || verb == Verb::kReproduce) {
      const CheckReport check = stage("check", [&] {
        log << "checking the decrease condition\n";
        return check_assumption4(plant, partition, *cert, cfg.check);
      });
      summary << "decrease check: " << (check.pass ? "pass" : "FAIL") << ", points "
              << check.points_checked << " (" << check.points_in_inner << " inside inner set)"
              << ", worst margin " << fmt(check.worst_margin) << ", worst relative margin "
              << fmt(check.worst_relative_margin) << ", tolerance " << fmt(check.tolerance)
              << "\n";
      if (check.witness) {
        summary << "  witness: mode " << check.witness->mode << ", x0 = "
                << fmt_matrix(check.witness->x0.transpose()) << ", t = " << fmt(check.witness->t)
                << "\n";
      }
      if (!check.pass) report.code = 1;
      if (verb == Verb::kSynthesize) {
        write_file(out / "summary.txt", summary.str());
        return report;
      }
    }

    std::optional<RefinedBounds> refined;
    const StabilityBounds bounds = stage("bounds", [&] {
      log << "computing bounds\n";
      StabilityBounds b = compute_bounds(plant, partition, *cert, cfg.D_override);
      if (cfg.refined_grid > 0) {
        refined = refined_alpha1_beta1(plant, b.alpha0, plant.sampling_period, cfg.refined_grid);
      }
      return b;
    });
    describe_bounds(summary, *cert, bounds, refined);
    write_bounds_json(out / "bounds.json", cfg, *cert, bounds, refined);

    if (verb == Verb::kSimulate || verb == Verb::kReproduce) {
      const CampaignResult campaign = stage("campaign", [&] {
        log << "running " << cfg.campaign.seeds.size() << " campaign runs on " << workers
            << " workers\n";
        return run_campaign(plant, partition, *cert, bounds, cfg.campaign, tol, workers);
      });
      stage("report", [&] {
        summary << "campaign: dwell " << campaign.dwell_multiple << " T_s, p_switch "
                << fmt(cfg.campaign.p_switch) << ", horizon " << fmt(cfg.campaign.horizon)
                << ", kappa " << fmt(campaign.kappa) << "\n";
        const double attractor = cert->inner_level(campaign.kappa);
        fs::create_directories(out / "plots");
        if (cfg.campaign.write_trajectories) fs::create_directories(out / "trajectories");
        for (const auto& run : campaign.runs) {
          const StabilityVerdict& v = run.verdict;
          summary << "  seed " << run.seed << ": switches " << run.signal.switches().size()
                  << ", mismatch " << fmt(run.mismatch_total) << ", contained "
                  << (v.contained ? "yes" : "no") << ", first entry "
                  << (v.first_entry ? fmt(*v.first_entry) : "none") << ", T_r "
                  << (v.T_r ? fmt(*v.T_r) : "none") << ", exits " << v.exits
                  << (v.exits_on_mismatch ? "" : " (some on matched spans)")
                  << ", max excursion V/attractor " << fmt(v.max_excursion_V / attractor)
                  << ", mu bounds " << (run.conditions.pass ? "ok" : "VIOLATED") << "\n";
          if (n == 2) {
            std::ostringstream pts;
            pts << "t,x1,x2\n" << std::setprecision(17);
            for (const auto& r : run.trajectory.events) {
              pts << r.t << ',' << r.x(0) << ',' << r.x(1) << '\n';
            }
            write_file(out / "plots" / ("trajectory_" + std::to_string(run.seed) + ".csv"),
                       pts.str());
          }
          if (cfg.campaign.write_trajectories) {
            std::ostringstream csv;
            write_trajectory_csv(csv, run.trajectory);
            write_file(out / "trajectories" / ("run_" + std::to_string(run.seed) + ".csv"),
                       csv.str());
          }
        }
        if (n == 2) {
          write_polyline(out / "plots" / "outer_ellipsoid.csv",
                         ellipsoid_polyline(cert->P, cert->outer_level(), 361));
          write_polyline(out / "plots" / "attractor_ellipsoid.csv",
                         ellipsoid_polyline(cert->P, attractor, 361));
          write_polyline(out / "plots" / "inner_ellipsoid.csv",
                         ellipsoid_polyline(cert->P, cert->inner_level(), 361));
        }
        summary << "verdicts: " << campaign.theorem_passes << "/" << campaign.runs.size()
                << " contained and settled, " << campaign.full_passes << "/"
                << campaign.runs.size() << " with every lemma check\n";
        summary << "bound audit over " << campaign.audit.records << " records (tol "
                << fmt(tol) << ")\n";
        describe_tally(summary, "decrease", campaign.audit.decrease);
        describe_tally(summary, "growth", campaign.audit.growth);
        describe_tally(summary, "sample ratio", campaign.audit.sample_ratio);
        describe_tally(summary, "sample error", campaign.audit.sample_error);
        describe_tally(summary, "quantized gap", campaign.audit.quantized_gap);
      });
      const bool all_ok = campaign.theorem_passes == static_cast<int>(campaign.runs.size());
      if (!all_ok) report.code = 1;
    }

    if (verb == Verb::kAdversarial) {
      const double kappa = cfg.campaign.kappa > 0.0 ? cfg.campaign.kappa : bounds.rates.kappa;
      const auto runs = stage("adversarial", [&] {
        log << "running adversarial signals\n";
        return run_adversarial(plant, partition, *cert, kappa, cfg.campaign, cfg.adversarial,
                               workers);
      });
      const bool below_dwell = cfg.adversarial.n < bounds.rates.n_min;
      summary << "adversarial: n = " << cfg.adversarial.n << ", epsilon = "
              << fmt(cfg.adversarial.epsilon) << ", variant "
              << (cfg.adversarial.variant == AdversarialVariant::kGlobal ? "global" : "anchored")
              << (below_dwell ? " (expected-unstable scenario: dwell below n_min)" : "") << "\n";
      int unstable = 0;
      for (const auto& run : runs) {
        const bool ok = run.verdict.theorem_holds();
        if (!ok) ++unstable;
        summary << "  seed " << run.seed << ": witness t " << fmt(run.adversarial.t)
                << ", mu(t,0)/t " << fmt(run.mismatch_ratio) << ", contained "
                << (run.verdict.contained ? "yes" : "no") << ", T_r "
                << (run.verdict.T_r ? fmt(*run.verdict.T_r) : "none") << "\n";
      }
      summary << "adversarial verdict failures: " << unstable << "/" << runs.size()
              << " (informational)\n";
    }
  } catch (const StageError& e) {
    report.code = e.code;
    report.stage = e.stage;
    report.message = e.what();
    summary << "ERROR in stage " << e.stage << ": " << e.what() << "\n";
  }
  try {
    write_file(out / "summary.txt", summary.str());
  } catch (const std::exception& e) {
    if (report.code == 0) {
      report.code = 3;
      report.stage = "output";
      report.message = e.what();
    }
  }
  return report;
}

}  // namespace qsds
