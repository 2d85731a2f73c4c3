#include "qsds/quantizer.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsds/error.h"

namespace qsds {

namespace {

// Index of the band claiming v, or -1.
int locate_band(const std::vector<AxisBand>& bands, double v) {
  auto it = std::lower_bound(bands.begin(), bands.end(), v,
                             [](const AxisBand& b, double value) { return b.upper < value; });
  for (int step = 0; step < 2 && it != bands.end(); ++step, ++it) {
    if (interval_contains(it->lower, it->upper, v)) {
      return static_cast<int>(it - bands.begin());
    }
  }
  return -1;
}

}  // namespace

bool interval_contains(double lo, double hi, double v) {
  if (lo <= 0.0 && hi >= 0.0) return lo <= v && v <= hi;
  if (lo > 0.0) return lo < v && v <= hi;
  return lo <= v && v < hi;
}

bool Cell::contains(const VectorXd& x) const {
  for (int i = 0; i < dim(); ++i) {
    if (!interval_contains(lower(i), upper(i), x(i))) return false;
  }
  return true;
}

bool Cell::closure_contains_origin() const {
  return (lower.array() <= 0.0).all() && (upper.array() >= 0.0).all();
}

QuantizerPartition::QuantizerPartition(std::vector<Cell> cells, double coverage_radius)
    : cells_(std::move(cells)), coverage_radius_(coverage_radius) {
  if (cells_.empty()) throw StructuralError("partition has no cells");
  dim_ = cells_[0].dim();
  validate();
}

QuantizerPartition QuantizerPartition::from_axes(std::vector<std::vector<AxisBand>> axes,
                                                 double coverage_radius) {
  if (axes.empty()) throw StructuralError("partition needs at least one axis");
  for (const auto& bands : axes) {
    if (bands.empty()) throw StructuralError("axis with no bands");
    for (std::size_t i = 1; i < bands.size(); ++i) {
      if (bands[i].lower != bands[i - 1].upper) {
        throw StructuralError("axis bands must be contiguous and sorted");
      }
    }
    if (bands.front().lower > -coverage_radius || bands.back().upper < coverage_radius) {
      throw StructuralError("axis bands do not span the coverage radius");
    }
  }
  QuantizerPartition out;
  out.coverage_radius_ = coverage_radius;
  out.dim_ = static_cast<int>(axes.size());
  std::size_t total = 1;
  for (const auto& bands : axes) total *= bands.size();
  out.cells_.reserve(total);
  std::vector<std::size_t> digit(axes.size(), 0);
  for (std::size_t id = 0; id < total; ++id) {
    Cell c;
    c.id = static_cast<int>(id);
    c.lower.resize(out.dim_);
    c.upper.resize(out.dim_);
    c.q.resize(out.dim_);
    for (int a = 0; a < out.dim_; ++a) {
      const AxisBand& b = axes[a][digit[a]];
      c.lower(a) = b.lower;
      c.upper(a) = b.upper;
      c.q(a) = b.value;
    }
    out.cells_.push_back(std::move(c));
    for (int a = out.dim_ - 1; a >= 0; --a) {
      if (++digit[a] < axes[a].size()) break;
      digit[a] = 0;
    }
  }
  out.axes_ = std::move(axes);
  out.validate();
  return out;
}

void QuantizerPartition::validate() const {
  if (!(coverage_radius_ > 0.0)) throw ParameterError("coverage radius must be positive");
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const Cell& c = cells_[i];
    if (c.id != static_cast<int>(i)) throw StructuralError("cell ids must be 0..N-1 in order");
    if (c.dim() != dim_ || c.upper.size() != dim_ || c.q.size() != dim_) {
      throw StructuralError("cell dimension mismatch");
    }
    if (!(c.lower.array() < c.upper.array()).all()) {
      std::ostringstream os;
      os << "cell " << c.id << " has zero or negative width";
      throw StructuralError(os.str());
    }
    if (c.closure_contains_origin() && !c.q.isZero(0.0)) {
      std::ostringstream os;
      os << "cell " << c.id << " touches the origin but has a nonzero quantization point";
      throw InvariantViolation(os.str());
    }
  }
}

std::optional<int> QuantizerPartition::locate(const VectorXd& x) const {
  if (x.size() != dim_) throw StructuralError("state dimension does not match partition");
  if (!axes_.empty()) {
    int id = 0;
    for (int a = 0; a < dim_; ++a) {
      const int band = locate_band(axes_[a], x(a));
      if (band < 0) return std::nullopt;
      id = id * static_cast<int>(axes_[a].size()) + band;
    }
    return id;
  }
  for (const auto& c : cells_) {
    if (c.contains(x)) return c.id;
  }
  return std::nullopt;
}

QuantizerPartition build_log_quantizer(double xi0, double eta, int levels_per_axis, int dim) {
  if (!(xi0 > 0.0)) throw ParameterError("log quantizer: xi0 must be positive");
  if (!(eta > 1.0)) throw ParameterError("log quantizer: eta must exceed 1");
  if (levels_per_axis < 0) throw ParameterError("log quantizer: negative level count");
  if (dim < 1) throw ParameterError("log quantizer: dimension must be positive");
  std::vector<AxisBand> positive;
  for (int k = 0; k < levels_per_axis; ++k) {
    const double lo = xi0 * std::pow(eta, k);
    const double hi = xi0 * std::pow(eta, k + 1);
    positive.push_back({lo, hi, 0.5 * (lo + hi)});
  }
  std::vector<AxisBand> bands;
  for (auto it = positive.rbegin(); it != positive.rend(); ++it) {
    bands.push_back({-it->upper, -it->lower, -it->value});
  }
  bands.push_back({-xi0, xi0, 0.0});
  bands.insert(bands.end(), positive.begin(), positive.end());
  const double radius = xi0 * std::pow(eta, levels_per_axis);
  return QuantizerPartition::from_axes(std::vector<std::vector<AxisBand>>(dim, bands), radius);
}

int log_quantizer_levels_for(double xi0, double eta, double radius) {
  if (!(xi0 > 0.0) || !(eta > 1.0)) throw ParameterError("log quantizer parameters");
  int levels = 0;
  while (xi0 * std::pow(eta, levels) < radius) ++levels;
  return levels;
}

QuantizedState quantize(const QuantizerPartition& partition, const VectorXd& x) {
  if (x.norm() > partition.coverage_radius()) {
    std::ostringstream os;
    os << "state norm " << x.norm() << " exceeds quantizer coverage radius "
       << partition.coverage_radius();
    throw OutOfRangeError(os.str());
  }
  const auto id = partition.locate(x);
  if (!id) throw InvariantViolation("no cell claims a point inside the coverage radius");
  return {partition.cell(*id).q, *id};
}

double cell_min_norm(const Cell& cell) {
  const bool touches_origin = cell.closure_contains_origin();
  if (touches_origin && !cell.q.isZero(0.0)) {
    throw InvariantViolation("cell touching the origin has a nonzero quantization point");
  }
  if (touches_origin) return 0.0;
  const VectorXd nearest = VectorXd::Zero(cell.dim()).cwiseMax(cell.lower).cwiseMin(cell.upper);
  return nearest.norm();
}

double cell_max_deviation(const Cell& cell) {
  const int n = cell.dim();
  double best = 0.0;
  VectorXd vertex(n);
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    for (int i = 0; i < n; ++i) vertex(i) = (mask >> i) & 1u ? cell.upper(i) : cell.lower(i);
    best = std::max(best, (cell.q - vertex).norm());
  }
  return best;
}

std::vector<int> cells_meeting_ball(const QuantizerPartition& partition, double radius) {
  std::vector<int> out;
  for (const auto& c : partition.cells()) {
    if (cell_min_norm(c) <= radius) out.push_back(c.id);
  }
  return out;
}

std::vector<int> cells_covering_ellipsoid(const QuantizerPartition& partition,
                                          const MatrixXd& P, double level) {
  if (!(level >= 0.0)) throw ParameterError("ellipsoid level must be nonnegative");
  const auto [lambda_min, lambda_max] = extreme_eigenvalues(P);
  (void)lambda_max;
  if (!(lambda_min > 0.0)) throw ParameterError("P must be positive definite");
  const double radius = std::sqrt(level / lambda_min);
  if (radius > partition.coverage_radius() * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "ellipsoid needs radius " << radius << " but the quantizer covers only "
       << partition.coverage_radius();
    throw OutOfRangeError(os.str());
  }
  return cells_meeting_ball(partition, radius);
}

double bits_per_sample(int num_cells, int num_modes) {
  if (num_cells < 1 || num_modes < 1) throw ParameterError("counts must be positive");
  return std::log2(static_cast<double>(num_cells)) + std::log2(static_cast<double>(num_modes));
}

}  // namespace qsds
