#pragma once

#include <optional>
#include <vector>

#include "qsds/linalg.h"

namespace qsds {

/// Per-axis membership of an interval with endpoints lo < hi. Intervals that
/// straddle zero are closed; intervals on the positive side are (lo, hi]; on
/// the negative side [lo, hi). A shared boundary point therefore belongs to
/// the interval nearer the origin.
bool interval_contains(double lo, double hi, double v);

/// Axis-aligned box cell Q_j with its quantization point q_j.
struct Cell {
  int id = 0;
  VectorXd lower;
  VectorXd upper;
  VectorXd q;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const VectorXd& x) const;
  bool closure_contains_origin() const;
};

/// One band of a product-structured partition.
struct AxisBand {
  double lower;
  double upper;
  double value;
};

struct QuantizedState {
  VectorXd q;
  int cell_id;
};

/// Finite partition of a ball into boxes, with the static quantizer it
/// defines. Immutable once built.
class QuantizerPartition {
 public:
  /// Generic partition from explicit cells; lookups scan every cell.
  QuantizerPartition(std::vector<Cell> cells, double coverage_radius);
  /// Cartesian product of per-axis bands. Cell ids are mixed-radix indices
  /// with axis 0 the most significant digit.
  static QuantizerPartition from_axes(std::vector<std::vector<AxisBand>> axes,
                                      double coverage_radius);

  const std::vector<Cell>& cells() const { return cells_; }
  const Cell& cell(int id) const { return cells_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(cells_.size()); }
  int dim() const { return dim_; }
  double coverage_radius() const { return coverage_radius_; }
  bool is_product() const { return !axes_.empty(); }

  /// Cell containing x, or nullopt when none claims it.
  std::optional<int> locate(const VectorXd& x) const;

 private:
  QuantizerPartition() = default;
  void validate() const;

  std::vector<Cell> cells_;
  std::vector<std::vector<AxisBand>> axes_;
  double coverage_radius_ = 0.0;
  int dim_ = 0;
};

/// The logarithmic quantizer: per axis a closed deadzone [-xi0, xi0] mapped to
/// 0 and bands (xi0 eta^k, xi0 eta^(k+1)] mapped to xi0 (eta^k + eta^(k+1)) / 2,
/// mirrored for negative values, k = 0 .. levels-1. Coverage radius is
/// xi0 eta^levels.
QuantizerPartition build_log_quantizer(double xi0, double eta, int levels_per_axis,
                                       int dim = 2);

/// Smallest levels_per_axis whose coverage radius reaches `radius`.
int log_quantizer_levels_for(double xi0, double eta, double radius);

/// Q(x). Throws OutOfRangeError when ||x|| exceeds the coverage radius.
QuantizedState quantize(const QuantizerPartition& partition, const VectorXd& x);

/// min over the closed cell of ||x||; zero exactly when the closure holds the
/// origin.
double cell_min_norm(const Cell& cell);

/// max over the cell of ||q_j - x||, attained at a vertex.
double cell_max_deviation(const Cell& cell);

/// Ids of every cell meeting the ball of radius sqrt(level / lambda_min(P)),
/// which encloses {x : x'Px <= level}. Throws OutOfRangeError when that ball
/// is not inside the coverage radius.
std::vector<int> cells_covering_ellipsoid(const QuantizerPartition& partition,
                                          const MatrixXd& P, double level);

/// Ids of every cell meeting the closed ball B(radius).
std::vector<int> cells_meeting_ball(const QuantizerPartition& partition, double radius);

/// log2 |S_f| + log2 |P|: bits sent per sampling instant. Divide by T_s for
/// the rate per time unit.
double bits_per_sample(int num_cells, int num_modes);

}  // namespace qsds
