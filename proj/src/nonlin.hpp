#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lurecert::nonlin {

struct MalformedNonlinearity : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AssumptionViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ApproximationInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonlinearityFlags {
  bool c1 = true;                          // continuously differentiable
  bool asymptotically_linear = true;       // phi' settles to k1 / k2
  bool odd = true;
  bool monotone = true;
  bool deriv_nondecreasing_on_rplus = true;
};

/// A scalar memoryless nonlinearity with phi(0) = 0 and an evaluable
/// derivative. Instances come from the catalog (make_nonlinearity) or
/// from tabulated data (make_tabulated); tests may fill the fields
/// directly.
struct Nonlinearity {
  std::function<double(double)> eval;
  std::function<double(double)> deriv;
  double k1 = 0.0;  // asymptotic slope as q -> -inf
  double k2 = 0.0;  // asymptotic slope as q -> +inf
  double lipschitz = 0.0;
  NonlinearityFlags flags;
  // set by catalog factories when the image length of phi' on R+ has a
  // closed form; derivative_range_length falls back to sampling otherwise
  std::optional<double> analytic_image_length;
  std::string label;

  double operator()(double q) const { return eval(q); }
};

/// catalog ids: linear, poly_odd_sat, tanh, atan, deadzone_smooth, sinh_sat
Nonlinearity make_nonlinearity(const std::string& id,
                               const std::map<std::string, double>& params);

/// Tabulated (q, phi, dphi) triples; monotone cubic interpolation inside the
/// table, affine continuation with the edge slopes outside. The table must
/// contain q = 0 with phi = 0.
Nonlinearity make_tabulated(std::vector<double> q, std::vector<double> phi,
                            std::vector<double> dphi, NonlinearityFlags flags);

/// Continuous piecewise-affine map q -> slopes[i] * q + intercepts[i] on the
/// partition of R induced by the breakpoints. eta is the Lipschitz constant
/// of the approximation error phi - phi_pwa.
struct PwaApproximation {
  std::vector<double> breakpoints;  // ascending, size N - 1
  std::vector<double> slopes;       // size N
  std::vector<double> intercepts;   // size N
  double eta = 0.0;

  int size() const { return static_cast<int>(slopes.size()); }
  int region_of(double q) const;
  std::pair<double, double> region_interval(int i) const;  // may be +-inf
  double evaluate(double q) const;
  double operator()(double q) const { return evaluate(q); }
};

/// Length of the interval phi'(R+); analytic when the catalog provides it,
/// otherwise by dense sampling with the asymptotic slope as limit value.
double derivative_range_length(const Nonlinearity& nl);

struct PartitionSize {
  int m;
  int N;
};

/// m = ceil(l / (2 eta_ref)) - 1 with N = 2m + 1; m = 0 yields the single
/// affine region (incremental-circle-criterion regime).
PartitionSize required_partition_size(double image_length, double eta_ref);
PartitionSize required_partition_size(const Nonlinearity& nl, double eta_ref);

/// Uniform division of the image of phi', breakpoints by bisection on
/// phi'(q) = level, slopes at the midpoint of phi' over each region,
/// intercepts chained from s = 0 on the region containing zero.
PwaApproximation build_approximation(const Nonlinearity& nl, double eta_ref);

/// Same construction with the partition size fixed (N odd, N = 2m + 1).
PwaApproximation build_approximation_forced(const Nonlinearity& nl, int N);

/// Max over a dense grid of |phi'(q) - r_i|. Throws ApproximationInvalid when
/// the measurement exceeds approx.eta + 1e-6.
double verify_error_lipschitz(const Nonlinearity& nl,
                              const PwaApproximation& approx, int grid_size);

}  // namespace lurecert::nonlin
