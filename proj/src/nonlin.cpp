#include "nonlin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lurecert::nonlin {

namespace {

constexpr double kAsymTol = 1e-8;     // phi' considered settled at this distance
constexpr double kBisectTol = 1e-10;  // breakpoint tolerance in q

bool finite(double v) { return std::isfinite(v); }

// Fritsch-Carlson monotone cubic interpolant.
struct Pchip {
  std::vector<double> x, y, d;

  Pchip(std::vector<double> xs, std::vector<double> ys)
      : x(std::move(xs)), y(std::move(ys)) {
    const size_t n = x.size();
    if (n < 2) throw MalformedNonlinearity("tabulated data needs >= 2 points");
    std::vector<double> h(n - 1), delta(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
      h[i] = x[i + 1] - x[i];
      if (!(h[i] > 0)) throw MalformedNonlinearity("table abscissae not increasing");
      delta[i] = (y[i + 1] - y[i]) / h[i];
    }
    d.assign(n, 0.0);
    for (size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0.0) {
        d[i] = 0.0;
      } else {
        const double w1 = 2 * h[i] + h[i - 1];
        const double w2 = h[i] + 2 * h[i - 1];
        d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
      }
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
      double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
      if (s * d0 <= 0.0) return 0.0;
      if (std::abs(s) > 3 * std::abs(d0)) return 3 * d0;
      return s;
    };
    d[0] = (n == 2) ? delta[0] : end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = (n == 2) ? delta[n - 2]
                        : end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  double operator()(double q) const {
    const size_t n = x.size();
    size_t i = std::upper_bound(x.begin(), x.end(), q) - x.begin();
    i = std::min(std::max<size_t>(i, 1), n - 1) - 1;
    const double h = x[i + 1] - x[i];
    const double t = (q - x[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return y[i] * (2 * t3 - 3 * t2 + 1) + h * d[i] * (t3 - 2 * t2 + t) +
           y[i + 1] * (-2 * t3 + 3 * t2) + h * d[i + 1] * (t3 - t2);
  }
};

double require_param(const std::map<std::string, double>& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end())
    throw MalformedNonlinearity("missing catalog parameter: " + key);
  return it->second;
}

double param_or(const std::map<std::string, double>& p, const std::string& key,
                double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

int sign_of(double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

// Grow q geometrically until phi' on the given half-line settles at its
// asymptotic slope.
double settle_distance(const Nonlinearity& nl, int side) {
  const double k = side > 0 ? nl.k2 : nl.k1;
  const double scale = std::max(1.0, std::abs(k));
  double q = 1.0;
  for (int it = 0; it < 80; ++it) {
    const double dv = nl.deriv(side > 0 ? q : -q);
    if (!finite(dv)) throw MalformedNonlinearity("non-finite derivative sample");
    if (std::abs(dv - k) <= kAsymTol * scale) return q;
    q *= 2.0;
  }
  throw AssumptionViolation("derivative does not settle at the asymptotic slope");
}

// Solve phi'(side * t) = level for t in (0, q_max] by bisection.
double bisect_level(const Nonlinearity& nl, int side, double level, double q_max) {
  auto f = [&](double t) { return nl.deriv(side > 0 ? t : -t) - level; };
  const double f0 = f(0.0);
  double lo = 0.0, hi = q_max;
  double fhi = f(hi);
  if (!finite(f0) || !finite(fhi))
    throw MalformedNonlinearity("non-finite derivative sample");
  if (f0 == 0.0) return 0.0;
  if (sign_of(fhi) == sign_of(f0))
    throw AssumptionViolation(
        "level not bracketed on the half-line; derivative is not monotone "
        "where the partition construction requires it");
  for (int it = 0; it < 200 && hi - lo > kBisectTol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (!finite(fm)) throw MalformedNonlinearity("non-finite derivative sample");
    if (sign_of(fm) == sign_of(f0))
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct HalfPartition {
  std::vector<double> q;       // breakpoints on the half-line, ascending in |q|
  std::vector<double> levels;  // phi' level at each breakpoint
};

// Uniform division of the image of phi' over one half-line into m + 1 levels.
HalfPartition build_half(const Nonlinearity& nl, int side, int m) {
  HalfPartition part;
  if (m <= 0) return part;
  const double d0 = nl.deriv(0.0);
  const double k = side > 0 ? nl.k2 : nl.k1;
  if (!finite(d0) || !finite(k))
    throw MalformedNonlinearity("non-finite derivative sample");
  const double q_max = settle_distance(nl, side);
  for (int t = 1; t <= m; ++t) {
    const double level = d0 + (k - d0) * (static_cast<double>(t) / (m + 1));
    part.q.push_back(bisect_level(nl, side, level, q_max));
    part.levels.push_back(level);
  }
  return part;
}

PwaApproximation assemble(const Nonlinearity& nl, int m_pos, int m_neg) {
  const double d0 = nl.deriv(0.0);

  HalfPartition right = build_half(nl, +1, m_pos);
  HalfPartition left;
  if (nl.flags.odd && m_neg == m_pos) {
    left = right;  // mirrored exactly below
  } else {
    left = build_half(nl, -1, m_neg);
  }

  // region boundaries left to right, with the phi' level on each side
  const int N = m_neg + m_pos + 1;
  PwaApproximation a;
  a.breakpoints.reserve(N - 1);
  std::vector<double> lo_level(N), hi_level(N);  // phi' hull per region

  // levels at region edges: index c = m_neg is the region containing zero
  for (int j = m_neg - 1; j >= 0; --j) a.breakpoints.push_back(-left.q[j]);
  std::reverse(a.breakpoints.begin(), a.breakpoints.end());
  for (int j = 0; j < m_pos; ++j) a.breakpoints.push_back(right.q[j]);

  auto region_levels = [&](int i) {
    // phi' values at the two ends of region i (asymptote at the open ends)
    double at_left, at_right;
    if (i == 0)
      at_left = nl.k1;
    else if (i <= m_neg)
      at_left = left.levels[m_neg - i];
    else
      at_left = right.levels[i - m_neg - 1];
    if (i == N - 1)
      at_right = nl.k2;
    else if (i < m_neg)
      at_right = left.levels[m_neg - i - 1];
    else
      at_right = right.levels[i - m_neg];
    double lo = std::min(at_left, at_right);
    double hi = std::max(at_left, at_right);
    if (i == m_neg) {  // region containing zero also sees phi'(0)
      lo = std::min(lo, d0);
      hi = std::max(hi, d0);
    }
    lo_level[i] = lo;
    hi_level[i] = hi;
  };
  for (int i = 0; i < N; ++i) region_levels(i);

  a.slopes.resize(N);
  a.intercepts.assign(N, 0.0);
  double eta = 0.0;
  for (int i = 0; i < N; ++i) {
    a.slopes[i] = 0.5 * (lo_level[i] + hi_level[i]);
    eta = std::max(eta, 0.5 * (hi_level[i] - lo_level[i]));
  }
  const int c = m_neg;
  for (int i = c; i + 1 < N; ++i)
    a.intercepts[i + 1] = a.intercepts[i] + (a.slopes[i] - a.slopes[i + 1]) * a.breakpoints[i];
  for (int i = c; i > 0; --i)
    a.intercepts[i - 1] = a.intercepts[i] + (a.slopes[i] - a.slopes[i - 1]) * a.breakpoints[i - 1];

  // the uniform-image division makes every half-length equal; report the
  // exact common value when the construction is symmetric
  if (nl.flags.odd && m_pos == m_neg && m_pos > 0) {
    a.eta = std::abs(nl.k2 - d0) / (2.0 * (m_pos + 1));
  } else {
    a.eta = eta;
  }
  return a;
}

}  // namespace

Nonlinearity make_nonlinearity(const std::string& id,
                               const std::map<std::string, double>& params) {
  Nonlinearity nl;
  nl.label = id;
  if (id == "linear") {
    const double k = require_param(params, "k");
    nl.eval = [k](double q) { return k * q; };
    nl.deriv = [k](double) { return k; };
    nl.k1 = nl.k2 = k;
    nl.lipschitz = std::abs(k);
    nl.flags.monotone = k >= 0;
    nl.analytic_image_length = 0.0;
  } else if (id == "poly_odd_sat") {
    // odd polynomial c1 q + c3 q^3 + c5 q^5 with affine continuation past q_sat
    const double c1 = param_or(params, "c1", 0.0);
    const double c3 = param_or(params, "c3", 0.0);
    const double c5 = param_or(params, "c5", 0.0);
    const double qs = require_param(params, "q_sat");
    if (c1 < 0 || c3 < 0 || c5 < 0 || qs <= 0)
      throw MalformedNonlinearity("poly_odd_sat needs c1,c3,c5 >= 0 and q_sat > 0");
    const double ks = c1 + 3 * c3 * qs * qs + 5 * c5 * qs * qs * qs * qs;
    const double phi_s = c1 * qs + c3 * qs * qs * qs + c5 * qs * qs * qs * qs * qs;
    nl.eval = [=](double q) {
      const double aq = std::abs(q);
      if (aq <= qs) return c1 * q + c3 * q * q * q + c5 * q * q * q * q * q;
      const double v = phi_s + ks * (aq - qs);
      return q >= 0 ? v : -v;
    };
    nl.deriv = [=](double q) {
      const double aq = std::abs(q);
      if (aq <= qs) return c1 + 3 * c3 * q * q + 5 * c5 * q * q * q * q;
      return ks;
    };
    nl.k1 = nl.k2 = ks;
    nl.lipschitz = ks;
    nl.analytic_image_length = ks - c1;
  } else if (id == "tanh") {
    const double a = require_param(params, "a");
    const double b = require_param(params, "b");
    if (a <= 0 || b <= 0) throw MalformedNonlinearity("tanh needs a, b > 0");
    nl.eval = [=](double q) { return a * std::tanh(b * q); };
    nl.deriv = [=](double q) {
      const double t = std::tanh(b * q);
      return a * b * (1.0 - t * t);
    };
    nl.k1 = nl.k2 = 0.0;
    nl.lipschitz = a * b;
    nl.flags.deriv_nondecreasing_on_rplus = false;
    nl.analytic_image_length = a * b;
  } else if (id == "atan") {
    const double a = require_param(params, "a");
    const double b = require_param(params, "b");
    if (a <= 0 || b <= 0) throw MalformedNonlinearity("atan needs a, b > 0");
    nl.eval = [=](double q) { return a * std::atan(b * q); };
    nl.deriv = [=](double q) { return a * b / (1.0 + b * b * q * q); };
    nl.k1 = nl.k2 = 0.0;
    nl.lipschitz = a * b;
    nl.flags.deriv_nondecreasing_on_rplus = false;
    nl.analytic_image_length = a * b;
  } else if (id == "deadzone_smooth") {
    // k (q - w tanh(q / w)): slope grows from 0 to k
    const double k = require_param(params, "k");
    const double w = require_param(params, "w");
    if (k <= 0 || w <= 0) throw MalformedNonlinearity("deadzone_smooth needs k, w > 0");
    nl.eval = [=](double q) { return k * (q - w * std::tanh(q / w)); };
    nl.deriv = [=](double q) {
      const double t = std::tanh(q / w);
      return k * t * t;
    };
    nl.k1 = nl.k2 = k;
    nl.lipschitz = k;
    nl.analytic_image_length = k;
  } else if (id == "sinh_sat") {
    const double a = require_param(params, "a");
    const double qs = require_param(params, "q_sat");
    if (a <= 0 || qs <= 0) throw MalformedNonlinearity("sinh_sat needs a, q_sat > 0");
    const double ks = a * std::cosh(qs);
    const double phi_s = a * std::sinh(qs);
    if (!finite(ks)) throw MalformedNonlinearity("sinh_sat saturation slope overflows");
    nl.eval = [=](double q) {
      const double aq = std::abs(q);
      if (aq <= qs) return a * std::sinh(q);
      const double v = phi_s + ks * (aq - qs);
      return q >= 0 ? v : -v;
    };
    nl.deriv = [=](double q) {
      const double aq = std::abs(q);
      return aq <= qs ? a * std::cosh(q) : ks;
    };
    nl.k1 = nl.k2 = ks;
    nl.lipschitz = ks;
    nl.analytic_image_length = ks - a;
  } else {
    throw MalformedNonlinearity("unknown catalog nonlinearity: " + id);
  }
  return nl;
}

Nonlinearity make_tabulated(std::vector<double> q, std::vector<double> phi,
                            std::vector<double> dphi, NonlinearityFlags flags) {
  if (q.size() != phi.size() || q.size() != dphi.size())
    throw MalformedNonlinearity("tabulated arrays must have equal length");
  for (size_t i = 0; i < q.size(); ++i)
    if (!finite(q[i]) || !finite(phi[i]) || !finite(dphi[i]))
      throw MalformedNonlinearity("tabulated data contains non-finite entries");
  bool has_zero = false;
  for (size_t i = 0; i < q.size(); ++i)
    if (q[i] == 0.0 && phi[i] == 0.0) has_zero = true;
  if (!has_zero)
    throw MalformedNonlinearity("tabulated data must contain (q, phi) = (0, 0)");

  const double qa = q.front(), qb = q.back();
  const double pa = phi.front(), pb = phi.back();
  const double k1 = dphi.front(), k2 = dphi.back();
  auto phi_itp = std::make_shared<Pchip>(q, phi);
  auto dphi_itp = std::make_shared<Pchip>(q, std::move(dphi));

  Nonlinearity nl;
  nl.label = "tabulated";
  nl.flags = flags;
  nl.k1 = k1;
  nl.k2 = k2;
  nl.eval = [=](double x) {
    if (x < qa) return pa + k1 * (x - qa);
    if (x > qb) return pb + k2 * (x - qb);
    return (*phi_itp)(x);
  };
  nl.deriv = [=](double x) {
    if (x < qa) return k1;
    if (x > qb) return k2;
    return (*dphi_itp)(x);
  };
  double L = std::max(std::abs(k1), std::abs(k2));
  for (double x : q) L = std::max(L, std::abs(nl.deriv(x)));
  nl.lipschitz = L;
  return nl;
}

int PwaApproximation::region_of(double q) const {
  return static_cast<int>(
      std::upper_bound(breakpoints.begin(), breakpoints.end(), q) -
      breakpoints.begin());
}

std::pair<double, double> PwaApproximation::region_interval(int i) const {
  const double inf = std::numeric_limits<double>::infinity();
  const double lo = i == 0 ? -inf : breakpoints[i - 1];
  const double hi = i == size() - 1 ? inf : breakpoints[i];
  return {lo, hi};
}

double PwaApproximation::evaluate(double q) const {
  const int i = region_of(q);
  return slopes[i] * q + intercepts[i];
}

double derivative_range_length(const Nonlinearity& nl) {
  if (nl.analytic_image_length) return *nl.analytic_image_length;
  // dense sampling of phi' over R+, geometric past the settle distance,
  // with the asymptotic slope included as the limit value
  const double q_max = settle_distance(nl, +1);
  double lo = nl.k2, hi = nl.k2;
  auto take = [&](double q) {
    const double v = nl.deriv(q);
    if (!finite(v)) throw MalformedNonlinearity("non-finite derivative sample");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  };
  const int n_lin = 20000;
  for (int i = 0; i <= n_lin; ++i) take(q_max * i / n_lin);
  for (double q = q_max; q < q_max * 1e3; q *= 1.25) take(q);
  return hi - lo;
}

PartitionSize required_partition_size(double image_length, double eta_ref) {
  if (!(eta_ref > 0)) throw std::invalid_argument("eta_ref must be positive");
  if (!(image_length >= 0) || !finite(image_length))
    throw MalformedNonlinearity("invalid derivative image length");
  int m = static_cast<int>(std::ceil(image_length / (2.0 * eta_ref))) - 1;
  m = std::max(m, 0);
  return {m, 2 * m + 1};
}

PartitionSize required_partition_size(const Nonlinearity& nl, double eta_ref) {
  return required_partition_size(derivative_range_length(nl), eta_ref);
}

PwaApproximation build_approximation(const Nonlinearity& nl, double eta_ref) {
  if (!(eta_ref > 0)) throw std::invalid_argument("eta_ref must be positive");
  const double d0 = nl.deriv(0.0);
  if (!finite(d0)) throw MalformedNonlinearity("non-finite derivative sample");
  if (nl.flags.odd) {
    const double l = derivative_range_length(nl);
    const auto [m, N] = required_partition_size(l, eta_ref);
    (void)N;
    return assemble(nl, m, m);
  }
  const auto mp = required_partition_size(std::abs(nl.k2 - d0), eta_ref);
  const auto mn = required_partition_size(std::abs(nl.k1 - d0), eta_ref);
  return assemble(nl, mp.m, mn.m);
}

PwaApproximation build_approximation_forced(const Nonlinearity& nl, int N) {
  if (N < 1 || N % 2 == 0)
    throw std::invalid_argument("forced partition size must be odd and >= 1");
  const int m = (N - 1) / 2;
  return assemble(nl, m, m);
}

double verify_error_lipschitz(const Nonlinearity& nl,
                              const PwaApproximation& approx, int grid_size) {
  if (grid_size < 1000) throw std::invalid_argument("grid_size must be >= 1000");
  const double q_far_r = settle_distance(nl, +1);
  const double q_far_l = settle_distance(nl, -1);
  double span_lo = approx.breakpoints.empty() ? -1.0 : approx.breakpoints.front();
  double span_hi = approx.breakpoints.empty() ? 1.0 : approx.breakpoints.back();
  const double w = std::max(span_hi - span_lo, 1.0);
  span_lo -= 0.1 * w;
  span_hi += 0.1 * w;

  double eta_emp = 0.0;
  auto take = [&](double q) {
    const double v = nl.deriv(q);
    if (!finite(v)) throw MalformedNonlinearity("non-finite derivative sample");
    const double e = std::abs(v - approx.slopes[approx.region_of(q)]);
    eta_emp = std::max(eta_emp, e);
  };

  const int n_core = (grid_size * 7) / 10;
  for (int i = 0; i <= n_core; ++i)
    take(span_lo + (span_hi - span_lo) * i / n_core);
  const int n_tail = std::max(grid_size / 10, 100);
  for (int i = 0; i <= n_tail; ++i) {
    const double g = std::pow(
        std::max(q_far_r * 8 / std::max(span_hi, 1e-6), 2.0),
        static_cast<double>(i) / n_tail);
    take(std::max(span_hi, 1e-6) * g);
    take(std::min(span_lo, -1e-6) * std::pow(
        std::max(q_far_l * 8 / -std::min(span_lo, -1e-6), 2.0),
        static_cast<double>(i) / n_tail));
  }
  // the supremum is typically attained at region endpoints
  for (double b : approx.breakpoints) {
    const double h = 1e-12 * std::max(1.0, std::abs(b));
    take(b - h);
    take(b + h);
    take(b);
  }

  if (eta_emp > approx.eta + 1e-6)
    throw ApproximationInvalid("measured error Lipschitz constant " +
                               std::to_string(eta_emp) + " exceeds eta = " +
                               std::to_string(approx.eta));
  return eta_emp;
}

}  // namespace lurecert::nonlin
