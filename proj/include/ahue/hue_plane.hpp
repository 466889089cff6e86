#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "ahue/activation.hpp"
#include "ahue/error.hpp"

namespace ahue {

// Hue-style decomposition of an N-channel activation vector: the all-ones
// direction u = (1,...,1)/sqrt(N) is the uninformative medial axis (the
// greyscale axis when N = 3), and a hue angle is read off in a fixed 2D plane
// orthogonal to it. For N > 3 the plane is fitted from data (fit_hue_plane);
// the construction reduces to the classical RGB hue plane for balanced
// 3-channel data. Diagnostic only; nothing downstream consumes the angle.

struct HuePlaneBasis {
  std::vector<double> b1;
  std::vector<double> b2;

  std::size_t channels() const { return b1.size(); }
};

struct HueDiagnostic {
  double uniform_component = 0.0;
  double residual_norm = 0.0;
  std::optional<double> hue_angle;  // absent for (near-)uniform vectors
  double saturation = 0.0;          // residual_norm / |v|
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> uniform_axis(std::size_t n) {
  std::vector<double> u(n, 1.0 / std::sqrt(static_cast<double>(n)));
  return u;
}

// v minus its projection onto the uniform axis.
inline std::vector<double> uniform_residual(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  std::vector<double> r(v.begin(), v.end());
  for (double& x : r) x -= mean;
  return r;
}

inline void check_plane(const HuePlaneBasis& plane) {
  constexpr double tol = 1e-9;
  const std::size_t n = plane.b1.size();
  if (n < 2 || plane.b2.size() != n)
    raise(Errc::degenerate_plane, "basis vectors missing or of mismatched dimension");
  auto u = uniform_axis(n);
  if (std::abs(l2_norm(plane.b1) - 1.0) > tol || std::abs(l2_norm(plane.b2) - 1.0) > tol)
    raise(Errc::degenerate_plane, "basis vectors are not unit length");
  if (std::abs(dot(plane.b1, plane.b2)) > tol)
    raise(Errc::degenerate_plane, "basis vectors are not orthogonal");
  if (std::abs(dot(plane.b1, u)) > tol || std::abs(dot(plane.b2, u)) > tol)
    raise(Errc::degenerate_plane, "basis is not orthogonal to the uniform axis");
}

}  // namespace detail

constexpr double kHueResidualEps = 1e-12;

inline HueDiagnostic hue_diagnostic(std::span<const double> v, const HuePlaneBasis& plane) {
  detail::check_plane(plane);
  if (v.size() != plane.channels())
    raise(Errc::shape_mismatch, "vector dimension does not match plane basis");
  auto u = detail::uniform_axis(v.size());
  HueDiagnostic d;
  d.uniform_component = detail::dot(v, u);
  auto residual = detail::uniform_residual(v);
  d.residual_norm = l2_norm(residual);
  const double vnorm = l2_norm(v);
  d.saturation = vnorm > 0.0 ? d.residual_norm / vnorm : 0.0;
  const double p1 = detail::dot(residual, plane.b1);
  const double p2 = detail::dot(residual, plane.b2);
  if (std::sqrt(p1 * p1 + p2 * p2) >= kHueResidualEps) d.hue_angle = std::atan2(p2, p1);
  return d;
}

// The classical hue plane for N = 3 (perpendicular to the RGB greyscale axis,
// with b1 through the red direction). Useful as a reference basis.
inline HuePlaneBasis rgb_hue_plane() {
  HuePlaneBasis p;
  p.b1 = {2.0 / std::sqrt(6.0), -1.0 / std::sqrt(6.0), -1.0 / std::sqrt(6.0)};
  p.b2 = {0.0, 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)};
  return p;
}

namespace detail {

// y = S x for the scatter matrix S = sum_i r_i r_i^T, applied implicitly.
inline std::vector<double> apply_scatter(const std::vector<std::vector<double>>& residuals,
                                         std::span<const double> x) {
  std::vector<double> y(x.size(), 0.0);
  for (const auto& r : residuals) {
    const double c = dot(r, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += c * r[i];
  }
  return y;
}

// Orthonormalizes (a, b) in place. When the pair is (near-)collinear, b is
// completed deterministically from the first coordinate direction that has a
// nonzero component off span{a, uniform axis}.
inline void orthonormalize_pair(std::vector<double>& a, std::vector<double>& b) {
  const std::size_t n = a.size();
  double na = l2_norm(a);
  if (na < 1e-150) {
    std::vector<double> e(n, 0.0);
    e[0] = 1.0;
    a = uniform_residual(e);
    na = l2_norm(a);
  }
  for (double& x : a) x /= na;
  auto deflate = [&](std::vector<double>& v) {
    const double c = dot(v, a);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * a[i];
  };
  deflate(b);
  double nb = l2_norm(b);
  for (std::size_t k = 0; nb < 1e-12 && k < n; ++k) {
    std::vector<double> e(n, 0.0);
    e[k] = 1.0;
    b = uniform_residual(e);
    deflate(b);
    nb = l2_norm(b);
  }
  for (double& x : b) x /= nb;
}

inline void apply_sign_convention(std::vector<double>& v) {
  for (double x : v) {
    if (std::abs(x) > 1e-9) {
      if (x < 0.0)
        for (double& y : v) y = -y;
      return;
    }
  }
}

}  // namespace detail

// Fits the 2D hue plane as the top-2 principal directions of the vectors'
// uniform-axis residuals, via subspace iteration with a 2x2 Rayleigh-Ritz
// step. Deterministic: fixed starting block and a sign rule (the first
// component of each basis vector with |value| > 1e-9 is made positive).
inline HuePlaneBasis fit_hue_plane(const std::vector<std::vector<double>>& vectors) {
  if (vectors.size() < 2) raise(Errc::degenerate_spectrum, "need at least two vectors");
  const std::size_t n = vectors.front().size();
  if (n < 3) raise(Errc::invalid_dims, "hue plane needs at least 3 channels");
  for (const auto& v : vectors)
    if (v.size() != n) raise(Errc::shape_mismatch, "mixed vector dimensions");

  std::vector<std::vector<double>> residuals;
  residuals.reserve(vectors.size());
  double total_scatter = 0.0;
  for (const auto& v : vectors) {
    auto r = detail::uniform_residual(v);
    total_scatter += detail::dot(r, r);
    residuals.push_back(std::move(r));
  }
  if (total_scatter < 1e-24)
    raise(Errc::degenerate_spectrum, "all residuals vanish (vectors lie on the uniform axis)");

  // Fixed start: e1, e2 projected off the uniform axis.
  std::vector<double> q1(n, 0.0), q2(n, 0.0);
  q1[0] = 1.0;
  q2[1] = 1.0;
  q1 = detail::uniform_residual(q1);
  q2 = detail::uniform_residual(q2);
  detail::orthonormalize_pair(q1, q2);

  double lam1 = 0.0, lam2 = 0.0;
  for (int iter = 0; iter < 512; ++iter) {
    auto y1 = detail::apply_scatter(residuals, q1);
    auto y2 = detail::apply_scatter(residuals, q2);
    // Rayleigh-Ritz on span{y1, y2}: eigen-decompose the projected 2x2 form.
    std::vector<double> p1 = y1, p2 = y2;
    detail::orthonormalize_pair(p1, p2);
    auto sp1 = detail::apply_scatter(residuals, p1);
    auto sp2 = detail::apply_scatter(residuals, p2);
    const double a = detail::dot(p1, sp1);
    const double b = detail::dot(p1, sp2);
    const double d = detail::dot(p2, sp2);
    const double tr = a + d;
    const double disc = std::sqrt(std::max(0.0, (a - d) * (a - d) + 4.0 * b * b));
    const double l1 = 0.5 * (tr + disc);
    const double l2 = 0.5 * (tr - disc);
    // Eigenvector of the 2x2 form for l1, expressed in the {p1, p2} frame.
    double c1, c2;
    if (std::abs(b) > 1e-300) {
      c1 = l1 - d;
      c2 = b;
    } else if (a >= d) {
      c1 = 1.0;
      c2 = 0.0;
    } else {
      c1 = 0.0;
      c2 = 1.0;
    }
    const double cn = std::sqrt(c1 * c1 + c2 * c2);
    c1 /= cn;
    c2 /= cn;
    std::vector<double> v1(n), v2(n);
    for (std::size_t i = 0; i < n; ++i) {
      v1[i] = c1 * p1[i] + c2 * p2[i];
      v2[i] = -c2 * p1[i] + c1 * p2[i];
    }
    const bool converged = std::abs(l1 - lam1) <= 1e-14 * std::max(1.0, l1) &&
                           std::abs(l2 - lam2) <= 1e-14 * std::max(1.0, l1);
    q1 = std::move(v1);
    q2 = std::move(v2);
    lam1 = l1;
    lam2 = l2;
    if (converged && iter > 0) break;
  }

  if (lam2 < 1e-12 * lam1 || lam1 <= 0.0)
    raise(Errc::degenerate_spectrum, "residual spectrum has no second principal direction");

  detail::apply_sign_convention(q1);
  detail::apply_sign_convention(q2);
  HuePlaneBasis basis;
  basis.b1 = std::move(q1);
  basis.b2 = std::move(q2);
  return basis;
}

}  // namespace ahue
