// Polynomials in element-local scaled coordinates and Legendre polynomials
// on facets. A scalar polynomial of total degree <= d is a coefficient
// vector against the monomials xh^i * yh^j (i+j <= d) in the variable
// xh = (x - center)/scale, ordered by total degree then by j ascending:
//   1, xh, yh, xh^2, xh*yh, yh^2, ...

#pragma once

#include "earm/util.hpp"

#include <vector>

namespace earm {

inline int poly_dim(int degree) { return (degree + 1) * (degree + 2) / 2; }

/// Flat index of monomial xh^i yh^j.
inline int mono_index(int i, int j) {
  int d = i + j;
  return d * (d + 1) / 2 + j;
}

inline void mono_values(int degree, const Vec2& p, Eigen::VectorXd& out) {
  out.resize(poly_dim(degree));
  for (int d = 0, idx = 0; d <= degree; ++d)
    for (int j = 0; j <= d; ++j, ++idx)
      out[idx] = std::pow(p.x(), d - j) * std::pow(p.y(), j);
}

/// Rows: monomials, cols: (d/dxh, d/dyh).
inline void mono_gradients(int degree, const Vec2& p, Eigen::MatrixXd& out) {
  out.setZero(poly_dim(degree), 2);
  for (int d = 0, idx = 0; d <= degree; ++d)
    for (int j = 0; j <= d; ++j, ++idx) {
      int i = d - j;
      if (i > 0) out(idx, 0) = i * std::pow(p.x(), i - 1) * std::pow(p.y(), j);
      if (j > 0) out(idx, 1) = j * std::pow(p.x(), i) * std::pow(p.y(), j - 1);
    }
}

/// d/dxh of a coefficient vector, returned one degree lower.
inline Eigen::VectorXd mono_dx(int degree, const Eigen::VectorXd& coeff) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(poly_dim(std::max(degree - 1, 0)));
  for (int d = 1; d <= degree; ++d)
    for (int j = 0; j <= d; ++j) {
      int i = d - j;
      if (i > 0) out[mono_index(i - 1, j)] += i * coeff[mono_index(i, j)];
    }
  return out;
}

inline Eigen::VectorXd mono_dy(int degree, const Eigen::VectorXd& coeff) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(poly_dim(std::max(degree - 1, 0)));
  for (int d = 1; d <= degree; ++d)
    for (int j = 0; j <= d; ++j) {
      if (j > 0) out[mono_index(d - j, j - 1)] += j * coeff[mono_index(d - j, j)];
    }
  return out;
}

inline Eigen::VectorXd mono_product(int deg_a, const Eigen::VectorXd& a,
                                    int deg_b, const Eigen::VectorXd& b) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(poly_dim(deg_a + deg_b));
  for (int da = 0; da <= deg_a; ++da)
    for (int ja = 0; ja <= da; ++ja) {
      double ca = a[mono_index(da - ja, ja)];
      if (ca == 0.0) continue;
      for (int db = 0; db <= deg_b; ++db)
        for (int jb = 0; jb <= db; ++jb) {
          double cb = b[mono_index(db - jb, jb)];
          if (cb == 0.0) continue;
          out[mono_index(da - ja + db - jb, ja + jb)] += ca * cb;
        }
    }
  return out;
}

/// A polynomial bound to an element chart: local coords (x - center)/scale.
struct LocalPoly {
  Vec2 center = Vec2::Zero();
  double scale = 1.0;
  int degree = 0;
  Eigen::VectorXd coeff;

  double eval(const Vec2& x) const {
    Vec2 p = (x - center) / scale;
    Eigen::VectorXd m;
    mono_values(degree, p, m);
    return coeff.dot(m);
  }
  Vec2 grad(const Vec2& x) const {
    Vec2 p = (x - center) / scale;
    Eigen::MatrixXd g;
    mono_gradients(degree, p, g);
    return Vec2(coeff.dot(g.col(0)), coeff.dot(g.col(1))) / scale;
  }
};

/// Legendre polynomial P_j on [-1,1] with P_j(1) = 1.
inline double legendre(int j, double t) {
  if (j == 0) return 1.0;
  double p0 = 1.0, p1 = t;
  for (int n = 2; n <= j; ++n) {
    double p2 = ((2.0 * n - 1.0) * t * p1 - (n - 1.0) * p0) / n;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

inline double legendre_derivative(int j, double t) {
  if (j == 0) return 0.0;
  // (1-t^2) P_j' = j (P_{j-1} - t P_j); fall back to the endpoint value.
  if (std::abs(1.0 - t * t) < 1e-14)
    return (t > 0 ? 1.0 : ((j % 2 == 0) ? -1.0 : 1.0)) * 0.5 * j * (j + 1);
  return j * (legendre(j - 1, t) - t * legendre(j, t)) / (1.0 - t * t);
}

/// Squared L2(F) norm of L_{j,F}: |F| / (2j+1).
inline double legendre_norm2(int j, double facet_length) {
  return facet_length / (2.0 * j + 1.0);
}

}  // namespace earm
