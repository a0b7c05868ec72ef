#include "earm/rt_space.hpp"

#include "earm/quadrature.hpp"

namespace earm {

RtFlux::RtFlux(const Mesh& mesh, int s) {
  index = s;
  facet_moments.assign(mesh.n_facets(), Eigen::VectorXd::Zero(s + 1));
  interior_moments.assign(mesh.n_elements(), Eigen::VectorXd::Zero(s * (s + 1)));
}

double RtFlux::normal_trace(const Mesh& mesh, int f, double t) const {
  double len = mesh.facet(f).length;
  double v = 0;
  for (int j = 0; j <= index; ++j)
    v += facet_moments[f][j] * legendre(j, 2.0 * t - 1.0) / legendre_norm2(j, len);
  return v;
}

RtFlux operator+(const RtFlux& a, const RtFlux& b) {
  require(a.index == b.index, "RtFlux: index mismatch in sum");
  RtFlux out = a;
  for (std::size_t f = 0; f < out.facet_moments.size(); ++f)
    out.facet_moments[f] += b.facet_moments[f];
  for (std::size_t k = 0; k < out.interior_moments.size(); ++k)
    out.interior_moments[k] += b.interior_moments[k];
  return out;
}

// Local basis of RT(K,s) in chart coordinates xh = (x - c)/h:
// vector monomials (m,0), (0,m) for deg(m) <= s, then xh*m for the s+1
// monomials of exact degree s.
namespace {

int rt_local_dim(int s) { return (s + 1) * (s + 3); }

void rt_basis_values(int s, const Vec2& p, Eigen::MatrixXd& out) {
  int np = poly_dim(s);
  out.setZero(rt_local_dim(s), 2);
  Eigen::VectorXd m;
  mono_values(s, p, m);
  for (int i = 0; i < np; ++i) {
    out(i, 0) = m[i];
    out(np + i, 1) = m[i];
  }
  for (int j = 0; j <= s; ++j) {
    double hom = m[mono_index(s - j, j)];
    out(2 * np + j, 0) = p.x() * hom;
    out(2 * np + j, 1) = p.y() * hom;
  }
}

// Physical divergence of basis function i, as coefficients of degree s in
// the chart (carries the 1/scale factor).
Eigen::VectorXd rt_basis_divergence(int s, int i, double scale) {
  int np = poly_dim(s);
  Eigen::VectorXd coeff = Eigen::VectorXd::Zero(poly_dim(s));
  auto unit = [&](int deg, int flat) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(poly_dim(deg));
    c[flat] = 1.0;
    return c;
  };
  if (i < np) {
    Eigen::VectorXd d = mono_dx(s, unit(s, i));
    coeff.head(d.size()) = d;
  } else if (i < 2 * np) {
    Eigen::VectorXd d = mono_dy(s, unit(s, i - np));
    coeff.head(d.size()) = d;
  } else {
    // div(xh * m) = 2 m + xh . grad m for homogeneous m of degree s,
    // which equals (s + 2) m by Euler's identity.
    int j = i - 2 * np;
    coeff[mono_index(s - j, j)] = s + 2.0;
  }
  return coeff / scale;
}

}  // namespace

RtSpace::RtSpace(const Mesh& mesh, int index) : mesh_(&mesh), index_(index) {
  require(index >= 0, "RtSpace: index must be nonnegative");
  const int s = index_;
  local_dim_ = rt_local_dim(s);
  const int ne = mesh.n_elements();
  dof_lu_.resize(ne);
  interior_coeff_.resize(ne);

  const auto& tri_q = triangle_rule(2 * s + 2);
  const auto& edge_q = edge_rule(2 * s + 2);
  const int n_int_scalar = poly_dim(std::max(s - 1, 0));

  std::vector<Eigen::MatrixXd> dof_mats(ne);
  parallel_for(ne, [&](int k) {
    Vec2 c = mesh.centroid(k);
    double h = mesh.diameter(k);
    auto corners = mesh.corners(k);

    // Orthonormalize the interior scalar monomials wrt L2(K).
    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Identity(n_int_scalar, n_int_scalar);
    if (s >= 1) {
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n_int_scalar, n_int_scalar);
      for (std::size_t q = 0; q < tri_q.points.size(); ++q) {
        Vec2 ref = tri_q.points[q];
        Vec2 x = corners.col(0) + ref.x() * (corners.col(1) - corners.col(0)) +
                 ref.y() * (corners.col(2) - corners.col(0));
        double w = tri_q.weights[q] * 2.0 * mesh.area(k);
        Eigen::VectorXd m;
        mono_values(s - 1, (x - c) / h, m);
        gram += w * m * m.transpose();
      }
      Eigen::LLT<Eigen::MatrixXd> llt(gram);
      require(llt.info() == Eigen::Success, "RtSpace: interior Gram not SPD");
      coeffs = llt.matrixL().solve(Eigen::MatrixXd::Identity(n_int_scalar, n_int_scalar));
    }
    interior_coeff_[k] = coeffs;

    Eigen::MatrixXd dof = Eigen::MatrixXd::Zero(local_dim_, local_dim_);
    // Facet rows: for local facet lf and Legendre order j.
    for (int lf = 0; lf < 3; ++lf) {
      int f = mesh.element_facets(k)[lf];
      const Facet& fc = mesh.facet(f);
      for (std::size_t q = 0; q < edge_q.points.size(); ++q) {
        double t = edge_q.points[q];
        Vec2 x = mesh.facet_point(f, t);
        double w = edge_q.weights[q] * fc.length;
        Eigen::MatrixXd bv;
        rt_basis_values(s, (x - c) / h, bv);
        Eigen::VectorXd bn = bv * fc.normal;
        for (int j = 0; j <= s; ++j)
          dof.row(lf * (s + 1) + j) += w * legendre(j, 2.0 * t - 1.0) * bn.transpose();
      }
    }
    // Interior rows: (b, psi_a) with psi the orthonormal vector basis
    // {(mt_i, 0)} then {(0, mt_i)}.
    if (s >= 1) {
      int row0 = 3 * (s + 1);
      for (std::size_t q = 0; q < tri_q.points.size(); ++q) {
        Vec2 ref = tri_q.points[q];
        Vec2 x = corners.col(0) + ref.x() * (corners.col(1) - corners.col(0)) +
                 ref.y() * (corners.col(2) - corners.col(0));
        double w = tri_q.weights[q] * 2.0 * mesh.area(k);
        Eigen::MatrixXd bv;
        rt_basis_values(s, (x - c) / h, bv);
        Eigen::VectorXd m;
        mono_values(s - 1, (x - c) / h, m);
        Eigen::VectorXd mt = coeffs * m;
        for (int a = 0; a < n_int_scalar; ++a) {
          dof.row(row0 + a) += w * mt[a] * bv.col(0).transpose();
          dof.row(row0 + n_int_scalar + a) += w * mt[a] * bv.col(1).transpose();
        }
      }
    }
    dof_mats[k] = dof;
  });
  for (int k = 0; k < ne; ++k) dof_lu_[k] = Eigen::PartialPivLU<Eigen::MatrixXd>(dof_mats[k]);
}

RtElementField RtSpace::element_field(int k, const Eigen::Matrix<double, Eigen::Dynamic, 3>& fmom,
                                      const Eigen::VectorXd& imom) const {
  const int s = index_;
  Eigen::VectorXd rhs(local_dim_);
  for (int lf = 0; lf < 3; ++lf) rhs.segment(lf * (s + 1), s + 1) = fmom.col(lf);
  if (s >= 1) rhs.tail(s * (s + 1)) = imom;
  Eigen::VectorXd coef = dof_lu_[k].solve(rhs);

  RtElementField field;
  field.center = mesh_->centroid(k);
  field.scale = mesh_->diameter(k);
  field.degree = s + 1;
  int np = poly_dim(s);
  field.cx = Eigen::VectorXd::Zero(poly_dim(s + 1));
  field.cy = Eigen::VectorXd::Zero(poly_dim(s + 1));
  field.cdiv = Eigen::VectorXd::Zero(poly_dim(s));
  // Monomial flat indices below poly_dim(s) agree between degrees s and s+1.
  field.cx.head(np) = coef.head(np);
  field.cy.head(np) = coef.segment(np, np);
  for (int j = 0; j <= s; ++j) {
    double cv = coef[2 * np + j];
    if (cv == 0.0) continue;
    // xh * (xh^{s-j} yh^j): components of degree s+1
    field.cx[mono_index(s - j + 1, j)] += cv;
    field.cy[mono_index(s - j, j + 1)] += cv;
  }
  for (int i = 0; i < local_dim_; ++i)
    if (coef[i] != 0.0) field.cdiv += coef[i] * rt_basis_divergence(s, i, field.scale);
  return field;
}

RtElementField RtSpace::element_field(int k, const RtFlux& flux) const {
  require(flux.index == index_, "RtSpace: flux index mismatch");
  Eigen::Matrix<double, Eigen::Dynamic, 3> fmom(index_ + 1, 3);
  for (int lf = 0; lf < 3; ++lf)
    fmom.col(lf) = flux.facet_moments[mesh_->element_facets(k)[lf]];
  return element_field(k, fmom, flux.interior_moments[k]);
}

std::vector<RtElementField> RtSpace::evaluate_all(const RtFlux& flux) const {
  std::vector<RtElementField> out(mesh_->n_elements());
  parallel_for(mesh_->n_elements(), [&](int k) { out[k] = element_field(k, flux); });
  return out;
}

void RtSpace::interior_basis_values(int k, const std::vector<Vec2>& pts,
                                    Eigen::MatrixXd& vals) const {
  int ns = poly_dim(std::max(index_ - 1, 0));
  vals.resize(pts.size(), ns);
  Vec2 c = mesh_->centroid(k);
  double h = mesh_->diameter(k);
  Eigen::VectorXd m;
  for (std::size_t q = 0; q < pts.size(); ++q) {
    mono_values(index_ - 1, (pts[q] - c) / h, m);
    vals.row(q) = (interior_coeff_[k] * m).transpose();
  }
}

void RtSpace::extract_moments(int k, const RtElementField& field,
                              Eigen::Matrix<double, Eigen::Dynamic, 3>& fmom,
                              Eigen::VectorXd& imom) const {
  const int s = index_;
  const auto& edge_q = edge_rule(2 * s + 2);
  fmom.setZero(s + 1, 3);
  for (int lf = 0; lf < 3; ++lf) {
    int f = mesh_->element_facets(k)[lf];
    const Facet& fc = mesh_->facet(f);
    for (std::size_t q = 0; q < edge_q.points.size(); ++q) {
      double t = edge_q.points[q];
      Vec2 x = mesh_->facet_point(f, t);
      double w = edge_q.weights[q] * fc.length;
      double bn = field.eval(x).dot(fc.normal);
      for (int j = 0; j <= s; ++j) fmom(j, lf) += w * legendre(j, 2.0 * t - 1.0) * bn;
    }
  }
  imom.setZero(s * (s + 1));
  if (s >= 1) {
    const auto& tri_q = triangle_rule(2 * s + 2);
    auto corners = mesh_->corners(k);
    int ns = poly_dim(s - 1);
    std::vector<Vec2> pts(tri_q.points.size());
    for (std::size_t q = 0; q < pts.size(); ++q) {
      Vec2 ref = tri_q.points[q];
      pts[q] = corners.col(0) + ref.x() * (corners.col(1) - corners.col(0)) +
               ref.y() * (corners.col(2) - corners.col(0));
    }
    Eigen::MatrixXd psi;
    interior_basis_values(k, pts, psi);
    for (std::size_t q = 0; q < pts.size(); ++q) {
      double w = tri_q.weights[q] * 2.0 * mesh_->area(k);
      Vec2 v = field.eval(pts[q]);
      for (int a = 0; a < ns; ++a) {
        imom[a] += w * psi(q, a) * v.x();
        imom[ns + a] += w * psi(q, a) * v.y();
      }
    }
  }
}

RtFlux lift_flux(const Mesh& mesh, const RtFlux& flux, int target_index) {
  require(target_index >= flux.index, "lift_flux: target index below source");
  if (target_index == flux.index) return flux;
  RtFlux out(mesh, target_index);
  for (int f = 0; f < mesh.n_facets(); ++f)
    out.facet_moments[f].head(flux.index + 1) = flux.facet_moments[f];
  RtSpace src(mesh, flux.index), dst(mesh, target_index);
  parallel_for(mesh.n_elements(), [&](int k) {
    RtElementField field = src.element_field(k, flux);
    Eigen::Matrix<double, Eigen::Dynamic, 3> fmom;
    Eigen::VectorXd imom;
    dst.extract_moments(k, field, fmom, imom);
    out.interior_moments[k] = imom;
  });
  return out;
}

}  // namespace earm
