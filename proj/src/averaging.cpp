#include "earm/averaging.hpp"

namespace earm {

RtFlux weighted_averaging_flux(const FemSolution& u, const RtSpace& rt) {
  const Mesh& mesh = *u.mesh;
  const int s = rt.index();
  require(s >= 0 && s <= u.order,
          "averaging: RT index must satisfy 0 <= s <= k (got s=" + std::to_string(s) +
              ", k=" + std::to_string(u.order) + ")");
  DataRules rules = data_rules(u.order);
  RtFlux flux(mesh, s);

  parallel_for(mesh.n_facets(), [&](int f) {
    const Facet& fc = mesh.facet(f);
    if (fc.tag == FacetTag::Neumann) {
      // Moments of the projected data g_{k-1,F}: zero beyond order k-1.
      int g_ord = std::min(s, u.order - 1);
      flux.facet_moments[f].head(g_ord + 1) =
          project_neumann(mesh, *u.problem, f, g_ord, rules);
      return;
    }
    AlphaWeights aw = alpha_weights(mesh, *u.coeff, f);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(s + 1);
    for (std::size_t q = 0; q < rules.edge->points.size(); ++q) {
      double t = rules.edge->points[q];
      Vec2 x = mesh.facet_point(f, t);
      double avg = aw.w_minus * (u.coeff->tensor(fc.minus) * u.gradient(fc.minus, x))
                       .dot(fc.normal);
      if (!fc.boundary())
        avg += aw.w_plus * (u.coeff->tensor(fc.plus) * u.gradient(fc.plus, x))
                   .dot(fc.normal);
      double wq = rules.edge->weights[q] * fc.length;
      for (int j = 0; j <= s; ++j) m[j] -= wq * legendre(j, 2.0 * t - 1.0) * avg;
    }
    flux.facet_moments[f] = m;
  });

  if (s >= 1) {
    parallel_for(mesh.n_elements(), [&](int k) {
      int ns = poly_dim(s - 1);
      auto corners = mesh.corners(k);
      const auto& q = *rules.volume;
      std::vector<Vec2> pts(q.points.size());
      for (std::size_t i = 0; i < pts.size(); ++i) {
        Vec2 ref = q.points[i];
        pts[i] = corners.col(0) + ref.x() * (corners.col(1) - corners.col(0)) +
                 ref.y() * (corners.col(2) - corners.col(0));
      }
      Eigen::MatrixXd psi;
      rt.interior_basis_values(k, pts, psi);
      Eigen::VectorXd imom = Eigen::VectorXd::Zero(s * (s + 1));
      const Mat2& a = u.coeff->tensor(k);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        double wq = q.weights[i] * 2.0 * mesh.area(k);
        Vec2 flux_val = a * u.gradient(k, pts[i]);
        for (int al = 0; al < ns; ++al) {
          imom[al] -= wq * psi(i, al) * flux_val.x();
          imom[ns + al] -= wq * psi(i, al) * flux_val.y();
        }
      }
      flux.interior_moments[k] = imom;
    });
  }
  return flux;
}

RtFlux weighted_averaging_flux(const FemSolution& u, int s) {
  RtSpace rt(*u.mesh, s);
  return weighted_averaging_flux(u, rt);
}

}  // namespace earm
