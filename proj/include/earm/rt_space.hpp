// Raviart-Thomas fields of index s on a triangulation. A field is stored by
// its degrees of freedom: per-facet normal moments against the facet
// Legendre basis and, for s >= 1, per-element moments against an
// L2-orthonormalized basis of P_{s-1}(K)^2. Facet moments are single-valued,
// so every stored field is H(div)-conforming by construction.

#pragma once

#include "earm/mesh.hpp"
#include "earm/poly.hpp"

#include <vector>

namespace earm {

struct RtFlux {
  int index = 0;
  /// facet_moments[f][j] = integral over F of (tau . n_F) L_{j,F} ds.
  std::vector<Eigen::VectorXd> facet_moments;
  /// interior_moments[k][a] = (tau, psi_a)_K against the orthonormal basis.
  std::vector<Eigen::VectorXd> interior_moments;

  RtFlux() = default;
  RtFlux(const Mesh& mesh, int s);
  /// Normal trace on facet f at parameter t in [0,1]; single valued.
  double normal_trace(const Mesh& mesh, int f, double t) const;
};

RtFlux operator+(const RtFlux& a, const RtFlux& b);

/// Element-local polynomial representation of an RT field.
struct RtElementField {
  Vec2 center = Vec2::Zero();
  double scale = 1.0;
  int degree = 0;                    // component degree s+1
  Eigen::VectorXd cx, cy;            // component coefficients
  Eigen::VectorXd cdiv;              // divergence coefficients, degree s

  Vec2 eval(const Vec2& x) const {
    Vec2 p = (x - center) / scale;
    Eigen::VectorXd m;
    mono_values(degree, p, m);
    return Vec2(cx.dot(m), cy.dot(m));
  }
  double divergence(const Vec2& x) const {
    Vec2 p = (x - center) / scale;
    Eigen::VectorXd m;
    mono_values(std::max(degree - 1, 0), p, m);
    return cdiv.dot(m);
  }
};

class RtSpace {
 public:
  RtSpace(const Mesh& mesh, int index);

  int index() const { return index_; }
  const Mesh& mesh() const { return *mesh_; }
  int moments_per_facet() const { return index_ + 1; }
  int interior_moments_per_element() const { return index_ * (index_ + 1); }

  /// Solves the local unisolvence system of element k for the field with
  /// the given facet moments (of k's three facets, local order) and
  /// interior moments.
  RtElementField element_field(int k, const Eigen::Matrix<double, Eigen::Dynamic, 3>& fmom,
                               const Eigen::VectorXd& imom) const;
  RtElementField element_field(int k, const RtFlux& flux) const;

  /// Element fields of a whole flux, evaluated in parallel.
  std::vector<RtElementField> evaluate_all(const RtFlux& flux) const;

  /// Orthonormal scalar basis of P_{s-1}(K) underlying the interior
  /// moments: values at given physical points (rows: points, cols: basis).
  void interior_basis_values(int k, const std::vector<Vec2>& pts, Eigen::MatrixXd& vals) const;

  /// Re-extracts the stored moments from an element field (round-trip /
  /// lifting helper).
  void extract_moments(int k, const RtElementField& field,
                       Eigen::Matrix<double, Eigen::Dynamic, 3>& fmom,
                       Eigen::VectorXd& imom) const;

 private:
  const Mesh* mesh_;
  int index_;
  int local_dim_;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> dof_lu_;
  std::vector<Eigen::MatrixXd> interior_coeff_;  // orthonormalized P_{s-1} coeffs
};

/// Lifts a flux to a higher index on the same mesh: facet moments gain
/// zeros (the normal trace has degree <= s), interior moments are
/// recomputed from the evaluated field.
RtFlux lift_flux(const Mesh& mesh, const RtFlux& flux, int target_index);

}  // namespace earm
