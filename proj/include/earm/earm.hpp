// Steps 2-3 of the recovery algorithm: the averaging residual operator and
// the correction constructions producing an equilibrated flux.

#pragma once

#include "earm/averaging.hpp"

namespace earm {

/// r_{s,K}(v) = (f - div sigma_tilde, v)_K evaluated with the same
/// quadrature as the discrete load, so the compatibility and conservation
/// identities hold to roundoff.
class ResidualOperator {
 public:
  ResidualOperator(const FemSolution& u, const RtSpace& rt, const RtFlux& sigma_tilde);

  /// r over a single element against an arbitrary integrand factor.
  double apply(int elem, const std::function<double(const Vec2&)>& v) const;
  double apply(int elem, const LocalPoly& v) const;

  const Mesh& mesh() const { return *mesh_; }

 private:
  const Mesh* mesh_;
  std::vector<std::vector<Vec2>> points_;
  std::vector<std::vector<double>> weights_;   // includes (f - div sigma)(x_q)
};

/// Residual operator of the recovery pipeline, evaluated on the index-k
/// averaging flux: its facet trace equals the index k-1 one pointwise, but
/// the interior moments reach P_{k-1}^2, which is what makes r vanish on
/// the full degree-k trial space. Divergence moments against P_{k-1}(K)
/// coincide with those of the index k-1 flux, so the conservation
/// identities are unchanged.
ResidualOperator make_residual(const FemSolution& u);

enum class Recovery { Dg, NcFacet, NcRt0, NcFs2, CgOrth, CgPou };
std::string recovery_name(Recovery r);
Recovery recovery_from_name(const std::string& name);

struct CorrectionFlux {
  Recovery kind = Recovery::Dg;
  RtFlux flux;
};

/// Explicit DG correction from the penalty and delta terms of the scheme.
CorrectionFlux dg_correction(const FemSolution& u, const RtSpace& rt);

/// NC odd order, facet construction at s = k-1:
/// int_F sigma.n L_i = ||L_i||^2 r(phi_{i,F}^-).
CorrectionFlux nc_facet_correction(const FemSolution& u, const ResidualOperator& r);

/// NC odd order, lowest-order construction: int_F sigma.n = |F| r(phi_F^-).
CorrectionFlux nc_rt0_correction(const FemSolution& u, const ResidualOperator& r);

/// Fortin-Soulie order 2: int_F sigma.n = 6 r(phi_F^-) against the hat
/// product.
CorrectionFlux nc_fs2_correction(const FemSolution& u, const ResidualOperator& r);

/// Conforming method, global solve in the quotient of DG(T_h,s) by the
/// continuous functions vanishing on Gamma_D; the correction is the
/// orthogonal-complement mapping S applied to the solution. The facet
/// integrals could be replaced by an s-point Gauss-Lobatto quadrature to
/// decouple the system into vertex-local problems; this localized variant
/// is not implemented.
CorrectionFlux cg_orth_correction(const FemSolution& u, int s, const ResidualOperator& r);

/// Conforming method, vertex-patch localization (s = 0) with the closed-form
/// patch solves and the normalized null-component projection.
CorrectionFlux cg_pou_correction(const FemSolution& u, const ResidualOperator& r);

/// Closed-form solution of the Case-1 patch system M x = r with the weight
/// row (a_1..a_n): returns x with sum(a_i x_i) = 0; r_head holds
/// r_1..r_{n-1} (the last component is determined by compatibility).
Eigen::VectorXd patch_case1_solution(const Eigen::VectorXd& a, const Eigen::VectorXd& r_head);

/// sign_z(F_{i,z}) along a star patch (+1 when n_F is oriented clockwise
/// around z).
std::vector<double> patch_signs(const Mesh& mesh, int z);

struct EquilibratedFlux {
  RtFlux flux;                 // index max(s, k-1) for the default pipeline
  int conservation_index = 0;  // the s of Pi_s(div) = f_s
  double max_div_residual = 0;     // scaled, see check_conservation
  double max_trace_jump = 0;       // scaled, interior facets
  double max_neumann_defect = 0;   // |moments - g moments|, absolute
};

/// Moment-wise sum sigma_tilde + correction (the correction is lifted when
/// its index is lower); records the conservation / conformity diagnostics.
EquilibratedFlux assemble_equilibrated(const FemSolution& u, const RtFlux& sigma_tilde,
                                       const CorrectionFlux& correction);

/// Max over elements K and an orthonormal basis v of P_s(K) of
/// |(div sigma - f, v)_K| / (tiny + ||f||_K + ||sigma||_{H(div),K}).
double check_conservation(const FemSolution& u, const RtFlux& flux, int s);

/// Max over interior facets of the normal-trace jump of the evaluated
/// field at quadrature points, scaled by (1 + max |sigma.n|).
double check_trace_jump(const FemSolution& u, const RtFlux& flux);

/// Defect of the Neumann facet moments against the projected data.
double check_neumann_trace(const FemSolution& u, const RtFlux& flux);

struct RecoveryResult {
  RtFlux sigma_tilde;
  CorrectionFlux correction;
  EquilibratedFlux equilibrated;
  int rt_index = 0;  // s of the correction
};

/// Full pipeline: averaging flux, correction of the requested kind, sum.
/// rt_index = -1 picks the construction's default. CgPou with s > 0 falls
/// back to CgOrth (the localized construction is the s = 0 one).
RecoveryResult recover(const FemSolution& u, Recovery kind, int rt_index = -1);

}  // namespace earm
