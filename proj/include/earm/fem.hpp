// Assembly and direct solves for the CG / NC / DG discretizations, plus the
// elementwise L2 projections of the data.

#pragma once

#include "earm/quadrature.hpp"
#include "earm/spaces.hpp"

#include <Eigen/SparseCore>

#include <memory>

namespace earm {

/// Quadrature used for every integral involving the (possibly
/// non-polynomial) data f and g at discretization order k. The residual
/// operator and the conservation checks reuse exactly these rules, so the
/// equilibration identities telescope to roundoff.
struct DataRules {
  const TriangleQuadrature* volume;
  const EdgeQuadrature* edge;
};
DataRules data_rules(int order);

struct FemSolution {
  Method method = Method::CG;
  int order = 1;
  const Mesh* mesh = nullptr;
  const DiffusionProblem* problem = nullptr;
  std::shared_ptr<const Coefficient> coeff;
  std::shared_ptr<const FeSpace> space;
  Eigen::VectorXd dofs;  // full vector, fixed entries filled with data
  double gamma = 0.0;    // DG penalty actually used
  double delta = -1.0;   // DG symmetry parameter

  int n_dofs() const { return space->n_dofs(); }
  double value(int elem, const Vec2& x) const;
  Vec2 gradient(int elem, const Vec2& x) const;
};

FemSolution solve_cg(const Mesh& mesh, const DiffusionProblem& problem, int order);
FemSolution solve_nc(const Mesh& mesh, const DiffusionProblem& problem, int order);
/// gamma <= 0 picks the default 10 (k+1)^2; delta in {-1, 0, 1}.
FemSolution solve_dg(const Mesh& mesh, const DiffusionProblem& problem, int order,
                     double gamma = 0.0, double delta = -1.0);

/// Elementwise L2 projection of the source onto P_s.
std::vector<LocalPoly> project_source(const Mesh& mesh, const DiffusionProblem& problem,
                                      int s, const DataRules& rules);

/// Legendre moments of g on one facet: m_j = integral of g L_{j,F} ds,
/// j = 0..s (the projection g_{s,F} in moment form).
Eigen::VectorXd project_neumann(const Mesh& mesh, const DiffusionProblem& problem,
                                int facet, int s, const DataRules& rules);

/// L2(Gamma_N) norm of g minus its facet-wise projection of order s.
double neumann_projection_defect(const Mesh& mesh, const DiffusionProblem& problem,
                                 int s, const DataRules& rules);

/// Max over free test dofs of |(f,v) - <g,v> - a(u_h,v)| (the assembled
/// residual), for verifying Galerkin orthogonality.
double galerkin_residual(const FemSolution& u);

/// The assembled system matrix of the solution's discretization (all dofs,
/// constraints not eliminated). Diagnostic: symmetry checks, spectra.
Eigen::SparseMatrix<double> assembled_matrix(const FemSolution& u);

/// Broken energy error ||A^(1/2) grad(u - u_h)|| against the exact solution.
double energy_error(const FemSolution& u);

/// Broken energy norm of the discrete solution itself.
double energy_norm(const FemSolution& u);

/// The data jump J(u) on a facet at parameter t: [[u]] on interior facets,
/// u^- - u_D on Dirichlet facets (zero for the exact solution), u^- on
/// Neumann facets.
double data_jump(const FemSolution& u, int facet, double t);

}  // namespace earm
