#include "earm/fem.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>

namespace earm {

DataRules data_rules(int order) {
  return {&triangle_rule(2 * order + 2), &edge_rule(2 * order + 1)};
}

double FemSolution::value(int elem, const Vec2& x) const {
  const auto& dofs_k = space->cell_dofs(elem);
  const auto& basis = space->cell_basis(elem);
  double v = 0;
  for (std::size_t i = 0; i < dofs_k.size(); ++i) v += dofs[dofs_k[i]] * basis[i].eval(x);
  return v;
}

Vec2 FemSolution::gradient(int elem, const Vec2& x) const {
  const auto& dofs_k = space->cell_dofs(elem);
  const auto& basis = space->cell_basis(elem);
  Vec2 g = Vec2::Zero();
  for (std::size_t i = 0; i < dofs_k.size(); ++i) g += dofs[dofs_k[i]] * basis[i].grad(x);
  return g;
}

double data_jump(const FemSolution& u, int facet, double t) {
  const Facet& fc = u.mesh->facet(facet);
  Vec2 x = u.mesh->facet_point(facet, t);
  double minus = u.value(fc.minus, x);
  if (!fc.boundary()) return minus - u.value(fc.plus, x);
  if (fc.tag == FacetTag::Dirichlet) return minus - u.problem->dirichlet(x);
  return minus;
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

struct System {
  Triplets triplets;
  Eigen::VectorXd rhs;
};

void quadrature_points(const Mesh& mesh, int k, const TriangleQuadrature& q,
                       std::vector<Vec2>& pts, std::vector<double>& w) {
  auto corners = mesh.corners(k);
  pts.resize(q.points.size());
  w.resize(q.points.size());
  for (std::size_t i = 0; i < q.points.size(); ++i) {
    Vec2 ref = q.points[i];
    pts[i] = corners.col(0) + ref.x() * (corners.col(1) - corners.col(0)) +
             ref.y() * (corners.col(2) - corners.col(0));
    w[i] = q.weights[i] * 2.0 * mesh.area(k);
  }
}

System assemble(const FeSpace& space, const DiffusionProblem& problem,
                const Coefficient& coeff, double gamma, double delta) {
  const Mesh& mesh = space.mesh();
  const int order = std::max(space.order(), 1);
  DataRules rules = data_rules(order);
  System sys;
  sys.rhs = Eigen::VectorXd::Zero(space.n_dofs());

  std::vector<Vec2> pts;
  std::vector<double> w;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    const auto& dofs = space.cell_dofs(k);
    const auto& basis = space.cell_basis(k);
    const int nb = static_cast<int>(basis.size());
    quadrature_points(mesh, k, *rules.volume, pts, w);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::VectorXd load = Eigen::VectorXd::Zero(nb);
    const Mat2& a = coeff.tensor(k);
    for (std::size_t q = 0; q < pts.size(); ++q) {
      double fq = problem.source(pts[q]);
      for (int i = 0; i < nb; ++i) {
        Vec2 gi = basis[i].grad(pts[q]);
        load[i] += w[q] * fq * basis[i].eval(pts[q]);
        for (int j = 0; j < nb; ++j)
          local(i, j) += w[q] * gi.dot(a * basis[j].grad(pts[q]));
      }
    }
    for (int i = 0; i < nb; ++i) {
      sys.rhs[dofs[i]] += load[i];
      for (int j = 0; j < nb; ++j)
        if (local(i, j) != 0.0) sys.triplets.emplace_back(dofs[i], dofs[j], local(i, j));
    }
  }

  // Neumann load for every method, with g replaced by its facet-wise
  // projection g_{k-1,F} (the identities behind the recovery assume it).
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facet(f);
    if (fc.tag != FacetTag::Neumann) continue;
    int k = fc.minus;
    const auto& dofs = space.cell_dofs(k);
    const auto& basis = space.cell_basis(k);
    Eigen::VectorXd gm = project_neumann(mesh, problem, f, order - 1, rules);
    for (std::size_t q = 0; q < rules.edge->points.size(); ++q) {
      double t = rules.edge->points[q];
      Vec2 x = mesh.facet_point(f, t);
      double g_proj = 0;
      for (int j = 0; j < order; ++j)
        g_proj += gm[j] * legendre(j, 2.0 * t - 1.0) / legendre_norm2(j, fc.length);
      double wq = rules.edge->weights[q] * fc.length * g_proj;
      for (std::size_t i = 0; i < dofs.size(); ++i)
        sys.rhs[dofs[i]] -= wq * basis[i].eval(x);
    }
  }

  if (space.method() != Method::DG) return sys;

  // Interior-penalty facet terms with the weighted average and the data
  // jump J(u) = [[u]] - u_D on Dirichlet facets.
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facet(f);
    if (fc.tag == FacetTag::Neumann) continue;
    AlphaWeights aw = alpha_weights(mesh, coeff, f);
    double penalty = gamma * aw.alpha_min / fc.length;

    std::vector<int> elems = {fc.minus};
    std::vector<double> jump_sign = {1.0};
    std::vector<double> avg_weight = {aw.w_minus};
    if (!fc.boundary()) {
      elems.push_back(fc.plus);
      jump_sign.push_back(-1.0);
      avg_weight.push_back(aw.w_plus);
    }

    std::vector<const std::vector<int>*> dofs;
    std::vector<const std::vector<LocalPoly>*> basis;
    for (int k : elems) {
      dofs.push_back(&space.cell_dofs(k));
      basis.push_back(&space.cell_basis(k));
    }

    for (std::size_t q = 0; q < rules.edge->points.size(); ++q) {
      double t = rules.edge->points[q];
      Vec2 x = mesh.facet_point(f, t);
      double wq = rules.edge->weights[q] * fc.length;
      // Traces: jump contribution and weighted normal flux per dof.
      std::vector<std::pair<int, double>> jmp, avg;
      for (std::size_t s = 0; s < elems.size(); ++s) {
        const Mat2& a = coeff.tensor(elems[s]);
        for (std::size_t i = 0; i < dofs[s]->size(); ++i) {
          double v = (*basis[s])[i].eval(x);
          Vec2 g = (*basis[s])[i].grad(x);
          jmp.emplace_back((*dofs[s])[i], jump_sign[s] * v);
          avg.emplace_back((*dofs[s])[i], avg_weight[s] * (a * g).dot(fc.normal));
        }
      }
      for (const auto& [i, ji] : jmp) {
        for (const auto& [j, jj] : jmp)
          sys.triplets.emplace_back(i, j, wq * penalty * ji * jj);
        for (const auto& [j, aj] : avg)
          sys.triplets.emplace_back(i, j, -wq * ji * aj);
      }
      for (const auto& [i, ai] : avg)
        for (const auto& [j, jj] : jmp)
          sys.triplets.emplace_back(i, j, wq * delta * ai * jj);
      if (fc.tag == FacetTag::Dirichlet) {
        double ud = problem.dirichlet(x);
        for (const auto& [i, ji] : jmp) sys.rhs[i] += wq * penalty * ud * ji;
        for (const auto& [i, ai] : avg) sys.rhs[i] += wq * delta * ai * ud;
      }
    }
  }
  return sys;
}

Eigen::VectorXd solve_constrained(const FeSpace& space, System& sys, bool symmetric) {
  const int n = space.n_dofs();
  std::vector<int> free_index(n, -1);
  int n_free = 0;
  for (int i = 0; i < n; ++i)
    if (!space.dof_fixed(i)) free_index[i] = n_free++;

  Eigen::VectorXd full = space.fixed_values();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_free);
  for (int i = 0; i < n; ++i)
    if (free_index[i] >= 0) rhs[free_index[i]] = sys.rhs[i];

  Triplets reduced;
  reduced.reserve(sys.triplets.size());
  for (const auto& t : sys.triplets) {
    int ri = free_index[t.row()], cj = free_index[t.col()];
    if (ri >= 0 && cj >= 0)
      reduced.emplace_back(ri, cj, t.value());
    else if (ri >= 0)
      rhs[ri] -= t.value() * full[t.col()];
  }
  Eigen::SparseMatrix<double> a(n_free, n_free);
  a.setFromTriplets(reduced.begin(), reduced.end());

  Eigen::VectorXd u_free;
  if (symmetric) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
    require(solver.info() == Eigen::Success,
            "solve: factorization failed (system not SPD; for DG increase gamma)");
    u_free = solver.solve(rhs);
    // Guard against an indefinite matrix slipping through LDLT.
    Eigen::VectorXd d = solver.vectorD();
    require(d.minCoeff() > 0,
            "solve: system matrix is not positive definite (for DG increase gamma)");
    // Iterative refinement: the conservation identities hold to the size of
    // the Galerkin residual, which a factor-and-solve leaves at
    // cond(A) * eps without it.
    for (int it = 0; it < 2; ++it) u_free += solver.solve(rhs - a * u_free);
  } else {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
    solver.compute(a);
    require(solver.info() == Eigen::Success, "solve: sparse LU factorization failed");
    u_free = solver.solve(rhs);
    for (int it = 0; it < 2; ++it) u_free += solver.solve(rhs - a * u_free);
  }
  for (int i = 0; i < n; ++i)
    if (free_index[i] >= 0) full[i] = u_free[free_index[i]];
  return full;
}

FemSolution finish(const Mesh& mesh, const DiffusionProblem& problem, Method method,
                   int order, std::shared_ptr<const FeSpace> space, double gamma,
                   double delta) {
  FemSolution sol;
  sol.method = method;
  sol.order = order;
  sol.mesh = &mesh;
  sol.problem = &problem;
  sol.coeff = std::make_shared<Coefficient>(mesh, problem);
  sol.space = std::move(space);
  sol.gamma = gamma;
  sol.delta = delta;
  System sys = assemble(*sol.space, problem, *sol.coeff, gamma, delta);
  bool symmetric = method != Method::DG || delta == -1.0;
  sol.dofs = solve_constrained(*sol.space, sys, symmetric);
  return sol;
}

}  // namespace

FemSolution solve_cg(const Mesh& mesh, const DiffusionProblem& problem, int order) {
  auto space = std::make_shared<CgSpace>(mesh, order, problem.dirichlet);
  return finish(mesh, problem, Method::CG, order, space, 0.0, -1.0);
}

FemSolution solve_nc(const Mesh& mesh, const DiffusionProblem& problem, int order) {
  auto space = make_space(mesh, Method::NC, order, problem.dirichlet);
  return finish(mesh, problem, Method::NC, order, space, 0.0, -1.0);
}

FemSolution solve_dg(const Mesh& mesh, const DiffusionProblem& problem, int order,
                     double gamma, double delta) {
  require(order >= 1, "dg: order must be >= 1");
  require(delta == -1.0 || delta == 0.0 || delta == 1.0, "dg: delta must be -1, 0 or 1");
  if (gamma <= 0) gamma = 10.0 * (order + 1) * (order + 1);
  auto space = std::make_shared<DgSpace>(mesh, order);
  return finish(mesh, problem, Method::DG, order, space, gamma, delta);
}

std::vector<LocalPoly> project_source(const Mesh& mesh, const DiffusionProblem& problem,
                                      int s, const DataRules& rules) {
  std::vector<LocalPoly> out(mesh.n_elements());
  parallel_for(mesh.n_elements(), [&](int k) {
    int n = poly_dim(s);
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    Vec2 c = mesh.centroid(k);
    double h = mesh.diameter(k);
    std::vector<Vec2> pts;
    std::vector<double> w;
    quadrature_points(mesh, k, *rules.volume, pts, w);
    Eigen::VectorXd m;
    for (std::size_t q = 0; q < pts.size(); ++q) {
      mono_values(s, (pts[q] - c) / h, m);
      mass += w[q] * m * m.transpose();
      b += w[q] * problem.source(pts[q]) * m;
    }
    out[k] = LocalPoly{c, h, s, mass.ldlt().solve(b)};
  });
  return out;
}

Eigen::VectorXd project_neumann(const Mesh& mesh, const DiffusionProblem& problem,
                                int facet, int s, const DataRules& rules) {
  const Facet& fc = mesh.facet(facet);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(s + 1);
  for (std::size_t q = 0; q < rules.edge->points.size(); ++q) {
    double t = rules.edge->points[q];
    double wq = rules.edge->weights[q] * fc.length * problem.neumann(mesh.facet_point(facet, t));
    for (int j = 0; j <= s; ++j) m[j] += wq * legendre(j, 2.0 * t - 1.0);
  }
  return m;
}

double neumann_projection_defect(const Mesh& mesh, const DiffusionProblem& problem,
                                 int s, const DataRules& rules) {
  double defect2 = 0;
  const auto& eq = edge_rule(rules.edge->degree + 2 * s + 2);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facet(f);
    if (fc.tag != FacetTag::Neumann) continue;
    Eigen::VectorXd mom = project_neumann(mesh, problem, f, s, rules);
    for (std::size_t q = 0; q < eq.points.size(); ++q) {
      double t = eq.points[q];
      double proj = 0;
      for (int j = 0; j <= s; ++j)
        proj += mom[j] * legendre(j, 2.0 * t - 1.0) / legendre_norm2(j, fc.length);
      double diff = problem.neumann(mesh.facet_point(f, t)) - proj;
      defect2 += eq.weights[q] * fc.length * diff * diff;
    }
  }
  return std::sqrt(defect2);
}

Eigen::SparseMatrix<double> assembled_matrix(const FemSolution& u) {
  System sys = assemble(*u.space, *u.problem, *u.coeff, u.gamma, u.delta);
  Eigen::SparseMatrix<double> a(u.n_dofs(), u.n_dofs());
  a.setFromTriplets(sys.triplets.begin(), sys.triplets.end());
  return a;
}

double galerkin_residual(const FemSolution& u) {
  System sys = assemble(*u.space, *u.problem, *u.coeff, u.gamma, u.delta);
  Eigen::SparseMatrix<double> a(u.n_dofs(), u.n_dofs());
  a.setFromTriplets(sys.triplets.begin(), sys.triplets.end());
  Eigen::VectorXd res = sys.rhs - a * u.dofs;
  double worst = 0;
  for (int i = 0; i < u.n_dofs(); ++i)
    if (!u.space->dof_fixed(i)) worst = std::max(worst, std::abs(res[i]));
  return worst;
}

double energy_error(const FemSolution& u) {
  require(u.problem->exact.has_value(), "energy_error: no exact solution");
  const auto& grad_u = u.problem->exact->gradient;
  const auto& q = triangle_rule(2 * u.order + 4);
  double err2 = 0;
  std::vector<Vec2> pts;
  std::vector<double> w;
  for (int k = 0; k < u.mesh->n_elements(); ++k) {
    quadrature_points(*u.mesh, k, q, pts, w);
    const Mat2& a = u.coeff->tensor(k);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Vec2 d = grad_u(pts[i]) - u.gradient(k, pts[i]);
      err2 += w[i] * d.dot(a * d);
    }
  }
  return std::sqrt(err2);
}

double energy_norm(const FemSolution& u) {
  const auto& q = triangle_rule(2 * u.order + 2);
  double nrm2 = 0;
  std::vector<Vec2> pts;
  std::vector<double> w;
  for (int k = 0; k < u.mesh->n_elements(); ++k) {
    quadrature_points(*u.mesh, k, q, pts, w);
    const Mat2& a = u.coeff->tensor(k);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Vec2 g = u.gradient(k, pts[i]);
      nrm2 += w[i] * g.dot(a * g);
    }
  }
  return std::sqrt(nrm2);
}

}  // namespace earm
