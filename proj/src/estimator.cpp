#include "earm/estimator.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <map>

namespace earm {

namespace {

void physical_points(const Mesh& mesh, int k, const TriangleQuadrature& q,
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

std::vector<double> elementwise_objective(const FemSolution& u, const RtFlux& flux) {
  const Mesh& mesh = *u.mesh;
  RtSpace rt(mesh, flux.index);
  std::vector<RtElementField> fields = rt.evaluate_all(flux);
  const auto& q = triangle_rule(2 * std::max(u.order, flux.index + 1) + 2);
  std::vector<double> eta2(mesh.n_elements());
  parallel_for(mesh.n_elements(), [&](int k) {
    std::vector<Vec2> pts;
    std::vector<double> w;
    physical_points(mesh, k, q, pts, w);
    const Mat2& a = u.coeff->tensor(k);
    const Mat2& ainv = u.coeff->inverse(k);
    double acc = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Vec2 d = fields[k].eval(pts[i]) + a * u.gradient(k, pts[i]);
      acc += w[i] * d.dot(ainv * d);
    }
    eta2[k] = acc;
  });
  return eta2;
}

std::vector<double> elementwise_energy_error(const FemSolution& u) {
  const Mesh& mesh = *u.mesh;
  const auto& q = triangle_rule(2 * u.order + 4);
  const auto& grad_u = u.problem->exact->gradient;
  std::vector<double> err2(mesh.n_elements());
  parallel_for(mesh.n_elements(), [&](int k) {
    std::vector<Vec2> pts;
    std::vector<double> w;
    physical_points(mesh, k, q, pts, w);
    const Mat2& a = u.coeff->tensor(k);
    double acc = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Vec2 d = grad_u(pts[i]) - u.gradient(k, pts[i]);
      acc += w[i] * d.dot(a * d);
    }
    err2[k] = acc;
  });
  return err2;
}

}  // namespace

double flux_objective(const FemSolution& u, const RtFlux& flux) {
  std::vector<double> eta2 = elementwise_objective(u, flux);
  double sum = 0;
  for (double v : eta2) sum += v;
  return std::sqrt(sum);
}

EstimatorReport indicator(const FemSolution& u, const RecoveryResult& rec) {
  const Mesh& mesh = *u.mesh;
  EstimatorReport rep;
  std::vector<double> eta2 = elementwise_objective(u, rec.equilibrated.flux);
  rep.eta_elem.resize(mesh.n_elements());
  double sum = 0;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    rep.eta_elem[k] = std::sqrt(eta2[k]);
    sum += eta2[k];
  }
  rep.eta = std::sqrt(sum);

  if (u.problem->exact) {
    rep.error = energy_error(u);
    rep.effectivity = rep.error > 0 ? rep.eta / rep.error : -1.0;
  }

  const int s = rec.equilibrated.conservation_index;
  DataRules rules = data_rules(u.order);
  auto f_s = project_source(mesh, *u.problem, s, rules);
  rep.osc_elem.resize(mesh.n_elements());
  double osc2 = 0, plain2 = 0;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    std::vector<Vec2> pts;
    std::vector<double> w;
    physical_points(mesh, k, *rules.volume, pts, w);
    double local = 0;
    for (std::size_t q = 0; q < pts.size(); ++q) {
      double d = u.problem->source(pts[q]) - f_s[k].eval(pts[q]);
      local += w[q] * d * d;
    }
    plain2 += local;
    double hk = mesh.diameter(k);
    rep.osc_elem[k] = hk * std::sqrt(local);
    osc2 += hk * hk * local;
  }
  rep.osc = std::sqrt(osc2);
  rep.osc_plain = std::sqrt(plain2);
  rep.g_defect = neumann_projection_defect(mesh, *u.problem, s, rules);

  rep.max_div_residual = rec.equilibrated.max_div_residual;
  rep.max_trace_jump = rec.equilibrated.max_trace_jump;
  rep.max_neumann_defect = rec.equilibrated.max_neumann_defect;
  rep.h_max = mesh.h_max();
  rep.n_dofs = u.n_dofs();
  rep.method = method_name(u.method);
  rep.recovery = recovery_name(rec.correction.kind);
  rep.order = u.order;
  rep.rt_index = rec.rt_index;
  return rep;
}

// ---------------------------------------------------------------------------
// Constrained least-squares oracle.

RtFlux oracle_equilibrated_flux(const FemSolution& u, int s, int space_index) {
  const Mesh& mesh = *u.mesh;
  require(s >= 0, "oracle: index must be nonnegative");
  if (space_index < 0) space_index = s;
  require(space_index >= s, "oracle: space index must dominate the divergence index");
  const int sp = space_index;
  RtSpace rt(mesh, sp);
  DataRules rules = data_rules(u.order);
  const int mpf = sp + 1;
  const int ni = sp * (sp + 1);
  const int ndloc = 3 * mpf + ni;
  const int n_facet_dofs = mesh.n_facets() * mpf;
  const int n_dofs = n_facet_dofs + mesh.n_elements() * ni;
  const int n_mono = poly_dim(s);
  const int n_cons = mesh.n_elements() * n_mono;

  auto global_dof = [&](int k, int local) {
    if (local < 3 * mpf)
      return mesh.element_facets(k)[local / mpf] * mpf + (local % mpf);
    return n_facet_dofs + k * ni + (local - 3 * mpf);
  };

  // Fixed Neumann moments of the projected data g_{k-1,F}.
  std::vector<char> fixed(n_dofs, 0);
  Eigen::VectorXd fixed_val = Eigen::VectorXd::Zero(n_dofs);
  int g_ord = std::min(sp, u.order - 1);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    if (mesh.facet(f).tag != FacetTag::Neumann) continue;
    Eigen::VectorXd g = project_neumann(mesh, *u.problem, f, g_ord, rules);
    for (int j = 0; j <= sp; ++j) {
      fixed[f * mpf + j] = 1;
      fixed_val[f * mpf + j] = j <= g_ord ? g[j] : 0.0;
    }
  }
  std::vector<int> free_id(n_dofs, -1);
  int n_free = 0;
  for (int d = 0; d < n_dofs; ++d)
    if (!fixed[d]) free_id[d] = n_free++;

  std::vector<Eigen::Triplet<double>> kkt;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_free + n_cons);

  const auto& q = triangle_rule(2 * std::max(u.order, sp + 1) + 2);
  for (int k = 0; k < mesh.n_elements(); ++k) {
    // Unit-dof element fields.
    std::vector<RtElementField> unit(ndloc);
    for (int i = 0; i < ndloc; ++i) {
      Eigen::Matrix<double, Eigen::Dynamic, 3> fm = Eigen::MatrixXd::Zero(mpf, 3);
      Eigen::VectorXd im = Eigen::VectorXd::Zero(ni);
      if (i < 3 * mpf)
        fm(i % mpf, i / mpf) = 1.0;
      else
        im(i - 3 * mpf) = 1.0;
      unit[i] = rt.element_field(k, fm, im);
    }
    std::vector<Vec2> pts;
    std::vector<double> w;
    physical_points(mesh, k, q, pts, w);
    const Mat2& a = u.coeff->tensor(k);
    const Mat2& ainv = u.coeff->inverse(k);
    Eigen::MatrixXd h_loc = Eigen::MatrixXd::Zero(ndloc, ndloc);
    Eigen::VectorXd f_loc = Eigen::VectorXd::Zero(ndloc);
    for (std::size_t qq = 0; qq < pts.size(); ++qq) {
      std::vector<Vec2> vals(ndloc);
      for (int i = 0; i < ndloc; ++i) vals[i] = unit[i].eval(pts[qq]);
      Vec2 b0 = a * u.gradient(k, pts[qq]);
      for (int i = 0; i < ndloc; ++i) {
        Vec2 ai = ainv * vals[i];
        f_loc[i] += w[qq] * ai.dot(b0);
        for (int j = 0; j <= i; ++j) {
          double v = w[qq] * ai.dot(vals[j]);
          h_loc(i, j) += v;
          if (i != j) h_loc(j, i) += v;
        }
      }
    }
    // Divergence constraints against the monomials of P_s(K), with the
    // data rule on the right-hand side.
    Vec2 c = mesh.centroid(k);
    double hk = mesh.diameter(k);
    std::vector<Vec2> dpts;
    std::vector<double> dw;
    physical_points(mesh, k, *rules.volume, dpts, dw);
    Eigen::MatrixXd c_loc = Eigen::MatrixXd::Zero(n_mono, ndloc);
    Eigen::VectorXd e_loc = Eigen::VectorXd::Zero(n_mono);
    Eigen::VectorXd mv;
    for (std::size_t qq = 0; qq < dpts.size(); ++qq) {
      mono_values(s, (dpts[qq] - c) / hk, mv);
      e_loc += dw[qq] * u.problem->source(dpts[qq]) * mv;
      for (int i = 0; i < ndloc; ++i) {
        double dv = unit[i].divergence(dpts[qq]);
        if (dv != 0.0) c_loc.col(i) += dw[qq] * dv * mv;
      }
    }

    for (int i = 0; i < ndloc; ++i) {
      int gi = global_dof(k, i);
      if (free_id[gi] >= 0) {
        rhs[free_id[gi]] -= f_loc[i];
        for (int j = 0; j < ndloc; ++j) {
          int gj = global_dof(k, j);
          if (free_id[gj] >= 0)
            kkt.emplace_back(free_id[gi], free_id[gj], h_loc(i, j));
          else
            rhs[free_id[gi]] -= h_loc(i, j) * fixed_val[gj];
        }
      }
    }
    for (int row = 0; row < n_mono; ++row) {
      int grow = n_free + k * n_mono + row;
      rhs[grow] = e_loc[row];
      for (int i = 0; i < ndloc; ++i) {
        int gi = global_dof(k, i);
        if (free_id[gi] >= 0) {
          kkt.emplace_back(grow, free_id[gi], c_loc(row, i));
          kkt.emplace_back(free_id[gi], grow, c_loc(row, i));
        } else {
          rhs[grow] -= c_loc(row, i) * fixed_val[gi];
        }
      }
    }
  }

  Eigen::SparseMatrix<double> kmat(n_free + n_cons, n_free + n_cons);
  kmat.setFromTriplets(kkt.begin(), kkt.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
  solver.compute(kmat);
  require(solver.info() == Eigen::Success,
          "oracle: KKT factorization failed (inconsistent constraints?)");
  Eigen::VectorXd sol = solver.solve(rhs);
  for (int it = 0; it < 2; ++it) sol += solver.solve(rhs - kmat * sol);

  RtFlux flux(mesh, sp);
  for (int f = 0; f < mesh.n_facets(); ++f)
    for (int j = 0; j <= sp; ++j) {
      int d = f * mpf + j;
      flux.facet_moments[f][j] = fixed[d] ? fixed_val[d] : sol[free_id[d]];
    }
  for (int k = 0; k < mesh.n_elements(); ++k)
    for (int a = 0; a < ni; ++a)
      flux.interior_moments[k][a] = sol[free_id[n_facet_dofs + k * ni + a]];

  // KKT feasibility: the divergence moments must match the data.
  double feas = check_conservation(u, flux, s);
  require(feas <= 1e-8, "oracle: constraint residual " + std::to_string(feas) +
                            " (inconsistent f/g data?)");
  return flux;
}

ReliabilityResult reliability_check(const EstimatorReport& report, double c_cap) {
  ReliabilityResult res;
  res.applicable = report.method == "cg" && report.error >= 0;
  res.error = report.error;
  res.eta = report.eta;
  res.osc = report.osc_plain;
  double gap = report.error * report.error - report.eta * report.eta;
  res.minimal_c = (gap <= 0 || res.osc <= 0) ? 0.0 : gap / (res.osc * res.osc);
  double bound2 = report.eta * report.eta + c_cap * res.osc * res.osc;
  res.pass = report.error * report.error <= bound2 * (1.0 + 1e-12) + 1e-28;
  return res;
}

bool effectivity_drift_exceeds(const std::vector<EfficiencyRow>& rows, double factor) {
  std::map<int, std::pair<double, double>> per_level;  // level -> (min, max)
  for (const auto& row : rows) {
    auto it = per_level.find(row.level);
    if (it == per_level.end())
      per_level[row.level] = {row.effectivity, row.effectivity};
    else {
      it->second.first = std::min(it->second.first, row.effectivity);
      it->second.second = std::max(it->second.second, row.effectivity);
    }
  }
  for (const auto& [level, range] : per_level)
    if (range.first > 0 && range.second > factor * range.first) return true;
  return false;
}

std::vector<EfficiencyRow> efficiency_study(const std::string& benchmark, Method method,
                                            int order, Recovery recovery,
                                            const std::vector<double>& kappas, int levels,
                                            int base_level) {
  std::vector<EfficiencyRow> rows;
  for (double kappa : kappas) {
    BenchmarkCase bench = make_benchmark(benchmark, kappa);
    for (int level = 0; level < levels; ++level) {
      Mesh mesh = bench.mesh_for_level(base_level + level);
      FemSolution u;
      switch (method) {
        case Method::CG: u = solve_cg(mesh, bench.problem, order); break;
        case Method::NC: u = solve_nc(mesh, bench.problem, order); break;
        case Method::DG: u = solve_dg(mesh, bench.problem, order); break;
      }
      RecoveryResult rec = recover(u, recovery);
      EstimatorReport rep = indicator(u, rec);

      EfficiencyRow row;
      row.level = level;
      row.h_max = mesh.h_max();
      row.kappa = kappa;
      row.error = rep.error;
      row.eta = rep.eta;
      row.effectivity = rep.effectivity;

      // Local ratios eta_K / ||A^(1/2) grad e||_{omega_K} over vertex
      // neighborhoods of K.
      std::vector<double> err2 = elementwise_energy_error(u);
      for (int k = 0; k < mesh.n_elements(); ++k) {
        double local = 0;
        for (int v : mesh.triangle(k))
          for (int kk : mesh.star_patch(v).elements) local += err2[kk];
        // Patches overlap; that only makes the denominator larger.
        if (local > 1e-28)
          row.max_local_ratio =
              std::max(row.max_local_ratio, rep.eta_elem[k] / std::sqrt(local));
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace earm
