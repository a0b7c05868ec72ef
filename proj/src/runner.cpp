#include "earm/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

namespace earm {

void RunConfig::validate() const {
  make_benchmark(problem, jump);  // throws on unknown name
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  switch (recovery) {
    case Recovery::Dg:
      if (method != Method::DG) fail("recovery dg requires method dg");
      if (rt_index > order) fail("recovery dg requires rt-index <= order");
      break;
    case Recovery::NcFacet:
    case Recovery::NcRt0:
      if (method != Method::NC || order % 2 == 0)
        fail("recovery " + recovery_name(recovery) + " requires method nc with odd order");
      break;
    case Recovery::NcFs2:
      if (method != Method::NC || order != 2) fail("recovery nc-fs2 requires method nc, order 2");
      break;
    case Recovery::CgOrth:
    case Recovery::CgPou:
      if (method != Method::CG)
        fail("recovery " + recovery_name(recovery) + " requires method cg");
      if (rt_index > order - 1) fail("cg recovery requires rt-index <= order-1");
      break;
  }
  if (method == Method::NC && order % 2 == 0 && order != 2)
    fail("method nc supports odd orders and order 2 only");
  if (order < 1) fail("order must be >= 1");
  if (theta <= 0 || theta > 1) fail("theta must lie in (0,1]");
  if (levels < 1) fail("levels must be >= 1");
  if (delta != -1.0 && delta != 0.0 && delta != 1.0) fail("delta must be -1, 0 or 1");
}

std::vector<int> dorfler_mark(const std::vector<double>& eta_elem, double theta) {
  double total = 0;
  for (double e : eta_elem) total += e * e;
  std::vector<int> ids(eta_elem.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    double ea = eta_elem[a] * eta_elem[a], eb = eta_elem[b] * eta_elem[b];
    if (ea != eb) return ea > eb;
    return a < b;
  });
  std::vector<int> marked;
  double acc = 0, target = theta * theta * total;
  for (int id : ids) {
    if (acc >= target && !marked.empty()) break;
    marked.push_back(id);
    acc += eta_elem[id] * eta_elem[id];
    if (acc >= target) break;
  }
  return marked;
}

namespace {

FemSolution solve_for(const RunConfig& config, const Mesh& mesh,
                      const DiffusionProblem& problem) {
  switch (config.method) {
    case Method::CG: return solve_cg(mesh, problem, config.order);
    case Method::NC: return solve_nc(mesh, problem, config.order);
    case Method::DG:
      return solve_dg(mesh, problem, config.order, config.gamma, config.delta);
  }
  throw std::logic_error("bad method");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<EstimatorReport>& reports) {
  out << "level,h_max,ndof,kappa,method,recovery,s,error,eta,effectivity,osc,"
         "max_div_residual,max_trace_jump\n";
  for (const auto& r : reports)
    out << r.level << ',' << fmt(r.h_max) << ',' << r.n_dofs << ',' << fmt(r.kappa) << ','
        << r.method << ',' << r.recovery << ',' << r.rt_index << ',' << fmt(r.error) << ','
        << fmt(r.eta) << ',' << fmt(r.effectivity) << ',' << fmt(r.osc) << ','
        << fmt(r.max_div_residual) << ',' << fmt(r.max_trace_jump) << '\n';
}

std::vector<EstimatorReport> run(const RunConfig& config) {
  config.validate();
  BenchmarkCase bench = make_benchmark(config.problem, config.jump);
  Mesh mesh = bench.mesh_for_level(0);
  std::vector<EstimatorReport> reports;

  bool write_out = !config.out_dir.empty();
  if (write_out) std::filesystem::create_directories(config.out_dir);

  for (int level = 0; level < config.levels; ++level) {
    FemSolution u = solve_for(config, mesh, bench.problem);
    RecoveryResult rec = recover(u, config.recovery, config.rt_index);
    EstimatorReport rep = indicator(u, rec);
    rep.level = level;
    rep.kappa = config.jump;
    if (write_out)
      mesh.write_text_file(config.out_dir + "/level_" + std::to_string(level) + ".mesh");
    reports.push_back(std::move(rep));

    if (level + 1 < config.levels) {
      std::vector<int> marked = config.adaptive
                                    ? dorfler_mark(reports.back().eta_elem, config.theta)
                                    : mesh.all_elements();
      mesh = mesh.refine(marked);
    }
  }

  if (write_out) {
    std::ofstream csv(config.out_dir + "/report.csv");
    write_csv(csv, reports);
  }
  return reports;
}

// ---------------------------------------------------------------------------
// verify: invariant suite with a margin table.

namespace {

struct CheckRow {
  std::string name;
  double value;
  double threshold;
  bool pass() const { return value <= threshold; }
};

Mesh criss_cross() {
  std::vector<Vec2> v = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  std::vector<std::array<int, 3>> t = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  std::vector<BoundarySpec> b = {{0, 1, FacetTag::Dirichlet},
                                 {1, 2, FacetTag::Dirichlet},
                                 {2, 3, FacetTag::Dirichlet},
                                 {3, 0, FacetTag::Dirichlet}};
  return Mesh::build(v, t, b);
}

double polygon_identity_defect(const Mesh& mesh) {
  double worst = 0;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    Vec2 sum = Vec2::Zero();
    double scale = 0;
    for (int lf = 0; lf < 3; ++lf) {
      int f = mesh.element_facets(k)[lf];
      const Facet& fc = mesh.facet(f);
      sum += mesh.sign(k, f) * fc.length * fc.normal;
      scale += fc.length;
    }
    worst = std::max(worst, sum.norm() / scale);
  }
  return worst;
}

}  // namespace

int verify(double jump, bool flip_sign, std::ostream& out) {
  std::vector<CheckRow> rows;
  auto add = [&rows](const std::string& name, double value, double threshold) {
    rows.push_back({name, value, threshold});
  };

  // Fixture meshes: the criss-cross square and a jittered mixed-boundary
  // square (Neumann on x = 1).
  auto mixed_tag = [](const Vec2& mid) {
    return mid.x() > 1.0 - 1e-12 ? FacetTag::Neumann : FacetTag::Dirichlet;
  };
  Mesh cross = criss_cross();
  Mesh jit = jittered_square(8, 7, mixed_tag);
  if (flip_sign) jit.debug_flip_sign(0, 0);

  add("mesh/closed-polygon identity (criss-cross)", polygon_identity_defect(cross), 1e-13);
  add("mesh/closed-polygon identity (jittered)", polygon_identity_defect(jit), 1e-13);

  // Sign convention: minus side carries +1.
  {
    double worst = 0;
    for (int f = 0; f < jit.n_facets(); ++f) {
      const Facet& fc = jit.facet(f);
      worst = std::max(worst, std::abs(jit.sign(fc.minus, f) - 1.0));
      if (!fc.boundary()) worst = std::max(worst, std::abs(jit.sign(fc.plus, f) + 1.0));
    }
    add("mesh/facet sign convention", worst, 0.0);
  }

  // Patch ordering round trip.
  {
    double worst = 0;
    for (int z = 0; z < jit.n_vertices(); ++z) {
      const auto& p = jit.star_patch(z);
      std::vector<int> seen;
      for (int i = 0; i < p.n_elements(); ++i) {
        int f = p.facets[i];
        const Facet& fc = jit.facet(f);
        int prev = i == 0 ? -1 : p.elements[i - 1];
        bool ok = (fc.minus == p.elements[i] || fc.plus == p.elements[i]);
        if (i > 0) ok = ok && (fc.minus == prev || fc.plus == prev);
        if (!ok) worst = 1;
        seen.push_back(p.elements[i]);
      }
      std::sort(seen.begin(), seen.end());
      if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) worst = 1;
    }
    add("mesh/patch adjacency round trip", worst, 0.0);
  }

  // Refinement area conservation.
  {
    Mesh fine = jit.refine_uniform();
    add("mesh/refinement area conservation",
        std::abs(fine.total_area() - jit.total_area()) / jit.total_area(), 1e-12);
  }

  // Equilibration of every recovery on the checkerboard benchmark.
  BenchmarkCase cb = make_benchmark("checkerboard", jump);
  struct Config {
    Method method;
    int order;
    Recovery recovery;
  };
  std::vector<Config> configs = {
      {Method::DG, 1, Recovery::Dg},        {Method::NC, 1, Recovery::NcFacet},
      {Method::NC, 3, Recovery::NcFacet},   {Method::NC, 3, Recovery::NcRt0},
      {Method::NC, 2, Recovery::NcFs2},     {Method::CG, 2, Recovery::CgOrth},
      {Method::CG, 1, Recovery::CgPou},
  };
  for (const auto& cfg : configs) {
    Mesh mesh_for = cb.mesh_for_level(1);
    if (flip_sign) mesh_for.debug_flip_sign(0, 0);
    FemSolution u;
    switch (cfg.method) {
      case Method::CG: u = solve_cg(mesh_for, cb.problem, cfg.order); break;
      case Method::NC: u = solve_nc(mesh_for, cb.problem, cfg.order); break;
      case Method::DG: u = solve_dg(mesh_for, cb.problem, cfg.order); break;
    }
    RecoveryResult rec = recover(u, cfg.recovery);
    std::string tag = method_name(cfg.method) + std::to_string(cfg.order) + "/" +
                      recovery_name(cfg.recovery);
    add("equilibration " + tag, rec.equilibrated.max_div_residual, 1e-10);
    add("trace continuity " + tag, rec.equilibrated.max_trace_jump, 1e-11);
    add("neumann trace " + tag, rec.equilibrated.max_neumann_defect, 1e-10);
  }

  // Compatibility r(v) = 0 over trial bases (CG and NC).
  {
    BenchmarkCase smooth = make_benchmark("smooth");
    Mesh m = smooth.mesh_for_level(2);
    for (Method method : {Method::CG, Method::NC}) {
      FemSolution u = method == Method::CG ? solve_cg(m, smooth.problem, 2)
                                           : solve_nc(m, smooth.problem, 3);
      ResidualOperator r = make_residual(u);
      double scale = 0;
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(u.n_dofs());
      for (int k = 0; k < m.n_elements(); ++k) {
        scale = std::max(scale, std::abs(r.apply(k, [](const Vec2&) { return 1.0; })));
        const auto& dofs = u.space->cell_dofs(k);
        for (std::size_t i = 0; i < dofs.size(); ++i)
          acc[dofs[i]] += r.apply(k, u.space->cell_basis(k)[i]);
      }
      double worst = 0;
      for (int dof = 0; dof < u.n_dofs(); ++dof)
        if (!u.space->dof_fixed(dof)) worst = std::max(worst, std::abs(acc[dof]));
      add("compatibility r(v)=0 (" + method_name(method) + ")", worst / (1.0 + scale), 1e-10);
    }
  }

  // Appendix-A closed form against a dense least-squares solve.
  {
    SplitMix64 rng(12345);
    double worst_eq = 0, worst_min = 0;
    for (int trial = 0; trial < 200; ++trial) {
      int n = rng.uniform_int(3, 8);
      Eigen::VectorXd a(n), r_head(n - 1);
      for (int i = 0; i < n; ++i) a[i] = rng.uniform(0.1, 10.0);
      for (int i = 0; i < n - 1; ++i) r_head[i] = rng.uniform(-1.0, 1.0);
      Eigen::VectorXd x = patch_case1_solution(a, r_head);
      // Wrap system rows.
      for (int i = 0; i < n - 1; ++i)
        worst_eq = std::max(worst_eq, std::abs(x[i] - x[i + 1] - r_head[i]));
      double r_last = -r_head.sum();
      worst_eq = std::max(worst_eq, std::abs(-x[0] + x[n - 1] - r_last));
      worst_min = std::max(worst_min, std::abs(a.dot(x)) / a.sum());
    }
    add("appendix-A closed form Mx=r", worst_eq, 1e-12);
    add("appendix-A weight constraint", worst_min, 1e-12);
  }

  // Oracle dominance on a small mesh.
  {
    BenchmarkCase smooth = make_benchmark("smooth");
    Mesh m = smooth.mesh_for_level(1);
    FemSolution u = solve_cg(m, smooth.problem, 1);
    RecoveryResult rec = recover(u, Recovery::CgPou);
    RtFlux oracle = oracle_equilibrated_flux(u, 0);
    double ours = flux_objective(u, rec.equilibrated.flux);
    double best = flux_objective(u, oracle);
    add("oracle dominance (objective gap)", std::max(0.0, best - ours) / (best + 1e-30),
        1e-9);
  }

  // Patch-test exactness.
  {
    BenchmarkCase patch = make_benchmark("patch");
    Mesh m = patch.mesh_for_level(1);
    FemSolution u = solve_cg(m, patch.problem, 1);
    EstimatorReport rep = indicator(u, recover(u, Recovery::CgPou));
    add("patch test eta (cg1/cg-pou)", rep.eta, 1e-9);
  }

  int failures = 0;
  out << "invariant                                             value        threshold  status\n";
  for (const auto& row : rows) {
    bool ok = row.pass();
    if (!ok) ++failures;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-52s %-12.3e %-10.1e %s", row.name.c_str(), row.value,
                  row.threshold, ok ? "pass" : "FAIL");
    out << buf << "\n";
  }
  out << (failures == 0 ? "verify: all invariants hold\n"
                        : "verify: " + std::to_string(failures) + " violation(s)\n");
  return failures;
}

}  // namespace earm
