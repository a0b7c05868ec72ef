#include "earm/problem.hpp"

#include <cmath>

namespace earm {

DiffusionProblem DiffusionProblem::poisson(ScalarFn f) {
  DiffusionProblem p;
  p.tensor = [](const Vec2&) { return Mat2::Identity(); };
  p.source = std::move(f);
  p.neumann = [](const Vec2&) { return 0.0; };
  p.dirichlet = [](const Vec2&) { return 0.0; };
  return p;
}

Coefficient::Coefficient(const Mesh& mesh, const DiffusionProblem& problem) {
  int ne = mesh.n_elements();
  a_.resize(ne);
  a_inv_.resize(ne);
  a_inv_sqrt_.resize(ne);
  a_sqrt_.resize(ne);
  alpha_.resize(ne);
  for (int k = 0; k < ne; ++k) {
    Mat2 a = problem.tensor(mesh.centroid(k));
    require((a - a.transpose()).norm() <= 1e-12 * a.norm(),
            "coefficient: tensor not symmetric on element " + std::to_string(k));
    Eigen::SelfAdjointEigenSolver<Mat2> eig(a);
    require(eig.eigenvalues().minCoeff() > 0,
            "coefficient: tensor not positive definite on element " + std::to_string(k));
    a_[k] = a;
    Eigen::Vector2d lam = eig.eigenvalues();
    Mat2 v = eig.eigenvectors();
    a_inv_[k] = v * lam.cwiseInverse().asDiagonal() * v.transpose();
    a_sqrt_[k] = v * lam.cwiseSqrt().asDiagonal() * v.transpose();
    a_inv_sqrt_[k] = v * lam.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    alpha_[k] = lam.maxCoeff();
  }
}

AlphaWeights alpha_weights(const Mesh& mesh, const Coefficient& coeff, int facet) {
  const Facet& fc = mesh.facet(facet);
  AlphaWeights w;
  w.alpha_minus = coeff.alpha(fc.minus);
  if (fc.boundary()) {
    w.alpha_plus = w.alpha_minus;
    w.w_minus = 1.0;
    w.w_plus = 0.0;
    w.alpha_min = w.alpha_max = w.alpha_minus;
    w.a_f = w.alpha_minus;
    return w;
  }
  w.alpha_plus = coeff.alpha(fc.plus);
  double sum = w.alpha_minus + w.alpha_plus;
  w.w_plus = w.alpha_minus / sum;
  w.w_minus = w.alpha_plus / sum;
  w.alpha_min = std::min(w.alpha_minus, w.alpha_plus);
  w.alpha_max = std::max(w.alpha_minus, w.alpha_plus);
  w.a_f = w.alpha_min;
  return w;
}

// ---------------------------------------------------------------------------
// Benchmark catalog.

namespace {

constexpr double kPi = 3.14159265358979323846;

FacetTag tag_left_right_dirichlet(const Vec2& mid) {
  // Dirichlet on x = 0 and x = 1, Neumann on y = 0 and y = 1.
  return (mid.x() < 1e-12 || mid.x() > 1.0 - 1e-12) ? FacetTag::Dirichlet
                                                    : FacetTag::Neumann;
}

FacetTag tag_patch(const Vec2& mid) {
  // Neumann only on x = 1.
  return mid.x() > 1.0 - 1e-12 ? FacetTag::Neumann : FacetTag::Dirichlet;
}

BenchmarkCase smooth_case() {
  BenchmarkCase c;
  c.name = "smooth";
  c.mesh_for_level = [](int level) {
    Mesh m = structured_square(2, tag_all_dirichlet);
    for (int i = 0; i < level; ++i) m = m.refine_uniform();
    return m;
  };
  c.problem = DiffusionProblem::poisson([](const Vec2& x) {
    return 2.0 * kPi * kPi * std::sin(kPi * x.x()) * std::sin(kPi * x.y());
  });
  c.problem.exact = ExactSolution{
      [](const Vec2& x) { return std::sin(kPi * x.x()) * std::sin(kPi * x.y()); },
      [](const Vec2& x) {
        return Vec2(kPi * std::cos(kPi * x.x()) * std::sin(kPi * x.y()),
                    kPi * std::sin(kPi * x.x()) * std::cos(kPi * x.y()));
      }};
  return c;
}

BenchmarkCase patch_case() {
  // u = x + 2y, f = 0, A = I; Neumann on x = 1 where g = -du/dx = -1.
  BenchmarkCase c;
  c.name = "patch";
  c.mesh_for_level = [](int level) {
    Mesh m = structured_square(2, tag_patch);
    for (int i = 0; i < level; ++i) m = m.refine_uniform();
    return m;
  };
  c.problem = DiffusionProblem::poisson([](const Vec2&) { return 0.0; });
  c.problem.neumann = [](const Vec2&) { return -1.0; };
  c.problem.dirichlet = [](const Vec2& x) { return x.x() + 2.0 * x.y(); };
  c.problem.exact = ExactSolution{[](const Vec2& x) { return x.x() + 2.0 * x.y(); },
                                  [](const Vec2&) { return Vec2(1.0, 2.0); }};
  return c;
}

BenchmarkCase checkerboard_case(double kappa) {
  // Quasi-monotone quadrant layout: A = kappa*I on (1/2,1)^2, identity
  // elsewhere. u = sin^2(pi x) sin^2(pi y) has zero normal derivative on the
  // quadrant interfaces, so the flux stays continuous for every kappa.
  BenchmarkCase c;
  c.name = "checkerboard";
  c.mesh_for_level = [](int level) {
    Mesh m = structured_square(4, tag_all_dirichlet);
    for (int i = 0; i < level; ++i) m = m.refine_uniform();
    return m;
  };
  auto aq = [kappa](const Vec2& x) {
    return (x.x() > 0.5 && x.y() > 0.5) ? kappa : 1.0;
  };
  auto s2 = [](double t) { return std::sin(kPi * t) * std::sin(kPi * t); };
  auto ds2 = [](double t) { return 2.0 * kPi * std::sin(kPi * t) * std::cos(kPi * t); };
  auto d2s2 = [](double t) {
    return 2.0 * kPi * kPi * (std::cos(kPi * t) * std::cos(kPi * t) -
                              std::sin(kPi * t) * std::sin(kPi * t));
  };
  c.problem.tensor = [aq](const Vec2& x) { return Mat2(aq(x) * Mat2::Identity()); };
  c.problem.source = [=](const Vec2& x) {
    return -aq(x) * (d2s2(x.x()) * s2(x.y()) + s2(x.x()) * d2s2(x.y()));
  };
  c.problem.neumann = [](const Vec2&) { return 0.0; };
  c.problem.dirichlet = [](const Vec2&) { return 0.0; };
  c.problem.exact = ExactSolution{
      [=](const Vec2& x) { return s2(x.x()) * s2(x.y()); },
      [=](const Vec2& x) {
        return Vec2(ds2(x.x()) * s2(x.y()), s2(x.x()) * ds2(x.y()));
      }};
  return c;
}

BenchmarkCase mixed_case() {
  // u = sin(pi x) e^y with Dirichlet x in {0,1} and Neumann y in {0,1}.
  BenchmarkCase c;
  c.name = "mixed";
  c.mesh_for_level = [](int level) {
    Mesh m = structured_square(2, tag_left_right_dirichlet);
    for (int i = 0; i < level; ++i) m = m.refine_uniform();
    return m;
  };
  auto u = [](const Vec2& x) { return std::sin(kPi * x.x()) * std::exp(x.y()); };
  auto gu = [](const Vec2& x) {
    return Vec2(kPi * std::cos(kPi * x.x()) * std::exp(x.y()),
                std::sin(kPi * x.x()) * std::exp(x.y()));
  };
  c.problem = DiffusionProblem::poisson(
      [](const Vec2& x) { return (kPi * kPi - 1.0) * std::sin(kPi * x.x()) * std::exp(x.y()); });
  c.problem.neumann = [gu](const Vec2& x) {
    Vec2 n = x.y() < 0.5 ? Vec2(0, -1) : Vec2(0, 1);
    return -gu(x).dot(n);
  };
  c.problem.exact = ExactSolution{u, gu};
  return c;
}

}  // namespace

BenchmarkCase make_benchmark(const std::string& name, double jump) {
  if (name == "smooth") return smooth_case();
  if (name == "patch") return patch_case();
  if (name == "checkerboard") return checkerboard_case(jump);
  if (name == "mixed") return mixed_case();
  throw std::invalid_argument("unknown benchmark '" + name +
                              "' (expected smooth|patch|checkerboard|mixed)");
}

std::vector<std::string> benchmark_names() {
  return {"smooth", "patch", "checkerboard", "mixed"};
}

std::vector<BenchmarkCase> benchmark_catalog(double jump) {
  std::vector<BenchmarkCase> cases;
  for (const std::string& name : benchmark_names()) cases.push_back(make_benchmark(name, jump));
  return cases;
}

}  // namespace earm
