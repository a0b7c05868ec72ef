#include "earm/problem.hpp"

#include "earm/quadrature.hpp"

#include <doctest.h>

#include <cmath>

using namespace earm;

namespace {

Mesh two_elem(double split = 1.0) {
  std::vector<Vec2> v = {{0, 0}, {split, 0}, {split, 1}, {0, 1}};
  std::vector<std::array<int, 3>> t = {{0, 1, 2}, {0, 2, 3}};
  std::vector<BoundarySpec> b = {{0, 1, FacetTag::Dirichlet},
                                 {1, 2, FacetTag::Dirichlet},
                                 {2, 3, FacetTag::Dirichlet},
                                 {3, 0, FacetTag::Dirichlet}};
  return Mesh::build(v, t, b);
}

// Richardson-extrapolated central differences of the exact gradient.
double divergence_of_flux(const DiffusionProblem& p, const Vec2& x, double h) {
  auto div_at = [&](double step) {
    Mat2 a = p.tensor(x);
    Vec2 ex(step, 0), ey(0, step);
    double dxx = (a * p.exact->gradient(x + ex) - a * p.exact->gradient(x - ex)).x();
    double dyy = (a * p.exact->gradient(x + ey) - a * p.exact->gradient(x - ey)).y();
    return (dxx + dyy) / (2 * step);
  };
  double coarse = div_at(h), fine = div_at(h / 2);
  return (4 * fine - coarse) / 3;
}

}  // namespace

TEST_CASE("alpha weights") {
  Mesh mesh = two_elem();

  SUBCASE("equal coefficients give half-half") {
    DiffusionProblem p = DiffusionProblem::poisson([](const Vec2&) { return 0.0; });
    Coefficient coeff(mesh, p);
    for (int f = 0; f < mesh.n_facets(); ++f) {
      if (mesh.facet(f).boundary()) continue;
      AlphaWeights aw = alpha_weights(mesh, coeff, f);
      CHECK(aw.w_plus == doctest::Approx(0.5));
      CHECK(aw.w_minus == doctest::Approx(0.5));
      CHECK(aw.w_plus + aw.w_minus == doctest::Approx(1.0));
    }
  }

  SUBCASE("1 and 4 give 0.2 / 0.8") {
    DiffusionProblem p = DiffusionProblem::poisson([](const Vec2&) { return 0.0; });
    // minus element is id 0 (lower half), plus is id 1
    p.tensor = [&mesh](const Vec2& x) {
      bool lower = x.y() < x.x();  // element 0 lies below the diagonal
      return Mat2((lower ? 1.0 : 4.0) * Mat2::Identity());
    };
    Coefficient coeff(mesh, p);
    for (int f = 0; f < mesh.n_facets(); ++f) {
      if (mesh.facet(f).boundary()) continue;
      AlphaWeights aw = alpha_weights(mesh, coeff, f);
      CHECK(aw.alpha_minus == doctest::Approx(1.0));
      CHECK(aw.alpha_plus == doctest::Approx(4.0));
      CHECK(aw.w_plus == doctest::Approx(0.2));
      CHECK(aw.w_minus == doctest::Approx(0.8));
      CHECK(aw.alpha_min == doctest::Approx(1.0));
      CHECK(aw.alpha_max == doctest::Approx(4.0));
    }
  }

  SUBCASE("weight inequalities on random SPD pairs") {
    SplitMix64 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
      // Random SPD tensors via M = R D R^T.
      auto random_spd = [&rng]() {
        double ang = rng.uniform(0, 6.28);
        Mat2 r;
        r << std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang);
        Eigen::Vector2d d(rng.uniform(0.01, 100.0), rng.uniform(0.01, 100.0));
        return Mat2(r * d.asDiagonal() * r.transpose());
      };
      Mat2 a_minus = random_spd(), a_plus = random_spd();
      Mesh m = two_elem();
      DiffusionProblem p = DiffusionProblem::poisson([](const Vec2&) { return 0.0; });
      p.tensor = [&](const Vec2& x) { return x.y() < x.x() ? a_minus : a_plus; };
      Coefficient coeff(m, p);
      for (int f = 0; f < m.n_facets(); ++f) {
        if (m.facet(f).boundary()) continue;
        AlphaWeights aw = alpha_weights(m, coeff, f);
        double tol = 1e-12 * aw.alpha_max;
        CHECK(aw.w_plus * aw.alpha_plus <=
              std::sqrt(aw.alpha_plus * aw.alpha_min) + tol);
        CHECK(aw.w_minus * aw.alpha_minus <=
              std::sqrt(aw.alpha_minus * aw.alpha_min) + tol);
        CHECK(aw.w_plus / std::sqrt(aw.alpha_minus) <=
              1.0 / std::sqrt(aw.alpha_max) + 1e-12);
        CHECK(aw.w_minus / std::sqrt(aw.alpha_plus) <=
              1.0 / std::sqrt(aw.alpha_max) + 1e-12);
      }
    }
  }
}

TEST_CASE("coefficient rejects non-SPD tensors") {
  Mesh mesh = two_elem();
  DiffusionProblem p = DiffusionProblem::poisson([](const Vec2&) { return 0.0; });
  p.tensor = [](const Vec2&) {
    Mat2 a;
    a << 1, 0, 0, -1;
    return a;
  };
  CHECK_THROWS_AS(Coefficient(mesh, p), std::runtime_error);
}

TEST_CASE("benchmark catalog consistency") {
  for (BenchmarkCase bench : benchmark_catalog(100.0)) {
    const std::string name = bench.name;
    CAPTURE(name);
    Mesh mesh = bench.mesh_for_level(1);
    REQUIRE(bench.problem.exact.has_value());
    const auto& q = triangle_rule(4);

    // -div(A grad u) = f at interior quadrature points (piecewise smooth,
    // so stay strictly inside each element); tolerance relative to the
    // data magnitude over the sample.
    double f_scale = 1.0, worst = 0.0;
    std::vector<std::pair<Vec2, double>> samples;
    for (int k = 0; k < mesh.n_elements(); k += 3) {
      auto corners = mesh.corners(k);
      for (std::size_t i = 0; i < q.points.size(); ++i) {
        Vec2 ref = q.points[i];
        Vec2 x = corners.col(0) + ref.x() * (corners.col(1) - corners.col(0)) +
                 ref.y() * (corners.col(2) - corners.col(0));
        double f = bench.problem.source(x);
        f_scale = std::max(f_scale, std::abs(f));
        samples.emplace_back(x, f);
      }
    }
    for (const auto& [x, f] : samples)
      worst = std::max(worst, std::abs(-divergence_of_flux(bench.problem, x, 1e-3) - f));
    CHECK(worst <= 1e-10 * f_scale);

    // Exact gradient consistent with the value (finite differences).
    Vec2 x0(0.3137, 0.5721);
    double h = 1e-6;
    Vec2 g = bench.problem.exact->gradient(x0);
    double gx = (bench.problem.exact->value(x0 + Vec2(h, 0)) -
                 bench.problem.exact->value(x0 - Vec2(h, 0))) / (2 * h);
    double gy = (bench.problem.exact->value(x0 + Vec2(0, h)) -
                 bench.problem.exact->value(x0 - Vec2(0, h))) / (2 * h);
    CHECK(g.x() == doctest::Approx(gx).epsilon(1e-7));
    CHECK(g.y() == doctest::Approx(gy).epsilon(1e-7));

    // Boundary data matches the exact solution.
    for (const Facet& fc : mesh.facets()) {
      if (!fc.boundary()) continue;
      Vec2 mid = 0.5 * (mesh.vertices()[fc.start] + mesh.vertices()[fc.end]);
      if (fc.tag == FacetTag::Dirichlet) {
        CHECK(std::abs(bench.problem.dirichlet(mid) - bench.problem.exact->value(mid)) <=
              1e-10);
      } else {
        Mat2 a = bench.problem.tensor(mid - 1e-9 * fc.normal);
        double g_exact = -(a * bench.problem.exact->gradient(mid)).dot(fc.normal);
        CHECK(std::abs(bench.problem.neumann(mid) - g_exact) <= 1e-10);
      }
    }
  }
}

TEST_CASE("patch case has zero source and exact constant neumann data") {
  BenchmarkCase bench = make_benchmark("patch");
  CHECK(bench.problem.source(Vec2(0.4, 0.7)) == 0.0);
  CHECK(bench.problem.neumann(Vec2(1.0, 0.3)) == doctest::Approx(-1.0));
}

TEST_CASE("checkerboard with kappa=1 reduces to the identity coefficient") {
  BenchmarkCase bench = make_benchmark("checkerboard", 1.0);
  for (Vec2 x : {Vec2(0.2, 0.3), Vec2(0.8, 0.9), Vec2(0.7, 0.2)})
    CHECK((bench.problem.tensor(x) - Mat2::Identity()).norm() == 0.0);
}

TEST_CASE("unknown benchmark name is rejected") {
  CHECK_THROWS_WITH_AS(make_benchmark("kellogg"), doctest::Contains("unknown benchmark"),
                       std::invalid_argument);
}
