#include "earm/mesh.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace earm;

namespace {

Mesh two_triangle_square(FacetTag tag = FacetTag::Dirichlet) {
  std::vector<Vec2> v = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  std::vector<std::array<int, 3>> t = {{0, 1, 2}, {0, 2, 3}};
  std::vector<BoundarySpec> b = {{0, 1, tag}, {1, 2, tag}, {2, 3, tag}, {3, 0, tag}};
  return Mesh::build(v, t, b);
}

Mesh criss_cross() {
  std::vector<Vec2> v = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  std::vector<std::array<int, 3>> t = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  std::vector<BoundarySpec> b = {{0, 1, FacetTag::Dirichlet},
                                 {1, 2, FacetTag::Dirichlet},
                                 {2, 3, FacetTag::Dirichlet},
                                 {3, 0, FacetTag::Dirichlet}};
  return Mesh::build(v, t, b);
}

double polygon_defect(const Mesh& mesh, int k) {
  Vec2 sum = Vec2::Zero();
  double scale = 0;
  for (int f : mesh.element_facets(k)) {
    sum += mesh.sign(k, f) * mesh.facet(f).length * mesh.facet(f).normal;
    scale += mesh.facet(f).length;
  }
  return sum.norm() / scale;
}

}  // namespace

TEST_CASE("two-triangle square: facet counts and signs") {
  Mesh mesh = two_triangle_square();
  CHECK(mesh.n_facets() == 5);
  int interior = 0;
  for (int f = 0; f < mesh.n_facets(); ++f)
    if (!mesh.facet(f).boundary()) {
      ++interior;
      const Facet& fc = mesh.facet(f);
      CHECK(mesh.sign(fc.minus, f) == 1.0);
      CHECK(mesh.sign(fc.plus, f) == -1.0);
      CHECK(fc.minus < fc.plus);  // normal points away from the lower id
    }
  CHECK(interior == 1);
}

TEST_CASE("single triangle: all signs +1, no interior facets") {
  std::vector<Vec2> v = {{0, 0}, {1, 0}, {0, 1}};
  std::vector<std::array<int, 3>> t = {{0, 1, 2}};
  std::vector<BoundarySpec> b = {{0, 1, FacetTag::Dirichlet},
                                 {1, 2, FacetTag::Dirichlet},
                                 {2, 0, FacetTag::Dirichlet}};
  Mesh mesh = Mesh::build(v, t, b);
  CHECK(mesh.n_facets() == 3);
  for (int f = 0; f < 3; ++f) {
    CHECK(mesh.facet(f).boundary());
    CHECK(mesh.sign(0, f) == 1.0);
  }
}

TEST_CASE("criss-cross square: interior vertex star") {
  Mesh mesh = criss_cross();
  CHECK(mesh.n_elements() == 4);
  CHECK(mesh.n_facets() == 8);
  const VertexPatch& patch = mesh.star_patch(4);
  CHECK(patch.kind == PatchKind::Interior);
  CHECK(patch.n_elements() == 4);
  CHECK(patch.n_facets() == 4);
  // F_{i,z} shared by K_{i-1,z} and K_{i,z}, wrapping around.
  for (int i = 0; i < 4; ++i) {
    const Facet& fc = mesh.facet(patch.facets[i]);
    int prev = patch.elements[(i + 3) % 4];
    int cur = patch.elements[i];
    CHECK(((fc.minus == prev && fc.plus == cur) || (fc.minus == cur && fc.plus == prev)));
  }
  // Counterclockwise ordering: consecutive patch elements advance in angle.
  CHECK(patch.elements.front() == 0);  // lowest element id first
}

TEST_CASE("boundary vertex classification") {
  auto tagger = [](const Vec2& mid) {
    return mid.x() > 1.0 - 1e-12 ? FacetTag::Neumann : FacetTag::Dirichlet;
  };
  Mesh mesh = structured_square(2, tagger);
  int found_dd = 0, found_mixed = 0, found_nn = 0;
  for (int z = 0; z < mesh.n_vertices(); ++z) {
    if (!mesh.vertex_on_boundary(z)) continue;
    switch (mesh.star_patch(z).kind) {
      case PatchKind::DirichletDirichlet: ++found_dd; break;
      case PatchKind::Mixed: ++found_mixed; break;
      case PatchKind::NeumannNeumann: ++found_nn; break;
      default: break;
    }
  }
  CHECK(found_dd > 0);
  CHECK(found_mixed == 2);  // the two corners of the Neumann side
  CHECK(found_nn == 1);     // the midpoint of x = 1
}

TEST_CASE("closed polygon identity on a jittered mesh") {
  Mesh mesh = jittered_square(8, 99, tag_all_dirichlet);
  for (int k = 0; k < mesh.n_elements(); ++k) CHECK(polygon_defect(mesh, k) <= 1e-13);
}

TEST_CASE("refine: empty marking is the identity") {
  Mesh mesh = two_triangle_square();
  Mesh same = mesh.refine({});
  CHECK(same.n_elements() == mesh.n_elements());
  CHECK(same.n_vertices() == mesh.n_vertices());
}

TEST_CASE("refine: uniform marking quadrisects") {
  Mesh mesh = two_triangle_square();
  Mesh fine = mesh.refine_uniform();
  CHECK(fine.n_elements() == 8);
  CHECK(fine.total_area() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("refine: h_max halves per uniform round") {
  Mesh mesh = two_triangle_square();
  double h = mesh.h_max();
  for (int round = 0; round < 4; ++round) {
    mesh = mesh.refine_uniform();
    CHECK(mesh.h_max() == doctest::Approx(h / 2).epsilon(1e-12));
    h = mesh.h_max();
  }
}

TEST_CASE("refine: boundary tags inherited, conforming closure") {
  auto tagger = [](const Vec2& mid) {
    return mid.y() < 1e-12 ? FacetTag::Neumann : FacetTag::Dirichlet;
  };
  Mesh mesh = structured_square(2, tagger);
  Mesh fine = mesh.refine({0, 5});  // partial marking forces closure
  CHECK(fine.total_area() == doctest::Approx(1.0).epsilon(1e-12));
  int neumann = 0;
  for (const Facet& fc : fine.facets()) {
    if (fc.boundary() && fc.tag == FacetTag::Neumann) {
      ++neumann;
      CHECK(std::abs(0.5 * (fine.vertices()[fc.start].y() + fine.vertices()[fc.end].y())) <
            1e-12);
    }
  }
  CHECK(neumann >= 2);
}

TEST_CASE("patch ordering round trip visits every element once") {
  Mesh mesh = jittered_square(6, 3, tag_all_dirichlet);
  for (int z = 0; z < mesh.n_vertices(); ++z) {
    const auto& p = mesh.star_patch(z);
    std::vector<int> elems = p.elements;
    std::sort(elems.begin(), elems.end());
    CHECK(std::adjacent_find(elems.begin(), elems.end()) == elems.end());
    for (int i = 1; i < p.n_elements(); ++i) {
      const Facet& fc = mesh.facet(p.facets[i]);
      bool shared = (fc.minus == p.elements[i - 1] && fc.plus == p.elements[i]) ||
                    (fc.minus == p.elements[i] && fc.plus == p.elements[i - 1]);
      CHECK(shared);
    }
  }
}

TEST_CASE("mesh text format round-trips bit-exactly") {
  Mesh mesh = jittered_square(4, 17, [](const Vec2& mid) {
    return mid.x() > 1 - 1e-12 ? FacetTag::Neumann : FacetTag::Dirichlet;
  });
  std::ostringstream first;
  mesh.write_text(first);
  std::istringstream in(first.str());
  Mesh reread = Mesh::read_text(in);
  std::ostringstream second;
  reread.write_text(second);
  CHECK(first.str() == second.str());
}

TEST_CASE("build rejects invalid input") {
  std::vector<Vec2> v = {{0, 0}, {1, 0}, {0, 1}};
  std::vector<std::array<int, 3>> t = {{0, 1, 2}};
  SUBCASE("untagged boundary facet") {
    std::vector<BoundarySpec> b = {{0, 1, FacetTag::Dirichlet}, {1, 2, FacetTag::Dirichlet}};
    CHECK_THROWS_WITH_AS(Mesh::build(v, t, b), doctest::Contains("untagged"),
                         std::runtime_error);
  }
  SUBCASE("degenerate triangle") {
    // A fourth vertex keeps the bounding box honest.
    std::vector<Vec2> vd = {{0, 0}, {1, 0}, {0.5, 5e-16}, {0, 1}};
    std::vector<BoundarySpec> b = {{0, 1, FacetTag::Dirichlet},
                                   {1, 2, FacetTag::Dirichlet},
                                   {2, 0, FacetTag::Dirichlet}};
    CHECK_THROWS_WITH_AS(Mesh::build(vd, t, b), doctest::Contains("degenerate"),
                         std::runtime_error);
  }
  SUBCASE("non-conforming connectivity") {
    std::vector<Vec2> vn = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {-1, 1}};
    std::vector<std::array<int, 3>> tn = {{0, 1, 2}, {1, 3, 2}, {0, 2, 4}, {0, 1, 2}};
    CHECK_THROWS_AS((void)Mesh::build(vn, tn, {}), std::runtime_error);
  }
}

TEST_CASE("clockwise input triangles are normalized") {
  std::vector<Vec2> v = {{0, 0}, {1, 0}, {0, 1}};
  std::vector<std::array<int, 3>> t = {{0, 2, 1}};  // clockwise
  std::vector<BoundarySpec> b = {{0, 1, FacetTag::Dirichlet},
                                 {1, 2, FacetTag::Dirichlet},
                                 {2, 0, FacetTag::Dirichlet}};
  Mesh mesh = Mesh::build(v, t, b);
  CHECK(mesh.area(0) == doctest::Approx(0.5));
}
