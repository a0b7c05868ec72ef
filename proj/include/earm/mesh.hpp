// Conforming triangular meshes: facet orientation and sign conventions,
// boundary tags, vertex star patches, newest-vertex bisection refinement,
// and the plain-text mesh format.

#pragma once

#include "earm/util.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace earm {

enum class FacetTag { Interior, Dirichlet, Neumann };

struct Facet {
  // Endpoints ordered so that rotating (end - start) clockwise by 90
  // degrees gives the unit normal.
  int start = -1, end = -1;
  Vec2 normal = Vec2::Zero();
  double length = 0.0;
  // The outward normal of `minus` coincides with `normal`. For interior
  // facets `minus` is the lower element id; `plus` is -1 on the boundary.
  int minus = -1, plus = -1;
  FacetTag tag = FacetTag::Interior;

  bool boundary() const { return plus < 0; }
};

enum class PatchKind { Interior, DirichletDirichlet, NeumannNeumann, Mixed };

/// Star patch of a vertex z: elements ordered counterclockwise around z,
/// with facets[i] shared by elements[i-1] and elements[i] (facets[0] is the
/// first boundary facet for boundary vertices; facets wrap for interior z:
/// F_{T_z+1} = F_1).
struct VertexPatch {
  std::vector<int> elements;  // K_{1,z}, ..., K_{T_z,z}
  std::vector<int> facets;    // F_{1,z}, ..., F_{|E_z|,z}
  PatchKind kind = PatchKind::Interior;
  int n_elements() const { return static_cast<int>(elements.size()); }
  int n_facets() const { return static_cast<int>(facets.size()); }
};

struct BoundarySpec {
  int v0 = 0, v1 = 0;
  FacetTag tag = FacetTag::Dirichlet;
};

class Mesh {
 public:
  /// Builds all derived combinatorics. Triangles are reoriented to
  /// counterclockwise if needed; every boundary edge must appear in
  /// `boundary` with a Dirichlet or Neumann tag.
  static Mesh build(std::vector<Vec2> vertices,
                    std::vector<std::array<int, 3>> triangles,
                    const std::vector<BoundarySpec>& boundary);

  int n_vertices() const { return static_cast<int>(vertices_.size()); }
  int n_elements() const { return static_cast<int>(triangles_.size()); }
  int n_facets() const { return static_cast<int>(facets_.size()); }

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::array<int, 3>& triangle(int k) const { return triangles_[k]; }
  const Facet& facet(int f) const { return facets_[f]; }
  const std::vector<Facet>& facets() const { return facets_; }

  /// Local facets of element k in the order opposite-to-local-vertex.
  const std::array<int, 3>& element_facets(int k) const { return elem_facets_[k]; }
  double sign(int k, int f) const;  // sign_K(F), F must be a facet of k
  int local_facet(int k, int f) const;

  double area(int k) const { return area_[k]; }
  double diameter(int k) const { return diameter_[k]; }
  double h_max() const;
  double total_area() const;
  Vec2 centroid(int k) const;
  /// Vertices of element k as columns.
  Eigen::Matrix<double, 2, 3> corners(int k) const;

  const VertexPatch& star_patch(int z) const { return patches_[z]; }
  bool vertex_on_boundary(int z) const { return vertex_on_boundary_[z]; }
  bool vertex_on_dirichlet(int z) const { return vertex_on_dirichlet_[z]; }

  /// Point on facet f at parameter t in [0,1] measured from start to end.
  Vec2 facet_point(int f, double t) const;

  /// New mesh with every element in `marked` subdivided into four children
  /// (two rounds of newest-vertex bisection) plus conformity closure.
  Mesh refine(const std::vector<int>& marked) const;
  Mesh refine_uniform() const { return refine(all_elements()); }
  std::vector<int> all_elements() const;

  /// Test hook: flips the stored sign of one element/facet incidence so the
  /// verify command can demonstrate that conservation checks catch it.
  void debug_flip_sign(int k, int local_facet);

  static Mesh read_text(std::istream& in);
  static Mesh read_text_file(const std::string& path);
  void write_text(std::ostream& out) const;
  void write_text_file(const std::string& path) const;

 private:
  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<Facet> facets_;
  std::vector<std::array<int, 3>> elem_facets_;
  std::vector<std::array<double, 3>> elem_signs_;
  std::vector<double> area_, diameter_;
  std::vector<VertexPatch> patches_;
  std::vector<bool> vertex_on_boundary_, vertex_on_dirichlet_;
  std::vector<int> nvb_peak_;  // local index of the newest vertex

  void build_derived();
};

/// Structured unit-square mesh: n x n cells split along alternating
/// diagonals; `tagger` maps a boundary-edge midpoint to its tag.
Mesh structured_square(int n, const std::function<FacetTag(const Vec2&)>& tagger);

/// Same but with deterministic interior-vertex jitter; vertices on the
/// center lines x=1/2, y=1/2 stay put so elements never straddle a
/// checkerboard quadrant.
Mesh jittered_square(int n, std::uint64_t seed,
                     const std::function<FacetTag(const Vec2&)>& tagger);

/// All-Dirichlet tagger.
FacetTag tag_all_dirichlet(const Vec2&);

}  // namespace earm
