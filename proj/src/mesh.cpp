#include "earm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace earm {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

std::pair<int, int> edge_key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

/// Local facet i of triangle t is the edge opposite local vertex i.
std::pair<int, int> local_edge(const std::array<int, 3>& t, int i) {
  return {t[(i + 1) % 3], t[(i + 2) % 3]};
}

}  // namespace

Mesh Mesh::build(std::vector<Vec2> vertices,
                 std::vector<std::array<int, 3>> triangles,
                 const std::vector<BoundarySpec>& boundary) {
  Mesh mesh;
  mesh.vertices_ = std::move(vertices);
  mesh.triangles_ = std::move(triangles);

  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::max());
  Vec2 hi = -lo;
  for (const Vec2& v : mesh.vertices_) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  double bbox_area = std::max((hi - lo).prod(), 1e-300);

  for (std::size_t k = 0; k < mesh.triangles_.size(); ++k) {
    auto& t = mesh.triangles_[k];
    for (int v : t)
      require(v >= 0 && v < mesh.n_vertices(),
              "mesh: vertex index out of range in triangle " + std::to_string(k));
    Vec2 a = mesh.vertices_[t[0]], b = mesh.vertices_[t[1]], c = mesh.vertices_[t[2]];
    double twice_area = cross2(b - a, c - a);
    if (twice_area < 0) {  // normalize to counterclockwise
      std::swap(t[1], t[2]);
      twice_area = -twice_area;
    }
    require(0.5 * twice_area > 1e-14 * bbox_area,
            "mesh: degenerate triangle " + std::to_string(k));
  }

  std::map<std::pair<int, int>, FacetTag> tags;
  for (const BoundarySpec& spec : boundary) tags[edge_key(spec.v0, spec.v1)] = spec.tag;

  std::map<std::pair<int, int>, std::vector<int>> edge_elems;
  for (int k = 0; k < mesh.n_elements(); ++k)
    for (int i = 0; i < 3; ++i) {
      auto [a, b] = local_edge(mesh.triangles_[k], i);
      edge_elems[edge_key(a, b)].push_back(k);
    }

  mesh.facets_.clear();
  for (auto& [key, elems] : edge_elems) {
    require(elems.size() <= 2, "mesh: edge shared by more than two triangles (vertices " +
                                   std::to_string(key.first) + "," + std::to_string(key.second) + ")");
    Facet f;
    std::sort(elems.begin(), elems.end());
    f.minus = elems.front();
    f.plus = elems.size() == 2 ? elems.back() : -1;
    f.start = key.first;
    f.end = key.second;
    if (f.boundary()) {
      auto it = tags.find(key);
      require(it != tags.end(), "mesh: untagged boundary facet between vertices " +
                                    std::to_string(key.first) + " and " + std::to_string(key.second));
      f.tag = it->second;
      tags.erase(it);
    } else {
      f.tag = FacetTag::Interior;
    }
    mesh.facets_.push_back(f);
  }
  require(tags.empty(), "mesh: boundary tag given for a non-boundary edge");

  mesh.build_derived();
  return mesh;
}

void Mesh::build_derived() {
  const int ne = n_elements();
  const int nf = n_facets();

  area_.resize(ne);
  diameter_.resize(ne);
  nvb_peak_.assign(ne, 0);
  for (int k = 0; k < ne; ++k) {
    Vec2 a = vertices_[triangles_[k][0]], b = vertices_[triangles_[k][1]],
         c = vertices_[triangles_[k][2]];
    area_[k] = 0.5 * cross2(b - a, c - a);
    double l0 = (c - b).norm(), l1 = (a - c).norm(), l2 = (b - a).norm();
    diameter_[k] = std::max({l0, l1, l2});
    // Newest vertex opposite the longest edge (ties: lowest local index).
    double best = l0;
    int peak = 0;
    if (l1 > best + 0.0) { best = l1; peak = 1; }
    if (l2 > best) { peak = 2; }
    nvb_peak_[k] = peak;
  }

  // Facet geometry: normal = outward normal of the minus element; endpoint
  // order chosen so rotating (end - start) clockwise by 90 degrees gives it.
  std::map<std::pair<int, int>, int> facet_of_edge;
  for (int f = 0; f < nf; ++f) facet_of_edge[edge_key(facets_[f].start, facets_[f].end)] = f;

  elem_facets_.assign(ne, {-1, -1, -1});
  elem_signs_.assign(ne, {0, 0, 0});
  for (int k = 0; k < ne; ++k)
    for (int i = 0; i < 3; ++i) {
      auto [a, b] = local_edge(triangles_[k], i);
      elem_facets_[k][i] = facet_of_edge.at(edge_key(a, b));
    }

  for (int f = 0; f < nf; ++f) {
    Facet& fc = facets_[f];
    int k = fc.minus;
    // Locate the minus element's CCW-ordered edge (a -> b); its outward
    // normal is (b-a) rotated clockwise.
    int li = local_facet(k, f);
    int a = triangles_[k][(li + 1) % 3], b = triangles_[k][(li + 2) % 3];
    Vec2 d = vertices_[b] - vertices_[a];
    fc.length = d.norm();
    fc.normal = Vec2(d.y(), -d.x()) / fc.length;
    fc.start = a;
    fc.end = b;
  }

  for (int k = 0; k < ne; ++k)
    for (int i = 0; i < 3; ++i) {
      const Facet& fc = facets_[elem_facets_[k][i]];
      elem_signs_[k][i] = (fc.minus == k) ? 1.0 : -1.0;
    }

  // Vertex flags and star patches.
  vertex_on_boundary_.assign(n_vertices(), false);
  vertex_on_dirichlet_.assign(n_vertices(), false);
  for (const Facet& fc : facets_)
    if (fc.boundary()) {
      vertex_on_boundary_[fc.start] = vertex_on_boundary_[fc.end] = true;
      if (fc.tag == FacetTag::Dirichlet)
        vertex_on_dirichlet_[fc.start] = vertex_on_dirichlet_[fc.end] = true;
    }

  std::vector<std::vector<int>> vertex_elems(n_vertices());
  for (int k = 0; k < ne; ++k)
    for (int v : triangles_[k]) vertex_elems[v].push_back(k);

  auto facet_through = [&](int k, int z, bool entering) {
    // entering facet = {z, next CCW vertex}, exiting = {z, previous}.
    int p = 0;
    while (triangles_[k][p] != z) ++p;
    int other = entering ? triangles_[k][(p + 1) % 3] : triangles_[k][(p + 2) % 3];
    return facet_of_edge.at(edge_key(z, other));
  };
  auto neighbor_across = [&](int k, int f) {
    const Facet& fc = facets_[f];
    return fc.minus == k ? fc.plus : fc.minus;
  };

  patches_.assign(n_vertices(), {});
  for (int z = 0; z < n_vertices(); ++z) {
    VertexPatch& patch = patches_[z];
    const auto& ring = vertex_elems[z];
    if (ring.empty()) continue;
    int start = *std::min_element(ring.begin(), ring.end());
    if (vertex_on_boundary_[z]) {
      for (int k : ring)
        if (facets_[facet_through(k, z, true)].boundary()) start = k;
    }
    int k = start;
    patch.facets.push_back(facet_through(k, z, true));
    while (true) {
      patch.elements.push_back(k);
      int exit_f = facet_through(k, z, false);
      patch.facets.push_back(exit_f);
      int next = neighbor_across(k, exit_f);
      if (next < 0 || next == start) break;
      k = next;
    }
    require(patch.elements.size() == ring.size(),
            "mesh: non-manifold vertex star at vertex " + std::to_string(z));
    if (!vertex_on_boundary_[z]) {
      patch.facets.pop_back();  // F_{T_z+1} = F_1
      patch.kind = PatchKind::Interior;
    } else {
      FacetTag t0 = facets_[patch.facets.front()].tag;
      FacetTag t1 = facets_[patch.facets.back()].tag;
      if (t0 == FacetTag::Dirichlet && t1 == FacetTag::Dirichlet)
        patch.kind = PatchKind::DirichletDirichlet;
      else if (t0 == FacetTag::Neumann && t1 == FacetTag::Neumann)
        patch.kind = PatchKind::NeumannNeumann;
      else
        patch.kind = PatchKind::Mixed;
    }
  }
}

int Mesh::local_facet(int k, int f) const {
  for (int i = 0; i < 3; ++i)
    if (elem_facets_[k][i] == f) return i;
  throw std::runtime_error("mesh: facet not incident to element");
}

double Mesh::sign(int k, int f) const { return elem_signs_[k][local_facet(k, f)]; }

double Mesh::h_max() const {
  return *std::max_element(diameter_.begin(), diameter_.end());
}

double Mesh::total_area() const {
  double s = 0;
  for (double a : area_) s += a;
  return s;
}

Vec2 Mesh::centroid(int k) const {
  return (vertices_[triangles_[k][0]] + vertices_[triangles_[k][1]] +
          vertices_[triangles_[k][2]]) / 3.0;
}

Eigen::Matrix<double, 2, 3> Mesh::corners(int k) const {
  Eigen::Matrix<double, 2, 3> c;
  for (int i = 0; i < 3; ++i) c.col(i) = vertices_[triangles_[k][i]];
  return c;
}

Vec2 Mesh::facet_point(int f, double t) const {
  const Facet& fc = facets_[f];
  return (1.0 - t) * vertices_[fc.start] + t * vertices_[fc.end];
}

std::vector<int> Mesh::all_elements() const {
  std::vector<int> ids(n_elements());
  for (int k = 0; k < n_elements(); ++k) ids[k] = k;
  return ids;
}

void Mesh::debug_flip_sign(int k, int lf) {
  elem_signs_[k][lf] = -elem_signs_[k][lf];
}

// ---------------------------------------------------------------------------
// Newest-vertex bisection.

namespace {

struct NvbTri {
  std::array<int, 3> v;  // v[0] is the newest vertex; refinement edge (v[1], v[2])
  int pending = 0;       // bisection generations still owed
};

}  // namespace

Mesh Mesh::refine(const std::vector<int>& marked) const {
  std::vector<Vec2> verts = vertices_;
  std::vector<NvbTri> tris(n_elements());
  for (int k = 0; k < n_elements(); ++k) {
    int p = nvb_peak_[k];
    tris[k].v = {triangles_[k][p], triangles_[k][(p + 1) % 3], triangles_[k][(p + 2) % 3]};
  }
  for (int k : marked) {
    require(k >= 0 && k < n_elements(), "refine: marked element out of range");
    tris[k].pending = 2;
  }

  std::map<std::pair<int, int>, FacetTag> edge_tags;
  for (const Facet& fc : facets_)
    if (fc.boundary()) edge_tags[edge_key(fc.start, fc.end)] = fc.tag;

  std::map<std::pair<int, int>, int> midpoint;
  auto split_point = [&](int a, int b) {
    auto key = edge_key(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    int m = static_cast<int>(verts.size());
    verts.push_back(0.5 * (verts[a] + verts[b]));
    midpoint[key] = m;
    auto tag = edge_tags.find(key);
    if (tag != edge_tags.end()) {
      edge_tags[edge_key(a, m)] = tag->second;
      edge_tags[edge_key(m, b)] = tag->second;
      edge_tags.erase(tag);
    }
    return m;
  };
  auto edge_is_split = [&](int a, int b) { return midpoint.count(edge_key(a, b)) > 0; };

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<NvbTri> next;
    next.reserve(tris.size());
    for (const NvbTri& t : tris) {
      bool needs = t.pending > 0 || edge_is_split(t.v[0], t.v[1]) ||
                   edge_is_split(t.v[1], t.v[2]) || edge_is_split(t.v[2], t.v[0]);
      if (!needs) {
        next.push_back(t);
        continue;
      }
      int m = split_point(t.v[1], t.v[2]);
      int child_pending = std::max(t.pending - 1, 0);
      next.push_back({{m, t.v[0], t.v[1]}, child_pending});
      next.push_back({{m, t.v[2], t.v[0]}, child_pending});
      changed = true;
    }
    tris.swap(next);
  }

  std::vector<std::array<int, 3>> out_tris(tris.size());
  for (std::size_t i = 0; i < tris.size(); ++i) out_tris[i] = tris[i].v;
  std::vector<BoundarySpec> boundary;
  boundary.reserve(edge_tags.size());
  for (const auto& [key, tag] : edge_tags) boundary.push_back({key.first, key.second, tag});

  Mesh out = Mesh::build(std::move(verts), std::move(out_tris), boundary);
  // Children keep the midpoint (their stored v[0]) as the newest vertex;
  // Mesh::build reassigns peaks by longest edge, which coincides for the
  // similarity classes NVB produces, but fix them explicitly to be safe.
  for (std::size_t i = 0; i < tris.size(); ++i) {
    const auto& built = out.triangles_[i];
    for (int p = 0; p < 3; ++p)
      if (built[p] == tris[i].v[0]) out.nvb_peak_[i] = p;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format:
//   V n   (n lines "x y")
//   T m   (m lines "i j k")
//   B p   (p lines "i j tag", tag in {D, N})

void Mesh::write_text(std::ostream& out) const {
  char buf[64];
  out << "V " << n_vertices() << "\n";
  for (const Vec2& v : vertices_) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g", v.x(), v.y());
    out << buf << "\n";
  }
  out << "T " << n_elements() << "\n";
  for (const auto& t : triangles_) out << t[0] << " " << t[1] << " " << t[2] << "\n";
  std::vector<const Facet*> bdry;
  for (const Facet& fc : facets_)
    if (fc.boundary()) bdry.push_back(&fc);
  out << "B " << bdry.size() << "\n";
  for (const Facet* fc : bdry)
    out << fc->start << " " << fc->end << " "
        << (fc->tag == FacetTag::Dirichlet ? "D" : "N") << "\n";
}

void Mesh::write_text_file(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "mesh: cannot open " + path + " for writing");
  write_text(out);
}

Mesh Mesh::read_text(std::istream& in) {
  auto expect_header = [&](char want) {
    std::string tok;
    in >> tok;
    require(tok.size() == 1 && tok[0] == want,
            std::string("mesh: expected section '") + want + "'");
    int n;
    in >> n;
    require(in.good() && n >= 0, "mesh: bad section count");
    return n;
  };
  int nv = expect_header('V');
  std::vector<Vec2> verts(nv);
  for (auto& v : verts) in >> v.x() >> v.y();
  int nt = expect_header('T');
  std::vector<std::array<int, 3>> tris(nt);
  for (auto& t : tris) in >> t[0] >> t[1] >> t[2];
  int nb = expect_header('B');
  std::vector<BoundarySpec> boundary(nb);
  for (auto& b : boundary) {
    std::string tag;
    in >> b.v0 >> b.v1 >> tag;
    require(tag == "D" || tag == "N", "mesh: boundary tag must be D or N");
    b.tag = tag == "D" ? FacetTag::Dirichlet : FacetTag::Neumann;
  }
  require(!in.fail(), "mesh: truncated mesh file");
  return Mesh::build(std::move(verts), std::move(tris), boundary);
}

Mesh Mesh::read_text_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "mesh: cannot open " + path);
  return read_text(in);
}

// ---------------------------------------------------------------------------
// Generators.

FacetTag tag_all_dirichlet(const Vec2&) { return FacetTag::Dirichlet; }

namespace {

Mesh square_mesh(int n, const std::function<FacetTag(const Vec2&)>& tagger,
                 const std::function<Vec2(int, int, double)>& position) {
  require(n >= 1, "square mesh: n >= 1 required");
  double h = 1.0 / n;
  std::vector<Vec2> verts;
  verts.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) verts.push_back(position(i, j, h));
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };

  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      if ((i + j) % 2 == 0) {
        tris.push_back({a, b, c});
        tris.push_back({a, c, d});
      } else {
        tris.push_back({a, b, d});
        tris.push_back({b, c, d});
      }
    }

  std::vector<BoundarySpec> boundary;
  auto add = [&](int a, int b) {
    Vec2 mid = 0.5 * (verts[a] + verts[b]);
    boundary.push_back({a, b, tagger(mid)});
  };
  for (int i = 0; i < n; ++i) {
    add(vid(i, 0), vid(i + 1, 0));
    add(vid(i, n), vid(i + 1, n));
    add(vid(0, i), vid(0, i + 1));
    add(vid(n, i), vid(n, i + 1));
  }
  return Mesh::build(std::move(verts), std::move(tris), boundary);
}

}  // namespace

Mesh structured_square(int n, const std::function<FacetTag(const Vec2&)>& tagger) {
  return square_mesh(n, tagger, [](int i, int j, double h) { return Vec2(i * h, j * h); });
}

Mesh jittered_square(int n, std::uint64_t seed,
                     const std::function<FacetTag(const Vec2&)>& tagger) {
  SplitMix64 rng(seed);
  return square_mesh(n, tagger, [&](int i, int j, double h) {
    Vec2 p(i * h, j * h);
    bool interior = i > 0 && i < n && j > 0 && j < n;
    bool on_center = (2 * i == n) || (2 * j == n);
    double dx = rng.uniform(-0.15, 0.15) * h;  // draw regardless, keeps stream aligned
    double dy = rng.uniform(-0.15, 0.15) * h;
    if (interior && !on_center) p += Vec2(dx, dy);
    return p;
  });
}

}  // namespace earm
