#include "earm/spaces.hpp"

#include "earm/quadrature.hpp"

#include <cmath>

namespace earm {

std::string method_name(Method m) {
  switch (m) {
    case Method::CG: return "cg";
    case Method::NC: return "nc";
    case Method::DG: return "dg";
  }
  return "?";
}

std::vector<LagrangeNode> lagrange_nodes(const Mesh& mesh, int elem, int order) {
  std::vector<LagrangeNode> nodes;
  const auto& tri = mesh.triangle(elem);
  for (int i = 0; i < 3; ++i)
    nodes.push_back({LagrangeNode::Kind::Vertex, tri[i], 0, mesh.vertices()[tri[i]]});
  for (int lf = 0; lf < 3; ++lf) {
    int f = mesh.element_facets(elem)[lf];
    for (int i = 1; i < order; ++i)
      nodes.push_back({LagrangeNode::Kind::Edge, f, i - 1,
                       mesh.facet_point(f, static_cast<double>(i) / order)});
  }
  auto corners = mesh.corners(elem);
  int sub = 0;
  for (int i = 1; i < order; ++i)
    for (int j = 1; i + j < order; ++j) {
      Vec2 p = corners.col(0) +
               (corners.col(1) - corners.col(0)) * (static_cast<double>(i) / order) +
               (corners.col(2) - corners.col(0)) * (static_cast<double>(j) / order);
      nodes.push_back({LagrangeNode::Kind::Interior, elem, sub++, p});
    }
  return nodes;
}

namespace {

/// Lagrange basis at the given physical nodes as chart polynomials.
std::vector<LocalPoly> lagrange_basis(const Mesh& mesh, int elem, int order,
                                      const std::vector<LagrangeNode>& nodes) {
  int n = poly_dim(order);
  require(static_cast<int>(nodes.size()) == n, "lagrange_basis: node count mismatch");
  Vec2 c = mesh.centroid(elem);
  double h = mesh.diameter(elem);
  Eigen::MatrixXd vander(n, n);
  Eigen::VectorXd m;
  for (int i = 0; i < n; ++i) {
    mono_values(order, (nodes[i].position - c) / h, m);
    vander.row(i) = m.transpose();
  }
  Eigen::MatrixXd coeffs = vander.partialPivLu().solve(Eigen::MatrixXd::Identity(n, n));
  std::vector<LocalPoly> basis(n);
  for (int i = 0; i < n; ++i) basis[i] = LocalPoly{c, h, order, coeffs.col(i)};
  return basis;
}

}  // namespace

LocalPoly barycentric_poly(const Mesh& mesh, int elem, int i) {
  // lambda_i is affine with lambda_i(v_j) = delta_ij.
  Vec2 c = mesh.centroid(elem);
  double h = mesh.diameter(elem);
  auto corners = mesh.corners(elem);
  Eigen::Matrix3d vander;
  Eigen::VectorXd m;
  for (int r = 0; r < 3; ++r) {
    mono_values(1, (Vec2(corners.col(r)) - c) / h, m);
    vander.row(r) = m.transpose();
  }
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  rhs[i] = 1.0;
  Eigen::Vector3d coeff = vander.partialPivLu().solve(rhs);
  return LocalPoly{c, h, 1, coeff};
}

// ---------------------------------------------------------------------------

CgSpace::CgSpace(const Mesh& mesh, int order, const ScalarFn& dirichlet)
    : FeSpace(mesh, Method::CG, order) {
  require(order >= 1, "cg: order must be >= 1");
  int per_edge = order - 1;
  int per_cell = poly_dim(order - 3 >= 0 ? order - 3 : -1);
  if (order < 3) per_cell = 0;
  int edge_offset = mesh.n_vertices();
  int cell_offset = edge_offset + per_edge * mesh.n_facets();
  n_dofs_ = cell_offset + per_cell * mesh.n_elements();

  fixed_.assign(n_dofs_, 0);
  fixed_values_ = Eigen::VectorXd::Zero(n_dofs_);

  cell_dofs_.resize(mesh.n_elements());
  cell_basis_.resize(mesh.n_elements());
  for (int k = 0; k < mesh.n_elements(); ++k) {
    auto nodes = lagrange_nodes(mesh, k, order);
    auto& dofs = cell_dofs_[k];
    dofs.reserve(nodes.size());
    for (const auto& nd : nodes) {
      switch (nd.kind) {
        case LagrangeNode::Kind::Vertex: dofs.push_back(nd.entity); break;
        case LagrangeNode::Kind::Edge:
          dofs.push_back(edge_offset + nd.entity * per_edge + nd.sub);
          break;
        case LagrangeNode::Kind::Interior:
          dofs.push_back(cell_offset + k * per_cell + nd.sub);
          break;
      }
    }
    cell_basis_[k] = lagrange_basis(mesh, k, order, nodes);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& nd = nodes[i];
      bool on_dirichlet =
          (nd.kind == LagrangeNode::Kind::Vertex && mesh.vertex_on_dirichlet(nd.entity)) ||
          (nd.kind == LagrangeNode::Kind::Edge &&
           mesh.facet(nd.entity).tag == FacetTag::Dirichlet);
      if (on_dirichlet) {
        fixed_[dofs[i]] = 1;
        fixed_values_[dofs[i]] = dirichlet(nd.position);
      }
    }
  }
}

DgSpace::DgSpace(const Mesh& mesh, int order) : FeSpace(mesh, Method::DG, order) {
  require(order >= 0, "dg: order must be >= 0");
  int nd = poly_dim(order);
  n_dofs_ = nd * mesh.n_elements();
  fixed_.assign(n_dofs_, 0);
  fixed_values_ = Eigen::VectorXd::Zero(n_dofs_);
  cell_dofs_.resize(mesh.n_elements());
  cell_basis_.resize(mesh.n_elements());
  nodes_.resize(mesh.n_elements());
  for (int k = 0; k < mesh.n_elements(); ++k) {
    cell_dofs_[k].resize(nd);
    for (int i = 0; i < nd; ++i) cell_dofs_[k][i] = k * nd + i;
    if (order == 0) {
      nodes_[k] = {{LagrangeNode::Kind::Interior, k, 0, mesh.centroid(k)}};
      cell_basis_[k] = {LocalPoly{mesh.centroid(k), mesh.diameter(k), 0,
                                  Eigen::VectorXd::Ones(1)}};
    } else {
      nodes_[k] = lagrange_nodes(mesh, k, order);
      cell_basis_[k] = lagrange_basis(mesh, k, order, nodes_[k]);
    }
  }
}

// ---------------------------------------------------------------------------

NcOddSpace::NcOddSpace(const Mesh& mesh, int order, const ScalarFn& dirichlet)
    : FeSpace(mesh, Method::NC, order) {
  require(order >= 1 && order % 2 == 1,
          "nc: only odd orders use the Gauss-Legendre moment element "
          "(order 2 is the Fortin-Soulie space; even orders > 2 are unsupported)");
  const int k_ord = order;
  m_k_ = k_ord >= 3 ? poly_dim(k_ord - 3) : 0;
  int cell_offset = k_ord * mesh.n_facets();
  n_dofs_ = cell_offset + m_k_ * mesh.n_elements();
  fixed_.assign(n_dofs_, 0);
  fixed_values_ = Eigen::VectorXd::Zero(n_dofs_);

  cell_dofs_.resize(mesh.n_elements());
  cell_basis_.resize(mesh.n_elements());

  const int n = poly_dim(k_ord);
  const auto& eq = edge_rule(2 * k_ord + 1);
  const auto& tq = triangle_rule(2 * k_ord + 2);

  for (int k = 0; k < mesh.n_elements(); ++k) {
    auto& dofs = cell_dofs_[k];
    for (int lf = 0; lf < 3; ++lf) {
      int f = mesh.element_facets(k)[lf];
      for (int j = 0; j < k_ord; ++j) dofs.push_back(facet_dof(f, j));
    }
    for (int a = 0; a < m_k_; ++a) dofs.push_back(cell_offset + k * m_k_ + a);

    Vec2 c = mesh.centroid(k);
    double h = mesh.diameter(k);
    auto corners = mesh.corners(k);

    // Interior nodal functions: Lagrange basis of P_{k-3} at the interior
    // lattice points of the degree-k lattice.
    std::vector<Vec2> interior_pts;
    for (int i = 1; i < k_ord; ++i)
      for (int j = 1; i + j < k_ord; ++j)
        interior_pts.push_back(corners.col(0) +
                               (corners.col(1) - corners.col(0)) * (double(i) / k_ord) +
                               (corners.col(2) - corners.col(0)) * (double(j) / k_ord));
    Eigen::MatrixXd nodal_coeff;  // columns: nodal basis of P_{k-3}
    if (m_k_ > 0) {
      Eigen::MatrixXd v(m_k_, m_k_);
      Eigen::VectorXd m;
      for (int r = 0; r < m_k_; ++r) {
        mono_values(k_ord - 3, (interior_pts[r] - c) / h, m);
        v.row(r) = m.transpose();
      }
      nodal_coeff = v.partialPivLu().solve(Eigen::MatrixXd::Identity(m_k_, m_k_));
    }

    // Unisolvence system: rows are the dofs (facet Legendre moments then
    // interior nodal moments) applied to the chart monomials of degree k.
    Eigen::MatrixXd dof_mat = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd m;
    for (int lf = 0; lf < 3; ++lf) {
      int f = mesh.element_facets(k)[lf];
      const Facet& fc = mesh.facet(f);
      for (std::size_t q = 0; q < eq.points.size(); ++q) {
        double t = eq.points[q];
        Vec2 x = mesh.facet_point(f, t);
        double w = eq.weights[q] * fc.length;
        mono_values(k_ord, (x - c) / h, m);
        for (int j = 0; j < k_ord; ++j)
          dof_mat.row(lf * k_ord + j) += w * legendre(j, 2.0 * t - 1.0) * m.transpose();
      }
    }
    for (std::size_t q = 0; q < tq.points.size(); ++q) {
      Vec2 ref = tq.points[q];
      Vec2 x = corners.col(0) + ref.x() * (corners.col(1) - corners.col(0)) +
               ref.y() * (corners.col(2) - corners.col(0));
      double w = tq.weights[q] * 2.0 * mesh.area(k);
      mono_values(k_ord, (x - c) / h, m);
      Eigen::VectorXd mlow;
      mono_values(k_ord - 3 >= 0 ? k_ord - 3 : 0, (x - c) / h, mlow);
      for (int a = 0; a < m_k_; ++a) {
        double p_val = nodal_coeff.col(a).dot(mlow);
        dof_mat.row(3 * k_ord + a) += w * p_val * m.transpose();
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(dof_mat);
    Eigen::MatrixXd basis_coeff = lu.solve(Eigen::MatrixXd::Identity(n, n));
    auto& basis = cell_basis_[k];
    basis.resize(n);
    for (int i = 0; i < n; ++i) basis[i] = LocalPoly{c, h, k_ord, basis_coeff.col(i)};
  }

  // Dirichlet facet moments of the boundary data.
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facet(f);
    if (fc.tag != FacetTag::Dirichlet) continue;
    for (int j = 0; j < k_ord; ++j) {
      double mom = 0;
      for (std::size_t q = 0; q < eq.points.size(); ++q) {
        double t = eq.points[q];
        mom += eq.weights[q] * fc.length * legendre(j, 2.0 * t - 1.0) *
               dirichlet(mesh.facet_point(f, t));
      }
      fixed_[facet_dof(f, j)] = 1;
      fixed_values_[facet_dof(f, j)] = mom;
    }
  }
}

const LocalPoly& NcOddSpace::facet_dual_minus(int facet, int j) const {
  const Facet& fc = mesh_->facet(facet);
  int k = fc.minus;
  int lf = mesh_->local_facet(k, facet);
  return cell_basis_[k][lf * order_ + j];
}

// ---------------------------------------------------------------------------

Fs2Space::Fs2Space(const Mesh& mesh, const ScalarFn& dirichlet)
    : FeSpace(mesh, Method::NC, 2) {
  n_dofs_ = mesh.n_vertices() + mesh.n_facets() + mesh.n_elements();
  fixed_.assign(n_dofs_, 0);
  fixed_values_ = Eigen::VectorXd::Zero(n_dofs_);

  cell_dofs_.resize(mesh.n_elements());
  cell_basis_.resize(mesh.n_elements());
  for (int k = 0; k < mesh.n_elements(); ++k) {
    std::array<LocalPoly, 3> lam = {barycentric_poly(mesh, k, 0), barycentric_poly(mesh, k, 1),
                                    barycentric_poly(mesh, k, 2)};
    auto& dofs = cell_dofs_[k];
    auto& basis = cell_basis_[k];
    for (int i = 0; i < 3; ++i) {
      dofs.push_back(hat_dof(mesh.triangle(k)[i]));
      LocalPoly hat = lam[i];
      hat.degree = 2;  // promote so all element polynomials share a degree
      Eigen::VectorXd cc = Eigen::VectorXd::Zero(poly_dim(2));
      cc.head(3) = lam[i].coeff;
      hat.coeff = cc;
      basis.push_back(hat);
    }
    for (int lf = 0; lf < 3; ++lf) {
      int f = mesh.element_facets(k)[lf];
      dofs.push_back(facet_dof(f));
      // Facet f is opposite local vertex lf: the product of the other two hats.
      int a = (lf + 1) % 3, b = (lf + 2) % 3;
      Eigen::VectorXd prod = mono_product(1, lam[a].coeff, 1, lam[b].coeff);
      basis.push_back(LocalPoly{lam[0].center, lam[0].scale, 2, 6.0 * prod});
    }
    dofs.push_back(bubble_dof(k));
    Eigen::VectorXd bub = Eigen::VectorXd::Zero(poly_dim(2));
    for (int i = 0; i < 3; ++i) bub += 3.0 * mono_product(1, lam[i].coeff, 1, lam[i].coeff);
    bub[0] -= 2.0;
    basis.push_back(LocalPoly{lam[0].center, lam[0].scale, 2, bub});
  }

  // Dirichlet data: vertex hats take nodal values; the facet coefficient
  // matches the mean of the remainder (exact whenever the boundary trace is
  // a quadratic).
  const auto& eq = edge_rule(5);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const Facet& fc = mesh.facet(f);
    if (fc.tag != FacetTag::Dirichlet) continue;
    double u0 = dirichlet(mesh.vertices()[fc.start]);
    double u1 = dirichlet(mesh.vertices()[fc.end]);
    fixed_[hat_dof(fc.start)] = 1;
    fixed_values_[hat_dof(fc.start)] = u0;
    fixed_[hat_dof(fc.end)] = 1;
    fixed_values_[hat_dof(fc.end)] = u1;
    double residual_mean = 0;
    for (std::size_t q = 0; q < eq.points.size(); ++q) {
      double t = eq.points[q];
      double lin = (1.0 - t) * u0 + t * u1;
      residual_mean += eq.weights[q] * (dirichlet(mesh.facet_point(f, t)) - lin);
    }
    fixed_[facet_dof(f)] = 1;
    fixed_values_[facet_dof(f)] = residual_mean;  // phi_F has facet mean 1
  }
}

LocalPoly Fs2Space::facet_product_minus(int facet) const {
  const Facet& fc = mesh_->facet(facet);
  int k = fc.minus;
  int lf = mesh_->local_facet(k, facet);
  LocalPoly p = cell_basis_[k][3 + lf];
  p.coeff /= 6.0;  // the paper's phi_F = product of the two hats
  return p;
}

std::shared_ptr<FeSpace> make_space(const Mesh& mesh, Method method, int order,
                                    const ScalarFn& dirichlet) {
  switch (method) {
    case Method::CG: return std::make_shared<CgSpace>(mesh, order, dirichlet);
    case Method::DG: return std::make_shared<DgSpace>(mesh, order);
    case Method::NC:
      if (order == 2) return std::make_shared<Fs2Space>(mesh, dirichlet);
      return std::make_shared<NcOddSpace>(mesh, order, dirichlet);
  }
  throw std::logic_error("make_space: bad method");
}

}  // namespace earm
