// Scalar finite element spaces for the three discretizations. Every space
// exposes its element-local basis as polynomials in the element chart, so
// assembly, evaluation, and the recovery formulas share one code path.
//
//  - CgSpace: continuous Lagrange elements of order k.
//  - DgSpace: discontinuous Lagrange elements of order k.
//  - NcOddSpace: nonconforming elements of odd order with the Gauss-Legendre
//    moment degrees of freedom; the local shape functions are dual to the
//    facet Legendre moments and the interior nodal moments.
//  - Fs2Space: the second-order Fortin-Soulie element spanned by vertex
//    hats, facet functions 6*lambda_a*lambda_b, and the nonconforming
//    bubble 3*sum(lambda^2) - 2 (normalized so the facet functions and the
//    bubble partition unity on each element).

#pragma once

#include "earm/poly.hpp"
#include "earm/problem.hpp"

#include <memory>

namespace earm {

enum class Method { CG, NC, DG };
std::string method_name(Method m);

struct LagrangeNode {
  enum class Kind { Vertex, Edge, Interior } kind = Kind::Interior;
  int entity = -1;  // global vertex or facet id
  int sub = 0;      // index along the facet (edge nodes) or lattice index
  Vec2 position = Vec2::Zero();
};

/// Lagrange lattice of element k for order `order`: 3 vertex nodes, then
/// order-1 interior nodes per local facet (ordered along the global facet
/// from start to end), then the interior lattice nodes.
std::vector<LagrangeNode> lagrange_nodes(const Mesh& mesh, int elem, int order);

class FeSpace {
 public:
  FeSpace(const Mesh& mesh, Method method, int order)
      : mesh_(&mesh), method_(method), order_(order) {}
  virtual ~FeSpace() = default;

  const Mesh& mesh() const { return *mesh_; }
  Method method() const { return method_; }
  int order() const { return order_; }
  int n_dofs() const { return n_dofs_; }

  const std::vector<int>& cell_dofs(int k) const { return cell_dofs_[k]; }
  const std::vector<LocalPoly>& cell_basis(int k) const { return cell_basis_[k]; }

  bool dof_fixed(int dof) const { return fixed_[dof] != 0; }
  const Eigen::VectorXd& fixed_values() const { return fixed_values_; }

 protected:
  const Mesh* mesh_;
  Method method_;
  int order_;
  int n_dofs_ = 0;
  std::vector<std::vector<int>> cell_dofs_;
  std::vector<std::vector<LocalPoly>> cell_basis_;
  std::vector<char> fixed_;
  Eigen::VectorXd fixed_values_;
};

class CgSpace : public FeSpace {
 public:
  CgSpace(const Mesh& mesh, int order, const ScalarFn& dirichlet);
};

class DgSpace : public FeSpace {
 public:
  DgSpace(const Mesh& mesh, int order);
  const std::vector<LagrangeNode>& nodes(int elem) const { return nodes_[elem]; }

 private:
  std::vector<std::vector<LagrangeNode>> nodes_;
};

class NcOddSpace : public FeSpace {
 public:
  NcOddSpace(const Mesh& mesh, int order, const ScalarFn& dirichlet);

  /// Global dof of the moment against L_{j,F}.
  int facet_dof(int facet, int j) const { return facet * order_ + j; }
  int n_interior_per_element() const { return m_k_; }

  /// The dual edge basis function phi_{j,F} restricted to K_F^- (the
  /// paper's phi^-), as a local polynomial on that element.
  const LocalPoly& facet_dual_minus(int facet, int j) const;

 private:
  int m_k_ = 0;
};

class Fs2Space : public FeSpace {
 public:
  Fs2Space(const Mesh& mesh, const ScalarFn& dirichlet);

  int hat_dof(int vertex) const { return vertex; }
  int facet_dof(int facet) const { return mesh_->n_vertices() + facet; }
  int bubble_dof(int elem) const { return mesh_->n_vertices() + mesh_->n_facets() + elem; }

  /// The paper's facet function (product of the two hats, integral |F|/6)
  /// restricted to K_F^-.
  LocalPoly facet_product_minus(int facet) const;
};

/// Barycentric hat of local vertex i on element k, as a chart polynomial.
LocalPoly barycentric_poly(const Mesh& mesh, int elem, int i);

std::shared_ptr<FeSpace> make_space(const Mesh& mesh, Method method, int order,
                                    const ScalarFn& dirichlet);

}  // namespace earm
