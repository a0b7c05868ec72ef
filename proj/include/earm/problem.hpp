// Diffusion problem definitions (piecewise-constant SPD tensor, source,
// boundary data) and the benchmark catalog used by convergence and
// robustness studies.

#pragma once

#include "earm/mesh.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace earm {

using ScalarFn = std::function<double(const Vec2&)>;
using VectorFn = std::function<Vec2(const Vec2&)>;
using TensorFn = std::function<Mat2(const Vec2&)>;

struct ExactSolution {
  ScalarFn value;
  VectorFn gradient;
};

struct DiffusionProblem {
  /// SPD tensor, piecewise constant per element (sampled at centroids).
  TensorFn tensor;
  ScalarFn source;
  /// Neumann flux density g = -A grad(u) . n on Gamma_N.
  ScalarFn neumann;
  /// Dirichlet boundary values (zero for the homogeneous model problem).
  ScalarFn dirichlet;
  std::optional<ExactSolution> exact;

  static DiffusionProblem poisson(ScalarFn f);
};

/// Per-mesh cache of the coefficient: element tensors, their extreme
/// eigenvalues, and the matrix functions the estimators need.
class Coefficient {
 public:
  Coefficient(const Mesh& mesh, const DiffusionProblem& problem);

  const Mat2& tensor(int k) const { return a_[k]; }
  const Mat2& inverse(int k) const { return a_inv_[k]; }
  const Mat2& inv_sqrt(int k) const { return a_inv_sqrt_[k]; }
  const Mat2& sqrt(int k) const { return a_sqrt_[k]; }
  /// Largest eigenvalue of A_K (the paper's alpha).
  double alpha(int k) const { return alpha_[k]; }

 private:
  std::vector<Mat2> a_, a_inv_, a_inv_sqrt_, a_sqrt_;
  std::vector<double> alpha_;
};

struct AlphaWeights {
  double w_plus = 0, w_minus = 1;        // averaging weights
  double alpha_plus = 0, alpha_minus = 0;
  double alpha_min = 0, alpha_max = 0;
  /// min(alpha+, alpha-) on interior facets, alpha- on Dirichlet ones
  /// (the A_F of the orthogonal-complement mapping).
  double a_f = 0;
};

/// Weights of the coefficient-weighted facet average; on boundary facets
/// the existing side carries weight one.
AlphaWeights alpha_weights(const Mesh& mesh, const Coefficient& coeff, int facet);

struct BenchmarkCase {
  std::string name;
  std::function<Mesh(int refinement_level)> mesh_for_level;
  DiffusionProblem problem;
};

/// Named catalog entries; `jump` is the checkerboard kappa.
BenchmarkCase make_benchmark(const std::string& name, double jump = 1.0);
std::vector<std::string> benchmark_names();
std::vector<BenchmarkCase> benchmark_catalog(double jump = 1.0);

}  // namespace earm
