// Quadrature rules on the reference triangle {x,y >= 0, x+y <= 1} and the
// reference edge [0,1], exact to a requested polynomial degree.

#pragma once

#include "earm/util.hpp"

#include <vector>

namespace earm {

struct EdgeQuadrature {
  int degree = 0;                // exact for polynomials up to this degree
  std::vector<double> points;    // in [0,1]
  std::vector<double> weights;   // sum to 1
};

struct TriangleQuadrature {
  int degree = 0;
  std::vector<Vec2> points;      // reference coordinates
  std::vector<double> weights;   // sum to 1/2 (reference area)
};

/// Gauss-Legendre rule on [0,1], exact through `degree`.
const EdgeQuadrature& edge_rule(int degree);

/// Collapsed (Duffy) Gauss product rule, exact through `degree`.
const TriangleQuadrature& triangle_rule(int degree);

}  // namespace earm
