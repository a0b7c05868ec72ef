// Step 1 of the recovery algorithm: the weighted averaging flux in
// RT(T_h, s) built from coefficient-weighted averages of the numerical
// flux's facet traces, with Neumann facets carrying the projected data.

#pragma once

#include "earm/fem.hpp"
#include "earm/rt_space.hpp"

namespace earm {

/// Facet moments: for F not in E_N and phi in P_s(F),
///   int_F sigma.n phi = -int_F {A grad(u_h).n}_w phi;
/// on E_N the moments of g. Interior moments (s >= 1):
///   (sigma, psi)_K = -(A grad(u_h), psi)_K.
RtFlux weighted_averaging_flux(const FemSolution& u, const RtSpace& rt);

/// Convenience overload building the RT space for index s (0 <= s <= k).
RtFlux weighted_averaging_flux(const FemSolution& u, int s);

}  // namespace earm
