// Error indicators from the recovered flux, the brute-force constrained
// least-squares oracle, and the reliability / efficiency reporting.

#pragma once

#include "earm/earm.hpp"

#include <string>
#include <vector>

namespace earm {

struct EstimatorReport {
  std::vector<double> eta_elem;   // eta_{sigma,K}
  double eta = 0;                 // sqrt of the sum of squares
  double error = -1.0;            // broken energy error; -1 if no exact data
  double effectivity = -1.0;      // eta / error
  std::vector<double> osc_elem;   // h_K ||f - f_s||_K
  double osc = 0;                 // h-weighted global oscillation
  double osc_plain = 0;           // ||f - f_s|| (enters the reliability bound)
  double g_defect = 0;            // ||g - g_{s,F}|| over Gamma_N
  double max_div_residual = 0;
  double max_trace_jump = 0;
  double max_neumann_defect = 0;

  // Run metadata for the CSV report.
  int level = 0;
  double h_max = 0;
  int n_dofs = 0;
  double kappa = 1.0;
  std::string method, recovery;
  int order = 1, rt_index = 0;
};

/// eta_{sigma,K} = ||A^(-1/2)(sigma_hat + A grad u_h)||_K and the derived
/// global quantities; fills the effectivity when exact data is present.
EstimatorReport indicator(const FemSolution& u, const RecoveryResult& rec);

/// Global objective ||A^(-1/2)(tau + A grad_h u_h)|| of an arbitrary RT
/// field (equals the estimator of that field).
double flux_objective(const FemSolution& u, const RtFlux& flux);

/// Equality-constrained least squares: minimizes the objective above over
/// RT(T_h, space_index) subject to the elementwise P_s divergence moments
/// and the Neumann trace, i.e. over the discrete RT_f(T_h, space_index, s).
/// space_index < 0 means space_index = s. KKT solve; throws if the
/// constraint residual survives.
RtFlux oracle_equilibrated_flux(const FemSolution& u, int s, int space_index = -1);

struct ReliabilityResult {
  bool applicable = false;  // conforming method with exact data
  bool pass = false;
  double minimal_c = 0;     // smallest c with error^2 <= eta^2 + c osc^2
  double error = 0, eta = 0, osc = 0;
};

/// For CG methods checks error^2 <= eta^2 + c_cap * ||f - f_s||^2 and
/// reports the minimal c; informational for NC/DG (conforming bound only).
ReliabilityResult reliability_check(const EstimatorReport& report, double c_cap = 1.0);

struct EfficiencyRow {
  int level = 0;
  double h_max = 0, kappa = 1, error = 0, eta = 0, effectivity = 0;
  double max_local_ratio = 0;  // eta_K over the patch-local energy error
};

/// Effectivity table over refinement levels and a kappa sweep; rows fit the
/// CSV schema of the runner.
std::vector<EfficiencyRow> efficiency_study(const std::string& benchmark, Method method,
                                            int order, Recovery recovery,
                                            const std::vector<double>& kappas, int levels,
                                            int base_level = 0);

/// Robustness regression flag: true when the effectivity at any level
/// varies by more than `factor` across the kappa values of the table.
bool effectivity_drift_exceeds(const std::vector<EfficiencyRow>& rows, double factor = 2.0);

}  // namespace earm
