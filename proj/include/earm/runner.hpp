// Batch experiment driver: solve -> recover -> estimate -> (optionally)
// adapt, with reproducible CSV output, plus the `verify` invariant suite.

#pragma once

#include "earm/estimator.hpp"

#include <iosfwd>

namespace earm {

struct RunConfig {
  std::string problem = "smooth";
  double jump = 1.0;
  Method method = Method::CG;
  int order = 1;
  Recovery recovery = Recovery::CgOrth;
  int rt_index = -1;   // -1: recovery default
  double gamma = 0.0;  // <= 0: DG default 10 (k+1)^2
  double delta = -1.0;
  bool adaptive = false;
  double theta = 0.5;
  int levels = 1;
  std::string out_dir;
  std::uint64_t seed = 0;

  /// Throws naming the incompatible pair on bad combinations.
  void validate() const;
};

/// Smallest element set with sum(eta_K^2) >= theta^2 * eta^2; ties in
/// eta_K^2 are broken by element id.
std::vector<int> dorfler_mark(const std::vector<double>& eta_elem, double theta);

/// Runs the configured study and returns one report per level; writes
/// report.csv and per-level mesh snapshots into out_dir when set.
std::vector<EstimatorReport> run(const RunConfig& config);

void write_csv(std::ostream& out, const std::vector<EstimatorReport>& reports);

/// Invariant suite on small fixed meshes; prints one margin line per
/// invariant and returns the number of violations. `flip_sign` corrupts
/// one facet sign first (test hook demonstrating the checks trip).
int verify(double jump, bool flip_sign, std::ostream& out);

}  // namespace earm
