#pragma once

#include <vector>

#include "drord/gee_solver.hpp"
#include "drord/missingness.hpp"
#include "drord/types.hpp"

namespace drord {

// Occasion-level weighted kernel delta * Vinv(mu). delta is the inverse
// probability weight (0 for unobserved occasions).
Mat m_matrix(const Vec& mu, double delta);

struct WgeeFit {
  FitResult fit;   // beta estimate with missingness-corrected sandwich cov
  PsiFit psi;      // fitted missingness model (valid when psi_fitted)
  bool psi_fitted = false;
  std::vector<Vec> weights;  // per subject, per occasion: delta/pi
};

// Inverse-probability-weighted independence GEE: fits the missingness model
// by maximum likelihood, weights each fully observed occasion by 1/pi, and
// solves the weighted equations. The covariance accounts for the estimated
// missingness parameters. Fully observed data reduce to the plain GEE fit.
WgeeFit wgee_fit(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                 MissingnessModel miss_proto, const SolverConfig& cfg = {});

}  // namespace drord
