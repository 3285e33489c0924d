#pragma once

#include <vector>

#include "drord/gee_solver.hpp"
#include "drord/po_reg.hpp"
#include "drord/rng.hpp"
#include "drord/types.hpp"

namespace drord {

// Predictors entering the covariate transition model, in packing order.
struct CovRecipe {
  bool lag_x = true;
  bool z_term = true;
  bool y_history = false;  // lagged response value, zero-filled when unobserved
};

// First-order antedependence model for a discrete time-varying covariate.
// Transitions follow a proportional-odds regression on the support values:
//   P(X_t <= support[k] | features) = expit(po.cuts[k] - po.slopes' features)
// so for binary support {0,1} this is the logistic model
//   P(X_t = 1) = expit(-po.cuts[0] + po.slopes' features).
struct CovariateModel {
  std::vector<double> support;  // sorted ascending, size >= 2
  CovRecipe recipe;
  double x0 = 0.0;  // deterministic pre-baseline value feeding the first transition
  int p_z = 1;
  PoReg po;

  int n_features() const {
    return (recipe.lag_x ? 1 : 0) + (recipe.z_term ? p_z : 0) + (recipe.y_history ? 1 : 0);
  }
  int n_params() const { return static_cast<int>(support.size()) - 1 + n_features(); }
  void init_zero() {
    po.K = static_cast<int>(support.size());
    po.cuts = Vec::Zero(po.K - 1);
    // strictly increasing start so probabilities are valid
    for (int k = 0; k < po.K - 1; ++k) po.cuts[k] = 1e-3 * k;
    po.slopes = Vec::Zero(n_features());
  }
  void validate() const;
  int support_index(double x) const;  // DataError if x is not a support value
};

// Feature row for the transition into occasion t (0-based); lag values are
// taken from the actual data and zero-filled when the lagged cell is missing.
// For t == 0 the lag-x feature is model.x0 and lagged response is zero-filled.
Vec cov_features(const CovariateModel& model, const SubjectRecord& subj, int t);

// Transition distribution over the support given a feature row.
Vec conditional_x_prob(const CovariateModel& model, const Vec& features);

// Log-likelihood of the observed X values in one record, marginalized over
// the missing ones by a forward recursion along the chain.
double observed_loglik(const CovariateModel& model, const SubjectRecord& subj);

// Score of observed_loglik w.r.t. the packed parameters; exact, computed from
// smoothed transition posteriors (forward-backward) rather than differencing.
Vec gamma_subject_score(const CovariateModel& model, const SubjectRecord& subj);

struct GammaFit {
  CovariateModel model;
  Mat cov;
  int iterations = 0;
  bool converged = false;
  double score_norm = 0.0;
};

// Observed-data maximum likelihood for the transition parameters.
GammaFit fit_gamma(const std::vector<SubjectRecord>& data, CovariateModel proto,
                   const SolverConfig& cfg = SolverConfig());

// Posterior over the missing X cells of one record given the observed ones,
// under the fitted chain.  Exact enumeration up to `cap` configurations,
// otherwise `draws` forward-filter backward-sample draws (rng required).
struct XPosterior {
  std::vector<int> missing_idx;          // occasions (0-based) with X missing
  std::vector<std::vector<double>> configs;  // one value per missing occasion
  Vec w;                                 // posterior weights, sum to 1
};

XPosterior conditional_missing_x_dist(const CovariateModel& model, const SubjectRecord& subj,
                                      int cap = 1024, RngStream* rng = nullptr, int draws = 512);

}  // namespace drord
