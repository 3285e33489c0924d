#pragma once

#include <string>
#include <vector>

#include "drord/covariate_model.hpp"
#include "drord/gee_solver.hpp"
#include "drord/missingness.hpp"
#include "drord/po_reg.hpp"
#include "drord/types.hpp"

namespace drord {

// Response predictive models used by the augmented estimator: one
// cumulative-logit regression per occasion t >= 2 of O_t on the lagged
// response indicators I(O_{t-1} = 2..J), the current covariate and z.
struct ThetaParams {
  int J = 2;
  int p_z = 1;
  std::vector<PoReg> per_occ;  // index t - 2 for occasions t = 2..T

  int n_features() const { return (J - 1) + 1 + p_z; }
};

Vec theta_features(const ThetaParams& theta, int o_prev, double x, const Vec& z);

// Category distribution of O_t given the previous response, x and z.
Vec theta_probs(const ThetaParams& theta, int t /*0-based, >= 1*/, int o_prev, double x,
                const Vec& z);

struct ThetaFit {
  ThetaParams theta;
  std::vector<PoRegFit> fits;  // per occasion, same indexing
};

// Fit the predictive models on pairs of adjacent fully observed occasions.
ThetaFit fit_theta(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec);

// Complement of the weighted kernel: (1 - delta) * Vinv(mu), so that
// m_matrix + n_matrix is exactly Vinv for any delta.
Mat n_matrix(const Vec& mu, double delta);

enum class BetaStarRule {
  antedependence,   // predictive response models fit once from the data
  current_iterate,  // working means at the current beta, refreshed each step
};

struct AugmentationConfig {
  int enumeration_cap = 4096;  // max completion configurations enumerated exactly
  int mc_draws = 1000;         // fallback sample size above the cap
  BetaStarRule beta_star_rule = BetaStarRule::antedependence;
  // Missing-occasion expectations conditioned on later observed data as well
  // (default uses the history up to each occasion only).
  bool smoothed = false;
};

// Expected score contribution of one record's incomplete occasions, averaging
// the occasion scores at beta over completions of the missing cells: missing
// covariates follow their conditional distribution under the fitted chain and
// missing responses follow independent multinomials at the working means
// mu(x; beta_star). Exact enumeration up to the cap, otherwise Monte Carlo
// (rng required). Fully observed records return zero.
Vec augmentation_term(const OrdinalSpec& spec, const BetaParams& beta,
                      const BetaParams& beta_star, const CovariateModel& cov_model,
                      const SubjectRecord& subj, const AugmentationConfig& cfg = {},
                      RngStream* rng = nullptr);

// Per-subject completion tables: for each occasion t >= 2, the predictive
// (or smoothed, for missing occasions) distribution over that occasion's
// (response, covariate) cell, aggregated over the response dimension so the
// expected occasion score needs one mean evaluation per support value.
struct XCell {
  double x = 0.0;
  double wx = 0.0;  // total cell mass at this covariate value
  Vec ebar;         // sum of mass * indicator encoding over response values
};

struct SubjectTables {
  std::vector<std::vector<XCell>> cells;  // [t]; empty at t = 0
};

struct DrPrepared {
  std::vector<SubjectTables> tables;
  std::vector<Vec> delta;  // inverse-probability weights per subject/occasion
};

DrPrepared dr_prepare(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                      const MissingnessModel& miss, const CovariateModel& cov_model,
                      const ThetaParams& theta, const AugmentationConfig& cfg = {});

// One subject's augmented inverse-probability-weighted score at beta.
Vec dr_subject_score(const OrdinalSpec& spec, const Vec& beta, const SubjectRecord& subj,
                     const SubjectTables& tables, const Vec& delta);

struct DrgeeFit {
  FitResult fit;
  PsiFit psi;
  GammaFit gamma;
  ThetaParams theta;
  std::vector<std::string> warnings;
};

// Doubly robust fit: estimates the missingness model, the covariate chain and
// the response predictives, then solves the augmented weighted equations with
// a numeric Jacobian. The covariance accounts for the estimated missingness
// and covariate-chain parameters.
DrgeeFit drgee_fit(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                   MissingnessModel miss_proto, CovariateModel cov_proto,
                   const AugmentationConfig& aug = {}, const SolverConfig& cfg = {});

// Sandwich covariance of the augmented estimator at beta_hat, with plug-in
// corrections for the missingness and covariate-chain scores.
Mat dr_sandwich(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                const Vec& beta_hat, const PsiFit& psi, const GammaFit& gamma,
                const ThetaParams& theta, const AugmentationConfig& cfg = {});

}  // namespace drord
