#pragma once

#include "drord/types.hpp"

// Proportional-odds kernels: cumulative and category probabilities, indicator
// encoding, per-occasion mean/variance blocks and the analytic Jacobian D.
// Linear predictors are clamped to |eta| <= 35 and category probabilities are
// floored at 1e-12 so V stays invertible at extreme inputs.

namespace drord {

inline constexpr double kEtaClamp = 35.0;
inline constexpr double kProbFloor = 1e-12;

// Per-occasion moment block for the (J-1)-vector of category indicators.
struct MeanBlock {
  Vec mu;     // category probs for j = 1..J-1
  Vec fdiag;  // marginal indicator variances mu_j (1 - mu_j)
  Mat V;      // diag(mu) - mu mu'
};

double expit(double v);

// Cumulative probabilities P(O <= j), j = 1..J-1.
Vec cumulative_probs(const BetaParams& beta, double x, const Vec& z);

// Category probabilities P(O = j), j = 1..J-1 (category J implied).
Vec category_probs(const BetaParams& beta, double x, const Vec& z);

// Indicator encoding Y_j = I(O = j), j = 1..J-1; all-zero iff o == J.
Vec encode_indicators(int o, int J);

MeanBlock mean_block(const BetaParams& beta, double x, const Vec& z);

// Closed-form inverse of diag(mu) - mu mu': diag(1/mu_j) + (1/mu_J) 11'.
Mat v_inverse(const Vec& mu);

// D = d mu / d beta', rows j = 1..J-1, columns in BetaParams::to_vector order.
struct OccasionDerivs {
  MeanBlock blk;
  Mat D;  // (J-1) x n_beta
};
OccasionDerivs occasion_derivs(const OrdinalSpec& spec, const BetaParams& beta,
                               double x, const Vec& z);

// Whole-subject means and Jacobians. Occasions where x is missing require an
// override value (used by the augmented estimators when enumerating
// completions); without one such occasions raise DataError.
struct SubjectModel {
  std::vector<MeanBlock> blocks;
  std::vector<Mat> D;
};
SubjectModel mean_and_jacobian(const OrdinalSpec& spec, const BetaParams& beta,
                               const SubjectRecord& subj,
                               const std::vector<std::optional<double>>* x_override = nullptr);

}  // namespace drord
