#pragma once

#include <functional>

#include "drord/ordinal_core.hpp"
#include "drord/types.hpp"

namespace drord {

struct SolverConfig {
  double tol = 1e-8;  // applied to both the score norm and the step norm
  int max_iter = 100;
  int step_halvings = 20;
};

struct FitResult {
  Vec beta_hat;
  Mat cov;
  int iterations = 0;
  bool converged = false;
  double score_norm = std::numeric_limits<double>::quiet_NaN();
};

using ScoreFn = std::function<Vec(const Vec&)>;
using JacFn = std::function<Mat(const Vec&)>;

struct SolveInfo {
  int iterations = 0;
  double score_norm = std::numeric_limits<double>::quiet_NaN();
};

// Damped Newton on a generic estimating equation. Throws SingularSystem when
// the Jacobian is not invertible and NonConvergence (carrying the last
// iterate) when max_iter is exhausted.
Vec solve(const ScoreFn& score, const JacFn& jac, Vec init, const SolverConfig& cfg = {},
          SolveInfo* info = nullptr);

enum class FitMode { complete, available };

// U and the Fisher-style curvature sum_i sum_t w_it D' Vinv D for the
// independence working correlation. weights[i][t] scales occasion t of
// subject i; pass nullptr for unit weights. Occasions with missing (o, x) are
// skipped (their weight must be irrelevant or zero).
struct GeeParts {
  Vec U;
  Mat fisher;
};
GeeParts gee_parts(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                   const Vec& beta, const std::vector<Vec>* weights = nullptr);

// Per-subject score contribution g_i = sum_t w_it D' Vinv (y - mu).
Vec subject_score(const SubjectRecord& subj, const OrdinalSpec& spec, const Vec& beta,
                  const Vec* weights = nullptr);

// Starting values: intercepts from pooled empirical cumulative logits of the
// observed response, slopes zero.
Vec init_beta(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec);

// Independence-GEE fit. mode == complete requires fully observed data;
// mode == available uses occasions where both o and x are present.
FitResult gee_fit(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                  const SolverConfig& cfg = {}, FitMode mode = FitMode::available);

// Sigma0^{-1} Sigma1 Sigma0^{-1} with Sigma1 built from observed residuals.
Mat sandwich_cov(const Vec& beta_hat, const std::vector<SubjectRecord>& data,
                 const OrdinalSpec& spec, FitMode mode = FitMode::available);

}  // namespace drord
