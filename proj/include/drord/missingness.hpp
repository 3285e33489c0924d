#pragma once

#include "drord/gee_solver.hpp"
#include "drord/types.hpp"

// Missingness coding R in {0,1,2,3}, politomic logistic model for the
// one-step probabilities lambda, its ML fit, the marginalized observation
// probabilities pi, and the inverse-probability weight matrix.

namespace drord {

// 3 = both observed, 2 = only response observed, 1 = only covariate observed,
// 0 = neither.
int encode_R(const Occasion& oc);
std::vector<int> encode_R(const SubjectRecord& subj);

// Feature recipe for the one-step model at occasions t >= 2. History terms
// are zero-filled: a lagged value enters as itself when observed and as 0
// otherwise, so features depend only on actually observed data.
struct MissRecipe {
  bool time_intercepts = true;  // one indicator per occasion 2..T
  bool lag_r = false;           // I(R_{t-1} = 1)
  bool lag_o_star = true;       // zero-filled previous response
  bool lag_x_star = true;       // zero-filled previous covariate
  bool z = true;                // current-occasion z
};

struct MissingnessModel {
  bool binary = true;  // binary-R mode: categories {0,3} only
  MissRecipe recipe;
  int T = 3;
  int p_z = 1;
  // Coefficients per non-reference category over the recipe features, in the
  // order [time intercepts, lag_r, lag_o_star, lag_x_star, z...]. Binary mode
  // keeps a single row (category 3); politomic mode rows are categories 1,2,3.
  Mat psi;
  std::vector<bool> active{true, true, true};  // politomic categories 1..3

  int n_features() const {
    return (recipe.time_intercepts ? T - 1 : 0) + (recipe.lag_r ? 1 : 0) +
           (recipe.lag_o_star ? 1 : 0) + (recipe.lag_x_star ? 1 : 0) + (recipe.z ? p_z : 0);
  }
  int n_rows() const { return binary ? 1 : 3; }
  void init_zero() { psi = Mat::Zero(n_rows(), n_features()); }
};

// Feature vector for occasion t (0-based, t >= 1). lag_r_state = -1 takes the
// previous R from rcodes; otherwise the supplied hypothetical state is used
// (history marginalization). Zero-filled O*/X* always follow rcodes.
Vec miss_features(const MissingnessModel& model, const SubjectRecord& subj,
                  const std::vector<int>& rcodes, int t, int lag_r_state = -1);

// One-step probabilities (lambda_0, lambda_1, lambda_2, lambda_3).
Vec lambda_probs(const MissingnessModel& model, const Vec& features, int t);

struct PsiFit {
  MissingnessModel model;
  Mat cov;  // over the packed active coefficients
  int iterations = 0;
  bool converged = false;
  double score_norm = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

Vec psi_pack(const MissingnessModel& model);
void psi_unpack(MissingnessModel& model, const Vec& packed);

// Per-subject score of the politomic log likelihood at the packed psi.
Vec psi_subject_score(const MissingnessModel& model, const SubjectRecord& subj);

PsiFit fit_psi(const std::vector<SubjectRecord>& data, MissingnessModel proto,
               const SolverConfig& cfg = {});

// P(R_t = 3) per occasion, marginalized over the missing-state history by a
// forward recursion; occasion 1 must be fully observed. eps is the positivity
// floor: any pi below it raises PositivityViolation.
Vec marginal_pi(const MissingnessModel& model, const SubjectRecord& subj, double eps = 1e-4);

struct WeightMatrix {
  Vec pi;     // per occasion
  Vec delta;  // I(R_t = 3) / pi_t
};
WeightMatrix weight_matrix(const MissingnessModel& model, const SubjectRecord& subj,
                           double eps = 1e-4);

}  // namespace drord
