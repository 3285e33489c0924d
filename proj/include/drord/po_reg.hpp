#pragma once

#include "drord/gee_solver.hpp"
#include "drord/types.hpp"

// Plain cumulative-logit regression on a design matrix, used wherever a
// categorical column is regressed on observed features (imputation engine,
// response predictive models). Convention: categories 0..K-1 and
// P(cat <= k | row) = expit(cuts[k] - slopes'row). K = 2 is logistic
// regression on I(cat = 1).

namespace drord {

struct PoReg {
  int K = 2;
  Vec cuts;    // K-1, increasing
  Vec slopes;  // q
};

Vec po_pack(const PoReg& m);
PoReg po_unpack(const Vec& theta, int K, int q);

Vec po_probs(const PoReg& m, const Vec& row);  // length K, floored at 1e-12

double po_loglik(const Vec& theta, int K, const Mat& X, const std::vector<int>& y);
Vec po_score(const Vec& theta, int K, const Mat& X, const std::vector<int>& y);
// Expected (Fisher) information at theta given the design.
Mat po_info(const Vec& theta, int K, const Mat& X);

struct PoRegFit {
  PoReg model;
  Mat cov;  // inverse Fisher information at the fit
  int iterations = 0;
  bool converged = false;
  double score_norm = std::numeric_limits<double>::quiet_NaN();
};

PoRegFit po_fit(const Mat& X, const std::vector<int>& y, int K, const SolverConfig& cfg = {});

}  // namespace drord
