#pragma once

#include <cstdint>
#include <vector>

#include "drord/gee_solver.hpp"
#include "drord/rng.hpp"
#include "drord/types.hpp"

namespace drord {

struct ImputationConfig {
  int M = 10;       // completed datasets, >= 2
  int cycles = 10;  // full passes over the incomplete columns per dataset
  std::uint64_t rng_seed = 1;
  // Misspecified variant: the previous-occasion covariate column is removed
  // from every imputation model's predictor set.
  bool drop_lag_x = false;

  void validate() const {
    if (M < 2) throw InvalidParameter("ImputationConfig: M must be at least 2");
    if (cycles < 1) throw InvalidParameter("ImputationConfig: cycles must be at least 1");
  }
};

// Fully conditional specification on the wide layout (one row per subject,
// columns O_1, X_1, ..., O_T, X_T plus the always-observed Z's). Incomplete
// columns are visited in time order, response before covariate, for `cycles`
// passes; each column model is a cumulative-logit regression fit to the
// originally observed rows, with a normal-approximation parameter draw before
// imputing. Returns M completed copies of the data.
std::vector<std::vector<SubjectRecord>> fcs_impute(const std::vector<SubjectRecord>& data,
                                                   const OrdinalSpec& spec,
                                                   const ImputationConfig& config,
                                                   std::vector<double> x_support = {});

struct PooledFit {
  Vec beta;
  Mat cov;      // within + (1 + 1/M) between
  Mat within;   // mean of the per-dataset covariances
  Mat between;  // sample covariance of the estimates (divisor M - 1)
};

PooledFit pool_rubin(const std::vector<Vec>& estimates, const std::vector<Mat>& covs);

struct MigeeFit {
  FitResult fit;
  Mat within;
  Mat between;
  int M = 0;
};

// Impute M times, fit the independence GEE on each completed dataset, and
// combine the estimates and covariances.
MigeeFit migee_fit(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                   const ImputationConfig& config, const SolverConfig& cfg = {},
                   std::vector<double> x_support = {});

}  // namespace drord
