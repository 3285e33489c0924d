#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drord/covariate_model.hpp"
#include "drord/drgee.hpp"
#include "drord/migee.hpp"
#include "drord/missingness.hpp"
#include "drord/rng.hpp"
#include "drord/types.hpp"
#include "drord/wgee.hpp"

namespace drord {

enum class Method { complete, available, wgee, migee, drgee };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

// One simulation scenario: a longitudinal ordinal response with a binary
// time-varying covariate, an autocorrelated latent response process, and
// monotone-free intermittent missingness of whole occasions.
struct ScenarioConfig {
  int n = 600;
  int S = 200;
  int T = 3;
  int J = 3;
  int p_z = 1;
  double rho = 0.9;  // latent equicorrelation of the response copula

  // response: cumulative logits beta_0j + beta_x x + beta_z z
  Vec beta_truth;   // packed [intercepts (J-1), beta_x, beta_z]
  Vec gamma_truth;  // covariate chain [intercept, lag x, z]
  // missingness: logit P(occasion observed) over
  // [occasion intercepts (T-1), lagged zero-filled response, lagged
  //  zero-filled covariate, z]
  Vec psi_truth;

  bool r_misspec = false;  // drop the lagged covariate from the fitted missingness model
  bool x_misspec = false;  // drop the lagged covariate from the fitted chain / imputation models
  std::vector<Method> methods{Method::complete, Method::available, Method::wgee, Method::migee,
                              Method::drgee};
  std::uint64_t seed = 20240701;

  int migee_M = 10;
  int migee_cycles = 10;
  bool dr_smoothed = false;
  SolverConfig solver;

  ScenarioConfig();  // fills the truth vectors with the reference values
  void validate() const;
};

// Generators for one subject; each consumes the stream in a fixed order.
std::vector<Vec> gen_z(RngStream& rng, int T, int p_z = 1);           // z_t ~ N(0.5 t, I)
std::vector<double> gen_x(RngStream& rng, const Vec& gamma, const std::vector<Vec>& z);
std::vector<int> gen_ordinal(RngStream& rng, const OrdinalSpec& spec, const Vec& beta, double rho,
                             const std::vector<double>& x, const std::vector<Vec>& z);
// Occasion observation indicators (first occasion always observed); lagged
// response/covariate terms are zero-filled by the realized indicators.
std::vector<int> gen_missingness(RngStream& rng, const Vec& psi, const std::vector<int>& o,
                                 const std::vector<double>& x, const std::vector<Vec>& z);

// Fully observed subject plus its masked copy.
struct GeneratedSubject {
  SubjectRecord full;
  SubjectRecord masked;
};
GeneratedSubject gen_subject(RngStream& rng, const ScenarioConfig& cfg, const std::string& id);

struct MethodSummary {
  Method method = Method::complete;
  int n_reps = 0;
  int n_converged = 0;
  Vec bias_pct;   // mean of 100 (est - truth) / truth, converged reps
  Vec mc_sd;      // sd of the estimates over converged reps
  Vec mean_se;    // mean sandwich/pooled standard error
  Vec coverage;   // 95% Wald coverage of the truth
  // raw per-rep results (row = replication; non-converged rows are NaN)
  Mat estimates;
  Mat ses;
  std::vector<bool> converged;
};

struct SimResult {
  ScenarioConfig cfg;
  std::vector<MethodSummary> methods;
  double miss_rate_at_risk = 0.0;  // unobserved share of occasions 2..T
  double miss_rate_overall = 0.0;  // unobserved share of all occasions
};

// Run S replications (optionally on `jobs` threads; the output is identical
// for any job count) and summarize per method.
SimResult run_simulation(const ScenarioConfig& cfg, int jobs = 1);

}  // namespace drord
