#include "drord/simgen.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "drord/gee_solver.hpp"
#include "drord/ordinal_core.hpp"

namespace drord {

std::string method_name(Method m) {
  switch (m) {
    case Method::complete: return "complete";
    case Method::available: return "available";
    case Method::wgee: return "wgee";
    case Method::migee: return "migee";
    case Method::drgee: return "drgee";
  }
  throw InvalidParameter("unknown method");
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::complete, Method::available, Method::wgee, Method::migee,
                   Method::drgee})
    if (method_name(m) == name) return m;
  throw ConfigError("unknown method name: " + name);
}

ScenarioConfig::ScenarioConfig() {
  beta_truth = Vec(4);
  beta_truth << -0.4, 1.2, -0.5, 0.5;
  gamma_truth = Vec(3);
  gamma_truth << 0.0, 2.0, 2.0;
  // Missingness truth tuned so that roughly 24% of the at-risk occasions
  // (t >= 2) are missing while observation probabilities stay bounded away
  // from zero: layout (intercept_t2, intercept_t3, lag O*, lag X*, z).
  psi_truth = Vec(5);
  psi_truth << 4.96, 4.66, -1.5, -2.25, 1.25;
}

void ScenarioConfig::validate() const {
  if (n < 2) throw ConfigError("scenario: n must be at least 2");
  if (S < 1) throw ConfigError("scenario: S must be at least 1");
  if (T < 2) throw ConfigError("scenario: T must be at least 2");
  if (J < 2) throw ConfigError("scenario: J must be at least 2");
  if (p_z < 1) throw ConfigError("scenario: p_z must be at least 1");
  if (rho < 0.0 || rho >= 1.0) throw ConfigError("scenario: rho must be in [0, 1)");
  if (beta_truth.size() != J - 1 + 1 + p_z) throw ConfigError("scenario: beta_truth length");
  if (gamma_truth.size() != 2 + p_z) throw ConfigError("scenario: gamma_truth length");
  if (psi_truth.size() != (T - 1) + 2 + p_z) throw ConfigError("scenario: psi_truth length");
  if (methods.empty()) throw ConfigError("scenario: no methods requested");
  if (migee_M < 2) throw ConfigError("scenario: migee_M must be at least 2");
  if (migee_cycles < 1) throw ConfigError("scenario: migee_cycles must be at least 1");
}

std::vector<Vec> gen_z(RngStream& rng, int T, int p_z) {
  std::vector<Vec> z(T);
  for (int t = 0; t < T; ++t) {
    z[t] = Vec(p_z);
    for (int k = 0; k < p_z; ++k) z[t][k] = 0.5 * t + rng.normal();
  }
  return z;
}

std::vector<double> gen_x(RngStream& rng, const Vec& gamma, const std::vector<Vec>& z) {
  std::vector<double> x(z.size());
  double prev = 0.0;
  for (size_t t = 0; t < z.size(); ++t) {
    double eta = gamma[0] + gamma[1] * prev + gamma.tail(gamma.size() - 2).dot(z[t]);
    x[t] = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
    prev = x[t];
  }
  return x;
}

std::vector<int> gen_ordinal(RngStream& rng, const OrdinalSpec& spec, const Vec& beta, double rho,
                             const std::vector<double>& x, const std::vector<Vec>& z) {
  BetaParams bp = BetaParams::from_vector(beta, spec);
  const int T = static_cast<int>(x.size());
  std::vector<int> o(T);
  double g0 = rng.normal();
  double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  for (int t = 0; t < T; ++t) {
    double u = norm_cdf(a * g0 + b * rng.normal());
    double eps = std::log(u / (1.0 - u));
    double eta = bp.beta_x * x[t] + bp.beta_z.dot(z[t]);
    int cat = spec.J;
    for (int j = 0; j < spec.J - 1; ++j)
      if (eps <= bp.intercepts[j] + eta) {
        cat = j + 1;
        break;
      }
    o[t] = cat;
  }
  return o;
}

std::vector<int> gen_missingness(RngStream& rng, const Vec& psi, const std::vector<int>& o,
                                 const std::vector<double>& x, const std::vector<Vec>& z) {
  const int T = static_cast<int>(o.size());
  const int p_z = static_cast<int>(z.empty() ? 0 : z[0].size());
  if (psi.size() != (T - 1) + 2 + p_z) throw DimensionMismatch("gen_missingness: psi length");
  std::vector<int> r(T, 3);
  for (int t = 1; t < T; ++t) {
    bool prev_obs = r[t - 1] == 3;
    double eta = psi[t - 1];
    eta += psi[T - 1] * (prev_obs ? static_cast<double>(o[t - 1]) : 0.0);
    eta += psi[T] * (prev_obs ? x[t - 1] : 0.0);
    eta += psi.tail(p_z).dot(z[t]);
    r[t] = rng.bernoulli(expit(eta)) ? 3 : 0;
  }
  return r;
}

GeneratedSubject gen_subject(RngStream& rng, const ScenarioConfig& cfg, const std::string& id) {
  OrdinalSpec spec{cfg.J, cfg.T, cfg.p_z};
  std::vector<Vec> z = gen_z(rng, cfg.T, cfg.p_z);
  std::vector<double> x = gen_x(rng, cfg.gamma_truth, z);
  std::vector<int> o = gen_ordinal(rng, spec, cfg.beta_truth, cfg.rho, x, z);
  std::vector<int> r = gen_missingness(rng, cfg.psi_truth, o, x, z);

  GeneratedSubject g;
  g.full.id = id;
  g.full.occ.resize(cfg.T);
  for (int t = 0; t < cfg.T; ++t) {
    g.full.occ[t].o = o[t];
    g.full.occ[t].x = x[t];
    g.full.occ[t].z = z[t];
  }
  g.masked = g.full;
  for (int t = 0; t < cfg.T; ++t)
    if (r[t] != 3) {
      g.masked.occ[t].o.reset();
      g.masked.occ[t].x.reset();
    }
  return g;
}

namespace {

struct RepOutcome {
  // per requested method: estimate, se, converged
  std::vector<Vec> est;
  std::vector<Vec> se;
  std::vector<bool> ok;
  double miss_at_risk = 0.0;
  double miss_overall = 0.0;
};

MissingnessModel miss_proto(const ScenarioConfig& cfg) {
  MissingnessModel m;
  m.binary = true;
  m.T = cfg.T;
  m.p_z = cfg.p_z;
  m.recipe.time_intercepts = true;
  m.recipe.lag_r = false;
  m.recipe.lag_o_star = true;
  m.recipe.lag_x_star = !cfg.r_misspec;
  m.recipe.z = true;
  m.init_zero();
  return m;
}

CovariateModel cov_proto(const ScenarioConfig& cfg) {
  CovariateModel c;
  c.support = {0.0, 1.0};
  c.recipe.lag_x = !cfg.x_misspec;
  c.recipe.z_term = true;
  c.recipe.y_history = false;
  c.x0 = 0.0;
  c.p_z = cfg.p_z;
  c.init_zero();
  return c;
}

RepOutcome run_rep(const ScenarioConfig& cfg, int rep) {
  OrdinalSpec spec{cfg.J, cfg.T, cfg.p_z};
  std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
  RngStream rng(derive_seed(rep_seed, 1));

  std::vector<SubjectRecord> full, masked;
  full.reserve(cfg.n);
  masked.reserve(cfg.n);
  long at_risk_missing = 0, overall_missing = 0;
  for (int i = 0; i < cfg.n; ++i) {
    GeneratedSubject g = gen_subject(rng, cfg, "s" + std::to_string(i + 1));
    for (int t = 0; t < cfg.T; ++t)
      if (!g.masked.occ[t].o) {
        ++overall_missing;
        if (t >= 1) ++at_risk_missing;
      }
    full.push_back(std::move(g.full));
    masked.push_back(std::move(g.masked));
  }

  RepOutcome out;
  out.miss_at_risk = static_cast<double>(at_risk_missing) / (cfg.n * (cfg.T - 1));
  out.miss_overall = static_cast<double>(overall_missing) / (cfg.n * cfg.T);

  for (Method m : cfg.methods) {
    Vec est, se;
    bool ok = true;
    try {
      FitResult fr;
      switch (m) {
        case Method::complete:
          fr = gee_fit(full, spec, cfg.solver, FitMode::complete);
          break;
        case Method::available:
          fr = gee_fit(masked, spec, cfg.solver, FitMode::available);
          break;
        case Method::wgee:
          fr = wgee_fit(masked, spec, miss_proto(cfg), cfg.solver).fit;
          break;
        case Method::migee: {
          ImputationConfig ic;
          ic.M = cfg.migee_M;
          ic.cycles = cfg.migee_cycles;
          ic.rng_seed = derive_seed(rep_seed, 7);
          ic.drop_lag_x = cfg.x_misspec;
          fr = migee_fit(masked, spec, ic, cfg.solver, {0.0, 1.0}).fit;
          break;
        }
        case Method::drgee: {
          AugmentationConfig ac;
          ac.smoothed = cfg.dr_smoothed;
          fr = drgee_fit(masked, spec, miss_proto(cfg), cov_proto(cfg), ac, cfg.solver).fit;
          break;
        }
      }
      est = fr.beta_hat;
      se = fr.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    } catch (const Error&) {
      ok = false;
      est = Vec::Constant(spec.n_beta(), std::numeric_limits<double>::quiet_NaN());
      se = est;
    }
    out.est.push_back(est);
    out.se.push_back(se);
    out.ok.push_back(ok);
  }
  return out;
}

}  // namespace

SimResult run_simulation(const ScenarioConfig& cfg, int jobs) {
  cfg.validate();
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  OrdinalSpec spec{cfg.J, cfg.T, cfg.p_z};
  const int p = spec.n_beta();

  std::vector<RepOutcome> reps(cfg.S);
  if (jobs == 1 || cfg.S == 1) {
    for (int r = 0; r < cfg.S; ++r) reps[r] = run_rep(cfg, r);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        int r = next.fetch_add(1);
        if (r >= cfg.S) return;
        reps[r] = run_rep(cfg, r);
      }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min(jobs, cfg.S); ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SimResult res;
  res.cfg = cfg;
  for (const auto& r : reps) {
    res.miss_rate_at_risk += r.miss_at_risk / cfg.S;
    res.miss_rate_overall += r.miss_overall / cfg.S;
  }

  const double zcrit = 1.959963984540054;
  for (size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    MethodSummary s;
    s.method = cfg.methods[mi];
    s.n_reps = cfg.S;
    s.estimates = Mat::Constant(cfg.S, p, std::numeric_limits<double>::quiet_NaN());
    s.ses = s.estimates;
    s.converged.assign(cfg.S, false);
    for (int r = 0; r < cfg.S; ++r) {
      s.converged[r] = reps[r].ok[mi];
      if (!s.converged[r]) continue;
      s.estimates.row(r) = reps[r].est[mi].transpose();
      s.ses.row(r) = reps[r].se[mi].transpose();
      ++s.n_converged;
    }
    s.bias_pct = Vec::Zero(p);
    s.mc_sd = Vec::Zero(p);
    s.mean_se = Vec::Zero(p);
    s.coverage = Vec::Zero(p);
    if (s.n_converged > 0) {
      Vec mean = Vec::Zero(p), mean_se = Vec::Zero(p), cover = Vec::Zero(p);
      for (int r = 0; r < cfg.S; ++r) {
        if (!s.converged[r]) continue;
        mean += s.estimates.row(r).transpose();
        mean_se += s.ses.row(r).transpose();
        for (int k = 0; k < p; ++k)
          if (std::abs(s.estimates(r, k) - cfg.beta_truth[k]) <= zcrit * s.ses(r, k))
            cover[k] += 1.0;
      }
      mean /= s.n_converged;
      s.mean_se = mean_se / s.n_converged;
      s.coverage = cover / s.n_converged;
      for (int k = 0; k < p; ++k)
        s.bias_pct[k] = 100.0 * (mean[k] - cfg.beta_truth[k]) / cfg.beta_truth[k];
      if (s.n_converged > 1) {
        Vec ss = Vec::Zero(p);
        for (int r = 0; r < cfg.S; ++r) {
          if (!s.converged[r]) continue;
          Vec d = s.estimates.row(r).transpose() - mean;
          ss += d.cwiseProduct(d);
        }
        s.mc_sd = (ss / (s.n_converged - 1)).cwiseSqrt();
      }
    }
    res.methods.push_back(std::move(s));
  }
  return res;
}

}  // namespace drord
