#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "drord/covariate_model.hpp"
#include "drord/ordinal_core.hpp"
#include "drord/po_reg.hpp"
#include "drord/rng.hpp"
#include "drord/simgen.hpp"
#include "drord/types.hpp"

using namespace drord;

namespace {

// binary chain with P(X=1) = expit(g0 + g1 x_prev + gz z), i.e. cuts = -g0,
// slopes = (g1, gz)
CovariateModel binary_chain(double g0, double g1, double gz) {
  CovariateModel m;
  m.support = {0.0, 1.0};
  m.p_z = 1;
  m.init_zero();
  m.po.cuts[0] = -g0;
  m.po.slopes << g1, gz;
  return m;
}

Occasion occ(std::optional<int> o, std::optional<double> x, double z) {
  Occasion oc;
  oc.o = o;
  oc.x = x;
  oc.z = Vec::Constant(1, z);
  return oc;
}

Vec feat(double x_prev, double z) {
  Vec u(2);
  u << x_prev, z;
  return u;
}

double trans_p(const CovariateModel& m, double x_prev, double z, double x_to) {
  return conditional_x_prob(m, feat(x_prev, z))[m.support_index(x_to)];
}

SubjectRecord chain_subject(const std::vector<std::optional<double>>& x,
                            const std::vector<double>& z) {
  SubjectRecord s;
  s.id = "c";
  for (size_t t = 0; t < x.size(); ++t) s.occ.push_back(occ(1, x[t], z[t]));
  return s;
}

}  // namespace

TEST_SUITE("covariate_model") {
  TEST_CASE("transition probabilities at the harness truth") {
    CovariateModel m = binary_chain(0.0, 2.0, 2.0);
    CHECK(conditional_x_prob(m, feat(0.0, 0.0))[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(conditional_x_prob(m, feat(1.0, 0.0))[1] ==
          doctest::Approx(0.88080).epsilon(1e-4));
    CovariateModel null_m = binary_chain(0.0, 0.0, 0.0);
    Vec p = conditional_x_prob(null_m, feat(1.0, 0.7));
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("values outside the support are rejected") {
    CovariateModel m = binary_chain(0.0, 2.0, 2.0);
    CHECK_THROWS_AS(m.support_index(0.5), DataError);
    CHECK(m.support_index(1.0 + 1e-12) == 1);
  }

  TEST_CASE("fully observed likelihood is the sum of log transitions") {
    CovariateModel m = binary_chain(0.3, 1.2, -0.8);
    std::vector<double> z = {0.2, -0.5, 1.1};
    SubjectRecord s = chain_subject({1.0, 0.0, 1.0}, z);
    double expect = std::log(trans_p(m, m.x0, z[0], 1.0)) +
                    std::log(trans_p(m, 1.0, z[1], 0.0)) +
                    std::log(trans_p(m, 0.0, z[2], 1.0));
    CHECK(observed_loglik(m, s) == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("one interior missing value marginalizes over two branches") {
    CovariateModel m = binary_chain(0.3, 1.2, -0.8);
    std::vector<double> z = {0.2, -0.5, 1.1};
    SubjectRecord s = chain_subject({1.0, std::nullopt, 1.0}, z);
    double branch = 0.0;
    for (double v : {0.0, 1.0})
      branch += trans_p(m, 1.0, z[1], v) * trans_p(m, v, z[2], 1.0);
    double expect = std::log(trans_p(m, m.x0, z[0], 1.0)) + std::log(branch);
    CHECK(observed_loglik(m, s) == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("an all-missing record is fully marginalized") {
    CovariateModel m = binary_chain(0.3, 1.2, -0.8);
    SubjectRecord s = chain_subject({std::nullopt, std::nullopt, std::nullopt},
                                    {0.2, -0.5, 1.1});
    CHECK(observed_loglik(m, s) == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("marginal likelihood equals brute-force enumeration") {
    RngStream rng(2024);
    for (int rep = 0; rep < 30; ++rep) {
      int K = 2 + rep % 2;
      int T = 3 + rep % 2;
      CovariateModel m;
      m.support.clear();
      for (int k = 0; k < K; ++k) m.support.push_back(static_cast<double>(k));
      m.p_z = 1;
      m.init_zero();
      for (int k = 1; k < K - 1; ++k) m.po.cuts[k] = m.po.cuts[k - 1] + 0.4 + rng.uniform();
      m.po.slopes << 0.8 * rng.normal(), 0.8 * rng.normal();

      std::vector<std::optional<double>> x(T);
      std::vector<double> z(T);
      std::vector<int> miss;
      for (int t = 0; t < T; ++t) {
        z[t] = rng.normal();
        if (rng.bernoulli(0.4)) {
          miss.push_back(t);
        } else {
          x[t] = static_cast<double>(rng.categorical(Vec::Constant(K, 1.0 / K)));
        }
      }
      SubjectRecord s = chain_subject(x, z);

      int n_conf = 1;
      for (size_t j = 0; j < miss.size(); ++j) n_conf *= K;
      double total = 0.0;
      for (int c = 0; c < n_conf; ++c) {
        auto filled = x;
        int rem = c;
        for (int idx : miss) {
          filled[idx] = m.support[rem % K];
          rem /= K;
        }
        double prob = 1.0;
        double prev = m.x0;
        for (int t = 0; t < T; ++t) {
          prob *= trans_p(m, prev, z[t], *filled[t]);
          prev = *filled[t];
        }
        total += prob;
      }
      CHECK(observed_loglik(m, s) == doctest::Approx(std::log(total)).epsilon(1e-10));
    }
  }

  TEST_CASE("analytic score matches differenced likelihood") {
    RngStream rng(3141);
    for (int rep = 0; rep < 40; ++rep) {
      int K = 2 + rep % 2;
      CovariateModel m;
      m.support.clear();
      for (int k = 0; k < K; ++k) m.support.push_back(static_cast<double>(k));
      m.p_z = 1;
      m.init_zero();
      for (int k = 1; k < K - 1; ++k) m.po.cuts[k] = m.po.cuts[k - 1] + 0.4 + rng.uniform();
      m.po.slopes << rng.normal(), rng.normal();

      int T = 4;
      std::vector<std::optional<double>> x(T);
      std::vector<double> z(T);
      for (int t = 0; t < T; ++t) {
        z[t] = rng.normal();
        if (!rng.bernoulli(0.35))
          x[t] = static_cast<double>(rng.categorical(Vec::Constant(K, 1.0 / K)));
      }
      SubjectRecord s = chain_subject(x, z);

      Vec analytic = gamma_subject_score(m, s);
      Vec th = po_pack(m.po);
      const double h = 1e-5;
      Vec fd(th.size());
      for (int j = 0; j < th.size(); ++j) {
        Vec hi = th, lo = th;
        hi[j] += h;
        lo[j] -= h;
        CovariateModel mh = m, ml = m;
        mh.po = po_unpack(hi, K, m.n_features());
        ml.po = po_unpack(lo, K, m.n_features());
        fd[j] = (observed_loglik(mh, s) - observed_loglik(ml, s)) / (2.0 * h);
      }
      double scale = 1.0 + fd.lpNorm<Eigen::Infinity>();
      CHECK((analytic - fd).lpNorm<Eigen::Infinity>() < 1e-6 * scale);
    }
  }

  TEST_CASE("fit recovers the generator within three standard errors") {
    ScenarioConfig cfg;
    Vec truth(3);
    truth << -cfg.gamma_truth[0], cfg.gamma_truth[1], cfg.gamma_truth[2];
    int all_within = 0;
    const int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
      RngStream rng(derive_seed(7117, rep), 1);
      std::vector<SubjectRecord> data;
      for (int i = 0; i < 600; ++i) {
        auto z = gen_z(rng, cfg.T, cfg.p_z);
        auto x = gen_x(rng, cfg.gamma_truth, z);
        SubjectRecord s;
        s.id = std::to_string(i);
        for (int t = 0; t < cfg.T; ++t) {
          Occasion oc;
          oc.o = 1;
          oc.x = x[t];
          oc.z = z[t];
          s.occ.push_back(oc);
        }
        data.push_back(std::move(s));
      }
      CovariateModel proto = binary_chain(0.0, 0.0, 0.0);
      GammaFit fit = fit_gamma(data, proto);
      Vec est = po_pack(fit.model.po);
      Vec se = fit.cov.diagonal().cwiseSqrt();
      bool ok = true;
      for (int k = 0; k < est.size(); ++k)
        if (std::abs(est[k] - truth[k]) > 3.0 * se[k]) ok = false;
      all_within += ok ? 1 : 0;

      if (rep == 0) {
        Vec s3 = Vec::Zero(est.size());
        for (const auto& subj : data) s3 += gamma_subject_score(fit.model, subj);
        CHECK(s3.lpNorm<Eigen::Infinity>() <= 1e-6);
      }
    }
    CHECK(all_within >= 95);
  }

  TEST_CASE("random covariate deletion leaves the fit consistent") {
    ScenarioConfig cfg;
    RngStream rng(888);
    std::vector<SubjectRecord> data;
    for (int i = 0; i < 4000; ++i) {
      auto z = gen_z(rng, cfg.T, cfg.p_z);
      auto x = gen_x(rng, cfg.gamma_truth, z);
      SubjectRecord s;
      s.id = std::to_string(i);
      for (int t = 0; t < cfg.T; ++t) {
        Occasion oc;
        oc.o = 1;
        oc.x = x[t];
        oc.z = z[t];
        s.occ.push_back(oc);
      }
      data.push_back(std::move(s));
    }
    auto masked = data;
    for (auto& s : masked)
      for (auto& oc : s.occ)
        if (rng.bernoulli(0.25)) oc.x.reset();

    CovariateModel proto = binary_chain(0.0, 0.0, 0.0);
    Vec full = po_pack(fit_gamma(data, proto).model.po);
    Vec part = po_pack(fit_gamma(masked, proto).model.po);
    CHECK((full - part).lpNorm<Eigen::Infinity>() < 0.2);
  }

  TEST_CASE("intercept-only fit is the empirical logit") {
    CovariateModel m;
    m.support = {0.0, 1.0};
    m.recipe.lag_x = false;
    m.recipe.z_term = false;
    m.p_z = 0;
    m.init_zero();
    std::vector<SubjectRecord> data;
    for (int i = 0; i < 400; ++i) {
      SubjectRecord s;
      s.id = std::to_string(i);
      Occasion oc;
      oc.o = 1;
      oc.x = (i < 120) ? 1.0 : 0.0;  // mean 0.30
      oc.z = Vec();
      s.occ = {oc};
      data.push_back(std::move(s));
    }
    GammaFit fit = fit_gamma(data, m);
    // P(X=1) = expit(-cut), so the cut sits at logit(1 - mean)
    CHECK(fit.model.po.cuts[0] == doctest::Approx(std::log(0.7 / 0.3)).epsilon(1e-8));
  }

  TEST_CASE("degenerate observation patterns are rejected") {
    CovariateModel proto = binary_chain(0.0, 0.0, 0.0);
    std::vector<SubjectRecord> none = {
        chain_subject({std::nullopt, std::nullopt, std::nullopt}, {0.0, 0.0, 0.0})};
    CHECK_THROWS_AS(fit_gamma(none, proto), DataError);

    std::vector<SubjectRecord> onesided;
    for (int i = 0; i < 5; ++i)
      onesided.push_back(chain_subject({0.0, 0.0, 0.0}, {0.1, 0.2, 0.3}));
    CHECK_THROWS_AS(fit_gamma(onesided, proto), IdentifiabilityError);
  }

  TEST_CASE("posterior over missing cells") {
    CovariateModel m = binary_chain(0.4, 1.5, -0.6);
    std::vector<double> z = {0.2, -0.3, 0.9};

    SubjectRecord full = chain_subject({1.0, 0.0, 1.0}, z);
    XPosterior p0 = conditional_missing_x_dist(m, full);
    CHECK(p0.missing_idx.empty());
    CHECK(p0.configs.size() == 1);
    CHECK(p0.w[0] == 1.0);

    // interior gap: weight(v) proportional to P(v | x1) P(x3 | v)
    SubjectRecord gap = chain_subject({1.0, std::nullopt, 1.0}, z);
    XPosterior p1 = conditional_missing_x_dist(m, gap);
    REQUIRE(p1.configs.size() == 2);
    double w0 = trans_p(m, 1.0, z[1], 0.0) * trans_p(m, 0.0, z[2], 1.0);
    double w1 = trans_p(m, 1.0, z[1], 1.0) * trans_p(m, 1.0, z[2], 1.0);
    for (size_t c = 0; c < p1.configs.size(); ++c) {
      double expect = (p1.configs[c][0] == 0.0 ? w0 : w1) / (w0 + w1);
      CHECK(p1.w[c] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(p1.w.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("independent chain factorizes the posterior") {
    // zero lag coefficient: the missing cell's posterior is its own marginal
    CovariateModel m = binary_chain(0.4, 0.0, -0.6);
    std::vector<double> z = {0.2, -0.3, 0.9};
    SubjectRecord gap = chain_subject({1.0, std::nullopt, 1.0}, z);
    XPosterior p = conditional_missing_x_dist(m, gap);
    double marg = expit(0.4 - 0.6 * z[1]);
    for (size_t c = 0; c < p.configs.size(); ++c)
      if (p.configs[c][0] == 1.0) CHECK(p.w[c] == doctest::Approx(marg).epsilon(1e-12));
  }

  TEST_CASE("posterior weights normalize on random inputs") {
    RngStream rng(5150);
    for (int rep = 0; rep < 20; ++rep) {
      CovariateModel m = binary_chain(0.5 * rng.normal(), rng.normal(), rng.normal());
      int T = 4;
      std::vector<std::optional<double>> x(T);
      std::vector<double> z(T);
      for (int t = 0; t < T; ++t) {
        z[t] = rng.normal();
        if (!rng.bernoulli(0.5)) x[t] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      }
      SubjectRecord s = chain_subject(x, z);
      XPosterior p = conditional_missing_x_dist(m, s);
      CHECK(p.w.sum() == doctest::Approx(1.0).epsilon(1e-12));
      size_t expect_m = 0;
      for (auto& xv : x)
        if (!xv) ++expect_m;
      CHECK(p.missing_idx.size() == expect_m);
      for (const auto& cfgv : p.configs) {
        CHECK(cfgv.size() == expect_m);
        for (double v : cfgv) CHECK((v == 0.0 || v == 1.0));
      }
    }
  }

  TEST_CASE("sampled posterior agrees with exact enumeration") {
    CovariateModel m = binary_chain(0.4, 1.5, -0.6);
    std::vector<double> z = {0.2, -0.3, 0.9, 0.5};
    SubjectRecord s = chain_subject({1.0, std::nullopt, std::nullopt, 0.0}, z);
    XPosterior exact = conditional_missing_x_dist(m, s);
    double exact_mean = 0.0;
    for (size_t c = 0; c < exact.configs.size(); ++c)
      exact_mean += exact.w[c] * (exact.configs[c][0] + exact.configs[c][1]);

    RngStream rng(42);
    const int draws = 2000;
    XPosterior mc = conditional_missing_x_dist(m, s, 1, &rng, draws);
    CHECK(static_cast<int>(mc.configs.size()) == draws);
    CHECK(mc.w[0] == doctest::Approx(1.0 / draws).epsilon(1e-12));
    double mc_mean = 0.0;
    for (const auto& cfgv : mc.configs) mc_mean += (cfgv[0] + cfgv[1]) / draws;
    // binomial-ish spread: 3 standard errors with sd bounded by 1
    CHECK(std::abs(mc_mean - exact_mean) < 3.0 / std::sqrt(static_cast<double>(draws)));
  }
}
