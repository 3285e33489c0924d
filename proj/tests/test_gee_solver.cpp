#include <cmath>
#include <vector>

#include "doctest.h"
#include "drord/gee_solver.hpp"
#include "drord/ordinal_core.hpp"
#include "drord/po_reg.hpp"
#include "drord/rng.hpp"
#include "drord/simgen.hpp"
#include "drord/types.hpp"

using namespace drord;

namespace {

Vec vec1(double a) { return Vec::Constant(1, a); }

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// one single-occasion binary subject
SubjectRecord bin_subject(const std::string& id, int y, double x) {
  SubjectRecord s;
  s.id = id;
  Occasion oc;
  oc.o = y;
  oc.x = x;
  oc.z = Vec();
  s.occ = {oc};
  return s;
}

std::vector<SubjectRecord> complete_sample(std::uint64_t seed, int n) {
  ScenarioConfig cfg;
  cfg.n = n;
  cfg.S = 1;
  cfg.seed = seed;
  RngStream rng(seed);
  std::vector<SubjectRecord> data;
  data.reserve(n);
  for (int i = 0; i < n; ++i) data.push_back(gen_subject(rng, cfg, std::to_string(i)).full);
  return data;
}

}  // namespace

TEST_SUITE("gee_solver") {
  TEST_CASE("linear score converges in one step") {
    auto score = [](const Vec& b) { return Vec(vec1(b[0] - 2.0)); };
    auto jac = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
    SolveInfo info;
    Vec root = solve(score, jac, vec1(0.0), {}, &info);
    CHECK(root[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(info.iterations == 1);
  }

  TEST_CASE("two-dimensional nonlinear system") {
    // f(b) = (b1^2 - 1, b2), root nearest the start is (1, 0)
    auto score = [](const Vec& b) { return Vec(vec2(b[0] * b[0] - 1.0, b[1])); };
    auto jac = [](const Vec& b) {
      Mat J = Mat::Zero(2, 2);
      J(0, 0) = 2.0 * b[0];
      J(1, 1) = 1.0;
      return J;
    };
    SolverConfig cfg;
    cfg.tol = 1e-10;
    Vec root = solve(score, jac, vec2(2.0, 1.0), cfg);
    CHECK(std::abs(root[0] - 1.0) < 1e-10);
    CHECK(std::abs(root[1]) < 1e-10);
  }

  TEST_CASE("constant score never converges") {
    auto score = [](const Vec&) { return Vec(vec1(1.0)); };
    auto jac = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
    CHECK_THROWS_AS(solve(score, jac, vec1(0.0)), NonConvergence);
    try {
      solve(score, jac, vec1(0.0));
    } catch (const NonConvergence& e) {
      CHECK(e.last_iterate.size() == 1);
    }
  }

  TEST_CASE("singular Jacobian is reported") {
    auto score = [](const Vec& b) { return Vec(vec1(b[0] - 1.0)); };
    auto jac = [](const Vec&) { return Mat(Mat::Zero(1, 1)); };
    CHECK_THROWS_AS(solve(score, jac, vec1(0.0)), SingularSystem);
  }

  TEST_CASE("solver is invariant to coordinate permutation") {
    auto f = [](const Vec& b) { return Vec(vec2(b[0] * b[0] * b[0] - 8.0, b[1] - b[0])); };
    auto fj = [](const Vec& b) {
      Mat J(2, 2);
      J << 3.0 * b[0] * b[0], 0.0, -1.0, 1.0;
      return J;
    };
    // swap both argument and output coordinates
    auto g = [&](const Vec& c) {
      Vec s = f(vec2(c[1], c[0]));
      return Vec(vec2(s[1], s[0]));
    };
    auto gj = [&](const Vec& c) {
      Mat J = fj(vec2(c[1], c[0]));
      Mat P(2, 2);
      P << 0, 1, 1, 0;
      return Mat(P * J * P);
    };
    Vec r1 = solve(f, fj, vec2(3.0, 0.0));
    Vec r2 = solve(g, gj, vec2(0.0, 3.0));
    CHECK(std::abs(r1[0] - r2[1]) < 1e-12);
    CHECK(std::abs(r1[1] - r2[0]) < 1e-12);
  }

  TEST_CASE("all-identical response is a degenerate category") {
    std::vector<SubjectRecord> data;
    for (int i = 0; i < 8; ++i) data.push_back(bin_subject("s" + std::to_string(i), 1, i % 2));
    OrdinalSpec spec{2, 1, 0};
    CHECK_THROWS_AS(gee_fit(data, spec), DegenerateCategory);
  }

  TEST_CASE("no usable occasions") {
    SubjectRecord s;
    s.id = "a";
    Occasion oc;
    oc.z = Vec();
    s.occ = {oc};
    OrdinalSpec spec{2, 1, 0};
    CHECK_THROWS_AS(gee_fit(std::vector<SubjectRecord>{s}, spec), DataError);
  }

  TEST_CASE("complete mode rejects missing cells, equals available when none") {
    auto data = complete_sample(11, 60);
    OrdinalSpec spec{3, 3, 1};
    FitResult a = gee_fit(data, spec, {}, FitMode::complete);
    FitResult b = gee_fit(data, spec, {}, FitMode::available);
    CHECK((a.beta_hat - b.beta_hat).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.cov - b.cov).lpNorm<Eigen::Infinity>() == 0.0);

    auto holed = data;
    holed[4].occ[1].o.reset();
    CHECK_THROWS_AS(gee_fit(holed, spec, {}, FitMode::complete), DataError);
  }

  TEST_CASE("balanced binary design matches the closed-form binomial sandwich") {
    // 5 copies of {(x,y)} = {(1,1),(1,2),(-1,1),(-1,2)}: MLE is beta = (0,0)
    // and the sandwich reduces to 1/(n p(1-p)) on the diagonal.
    std::vector<SubjectRecord> data;
    int id = 0;
    for (int c = 0; c < 5; ++c)
      for (double x : {1.0, -1.0})
        for (int y : {1, 2}) data.push_back(bin_subject("s" + std::to_string(id++), y, x));
    OrdinalSpec spec{2, 1, 0};
    FitResult fr = gee_fit(data, spec);
    CHECK(fr.beta_hat.lpNorm<Eigen::Infinity>() < 1e-10);
    double n = 20.0, p = 0.5;
    CHECK(fr.cov(0, 0) == doctest::Approx(1.0 / (n * p * (1.0 - p))).epsilon(1e-8));
    CHECK(fr.cov(1, 1) == doctest::Approx(1.0 / (n * p * (1.0 - p))).epsilon(1e-8));
    CHECK(std::abs(fr.cov(0, 1)) < 1e-10);
  }

  TEST_CASE("duplicating every subject halves the covariance") {
    auto data = complete_sample(23, 50);
    OrdinalSpec spec{3, 3, 1};
    FitResult one = gee_fit(data, spec);
    auto twice = data;
    for (auto s : data) {
      s.id += "_dup";
      twice.push_back(s);
    }
    FitResult two = gee_fit(twice, spec);
    CHECK((one.beta_hat - two.beta_hat).lpNorm<Eigen::Infinity>() < 1e-7);
    CHECK((0.5 * one.cov - two.cov).lpNorm<Eigen::Infinity>() <
          1e-7 * one.cov.lpNorm<Eigen::Infinity>());
  }

  TEST_CASE("sandwich is symmetric and PSD on random fits") {
    for (std::uint64_t seed : {5u, 6u, 7u}) {
      auto data = complete_sample(seed, 80);
      OrdinalSpec spec{3, 3, 1};
      FitResult fr = gee_fit(data, spec);
      CHECK((fr.cov - fr.cov.transpose()).lpNorm<Eigen::Infinity>() < 1e-14);
      Eigen::SelfAdjointEigenSolver<Mat> es(fr.cov);
      CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    }
  }

  TEST_CASE("independence GEE equals the pooled cumulative-logit MLE") {
    // stacked-occasion fit: po_probs parameterizes P(O <= j) = expit(cut_j - s'row),
    // so slopes enter with the opposite sign of the marginal model
    auto data = complete_sample(31, 80);
    OrdinalSpec spec{3, 3, 1};
    FitResult fr = gee_fit(data, spec);

    int rows = 0;
    for (const auto& s : data) rows += s.n_occ();
    Mat X(rows, 2);
    std::vector<int> y;
    int r = 0;
    for (const auto& s : data)
      for (const auto& oc : s.occ) {
        X(r, 0) = *oc.x;
        X(r, 1) = oc.z[0];
        y.push_back(*oc.o - 1);
        ++r;
      }
    PoRegFit ml = po_fit(X, y, 3, {});
    Vec ml_beta(4);
    ml_beta << ml.model.cuts[0], ml.model.cuts[1], -ml.model.slopes[0], -ml.model.slopes[1];
    CHECK((fr.beta_hat - ml_beta).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  TEST_CASE("weight rescaling leaves the estimating-equation root unchanged") {
    auto data = complete_sample(41, 60);
    OrdinalSpec spec{3, 3, 1};
    std::vector<Vec> w1, w2;
    RngStream rng(99);
    for (const auto& s : data) {
      Vec w(s.n_occ());
      for (int t = 0; t < s.n_occ(); ++t) w[t] = 0.5 + rng.uniform();
      w1.push_back(w);
      w2.push_back(3.7 * w);
    }
    auto root_with = [&](const std::vector<Vec>* w) {
      auto score = [&](const Vec& b) { return gee_parts(data, spec, b, w).U; };
      auto jac = [&](const Vec& b) { return Mat(-gee_parts(data, spec, b, w).fisher); };
      return solve(score, jac, init_beta(data, spec));
    };
    Vec r1 = root_with(&w1);
    Vec r2 = root_with(&w2);
    CHECK((r1 - r2).lpNorm<Eigen::Infinity>() < 1e-8);
  }

  TEST_CASE("covariance shrinks like 1/n") {
    const int reps = 50;
    OrdinalSpec spec{3, 3, 1};
    double tr_small = 0.0, tr_big = 0.0;
    for (int r = 0; r < reps; ++r) {
      tr_small += gee_fit(complete_sample(1000 + r, 150), spec).cov.trace();
      tr_big += gee_fit(complete_sample(5000 + r, 300), spec).cov.trace();
    }
    double ratio = tr_big / tr_small;
    CHECK(ratio > 0.45);
    CHECK(ratio < 0.55);
  }

  TEST_CASE("complete-data estimates are nearly unbiased at the harness truth") {
    // 200 replications of n = 600: mean relative bias of the x coefficient within +-4%
    ScenarioConfig cfg;
    cfg.n = 600;
    cfg.S = 1;
    cfg.seed = 77;
    OrdinalSpec spec{cfg.J, cfg.T, cfg.p_z};
    const Vec truth = cfg.beta_truth;
    const int S = 200;
    double bias_x = 0.0;
    for (int rep = 0; rep < S; ++rep) {
      RngStream rng(derive_seed(cfg.seed, rep), 1);
      std::vector<SubjectRecord> data;
      data.reserve(cfg.n);
      for (int i = 0; i < cfg.n; ++i) data.push_back(gen_subject(rng, cfg, std::to_string(i)).full);
      FitResult fr = gee_fit(data, spec, {}, FitMode::complete);
      bias_x += 100.0 * (fr.beta_hat[2] - truth[2]) / truth[2];
    }
    bias_x /= S;
    CHECK(std::abs(bias_x) < 4.0);
  }
}
