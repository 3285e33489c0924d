#include <cmath>
#include <vector>

#include "doctest.h"
#include "drord/ordinal_core.hpp"
#include "drord/rng.hpp"
#include "drord/types.hpp"

using namespace drord;

namespace {

Vec vec1(double a) { return Vec::Constant(1, a); }

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

BetaParams harness_beta() {
  // intercepts (-0.4, 1.2), beta_x = -0.5, beta_z = 0.5
  return BetaParams(vec2(-0.4, 1.2), -0.5, vec1(0.5));
}

// central finite difference of mu(beta) in every packed coordinate
Mat fd_jacobian(const OrdinalSpec& spec, const Vec& beta_vec, double x, const Vec& z,
                double h) {
  const int p = static_cast<int>(beta_vec.size());
  Mat J(spec.J - 1, p);
  for (int k = 0; k < p; ++k) {
    Vec hi = beta_vec, lo = beta_vec;
    hi[k] += h;
    lo[k] -= h;
    Vec mu_hi = category_probs(BetaParams::from_vector(hi, spec), x, z);
    Vec mu_lo = category_probs(BetaParams::from_vector(lo, spec), x, z);
    J.col(k) = (mu_hi - mu_lo) / (2.0 * h);
  }
  return J;
}

}  // namespace

TEST_SUITE("ordinal_core") {
  TEST_CASE("expit basics") {
    CHECK(expit(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(expit(1.2) == doctest::Approx(1.0 / (1.0 + std::exp(-1.2))).epsilon(1e-15));
    CHECK(expit(-40.0) > 0.0);
    CHECK(expit(40.0) <= 1.0);
    CHECK(std::isfinite(expit(700.0)));
    CHECK(std::isfinite(expit(-700.0)));
    CHECK(expit(-1.5) + expit(1.5) == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("cumulative and category probabilities at the reference point") {
    // logit P(O<=1) = -0.4, logit P(O<=2) = 1.2 at x = 0, z = 0
    BetaParams beta = harness_beta();
    Vec cum = cumulative_probs(beta, 0.0, vec1(0.0));
    CHECK(cum[0] == doctest::Approx(0.40131).epsilon(1e-4));
    CHECK(cum[1] == doctest::Approx(0.76852).epsilon(1e-4));
    Vec mu = category_probs(beta, 0.0, vec1(0.0));
    CHECK(mu[0] == doctest::Approx(0.40131).epsilon(1e-4));
    CHECK(mu[1] == doctest::Approx(0.36721).epsilon(1e-4));
    CHECK(1.0 - mu.sum() == doctest::Approx(0.23148).epsilon(1e-4));
  }

  TEST_CASE("hand-picked cumulative split") {
    // cum = (0.4, 0.7) gives category probs (0.4, 0.3, 0.3)
    double l1 = std::log(0.4 / 0.6), l2 = std::log(0.7 / 0.3);
    BetaParams beta(vec2(l1, l2), 0.0, Vec());
    OrdinalSpec spec{3, 1, 0};
    Vec mu = category_probs(beta, 0.0, Vec());
    CHECK(mu[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(mu[1] == doctest::Approx(0.3).epsilon(1e-12));
    (void)spec;
  }

  TEST_CASE("binary reduction J = 2") {
    // single intercept: P(O=1) = expit(b0 + bx x), category 2 the complement
    BetaParams beta(vec1(0.3), 0.7, Vec());
    Vec mu = category_probs(beta, 1.5, Vec());
    CHECK(mu.size() == 1);
    CHECK(mu[0] == doctest::Approx(expit(0.3 + 0.7 * 1.5)).epsilon(1e-12));
  }

  TEST_CASE("large slope saturates the first category") {
    BetaParams beta = harness_beta();
    Vec mu = category_probs(beta, -200.0, vec1(0.0));  // eta -> +inf
    CHECK(mu[0] == doctest::Approx(1.0).epsilon(1e-9));
    Vec mu2 = category_probs(beta, 200.0, vec1(0.0));  // eta -> -inf
    CHECK(mu2[0] < 1e-9);
    CHECK(mu2[1] < 1e-9);
  }

  TEST_CASE("intercepts must increase strictly") {
    CHECK_THROWS_AS(BetaParams(vec2(0.5, 0.5), 0.0, Vec()), InvalidParameter);
    CHECK_THROWS_AS(BetaParams(vec2(1.0, 0.0), 0.0, Vec()), InvalidParameter);
  }

  TEST_CASE("indicator encoding") {
    Vec e = encode_indicators(2, 3);
    CHECK(e[0] == 0.0);
    CHECK(e[1] == 1.0);
    e = encode_indicators(3, 3);
    CHECK(e.norm() == 0.0);  // top category encodes as all zeros
    e = encode_indicators(1, 2);
    CHECK(e.size() == 1);
    CHECK(e[0] == 1.0);
    CHECK_THROWS_AS(encode_indicators(0, 3), DataError);
    CHECK_THROWS_AS(encode_indicators(4, 3), DataError);
  }

  TEST_CASE("probabilities sum to one and V is PSD") {
    RngStream rng(91);
    for (int rep = 0; rep < 100; ++rep) {
      int J = 2 + rep % 4;
      Vec icpt(J - 1);
      icpt[0] = -1.5 + rng.normal();
      for (int j = 1; j < J - 1; ++j) icpt[j] = icpt[j - 1] + 0.2 + std::abs(rng.normal());
      BetaParams beta(icpt, rng.normal(), vec1(rng.normal()));
      double x = rng.normal();
      Vec z = vec1(rng.normal());
      Vec cum = cumulative_probs(beta, x, z);
      for (int j = 1; j < J - 1; ++j) CHECK(cum[j] >= cum[j - 1]);
      Vec mu = category_probs(beta, x, z);
      double top = 1.0 - mu.sum();
      CHECK(top >= -1e-12);
      CHECK(mu.minCoeff() > 0.0);
      CHECK(mu.sum() <= 1.0 + 1e-12);

      MeanBlock blk = mean_block(beta, x, z);
      CHECK((blk.V - blk.V.transpose()).norm() == doctest::Approx(0.0).epsilon(1e-15));
      Eigen::SelfAdjointEigenSolver<Mat> es(blk.V);
      CHECK(es.eigenvalues().minCoeff() >= -1e-12);
      for (int j = 0; j < J - 1; ++j)
        CHECK(blk.fdiag[j] == doctest::Approx(mu[j] * (1.0 - mu[j])).epsilon(1e-12));
    }
  }

  TEST_CASE("v_inverse matches a direct inverse") {
    RngStream rng(17);
    for (int rep = 0; rep < 50; ++rep) {
      int J = 2 + rep % 4;
      Vec mu(J - 1);
      double s = 0.0;
      for (int j = 0; j < J - 1; ++j) {
        mu[j] = 0.05 + 0.8 * rng.uniform() / (J - 1);
        s += mu[j];
      }
      REQUIRE(s < 0.95);
      Mat V = Mat(mu.asDiagonal()) - mu * mu.transpose();
      Mat Vi = v_inverse(mu);
      CHECK((V * Vi - Mat::Identity(J - 1, J - 1)).lpNorm<Eigen::Infinity>() ==
            doctest::Approx(0.0).epsilon(1e-9));
    }
  }

  TEST_CASE("Jacobian D matches central differences") {
    OrdinalSpec spec{3, 1, 1};
    BetaParams beta = harness_beta();
    OccasionDerivs od = occasion_derivs(spec, beta, 0.8, vec1(-0.3));
    Mat fd = fd_jacobian(spec, beta.to_vector(), 0.8, vec1(-0.3), 1e-5);
    CHECK((od.D - fd).lpNorm<Eigen::Infinity>() < 1e-6 * (1.0 + fd.lpNorm<Eigen::Infinity>()));
  }

  TEST_CASE("Jacobian D matches central differences on random inputs") {
    RngStream rng(4213);
    for (int rep = 0; rep < 100; ++rep) {
      int J = 2 + rep % 4;
      int p_z = 1 + rep % 2;
      OrdinalSpec spec{J, 1, p_z};
      Vec icpt(J - 1);
      icpt[0] = -1.0 + 0.5 * rng.normal();
      for (int j = 1; j < J - 1; ++j) icpt[j] = icpt[j - 1] + 0.3 + std::abs(rng.normal());
      Vec bz(p_z);
      for (int k = 0; k < p_z; ++k) bz[k] = rng.normal();
      BetaParams beta(icpt, rng.normal(), bz);
      double x = rng.normal();
      Vec z(p_z);
      for (int k = 0; k < p_z; ++k) z[k] = rng.normal();

      OccasionDerivs od = occasion_derivs(spec, beta, x, z);
      Mat fd = fd_jacobian(spec, beta.to_vector(), x, z, 1e-5);
      double scale = 1.0 + fd.lpNorm<Eigen::Infinity>();
      CHECK((od.D - fd).lpNorm<Eigen::Infinity>() < 1e-6 * scale);
    }
  }

  TEST_CASE("slope columns vanish at x = 0, z = 0 only via the chain rule") {
    // the x column of D is (dcum_j - dcum_{j-1}) * x, so it is exactly 0 at x = 0
    OrdinalSpec spec{3, 1, 1};
    BetaParams beta = harness_beta();
    OccasionDerivs od = occasion_derivs(spec, beta, 0.0, vec1(0.0));
    CHECK(od.D.col(2).norm() == 0.0);  // beta_x column
    CHECK(od.D.col(3).norm() == 0.0);  // beta_z column
    CHECK(od.D.col(0).norm() > 0.0);
  }

  TEST_CASE("binary derivative is mu (1 - mu) times the covariate") {
    OrdinalSpec spec{2, 1, 1};
    BetaParams beta(vec1(0.2), -0.6, vec1(0.9));
    double x = 1.3;
    Vec z = vec1(-0.4);
    OccasionDerivs od = occasion_derivs(spec, beta, x, z);
    double mu = expit(0.2 - 0.6 * x + 0.9 * z[0]);
    double w = mu * (1.0 - mu);
    CHECK(od.D(0, 0) == doctest::Approx(w).epsilon(1e-12));
    CHECK(od.D(0, 1) == doctest::Approx(w * x).epsilon(1e-12));
    CHECK(od.D(0, 2) == doctest::Approx(w * z[0]).epsilon(1e-12));
  }

  TEST_CASE("subject model requires x or an override") {
    OrdinalSpec spec{3, 2, 1};
    BetaParams beta = harness_beta();
    SubjectRecord subj;
    subj.id = "a";
    Occasion oc1{1, 0.0, vec1(0.1)};
    Occasion oc2{2, std::nullopt, vec1(0.2)};
    subj.occ = {oc1, oc2};
    CHECK_THROWS_AS(mean_and_jacobian(spec, beta, subj), DataError);

    std::vector<std::optional<double>> ov = {std::nullopt, 1.0};
    SubjectModel sm = mean_and_jacobian(spec, beta, subj, &ov);
    CHECK(sm.blocks.size() == 2);
    Vec mu = category_probs(beta, 1.0, vec1(0.2));
    CHECK((sm.blocks[1].mu - mu).norm() == doctest::Approx(0.0).epsilon(1e-15));
  }
}
