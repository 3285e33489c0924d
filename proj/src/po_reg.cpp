#include "drord/po_reg.hpp"

#include <cmath>

#include "drord/ordinal_core.hpp"

namespace drord {

Vec po_pack(const PoReg& m) {
  Vec v(m.cuts.size() + m.slopes.size());
  v.head(m.cuts.size()) = m.cuts;
  v.tail(m.slopes.size()) = m.slopes;
  return v;
}

PoReg po_unpack(const Vec& theta, int K, int q) {
  if (theta.size() != (K - 1) + q) throw DimensionMismatch("po_unpack: wrong length");
  PoReg m;
  m.K = K;
  m.cuts = theta.head(K - 1);
  m.slopes = theta.tail(q);
  return m;
}

static Vec cum_probs(const PoReg& m, const Vec& row) {
  double eta = m.slopes.dot(row);
  Vec cum(m.K - 1);
  for (int k = 0; k < m.K - 1; ++k)
    cum[k] = expit(std::clamp(m.cuts[k] - eta, -kEtaClamp, kEtaClamp));
  return cum;
}

Vec po_probs(const PoReg& m, const Vec& row) {
  Vec cum = cum_probs(m, row);
  Vec p(m.K);
  double prev = 0.0;
  for (int k = 0; k < m.K - 1; ++k) {
    p[k] = std::max(cum[k] - prev, kProbFloor);
    prev = cum[k];
  }
  p[m.K - 1] = std::max(1.0 - prev, kProbFloor);
  return p;
}

double po_loglik(const Vec& theta, int K, const Mat& X, const std::vector<int>& y) {
  PoReg m = po_unpack(theta, K, static_cast<int>(X.cols()));
  double ll = 0.0;
  for (int i = 0; i < X.rows(); ++i) ll += std::log(po_probs(m, X.row(i))[y[i]]);
  return ll;
}

// d cum_k/d theta as rows of a (K-1) x dim matrix for one row of the design.
static Mat cum_jac(const PoReg& m, const Vec& row, const Vec& cum) {
  const int q = static_cast<int>(m.slopes.size());
  Mat jc = Mat::Zero(m.K - 1, m.K - 1 + q);
  for (int k = 0; k < m.K - 1; ++k) {
    double w = cum[k] * (1.0 - cum[k]);
    jc(k, k) = w;
    jc.block(k, m.K - 1, 1, q) = -w * row.transpose();
  }
  return jc;
}

Vec po_score(const Vec& theta, int K, const Mat& X, const std::vector<int>& y) {
  const int q = static_cast<int>(X.cols());
  PoReg m = po_unpack(theta, K, q);
  Vec s = Vec::Zero(theta.size());
  for (int i = 0; i < X.rows(); ++i) {
    Vec row = X.row(i);
    Vec cum = cum_probs(m, row);
    Vec p = po_probs(m, row);
    Mat jc = cum_jac(m, row, cum);
    int c = y[i];
    Vec dp = Vec::Zero(theta.size());
    if (c < K - 1) dp += jc.row(c);
    if (c > 0) dp -= jc.row(c - 1);
    s += dp / p[c];
  }
  return s;
}

Mat po_info(const Vec& theta, int K, const Mat& X) {
  const int q = static_cast<int>(X.cols());
  PoReg m = po_unpack(theta, K, q);
  Mat info = Mat::Zero(theta.size(), theta.size());
  for (int i = 0; i < X.rows(); ++i) {
    Vec row = X.row(i);
    Vec cum = cum_probs(m, row);
    Vec p = po_probs(m, row);
    Mat jc = cum_jac(m, row, cum);
    for (int c = 0; c < K; ++c) {
      Vec dp = Vec::Zero(theta.size());
      if (c < K - 1) dp += jc.row(c);
      if (c > 0) dp -= jc.row(c - 1);
      info += dp * dp.transpose() / p[c];
    }
  }
  return info;
}

PoRegFit po_fit(const Mat& X, const std::vector<int>& y, int K, const SolverConfig& cfg) {
  if (static_cast<int>(y.size()) != X.rows()) throw DimensionMismatch("po_fit: X/y size");
  std::vector<long> counts(K, 0);
  for (int c : y) {
    if (c < 0 || c >= K) throw DataError("po_fit: category outside 0..K-1");
    ++counts[c];
  }
  for (int k = 0; k < K; ++k)
    if (counts[k] == 0)
      throw DegenerateCategory("po_fit: category " + std::to_string(k) + " never observed");

  // start at empirical cumulative logits, zero slopes
  Vec theta = Vec::Zero(K - 1 + X.cols());
  double cum = 0.0;
  for (int k = 0; k < K - 1; ++k) {
    cum += static_cast<double>(counts[k]) / y.size();
    theta[k] = std::log(cum / (1.0 - cum));
  }

  auto score = [&](const Vec& th) {
    if (th.lpNorm<Eigen::Infinity>() > 50.0)
      throw NonConvergence("po_fit: separation suspected", th, 0, std::numeric_limits<double>::infinity());
    return po_score(th, K, X, y);
  };
  auto jac = [&](const Vec& th) { return Mat(-po_info(th, K, X)); };

  SolveInfo info;
  Vec th_hat = solve(score, jac, theta, cfg, &info);

  PoRegFit fit;
  fit.model = po_unpack(th_hat, K, static_cast<int>(X.cols()));
  Mat fisher = po_info(th_hat, K, X);
  Eigen::FullPivLU<Mat> lu(fisher);
  if (!lu.isInvertible()) throw SingularSystem("po_fit: singular information");
  fit.cov = lu.inverse();
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose());
  fit.iterations = info.iterations;
  fit.score_norm = info.score_norm;
  fit.converged = true;
  return fit;
}

}  // namespace drord
