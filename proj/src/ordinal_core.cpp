#include "drord/ordinal_core.hpp"

#include <algorithm>
#include <cmath>

namespace drord {

double expit(double v) {
  if (v >= 0.0) {
    double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(v);
  return e / (1.0 + e);
}

static double clamp_eta(double eta) { return std::clamp(eta, -kEtaClamp, kEtaClamp); }

Vec cumulative_probs(const BetaParams& beta, double x, const Vec& z) {
  if (z.size() != beta.beta_z.size())
    throw DimensionMismatch("cumulative_probs: z length != beta_z length");
  const int Jm1 = static_cast<int>(beta.intercepts.size());
  double shift = beta.beta_x * x + beta.beta_z.dot(z);
  Vec cum(Jm1);
  for (int j = 0; j < Jm1; ++j) cum[j] = expit(clamp_eta(beta.intercepts[j] + shift));
  return cum;
}

Vec category_probs(const BetaParams& beta, double x, const Vec& z) {
  Vec cum = cumulative_probs(beta, x, z);
  const int Jm1 = static_cast<int>(cum.size());
  Vec mu(Jm1);
  double prev = 0.0;
  for (int j = 0; j < Jm1; ++j) {
    mu[j] = std::max(cum[j] - prev, kProbFloor);
    prev = cum[j];
  }
  return mu;
}

Vec encode_indicators(int o, int J) {
  if (o < 1 || o > J) throw DataError("encode_indicators: response outside 1..J");
  Vec y = Vec::Zero(J - 1);
  if (o < J) y[o - 1] = 1.0;
  return y;
}

Mat v_inverse(const Vec& mu) {
  const int m = static_cast<int>(mu.size());
  double muJ = std::max(1.0 - mu.sum(), kProbFloor);
  Mat vi = Mat::Constant(m, m, 1.0 / muJ);
  for (int j = 0; j < m; ++j) vi(j, j) += 1.0 / mu[j];
  return vi;
}

MeanBlock mean_block(const BetaParams& beta, double x, const Vec& z) {
  MeanBlock b;
  b.mu = category_probs(beta, x, z);
  b.fdiag = b.mu.array() * (1.0 - b.mu.array());
  b.V = Mat(b.mu.asDiagonal()) - b.mu * b.mu.transpose();
  return b;
}

OccasionDerivs occasion_derivs(const OrdinalSpec& spec, const BetaParams& beta,
                               double x, const Vec& z) {
  const int Jm1 = spec.J - 1;
  const int p = spec.n_beta();
  OccasionDerivs out;
  out.blk = mean_block(beta, x, z);

  // d cum_j / d eta_j = cum_j (1 - cum_j); eta_j = icpt_j + bx*x + bz'z.
  Vec cum = cumulative_probs(beta, x, z);
  Vec dcum = cum.array() * (1.0 - cum.array());
  out.D = Mat::Zero(Jm1, p);
  for (int j = 0; j < Jm1; ++j) {
    double dlo = (j > 0) ? dcum[j - 1] : 0.0;
    // intercept columns: cum_j depends only on its own intercept
    out.D(j, j) += dcum[j];
    if (j > 0) out.D(j, j - 1) -= dlo;
    double slope = dcum[j] - dlo;
    out.D(j, Jm1) = slope * x;
    for (int k = 0; k < spec.p_z; ++k) out.D(j, Jm1 + 1 + k) = slope * z[k];
  }
  return out;
}

SubjectModel mean_and_jacobian(const OrdinalSpec& spec, const BetaParams& beta,
                               const SubjectRecord& subj,
                               const std::vector<std::optional<double>>* x_override) {
  SubjectModel m;
  m.blocks.reserve(subj.occ.size());
  m.D.reserve(subj.occ.size());
  for (size_t t = 0; t < subj.occ.size(); ++t) {
    const Occasion& oc = subj.occ[t];
    std::optional<double> x = oc.x;
    if (x_override && t < x_override->size() && (*x_override)[t]) x = (*x_override)[t];
    if (!x) throw DataError("mean_and_jacobian: missing x without override, subject " + subj.id);
    OccasionDerivs d = occasion_derivs(spec, beta, *x, oc.z);
    m.blocks.push_back(std::move(d.blk));
    m.D.push_back(std::move(d.D));
  }
  return m;
}

}  // namespace drord
