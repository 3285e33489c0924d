#include "drord/covariate_model.hpp"

#include <algorithm>
#include <cmath>

#include "drord/ordinal_core.hpp"

namespace drord {

void CovariateModel::validate() const {
  if (support.size() < 2) throw InvalidParameter("covariate support needs at least two values");
  for (size_t k = 1; k < support.size(); ++k)
    if (!(support[k] > support[k - 1]))
      throw InvalidParameter("covariate support must be strictly increasing");
  if (po.K != static_cast<int>(support.size()))
    throw DimensionMismatch("covariate model K does not match support size");
  if (po.slopes.size() != n_features())
    throw DimensionMismatch("covariate model slope length does not match recipe");
}

int CovariateModel::support_index(double x) const {
  for (size_t k = 0; k < support.size(); ++k)
    if (std::abs(x - support[k]) < 1e-9) return static_cast<int>(k);
  throw DataError("covariate value " + std::to_string(x) + " is not in the support");
}

Vec cov_features(const CovariateModel& model, const SubjectRecord& subj, int t) {
  if (t < 0 || t >= subj.n_occ()) throw InvalidParameter("cov_features: t out of range");
  Vec u(model.n_features());
  int pos = 0;
  if (model.recipe.lag_x) {
    double lx = model.x0;
    if (t > 0) lx = subj.occ[t - 1].x ? *subj.occ[t - 1].x : 0.0;
    u[pos++] = lx;
  }
  if (model.recipe.z_term) {
    if (subj.occ[t].z.size() != model.p_z) throw DimensionMismatch("cov_features: z length");
    u.segment(pos, model.p_z) = subj.occ[t].z;
    pos += model.p_z;
  }
  if (model.recipe.y_history) {
    double lo = 0.0;
    if (t > 0 && subj.occ[t - 1].o) lo = static_cast<double>(*subj.occ[t - 1].o);
    u[pos++] = lo;
  }
  return u;
}

Vec conditional_x_prob(const CovariateModel& model, const Vec& features) {
  if (features.size() != model.n_features())
    throw DimensionMismatch("conditional_x_prob: feature length");
  return po_probs(model.po, features);
}

// gradient of log p(category b | row) w.r.t. packed (cuts, slopes)
static Vec trans_grad(const PoReg& po, const Vec& row, int b) {
  const int K = po.K;
  const double eta = po.slopes.dot(row);
  Vec g = Vec::Zero(K - 1 + po.slopes.size());
  Vec p = po_probs(po, row);
  double w_hi = 0.0, w_lo = 0.0;  // logistic densities at the two bounding cuts
  if (b < K - 1) {
    double c = expit(po.cuts[b] - eta);
    w_hi = c * (1.0 - c);
    g[b] += w_hi;
  }
  if (b > 0) {
    double c = expit(po.cuts[b - 1] - eta);
    w_lo = c * (1.0 - c);
    g[b - 1] -= w_lo;
  }
  g.tail(po.slopes.size()) = -(w_hi - w_lo) * row;
  return g / p[b];
}

namespace {

// forward-backward quantities for one record's covariate chain
struct ChainFB {
  std::vector<Vec> rows;    // feature rows per occasion (lag-x slot overwritten per state)
  std::vector<Mat> trans;   // trans[t](a, b): t >= 1; trans[0] row 0 only (from x0)
  std::vector<int> clamp;   // observed support index, or -1
  std::vector<Vec> fwd, bwd;
  double loglik = 0.0;
};

ChainFB chain_fb(const CovariateModel& model, const SubjectRecord& subj) {
  const int Ti = subj.n_occ();
  const int K = model.po.K;
  ChainFB fb;
  fb.rows.resize(Ti);
  fb.trans.resize(Ti);
  fb.clamp.assign(Ti, -1);
  for (int t = 0; t < Ti; ++t) {
    fb.rows[t] = cov_features(model, subj, t);
    if (subj.occ[t].x) fb.clamp[t] = model.support_index(*subj.occ[t].x);
    const int n_from = (t == 0) ? 1 : K;
    fb.trans[t] = Mat::Zero(n_from, K);
    for (int a = 0; a < n_from; ++a) {
      Vec row = fb.rows[t];
      if (model.recipe.lag_x) row[0] = (t == 0) ? model.x0 : model.support[a];
      fb.trans[t].row(a) = conditional_x_prob(model, row);
    }
  }
  fb.fwd.resize(Ti);
  fb.bwd.resize(Ti);
  for (int t = 0; t < Ti; ++t) {
    Vec f = Vec::Zero(K);
    if (t == 0) {
      f = fb.trans[0].row(0);
    } else {
      for (int b = 0; b < K; ++b) f[b] = fb.fwd[t - 1].dot(fb.trans[t].col(b));
    }
    if (fb.clamp[t] >= 0)
      for (int b = 0; b < K; ++b)
        if (b != fb.clamp[t]) f[b] = 0.0;
    fb.fwd[t] = f;
  }
  double total = fb.fwd[Ti - 1].sum();
  if (total <= 0.0) throw PositivityViolation("covariate chain has zero likelihood");
  fb.loglik = std::log(total);
  fb.bwd[Ti - 1] = Vec::Ones(K);
  for (int t = Ti - 2; t >= 0; --t) {
    Vec b = Vec::Zero(K);
    for (int a = 0; a < K; ++a) {
      double s = 0.0;
      for (int c = 0; c < K; ++c) {
        if (fb.clamp[t + 1] >= 0 && c != fb.clamp[t + 1]) continue;
        s += fb.trans[t + 1](a, c) * fb.bwd[t + 1][c];
      }
      b[a] = s;
    }
    fb.bwd[t] = b;
  }
  return fb;
}

}  // namespace

double observed_loglik(const CovariateModel& model, const SubjectRecord& subj) {
  if (subj.n_occ() == 0) return 0.0;
  return chain_fb(model, subj).loglik;
}

Vec gamma_subject_score(const CovariateModel& model, const SubjectRecord& subj) {
  Vec s = Vec::Zero(model.n_params());
  if (subj.n_occ() == 0) return s;
  ChainFB fb = chain_fb(model, subj);
  const int Ti = subj.n_occ();
  const int K = model.po.K;
  const double total = std::exp(fb.loglik);
  for (int t = 0; t < Ti; ++t) {
    const int n_from = (t == 0) ? 1 : K;
    for (int a = 0; a < n_from; ++a) {
      double mass_a = (t == 0) ? 1.0 : fb.fwd[t - 1][a];
      if (mass_a == 0.0) continue;
      for (int b = 0; b < K; ++b) {
        if (fb.clamp[t] >= 0 && b != fb.clamp[t]) continue;
        double xi = mass_a * fb.trans[t](a, b) * fb.bwd[t][b] / total;
        if (xi == 0.0) continue;
        Vec row = fb.rows[t];
        if (model.recipe.lag_x) row[0] = (t == 0) ? model.x0 : model.support[a];
        s += xi * trans_grad(model.po, row, b);
      }
    }
  }
  return s;
}

GammaFit fit_gamma(const std::vector<SubjectRecord>& data, CovariateModel proto,
                   const SolverConfig& cfg) {
  proto.po.K = static_cast<int>(proto.support.size());
  const int K = proto.po.K;
  std::vector<long> count(K, 0);
  long n_obs = 0;
  for (const auto& subj : data)
    for (const auto& oc : subj.occ)
      if (oc.x) {
        ++count[proto.support_index(*oc.x)];
        ++n_obs;
      }
  if (n_obs == 0) throw DataError("fit_gamma: no observed covariate values");
  for (int k = 0; k < K; ++k)
    if (count[k] == 0)
      throw IdentifiabilityError("fit_gamma: support value " + std::to_string(proto.support[k]) +
                                 " never observed");

  proto.init_zero();
  long cum = 0;
  for (int k = 0; k < K - 1; ++k) {
    cum += count[k];
    double f = static_cast<double>(cum) / static_cast<double>(n_obs);
    proto.po.cuts[k] = std::log(f / (1.0 - f));
  }
  proto.validate();

  auto at = [&](const Vec& th) {
    CovariateModel m = proto;
    m.po = po_unpack(th, proto.po.K, proto.n_features());
    return m;
  };
  auto score = [&](const Vec& th) {
    if (th.lpNorm<Eigen::Infinity>() > 50.0)
      throw NonConvergence("fit_gamma: separation suspected", th, 0,
                           std::numeric_limits<double>::infinity());
    CovariateModel m = at(th);
    Vec s = Vec::Zero(m.n_params());
    for (const auto& subj : data) s += gamma_subject_score(m, subj);
    return s;
  };
  auto jac = [&](const Vec& th) {
    const int q = static_cast<int>(th.size());
    Mat J(q, q);
    const double h = 1e-6;
    for (int j = 0; j < q; ++j) {
      Vec hi = th, lo = th;
      hi[j] += h;
      lo[j] -= h;
      J.col(j) = (score(hi) - score(lo)) / (2.0 * h);
    }
    return J;
  };

  SolveInfo info;
  Vec th_hat = solve(score, jac, po_pack(proto.po), cfg, &info);
  GammaFit fit;
  fit.model = at(th_hat);

  Mat neg_j = -jac(th_hat);
  Eigen::FullPivLU<Mat> lu(neg_j);
  if (!lu.isInvertible()) throw SingularSystem("fit_gamma: singular information");
  fit.cov = lu.inverse();
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose());
  fit.iterations = info.iterations;
  fit.score_norm = info.score_norm;
  fit.converged = true;
  return fit;
}

XPosterior conditional_missing_x_dist(const CovariateModel& model, const SubjectRecord& subj,
                                      int cap, RngStream* rng, int draws) {
  XPosterior post;
  for (int t = 0; t < subj.n_occ(); ++t)
    if (!subj.occ[t].x) post.missing_idx.push_back(t);
  if (post.missing_idx.empty()) {
    post.configs.push_back({});
    post.w = Vec::Ones(1);
    return post;
  }
  const int K = model.po.K;
  const int m = static_cast<int>(post.missing_idx.size());
  double n_conf = std::pow(static_cast<double>(K), m);
  if (n_conf <= static_cast<double>(cap)) {
    const long nc = static_cast<long>(std::llround(n_conf));
    std::vector<double> wts;
    SubjectRecord work = subj;
    for (long c = 0; c < nc; ++c) {
      long rem = c;
      std::vector<double> vals(m);
      for (int j = 0; j < m; ++j) {
        vals[j] = model.support[rem % K];
        rem /= K;
        work.occ[post.missing_idx[j]].x = vals[j];
      }
      // joint density of the full chain with this configuration plugged in
      double lp = 0.0;
      for (int t = 0; t < work.n_occ(); ++t) {
        Vec p = conditional_x_prob(model, cov_features(model, work, t));
        lp += std::log(p[model.support_index(*work.occ[t].x)]);
      }
      post.configs.push_back(vals);
      wts.push_back(lp);
    }
    double mx = *std::max_element(wts.begin(), wts.end());
    post.w = Vec(nc);
    for (long c = 0; c < nc; ++c) post.w[c] = std::exp(wts[c] - mx);
    post.w /= post.w.sum();
    return post;
  }

  if (!rng)
    throw InvalidParameter("conditional_missing_x_dist: configuration count exceeds cap and no "
                           "rng was supplied for sampling");
  ChainFB fb = chain_fb(model, subj);
  const int Ti = subj.n_occ();
  post.w = Vec::Constant(draws, 1.0 / static_cast<double>(draws));
  for (int d = 0; d < draws; ++d) {
    std::vector<int> state(Ti);
    // backward sample: last occasion from filtered, then conditionals
    {
      Vec p = fb.fwd[Ti - 1];
      std::vector<double> pv(p.data(), p.data() + p.size());
      double s = p.sum();
      for (auto& v : pv) v /= s;
      state[Ti - 1] = rng->categorical(pv);
    }
    for (int t = Ti - 2; t >= 0; --t) {
      Vec p(model.po.K);
      for (int a = 0; a < p.size(); ++a) p[a] = fb.fwd[t][a] * fb.trans[t + 1](a, state[t + 1]);
      std::vector<double> pv(p.data(), p.data() + p.size());
      double s = p.sum();
      for (auto& v : pv) v /= s;
      state[t] = rng->categorical(pv);
    }
    std::vector<double> vals(m);
    for (int j = 0; j < m; ++j) vals[j] = model.support[state[post.missing_idx[j]]];
    post.configs.push_back(vals);
  }
  return post;
}

}  // namespace drord
