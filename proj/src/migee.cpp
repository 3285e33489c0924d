#include "drord/migee.hpp"

#include <algorithm>
#include <cmath>

#include "drord/po_reg.hpp"

namespace drord {

namespace {

// wide layout: column ids 2*t for O_t, 2*t + 1 for X_t
struct WideTable {
  int T = 0;
  int n = 0;
  int p_z = 0;
  std::vector<double> x_support;
  Mat vals;                     // n x 2T, category indices as doubles
  std::vector<std::vector<bool>> miss;  // originally missing cells, n x 2T
  Mat z;                        // n x (T * p_z)
};

bool is_x_col(int c) { return (c % 2) == 1; }
int col_occ(int c) { return c / 2; }

WideTable to_wide(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                  std::vector<double> x_support) {
  WideTable w;
  w.n = static_cast<int>(data.size());
  if (w.n == 0) throw DataError("fcs_impute: no subjects");
  w.T = data[0].n_occ();
  w.p_z = spec.p_z;
  for (const auto& subj : data)
    if (subj.n_occ() != w.T)
      throw DataError("fcs_impute: imputation requires the same number of occasions per subject");

  if (x_support.empty()) {
    for (const auto& subj : data)
      for (const auto& oc : subj.occ)
        if (oc.x) x_support.push_back(*oc.x);
    std::sort(x_support.begin(), x_support.end());
    x_support.erase(std::unique(x_support.begin(), x_support.end(),
                                [](double a, double b) { return std::abs(a - b) < 1e-9; }),
                    x_support.end());
  }
  if (x_support.size() < 2) throw DataError("fcs_impute: covariate support has fewer than two values");
  w.x_support = std::move(x_support);

  auto x_index = [&](double x) {
    for (size_t k = 0; k < w.x_support.size(); ++k)
      if (std::abs(x - w.x_support[k]) < 1e-9) return static_cast<int>(k);
    throw DataError("fcs_impute: covariate value off the support");
  };

  w.vals = Mat::Zero(w.n, 2 * w.T);
  w.miss.assign(w.n, std::vector<bool>(2 * w.T, false));
  w.z = Mat::Zero(w.n, w.T * w.p_z);
  for (int i = 0; i < w.n; ++i) {
    for (int t = 0; t < w.T; ++t) {
      const Occasion& oc = data[i].occ[t];
      if (oc.o)
        w.vals(i, 2 * t) = *oc.o - 1;
      else
        w.miss[i][2 * t] = true;
      if (oc.x)
        w.vals(i, 2 * t + 1) = x_index(*oc.x);
      else
        w.miss[i][2 * t + 1] = true;
      w.z.row(i).segment(t * w.p_z, w.p_z) = oc.z.transpose();
    }
  }
  return w;
}

Mat sqrt_psd(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::vector<std::vector<SubjectRecord>> fcs_impute(const std::vector<SubjectRecord>& data,
                                                   const OrdinalSpec& spec,
                                                   const ImputationConfig& config,
                                                   std::vector<double> x_support) {
  config.validate();
  WideTable w = to_wide(data, spec, std::move(x_support));
  const int Kx = static_cast<int>(w.x_support.size());

  std::vector<int> targets;  // incomplete columns, time order, O before X
  for (int c = 0; c < 2 * w.T; ++c) {
    bool any = false;
    for (int i = 0; i < w.n; ++i) any = any || w.miss[i][c];
    if (any) targets.push_back(c);
  }

  // marginal category frequencies of the observed cells, for initialization
  std::vector<std::vector<double>> marg(2 * w.T);
  for (int c : targets) {
    int K = is_x_col(c) ? Kx : spec.J;
    std::vector<double> f(K, 0.0);
    double tot = 0.0;
    for (int i = 0; i < w.n; ++i)
      if (!w.miss[i][c]) {
        f[static_cast<int>(w.vals(i, c))] += 1.0;
        tot += 1.0;
      }
    if (tot == 0.0) throw DataError("fcs_impute: a column has no observed cells");
    for (auto& v : f) v /= tot;
    marg[c] = f;
  }

  // predictor columns per target: every other O/X column plus all Z's
  auto predictor_cols = [&](int c) {
    std::vector<int> cols;
    for (int d = 0; d < 2 * w.T; ++d) {
      if (d == c) continue;
      if (config.drop_lag_x && col_occ(c) > 0 && d == 2 * (col_occ(c) - 1) + 1) continue;
      cols.push_back(d);
    }
    return cols;
  };

  std::vector<std::vector<SubjectRecord>> out;
  out.reserve(config.M);
  for (int m = 0; m < config.M; ++m) {
    RngStream rng(derive_seed(config.rng_seed, 1000 + static_cast<std::uint64_t>(m)));
    Mat cur = w.vals;
    for (int c : targets)
      for (int i = 0; i < w.n; ++i)
        if (w.miss[i][c]) cur(i, c) = rng.categorical(marg[c]);

    for (int cycle = 0; cycle < config.cycles; ++cycle) {
      for (int c : targets) {
        const int K = is_x_col(c) ? Kx : spec.J;
        std::vector<int> pcols = predictor_cols(c);
        const int q = static_cast<int>(pcols.size()) + w.T * w.p_z;
        auto row_of = [&](int i) {
          Vec row(q);
          for (size_t j = 0; j < pcols.size(); ++j) {
            int d = pcols[j];
            double v = (is_x_col(d)) ? w.x_support[static_cast<int>(cur(i, d))]
                                     : cur(i, d) + 1.0;
            row[static_cast<int>(j)] = v;
          }
          row.tail(w.T * w.p_z) = w.z.row(i).transpose();
          return row;
        };

        int n_obs = 0;
        for (int i = 0; i < w.n; ++i) n_obs += w.miss[i][c] ? 0 : 1;
        Mat X(n_obs, q);
        std::vector<int> y(n_obs);
        int r = 0;
        for (int i = 0; i < w.n; ++i) {
          if (w.miss[i][c]) continue;
          X.row(r) = row_of(i).transpose();
          y[r] = static_cast<int>(w.vals(i, c));
          ++r;
        }

        PoRegFit fit = po_fit(X, y, K);
        Vec theta = po_pack(fit.model);
        Mat L = sqrt_psd(fit.cov);
        Vec zdraw(theta.size());
        for (int j = 0; j < zdraw.size(); ++j) zdraw[j] = rng.normal();
        PoReg star = po_unpack(theta + L * zdraw, K, q);

        for (int i = 0; i < w.n; ++i) {
          if (!w.miss[i][c]) continue;
          Vec p = po_probs(star, row_of(i));
          cur(i, c) = rng.categorical(p);
        }
      }
    }

    std::vector<SubjectRecord> completed = data;
    for (int i = 0; i < w.n; ++i)
      for (int t = 0; t < w.T; ++t) {
        completed[i].occ[t].o = static_cast<int>(cur(i, 2 * t)) + 1;
        completed[i].occ[t].x = w.x_support[static_cast<int>(cur(i, 2 * t + 1))];
      }
    out.push_back(std::move(completed));
  }
  return out;
}

PooledFit pool_rubin(const std::vector<Vec>& estimates, const std::vector<Mat>& covs) {
  const int M = static_cast<int>(estimates.size());
  if (M < 2) throw InvalidParameter("pool_rubin: need at least two estimates");
  if (covs.size() != estimates.size()) throw DimensionMismatch("pool_rubin: list lengths differ");
  const int p = static_cast<int>(estimates[0].size());
  PooledFit out;
  out.beta = Vec::Zero(p);
  for (const auto& e : estimates) out.beta += e;
  out.beta /= static_cast<double>(M);
  out.within = Mat::Zero(p, p);
  for (const auto& c : covs) out.within += c;
  out.within /= static_cast<double>(M);
  out.between = Mat::Zero(p, p);
  for (const auto& e : estimates) {
    Vec d = e - out.beta;
    out.between += d * d.transpose();
  }
  out.between /= static_cast<double>(M - 1);
  out.cov = out.within + (1.0 + 1.0 / static_cast<double>(M)) * out.between;
  return out;
}

MigeeFit migee_fit(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                   const ImputationConfig& config, const SolverConfig& cfg,
                   std::vector<double> x_support) {
  auto completed = fcs_impute(data, spec, config, std::move(x_support));
  std::vector<Vec> estimates;
  std::vector<Mat> covs;
  int iters = 0;
  for (const auto& ds : completed) {
    FitResult f = gee_fit(ds, spec, cfg, FitMode::complete);
    estimates.push_back(f.beta_hat);
    covs.push_back(f.cov);
    iters = std::max(iters, f.iterations);
  }
  PooledFit pooled = pool_rubin(estimates, covs);
  MigeeFit out;
  out.fit.beta_hat = pooled.beta;
  out.fit.cov = pooled.cov;
  out.fit.iterations = iters;
  out.fit.converged = true;
  out.within = pooled.within;
  out.between = pooled.between;
  out.M = config.M;
  return out;
}

}  // namespace drord
