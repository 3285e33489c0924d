#include "drord/wgee.hpp"

#include "drord/ordinal_core.hpp"

namespace drord {

Mat m_matrix(const Vec& mu, double delta) { return delta * v_inverse(mu); }

WgeeFit wgee_fit(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                 MissingnessModel miss_proto, const SolverConfig& cfg) {
  WgeeFit out;
  bool any_missing = false;
  for (const auto& subj : data)
    for (const auto& oc : subj.occ)
      if (encode_R(oc) != 3) any_missing = true;

  if (!any_missing) {
    out.fit = gee_fit(data, spec, cfg, FitMode::available);
    out.psi_fitted = false;
    for (const auto& subj : data) out.weights.push_back(Vec::Ones(subj.n_occ()));
    return out;
  }

  out.psi = fit_psi(data, miss_proto, cfg);
  out.psi_fitted = true;
  const MissingnessModel& mm = out.psi.model;
  out.weights.reserve(data.size());
  for (const auto& subj : data) out.weights.push_back(weight_matrix(mm, subj).delta);

  auto score = [&](const Vec& b) { return gee_parts(data, spec, b, &out.weights).U; };
  auto jac = [&](const Vec& b) { return Mat(-gee_parts(data, spec, b, &out.weights).fisher); };

  SolveInfo info;
  Vec beta_hat = solve(score, jac, init_beta(data, spec), cfg, &info);
  out.fit.beta_hat = beta_hat;
  out.fit.iterations = info.iterations;
  out.fit.score_norm = info.score_norm;
  out.fit.converged = true;

  // Sandwich with a correction for the estimated missingness parameters.
  // From 0 = sum_i g_i(beta_hat, psi_hat) expanded around the truth,
  // beta_hat - beta ~ -Gamma^{-1} sum_i [g_i + B C^{-1} s_i] with
  // B = d(sum_i g_i)/d psi and C the missingness information
  // (psi.cov = C^{-1}), so the meat uses q_i = g_i + B C^{-1} s_i.
  const int n = static_cast<int>(data.size());
  const int p = static_cast<int>(beta_hat.size());
  Vec psi_hat = psi_pack(mm);
  const int q = static_cast<int>(psi_hat.size());

  auto total_score_at_psi = [&](const Vec& ps) {
    MissingnessModel m = mm;
    psi_unpack(m, ps);
    Vec u = Vec::Zero(p);
    for (const auto& subj : data) {
      Vec w = weight_matrix(m, subj).delta;
      u += subject_score(subj, spec, beta_hat, &w);
    }
    return u;
  };
  Mat B(p, q);
  const double h = 1e-6;
  for (int j = 0; j < q; ++j) {
    Vec hi = psi_hat, lo = psi_hat;
    hi[j] += h;
    lo[j] -= h;
    B.col(j) = (total_score_at_psi(hi) - total_score_at_psi(lo)) / (2.0 * h);
  }
  Mat BC = B * out.psi.cov;

  Mat meat = Mat::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    Vec g = subject_score(data[i], spec, beta_hat, &out.weights[i]);
    Vec qi = g + BC * psi_subject_score(mm, data[i]);
    meat += qi * qi.transpose();
  }
  Mat bread = gee_parts(data, spec, beta_hat, &out.weights).fisher;
  Eigen::FullPivLU<Mat> lu(bread);
  if (!lu.isInvertible()) throw SingularSystem("wgee_fit: singular weighted information");
  Mat binv = lu.inverse();
  out.fit.cov = binv * meat * binv.transpose();
  out.fit.cov = 0.5 * (out.fit.cov + out.fit.cov.transpose());
  return out;
}

}  // namespace drord
