#include "drord/drgee.hpp"

#include <cmath>
#include <functional>

#include "drord/ordinal_core.hpp"
#include "drord/wgee.hpp"

namespace drord {

Vec theta_features(const ThetaParams& theta, int o_prev, double x, const Vec& z) {
  if (o_prev < 1 || o_prev > theta.J) throw DataError("theta_features: lagged response out of range");
  if (z.size() != theta.p_z) throw DimensionMismatch("theta_features: z length");
  Vec row = Vec::Zero(theta.n_features());
  if (o_prev >= 2) row[o_prev - 2] = 1.0;
  row[theta.J - 1] = x;
  row.segment(theta.J, theta.p_z) = z;
  return row;
}

Vec theta_probs(const ThetaParams& theta, int t, int o_prev, double x, const Vec& z) {
  if (t < 1 || t - 1 >= static_cast<int>(theta.per_occ.size()))
    throw InvalidParameter("theta_probs: no model for this occasion");
  return po_probs(theta.per_occ[t - 1], theta_features(theta, o_prev, x, z));
}

ThetaFit fit_theta(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec) {
  int T = 0;
  for (const auto& subj : data) T = std::max(T, subj.n_occ());
  ThetaFit out;
  out.theta.J = spec.J;
  out.theta.p_z = spec.p_z;
  const int q = out.theta.n_features();
  for (int t = 1; t < T; ++t) {
    std::vector<Vec> rows;
    std::vector<int> y;
    for (const auto& subj : data) {
      if (t >= subj.n_occ()) continue;
      const Occasion& prev = subj.occ[t - 1];
      const Occasion& cur = subj.occ[t];
      if (!prev.o || !cur.o || !cur.x) continue;
      rows.push_back(theta_features(out.theta, *prev.o, *cur.x, cur.z));
      y.push_back(*cur.o - 1);
    }
    if (rows.empty())
      throw DataError("fit_theta: no adjacent complete pairs into occasion " + std::to_string(t + 1));
    Mat X(static_cast<int>(rows.size()), q);
    for (size_t r = 0; r < rows.size(); ++r) X.row(static_cast<int>(r)) = rows[r].transpose();
    PoRegFit fit = po_fit(X, y, spec.J);
    out.theta.per_occ.push_back(fit.model);
    out.fits.push_back(std::move(fit));
  }
  return out;
}

Mat n_matrix(const Vec& mu, double delta) { return (1.0 - delta) * v_inverse(mu); }

Vec augmentation_term(const OrdinalSpec& spec, const BetaParams& beta,
                      const BetaParams& beta_star, const CovariateModel& cov_model,
                      const SubjectRecord& subj, const AugmentationConfig& cfg, RngStream* rng) {
  const int p = spec.n_beta();
  Vec out = Vec::Zero(p);
  bool any = false;
  for (const auto& oc : subj.occ) any = any || !oc.o || !oc.x;
  if (!any) return out;

  XPosterior xp =
      conditional_missing_x_dist(cov_model, subj, cfg.enumeration_cap, rng, cfg.mc_draws);
  SubjectRecord work = subj;
  for (size_t c = 0; c < xp.configs.size(); ++c) {
    for (size_t j = 0; j < xp.missing_idx.size(); ++j)
      work.occ[xp.missing_idx[j]].x = xp.configs[c][j];
    for (int t = 0; t < subj.n_occ(); ++t) {
      if (subj.occ[t].o && subj.occ[t].x) continue;
      double x = *work.occ[t].x;
      const Vec& z = subj.occ[t].z;
      OccasionDerivs d = occasion_derivs(spec, beta, x, z);
      // missing responses integrate to the working means at beta_star
      Vec etilde = subj.occ[t].o ? encode_indicators(*subj.occ[t].o, spec.J)
                                 : category_probs(beta_star, x, z);
      out += xp.w[static_cast<int>(c)] *
             (d.D.transpose() * v_inverse(d.blk.mu) * (etilde - d.blk.mu));
    }
  }
  return out;
}

namespace {

// category distribution over the response at occasion t given the previous
// response, the current covariate value and z
using RespProbsFn = std::function<Vec(int t, int o_prev, double x, const Vec& z)>;

Vec px_from_state(const CovariateModel& cov_model, const SubjectRecord& subj, int t, int o_prev,
                  int xp_idx) {
  Vec row(cov_model.n_features());
  int pos = 0;
  if (cov_model.recipe.lag_x) row[pos++] = cov_model.support[xp_idx];
  if (cov_model.recipe.z_term) {
    row.segment(pos, cov_model.p_z) = subj.occ[t].z;
    pos += cov_model.p_z;
  }
  if (cov_model.recipe.y_history) row[pos++] = static_cast<double>(o_prev);
  return conditional_x_prob(cov_model, row);
}

SubjectTables build_tables(const OrdinalSpec& spec, const SubjectRecord& subj,
                           const CovariateModel& cov_model, const RespProbsFn& resp,
                           bool smoothed, int cap) {
  const int J = spec.J;
  const int K = static_cast<int>(cov_model.support.size());
  const int Ti = subj.n_occ();
  if (Ti == 0) return {};
  if (!subj.occ[0].o || !subj.occ[0].x)
    throw DataError("augmented fit requires a fully observed first occasion, subject " + subj.id);

  std::vector<Vec> enc(J);
  for (int o = 1; o <= J; ++o) enc[o - 1] = encode_indicators(o, J);

  SubjectTables tabs;
  tabs.cells.resize(Ti);
  Mat dist = Mat::Zero(J, K);
  dist(*subj.occ[0].o - 1, cov_model.support_index(*subj.occ[0].x)) = 1.0;

  for (int t = 1; t < Ti; ++t) {
    Mat nd = Mat::Zero(J, K);
    for (int op = 0; op < J; ++op)
      for (int xp = 0; xp < K; ++xp) {
        double mass = dist(op, xp);
        if (mass == 0.0) continue;
        Vec pxv = px_from_state(cov_model, subj, t, op + 1, xp);
        for (int b = 0; b < K; ++b) {
          if (pxv[b] == 0.0) continue;
          Vec pov = resp(t, op + 1, cov_model.support[b], subj.occ[t].z);
          for (int oo = 0; oo < J; ++oo) nd(oo, b) += mass * pxv[b] * pov[oo];
        }
      }
    // one-step-ahead predictive cells over (response, covariate) at t
    std::vector<XCell>& cells = tabs.cells[t];
    for (int b = 0; b < K; ++b) {
      XCell cell;
      cell.x = cov_model.support[b];
      cell.ebar = Vec::Zero(J - 1);
      for (int oo = 0; oo < J; ++oo) {
        cell.wx += nd(oo, b);
        cell.ebar += nd(oo, b) * enc[oo];
      }
      if (cell.wx > 0.0) cells.push_back(std::move(cell));
    }
    // filter on whatever was observed at t
    if (subj.occ[t].o) {
      int keep = *subj.occ[t].o - 1;
      for (int oo = 0; oo < J; ++oo)
        if (oo != keep) nd.row(oo).setZero();
    }
    if (subj.occ[t].x) {
      int keep = cov_model.support_index(*subj.occ[t].x);
      for (int b = 0; b < K; ++b)
        if (b != keep) nd.col(b).setZero();
    }
    double tot = nd.sum();
    if (tot <= 0.0) throw PositivityViolation("completion table lost all mass, subject " + subj.id);
    dist = nd / tot;
  }

  if (smoothed) {
    // replace the cells of incomplete occasions by their conditional
    // distribution given everything observed, via joint enumeration
    struct Slot {
      int t;
      bool is_o;
      int n;
    };
    std::vector<Slot> slots;
    double total = 1.0;
    for (int t = 1; t < Ti; ++t) {
      if (!subj.occ[t].o) {
        slots.push_back({t, true, J});
        total *= J;
      }
      if (!subj.occ[t].x) {
        slots.push_back({t, false, K});
        total *= K;
      }
    }
    if (!slots.empty()) {
      if (total > static_cast<double>(cap))
        throw InvalidParameter("smoothed completion enumeration exceeds the cap");
      const long nc = static_cast<long>(std::llround(total));
      std::vector<Mat> marg(Ti);
      for (int t = 1; t < Ti; ++t) marg[t] = Mat::Zero(J, K);
      std::vector<int> oval(Ti), xidx(Ti);
      oval[0] = *subj.occ[0].o;
      xidx[0] = cov_model.support_index(*subj.occ[0].x);
      for (long c = 0; c < nc; ++c) {
        long rem = c;
        for (int t = 1; t < Ti; ++t) {
          oval[t] = subj.occ[t].o ? *subj.occ[t].o : 0;
          xidx[t] = subj.occ[t].x ? cov_model.support_index(*subj.occ[t].x) : -1;
        }
        for (const Slot& s : slots) {
          int v = static_cast<int>(rem % s.n);
          rem /= s.n;
          if (s.is_o)
            oval[s.t] = v + 1;
          else
            xidx[s.t] = v;
        }
        double w = 1.0;
        for (int t = 1; t < Ti; ++t) {
          w *= px_from_state(cov_model, subj, t, oval[t - 1], xidx[t - 1])[xidx[t]];
          w *= resp(t, oval[t - 1], cov_model.support[xidx[t]], subj.occ[t].z)[oval[t] - 1];
        }
        for (int t = 1; t < Ti; ++t)
          if (!subj.occ[t].o || !subj.occ[t].x) marg[t](oval[t] - 1, xidx[t]) += w;
      }
      for (int t = 1; t < Ti; ++t) {
        if (subj.occ[t].o && subj.occ[t].x) continue;
        double tot = marg[t].sum();
        if (tot <= 0.0)
          throw PositivityViolation("smoothed table lost all mass, subject " + subj.id);
        std::vector<XCell> cells;
        for (int b = 0; b < K; ++b) {
          XCell cell;
          cell.x = cov_model.support[b];
          cell.ebar = Vec::Zero(J - 1);
          for (int oo = 0; oo < J; ++oo) {
            cell.wx += marg[t](oo, b) / tot;
            cell.ebar += (marg[t](oo, b) / tot) * enc[oo];
          }
          if (cell.wx > 0.0) cells.push_back(std::move(cell));
        }
        tabs.cells[t] = std::move(cells);
      }
    }
  }
  return tabs;
}

RespProbsFn resp_from_theta(const ThetaParams& theta) {
  return [&theta](int t, int o_prev, double x, const Vec& z) {
    return theta_probs(theta, t, o_prev, x, z);
  };
}

RespProbsFn resp_from_beta(const OrdinalSpec& spec, const BetaParams& beta) {
  return [&spec, &beta](int /*t*/, int /*o_prev*/, double x, const Vec& z) {
    Vec head = category_probs(beta, x, z);
    Vec full(spec.J);
    full.head(spec.J - 1) = head;
    full[spec.J - 1] = std::max(1.0 - head.sum(), kProbFloor);
    return full;
  };
}

}  // namespace

DrPrepared dr_prepare(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                      const MissingnessModel& miss, const CovariateModel& cov_model,
                      const ThetaParams& theta, const AugmentationConfig& cfg) {
  DrPrepared prep;
  prep.tables.reserve(data.size());
  prep.delta.reserve(data.size());
  RespProbsFn resp = resp_from_theta(theta);
  for (const auto& subj : data) {
    prep.tables.push_back(
        build_tables(spec, subj, cov_model, resp, cfg.smoothed, cfg.enumeration_cap));
    prep.delta.push_back(weight_matrix(miss, subj).delta);
  }
  return prep;
}

Vec dr_subject_score(const OrdinalSpec& spec, const Vec& beta, const SubjectRecord& subj,
                     const SubjectTables& tables, const Vec& delta) {
  BetaParams bp = BetaParams::from_vector(beta, spec);
  Vec s = Vec::Zero(spec.n_beta());
  for (int t = 0; t < subj.n_occ(); ++t) {
    const Occasion& oc = subj.occ[t];
    bool complete = oc.o.has_value() && oc.x.has_value();
    if (complete && delta[t] != 0.0) {
      OccasionDerivs d = occasion_derivs(spec, bp, *oc.x, oc.z);
      s += delta[t] * (d.D.transpose() * v_inverse(d.blk.mu) *
                       (encode_indicators(*oc.o, spec.J) - d.blk.mu));
    }
    if (t >= 1) {
      double w_aug = complete ? (1.0 - delta[t]) : 1.0;
      if (w_aug != 0.0) {
        Vec shat = Vec::Zero(spec.n_beta());
        for (const XCell& cell : tables.cells[t]) {
          OccasionDerivs d = occasion_derivs(spec, bp, cell.x, oc.z);
          shat += d.D.transpose() * v_inverse(d.blk.mu) * (cell.ebar - cell.wx * d.blk.mu);
        }
        s += w_aug * shat;
      }
    }
  }
  return s;
}

namespace {

Vec dr_total_score(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                   const Vec& beta, const DrPrepared& prep) {
  Vec s = Vec::Zero(spec.n_beta());
  for (size_t i = 0; i < data.size(); ++i)
    s += dr_subject_score(spec, beta, data[i], prep.tables[i], prep.delta[i]);
  return s;
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  const int p = static_cast<int>(x.size());
  Mat J(p, p);
  for (int j = 0; j < p; ++j) {
    Vec hi = x, lo = x;
    hi[j] += h;
    lo[j] -= h;
    J.col(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return J;
}

}  // namespace

DrgeeFit drgee_fit(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                   MissingnessModel miss_proto, CovariateModel cov_proto,
                   const AugmentationConfig& aug, const SolverConfig& cfg) {
  DrgeeFit out;
  bool any_missing = false;
  for (const auto& subj : data)
    for (const auto& oc : subj.occ)
      if (!oc.o || !oc.x) any_missing = true;

  if (!any_missing) {
    // every delta is 1 and every augmentation weight 0: the equations reduce
    // to the plain independence GEE
    out.fit = gee_fit(data, spec, cfg, FitMode::available);
    return out;
  }

  out.psi = fit_psi(data, miss_proto, cfg);
  out.gamma = fit_gamma(data, cov_proto, cfg);
  const bool ante = aug.beta_star_rule == BetaStarRule::antedependence;
  if (ante) {
    ThetaFit tf = fit_theta(data, spec);
    out.theta = tf.theta;
    for (size_t k = 0; k < tf.fits.size(); ++k)
      if (!tf.fits[k].converged)
        out.warnings.push_back("response predictive at occasion " + std::to_string(k + 2) +
                               " did not converge");
  }

  // starting value: the inverse-probability-weighted fit
  std::vector<Vec> weights;
  weights.reserve(data.size());
  for (const auto& subj : data) weights.push_back(weight_matrix(out.psi.model, subj).delta);
  Vec init;
  {
    auto wscore = [&](const Vec& b) { return gee_parts(data, spec, b, &weights).U; };
    auto wjac = [&](const Vec& b) { return Mat(-gee_parts(data, spec, b, &weights).fisher); };
    try {
      init = solve(wscore, wjac, init_beta(data, spec), cfg);
    } catch (const NonConvergence&) {
      init = init_beta(data, spec);
    }
  }

  SolveInfo info;
  Vec beta_hat;
  if (ante) {
    DrPrepared prep = dr_prepare(data, spec, out.psi.model, out.gamma.model, out.theta, aug);
    auto score = [&](const Vec& b) { return dr_total_score(data, spec, b, prep); };
    auto jac = [&](const Vec& b) { return fd_jacobian(score, b); };
    beta_hat = solve(score, jac, init, cfg, &info);
  } else {
    auto score = [&](const Vec& b) {
      BetaParams bp = BetaParams::from_vector(b, spec);
      RespProbsFn resp = resp_from_beta(spec, bp);
      Vec s = Vec::Zero(spec.n_beta());
      for (size_t i = 0; i < data.size(); ++i) {
        SubjectTables tabs = build_tables(spec, data[i], out.gamma.model, resp, aug.smoothed,
                                          aug.enumeration_cap);
        s += dr_subject_score(spec, b, data[i], tabs, weights[i]);
      }
      return s;
    };
    auto jac = [&](const Vec& b) { return fd_jacobian(score, b); };
    beta_hat = solve(score, jac, init, cfg, &info);
  }

  out.fit.beta_hat = beta_hat;
  out.fit.iterations = info.iterations;
  out.fit.score_norm = info.score_norm;
  out.fit.converged = true;
  out.fit.cov = dr_sandwich(data, spec, beta_hat, out.psi, out.gamma, out.theta, aug);
  return out;
}

Mat dr_sandwich(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                const Vec& beta_hat, const PsiFit& psi, const GammaFit& gamma,
                const ThetaParams& theta, const AugmentationConfig& cfg) {
  const int n = static_cast<int>(data.size());
  const int p = static_cast<int>(beta_hat.size());
  DrPrepared prep = dr_prepare(data, spec, psi.model, gamma.model, theta, cfg);

  std::vector<Vec> S1(n);
  for (int i = 0; i < n; ++i)
    S1[i] = dr_subject_score(spec, beta_hat, data[i], prep.tables[i], prep.delta[i]);

  // bread: derivative of the summed equations in beta (tables fixed)
  auto total_at = [&](const Vec& b) { return dr_total_score(data, spec, b, prep); };
  Mat gamma_sum = fd_jacobian(total_at, beta_hat);

  // correction for the estimated missingness parameters: the equations
  // depend on psi only through the weights delta = r / pi
  Vec psi_hat = psi_pack(psi.model);
  const int q2 = static_cast<int>(psi_hat.size());
  auto total_at_psi = [&](const Vec& ps) {
    MissingnessModel m = psi.model;
    psi_unpack(m, ps);
    Vec s = Vec::Zero(p);
    for (int i = 0; i < n; ++i) {
      Vec delta = weight_matrix(m, data[i]).delta;
      s += dr_subject_score(spec, beta_hat, data[i], prep.tables[i], delta);
    }
    return s;
  };
  Mat I12(p, q2);
  const double h = 1e-6;
  for (int j = 0; j < q2; ++j) {
    Vec hi = psi_hat, lo = psi_hat;
    hi[j] += h;
    lo[j] -= h;
    I12.col(j) = (total_at_psi(hi) - total_at_psi(lo)) / (2.0 * h);
  }
  Mat I2 = Mat::Zero(q2, q2);
  std::vector<Vec> S2(n);
  for (int i = 0; i < n; ++i) {
    S2[i] = psi_subject_score(psi.model, data[i]);
    I2 += S2[i] * S2[i].transpose();
  }

  // correction for the estimated covariate chain: it enters the completion
  // tables, so those are rebuilt at the perturbed parameters
  Vec gam_hat = po_pack(gamma.model.po);
  const int q3 = static_cast<int>(gam_hat.size());
  auto total_at_gamma = [&](const Vec& gs) {
    CovariateModel cm = gamma.model;
    cm.po = po_unpack(gs, cm.po.K, cm.n_features());
    RespProbsFn resp = resp_from_theta(theta);
    Vec s = Vec::Zero(p);
    for (int i = 0; i < n; ++i) {
      SubjectTables tabs =
          build_tables(spec, data[i], cm, resp, cfg.smoothed, cfg.enumeration_cap);
      s += dr_subject_score(spec, beta_hat, data[i], tabs, prep.delta[i]);
    }
    return s;
  };
  Mat I13(p, q3);
  for (int j = 0; j < q3; ++j) {
    Vec hi = gam_hat, lo = gam_hat;
    hi[j] += h;
    lo[j] -= h;
    I13.col(j) = (total_at_gamma(hi) - total_at_gamma(lo)) / (2.0 * h);
  }
  Mat I3 = Mat::Zero(q3, q3);
  std::vector<Vec> S3(n);
  for (int i = 0; i < n; ++i) {
    S3[i] = gamma_subject_score(gamma.model, data[i]);
    I3 += S3[i] * S3[i].transpose();
  }

  Eigen::FullPivLU<Mat> lu2(I2);
  Eigen::FullPivLU<Mat> lu3(I3);
  if (!lu2.isInvertible() || !lu3.isInvertible())
    throw SingularSystem("dr_sandwich: singular nuisance information");
  Mat A2 = I12 * lu2.inverse();
  Mat A3 = I13 * lu3.inverse();

  // first-order expansion: beta_hat - beta = -Gamma^{-1} sum_i q_i with
  // q_i = S1_i + I12 I2^{-1} S2_i + I13 I3^{-1} S3_i (derivative-form I1k)
  Mat meat = Mat::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    Vec qi = S1[i] + A2 * S2[i] + A3 * S3[i];
    meat += qi * qi.transpose();
  }
  Eigen::FullPivLU<Mat> lug(gamma_sum);
  if (!lug.isInvertible()) throw SingularSystem("dr_sandwich: singular bread");
  Mat ginv = lug.inverse();
  Mat cov = ginv * meat * ginv.transpose();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace drord
