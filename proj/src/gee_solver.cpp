#include "drord/gee_solver.hpp"

#include <cmath>

namespace drord {

Vec solve(const ScoreFn& score, const JacFn& jac, Vec x, const SolverConfig& cfg,
          SolveInfo* info) {
  if (cfg.tol <= 0 || cfg.max_iter < 1) throw InvalidParameter("SolverConfig invalid");
  Vec U = score(x);
  double unorm = U.lpNorm<Eigen::Infinity>();
  int it = 0;
  while (unorm > cfg.tol && it < cfg.max_iter) {
    ++it;
    Mat J = jac(x);
    if (J.rows() != x.size() || J.cols() != x.size())
      throw DimensionMismatch("solve: jacobian shape");
    Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible()) throw SingularSystem("solve: singular jacobian");
    Vec step = lu.solve(-U);

    double scale = 1.0;
    Vec xn, Un;
    double un_norm = 0.0;
    for (int h = 0; h <= cfg.step_halvings; ++h) {
      xn = x + scale * step;
      bool ok = true;
      try {
        Un = score(xn);
        un_norm = Un.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(un_norm)) ok = false;
      } catch (const NonConvergence&) {
        throw;
      } catch (const Error&) {
        ok = false;  // infeasible trial point (e.g. crossed intercepts): shrink
      }
      if (ok && (un_norm <= unorm || h == cfg.step_halvings)) break;
      if (!ok && h == cfg.step_halvings) throw NonConvergence("solve: no feasible step", x, it, unorm);
      scale *= 0.5;
    }
    double step_norm = (scale * step).lpNorm<Eigen::Infinity>();
    x = xn;
    U = Un;
    unorm = un_norm;
    if (step_norm <= cfg.tol) break;  // stalled at the solution scale
  }
  if (info) {
    info->iterations = it;
    info->score_norm = unorm;
  }
  if (unorm > cfg.tol) {
    // either a genuine non-root or a stalled step; only the former errors
    if (it >= cfg.max_iter)
      throw NonConvergence("solve: max_iter exceeded", x, it, unorm);
  }
  return x;
}

static bool usable(const Occasion& oc) { return oc.o.has_value() && oc.x.has_value(); }

GeeParts gee_parts(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                   const Vec& beta, const std::vector<Vec>* weights) {
  const int p = spec.n_beta();
  BetaParams bp = BetaParams::from_vector(beta, spec);
  GeeParts parts{Vec::Zero(p), Mat::Zero(p, p)};
  for (size_t i = 0; i < data.size(); ++i) {
    const auto& subj = data[i];
    for (int t = 0; t < subj.n_occ(); ++t) {
      const Occasion& oc = subj.occ[t];
      if (!usable(oc)) continue;
      double w = weights ? (*weights)[i][t] : 1.0;
      if (w == 0.0) continue;
      OccasionDerivs d = occasion_derivs(spec, bp, *oc.x, oc.z);
      Mat vinv = v_inverse(d.blk.mu);
      Vec y = encode_indicators(*oc.o, spec.J);
      Mat dtv = d.D.transpose() * vinv;  // p x (J-1)
      parts.U += w * (dtv * (y - d.blk.mu));
      parts.fisher += w * (dtv * d.D);
    }
  }
  return parts;
}

Vec subject_score(const SubjectRecord& subj, const OrdinalSpec& spec, const Vec& beta,
                  const Vec* weights) {
  BetaParams bp = BetaParams::from_vector(beta, spec);
  Vec g = Vec::Zero(spec.n_beta());
  for (int t = 0; t < subj.n_occ(); ++t) {
    const Occasion& oc = subj.occ[t];
    if (!usable(oc)) continue;
    double w = weights ? (*weights)[t] : 1.0;
    if (w == 0.0) continue;
    OccasionDerivs d = occasion_derivs(spec, bp, *oc.x, oc.z);
    g += w * (d.D.transpose() * v_inverse(d.blk.mu) * (encode_indicators(*oc.o, spec.J) - d.blk.mu));
  }
  return g;
}

Vec init_beta(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec) {
  std::vector<long> counts(spec.J, 0);
  long n_used = 0;
  for (const auto& subj : data)
    for (const auto& oc : subj.occ)
      if (usable(oc)) {
        ++counts[*oc.o - 1];
        ++n_used;
      }
  if (n_used == 0) throw DataError("init_beta: no usable occasions");
  for (int j = 0; j < spec.J; ++j)
    if (counts[j] == 0)
      throw DegenerateCategory("init_beta: response category " + std::to_string(j + 1) +
                               " never observed");
  Vec b = Vec::Zero(spec.n_beta());
  double cum = 0.0;
  for (int j = 0; j < spec.J - 1; ++j) {
    cum += static_cast<double>(counts[j]) / n_used;
    b[j] = std::log(cum / (1.0 - cum));
  }
  return b;
}

static void check_mode(const std::vector<SubjectRecord>& data, FitMode mode) {
  if (mode != FitMode::complete) return;
  for (const auto& subj : data)
    for (const auto& oc : subj.occ)
      if (!usable(oc))
        throw DataError("gee_fit(complete): missing values present, subject " + subj.id);
}

FitResult gee_fit(const std::vector<SubjectRecord>& data, const OrdinalSpec& spec,
                  const SolverConfig& cfg, FitMode mode) {
  spec.validate();
  for (const auto& s : data) s.validate(spec);
  check_mode(data, mode);

  auto score = [&](const Vec& b) { return gee_parts(data, spec, b).U; };
  auto jac = [&](const Vec& b) { return Mat(-gee_parts(data, spec, b).fisher); };
  SolveInfo info;
  Vec bhat = solve(score, jac, init_beta(data, spec), cfg, &info);

  FitResult res;
  res.beta_hat = bhat;
  res.cov = sandwich_cov(bhat, data, spec, mode);
  res.iterations = info.iterations;
  res.score_norm = info.score_norm;
  res.converged = true;
  return res;
}

Mat sandwich_cov(const Vec& beta_hat, const std::vector<SubjectRecord>& data,
                 const OrdinalSpec& spec, FitMode mode) {
  check_mode(data, mode);
  GeeParts parts = gee_parts(data, spec, beta_hat);
  Eigen::FullPivLU<Mat> lu(parts.fisher);
  if (!lu.isInvertible()) throw SingularSystem("sandwich_cov: singular Sigma0");
  Mat meat = Mat::Zero(spec.n_beta(), spec.n_beta());
  for (const auto& subj : data) {
    Vec g = subject_score(subj, spec, beta_hat);
    meat += g * g.transpose();
  }
  Mat bread = lu.inverse();
  Mat cov = bread * meat * bread.transpose();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace drord
