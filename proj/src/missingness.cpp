#include "drord/missingness.hpp"

#include <cmath>

#include "drord/ordinal_core.hpp"

namespace drord {

int encode_R(const Occasion& oc) {
  if (oc.o && oc.x) return 3;
  if (oc.o && !oc.x) return 2;
  if (!oc.o && oc.x) return 1;
  return 0;
}

std::vector<int> encode_R(const SubjectRecord& subj) {
  std::vector<int> r(subj.occ.size());
  for (size_t t = 0; t < subj.occ.size(); ++t) r[t] = encode_R(subj.occ[t]);
  return r;
}

Vec miss_features(const MissingnessModel& model, const SubjectRecord& subj,
                  const std::vector<int>& rcodes, int t, int lag_r_state) {
  if (t < 1 || t >= subj.n_occ()) throw InvalidParameter("miss_features: t out of range");
  if (t >= model.T) throw DimensionMismatch("miss_features: occasion beyond model T");
  Vec u = Vec::Zero(model.n_features());
  int pos = 0;
  if (model.recipe.time_intercepts) {
    u[pos + (t - 1)] = 1.0;  // indicator for occasion t+1 in 1..T counting
    pos += model.T - 1;
  }
  if (model.recipe.lag_r) {
    int prev = (lag_r_state >= 0) ? lag_r_state : rcodes[t - 1];
    u[pos++] = (prev == 1) ? 1.0 : 0.0;
  }
  const Occasion& prev_oc = subj.occ[t - 1];
  if (model.recipe.lag_o_star) {
    bool o_obs = (rcodes[t - 1] == 2 || rcodes[t - 1] == 3);
    u[pos++] = o_obs ? static_cast<double>(*prev_oc.o) : 0.0;
  }
  if (model.recipe.lag_x_star) {
    bool x_obs = (rcodes[t - 1] == 1 || rcodes[t - 1] == 3);
    u[pos++] = x_obs ? *prev_oc.x : 0.0;
  }
  if (model.recipe.z) {
    u.segment(pos, model.p_z) = subj.occ[t].z;
    pos += model.p_z;
  }
  return u;
}

Vec lambda_probs(const MissingnessModel& model, const Vec& features, int t) {
  if (t < 2) throw InvalidParameter("lambda_probs: defined for occasions t >= 2");
  if (features.size() != model.n_features())
    throw DimensionMismatch("lambda_probs: feature length");
  Vec lam = Vec::Zero(4);
  if (model.binary) {
    double p3 = expit(features.dot(model.psi.row(0)));
    lam[0] = 1.0 - p3;
    lam[3] = p3;
    return lam;
  }
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  double smax = 0.0;
  for (int k = 1; k <= 3; ++k) {
    s[k] = model.active[k - 1] ? features.dot(model.psi.row(k - 1))
                               : -std::numeric_limits<double>::infinity();
    if (model.active[k - 1] && s[k] > smax) smax = s[k];
  }
  double denom = std::exp(0.0 - smax);
  for (int k = 1; k <= 3; ++k)
    if (model.active[k - 1]) denom += std::exp(s[k] - smax);
  lam[0] = std::exp(0.0 - smax) / denom;
  for (int k = 1; k <= 3; ++k)
    if (model.active[k - 1]) lam[k] = std::exp(s[k] - smax) / denom;
  return lam;
}

Vec psi_pack(const MissingnessModel& model) {
  const int nf = model.n_features();
  if (model.binary) return model.psi.row(0);
  int n_active = 0;
  for (bool a : model.active) n_active += a ? 1 : 0;
  Vec v(n_active * nf);
  int pos = 0;
  for (int k = 0; k < 3; ++k)
    if (model.active[k]) {
      v.segment(pos, nf) = model.psi.row(k);
      pos += nf;
    }
  return v;
}

void psi_unpack(MissingnessModel& model, const Vec& packed) {
  const int nf = model.n_features();
  if (model.binary) {
    if (packed.size() != nf) throw DimensionMismatch("psi_unpack: length");
    model.psi = packed.transpose();
    return;
  }
  model.psi = Mat::Zero(3, nf);
  int pos = 0;
  for (int k = 0; k < 3; ++k)
    if (model.active[k]) {
      model.psi.row(k) = packed.segment(pos, nf);
      pos += nf;
    }
  if (pos != packed.size()) throw DimensionMismatch("psi_unpack: length");
}

// rows of the politomic likelihood: occasions t >= 2 with outcome R_t
struct PsiRow {
  Vec u;
  int r;
};

static std::vector<PsiRow> psi_rows(const MissingnessModel& model, const SubjectRecord& subj) {
  std::vector<PsiRow> rows;
  std::vector<int> rc = encode_R(subj);
  for (int t = 1; t < subj.n_occ(); ++t) {
    if (model.binary && rc[t] != 0 && rc[t] != 3)
      throw DataError("binary-R mode saw a partially observed occasion, subject " + subj.id);
    rows.push_back({miss_features(model, subj, rc, t), rc[t]});
  }
  return rows;
}

static Vec score_rows(const MissingnessModel& model, const std::vector<PsiRow>& rows) {
  const int nf = model.n_features();
  if (model.binary) {
    Vec s = Vec::Zero(nf);
    for (const auto& row : rows) {
      double p3 = expit(row.u.dot(model.psi.row(0)));
      s += row.u * ((row.r == 3 ? 1.0 : 0.0) - p3);
    }
    return s;
  }
  Vec s = Vec::Zero(psi_pack(model).size());
  for (const auto& row : rows) {
    Vec lam = lambda_probs(model, row.u, 2);
    int pos = 0;
    for (int k = 1; k <= 3; ++k) {
      if (!model.active[k - 1]) continue;
      s.segment(pos, nf) += row.u * ((row.r == k ? 1.0 : 0.0) - lam[k]);
      pos += nf;
    }
  }
  return s;
}

Vec psi_subject_score(const MissingnessModel& model, const SubjectRecord& subj) {
  return score_rows(model, psi_rows(model, subj));
}

static Mat fisher_rows(const MissingnessModel& model, const std::vector<PsiRow>& rows) {
  const int nf = model.n_features();
  if (model.binary) {
    Mat info = Mat::Zero(nf, nf);
    for (const auto& row : rows) {
      double p3 = expit(row.u.dot(model.psi.row(0)));
      info += (p3 * (1.0 - p3)) * (row.u * row.u.transpose());
    }
    return info;
  }
  std::vector<int> act;
  for (int k = 0; k < 3; ++k)
    if (model.active[k]) act.push_back(k + 1);
  const int na = static_cast<int>(act.size());
  Mat info = Mat::Zero(na * nf, na * nf);
  for (const auto& row : rows) {
    Vec lam = lambda_probs(model, row.u, 2);
    Mat uu = row.u * row.u.transpose();
    for (int a = 0; a < na; ++a)
      for (int b = 0; b < na; ++b) {
        double w = lam[act[a]] * ((a == b ? 1.0 : 0.0) - lam[act[b]]);
        info.block(a * nf, b * nf, nf, nf) += w * uu;
      }
  }
  return info;
}

PsiFit fit_psi(const std::vector<SubjectRecord>& data, MissingnessModel model,
               const SolverConfig& cfg) {
  std::vector<PsiRow> rows;
  for (const auto& subj : data) {
    auto r = psi_rows(model, subj);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (rows.empty()) throw DataError("fit_psi: no occasions at t >= 2");

  PsiFit fit;
  long count[4] = {0, 0, 0, 0};
  for (const auto& row : rows) ++count[row.r];
  if (model.binary) {
    if (count[0] == 0 || count[3] == 0)
      throw DegenerateCategory("fit_psi: a binary outcome class is empty");
  } else {
    for (int k = 1; k <= 3; ++k)
      if (model.active[k - 1] && count[k] == 0) {
        model.active[k - 1] = false;
        fit.warnings.push_back("category " + std::to_string(k) + " never observed; dropped");
      }
    if (count[0] == 0)
      throw DegenerateCategory("fit_psi: reference category 0 never observed");
  }

  model.init_zero();
  auto unpacked = [&](const Vec& th) {
    MissingnessModel m = model;
    psi_unpack(m, th);
    return m;
  };
  auto score = [&](const Vec& th) {
    if (th.lpNorm<Eigen::Infinity>() > 50.0)
      throw NonConvergence("fit_psi: separation suspected", th, 0,
                           std::numeric_limits<double>::infinity());
    return score_rows(unpacked(th), rows);
  };
  auto jac = [&](const Vec& th) { return Mat(-fisher_rows(unpacked(th), rows)); };

  SolveInfo info;
  Vec th_hat = solve(score, jac, psi_pack(model), cfg, &info);
  psi_unpack(model, th_hat);

  Mat fisher = fisher_rows(model, rows);
  Eigen::FullPivLU<Mat> lu(fisher);
  if (!lu.isInvertible()) throw SingularSystem("fit_psi: singular information");
  fit.model = model;
  fit.cov = lu.inverse();
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose());
  fit.iterations = info.iterations;
  fit.score_norm = info.score_norm;
  fit.converged = true;
  return fit;
}

Vec marginal_pi(const MissingnessModel& model, const SubjectRecord& subj, double eps) {
  std::vector<int> rc = encode_R(subj);
  if (rc.empty()) throw DataError("marginal_pi: empty record");
  if (rc[0] != 3) throw DataError("marginal_pi: occasion 1 must be fully observed, subject " + subj.id);
  const int Ti = subj.n_occ();
  Vec pi(Ti);
  pi[0] = 1.0;
  Vec q = Vec::Zero(4);
  q[3] = 1.0;
  for (int t = 1; t < Ti; ++t) {
    Vec next = Vec::Zero(4);
    if (model.recipe.lag_r) {
      for (int s = 0; s < 4; ++s) {
        if (q[s] == 0.0) continue;
        Vec lam = lambda_probs(model, miss_features(model, subj, rc, t, s), 2);
        next += q[s] * lam;
      }
    } else {
      next = lambda_probs(model, miss_features(model, subj, rc, t), 2);
    }
    pi[t] = next[3];
    q = next;
    if (pi[t] < eps)
      throw PositivityViolation("marginal_pi: pi below " + std::to_string(eps) + ", subject " +
                                subj.id);
  }
  return pi;
}

WeightMatrix weight_matrix(const MissingnessModel& model, const SubjectRecord& subj, double eps) {
  WeightMatrix w;
  w.pi = marginal_pi(model, subj, eps);
  std::vector<int> rc = encode_R(subj);
  w.delta = Vec::Zero(subj.n_occ());
  for (int t = 0; t < subj.n_occ(); ++t) w.delta[t] = (rc[t] == 3) ? 1.0 / w.pi[t] : 0.0;
  return w;
}

}  // namespace drord
