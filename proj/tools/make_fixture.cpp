// Generates the bundled synthetic analysis fixture: 49 subjects, 3 occasions,
// a 3-level response and a 3-level time-varying covariate, whole-occasion
// missingness with exactly 9 missing occasions at time 2 and 18 at time 3,
// and at least one non-monotone subject. Seeds are searched until the counts
// land exactly and all four estimators converge on the result.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "drord/cli_io.hpp"
#include "drord/covariate_model.hpp"
#include "drord/drgee.hpp"
#include "drord/gee_solver.hpp"
#include "drord/migee.hpp"
#include "drord/missingness.hpp"
#include "drord/ordinal_core.hpp"
#include "drord/rng.hpp"
#include "drord/types.hpp"
#include "drord/wgee.hpp"

namespace {

using namespace drord;

constexpr int kSubjects = 49;
constexpr int kT = 3;
constexpr int kJ = 3;

// covariate chain over {1,2,3}: P(X <= k) = expit(cut_k - 0.5 x_prev + 0.3 z)
double x_step(RngStream& rng, double x_prev, double z) {
  double eta = 0.5 * x_prev - 0.3 * z;
  double c1 = expit(-0.7 - eta);
  double c2 = expit(0.7 - eta);
  double u = rng.uniform();
  if (u < c1) return 1.0;
  if (u < c2) return 2.0;
  return 3.0;
}

// response: logit P(O <= j) = icpt_j - 0.45 x + 0.35 z
int o_draw(RngStream& rng, double x, double z) {
  double eta = -0.45 * x + 0.35 * z;
  double c1 = expit(-0.6 + eta);
  double c2 = expit(0.9 + eta);
  double u = rng.uniform();
  if (u < c1) return 1;
  if (u < c2) return 2;
  return 3;
}

std::vector<SubjectRecord> generate(std::uint64_t seed, int* miss2, int* miss3,
                                    bool* nonmono) {
  RngStream rng(seed);
  std::vector<SubjectRecord> data;
  *miss2 = 0;
  *miss3 = 0;
  *nonmono = false;
  for (int i = 0; i < kSubjects; ++i) {
    SubjectRecord s;
    char id[8];
    std::snprintf(id, sizeof id, "S%02d", i + 1);
    s.id = id;
    double x_prev = 0.0;
    std::vector<int> o(kT);
    std::vector<double> x(kT), z(kT);
    for (int t = 0; t < kT; ++t) {
      z[t] = 0.4 * (t + 1) + 0.7 * rng.normal();
      x[t] = x_step(rng, x_prev, z[t]);
      x_prev = x[t];
      o[t] = o_draw(rng, x[t], z[t]);
    }
    // whole-occasion dropout driven by the observed part of the history
    std::vector<bool> seen(kT, true);
    for (int t = 1; t < kT; ++t) {
      double eta = (t == 1 ? 1.75 : 0.70) + 0.2 * z[t];
      if (seen[t - 1]) eta += -0.5 * o[t - 1] + 0.3 * x[t - 1];
      seen[t] = rng.bernoulli(expit(eta));
    }
    if (!seen[1]) ++*miss2;
    if (!seen[2]) ++*miss3;
    if (!seen[1] && seen[2]) *nonmono = true;
    for (int t = 0; t < kT; ++t) {
      Occasion oc;
      oc.z = Vec::Constant(1, z[t]);
      if (seen[t]) {
        oc.o = o[t];
        oc.x = x[t];
      }
      s.occ.push_back(oc);
    }
    data.push_back(std::move(s));
  }
  return data;
}

bool all_methods_converge(const std::vector<SubjectRecord>& data) {
  OrdinalSpec spec{kJ, kT, 1};
  MissingnessModel miss;
  miss.binary = true;
  miss.T = kT;
  miss.p_z = 1;
  miss.init_zero();
  CovariateModel cov;
  cov.support = {1.0, 2.0, 3.0};
  cov.p_z = 1;
  cov.init_zero();
  try {
    gee_fit(data, spec, {}, FitMode::available);
    wgee_fit(data, spec, miss, {});
    ImputationConfig ic;
    ic.M = 5;
    ic.cycles = 3;
    ic.rng_seed = 17;
    migee_fit(data, spec, ic, {}, {1.0, 2.0, 3.0});
    drgee_fit(data, spec, miss, cov);
  } catch (const Error& e) {
    std::fprintf(stderr, "  fit rejected candidate: %s\n", e.what());
    return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  std::string out = argc > 1 ? argv[1] : "tests/data/analgesia_synthetic.csv";
  for (std::uint64_t seed = 1; seed <= 50000; ++seed) {
    int m2 = 0, m3 = 0;
    bool nonmono = false;
    auto data = generate(seed, &m2, &m3, &nonmono);
    if (m2 != 9 || m3 != 18 || !nonmono) continue;
    std::fprintf(stderr, "seed %llu matches the 9/18 pattern, checking fits\n",
                 static_cast<unsigned long long>(seed));
    if (!all_methods_converge(data)) continue;
    write_long_csv(out, data, OrdinalSpec{kJ, kT, 1});
    std::printf("wrote %s (seed %llu)\n", out.c_str(),
                static_cast<unsigned long long>(seed));
    return 0;
  }
  std::fprintf(stderr, "no usable seed found\n");
  return 1;
}
