#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace drord {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---- errors -------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidParameter : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };
struct PositivityViolation : Error { using Error::Error; };
struct IdentifiabilityError : Error { using Error::Error; };
struct DegenerateCategory : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };

// Raised by the root finder when max_iter is exhausted; carries the last iterate
// so callers (e.g. the simulation harness) can log and exclude.
struct NonConvergence : Error {
  Vec last_iterate;
  int iterations = 0;
  double score_norm = std::numeric_limits<double>::quiet_NaN();
  NonConvergence(const std::string& msg, Vec last, int iters, double snorm)
      : Error(msg), last_iterate(std::move(last)), iterations(iters), score_norm(snorm) {}
};

// ---- data model ----------------------------------------------------------

struct OrdinalSpec {
  int J = 2;   // response categories, response values 1..J
  int T = 1;   // max occasions
  int p_z = 0; // covariates always observed

  void validate() const {
    if (J < 2) throw InvalidParameter("OrdinalSpec: J must be >= 2");
    if (T < 1) throw InvalidParameter("OrdinalSpec: T must be >= 1");
    if (p_z < 0) throw InvalidParameter("OrdinalSpec: p_z must be >= 0");
  }
  int n_beta() const { return (J - 1) + 1 + p_z; }
};

struct Occasion {
  std::optional<int> o;     // response in 1..J, empty if missing
  std::optional<double> x;  // incomplete covariate
  Vec z;                    // always-observed covariates, length p_z
};

struct SubjectRecord {
  std::string id;
  std::vector<Occasion> occ;

  int n_occ() const { return static_cast<int>(occ.size()); }
  void validate(const OrdinalSpec& spec) const {
    if (occ.empty()) throw DataError("SubjectRecord " + id + ": no occasions");
    for (const auto& oc : occ) {
      if (oc.o && (*oc.o < 1 || *oc.o > spec.J))
        throw DataError("SubjectRecord " + id + ": response outside 1..J");
      if (oc.z.size() != spec.p_z)
        throw DataError("SubjectRecord " + id + ": z length != p_z");
    }
  }
};

// Proportional-odds parameters: logit P(O <= j) = intercepts[j] + beta_x*x + beta_z'z.
struct BetaParams {
  Vec intercepts;  // length J-1, strictly increasing
  double beta_x = 0.0;
  Vec beta_z;

  BetaParams() = default;
  BetaParams(Vec icpt, double bx, Vec bz)
      : intercepts(std::move(icpt)), beta_x(bx), beta_z(std::move(bz)) {
    for (int j = 1; j < intercepts.size(); ++j)
      if (!(intercepts[j] > intercepts[j - 1]))
        throw InvalidParameter("BetaParams: intercepts must be strictly increasing");
  }

  Vec to_vector() const {
    Vec v(intercepts.size() + 1 + beta_z.size());
    v.head(intercepts.size()) = intercepts;
    v[intercepts.size()] = beta_x;
    v.tail(beta_z.size()) = beta_z;
    return v;
  }
  static BetaParams from_vector(const Vec& v, const OrdinalSpec& spec) {
    if (v.size() != spec.n_beta())
      throw DimensionMismatch("BetaParams::from_vector: wrong length");
    return BetaParams(v.head(spec.J - 1), v[spec.J - 1], v.tail(spec.p_z));
  }
};

}  // namespace drord
