#include "drord/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace drord {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool is_missing_cell(const std::string& s) { return s.empty() || s == "NA"; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

[[noreturn]] void cell_error(int row, int col, const std::string& what) {
  throw DataError("row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + what);
}

int parse_int_cell(const std::string& s, int row, int col) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    cell_error(row, col, "cannot parse integer '" + s + "'");
  return v;
}

double parse_double_cell(const std::string& s, int row, int col) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    cell_error(row, col, "cannot parse number '" + s + "'");
  }
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os.precision(17);
  os << v;
  std::string s = os.str();
  // shortest representation that round-trips
  for (int prec = 1; prec < 17; ++prec) {
    std::ostringstream t;
    t.precision(prec);
    t << v;
    if (std::stod(t.str()) == v) return t.str();
  }
  return s;
}

}  // namespace

std::vector<LongTableRow> parse_long_rows(std::istream& in, int p_z_expected) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "subject_id" || header[1] != "occasion" ||
      header[2] != "response" || header[3] != "x")
    throw DataError("header must be subject_id,occasion,response,x,z_1[,...]");
  const int p_z = static_cast<int>(header.size()) - 4;
  for (int k = 0; k < p_z; ++k)
    if (header[4 + k] != "z_" + std::to_string(k + 1))
      throw DataError("z columns must be named z_1..z_" + std::to_string(p_z));
  if (p_z_expected >= 0 && p_z != p_z_expected)
    throw DataError("expected " + std::to_string(p_z_expected) + " z columns, found " +
                    std::to_string(p_z));

  std::vector<LongTableRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != 4 + p_z)
      throw DataError("row " + std::to_string(lineno) + ": expected " + std::to_string(4 + p_z) +
                      " cells, found " + std::to_string(cells.size()));
    LongTableRow r;
    r.subject_id = cells[0];
    if (r.subject_id.empty()) cell_error(lineno, 1, "empty subject id");
    r.occasion = parse_int_cell(cells[1], lineno, 2);
    if (!is_missing_cell(cells[2])) r.response = parse_int_cell(cells[2], lineno, 3);
    if (!is_missing_cell(cells[3])) r.x = parse_double_cell(cells[3], lineno, 4);
    r.z = Vec(p_z);
    for (int k = 0; k < p_z; ++k) {
      if (is_missing_cell(cells[4 + k])) cell_error(lineno, 5 + k, "z cells cannot be missing");
      r.z[k] = parse_double_cell(cells[4 + k], lineno, 5 + k);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("no data rows");
  return rows;
}

std::vector<SubjectRecord> rows_to_records(std::vector<LongTableRow> rows,
                                           const OrdinalSpec& spec) {
  std::map<std::string, std::map<int, LongTableRow>> by_subject;
  for (auto& r : rows) {
    auto& occ_map = by_subject[r.subject_id];
    if (occ_map.count(r.occasion))
      throw DataError("duplicate (subject, occasion) pair: (" + r.subject_id + ", " +
                      std::to_string(r.occasion) + ")");
    occ_map.emplace(r.occasion, std::move(r));
  }
  std::vector<SubjectRecord> data;
  for (auto& [id, occ_map] : by_subject) {
    SubjectRecord subj;
    subj.id = id;
    int expect = 1;
    for (auto& [occ, r] : occ_map) {
      if (occ != expect)
        throw DataError("subject " + id + ": occasions must be contiguous from 1 (found " +
                        std::to_string(occ) + " where " + std::to_string(expect) + " expected)");
      ++expect;
      Occasion oc;
      if (r.response) {
        if (*r.response < 1 || *r.response > spec.J)
          throw DataError("subject " + id + ", occasion " + std::to_string(occ) + ": response " +
                          std::to_string(*r.response) + " outside 1.." + std::to_string(spec.J));
        oc.o = r.response;
      }
      oc.x = r.x;
      if (r.z.size() != spec.p_z)
        throw DataError("subject " + id + ": z length does not match the configuration");
      oc.z = r.z;
      subj.occ.push_back(std::move(oc));
    }
    data.push_back(std::move(subj));
  }
  return data;
}

std::vector<SubjectRecord> read_long_csv(const std::string& path, const OrdinalSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return rows_to_records(parse_long_rows(in, spec.p_z), spec);
}

void write_long_csv(const std::string& path, const std::vector<SubjectRecord>& data,
                    const OrdinalSpec& spec) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "subject_id,occasion,response,x";
  for (int k = 0; k < spec.p_z; ++k) out << ",z_" << (k + 1);
  out << "\n";
  for (const auto& subj : data)
    for (size_t t = 0; t < subj.occ.size(); ++t) {
      const Occasion& oc = subj.occ[t];
      out << subj.id << "," << (t + 1) << ",";
      if (oc.o) out << *oc.o;
      out << ",";
      if (oc.x) out << fmt_double(*oc.x);
      for (int k = 0; k < spec.p_z; ++k) out << "," << fmt_double(oc.z[k]);
      out << "\n";
    }
}

namespace {

ordered_json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

Vec json_vec(const ordered_json& j, const std::string& key) {
  if (!j.at(key).is_array()) throw ConfigError(key + " must be an array");
  Vec v(j.at(key).size());
  int i = 0;
  for (const auto& e : j.at(key)) v[i++] = e.get<double>();
  return v;
}

ScenarioConfig scenario_from_json(const ordered_json& j) {
  ScenarioConfig cfg;
  try {
    cfg.n = j.value("n", cfg.n);
    cfg.S = j.value("S", cfg.S);
    cfg.T = j.value("T", cfg.T);
    cfg.J = j.value("J", cfg.J);
    cfg.p_z = j.value("p_z", cfg.p_z);
    cfg.rho = j.value("rho", cfg.rho);
    if (j.count("beta_truth")) cfg.beta_truth = json_vec(j, "beta_truth");
    if (j.count("gamma_truth")) cfg.gamma_truth = json_vec(j, "gamma_truth");
    if (j.count("psi_truth")) cfg.psi_truth = json_vec(j, "psi_truth");
    cfg.r_misspec = j.value("r_misspec", cfg.r_misspec);
    cfg.x_misspec = j.value("x_misspec", cfg.x_misspec);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.count("methods")) {
      cfg.methods.clear();
      for (const auto& m : j.at("methods")) cfg.methods.push_back(method_from_name(m.get<std::string>()));
    }
    if (j.count("migee")) {
      cfg.migee_M = j.at("migee").value("M", cfg.migee_M);
      cfg.migee_cycles = j.at("migee").value("cycles", cfg.migee_cycles);
    }
    if (j.count("drgee")) cfg.dr_smoothed = j.at("drgee").value("smoothed", cfg.dr_smoothed);
    if (j.count("solver")) {
      cfg.solver.tol = j.at("solver").value("tol", cfg.solver.tol);
      cfg.solver.max_iter = j.at("solver").value("max_iter", cfg.solver.max_iter);
    }
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("bad scenario config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> param_names(const OrdinalSpec& spec) {
  std::vector<std::string> names;
  for (int j = 1; j < spec.J; ++j) names.push_back("intercept_" + std::to_string(j));
  names.push_back("beta_x");
  for (int k = 1; k <= spec.p_z; ++k) names.push_back("beta_z_" + std::to_string(k));
  return names;
}

ordered_json scenario_to_json(const ScenarioConfig& cfg) {
  ordered_json j;
  j["n"] = cfg.n;
  j["S"] = cfg.S;
  j["T"] = cfg.T;
  j["J"] = cfg.J;
  j["p_z"] = cfg.p_z;
  j["rho"] = cfg.rho;
  j["beta_truth"] = std::vector<double>(cfg.beta_truth.data(), cfg.beta_truth.data() + cfg.beta_truth.size());
  j["gamma_truth"] = std::vector<double>(cfg.gamma_truth.data(), cfg.gamma_truth.data() + cfg.gamma_truth.size());
  j["psi_truth"] = std::vector<double>(cfg.psi_truth.data(), cfg.psi_truth.data() + cfg.psi_truth.size());
  j["r_misspec"] = cfg.r_misspec;
  j["x_misspec"] = cfg.x_misspec;
  std::vector<std::string> ms;
  for (Method m : cfg.methods) ms.push_back(method_name(m));
  j["methods"] = ms;
  j["seed"] = cfg.seed;
  j["migee"] = {{"M", cfg.migee_M}, {"cycles", cfg.migee_cycles}};
  j["drgee"] = {{"smoothed", cfg.dr_smoothed}};
  return j;
}

ordered_json simresult_to_json(const SimResult& res) {
  OrdinalSpec spec{res.cfg.J, res.cfg.T, res.cfg.p_z};
  std::vector<std::string> names = param_names(spec);
  ordered_json j;
  j["kind"] = "simulation";
  j["scenario"] = scenario_to_json(res.cfg);
  j["missing_rate_at_risk"] = res.miss_rate_at_risk;
  j["missing_rate_overall"] = res.miss_rate_overall;
  j["methods"] = ordered_json::array();
  for (const auto& m : res.methods) {
    ordered_json mj;
    mj["method"] = method_name(m.method);
    mj["n_reps"] = m.n_reps;
    mj["n_converged"] = m.n_converged;
    mj["params"] = ordered_json::array();
    for (size_t k = 0; k < names.size(); ++k) {
      ordered_json pj;
      pj["param"] = names[k];
      pj["truth"] = res.cfg.beta_truth[static_cast<int>(k)];
      pj["bias_pct"] = m.bias_pct[static_cast<int>(k)];
      pj["mc_sd"] = m.mc_sd[static_cast<int>(k)];
      pj["mean_se"] = m.mean_se[static_cast<int>(k)];
      pj["coverage"] = m.coverage[static_cast<int>(k)];
      mj["params"].push_back(std::move(pj));
    }
    j["methods"].push_back(std::move(mj));
  }
  return j;
}

std::string simresult_to_csv(const ordered_json& j) {
  std::ostringstream os;
  os << "method,param,truth,bias_pct,mc_sd,mean_se,coverage,n_converged,n_reps\n";
  for (const auto& m : j.at("methods"))
    for (const auto& p : m.at("params"))
      os << m.at("method").get<std::string>() << "," << p.at("param").get<std::string>() << ","
         << fmt_double(p.at("truth").get<double>()) << ","
         << fmt_double(p.at("bias_pct").get<double>()) << ","
         << fmt_double(p.at("mc_sd").get<double>()) << ","
         << fmt_double(p.at("mean_se").get<double>()) << ","
         << fmt_double(p.at("coverage").get<double>()) << "," << m.at("n_converged").get<int>()
         << "," << m.at("n_reps").get<int>() << "\n";
  return os.str();
}

std::string fixed3(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string simresult_to_txt(const ordered_json& j) {
  std::ostringstream os;
  const auto& sc = j.at("scenario");
  os << "Simulation summary: n=" << sc.at("n").get<int>() << " S=" << sc.at("S").get<int>()
     << " seed=" << sc.at("seed").get<std::uint64_t>()
     << " r_misspec=" << (sc.at("r_misspec").get<bool>() ? "yes" : "no")
     << " x_misspec=" << (sc.at("x_misspec").get<bool>() ? "yes" : "no") << "\n";
  os << "Missing rate (occasions 2..T): "
     << fixed3(j.at("missing_rate_at_risk").get<double>())
     << "  overall: " << fixed3(j.at("missing_rate_overall").get<double>()) << "\n\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %-12s %10s %10s %10s %10s %12s\n", "method", "param",
                "bias_pct", "mc_sd", "mean_se", "coverage", "converged");
  os << buf;
  for (const auto& m : j.at("methods"))
    for (const auto& p : m.at("params")) {
      std::snprintf(buf, sizeof(buf), "%-10s %-12s %10s %10s %10s %10s %7d/%4d\n",
                    m.at("method").get<std::string>().c_str(),
                    p.at("param").get<std::string>().c_str(),
                    fixed3(p.at("bias_pct").get<double>()).c_str(),
                    fixed3(p.at("mc_sd").get<double>()).c_str(),
                    fixed3(p.at("mean_se").get<double>()).c_str(),
                    fixed3(p.at("coverage").get<double>()).c_str(), m.at("n_converged").get<int>(),
                    m.at("n_reps").get<int>());
      os << buf;
    }
  return os.str();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << content;
}

}  // namespace

double wald_p(double est, double se) {
  if (!(se > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return 2.0 * (1.0 - norm_cdf(std::abs(est / se)));
}

int simulate_command(const std::string& config_path, const std::string& out_dir,
                     std::optional<std::uint64_t> seed_override, int jobs) {
  ScenarioConfig cfg = scenario_from_json(load_json(config_path));
  if (seed_override) cfg.seed = *seed_override;
  SimResult res = run_simulation(cfg, jobs);

  std::filesystem::create_directories(out_dir);
  ordered_json j = simresult_to_json(res);
  write_text(out_dir + "/table1.json", j.dump(2) + "\n");
  write_text(out_dir + "/table1.csv", simresult_to_csv(j));
  write_text(out_dir + "/table1.txt", simresult_to_txt(j));
  return 0;
}

namespace {

struct FitConfig {
  OrdinalSpec spec;
  std::vector<Method> methods{Method::available, Method::wgee, Method::migee, Method::drgee};
  std::vector<double> x_support;  // empty: derive from the data
  ImputationConfig migee;
  AugmentationConfig drgee;
  MissRecipe miss_recipe;
  bool cov_lag_x = true;
  SolverConfig solver;
};

FitConfig fit_config_from_json(const ordered_json& j) {
  FitConfig cfg;
  try {
    cfg.spec.J = j.value("J", 3);
    cfg.spec.p_z = j.value("p_z", 1);
    if (j.count("methods")) {
      cfg.methods.clear();
      for (const auto& m : j.at("methods")) cfg.methods.push_back(method_from_name(m.get<std::string>()));
    }
    if (j.count("x_support"))
      for (const auto& v : j.at("x_support")) cfg.x_support.push_back(v.get<double>());
    if (j.count("migee")) {
      cfg.migee.M = j.at("migee").value("M", cfg.migee.M);
      cfg.migee.cycles = j.at("migee").value("cycles", cfg.migee.cycles);
      cfg.migee.rng_seed = j.at("migee").value("seed", cfg.migee.rng_seed);
    }
    if (j.count("drgee")) cfg.drgee.smoothed = j.at("drgee").value("smoothed", false);
    if (j.count("missingness")) {
      const auto& mj = j.at("missingness");
      cfg.miss_recipe.lag_r = mj.value("lag_r", cfg.miss_recipe.lag_r);
      cfg.miss_recipe.lag_o_star = mj.value("lag_o_star", cfg.miss_recipe.lag_o_star);
      cfg.miss_recipe.lag_x_star = mj.value("lag_x_star", cfg.miss_recipe.lag_x_star);
      cfg.miss_recipe.z = mj.value("z", cfg.miss_recipe.z);
    }
    if (j.count("covariate")) cfg.cov_lag_x = j.at("covariate").value("lag_x", true);
    if (j.count("solver")) {
      cfg.solver.tol = j.at("solver").value("tol", cfg.solver.tol);
      cfg.solver.max_iter = j.at("solver").value("max_iter", cfg.solver.max_iter);
    }
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("bad fit config: ") + e.what());
  }
  if (cfg.spec.J < 2) throw ConfigError("J must be at least 2");
  if (cfg.spec.p_z < 1) throw ConfigError("p_z must be at least 1");
  if (cfg.methods.empty()) throw ConfigError("no methods requested");
  return cfg;
}

std::string fit_txt(const ordered_json& j) {
  std::ostringstream os;
  os << "Fit report: " << j.at("data").get<std::string>() << "  (n="
     << j.at("n_subjects").get<int>() << ")\n\n";
  char buf[160];
  for (const auto& m : j.at("methods")) {
    os << m.at("method").get<std::string>() << ":";
    if (m.count("skipped")) {
      os << " skipped (" << m.at("skipped").get<std::string>() << ")\n\n";
      continue;
    }
    if (m.count("error")) {
      os << " failed (" << m.at("error").get<std::string>() << ")\n\n";
      continue;
    }
    os << "\n";
    std::snprintf(buf, sizeof(buf), "  %-12s %10s %10s %10s\n", "param", "est", "se", "p");
    os << buf;
    for (const auto& p : m.at("params")) {
      std::snprintf(buf, sizeof(buf), "  %-12s %10s %10s %10s\n",
                    p.at("param").get<std::string>().c_str(),
                    fixed3(p.at("est").get<double>()).c_str(),
                    fixed3(p.at("se").get<double>()).c_str(),
                    fixed3(p.at("p").get<double>()).c_str());
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string fit_csv(const ordered_json& j) {
  std::ostringstream os;
  os << "method,param,est,se,p\n";
  for (const auto& m : j.at("methods")) {
    if (m.count("params"))
      for (const auto& p : m.at("params"))
        os << m.at("method").get<std::string>() << "," << p.at("param").get<std::string>() << ","
           << fmt_double(p.at("est").get<double>()) << "," << fmt_double(p.at("se").get<double>())
           << "," << fmt_double(p.at("p").get<double>()) << "\n";
  }
  return os.str();
}

}  // namespace

int fit_command(const std::string& config_path, const std::string& data_path,
                const std::string& out_dir) {
  FitConfig cfg = fit_config_from_json(load_json(config_path));
  std::vector<SubjectRecord> data = read_long_csv(data_path, cfg.spec);
  int T = 0;
  for (const auto& subj : data) T = std::max(T, subj.n_occ());
  cfg.spec.T = T;

  bool any_missing = false;
  for (const auto& subj : data)
    for (const auto& oc : subj.occ)
      if (!oc.o || !oc.x) any_missing = true;

  std::vector<double> support = cfg.x_support;
  if (support.empty()) {
    for (const auto& subj : data)
      for (const auto& oc : subj.occ)
        if (oc.x) support.push_back(*oc.x);
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end(),
                              [](double a, double b) { return std::abs(a - b) < 1e-9; }),
                  support.end());
  }

  std::vector<std::string> names = param_names(cfg.spec);
  ordered_json report;
  report["kind"] = "fit";
  report["data"] = data_path;
  report["n_subjects"] = static_cast<int>(data.size());
  report["methods"] = ordered_json::array();
  int n_done = 0;

  for (Method m : cfg.methods) {
    ordered_json mj;
    mj["method"] = method_name(m);
    if (m == Method::complete && any_missing) {
      mj["skipped"] = "data contain missing cells";
      report["methods"].push_back(std::move(mj));
      continue;
    }
    try {
      FitResult fr;
      switch (m) {
        case Method::complete:
          fr = gee_fit(data, cfg.spec, cfg.solver, FitMode::complete);
          break;
        case Method::available:
          fr = gee_fit(data, cfg.spec, cfg.solver, FitMode::available);
          break;
        case Method::wgee: {
          MissingnessModel proto;
          proto.binary = true;
          proto.recipe = cfg.miss_recipe;
          proto.T = T;
          proto.p_z = cfg.spec.p_z;
          proto.init_zero();
          fr = wgee_fit(data, cfg.spec, proto, cfg.solver).fit;
          break;
        }
        case Method::migee:
          fr = migee_fit(data, cfg.spec, cfg.migee, cfg.solver, support).fit;
          break;
        case Method::drgee: {
          MissingnessModel proto;
          proto.binary = true;
          proto.recipe = cfg.miss_recipe;
          proto.T = T;
          proto.p_z = cfg.spec.p_z;
          proto.init_zero();
          CovariateModel cm;
          cm.support = support;
          cm.recipe.lag_x = cfg.cov_lag_x;
          cm.p_z = cfg.spec.p_z;
          cm.init_zero();
          fr = drgee_fit(data, cfg.spec, proto, cm, cfg.drgee, cfg.solver).fit;
          break;
        }
      }
      mj["params"] = ordered_json::array();
      for (size_t k = 0; k < names.size(); ++k) {
        double est = fr.beta_hat[static_cast<int>(k)];
        double se = std::sqrt(std::max(fr.cov(static_cast<int>(k), static_cast<int>(k)), 0.0));
        ordered_json pj;
        pj["param"] = names[k];
        pj["est"] = est;
        pj["se"] = se;
        pj["p"] = wald_p(est, se);
        mj["params"].push_back(std::move(pj));
      }
      ++n_done;
    } catch (const Error& e) {
      mj["error"] = e.what();
    }
    report["methods"].push_back(std::move(mj));
  }

  std::filesystem::create_directories(out_dir);
  write_text(out_dir + "/table2.json", report.dump(2) + "\n");
  write_text(out_dir + "/table2.csv", fit_csv(report));
  write_text(out_dir + "/table2.txt", fit_txt(report));
  return n_done > 0 ? 0 : 3;
}

int report_command(const std::string& in_dir, const std::string& format) {
  if (format != "csv" && format != "json" && format != "txt")
    throw ConfigError("format must be csv, json or txt");
  std::string path;
  for (const char* base : {"table1.json", "table2.json"})
    if (std::filesystem::exists(in_dir + "/" + base)) path = in_dir + "/" + base;
  if (path.empty()) throw ConfigError("no table1.json or table2.json in " + in_dir);
  ordered_json j = load_json(path);
  std::string out;
  bool sim = j.value("kind", "") == "simulation";
  if (format == "json")
    out = j.dump(2) + "\n";
  else if (format == "csv")
    out = sim ? simresult_to_csv(j) : fit_csv(j);
  else
    out = sim ? simresult_to_txt(j) : fit_txt(j);
  std::fputs(out.c_str(), stdout);
  return 0;
}

}  // namespace drord
