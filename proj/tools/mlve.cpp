// mlve: command-line front end.
//
//   mlve [--config FILE] [--threads N] [--out FILE] [--log FILE] <command> [options]
//
// Single results are written as JSON, scans as CSV with a JSON sidecar.
// Exit status: 0 success, 2 invalid input, 3 numerical failure.

#include "mlve/mlve.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace mlve;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  // model
  int M = 2;
  int j_min = 1;
  int j_max = 2;
  double g_re = 0.02;
  double g_im = 0.0;
  double modulus = -1.0;  // polar form wins when set
  double angle = 0.0;     // gamma = Arg(g) / 2
  double rho = 1.0;
  // observable
  int k = 0;
  std::vector<int> p;
  // engines
  int n_max = 3;
  int orders = 4;
  int pade_L = -1;
  int pade_M = -1;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
  double tolerance = 1e-10;
  int bkar_n = 3;
  int instances = 500;
  int resolvent_N = 8;
  std::string modulus_grid = "0.01:0.01:0.05";
  std::string angle_grid = "-1.2:0.6:1.2";
  bool scan_oracle = true;
  // run
  int threads = 0;
  std::string out;
  std::string log;
};

std::string command_name;

json complex_json(cplx z) { return json{{"re", z.real()}, {"im", z.imag()}}; }

json config_json(const RunConfig& c, int threads) {
  json j;
  j["command"] = command_name;
  const bool model = command_name != "bkar-check" && command_name != "grassmann-check";
  if (model) {
    j["model"] = {{"M", c.M}, {"j_min", c.j_min}, {"j_max", c.j_max}, {"rho", c.rho}};
    if (c.modulus >= 0.0)
      j["model"]["g"] = {{"modulus", c.modulus}, {"angle", c.angle}};
    else
      j["model"]["g"] = {{"re", c.g_re}, {"im", c.g_im}};
  }
  if (model && command_name != "resolvent-bound") j["observable"] = {{"k", c.k}, {"p", c.p}};
  json e;
  if (command_name == "lve" || command_name == "scan") e["n_max"] = c.n_max;
  if (command_name == "series") e.update({{"orders", c.orders}, {"pade_L", c.pade_L}, {"pade_M", c.pade_M}});
  if (command_name == "oracle") e.update({{"tolerance", c.tolerance}, {"samples", c.samples}, {"seed", c.seed}});
  if (command_name == "scan")
    e.update({{"modulus_grid", c.modulus_grid}, {"angle_grid", c.angle_grid}, {"oracle", c.scan_oracle}});
  if (command_name == "bkar-check") e["n"] = c.bkar_n;
  if (command_name == "resolvent-bound") e.update({{"N", c.resolvent_N}, {"samples", c.samples}, {"seed", c.seed}});
  if (command_name == "grassmann-check") e.update({{"instances", c.instances}, {"seed", c.seed}});
  j["engine"] = e;
  j["threads"] = threads;
  return j;
}

SliceConfig slices(const RunConfig& c) {
  try {
    return SliceConfig::geometric(c.M, c.j_min, c.j_max);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

CouplingPoint coupling(const RunConfig& c) {
  if (!(c.rho > 0.0)) throw ValidationError("rho must be positive");
  if (c.modulus >= 0.0) {
    if (std::abs(c.angle) >= std::numbers::pi / 2) throw ValidationError("angle must satisfy |gamma| < pi/2");
    return CouplingPoint::from_polar(c.modulus, c.angle, c.rho);
  }
  try {
    return CouplingPoint::from_g({c.g_re, c.g_im}, c.rho);
  } catch (const BranchCut& e) {
    throw ValidationError(e.what());
  }
}

ExternalMomenta momenta(RunConfig& c, const SliceConfig& sc) {
  if (c.k < 0 || c.k > kMaxCumulantOrder) throw ValidationError("k must be in [0, 4]");
  if (c.p.empty()) c.p.assign(c.k, 1);
  if (static_cast<int>(c.p.size()) != c.k) throw ValidationError("--p must list exactly k momenta");
  ExternalMomenta pm{c.p};
  try {
    validate(pm, sc);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  return pm;
}

/// start:step:stop, inclusive of stop up to rounding.
std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("grid '" + s + "': not a number: '" + item + "'");
    }
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0])
    throw ValidationError("grid '" + s + "' must be start:step:stop with step > 0 and stop >= start");
  std::vector<double> out;
  const long count = std::lround(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
  if (count > 100000) throw ValidationError("grid '" + s + "' has too many points");
  for (long i = 0; i <= count; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[1]);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

std::string num(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

class Logger {
 public:
  explicit Logger(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw ValidationError("cannot open log file " + path);
    }
  }
  void line(const std::string& s) { (file_.is_open() ? static_cast<std::ostream&>(file_) : std::cerr) << s << '\n'; }

 private:
  std::ofstream file_;
};

void write_output(const RunConfig& c, const std::string& text) {
  if (c.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(c.out, std::ios::binary);
  if (!f) throw ValidationError("cannot open output file " + c.out);
  f << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------

json run_oracle(RunConfig& c, Logger& log) {
  const auto sc = slices(c);
  const auto cp = coupling(c);
  const auto pm = momenta(c, sc);
  const auto v = cumulant_oracle(cp, sc, pm, {c.tolerance, 18});
  json r = {{"value", complex_json(v.value)}, {"error", v.error}};
  if (cp.g.imag() == 0.0 && cp.g.real() >= 0.0 && c.samples > 0) {
    const auto mc = mc_cross_check(cp.g.real(), sc, pm, c.samples, c.seed);
    r["monte_carlo"] = {{"estimate", mc.estimate.real()}, {"standard_error", mc.standard_error},
                        {"samples", mc.samples}, {"seed", c.seed}};
    log.line("monte carlo: " + std::to_string(mc.samples) + " samples, seed " + std::to_string(c.seed));
  }
  return r;
}

json run_lve(RunConfig& c, Logger& log, int threads) {
  const auto sc = slices(c);
  const auto cp = coupling(c);
  const auto pm = momenta(c, sc);
  if (c.n_max < std::max(1, c.k) || c.n_max > kMaxTreeOrder) throw ValidationError("n-max must be in [max(1,k), 5]");
  LveOptions opt;
  opt.threads = threads;
  const LveStructure st(sc, pm, c.n_max);
  log.line("tree expansion: " + std::to_string(st.labeled_terms()) + " labeled terms, " +
           std::to_string(st.classes().size()) + " classes, " + std::to_string(st.live_blocks().size()) + " blocks");
  const auto r = cumulant_lve(st, cp, opt);
  json partial = json::array(), increments = json::array();
  for (std::size_t i = 0; i < r.partial_sums.size(); ++i) {
    partial.push_back({{"n", r.n_min + static_cast<int>(i)}, {"value", complex_json(r.partial_sums[i])},
                       {"quadrature_error", r.order_errors[i]}});
    increments.push_back(std::abs(r.increments[i]));
  }
  return {{"value", complex_json(r.value)},
          {"error", r.error},
          {"quadrature_error", r.quadrature_error},
          {"truncation_error", r.truncation_error},
          {"converged", r.converged},
          {"resolved", r.resolved},
          {"last_ratio", std::isfinite(r.last_ratio) ? json(r.last_ratio) : json(nullptr)},
          {"in_cardioid", cp.in_cardioid()},
          {"partial_sums", partial},
          {"increment_moduli", increments}};
}

json run_series(RunConfig& c, Logger& log) {
  const auto sc = slices(c);
  const auto pm = momenta(c, sc);
  const auto obs = pm.k() == 0 ? Observable::free_energy() : Observable::cumulant(pm.momenta);
  if (c.orders < 0 || c.orders > kMaxWickOrder) throw ValidationError("orders must be in [0, 10]");
  const auto w = wick_coefficients(sc, obs, c.orders);
  json coeffs = json::array();
  for (const auto& q : w.c) coeffs.push_back({{"exact", q.str()}, {"value", static_cast<double>(q)}});
  json r = {{"observable", obs.tag()}, {"coefficients", coeffs}};
  const cplx g{c.modulus >= 0.0 ? std::polar(c.modulus, 2.0 * c.angle) : cplx{c.g_re, c.g_im}};
  r["truncated_sum"] = complex_json(evaluate_series(w, g, c.orders));
  const int L = c.pade_L >= 0 ? c.pade_L : c.orders / 2;
  const int Mden = c.pade_M >= 0 ? c.pade_M : c.orders - L;
  if (L + Mden > c.orders) throw ValidationError("pade L + M must not exceed orders");
  if (Mden > 0) {
    const auto pade = pade_resum(borel_transform(w), L, Mden);
    json poles = json::array();
    for (const auto& z : pade.poles()) poles.push_back(complex_json(z));
    r["pade"] = {{"L", L}, {"M", Mden}, {"poles", poles}};
    r["borel_sum"] = complex_json(pade.borel_sum(g));
    log.line("borel-pade [" + std::to_string(L) + "/" + std::to_string(Mden) + "]");
  }
  return r;
}

std::string run_scan(RunConfig& c, Logger& log, int threads, json& sidecar) {
  const auto sc = slices(c);
  const auto pm = momenta(c, sc);
  if (c.n_max < std::max(1, c.k) || c.n_max > kMaxTreeOrder) throw ValidationError("n-max must be in [max(1,k), 5]");
  if (!(c.rho > 0.0)) throw ValidationError("rho must be positive");
  const auto moduli = parse_grid(c.modulus_grid);
  const auto angles = parse_grid(c.angle_grid);
  for (double m : moduli)
    if (m < 0.0) throw ValidationError("moduli must be non-negative");
  LveOptions opt;
  opt.threads = threads;
  const LveStructure st(sc, pm, c.n_max);
  log.line("scan: " + std::to_string(moduli.size() * angles.size()) + " cells");
  const auto rep = cardioid_scan(st, moduli, angles, c.rho, opt, c.scan_oracle);
  std::ostringstream os;
  os << "modulus,gamma,g_re,g_im,in_domain,in_cardioid,evaluated,converged,resolved,last_ratio,value_re,value_im,error,"
        "oracle_re,oracle_im,oracle_gap,note\r\n";
  int converged = 0, failures = 0;
  for (const auto& cell : rep.cells) {
    converged += cell.converged;
    failures += cell.in_domain && !cell.evaluated;
    os << num(cell.modulus) << ',' << num(cell.gamma) << ',' << num(cell.g.real()) << ',' << num(cell.g.imag()) << ','
       << cell.in_domain << ',' << cell.in_cardioid << ',' << cell.evaluated << ',' << cell.converged << ','
       << cell.resolved << ',' << (std::isfinite(cell.last_ratio) ? num(cell.last_ratio) : "") << ','
       << (cell.evaluated ? num(cell.value.real()) : "") << ',' << (cell.evaluated ? num(cell.value.imag()) : "")
       << ',' << (cell.evaluated ? num(cell.error) : "") << ',' << (cell.has_oracle ? num(cell.oracle.real()) : "")
       << ',' << (cell.has_oracle ? num(cell.oracle.imag()) : "") << ','
       << (cell.has_oracle ? num(cell.oracle_gap) : "") << ',' << csv_field(cell.note) << "\r\n";
  }
  sidecar["cells"] = rep.cells.size();
  sidecar["converged"] = converged;
  sidecar["failed_cells"] = failures;
  sidecar["empirical_rho"] = rep.empirical_rho;
  return os.str();
}

json smooth_suite_residual(int n) {
  using MD = MultiDual<double>;
  const int pairs = n * (n - 1) / 2;
  // exp of a weighted pair sum, and a polynomial times an exponential
  PairFunction a = [pairs](const std::vector<MD>& x) {
    MD s = x.empty() ? MD(0, 0.0) : x[0] * 0.0;
    for (int i = 0; i < pairs; ++i) s = s + x[i] * (0.2 + 0.1 * i);
    return exp(s);
  };
  PairFunction b = [pairs](const std::vector<MD>& x) {
    MD s = x.empty() ? MD(0, 1.0) : x[0] * 0.0 + 1.0;
    for (int i = 0; i < pairs; ++i) s = s * (x[i] * (i % 2 ? -0.5 : 0.7) + 1.0);
    return s;
  };
  const double ra = bkar_exactness_check(a, n), rb = bkar_exactness_check(b, n);
  return {{"residuals", {ra, rb}}, {"max_residual", std::max(ra, rb)}, {"tolerance", 1e-8}};
}

json run_bkar(RunConfig& c, Logger&) {
  if (c.bkar_n < 1 || c.bkar_n > 4) throw ValidationError("n must be in [1, 4]");
  json r = smooth_suite_residual(c.bkar_n);
  r["forests"] = enumerate_forests(c.bkar_n).size();
  r["spanning_trees"] = spanning_trees(c.bkar_n).size();
  r["cayley"] = cayley_count(c.bkar_n);
  const bool ok = r["max_residual"].get<double>() < 1e-8;
  r["pass"] = ok;
  return r;
}

json run_resolvent(RunConfig& c, Logger&) {
  const auto cp = coupling(c);
  if (!cp.in_cardioid()) throw ValidationError("g must lie inside the cardioid");
  if (c.resolvent_N < 1) throw ValidationError("N must be positive");
  const auto rep = check_resolvent_bound(cp, c.resolvent_N, c.samples, c.seed);
  return {{"max_norm", rep.max_norm},          {"bound", rep.bound},
          {"sharp_bound", rep.sharp_bound},    {"within_sharp_bound", rep.within_sharp_bound},
          {"witness_sigma", rep.witness_sigma}, {"witness_p", rep.witness_p},
          {"samples", rep.samples}};
}

json run_grassmann(RunConfig& c, Logger&) {
  if (c.instances < 1) throw ValidationError("instances must be positive");
  std::mt19937_64 rng(c.seed);
  int mismatches = 0;
  for (int t = 0; t < c.instances; ++t) {
    const int fields = 1 + static_cast<int>(rng() % 4);
    Matrix<double> C(fields, fields);
    for (int i = 0; i < fields; ++i)
      for (int j = 0; j < fields; ++j) C(i, j) = static_cast<double>(static_cast<int>(rng() % 9) - 4);
    const int pairs = 1 + static_cast<int>(rng() % 4);
    GrassmannMonomial m;
    for (int r = 0; r < pairs; ++r) {
      m.push_back(chi_bar(static_cast<int>(rng() % fields)));
      m.push_back(chi(static_cast<int>(rng() % fields)));
    }
    std::shuffle(m.begin(), m.end(), rng);
    mismatches += grassmann_gaussian(C, m) != brute_force_oracle(C, m);
  }
  return {{"instances", c.instances}, {"mismatches", mismatches}, {"pass", mismatches == 0}};
}

void add_model_options(CLI::App* s, RunConfig& c) {
  s->add_option("--M", c.M, "slice ratio M")->capture_default_str();
  s->add_option("--jmin", c.j_min, "lowest slice")->capture_default_str();
  s->add_option("--jmax", c.j_max, "highest slice; N = M^jmax")->capture_default_str();
  s->add_option("--g", c.g_re, "real part of g")->capture_default_str();
  s->add_option("--g-im", c.g_im, "imaginary part of g")->capture_default_str();
  s->add_option("--modulus", c.modulus, "|g| (with --angle, replaces --g)");
  s->add_option("--angle", c.angle, "gamma = Arg(g)/2")->capture_default_str();
  s->add_option("--rho", c.rho, "cardioid radius")->capture_default_str();
}

void add_observable_options(CLI::App* s, RunConfig& c) {
  s->add_option("--k", c.k, "cumulant order (0 = log Z)")->capture_default_str();
  s->add_option("--p", c.p, "external momenta (default: k copies of 1)");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig c;
  CLI::App app{"Cumulants of the quartic U(N) vector model"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.add_option("--threads", c.threads, "worker threads (default: MLVE_THREADS, then hardware)");
  app.add_option("--out", c.out, "results file (default: stdout)");
  app.add_option("--log", c.log, "log file (default: stderr)");
  app.require_subcommand(1);
  app.fallthrough();

  auto* oracle = app.add_subcommand("oracle", "exact sigma quadrature (plus Monte Carlo for real g >= 0)");
  add_model_options(oracle, c);
  add_observable_options(oracle, c);
  oracle->add_option("--tol", c.tolerance, "relative tolerance")->capture_default_str();
  oracle->add_option("--samples", c.samples, "Monte Carlo samples (0 disables)")->capture_default_str();
  oracle->add_option("--seed", c.seed)->capture_default_str();

  auto* lve = app.add_subcommand("lve", "multiscale tree expansion");
  add_model_options(lve, c);
  add_observable_options(lve, c);
  lve->add_option("--n-max", c.n_max, "largest number of vertices")->capture_default_str();

  auto* series = app.add_subcommand("series", "exact Wick coefficients and Borel-Pade sum");
  add_model_options(series, c);
  add_observable_options(series, c);
  series->add_option("--orders", c.orders)->capture_default_str();
  series->add_option("--pade-L", c.pade_L, "numerator degree");
  series->add_option("--pade-M", c.pade_M, "denominator degree");

  auto* scan = app.add_subcommand("scan", "convergence scan over (|g|, gamma)");
  add_model_options(scan, c);
  add_observable_options(scan, c);
  scan->add_option("--n-max", c.n_max)->capture_default_str();
  scan->add_option("--rho-grid", c.modulus_grid, "|g| grid start:step:stop")->capture_default_str();
  scan->add_option("--angle-grid", c.angle_grid, "gamma grid start:step:stop")->capture_default_str();
  scan->add_flag("!--no-oracle", c.scan_oracle, "skip the oracle column");

  auto* bkar = app.add_subcommand("bkar-check", "forest formula exactness");
  bkar->add_option("--n", c.bkar_n)->capture_default_str();

  auto* resolvent = app.add_subcommand("resolvent-bound", "sample |(1 - i lambda sigma/p)^-1|");
  add_model_options(resolvent, c);
  resolvent->add_option("--N", c.resolvent_N, "modes sampled from 1..N")->capture_default_str();
  resolvent->add_option("--samples", c.samples)->capture_default_str();
  resolvent->add_option("--seed", c.seed)->capture_default_str();

  auto* grass = app.add_subcommand("grassmann-check", "determinant vs exterior algebra");
  grass->add_option("--instances", c.instances)->capture_default_str();
  grass->add_option("--seed", c.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  command_name = app.get_subcommands().front()->get_name();

  try {
    if (c.threads < 0) throw ValidationError("threads must be non-negative");
    const int threads = static_cast<int>(resolve_threads(c.threads));
    Logger log(c.log);
    log.line(std::string("mlve ") + kVersion + " " + command_name);
    json result;
    json sidecar;
    std::string csv;
    if (command_name == "oracle") result = run_oracle(c, log);
    else if (command_name == "lve") result = run_lve(c, log, threads);
    else if (command_name == "series") result = run_series(c, log);
    else if (command_name == "scan") csv = run_scan(c, log, threads, sidecar);
    else if (command_name == "bkar-check") result = run_bkar(c, log);
    else if (command_name == "resolvent-bound") result = run_resolvent(c, log);
    else result = run_grassmann(c, log);

    const json cfg = config_json(c, threads);
    log.line("config: " + cfg.dump());
    if (command_name == "scan") {
      write_output(c, csv);
      json meta = {{"version", kVersion}, {"config", cfg}, {"summary", sidecar}};
      if (!c.out.empty()) {
        std::ofstream f(c.out + ".json", std::ios::binary);
        f << dump(meta);
      }
      log.line("summary: " + sidecar.dump());
    } else {
      json doc = {{"version", kVersion}, {"config", cfg}, {"result", result}};
      write_output(c, dump(doc));
      if (result.contains("pass") && !result["pass"].get<bool>()) {
        log.line("check failed");
        return 3;
      }
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "mlve: invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "mlve: invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "mlve: invalid input: " << e.what() << '\n';
    return 2;
  } catch (const mlve::Error& e) {
    std::cerr << "mlve: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "mlve: numerical failure: " << e.what() << '\n';
    return 3;
  }
}
