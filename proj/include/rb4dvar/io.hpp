#pragma once

// Configuration parsing and report artifacts. Every file is written to a
// temporary sibling and renamed into place, so readers never observe a
// partial file.

#include "rb4dvar/experiments.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rb4dvar::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kConfigSchema = "rb4dvar-config/1";
inline constexpr const char* kRomFormat = "rb4dvar-rom/1";
inline constexpr int kCsvSchemaVersion = 1;

/// Config violation located by a JSON pointer, e.g. "/greedy/n_max".
class SchemaError : public ConfigurationError {
 public:
  SchemaError(const std::string& path, const std::string& what)
      : ConfigurationError((path.empty() ? std::string("/") : path) + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// ---------------------------------------------------------------------------
// Formatting, hashing, files

/// Round-trip decimal: 17 significant digits.
inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Stream into a temporary file; commit() renames it onto the target.
/// Destroying an uncommitted file removes the temporary.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path target)
      : target_(std::move(target)), temp_(target_.string() + ".partial") {
    if (target_.has_parent_path()) std::filesystem::create_directories(target_.parent_path());
    out_.open(temp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open " + temp_.string() + " for writing");
  }
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;
  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(temp_, ec);
    }
  }

  std::ofstream& stream() { return out_; }

  void commit() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed for " + temp_.string());
    out_.close();
    std::filesystem::rename(temp_, target_);
    committed_ = true;
  }

 private:
  std::filesystem::path target_;
  std::filesystem::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  AtomicFile f(path);
  f.stream() << content;
  f.commit();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// Config schema

namespace detail {

// Typed, path-tracking view of a JSON object. Unknown keys are rejected so
// that typos do not silently fall back to defaults.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j_->is_object()) throw SchemaError(path_, "expected an object");
  }
  ~Node() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_->contains(key);
  }

  const Json& at(const std::string& key) {
    if (!has(key)) throw SchemaError(child(key), "missing required key");
    return (*j_)[key];
  }

  Node object(const std::string& key) { return Node(at(key), child(key)); }

  double number(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number()) throw SchemaError(child(key), "expected a number");
    return v.get<double>();
  }

  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  long long integer(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number_integer()) throw SchemaError(child(key), "expected an integer");
    return v.get<long long>();
  }

  int integer(const std::string& key, int fallback) { return has(key) ? static_cast<int>(integer(key)) : fallback; }

  std::uint64_t unsigned_integer(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw SchemaError(child(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string string(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_string()) throw SchemaError(child(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::size_t expected_size = 0) {
    const Json& v = at(key);
    if (!v.is_array()) throw SchemaError(child(key), "expected an array");
    if (expected_size && v.size() != expected_size) {
      throw SchemaError(child(key), "expected " + std::to_string(expected_size) + " entries");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw SchemaError(child(key) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_array()) throw SchemaError(child(key), "expected an array");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer()) {
        throw SchemaError(child(key) + "/" + std::to_string(i), "expected an integer");
      }
      out.push_back(v[i].get<int>());
    }
    return out;
  }

  std::string child(const std::string& key) const { return path_ + "/" + key; }

  void reject_unknown() const {
    for (const auto& [key, value] : j_->items()) {
      if (!seen_.count(key)) throw SchemaError(child(key), "unknown key");
    }
  }

 private:
  const Json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Variant variant_at(const Json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError(path, "expected a variant name");
  const auto parsed = parse_variant(v.get<std::string>());
  if (!parsed) throw SchemaError(path, "unknown variant '" + v.get<std::string>() + "'");
  return *parsed;
}

inline SolveOptions solve_options(Node& n, const std::string& tol_key, SolveOptions base) {
  base.cg_rel_tol = n.number(tol_key, base.cg_rel_tol);
  base.cg_max_iter = n.integer("cg_max_iter", base.cg_max_iter);
  return base;
}

}  // namespace detail

/// Parses a config document. Schema:
///   schema: "rb4dvar-config/1"
///   mesh: {h}; time: {tau, steps}; parameter: {mu_ref, domain: [lo, hi]}
///   observation: {weight}
///   truth: {mu_true, center: [x, y], sigma, noise_std, seed, amplitude?}
///   prior: "optimal" | "zero"
///   greedy: {training_size, mu_start, n_max: int | {variant: int}, tol, dependence_tol?}
///   test: {size, seed}
///   variants?: [names]; solver?: {fom_cg_rel_tol, rom_cg_rel_tol, cg_max_iter}
///   sweep?: {N: [..]}; estimate?: {N: [..], tol}; threads?
inline ExperimentConfig parse_config(const Json& j) {
  using detail::Node;
  ExperimentConfig c;
  Node root(j, "");
  if (root.string("schema") != kConfigSchema) {
    throw SchemaError("/schema", std::string("expected \"") + kConfigSchema + "\"");
  }
  {
    Node n = root.object("mesh");
    c.benchmark.h = n.number("h");
    n.reject_unknown();
  }
  {
    Node n = root.object("time");
    c.benchmark.tau = n.number("tau");
    c.benchmark.num_steps = static_cast<int>(n.integer("steps"));
    n.reject_unknown();
  }
  {
    Node n = root.object("parameter");
    c.benchmark.mu_ref = n.number("mu_ref");
    const auto d = n.numbers("domain", 2);
    c.benchmark.domain = {d[0], d[1]};
    n.reject_unknown();
  }
  {
    Node n = root.object("observation");
    c.benchmark.observation_weight = n.number("weight");
    n.reject_unknown();
  }
  {
    Node n = root.object("truth");
    c.mu_true = n.number("mu_true");
    const auto p = n.numbers("center", 2);
    c.center = Point(p[0], p[1]);
    c.sigma = n.number("sigma");
    c.amplitude = n.number("amplitude", c.amplitude);
    c.noise_std = n.number("noise_std");
    c.seed = n.unsigned_integer("seed");
    n.reject_unknown();
  }
  {
    const std::string prior = root.string("prior");
    if (prior != "optimal" && prior != "zero") throw SchemaError("/prior", "expected \"optimal\" or \"zero\"");
    c.optimal_prior = prior == "optimal";
  }
  if (root.has("variants")) {
    const Json& v = j["variants"];
    if (!v.is_array() || v.empty()) throw SchemaError("/variants", "expected a non-empty array");
    c.variants.clear();
    for (std::size_t i = 0; i < v.size(); ++i) c.variants.push_back(detail::variant_at(v[i], "/variants/" + std::to_string(i)));
  }
  {
    Node n = root.object("greedy");
    c.training_size = static_cast<int>(n.integer("training_size"));
    c.mu_start = n.number("mu_start");
    const Json& nm = n.at("n_max");
    if (nm.is_number_integer()) {
      for (auto& [v, value] : c.n_max) value = nm.get<int>();
    } else if (nm.is_object()) {
      for (const auto& [key, value] : nm.items()) {
        const auto v = parse_variant(key);
        if (!v) throw SchemaError("/greedy/n_max/" + key, "unknown variant");
        if (!value.is_number_integer()) throw SchemaError("/greedy/n_max/" + key, "expected an integer");
        c.n_max[*v] = value.get<int>();
      }
    } else {
      throw SchemaError("/greedy/n_max", "expected an integer or an object keyed by variant");
    }
    c.greedy_tol = n.number("tol");
    c.dependence_tol = n.number("dependence_tol", c.dependence_tol);
    n.reject_unknown();
  }
  {
    Node n = root.object("test");
    c.test_size = static_cast<int>(n.integer("size"));
    c.test_seed = n.unsigned_integer("seed");
    n.reject_unknown();
  }
  if (root.has("solver")) {
    Node n = root.object("solver");
    c.fom_options.cg_rel_tol = n.number("fom_cg_rel_tol", c.fom_options.cg_rel_tol);
    c.rom_options.cg_rel_tol = n.number("rom_cg_rel_tol", c.rom_options.cg_rel_tol);
    const int max_iter = n.integer("cg_max_iter", c.fom_options.cg_max_iter);
    c.fom_options.cg_max_iter = c.rom_options.cg_max_iter = max_iter;
    n.reject_unknown();
  }
  if (root.has("sweep")) {
    Node n = root.object("sweep");
    if (n.has("N")) c.sweep_n = n.integers("N");
    n.reject_unknown();
  }
  if (root.has("estimate")) {
    Node n = root.object("estimate");
    if (n.has("N")) c.estimate_n = n.integers("N");
    c.estimate_tol = n.number("tol", c.estimate_tol);
    n.reject_unknown();
  }
  c.threads = root.integer("threads", c.threads);
  root.reject_unknown();
  try {
    c.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const ConfigurationError& e) {
    throw SchemaError("", e.what());
  } catch (const ContractError& e) {
    throw SchemaError("/solver", e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw SchemaError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Canonical form of a parsed config (all defaults made explicit); its hash
/// identifies a run.
inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["schema"] = kConfigSchema;
  j["mesh"] = {{"h", c.benchmark.h}};
  j["time"] = {{"tau", c.benchmark.tau}, {"steps", c.benchmark.num_steps}};
  j["parameter"] = {{"mu_ref", c.benchmark.mu_ref}, {"domain", {c.benchmark.domain.lo, c.benchmark.domain.hi}}};
  j["observation"] = {{"weight", c.benchmark.observation_weight}};
  j["truth"] = {{"mu_true", c.mu_true},     {"center", {c.center.x(), c.center.y()}},
                {"sigma", c.sigma},         {"amplitude", c.amplitude},
                {"noise_std", c.noise_std}, {"seed", c.seed}};
  j["prior"] = c.optimal_prior ? "optimal" : "zero";
  j["variants"] = Json::array();
  for (Variant v : c.variants) j["variants"].push_back(std::string(to_string(v)));
  Json nmax = Json::object();
  for (const auto& [v, n] : c.n_max) nmax[std::string(to_string(v))] = n;
  j["greedy"] = {{"training_size", c.training_size}, {"mu_start", c.mu_start}, {"n_max", nmax},
                 {"tol", c.greedy_tol},              {"dependence_tol", c.dependence_tol}};
  j["test"] = {{"size", c.test_size}, {"seed", c.test_seed}};
  j["solver"] = {{"fom_cg_rel_tol", c.fom_options.cg_rel_tol},
                 {"rom_cg_rel_tol", c.rom_options.cg_rel_tol},
                 {"cg_max_iter", c.fom_options.cg_max_iter}};
  j["sweep"] = {{"N", c.sweep_n}};
  j["estimate"] = {{"N", c.estimate_n}, {"tol", c.estimate_tol}};
  return j;
}

/// Thread count is excluded: results do not depend on it.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(config_to_json(c).dump())); }

// ---------------------------------------------------------------------------
// Matrices and the ROM container

inline Json matrix_to_json(const Mat& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());  // column-major
  return j;
}

inline Mat matrix_from_json(const Json& j, const std::string& path) {
  try {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw SchemaError(path, "matrix size mismatch");
    }
    return Eigen::Map<const Mat>(data.data(), rows, cols);
  } catch (const Json::exception& e) {
    throw SchemaError(path, e.what());
  }
}

inline Json sparse_to_json(const SpMat& a) {
  Json j;
  j["rows"] = a.rows();
  j["cols"] = a.cols();
  std::vector<Eigen::Index> ii, jj;
  std::vector<double> vv;
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SpMat::InnerIterator it(a, k); it; ++it) {
      ii.push_back(it.row());
      jj.push_back(it.col());
      vv.push_back(it.value());
    }
  }
  j["i"] = ii;
  j["j"] = jj;
  j["v"] = vv;
  return j;
}

struct RomContainer {
  ReducedBasis basis;
  GreedyTrace trace;
  Constants constants;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Basis, per-iteration dimensions, constants, greedy trace (without wall
/// times, so the file is reproducible), projected operators and the offline
/// residual Gram blocks of the final basis. Loading uses the basis and
/// rebuilds the rest, since sweeps need every truncation anyway.
inline Json rom_to_json(const RomContainer& rom, const ReducedModel* built = nullptr) {
  Json j;
  j["format"] = kRomFormat;
  j["variant"] = std::string(to_string(rom.basis.variant));
  j["config_hash"] = rom.config_hash;
  j["seed"] = rom.seed;
  j["constants"] = {{"gamma_b", rom.constants.gamma_b},
                    {"gamma_c", rom.constants.gamma_c},
                    {"mu_ref", rom.constants.mu_ref},
                    {"domain", {rom.constants.domain.lo, rom.constants.domain.hi}}};
  j["dims"] = Json::array();
  for (const auto& d : rom.basis.dims) j["dims"].push_back({d.state, d.initial, d.forcing});
  j["trace"] = Json::array();
  for (const auto& s : rom.trace.steps) {
    j["trace"].push_back({{"N", s.N},
                          {"mu", s.mu},
                          {"dims", {s.dims.state, s.dims.initial, s.dims.forcing}},
                          {"max_rel_bound", s.max_rel_bound},
                          {"next_mu", s.next_mu},
                          {"initial_snapshot_added", s.initial_snapshot_added}});
  }
  j["basis"] = {{"state", matrix_to_json(rom.basis.state)},
                {"initial", matrix_to_json(rom.basis.initial)},
                {"forcing", matrix_to_json(rom.basis.forcing)}};
  if (built) {
    const auto& m = built->model;
    Json stiffness = Json::array();
    for (const auto& t : m.stiffness.terms) stiffness.push_back(matrix_to_json(t));
    j["reduced_operators"] = {{"mass", matrix_to_json(m.mass)},
                              {"stiffness", stiffness},
                              {"control_to_state", matrix_to_json(m.control_to_state)},
                              {"initial_coupling", matrix_to_json(m.initial_coupling)},
                              {"observation", matrix_to_json(m.observation)}};
    j["offline"] = {{"gram_state", matrix_to_json(built->offline.gram_state)},
                    {"gram_initial", matrix_to_json(built->offline.gram_initial)},
                    {"gram_forcing", matrix_to_json(built->offline.gram_forcing)}};
  }
  return j;
}

inline RomContainer rom_from_json(const Json& j) {
  RomContainer r;
  try {
    if (j.at("format").get<std::string>() != kRomFormat) throw SchemaError("/format", "unsupported ROM format");
    const auto v = parse_variant(j.at("variant").get<std::string>());
    if (!v) throw SchemaError("/variant", "unknown variant");
    r.basis.variant = *v;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const Json& k = j.at("constants");
    r.constants.gamma_b = k.at("gamma_b").get<double>();
    r.constants.gamma_c = k.at("gamma_c").get<double>();
    r.constants.mu_ref = k.at("mu_ref").get<double>();
    r.constants.domain = {k.at("domain").at(0).get<double>(), k.at("domain").at(1).get<double>()};
    for (const auto& d : j.at("dims")) r.basis.dims.push_back({d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()});
    for (const auto& s : j.at("trace")) {
      GreedyStep st;
      st.N = s.at("N").get<int>();
      st.mu = s.at("mu").get<double>();
      st.dims = {s.at("dims").at(0).get<int>(), s.at("dims").at(1).get<int>(), s.at("dims").at(2).get<int>()};
      st.max_rel_bound = s.at("max_rel_bound").get<double>();
      st.next_mu = s.at("next_mu").get<double>();
      st.initial_snapshot_added = s.at("initial_snapshot_added").get<bool>();
      r.trace.steps.push_back(st);
    }
    r.basis.state = matrix_from_json(j.at("basis").at("state"), "/basis/state");
    r.basis.initial = matrix_from_json(j.at("basis").at("initial"), "/basis/initial");
    r.basis.forcing = matrix_from_json(j.at("basis").at("forcing"), "/basis/forcing");
  } catch (const Json::exception& e) {
    throw SchemaError("", std::string("malformed ROM container: ") + e.what());
  }
  if (r.basis.dims.empty() || !(r.basis.dims.back() == r.basis.current())) {
    throw SchemaError("/dims", "dimension history does not match the stored basis");
  }
  return r;
}

// ---------------------------------------------------------------------------
// CSV and JSON reports

struct Provenance {
  std::string config_hash;
  std::string rom_hash;
  std::uint64_t seed = 0;
};

inline std::string csv_schema_line(const std::string& kind) {
  return "# rb4dvar-" + kind + " schema v" + std::to_string(kCsvSchemaVersion);
}

inline const char* kSweepHeader =
    "variant,mu,N,error,bound,effectivity,cg_iters,t_solve_ms,t_bound_ms,"
    "rel_error,rel_bound,dim_state,dim_initial,dim_forcing,status,config_hash,rom_hash,seed";

inline std::string sweep_csv_row(const SweepRow& r, const Provenance& p) {
  std::ostringstream s;
  s << to_string(r.variant) << ',' << fmt(r.mu) << ',' << r.N << ',' << fmt(r.error) << ',' << fmt(r.bound)
    << ',' << fmt(r.effectivity) << ',' << r.cg_iterations << ',' << fmt(r.t_solve_ms) << ','
    << fmt(r.t_bound_ms) << ',' << fmt(r.relative_error()) << ',' << fmt(r.relative_bound()) << ','
    << r.dims.state << ',' << r.dims.initial << ',' << r.dims.forcing << ','
    << (r.failed ? "failed" : "ok") << ',' << p.config_hash << ',' << p.rom_hash << ',' << p.seed;
  return s.str();
}

inline const char* kGreedyHeader =
    "N,mu,dim_state,dim_initial,dim_forcing,max_rel_bound,next_mu,initial_snapshot_added,wall_s,"
    "config_hash,seed";

inline std::string greedy_csv(const GreedyTrace& t, const Provenance& p) {
  std::ostringstream s;
  s << csv_schema_line("greedy") << '\n' << kGreedyHeader << '\n';
  for (const auto& st : t.steps) {
    s << st.N << ',' << fmt(st.mu) << ',' << st.dims.state << ',' << st.dims.initial << ',' << st.dims.forcing
      << ',' << fmt(st.max_rel_bound) << ',' << fmt(st.next_mu) << ',' << (st.initial_snapshot_added ? 1 : 0)
      << ',' << fmt(st.wall_time) << ',' << p.config_hash << ',' << p.seed << '\n';
  }
  return s.str();
}

inline const char* kOuterHeader = "variant,N,mu_full,mu_reduced,e_mu,e_J_max,config_hash,rom_hash,seed";

inline std::string outer_csv_row(const OuterEstimationReport& rep, const OuterEstimationRow& r,
                                 const Provenance& p) {
  std::ostringstream s;
  s << to_string(rep.variant) << ',' << r.N << ',' << fmt(rep.mu_full) << ',' << fmt(r.mu_reduced) << ','
    << fmt(r.e_mu) << ',' << fmt(r.e_J_max) << ',' << p.config_hash << ',' << p.rom_hash << ',' << p.seed;
  return s.str();
}

/// Observations: k, t, then clean outputs, noise and noisy outputs.
inline std::string observations_csv(const TruthData& t, double tau, const Provenance& p) {
  std::ostringstream s;
  s << csv_schema_line("observations") << '\n' << "k,t";
  const auto l = t.clean.empty() ? 0 : t.clean.front().size();
  for (const char* prefix : {"clean_", "noise_", "z_"}) {
    for (Eigen::Index i = 0; i < l; ++i) s << ',' << prefix << (i + 1);
  }
  s << ",config_hash,seed\n";
  for (std::size_t k = 0; k < t.clean.size(); ++k) {
    s << (k + 1) << ',' << fmt(tau * static_cast<double>(k + 1));
    for (const auto* v : {&t.clean[k], &t.noise[k], &t.observations[k]}) {
      for (Eigen::Index i = 0; i < l; ++i) s << ',' << fmt((*v)[i]);
    }
    s << ',' << p.config_hash << ',' << p.seed << '\n';
  }
  return s.str();
}

/// CG log of one solve: iteration, preconditioned residual, model value.
inline std::string cg_log_csv(const AssimilationResult& r, const Provenance& p) {
  std::ostringstream s;
  s << csv_schema_line("cg-log") << '\n' << "iter,residual,model_value,config_hash,seed\n";
  for (std::size_t i = 0; i < r.iterations.size(); ++i) {
    s << i << ',' << fmt(r.iterations[i].residual) << ',' << fmt(r.iterations[i].model_value) << ','
      << p.config_hash << ',' << p.seed << '\n';
  }
  return s.str();
}

inline Json certificate_to_json(const CertificateReport& c) {
  Json j = {{"variant", std::string(to_string(c.variant))},
            {"mu", c.mu},
            {"N", c.N},
            {"R_y", c.R_y},
            {"R_p", c.R_p},
            {"R_u", c.R_u}};
  if (c.variant == Variant::combined) j["R_u0"] = c.R_u0;
  j["alpha_lb"] = c.alpha_lb;
  j["c1"] = c.c1;
  j["c2"] = c.c2;
  j["delta"] = c.delta;
  j["error"] = c.error ? Json(*c.error) : Json(nullptr);
  j["effectivity"] = c.effectivity ? Json(*c.effectivity) : Json(nullptr);
  return j;
}

}  // namespace rb4dvar::io
