#include "rb4dvar/experiments.hpp"
#include "rb4dvar/io.hpp"
#include "rb4dvar/pipeline.hpp"

#include "toy_models.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rb4dvar;
namespace fs = std::filesystem;

namespace {

io::Json tiny_config_json() {
  return io::Json::parse(R"({
    "schema": "rb4dvar-config/1",
    "mesh": {"h": 0.25},
    "time": {"tau": 0.2, "steps": 10},
    "parameter": {"mu_ref": 30, "domain": [10, 50]},
    "observation": {"weight": 10},
    "truth": {"mu_true": 30, "center": [-0.1, 0.8], "sigma": 0.3, "noise_std": 0.01, "seed": 7},
    "prior": "optimal",
    "variants": ["strong", "weak"],
    "greedy": {"training_size": 4, "mu_start": 10, "n_max": 3, "tol": 1e-12},
    "test": {"size": 2, "seed": 11},
    "sweep": {"N": [1, 3]},
    "estimate": {"N": [1, 3], "tol": 1e-4}
  })");
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rb4dvar_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& p, const io::Json& j) { std::ofstream(p) << j.dump(2); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RB4DVAR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Data lines of a CSV with the timing columns blanked.
std::vector<std::string> numeric_fields(const fs::path& csv, const std::vector<std::string>& timing) {
  std::ifstream in(csv);
  std::string line;
  std::vector<std::string> header, out;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream s(line);
    for (std::string c; std::getline(s, c, ',');) cells.push_back(c);
    if (header.empty()) {
      header = cells;
      continue;
    }
    for (std::size_t i = 0; i < cells.size() && i < header.size(); ++i) {
      if (std::find(timing.begin(), timing.end(), header[i]) != timing.end()) cells[i] = "-";
    }
    std::string joined;
    for (const auto& c : cells) joined += c + ",";
    out.push_back(joined);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Brent search

TEST(EstimateParameter, QuadraticMinimum) {
  int evals = 0;
  const double mu = estimate_parameter([&](double m) { ++evals; return (m - 33.0) * (m - 33.0); }, {10, 50}, 1e-6);
  EXPECT_NEAR(mu, 33.0, 1e-6);
  EXPECT_LT(evals, 60);
}

TEST(EstimateParameter, NonSmoothAndBoundaryMinima) {
  EXPECT_NEAR(estimate_parameter([](double m) { return std::abs(m - 17.3); }, {10, 50}, 1e-6), 17.3, 3e-6);
  EXPECT_NEAR(estimate_parameter([](double m) { return (m - 60.0) * (m - 60.0); }, {10, 50}, 1e-6), 50.0, 1e-5);
  EXPECT_NEAR(estimate_parameter([](double m) { return -m; }, {10, 50}, 1e-6), 50.0, 1e-5);
}

TEST(EstimateParameter, IsDeterministic) {
  auto f = [](double m) { return std::cos(m / 7.0) + 0.01 * m; };
  EXPECT_EQ(estimate_parameter(f, {10, 50}), estimate_parameter(f, {10, 50}));
}

TEST(EstimateParameter, NonFiniteCostAbortsWithTheParameter) {
  try {
    estimate_parameter([](double m) { return m > 20.0 ? std::nan("") : m; }, {10, 50});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("mu = "), std::string::npos);
  }
  EXPECT_THROW(estimate_parameter([](double m) { return m; }, {10, 50}, 0.0), ConfigurationError);
}

// ---------------------------------------------------------------------------
// Truth synthesis

TEST(Synthesis, NoiseIsExactlyTheDifferenceAndHasTheRightVariance) {
  const FullOrderModel fom = assemble_operators(toy::small_benchmark(0.25, 200, 0.04));
  const Vec y0 = gaussian_initial_condition(fom, Point(-0.1, 0.8), 0.1);
  const TruthData t = synthesize_observations(fom, 30.0, y0, 0.05, 2024);
  ASSERT_EQ(t.observations.size(), 200u);
  double sum_sq = 0.0, count = 0.0;
  for (std::size_t k = 0; k < t.observations.size(); ++k) {
    EXPECT_EQ(t.observations[k] - t.clean[k], t.noise[k]);
    EXPECT_LE((t.clean[k] - fom.model.observation * t.state[static_cast<int>(k) + 1]).norm(), 0.0);
    sum_sq += t.noise[k].squaredNorm();
    count += static_cast<double>(t.noise[k].size());
  }
  EXPECT_EQ(count, 1000.0);
  EXPECT_NEAR(sum_sq / count, 0.0025, 0.15 * 0.0025);
  EXPECT_EQ(t.seed, 2024u);
  EXPECT_EQ(t.rng_algorithm, kNoiseAlgorithm);
}

TEST(Synthesis, ZeroNoiseAndSeedReproducibility) {
  const FullOrderModel fom = assemble_operators(toy::small_benchmark(0.25, 20, 0.1));
  const Vec y0 = gaussian_initial_condition(fom, Point(-0.1, 0.8), 0.3);
  const TruthData clean = synthesize_observations(fom, 25.0, y0, 0.0, 1);
  for (std::size_t k = 0; k < clean.clean.size(); ++k) EXPECT_EQ(clean.observations[k], clean.clean[k]);
  const TruthData a = synthesize_observations(fom, 25.0, y0, 0.05, 9);
  const TruthData b = synthesize_observations(fom, 25.0, y0, 0.05, 9);
  const TruthData c = synthesize_observations(fom, 25.0, y0, 0.05, 10);
  EXPECT_EQ(a.observations, b.observations);
  EXPECT_NE(a.noise, c.noise);
  EXPECT_THROW(synthesize_observations(fom, 25.0, y0, -1.0, 1), ConfigurationError);
  EXPECT_THROW(synthesize_observations(fom, 60.0, y0, 0.0, 1), ConfigurationError);
}

TEST(Synthesis, ParameterSamples) {
  EXPECT_EQ(equidistant({10, 50}, 5), (std::vector<double>{10, 20, 30, 40, 50}));
  const auto t = random_parameters({10, 50}, 20, 3);
  EXPECT_EQ(t, random_parameters({10, 50}, 20, 3));
  for (double mu : t) {
    EXPECT_GE(mu, 10.0);
    EXPECT_LE(mu, 50.0);
  }
}

// ---------------------------------------------------------------------------
// Sweeps and the outer estimation on a small benchmark

class ExperimentsOnBenchmark : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = io::parse_config(tiny_config_json());
    bench = setup_benchmark(cfg);
  }
  ExperimentConfig cfg;
  Benchmark bench;
};

TEST_F(ExperimentsOnBenchmark, SweepRowsAreCertifiedAndAggregatesRecomputable) {
  const auto g = train(bench.fom, bench.obs, cfg.greedy_config(Variant::strong));
  const auto test = cfg.test_set();
  const auto rep = run_sweep(bench.fom, g.basis, bench.obs, bench.constants, test, {1, 2, 3}, {});
  ASSERT_EQ(rep.rows.size(), 3 * test.size());
  for (const auto& r : rep.rows) {
    ASSERT_FALSE(r.failed) << r.failure;
    EXPECT_GE(r.effectivity, 1.0 - 1e-6);
    EXPECT_LE(r.cg_iterations, r.dims.initial + 2);
    ASSERT_TRUE(r.certificate.error.has_value());
    EXPECT_EQ(*r.certificate.error, r.error);
  }
  for (const auto& a : rep.aggregates()) {
    double max_rel = 0.0;
    for (const auto& r : rep.rows) {
      if (r.N == a.N) max_rel = std::max(max_rel, r.relative_bound());
    }
    EXPECT_EQ(a.max_relative_bound, max_rel);
    EXPECT_EQ(a.rows, static_cast<int>(test.size()));
  }
  EXPECT_THROW(run_sweep(bench.fom, g.basis, bench.obs, bench.constants, test, {4}, {}), ConfigurationError);
}

TEST_F(ExperimentsOnBenchmark, FailingRowsAreMarkedNotFatal) {
  const auto g = train(bench.fom, bench.obs, cfg.greedy_config(Variant::weak));
  SweepOptions so;
  so.rom_options.cg_max_iter = 1;
  so.rom_options.cg_rel_tol = 1e-14;
  const auto rep = run_sweep(bench.fom, g.basis, bench.obs, bench.constants, {20.0, 40.0}, {3}, so);
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& r : rep.rows) {
    EXPECT_TRUE(r.failed);
    EXPECT_FALSE(r.failure.empty());
  }
  EXPECT_TRUE(rep.aggregates().empty());
}

TEST_F(ExperimentsOnBenchmark, OuterTableWithNoiselessData) {
  ExperimentConfig clean = cfg;
  clean.noise_std = 0.0;
  const Benchmark b = setup_benchmark(clean);
  const auto g = train(b.fom, b.obs, clean.greedy_config(Variant::strong));
  OuterOptions oo;
  oo.tol = 1e-6;
  const auto rep = outer_error_table(b.fom, g.basis, b.obs, b.constants, equidistant(b.fom.domain, 4), {1, 3}, oo);
  EXPECT_NEAR(rep.mu_full, 30.0, 1e-3 * 30.0);
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.e_mu, std::abs(rep.mu_full - r.mu_reduced) / rep.mu_full);
    EXPECT_GE(r.e_J_max, 0.0);
  }
}

// ---------------------------------------------------------------------------
// Config and artifacts

TEST(Config, ShippedConfigsParse) {
  const auto desk = io::load_config(fs::path(RB4DVAR_CONFIG_DIR) / "desk.json");
  EXPECT_EQ(desk.benchmark.h, 0.08);
  EXPECT_EQ(desk.benchmark.num_steps, 100);
  EXPECT_EQ(desk.training_size, 10);
  EXPECT_EQ(desk.n_max.at(Variant::strong), 20);
  EXPECT_EQ(desk.test_size, 5);
  EXPECT_TRUE(desk.optimal_prior);
  const auto paper = io::load_config(fs::path(RB4DVAR_CONFIG_DIR) / "paper.json");
  EXPECT_EQ(paper.benchmark.h, 0.04);
  EXPECT_EQ(paper.n_max.at(Variant::strong), 80);
  EXPECT_EQ(paper.n_max.at(Variant::weak), 100);
  ExperimentConfig scaled = desk;
  apply_paper_scale(scaled);
  EXPECT_EQ(scaled.benchmark.num_steps, 200);
  EXPECT_EQ(scaled.training_size, 40);
}

TEST(Config, SchemaErrorsCarryTheJsonPath) {
  auto expect_path = [](io::Json j, const std::string& path) {
    try {
      io::parse_config(j);
      ADD_FAILURE() << "expected a schema error at " << path;
    } catch (const io::SchemaError& e) {
      EXPECT_EQ(e.path(), path) << e.what();
    }
  };
  auto j = tiny_config_json();
  j["greedy"].erase("n_max");
  expect_path(j, "/greedy/n_max");
  j = tiny_config_json();
  j["mesh"]["h"] = "fine";
  expect_path(j, "/mesh/h");
  j = tiny_config_json();
  j["truth"]["colour"] = 1;
  expect_path(j, "/truth/colour");
  j = tiny_config_json();
  j["variants"][1] = "medium";
  expect_path(j, "/variants/1");
  j = tiny_config_json();
  j["parameter"]["domain"] = {10};
  expect_path(j, "/parameter/domain");
  j = tiny_config_json();
  j.erase("test");
  expect_path(j, "/test");
  j = tiny_config_json();
  j["truth"]["noise_std"] = -0.1;
  EXPECT_THROW(io::parse_config(j), io::SchemaError);
}

TEST(Config, HashIsStableAndSensitive) {
  const auto a = io::parse_config(tiny_config_json());
  EXPECT_EQ(io::config_hash(a), io::config_hash(io::parse_config(tiny_config_json())));
  auto b = a;
  b.seed += 1;
  EXPECT_NE(io::config_hash(a), io::config_hash(b));
  b = a;
  b.threads = 7;
  EXPECT_EQ(io::config_hash(a), io::config_hash(b));
}

TEST(Artifacts, HashAndNumberFormatting) {
  EXPECT_EQ(io::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(io::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300}) EXPECT_EQ(std::stod(io::fmt(x)), x);
}

TEST(Artifacts, AtomicFileLeavesNoPartialOutput) {
  const fs::path dir = scratch_dir("atomic");
  {
    io::AtomicFile f(dir / "a.csv");
    f.stream() << "x";
    EXPECT_FALSE(fs::exists(dir / "a.csv"));
  }
  EXPECT_FALSE(fs::exists(dir / "a.csv"));
  EXPECT_FALSE(fs::exists(dir / "a.csv.partial"));
  io::write_atomic(dir / "b.csv", "y\n");
  EXPECT_EQ(io::read_file(dir / "b.csv"), "y\n");
}

TEST_F(ExperimentsOnBenchmark, RomContainerRoundTrip) {
  const auto g = train(bench.fom, bench.obs, cfg.greedy_config(Variant::weak));
  io::RomContainer rom{g.basis, g.trace, bench.constants, "abc", 5};
  const auto built = build_reduced_model(bench.fom, g.basis, bench.obs, bench.constants);
  const auto back = io::rom_from_json(io::Json::parse(io::rom_to_json(rom, &built).dump()));
  EXPECT_EQ(back.basis.state, rom.basis.state);
  EXPECT_EQ(back.basis.forcing, rom.basis.forcing);
  EXPECT_EQ(back.basis.dims, rom.basis.dims);
  EXPECT_EQ(back.basis.variant, Variant::weak);
  EXPECT_EQ(back.constants.gamma_b, rom.constants.gamma_b);
  ASSERT_EQ(back.trace.steps.size(), rom.trace.steps.size());
  EXPECT_EQ(back.trace.steps.back().max_rel_bound, rom.trace.steps.back().max_rel_bound);
  io::Json broken = io::rom_to_json(rom);
  broken["dims"].back() = {1, 0, 0};
  EXPECT_THROW(io::rom_from_json(broken), io::SchemaError);
}

TEST_F(ExperimentsOnBenchmark, PipelineReusesStoredContainers) {
  const fs::path dir = scratch_dir("pipeline");
  std::ostringstream log;
  {
    Pipeline p(cfg, dir, &log);
    p.train(Variant::strong);
  }
  Pipeline q(cfg, dir, &log);
  const auto& r = q.rom(Variant::strong);
  EXPECT_EQ(r.basis.iterations(), 3);
  EXPECT_NE(log.str().find("loaded rom_strong.json"), std::string::npos);
  ExperimentConfig other = cfg;
  other.seed += 1;
  Pipeline s(other, dir, &log);
  s.rom(Variant::strong);
  EXPECT_NE(log.str().find("different config; retraining"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch_dir("cli_codes");
  auto j = tiny_config_json();
  j["greedy"].erase("n_max");
  write_json(dir / "missing.json", j);
  EXPECT_EQ(run_cli("assemble --config " + (dir / "missing.json").string() + " --out " + dir.string()), 2);
  std::ofstream(dir / "garbage.json") << "{ not json";
  EXPECT_EQ(run_cli("assemble --config " + (dir / "garbage.json").string() + " --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("assemble --out " + dir.string()), 1);
  EXPECT_EQ(run_cli("frobnicate --config x"), 1);
  j = tiny_config_json();
  j["solver"] = {{"fom_cg_rel_tol", 1e-14}, {"cg_max_iter", 1}};
  write_json(dir / "stiff.json", j);
  EXPECT_EQ(run_cli("train-strong --config " + (dir / "stiff.json").string() + " --out " + dir.string()), 3);
}

TEST(Cli, SweepSmokeAndDeterminism) {
  const fs::path dir = scratch_dir("cli_sweep");
  write_json(dir / "tiny.json", tiny_config_json());
  const std::string base = "--config " + (dir / "tiny.json").string();
  ASSERT_EQ(run_cli("sweep " + base + " --out " + (dir / "a").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "a" / "sweep.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "certificates.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "rom_strong.json"));
  const auto certs = io::Json::parse(io::read_file(dir / "a" / "certificates.json"));
  ASSERT_EQ(certs.size(), 2u * 2u * 2u);
  for (const char* key : {"mu", "N", "R_y", "R_p", "R_u", "alpha_lb", "c1", "c2", "delta", "error", "effectivity"}) {
    EXPECT_TRUE(certs[0].contains(key)) << key;
  }
  ASSERT_EQ(run_cli("sweep " + base + " --threads 2 --out " + (dir / "b").string()), 0);
  const std::vector<std::string> timing = {"t_solve_ms", "t_bound_ms"};
  const auto a = numeric_fields(dir / "a" / "sweep.csv", timing);
  EXPECT_EQ(a.size(), 8u);
  EXPECT_EQ(a, numeric_fields(dir / "b" / "sweep.csv", timing));
  ASSERT_EQ(run_cli("synthesize " + base + " --seed 99 --out " + (dir / "c").string()), 0);
  const auto truth = io::Json::parse(io::read_file(dir / "c" / "truth.json"));
  EXPECT_EQ(truth["seed"].get<int>(), 99);
}
