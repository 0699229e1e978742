#pragma once

// The subcommands of the command-line driver as library calls. Each writes
// its artifacts into the output directory.

#include "rb4dvar/experiments.hpp"
#include "rb4dvar/io.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace rb4dvar {

class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, std::filesystem::path out, std::ostream* log = &std::cerr)
      : cfg_(std::move(cfg)), out_(std::move(out)), log_(log), hash_(io::config_hash(cfg_)) {
    cfg_.validate();
  }

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& output_dir() const { return out_; }
  const std::string& config_hash() const { return hash_; }

  const Benchmark& benchmark() {
    if (!bench_) {
      note("assembling benchmark (h = " + io::fmt(cfg_.benchmark.h) + ", K = " +
           std::to_string(cfg_.benchmark.num_steps) + ")");
      bench_ = std::make_unique<Benchmark>(setup_benchmark(cfg_));
    }
    return *bench_;
  }

  void assemble() {
    const Benchmark& b = benchmark();
    const auto& m = b.fom.model;
    io::Json j;
    j["config_hash"] = hash_;
    j["nodes"] = b.fom.mesh.num_nodes();
    j["triangles"] = b.fom.mesh.num_triangles();
    j["dofs"] = b.fom.dofs;
    j["mu_ref"] = b.fom.mu_ref;
    j["tau"] = m.tau;
    j["num_steps"] = m.num_steps;
    j["constants"] = {{"gamma_b", b.constants.gamma_b}, {"gamma_c", b.constants.gamma_c}};
    j["mass"] = io::sparse_to_json(m.mass);
    j["diffusion"] = io::sparse_to_json(b.fom.diffusion);
    j["convection"] = io::sparse_to_json(b.fom.convection);
    j["state_metric"] = io::sparse_to_json(b.fom.state_metric);
    j["observation"] = io::sparse_to_json(m.observation);
    j["observation_weight"] = io::matrix_to_json(m.observation_weight);
    j["load"] = std::vector<double>(m.load.data(), m.load.data() + m.load.size());
    io::write_atomic(out_ / "operators.json", j.dump());
    note("wrote operators.json (" + std::to_string(b.fom.n()) + " dofs)");
  }

  void synthesize() {
    const Benchmark& b = benchmark();
    const auto& t = b.truth;
    io::write_atomic(out_ / "observations.csv", io::observations_csv(t, cfg_.benchmark.tau, provenance("")));
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (const auto& eta : t.noise) {
      sum_sq += eta.squaredNorm();
      count += static_cast<std::size_t>(eta.size());
    }
    io::Json j;
    j["config_hash"] = hash_;
    j["seed"] = t.seed;
    j["rng_algorithm"] = t.rng_algorithm;
    j["mu_true"] = cfg_.mu_true;
    j["noise_std"] = cfg_.noise_std;
    j["noise_sample_variance"] = count ? sum_sq / static_cast<double>(count) : 0.0;
    io::write_atomic(out_ / "truth.json", j.dump(2));
    note("wrote observations.csv and truth.json");
  }

  /// Runs the greedy and stores the container and its trace.
  const io::RomContainer& train(Variant v) {
    const Benchmark& b = benchmark();
    note("training " + std::string(to_string(v)) + " (N_max = " + std::to_string(cfg_.n_max.at(v)) + ")");
    GreedyResult g = rb4dvar::train(b.fom, b.obs, cfg_.greedy_config(v), [&](const GreedyStep& s) {
      note("  N = " + std::to_string(s.N) + "  mu = " + io::fmt(s.mu) + "  max rel bound = " +
           io::fmt(s.max_rel_bound));
    });
    io::RomContainer rom;
    rom.basis = std::move(g.basis);
    rom.trace = std::move(g.trace);
    rom.constants = b.constants;
    rom.config_hash = hash_;
    rom.seed = cfg_.seed;
    const ReducedModel built = build_reduced_model(b.fom, rom.basis, b.obs, b.constants);
    const std::string text = io::rom_to_json(rom, &built).dump();
    io::write_atomic(rom_path(v), text);
    rom_hashes_[v] = io::hex64(io::fnv1a64(text));
    io::write_atomic(out_ / ("greedy_" + std::string(to_string(v)) + ".csv"),
                     io::greedy_csv(rom.trace, provenance(rom_hashes_[v])));
    return roms_[v] = std::move(rom);
  }

  /// A stored container from this config, or a fresh training run.
  const io::RomContainer& rom(Variant v) {
    if (auto it = roms_.find(v); it != roms_.end()) return it->second;
    const auto path = rom_path(v);
    if (std::filesystem::exists(path)) {
      const std::string text = io::read_file(path);
      io::RomContainer r = io::rom_from_json(io::Json::parse(text));
      if (r.config_hash == hash_ && r.basis.variant == v && r.basis.state.rows() == benchmark().fom.n()) {
        note("loaded " + path.filename().string());
        rom_hashes_[v] = io::hex64(io::fnv1a64(text));
        return roms_[v] = std::move(r);
      }
      note(path.filename().string() + " was built from a different config; retraining");
    }
    return train(v);
  }

  std::map<Variant, SweepReport> sweep() {
    const Benchmark& b = benchmark();
    const auto test = cfg_.test_set();
    SweepOptions so{cfg_.fom_options, cfg_.rom_options, cfg_.threads};
    std::map<Variant, SweepReport> reports;
    io::AtomicFile csv(out_ / "sweep.csv");
    csv.stream() << io::csv_schema_line("sweep") << '\n' << io::kSweepHeader << '\n';
    io::Json certs = io::Json::array();
    for (Variant v : cfg_.variants) {
      const io::RomContainer& r = rom(v);
      const auto prov = provenance(rom_hashes_[v]);
      note("sweep " + std::string(to_string(v)) + " over " + std::to_string(test.size()) + " parameters");
      reports[v] = run_sweep(b.fom, r.basis, b.obs, r.constants, test, clamp_n(cfg_.sweep_n, r.basis),
                             so, nullptr, [&](const SweepRow& row) {
                               csv.stream() << io::sweep_csv_row(row, prov) << '\n' << std::flush;
                               if (!row.failed) {
                                 io::Json c = io::certificate_to_json(row.certificate);
                                 c["config_hash"] = prov.config_hash;
                                 c["rom_hash"] = prov.rom_hash;
                                 c["seed"] = prov.seed;
                                 certs.push_back(std::move(c));
                               } else {
                                 note("  row failed (mu = " + io::fmt(row.mu) + ", N = " +
                                      std::to_string(row.N) + "): " + row.failure);
                               }
                             });
    }
    csv.commit();
    io::write_atomic(out_ / "certificates.json", certs.dump(2));
    note("wrote sweep.csv and certificates.json");
    return reports;
  }

  std::map<Variant, OuterEstimationReport> estimate() {
    const Benchmark& b = benchmark();
    OuterOptions oo{cfg_.fom_options, cfg_.rom_options, cfg_.estimate_tol, cfg_.threads};
    const auto grid = equidistant(b.fom.domain, cfg_.training_size);
    std::map<Variant, OuterEstimationReport> reports;
    io::AtomicFile csv(out_ / "outer.csv");
    csv.stream() << io::csv_schema_line("outer") << '\n' << io::kOuterHeader << '\n';
    io::Json j = io::Json::object();
    for (Variant v : cfg_.variants) {
      const io::RomContainer& r = rom(v);
      const auto prov = provenance(rom_hashes_[v]);
      note("outer estimation " + std::string(to_string(v)));
      OuterEstimationReport rep =
          outer_error_table(b.fom, r.basis, b.obs, r.constants, grid, clamp_n(cfg_.estimate_n, r.basis), oo);
      for (const auto& row : rep.rows) csv.stream() << io::outer_csv_row(rep, row, prov) << '\n';
      io::Json e;
      e["mu_full"] = rep.mu_full;
      e["grid"] = rep.grid;
      e["full_costs"] = rep.full_costs;
      e["rows"] = io::Json::array();
      for (const auto& row : rep.rows) {
        e["rows"].push_back({{"N", row.N}, {"mu_reduced", row.mu_reduced}, {"e_mu", row.e_mu}, {"e_J_max", row.e_J_max}});
      }
      e["rom_hash"] = prov.rom_hash;
      j[std::string(to_string(v))] = e;
      note("  mu* = " + io::fmt(rep.mu_full));
      reports[v] = std::move(rep);
    }
    csv.commit();
    j["config_hash"] = hash_;
    j["seed"] = cfg_.seed;
    io::write_atomic(out_ / "estimate.json", j.dump(2));
    note("wrote outer.csv and estimate.json");
    return reports;
  }

  /// Everything, plus full-order CG logs at mu_true and a summary.
  void report() {
    assemble();
    synthesize();
    for (Variant v : cfg_.variants) train(v);
    const auto sweeps = sweep();
    const auto outer = estimate();
    const Benchmark& b = benchmark();
    io::Json summary;
    summary["config_hash"] = hash_;
    summary["seed"] = cfg_.seed;
    summary["constants"] = {{"gamma_b", b.constants.gamma_b}, {"gamma_c", b.constants.gamma_c}};
    for (Variant v : cfg_.variants) {
      SolveOptions opts = cfg_.fom_options;
      opts.record_iterations = true;
      const auto ref = solve_4dvar(b.fom.model, cfg_.mu_true, restrict_data(b.fom, b.obs, v), v, opts);
      const std::string name(to_string(v));
      io::write_atomic(out_ / ("cg_" + name + ".csv"), io::cg_log_csv(ref, provenance("")));
      io::Json agg = io::Json::array();
      for (const auto& a : sweeps.at(v).aggregates()) {
        agg.push_back({{"N", a.N},
                       {"max_relative_error", a.max_relative_error},
                       {"max_relative_bound", a.max_relative_bound},
                       {"mean_effectivity", a.mean_effectivity},
                       {"max_cg_iterations", a.max_cg_iterations}});
      }
      summary[name] = {{"sweep", agg},
                       {"mu_full", outer.at(v).mu_full},
                       {"final_dims", {roms_.at(v).basis.current().state, roms_.at(v).basis.current().initial,
                                       roms_.at(v).basis.current().forcing}},
                       {"fom_cg_iterations_at_mu_true", ref.cg_iterations}};
    }
    io::write_atomic(out_ / "summary.json", summary.dump(2));
    note("wrote summary.json");
  }

 private:
  std::filesystem::path rom_path(Variant v) const { return out_ / ("rom_" + std::string(to_string(v)) + ".json"); }

  io::Provenance provenance(const std::string& rom_hash) const { return {hash_, rom_hash, cfg_.seed}; }

  std::vector<int> clamp_n(const std::vector<int>& n_list, const ReducedBasis& basis) {
    std::vector<int> out;
    for (int n : n_list) {
      if (n <= basis.iterations()) {
        out.push_back(n);
      } else {
        note("  skipping N = " + std::to_string(n) + " (greedy stopped at " + std::to_string(basis.iterations()) + ")");
      }
    }
    return out;
  }

  void note(const std::string& msg) const {
    if (log_) *log_ << "[rb4dvar] " << msg << std::endl;
  }

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  std::ostream* log_;
  std::string hash_;
  std::unique_ptr<Benchmark> bench_;
  std::map<Variant, io::RomContainer> roms_;
  std::map<Variant, std::string> rom_hashes_;
};

}  // namespace rb4dvar
