// Command-line driver. Exit codes: 0 success, 1 usage or I/O error,
// 2 config schema violation, 3 numerical failure, 4 internal error.

#include "rb4dvar/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

enum Exit { kOk = 0, kUsage = 1, kSchema = 2, kNumerical = 3, kInternal = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified reduced-basis 4D-Var benchmark driver"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool paper_scale = false;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config")->required();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the noise seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--paper-scale", paper_scale, "use the h = 0.04, K = 200 setting (long-running)");
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"assemble", "assemble the full-order operators"},
      {"synthesize", "simulate the truth and draw noisy observations"},
      {"train-strong", "train the strong-constraint reduced basis"},
      {"train-weak", "train the weak-constraint reduced basis"},
      {"train-combined", "train the combined reduced basis"},
      {"sweep", "certified error sweep over the test set"},
      {"estimate", "outer parameter estimation table"},
      {"report", "run the whole pipeline"},
  };
  for (const auto& [name, help] : commands) common(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    rb4dvar::ExperimentConfig cfg = rb4dvar::io::load_config(config_path);
    if (paper_scale) rb4dvar::apply_paper_scale(cfg);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    rb4dvar::Pipeline p(cfg, out_dir);
    if (cmd == "assemble") {
      p.assemble();
    } else if (cmd == "synthesize") {
      p.synthesize();
    } else if (cmd.rfind("train-", 0) == 0) {
      p.train(*rb4dvar::parse_variant(cmd.substr(6)));
    } else if (cmd == "sweep") {
      p.sweep();
    } else if (cmd == "estimate") {
      p.estimate();
    } else {
      p.report();
    }
  } catch (const rb4dvar::ConfigurationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kSchema;
  } catch (const rb4dvar::NonConvergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const rb4dvar::SingularSystemError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const rb4dvar::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const rb4dvar::DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const rb4dvar::ContractError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
