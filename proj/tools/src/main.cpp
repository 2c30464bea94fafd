#include <CLI11.hpp>
#include <iostream>

#include "andhra/error.hpp"
#include "andhra_cli/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace andhra;
  using namespace andhra::cli;

  CLI::App app{"ANDHRA / Bandersnatch multi-head network experiments"};
  app.set_version_flag("--version", code_version());
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> workers;
  bool deterministic = false;
  std::string out;

  auto* train = app.add_subcommand("train", "Train n_runs networks described by a config file");
  train->add_option("--config", config_path, "Experiment config (INI)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Base seed; run i uses seed + i");
  train->add_option("--runs", runs, "Number of runs");
  train->add_option("--workers", workers, "Runs trained concurrently");
  train->add_flag("--deterministic", deterministic, "Force deterministic mode");
  train->add_option("--out", out, "Output directory");

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the configured test split");
  eval->add_option("--config", config_path, "Experiment config (INI)")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--out", out, "Output directory (default: next to the checkpoint)");

  std::string baseline, ab;
  std::vector<std::string> combiners;
  auto* compare = app.add_subcommand("compare", "Baseline vs top head: mean+-std, paired t-test, MSE");
  compare->add_option("--baseline", baseline, "Baseline results.json or its directory")->required();
  compare->add_option("--ab", ab, "Branched-network results.json or its directory")->required();
  compare->add_option("--combiner", combiners, "Combiner for the combined column")->expected(0, 1);
  compare->add_option("--out", out, "Output directory (default: the AB results directory)");

  std::string results;
  auto* ablate = app.add_subcommand("ablate-ensemble", "Combined accuracy under every combiner from saved dumps");
  ablate->add_option("--results", results, "Results directory of a trained experiment")->required();
  ablate->add_option("--combiner", combiners, "Combiner(s) to report (default: all four)");
  ablate->add_option("--out", out, "Output directory (default: the results directory)");

  std::string head;
  auto* detach = app.add_subcommand("detach", "Extract one head into a baseline-shaped checkpoint");
  detach->add_option("--checkpoint", checkpoint, "Source checkpoint")->required();
  detach->add_option("--head", head, "Head id: digits such as 010, 'root', or #<index>")->required();
  detach->add_option("--out", out, "Output checkpoint file")->required();

  auto* stats = app.add_subcommand("dataset-stats", "Dataset sizes, class balance and normalisation");
  stats->add_option("--config", config_path, "Experiment config (INI)")->required()->check(CLI::ExistingFile);
  stats->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto load_config = [&]() {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    apply_environment(cfg);
    if (seed) cfg.train.seed = *seed;
    if (runs) cfg.n_runs = *runs;
    if (workers) cfg.workers = *workers;
    if (deterministic) cfg.train.deterministic = true;
    if (!out.empty()) cfg.out_dir = out;
    cfg.validate();
    return cfg;
  };

  try {
    if (*train) {
      cmd_train(load_config(), std::cout);
    } else if (*eval) {
      const auto cfg = load_config();
      const fs::path dir = out.empty() ? fs::path(checkpoint).parent_path() / "eval" : fs::path(out);
      cmd_eval(cfg, checkpoint, dir, std::cout);
    } else if (*compare) {
      const std::string combiner = combiners.empty() ? "majority" : combiners.front();
      const fs::path ab_dir = fs::is_directory(ab) ? fs::path(ab) : fs::path(ab).parent_path();
      cmd_compare(baseline, ab, combiner, out.empty() ? ab_dir : fs::path(out), std::cout);
    } else if (*ablate) {
      std::vector<CombinerKind> kinds;
      for (const auto& c : combiners) kinds.push_back(parse_combiner(c));
      if (kinds.empty()) kinds = all_combiners();
      cmd_ablate(results, kinds, out.empty() ? fs::path(results) : fs::path(out), std::cout);
    } else if (*detach) {
      cmd_detach(checkpoint, head, out, std::cout);
    } else if (*stats) {
      const auto cfg = load_config();
      cmd_dataset_stats(cfg, out.empty() ? fs::path(cfg.out_dir) : fs::path(out), std::cout);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IndexError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const LookupError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}
