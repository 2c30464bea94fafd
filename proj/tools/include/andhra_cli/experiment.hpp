#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "andhra/checkpoint.hpp"
#include "andhra/data.hpp"
#include "andhra/ensemble.hpp"
#include "andhra/stats.hpp"
#include "andhra_cli/config.hpp"

namespace andhra::cli {

namespace fs = std::filesystem;

// "config_hash=<hex>;code_version=<x.y.z>"
std::string provenance(const std::string& config_hash);

// Per-head probability dump: u64 H, u64 B, u64 K, then H*B*K f64 laid out
// [head][sample][class], then u32 length + provenance text. Little-endian.
void write_prob_dump(const fs::path& file, const HeadPredictions& preds, const std::string& provenance);
HeadPredictions read_prob_dump(const fs::path& file);
// Labels sidecar: u64 count, count * i32, then u32 length + provenance text.
void write_labels(const fs::path& file, const std::vector<int>& labels, const std::string& provenance);
std::vector<int> read_labels(const fs::path& file);

DatasetPair load_datasets(const ExperimentConfig& cfg);

// Build seed for run i; the trainer's own stream uses train.seed + i.
std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t run_index);

struct ResultsFile {
  std::string config_hash;
  std::string code_version;
  NetworkSpec spec;
  std::vector<std::string> heads;  // HeadId::str() in head order
  std::vector<RunResult> runs;     // wall_seconds is not stored here
};

std::string results_json(const ExperimentConfig& cfg, const std::vector<std::string>& heads,
                         const std::vector<RunResult>& runs);
// Accepts either a results.json path or the directory holding it.
ResultsFile read_results(const fs::path& path);

// Trains one run and writes out_dir/run_<i>/{checkpoint.bin, epochs.csv,
// eval_probs.bin, eval_labels.bin}.
RunResult train_run(const ExperimentConfig& cfg, const DatasetPair& data, std::size_t run_index,
                    std::ostream* log);

// All n_runs runs (parallel over cfg.workers), then results.json and
// timing.json. out_dir/INCOMPLETE marks an unfinished experiment.
std::vector<RunResult> cmd_train(const ExperimentConfig& cfg, std::ostream& log);

struct EvalReport {
  std::vector<std::string> heads;
  std::vector<double> head_accuracy;
  std::map<std::string, double> combined_accuracy;
  double loss = 0.0;
};

// Evaluates a checkpoint on the configured test split; writes eval.json and
// the probability dump into out_dir.
EvalReport cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir,
                    std::ostream& log);

ComparisonReport cmd_compare(const fs::path& baseline_results, const fs::path& ab_results,
                             const std::string& combiner, const fs::path& out_dir, std::ostream& log);

struct AblationRow {
  CombinerKind combiner;
  std::vector<double> per_run;  // percent
  double mean = 0.0;
  double stddev = 0.0;          // 0 with a single run
};

// Recomputes combined accuracy under each combiner from the saved dumps of
// every run in `results_dir`; no network is evaluated.
std::vector<AblationRow> cmd_ablate(const fs::path& results_dir, const std::vector<CombinerKind>& combiners,
                                    const fs::path& out_dir, std::ostream& log);
std::string ablation_text(const std::vector<AblationRow>& rows);

// "root", a digit path such as "010", or "#<index>" in head order.
HeadId parse_head(const std::string& text, const NetworkTree& tree);

Checkpoint cmd_detach(const fs::path& checkpoint, const std::string& head, const fs::path& out_file,
                      std::ostream& log);

void cmd_dataset_stats(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log);

}  // namespace andhra::cli
