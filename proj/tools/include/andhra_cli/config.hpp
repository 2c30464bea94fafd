#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "andhra/ensemble.hpp"
#include "andhra/network.hpp"
#include "andhra/trainer.hpp"

namespace andhra::cli {

enum class DatasetKind { Cifar10, Cifar100, Synthetic };

std::string to_string(DatasetKind kind);  // cifar10 | cifar100 | synthetic
DatasetKind parse_dataset_kind(const std::string& text);

struct DatasetConfig {
  DatasetKind kind = DatasetKind::Synthetic;
  std::string path;             // CIFAR directory
  std::size_t train_size = 0;   // 0 keeps every record (CIFAR) / required for synthetic
  std::size_t test_size = 0;
  std::size_t classes = 10;     // synthetic only
  std::uint64_t seed = 1234;    // synthetic only
};

struct ExperimentConfig {
  DatasetConfig dataset;
  NetworkSpec network;
  TrainConfig train;
  std::size_t n_runs = 5;
  std::string out_dir = "runs";
  std::vector<CombinerKind> combiners = all_combiners();
  std::size_t workers = 1;

  void validate() const;
  // Fixed-order INI rendering of every field; reparsing it gives back an
  // equal config, and its hash identifies the experiment.
  std::string canonical_text() const;
  std::string hash() const;  // 16 hex digits, FNV-1a of canonical_text()

  static ExperimentConfig from_string(const std::string& ini);
  static ExperimentConfig from_file(const std::filesystem::path& file);
};

// ANDHRA_DATA_DIR replaces dataset.path, ANDHRA_OUT_DIR replaces out_dir.
void apply_environment(ExperimentConfig& cfg);

std::string code_version();

}  // namespace andhra::cli
