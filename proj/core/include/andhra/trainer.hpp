#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "andhra/data.hpp"
#include "andhra/ensemble.hpp"
#include "andhra/network.hpp"
#include "andhra/rng.hpp"
#include "andhra/tensor.hpp"

namespace andhra {

// (1/H) * sum of the per-head losses; 0.125 per head for eight heads.
Tensor joint_loss(const std::vector<Tensor>& per_head_losses);

// lr0 * (1 + cos(pi * epoch / t_max)) / 2, clamped at 0.
double cosine_lr(std::size_t epoch, double lr0, std::size_t t_max);

struct OptimizerState {
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<std::vector<double>> velocity;  // one buffer per parameter, lazily sized
};

// g' = g + wd * theta; v = momentum * v + g'; theta -= lr * v.
void sgd_step(std::span<Tensor> params, OptimizerState& state, double lr);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double lr0 = 0.1;
  std::size_t t_max = 200;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  bool deterministic = true;
  bool augment = true;
  CombinerKind eval_combiner = CombinerKind::MajorityVote;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::vector<double> train_head_accuracy;
  double train_combined_accuracy = 0.0;  // majority vote
  bool has_eval = false;
  double eval_loss = 0.0;
  std::vector<double> eval_head_accuracy;
  double eval_combined_accuracy = 0.0;  // TrainConfig::eval_combiner
};

std::string epoch_csv_header(std::size_t heads);
std::string epoch_csv_row(const EpochLog& log);

struct EvalResult {
  std::vector<double> head_accuracy;  // percent
  double loss = 0.0;                  // joint loss averaged over samples
  HeadPredictions predictions;
  std::vector<int> labels;

  double combined_accuracy(CombinerKind kind) const;
};

// Eval-mode pass over the whole dataset with normalisation only.
EvalResult evaluate(NetworkTree& tree, const Dataset& data, const Normalization& norm,
                    std::size_t batch_size = 256);

// Everything needed to continue a run exactly where it stopped.
struct TrainerState {
  std::size_t epoch = 0;                 // epochs completed
  std::size_t cursor = 0;                // position inside the current permutation
  std::vector<std::size_t> permutation;  // empty between epochs
  Rng::State rng{};
  double loss_sum = 0.0;
  std::size_t batches = 0;
  std::size_t seen = 0;
  std::vector<std::size_t> correct_per_head;
  std::size_t correct_combined = 0;
};

// One training run of a tree: per batch, forward all heads, per-head
// cross-entropy, joint loss, one backward, one SGD step. The learning rate is
// annealed per epoch.
class Trainer {
 public:
  Trainer(NetworkTree& tree, const Dataset& train, const Dataset* eval, TrainConfig cfg);

  // One optimisation step; starts a new epoch (fresh permutation) if needed
  // and closes the epoch when its last batch is consumed. Returns the log of
  // the epoch it closed, if any.
  std::optional<EpochLog> step();
  EpochLog run_epoch();
  // Trains until cfg.epochs epochs are complete; `on_epoch` sees every log.
  std::vector<EpochLog> run(const std::function<void(const EpochLog&)>& on_epoch = {});

  double current_lr() const;
  const TrainerState& state() const;
  void restore(const TrainerState& state, OptimizerState optimizer);
  const OptimizerState& optimizer() const { return optimizer_; }
  const Normalization& normalization() const { return norm_; }
  const TrainConfig& config() const { return cfg_; }
  double last_loss() const { return last_loss_; }

 private:
  EpochLog close_epoch();

  NetworkTree& tree_;
  const Dataset& train_;
  const Dataset* eval_;
  TrainConfig cfg_;
  Normalization norm_;
  nn::ParameterList params_;
  std::vector<Tensor> tensors_;
  OptimizerState optimizer_;
  Rng rng_;
  mutable TrainerState state_;
  double last_loss_ = 0.0;
};

}  // namespace andhra
