#include "andhra/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "andhra/error.hpp"
#include "andhra/ops.hpp"

namespace andhra {

Tensor joint_loss(const std::vector<Tensor>& per_head_losses) {
  if (per_head_losses.empty()) throw ContractViolation("joint_loss: no head losses");
  return mean_of(per_head_losses);
}

double cosine_lr(std::size_t epoch, double lr0, std::size_t t_max) {
  if (t_max == 0) throw ContractViolation("cosine_lr: t_max must be >= 1");
  if (epoch > t_max) throw ContractViolation("cosine_lr: epoch beyond t_max");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(t_max);
  return std::max(0.0, lr0 * 0.5 * (1.0 + std::cos(phase)));
}

void sgd_step(std::span<Tensor> params, OptimizerState& state, double lr) {
  if (state.velocity.size() != params.size()) state.velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto theta = p.data();
    auto& v = state.velocity[i];
    if (v.empty()) v.assign(theta.size(), 0.0);
    if (v.size() != theta.size()) throw DimensionError("sgd_step: velocity/parameter size mismatch");
    const bool has_grad = p.has_grad();
    const auto g = has_grad ? p.grad_span() : std::span<double>();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = (has_grad ? g[k] : 0.0) + state.weight_decay * theta[k];
      v[k] = state.momentum * v[k] + gk;
      theta[k] -= lr * v[k];
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (momentum < 0.0 || weight_decay < 0.0) throw ConfigError("momentum and weight_decay must be >= 0");
}

std::string epoch_csv_header(std::size_t heads) {
  std::ostringstream os;
  os << "epoch,lr,train_loss";
  for (std::size_t h = 0; h < heads; ++h) os << ",head_" << h << "_acc";
  os << ",combined_acc,eval_loss";
  for (std::size_t h = 0; h < heads; ++h) os << ",eval_head_" << h << "_acc";
  os << ",eval_combined_acc";
  return os.str();
}

std::string epoch_csv_row(const EpochLog& log) {
  std::ostringstream os;
  os.precision(17);
  os << log.epoch << ',' << log.lr << ',' << log.train_loss;
  for (double a : log.train_head_accuracy) os << ',' << a;
  os << ',' << log.train_combined_accuracy << ',';
  if (log.has_eval) os << log.eval_loss;
  for (std::size_t h = 0; h < log.train_head_accuracy.size(); ++h) {
    os << ',';
    if (log.has_eval) os << log.eval_head_accuracy[h];
  }
  os << ',';
  if (log.has_eval) os << log.eval_combined_accuracy;
  return os.str();
}

double EvalResult::combined_accuracy(CombinerKind kind) const {
  return accuracy_percent(combine(kind, predictions), labels);
}

EvalResult evaluate(NetworkTree& tree, const Dataset& data, const Normalization& norm,
                    std::size_t batch_size) {
  if (data.num_classes != tree.spec().num_classes)
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes, network predicts " +
                      std::to_string(tree.spec().num_classes));
  if (data.size() == 0) throw ContractViolation("evaluate: empty dataset");
  NoGradGuard no_grad;
  const std::size_t H = tree.num_heads(), N = data.size(), K = tree.spec().num_classes;
  EvalResult res;
  res.predictions = HeadPredictions(H, N, K);
  res.labels = data.labels;
  std::vector<std::size_t> correct(H, 0);
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < N; start += batch_size) {
    const std::size_t end = std::min(N, start + batch_size);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    Batch batch = make_batch(data, idx, norm, nullptr);
    const auto logits = tree.forward_all_heads(batch.images, Mode::Eval);
    std::vector<Tensor> losses;
    for (std::size_t h = 0; h < H; ++h) {
      losses.push_back(softmax_cross_entropy(logits[h], batch.labels));
      const auto p = softmax_rows(logits[h]);
      std::copy(p.begin(), p.end(), &res.predictions.at(h, start, 0));
    }
    loss_sum += joint_loss(losses).item() * static_cast<double>(end - start);
  }
  const auto argmax = res.predictions.head_argmax();
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t b = 0; b < N; ++b) correct[h] += argmax[h * N + b] == res.labels[b];
  for (std::size_t h = 0; h < H; ++h)
    res.head_accuracy.push_back(100.0 * static_cast<double>(correct[h]) / static_cast<double>(N));
  res.loss = loss_sum / static_cast<double>(N);
  return res;
}

Trainer::Trainer(NetworkTree& tree, const Dataset& train, const Dataset* eval, TrainConfig cfg)
    : tree_(tree), train_(train), eval_(eval), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  if (train.size() == 0) throw ContractViolation("Trainer: empty training set");
  if (train.num_classes != tree.spec().num_classes ||
      (eval && eval->num_classes != tree.spec().num_classes))
    throw ConfigError("dataset has " + std::to_string(train.num_classes) + " classes, network predicts " +
                      std::to_string(tree.spec().num_classes));
  norm_ = compute_normalization(train);
  params_ = tree_.parameters();
  tensors_ = params_.tensors();
  optimizer_.momentum = cfg_.momentum;
  optimizer_.weight_decay = cfg_.weight_decay;
}

double Trainer::current_lr() const {
  return cosine_lr(std::min(state_.epoch, cfg_.t_max), cfg_.lr0, cfg_.t_max);
}

const TrainerState& Trainer::state() const {
  state_.rng = rng_.state();
  return state_;
}

void Trainer::restore(const TrainerState& state, OptimizerState optimizer) {
  if (optimizer.velocity.size() != tensors_.size() && !optimizer.velocity.empty())
    throw DimensionError("optimizer state has " + std::to_string(optimizer.velocity.size()) +
                         " buffers for " + std::to_string(tensors_.size()) + " parameters");
  state_ = state;
  rng_.set_state(state.rng);
  optimizer_ = std::move(optimizer);
}

std::optional<EpochLog> Trainer::step() {
  const std::size_t H = tree_.num_heads();
  const std::size_t N = train_.size();
  if (state_.permutation.empty()) {
    state_.permutation = rng_.permutation(N);
    state_.cursor = 0;
    state_.loss_sum = 0.0;
    state_.batches = 0;
    state_.seen = 0;
    state_.correct_per_head.assign(H, 0);
    state_.correct_combined = 0;
  }
  const std::size_t end = std::min(N, state_.cursor + cfg_.batch_size);
  const std::span<const std::size_t> idx(state_.permutation.data() + state_.cursor, end - state_.cursor);
  Batch batch = make_batch(train_, idx, norm_, cfg_.augment ? &rng_ : nullptr);

  const auto logits = tree_.forward_all_heads(batch.images, Mode::Train);
  std::vector<Tensor> losses;
  losses.reserve(H);
  for (const auto& l : logits) losses.push_back(softmax_cross_entropy(l, batch.labels));
  Tensor loss = joint_loss(losses);
  last_loss_ = loss.item();
  if (!std::isfinite(last_loss_))
    throw NumericError("non-finite training loss at epoch " + std::to_string(state_.epoch));

  for (auto& t : tensors_) t.zero_grad();
  loss.backward();
  sgd_step(tensors_, optimizer_, current_lr());

  const std::size_t B = idx.size();
  HeadPredictions preds(H, B, tree_.spec().num_classes);
  for (std::size_t h = 0; h < H; ++h) {
    const auto p = softmax_rows(logits[h]);
    std::copy(p.begin(), p.end(), &preds.at(h, 0, 0));
  }
  const auto argmax = preds.head_argmax();
  const auto voted = majority_vote(preds);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) state_.correct_per_head[h] += argmax[h * B + b] == batch.labels[b];
    state_.correct_combined += voted[b] == batch.labels[b];
  }
  state_.loss_sum += last_loss_;
  state_.batches += 1;
  state_.seen += B;
  state_.cursor = end;
  if (state_.cursor == N) return close_epoch();
  return std::nullopt;
}

EpochLog Trainer::close_epoch() {
  EpochLog log;
  log.epoch = state_.epoch;
  log.lr = current_lr();
  log.train_loss = state_.loss_sum / static_cast<double>(state_.batches);
  const double seen = static_cast<double>(state_.seen);
  for (auto c : state_.correct_per_head) log.train_head_accuracy.push_back(100.0 * static_cast<double>(c) / seen);
  log.train_combined_accuracy = 100.0 * static_cast<double>(state_.correct_combined) / seen;
  if (eval_) {
    const auto res = evaluate(tree_, *eval_, norm_);
    log.has_eval = true;
    log.eval_loss = res.loss;
    log.eval_head_accuracy = res.head_accuracy;
    log.eval_combined_accuracy = res.combined_accuracy(cfg_.eval_combiner);
  }
  state_.epoch += 1;
  state_.permutation.clear();
  state_.cursor = 0;
  return log;
}

EpochLog Trainer::run_epoch() {
  for (;;)
    if (auto log = step()) return *log;
}

std::vector<EpochLog> Trainer::run(const std::function<void(const EpochLog&)>& on_epoch) {
  std::vector<EpochLog> logs;
  while (state_.epoch < cfg_.epochs) {
    logs.push_back(run_epoch());
    if (on_epoch) on_epoch(logs.back());
  }
  return logs;
}

}  // namespace andhra
