#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "andhra/data.hpp"
#include "andhra/error.hpp"
#include "andhra/network.hpp"
#include "andhra/ops.hpp"
#include "andhra/trainer.hpp"

using namespace andhra;

namespace {

NetworkSpec small_spec(std::size_t n = 2, std::vector<bool> mask = {true, false}) {
  NetworkSpec s;
  s.branching_factor = n;
  s.levels = 3;
  s.split_mask = std::move(mask);
  s.base_width = 4;
  s.num_classes = 4;
  return s;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.t_max = epochs;
  cfg.batch_size = 20;
  cfg.lr0 = 0.05;
  cfg.seed = 3;
  return cfg;
}

std::vector<double> all_values(NetworkTree& tree) {
  std::vector<double> out;
  for (const auto& p : tree.parameters().params) {
    const auto d = p.tensor.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace

TEST(JointLoss, EightEqualLosses) {
  std::vector<Tensor> losses(8, Tensor::scalar(1.0));
  EXPECT_EQ(joint_loss(losses).item(), 1.0);
}

TEST(JointLoss, EighthCoefficient) {
  std::vector<Tensor> losses;
  for (int i = 0; i < 8; ++i) losses.push_back(Tensor::scalar(i == 0 ? 8.0 : 0.0, true));
  const Tensor total = joint_loss(losses);
  EXPECT_EQ(total.item(), 1.0);
  total.backward();
  for (const auto& l : losses) EXPECT_EQ(l.grad()[0], 0.125);
}

TEST(JointLoss, TwoHeadsHalfSum) {
  const Tensor a = Tensor::scalar(0.7), b = Tensor::scalar(1.9);
  EXPECT_DOUBLE_EQ(joint_loss({a, b}).item(), 0.5 * (0.7 + 1.9));
}

TEST(JointLoss, EmptyIsContractViolation) {
  EXPECT_THROW(joint_loss({}), ContractViolation);
}

TEST(CosineLr, ClosedFormValues) {
  EXPECT_EQ(cosine_lr(0, 0.1, 200), 0.1);
  EXPECT_NEAR(cosine_lr(100, 0.1, 200), 0.05, 1e-15);
  EXPECT_EQ(cosine_lr(200, 0.1, 200), 0.0);
  for (std::size_t e = 0; e <= 200; ++e) {
    const double expect = 0.1 * 0.5 * (1.0 + std::cos(std::numbers::pi * double(e) / 200.0));
    ASSERT_NEAR(cosine_lr(e, 0.1, 200), std::max(expect, 0.0), 1e-15);
    ASSERT_GE(cosine_lr(e, 0.1, 200), 0.0);
  }
  EXPECT_THROW(cosine_lr(201, 0.1, 200), ContractViolation);
  EXPECT_THROW(cosine_lr(0, 0.1, 0), ContractViolation);
}

TEST(Sgd, VanillaStep) {
  Tensor theta = Tensor::scalar(1.0, true);
  theta.grad_span()[0] = 0.5;
  std::vector<Tensor> params{theta};
  OptimizerState st;
  st.momentum = 0.0;
  st.weight_decay = 0.0;
  sgd_step(params, st, 0.1);
  EXPECT_DOUBLE_EQ(theta.item(), 0.95);
}

TEST(Sgd, ZeroGradientDecaysVelocity) {
  Tensor theta = Tensor::scalar(2.0, true);
  std::vector<Tensor> params{theta};
  OptimizerState st;
  st.momentum = 0.9;
  st.weight_decay = 0.0;
  st.velocity = {{1.0}};
  theta.zero_grad();
  sgd_step(params, st, 0.0);
  EXPECT_EQ(theta.item(), 2.0);
  EXPECT_DOUBLE_EQ(st.velocity[0][0], 0.9);
}

TEST(Sgd, TwoStepsMatchScalarRecurrence) {
  Tensor theta = Tensor::scalar(1.5, true);
  std::vector<Tensor> params{theta};
  OptimizerState st;
  st.momentum = 0.9;
  st.weight_decay = 5e-4;
  double th = 1.5, v = 0.0;
  const double grads[2] = {0.3, -0.8};
  for (double g : grads) {
    theta.zero_grad();
    theta.grad_span()[0] = g;
    sgd_step(params, st, 0.1);
    const double gp = g + 5e-4 * th;
    v = 0.9 * v + gp;
    th -= 0.1 * v;
    EXPECT_EQ(theta.item(), th);
    EXPECT_EQ(st.velocity[0][0], v);
  }
}

TEST(Sgd, VelocityShapeMismatch) {
  Tensor theta = Tensor::zeros({3}, true);
  std::vector<Tensor> params{theta};
  OptimizerState st;
  st.velocity = {{0.0}};
  EXPECT_THROW(sgd_step(params, st, 0.1), DimensionError);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.t_max = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EpochCsv, HeaderAndRow) {
  EXPECT_EQ(epoch_csv_header(2),
            "epoch,lr,train_loss,head_0_acc,head_1_acc,combined_acc,eval_loss,eval_head_0_acc,"
            "eval_head_1_acc,eval_combined_acc");
  EpochLog log;
  log.epoch = 3;
  log.lr = 0.5;
  log.train_loss = 1.25;
  log.train_head_accuracy = {10, 20};
  log.train_combined_accuracy = 30;
  EXPECT_EQ(epoch_csv_row(log), "3,0.5,1.25,10,20,30,,,,");
  log.has_eval = true;
  log.eval_loss = 2;
  log.eval_head_accuracy = {40, 50};
  log.eval_combined_accuracy = 60;
  EXPECT_EQ(epoch_csv_row(log), "3,0.5,1.25,10,20,30,2,40,50,60");
}

TEST(Trainer, ClassCountMismatch) {
  Rng rng(1);
  NetworkTree tree = NetworkTree::build(small_spec(), rng);
  const Dataset d = synthetic_dataset(20, 10, rng);
  EXPECT_THROW(Trainer(tree, d, nullptr, small_config(1)), ConfigError);
  EXPECT_THROW(evaluate(tree, d, Normalization{}), ConfigError);
}

TEST(Trainer, LossDecreasesOverTenEpochs) {
  Rng rng(2);
  NetworkTree tree = NetworkTree::build(small_spec(), rng);
  const Dataset train = synthetic_dataset(100, 4, rng);
  const Dataset test = synthetic_dataset(40, 4, rng, Split::Test);
  Trainer trainer(tree, train, &test, small_config(10));
  std::size_t seen = 0;
  const auto logs = trainer.run([&](const EpochLog& l) { EXPECT_EQ(l.epoch, seen++); });
  ASSERT_EQ(logs.size(), 10u);
  EXPECT_LT(logs.back().train_loss, logs.front().train_loss);
  for (const auto& l : logs) {
    EXPECT_EQ(l.train_head_accuracy.size(), 2u);
    EXPECT_TRUE(l.has_eval);
    EXPECT_NEAR(l.lr, cosine_lr(l.epoch, 0.05, 10), 1e-15);
    for (double a : l.train_head_accuracy) EXPECT_TRUE(a >= 0 && a <= 100);
    for (double a : l.eval_head_accuracy) EXPECT_TRUE(a >= 0 && a <= 100);
  }
}

TEST(Trainer, SameSeedSameTrajectory) {
  const Dataset train = [] {
    Rng r(4);
    return synthetic_dataset(60, 4, r);
  }();
  auto once = [&] {
    Rng rng(5);
    NetworkTree tree = NetworkTree::build(small_spec(), rng);
    Trainer trainer(tree, train, nullptr, small_config(2));
    const auto logs = trainer.run();
    return std::make_pair(all_values(tree), logs.back().train_loss);
  };
  const auto a = once(), b = once();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, SymmetricTreeKeepsHeadsIdentical) {
  Rng rng(6);
  NetworkTree tree = NetworkTree::build(small_spec(2, {true, true}), rng, InitMode::SymmetricSiblings);
  const Dataset train = synthetic_dataset(60, 4, rng);
  const Dataset test = synthetic_dataset(20, 4, rng, Split::Test);
  Trainer trainer(tree, train, &test, small_config(3));
  for (const auto& log : trainer.run()) {
    for (double a : log.train_head_accuracy) EXPECT_EQ(a, log.train_head_accuracy[0]);
    for (double a : log.eval_head_accuracy) EXPECT_EQ(a, log.eval_head_accuracy[0]);
  }
}

TEST(Trainer, GradientFanIn) {
  Rng rng(7);
  NetworkTree tree = NetworkTree::build(small_spec(2, {true, true}), rng);
  const Dataset d = synthetic_dataset(8, 4, rng);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const Batch batch = make_batch(d, idx, compute_normalization(d), nullptr);
  auto params = tree.parameters();
  const std::size_t h = tree.num_heads();
  ASSERT_EQ(h, 4u);

  const auto logits = tree.forward_all_heads(batch.images, Mode::Train);
  std::vector<Tensor> losses;
  for (const auto& l : logits) losses.push_back(softmax_cross_entropy(l, batch.labels));
  std::vector<std::vector<std::vector<double>>> per_head(h);
  for (std::size_t i = 0; i < h; ++i) {
    for (auto& p : params.params) p.tensor.zero_grad();
    losses[i].backward(true);
    for (auto& p : params.params) per_head[i].push_back(p.tensor.grad());
  }
  for (auto& p : params.params) p.tensor.zero_grad();
  joint_loss(losses).backward();

  double worst = 0.0;
  for (std::size_t k = 0; k < params.params.size(); ++k) {
    const auto [lo, hi] = tree.heads_under(params.params[k].name);
    const auto joint = params.params[k].tensor.grad();
    for (std::size_t i = 0; i < h; ++i)
      if (i < lo || i >= hi)
        for (double g : per_head[i][k]) ASSERT_EQ(g, 0.0) << params.params[k].name << " head " << i;
    for (std::size_t j = 0; j < joint.size(); ++j) {
      double sum = 0.0;
      for (std::size_t i = lo; i < hi; ++i) sum += per_head[i][k][j];
      worst = std::max(worst, std::abs(joint[j] - sum / double(h)));
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Trainer, EvaluateLeavesRunningStatsAlone) {
  Rng rng(8);
  NetworkTree tree = NetworkTree::build(small_spec(), rng);
  const Dataset d = synthetic_dataset(30, 4, rng);
  auto snapshot = [&] {
    std::vector<double> out;
    for (const auto& b : tree.parameters().buffers) {
      out.insert(out.end(), b.stats->mean.begin(), b.stats->mean.end());
      out.insert(out.end(), b.stats->var.begin(), b.stats->var.end());
    }
    return out;
  };
  const auto before = snapshot();
  const auto params_before = all_values(tree);
  const EvalResult r = evaluate(tree, d, compute_normalization(d), 7);
  EXPECT_EQ(snapshot(), before);
  EXPECT_EQ(all_values(tree), params_before);
  EXPECT_EQ(r.head_accuracy.size(), 2u);
  EXPECT_EQ(r.predictions.samples, 30u);
  EXPECT_TRUE(r.predictions.is_valid());
  EXPECT_EQ(r.labels, d.labels);
}

TEST(Trainer, StepClosesEpochOnLastBatch) {
  Rng rng(9);
  NetworkTree tree = NetworkTree::build(small_spec(), rng);
  const Dataset d = synthetic_dataset(50, 4, rng);
  TrainConfig cfg = small_config(2);
  Trainer trainer(tree, d, nullptr, cfg);
  EXPECT_FALSE(trainer.step().has_value());
  EXPECT_FALSE(trainer.step().has_value());
  const auto closed = trainer.step();
  ASSERT_TRUE(closed.has_value());
  EXPECT_EQ(closed->epoch, 0u);
  EXPECT_EQ(trainer.state().epoch, 1u);
  EXPECT_EQ(trainer.current_lr(), cosine_lr(1, cfg.lr0, cfg.t_max));
}

TEST(Trainer, DivergenceIsNumericError) {
  Rng rng(10);
  NetworkTree tree = NetworkTree::build(small_spec(), rng);
  const Dataset d = synthetic_dataset(40, 4, rng);
  TrainConfig cfg = small_config(5);
  cfg.lr0 = 1e200;
  Trainer trainer(tree, d, nullptr, cfg);
  EXPECT_THROW(trainer.run(), NumericError);
}
