#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "andhra/error.hpp"
#include "andhra/layers.hpp"
#include "gradcheck.hpp"

using namespace andhra;
using namespace andhra::nn;
using andhra::gradcheck::grad_check;
using andhra::gradcheck::random_tensor;

namespace {

constexpr int kSeeds = 20;

void randomize(ParameterList& list, Rng& rng) {
  for (auto& p : list.params)
    for (auto& v : p.tensor.data()) v += 0.2 * rng.normal();
}

std::vector<Tensor> with_input(const Tensor& x, const ParameterList& list) {
  std::vector<Tensor> out{x};
  for (const auto& p : list.params) out.push_back(p.tensor);
  return out;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto da = a.data(), db = b.data();
  return std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Activation, ParseAndPrint) {
  EXPECT_EQ(parse_activation("relu"), ActivationKind::ReLU);
  EXPECT_EQ(parse_activation("prelu"), ActivationKind::PReLU);
  EXPECT_EQ(to_string(ActivationKind::PReLU), "prelu");
  EXPECT_THROW(parse_activation("tanh"), ConfigError);
}

TEST(Activation, PReLUCarriesOneSlopePerChannel) {
  Activation a(ActivationKind::PReLU, 5);
  EXPECT_EQ(a.alpha.shape(), (Shape{5}));
  for (double v : a.alpha.data()) EXPECT_EQ(v, kPReLUInit);
  Activation r(ActivationKind::ReLU, 5);
  EXPECT_FALSE(r.alpha.defined());
}

class AndhraBranches : public ::testing::TestWithParam<std::size_t> {};

TEST_P(AndhraBranches, ReluBranchesAreBitwiseIdenticalRelu) {
  const std::size_t n = GetParam();
  Andhra m(n, ActivationKind::ReLU, 3);
  Rng rng(n);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng, 1.0, false);
  const auto outs = m.forward(x);
  ASSERT_EQ(outs.size(), n);
  const Tensor expected = relu(x);
  for (const auto& o : outs) EXPECT_TRUE(bitwise_equal(o, expected));
}

TEST_P(AndhraBranches, OutputsShareNoStorage) {
  const std::size_t n = GetParam();
  Andhra m(n, ActivationKind::ReLU, 2);
  const Tensor x = Tensor::full({1, 2, 2, 2}, 1.0);
  auto outs = m.forward(x);
  std::set<const double*> storage;
  for (auto& o : outs) storage.insert(o.data().data());
  EXPECT_EQ(storage.size(), n);
  outs[0].data()[0] = 42.0;
  EXPECT_EQ(outs[1].data()[0], 1.0);
}

TEST_P(AndhraBranches, PReLUBranchesHaveIndependentSlopes) {
  const std::size_t n = GetParam();
  Andhra m(n, ActivationKind::PReLU, 2);
  ParameterList list;
  m.collect("andhra", list);
  ASSERT_EQ(list.params.size(), n);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(list.params[i].name, "andhra." + std::to_string(i) + ".alpha");
    for (std::size_t j = i + 1; j < n; ++j) EXPECT_FALSE(list.params[i].tensor.same_node(list.params[j].tensor));
  }
}

TEST_P(AndhraBranches, GradientFanInAtInput) {
  const std::size_t n = GetParam();
  for (auto kind : {ActivationKind::ReLU, ActivationKind::PReLU}) {
    Andhra m(n, kind, 3);
    Rng rng(10 + n);
    for (auto& b : m.branches)
      if (b.alpha.defined())
        for (auto& a : b.alpha.data()) a = rng.uniform();
    Tensor x = random_tensor({2, 3, 3, 3}, rng);
    std::vector<Tensor> upstream;
    for (std::size_t i = 0; i < n; ++i) upstream.push_back(random_tensor(x.shape(), rng, 1.0, false));
    const auto outs = m.forward(x);
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < n; ++i) terms.push_back(sum(mul(outs[i], upstream[i])));
    Tensor total = terms[0];
    for (std::size_t i = 1; i < n; ++i) total = add(total, terms[i]);
    total.backward();

    const auto g = x.grad();
    for (std::size_t e = 0; e < x.numel(); ++e) {
      const std::size_t c = (e / 9) % 3;
      double expected = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double slope = kind == ActivationKind::ReLU ? 0.0 : m.branches[i].alpha.data()[c];
        expected += upstream[i].data()[e] * (x.data()[e] > 0.0 ? 1.0 : slope);
      }
      EXPECT_NEAR(g[e], expected, 1e-12);
    }
  }
}

TEST_P(AndhraBranches, GradientCheckPReLU) {
  const std::size_t n = GetParam();
  for (int seed = 0; seed < kSeeds; ++seed) {
    Andhra m(n, ActivationKind::PReLU, 2);
    ParameterList list;
    m.collect("a", list);
    Rng rng(1000 + seed);
    randomize(list, rng);
    Tensor x = random_tensor({2, 2, 3, 3}, rng);
    Tensor mix = random_tensor({2, 2, 3, 3}, rng, 1.0, false);
    const auto r = grad_check(
        [&] {
          const auto outs = m.forward(x);
          Tensor acc = outs[0];
          for (std::size_t i = 1; i < outs.size(); ++i) acc = add(acc, mul(outs[i], scale(mix, double(i))));
          return acc;
        },
        with_input(x, list), seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " at " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(N, AndhraBranches, ::testing::Values(2u, 3u));

TEST(Andhra, PReLUSlopeArithmetic) {
  Andhra m(2, ActivationKind::PReLU, 2);
  for (auto& a : m.branches[0].alpha.data()) a = 0.1;
  for (auto& a : m.branches[1].alpha.data()) a = 0.9;
  const auto outs = m.forward(Tensor::full({1, 2, 1, 1}, -1.0));
  for (double v : outs[0].data()) EXPECT_DOUBLE_EQ(v, -0.1);
  for (double v : outs[1].data()) EXPECT_DOUBLE_EQ(v, -0.9);
}

TEST(Andhra, SumOfBranchesHasGradientTwoOnPositiveInput) {
  Andhra m(2, ActivationKind::ReLU, 2);
  Tensor x = Tensor::full({1, 2, 2, 2}, 0.5, true);
  const auto outs = m.forward(x);
  sum(add(outs[0], outs[1])).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Andhra, RejectsBranchingFactorBelowTwo) {
  EXPECT_THROW(Andhra(1, ActivationKind::ReLU, 2), ContractViolation);
}

TEST(ResBlock, ZeroConvolutionsGiveIdentity) {
  Rng rng(2);
  ResBlock b(3, rng);
  for (auto& v : b.conv1.weight.data()) v = 0.0;
  for (auto& v : b.conv2.weight.data()) v = 0.0;
  const Tensor x = random_tensor({2, 3, 4, 4}, rng, 1.0, false);
  const Tensor y = b.forward(x, Mode::Train);
  EXPECT_TRUE(bitwise_equal(x, y));
}

TEST(ResBlock, PreservesShapeAndHasNoPostSumActivation) {
  Rng rng(3);
  ResBlock b(4, rng);
  const Tensor x = random_tensor({2, 4, 6, 6}, rng, 1.0, false);
  const Tensor y = b.forward(x, Mode::Train);
  EXPECT_EQ(y.shape(), x.shape());
  bool negative = false;
  for (double v : y.data()) negative |= v < 0.0;
  EXPECT_TRUE(negative);
}

TEST(ResBlock, ChannelMismatch) {
  Rng rng(4);
  ResBlock b(4, rng);
  EXPECT_THROW(b.forward(Tensor::zeros({1, 3, 4, 4}), Mode::Train), DimensionError);
}

TEST(ResBlockP, StrideTwoHalvesSpatialExtent) {
  Rng rng(5);
  ResBlockP b(3, 6, 2, rng);
  const Tensor y = b.forward(random_tensor({1, 3, 8, 8}, rng, 1.0, false), Mode::Train);
  EXPECT_EQ(y.shape(), (Shape{1, 6, 4, 4}));
  for (double v : y.data()) EXPECT_GE(v, 0.0);
}

TEST(ResBlockP, ChannelMismatch) {
  Rng rng(6);
  ResBlockP b(3, 6, 2, rng);
  EXPECT_THROW(b.forward(Tensor::zeros({1, 4, 8, 8}), Mode::Train), DimensionError);
}

TEST(ResBlock, GradientCheck) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1100 + seed);
    ResBlock b(2, rng);
    ParameterList list;
    b.collect("b", list);
    randomize(list, rng);
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    const auto r = grad_check([&] { return b.forward(x, Mode::Train); }, with_input(x, list), seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " at " << r.worst;
  }
}

TEST(ResBlockP, GradientCheck) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1200 + seed);
    ResBlockP b(2, 3, 2, rng);
    ParameterList list;
    b.collect("p", list);
    randomize(list, rng);
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    const auto r = grad_check([&] { return b.forward(x, Mode::Train); }, with_input(x, list), seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " at " << r.worst;
  }
}

TEST(Stem, GradientCheck) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1300 + seed);
    Stem s(3, 2, rng);
    ParameterList list;
    s.collect("stem", list);
    randomize(list, rng);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    const auto r = grad_check([&] { return s.forward(x, Mode::Train); }, with_input(x, list), seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " at " << r.worst;
  }
}

TEST(LinearLayer, GradientCheck) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1400 + seed);
    Linear l(6, 3, rng);
    ParameterList list;
    l.collect("fc", list);
    randomize(list, rng);
    Tensor x = random_tensor({4, 6}, rng);
    const auto r = grad_check([&] { return l.forward(x); }, with_input(x, list), seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " at " << r.worst;
  }
}

TEST(Layers, ParameterNames) {
  Rng rng(7);
  ResBlockP b(2, 4, 2, rng);
  ParameterList list;
  b.collect("down", list);
  std::vector<std::string> names;
  for (const auto& p : list.params) names.push_back(p.name);
  const std::vector<std::string> expected{
      "down.conv1.weight", "down.bn1.gamma", "down.bn1.beta", "down.conv2.weight", "down.bn2.gamma",
      "down.bn2.beta", "down.shortcut.conv.weight", "down.shortcut.bn.gamma", "down.shortcut.bn.beta"};
  EXPECT_EQ(names, expected);
  ASSERT_EQ(list.buffers.size(), 3u);
  EXPECT_EQ(list.buffers[2].name, "down.shortcut.bn");
}

TEST(Layers, InitializationDefaults) {
  Rng rng(8);
  Conv2d conv(16, 32, 3, 1, 1, rng);
  double s = 0.0, s2 = 0.0;
  for (double v : conv.weight.data()) s += v, s2 += v * v;
  const double n = static_cast<double>(conv.weight.numel());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var, 2.0 / (16 * 9), 0.1 * 2.0 / (16 * 9));
  BatchNorm2d bn(4);
  for (double v : bn.gamma.data()) EXPECT_EQ(v, 1.0);
  for (double v : bn.beta.data()) EXPECT_EQ(v, 0.0);
  Linear fc(8, 3, rng);
  for (double v : fc.bias.data()) EXPECT_EQ(v, 0.0);
}
