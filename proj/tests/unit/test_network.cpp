#include <gtest/gtest.h>

#include <cstring>
#include <functional>
#include <map>
#include <set>

#include "andhra/error.hpp"
#include "andhra/network.hpp"
#include "gradcheck.hpp"

using namespace andhra;
using andhra::gradcheck::random_tensor;

namespace {

NetworkSpec small_spec(std::size_t n, std::size_t levels, std::vector<bool> mask, std::size_t width = 2,
                       std::size_t r = 0) {
  NetworkSpec s;
  s.branching_factor = n;
  s.levels = levels;
  s.split_mask = std::move(mask);
  s.r_depth = r;
  s.base_width = width;
  s.num_classes = 3;
  return s;
}

std::size_t brute_force_segments(const NetworkSpec& s, std::size_t level = 0) {
  if (level + 1 == s.levels) return 1;
  const std::size_t fan = (s.branching_factor >= 2 && s.split_mask[level]) ? s.branching_factor : 1;
  return 1 + fan * brute_force_segments(s, level + 1);
}

std::size_t brute_force_leaves(const NetworkSpec& s, std::size_t level = 0) {
  if (level + 1 == s.levels) return 1;
  const std::size_t fan = (s.branching_factor >= 2 && s.split_mask[level]) ? s.branching_factor : 1;
  return fan * brute_force_leaves(s, level + 1);
}

std::size_t leaf_segments(const Segment& seg) {
  if (seg.is_leaf()) return 1;
  std::size_t n = 0;
  for (const auto& c : seg.children) n += leaf_segments(*c);
  return n;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Counting, HeadsExamples) {
  EXPECT_EQ(count_heads(2, 3), 8u);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(count_heads(1, k), 1u);
  EXPECT_EQ(count_heads(3, 2), 9u);
  EXPECT_EQ(count_heads(5, 0), 1u);
}

TEST(Counting, BlocksExamples) {
  EXPECT_EQ(count_blocks(2, 3), 15u);
  EXPECT_EQ(count_blocks(1, 3), 4u);
  EXPECT_EQ(count_blocks(3, 2), 13u);
  EXPECT_EQ(count_blocks(2, 0), 1u);
}

TEST(Build, AllSmallConfigurationsMatchCountingOracles) {
  for (std::size_t n : {1u, 2u, 3u}) {
    for (std::size_t levels : {2u, 3u, 4u}) {
      const std::size_t transitions = levels - 1;
      for (std::size_t bits = 0; bits < (1u << transitions); ++bits) {
        std::vector<bool> mask(transitions);
        for (std::size_t t = 0; t < transitions; ++t) mask[t] = (bits >> t) & 1u;
        const NetworkSpec spec = small_spec(n, levels, mask, 1);
        Rng rng(bits);
        const NetworkTree tree = NetworkTree::build(spec, rng);
        SCOPED_TRACE("N=" + std::to_string(n) + " levels=" + std::to_string(levels) + " mask=" +
                     format_split_mask(mask));
        EXPECT_EQ(tree.num_heads(), count_heads(n, spec.num_splits()));
        EXPECT_EQ(leaf_segments(tree.root()), brute_force_leaves(spec));
        EXPECT_EQ(tree.num_heads(), brute_force_leaves(spec));
        EXPECT_EQ(tree.num_segments(), brute_force_segments(spec));
        if (bits + 1 == (1u << transitions)) EXPECT_EQ(tree.num_segments(), count_blocks(n, levels - 1));
      }
    }
  }
}

TEST(Build, TwoGrowthNetwork) {
  const NetworkSpec spec = small_spec(2, 4, {true, true, true});
  Rng rng(1);
  NetworkTree tree = NetworkTree::build(spec, rng);
  EXPECT_EQ(tree.num_heads(), 8u);
  EXPECT_EQ(tree.num_segments(), 15u);
  Rng brng(2);
  NetworkTree base = NetworkTree::build(spec.baseline(), brng);
  const std::size_t baseline_count = base.parameters().scalar_count();
  for (const auto& h : tree.heads()) EXPECT_EQ(tree.detach_head(h).parameters().scalar_count(), baseline_count);
}

TEST(Build, SingleBranchIsBaselineChain) {
  for (auto mask : {std::vector<bool>{true, true, true}, std::vector<bool>{false, true, false}}) {
    Rng rng(3);
    NetworkTree tree = NetworkTree::build(small_spec(1, 4, mask), rng);
    EXPECT_EQ(tree.num_heads(), 1u);
    EXPECT_EQ(tree.num_segments(), 4u);
    EXPECT_EQ(tree.heads()[0].str(), "root");
  }
}

TEST(Build, PartialMaskFirstTransitionOnly) {
  Rng rng(4);
  NetworkTree tree = NetworkTree::build(small_spec(2, 4, {true, false, false}), rng);
  EXPECT_EQ(tree.num_heads(), 2u);
  EXPECT_EQ(tree.num_segments(), 7u);
}

TEST(Build, HeadOrderIsDepthFirstAscending) {
  Rng rng(5);
  NetworkTree tree = NetworkTree::build(small_spec(2, 4, {true, true, true}), rng);
  std::vector<std::string> ids;
  for (const auto& h : tree.heads()) ids.push_back(h.str());
  EXPECT_EQ(ids, (std::vector<std::string>{"000", "001", "010", "011", "100", "101", "110", "111"}));
  EXPECT_EQ(tree.head_index(HeadId{{1, 0, 1}}), 5u);
  EXPECT_THROW(tree.head_index(HeadId{{2, 0, 0}}), LookupError);
  EXPECT_THROW(tree.head_index(HeadId{{0, 0}}), LookupError);
}

TEST(Build, WidthDoublesPerLevel) {
  NetworkSpec spec;
  EXPECT_EQ(spec.width(0), 64u);
  EXPECT_EQ(spec.width(3), 512u);
  EXPECT_EQ(spec.classifier_features(), 512u);
}

TEST(Build, SegmentAndParameterNames) {
  NetworkSpec spec = small_spec(2, 3, {true, true}, 2, 1);
  spec.activation = nn::ActivationKind::PReLU;
  Rng rng(6);
  NetworkTree tree = NetworkTree::build(spec, rng);
  std::set<std::string> names;
  for (const auto& p : tree.parameters().params) names.insert(p.name);
  for (const char* expected : {"L0/stem.conv.weight", "L0/res0.conv1.weight", "L0/andhra.0.alpha",
                               "L0/andhra.1.alpha", "L1.0/down.conv1.weight", "L1.1/down.shortcut.bn.beta",
                               "L1.1/andhra.1.alpha", "L2.10/fc.weight", "L2.11/fc.bias"})
    EXPECT_TRUE(names.count(expected)) << expected;
}

TEST(Build, ParametersBelongToExactlyOneSegment) {
  Rng rng(7);
  NetworkTree tree = NetworkTree::build(small_spec(3, 3, {true, true}), rng);
  const auto list = tree.parameters();
  std::set<const void*> nodes;
  std::set<std::string> names;
  for (const auto& p : list.params) {
    EXPECT_TRUE(nodes.insert(p.tensor.node().get()).second) << p.name;
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
  }
}

TEST(Build, HeadsUnder) {
  Rng rng(8);
  NetworkTree tree = NetworkTree::build(small_spec(2, 4, {true, true, true}), rng);
  EXPECT_EQ(tree.heads_under("L0/stem.conv.weight"), (std::pair<std::size_t, std::size_t>{0, 8}));
  EXPECT_EQ(tree.heads_under("L1.1/down.conv1.weight"), (std::pair<std::size_t, std::size_t>{4, 8}));
  EXPECT_EQ(tree.heads_under("L2.01/down.conv1.weight"), (std::pair<std::size_t, std::size_t>{2, 4}));
  EXPECT_EQ(tree.heads_under("L3.110/fc.weight"), (std::pair<std::size_t, std::size_t>{6, 7}));
  EXPECT_THROW(tree.heads_under("L9/x"), LookupError);
}

TEST(Build, InvalidSpecs) {
  Rng rng(9);
  NetworkSpec bad = small_spec(2, 4, {true, true});
  EXPECT_THROW(NetworkTree::build(bad, rng), ConfigError);
  NetworkSpec deep = small_spec(2, 5, {true, true, true, true});
  EXPECT_THROW(NetworkTree::build(deep, rng), ConfigError);
  NetworkSpec zero = small_spec(0, 4, {true, true, true});
  EXPECT_THROW(NetworkTree::build(zero, rng), ConfigError);
}

TEST(Spec, TextRoundTrip) {
  NetworkSpec s = small_spec(3, 3, {false, true}, 8, 2);
  s.activation = nn::ActivationKind::PReLU;
  EXPECT_EQ(NetworkSpec::from_text(s.to_text()), s);
  EXPECT_THROW(NetworkSpec::from_text("bogus = 1\n"), ConfigError);
  EXPECT_EQ(parse_split_mask("1,0,1"), (std::vector<bool>{true, false, true}));
  EXPECT_EQ(format_split_mask({true, false}), "1,0");
}

TEST(Spec, MissingMaskMeansFullSplit) {
  const NetworkSpec s = NetworkSpec::from_text("levels = 3\nbranching_factor = 2\n");
  EXPECT_EQ(s.split_mask, (std::vector<bool>{true, true}));
  EXPECT_EQ(s.num_heads(), 4u);
}

TEST(Forward, WrongShapeIsDimensionError) {
  Rng rng(10);
  NetworkTree tree = NetworkTree::build(small_spec(2, 2, {true}), rng);
  EXPECT_THROW(tree.forward_all_heads(Tensor::zeros({1, 3, 16, 16}), Mode::Eval), DimensionError);
  EXPECT_THROW(tree.forward_all_heads(Tensor::zeros({1, 1, 32, 32}), Mode::Eval), DimensionError);
}

TEST(Forward, SymmetricReluTreeGivesIdenticalHeads) {
  Rng rng(11);
  NetworkTree tree = NetworkTree::build(small_spec(2, 4, {true, true, true}, 2, 1), rng,
                                        InitMode::SymmetricSiblings);
  Rng data(12);
  const Tensor x = random_tensor({3, 3, 32, 32}, data, 1.0, false);
  for (auto mode : {Mode::Train, Mode::Eval}) {
    const auto logits = tree.forward_all_heads(x, mode);
    ASSERT_EQ(logits.size(), 8u);
    for (const auto& l : logits) {
      EXPECT_EQ(l.shape(), (Shape{3, 3}));
      EXPECT_TRUE(bitwise_equal(l, logits[0]));
    }
  }
}

TEST(Forward, IndependentInitGivesDistinctHeads) {
  Rng rng(13);
  NetworkTree tree = NetworkTree::build(small_spec(2, 3, {true, true}), rng);
  Rng data(14);
  const auto logits = tree.forward_all_heads(random_tensor({2, 3, 32, 32}, data, 1.0, false), Mode::Eval);
  EXPECT_FALSE(bitwise_equal(logits[0], logits[1]));
}

TEST(Forward, SingleBranchTreeMatchesHandAssembledChain) {
  for (auto kind : {nn::ActivationKind::ReLU, nn::ActivationKind::PReLU}) {
    NetworkSpec spec = small_spec(1, 3, {true, true}, 3, 1);
    spec.activation = kind;
    Rng rng(15);
    NetworkTree tree = NetworkTree::build(spec, rng);

    Rng other(99);
    nn::Stem stem(3, 3, other);
    nn::ResBlock r0(3, other);
    nn::Activation a0(kind, 3);
    nn::ResBlockP d1(3, 6, 2, other);
    nn::ResBlock r1(6, other);
    nn::Activation a1(kind, 6);
    nn::ResBlockP d2(6, 12, 2, other);
    nn::ResBlock r2(12, other);
    nn::Linear fc(spec.classifier_features(), 3, other);
    nn::ParameterList chain;
    stem.collect("L0/stem", chain);
    r0.collect("L0/res0", chain);
    a0.collect("L0/act", chain);
    d1.collect("L1/down", chain);
    r1.collect("L1/res0", chain);
    a1.collect("L1/act", chain);
    d2.collect("L2/down", chain);
    r2.collect("L2/res0", chain);
    fc.collect("L2/fc", chain);

    std::map<std::string, Tensor> src;
    for (const auto& p : tree.parameters().params) src.emplace(p.name, p.tensor);
    ASSERT_EQ(src.size(), chain.params.size());
    Rng jitter(16);
    for (auto& p : chain.params) {
      Tensor from = src.at(p.name);
      for (auto& v : from.data()) v += 0.1 * jitter.normal();
      std::copy(from.data().begin(), from.data().end(), p.tensor.data().begin());
    }

    Rng data(17);
    const Tensor x = random_tensor({2, 3, 32, 32}, data, 1.0, false);
    const Tensor tree_logits = tree.forward_all_heads(x, Mode::Train)[0];
    Tensor h = r0.forward(stem.forward(x, Mode::Train), Mode::Train);
    h = r1.forward(d1.forward(a0.forward(h), Mode::Train), Mode::Train);
    h = r2.forward(d2.forward(a1.forward(h), Mode::Train), Mode::Train);
    const Tensor chain_logits = fc.forward(flatten(avgpool2d(relu(h), 4)));
    EXPECT_LT(max_abs_diff(tree_logits, chain_logits), 1e-12);
  }
}

TEST(Detach, LogitsMatchTreeHeadOn100Inputs) {
  NetworkSpec spec = small_spec(2, 3, {true, true}, 2, 1);
  spec.activation = nn::ActivationKind::PReLU;
  Rng rng(18);
  NetworkTree tree = NetworkTree::build(spec, rng);
  Rng stats(19);
  for (auto& b : tree.parameters().buffers)
    for (std::size_t c = 0; c < b.stats->mean.size(); ++c) {
      b.stats->mean[c] = 0.1 * stats.normal();
      b.stats->var[c] = 0.5 + stats.uniform();
    }
  for (auto& p : tree.parameters().params)
    if (p.name.find("alpha") != std::string::npos)
      for (auto& v : p.tensor.data()) v = stats.uniform();

  Rng data(20);
  const Tensor x = random_tensor({100, 3, 32, 32}, data, 1.0, false);
  const auto all = tree.forward_all_heads(x, Mode::Eval);
  for (std::size_t h = 0; h < tree.num_heads(); ++h) {
    NetworkTree single = tree.detach_head(tree.heads()[h]);
    EXPECT_EQ(single.num_heads(), 1u);
    EXPECT_EQ(single.spec(), spec.baseline());
    const Tensor logits = single.forward_all_heads(x, Mode::Eval)[0];
    EXPECT_LT(max_abs_diff(logits, all[h]), 1e-12) << "head " << h;
  }
}

TEST(Detach, ParameterCountEqualsBaseline) {
  for (std::size_t n : {2u, 3u}) {
    NetworkSpec spec = small_spec(n, 4, {true, false, true}, 2, 1);
    spec.activation = nn::ActivationKind::PReLU;
    Rng rng(21);
    NetworkTree tree = NetworkTree::build(spec, rng);
    Rng brng(22);
    NetworkTree base = NetworkTree::build(spec.baseline(), brng);
    for (const auto& h : tree.heads()) {
      NetworkTree single = tree.detach_head(h);
      EXPECT_EQ(single.parameters().scalar_count(), base.parameters().scalar_count());
      EXPECT_EQ(single.parameters().params.size(), base.parameters().params.size());
    }
  }
}

TEST(Detach, SymmetricTreeHeadsAreInterchangeable) {
  Rng rng(23);
  NetworkTree tree = NetworkTree::build(small_spec(2, 3, {true, true}), rng, InitMode::SymmetricSiblings);
  Rng data(24);
  const Tensor x = random_tensor({4, 3, 32, 32}, data, 1.0, false);
  const Tensor ref = tree.detach_head(tree.heads()[0]).forward_all_heads(x, Mode::Eval)[0];
  for (const auto& h : tree.heads())
    EXPECT_TRUE(bitwise_equal(tree.detach_head(h).forward_all_heads(x, Mode::Eval)[0], ref));
}

TEST(Detach, UnknownHeadIsLookupError) {
  Rng rng(25);
  NetworkTree tree = NetworkTree::build(small_spec(2, 2, {true}), rng);
  EXPECT_THROW(tree.detach_head(HeadId{{2}}), LookupError);
  EXPECT_THROW(tree.detach_head(HeadId{}), LookupError);
}
