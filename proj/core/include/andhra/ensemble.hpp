#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace andhra {

// Per-head softmax outputs, laid out [head][sample][class].
struct HeadPredictions {
  std::size_t heads = 0;
  std::size_t samples = 0;
  std::size_t classes = 0;
  std::vector<double> probs;

  HeadPredictions() = default;
  HeadPredictions(std::size_t h, std::size_t b, std::size_t k)
      : heads(h), samples(b), classes(k), probs(h * b * k, 0.0) {}

  double at(std::size_t h, std::size_t b, std::size_t k) const {
    return probs[(h * samples + b) * classes + k];
  }
  double& at(std::size_t h, std::size_t b, std::size_t k) {
    return probs[(h * samples + b) * classes + k];
  }
  std::span<const double> row(std::size_t h, std::size_t b) const {
    return {probs.data() + (h * samples + b) * classes, classes};
  }

  // Argmax per head and sample, ties to the smaller class index. [h][b].
  std::vector<int> head_argmax() const;
  // Rows sum to 1 within tol and entries are non-negative.
  bool is_valid(double tol = 1e-9) const;
};

enum class CombinerKind { MajorityVote, AverageProb, ProductOfExperts, RankVote };

inline constexpr double kPoeEpsilon = 1e-12;

std::string to_string(CombinerKind kind);  // majority | avgprob | poe | rank
CombinerKind parse_combiner(const std::string& name);
std::vector<CombinerKind> all_combiners();

// Mode of the per-head argmaxes; ties go to the smallest class.
std::vector<int> majority_vote(const HeadPredictions& preds);
// argmax_c of the head-mean probability.
std::vector<int> average_prob(const HeadPredictions& preds);
// argmax_c of sum_i log(p_i[c] + eps). The outer exp of the product form is
// monotone and therefore dropped.
std::vector<int> product_of_experts(const HeadPredictions& preds, double eps = kPoeEpsilon);
// argmax_c of sum_i 1 / rank_i(c), rank 1 = most probable class of head i,
// equal probabilities ranked by class index.
std::vector<int> rank_vote(const HeadPredictions& preds);

std::vector<int> combine(CombinerKind kind, const HeadPredictions& preds);

// Percentage of predictions equal to the labels.
double accuracy_percent(std::span<const int> predicted, std::span<const int> labels);

}  // namespace andhra
