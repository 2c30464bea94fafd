#include "andhra/ensemble.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <numeric>

#include "andhra/error.hpp"

namespace andhra {
namespace {

void require_heads(const HeadPredictions& p) {
  if (p.heads == 0 || p.classes == 0) throw ContractViolation("combiner needs at least one head and class");
  if (p.probs.size() != p.heads * p.samples * p.classes)
    throw DimensionError("HeadPredictions storage does not match its extents");
}

// First index of the maximum.
int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Correctly rounded sum (Shewchuk's non-overlapping partials with a
// half-way correction on the final rounding). The result depends only on the
// multiset of terms, and doubling every term doubles it exactly.
double canonical_sum(const std::vector<double>& terms) {
  std::vector<double> partials;
  for (double x : terms) {
    std::size_t used = 0;
    for (std::size_t j = 0; j < partials.size(); ++j) {
      double y = partials[j];
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[used++] = lo;
      x = hi;
    }
    partials.resize(used);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size() - 1;
  double hi = partials[n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

}  // namespace

std::vector<int> HeadPredictions::head_argmax() const {
  std::vector<int> out(heads * samples);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t b = 0; b < samples; ++b) out[h * samples + b] = argmax(row(h, b));
  return out;
}

bool HeadPredictions::is_valid(double tol) const {
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t b = 0; b < samples; ++b) {
      double s = 0.0;
      for (double v : row(h, b)) {
        if (!(v >= 0.0)) return false;
        s += v;
      }
      if (std::abs(s - 1.0) > tol) return false;
    }
  return true;
}

std::string to_string(CombinerKind kind) {
  switch (kind) {
    case CombinerKind::MajorityVote: return "majority";
    case CombinerKind::AverageProb: return "avgprob";
    case CombinerKind::ProductOfExperts: return "poe";
    case CombinerKind::RankVote: return "rank";
  }
  return "?";
}

CombinerKind parse_combiner(const std::string& name) {
  for (auto k : all_combiners())
    if (to_string(k) == name) return k;
  throw ConfigError("unknown combiner '" + name + "' (expected majority|avgprob|poe|rank)");
}

std::vector<CombinerKind> all_combiners() {
  return {CombinerKind::MajorityVote, CombinerKind::AverageProb, CombinerKind::ProductOfExperts,
          CombinerKind::RankVote};
}

std::vector<int> majority_vote(const HeadPredictions& preds) {
  require_heads(preds);
  const auto votes = preds.head_argmax();
  std::vector<int> out(preds.samples);
  std::vector<std::size_t> tally(preds.classes);
  for (std::size_t b = 0; b < preds.samples; ++b) {
    std::fill(tally.begin(), tally.end(), 0);
    for (std::size_t h = 0; h < preds.heads; ++h) ++tally[static_cast<std::size_t>(votes[h * preds.samples + b])];
    out[b] = static_cast<int>(std::max_element(tally.begin(), tally.end()) - tally.begin());
  }
  return out;
}

std::vector<int> average_prob(const HeadPredictions& preds) {
  require_heads(preds);
  std::vector<int> out(preds.samples);
  // The head mean is the total over 1/H; the positive scale leaves the argmax
  // unchanged and is skipped so that no extra rounding can merge classes.
  std::vector<double> total(preds.classes);
  std::vector<double> terms(preds.heads);
  for (std::size_t b = 0; b < preds.samples; ++b) {
    for (std::size_t k = 0; k < preds.classes; ++k) {
      for (std::size_t h = 0; h < preds.heads; ++h) terms[h] = preds.at(h, b, k);
      total[k] = canonical_sum(terms);
    }
    out[b] = argmax(total);
  }
  return out;
}

std::vector<int> product_of_experts(const HeadPredictions& preds, double eps) {
  require_heads(preds);
  if (!(eps > 0.0)) throw ContractViolation("product_of_experts: eps must be positive");
  std::vector<int> out(preds.samples);
  std::vector<double> score(preds.classes);
  std::vector<double> terms(preds.heads);
  for (std::size_t b = 0; b < preds.samples; ++b) {
    for (std::size_t k = 0; k < preds.classes; ++k) {
      for (std::size_t h = 0; h < preds.heads; ++h) terms[h] = std::log(preds.at(h, b, k) + eps);
      score[k] = canonical_sum(terms);
    }
    out[b] = argmax(score);
  }
  return out;
}

std::vector<int> rank_vote(const HeadPredictions& preds) {
  require_heads(preds);
  using boost::multiprecision::cpp_int;
  // Reciprocal ranks are summed exactly as integers over lcm(1..K); rank
  // scores tie often and floating point would split those ties by summation
  // order.
  cpp_int denom = 1;
  for (std::size_t r = 2; r <= preds.classes; ++r) denom = boost::multiprecision::lcm(denom, cpp_int(r));
  std::vector<cpp_int> weight(preds.classes);
  for (std::size_t r = 0; r < preds.classes; ++r) weight[r] = denom / (r + 1);

  std::vector<int> out(preds.samples);
  std::vector<cpp_int> score(preds.classes);
  std::vector<std::size_t> order(preds.classes);
  for (std::size_t b = 0; b < preds.samples; ++b) {
    for (auto& s : score) s = 0;
    for (std::size_t h = 0; h < preds.heads; ++h) {
      const auto r = preds.row(h, b);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return r[a] > r[c]; });
      for (std::size_t pos = 0; pos < order.size(); ++pos) score[order[pos]] += weight[pos];
    }
    out[b] = static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
  }
  return out;
}

std::vector<int> combine(CombinerKind kind, const HeadPredictions& preds) {
  switch (kind) {
    case CombinerKind::MajorityVote: return majority_vote(preds);
    case CombinerKind::AverageProb: return average_prob(preds);
    case CombinerKind::ProductOfExperts: return product_of_experts(preds);
    case CombinerKind::RankVote: return rank_vote(preds);
  }
  throw ContractViolation("unknown combiner");
}

double accuracy_percent(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw DimensionError("accuracy: length mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace andhra
