#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "andhra/tensor.hpp"

namespace andhra {

// Cross-correlation without bias. input [B,Cin,H,W], weight [Cout,Cin,K,K].
Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding);

// Per-channel running statistics owned by a batch-norm layer. A fresh
// instance (mean 0, var 1) is what eval mode uses before any training step.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels) : mean(channels, 0.0), var(channels, 1.0) {}
};

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Train mode normalises with biased batch variance and folds the batch
// statistics into `stats` (unbiased variance, momentum 0.1). Eval mode reads
// `stats` only.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, Mode mode,
                   double momentum = kBatchNormMomentum, double eps = kBatchNormEps);

Tensor relu(const Tensor& input);

// Channel axis is 1; alpha holds one slope per channel.
Tensor prelu(const Tensor& input, const Tensor& alpha);

// input [B,F], weight [O,F], bias [O].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Non-overlapping k x k mean pooling; k must divide H and W.
Tensor avgpool2d(const Tensor& input, std::size_t k);

// Mean over the batch of -log softmax(logits)[target].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
// (1/n) * sum of n scalar tensors.
Tensor mean_of(const std::vector<Tensor>& scalars);
// [B, ...] -> [B, prod(...)].
Tensor flatten(const Tensor& input);

// Row-wise softmax of [B,K] logits; plain values, no graph.
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace andhra
