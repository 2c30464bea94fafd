#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "andhra/ops.hpp"
#include "andhra/rng.hpp"
#include "andhra/tensor.hpp"

namespace andhra::nn {

enum class ActivationKind { ReLU, PReLU };

std::string to_string(ActivationKind kind);
ActivationKind parse_activation(const std::string& text);

inline constexpr double kPReLUInit = 0.25;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct NamedStats {
  std::string name;
  BatchNormStats* stats;
};

// Flat, ordered view of a module tree's learnable tensors and batch-norm
// buffers. Order is construction order and is stable across builds.
struct ParameterList {
  std::vector<NamedTensor> params;
  std::vector<NamedStats> buffers;

  std::vector<Tensor> tensors() const;
  std::size_t scalar_count() const;
};

class Conv2d {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t padding, Rng& rng);

  Tensor forward(const Tensor& x) const { return conv2d(x, weight, stride_, padding_); }
  void collect(const std::string& prefix, ParameterList& out);

  Tensor weight;

 private:
  std::size_t stride_;
  std::size_t padding_;
};

class BatchNorm2d {
 public:
  explicit BatchNorm2d(std::size_t channels);

  Tensor forward(const Tensor& x, Mode mode) { return batchnorm2d(x, gamma, beta, stats, mode); }
  void collect(const std::string& prefix, ParameterList& out);

  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
};

class Activation {
 public:
  Activation(ActivationKind kind, std::size_t channels);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out);
  ActivationKind kind() const { return kind_; }

  Tensor alpha;  // undefined for ReLU

 private:
  ActivationKind kind_;
};

// Splits one signal into N branches, each through its own activation
// instance. Outputs never share storage, so gradients from every branch
// meet additively at the input.
class Andhra {
 public:
  Andhra(std::size_t branching_factor, ActivationKind kind, std::size_t channels);

  std::vector<Tensor> forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out);
  std::size_t branching_factor() const { return branches.size(); }

  std::vector<Activation> branches;
};

// conv3x3 -> BN -> ReLU -> conv3x3 -> BN, plus identity. No activation
// after the sum.
class ResBlock {
 public:
  ResBlock(std::size_t channels, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode);
  void collect(const std::string& prefix, ParameterList& out);

  Conv2d conv1;
  BatchNorm2d bn1;
  Conv2d conv2;
  BatchNorm2d bn2;
};

// Downsampling residual block: the residual path widens and strides, the
// shortcut is a strided 1x1 conv with BN, and a ReLU follows the sum.
class ResBlockP {
 public:
  ResBlockP(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode);
  void collect(const std::string& prefix, ParameterList& out);

  Conv2d conv1;
  BatchNorm2d bn1;
  Conv2d conv2;
  BatchNorm2d bn2;
  Conv2d shortcut_conv;
  BatchNorm2d shortcut_bn;
};

// conv3x3 (3 -> width) -> BN -> ReLU.
class Stem {
 public:
  Stem(std::size_t in_channels, std::size_t width, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode);
  void collect(const std::string& prefix, ParameterList& out);

  Conv2d conv;
  BatchNorm2d bn;
};

class Linear {
 public:
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng);

  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList& out);

  Tensor weight;
  Tensor bias;
};

// He-normal draw with fan-in scaling.
Tensor he_normal(const Shape& shape, std::size_t fan_in, Rng& rng);

}  // namespace andhra::nn
