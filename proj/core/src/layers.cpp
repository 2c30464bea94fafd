#include "andhra/layers.hpp"

#include <cmath>

#include "andhra/error.hpp"

namespace andhra::nn {

std::string to_string(ActivationKind kind) {
  return kind == ActivationKind::ReLU ? "relu" : "prelu";
}

ActivationKind parse_activation(const std::string& text) {
  if (text == "relu") return ActivationKind::ReLU;
  if (text == "prelu") return ActivationKind::PReLU;
  throw ConfigError("unknown activation '" + text + "' (expected relu|prelu)");
}

std::vector<Tensor> ParameterList::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

std::size_t ParameterList::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Tensor he_normal(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = stddev * rng.normal();
  return Tensor::from(shape, std::move(values), true);
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding, Rng& rng)
    : weight(he_normal({out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng)),
      stride_(stride),
      padding_(padding) {}

void Conv2d::collect(const std::string& prefix, ParameterList& out) {
  out.params.push_back({prefix + ".weight", weight});
}

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma(Tensor::full({channels}, 1.0, true)),
      beta(Tensor::zeros({channels}, true)),
      stats(channels) {}

void BatchNorm2d::collect(const std::string& prefix, ParameterList& out) {
  out.params.push_back({prefix + ".gamma", gamma});
  out.params.push_back({prefix + ".beta", beta});
  out.buffers.push_back({prefix, &stats});
}

Activation::Activation(ActivationKind kind, std::size_t channels) : kind_(kind) {
  if (kind == ActivationKind::PReLU) alpha = Tensor::full({channels}, kPReLUInit, true);
}

Tensor Activation::forward(const Tensor& x) const {
  return kind_ == ActivationKind::ReLU ? relu(x) : prelu(x, alpha);
}

void Activation::collect(const std::string& prefix, ParameterList& out) {
  if (kind_ == ActivationKind::PReLU) out.params.push_back({prefix + ".alpha", alpha});
}

Andhra::Andhra(std::size_t branching_factor, ActivationKind kind, std::size_t channels) {
  if (branching_factor < 2) throw ContractViolation("ANDHRA needs a branching factor >= 2");
  branches.reserve(branching_factor);
  for (std::size_t i = 0; i < branching_factor; ++i) branches.emplace_back(kind, channels);
}

std::vector<Tensor> Andhra::forward(const Tensor& x) const {
  std::vector<Tensor> outs;
  outs.reserve(branches.size());
  for (const auto& act : branches) outs.push_back(act.forward(x));
  return outs;
}

void Andhra::collect(const std::string& prefix, ParameterList& out) {
  for (std::size_t i = 0; i < branches.size(); ++i)
    branches[i].collect(prefix + "." + std::to_string(i), out);
}

ResBlock::ResBlock(std::size_t channels, Rng& rng)
    : conv1(channels, channels, 3, 1, 1, rng),
      bn1(channels),
      conv2(channels, channels, 3, 1, 1, rng),
      bn2(channels) {}

Tensor ResBlock::forward(const Tensor& x, Mode mode) {
  Tensor out = relu(bn1.forward(conv1.forward(x), mode));
  out = bn2.forward(conv2.forward(out), mode);
  return add(out, x);
}

void ResBlock::collect(const std::string& prefix, ParameterList& out) {
  conv1.collect(prefix + ".conv1", out);
  bn1.collect(prefix + ".bn1", out);
  conv2.collect(prefix + ".conv2", out);
  bn2.collect(prefix + ".bn2", out);
}

ResBlockP::ResBlockP(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng)
    : conv1(in_channels, out_channels, 3, stride, 1, rng),
      bn1(out_channels),
      conv2(out_channels, out_channels, 3, 1, 1, rng),
      bn2(out_channels),
      shortcut_conv(in_channels, out_channels, 1, stride, 0, rng),
      shortcut_bn(out_channels) {}

Tensor ResBlockP::forward(const Tensor& x, Mode mode) {
  Tensor res = relu(bn1.forward(conv1.forward(x), mode));
  res = bn2.forward(conv2.forward(res), mode);
  Tensor sc = shortcut_bn.forward(shortcut_conv.forward(x), mode);
  return relu(add(res, sc));
}

void ResBlockP::collect(const std::string& prefix, ParameterList& out) {
  conv1.collect(prefix + ".conv1", out);
  bn1.collect(prefix + ".bn1", out);
  conv2.collect(prefix + ".conv2", out);
  bn2.collect(prefix + ".bn2", out);
  shortcut_conv.collect(prefix + ".shortcut.conv", out);
  shortcut_bn.collect(prefix + ".shortcut.bn", out);
}

Stem::Stem(std::size_t in_channels, std::size_t width, Rng& rng)
    : conv(in_channels, width, 3, 1, 1, rng), bn(width) {}

Tensor Stem::forward(const Tensor& x, Mode mode) { return relu(bn.forward(conv.forward(x), mode)); }

void Stem::collect(const std::string& prefix, ParameterList& out) {
  conv.collect(prefix + ".conv", out);
  bn.collect(prefix + ".bn", out);
}

Linear::Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
    : weight(he_normal({out_features, in_features}, in_features, rng)),
      bias(Tensor::zeros({out_features}, true)) {}

void Linear::collect(const std::string& prefix, ParameterList& out) {
  out.params.push_back({prefix + ".weight", weight});
  out.params.push_back({prefix + ".bias", bias});
}

}  // namespace andhra::nn
