#include "andhra/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "andhra/error.hpp"

namespace andhra {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.dim() != rank)
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

struct ConvGeometry {
  std::size_t batch, in_ch, height, width, out_ch, kernel, stride, pad, out_h, out_w;

  std::size_t col_rows() const { return in_ch * kernel * kernel; }
  std::size_t plane() const { return out_h * out_w; }
  std::size_t in_image() const { return in_ch * height * width; }
  std::size_t out_image() const { return out_ch * plane(); }
  std::size_t chunk() const { return std::clamp<std::size_t>(2048 / plane(), 1, batch); }
};

// Images [b0, b0 + n): cols[(c*K + ki)*K + kj][(b - b0)*Ho*Wo + oy*Wo + ox].
void im2col(const double* in, const ConvGeometry& g, std::size_t b0, std::size_t n, double* cols) {
  const std::size_t plane = g.plane();
  const std::size_t ncols = n * plane;
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t b = 0; b < n; ++b) {
          const double* src = in + ((b0 + b) * g.in_ch + c) * g.height * g.width;
          double* dst = row + b * plane;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            double* drow = dst + oy * g.out_w;
            if (iy < 0 || iy >= static_cast<long>(g.height)) {
              std::fill(drow, drow + g.out_w, 0.0);
              continue;
            }
            const double* srow = src + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
              drow[ox] = (ix < 0 || ix >= static_cast<long>(g.width))
                             ? 0.0
                             : srow[static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, std::size_t b0, std::size_t n, double* in_grad) {
  const std::size_t plane = g.plane();
  const std::size_t ncols = n * plane;
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t b = 0; b < n; ++b) {
          double* dst = in_grad + ((b0 + b) * g.in_ch + c) * g.height * g.width;
          const double* src = row + b * plane;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
            double* drow = dst + static_cast<std::size_t>(iy) * g.width;
            const double* srow = src + oy * g.out_w;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
              drow[static_cast<std::size_t>(ix)] += srow[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (stride == 0) throw ContractViolation("conv2d: stride must be positive");
  ConvGeometry g{};
  g.batch = input.size(0);
  g.in_ch = input.size(1);
  g.height = input.size(2);
  g.width = input.size(3);
  g.out_ch = weight.size(0);
  g.kernel = weight.size(2);
  g.stride = stride;
  g.pad = padding;
  if (weight.size(1) != g.in_ch)
    throw DimensionError("conv2d: input has " + std::to_string(g.in_ch) +
                         " channels but weight expects " + std::to_string(weight.size(1)));
  if (weight.size(3) != g.kernel) throw DimensionError("conv2d: kernel must be square");
  if (g.height + 2 * padding < g.kernel || g.width + 2 * padding < g.kernel)
    throw DimensionError("conv2d: kernel larger than padded input");
  if (g.batch == 0) throw DimensionError("conv2d: empty batch");
  g.out_h = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel) / stride + 1;

  const std::size_t rows = g.col_rows();
  const std::size_t plane = g.plane();
  const std::size_t chunk = g.chunk();
  const ConstMatMap w(weight.data().data(), g.out_ch, rows);

  std::vector<double> cols(rows * chunk * plane);
  RowMat prod(g.out_ch, chunk * plane);
  std::vector<double> out(g.batch * g.out_image());
  for (std::size_t b0 = 0; b0 < g.batch; b0 += chunk) {
    const std::size_t n = std::min(chunk, g.batch - b0);
    const std::size_t ncols = n * plane;
    im2col(input.data().data(), g, b0, n, cols.data());
    auto block = prod.leftCols(ncols);
    block.noalias() = w * ConstMatMap(cols.data(), rows, ncols);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t co = 0; co < g.out_ch; ++co)
        std::copy_n(prod.data() + co * prod.cols() + b * plane, plane,
                    out.data() + (b0 + b) * g.out_image() + co * plane);
  }

  return Tensor::make_result(
      {g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), {input, weight},
      [g](detail::TensorNode& self) {
        auto& in_node = *self.parents[0];
        auto& w_node = *self.parents[1];
        const std::size_t rows = g.col_rows();
        const std::size_t plane = g.plane();
        const std::size_t chunk = g.chunk();
        const ConstMatMap w(w_node.data.data(), g.out_ch, rows);

        std::vector<double> cols(rows * chunk * plane);
        std::vector<double> dmat(g.out_ch * chunk * plane);
        for (std::size_t b0 = 0; b0 < g.batch; b0 += chunk) {
          const std::size_t n = std::min(chunk, g.batch - b0);
          const std::size_t ncols = n * plane;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t co = 0; co < g.out_ch; ++co)
              std::copy_n(self.grad.data() + (b0 + b) * g.out_image() + co * plane, plane,
                          dmat.data() + co * ncols + b * plane);
          const ConstMatMap dy(dmat.data(), g.out_ch, ncols);
          if (w_node.requires_grad) {
            im2col(in_node.data.data(), g, b0, n, cols.data());
            MatMap(w_node.grad_buffer().data(), g.out_ch, rows).noalias() +=
                dy * ConstMatMap(cols.data(), rows, ncols).transpose();
          }
          if (in_node.requires_grad) {
            MatMap(cols.data(), rows, ncols).noalias() = w.transpose() * dy;
            col2im_add(cols.data(), g, b0, n, in_node.grad_buffer().data());
          }
        }
      });
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, Mode mode, double momentum, double eps) {
  require_rank(input, 4, "batchnorm2d input");
  const std::size_t B = input.size(0), C = input.size(1), HW = input.size(2) * input.size(3);
  if (gamma.numel() != C || beta.numel() != C)
    throw DimensionError("batchnorm2d: gamma/beta must have " + std::to_string(C) + " entries");
  if (stats.mean.size() != C || stats.var.size() != C)
    throw DimensionError("batchnorm2d: running statistics sized for a different channel count");
  const std::size_t M = B * HW;
  const bool train = mode == Mode::Train;
  if (train && M < 2) throw ContractViolation("batchnorm2d: train mode needs B*H*W >= 2");

  const auto x = input.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<double> xhat(x.size());
  std::vector<double> invstd(C);
  std::vector<double> out(x.size());

  for (std::size_t c = 0; c < C; ++c) {
    double mu, var;
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = x.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      mu = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = x.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(M);
      stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mu;
      stats.var[c] = (1.0 - momentum) * stats.var[c] +
                     momentum * var * static_cast<double>(M) / static_cast<double>(M - 1);
    } else {
      mu = stats.mean[c];
      var = stats.var[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    invstd[c] = is;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const double h = (x[off + i] - mu) * is;
        xhat[off + i] = h;
        out[off + i] = gm[c] * h + bt[c];
      }
    }
  }

  return Tensor::make_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [B, C, HW, M, train, xhat = std::move(xhat), invstd = std::move(invstd)](
          detail::TensorNode& self) {
        auto& in_node = *self.parents[0];
        auto& g_node = *self.parents[1];
        auto& b_node = *self.parents[2];
        const double* dy = self.grad.data();
        for (std::size_t c = 0; c < C; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t off = (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * xhat[off + i];
            }
          }
          if (g_node.requires_grad) g_node.grad_buffer()[c] += sum_dy_xhat;
          if (b_node.requires_grad) b_node.grad_buffer()[c] += sum_dy;
          if (!in_node.requires_grad) continue;
          auto& dx = in_node.grad_buffer();
          const double k = g_node.data[c] * invstd[c];
          if (train) {
            const double inv_m = 1.0 / static_cast<double>(M);
            for (std::size_t b = 0; b < B; ++b) {
              const std::size_t off = (b * C + c) * HW;
              for (std::size_t i = 0; i < HW; ++i)
                dx[off + i] += k * (dy[off + i] - inv_m * sum_dy -
                                    inv_m * xhat[off + i] * sum_dy_xhat);
            }
          } else {
            for (std::size_t b = 0; b < B; ++b) {
              const std::size_t off = (b * C + c) * HW;
              for (std::size_t i = 0; i < HW; ++i) dx[off + i] += k * dy[off + i];
            }
          }
        }
      });
}

Tensor relu(const Tensor& input) {
  const auto x = input.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return Tensor::make_result(input.shape(), std::move(out), {input},
                             [](detail::TensorNode& self) {
                               auto& in = *self.parents[0];
                               auto& dx = in.grad_buffer();
                               for (std::size_t i = 0; i < dx.size(); ++i)
                                 if (in.data[i] > 0.0) dx[i] += self.grad[i];
                             });
}

Tensor prelu(const Tensor& input, const Tensor& alpha) {
  if (input.dim() < 2) throw DimensionError("prelu: input needs a channel axis");
  const std::size_t B = input.size(0), C = input.size(1);
  const std::size_t inner = input.numel() / (B * C);
  if (alpha.numel() != C)
    throw DimensionError("prelu: " + std::to_string(alpha.numel()) + " slopes for " +
                         std::to_string(C) + " channels");
  const auto x = input.data();
  const auto a = alpha.data();
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (b * C + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = x[off + i];
        out[off + i] = v > 0.0 ? v : a[c] * v;
      }
    }
  return Tensor::make_result(
      input.shape(), std::move(out), {input, alpha},
      [B, C, inner](detail::TensorNode& self) {
        auto& in = *self.parents[0];
        auto& al = *self.parents[1];
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = (b * C + c) * inner;
            double da = 0.0;
            for (std::size_t i = 0; i < inner; ++i) {
              const double v = in.data[off + i];
              const double g = self.grad[off + i];
              if (v > 0.0) {
                if (in.requires_grad) in.grad_buffer()[off + i] += g;
              } else {
                if (in.requires_grad) in.grad_buffer()[off + i] += al.data[c] * g;
                da += g * v;
              }
            }
            if (al.requires_grad) al.grad_buffer()[c] += da;
          }
      });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t B = input.size(0), F = input.size(1), O = weight.size(0);
  if (weight.size(1) != F)
    throw DimensionError("linear: input has " + std::to_string(F) + " features but weight expects " +
                         std::to_string(weight.size(1)));
  if (bias.numel() != O) throw DimensionError("linear: bias must have " + std::to_string(O) + " entries");

  RowMat out(B, O);
  out.noalias() = ConstMatMap(input.data().data(), B, F) *
                  ConstMatMap(weight.data().data(), O, F).transpose();
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), O);
  std::vector<double> values(out.data(), out.data() + B * O);

  return Tensor::make_result({B, O}, std::move(values), {input, weight, bias},
                             [B, F, O](detail::TensorNode& self) {
                               auto& in = *self.parents[0];
                               auto& w = *self.parents[1];
                               auto& bs = *self.parents[2];
                               ConstMatMap dy(self.grad.data(), B, O);
                               if (in.requires_grad)
                                 MatMap(in.grad_buffer().data(), B, F).noalias() +=
                                     dy * ConstMatMap(w.data.data(), O, F);
                               if (w.requires_grad)
                                 MatMap(w.grad_buffer().data(), O, F).noalias() +=
                                     dy.transpose() * ConstMatMap(in.data.data(), B, F);
                               if (bs.requires_grad) {
                                 auto& db = bs.grad_buffer();
                                 for (std::size_t b = 0; b < B; ++b)
                                   for (std::size_t o = 0; o < O; ++o) db[o] += dy(b, o);
                               }
                             });
}

Tensor avgpool2d(const Tensor& input, std::size_t k) {
  require_rank(input, 4, "avgpool2d input");
  if (k == 0) throw ContractViolation("avgpool2d: kernel must be positive");
  const std::size_t B = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
  if (H % k != 0 || W % k != 0)
    throw DimensionError("avgpool2d: kernel " + std::to_string(k) + " does not divide " +
                         shape_str(input.shape()));
  const std::size_t Ho = H / k, Wo = W / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  const auto x = input.data();
  std::vector<double> out(B * C * Ho * Wo, 0.0);
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) s += x[(bc * H + oy * k + i) * W + ox * k + j];
        out[(bc * Ho + oy) * Wo + ox] = s * inv;
      }
  return Tensor::make_result({B, C, Ho, Wo}, std::move(out), {input},
                             [B, C, H, W, Ho, Wo, k, inv](detail::TensorNode& self) {
                               auto& dx = self.parents[0]->grad_buffer();
                               for (std::size_t bc = 0; bc < B * C; ++bc)
                                 for (std::size_t oy = 0; oy < Ho; ++oy)
                                   for (std::size_t ox = 0; ox < Wo; ++ox) {
                                     const double g = self.grad[(bc * Ho + oy) * Wo + ox] * inv;
                                     for (std::size_t i = 0; i < k; ++i)
                                       for (std::size_t j = 0; j < k; ++j)
                                         dx[(bc * H + oy * k + i) * W + ox * k + j] += g;
                                   }
                             });
}

std::vector<double> softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax logits");
  const std::size_t B = logits.size(0), K = logits.size(1);
  const auto z = logits.data();
  std::vector<double> p(B * K);
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = z.data() + b * K;
    const double m = *std::max_element(row, row + K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      p[b * K + k] = std::exp(row[k] - m);
      s += p[b * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) p[b * K + k] /= s;
  }
  return p;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_rank(logits, 2, "cross-entropy logits");
  const std::size_t B = logits.size(0), K = logits.size(1);
  if (targets.size() != B)
    throw DimensionError("cross-entropy: " + std::to_string(targets.size()) + " targets for batch of " +
                         std::to_string(B));
  for (std::size_t b = 0; b < B; ++b)
    if (targets[b] < 0 || static_cast<std::size_t>(targets[b]) >= K)
      throw IndexError("cross-entropy: target " + std::to_string(targets[b]) + " outside [0," +
                       std::to_string(K) + ")");
  const auto z = logits.data();
  std::vector<double> probs(B * K);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = z.data() + b * K;
    const double m = *std::max_element(row, row + K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      probs[b * K + k] = std::exp(row[k] - m);
      s += probs[b * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) probs[b * K + k] /= s;
    total += (m + std::log(s)) - row[targets[b]];
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return Tensor::make_result({1}, {total / static_cast<double>(B)}, {logits},
                             [B, K, probs = std::move(probs), tgt = std::move(tgt)](
                                 detail::TensorNode& self) {
                               auto& dz = self.parents[0]->grad_buffer();
                               const double g = self.grad[0] / static_cast<double>(B);
                               for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t k = 0; k < K; ++k) {
                                   const double onehot =
                                       static_cast<std::size_t>(tgt[b]) == k ? 1.0 : 0.0;
                                   dz[b * K + k] += g * (probs[b * K + k] - onehot);
                                 }
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& d = pa.grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& d = pb.grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](detail::TensorNode& self) {
    auto& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * factor;
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s}, {a}, [](detail::TensorNode& self) {
    auto& d = self.parents[0]->grad_buffer();
    for (auto& v : d) v += self.grad[0];
  });
}

Tensor mean_of(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw ContractViolation("mean_of: empty list");
  for (const auto& s : scalars)
    if (s.numel() != 1) throw DimensionError("mean_of: expected scalars, got " + shape_str(s.shape()));
  const double coeff = 1.0 / static_cast<double>(scalars.size());
  double s = 0.0;
  for (const auto& t : scalars) s += t.item();
  return Tensor::make_result({1}, {coeff * s}, scalars, [coeff](detail::TensorNode& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer()[0] += coeff * self.grad[0];
  });
}

Tensor flatten(const Tensor& input) {
  if (input.dim() < 1) throw DimensionError("flatten: empty shape");
  const std::size_t B = input.size(0);
  const std::size_t rest = input.numel() / B;
  const auto x = input.data();
  return Tensor::make_result({B, rest}, std::vector<double>(x.begin(), x.end()), {input},
                             [](detail::TensorNode& self) {
                               auto& d = self.parents[0]->grad_buffer();
                               for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
                             });
}

}  // namespace andhra
