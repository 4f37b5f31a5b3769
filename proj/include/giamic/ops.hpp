#pragma once

// Differentiable primitives. Everything is 2-D (rows = time, cols = features)
// except conv kernels, which are [ksize x c_in x c_out].

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "giamic/errors.hpp"
#include "giamic/tensor.hpp"

namespace giamic {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

template <typename T>
void require_2d(const Tensor<T>& x, const char* op) {
  if (!x.defined() || x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-D tensor");
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
Node<T>& parent(Node<T>& self, std::size_t i) {
  return *self.parents[i];
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  if (b.rows() != q) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(p * r);
  detail::MapM<T>(out.data(), p, r).noalias() =
      detail::MapC<T>(a.data().data(), p, q) * detail::MapC<T>(b.data().data(), q, r);
  return make_op<T>("matmul", {p, r}, std::move(out), {a, b}, [p, q, r](detail::Node<T>& self) {
    auto& na = detail::parent(self, 0);
    auto& nb = detail::parent(self, 1);
    detail::MapC<T> dc(self.grad.data(), p, r);
    if (na.requires_grad) {
      detail::MapM<T>(na.grad.data(), p, q).noalias() +=
          dc * detail::MapC<T>(nb.value.data(), q, r).transpose();
    }
    if (nb.requires_grad) {
      detail::MapM<T>(nb.grad.data(), q, r).noalias() +=
          detail::MapC<T>(na.value.data(), p, q).transpose() * dc;
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_2d(x, "transpose");
  const std::size_t p = x.rows(), q = x.cols();
  std::vector<T> out(p * q);
  detail::MapM<T>(out.data(), q, p) = detail::MapC<T>(x.data().data(), p, q).transpose();
  return make_op<T>("transpose", {q, p}, std::move(out), {x}, [p, q](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    detail::MapM<T>(nx.grad.data(), p, q) += detail::MapC<T>(self.grad.data(), q, p).transpose();
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op<T>("add", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& n = detail::parent(self, k);
      if (!n.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) n.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op<T>("sub", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& na = detail::parent(self, 0);
    auto& nb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += self.grad[i];
      if (nb.requires_grad) nb.grad[i] -= self.grad[i];
    }
  });
}

/// Elementwise (Hadamard) product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op<T>("mul", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& na = detail::parent(self, 0);
    auto& nb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += self.grad[i] * nb.value[i];
      if (nb.requires_grad) nb.grad[i] += self.grad[i] * na.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * s;
  return make_op<T>("scale", x.shape(), std::move(out), {x}, [s](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += self.grad[i] * s;
  });
}

/// s - x, elementwise.
template <typename T>
Tensor<T> rsub_scalar(T s, const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s - x.data()[i];
  return make_op<T>("rsub_scalar", x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] -= self.grad[i];
  });
}

/// x[t, :] + b[0, :] for every row t.
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require_2d(x, "add_row");
  const std::size_t t = x.rows(), c = x.cols();
  if (b.numel() != c) {
    throw DimensionError("add_row: bias " + shape_str(b.shape()) + " vs features " +
                         std::to_string(c));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += b.data()[j];
  return make_op<T>("add_row", x.shape(), std::move(out), {x, b}, [t, c](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    auto& nb = detail::parent(self, 1);
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const T g = self.grad[r * c + j];
        if (nx.requires_grad) nx.grad[r * c + j] += g;
        if (nb.requires_grad) nb.grad[j] += g;
      }
    }
  });
}

/// Repeats a 1 x c row t times.
template <typename T>
Tensor<T> broadcast_rows(const Tensor<T>& row, std::size_t t) {
  detail::require_2d(row, "broadcast_rows");
  if (row.rows() != 1) throw DimensionError("broadcast_rows: expected a single row");
  const std::size_t c = row.cols();
  std::vector<T> out(t * c);
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = row.data()[j];
  return make_op<T>("broadcast_rows", {t, c}, std::move(out), {row},
                    [t, c](detail::Node<T>& self) {
                      auto& nx = detail::parent(self, 0);
                      for (std::size_t r = 0; r < t; ++r)
                        for (std::size_t j = 0; j < c; ++j) nx.grad[j] += self.grad[r * c + j];
                    });
}

/// x W + b with b broadcast over rows.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_row(matmul(x, w), b);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    // Branching keeps exp() from overflowing for large |v|.
    out[i] = v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return make_op<T>("sigmoid", x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T s = self.value[i];
      nx.grad[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

/// Parametric ReLU with one learnable slope per feature channel.
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope) {
  detail::require_2d(x, "prelu");
  const std::size_t t = x.rows(), c = x.cols();
  if (slope.numel() != c) throw DimensionError("prelu: slope must have one entry per channel");
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const T v = x.data()[r * c + j];
      out[r * c + j] = v > 0 ? v : slope.data()[j] * v;
    }
  }
  return make_op<T>("prelu", x.shape(), std::move(out), {x, slope}, [t, c](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    auto& ns = detail::parent(self, 1);
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t i = r * c + j;
        const T v = nx.value[i];
        const T g = self.grad[i];
        if (nx.requires_grad) nx.grad[i] += v > 0 ? g : g * ns.value[j];
        if (ns.requires_grad && v <= 0) ns.grad[j] += g * v;
      }
    }
  });
}

/// tanh approximation of GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_op<T>("gelu", x.shape(), std::move(out), {x}, [kC, kA](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = nx.value[i];
      const T th = std::tanh(kC * (v + kA * v * v * v));
      const T dinner = kC * (T(1) + T(3) * kA * v * v);
      const T d = T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * dinner;
      nx.grad[i] += self.grad[i] * d;
    }
  });
}

/// Row-wise softmax, stabilised by subtracting the row maximum.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  detail::require_2d(x, "softmax_rows");
  const std::size_t t = x.rows(), c = x.cols();
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < t; ++r) {
    const T* in = x.data().data() + r * c;
    T* o = out.data() + r * c;
    const T mx = *std::max_element(in, in + c);
    T sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= sum;
  }
  return make_op<T>("softmax_rows", x.shape(), std::move(out), {x}, [t, c](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    for (std::size_t r = 0; r < t; ++r) {
      const T* s = self.value.data() + r * c;
      const T* g = self.grad.data() + r * c;
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += g[j] * s[j];
      for (std::size_t j = 0; j < c; ++j) nx.grad[r * c + j] += s[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  detail::require_2d(x, "log_softmax_rows");
  const std::size_t t = x.rows(), c = x.cols();
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < t; ++r) {
    const T* in = x.data().data() + r * c;
    const T mx = *std::max_element(in, in + c);
    T sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(in[j] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = in[j] - lse;
  }
  return make_op<T>("log_softmax_rows", x.shape(), std::move(out), {x},
                    [t, c](detail::Node<T>& self) {
                      auto& nx = detail::parent(self, 0);
                      for (std::size_t r = 0; r < t; ++r) {
                        const T* g = self.grad.data() + r * c;
                        T gsum = 0;
                        for (std::size_t j = 0; j < c; ++j) gsum += g[j];
                        for (std::size_t j = 0; j < c; ++j) {
                          nx.grad[r * c + j] += g[j] - std::exp(self.value[r * c + j]) * gsum;
                        }
                      }
                    });
}

/// Per-row standardisation over the feature axis, followed by an optional
/// per-feature gain and bias (pass undefined tensors to skip them).
template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                          T eps = T(1e-5)) {
  detail::require_2d(x, "layer_norm_rows");
  const std::size_t t = x.rows(), c = x.cols();
  const bool affine_part = gain.defined();
  if (affine_part && (gain.numel() != c || !bias.defined() || bias.numel() != c)) {
    throw DimensionError("layer_norm_rows: gain/bias must have one entry per feature");
  }
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(t);
  for (std::size_t r = 0; r < t; ++r) {
    const T* in = x.data().data() + r * c;
    T mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += in[j];
    mean /= T(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= T(c);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) xhat[r * c + j] = (in[j] - mean) * inv_std[r];
  }
  std::vector<T> out = xhat;
  if (affine_part) {
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t j = 0; j < c; ++j)
        out[r * c + j] = xhat[r * c + j] * gain.data()[j] + bias.data()[j];
  }
  std::vector<Tensor<T>> inputs{x};
  if (affine_part) {
    inputs.push_back(gain);
    inputs.push_back(bias);
  }
  return make_op<T>(
      "layer_norm_rows", x.shape(), std::move(out), inputs,
      [t, c, affine_part, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          detail::Node<T>& self) {
        auto& nx = detail::parent(self, 0);
        std::vector<T> dxhat(c);
        for (std::size_t r = 0; r < t; ++r) {
          const T* g = self.grad.data() + r * c;
          const T* xh = xhat.data() + r * c;
          for (std::size_t j = 0; j < c; ++j) {
            dxhat[j] = affine_part ? g[j] * detail::parent(self, 1).value[j] : g[j];
          }
          if (affine_part) {
            auto& ng = detail::parent(self, 1);
            auto& nb = detail::parent(self, 2);
            for (std::size_t j = 0; j < c; ++j) {
              if (ng.requires_grad) ng.grad[j] += g[j] * xh[j];
              if (nb.requires_grad) nb.grad[j] += g[j];
            }
          }
          if (!nx.requires_grad) continue;
          T mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < c; ++j) {
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh[j];
          }
          mean_d /= T(c);
          mean_dx /= T(c);
          for (std::size_t j = 0; j < c; ++j) {
            nx.grad[r * c + j] += inv_std[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
          }
        }
      });
}

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, T eps = T(1e-5)) {
  return layer_norm_rows(x, Tensor<T>{}, Tensor<T>{}, eps);
}

/// Arithmetic mean over the time (row) axis: [t x d] -> [1 x d].
template <typename T>
Tensor<T> avg_pool_time(const Tensor<T>& x) {
  detail::require_2d(x, "avg_pool_time");
  const std::size_t t = x.rows(), c = x.cols();
  if (t == 0) throw DimensionError("avg_pool_time: empty sequence");
  std::vector<T> out(c, T(0));
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t j = 0; j < c; ++j) out[j] += x.data()[r * c + j];
  for (auto& v : out) v /= T(t);
  return make_op<T>("avg_pool_time", {1, c}, std::move(out), {x}, [t, c](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    const T inv = T(1) / T(t);
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t j = 0; j < c; ++j) nx.grad[r * c + j] += self.grad[j] * inv;
  });
}

/// Stacks along the time axis (rows); all parts share the feature width.
template <typename T>
Tensor<T> concat_time(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_time: no inputs");
  const std::size_t c = parts.front().cols();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_time");
    if (p.cols() != c) throw DimensionError("concat_time: feature widths differ");
    offsets.push_back(total);
    total += p.rows();
  }
  std::vector<T> out;
  out.reserve(total * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op<T>("concat_time", {total, c}, std::move(out), parts,
                    [offsets, c](detail::Node<T>& self) {
                      for (std::size_t k = 0; k < self.parents.size(); ++k) {
                        auto& n = detail::parent(self, k);
                        if (!n.requires_grad) continue;
                        const T* g = self.grad.data() + offsets[k] * c;
                        for (std::size_t i = 0; i < n.value.size(); ++i) n.grad[i] += g[i];
                      }
                    });
}

/// Stacks along the feature axis (columns); all parts share the time length.
template <typename T>
Tensor<T> concat_feat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_feat: no inputs");
  const std::size_t t = parts.front().rows();
  std::vector<std::size_t> offsets, widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_feat");
    if (p.rows() != t) throw DimensionError("concat_feat: time lengths differ");
    offsets.push_back(total);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(t * total);
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (std::size_t r = 0; r < t; ++r)
      std::copy_n(parts[k].data().data() + r * widths[k], widths[k],
                  out.data() + r * total + offsets[k]);
  return make_op<T>("concat_feat", {t, total}, std::move(out), parts,
                    [t, total, offsets, widths](detail::Node<T>& self) {
                      for (std::size_t k = 0; k < self.parents.size(); ++k) {
                        auto& n = detail::parent(self, k);
                        if (!n.requires_grad) continue;
                        for (std::size_t r = 0; r < t; ++r)
                          for (std::size_t j = 0; j < widths[k]; ++j)
                            n.grad[r * widths[k] + j] += self.grad[r * total + offsets[k] + j];
                      }
                    });
}

/// Rows [begin, begin + count).
template <typename T>
Tensor<T> slice_time(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require_2d(x, "slice_time");
  if (begin + count > x.rows() || count == 0) {
    throw DimensionError("slice_time: range out of bounds");
  }
  const std::size_t c = x.cols();
  std::vector<T> out(x.data().begin() + begin * c, x.data().begin() + (begin + count) * c);
  return make_op<T>("slice_time", {count, c}, std::move(out), {x},
                    [begin, c](detail::Node<T>& self) {
                      auto& nx = detail::parent(self, 0);
                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                        nx.grad[begin * c + i] += self.grad[i];
                    });
}

/// Columns [begin, begin + count).
template <typename T>
Tensor<T> slice_feat(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require_2d(x, "slice_feat");
  if (begin + count > x.cols() || count == 0) {
    throw DimensionError("slice_feat: range out of bounds");
  }
  const std::size_t t = x.rows(), c = x.cols();
  std::vector<T> out(t * count);
  for (std::size_t r = 0; r < t; ++r)
    std::copy_n(x.data().data() + r * c + begin, count, out.data() + r * count);
  return make_op<T>("slice_feat", {t, count}, std::move(out), {x},
                    [t, c, begin, count](detail::Node<T>& self) {
                      auto& nx = detail::parent(self, 0);
                      for (std::size_t r = 0; r < t; ++r)
                        for (std::size_t j = 0; j < count; ++j)
                          nx.grad[r * c + begin + j] += self.grad[r * count + j];
                    });
}

/// Zero rows before and after along the time axis.
template <typename T>
Tensor<T> pad_time(const Tensor<T>& x, std::size_t before, std::size_t after) {
  detail::require_2d(x, "pad_time");
  const std::size_t t = x.rows(), c = x.cols();
  std::vector<T> out((before + t + after) * c, T(0));
  std::copy(x.data().begin(), x.data().end(), out.begin() + before * c);
  return make_op<T>("pad_time", {before + t + after, c}, std::move(out), {x},
                    [before, c](detail::Node<T>& self) {
                      auto& nx = detail::parent(self, 0);
                      for (std::size_t i = 0; i < nx.value.size(); ++i)
                        nx.grad[i] += self.grad[before * c + i];
                    });
}

/// out[i, :] = x[index[i], :]
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> index) {
  detail::require_2d(x, "gather_rows");
  const std::size_t c = x.cols();
  std::vector<T> out(index.size() * c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.data().data() + index[i] * c, c, out.data() + i * c);
  }
  const std::size_t n = index.size();
  return make_op<T>("gather_rows", {n, c}, std::move(out), {x},
                    [c, index = std::move(index)](detail::Node<T>& self) {
                      auto& nx = detail::parent(self, 0);
                      for (std::size_t i = 0; i < index.size(); ++i)
                        for (std::size_t j = 0; j < c; ++j)
                          nx.grad[index[i] * c + j] += self.grad[i * c + j];
                    });
}

enum class Padding { kSame, kValid };

/// Output length of conv1d_time, or 0 if the configuration produces nothing.
inline std::size_t conv1d_output_length(std::size_t t, std::size_t ksize, std::size_t stride,
                                        Padding padding, std::size_t* pad_before = nullptr) {
  std::size_t pad_total = 0;
  if (padding == Padding::kSame) {
    const std::size_t target = (t + stride - 1) / stride;
    const std::size_t needed = (target - 1) * stride + ksize;
    pad_total = needed > t ? needed - t : 0;
  }
  if (pad_before) *pad_before = pad_total / 2;
  if (t + pad_total < ksize) return 0;
  return (t + pad_total - ksize) / stride + 1;
}

/// Convolution along time with features as channels.
/// x: [t x c_in], kernel: [ksize x c_in x c_out], bias: [1 x c_out] or undefined.
template <typename T>
Tensor<T> conv1d_time(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                      std::size_t stride = 1, Padding padding = Padding::kSame) {
  detail::require_2d(x, "conv1d_time");
  if (kernel.rank() != 3) throw DimensionError("conv1d_time: kernel must be [ksize x c_in x c_out]");
  if (stride < 1) throw DimensionError("conv1d_time: stride must be >= 1");
  const std::size_t t = x.rows(), cin = x.cols();
  const std::size_t ksize = kernel.shape()[0], cout = kernel.shape()[2];
  if (ksize < 1) throw DimensionError("conv1d_time: ksize must be >= 1");
  if (kernel.shape()[1] != cin) throw DimensionError("conv1d_time: kernel c_in mismatch");
  if (bias.defined() && bias.numel() != cout) throw DimensionError("conv1d_time: bias mismatch");
  std::size_t pad_before = 0;
  const std::size_t tout = conv1d_output_length(t, ksize, stride, padding, &pad_before);
  if (tout < 1) throw DimensionError("conv1d_time: output length < 1");

  // For each tap, the source row feeding output row o (or -1 if padding).
  auto source = [=](std::size_t o, std::size_t j) -> std::ptrdiff_t {
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(o * stride + j) -
                             static_cast<std::ptrdiff_t>(pad_before);
    return (s >= 0 && s < static_cast<std::ptrdiff_t>(t)) ? s : -1;
  };

  std::vector<T> out(tout * cout, T(0));
  detail::MapM<T> y(out.data(), tout, cout);
  detail::MapC<T> xm(x.data().data(), t, cin);
  detail::RowMat<T> gathered(tout, cin);
  for (std::size_t j = 0; j < ksize; ++j) {
    for (std::size_t o = 0; o < tout; ++o) {
      const auto s = source(o, j);
      if (s < 0) gathered.row(o).setZero();
      else gathered.row(o) = xm.row(s);
    }
    y.noalias() += gathered * detail::MapC<T>(kernel.data().data() + j * cin * cout, cin, cout);
  }
  if (bias.defined()) {
    for (std::size_t o = 0; o < tout; ++o)
      for (std::size_t k = 0; k < cout; ++k) out[o * cout + k] += bias.data()[k];
  }
  std::vector<Tensor<T>> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_op<T>(
      "conv1d_time", {tout, cout}, std::move(out), inputs,
      [=](detail::Node<T>& self) {
        auto& nx = detail::parent(self, 0);
        auto& nk = detail::parent(self, 1);
        detail::MapC<T> dy(self.grad.data(), tout, cout);
        detail::MapC<T> xv(nx.value.data(), t, cin);
        detail::RowMat<T> gathered_rows(tout, cin);
        for (std::size_t j = 0; j < ksize; ++j) {
          detail::MapC<T> kj(nk.value.data() + j * cin * cout, cin, cout);
          if (nk.requires_grad) {
            for (std::size_t o = 0; o < tout; ++o) {
              const auto s = source(o, j);
              if (s < 0) gathered_rows.row(o).setZero();
              else gathered_rows.row(o) = xv.row(s);
            }
            detail::MapM<T>(nk.grad.data() + j * cin * cout, cin, cout).noalias() +=
                gathered_rows.transpose() * dy;
          }
          if (nx.requires_grad) {
            detail::RowMat<T> dx_rows = dy * kj.transpose();
            detail::MapM<T> dx(nx.grad.data(), t, cin);
            for (std::size_t o = 0; o < tout; ++o) {
              const auto s = source(o, j);
              if (s >= 0) dx.row(s) += dx_rows.row(o);
            }
          }
        }
        if (self.parents.size() > 2) {
          auto& nb = detail::parent(self, 2);
          if (nb.requires_grad) {
            for (std::size_t o = 0; o < tout; ++o)
              for (std::size_t k = 0; k < cout; ++k) nb.grad[k] += self.grad[o * cout + k];
          }
        }
      });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return make_op<T>("sum_all", {1, 1}, {s}, {x}, [](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    for (auto& g : nx.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return scale(sum_all(x), T(1) / T(x.numel()));
}

/// Row sums of a [t x c] tensor as a [t x 1] column.
template <typename T>
Tensor<T> sum_cols(const Tensor<T>& x) {
  detail::require_2d(x, "sum_cols");
  const std::size_t t = x.rows(), c = x.cols();
  std::vector<T> out(t, T(0));
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r] += x.data()[r * c + j];
  return make_op<T>("sum_cols", {t, 1}, std::move(out), {x}, [t, c](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t j = 0; j < c; ++j) nx.grad[r * c + j] += self.grad[r];
  });
}

/// log(max(x, floor)); gradient is zero where the floor is active.
template <typename T>
Tensor<T> log_floor(const Tensor<T>& x, T floor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(x.data()[i], floor));
  return make_op<T>("log_floor", x.shape(), std::move(out), {x}, [floor](detail::Node<T>& self) {
    auto& nx = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (nx.value[i] > floor) nx.grad[i] += self.grad[i] / nx.value[i];
    }
  });
}

/// Single entry x[r, c] as a scalar.
template <typename T>
Tensor<T> pick(const Tensor<T>& x, std::size_t r, std::size_t c) {
  detail::require_2d(x, "pick");
  if (r >= x.rows() || c >= x.cols()) throw DimensionError("pick: index out of range");
  const std::size_t i = r * x.cols() + c;
  return make_op<T>("pick", {1, 1}, {x.data()[i]}, {x}, [i](detail::Node<T>& self) {
    detail::parent(self, 0).grad[i] += self.grad[0];
  });
}

}  // namespace giamic
