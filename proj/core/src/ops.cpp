// Copyright 2026 The maskrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "maskrec/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "maskrec/errors.hpp"

namespace maskrec {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  throw ConfigError("activation", "expected relu or gelu, got '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

namespace kernels {

void softmax_inplace(std::span<double> row) {
  if (row.empty()) throw DimensionError("softmax over an empty row");
  const double mx = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : row) v /= total;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluK = 0.044715;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluK * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluK * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluK * x * x);
}

}  // namespace kernels

namespace ops {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

// Leading extent when the last axis is treated as the row.
std::size_t leading(const Tensor& t) { return t.numel() / t.shape().back(); }

// Elementwise unary op with a derivative expressed in terms of (x, y).
template <class Fwd, class Deriv>
Tensor unary(Tape& tape, const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  return tape.record(name, {x}, x.shape(), std::move(out), [x, deriv](const Tensor& y) {
    return [x, y, deriv]() mutable {
      if (!x.requires_grad()) return;
      auto gx = x.mutable_grad();
      auto gy = y.grad();
      auto xd = x.data();
      auto yd = y.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xd[i], yd[i]);
    };
  });
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_to_string(a.shape()) + " * " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = ad[i * k + t];
      const double* brow = bd.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return tape.record("matmul", {a, b}, {m, n}, std::move(out), [a, b, m, k, n](const Tensor& c) {
    return [a, b, c, m, k, n]() mutable {
      auto gc = c.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        auto bd = b.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = gc.data() + i * n;
          for (std::size_t t = 0; t < k; ++t) {
            const double* brow = bd.data() + t * n;
            double acc[4] = {0.0, 0.0, 0.0, 0.0};
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
              for (std::size_t u = 0; u < 4; ++u) acc[u] += grow[j + u] * brow[j + u];
            }
            for (; j < n; ++j) acc[0] += grow[j] * brow[j];
            ga[i * k + t] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto ad = a.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t t = 0; t < k; ++t) {
            const double av = ad[i * k + t];
            for (std::size_t j = 0; j < n; ++j) gb[t * n + j] += av * gc[i * n + j];
          }
        }
      }
    };
  });
}

Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw DimensionError("bmm: incompatible shapes " + shape_to_string(a.shape()) + " * " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t s = 0; s < batch; ++s) {
    const double* as = ad.data() + s * m * k;
    const double* bs = bd.data() + s * k * n;
    double* cs = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t t = 0; t < k; ++t) {
        const double av = as[i * k + t];
        for (std::size_t j = 0; j < n; ++j) cs[i * n + j] += av * bs[t * n + j];
      }
    }
  }
  return tape.record("bmm", {a, b}, {batch, m, n}, std::move(out), [a, b, batch, m, k, n](const Tensor& c) {
    return [a, b, c, batch, m, k, n]() mutable {
      auto gc = c.grad();
      const bool need_a = a.requires_grad(), need_b = b.requires_grad();
      auto ad = a.data();
      auto bd = b.data();
      std::span<double> ga = need_a ? a.mutable_grad() : std::span<double>{};
      std::span<double> gb = need_b ? b.mutable_grad() : std::span<double>{};
      for (std::size_t s = 0; s < batch; ++s) {
        const std::size_t ao = s * m * k, bo = s * k * n, co = s * m * n;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t t = 0; t < k; ++t) {
            if (need_a) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += gc[co + i * n + j] * bd[bo + t * n + j];
              ga[ao + i * k + t] += acc;
            }
            if (need_b) {
              const double av = ad[ao + i * k + t];
              for (std::size_t j = 0; j < n; ++j) gb[bo + t * n + j] += av * gc[co + i * n + j];
            }
          }
        }
      }
    };
  });
}

Tensor transpose_last2(Tape& tape, const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("transpose_last2: expected rank 2 or 3, got " + shape_to_string(x.shape()));
  }
  const std::size_t r = x.rank();
  const std::size_t rows = x.dim(r - 2), cols = x.dim(r - 1);
  const std::size_t batch = x.numel() / (rows * cols);
  Shape shape = x.shape();
  std::swap(shape[r - 2], shape[r - 1]);
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) out[s * rows * cols + j * rows + i] = xd[s * rows * cols + i * cols + j];
    }
  }
  return tape.record("transpose", {x}, std::move(shape), std::move(out), [x, batch, rows, cols](const Tensor& y) {
    return [x, y, batch, rows, cols]() mutable {
      auto gx = x.mutable_grad();
      auto gy = y.grad();
      for (std::size_t s = 0; s < batch; ++s) {
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            gx[s * rows * cols + i * cols + j] += gy[s * rows * cols + j * rows + i];
          }
        }
      }
    };
  });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  auto xd = x.data();
  return tape.record("reshape", {x}, std::move(shape), std::vector<double>(xd.begin(), xd.end()),
                     [x](const Tensor& y) {
                       return [x, y]() mutable {
                         auto gx = x.mutable_grad();
                         auto gy = y.grad();
                         for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
                       };
                     });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return tape.record("add", {a, b}, a.shape(), std::move(out), [a, b](const Tensor& c) {
    return [a, b, c]() mutable {
      auto gc = c.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i];
      }
    };
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return tape.record("mul", {a, b}, a.shape(), std::move(out), [a, b](const Tensor& c) {
    return [a, b, c]() mutable {
      auto gc = c.grad();
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        auto bd = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        auto ad = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * ad[i];
      }
    };
  });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", bias, 1);
  const std::size_t n = x.shape().back();
  if (bias.dim(0) != n) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match " +
                         shape_to_string(x.shape()));
  }
  std::vector<double> out(x.numel());
  auto xd = x.data();
  auto bd = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + bd[i % n];
  return tape.record("add_bias", {x, bias}, x.shape(), std::move(out), [x, bias, n](const Tensor& y) {
    return [x, bias, y, n]() mutable {
      auto gy = y.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i % n] += gy[i];
      }
    };
  });
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  return add_bias(tape, matmul(tape, x, w), bias);
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(Tape& tape, const Tensor& x) {
  return unary(
      tape, "gelu", x, [](double v) { return kernels::gelu(v); }, [](double v, double) { return kernels::gelu_grad(v); });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary(
      tape, "sigmoid", x,
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor activate(Tape& tape, const Tensor& x, Activation a) {
  return a == Activation::relu ? relu(tape, x) : gelu(tape, x);
}

Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
  return unary(
      tape, "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor concat_last_axis(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last_axis: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t rows = leading(parts.front());
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw DimensionError("concat_last_axis: leading extents differ " + shape_to_string(first) + " vs " +
                           shape_to_string(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto d = parts[p].data();
    const std::size_t w = widths[p];
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(d.data() + r * w, w, out.data() + r * total + offset);
    offset += w;
  }
  Shape shape = first;
  shape.back() = total;
  return tape.record("concat", parts, std::move(shape), std::move(out), [parts, widths, rows, total](const Tensor& y) {
    return [parts, widths, rows, total, y]() mutable {
      auto gy = y.grad();
      std::size_t offset = 0;
      for (std::size_t p = 0; p < parts.size(); ++p) {
        const std::size_t w = widths[p];
        if (parts[p].requires_grad()) {
          auto g = parts[p].mutable_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) g[r * w + j] += gy[r * total + offset + j];
          }
        }
        offset += w;
      }
    };
  });
}

Tensor softmax_row(Tape& tape, const Tensor& x) {
  const std::size_t c = x.shape().back();
  const std::size_t rows = leading(x);
  auto xd = x.data();
  std::vector<double> out(xd.begin(), xd.end());
  for (std::size_t r = 0; r < rows; ++r) kernels::softmax_inplace(std::span<double>(out).subspan(r * c, c));
  return tape.record("softmax_row", {x}, x.shape(), std::move(out), [x, rows, c](const Tensor& y) {
    return [x, y, rows, c]() mutable {
      auto gx = x.mutable_grad();
      auto gy = y.grad();
      auto yd = y.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = r * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gy[o + j] * yd[o + j];
        for (std::size_t j = 0; j < c; ++j) gx[o + j] += yd[o + j] * (gy[o + j] - dot);
      }
    };
  });
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  require_rank("layer_norm", gamma, 1);
  require_rank("layer_norm", beta, 1);
  if (gamma.dim(0) != d || beta.dim(0) != d) {
    throw DimensionError("layer_norm: gamma/beta must have extent " + std::to_string(d));
  }
  if (!(eps >= 0.0)) throw ConfigError("eps", "layer_norm epsilon must be nonnegative");
  const std::size_t rows = leading(x);
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> out(x.numel());
  // Normalized values and inverse std per slice, kept for backward.
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += s[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (s[j] - mu) * (s[j] - mu);
    var /= static_cast<double>(d);
    // A constant slice with eps == 0 normalizes to zero.
    rstd[r] = var + eps > 0.0 ? 1.0 / std::sqrt(var + eps) : 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (s[j] - mu) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gd[j] + bd[j];
    }
  }
  return tape.record("layer_norm", {x, gamma, beta}, x.shape(), std::move(out),
                     [x, gamma, beta, rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](const Tensor& y) {
                       return [x, gamma, beta, y, rows, d, xhat, rstd]() mutable {
                         auto gy = y.grad();
                         auto gd = gamma.data();
                         if (gamma.requires_grad()) {
                           auto gg = gamma.mutable_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t j = 0; j < d; ++j) {
#ifdef MASKREC_FAULT_INJECTION
                               // Deliberately wrong rule; only compiled into the negative-control test build.
                               gg[j] += 1.5 * gy[r * d + j] * xhat[r * d + j];
#else
                               gg[j] += gy[r * d + j] * xhat[r * d + j];
#endif
                             }
                           }
                         }
                         if (beta.requires_grad()) {
                           auto gb = beta.mutable_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t j = 0; j < d; ++j) gb[j] += gy[r * d + j];
                           }
                         }
                         if (x.requires_grad()) {
                           auto gx = x.mutable_grad();
                           const double inv_d = 1.0 / static_cast<double>(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const std::size_t o = r * d;
                             double mean_g = 0.0, mean_gx = 0.0;
                             for (std::size_t j = 0; j < d; ++j) {
                               const double g = gy[o + j] * gd[j];
                               mean_g += g;
                               mean_gx += g * xhat[o + j];
                             }
                             mean_g *= inv_d;
                             mean_gx *= inv_d;
                             for (std::size_t j = 0; j < d; ++j) {
                               const double g = gy[o + j] * gd[j];
                               gx[o + j] += rstd[r] * (g - mean_g - xhat[o + j] * mean_gx);
                             }
                           }
                         }
                       };
                     });
}

Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::int64_t> idx) {
  require_rank("embedding_lookup", table, 2);
  if (idx.empty()) throw DimensionError("embedding_lookup: empty index list");
  const std::size_t m = table.dim(0), d = table.dim(1);
  for (std::int64_t i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= m) {
      throw IndexError("embedding index " + std::to_string(i) + " outside table of " + std::to_string(m) + " rows");
    }
  }
  std::vector<std::int64_t> rows(idx.begin(), idx.end());
  std::vector<double> out(rows.size() * d);
  auto td = table.data();
  for (std::size_t b = 0; b < rows.size(); ++b) {
    std::copy_n(td.data() + static_cast<std::size_t>(rows[b]) * d, d, out.data() + b * d);
  }
  const std::size_t n = rows.size();
  return tape.record("embedding_lookup", {table}, {n, d}, std::move(out),
                     [table, rows = std::move(rows), d](const Tensor& y) {
                       return [table, y, rows, d]() mutable {
                         auto gt = table.mutable_grad();
                         auto gy = y.grad();
                         for (std::size_t b = 0; b < rows.size(); ++b) {
                           double* dst = gt.data() + static_cast<std::size_t>(rows[b]) * d;
                           for (std::size_t j = 0; j < d; ++j) dst[j] += gy[b * d + j];
                         }
                       };
                     });
}

Tensor dropout(Tape& tape, const Tensor& x, double p, Phase phase, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout_p", "must lie in [0, 1)");
  if (phase == Phase::eval || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.uniform01() < p ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  return tape.record("dropout", {x}, x.shape(), std::move(out), [x, mask = std::move(mask)](const Tensor& y) {
    return [x, y, mask]() mutable {
      auto gx = x.mutable_grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * mask[i];
    };
  });
}

Tensor sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return tape.record("sum", {x}, {1}, {total}, [x](const Tensor& y) {
    return [x, y]() mutable {
      const double g = y.grad()[0];
      for (double& v : x.mutable_grad()) v += g;
    };
  });
}

Tensor mean(Tape& tape, const Tensor& x) { return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace ops
}  // namespace maskrec
