#include "lingua/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lingua::ad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

bool tracked(const NodePtr& n) { return n->requires_grad; }

template <class Fn>
Tensor unary(const Tensor& x, Fn fwd, std::function<void(Node&)> bwd) {
  std::vector<double> out(x.size());
  auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), {x}, std::move(bwd));
}

// Splits `shape` around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!tracked(p)) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (tracked(pa)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (tracked(pb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (tracked(pa)) pa->grad[i] += self.grad[i] * pb->value[i];
      if (tracked(pb)) pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](Node& self) {
        auto& p = self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += factor * self.grad[i];
      });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  const std::size_t n = x.cols();
  if (row.size() != n || (row.rank() == 2 && row.dim(0) != 1) || row.rank() > 2) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) + " does not broadcast over " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto rv = row.values();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += rv[c];
  }
  return make_result(x.shape(), std::move(out), {x, row}, [n](Node& self) {
    auto& px = self.parents[0];
    auto& pr = self.parents[1];
    if (tracked(px)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
    }
    if (tracked(pr)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pr->grad[i % n] += self.grad[i];
    }
  });
}

Tensor mul_col(const Tensor& x, const Tensor& col) {
  if (x.rank() != 2 || col.rank() != 2 || col.dim(1) != 1 || col.dim(0) != x.dim(0)) {
    throw DimensionError("mul_col: " + shape_string(x.shape()) + " by " + shape_string(col.shape()));
  }
  const std::size_t r = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.size());
  auto xv = x.values(), cv = col.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * cv[i];
  }
  return make_result(x.shape(), std::move(out), {x, col}, [r, n](Node& self) {
    auto& px = self.parents[0];
    auto& pc = self.parents[1];
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = self.grad[i * n + j];
        if (tracked(px)) px->grad[i * n + j] += g * pc->value[i];
        if (tracked(pc)) pc->grad[i] += g * px->value[i * n + j];
      }
    }
  });
}

Tensor repeat_rows(const Tensor& row, std::size_t count) {
  if (row.rank() != 2 || row.dim(0) != 1) {
    throw DimensionError("repeat_rows expects [1 x n], got " + shape_string(row.shape()));
  }
  const std::size_t n = row.dim(1);
  std::vector<double> out(count * n);
  auto rv = row.values();
  for (std::size_t r = 0; r < count; ++r) std::copy(rv.begin(), rv.end(), out.begin() + r * n);
  return make_result({count, n}, std::move(out), {row}, [n](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i % n] += self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](Node& self) {
        auto& p = self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (p->value[i] > 0.0) p->grad[i] += self.grad[i];
        }
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](Node& self) {
        auto& p = self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double y = self.value[i];
          p->grad[i] += self.grad[i] * (1.0 - y * y);
        }
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* C = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = A[i * k + p];
      if (s == 0.0) continue;
      const double* Brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) C[j] += s * Brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const double* G = self.grad.data();
    if (tracked(pa)) {
      // dA = dC * B^T
      const double* B = pb->value.data();
      double* dA = pa->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* Brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[j] * Brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (tracked(pb)) {
      // dB = A^T * dC
      const double* A = pa->value.data();
      double* dB = pb->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = A[i * k + p];
          if (s == 0.0) continue;
          double* dBrow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) dBrow[j] += s * g[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_string(x.shape()));
  Shape shape = x.shape();
  const std::size_t r = shape[shape.size() - 2], c = shape.back();
  std::swap(shape[shape.size() - 2], shape.back());
  const std::size_t batches = x.size() / (r * c);
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t off = b * r * c;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[off + j * r + i] = xv[off + i * c + j];
    }
  }
  return make_result(std::move(shape), std::move(out), {x}, [r, c, batches](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t off = b * r * c;
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) p->grad[off + i * c + j] += self.grad[off + j * r + i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor softmax(const Tensor& x) {
  const std::size_t rows = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    if (mx == -std::numeric_limits<double>::infinity()) throw DimensionError("degenerate softmax row");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      double* d = p->grad.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) d[j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t rows = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    if (mx == -std::numeric_limits<double>::infinity()) throw DimensionError("degenerate softmax row");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) o[j] = in[j] - lse;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[j];
      double* d = p->grad.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) d[j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + " for rows of " +
                         std::to_string(n));
  }
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (in[j] - mu) * is;
      xhat[r * n + j] = h;
      out[r * n + j] = gv[j] * h + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        std::vector<double> dh(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * n;
          const double* h = xhat.data() + r * n;
          if (tracked(pg)) {
            for (std::size_t j = 0; j < n; ++j) pg->grad[j] += g[j] * h[j];
          }
          if (tracked(pb)) {
            for (std::size_t j = 0; j < n; ++j) pb->grad[j] += g[j];
          }
          if (!tracked(px)) continue;
          double mean_dh = 0.0, mean_dhh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dh[j] = g[j] * pg->value[j];
            mean_dh += dh[j];
            mean_dhh += dh[j] * h[j];
          }
          mean_dh /= static_cast<double>(n);
          mean_dhh /= static_cast<double>(n);
          double* d = px->grad.data() + r * n;
          for (std::size_t j = 0; j < n; ++j) d[j] += inv_std[r] * (dh[j] - mean_dh - h[j] * mean_dhh);
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimensionError("embedding table must be rank 2, got " + shape_string(table.shape()));
  const std::size_t vocab = table.dim(0), n = table.dim(1);
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * n);
  auto tv = table.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      throw std::out_of_range("embedding id " + std::to_string(rows[i]) + " outside table of " +
                              std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.begin() + rows[i] * n, n, out.begin() + i * n);
  }
  const std::size_t count = rows.size();
  return make_result({count, n}, std::move(out), {table}, [rows = std::move(rows), n](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) p->grad[rows[i] * n + j] += self.grad[i * n + j];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw DimensionError("concat axis out of range for " + shape_string(shape));
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw DimensionError("concat rank mismatch");
    s[axis] = shape[axis];
    if (s != shape) {
      throw DimensionError("concat: " + shape_string(p.shape()) + " incompatible with " +
                           shape_string(parts[0].shape()) + " on axis " + std::to_string(axis));
    }
    total += p.dim(axis);
  }
  shape[axis] = total;
  const AxisSplit outer_split = split_at(shape, axis);
  const std::size_t outer = outer_split.outer, inner = outer_split.inner;
  std::vector<std::size_t> chunk(parts.size()), offset(parts.size());
  std::size_t acc = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    chunk[i] = parts[i].dim(axis) * inner;
    offset[i] = acc;
    acc += chunk[i];
  }
  const std::size_t row = total * inner;
  std::vector<double> out(outer * row);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto v = parts[i].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.begin() + o * chunk[i], chunk[i], out.begin() + o * row + offset[i]);
    }
  }
  return make_result(std::move(shape), std::move(out), parts, [outer, row, chunk, offset](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (!tracked(p)) continue;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* g = self.grad.data() + o * row + offset[i];
        double* d = p->grad.data() + o * chunk[i];
        for (std::size_t j = 0; j < chunk[i]; ++j) d[j] += g[j];
      }
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (begin > end || end > s.extent) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t in_row = s.extent * s.inner, out_row = (end - begin) * s.inner, skip = begin * s.inner;
  std::vector<double> out(s.outer * out_row);
  auto v = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(v.begin() + o * in_row + skip, out_row, out.begin() + o * out_row);
  }
  return make_result(std::move(shape), std::move(out), {x}, [s, in_row, out_row, skip](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* g = self.grad.data() + o * out_row;
      double* d = p->grad.data() + o * in_row + skip;
      for (std::size_t j = 0; j < out_row; ++j) d[j] += g[j];
    }
  });
}

Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> keep, double value) {
  if (keep.size() != x.size()) {
    throw DimensionError("masked_fill: mask of " + std::to_string(keep.size()) + " for " + shape_string(x.shape()));
  }
  std::vector<std::uint8_t> k(keep.begin(), keep.end());
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!k[i]) out[i] = value;
  }
  return make_result(x.shape(), std::move(out), {x}, [k = std::move(k)](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (k[i]) p->grad[i] += self.grad[i];
    }
  });
}

Tensor masked_fill_cols(const Tensor& x, std::span<const std::uint8_t> keep_cols, double value) {
  const std::size_t n = x.cols();
  if (keep_cols.size() != n) {
    throw DimensionError("masked_fill_cols: mask of " + std::to_string(keep_cols.size()) + " for " +
                         shape_string(x.shape()));
  }
  std::vector<std::uint8_t> keep(x.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = keep_cols[i % n];
  return masked_fill(x, keep, value);
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({}, {s}, {x}, [](Node& self) {
    auto& p = self.parents[0];
    const double g = self.grad[0];
    for (auto& d : p->grad) d += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor pick(const Tensor& x, std::span<const int> index) {
  const std::size_t rows = x.rows(), n = x.cols();
  if (index.size() != rows) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + std::to_string(rows) + " rows");
  }
  std::vector<std::size_t> flat(rows);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= n) {
      throw std::out_of_range("pick index " + std::to_string(index[r]) + " outside row of " + std::to_string(n));
    }
    flat[r] = r * n + static_cast<std::size_t>(index[r]);
    out[r] = x.values()[flat[r]];
  }
  return make_result({rows}, std::move(out), {x}, [flat = std::move(flat)](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t r = 0; r < flat.size(); ++r) p->grad[flat[r]] += self.grad[r];
  });
}

Tensor frame_stack(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 2) throw DimensionError("frame_stack expects [T x C], got " + shape_string(x.shape()));
  if (kernel == 0 || kernel % 2 == 0 || stride == 0) {
    throw std::invalid_argument("frame_stack: kernel must be odd and stride positive");
  }
  const std::size_t T = x.dim(0), C = x.dim(1);
  const std::size_t out_T = (T + stride - 1) / stride;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::size_t width = kernel * C;
  std::vector<double> out(out_T * width, 0.0);
  auto v = x.values();
  for (std::size_t t = 0; t < out_T; ++t) {
    const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(t * stride);
    for (std::size_t k = 0; k < kernel; ++k) {
      const std::ptrdiff_t src = center - half + static_cast<std::ptrdiff_t>(k);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      std::copy_n(v.begin() + src * C, C, out.begin() + t * width + k * C);
    }
  }
  return make_result({out_T, width}, std::move(out), {x}, [T, C, out_T, kernel, stride, half, width](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t t = 0; t < out_T; ++t) {
      const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(t * stride);
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::ptrdiff_t src = center - half + static_cast<std::ptrdiff_t>(k);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const double* g = self.grad.data() + t * width + k * C;
        double* d = p->grad.data() + src * C;
        for (std::size_t c = 0; c < C; ++c) d[c] += g[c];
      }
    }
  });
}

}  // namespace lingua::ad
