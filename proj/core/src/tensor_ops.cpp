// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tensor_impl.hpp"

namespace singlem {

using detail::make_result;
using detail::Node;

namespace {

std::vector<double>* grad_of(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return &p->ensure_grad();
}

const std::vector<double>& value_of(Node& self, std::size_t i) { return self.parents[i]->value; }

Shape shape_prefix(const Shape& s, std::size_t drop) { return Shape(s.begin(), s.end() - static_cast<std::ptrdiff_t>(drop)); }

std::vector<std::size_t> row_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Offset into a tensor of shape `in` for every element of the broadcast shape `out`.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::size_t> stride(r, 0);
  const auto in_strides = row_strides(in);
  const std::size_t shift = r - in.size();
  for (std::size_t d = 0; d < in.size(); ++d) stride[d + shift] = in[d] == 1 ? 0 : in_strides[d];

  const std::size_t n = numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t e = 0; e < n; ++e) {
    offsets[e] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < out[d]) break;
      off -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return offsets;
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  const Shape out = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = numel(out);
  const bool a_same = a.shape() == out;
  const bool b_same = b.shape() == out;
  auto ia = std::make_shared<std::vector<std::size_t>>(a_same ? std::vector<std::size_t>{} : broadcast_offsets(a.shape(), out));
  auto ib = std::make_shared<std::vector<std::size_t>>(b_same ? std::vector<std::size_t>{} : broadcast_offsets(b.shape(), out));
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> v(n);
  for (std::size_t e = 0; e < n; ++e) {
    const double x = av[a_same ? e : (*ia)[e]];
    const double y = bv[b_same ? e : (*ib)[e]];
    v[e] = op == BinOp::Add ? x + y : op == BinOp::Sub ? x - y : x * y;
  }
  return make_result(out, std::move(v), {a, b}, [ia, ib, a_same, b_same, op](Node& self) {
    const auto& g = self.grad;
    const std::size_t n = g.size();
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    const auto& av = value_of(self, 0);
    const auto& bv = value_of(self, 1);
    for (std::size_t e = 0; e < n; ++e) {
      const std::size_t oa = a_same ? e : (*ia)[e];
      const std::size_t ob = b_same ? e : (*ib)[e];
      switch (op) {
        case BinOp::Add:
          if (ga) (*ga)[oa] += g[e];
          if (gb) (*gb)[ob] += g[e];
          break;
        case BinOp::Sub:
          if (ga) (*ga)[oa] += g[e];
          if (gb) (*gb)[ob] -= g[e];
          break;
        case BinOp::Mul:
          if (ga) (*ga)[oa] += g[e] * bv[ob];
          if (gb) (*gb)[ob] += g[e] * av[oa];
          break;
      }
    }
  });
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const auto av = a.values();
  std::vector<double> v(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) v[i] = f(av[i]);
  return make_result(a.shape(), std::move(v), {a}, [df](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& x = value_of(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw Error(ErrorCode::ShapeMismatch, "cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul); }

Tensor scale(const Tensor& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (broadcast_shape(a.shape(), shape) != shape) {
    throw Error(ErrorCode::ShapeMismatch, "cannot broadcast " + to_string(a.shape()) + " to " + to_string(shape));
  }
  return add(a, Tensor::zeros(shape));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) throw Error(ErrorCode::ShapeMismatch, "matmul needs rank >= 2 operands");
  const std::size_t m = as[as.size() - 2], k = as.back();
  const std::size_t k2 = bs[bs.size() - 2], n = bs.back();
  if (k != k2) {
    throw Error(ErrorCode::ShapeMismatch, "matmul inner dims: " + to_string(as) + " x " + to_string(bs));
  }
  const bool shared = bs.size() == 2;
  const Shape batch_shape = shape_prefix(as, 2);
  if (!shared && shape_prefix(bs, 2) != batch_shape) {
    throw Error(ErrorCode::ShapeMismatch, "matmul batch dims: " + to_string(as) + " x " + to_string(bs));
  }
  const std::size_t batch = numel(batch_shape);
  Shape out = batch_shape;
  out.push_back(m);
  out.push_back(n);

  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> c(batch * m * n, 0.0);
  for (std::size_t t = 0; t < batch; ++t) {
    const double* A = av.data() + t * m * k;
    const double* B = bv.data() + (shared ? 0 : t * k * n);
    double* C = c.data() + t * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* Brow = B + p * n;
        double* Crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) Crow[j] += aip * Brow[j];
      }
    }
  }
  return make_result(out, std::move(c), {a, b}, [batch, m, k, n, shared](Node& self) {
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    const auto& av = value_of(self, 0);
    const auto& bv = value_of(self, 1);
    const auto& g = self.grad;
    for (std::size_t t = 0; t < batch; ++t) {
      const double* A = av.data() + t * m * k;
      const double* B = bv.data() + (shared ? 0 : t * k * n);
      const double* G = g.data() + t * m * n;
      if (ga) {
        double* dA = ga->data() + t * m * k;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double* Brow = B + p * n;
            const double* Grow = G + i * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += Grow[j] * Brow[j];
            dA[i * k + p] += acc;
          }
        }
      }
      if (gb) {
        double* dB = gb->data() + (shared ? 0 : t * k * n);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* Grow = G + i * n;
            double* dBrow = dB + p * n;
            for (std::size_t j = 0; j < n; ++j) dBrow[j] += aip * Grow[j];
          }
        }
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Tensor y = matmul(x, w);
  return b.defined() ? add(y, b) : y;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw Error(ErrorCode::ShapeMismatch, "reshape " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  std::vector<double> v(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(v), {a}, [](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& dims) {
  const Shape& in = a.shape();
  const std::size_t r = in.size();
  if (dims.size() != r) throw Error(ErrorCode::ShapeMismatch, "permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (auto d : dims) {
    if (d >= r || seen[d]) throw Error(ErrorCode::ShapeMismatch, "permute: invalid axis list");
    seen[d] = true;
  }
  Shape out(r);
  for (std::size_t d = 0; d < r; ++d) out[d] = in[dims[d]];
  const auto in_strides = row_strides(in);
  std::vector<std::size_t> stride(r);
  for (std::size_t d = 0; d < r; ++d) stride[d] = in_strides[dims[d]];

  const std::size_t n = a.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t e = 0; e < n; ++e) {
    (*src)[e] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < out[d]) break;
      off -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  const auto av = a.values();
  std::vector<double> v(n);
  for (std::size_t e = 0; e < n; ++e) v[e] = av[(*src)[e]];
  return make_result(out, std::move(v), {a}, [src](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t e = 0; e < self.grad.size(); ++e) (*ga)[(*src)[e]] += self.grad[e];
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.dim();
  if (r < 2) throw Error(ErrorCode::ShapeMismatch, "transpose needs rank >= 2");
  std::vector<std::size_t> dims(r);
  std::iota(dims.begin(), dims.end(), 0);
  std::swap(dims[r - 1], dims[r - 2]);
  return permute(a, dims);
}

Tensor gather(const Tensor& a, int axis, const std::vector<std::size_t>& indices) {
  const Shape& in = a.shape();
  const std::size_t ax = detail::normalize_axis(axis, in.size(), "gather");
  const std::size_t outer = numel(Shape(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t len = in[ax];
  const std::size_t inner = numel(Shape(in.begin() + static_cast<std::ptrdiff_t>(ax) + 1, in.end()));
  for (auto i : indices) {
    if (i >= len) throw Error(ErrorCode::ShapeMismatch, "gather: index " + std::to_string(i) + " out of range");
  }
  Shape out = in;
  out[ax] = indices.size();
  const std::size_t m = indices.size();
  const auto av = a.values();
  std::vector<double> v(outer * m * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < m; ++j) {
      std::copy_n(av.data() + (o * len + indices[j]) * inner, inner, v.data() + (o * m + j) * inner);
    }
  }
  return make_result(out, std::move(v), {a}, [outer, len, inner, indices](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    const std::size_t m = indices.size();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < m; ++j) {
        const double* g = self.grad.data() + (o * m + j) * inner;
        double* d = ga->data() + (o * len + indices[j]) * inner;
        for (std::size_t t = 0; t < inner; ++t) d[t] += g[t];
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const Shape& first = parts.front().shape();
  const std::size_t ax = detail::normalize_axis(axis, first.size(), "concat");
  std::vector<std::size_t> lens;
  Shape out = first;
  out[ax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw Error(ErrorCode::ShapeMismatch, "concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != ax && s[d] != first[d]) throw Error(ErrorCode::ShapeMismatch, "concat: shape mismatch");
    }
    lens.push_back(s[ax]);
    out[ax] += s[ax];
  }
  const std::size_t outer = numel(Shape(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t inner = numel(Shape(first.begin() + static_cast<std::ptrdiff_t>(ax) + 1, first.end()));
  const std::size_t total = out[ax];
  std::vector<double> v(numel(out));
  std::size_t pos = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * lens[k] * inner, lens[k] * inner, v.data() + (o * total + pos) * inner);
    }
    pos += lens[k];
  }
  return make_result(out, std::move(v), parts, [outer, inner, total, lens](Node& self) {
    std::size_t pos = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      if (auto* gk = grad_of(self, k)) {
        for (std::size_t o = 0; o < outer; ++o) {
          const double* g = self.grad.data() + (o * total + pos) * inner;
          double* d = gk->data() + o * lens[k] * inner;
          for (std::size_t t = 0; t < lens[k] * inner; ++t) d[t] += g[t];
        }
      }
      pos += lens[k];
    }
  });
}

Tensor sum(const Tensor& a) {
  const auto av = a.values();
  const double s = std::accumulate(av.begin(), av.end(), 0.0);
  return make_result({}, {s}, {a}, [](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (auto& v : *ga) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw Error(ErrorCode::ShapeMismatch, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_last(const Tensor& a) {
  const Shape& in = a.shape();
  if (in.empty()) throw Error(ErrorCode::ShapeMismatch, "sum_last on a scalar");
  const std::size_t len = in.back();
  const std::size_t rows = len == 0 ? 0 : a.numel() / len;
  const auto av = a.values();
  std::vector<double> v(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < len; ++j) acc += av[r * len + j];
    v[r] = acc;
  }
  return make_result(shape_prefix(in, 1), std::move(v), {a}, [len, rows](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < len; ++j) (*ga)[r * len + j] += self.grad[r];
    }
  });
}

Tensor mean_last(const Tensor& a) {
  if (a.dim() == 0 || a.shape().back() == 0) throw Error(ErrorCode::ShapeMismatch, "mean_last of empty axis");
  return scale(sum_last(a), 1.0 / static_cast<double>(a.shape().back()));
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.size() != 3 || xs.size() < 2) throw Error(ErrorCode::ShapeMismatch, "conv1d: x (..., c_in, t), w (c_out, c_in, k)");
  const std::size_t cout = ws[0], cin = ws[1], k = ws[2];
  if (k % 2 == 0) throw Error(ErrorCode::EvenKernel, "conv1d kernel size " + std::to_string(k) + " is even");
  if (xs[xs.size() - 2] != cin) {
    throw Error(ErrorCode::ShapeMismatch, "conv1d: input " + to_string(xs) + " vs weight " + to_string(ws));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) throw Error(ErrorCode::ShapeMismatch, "conv1d: bias shape");
  const std::size_t t = xs.back();
  const std::size_t batch = numel(shape_prefix(xs, 2));
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  Shape out = shape_prefix(xs, 2);
  out.push_back(cout);
  out.push_back(t);

  const auto xv = x.values();
  const auto wv = w.values();
  std::vector<double> y(batch * cout * t, 0.0);
  const auto T = static_cast<std::ptrdiff_t>(t);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* yrow = y.data() + (b * cout + co) * t;
      if (bias.defined()) std::fill_n(yrow, t, bias.values()[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xrow = xv.data() + (b * cin + ci) * t;
        const double* wrow = wv.data() + (co * cin + ci) * k;
        for (std::size_t j = 0; j < k; ++j) {
          const double wj = wrow[j];
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;  // y[tau] += w * x[tau + shift]
          const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
          const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - shift);
          for (std::ptrdiff_t tau = lo; tau < hi; ++tau) yrow[tau] += wj * xrow[tau + shift];
        }
      }
    }
  }
  return make_result(out, std::move(y), {x, w, bias}, [batch, cin, cout, k, t, half](Node& self) {
    auto* gx = grad_of(self, 0);
    auto* gw = grad_of(self, 1);
    auto* gbias = self.parents[2] ? grad_of(self, 2) : nullptr;
    const auto& xv = value_of(self, 0);
    const auto& wv = value_of(self, 1);
    const auto T = static_cast<std::ptrdiff_t>(t);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t co = 0; co < cout; ++co) {
        const double* grow = self.grad.data() + (b * cout + co) * t;
        if (gbias) {
          double acc = 0.0;
          for (std::size_t tau = 0; tau < t; ++tau) acc += grow[tau];
          (*gbias)[co] += acc;
        }
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xrow = xv.data() + (b * cin + ci) * t;
          const double* wrow = wv.data() + (co * cin + ci) * k;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - shift);
            if (gw) {
              double acc = 0.0;
              for (std::ptrdiff_t tau = lo; tau < hi; ++tau) acc += grow[tau] * xrow[tau + shift];
              (*gw)[(co * cin + ci) * k + j] += acc;
            }
            if (gx) {
              double* dx = gx->data() + (b * cin + ci) * t;
              const double wj = wrow[j];
              for (std::ptrdiff_t tau = lo; tau < hi; ++tau) dx[tau + shift] += wj * grow[tau];
            }
          }
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis, double eps) {
  const Shape& xs = x.shape();
  const std::size_t ax = detail::normalize_axis(axis, xs.size(), "layer_norm");
  const std::size_t len = xs[ax];
  if (len == 0) throw Error(ErrorCode::ShapeMismatch, "layer_norm over an empty axis");
  if (gain.shape() != Shape{len} || bias.shape() != Shape{len}) {
    throw Error(ErrorCode::ShapeMismatch, "layer_norm: gain/bias must have shape (" + std::to_string(len) + ")");
  }
  const std::size_t outer = numel(Shape(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(ax)));
  const std::size_t inner = numel(Shape(xs.begin() + static_cast<std::ptrdiff_t>(ax) + 1, xs.end()));
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();

  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(outer * inner);
  std::vector<double> y(x.numel());
  const double inv_len = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mu = 0.0;
      for (std::size_t j = 0; j < len; ++j) mu += xv[base + j * inner];
      mu *= inv_len;
      double var = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double dlt = xv[base + j * inner] - mu;
        var += dlt * dlt;
      }
      var *= inv_len;
      const double r = 1.0 / std::sqrt(var + eps);
      (*rstd)[o * inner + in] = r;
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t e = base + j * inner;
        const double h = (xv[e] - mu) * r;
        (*xhat)[e] = h;
        y[e] = h * gv[j] + bv[j];
      }
    }
  }
  return make_result(xs, std::move(y), {x, gain, bias}, [xhat, rstd, outer, inner, len, inv_len](Node& self) {
    auto* gx = grad_of(self, 0);
    auto* gg = grad_of(self, 1);
    auto* gb = grad_of(self, 2);
    const auto& gv = value_of(self, 1);
    const auto& g = self.grad;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t e = base + j * inner;
          const double d = g[e] * gv[j];
          mean_d += d;
          mean_dh += d * (*xhat)[e];
          if (gg) (*gg)[j] += g[e] * (*xhat)[e];
          if (gb) (*gb)[j] += g[e];
        }
        if (!gx) continue;
        mean_d *= inv_len;
        mean_dh *= inv_len;
        const double r = (*rstd)[o * inner + in];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t e = base + j * inner;
          (*gx)[e] += r * (g[e] * gv[j] - mean_d - (*xhat)[e] * mean_dh);
        }
      }
    }
  });
}

Tensor elu(const Tensor& x, double alpha) {
  return unary(
      x, [alpha](double v) { return v >= 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double y) { return v >= 0.0 ? 1.0 : y + alpha; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
      [](double v, double) {
        const double u = kC * (v + kA * v * v * v);
        const double th = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * v * v);
        return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
      });
}

Tensor softmax(const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw Error(ErrorCode::ShapeMismatch, "softmax on a scalar");
  const std::size_t len = xs.back();
  const std::size_t rows = len == 0 ? 0 : x.numel() / len;
  const auto xv = x.values();
  std::vector<double> y(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * len;
    double* out = y.data() + r * len;
    const double mx = *std::max_element(in, in + len);
    double total = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    }
    for (std::size_t j = 0; j < len; ++j) out[j] /= total;
  }
  return make_result(xs, std::move(y), {x}, [rows, len](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* s = self.value.data() + r * len;
      const double* g = self.grad.data() + r * len;
      double dot = 0.0;
      for (std::size_t j = 0; j < len; ++j) dot += g[j] * s[j];
      for (std::size_t j = 0; j < len; ++j) (*gx)[r * len + j] += s[j] * (g[j] - dot);
    }
  });
}

Tensor huber_elements(const Tensor& pred, const Tensor& target, double delta) {
  if (pred.shape() != target.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "huber: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidSpec, "huber delta must be positive");
  const auto pv = pred.values();
  const auto tv = target.values();
  std::vector<double> v(pv.size());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double e = pv[i] - tv[i];
    const double ae = std::abs(e);
    v[i] = ae <= delta ? 0.5 * e * e : delta * (ae - 0.5 * delta);
  }
  return make_result(pred.shape(), std::move(v), {pred, target}, [delta](Node& self) {
    auto* gp = grad_of(self, 0);
    auto* gt = grad_of(self, 1);
    const auto& pv = value_of(self, 0);
    const auto& tv = value_of(self, 1);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double e = pv[i] - tv[i];
      const double de = std::abs(e) <= delta ? e : (e > 0 ? delta : -delta);
      if (gp) (*gp)[i] += self.grad[i] * de;
      if (gt) (*gt)[i] -= self.grad[i] * de;
    }
  });
}

Tensor huber(const Tensor& pred, const Tensor& target, double delta) {
  return mean(huber_elements(pred, target, delta));
}

Tensor multi_head_attention(const Tensor& x, std::size_t heads, const AttentionWeights& w) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw Error(ErrorCode::ShapeMismatch, "attention input must be (..., n, d)");
  const std::size_t n = xs[xs.size() - 2];
  const std::size_t d = xs.back();
  if (heads == 0 || d % heads != 0) {
    throw Error(ErrorCode::HeadDivisibility,
                "model width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const std::size_t batch = numel(shape_prefix(xs, 2));

  auto split_heads = [&](const Tensor& t) {
    return permute(reshape(t, {batch, n, heads, dh}), {0, 2, 1, 3});  // (B, h, n, dh)
  };
  const Tensor q = split_heads(linear(x, w.wq, w.bq));
  const Tensor k = split_heads(linear(x, w.wk, w.bk));
  const Tensor v = split_heads(linear(x, w.wv, w.bv));
  const Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor ctx = matmul(softmax(scores), v);                   // (B, h, n, dh)
  const Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), xs);  // (..., n, d)
  return linear(merged, w.wo, w.bo);
}

}  // namespace singlem
