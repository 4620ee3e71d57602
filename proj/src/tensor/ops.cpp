#include "painforge/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "painforge/core/errors.hpp"
#include "painforge/core/random.hpp"

namespace painforge {
namespace {

using detail::Node;

// Grad buffer of parent i, or an empty span when it takes no gradient.
std::span<double> parent_grad(Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return {};
  return p.grad_buffer();
}

const std::vector<double>& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

void require_broadcastable(const Tensor& a, const Tensor& b, const char* op) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(b.shape()) + " cannot broadcast to " +
                         shape_str(a.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_finite(const Tensor& x, const char* op) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

// Row-wise log-softmax of a [rows, cols] buffer.
std::vector<double> log_softmax_rows(std::span<const double> x, std::size_t rows, std::size_t cols, double inv_t) {
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * cols;
    double mx = row[0] * inv_t;
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c] * inv_t);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(row[c] * inv_t - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] * inv_t - lse;
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  };
  if (as.size() < 2 || bs.size() < 2) throw mismatch();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t n = bs.back();
  if (bs[bs.size() - 2] != k) throw mismatch();

  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);

  if (bs.size() == 2) {
    // Shared right operand: fold the batch into the row dimension.
    const std::size_t rows = a.numel() / k;
    std::vector<double> out(rows * n, 0.0);
    gemm_nn(rows, n, k, a.data().data(), b.data().data(), out.data());
    return Tensor::make_result(std::move(out_shape), std::move(out), {a, b},
                               [rows, n, k](Node& self) {
                                 const double* g = self.grad.data();
                                 if (auto ga = parent_grad(self, 0); !ga.empty())
                                   gemm_nt(rows, k, n, g, parent_value(self, 1).data(), ga.data());
                                 if (auto gb = parent_grad(self, 1); !gb.empty())
                                   gemm_tn(k, n, rows, parent_value(self, 0).data(), g, gb.data());
                               },
                               "matmul");
  }

  if (as.size() != bs.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) throw mismatch();
  const std::size_t batch = a.numel() / (m * k);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t t = 0; t < batch; ++t) {
    gemm_nn(m, n, k, a.data().data() + t * m * k, b.data().data() + t * k * n, out.data() + t * m * n);
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {a, b},
                             [batch, m, n, k](Node& self) {
                               const double* g = self.grad.data();
                               const double* av = parent_value(self, 0).data();
                               const double* bv = parent_value(self, 1).data();
                               auto ga = parent_grad(self, 0);
                               auto gb = parent_grad(self, 1);
                               for (std::size_t t = 0; t < batch; ++t) {
                                 if (!ga.empty()) gemm_nt(m, k, n, g + t * m * n, bv + t * k * n, ga.data() + t * m * k);
                                 if (!gb.empty()) gemm_tn(k, n, m, av + t * m * k, g + t * m * n, gb.data() + t * k * n);
                               }
                             },
                             "matmul");
}

Tensor transpose_last(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last: rank < 2 for " + shape_str(x.shape()));
  std::vector<std::size_t> perm(x.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(x, perm);
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const auto& in_shape = x.shape();
  const std::size_t r = in_shape.size();
  if (perm.size() != r) throw DimensionError("permute: permutation rank mismatch for " + shape_str(in_shape));
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p >= r || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  const std::size_t n = x.numel();
  // gather index of every output element
  auto index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    (*index)[o] = src;
    for (std::size_t d = r; d-- > 0;) {
      if (++counter[d] < out_shape[d]) {
        src += src_strides[d];
        break;
      }
      src -= src_strides[d] * (out_shape[d] - 1);
      counter[d] = 0;
    }
  }
  std::vector<double> out(n);
  const auto xv = x.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[(*index)[o]];
  return Tensor::make_result(std::move(out_shape), std::move(out), {x},
                             [index](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (std::size_t o = 0; o < index->size(); ++o) gx[(*index)[o]] += self.grad[o];
                             },
                             "permute");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x},
                             [](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                             },
                             "reshape");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "add");
  const std::size_t nb = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % nb];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [nb](Node& self) {
                               if (auto ga = parent_grad(self, 0); !ga.empty())
                                 for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                               if (auto gb = parent_grad(self, 1); !gb.empty())
                                 for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] += self.grad[i];
                             },
                             "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "sub");
  const std::size_t nb = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i % nb];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [nb](Node& self) {
                               if (auto ga = parent_grad(self, 0); !ga.empty())
                                 for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                               if (auto gb = parent_grad(self, 1); !gb.empty())
                                 for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] -= self.grad[i];
                             },
                             "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_broadcastable(a, b, "mul");
  const std::size_t nb = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i % nb];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [nb](Node& self) {
                               const auto& av = parent_value(self, 0);
                               const auto& bv = parent_value(self, 1);
                               if (auto ga = parent_grad(self, 0); !ga.empty())
                                 for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bv[i % nb];
                               if (auto gb = parent_grad(self, 1); !gb.empty())
                                 for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] += self.grad[i] * av[i];
                             },
                             "mul");
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [factor](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * self.grad[i];
                             },
                             "scale");
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (!is_suffix(shape, x.shape())) {
    throw DimensionError("broadcast_to: " + shape_str(x.shape()) + " is not a suffix of " + shape_str(shape));
  }
  const std::size_t nx = x.numel();
  const std::size_t n = shape_numel(shape);
  std::vector<double> out(n);
  const auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i % nx];
  return Tensor::make_result(shape, std::move(out), {x},
                             [nx](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i % nx] += self.grad[i];
                             },
                             "broadcast_to");
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto s = split_axis(x.shape(), axis);
  if (length == 0 || start + length > s.len) {
    throw DimensionError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of bounds for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * s.len + start) * s.inner), length * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {x},
                             [s, start, length](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (std::size_t o = 0; o < s.outer; ++o)
                                 for (std::size_t i = 0; i < length * s.inner; ++i)
                                   gx[(o * s.len + start) * s.inner + i] += self.grad[o * length * s.inner + i];
                             },
                             "narrow");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref));
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const auto total = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pv = parts[pi].data();
    const std::size_t chunk = lens[pi] * total.inner;
    for (std::size_t o = 0; o < total.outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total.len + offset) * total.inner));
    }
    offset += lens[pi];
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), parts,
                             [total, lens](Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t pi = 0; pi < lens.size(); ++pi) {
                                 const std::size_t chunk = lens[pi] * total.inner;
                                 if (auto gp = parent_grad(self, pi); !gp.empty()) {
                                   for (std::size_t o = 0; o < total.outer; ++o)
                                     for (std::size_t i = 0; i < chunk; ++i)
                                       gp[o * chunk + i] += self.grad[(o * total.len + offset) * total.inner + i];
                                 }
                                 offset += lens[pi];
                               }
                             },
                             "concat");
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result({}, {s}, {x},
                             [](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (auto& g : gx) g += self.grad[0];
                             },
                             "sum");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [](Node& self) {
                               auto gx = parent_grad(self, 0);
                               const auto& xv = parent_value(self, 0);
                               for (std::size_t i = 0; i < gx.size(); ++i)
                                 if (xv[i] > 0.0) gx[i] += self.grad[i];
                             },
                             "relu");
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [](Node& self) {
                               auto gx = parent_grad(self, 0);
                               const auto& xv = parent_value(self, 0);
                               const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
                               for (std::size_t i = 0; i < gx.size(); ++i) {
                                 const double v = xv[i];
                                 const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
                                 const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                                 gx[i] += self.grad[i] * (cdf + v * pdf);
                               }
                             },
                             "gelu");
}

Tensor dropout(const Tensor& x, double p, bool training, const DropoutKey& key) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const std::uint64_t base = derive_seed(key.run_seed, key.layer_id, key.step);
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = unit_from_bits(mix64(base + i));
    (*mask)[i] = u >= p ? keep_scale : 0.0;
    out[i] = xv[i] * (*mask)[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [mask](Node& self) {
                               auto gx = parent_grad(self, 0);
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
                             },
                             "dropout");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_finite(x, "softmax");
  const auto s = split_axis(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(xv[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= z;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x},
                             [s](Node& self) {
                               auto gx = parent_grad(self, 0);
                               const auto& y = self.value;
                               for (std::size_t o = 0; o < s.outer; ++o) {
                                 for (std::size_t in = 0; in < s.inner; ++in) {
                                   const std::size_t base = o * s.len * s.inner + in;
                                   double dot = 0.0;
                                   for (std::size_t j = 0; j < s.len; ++j) {
                                     const std::size_t idx = base + j * s.inner;
                                     dot += self.grad[idx] * y[idx];
                                   }
                                   for (std::size_t j = 0; j < s.len; ++j) {
                                     const std::size_t idx = base + j * s.inner;
                                     gx[idx] += y[idx] * (self.grad[idx] - dot);
                                   }
                                 }
                               }
                             },
                             "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: input has no feature axis");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " do not match feature size " + std::to_string(d));
  }
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * rs;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = gv[j] * xh + bv[j];
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x, gamma, beta},
                             [rows, d, xhat, rstd](Node& self) {
                               const auto& gv = parent_value(self, 1);
                               auto gx = parent_grad(self, 0);
                               auto gg = parent_grad(self, 1);
                               auto gb = parent_grad(self, 2);
                               std::vector<double> gxhat(d);
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* g = self.grad.data() + r * d;
                                 const double* xh = xhat->data() + r * d;
                                 if (!gg.empty())
                                   for (std::size_t j = 0; j < d; ++j) gg[j] += g[j] * xh[j];
                                 if (!gb.empty())
                                   for (std::size_t j = 0; j < d; ++j) gb[j] += g[j];
                                 if (gx.empty()) continue;
                                 double mean_g = 0.0;
                                 double mean_gx = 0.0;
                                 for (std::size_t j = 0; j < d; ++j) {
                                   gxhat[j] = g[j] * gv[j];
                                   mean_g += gxhat[j];
                                   mean_gx += gxhat[j] * xh[j];
                                 }
                                 mean_g /= static_cast<double>(d);
                                 mean_gx /= static_cast<double>(d);
                                 const double rs = (*rstd)[r];
                                 for (std::size_t j = 0; j < d; ++j)
                                   gx[r * d + j] += rs * (gxhat[j] - mean_g - xh[j] * mean_gx);
                               }
                             },
                             "layer_norm");
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [B,C], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.shape()[0];
  const std::size_t classes = logits.shape()[1];
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));
  }
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw LabelError("cross_entropy: label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
  require_finite(logits, "cross_entropy");
  auto logp = std::make_shared<std::vector<double>>(log_softmax_rows(logits.data(), batch, classes, 1.0));
  auto label_copy = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) loss -= (*logp)[i * classes + static_cast<std::size_t>(labels[i])];
  loss /= static_cast<double>(batch);
  return Tensor::make_result({}, {loss}, {logits},
                             [logp, label_copy, batch, classes](Node& self) {
                               auto gx = parent_grad(self, 0);
                               const double g = self.grad[0] / static_cast<double>(batch);
                               for (std::size_t i = 0; i < batch; ++i) {
                                 for (std::size_t c = 0; c < classes; ++c) {
                                   const double p = std::exp((*logp)[i * classes + c]);
                                   const double y = static_cast<int>(c) == (*label_copy)[i] ? 1.0 : 0.0;
                                   gx[i * classes + c] += g * (p - y);
                                 }
                               }
                             },
                             "cross_entropy");
}

Tensor kl_temperature(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("kl_temperature: temperature must be positive, got " + std::to_string(temperature));
  }
  if (teacher_logits.shape() != student_logits.shape() || teacher_logits.rank() != 2) {
    throw DimensionError("kl_temperature: shapes " + shape_str(teacher_logits.shape()) + " and " +
                         shape_str(student_logits.shape()) + " must be equal [B,C]");
  }
  require_finite(teacher_logits, "kl_temperature");
  require_finite(student_logits, "kl_temperature");
  const std::size_t batch = student_logits.shape()[0];
  const std::size_t classes = student_logits.shape()[1];
  const double inv_t = 1.0 / temperature;
  const auto logp = log_softmax_rows(teacher_logits.data(), batch, classes, inv_t);
  auto logq = std::make_shared<std::vector<double>>(log_softmax_rows(student_logits.data(), batch, classes, inv_t));
  auto p = std::make_shared<std::vector<double>>(logp.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double kl = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t idx = i * classes + c;
      (*p)[idx] = std::exp(logp[idx]);
      kl += (*p)[idx] * (logp[idx] - (*logq)[idx]);
    }
    total += std::max(kl, 0.0);
  }
  const double t2 = temperature * temperature;
  const double value = t2 * total / static_cast<double>(batch);
  // The teacher is not registered as a parent: it never receives gradient.
  return Tensor::make_result({}, {value}, {student_logits},
                             [p, logq, batch, classes, temperature](Node& self) {
                               auto gs = parent_grad(self, 0);
                               const double g = self.grad[0] * temperature / static_cast<double>(batch);
                               for (std::size_t idx = 0; idx < batch * classes; ++idx)
                                 gs[idx] += g * (std::exp((*logq)[idx]) - (*p)[idx]);
                             },
                             "kl_temperature");
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  return Tensor::make_result({}, {s / n}, {a, b},
                             [n](Node& self) {
                               const auto& av = parent_value(self, 0);
                               const auto& bv = parent_value(self, 1);
                               const double g = 2.0 * self.grad[0] / n;
                               if (auto ga = parent_grad(self, 0); !ga.empty())
                                 for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (av[i] - bv[i]);
                               if (auto gb = parent_grad(self, 1); !gb.empty())
                                 for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * (av[i] - bv[i]);
                             },
                             "mse");
}

}  // namespace painforge
