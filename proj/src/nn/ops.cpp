#include "sign/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sign/error.hpp"
#include "sign/simd.hpp"

namespace sign::nn::ops {
namespace {

using simd::ConstMatrix;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::ShapeMismatch,
              std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

// Parent gradient buffer, or nullptr when that parent is constant.
Tensor* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

const Tensor& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

void add_to(const double* src, double* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

ConstMatrix rows(const double* data, std::size_t cols) {
  return {data, static_cast<std::ptrdiff_t>(cols), 1};
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_error("matmul", sa, sb);
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out({m, n});
  simd::gemm(m, n, k, rows(a.value().data(), k), rows(b.value().data(), n), out.data(), n, false);
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    const Tensor& av = parent_value(self, 0);
    const Tensor& bv = parent_value(self, 1);
    const ConstMatrix dc = rows(self.grad.data(), n);
    if (Tensor* da = parent_grad(self, 0)) {
      simd::gemm(m, k, n, dc, rows(bv.data(), n).transposed(), da->data(), k, true);
    }
    if (Tensor* db = parent_grad(self, 1)) {
      simd::gemm(k, n, m, rows(av.data(), k).transposed(), dc, db->data(), n, true);
    }
  });
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) shape_error("bmm", sa, sb);
  const std::size_t g = sa[0], m = sa[1], k = sa[2];
  const std::size_t n = transpose_b ? sb[1] : sb[2];
  if ((transpose_b ? sb[2] : sb[1]) != k) shape_error("bmm", sa, sb);
  Tensor out({g, m, n});
  auto b_view = [=](const double* base) {
    return transpose_b ? rows(base, k).transposed() : rows(base, n);
  };
  for (std::size_t i = 0; i < g; ++i) {
    simd::gemm(m, n, k, rows(a.value().data() + i * m * k, k), b_view(b.value().data() + i * k * n),
               out.data() + i * m * n, n, false);
  }
  return make_result(std::move(out), {a, b}, [=](Node& self) {
    const Tensor& av = parent_value(self, 0);
    const Tensor& bv = parent_value(self, 1);
    Tensor* da = parent_grad(self, 0);
    Tensor* db = parent_grad(self, 1);
    for (std::size_t i = 0; i < g; ++i) {
      const ConstMatrix dc = rows(self.grad.data() + i * m * n, n);
      const double* bi = bv.data() + i * k * n;
      const double* ai = av.data() + i * m * k;
      if (da) {
        // dA = dC * B^T, where B is k x n (or stored n x k when transposed).
        const ConstMatrix bt = transpose_b ? rows(bi, k) : rows(bi, n).transposed();
        simd::gemm(m, k, n, dc, bt, da->data() + i * m * k, k, true);
      }
      if (db) {
        if (transpose_b) {
          // B stored n x k: dB = dC^T * A.
          simd::gemm(n, k, m, dc.transposed(), rows(ai, k), db->data() + i * k * n, k, true);
        } else {
          simd::gemm(k, n, m, rows(ai, k).transposed(), dc, db->data() + i * k * n, n, true);
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor out = a.value();
  simd::axpy(1.0, b.value().data(), out.data(), out.size());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (Tensor* g = parent_grad(self, i)) simd::axpy(1.0, self.grad.data(), g->data(), g->size());
    }
  });
}

Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tensor out = a.value();
  simd::axpy(-1.0, b.value().data(), out.data(), out.size());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) simd::axpy(1.0, self.grad.data(), g->data(), g->size());
    if (Tensor* g = parent_grad(self, 1)) simd::axpy(-1.0, self.grad.data(), g->data(), g->size());
  });
}

Var mul(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = parent_value(self, 0);
    const Tensor& bv = parent_value(self, 1);
    if (Tensor* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (Tensor* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return make_result(std::move(out), {a}, [factor](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) simd::axpy(factor, self.grad.data(), g->data(), g->size());
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t c = last_dim(x.value());
  if (bias.shape() != Shape{c}) shape_error("add_bias", x.shape(), bias.shape());
  Tensor out = x.value();
  const std::size_t r = out.size() / c;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias.value()[j];
  }
  return make_result(std::move(out), {x, bias}, [r, c](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) simd::axpy(1.0, self.grad.data(), g->data(), g->size());
    if (Tensor* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < r; ++i) add_to(self.grad.data() + i * c, g->data(), c);
    }
  });
}

Var add_tiled(const Var& x, const Var& t) {
  const std::size_t tile = t.value().size();
  if (tile == 0 || x.value().size() % tile != 0) shape_error("add_tiled", x.shape(), t.shape());
  const std::size_t reps = x.value().size() / tile;
  Tensor out = x.value();
  for (std::size_t r = 0; r < reps; ++r) simd::axpy(1.0, t.value().data(), out.data() + r * tile, tile);
  return make_result(std::move(out), {x, t}, [reps, tile](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) simd::axpy(1.0, self.grad.data(), g->data(), g->size());
    if (Tensor* g = parent_grad(self, 1)) {
      for (std::size_t r = 0; r < reps; ++r) simd::axpy(1.0, self.grad.data() + r * tile, g->data(), tile);
    }
  });
}

Var relu(const Var& x) {
  record_activation_pattern(x.value().values());
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {x}, [](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      const Tensor& xv = parent_value(self, 0);
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (xv[i] > 0.0) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double y = self.value[i];
        (*g)[i] += self.grad[i] * y * (1.0 - y);
      }
    }
  });
}

Var abs(const Var& x) {
  record_activation_pattern(x.value().values());
  Tensor out = x.value();
  for (double& v : out.values()) v = std::abs(v);
  return make_result(std::move(out), {x}, [](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      const Tensor& xv = parent_value(self, 0);
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double s = xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
        (*g)[i] += self.grad[i] * s;
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t c = last_dim(x.value());
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    shape_error("layer_norm", x.shape(), gamma.shape());
  }
  const std::size_t r = x.value().size() / c;
  Tensor out(x.shape());
  // Normalized values and inverse std per row, kept for the backward rule.
  Tensor xhat(x.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = x.value().data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xi[j] - mu) * inv_std[i];
      xhat[i * c + j] = h;
      out[i * c + j] = h * gamma.value()[j] + beta.value()[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    const Tensor& gv = parent_value(self, 1);
    Tensor* dx = parent_grad(self, 0);
    Tensor* dgamma = parent_grad(self, 1);
    Tensor* dbeta = parent_grad(self, 2);
    std::vector<double> dh(c);
    for (std::size_t i = 0; i < r; ++i) {
      const double* dy = self.grad.data() + i * c;
      const double* h = xhat.data() + i * c;
      if (dgamma) for (std::size_t j = 0; j < c; ++j) (*dgamma)[j] += dy[j] * h[j];
      if (dbeta) for (std::size_t j = 0; j < c; ++j) (*dbeta)[j] += dy[j];
      if (!dx) continue;
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dh[j] = dy[j] * gv[j];
        mean_dh += dh[j];
        mean_dh_h += dh[j] * h[j];
      }
      mean_dh /= static_cast<double>(c);
      mean_dh_h /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) {
        (*dx)[i * c + j] += inv_std[i] * (dh[j] - mean_dh - h[j] * mean_dh_h);
      }
    }
  });
}

Var softmax(const Var& x) {
  const std::size_t c = last_dim(x.value());
  const std::size_t r = x.value().size() / c;
  Tensor out = x.value();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += (row[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) row[j] /= total;
  }
  return make_result(std::move(out), {x}, [r, c](Node& self) {
    Tensor* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* dy = self.grad.data() + i * c;
      const double inner = simd::dot(y, dy, c);
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += y[j] * (dy[j] - inner);
    }
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "mean of an empty tensor");
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  Tensor out({1}, total / static_cast<double>(n));
  return make_result(std::move(out), {x}, [n](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      const double d = self.grad[0] / static_cast<double>(n);
      for (double& v : g->values()) v += d;
    }
  });
}

Var sum_last(const Var& x) {
  const std::size_t c = last_dim(x.value());
  const std::size_t r = x.value().size() / c;
  Shape shape = x.shape();
  if (!shape.empty()) shape.pop_back();
  if (shape.empty()) shape = {1};
  Tensor out(shape);
  for (std::size_t i = 0; i < r; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += x.value()[i * c + j];
    out[i] = total;
  }
  return make_result(std::move(out), {x}, [r, c](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i];
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) simd::axpy(1.0, self.grad.data(), g->data(), g->size());
  });
}

Var concat_last(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[0] != sb[0]) shape_error("concat_last", sa, sb);
  const std::size_t r = sa[0], ca = sa[1], cb = sb[1];
  Tensor out({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.value().data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b.value().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  return make_result(std::move(out), {a, b}, [r, ca, cb](Node& self) {
    const std::size_t w = ca + cb;
    if (Tensor* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) simd::axpy(1.0, self.grad.data() + i * w, g->data() + i * ca, ca);
    }
    if (Tensor* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < r; ++i) {
        simd::axpy(1.0, self.grad.data() + i * w + ca, g->data() + i * cb, cb);
      }
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t batch, height, width, in_ch, out_ch, kernel, stride, padding, out_h, out_w;

  [[nodiscard]] std::size_t patch_len() const { return kernel * kernel * in_ch; }
  [[nodiscard]] std::size_t out_pixels() const { return batch * out_h * out_w; }
};

// Output pixels are processed in blocks so the unfolded patches stay in cache
// and the scratch buffers are reused across calls.
constexpr std::size_t kConvBlockElems = std::size_t{1} << 15;

std::size_t block_rows(const ConvGeometry& g) { return std::max<std::size_t>(1, kConvBlockElems / g.patch_len()); }

double* scratch(std::vector<double>& buf, std::size_t n) {
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

// Visits each kernel tap of output pixels [first, last): fn(row, tap_offset, input_offset or -1).
template <typename Fn>
void for_each_tap(const ConvGeometry& g, std::size_t first, std::size_t last, Fn&& fn) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t r = first; r < last; ++r) {
    const std::size_t b = r / plane;
    const std::size_t oy = (r % plane) / g.out_w;
    const std::size_t ox = r % g.out_w;
    const std::size_t base = b * g.height * g.width;
    std::size_t tap = 0;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
      const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.height);
      for (std::size_t kx = 0; kx < g.kernel; ++kx, tap += g.in_ch) {
        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
        const bool ok = row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width);
        fn(r - first, tap,
           ok ? static_cast<std::ptrdiff_t>((base + static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)) *
                                            g.in_ch)
              : std::ptrdiff_t{-1});
      }
    }
  }
}

// cols[(b, oy, ox), (ky, kx, ci)] for output pixels [first, last); padding reads zero.
void im2col(const ConvGeometry& g, const double* x, std::size_t first, std::size_t last, double* cols) {
  const std::size_t len = g.patch_len();
  if (g.in_ch == 1) {
    for_each_tap(g, first, last, [&](std::size_t row, std::size_t tap, std::ptrdiff_t src) {
      cols[row * len + tap] = src < 0 ? 0.0 : x[src];
    });
    return;
  }
  for_each_tap(g, first, last, [&](std::size_t row, std::size_t tap, std::ptrdiff_t src) {
    double* dst = cols + row * len + tap;
    if (src < 0) {
      std::fill_n(dst, g.in_ch, 0.0);
    } else {
      std::copy_n(x + src, g.in_ch, dst);
    }
  });
}

void col2im_add(const ConvGeometry& g, const double* cols, std::size_t first, std::size_t last, double* dx) {
  const std::size_t len = g.patch_len();
  for_each_tap(g, first, last, [&](std::size_t row, std::size_t tap, std::ptrdiff_t dst) {
    if (dst < 0) return;
    const double* src = cols + row * len + tap;
    for (std::size_t c = 0; c < g.in_ch; ++c) dx[dst + static_cast<std::ptrdiff_t>(c)] += src[c];
  });
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride, std::size_t padding,
           bool fuse_relu) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[1] != sw[2] || sw[3] != sx[3] || stride == 0) {
    shape_error("conv2d", sx, sw);
  }
  if (bias.shape() != Shape{sw[0]}) shape_error("conv2d bias", sw, bias.shape());
  ConvGeometry g{sx[0], sx[1], sx[2], sx[3], sw[0], sw[1], stride, padding, 0, 0};
  if (g.height + 2 * padding < g.kernel || g.width + 2 * padding < g.kernel) shape_error("conv2d", sx, sw);
  g.out_h = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel) / stride + 1;

  thread_local std::vector<double> cols_buf;
  const std::size_t len = g.patch_len();
  const std::size_t pixels = g.out_pixels();
  const std::size_t block = block_rows(g);
  double* cols = scratch(cols_buf, block * len);
  Tensor out({g.batch, g.out_h, g.out_w, g.out_ch});
  const double* bv = bias.value().data();
  for (std::size_t p = 0; p < pixels; ++p) std::copy_n(bv, g.out_ch, out.data() + p * g.out_ch);
  // out[p, o] += sum_q cols[p, q] * weight[o, q]
  const ConstMatrix wt = rows(weight.value().data(), len).transposed();
  for (std::size_t first = 0; first < pixels; first += block) {
    const std::size_t last = std::min(pixels, first + block);
    im2col(g, x.value().data(), first, last, cols);
    simd::gemm(last - first, g.out_ch, len, rows(cols, len), wt, out.data() + first * g.out_ch, g.out_ch, true);
  }
  if (fuse_relu) {
    record_activation_pattern(out.values());
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  }

  return make_result(std::move(out), {x, weight, bias}, [g, fuse_relu](Node& self) {
    const std::size_t len = g.patch_len();
    const std::size_t pixels = g.out_pixels();
    const std::size_t block = block_rows(g);
    thread_local std::vector<double> masked_buf;
    const double* dout = self.grad.data();
    if (fuse_relu) {
      double* masked = scratch(masked_buf, self.grad.size());
      for (std::size_t i = 0; i < self.grad.size(); ++i) masked[i] = self.value[i] > 0.0 ? self.grad[i] : 0.0;
      dout = masked;
    }
    Tensor* dx = parent_grad(self, 0);
    Tensor* dw = parent_grad(self, 1);
    if (Tensor* db = parent_grad(self, 2)) {
      for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t o = 0; o < g.out_ch; ++o) (*db)[o] += dout[p * g.out_ch + o];
      }
    }
    thread_local std::vector<double> cols_buf, dcols_buf;
    double* cols = dw ? scratch(cols_buf, block * len) : nullptr;
    double* dcols = dx ? scratch(dcols_buf, block * len) : nullptr;
    const double* xv = parent_value(self, 0).data();
    const double* wv = parent_value(self, 1).data();
    for (std::size_t first = 0; first < pixels; first += block) {
      const std::size_t last = std::min(pixels, first + block);
      const std::size_t n = last - first;
      const ConstMatrix dblock = rows(dout + first * g.out_ch, g.out_ch);
      if (dw) {
        im2col(g, xv, first, last, cols);
        simd::gemm(g.out_ch, len, n, dblock.transposed(), rows(cols, len), dw->data(), len, true);
      }
      if (dx) {
        simd::gemm(n, len, g.out_ch, dblock, rows(wv, len), dcols, len, false);
        col2im_add(g, dcols, first, last, dx->data());
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) shape_error("global_avg_pool", s, Shape{});
  const std::size_t b = s[0], hw = s[1] * s[2], c = s[3];
  Tensor out({b, c});
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t i = 0; i < b; ++i) {
    double* o = out.data() + i * c;
    for (std::size_t p = 0; p < hw; ++p) add_to(x.value().data() + (i * hw + p) * c, o, c);
    for (std::size_t k = 0; k < c; ++k) o[k] *= inv;
  }
  return make_result(std::move(out), {x}, [b, hw, c, inv](Node& self) {
    Tensor* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < b; ++i) {
      const double* d = self.grad.data() + i * c;
      for (std::size_t p = 0; p < hw; ++p) {
        double* dst = g->data() + (i * hw + p) * c;
        for (std::size_t k = 0; k < c; ++k) dst[k] += inv * d[k];
      }
    }
  });
}

Var split_heads(const Var& x, std::size_t batch, std::size_t heads, std::size_t head_dim,
                std::size_t offset) {
  const Shape& s = x.shape();
  if (s.size() != 2 || batch == 0 || s[0] % batch != 0 || offset + heads * head_dim > s[1]) {
    shape_error("split_heads", s, Shape{batch, heads, head_dim});
  }
  const std::size_t tokens = s[0] / batch, width = s[1];
  Tensor out({batch * heads, tokens, head_dim});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < tokens; ++t)
        std::copy_n(x.value().data() + (b * tokens + t) * width + offset + h * head_dim, head_dim,
                    out.data() + ((b * heads + h) * tokens + t) * head_dim);
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < tokens; ++t)
          add_to(self.grad.data() + ((b * heads + h) * tokens + t) * head_dim,
                 g->data() + (b * tokens + t) * width + offset + h * head_dim, head_dim);
  });
}

Var merge_heads(const Var& x, std::size_t batch, std::size_t heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != batch * heads) shape_error("merge_heads", s, Shape{batch, heads});
  const std::size_t tokens = s[1], head_dim = s[2], width = heads * head_dim;
  Tensor out({batch * tokens, width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < tokens; ++t)
        std::copy_n(x.value().data() + ((b * heads + h) * tokens + t) * head_dim, head_dim,
                    out.data() + (b * tokens + t) * width + h * head_dim);
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < tokens; ++t)
          add_to(self.grad.data() + (b * tokens + t) * width + h * head_dim,
                 g->data() + ((b * heads + h) * tokens + t) * head_dim, head_dim);
  });
}

}  // namespace sign::nn::ops
