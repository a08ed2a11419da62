#include "ossdet/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ossdet/simd/kernels.hpp"

namespace ossdet::tensor {
namespace {

const simd::KernelTable& kt() { return simd::kernels(); }

[[noreturn]] void shape_fail(const std::string& op, const std::string& what) {
  throw ShapeError(op + ": " + what);
}

struct ConvGeometry {
  std::size_t cin, h, w, k, stride, pad, ho, wo;
  std::size_t col_rows() const { return cin * k * k; }
  std::size_t col_cols() const { return ho * wo; }
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeometry& g, double* dx) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

// Strides of a one-sided broadcast operand b against the full shape a.
struct BroadcastStrides {
  std::size_t n, c, h, w;
};

BroadcastStrides broadcast_strides(const std::string& op, const Shape& a, const Shape& b) {
  auto ok = [](std::size_t bd, std::size_t ad) { return bd == 1 || bd == ad; };
  if (!ok(b.n, a.n) || !ok(b.c, a.c) || !ok(b.h, a.h) || !ok(b.w, a.w)) {
    shape_fail(op, "cannot broadcast " + b.str() + " onto " + a.str());
  }
  const std::size_t sw = b.w == 1 ? 0 : 1;
  const std::size_t sh = b.h == 1 ? 0 : b.w;
  const std::size_t sc = b.c == 1 ? 0 : b.h * b.w;
  const std::size_t sn = b.n == 1 ? 0 : b.c * b.h * b.w;
  return {sn, sc, sh, sw};
}

// Visits (flat index into a, flat index into b) pairs in a's row-major order.
template <typename F>
void for_each_broadcast(const Shape& a, const BroadcastStrides& s, F&& f) {
  std::size_t ia = 0;
  for (std::size_t n = 0; n < a.n; ++n)
    for (std::size_t c = 0; c < a.c; ++c)
      for (std::size_t h = 0; h < a.h; ++h) {
        const std::size_t base = n * s.n + c * s.c + h * s.h;
        for (std::size_t w = 0; w < a.w; ++w, ++ia) f(ia, base + w * s.w);
      }
}

enum class Binary { add, sub, mul, div };

const char* binary_name(Binary kind) {
  switch (kind) {
    case Binary::add: return "add";
    case Binary::sub: return "sub";
    case Binary::mul: return "mul";
    case Binary::div: return "div";
  }
  return "binary";
}

Tensor binary(const Tensor& a, const Tensor& b, Binary kind) {
  const char* name = binary_name(kind);
  const Shape sa = a.shape();
  const BroadcastStrides st = broadcast_strides(name, sa, b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(sa.numel());
  for_each_broadcast(sa, st, [&](std::size_t i, std::size_t j) {
    switch (kind) {
      case Binary::add: out[i] = av[i] + bv[j]; break;
      case Binary::sub: out[i] = av[i] - bv[j]; break;
      case Binary::mul: out[i] = av[i] * bv[j]; break;
      case Binary::div: out[i] = av[i] / bv[j]; break;
    }
  });
  return make_op(name, sa, std::move(out), {a, b}, [a, b, sa, st, kind](const GradContext& ctx) {
    const auto g = ctx.out_grad();
    const auto ga = ctx.input_grad(0);
    const auto gb = ctx.input_grad(1);
    const auto av = a.data();
    const auto bv = b.data();
    for_each_broadcast(sa, st, [&](std::size_t i, std::size_t j) {
      switch (kind) {
        case Binary::add:
          if (!ga.empty()) ga[i] += g[i];
          if (!gb.empty()) gb[j] += g[i];
          break;
        case Binary::sub:
          if (!ga.empty()) ga[i] += g[i];
          if (!gb.empty()) gb[j] -= g[i];
          break;
        case Binary::mul:
          if (!ga.empty()) ga[i] += g[i] * bv[j];
          if (!gb.empty()) gb[j] += g[i] * av[i];
          break;
        case Binary::div:
          if (!ga.empty()) ga[i] += g[i] / bv[j];
          if (!gb.empty()) gb[j] -= g[i] * av[i] / (bv[j] * bv[j]);
          break;
      }
    });
  });
}

constexpr double kOneBelow = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;

double stable_sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  // Keep the open range (0, 1) even where the exact value rounds to 0 or 1.
  return std::clamp(s, std::numeric_limits<double>::denorm_min(), kOneBelow);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) {
    shape_fail("conv2d", "kernel must be square with odd size, got " + ws.str());
  }
  if (ws.c != xs.c) {
    shape_fail("conv2d", "input " + xs.str() + " has " + std::to_string(xs.c) +
                             " channels but kernel " + ws.str() + " expects " +
                             std::to_string(ws.c));
  }
  if (stride == 0) shape_fail("conv2d", "stride must be positive");
  if (xs.h + 2 * pad < ws.h || xs.w + 2 * pad < ws.w) {
    shape_fail("conv2d", "padded input " + xs.str() + " smaller than kernel " + ws.str());
  }
  if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1}) {
    shape_fail("conv2d", "bias " + bias.shape().str() + " does not match " +
                             std::to_string(ws.n) + " output channels");
  }
  const ConvGeometry g{xs.c,   xs.h, xs.w, ws.h, stride, pad, (xs.h + 2 * pad - ws.h) / stride + 1,
                       (xs.w + 2 * pad - ws.w) / stride + 1};
  const std::size_t cout = ws.n;
  const std::size_t rows = g.col_rows();
  const std::size_t cols = g.col_cols();
  const Shape os{xs.n, cout, g.ho, g.wo};

  std::vector<double> out(os.numel(), 0.0);
  std::vector<double> col(g.direct() ? 0 : rows * cols);
  const auto xv = x.data();
  const auto wv = weight.data();
  for (std::size_t n = 0; n < xs.n; ++n) {
    const double* xn = xv.data() + n * xs.item();
    const double* cp = xn;
    if (!g.direct()) {
      im2col(xn, g, col.data());
      cp = col.data();
    }
    double* on = out.data() + n * os.item();
    if (bias.defined()) {
      const auto bv = bias.data();
      for (std::size_t o = 0; o < cout; ++o) std::fill(on + o * cols, on + (o + 1) * cols, bv[o]);
    }
    kt().gemm_nn(cout, cols, rows, wv.data(), rows, cp, cols, on, cols);
  }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op("conv2d", os, std::move(out), std::move(inputs),
                 [x, weight, g, cout, os, has_bias](const GradContext& ctx) {
                   const std::size_t rows = g.col_rows();
                   const std::size_t cols = g.col_cols();
                   const auto gout = ctx.out_grad();
                   const auto gx = ctx.input_grad(0);
                   const auto gw = ctx.input_grad(1);
                   const auto gb = has_bias ? ctx.input_grad(2) : std::span<double>{};
                   const auto xv = x.data();
                   const auto wv = weight.data();
                   const std::size_t xitem = g.cin * g.h * g.w;
                   std::vector<double> col(g.direct() ? 0 : rows * cols);
                   std::vector<double> dcol(g.direct() || gx.empty() ? 0 : rows * cols);
                   for (std::size_t n = 0; n < os.n; ++n) {
                     const double* go = gout.data() + n * os.item();
                     if (!gb.empty()) {
                       for (std::size_t o = 0; o < cout; ++o) {
                         double s = 0.0;
                         for (std::size_t p = 0; p < cols; ++p) s += go[o * cols + p];
                         gb[o] += s;
                       }
                     }
                     if (!gw.empty()) {
                       const double* xn = xv.data() + n * xitem;
                       const double* cp = xn;
                       if (!g.direct()) {
                         im2col(xn, g, col.data());
                         cp = col.data();
                       }
                       kt().gemm_nt(cout, rows, cols, go, cols, cp, cols, gw.data(), rows);
                     }
                     if (!gx.empty()) {
                       double* gxn = gx.data() + n * xitem;
                       if (g.direct()) {
                         kt().gemm_tn(rows, cols, cout, wv.data(), rows, go, cols, gxn, cols);
                       } else {
                         std::fill(dcol.begin(), dcol.end(), 0.0);
                         kt().gemm_tn(rows, cols, cout, wv.data(), rows, go, cols, dcol.data(),
                                      cols);
                         col2im(dcol.data(), g, gxn);
                       }
                     }
                   }
                 });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  return conv2d(x, weight, bias, stride, (weight.shape().h - 1) / 2);
}

Tensor pointwise(const Tensor& x, Activation f) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  const char* name = "relu";
  switch (f) {
    case Activation::sigmoid:
      name = "sigmoid";
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = stable_sigmoid(xv[i]);
      break;
    case Activation::tanh:
      name = "tanh";
      for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = std::clamp(std::tanh(xv[i]), -kOneBelow, kOneBelow);
      }
      break;
    case Activation::relu:
      // NaN passes through so corrupt inputs surface as a non-finite loss.
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] <= 0.0 ? 0.0 : xv[i];
      break;
  }
  return make_op(name, x.shape(), std::move(out), {x}, [f](const GradContext& ctx) {
    const auto g = ctx.out_grad();
    const auto y = ctx.out_data();
    const auto gx = ctx.input_grad(0);
    switch (f) {
      case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (y[i] > 0.0) gx[i] += g[i];
        }
        break;
    }
  });
}

Tensor sigmoid(const Tensor& x) { return pointwise(x, Activation::sigmoid); }
Tensor tanh(const Tensor& x) { return pointwise(x, Activation::tanh); }
Tensor relu(const Tensor& x) { return pointwise(x, Activation::relu); }

Tensor pool(const Tensor& x, PoolKind kind) {
  const Shape s = x.shape();
  const auto xv = x.data();
  switch (kind) {
    case PoolKind::gap: {
      if (s.plane() == 0) shape_fail("gap", "empty spatial extent");
      const Shape os{s.n, s.c, 1, 1};
      std::vector<double> out(os.numel());
      const double inv = 1.0 / static_cast<double>(s.plane());
      for (std::size_t i = 0; i < os.numel(); ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < s.plane(); ++p) acc += xv[i * s.plane() + p];
        out[i] = acc * inv;
      }
      return make_op("gap", os, std::move(out), {x}, [s, inv](const GradContext& ctx) {
        const auto g = ctx.out_grad();
        const auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = g[i] * inv;
          for (std::size_t p = 0; p < s.plane(); ++p) gx[i * s.plane() + p] += v;
        }
      });
    }
    case PoolKind::avg3x3s2: {
      if (s.h % 2 != 0 || s.w % 2 != 0 || s.h == 0 || s.w == 0) {
        shape_fail("avg3x3s2", "spatial dims must be even and positive, got " + s.str());
      }
      const Shape os{s.n, s.c, s.h / 2, s.w / 2};
      std::vector<double> out(os.numel());
      auto window = [](std::size_t o, std::size_t extent, std::size_t& lo, std::size_t& hi) {
        lo = o == 0 ? 0 : o * 2 - 1;
        hi = std::min(extent - 1, o * 2 + 1);
      };
      for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
        const double* src = xv.data() + nc * s.plane();
        double* dst = out.data() + nc * os.plane();
        for (std::size_t oy = 0; oy < os.h; ++oy) {
          std::size_t y0, y1;
          window(oy, s.h, y0, y1);
          for (std::size_t ox = 0; ox < os.w; ++ox) {
            std::size_t x0, x1;
            window(ox, s.w, x0, x1);
            double acc = 0.0;
            for (std::size_t yy = y0; yy <= y1; ++yy)
              for (std::size_t xx = x0; xx <= x1; ++xx) acc += src[yy * s.w + xx];
            dst[oy * os.w + ox] = acc / static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
          }
        }
      }
      return make_op("avg3x3s2", os, std::move(out), {x}, [s, os, window](const GradContext& ctx) {
        const auto g = ctx.out_grad();
        const auto gx = ctx.input_grad(0);
        for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
          const double* go = g.data() + nc * os.plane();
          double* dst = gx.data() + nc * s.plane();
          for (std::size_t oy = 0; oy < os.h; ++oy) {
            std::size_t y0, y1;
            window(oy, s.h, y0, y1);
            for (std::size_t ox = 0; ox < os.w; ++ox) {
              std::size_t x0, x1;
              window(ox, s.w, x0, x1);
              const double v =
                  go[oy * os.w + ox] / static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
              for (std::size_t yy = y0; yy <= y1; ++yy)
                for (std::size_t xx = x0; xx <= x1; ++xx) dst[yy * s.w + xx] += v;
            }
          }
        }
      });
    }
    case PoolKind::channel_mean: {
      if (s.c == 0) shape_fail("channel_mean", "no channels");
      const Shape os{s.n, 1, s.h, s.w};
      std::vector<double> out(os.numel(), 0.0);
      const double inv = 1.0 / static_cast<double>(s.c);
      for (std::size_t n = 0; n < s.n; ++n) {
        double* dst = out.data() + n * s.plane();
        for (std::size_t c = 0; c < s.c; ++c) {
          const double* src = xv.data() + (n * s.c + c) * s.plane();
          for (std::size_t p = 0; p < s.plane(); ++p) dst[p] += src[p];
        }
        for (std::size_t p = 0; p < s.plane(); ++p) dst[p] *= inv;
      }
      return make_op("channel_mean", os, std::move(out), {x}, [s, inv](const GradContext& ctx) {
        const auto g = ctx.out_grad();
        const auto gx = ctx.input_grad(0);
        for (std::size_t n = 0; n < s.n; ++n)
          for (std::size_t c = 0; c < s.c; ++c) {
            double* dst = gx.data() + (n * s.c + c) * s.plane();
            const double* src = g.data() + n * s.plane();
            for (std::size_t p = 0; p < s.plane(); ++p) dst[p] += src[p] * inv;
          }
      });
    }
  }
  shape_fail("pool", "unknown kind");
}

Tensor upsample2x(const Tensor& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  const auto xv = x.data();
  std::vector<double> out(os.numel());
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = xv.data() + nc * s.plane();
    double* dst = out.data() + nc * os.plane();
    for (std::size_t y = 0; y < os.h; ++y)
      for (std::size_t xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[(y / 2) * s.w + xx / 2];
  }
  return make_op("upsample2x", os, std::move(out), {x}, [s, os](const GradContext& ctx) {
    const auto g = ctx.out_grad();
    const auto gx = ctx.input_grad(0);
    for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
      const double* src = g.data() + nc * os.plane();
      double* dst = gx.data() + nc * s.plane();
      for (std::size_t y = 0; y < os.h; ++y)
        for (std::size_t xx = 0; xx < os.w; ++xx) dst[(y / 2) * s.w + xx / 2] += src[y * os.w + xx];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.c != 1 || sb.c != 1) {
    shape_fail("matmul", "operands must be (n,1,rows,cols) views, got " + sa.str() + " and " +
                             sb.str());
  }
  if (sa.n != sb.n) shape_fail("matmul", "batch mismatch " + sa.str() + " vs " + sb.str());
  if (trans_a && trans_b) shape_fail("matmul", "transposing both operands is not supported");
  const std::size_t m = trans_a ? sa.w : sa.h;
  const std::size_t ka = trans_a ? sa.h : sa.w;
  const std::size_t kb = trans_b ? sb.w : sb.h;
  const std::size_t nn = trans_b ? sb.h : sb.w;
  if (ka != kb) {
    shape_fail("matmul", "inner dimensions differ: " + sa.str() + (trans_a ? "^T" : "") + " x " +
                             sb.str() + (trans_b ? "^T" : ""));
  }
  const std::size_t k = ka;
  const Shape os{sa.n, 1, m, nn};
  std::vector<double> out(os.numel(), 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t asz = sa.plane(), bsz = sb.plane(), osz = os.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    const double* ap = av.data() + n * asz;
    const double* bp = bv.data() + n * bsz;
    double* cp = out.data() + n * osz;
    if (trans_a) {
      kt().gemm_tn(m, nn, k, ap, sa.w, bp, sb.w, cp, nn);
    } else if (trans_b) {
      kt().gemm_nt(m, nn, k, ap, sa.w, bp, sb.w, cp, nn);
    } else {
      kt().gemm_nn(m, nn, k, ap, sa.w, bp, sb.w, cp, nn);
    }
  }
  return make_op("matmul", os, std::move(out), {a, b},
                 [a, b, sa, sb, m, nn, k, trans_a, trans_b](const GradContext& ctx) {
                   const auto g = ctx.out_grad();
                   const auto ga = ctx.input_grad(0);
                   const auto gb = ctx.input_grad(1);
                   const auto av = a.data();
                   const auto bv = b.data();
                   const std::size_t asz = sa.plane(), bsz = sb.plane(), osz = m * nn;
                   for (std::size_t n = 0; n < sa.n; ++n) {
                     const double* ap = av.data() + n * asz;
                     const double* bp = bv.data() + n * bsz;
                     const double* gp = g.data() + n * osz;
                     if (!trans_a && !trans_b) {
                       // C = A B: dA += dC B^T, dB += A^T dC
                       if (!ga.empty()) kt().gemm_nt(m, k, nn, gp, nn, bp, nn, ga.data() + n * asz, k);
                       if (!gb.empty()) kt().gemm_tn(k, nn, m, ap, k, gp, nn, gb.data() + n * bsz, nn);
                     } else if (trans_a) {
                       // C = A^T B, A (k,m): dA += B dC^T, dB += A dC
                       if (!ga.empty()) kt().gemm_nt(k, m, nn, bp, nn, gp, nn, ga.data() + n * asz, m);
                       if (!gb.empty()) kt().gemm_nn(k, nn, m, ap, m, gp, nn, gb.data() + n * bsz, nn);
                     } else {
                       // C = A B^T, B (nn,k): dA += dC B, dB += dC^T A
                       if (!ga.empty()) kt().gemm_nn(m, k, nn, gp, nn, bp, k, ga.data() + n * asz, k);
                       if (!gb.empty()) kt().gemm_tn(nn, k, m, gp, nn, ap, k, gb.data() + n * bsz, k);
                     }
                   }
                 });
}

Tensor softmax(const Tensor& x, int axis) {
  const Shape s = x.shape();
  std::size_t len = 0, stride = 0;
  switch (axis) {
    case 1: len = s.c; stride = s.plane(); break;
    case 2: len = s.h; stride = s.w; break;
    case 3: len = s.w; stride = 1; break;
    default: shape_fail("softmax", "axis must be 1, 2 or 3, got " + std::to_string(axis));
  }
  if (len == 0) shape_fail("softmax", "empty axis in " + s.str());
  // Enumerate the starting offset of every line along the axis.
  std::vector<std::size_t> starts;
  starts.reserve(s.numel() / len);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < (axis == 1 ? 1 : s.c); ++c)
      for (std::size_t h = 0; h < (axis == 2 ? 1 : s.h); ++h)
        for (std::size_t w = 0; w < (axis == 3 ? 1 : s.w); ++w)
          starts.push_back(((n * s.c + c) * s.h + h) * s.w + w);

  const auto xv = x.data();
  std::vector<double> out(s.numel());
  for (const std::size_t base : starts) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xv[base + i * stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(xv[base + i * stride] - mx);
      out[base + i * stride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= z;
  }
  return make_op("softmax", s, std::move(out), {x},
                 [starts = std::move(starts), len, stride](const GradContext& ctx) {
                   const auto g = ctx.out_grad();
                   const auto y = ctx.out_data();
                   const auto gx = ctx.input_grad(0);
                   for (const std::size_t base : starts) {
                     double dotv = 0.0;
                     for (std::size_t i = 0; i < len; ++i) {
                       dotv += g[base + i * stride] * y[base + i * stride];
                     }
                     for (std::size_t i = 0; i < len; ++i) {
                       const std::size_t j = base + i * stride;
                       gx[j] += y[j] * (g[j] - dotv);
                     }
                   }
                 });
}

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) shape_fail("concat_channels", "no inputs");
  const Shape s0 = xs[0].shape();
  std::size_t ctot = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& t : xs) {
    const Shape s = t.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      shape_fail("concat_channels", "incompatible " + s.str() + " vs " + s0.str());
    }
    offsets.push_back(ctot);
    ctot += s.c;
  }
  const Shape os{s0.n, ctot, s0.h, s0.w};
  std::vector<double> out(os.numel());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape s = xs[i].shape();
    const auto v = xs[i].data();
    for (std::size_t n = 0; n < s.n; ++n) {
      std::copy_n(v.data() + n * s.item(), s.item(),
                  out.data() + n * os.item() + offsets[i] * os.plane());
    }
  }
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  std::vector<Shape> shapes;
  for (const Tensor& t : xs) shapes.push_back(t.shape());
  return make_op("concat_channels", os, std::move(out), std::move(inputs),
                 [os, offsets, shapes](const GradContext& ctx) {
                   const auto g = ctx.out_grad();
                   for (std::size_t i = 0; i < shapes.size(); ++i) {
                     const auto gi = ctx.input_grad(i);
                     if (gi.empty()) continue;
                     const Shape s = shapes[i];
                     for (std::size_t n = 0; n < s.n; ++n) {
                       const double* src = g.data() + n * os.item() + offsets[i] * os.plane();
                       double* dst = gi.data() + n * s.item();
                       for (std::size_t j = 0; j < s.item(); ++j) dst[j] += src[j];
                     }
                   }
                 });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  const Shape s = x.shape();
  if (count == 0 || begin + count > s.c) {
    shape_fail("slice_channels", "range [" + std::to_string(begin) + ", " +
                                     std::to_string(begin + count) + ") outside " + s.str());
  }
  const Shape os{s.n, count, s.h, s.w};
  const auto v = x.data();
  std::vector<double> out(os.numel());
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy_n(v.data() + n * s.item() + begin * s.plane(), os.item(), out.data() + n * os.item());
  }
  return make_op("slice_channels", os, std::move(out), {x}, [s, os, begin](const GradContext& ctx) {
    const auto g = ctx.out_grad();
    const auto gx = ctx.input_grad(0);
    for (std::size_t n = 0; n < s.n; ++n) {
      double* dst = gx.data() + n * s.item() + begin * s.plane();
      const double* src = g.data() + n * os.item();
      for (std::size_t j = 0; j < os.item(); ++j) dst[j] += src[j];
    }
  });
}

Tensor fc(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (xs.h != 1 || xs.w != 1) shape_fail("fc", "input must be (n,c,1,1), got " + xs.str());
  if (ws.h != 1 || ws.w != 1 || ws.c != xs.c) {
    shape_fail("fc", "weight " + ws.str() + " incompatible with input " + xs.str());
  }
  if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1}) {
    shape_fail("fc", "bias " + bias.shape().str() + " does not match " + std::to_string(ws.n));
  }
  const std::size_t batch = xs.n, cin = xs.c, cout = ws.n;
  const Shape os{batch, cout, 1, 1};
  std::vector<double> out(os.numel(), 0.0);
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t n = 0; n < batch; ++n) std::copy_n(bv.data(), cout, out.data() + n * cout);
  }
  kt().gemm_nt(batch, cout, cin, x.data().data(), cin, weight.data().data(), cin, out.data(), cout);
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op("fc", os, std::move(out), std::move(inputs),
                 [x, weight, batch, cin, cout, has_bias](const GradContext& ctx) {
                   const auto g = ctx.out_grad();
                   const auto gx = ctx.input_grad(0);
                   const auto gw = ctx.input_grad(1);
                   if (!gx.empty()) {
                     kt().gemm_nn(batch, cin, cout, g.data(), cout, weight.data().data(), cin,
                                  gx.data(), cin);
                   }
                   if (!gw.empty()) {
                     kt().gemm_tn(cout, cin, batch, g.data(), cout, x.data().data(), cin, gw.data(),
                                  cin);
                   }
                   if (has_bias) {
                     const auto gb = ctx.input_grad(2);
                     if (!gb.empty()) {
                       for (std::size_t n = 0; n < batch; ++n)
                         for (std::size_t o = 0; o < cout; ++o) gb[o] += g[n * cout + o];
                     }
                   }
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    shape_fail("reshape", "cannot reshape " + x.shape().str() + " to " + shape.str());
  }
  const auto v = x.data();
  return make_op("reshape", shape, std::vector<double>(v.begin(), v.end()), {x},
                 [](const GradContext& ctx) {
                   const auto g = ctx.out_grad();
                   const auto gx = ctx.input_grad(0);
                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                 });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::div); }

Tensor scale(const Tensor& x, double s) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
  return make_op("scale", x.shape(), std::move(out), {x}, [s](const GradContext& ctx) {
    const auto g = ctx.out_grad();
    const auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
  });
}

Tensor add_scalar(const Tensor& x, double s) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + s;
  return make_op("add_scalar", x.shape(), std::move(out), {x}, [](const GradContext& ctx) {
    const auto g = ctx.out_grad();
    const auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (const double v : x.data()) acc += v;
  return make_op("sum", Shape{1, 1, 1, 1}, {acc}, {x}, [](const GradContext& ctx) {
    const double g = ctx.out_grad()[0];
    for (double& gx : ctx.input_grad(0)) gx += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) shape_fail("mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor frobenius_normalize(const Tensor& x, double eps) {
  const Shape s = x.shape();
  const auto v = x.data();
  const std::size_t item = s.item();
  std::vector<double> norms(s.n);
  std::vector<double> out(v.size());
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* p = v.data() + n * item;
    norms[n] = std::sqrt(kt().dot(p, p, item));
    const double inv = 1.0 / (norms[n] + eps);
    for (std::size_t i = 0; i < item; ++i) out[n * item + i] = p[i] * inv;
  }
  return make_op("frobenius_normalize", s, std::move(out), {x},
                 [x, norms = std::move(norms), item, eps](const GradContext& ctx) {
                   const auto g = ctx.out_grad();
                   const auto gx = ctx.input_grad(0);
                   const auto v = x.data();
                   for (std::size_t n = 0; n < norms.size(); ++n) {
                     const double r = norms[n];
                     const double sden = r + eps;
                     const double* p = v.data() + n * item;
                     const double* gp = g.data() + n * item;
                     double* dst = gx.data() + n * item;
                     // d/dx [x / (|x| + eps)] = I/s - x x^T / (s^2 |x|)
                     const double coef = r > 0.0 ? kt().dot(p, gp, item) / (sden * sden * r) : 0.0;
                     for (std::size_t i = 0; i < item; ++i) dst[i] += gp[i] / sden - p[i] * coef;
                   }
                 });
}

}  // namespace ossdet::tensor
