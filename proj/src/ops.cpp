// SPDX-License-Identifier: Apache-2.0
#include "amodal/ops.hpp"

#include <Eigen/Core>
#include <atomic>
#include <cmath>

#include "amodal/error.hpp"

namespace amodal {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::atomic<bool> g_backward_fault{false};

struct ConvGeometry {
  int in_c, in_h, in_w;
  int out_c, kh, kw;
  int out_h, out_w;
  ConvSpec spec;

  int cols() const { return out_h * out_w; }
  int rows() const { return in_c * kh * kw; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& wshape, const ConvSpec& spec) {
  require(spec.stride > 0, ErrorKind::kShape, "conv2d: non-positive stride");
  require(spec.dilation > 0, ErrorKind::kShape, "conv2d: non-positive dilation");
  require(spec.padding >= 0, ErrorKind::kShape, "conv2d: negative padding");
  require(wshape.h % 2 == 1 && wshape.w % 2 == 1, ErrorKind::kShape, "conv2d: kernel extents must be odd");
  require(in.c == wshape.c, ErrorKind::kShape,
          "conv2d: input channels " + std::to_string(in.c) + " vs weight in_c " + std::to_string(wshape.c));
  ConvGeometry g{in.c, in.h, in.w, wshape.n, wshape.h, wshape.w, 0, 0, spec};
  g.out_h = conv_out_extent(in.h, wshape.h, spec);
  g.out_w = conv_out_extent(in.w, wshape.w, spec);
  require(g.out_h > 0 && g.out_w > 0, ErrorKind::kShape, "conv2d: empty output for input " + in.str());
  return g;
}

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const int s = g.spec.stride, p = g.spec.padding, d = g.spec.dilation;
  for (int ci = 0; ci < g.in_c; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        double* row = col + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * s - p + ky * d;
          double* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * s - p + kx * d;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* dx) {
  const int s = g.spec.stride, p = g.spec.padding, d = g.spec.dilation;
  for (int ci = 0; ci < g.in_c; ++ci) {
    double* plane = dx + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const double* row = col + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * s - p + ky * d;
          if (iy < 0 || iy >= g.in_h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.out_w;
          double* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * s - p + kx * d;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::kShape,
          std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace

namespace testing {
void set_backward_fault(bool enabled) { g_backward_fault.store(enabled); }
bool backward_fault() { return g_backward_fault.load(); }
}  // namespace testing

Activation parse_activation(std::string_view name) {
  if (name == "elu") return Activation::kElu;
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  fail(ErrorKind::kUsage, "unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kElu: return "elu";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

int conv_out_extent(int in, int kernel, const ConvSpec& spec) {
  return (in + 2 * spec.padding - spec.dilation * (kernel - 1) - 1) / spec.stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, std::span<const double> bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), spec);
  require(bias.empty() || bias.size() == static_cast<std::size_t>(g.out_c), ErrorKind::kShape,
          "conv2d: bias length mismatch");
  const int n = input.shape().n;
  Tensor out({n, g.out_c, g.out_h, g.out_w});
  Buffer col(static_cast<std::size_t>(g.rows()) * g.cols());
  ConstMatMap wm(weight.data().data(), g.out_c, g.rows());
  for (int b = 0; b < n; ++b) {
    im2col(input.data().data() + input.offset(b, 0, 0, 0), g, col.data());
    ConstMatMap cm(col.data(), g.rows(), g.cols());
    MatMap ym(out.data().data() + out.offset(b, 0, 0, 0), g.out_c, g.cols());
    ym.noalias() = wm * cm;
    if (!bias.empty()) {
      for (int oc = 0; oc < g.out_c; ++oc) ym.row(oc).array() += bias[static_cast<std::size_t>(oc)];
    }
  }
  return out;
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kElu: return x > 0.0 ? x : std::expm1(x);
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kLeakyRelu: return x > 0.0 ? x : 0.2 * x;
    case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::kTanh: return std::tanh(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

double activate_derivative(Activation a, double x, double y) {
  switch (a) {
    case Activation::kElu: return x > 0.0 ? 1.0 : y + 1.0;
    case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::kLeakyRelu: return x > 0.0 ? 1.0 : 0.2;
    case Activation::kSigmoid: return y * (1.0 - y) * (g_backward_fault.load(std::memory_order_relaxed) ? 1.01 : 1.0);
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

Tensor resample_forward(const Tensor& input, Resample mode) {
  const Shape& s = input.shape();
  if (mode == Resample::kNearestUp2) {
    Tensor out({s.n, s.c, s.h * 2, s.w * 2});
    for (int b = 0; b < s.n; ++b)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h * 2; ++y)
          for (int x = 0; x < s.w * 2; ++x) out.at(b, c, y, x) = input.at(b, c, y / 2, x / 2);
    return out;
  }
  require(s.h % 2 == 0 && s.w % 2 == 0, ErrorKind::kShape, "avg_down2: odd extents " + s.str());
  Tensor out({s.n, s.c, s.h / 2, s.w / 2});
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h / 2; ++y)
        for (int x = 0; x < s.w / 2; ++x)
          out.at(b, c, y, x) = 0.25 * (input.at(b, c, 2 * y, 2 * x) + input.at(b, c, 2 * y, 2 * x + 1) +
                                       input.at(b, c, 2 * y + 1, 2 * x) + input.at(b, c, 2 * y + 1, 2 * x + 1));
  return out;
}

namespace ops {

Var conv2d(Var input, Var weight, Var bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), spec);
  require(bias.value().size() == static_cast<std::size_t>(g.out_c), ErrorKind::kShape, "conv2d: bias length mismatch");
  Tensor out = conv2d_forward(input.value(), weight.value(), bias.value().data(), spec);
  return input.tape->record("conv2d", {input, weight, bias}, std::move(out), [g](BackwardCtx& ctx) {
    const Tensor& x = *ctx.in_values[0];
    const Tensor& w = *ctx.in_values[1];
    const int n = x.shape().n;
    Buffer col(static_cast<std::size_t>(g.rows()) * g.cols());
    Buffer dcol(ctx.in_grads[0] ? col.size() : 0);
    ConstMatMap wm(w.data().data(), g.out_c, g.rows());
    const std::size_t out_per = static_cast<std::size_t>(g.out_c) * g.cols();
    for (int b = 0; b < n; ++b) {
      ConstMatMap dy(ctx.out_grad.data().data() + b * out_per, g.out_c, g.cols());
      if (ctx.in_grads[1]) {
        im2col(x.data().data() + x.offset(b, 0, 0, 0), g, col.data());
        ConstMatMap cm(col.data(), g.rows(), g.cols());
        MatMap dw(ctx.in_grads[1]->data().data(), g.out_c, g.rows());
        dw.noalias() += dy * cm.transpose();
      }
      if (ctx.in_grads[2]) {
        auto& db = *ctx.in_grads[2];
        for (int oc = 0; oc < g.out_c; ++oc) db[static_cast<std::size_t>(oc)] += dy.row(oc).sum();
      }
      if (ctx.in_grads[0]) {
        MatMap dc(dcol.data(), g.rows(), g.cols());
        dc.noalias() = wm.transpose() * dy;
        col2im_add(dcol.data(), g, ctx.in_grads[0]->data().data() + x.offset(b, 0, 0, 0));
      }
    }
  });
}

Var activation(Activation kind, Var input) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = activate(kind, x[i]);
  return input.tape->record("activation", {input}, std::move(out), [kind](BackwardCtx& ctx) {
    const Tensor& xv = *ctx.in_values[0];
    Tensor& dx = *ctx.in_grads[0];
    for (std::size_t i = 0; i < xv.size(); ++i)
      dx[i] += ctx.out_grad[i] * activate_derivative(kind, xv[i], ctx.out_value[i]);
  });
}

Var resample(Var input, Resample mode) {
  Tensor out = resample_forward(input.value(), mode);
  return input.tape->record("resample", {input}, std::move(out), [mode](BackwardCtx& ctx) {
    Tensor& dx = *ctx.in_grads[0];
    const Shape& s = dx.shape();
    const Tensor& dy = ctx.out_grad;
    if (mode == Resample::kNearestUp2) {
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < s.h * 2; ++y)
            for (int x = 0; x < s.w * 2; ++x) dx.at(b, c, y / 2, x / 2) += dy.at(b, c, y, x);
    } else {
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) dx.at(b, c, y, x) += 0.25 * dy.at(b, c, y / 2, x / 2);
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape->record("add", {a, b}, std::move(out), [](BackwardCtx& ctx) {
    for (int k = 0; k < 2; ++k)
      if (Tensor* d = ctx.in_grads[static_cast<std::size_t>(k)])
        for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += ctx.out_grad[i];
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape->record("sub", {a, b}, std::move(out), [](BackwardCtx& ctx) {
    if (Tensor* d = ctx.in_grads[0])
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += ctx.out_grad[i];
    if (Tensor* d = ctx.in_grads[1])
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] -= ctx.out_grad[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape->record("mul", {a, b}, std::move(out), [](BackwardCtx& ctx) {
    const Tensor& av = *ctx.in_values[0];
    const Tensor& bv = *ctx.in_values[1];
    if (Tensor* d = ctx.in_grads[0])
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += ctx.out_grad[i] * bv[i];
    if (Tensor* d = ctx.in_grads[1])
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += ctx.out_grad[i] * av[i];
  });
}

Var scale(Var a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return a.tape->record("scale", {a}, std::move(out), [s](BackwardCtx& ctx) {
    Tensor& d = *ctx.in_grads[0];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += ctx.out_grad[i] * s;
  });
}

Var affine(Var x, double a, double b) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x.value()[i] + b;
  return x.tape->record("affine", {x}, std::move(out), [a](BackwardCtx& ctx) {
    Tensor& d = *ctx.in_grads[0];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += ctx.out_grad[i] * a;
  });
}

Var abs(Var a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.value()[i]);
  return a.tape->record("abs", {a}, std::move(out), [](BackwardCtx& ctx) {
    const Tensor& av = *ctx.in_values[0];
    Tensor& d = *ctx.in_grads[0];
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double sgn = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
      d[i] += ctx.out_grad[i] * sgn;
    }
  });
}

Var concat_channels(Var a, Var b) {
  const Shape sa = a.shape(), sb = b.shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, ErrorKind::kShape,
          "concat_channels: extent mismatch " + sa.str() + " vs " + sb.str());
  Tensor out({sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t pb = static_cast<std::size_t>(sb.c) * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().data().data() + n * pa, pa, out.data().data() + n * (pa + pb));
    std::copy_n(b.value().data().data() + n * pb, pb, out.data().data() + n * (pa + pb) + pa);
  }
  return a.tape->record("concat_channels", {a, b}, std::move(out), [pa, pb](BackwardCtx& ctx) {
    const int batches = ctx.out_value.shape().n;
    for (int n = 0; n < batches; ++n) {
      const double* g = ctx.out_grad.data().data() + n * (pa + pb);
      if (Tensor* d = ctx.in_grads[0])
        for (std::size_t i = 0; i < pa; ++i) (*d)[n * pa + i] += g[i];
      if (Tensor* d = ctx.in_grads[1])
        for (std::size_t i = 0; i < pb; ++i) (*d)[n * pb + i] += g[pa + i];
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape->record("sum", {a}, Tensor::scalar(total), [](BackwardCtx& ctx) {
    const double g = ctx.out_grad[0];
    for (auto& v : ctx.in_grads[0]->data()) v += g;
  });
}

Var mean(Var a) {
  require(a.value().size() > 0, ErrorKind::kShape, "mean of empty tensor");
  const double inv = 1.0 / static_cast<double>(a.value().size());
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape->record("mean", {a}, Tensor::scalar(total * inv), [inv](BackwardCtx& ctx) {
    const double g = ctx.out_grad[0] * inv;
    for (auto& v : ctx.in_grads[0]->data()) v += g;
  });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  require(!terms.empty() && terms.size() == weights.size(), ErrorKind::kShape, "weighted_sum: term/weight mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i].value().size() == 1, ErrorKind::kShape, "weighted_sum: non-scalar term");
    total += weights[i] * terms[i].value()[0];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return terms[0].tape->record("weighted_sum", std::vector<Var>(terms.begin(), terms.end()), Tensor::scalar(total),
                               [w](BackwardCtx& ctx) {
                                 for (std::size_t i = 0; i < w.size(); ++i)
                                   if (Tensor* d = ctx.in_grads[i]) (*d)[0] += ctx.out_grad[0] * w[i];
                               });
}

}  // namespace ops

}  // namespace amodal
