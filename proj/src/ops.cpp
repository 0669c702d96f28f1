#include "maelab/ops.hpp"

#include "maelab/error.hpp"

#include <cmath>
#include <cstdint>

namespace maelab::ops {

namespace {

const double* cptr(const Tensor& t) { return t.data().data(); }
double* mptr(Tensor& t) { return t.mutable_data().data(); }

int64_t floor_div(int64_t a, int64_t b) {
  // b > 0 always here
  int64_t q = a / b;
  if (a % b != 0 && a < 0) --q;
  return q;
}

int64_t ceil_div(int64_t a, int64_t b) { return floor_div(a + b - 1, b); }

void require_defined(const Tensor& t, const char* op, const char* name) {
  if (!t.defined()) throw ValueError(std::string(op) + ": " + name + " tensor is undefined");
}

void require_rank(const Tensor& t, int64_t rank, const char* op, const char* name) {
  require_defined(t, op, name);
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

bool wants_grad(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

struct ConvGeom {
  int64_t n, ci, h, w;   // input image dims
  int64_t co, kh, kw;    // kernel dims (kernel is [co,ci,kh,kw])
  int64_t oh, ow;        // output dims
  int64_t stride, pad;
};

// y[n,co,oh,ow] += sum_{ci,kh,kw} x[n,ci,oh*s+kh-p, ow*s+kw-p] * k[co,ci,kh,kw]
void conv_forward_accum(const double* x, const double* k, double* y, const ConvGeom& g) {
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t co = 0; co < g.co; ++co) {
      for (int64_t ci = 0; ci < g.ci; ++ci) {
        const double* xp = x + (n * g.ci + ci) * g.h * g.w;
        const double* kp = k + (co * g.ci + ci) * g.kh * g.kw;
        double* yp = y + (n * g.co + co) * g.oh * g.ow;
        for (int64_t kh = 0; kh < g.kh; ++kh) {
          // valid oh: 0 <= oh*stride + kh - pad < h
          const int64_t oh0 = std::max<int64_t>(0, ceil_div(g.pad - kh, g.stride));
          const int64_t oh1 = std::min(g.oh - 1, floor_div(g.h - 1 + g.pad - kh, g.stride));
          for (int64_t kw = 0; kw < g.kw; ++kw) {
            const int64_t ow0 = std::max<int64_t>(0, ceil_div(g.pad - kw, g.stride));
            const int64_t ow1 = std::min(g.ow - 1, floor_div(g.w - 1 + g.pad - kw, g.stride));
            const double kv = kp[kh * g.kw + kw];
            if (kv == 0.0) continue;
            for (int64_t oh = oh0; oh <= oh1; ++oh) {
              const int64_t ih = oh * g.stride + kh - g.pad;
              const double* xrow = xp + ih * g.w;
              double* yrow = yp + oh * g.ow;
              for (int64_t ow = ow0; ow <= ow1; ++ow) {
                yrow[ow] += kv * xrow[ow * g.stride + kw - g.pad];
              }
            }
          }
        }
      }
    }
  }
}

// gx[n,ci,ih,iw] += sum_{co,kh,kw} gy[n,co,oh,ow] * k[co,ci,kh,kw]
// (scatter adjoint of conv_forward; also the forward pass of conv2d_transpose)
void conv_input_grad_accum(const double* gy, const double* k, double* gx, const ConvGeom& g) {
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t co = 0; co < g.co; ++co) {
      for (int64_t ci = 0; ci < g.ci; ++ci) {
        double* xp = gx + (n * g.ci + ci) * g.h * g.w;
        const double* kp = k + (co * g.ci + ci) * g.kh * g.kw;
        const double* yp = gy + (n * g.co + co) * g.oh * g.ow;
        for (int64_t kh = 0; kh < g.kh; ++kh) {
          const int64_t oh0 = std::max<int64_t>(0, ceil_div(g.pad - kh, g.stride));
          const int64_t oh1 = std::min(g.oh - 1, floor_div(g.h - 1 + g.pad - kh, g.stride));
          for (int64_t kw = 0; kw < g.kw; ++kw) {
            const int64_t ow0 = std::max<int64_t>(0, ceil_div(g.pad - kw, g.stride));
            const int64_t ow1 = std::min(g.ow - 1, floor_div(g.w - 1 + g.pad - kw, g.stride));
            const double kv = kp[kh * g.kw + kw];
            if (kv == 0.0) continue;
            for (int64_t oh = oh0; oh <= oh1; ++oh) {
              const int64_t ih = oh * g.stride + kh - g.pad;
              double* xrow = xp + ih * g.w;
              const double* yrow = yp + oh * g.ow;
              for (int64_t ow = ow0; ow <= ow1; ++ow) {
                xrow[ow * g.stride + kw - g.pad] += kv * yrow[ow];
              }
            }
          }
        }
      }
    }
  }
}

// gk[co,ci,kh,kw] += sum_{n,oh,ow} x[n,ci,oh*s+kh-p,ow*s+kw-p] * gy[n,co,oh,ow]
void conv_kernel_grad_accum(const double* x, const double* gy, double* gk, const ConvGeom& g) {
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t co = 0; co < g.co; ++co) {
      for (int64_t ci = 0; ci < g.ci; ++ci) {
        const double* xp = x + (n * g.ci + ci) * g.h * g.w;
        double* kp = gk + (co * g.ci + ci) * g.kh * g.kw;
        const double* yp = gy + (n * g.co + co) * g.oh * g.ow;
        for (int64_t kh = 0; kh < g.kh; ++kh) {
          const int64_t oh0 = std::max<int64_t>(0, ceil_div(g.pad - kh, g.stride));
          const int64_t oh1 = std::min(g.oh - 1, floor_div(g.h - 1 + g.pad - kh, g.stride));
          for (int64_t kw = 0; kw < g.kw; ++kw) {
            const int64_t ow0 = std::max<int64_t>(0, ceil_div(g.pad - kw, g.stride));
            const int64_t ow1 = std::min(g.ow - 1, floor_div(g.w - 1 + g.pad - kw, g.stride));
            double acc = 0.0;
            for (int64_t oh = oh0; oh <= oh1; ++oh) {
              const int64_t ih = oh * g.stride + kh - g.pad;
              const double* xrow = xp + ih * g.w;
              const double* yrow = yp + oh * g.ow;
              for (int64_t ow = ow0; ow <= ow1; ++ow) {
                acc += xrow[ow * g.stride + kw - g.pad] * yrow[ow];
              }
            }
            kp[kh * g.kw + kw] += acc;
          }
        }
      }
    }
  }
}

ConvGeom make_conv_geom(const char* op, const Tensor& input, const Tensor& kernel, int64_t stride,
                        int64_t padding) {
  require_rank(input, 4, op, "input");
  require_rank(kernel, 4, op, "kernel");
  if (stride < 1) throw ValueError(std::string(op) + ": stride must be >= 1");
  if (padding < 0) throw ValueError(std::string(op) + ": padding must be >= 0");
  ConvGeom g{};
  g.stride = stride;
  g.pad = padding;
  g.co = kernel.dim(0);
  g.ci = kernel.dim(1);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  return g;
}

} // namespace

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& kernel, int64_t stride,
              int64_t padding) {
  ConvGeom g = make_conv_geom("conv2d", input, kernel, stride, padding);
  g.n = input.dim(0);
  g.h = input.dim(2);
  g.w = input.dim(3);
  if (input.dim(1) != g.ci) {
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) +
                     " do not match kernel input channels " + std::to_string(g.ci) +
                     " (input " + shape_str(input.shape()) + ", kernel " +
                     shape_str(kernel.shape()) + ")");
  }
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: padded input " + std::to_string(g.h + 2 * g.pad) + "x" +
                     std::to_string(g.w + 2 * g.pad) + " is smaller than kernel " +
                     std::to_string(g.kh) + "x" + std::to_string(g.kw));
  }
  g.oh = floor_div(g.h + 2 * g.pad - g.kh, g.stride) + 1;
  g.ow = floor_div(g.w + 2 * g.pad - g.kw, g.stride) + 1;
  check_finite(input, "conv2d input");
  check_finite(kernel, "conv2d kernel");

  Tensor out = Tensor::zeros({g.n, g.co, g.oh, g.ow});
  conv_forward_accum(cptr(input), cptr(kernel), mptr(out), g);

  if (wants_grad(tape, {&input, &kernel})) {
    out.set_requires_grad(true);
    Tensor in = input;
    Tensor k = kernel;
    tape->record(out, [in, k, out, g]() mutable {
      const double* go = out.grad().data();
      if (in.requires_grad()) {
        conv_input_grad_accum(go, cptr(k), in.grad_accum().data(), g);
      }
      if (k.requires_grad()) {
        conv_kernel_grad_accum(cptr(in), go, k.grad_accum().data(), g);
      }
    });
  }
  return out;
}

Tensor conv2d_transpose(Tape* tape, const Tensor& input, const Tensor& kernel, int64_t stride,
                        int64_t padding) {
  ConvGeom probe = make_conv_geom("conv2d_transpose", input, kernel, stride, padding);
  const int64_t out_h = (input.dim(2) - 1) * stride + probe.kh - 2 * padding;
  const int64_t out_w = (input.dim(3) - 1) * stride + probe.kw - 2 * padding;
  return conv2d_transpose(tape, input, kernel, stride, padding, out_h, out_w);
}

Tensor conv2d_transpose(Tape* tape, const Tensor& input, const Tensor& kernel, int64_t stride,
                        int64_t padding, int64_t out_h, int64_t out_w) {
  ConvGeom g = make_conv_geom("conv2d_transpose", input, kernel, stride, padding);
  g.n = input.dim(0);
  g.oh = input.dim(2); // the transpose's input plays the conv2d output role
  g.ow = input.dim(3);
  if (input.dim(1) != g.co) {
    throw ShapeError("conv2d_transpose: input channels " + std::to_string(input.dim(1)) +
                     " do not match kernel output channels " + std::to_string(g.co) +
                     " (input " + shape_str(input.shape()) + ", kernel " +
                     shape_str(kernel.shape()) + ")");
  }
  const int64_t min_h = (g.oh - 1) * g.stride + g.kh - 2 * g.pad;
  const int64_t min_w = (g.ow - 1) * g.stride + g.kw - 2 * g.pad;
  if (out_h < min_h || out_h > min_h + g.stride - 1 || out_w < min_w ||
      out_w > min_w + g.stride - 1 || out_h < 1 || out_w < 1) {
    throw ShapeError("conv2d_transpose: requested output " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " is not a conv2d preimage of " +
                     std::to_string(g.oh) + "x" + std::to_string(g.ow) + " (valid range [" +
                     std::to_string(min_h) + "x" + std::to_string(min_w) + ", " +
                     std::to_string(min_h + g.stride - 1) + "x" +
                     std::to_string(min_w + g.stride - 1) + "])");
  }
  g.h = out_h;
  g.w = out_w;
  check_finite(input, "conv2d_transpose input");
  check_finite(kernel, "conv2d_transpose kernel");

  Tensor out = Tensor::zeros({g.n, g.ci, g.h, g.w});
  conv_input_grad_accum(cptr(input), cptr(kernel), mptr(out), g);

  if (wants_grad(tape, {&input, &kernel})) {
    out.set_requires_grad(true);
    Tensor in = input;
    Tensor k = kernel;
    tape->record(out, [in, k, out, g]() mutable {
      const double* go = out.grad().data(); // shaped like the conv2d-side input
      if (in.requires_grad()) {
        conv_forward_accum(go, cptr(k), in.grad_accum().data(), g);
      }
      if (k.requires_grad()) {
        conv_kernel_grad_accum(go, cptr(in), k.grad_accum().data(), g);
      }
    });
  }
  return out;
}

Tensor bias_add(Tape* tape, const Tensor& x, const Tensor& bias) {
  require_rank(x, 4, "bias_add", "x");
  require_rank(bias, 1, "bias_add", "bias");
  if (bias.dim(0) != x.dim(1)) {
    throw ShapeError("bias_add: bias length " + std::to_string(bias.dim(0)) +
                     " does not match channel count of x " + shape_str(x.shape()));
  }
  check_finite(x, "bias_add x");
  check_finite(bias, "bias_add bias");

  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros(x.shape());
  const double* xp = cptr(x);
  const double* bp = cptr(bias);
  double* op = mptr(out);
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t ci = 0; ci < c; ++ci) {
      const double b = bp[ci];
      const int64_t base = (ni * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) op[base + i] = xp[base + i] + b;
    }
  }

  if (wants_grad(tape, {&x, &bias})) {
    out.set_requires_grad(true);
    Tensor xin = x;
    Tensor bin = bias;
    tape->record(out, [xin, bin, out, n, c, hw]() mutable {
      const double* go = out.grad().data();
      if (xin.requires_grad()) {
        double* gx = xin.grad_accum().data();
        const int64_t total = n * c * hw;
        for (int64_t i = 0; i < total; ++i) gx[i] += go[i];
      }
      if (bin.requires_grad()) {
        double* gb = bin.grad_accum().data();
        for (int64_t ni = 0; ni < n; ++ni) {
          for (int64_t ci = 0; ci < c; ++ci) {
            const int64_t base = (ni * c + ci) * hw;
            double acc = 0.0;
            for (int64_t i = 0; i < hw; ++i) acc += go[base + i];
            gb[ci] += acc;
          }
        }
      }
    });
  }
  return out;
}

namespace {

Tensor elementwise_unary(Tape* tape, const Tensor& x, const char* op_name,
                         double (*fwd)(double, double), double (*dfdx)(double, double),
                         double param) {
  require_defined(x, op_name, "x");
  check_finite(x, op_name);
  Tensor out = Tensor::zeros(x.shape());
  const double* xp = cptr(x);
  double* op = mptr(out);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) op[i] = fwd(xp[i], param);

  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xin = x;
    tape->record(out, [xin, out, dfdx, param, n]() mutable {
      const double* go = out.grad().data();
      const double* xp2 = cptr(xin);
      double* gx = xin.grad_accum().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * dfdx(xp2[i], param);
    });
  }
  return out;
}

} // namespace

Tensor relu(Tape* tape, const Tensor& x) {
  return elementwise_unary(
      tape, x, "relu", [](double v, double) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, 0.0);
}

Tensor leaky_relu(Tape* tape, const Tensor& x, double slope) {
  if (!std::isfinite(slope)) throw ValueError("leaky_relu: slope must be finite");
  return elementwise_unary(
      tape, x, "leaky_relu", [](double v, double s) { return v > 0.0 ? v : s * v; },
      [](double v, double s) { return v > 0.0 ? 1.0 : s; }, slope);
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require_defined(a, "add", "a");
  require_defined(b, "add", "b");
  require_same_shape(a, b, "add");
  check_finite(a, "add a");
  check_finite(b, "add b");
  Tensor out = Tensor::zeros(a.shape());
  const double* ap = cptr(a);
  const double* bp = cptr(b);
  double* op = mptr(out);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) op[i] = ap[i] + bp[i];

  if (wants_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ain = a;
    Tensor bin = b;
    tape->record(out, [ain, bin, out, n]() mutable {
      const double* go = out.grad().data();
      if (ain.requires_grad()) {
        double* ga = ain.grad_accum().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
      }
      if (bin.requires_grad()) {
        double* gb = bin.grad_accum().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor mul_scalar(Tape* tape, const Tensor& x, double c) {
  require_defined(x, "mul_scalar", "x");
  if (!std::isfinite(c)) throw ValueError("mul_scalar: scalar must be finite");
  check_finite(x, "mul_scalar x");
  Tensor out = Tensor::zeros(x.shape());
  const double* xp = cptr(x);
  double* op = mptr(out);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) op[i] = xp[i] * c;

  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xin = x;
    tape->record(out, [xin, out, c, n]() mutable {
      const double* go = out.grad().data();
      double* gx = xin.grad_accum().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * c;
    });
  }
  return out;
}

namespace {

// Validates a {0,1} mask against x. Returns true when the mask is a single
// [1,1,H,W] plane shared across all images/channels of x, false when shapes
// match exactly.
bool check_mask(const Tensor& x, const Tensor& mask, const char* op) {
  require_defined(x, op, "x");
  require_defined(mask, op, "mask");
  const double* mp = cptr(mask);
  for (int64_t i = 0; i < mask.numel(); ++i) {
    if (mp[i] != 0.0 && mp[i] != 1.0) {
      throw ValueError(std::string(op) + ": mask contains value " + std::to_string(mp[i]) +
                       " outside {0,1}");
    }
  }
  if (mask.shape() == x.shape()) return false;
  if (x.rank() == 4 && mask.rank() == 4 && mask.dim(0) == 1 && mask.dim(1) == 1 &&
      mask.dim(2) == x.dim(2) && mask.dim(3) == x.dim(3)) {
    return true;
  }
  throw ShapeError(std::string(op) + ": mask " + shape_str(mask.shape()) +
                   " matches neither x " + shape_str(x.shape()) + " nor a shared [1,1,H,W] plane");
}

} // namespace

Tensor mask_mul(Tape* tape, const Tensor& x, const Tensor& mask01) {
  const bool shared_plane = check_mask(x, mask01, "mask_mul");
  if (mask01.requires_grad()) throw ValueError("mask_mul: mask must not require grad");
  check_finite(x, "mask_mul x");

  Tensor out = Tensor::zeros(x.shape());
  const double* xp = cptr(x);
  const double* mp = cptr(mask01);
  double* op = mptr(out);
  const int64_t n = x.numel();
  if (shared_plane) {
    const int64_t plane = mask01.numel();
    const int64_t planes = n / plane;
    for (int64_t p = 0; p < planes; ++p) {
      const int64_t base = p * plane;
      for (int64_t i = 0; i < plane; ++i) op[base + i] = xp[base + i] * mp[i];
    }
  } else {
    for (int64_t i = 0; i < n; ++i) op[i] = xp[i] * mp[i];
  }

  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xin = x;
    Tensor m = mask01;
    tape->record(out, [xin, m, out, shared_plane, n]() mutable {
      const double* go = out.grad().data();
      const double* mp2 = cptr(m);
      double* gx = xin.grad_accum().data();
      if (shared_plane) {
        const int64_t plane = m.numel();
        const int64_t planes = n / plane;
        for (int64_t p = 0; p < planes; ++p) {
          const int64_t base = p * plane;
          for (int64_t i = 0; i < plane; ++i) gx[base + i] += go[base + i] * mp2[i];
        }
      } else {
        for (int64_t i = 0; i < n; ++i) gx[i] += go[i] * mp2[i];
      }
    });
  }
  return out;
}

Tensor crop(Tape* tape, const Tensor& x, int64_t row0, int64_t col0, int64_t h, int64_t w) {
  require_rank(x, 4, "crop", "x");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (h < 1 || w < 1) throw ValueError("crop: output size must be positive");
  if (row0 < 0 || col0 < 0 || row0 + h > H || col0 + w > W) {
    throw ShapeError("crop: window [" + std::to_string(row0) + ":" + std::to_string(row0 + h) +
                     ", " + std::to_string(col0) + ":" + std::to_string(col0 + w) +
                     "] exceeds input " + shape_str(x.shape()));
  }
  check_finite(x, "crop x");

  Tensor out = Tensor::zeros({N, C, h, w});
  const double* xp = cptr(x);
  double* op = mptr(out);
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double* xplane = xp + (n * C + c) * H * W;
      double* oplane = op + (n * C + c) * h * w;
      for (int64_t r = 0; r < h; ++r) {
        const double* src = xplane + (row0 + r) * W + col0;
        double* dst = oplane + r * w;
        for (int64_t cc = 0; cc < w; ++cc) dst[cc] = src[cc];
      }
    }
  }

  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xin = x;
    tape->record(out, [xin, out, row0, col0, h, w, N, C, H, W]() mutable {
      const double* go = out.grad().data();
      double* gx = xin.grad_accum().data();
      for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
          double* gxplane = gx + (n * C + c) * H * W;
          const double* gplane = go + (n * C + c) * h * w;
          for (int64_t r = 0; r < h; ++r) {
            double* dst = gxplane + (row0 + r) * W + col0;
            const double* src = gplane + r * w;
            for (int64_t cc = 0; cc < w; ++cc) dst[cc] += src[cc];
          }
        }
      }
    });
  }
  return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
  require_defined(x, "sum", "x");
  check_finite(x, "sum x");
  double acc = 0.0;
  const double* xp = cptr(x);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += xp[i];
  Tensor out = Tensor::scalar(acc);

  if (wants_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xin = x;
    tape->record(out, [xin, out, n]() mutable {
      const double g = out.grad()[0];
      double* gx = xin.grad_accum().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

namespace {

Tensor reduction_loss(Tape* tape, const Tensor& pred, const Tensor& target, const char* op_name,
                      bool squared) {
  require_defined(pred, op_name, "pred");
  require_defined(target, op_name, "target");
  require_same_shape(pred, target, op_name);
  check_finite(pred, op_name);
  check_finite(target, op_name);

  const int64_t n = pred.numel();
  const double* pp = cptr(pred);
  const double* tp = cptr(target);
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = pp[i] - tp[i];
    acc += squared ? d * d : std::abs(d);
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));

  if (wants_grad(tape, {&pred, &target})) {
    out.set_requires_grad(true);
    Tensor p = pred;
    Tensor t = target;
    tape->record(out, [p, t, out, squared, n]() mutable {
      const double g = out.grad()[0];
      const double inv_n = 1.0 / static_cast<double>(n);
      const double* pp2 = cptr(p);
      const double* tp2 = cptr(t);
      double* gp = p.requires_grad() ? p.grad_accum().data() : nullptr;
      double* gt = t.requires_grad() ? t.grad_accum().data() : nullptr;
      for (int64_t i = 0; i < n; ++i) {
        const double d = pp2[i] - tp2[i];
        double dd; // d(loss)/d(pred_i)
        if (squared) {
          dd = 2.0 * d * inv_n;
        } else {
          dd = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
        }
        if (gp != nullptr) gp[i] += g * dd;
        if (gt != nullptr) gt[i] -= g * dd;
      }
    });
  }
  return out;
}

} // namespace

Tensor l1_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
  return reduction_loss(tape, pred, target, "l1_loss", false);
}

Tensor l2_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
  return reduction_loss(tape, pred, target, "l2_loss", true);
}

Tensor masked_l2_loss(Tape* tape, const Tensor& pred, const Tensor& target,
                      const Tensor& mask01) {
  require_defined(pred, "masked_l2_loss", "pred");
  require_defined(target, "masked_l2_loss", "target");
  require_same_shape(pred, target, "masked_l2_loss");
  const bool shared_plane = check_mask(pred, mask01, "masked_l2_loss");
  check_finite(pred, "masked_l2_loss pred");
  check_finite(target, "masked_l2_loss target");

  const double* pp = cptr(pred);
  const double* tp = cptr(target);
  const double* mp = cptr(mask01);
  const int64_t n = pred.numel();
  const int64_t plane = mask01.numel();

  double mask_sum = 0.0;
  for (int64_t i = 0; i < plane; ++i) mask_sum += mp[i];
  // a shared plane covers numel/plane values per masked pixel
  const double denom = mask_sum * (shared_plane ? static_cast<double>(n / plane) : 1.0);

  double acc = 0.0;
  if (denom > 0.0) {
    for (int64_t i = 0; i < n; ++i) {
      const double m = mp[shared_plane ? (i % plane) : i];
      if (m != 0.0) {
        const double d = pp[i] - tp[i];
        acc += d * d;
      }
    }
    acc /= denom;
  }
  Tensor out = Tensor::scalar(acc);

  if (wants_grad(tape, {&pred, &target})) {
    out.set_requires_grad(true);
    Tensor p = pred;
    Tensor t = target;
    Tensor m = mask01;
    tape->record(out, [p, t, m, out, shared_plane, denom, n, plane]() mutable {
      if (denom <= 0.0) return; // empty mask: the loss is the constant 0
      const double g = out.grad()[0];
      const double scale = 2.0 * g / denom;
      const double* pp2 = cptr(p);
      const double* tp2 = cptr(t);
      const double* mp2 = cptr(m);
      double* gp = p.requires_grad() ? p.grad_accum().data() : nullptr;
      double* gt = t.requires_grad() ? t.grad_accum().data() : nullptr;
      for (int64_t i = 0; i < n; ++i) {
        const double mv = mp2[shared_plane ? (i % plane) : i];
        if (mv == 0.0) continue;
        const double d = (pp2[i] - tp2[i]) * scale;
        if (gp != nullptr) gp[i] += d;
        if (gt != nullptr) gt[i] -= d;
      }
    });
  }
  return out;
}

} // namespace maelab::ops
