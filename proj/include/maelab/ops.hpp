#pragma once

#include "maelab/tensor.hpp"

namespace maelab::ops {

/// All ops validate shapes and reject non-finite inputs. When `tape` is
/// non-null and some input requires grad, the op records a backward node;
/// gradients accumulate (+=) into the grad buffers of inputs that require
/// grad. Passing tape == nullptr runs a plain forward pass.

/// input [N,CI,H,W], kernel [CO,CI,KH,KW] -> [N,CO,OH,OW] with
/// OH = floor((H + 2*pad - KH) / stride) + 1, likewise OW.
Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& kernel, int64_t stride,
              int64_t padding);

/// Adjoint of conv2d. input [N,CO,OH,OW], kernel [CO,CI,KH,KW] -> [N,CI,H,W]
/// with the minimal inverted shape H = (OH-1)*stride + KH - 2*pad. Because
/// conv2d's floor makes the shape map non-injective, an explicit out_h/out_w
/// (any preimage of OH/OW) selects the exact adjoint target shape.
Tensor conv2d_transpose(Tape* tape, const Tensor& input, const Tensor& kernel, int64_t stride,
                        int64_t padding);
Tensor conv2d_transpose(Tape* tape, const Tensor& input, const Tensor& kernel, int64_t stride,
                        int64_t padding, int64_t out_h, int64_t out_w);

/// x [N,C,H,W] + bias [C], added per channel.
Tensor bias_add(Tape* tape, const Tensor& x, const Tensor& bias);

Tensor relu(Tape* tape, const Tensor& x);        // derivative at 0 is 0
Tensor leaky_relu(Tape* tape, const Tensor& x, double slope);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b); // identical shapes only
Tensor mul_scalar(Tape* tape, const Tensor& x, double c);

/// Elementwise multiply by a {0,1} mask. The mask is either the same shape
/// as x, or [1,1,H,W] against x [N,C,H,W] (one plane shared by all
/// channels). The mask is data, never a differentiation target.
Tensor mask_mul(Tape* tape, const Tensor& x, const Tensor& mask01);

/// Spatial crop of x [N,C,H,W] to [N,C,h,w] starting at (row0, col0).
Tensor crop(Tape* tape, const Tensor& x, int64_t row0, int64_t col0, int64_t h, int64_t w);

Tensor sum(Tape* tape, const Tensor& x); // scalar

Tensor l1_loss(Tape* tape, const Tensor& pred, const Tensor& target); // mean |pred-target|
Tensor l2_loss(Tape* tape, const Tensor& pred, const Tensor& target); // mean (pred-target)^2

/// Mean squared error over masked values only:
/// sum(mask*(pred-target)^2) / (sum(mask) * channels-sharing-factor).
/// Zero when the mask is empty.
Tensor masked_l2_loss(Tape* tape, const Tensor& pred, const Tensor& target, const Tensor& mask01);

} // namespace maelab::ops
