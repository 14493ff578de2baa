#pragma once

#include "cvrl/tensor.hpp"

namespace cvrl {

// Image tensors are flattened per sample with interleaved channel-minor
// layout: index = (y * width + x) * channels + c. One sample per column.
struct ConvDims {
  int in_c = 0;
  int in_h = 0;
  int in_w = 0;
  int out_c = 0;
  int kernel = 4;
  int stride = 2;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  // transposed convolution output size for the same (kernel, stride, pad)
  int tout_h() const { return (in_h - 1) * stride - 2 * pad + kernel; }
  int tout_w() const { return (in_w - 1) * stride - 2 * pad + kernel; }
};

// x: (in_c*in_h*in_w x B), w: (out_c x in_c*k*k) with patch index
// (ky*k + kx)*in_c + c, b: (out_c x 1). Returns (out_c*out_h*out_w x B).
Var conv2d(const Var& x, const Var& w, const Var& b, const ConvDims& d);

// x: (in_c*in_h*in_w x B), w: (in_c x out_c*k*k), b: (out_c x 1).
// Returns (out_c*tout_h*tout_w x B). Adjoint geometry of conv2d.
Var conv2d_transpose(const Var& x, const Var& w, const Var& b, const ConvDims& d);

}  // namespace cvrl
