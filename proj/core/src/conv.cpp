#include "cvrl/conv.hpp"

#include <cstring>
#include <stdexcept>

namespace cvrl {

namespace {

// Gathers padded patches of `x` into `cols`: (in_c*k*k) x (B*out_h*out_w),
// columns ordered sample-major then row-major spatial.
Mat im2col(const Mat& x, const ConvDims& d) {
  const int oh = d.out_h(), ow = d.out_w();
  const int patch = d.in_c * d.kernel * d.kernel;
  const Eigen::Index batch = x.cols();
  Mat cols = Mat::Zero(patch, batch * oh * ow);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double* src = x.col(b).data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double* dst = cols.col(b * oh * ow + oy * ow + ox).data();
        for (int ky = 0; ky < d.kernel; ++ky) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) continue;
          for (int kx = 0; kx < d.kernel; ++kx) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.in_w) continue;
            std::memcpy(dst + (ky * d.kernel + kx) * d.in_c,
                        src + (iy * d.in_w + ix) * d.in_c,
                        sizeof(double) * d.in_c);
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds patch columns back into image space.
Mat col2im(const Mat& cols, const ConvDims& d, Eigen::Index batch) {
  const int oh = d.out_h(), ow = d.out_w();
  Mat x = Mat::Zero(d.in_c * d.in_h * d.in_w, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    double* dst = x.col(b).data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double* src = cols.col(b * oh * ow + oy * ow + ox).data();
        for (int ky = 0; ky < d.kernel; ++ky) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.in_h) continue;
          for (int kx = 0; kx < d.kernel; ++kx) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.in_w) continue;
            const double* s = src + (ky * d.kernel + kx) * d.in_c;
            double* t = dst + (iy * d.in_w + ix) * d.in_c;
            for (int c = 0; c < d.in_c; ++c) t[c] += s[c];
          }
        }
      }
    }
  }
  return x;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, const ConvDims& d) {
  const int patch = d.in_c * d.kernel * d.kernel;
  if (x.rows() != static_cast<Eigen::Index>(d.in_c) * d.in_h * d.in_w)
    throw std::invalid_argument("conv2d: input shape mismatch");
  if (w.rows() != d.out_c || w.cols() != patch)
    throw std::invalid_argument("conv2d: weight shape mismatch");

  const Eigen::Index batch = x.cols();
  const int oh = d.out_h(), ow = d.out_w();
  auto cols_ptr = std::make_shared<Mat>(im2col(x.value(), d));

  Mat blocks = w.value() * (*cols_ptr);  // (out_c x B*oh*ow)
  blocks.colwise() += Eigen::VectorXd(b.value().col(0));
  // contiguous reinterpret: sample b occupies columns [b*oh*ow, (b+1)*oh*ow)
  Mat out = Eigen::Map<const Mat>(blocks.data(), static_cast<Eigen::Index>(d.out_c) * oh * ow, batch);

  Mat wv = w.value();
  ConvDims dims = d;
  return make_op(std::move(out), {x, w, b}, [cols_ptr, wv, dims, batch](detail::Node& n) {
    const int oh = dims.out_h(), ow = dims.out_w();
    Eigen::Map<const Mat> gblocks(n.grad.data(), dims.out_c,
                                  batch * static_cast<Eigen::Index>(oh) * ow);
    if (n.needs(2)) n.parents[2]->accumulate(gblocks.rowwise().sum());
    if (n.needs(1)) n.parents[1]->accumulate(gblocks * cols_ptr->transpose());
    if (n.needs(0)) {
      Mat gcols = wv.transpose() * gblocks;
      n.parents[0]->accumulate(col2im(gcols, dims, batch));
    }
  });
}

Var conv2d_transpose(const Var& x, const Var& w, const Var& b, const ConvDims& d) {
  const int patch = d.out_c * d.kernel * d.kernel;
  if (x.rows() != static_cast<Eigen::Index>(d.in_c) * d.in_h * d.in_w)
    throw std::invalid_argument("conv2d_transpose: input shape mismatch");
  if (w.rows() != d.in_c || w.cols() != patch)
    throw std::invalid_argument("conv2d_transpose: weight shape mismatch");

  const Eigen::Index batch = x.cols();
  const int oh = d.tout_h(), ow = d.tout_w();

  // geometry of the adjoint convolution: output -> input
  ConvDims adj;
  adj.in_c = d.out_c;
  adj.in_h = oh;
  adj.in_w = ow;
  adj.out_c = d.in_c;
  adj.kernel = d.kernel;
  adj.stride = d.stride;
  adj.pad = d.pad;

  Eigen::Map<const Mat> xblocks(x.value().data(), d.in_c,
                                batch * static_cast<Eigen::Index>(d.in_h) * d.in_w);
  Mat gcols = w.value().transpose() * xblocks;  // (out_c*k*k x B*ih*iw)
  Mat out = col2im(gcols, adj, batch);          // (out_c*oh*ow x B)
  {
    Eigen::Map<Mat> oview(out.data(), d.out_c, batch * static_cast<Eigen::Index>(oh) * ow);
    oview.colwise() += Eigen::VectorXd(b.value().col(0));
  }

  Mat wv = w.value();
  Mat xv = x.value();
  ConvDims dims = d;
  return make_op(std::move(out), {x, w, b}, [wv, xv, dims, adj, batch](detail::Node& n) {
    const Eigen::Index ohw =
        static_cast<Eigen::Index>(dims.tout_h()) * dims.tout_w();
    if (n.needs(2)) {
      Eigen::Map<const Mat> gview(n.grad.data(), dims.out_c, batch * ohw);
      n.parents[2]->accumulate(gview.rowwise().sum());
    }
    const bool need_x = n.needs(0);
    const bool need_w = n.needs(1);
    if (!need_x && !need_w) return;
    Mat gcols_out = im2col(n.grad, adj);  // (out_c*k*k x B*ih*iw)
    if (need_x) {
      Mat gx_blocks = wv * gcols_out;  // (in_c x B*ih*iw)
      Mat gx = Eigen::Map<const Mat>(gx_blocks.data(),
                                     static_cast<Eigen::Index>(dims.in_c) * dims.in_h * dims.in_w,
                                     batch);
      n.parents[0]->accumulate(gx);
    }
    if (need_w) {
      Eigen::Map<const Mat> xblocks(xv.data(), dims.in_c,
                                    batch * static_cast<Eigen::Index>(dims.in_h) * dims.in_w);
      n.parents[1]->accumulate(xblocks * gcols_out.transpose());
    }
  });
}

}  // namespace cvrl
