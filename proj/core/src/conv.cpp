#include <Eigen/Core>
#include <algorithm>

#include "spikeshort/errors.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tape.hpp"

namespace spikeshort {

namespace {

using RowMatrix = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t stride, pad;
  std::size_t ho, wo;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t positions() const { return ho * wo; }
};

// Samples per GEMM; bounds the im2col buffer.
constexpr std::size_t kChunk = 16;

// cols has patch() rows and count*positions() columns; column j of sample s
// sits at s*positions() + j.
void im2col(const ConvGeometry& g, const real* x, std::size_t first, std::size_t count, RowMatrix& cols) {
  const std::size_t P = g.positions();
  const std::size_t stride_cols = count * P;
  cols.setZero(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(stride_cols));
  real* c = cols.data();
  for (std::size_t s = 0; s < count; ++s) {
    const real* xs = x + (first + s) * g.cin * g.h * g.w;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::size_t row = (ci * g.kh + ky) * g.kw + kx;
          real* dst = c + row * stride_cols + s * P;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const real* src = xs + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              dst[oy * g.wo + ox] = src[ix];
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const RowMatrix& cols, std::size_t first, std::size_t count, real* dx) {
  const std::size_t P = g.positions();
  const std::size_t stride_cols = count * P;
  const real* c = cols.data();
  for (std::size_t s = 0; s < count; ++s) {
    real* xs = dx + (first + s) * g.cin * g.h * g.w;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::size_t row = (ci * g.kh + ky) * g.kw + kx;
          const real* src = c + row * stride_cols + s * P;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            real* dst = xs + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              dst[ix] += src[oy * g.wo + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) fail(ErrorKind::configuration, "conv2d: stride must be >= 1");
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel || (padded - kernel) % stride != 0) {
    fail(ErrorKind::configuration, "conv2d: extent " + std::to_string(in) + " with kernel " +
                                       std::to_string(kernel) + ", stride " + std::to_string(stride) +
                                       ", pad " + std::to_string(pad) + " gives a non-integral output");
  }
  return (padded - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || k.rank() != 4 || x.dim(1) != k.dim(1)) {
    fail(ErrorKind::dimension,
         "conv2d: input " + shape_string(x.shape()) + " incompatible with kernel " + shape_string(k.shape()));
  }
  if (k.dim(2) % 2 == 0 || k.dim(3) % 2 == 0) {
    fail(ErrorKind::configuration, "conv2d: kernel extents must be odd, got " + shape_string(k.shape()));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), stride, pad, 0, 0};
  g.ho = conv_output_extent(g.h, g.kh, stride, pad);
  g.wo = conv_output_extent(g.w, g.kw, stride, pad);

  Tensor out = Tensor::zeros({g.n, g.cout, g.ho, g.wo});
  const std::size_t P = g.positions();
  ConstRowMap kernel(k.values().data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(g.patch()));
  RowMatrix cols;
  RowMatrix result;
  real* ov = out.values().data();
  for (std::size_t first = 0; first < g.n; first += kChunk) {
    const std::size_t count = std::min(kChunk, g.n - first);
    im2col(g, x.values().data(), first, count, cols);
    result.noalias() = kernel * cols;
    for (std::size_t s = 0; s < count; ++s)
      for (std::size_t co = 0; co < g.cout; ++co)
        std::copy_n(result.data() + co * count * P + s * P, P, ov + ((first + s) * g.cout + co) * P);
  }

  if (auto* tape = recording_tape({&x, &k})) {
    tape->record(OpKind::conv2d, {x, k}, out, [x, k, out, g]() mutable {
      const std::size_t P = g.positions();
      const auto patch = static_cast<Eigen::Index>(g.patch());
      const auto cout = static_cast<Eigen::Index>(g.cout);
      ConstRowMap kernel(k.values().data(), cout, patch);
      const real* gout = out.grad().data();
      RowMatrix cols;
      RowMatrix dout;
      RowMatrix dcols;
      RowMatrix dk = RowMatrix::Zero(cout, patch);
      for (std::size_t first = 0; first < g.n; first += kChunk) {
        const std::size_t count = std::min(kChunk, g.n - first);
        dout.resize(cout, static_cast<Eigen::Index>(count * P));
        for (std::size_t s = 0; s < count; ++s)
          for (std::size_t co = 0; co < g.cout; ++co)
            std::copy_n(gout + ((first + s) * g.cout + co) * P, P, dout.data() + co * count * P + s * P);
        if (k.requires_grad()) {
          im2col(g, x.values().data(), first, count, cols);
          dk.noalias() += dout * cols.transpose();
        }
        if (x.requires_grad()) {
          dcols.noalias() = kernel.transpose() * dout;
          col2im(g, dcols, first, count, x.grad().data());
        }
      }
      if (k.requires_grad()) {
        RowMap gk(k.grad().data(), cout, patch);
        gk += dk;
      }
    });
  }
  return out;
}

}  // namespace spikeshort
