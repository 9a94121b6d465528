#pragma once

// Dense matrix product and 2-D (transposed) convolution, with GEMM kernels
// delegated to Eigen. Layouts are NCHW for activations, OIHW for conv2d
// weights and IOHW for transposed-conv weights.

#include <Eigen/Core>

#include "ssvc/tensor.hpp"

namespace ssvc {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

namespace detail {

// dst (+)= lhs * rhs. Operands are copied into owned, aligned storage first:
// Eigen chooses its inner loops from pointer alignment, so products on raw
// buffer offsets would round differently from run to run.
template <typename T, typename L, typename R>
void gemm(T* dst, const L& lhs, const R& rhs, bool accumulate) {
  const RowMat<T> a = lhs;
  const RowMat<T> b = rhs;
  RowMat<T> p(a.rows(), b.cols());
  p.noalias() = a * b;
  MapMat<T> d(dst, p.rows(), p.cols());
  if (accumulate) {
    d += p;
  } else {
    d = p;
  }
}

}  // namespace detail

// [M,K] x [K,N] -> [M,N]
template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw shape_error("matmul of " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()));
  }
  const Eigen::Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> v(m * n);
  detail::gemm(v.data(), ConstMapMat<T>(a.values().data(), m, k),
               ConstMapMat<T>(b.values().data(), k, n), false);
  return detail::make_result<T>({std::size_t(m), std::size_t(n)}, std::move(v), {&a, &b},
                                [m, k, n](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ConstMapMat<T> g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      detail::gemm(pa.grad_slot().data(), g, ConstMapMat<T>(pb.values->data(), k, n).transpose(),
                   true);
    }
    if (pb.requires_grad) {
      detail::gemm(pb.grad_slot().data(), ConstMapMat<T>(pa.values->data(), m, k).transpose(), g,
                   true);
    }
  });
}

template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw shape_error("transpose expects a matrix");
  const Eigen::Index r = a.dim(0), c = a.dim(1);
  std::vector<T> v(a.size());
  MapMat<T>(v.data(), c, r) = ConstMapMat<T>(a.values().data(), r, c).transpose();
  return detail::make_result<T>({std::size_t(c), std::size_t(r)}, std::move(v), {&a},
                                [r, c](detail::Node<T>& self) {
    MapMat<T>(self.parents[0]->grad_slot().data(), r, c) +=
        ConstMapMat<T>(self.grad.data(), c, r).transpose();
  });
}

struct Conv2dGeometry {
  std::size_t kernel_h = 3, kernel_w = 3;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

namespace detail {

// Column buffer layout: rows (c, ky, kx), columns (oy, ox).
template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w,
            const Conv2dGeometry& g, std::size_t oh, std::size_t ow, T* col) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        T* row = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride_h + ky) - std::ptrdiff_t(g.pad_h);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride_w + kx) - std::ptrdiff_t(g.pad_w);
            bool inside = iy >= 0 && iy < std::ptrdiff_t(h) && ix >= 0 && ix < std::ptrdiff_t(w);
            row[oy * ow + ox] = inside ? img[(c * h + iy) * w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t h, std::size_t w,
            const Conv2dGeometry& g, std::size_t oh, std::size_t ow, T* img) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride_h + ky) - std::ptrdiff_t(g.pad_h);
          if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride_w + kx) - std::ptrdiff_t(g.pad_w);
            if (ix < 0 || ix >= std::ptrdiff_t(w)) continue;
            img[(c * h + iy) * w + ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  if (in + 2 * p < k) throw shape_error("convolution kernel larger than padded input");
  return (in + 2 * p - k) / s + 1;
}

}  // namespace detail

// x [N,C,H,W], weight [O,C,kh,kw] -> [N,O,H',W'] with explicit zero padding.
template <std::floating_point T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, Conv2dGeometry g) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1)) {
    throw shape_error("conv2d of " + shape_string(x.shape()) + " with weight " +
                      shape_string(weight.shape()));
  }
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  if (g.stride_h == 0 || g.stride_w == 0) throw shape_error("conv2d stride must be positive");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), o = weight.dim(0);
  const std::size_t oh = detail::conv_out_extent(h, g.kernel_h, g.stride_h, g.pad_h);
  const std::size_t ow = detail::conv_out_extent(w, g.kernel_w, g.stride_w, g.pad_w);
  const std::size_t ck = c * g.kernel_h * g.kernel_w, pos = oh * ow;

  std::vector<T> col(ck * pos);
  std::vector<T> v(n * o * pos);
  ConstMapMat<T> wm(weight.values().data(), o, ck);
  for (std::size_t b = 0; b < n; ++b) {
    detail::im2col(x.values().data() + b * c * h * w, c, h, w, g, oh, ow, col.data());
    detail::gemm(v.data() + b * o * pos, wm, ConstMapMat<T>(col.data(), ck, pos), false);
  }
  return detail::make_result<T>({n, o, oh, ow}, std::move(v), {&x, &weight},
                                [=](detail::Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    ConstMapMat<T> wm(pw.values->data(), o, ck);
    std::vector<T> col(ck * pos);
    for (std::size_t b = 0; b < n; ++b) {
      ConstMapMat<T> gout(self.grad.data() + b * o * pos, o, pos);
      if (pw.requires_grad) {
        detail::im2col(px.values->data() + b * c * h * w, c, h, w, g, oh, ow, col.data());
        detail::gemm(pw.grad_slot().data(), gout, ConstMapMat<T>(col.data(), ck, pos).transpose(),
                     true);
      }
      if (px.requires_grad) {
        detail::gemm(col.data(), wm.transpose(), gout, false);
        detail::col2im(col.data(), c, h, w, g, oh, ow, px.grad_slot().data() + b * c * h * w);
      }
    }
  });
}

// x [N,C,H,W], weight [C,O,kh,kw] -> [N,O,(H-1)s-2p+kh, (W-1)s-2p+kw].
// The adjoint of conv2d with the same geometry.
template <std::floating_point T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, Conv2dGeometry g) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(0)) {
    throw shape_error("conv_transpose2d of " + shape_string(x.shape()) + " with weight " +
                      shape_string(weight.shape()));
  }
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), o = weight.dim(1);
  if ((h - 1) * g.stride_h + g.kernel_h <= 2 * g.pad_h ||
      (w - 1) * g.stride_w + g.kernel_w <= 2 * g.pad_w) {
    throw shape_error("conv_transpose2d padding consumes the output");
  }
  const std::size_t oh = (h - 1) * g.stride_h + g.kernel_h - 2 * g.pad_h;
  const std::size_t ow = (w - 1) * g.stride_w + g.kernel_w - 2 * g.pad_w;
  const std::size_t ok = o * g.kernel_h * g.kernel_w, pos = h * w;

  // In the adjoint view the "input image" is the output [O,oh,ow] and the
  // columns are indexed by the input positions (h, w).
  std::vector<T> col(ok * pos);
  std::vector<T> v(n * o * oh * ow, T(0));
  ConstMapMat<T> wm(weight.values().data(), c, ok);
  for (std::size_t b = 0; b < n; ++b) {
    detail::gemm(col.data(), wm.transpose(),
                 ConstMapMat<T>(x.values().data() + b * c * pos, c, pos), false);
    detail::col2im(col.data(), o, oh, ow, g, h, w, v.data() + b * o * oh * ow);
  }
  return detail::make_result<T>({n, o, oh, ow}, std::move(v), {&x, &weight},
                                [=](detail::Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    ConstMapMat<T> wm(pw.values->data(), c, ok);
    std::vector<T> col(ok * pos);
    for (std::size_t b = 0; b < n; ++b) {
      detail::im2col(self.grad.data() + b * o * oh * ow, o, oh, ow, g, h, w, col.data());
      ConstMapMat<T> gcol(col.data(), ok, pos);
      if (px.requires_grad) {
        detail::gemm(px.grad_slot().data() + b * c * pos, wm, gcol, true);
      }
      if (pw.requires_grad) {
        detail::gemm(pw.grad_slot().data(), ConstMapMat<T>(px.values->data() + b * c * pos, c, pos),
                     gcol.transpose(), true);
      }
    }
  });
}

}  // namespace ssvc
