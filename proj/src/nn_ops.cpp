#include "gastkit/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"

namespace gastkit::nn {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

// Convolution geometry on [C, D, H, W] volumes; 2-D ops use D = kd = 1.
struct Geometry {
    std::size_t c, d, h, w;
    std::size_t kd, kh, kw;
    std::size_t sd, sh, sw;
    std::size_t pd, ph, pw;
    std::size_t od, oh, ow;

    std::size_t rows() const { return c * kd * kh * kw; }
    std::size_t positions() const { return od * oh * ow; }
    std::size_t volume() const { return c * d * h * w; }
};

Geometry make_geometry(const char* op, std::size_t c, Extent3 in, Extent3 k, Extent3 stride, Extent3 pad) {
    static const char* axis_names[] = {"depth", "height", "width"};
    Geometry g{c, in[0], in[1], in[2], k[0], k[1], k[2], stride[0], stride[1], stride[2], pad[0], pad[1], pad[2], 0, 0, 0};
    std::size_t out[3];
    for (int a = 0; a < 3; ++a) {
        if (stride[a] == 0) throw InvalidArgument(std::string(op) + ": stride must be positive");
        out[a] = conv_extent(in[a], k[a], stride[a], pad[a], std::string(op) + " " + axis_names[a]);
    }
    g.od = out[0];
    g.oh = out[1];
    g.ow = out[2];
    return g;
}

// Output positions are grouped in lines of ow (one per (zd, zh)). The
// column buffers below cover lines [l0, l1) only, so a tile of the
// unfolded input stays cache resident.
void im2col(const Geometry& g, const double* x, std::size_t l0, std::size_t l1, double* cols) {
    const std::size_t t = (l1 - l0) * g.ow;
    std::size_t r = 0;
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t a = 0; a < g.kd; ++a)
            for (std::size_t b = 0; b < g.kh; ++b)
                for (std::size_t e = 0; e < g.kw; ++e, ++r) {
                    double* row = cols + r * t;
                    for (std::size_t line = l0; line < l1; ++line) {
                        const std::size_t zd = line / g.oh, zh = line % g.oh;
                        const long id = static_cast<long>(zd * g.sd + a) - static_cast<long>(g.pd);
                        const long ih = static_cast<long>(zh * g.sh + b) - static_cast<long>(g.ph);
                        double* dst = row + (line - l0) * g.ow;
                        if (id < 0 || id >= static_cast<long>(g.d) || ih < 0 || ih >= static_cast<long>(g.h)) {
                            std::fill(dst, dst + g.ow, 0.0);
                            continue;
                        }
                        const double* src = x + ((c * g.d + id) * g.h + ih) * g.w;
                        for (std::size_t zw = 0; zw < g.ow; ++zw) {
                            const long iw = static_cast<long>(zw * g.sw + e) - static_cast<long>(g.pw);
                            dst[zw] = (iw >= 0 && iw < static_cast<long>(g.w)) ? src[iw] : 0.0;
                        }
                    }
                }
}

void col2im(const Geometry& g, const double* cols, std::size_t l0, std::size_t l1, double* x) {
    const std::size_t t = (l1 - l0) * g.ow;
    std::size_t r = 0;
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t a = 0; a < g.kd; ++a)
            for (std::size_t b = 0; b < g.kh; ++b)
                for (std::size_t e = 0; e < g.kw; ++e, ++r) {
                    const double* row = cols + r * t;
                    for (std::size_t line = l0; line < l1; ++line) {
                        const std::size_t zd = line / g.oh, zh = line % g.oh;
                        const long id = static_cast<long>(zd * g.sd + a) - static_cast<long>(g.pd);
                        const long ih = static_cast<long>(zh * g.sh + b) - static_cast<long>(g.ph);
                        if (id < 0 || id >= static_cast<long>(g.d) || ih < 0 || ih >= static_cast<long>(g.h)) continue;
                        const double* src = row + (line - l0) * g.ow;
                        double* dst = x + ((c * g.d + id) * g.h + ih) * g.w;
                        for (std::size_t zw = 0; zw < g.ow; ++zw) {
                            const long iw = static_cast<long>(zw * g.sw + e) - static_cast<long>(g.pw);
                            if (iw >= 0 && iw < static_cast<long>(g.w)) dst[iw] += src[zw];
                        }
                    }
                }
}

// Lines per tile so that a column tile holds roughly 32k values.
std::size_t tile_lines(const Geometry& g) {
    const std::size_t target = 32768 / std::max<std::size_t>(g.rows(), 1);
    return std::max<std::size_t>(1, target / g.ow);
}

// Shared body of conv2d/conv3d: x [N, C, D, H, W] logically.
Tensor conv_nd(const Tensor& x, const Tensor& k, const Tensor& b, const Geometry& g, std::size_t n, std::size_t co,
               Shape out_shape) {
    const std::size_t kr = g.rows(), p = g.positions(), vol = g.volume();
    const std::size_t lines = g.od * g.oh, step = tile_lines(g);
    std::vector<double> out(n * co * p, 0.0);
    std::vector<double> cols(kr * step * g.ow), tile(co * step * g.ow);
    for (std::size_t s = 0; s < n; ++s) {
        double* o = out.data() + s * co * p;
        for (std::size_t l0 = 0; l0 < lines; l0 += step) {
            const std::size_t l1 = std::min(lines, l0 + step), q0 = l0 * g.ow, t = (l1 - l0) * g.ow;
            im2col(g, x.values().data() + s * vol, l0, l1, cols.data());
            std::fill(tile.begin(), tile.begin() + static_cast<long>(co * t), 0.0);
            kernel::gemm_nn(co, t, kr, k.values().data(), cols.data(), tile.data());
            for (std::size_t c = 0; c < co; ++c) {
                const double bias = b.defined() ? b[c] : 0.0;
                for (std::size_t q = 0; q < t; ++q) o[c * p + q0 + q] = tile[c * t + q] + bias;
            }
        }
    }
    TensorImpl* px = x.impl();
    TensorImpl* pk = k.impl();
    TensorImpl* pb = b.defined() ? b.impl() : nullptr;
    return make_result(std::move(out_shape), std::move(out), {x, k, b}, [=](TensorImpl& self) {
        std::vector<double> cols_b(kr * step * g.ow), dcols(kr * step * g.ow), dy(co * step * g.ow);
        for (std::size_t s = 0; s < n; ++s) {
            const double* dys = self.grad.data() + s * co * p;
            if (pb && pb->requires_grad) {
                auto& gb = pb->grad_buffer();
                for (std::size_t c = 0; c < co; ++c) {
                    double acc = 0.0;
                    for (std::size_t q = 0; q < p; ++q) acc += dys[c * p + q];
                    gb[c] += acc;
                }
            }
            for (std::size_t l0 = 0; l0 < lines; l0 += step) {
                const std::size_t l1 = std::min(lines, l0 + step), q0 = l0 * g.ow, t = (l1 - l0) * g.ow;
                for (std::size_t c = 0; c < co; ++c)
                    std::copy(dys + c * p + q0, dys + c * p + q0 + t, dy.begin() + static_cast<long>(c * t));
                if (pk->requires_grad) {
                    im2col(g, px->data.data() + s * vol, l0, l1, cols_b.data());
                    kernel::gemm_nt(co, kr, t, dy.data(), cols_b.data(), pk->grad_buffer().data());
                }
                if (px->requires_grad) {
                    std::fill(dcols.begin(), dcols.begin() + static_cast<long>(kr * t), 0.0);
                    kernel::gemm_tn(kr, t, co, pk->data.data(), dy.data(), dcols.data());
                    col2im(g, dcols.data(), l0, l1, px->grad_buffer().data() + s * vol);
                }
            }
        }
    });
}

}  // namespace

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const std::string& what) {
    if (k == 0 || stride == 0) throw InvalidArgument(what + ": kernel and stride must be positive");
    if (in + 2 * pad < k) {
        throw ShapeError(what + ": extent underflow (input " + std::to_string(in) + " + 2*" + std::to_string(pad) +
                         " < window " + std::to_string(k) + ")");
    }
    return (in + 2 * pad - k) / stride + 1;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 2, "dense", "input");
    require_rank(w, 2, "dense", "weight");
    const std::size_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (w.dim(1) != in) {
        throw ShapeError("dense: input features (axis 1) = " + std::to_string(in) + " but weight axis 1 = " +
                         std::to_string(w.dim(1)));
    }
    if (b.defined() && b.shape() != Shape{out}) {
        throw ShapeError("dense: bias shape " + shape_string(b.shape()) + " does not match [" + std::to_string(out) + "]");
    }
    std::vector<double> y(n * out, 0.0);
    kernel::gemm_nt(n, out, in, x.values().data(), w.values().data(), y.data());
    if (b.defined())
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < out; ++j) y[i * out + j] += b[j];
    TensorImpl* px = x.impl();
    TensorImpl* pw = w.impl();
    TensorImpl* pb = b.defined() ? b.impl() : nullptr;
    return make_result(Shape{n, out}, std::move(y), {x, w, b}, [=](TensorImpl& self) {
        const double* dy = self.grad.data();
        if (px->requires_grad) kernel::gemm_nn(n, in, out, dy, pw->data.data(), px->grad_buffer().data());
        if (pw->requires_grad) kernel::gemm_tn(out, in, n, dy, px->data.data(), pw->grad_buffer().data());
        if (pb && pb->requires_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < out; ++j) gb[j] += dy[i * out + j];
        }
    });
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b, Extent2 stride, Extent2 pad) {
    require_rank(x, 4, "conv2d", "input");
    require_rank(k, 4, "conv2d", "kernel");
    if (k.dim(1) != x.dim(1)) {
        throw ShapeError("conv2d: input channels (axis 1) = " + std::to_string(x.dim(1)) + " but kernel axis 1 = " +
                         std::to_string(k.dim(1)));
    }
    const std::size_t co = k.dim(0);
    if (b.defined() && b.shape() != Shape{co}) throw ShapeError("conv2d: bias shape " + shape_string(b.shape()));
    const Geometry g = make_geometry("conv2d", x.dim(1), {1, x.dim(2), x.dim(3)}, {1, k.dim(2), k.dim(3)},
                                     {1, stride[0], stride[1]}, {0, pad[0], pad[1]});
    return conv_nd(x, k, b, g, x.dim(0), co, Shape{x.dim(0), co, g.oh, g.ow});
}

Tensor conv3d(const Tensor& x, const Tensor& k, const Tensor& b, Extent3 stride, Extent3 pad) {
    require_rank(x, 5, "conv3d", "input");
    require_rank(k, 5, "conv3d", "kernel");
    if (k.dim(1) != x.dim(1)) {
        throw ShapeError("conv3d: input channels (axis 1) = " + std::to_string(x.dim(1)) + " but kernel axis 1 = " +
                         std::to_string(k.dim(1)));
    }
    const std::size_t co = k.dim(0);
    if (b.defined() && b.shape() != Shape{co}) throw ShapeError("conv3d: bias shape " + shape_string(b.shape()));
    const Geometry g = make_geometry("conv3d", x.dim(1), {x.dim(2), x.dim(3), x.dim(4)},
                                     {k.dim(2), k.dim(3), k.dim(4)}, stride, pad);
    return conv_nd(x, k, b, g, x.dim(0), co, Shape{x.dim(0), co, g.od, g.oh, g.ow});
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, Extent2 stride) {
    require_rank(x, 4, "transposed_conv2d", "input");
    require_rank(k, 4, "transposed_conv2d", "kernel");
    if (k.dim(0) != x.dim(1)) {
        throw ShapeError("transposed_conv2d: input channels (axis 1) = " + std::to_string(x.dim(1)) +
                         " but kernel axis 0 = " + std::to_string(k.dim(0)));
    }
    if (stride[0] == 0 || stride[1] == 0) throw InvalidArgument("transposed_conv2d: stride must be positive");
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    if (b.defined() && b.shape() != Shape{co}) throw ShapeError("transposed_conv2d: bias shape " + shape_string(b.shape()));
    const std::size_t ho = (h - 1) * stride[0] + kh, wo = (w - 1) * stride[1] + kw;
    // The adjoint geometry: a convolution over the output that lands on h x w.
    const Geometry g{co, 1, ho, wo, 1, kh, kw, 1, stride[0], stride[1], 0, 0, 0, 1, h, w};
    const std::size_t kr = g.rows(), p = h * w, vol = g.volume();
    std::vector<double> out(n * vol, 0.0);
    std::vector<double> cols(kr * p);
    for (std::size_t s = 0; s < n; ++s) {
        std::fill(cols.begin(), cols.end(), 0.0);
        kernel::gemm_tn(kr, p, ci, k.values().data(), x.values().data() + s * ci * p, cols.data());
        double* o = out.data() + s * vol;
        col2im(g, cols.data(), 0, h, o);
        if (b.defined())
            for (std::size_t c = 0; c < co; ++c)
                for (std::size_t q = 0; q < ho * wo; ++q) o[c * ho * wo + q] += b[c];
    }
    TensorImpl* px = x.impl();
    TensorImpl* pk = k.impl();
    TensorImpl* pb = b.defined() ? b.impl() : nullptr;
    return make_result(Shape{n, co, ho, wo}, std::move(out), {x, k, b}, [=](TensorImpl& self) {
        std::vector<double> dcols(kr * p);
        for (std::size_t s = 0; s < n; ++s) {
            const double* dy = self.grad.data() + s * vol;
            im2col(g, dy, 0, h, dcols.data());
            if (px->requires_grad) kernel::gemm_nn(ci, p, kr, pk->data.data(), dcols.data(), px->grad_buffer().data() + s * ci * p);
            if (pk->requires_grad) kernel::gemm_nt(ci, kr, p, px->data.data() + s * ci * p, dcols.data(), pk->grad_buffer().data());
            if (pb && pb->requires_grad) {
                auto& gb = pb->grad_buffer();
                for (std::size_t c = 0; c < co; ++c) {
                    double acc = 0.0;
                    for (std::size_t q = 0; q < ho * wo; ++q) acc += dy[c * ho * wo + q];
                    gb[c] += acc;
                }
            }
        }
    });
}

namespace {

Tensor maxpool_nd(const char* op, const Tensor& x, std::size_t n, std::size_t c, Extent3 in, Extent3 window,
                  Extent3 stride, Shape out_shape) {
    static const char* axis_names[] = {"depth", "height", "width"};
    Extent3 out{};
    for (int a = 0; a < 3; ++a) {
        if (stride[a] == 0) throw InvalidArgument(std::string(op) + ": stride must be positive");
        out[a] = conv_extent(in[a], window[a], stride[a], 0, std::string(op) + " " + axis_names[a]);
    }
    const std::size_t in_vol = in[0] * in[1] * in[2], out_vol = out[0] * out[1] * out[2];
    std::vector<double> y(n * c * out_vol);
    std::vector<std::size_t> arg(y.size());
    const auto& xv = x.values();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const double* src = xv.data() + plane * in_vol;
        std::size_t q = plane * out_vol;
        for (std::size_t zd = 0; zd < out[0]; ++zd)
            for (std::size_t zh = 0; zh < out[1]; ++zh)
                for (std::size_t zw = 0; zw < out[2]; ++zw, ++q) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (std::size_t a = 0; a < window[0]; ++a)
                        for (std::size_t b = 0; b < window[1]; ++b)
                            for (std::size_t e = 0; e < window[2]; ++e) {
                                const std::size_t i =
                                    ((zd * stride[0] + a) * in[1] + zh * stride[1] + b) * in[2] + zw * stride[2] + e;
                                if (src[i] > best) {
                                    best = src[i];
                                    best_i = i;
                                }
                            }
                    y[q] = best;
                    arg[q] = plane * in_vol + best_i;
                }
    }
    TensorImpl* px = x.impl();
    return make_result(std::move(out_shape), std::move(y), {x}, [px, arg = std::move(arg)](TensorImpl& self) {
        auto& g = px->grad_buffer();
        for (std::size_t q = 0; q < arg.size(); ++q) g[arg[q]] += self.grad[q];
    });
}

}  // namespace

Tensor maxpool2d(const Tensor& x, Extent2 window, Extent2 stride) {
    require_rank(x, 4, "maxpool2d", "input");
    const std::size_t oh = conv_extent(x.dim(2), window[0], stride[0], 0, "maxpool2d height");
    const std::size_t ow = conv_extent(x.dim(3), window[1], stride[1], 0, "maxpool2d width");
    return maxpool_nd("maxpool2d", x, x.dim(0), x.dim(1), {1, x.dim(2), x.dim(3)}, {1, window[0], window[1]},
                      {1, stride[0], stride[1]}, Shape{x.dim(0), x.dim(1), oh, ow});
}

Tensor maxpool3d(const Tensor& x, Extent3 window, Extent3 stride) {
    require_rank(x, 5, "maxpool3d", "input");
    const std::size_t od = conv_extent(x.dim(2), window[0], stride[0], 0, "maxpool3d depth");
    const std::size_t oh = conv_extent(x.dim(3), window[1], stride[1], 0, "maxpool3d height");
    const std::size_t ow = conv_extent(x.dim(4), window[2], stride[2], 0, "maxpool3d width");
    return maxpool_nd("maxpool3d", x, x.dim(0), x.dim(1), {x.dim(2), x.dim(3), x.dim(4)}, window, stride,
                      Shape{x.dim(0), x.dim(1), od, oh, ow});
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean, Tensor& running_var,
                 bool training, double momentum, double eps) {
    if (x.rank() < 2) throw ShapeError("batchnorm: input needs rank >= 2, got " + shape_string(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
    for (const Tensor* t : {&gamma, &beta, static_cast<const Tensor*>(&running_mean),
                            static_cast<const Tensor*>(&running_var)}) {
        if (t->shape() != Shape{c}) {
            throw ShapeError("batchnorm: per-channel tensor shape " + shape_string(t->shape()) + " but input has " +
                             std::to_string(c) + " channels (axis 1)");
        }
    }
    const double m = static_cast<double>(n * inner);
    if (training && n * inner < 2) throw ShapeError("batchnorm: training needs more than one value per channel");
    std::vector<double> mu(c), inv_std(c);
    const auto& xv = x.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (training) {
            double s = 0.0;
            for (std::size_t s_ = 0; s_ < n; ++s_)
                for (std::size_t i = 0; i < inner; ++i) s += xv[(s_ * c + ch) * inner + i];
            const double mean = s / m;
            double v = 0.0;
            for (std::size_t s_ = 0; s_ < n; ++s_)
                for (std::size_t i = 0; i < inner; ++i) {
                    const double d = xv[(s_ * c + ch) * inner + i] - mean;
                    v += d * d;
                }
            const double var = v / m;
            mu[ch] = mean;
            inv_std[ch] = 1.0 / std::sqrt(var + eps);
            running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean;
            running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * (v / (m - 1.0));
        } else {
            mu[ch] = running_mean[ch];
            inv_std[ch] = 1.0 / std::sqrt(running_var[ch] + eps);
        }
    }
    std::vector<double> xhat(x.numel()), y(x.numel());
    for (std::size_t s_ = 0; s_ < n; ++s_)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t idx = (s_ * c + ch) * inner + i;
                xhat[idx] = (xv[idx] - mu[ch]) * inv_std[ch];
                y[idx] = gamma[ch] * xhat[idx] + beta[ch];
            }
    TensorImpl* px = x.impl();
    TensorImpl* pg = gamma.impl();
    TensorImpl* pb = beta.impl();
    return make_result(x.shape(), std::move(y), {x, gamma, beta},
                       [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& self) {
                           const auto& dy = self.grad;
                           std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                           for (std::size_t s_ = 0; s_ < n; ++s_)
                               for (std::size_t ch = 0; ch < c; ++ch)
                                   for (std::size_t i = 0; i < inner; ++i) {
                                       const std::size_t idx = (s_ * c + ch) * inner + i;
                                       sum_dy[ch] += dy[idx];
                                       sum_dy_xhat[ch] += dy[idx] * xhat[idx];
                                   }
                           if (pg->requires_grad) {
                               auto& g = pg->grad_buffer();
                               for (std::size_t ch = 0; ch < c; ++ch) g[ch] += sum_dy_xhat[ch];
                           }
                           if (pb->requires_grad) {
                               auto& g = pb->grad_buffer();
                               for (std::size_t ch = 0; ch < c; ++ch) g[ch] += sum_dy[ch];
                           }
                           if (!px->requires_grad) return;
                           auto& gx = px->grad_buffer();
                           for (std::size_t s_ = 0; s_ < n; ++s_)
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                   const double gam = pg->data[ch];
                                   for (std::size_t i = 0; i < inner; ++i) {
                                       const std::size_t idx = (s_ * c + ch) * inner + i;
                                       if (training) {
                                           gx[idx] += gam * inv_std[ch] / m *
                                                      (m * dy[idx] - sum_dy[ch] - xhat[idx] * sum_dy_xhat[ch]);
                                       } else {
                                           gx[idx] += gam * inv_std[ch] * dy[idx];
                                       }
                                   }
                               }
                       });
}

Tensor relu(const Tensor& x) {
    std::vector<double> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    TensorImpl* px = x.impl();
    return make_result(x.shape(), std::move(y), {x}, [px](TensorImpl& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (px->data[i] > 0.0) g[i] += self.grad[i];
    });
}

Tensor prelu(const Tensor& x, const Tensor& a) {
    if (a.numel() != 1) throw ShapeError("prelu: slope must have one element, got " + shape_string(a.shape()));
    const double slope = a[0];
    std::vector<double> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
    TensorImpl* px = x.impl();
    TensorImpl* pa = a.impl();
    return make_result(x.shape(), std::move(y), {x, a}, [px, pa](TensorImpl& self) {
        const double s = pa->data[0];
        if (px->requires_grad) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (px->data[i] > 0.0 ? 1.0 : s);
        }
        if (pa->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < px->data.size(); ++i)
                if (px->data[i] <= 0.0) acc += self.grad[i] * px->data[i];
            pa->grad_buffer()[0] += acc;
        }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const std::size_t len = x.dim(axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t a = 0; a < axis; ++a) outer *= x.dim(a);
    for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
    std::vector<double> y(x.numel());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, x[base + k * inner]);
            double s = 0.0;
            for (std::size_t k = 0; k < len; ++k) s += (y[base + k * inner] = std::exp(x[base + k * inner] - mx));
            for (std::size_t k = 0; k < len; ++k) y[base + k * inner] /= s;
        }
    TensorImpl* px = x.impl();
    return make_result(x.shape(), std::move(y), {x}, [=](TensorImpl& self) {
        auto& g = px->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t base = o * len * inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < len; ++k) dot += self.grad[base + k * inner] * self.data[base + k * inner];
                for (std::size_t k = 0; k < len; ++k) {
                    const std::size_t idx = base + k * inner;
                    g[idx] += self.data[idx] * (self.grad[idx] - dot);
                }
            }
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_rank(logits, 2, "softmax_cross_entropy", "logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.size() != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(n));
    }
    std::vector<double> prob(n * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw InvalidArgument("softmax_cross_entropy: label " + std::to_string(labels[i]) + " outside 0.." +
                                  std::to_string(c - 1));
        }
        const double* z = logits.values().data() + i * c;
        const double mx = *std::max_element(z, z + c);
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += (prob[i * c + k] = std::exp(z[k] - mx));
        for (std::size_t k = 0; k < c; ++k) prob[i * c + k] /= s;
        loss -= (z[labels[i]] - mx) - std::log(s);
    }
    loss /= static_cast<double>(n);
    TensorImpl* pl = logits.impl();
    return make_result(Shape{1}, {loss}, {logits}, [=, prob = std::move(prob)](TensorImpl& self) {
        auto& g = pl->grad_buffer();
        const double scale = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < c; ++k)
                g[i * c + k] += scale * (prob[i * c + k] - (static_cast<int>(k) == labels[i] ? 1.0 : 0.0));
    });
}

// ---------------------------------------------------------------------------
// Losses

namespace {

double smooth_l1_value(double d, double beta) {
    const double a = std::abs(d);
    return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
}

double smooth_l1_slope(double d, double beta) {
    if (std::abs(d) < beta) return d / beta;
    return d > 0 ? 1.0 : -1.0;
}

}  // namespace

Tensor smooth_l1(const Tensor& pred, const Tensor& target, double beta) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("smooth_l1: shape mismatch " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
    }
    if (!(beta > 0.0)) throw InvalidArgument("smooth_l1: beta must be positive");
    const std::size_t n = pred.numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += smooth_l1_value(pred[i] - target[i], beta);
    TensorImpl* pp = pred.impl();
    TensorImpl* pt = target.impl();
    return make_result(Shape{1}, {s / static_cast<double>(n)}, {pred, target}, [=](TensorImpl& self) {
        const double scale = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double g = scale * smooth_l1_slope(pp->data[i] - pt->data[i], beta);
            if (pp->requires_grad) pp->grad_buffer()[i] += g;
            if (pt->requires_grad) pt->grad_buffer()[i] -= g;
        }
    });
}

Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar) {
    if (mu.shape() != logvar.shape()) {
        throw ShapeError("kl_standard_normal: shape mismatch " + shape_string(mu.shape()) + " vs " +
                         shape_string(logvar.shape()));
    }
    const double batch = mu.rank() >= 2 ? static_cast<double>(mu.dim(0)) : 1.0;
    double s = 0.0;
    for (std::size_t i = 0; i < mu.numel(); ++i) s += 1.0 + logvar[i] - mu[i] * mu[i] - std::exp(logvar[i]);
    TensorImpl* pm = mu.impl();
    TensorImpl* pv = logvar.impl();
    return make_result(Shape{1}, {-0.5 * s / batch}, {mu, logvar}, [=](TensorImpl& self) {
        const double scale = self.grad[0] / batch;
        if (pm->requires_grad) {
            auto& g = pm->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * pm->data[i];
        }
        if (pv->requires_grad) {
            auto& g = pv->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * 0.5 * (std::exp(pv->data[i]) - 1.0);
        }
    });
}

// Laplacian pyramid on single-channel images. Every operator here is linear,
// so the adjoints below give exact gradients.
namespace {

constexpr double kTaps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

std::size_t reflect(long i, std::size_t n) {
    if (n == 1) return 0;
    const long last = static_cast<long>(n) - 1;
    while (i < 0 || i > last) i = i < 0 ? -i : 2 * last - i;
    return static_cast<std::size_t>(i);
}

// One blur pass along rows (axis 1) or columns (axis 0).
std::vector<double> blur_axis(const std::vector<double>& img, std::size_t h, std::size_t w, int axis, bool adjoint) {
    std::vector<double> out(h * w, 0.0);
    const std::size_t len = axis == 1 ? w : h;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t pos = axis == 1 ? c : r;
            for (int t = 0; t < 5; ++t) {
                const std::size_t src = reflect(static_cast<long>(pos) + t - 2, len);
                const std::size_t other = axis == 1 ? r * w + src : src * w + c;
                if (adjoint) {
                    out[other] += kTaps[t] * img[r * w + c];
                } else {
                    out[r * w + c] += kTaps[t] * img[other];
                }
            }
        }
    return out;
}

std::vector<double> blur(const std::vector<double>& img, std::size_t h, std::size_t w) {
    return blur_axis(blur_axis(img, h, w, 1, false), h, w, 0, false);
}

std::vector<double> blur_adjoint(const std::vector<double>& img, std::size_t h, std::size_t w) {
    return blur_axis(blur_axis(img, h, w, 0, true), h, w, 1, true);
}

std::vector<double> decimate(const std::vector<double>& img, std::size_t h, std::size_t w) {
    std::vector<double> out((h / 2) * (w / 2));
    for (std::size_t r = 0; r < h / 2; ++r)
        for (std::size_t c = 0; c < w / 2; ++c) out[r * (w / 2) + c] = img[(2 * r) * w + 2 * c];
    return out;
}

// Zero insertion onto a (2h x 2w) grid; also the adjoint of decimation.
std::vector<double> interleave(const std::vector<double>& img, std::size_t h, std::size_t w) {
    std::vector<double> out(4 * h * w, 0.0);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out[(2 * r) * (2 * w) + 2 * c] = img[r * w + c];
    return out;
}

std::vector<double> upsample(const std::vector<double>& img, std::size_t h, std::size_t w) {
    auto out = blur(interleave(img, h, w), 2 * h, 2 * w);
    for (double& v : out) v *= 4.0;
    return out;
}

std::vector<double> upsample_adjoint(const std::vector<double>& g, std::size_t h, std::size_t w) {
    auto t = blur_adjoint(g, 2 * h, 2 * w);
    auto out = decimate(t, 2 * h, 2 * w);
    for (double& v : out) v *= 4.0;
    return out;
}

struct Pyramid {
    std::vector<std::vector<double>> bands;
    std::vector<std::size_t> sides_h, sides_w;
};

Pyramid build_pyramid(const std::vector<double>& image, std::size_t h, std::size_t w, std::size_t levels) {
    Pyramid p;
    std::vector<std::vector<double>> gauss{image};
    p.sides_h.push_back(h);
    p.sides_w.push_back(w);
    for (std::size_t l = 1; l < levels; ++l) {
        const std::size_t ph = p.sides_h.back(), pw = p.sides_w.back();
        gauss.push_back(decimate(blur(gauss.back(), ph, pw), ph, pw));
        p.sides_h.push_back(ph / 2);
        p.sides_w.push_back(pw / 2);
    }
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        auto up = upsample(gauss[l + 1], p.sides_h[l + 1], p.sides_w[l + 1]);
        std::vector<double> band(gauss[l].size());
        for (std::size_t i = 0; i < band.size(); ++i) band[i] = gauss[l][i] - up[i];
        p.bands.push_back(std::move(band));
    }
    p.bands.push_back(gauss.back());
    return p;
}

// Gradient w.r.t. the image given gradients w.r.t. each band.
std::vector<double> pyramid_adjoint(const std::vector<std::vector<double>>& band_grads, const Pyramid& p) {
    const std::size_t levels = band_grads.size();
    std::vector<std::vector<double>> gg = band_grads;
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        const auto t = upsample_adjoint(band_grads[l], p.sides_h[l + 1], p.sides_w[l + 1]);
        for (std::size_t i = 0; i < t.size(); ++i) gg[l + 1][i] -= t[i];
    }
    for (std::size_t l = levels - 1; l >= 1; --l) {
        const auto t = blur_adjoint(interleave(gg[l], p.sides_h[l], p.sides_w[l]), p.sides_h[l - 1], p.sides_w[l - 1]);
        for (std::size_t i = 0; i < t.size(); ++i) gg[l - 1][i] += t[i];
    }
    return gg[0];
}

void check_pyramid_geometry(std::size_t h, std::size_t w, std::size_t levels) {
    if (levels == 0) throw InvalidArgument("laplacian pyramid needs at least one level");
    if (levels > 20) throw InvalidArgument("laplacian pyramid: too many levels");
    const std::size_t div = std::size_t{1} << (levels - 1);
    if (h != w) throw InvalidArgument("laplacian pyramid expects square images, got " + std::to_string(h) + "x" + std::to_string(w));
    if (h % div != 0) {
        throw InvalidArgument("laplacian pyramid: side " + std::to_string(h) + " not divisible by 2^(levels-1) = " +
                              std::to_string(div));
    }
}

}  // namespace

std::vector<std::vector<double>> laplacian_bands(const std::vector<double>& image, std::size_t h, std::size_t w,
                                                 std::size_t levels) {
    check_pyramid_geometry(h, w, levels);
    if (image.size() != h * w) throw ShapeError("laplacian_bands: image size does not match h x w");
    return build_pyramid(image, h, w, levels).bands;
}

Tensor laplacian_pyramid_loss(const Tensor& pred, const Tensor& target, std::size_t levels, double beta) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("laplacian_pyramid_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
    }
    require_rank(pred, 4, "laplacian_pyramid_loss", "images");
    if (!(beta > 0.0)) throw InvalidArgument("laplacian_pyramid_loss: beta must be positive");
    const std::size_t planes = pred.dim(0) * pred.dim(1), h = pred.dim(2), w = pred.dim(3);
    check_pyramid_geometry(h, w, levels);

    std::vector<double> level_count(levels);
    for (std::size_t l = 0; l < levels; ++l) level_count[l] = static_cast<double>(planes * (h >> l) * (w >> l));

    std::vector<Pyramid> pyramids(planes);
    double loss = 0.0;
    for (std::size_t q = 0; q < planes; ++q) {
        std::vector<double> d(h * w);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = pred[q * h * w + i] - target[q * h * w + i];
        pyramids[q] = build_pyramid(d, h, w, levels);
        for (std::size_t l = 0; l < levels; ++l) {
            double s = 0.0;
            for (double v : pyramids[q].bands[l]) s += smooth_l1_value(v, beta);
            loss += static_cast<double>(l + 1) * s / level_count[l];
        }
    }
    TensorImpl* pp = pred.impl();
    TensorImpl* pt = target.impl();
    return make_result(Shape{1}, {loss}, {pred, target},
                       [=, pyramids = std::move(pyramids), level_count = std::move(level_count)](TensorImpl& self) {
                           for (std::size_t q = 0; q < planes; ++q) {
                               std::vector<std::vector<double>> gb(levels);
                               for (std::size_t l = 0; l < levels; ++l) {
                                   const auto& band = pyramids[q].bands[l];
                                   const double wgt = self.grad[0] * static_cast<double>(l + 1) / level_count[l];
                                   gb[l].resize(band.size());
                                   for (std::size_t i = 0; i < band.size(); ++i)
                                       gb[l][i] = wgt * smooth_l1_slope(band[i], beta);
                               }
                               const auto gd = pyramid_adjoint(gb, pyramids[q]);
                               if (pp->requires_grad) {
                                   auto& g = pp->grad_buffer();
                                   for (std::size_t i = 0; i < gd.size(); ++i) g[q * h * w + i] += gd[i];
                               }
                               if (pt->requires_grad) {
                                   auto& g = pt->grad_buffer();
                                   for (std::size_t i = 0; i < gd.size(); ++i) g[q * h * w + i] -= gd[i];
                               }
                           }
                       });
}

}  // namespace gastkit::nn
