#pragma once

// Differentiable layer and loss ops. Image tensors are channel-first:
// [N, C, H, W] for 2-D ops and [N, C, D, H, W] for 3-D ops.

#include <array>
#include <cstddef>
#include <vector>

#include "gastkit/tensor.hpp"

namespace gastkit::nn {

using Extent2 = std::array<std::size_t, 2>;
using Extent3 = std::array<std::size_t, 3>;

/// floor((in + 2 pad - k) / stride) + 1; throws ShapeError naming `what`
/// when the window does not fit.
std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const std::string& what);

/// x [N, in], w [out, in], b [out] (may be undefined) -> [N, out]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

/// k [Co, C, kh, kw]
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b, Extent2 stride = {1, 1}, Extent2 pad = {0, 0});
/// k [Co, C, kd, kh, kw]
Tensor conv3d(const Tensor& x, const Tensor& k, const Tensor& b, Extent3 stride = {1, 1, 1},
              Extent3 pad = {0, 0, 0});
/// k [C, Co, kh, kw]; output side (in - 1) * stride + k.
Tensor transposed_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, Extent2 stride);

Tensor maxpool2d(const Tensor& x, Extent2 window, Extent2 stride);
Tensor maxpool3d(const Tensor& x, Extent3 window, Extent3 stride);

/// Per-channel normalization over batch and spatial axes (axis 1 is the
/// channel). Training mode uses batch statistics and updates the running
/// buffers (unbiased variance, exponential momentum); eval mode uses them.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

Tensor relu(const Tensor& x);
/// One learnable slope `a` (shape [1]) for negative inputs.
Tensor prelu(const Tensor& x, const Tensor& a);
Tensor softmax(const Tensor& x, std::size_t axis);

/// Mean over the batch of -log softmax(logits)[label]; logits [N, C].
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Mean over elements of 0.5 d^2 / beta (|d| < beta) or |d| - 0.5 beta.
Tensor smooth_l1(const Tensor& pred, const Tensor& target, double beta = 1.0);

/// -0.5 sum(1 + logvar - mu^2 - exp(logvar)) over latent dims, mean over
/// the batch (axis 0).
Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar);

/// Weighted smooth-L1 over Laplacian pyramid bands of [N, C, H, W] images:
/// sum_l (l + 1) * smooth_l1(band_l(pred), band_l(target)), l = 0 finest.
/// Blur [1, 4, 6, 4, 1] / 16 with reflected borders, 2x decimation; the
/// coarsest band is the residual low-pass image.
Tensor laplacian_pyramid_loss(const Tensor& pred, const Tensor& target, std::size_t levels = 4, double beta = 1.0);

/// Bands of a single H x W image (finest first), for inspection and tests.
std::vector<std::vector<double>> laplacian_bands(const std::vector<double>& image, std::size_t h, std::size_t w,
                                                 std::size_t levels);

}  // namespace gastkit::nn
