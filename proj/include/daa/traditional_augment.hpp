#pragma once

// Classical image augmentations: blur, gamma, crop, rotation, flip and elastic
// deformation. Geometric transforms are shared with an optional label map.

#include <torch/torch.h>

#include <utility>

namespace daa {

struct TraditionalAugmentParams {
    double apply_p = 0.5;        // probability of each photometric/geometric transform
    double blur_sigma_max = 1.5; // sigma ~ U[0, max]
    double gamma_lo = 0.7;
    double gamma_hi = 1.4;
    double crop_min = 0.85;      // kept fraction of the frame edge
    double rotate_deg = 15.0;
    double flip_p = 0.5;
    double elastic_alpha = 2.0;  // peak displacement, pixels
    double elastic_sigma = 4.0;  // smoothing of the displacement field, pixels
};

// images: [B,1,H,W] in [-1,1]. labels: undefined or [B,H,W] int64 (nearest sampling).
std::pair<torch::Tensor, torch::Tensor> traditional_augment(const torch::Tensor& images, const torch::Tensor& labels,
                                                            at::Generator& gen,
                                                            const TraditionalAugmentParams& p = {});

// Separable Gaussian blur of [B,C,H,W] with replicate padding; sigma 0 is the identity.
torch::Tensor gaussian_blur(const torch::Tensor& x, double sigma);

} // namespace daa
