#pragma once

// Conversions between the plain containers of the core library and torch tensors.
// All tensors are float32 on CPU unless stated otherwise.

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "daa/blend_mask.hpp"
#include "daa/factor_core.hpp"
#include "daa/phantom_data.hpp"

namespace daa {

// Relaxed anatomy C~: K channels with values in [0,1] that sum to 1 per pixel.
struct RefinedAnatomy {
    torch::Tensor values; // [K,H,W]
    std::vector<ChannelRole> roles;
    std::string subject_id;
};

torch::Tensor anatomy_to_tensor(const AnatomyTensor& c);           // [K,H,W]
torch::Tensor map_to_tensor(const BinaryMap& m);                   // [1,H,W]
torch::Tensor phi_to_tensor(const BlendMask& b);                   // [1,H,W]
torch::Tensor image_to_tensor(const std::vector<float>& img, int rows, int cols); // [1,H,W]
torch::Tensor code_to_tensor(const ImagingFactor& z);              // [d]
torch::Tensor masks_to_labels(const std::vector<BinaryMap>& masks); // [H,W] int64, 0 = background

std::vector<float> tensor_to_vector(const torch::Tensor& t);
// Pixels > 0.5 of a [H,W] or [1,H,W] tensor.
BinaryMap tensor_to_map(const torch::Tensor& t);

// Channel-wise argmax of C~ binarised back into an anatomy tensor.
AnatomyTensor harden(const RefinedAnatomy& c, PathologyLabel label);

// Row-major [H,W] float image as a grayscale PNG, `lo`..`hi` mapped to black..white.
std::vector<std::uint8_t> tensor_png(const torch::Tensor& t, float lo, float hi);

} // namespace daa
