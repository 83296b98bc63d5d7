#pragma once

#include <vector>

#include "daa/factor_core.hpp"

namespace daa {

// Soft map in [0,1] marking where anatomy mixing happened. It gates the noise
// injected by the refiner and exempts pixels from the anatomy consistency loss.
struct BlendMask {
    int rows = 0;
    int cols = 0;
    std::vector<float> phi; // row-major
    int dilation_radius = 0;
    double blur_sigma = 0.0;

    float at(int r, int c) const { return phi[static_cast<std::size_t>(r) * cols + c]; }
};

// Normalised 1-D Gaussian taps for offsets -radius..radius, radius = ceil(3*sigma).
// Empty for sigma == 0.
std::vector<double> gaussian_taps(double sigma);

// dilate(modified_support, radius) -> Gaussian blur (zero padded) -> clamp to [0,1],
// with every pixel outside the dilated support forced to exactly 0.
BlendMask build_blend_mask(const MixRecord& rec, int dilation_radius, double blur_sigma);
BlendMask build_blend_mask(const BinaryMap& modified_support, int dilation_radius, double blur_sigma);

// Defaults tuned for 64x64 frames, scaled linearly with the frame edge.
int default_dilation_radius(int frame_size);
double default_blur_sigma(int frame_size);

} // namespace daa
