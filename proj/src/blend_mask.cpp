#include "daa/blend_mask.hpp"

#include <algorithm>
#include <cmath>

namespace daa {

std::vector<double> gaussian_taps(double sigma) {
    if (sigma < 0.0) throw InvalidArgument("negative blur sigma");
    if (sigma == 0.0) return {};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int d = -radius; d <= radius; ++d) {
        const double v = std::exp(-0.5 * d * d / (sigma * sigma));
        taps[static_cast<std::size_t>(d + radius)] = v;
        sum += v;
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

BlendMask build_blend_mask(const MixRecord& rec, int dilation_radius, double blur_sigma) {
    return build_blend_mask(rec.modified_support, dilation_radius, blur_sigma);
}

BlendMask build_blend_mask(const BinaryMap& modified_support, int dilation_radius, double blur_sigma) {
    if (dilation_radius < 0) throw InvalidArgument("negative dilation radius");
    const BinaryMap region = dilate(modified_support, dilation_radius);
    const int rows = region.rows(), cols = region.cols();

    std::vector<double> field(region.size());
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = region.data()[i];

    const auto taps = gaussian_taps(blur_sigma);
    if (!taps.empty()) {
        const int radius = static_cast<int>(taps.size() / 2);
        std::vector<double> tmp(field.size(), 0.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                double acc = 0.0;
                for (int d = -radius; d <= radius; ++d) {
                    const int cc = c + d;
                    if (cc >= 0 && cc < cols) acc += taps[static_cast<std::size_t>(d + radius)] * field[static_cast<std::size_t>(r) * cols + cc];
                }
                tmp[static_cast<std::size_t>(r) * cols + c] = acc;
            }
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                double acc = 0.0;
                for (int d = -radius; d <= radius; ++d) {
                    const int rr = r + d;
                    if (rr >= 0 && rr < rows) acc += taps[static_cast<std::size_t>(d + radius)] * tmp[static_cast<std::size_t>(rr) * cols + c];
                }
                field[static_cast<std::size_t>(r) * cols + c] = acc;
            }
    }

    BlendMask out;
    out.rows = rows;
    out.cols = cols;
    out.dilation_radius = dilation_radius;
    out.blur_sigma = blur_sigma;
    out.phi.resize(field.size());
    for (std::size_t i = 0; i < field.size(); ++i)
        out.phi[i] = region.data()[i] ? static_cast<float>(std::clamp(field[i], 0.0, 1.0)) : 0.0f;
    return out;
}

int default_dilation_radius(int frame_size) {
    return std::max(1, static_cast<int>(std::lround(5.0 * frame_size / 64.0)));
}

double default_blur_sigma(int frame_size) { return 2.0 * frame_size / 64.0; }

} // namespace daa
