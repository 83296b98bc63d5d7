#include "daa/traditional_augment.hpp"

#include <cmath>

#include "daa/blend_mask.hpp"

namespace daa {

namespace {

double draw(at::Generator& gen, double lo, double hi) {
    return torch::empty({1}, torch::kFloat64).uniform_(lo, hi, gen).item<double>();
}

bool coin(at::Generator& gen, double p) { return draw(gen, 0.0, 1.0) < p; }

} // namespace

torch::Tensor gaussian_blur(const torch::Tensor& x, double sigma) {
    const auto taps = gaussian_taps(sigma);
    if (taps.empty()) return x;
    const auto n = static_cast<long>(taps.size());
    const long rad = n / 2;
    auto k = torch::tensor(std::vector<double>(taps.begin(), taps.end()), x.options());
    const auto c = x.size(1);
    auto kh = k.view({1, 1, 1, n}).expand({c, 1, 1, n}).contiguous();
    auto kv = k.view({1, 1, n, 1}).expand({c, 1, n, 1}).contiguous();
    namespace F = torch::nn::functional;
    auto y = F::pad(x, F::PadFuncOptions({rad, rad, 0, 0}).mode(torch::kReplicate));
    y = F::conv2d(y, kh, F::Conv2dFuncOptions().groups(c));
    y = F::pad(y, F::PadFuncOptions({0, 0, rad, rad}).mode(torch::kReplicate));
    return F::conv2d(y, kv, F::Conv2dFuncOptions().groups(c));
}

std::pair<torch::Tensor, torch::Tensor> traditional_augment(const torch::Tensor& images, const torch::Tensor& labels,
                                                            at::Generator& gen, const TraditionalAugmentParams& p) {
    namespace F = torch::nn::functional;
    const auto b = images.size(0), h = images.size(2), w = images.size(3);
    std::vector<torch::Tensor> out_img, out_lab;
    for (long i = 0; i < b; ++i) {
        auto x = images[i].unsqueeze(0);
        // Photometric.
        if (coin(gen, p.apply_p)) x = gaussian_blur(x, draw(gen, 0.0, p.blur_sigma_max));
        if (coin(gen, p.apply_p)) {
            const double g = std::exp(draw(gen, std::log(p.gamma_lo), std::log(p.gamma_hi)));
            x = ((x + 1.0) * 0.5).clamp(0.0, 1.0).pow(g) * 2.0 - 1.0;
        }
        // Geometric: one sampling grid for image and labels.
        double angle = 0.0, scale = 1.0, tx = 0.0, ty = 0.0, sx = 1.0;
        if (coin(gen, p.apply_p)) angle = draw(gen, -p.rotate_deg, p.rotate_deg) * M_PI / 180.0;
        if (coin(gen, p.apply_p)) {
            scale = draw(gen, p.crop_min, 1.0);
            tx = draw(gen, -(1.0 - scale), 1.0 - scale);
            ty = draw(gen, -(1.0 - scale), 1.0 - scale);
        }
        if (coin(gen, p.flip_p)) sx = -1.0;
        const bool elastic = coin(gen, p.apply_p);
        const bool identity_geom = angle == 0.0 && scale == 1.0 && sx == 1.0 && !elastic;
        torch::Tensor lab = labels.defined() ? labels[i].unsqueeze(0) : torch::Tensor();
        if (!identity_geom) {
            const double ca = std::cos(angle) * scale, sa = std::sin(angle) * scale;
            auto theta = torch::tensor({ca * sx, -sa, tx, sa * sx, ca, ty}, x.options()).view({1, 2, 3});
            auto grid = F::affine_grid(theta, {1, 1, h, w}, false);
            if (elastic) {
                auto field = torch::empty({1, 2, h, w}, x.options()).uniform_(-1.0, 1.0, gen);
                field = gaussian_blur(field, p.elastic_sigma);
                const auto peak = field.abs().max().clamp_min(1e-8);
                field = field / peak * p.elastic_alpha;
                // pixels -> normalised coordinates
                auto disp = torch::stack({field[0][0] * (2.0 / w), field[0][1] * (2.0 / h)}, -1).unsqueeze(0);
                grid = grid + disp;
            }
            x = F::grid_sample(x, grid,
                               F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(false));
            if (lab.defined()) {
                auto lf = lab.to(x.dtype()).unsqueeze(1);
                lf = F::grid_sample(lf, grid,
                                    F::GridSampleFuncOptions().mode(torch::kNearest).padding_mode(torch::kZeros).align_corners(false));
                lab = lf.squeeze(1).round().to(torch::kInt64);
            }
        }
        out_img.push_back(x.clamp(-1.0, 1.0));
        if (lab.defined()) out_lab.push_back(lab);
    }
    return {torch::cat(out_img), out_lab.empty() ? torch::Tensor() : torch::cat(out_lab)};
}

} // namespace daa
