#include "daa/noise_blend.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace daa {

RefinerImpl::RefinerImpl(RefinerOptions opts) : opts_(opts) {
    if (opts_.channels < 1 || opts_.hidden < 1) throw InvalidArgument("refiner widths must be positive");
    if (!(opts_.tau > 0.0)) throw InvalidArgument("Gumbel temperature must be positive");
    const auto widths = layer_widths();
    int in = opts_.channels;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        convs.push_back(register_module("conv" + std::to_string(l),
                                        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, widths[l], 3).padding(1))));
        gains.push_back(register_parameter("gain" + std::to_string(l),
                                           torch::full({widths[l]}, opts_.gain_init, torch::kFloat32)));
        in = widths[l];
    }
}

std::vector<int> RefinerImpl::layer_widths() const { return {opts_.hidden, opts_.hidden, opts_.hidden, opts_.channels}; }

torch::Tensor RefinerImpl::logits(const torch::Tensor& chat, const NoisePatch& noise) {
    if (chat.dim() != 4 || chat.size(1) != opts_.channels)
        throw ShapeMismatch("refiner expects [B," + std::to_string(opts_.channels) + ",H,W] input");
    if (noise.layers.size() != convs.size()) throw ShapeMismatch("noise patch has the wrong number of layers");
    auto x = chat;
    for (std::size_t l = 0; l < convs.size(); ++l) {
        x = convs[l]->forward(x) + noise.layers[l];
        if (l + 1 < convs.size()) x = torch::relu(x);
    }
    return x;
}

at::Generator make_generator(std::uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

NoisePatch sample_noise_patches(const torch::Tensor& phi, RefinerImpl& j, at::Generator& gen) {
    if (phi.dim() != 4 || phi.size(1) != 1) throw ShapeMismatch("phi must be [B,1,H,W]");
    NoisePatch out;
    const auto opts = torch::TensorOptions().dtype(phi.dtype());
    for (std::size_t l = 0; l < j.gains.size(); ++l) {
        const auto& g = j.gains[l];
        auto z = torch::randn({phi.size(0), g.size(0), phi.size(2), phi.size(3)}, gen, opts);
        out.layers.push_back(z * phi * g.view({1, -1, 1, 1}));
    }
    return out;
}

NoisePatch sample_noise_patches(const torch::Tensor& phi, RefinerImpl& j, std::uint64_t seed) {
    auto gen = make_generator(seed);
    return sample_noise_patches(phi, j, gen);
}

torch::Tensor gumbel_softmax(const torch::Tensor& logits, double tau, at::Generator& gen, bool hard,
                             const torch::Tensor& gate) {
    if (!(tau > 0.0)) throw InvalidArgument("Gumbel temperature must be positive");
    // U in [tiny, 1): -log(-log U) stays finite.
    auto u = torch::empty_like(logits).uniform_(0.0, 1.0, gen).clamp_min(1e-20);
    auto g = -torch::log(-torch::log(u));
    if (gate.defined()) g = g * gate;
    auto y = torch::softmax((logits + g) / tau, 1);
    if (!hard) return y;
    auto idx = y.argmax(1, true);
    auto one_hot = torch::zeros_like(y).scatter_(1, idx, 1.0);
    return one_hot + (y - y.detach());
}

torch::Tensor refine(RefinerImpl& j, const torch::Tensor& chat, const torch::Tensor& phi, at::Generator& gen,
                     bool hard) {
    if (phi.size(0) != chat.size(0) || phi.size(2) != chat.size(2) || phi.size(3) != chat.size(3))
        throw ShapeMismatch("phi and anatomy disagree in shape");
    const auto noise = sample_noise_patches(phi, j, gen);
    return gumbel_softmax(j.logits(chat, noise), j.options().tau, gen, hard, phi);
}

RefinedAnatomy refine(RefinerImpl& j, const AnatomyTensor& chat, const BlendMask& phi, std::uint64_t seed, bool hard) {
    if (phi.rows != chat.rows() || phi.cols != chat.cols()) throw ShapeMismatch("phi and anatomy disagree in shape");
    auto gen = make_generator(seed);
    torch::NoGradGuard ng;
    auto out = refine(j, anatomy_to_tensor(chat).unsqueeze(0), phi_to_tensor(phi).unsqueeze(0), gen, hard);
    return {out.squeeze(0), chat.roles(), chat.subject_id()};
}

} // namespace daa
