#pragma once

// Refiner J: four 3x3 convolutions with blend-mask-gated Gaussian noise added to
// every layer's activations, closed by a channel-wise Gumbel-Softmax.

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "daa/blend_mask.hpp"
#include "daa/tensor_bridge.hpp"

namespace daa {

struct RefinerOptions {
    int channels = 12; // K
    int hidden = 32;
    double tau = 0.67;
    double gain_init = 0.1;
};

// One noise field per layer, [B,C_l,H,W]. Zero wherever phi is zero.
struct NoisePatch {
    std::vector<torch::Tensor> layers;
};

class RefinerImpl : public torch::nn::Module {
public:
    explicit RefinerImpl(RefinerOptions opts = {});

    // chat: [B,K,H,W]; phi: [B,1,H,W]; noise from sample_noise_patches.
    // Returns pre-softmax logits [B,K,H,W].
    torch::Tensor logits(const torch::Tensor& chat, const NoisePatch& noise);

    const RefinerOptions& options() const noexcept { return opts_; }
    std::vector<int> layer_widths() const;

    std::vector<torch::nn::Conv2d> convs;
    std::vector<torch::Tensor> gains; // per layer, [C_l]

private:
    RefinerOptions opts_;
};
TORCH_MODULE(Refiner);

at::Generator make_generator(std::uint64_t seed);

// Standard-normal draws x phi x per-channel gain; differentiable in the gains.
NoisePatch sample_noise_patches(const torch::Tensor& phi, RefinerImpl& j, at::Generator& gen);
NoisePatch sample_noise_patches(const torch::Tensor& phi, RefinerImpl& j, std::uint64_t seed);

// Gumbel-Softmax across dim 1 of [B,K,...] logits. `gate`, when defined and
// broadcastable to the logits, scales the Gumbel perturbation (gate = 0 gives the
// plain tempered softmax). hard = straight-through one-hot.
torch::Tensor gumbel_softmax(const torch::Tensor& logits, double tau, at::Generator& gen, bool hard,
                             const torch::Tensor& gate = {});

// Full refinement of a batch: noise patches, convolutions, Gumbel-Softmax gated by phi.
// Output [B,K,H,W] in [0,1], channels summing to 1 per pixel.
torch::Tensor refine(RefinerImpl& j, const torch::Tensor& chat, const torch::Tensor& phi, at::Generator& gen,
                     bool hard);

// Single-subject convenience wrapper.
RefinedAnatomy refine(RefinerImpl& j, const AnatomyTensor& chat, const BlendMask& phi, std::uint64_t seed,
                      bool hard = true);

} // namespace daa
