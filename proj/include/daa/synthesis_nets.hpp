#pragma once

// Generator G (anatomy + imaging code -> image), masked least-squares critic D and
// the VGG-style pathology classifier F.

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "daa/noise_blend.hpp"

namespace daa {

// Per-channel instance normalisation over spatial sites, then scale and shift.
// x: [B,C,H,W]; scale, shift: [B,C] (or [C]).
torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& scale, const torch::Tensor& shift, double eps = 1e-5);

struct GeneratorOptions {
    int channels = 12;  // K
    int hidden = 32;
    int code_dim = 8;   // d
    int mapper_hidden = 32;
};

// conv-ReLU-AdaIN x3, then conv to one channel and tanh. AdaIN scale is 1 + mapped.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(GeneratorOptions opts = {});
    // c: [B,K,H,W], z: [B,d] -> [B,1,H,W] in [-1,1]
    torch::Tensor forward(const torch::Tensor& c, const torch::Tensor& z);
    const GeneratorOptions& options() const noexcept { return opts_; }

    std::vector<torch::nn::Conv2d> convs;
    torch::nn::Linear map_in{nullptr}, map_out{nullptr};

private:
    GeneratorOptions opts_;
};
TORCH_MODULE(Generator);

struct DiscriminatorOptions {
    std::vector<int> widths{64, 128, 256, 512};
    double slope = 0.2;
};

// Strided 4x4 convolutions with leaky ReLU, a 3x3 conv to one map, spatial mean.
class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(DiscriminatorOptions opts = {});
    torch::Tensor forward(const torch::Tensor& image); // [B,1,H,W] -> [B]
    const DiscriminatorOptions& options() const noexcept { return opts_; }

    std::vector<torch::nn::Conv2d> convs;
    torch::nn::Conv2d head{nullptr};

private:
    DiscriminatorOptions opts_;
};
TORCH_MODULE(Discriminator);

// Score of the pixelwise-masked image; mask [B,1,H,W] broadcast over channels.
torch::Tensor discriminate(DiscriminatorImpl& d, const torch::Tensor& image, const torch::Tensor& mask);

struct ClassifierOptions {
    int image_size = 64;
    int num_classes = 4;
    std::vector<int> widths{16, 16, 32, 32, 64, 64, 64}; // one per conv block
    std::vector<int> pool_after{1, 3, 6};                 // block indices followed by 2x2 max-pool
    int fc1 = 128;
    int fc2 = 64;
};

// conv-BN-ReLU blocks followed by three fully-connected layers.
class ClassifierImpl : public torch::nn::Module {
public:
    explicit ClassifierImpl(ClassifierOptions opts = {});
    torch::Tensor forward(const torch::Tensor& image);  // logits [B,Omega]
    torch::Tensor features(const torch::Tensor& image); // penultimate activations [B,fc2]
    const ClassifierOptions& options() const noexcept { return opts_; }

    std::vector<torch::nn::Conv2d> convs;
    std::vector<torch::nn::BatchNorm2d> norms;
    torch::nn::Linear fc1{nullptr}, fc2{nullptr}, fc3{nullptr};

private:
    ClassifierOptions opts_;
};
TORCH_MODULE(Classifier);

// Softmax probabilities.
torch::Tensor classify(ClassifierImpl& f, const torch::Tensor& image);

// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))) and zero biases for every
// conv/linear layer, drawn from a generator seeded with `seed`. Batch-norm affine
// parameters reset to (1, 0); refiner noise gains reset to their initial value.
void init_params(torch::nn::Module& m, std::uint64_t seed);

// Element-wise copy of all parameters and buffers between structurally identical modules.
void copy_state(const torch::nn::Module& from, torch::nn::Module& to);

} // namespace daa
