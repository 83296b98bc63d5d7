#include "daa/synthesis_nets.hpp"

#include <algorithm>
#include <cmath>

namespace daa {

torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& scale, const torch::Tensor& shift, double eps) {
    if (x.dim() != 4) throw ShapeMismatch("adain expects [B,C,H,W]");
    const auto c = x.size(1);
    if (scale.size(-1) != c || shift.size(-1) != c) throw ShapeMismatch("adain scale/shift length differs from C");
    auto mean = x.mean({2, 3}, true);
    auto var = (x - mean).pow(2).mean({2, 3}, true);
    auto s = scale.dim() == 1 ? scale.view({1, c, 1, 1}) : scale.view({scale.size(0), c, 1, 1});
    auto b = shift.dim() == 1 ? shift.view({1, c, 1, 1}) : shift.view({shift.size(0), c, 1, 1});
    return (x - mean) / torch::sqrt(var + eps) * s + b;
}

GeneratorImpl::GeneratorImpl(GeneratorOptions opts) : opts_(opts) {
    const int h = opts_.hidden;
    const int ins[4] = {opts_.channels, h, h, h};
    const int outs[4] = {h, h, h, 1};
    for (int l = 0; l < 4; ++l)
        convs.push_back(register_module("conv" + std::to_string(l),
                                        torch::nn::Conv2d(torch::nn::Conv2dOptions(ins[l], outs[l], 3).padding(1))));
    map_in = register_module("map_in", torch::nn::Linear(opts_.code_dim, opts_.mapper_hidden));
    map_out = register_module("map_out", torch::nn::Linear(opts_.mapper_hidden, 2 * 3 * h));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& c, const torch::Tensor& z) {
    if (c.dim() != 4 || c.size(1) != opts_.channels) throw ShapeMismatch("generator anatomy must be [B,K,H,W]");
    if (z.dim() != 2 || z.size(1) != opts_.code_dim || z.size(0) != c.size(0))
        throw ShapeMismatch("generator imaging code must be [B,d]");
    const int h = opts_.hidden;
    auto style = map_out->forward(torch::relu(map_in->forward(z))).view({z.size(0), 3, 2, h});
    auto x = c;
    for (int l = 0; l < 3; ++l) {
        x = torch::relu(convs[static_cast<std::size_t>(l)]->forward(x));
        x = adain(x, 1.0 + style.select(1, l).select(1, 0), style.select(1, l).select(1, 1));
    }
    return torch::tanh(convs[3]->forward(x));
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorOptions opts) : opts_(std::move(opts)) {
    if (opts_.widths.empty()) throw InvalidArgument("discriminator needs at least one layer");
    int in = 1;
    for (std::size_t l = 0; l < opts_.widths.size(); ++l) {
        convs.push_back(register_module(
            "conv" + std::to_string(l),
            torch::nn::Conv2d(torch::nn::Conv2dOptions(in, opts_.widths[l], 4).stride(2).padding(1))));
        in = opts_.widths[l];
    }
    head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, 3).padding(1)));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
    auto x = image;
    for (auto& conv : convs) x = torch::leaky_relu(conv->forward(x), opts_.slope);
    return head->forward(x).mean({1, 2, 3});
}

torch::Tensor discriminate(DiscriminatorImpl& d, const torch::Tensor& image, const torch::Tensor& mask) {
    if (image.sizes() != mask.sizes()) throw ShapeMismatch("image and mask differ in shape");
    return d.forward(image * mask);
}

ClassifierImpl::ClassifierImpl(ClassifierOptions opts) : opts_(std::move(opts)) {
    int in = 1, side = opts_.image_size;
    for (std::size_t b = 0; b < opts_.widths.size(); ++b) {
        const int w = opts_.widths[b];
        convs.push_back(register_module("conv" + std::to_string(b),
                                        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, w, 3).padding(1))));
        norms.push_back(register_module("bn" + std::to_string(b), torch::nn::BatchNorm2d(w)));
        in = w;
        if (std::count(opts_.pool_after.begin(), opts_.pool_after.end(), static_cast<int>(b))) side /= 2;
    }
    if (side < 1) throw InvalidArgument("classifier input too small for its pooling stages");
    fc1 = register_module("fc1", torch::nn::Linear(in * side * side, opts_.fc1));
    fc2 = register_module("fc2", torch::nn::Linear(opts_.fc1, opts_.fc2));
    fc3 = register_module("fc3", torch::nn::Linear(opts_.fc2, opts_.num_classes));
}

torch::Tensor ClassifierImpl::features(const torch::Tensor& image) {
    auto x = image;
    for (std::size_t b = 0; b < convs.size(); ++b) {
        x = torch::relu(norms[b]->forward(convs[b]->forward(x)));
        if (std::count(opts_.pool_after.begin(), opts_.pool_after.end(), static_cast<int>(b)))
            x = torch::max_pool2d(x, 2);
    }
    x = torch::relu(fc1->forward(x.flatten(1)));
    return torch::relu(fc2->forward(x));
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& image) { return fc3->forward(features(image)); }

torch::Tensor classify(ClassifierImpl& f, const torch::Tensor& image) { return torch::softmax(f.forward(image), 1); }

void init_params(torch::nn::Module& m, std::uint64_t seed) {
    auto gen = make_generator(seed);
    torch::NoGradGuard ng;
    for (const auto& item : m.named_modules()) {
        auto& mod = *item.value();
        if (auto* conv = mod.as<torch::nn::Conv2d>()) {
            auto& w = conv->weight;
            const double rf = static_cast<double>(w.size(2) * w.size(3));
            const double bound = std::sqrt(6.0 / ((w.size(1) + w.size(0)) * rf));
            w.uniform_(-bound, bound, gen);
            if (conv->bias.defined()) conv->bias.zero_();
        } else if (auto* tconv = mod.as<torch::nn::ConvTranspose2d>()) {
            auto& w = tconv->weight;
            const double rf = static_cast<double>(w.size(2) * w.size(3));
            const double bound = std::sqrt(6.0 / ((w.size(1) + w.size(0)) * rf));
            w.uniform_(-bound, bound, gen);
            if (tconv->bias.defined()) tconv->bias.zero_();
        } else if (auto* lin = mod.as<torch::nn::Linear>()) {
            auto& w = lin->weight;
            const double bound = std::sqrt(6.0 / static_cast<double>(w.size(0) + w.size(1)));
            w.uniform_(-bound, bound, gen);
            if (lin->bias.defined()) lin->bias.zero_();
        } else if (auto* bn = mod.as<torch::nn::BatchNorm2d>()) {
            bn->weight.fill_(1.0);
            bn->bias.zero_();
            bn->running_mean.zero_();
            bn->running_var.fill_(1.0);
        } else if (auto* ref = mod.as<Refiner>()) {
            for (auto& g : ref->gains) g.fill_(ref->options().gain_init);
        }
    }
}

void copy_state(const torch::nn::Module& from, torch::nn::Module& to) {
    torch::NoGradGuard ng;
    auto src_p = from.named_parameters(), dst_p = to.named_parameters();
    for (const auto& item : src_p) dst_p[item.key()].copy_(item.value());
    auto src_b = from.named_buffers(), dst_b = to.named_buffers();
    for (const auto& item : src_b) dst_b[item.key()].copy_(item.value());
}

} // namespace daa
