#include "daa/losses.hpp"

#include "daa/errors.hpp"

namespace daa {

torch::Tensor loss_adv_d(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
    return (0.5 * (d_real - 1.0).pow(2)).mean() + (0.5 * d_fake.pow(2)).mean();
}

torch::Tensor loss_adv_g(const torch::Tensor& d_fake) { return (0.5 * (d_fake - 1.0).pow(2)).mean(); }

torch::Tensor loss_path(const torch::Tensor& probs, const torch::Tensor& labels) {
    if (probs.dim() != 2 || labels.dim() != 1 || probs.size(0) != labels.size(0))
        throw ShapeMismatch("loss_path expects [B,Omega] probabilities and [B] labels");
    auto p = probs.gather(1, labels.to(torch::kInt64).unsqueeze(1)).squeeze(1);
    return -torch::log(p.clamp_min(1e-12)).mean();
}

torch::Tensor loss_cons(const torch::Tensor& chat, const torch::Tensor& ctilde, const torch::Tensor& phi) {
    if (chat.sizes() != ctilde.sizes() || chat.dim() != 4 || phi.dim() != 4 || phi.size(1) != 1 ||
        phi.size(0) != chat.size(0) || phi.size(2) != chat.size(2) || phi.size(3) != chat.size(3))
        throw ShapeMismatch("loss_cons shape mismatch");
    const double n = static_cast<double>(chat.size(0) * chat.size(2) * chat.size(3));
    return ((1.0 - phi) * (chat - ctilde).abs().sum(1, true)).sum() / n;
}

torch::Tensor loss_bg(const torch::Tensor& ia, const torch::Tensor& it, const torch::Tensor& mask) {
    if (ia.sizes() != it.sizes() || ia.sizes() != mask.sizes()) throw ShapeMismatch("loss_bg shape mismatch");
    const double n = static_cast<double>(ia.numel() / ia.size(1));
    return ((1.0 - mask) * (ia - it).abs().sum(1, true)).sum() / n;
}

torch::Tensor total_loss(const LossParts& p, const LossWeights& w) {
    if (w.lambda1 < 0.0) throw InvalidArgument("lambda1 must be non-negative");
    return p.adv + p.path + w.lambda1 * (p.cons + p.bg);
}

} // namespace daa
