#pragma once

#include <torch/torch.h>

namespace daa {

// Least-squares adversarial terms, batch-averaged.
torch::Tensor loss_adv_d(const torch::Tensor& d_real, const torch::Tensor& d_fake); // 1/2(r-1)^2 + 1/2 f^2
torch::Tensor loss_adv_g(const torch::Tensor& d_fake);                              // 1/2(f-1)^2

// Cross-entropy of probability rows [B,Omega] against class indices [B]; log clamped at 1e-12.
torch::Tensor loss_path(const torch::Tensor& probs, const torch::Tensor& labels);

// (1/N) sum_j (1 - phi_j) |chat_j - ctilde_j|_1, N = B*H*W; L1 taken over channels.
// chat, ctilde: [B,K,H,W]; phi: [B,1,H,W].
torch::Tensor loss_cons(const torch::Tensor& chat, const torch::Tensor& ctilde, const torch::Tensor& phi);

// (1/N) sum_j (1 - M_j) |Ia_j - I~_j|_1 over [B,1,H,W] images and heart mask.
torch::Tensor loss_bg(const torch::Tensor& ia, const torch::Tensor& it, const torch::Tensor& mask);

struct LossWeights {
    double lambda1 = 10.0;
};

struct LossParts {
    torch::Tensor adv, path, cons, bg;
};

torch::Tensor total_loss(const LossParts& parts, const LossWeights& w);

} // namespace daa
