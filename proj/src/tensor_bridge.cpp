#include "daa/tensor_bridge.hpp"

#include "daa/image_io.hpp"

namespace daa {

namespace {

torch::Tensor u8_plane(const std::vector<std::uint8_t>& data, int rows, int cols) {
    auto t = torch::empty({rows, cols}, torch::kFloat32);
    auto* p = t.data_ptr<float>();
    for (std::size_t i = 0; i < data.size(); ++i) p[i] = static_cast<float>(data[i]);
    return t;
}

} // namespace

torch::Tensor anatomy_to_tensor(const AnatomyTensor& c) {
    std::vector<torch::Tensor> planes;
    planes.reserve(static_cast<std::size_t>(c.num_channels()));
    for (const auto& ch : c.channels()) planes.push_back(u8_plane(ch.data(), ch.rows(), ch.cols()));
    return torch::stack(planes);
}

torch::Tensor map_to_tensor(const BinaryMap& m) { return u8_plane(m.data(), m.rows(), m.cols()).unsqueeze(0); }

torch::Tensor phi_to_tensor(const BlendMask& b) {
    return torch::from_blob(const_cast<float*>(b.phi.data()), {1, b.rows, b.cols}, torch::kFloat32).clone();
}

torch::Tensor image_to_tensor(const std::vector<float>& img, int rows, int cols) {
    if (img.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw ShapeMismatch("image buffer does not match its declared shape");
    return torch::from_blob(const_cast<float*>(img.data()), {1, rows, cols}, torch::kFloat32).clone();
}

torch::Tensor code_to_tensor(const ImagingFactor& z) {
    return torch::from_blob(const_cast<float*>(z.code.data()), {static_cast<long>(z.code.size())}, torch::kFloat32)
        .clone();
}

torch::Tensor masks_to_labels(const std::vector<BinaryMap>& masks) {
    if (masks.empty()) throw InvalidArgument("no masks");
    auto out = torch::zeros({masks[0].rows(), masks[0].cols()}, torch::kInt64);
    auto* p = out.data_ptr<std::int64_t>();
    for (std::size_t k = 0; k < masks.size(); ++k) {
        const auto& d = masks[k].data();
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d[i]) p[i] = static_cast<std::int64_t>(k + 1);
    }
    return out;
}

std::vector<float> tensor_to_vector(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    return {c.data_ptr<float>(), c.data_ptr<float>() + c.numel()};
}

BinaryMap tensor_to_map(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    if (c.dim() == 3) c = c.squeeze(0);
    if (c.dim() != 2) throw ShapeMismatch("expected a single-channel map");
    const int rows = static_cast<int>(c.size(0)), cols = static_cast<int>(c.size(1));
    std::vector<std::uint8_t> v(static_cast<std::size_t>(c.numel()));
    const auto* p = c.data_ptr<float>();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = p[i] > 0.5f ? 1 : 0;
    return BinaryMap(rows, cols, std::move(v));
}

AnatomyTensor harden(const RefinedAnatomy& c, PathologyLabel label) {
    const auto idx = c.values.detach().argmax(0);
    const int k = static_cast<int>(c.values.size(0));
    std::vector<BinaryMap> chans;
    chans.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) chans.push_back(tensor_to_map(idx.eq(i).to(torch::kFloat32)));
    return AnatomyTensor(std::move(chans), c.roles, c.subject_id, std::move(label));
}

std::vector<std::uint8_t> tensor_png(const torch::Tensor& t, float lo, float hi) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    while (c.dim() > 2) c = c.squeeze(0);
    const auto vals = tensor_to_vector(c);
    return encode_png_gray(to_gray8(vals, lo, hi), static_cast<int>(c.size(1)), static_cast<int>(c.size(0)));
}

} // namespace daa
