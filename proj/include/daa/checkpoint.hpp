#pragma once

// DAAW1 parameter container.
//
//   DAAW1\n
//   meta <key> <value>\n          (zero or more, value runs to end of line)
//   blocks <n>\n
//   <name> <ndim> <dim0> ... \n   (n lines)
//   end\n
//   <float32 little-endian payload of every block, in header order>
//
// Output bytes depend only on the tensors and metadata, never on time or address.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace daa {

struct NamedBlock {
    std::string name;
    torch::Tensor value;
};

struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<NamedBlock> blocks;

    const torch::Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters then buffers of `m`, names prefixed with `prefix`.
void append_module(Checkpoint& ckpt, const torch::nn::Module& m, const std::string& prefix);
// Copies every parameter/buffer of `m` from blocks named prefix + name. Throws
// FormatError when a block is missing or has the wrong shape.
void restore_module(const Checkpoint& ckpt, torch::nn::Module& m, const std::string& prefix);

} // namespace daa
