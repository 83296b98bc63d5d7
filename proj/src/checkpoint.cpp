#include "daa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "daa/errors.hpp"

namespace daa {

static_assert(std::endian::native == std::endian::little, "DAAW1 I/O assumes a little-endian host");

const torch::Tensor& Checkpoint::at(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.name == name) return b.value;
    throw FormatError("missing block '" + name + "'", 0);
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.name == name) return true;
    return false;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::ostringstream head;
    head << "DAAW1\n";
    for (const auto& [k, v] : ckpt.meta) {
        if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
            throw InvalidArgument("checkpoint meta keys must be single words and values single lines");
        head << "meta " << k << ' ' << v << '\n';
    }
    head << "blocks " << ckpt.blocks.size() << '\n';
    for (const auto& b : ckpt.blocks) {
        if (b.name.find_first_of(" \n") != std::string::npos) throw InvalidArgument("block names must be single words");
        head << b.name << ' ' << b.value.dim();
        for (auto s : b.value.sizes()) head << ' ' << s;
        head << '\n';
    }
    head << "end\n";
    const auto text = head.str();
    std::vector<std::uint8_t> out(text.begin(), text.end());
    for (const auto& b : ckpt.blocks) {
        auto t = b.value.detach().to(torch::kFloat32).contiguous();
        const auto* p = reinterpret_cast<const std::uint8_t*>(t.data_ptr<float>());
        out.insert(out.end(), p, p + t.numel() * sizeof(float));
    }
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() {
        const std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size()) throw FormatError("unterminated header line", start);
        std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.begin() + static_cast<std::ptrdiff_t>(pos));
        ++pos;
        return std::pair{line, start};
    };
    Checkpoint ck;
    if (next_line().first != "DAAW1") throw FormatError("not a DAAW1 checkpoint", 0);
    std::size_t nblocks = 0;
    for (;;) {
        auto [line, at] = next_line();
        if (line.rfind("meta ", 0) == 0) {
            const auto sp = line.find(' ', 5);
            if (sp == std::string::npos) throw FormatError("malformed meta line", at);
            ck.meta[line.substr(5, sp - 5)] = line.substr(sp + 1);
        } else if (line.rfind("blocks ", 0) == 0) {
            try {
                nblocks = std::stoul(line.substr(7));
            } catch (const std::exception&) {
                throw FormatError("malformed block count", at);
            }
            break;
        } else {
            throw FormatError("unexpected header line", at);
        }
    }
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> shapes;
    for (std::size_t i = 0; i < nblocks; ++i) {
        auto [line, at] = next_line();
        std::istringstream is(line);
        std::string name;
        int ndim = -1;
        if (!(is >> name >> ndim) || ndim < 0) throw FormatError("malformed block line", at);
        std::vector<std::int64_t> dims(static_cast<std::size_t>(ndim));
        for (auto& d : dims)
            if (!(is >> d) || d < 0) throw FormatError("malformed block dims", at);
        shapes.emplace_back(std::move(name), std::move(dims));
    }
    if (auto [line, at] = next_line(); line != "end") throw FormatError("missing header terminator", at);
    for (auto& [name, dims] : shapes) {
        std::int64_t n = 1;
        for (auto d : dims) n *= d;
        const std::size_t len = static_cast<std::size_t>(n) * sizeof(float);
        if (bytes.size() - pos < len) throw FormatError("truncated payload for block '" + name + "'", bytes.size());
        auto t = torch::empty(dims, torch::kFloat32);
        std::memcpy(t.data_ptr<float>(), bytes.data() + pos, len);
        pos += len;
        ck.blocks.push_back({name, t});
    }
    if (pos != bytes.size()) throw FormatError("trailing bytes after payload", pos);
    return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("io", "cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("io", "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("io", "cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

void append_module(Checkpoint& ckpt, const torch::nn::Module& m, const std::string& prefix) {
    for (const auto& p : m.named_parameters()) ckpt.blocks.push_back({prefix + p.key(), p.value().detach().clone()});
    for (const auto& b : m.named_buffers()) ckpt.blocks.push_back({prefix + b.key(), b.value().detach().clone()});
}

void restore_module(const Checkpoint& ckpt, torch::nn::Module& m, const std::string& prefix) {
    torch::NoGradGuard ng;
    auto load = [&](const std::string& name, torch::Tensor& dst) {
        const auto& src = ckpt.at(prefix + name);
        if (src.sizes() != dst.sizes()) throw FormatError("shape mismatch for block '" + prefix + name + "'", 0);
        dst.copy_(src.to(dst.dtype()));
    };
    for (auto& p : m.named_parameters()) load(p.key(), p.value());
    for (auto& b : m.named_buffers()) load(b.key(), b.value());
}

} // namespace daa
