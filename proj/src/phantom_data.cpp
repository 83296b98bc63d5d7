#include "daa/phantom_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "daa/blend_mask.hpp"
#include "daa/image_io.hpp"

namespace daa {

namespace {

// Portable draws on top of mt19937_64 (the std distributions are
// implementation-defined and would make phantoms differ across toolchains).
class PhantomRng {
public:
    PhantomRng(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x0DAAu};
        engine_.seed(seq);
    }
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(Range r) { return r.lo + (r.hi - r.lo) * uniform(); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int index(int n) { return std::min(n - 1, static_cast<int>(uniform() * n)); }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

double base_intensity(int structure_or_tissue, bool heart) {
    if (heart) {
        switch (structure_or_tissue) {
        case kLV: return 0.75;
        case kMYO: return -0.35;
        case kRV: return 0.70;
        }
    }
    switch (structure_or_tissue) {
    case kAir: return -0.95;
    case kBodyWall: return 0.35;
    case kLung: return -0.75;
    case kLiver: return 0.05;
    case kSpine: return 0.45;
    case kAorta: return 0.75;
    case kPericardialFat: return 0.60;
    case kSoftTissue: return 0.0;
    case kStomach: return -0.20;
    }
    return 0.0;
}

bool in_ellipse(double r, double c, double cr, double cc, double ar, double ac) {
    const double dr = (r - cr) / ar, dc = (c - cc) / ac;
    return dr * dr + dc * dc <= 1.0;
}

void check_range(const Range& r, const std::string& what) {
    if (!(r.lo <= r.hi)) throw SpecInfeasible(what + ": empty range");
}

SubjectRecord make_subject(const PhantomSpec& spec, int index, int class_index, PhantomRng& rng) {
    const int n = spec.size;
    const double s = n / 64.0;
    const auto& morph = spec.classes[static_cast<std::size_t>(class_index)];
    const int vendor = rng.index(static_cast<int>(spec.vendors.size()));
    const auto& look = spec.vendors[static_cast<std::size_t>(vendor)];

    const double cy = n * 0.47 + rng.uniform(-2.0, 2.0) * s;
    const double cx = n * 0.55 + rng.uniform(-2.0, 2.0) * s;
    const double r_lv = rng.uniform(morph.lv_radius) * s;
    const double thick = rng.uniform(morph.myo_thickness) * s;
    const double rv_h = rng.uniform(morph.rv_height) * s;
    const double rv_w = rng.uniform(morph.rv_width) * s;
    const double ecc = rng.uniform(0.92, 1.08);
    const double rv_dy = rng.uniform(-1.5, 1.5) * s;
    const double r_out = r_lv + thick;
    const double rv_cy = cy + rv_dy;
    const double rv_cx = cx - r_out - 0.45 * rv_w;

    const double body_ar = n * 0.44, body_ac = n * 0.47, wall = 3.0 * s;
    const double mid = n * 0.5;

    BinaryMap lv(n, n), myo(n, n), rv(n, n);
    std::vector<std::uint8_t> tissue(static_cast<std::size_t>(n) * n, kAir);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double rho = std::hypot((r - cy) / ecc, (c - cx) * ecc);
            auto& t = tissue[static_cast<std::size_t>(r) * n + c];
            const bool body = in_ellipse(r, c, mid, mid, body_ar, body_ac);
            const bool inner = in_ellipse(r, c, mid, mid, body_ar - wall, body_ac - wall);
            if (!body) {
                t = kAir;
            } else if (!inner) {
                t = kBodyWall;
            } else {
                t = kSoftTissue;
                if (in_ellipse(r, c, n * 0.30, n * 0.20, 8.0 * s, 6.0 * s) ||
                    in_ellipse(r, c, n * 0.30, n * 0.82, 8.0 * s, 5.0 * s))
                    t = kLung;
                if (in_ellipse(r, c, n * 0.72, n * 0.75, 9.0 * s, 10.0 * s)) t = kLiver;
                if (in_ellipse(r, c, n * 0.76, n * 0.30, 6.0 * s, 7.0 * s)) t = kStomach;
                if (in_ellipse(r, c, n * 0.87, mid, 3.5 * s, 3.5 * s)) t = kSpine;
                if (in_ellipse(r, c, cy - r_out - 3.0 * s, cx + 5.0 * s, 3.0 * s, 3.0 * s)) t = kAorta;
                if (rho <= r_out + 2.0 * s) t = kPericardialFat;
            }
            if (rho <= r_lv) {
                lv.set(r, c, true);
            } else if (rho <= r_out) {
                myo.set(r, c, true);
            } else if (rho > r_out + 1.0 * s && c < cx && in_ellipse(r, c, rv_cy, rv_cx, rv_h, rv_w)) {
                rv.set(r, c, true);
            }
            if ((lv.at(r, c) || myo.at(r, c) || rv.at(r, c))) {
                const int margin = 2;
                if (!inner || r < margin || c < margin || r >= n - margin || c >= n - margin)
                    throw SpecInfeasible("heart structures of subject " + std::to_string(index) +
                                         " leave the body interior");
            }
        }
    if (!lv.any() || !myo.any() || !rv.any())
        throw SpecInfeasible("subject " + std::to_string(index) + " has an empty heart structure");

    std::vector<float> code(kImagingDim);
    code[kGain] = static_cast<float>(rng.uniform(look.gain));
    code[kBias] = static_cast<float>(rng.uniform(look.bias));
    code[kBloodOffset] = static_cast<float>(rng.uniform(look.blood_offset));
    code[kMyoOffset] = static_cast<float>(rng.uniform(look.myo_offset));
    code[kFatOffset] = static_cast<float>(rng.uniform(look.fat_offset));
    code[kLungOffset] = static_cast<float>(rng.uniform(look.lung_offset));
    code[kBlurSigma] = static_cast<float>(rng.uniform(look.blur_sigma));
    code[kNoiseSigma] = static_cast<float>(rng.uniform(look.noise_sigma));

    // Noise-free intensity, partial-volume blur (edge replicated), then additive noise.
    std::vector<double> clean(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const auto i = static_cast<std::size_t>(r) * n + c;
            double base, offset = 0.0;
            if (lv.at(r, c) || rv.at(r, c)) {
                base = base_intensity(lv.at(r, c) ? kLV : kRV, true);
                offset = code[kBloodOffset];
            } else if (myo.at(r, c)) {
                base = base_intensity(kMYO, true);
                offset = code[kMyoOffset];
            } else {
                base = base_intensity(tissue[i], false);
                if (tissue[i] == kAorta) offset = code[kBloodOffset];
                if (tissue[i] == kPericardialFat) offset = code[kFatOffset];
                if (tissue[i] == kLung) offset = code[kLungOffset];
            }
            clean[i] = std::clamp(code[kGain] * (base + offset) + code[kBias], -1.0, 1.0);
        }
    const auto taps = gaussian_taps(code[kBlurSigma] * s);
    if (!taps.empty()) {
        const int rad = static_cast<int>(taps.size() / 2);
        std::vector<double> tmp(clean.size());
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                double acc = 0.0;
                for (int d = -rad; d <= rad; ++d)
                    acc += taps[static_cast<std::size_t>(d + rad)] * clean[static_cast<std::size_t>(r) * n + std::clamp(c + d, 0, n - 1)];
                tmp[static_cast<std::size_t>(r) * n + c] = acc;
            }
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                double acc = 0.0;
                for (int d = -rad; d <= rad; ++d)
                    acc += taps[static_cast<std::size_t>(d + rad)] * tmp[static_cast<std::size_t>(std::clamp(r + d, 0, n - 1)) * n + c];
                clean[static_cast<std::size_t>(r) * n + c] = acc;
            }
    }
    std::vector<float> image(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i)
        image[i] = static_cast<float>(std::clamp(clean[i] + code[kNoiseSigma] * rng.normal(), -1.0, 1.0));

    char id[32];
    std::snprintf(id, sizeof id, "ph%04d", index);
    PathologyLabel label{class_index, morph.name};

    SubjectRecord rec;
    rec.subject_id = id;
    rec.rows = n;
    rec.cols = n;
    rec.image = std::move(image);
    rec.masks = {lv, myo, rv};
    rec.anatomy = masks_to_factors(rec.masks, spec.num_channels, tissue, rec.subject_id, label);
    rec.imaging = ImagingFactor{std::move(code), rec.subject_id};
    rec.label = label;
    rec.num_classes = static_cast<int>(spec.classes.size());
    rec.vendor = vendor;
    return rec;
}

} // namespace

PhantomSpec PhantomSpec::defaults() {
    PhantomSpec spec;
    spec.classes = {
        {"NOR", {7.0, 9.0}, {2.5, 3.5}, {9.0, 11.0}, {5.0, 7.0}},
        {"HCM", {4.0, 5.5}, {5.0, 6.5}, {9.0, 11.0}, {5.0, 7.0}},
        {"DCM", {11.0, 13.0}, {1.8, 2.5}, {9.0, 11.0}, {5.0, 7.0}},
        {"ARV", {7.0, 9.0}, {2.5, 3.5}, {12.5, 14.5}, {8.0, 9.5}},
    };
    spec.vendors = {
        {"A", {0.90, 1.00}, {-0.05, 0.05}, {-0.05, 0.05}, {-0.05, 0.05}, {-0.05, 0.05}, {-0.05, 0.05}, {0.4, 0.7}, {0.015, 0.030}},
        {"B", {0.75, 0.85}, {0.05, 0.15}, {0.05, 0.12}, {-0.15, -0.05}, {-0.20, -0.10}, {0.00, 0.10}, {0.5, 0.8}, {0.020, 0.035}},
        {"C", {0.85, 0.95}, {-0.15, -0.05}, {-0.10, 0.00}, {0.00, 0.10}, {0.05, 0.15}, {-0.10, 0.00}, {0.3, 0.6}, {0.010, 0.025}},
        {"D", {0.65, 0.80}, {-0.05, 0.10}, {0.10, 0.20}, {-0.20, -0.10}, {-0.10, 0.00}, {0.10, 0.20}, {0.6, 0.9}, {0.025, 0.040}},
    };
    return spec;
}

std::vector<std::string> class_names(const PhantomSpec& spec) {
    std::vector<std::string> out;
    for (const auto& c : spec.classes) out.push_back(c.name);
    return out;
}

std::string vendor_name(int vendor) { return std::string(1, static_cast<char>('A' + vendor)); }

std::vector<SubjectRecord> generate_phantoms(const PhantomSpec& spec) {
    if (spec.count < 0) throw SpecInfeasible("negative subject count");
    if (spec.size < 16) throw SpecInfeasible("phantom frames must be at least 16x16");
    if (spec.classes.size() < 2) throw SpecInfeasible("at least two pathology classes required");
    if (spec.vendors.empty()) throw SpecInfeasible("at least one vendor required");
    if (spec.num_channels < kNumHeartStructures + 1) throw SpecInfeasible("need a background channel");
    for (const auto& m : spec.classes) {
        for (const auto* r : {&m.lv_radius, &m.myo_thickness, &m.rv_height, &m.rv_width}) {
            check_range(*r, m.name);
            if (r->lo <= 0.0) throw SpecInfeasible(m.name + ": morphology sizes must be positive");
        }
    }
    if (!spec.class_weights.empty() && spec.class_weights.size() != spec.classes.size())
        throw SpecInfeasible("class_weights must list one weight per class");

    // Class assignment: round-robin, or largest-remainder quotas for weighted specs.
    std::vector<int> assignment;
    if (spec.class_weights.empty()) {
        for (int i = 0; i < spec.count; ++i) assignment.push_back(i % static_cast<int>(spec.classes.size()));
    } else {
        const double total = std::accumulate(spec.class_weights.begin(), spec.class_weights.end(), 0.0);
        std::vector<int> quota(spec.classes.size());
        std::vector<std::pair<double, int>> rema;
        int used = 0;
        for (std::size_t k = 0; k < quota.size(); ++k) {
            const double exact = spec.count * spec.class_weights[k] / total;
            quota[k] = static_cast<int>(std::floor(exact));
            used += quota[k];
            rema.push_back({-(exact - quota[k]), static_cast<int>(k)});
        }
        std::sort(rema.begin(), rema.end());
        for (int i = 0; used < spec.count; ++i, ++used) ++quota[static_cast<std::size_t>(rema[static_cast<std::size_t>(i)].second)];
        while (assignment.size() < static_cast<std::size_t>(spec.count)) {
            for (std::size_t c = 0; c < quota.size(); ++c) {
                if (quota[c] == 0) continue;
                assignment.push_back(static_cast<int>(c));
                --quota[c];
            }
        }
    }

    std::vector<SubjectRecord> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        PhantomRng rng(spec.seed, static_cast<std::uint64_t>(i));
        out.push_back(make_subject(spec, i, assignment[static_cast<std::size_t>(i)], rng));
    }
    return out;
}

AnatomyTensor masks_to_factors(const std::vector<BinaryMap>& masks, int num_channels,
                               const std::optional<std::vector<std::uint8_t>>& background, std::string subject_id,
                               PathologyLabel label) {
    if (masks.empty()) throw InvalidArgument("masks_to_factors needs at least one structure mask");
    const int heart = static_cast<int>(masks.size());
    if (num_channels < heart + 1) throw InvalidArgument("K must exceed the number of structure masks");
    const int rows = masks.front().rows(), cols = masks.front().cols();
    for (const auto& m : masks)
        if (!m.same_shape(masks.front())) throw ShapeMismatch("structure masks differ in shape");
    for (int a = 0; a < heart; ++a)
        for (int b = a + 1; b < heart; ++b)
            if ((masks[static_cast<std::size_t>(a)] & masks[static_cast<std::size_t>(b)]).any())
                throw OverlapError("structure masks " + std::to_string(a) + " and " + std::to_string(b) + " overlap");
    if (background && background->size() != static_cast<std::size_t>(rows) * cols)
        throw ShapeMismatch("background label map does not match mask shape");

    std::vector<BinaryMap> channels(static_cast<std::size_t>(num_channels), BinaryMap(rows, cols));
    std::vector<ChannelRole> roles(static_cast<std::size_t>(num_channels), ChannelRole::other);
    for (int k = 0; k < heart; ++k) {
        channels[static_cast<std::size_t>(k)] = masks[static_cast<std::size_t>(k)];
        roles[static_cast<std::size_t>(k)] = ChannelRole::heart;
    }
    const int last = num_channels - 1;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            bool in_heart = false;
            for (const auto& m : masks) in_heart = in_heart || m.at(r, c);
            if (in_heart) continue;
            int ch = heart;
            if (background) ch = std::min(last, heart + (*background)[static_cast<std::size_t>(r) * cols + c]);
            channels[static_cast<std::size_t>(ch)].set(r, c, true);
        }
    return AnatomyTensor(std::move(channels), std::move(roles), std::move(subject_id), std::move(label));
}

// ---------------------------------------------------------------------------
// DAAF1 subject files

namespace {

constexpr std::uint16_t kDaafVersion = 1;

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float f) {
        std::uint32_t v;
        std::memcpy(&v, &f, 4);
        u32(v);
    }
    void str(const std::string& s) {
        if (s.size() > 0xFFFF) throw InvalidArgument("string field too long for DAAF1");
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> out;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& b) : buf_(b) {}
    void need(std::size_t n, const char* what) {
        if (pos_ + n > buf_.size()) throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return buf_[pos_++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32(const char* what) {
        const auto v = u32(what);
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    std::string str(const char* what) {
        const auto n = u16(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::vector<std::uint8_t> binary(std::size_t n, const char* what) {
        need(n, what);
        std::vector<std::uint8_t> v(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                    buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        for (std::size_t i = 0; i < n; ++i)
            if (v[i] > 1) throw FormatError(std::string("non-binary value in ") + what, pos_ + i);
        pos_ += n;
        return v;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == buf_.size(); }

private:
    const std::vector<std::uint8_t>& buf_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_subject(const SubjectRecord& rec) {
    const auto& a = rec.anatomy;
    if (a.rows() != rec.rows || a.cols() != rec.cols) throw ShapeMismatch("anatomy and image frames differ");
    if (rec.image.size() != static_cast<std::size_t>(rec.rows) * rec.cols) throw ShapeMismatch("image size mismatch");
    ByteWriter w;
    w.bytes("DAAF", 4);
    w.u16(kDaafVersion);
    w.u16(rec.synthetic ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(rec.rows));
    w.u32(static_cast<std::uint32_t>(rec.cols));
    w.u32(static_cast<std::uint32_t>(a.num_channels()));
    w.u32(static_cast<std::uint32_t>(rec.num_classes));
    w.u32(static_cast<std::uint32_t>(rec.imaging.code.size()));
    w.u32(static_cast<std::uint32_t>(rec.masks.size()));
    w.str(rec.subject_id);
    w.str(rec.label.class_name);
    w.str(rec.imaging.source_subject);
    for (auto role : a.roles()) w.u8(role == ChannelRole::heart ? 1 : 0);
    for (float v : rec.image) w.f32(v);
    for (const auto& ch : a.channels()) w.bytes(ch.data().data(), ch.size());
    for (const auto& m : rec.masks) {
        if (m.rows() != rec.rows || m.cols() != rec.cols) throw ShapeMismatch("mask frame mismatch");
        w.bytes(m.data().data(), m.size());
    }
    for (float v : rec.imaging.code) w.f32(v);
    w.u16(static_cast<std::uint16_t>(rec.label.class_index));
    w.u8(static_cast<std::uint8_t>(rec.vendor));
    w.str(rec.provenance);
    return std::move(w.out);
}

SubjectRecord decode_subject(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), "DAAF", 4) != 0) throw FormatError("bad magic, expected DAAF", 0);
    for (int i = 0; i < 4; ++i) r.u8("magic");
    const auto version = r.u16("version");
    if (version != kDaafVersion) throw FormatError("unsupported DAAF version " + std::to_string(version), 4);
    const auto flags = r.u16("flags");
    const auto rows = r.u32("rows"), cols = r.u32("cols"), k = r.u32("channels"), omega = r.u32("classes");
    const auto d = r.u32("code dim"), n_masks = r.u32("mask count");
    if (rows < 8 || cols < 8 || rows > 4096 || cols > 4096) throw FormatError("implausible frame size", 8);
    if (k < 1 || k > 256 || n_masks > 256 || d > 4096 || omega < 2 || omega > 65535)
        throw FormatError("implausible header counts", 16);

    SubjectRecord rec;
    rec.synthetic = (flags & 1u) != 0;
    rec.rows = static_cast<int>(rows);
    rec.cols = static_cast<int>(cols);
    rec.num_classes = static_cast<int>(omega);
    rec.subject_id = r.str("subject id");
    const auto class_name = r.str("class name");
    const auto imaging_source = r.str("imaging source");
    std::vector<ChannelRole> roles;
    for (std::uint32_t i = 0; i < k; ++i) roles.push_back(r.u8("channel roles") ? ChannelRole::heart : ChannelRole::other);

    const std::size_t px = static_cast<std::size_t>(rows) * cols;
    r.need(px * 4, "image");
    rec.image.resize(px);
    for (auto& v : rec.image) v = r.f32("image");
    std::vector<BinaryMap> channels;
    for (std::uint32_t i = 0; i < k; ++i) channels.emplace_back(rec.rows, rec.cols, r.binary(px, "factor channels"));
    for (std::uint32_t i = 0; i < n_masks; ++i) rec.masks.emplace_back(rec.rows, rec.cols, r.binary(px, "masks"));
    rec.imaging.code.resize(d);
    for (auto& v : rec.imaging.code) v = r.f32("imaging code");
    rec.imaging.source_subject = imaging_source;
    const auto label_at = r.pos();
    const auto label = r.u16("label");
    if (label >= omega) throw FormatError("label outside class range", label_at);
    rec.vendor = r.u8("vendor");
    rec.provenance = r.str("provenance");
    if (!r.done()) throw FormatError("trailing bytes after record", r.pos());

    rec.label = PathologyLabel{label, class_name};
    try {
        rec.anatomy = AnatomyTensor(std::move(channels), std::move(roles), rec.subject_id, rec.label);
    } catch (const Error& e) {
        throw FormatError(std::string("invalid anatomy tensor: ") + e.what(), 0);
    }
    return rec;
}

void save_subject(const SubjectRecord& record, const std::filesystem::path& path) {
    const auto bytes = encode_subject(record);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("io", "cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("io", "write failed for " + path.string());
}

SubjectRecord load_subject(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("io", "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_subject(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.filename().string() + ": " + e.what(), e.offset());
    }
}

// ---------------------------------------------------------------------------
// Manifests

std::map<std::string, int> DatasetManifest::class_counts(const std::vector<ManifestEntry>& split) const {
    std::map<std::string, int> out;
    for (const auto& e : split) ++out[e.class_name];
    return out;
}

std::map<int, int> DatasetManifest::vendor_counts(const std::vector<ManifestEntry>& split) const {
    std::map<int, int> out;
    for (const auto& e : split) ++out[e.vendor];
    return out;
}

namespace {

ManifestEntry entry_of(const SubjectRecord& r) {
    return {r.subject_id, r.label.class_index, r.label.class_name, r.vendor, r.synthetic, r.provenance};
}

} // namespace

DatasetManifest build_manifest(const std::vector<SubjectRecord>& records, std::uint64_t split_seed,
                               const std::optional<Imbalance>& imbalance, SplitFractions fractions) {
    if (records.size() < 3) throw InsufficientSubjects("need at least 3 subjects to form train/val/test splits");
    std::set<std::string> ids;
    for (const auto& r : records)
        if (!ids.insert(r.subject_id).second) throw InvalidArgument("duplicate subject id " + r.subject_id);

    // Stratify: shuffle within each class, place member i of a class of size n at
    // position (i + 0.5) / n, then cut the merged order at the global totals.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label.class_index].push_back(i);
    std::mt19937_64 eng(split_seed);
    std::vector<std::tuple<double, int, std::size_t>> order;
    for (auto& [cls, members] : by_class) {
        std::sort(members.begin(), members.end(),
                  [&](std::size_t a, std::size_t b) { return records[a].subject_id < records[b].subject_id; });
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[eng() % i]);
        for (std::size_t i = 0; i < members.size(); ++i)
            order.emplace_back((static_cast<double>(i) + 0.5) / static_cast<double>(members.size()), cls, members[i]);
    }
    std::sort(order.begin(), order.end());

    const std::size_t n = records.size();
    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n)));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
        throw InsufficientSubjects("too few subjects for non-empty train/val/test splits");

    DatasetManifest m;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& rec = records[std::get<2>(order[i])];
        auto& split = i < n_train ? m.train : (i < n_train + n_val ? m.val : m.test);
        split.push_back(entry_of(rec));
    }

    if (imbalance) {
        if (!(imbalance->fraction >= 0.0 && imbalance->fraction < 1.0))
            throw InvalidArgument("imbalance fraction must lie in [0,1)");
        auto matches = [&](const ManifestEntry& e) {
            return imbalance->kind == Imbalance::Kind::pathology_class ? e.class_index == imbalance->index
                                                                        : e.vendor == imbalance->index;
        };
        const auto hits = static_cast<std::size_t>(std::count_if(m.train.begin(), m.train.end(), matches));
        const auto others = m.train.size() - hits;
        const double f = imbalance->fraction;
        const auto keep = std::min(hits, static_cast<std::size_t>(std::llround(f * static_cast<double>(others) / (1.0 - f))));
        std::size_t kept = 0;
        std::vector<ManifestEntry> train;
        for (const auto& e : m.train) {
            if (matches(e)) {
                if (kept >= keep) continue;
                ++kept;
            }
            train.push_back(e);
        }
        m.train = std::move(train);
    }

    auto by_id = [](const ManifestEntry& a, const ManifestEntry& b) { return a.subject_id < b.subject_id; };
    std::sort(m.train.begin(), m.train.end(), by_id);
    std::sort(m.val.begin(), m.val.end(), by_id);
    std::sort(m.test.begin(), m.test.end(), by_id);
    return m;
}

namespace {

nlohmann::json split_json(const std::vector<ManifestEntry>& split) {
    auto arr = nlohmann::json::array();
    for (const auto& e : split) {
        nlohmann::json j{{"id", e.subject_id},       {"class_index", e.class_index}, {"class", e.class_name},
                         {"vendor", vendor_name(e.vendor)}, {"synthetic", e.synthetic}};
        if (!e.provenance.empty()) j["provenance"] = e.provenance;
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<ManifestEntry> split_from_json(const nlohmann::json& arr) {
    std::vector<ManifestEntry> out;
    for (const auto& j : arr) {
        ManifestEntry e;
        e.subject_id = j.at("id").get<std::string>();
        e.class_index = j.at("class_index").get<int>();
        e.class_name = j.at("class").get<std::string>();
        const auto v = j.at("vendor").get<std::string>();
        if (v.size() != 1) throw InvalidArgument("bad vendor tag '" + v + "'");
        e.vendor = v[0] - 'A';
        e.synthetic = j.value("synthetic", false);
        e.provenance = j.value("provenance", std::string{});
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace

std::string manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["format"] = "daa-manifest-1";
    j["train"] = split_json(m.train);
    j["val"] = split_json(m.val);
    j["test"] = split_json(m.test);
    return j.dump(1) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.value("format", std::string{}) != "daa-manifest-1") throw InvalidArgument("not a daa manifest");
        DatasetManifest m;
        m.train = split_from_json(j.at("train"));
        m.val = split_from_json(j.at("val"));
        m.test = split_from_json(j.at("test"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("manifest: ") + e.what());
    }
}

void save_manifest(const std::filesystem::path& file, const DatasetManifest& manifest) {
    std::ofstream f(file, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("io", "cannot write " + file.string());
    f << manifest_to_json(manifest);
}

DatasetManifest load_manifest(const std::filesystem::path& file) {
    std::ifstream f(file, std::ios::binary);
    if (!f) throw Error("io", "cannot read " + file.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return manifest_from_json(text);
}

void save_dataset(const std::filesystem::path& dir, const std::vector<SubjectRecord>& records,
                  const DatasetManifest& manifest) {
    std::filesystem::create_directories(dir / "subjects");
    for (const auto& r : records) save_subject(r, dir / "subjects" / (r.subject_id + ".daaf"));
    save_manifest(dir / "manifest.json", manifest);
}

std::vector<SubjectRecord> load_records(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    const auto sub = dir / "subjects";
    if (!std::filesystem::is_directory(sub)) throw Error("io", sub.string() + " is not a directory");
    for (const auto& e : std::filesystem::directory_iterator(sub))
        if (e.is_regular_file() && e.path().extension() == ".daaf") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<SubjectRecord> out;
    for (const auto& f : files) out.push_back(load_subject(f));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });
    return out;
}

std::vector<SubjectRecord> select_split(const std::vector<SubjectRecord>& records,
                                        const std::vector<ManifestEntry>& split) {
    std::map<std::string, const SubjectRecord*> by_id;
    for (const auto& r : records) by_id[r.subject_id] = &r;
    std::vector<SubjectRecord> out;
    out.reserve(split.size());
    for (const auto& e : split) {
        auto it = by_id.find(e.subject_id);
        if (it == by_id.end()) throw UnknownSubject(e.subject_id);
        out.push_back(*it->second);
    }
    return out;
}

SubjectStore anatomy_store(const std::vector<SubjectRecord>& records) {
    SubjectStore store;
    for (const auto& r : records) store.emplace(r.subject_id, r.anatomy);
    return store;
}

std::vector<std::uint8_t> image_png(const std::vector<float>& image, int rows, int cols) {
    return encode_png_gray(to_gray8(image, -1.0f, 1.0f), cols, rows);
}

} // namespace daa
