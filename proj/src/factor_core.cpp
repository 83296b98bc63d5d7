#include "daa/factor_core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace daa {

BinaryMap::BinaryMap(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw InvalidArgument("negative map shape");
    data_.assign(static_cast<std::size_t>(rows) * cols, 0);
}

BinaryMap::BinaryMap(int rows, int cols, std::vector<std::uint8_t> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (rows < 0 || cols < 0) throw InvalidArgument("negative map shape");
    if (data_.size() != static_cast<std::size_t>(rows) * cols)
        throw InvalidArgument("binary map value count does not match its shape");
    for (auto v : data_)
        if (v > 1) throw InvalidArgument("binary map values must be 0 or 1");
}

std::size_t BinaryMap::count() const noexcept {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

bool BinaryMap::any() const noexcept {
    return std::find(data_.begin(), data_.end(), std::uint8_t{1}) != data_.end();
}

void BinaryMap::require_same_shape(const BinaryMap& o) const {
    if (!same_shape(o)) throw ShapeMismatch("binary maps differ in shape");
}

BinaryMap BinaryMap::operator|(const BinaryMap& o) const {
    BinaryMap out = *this;
    out |= o;
    return out;
}

BinaryMap& BinaryMap::operator|=(const BinaryMap& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] |= o.data_[i];
    return *this;
}

BinaryMap BinaryMap::operator&(const BinaryMap& o) const {
    require_same_shape(o);
    BinaryMap out = *this;
    for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] &= o.data_[i];
    return out;
}

bool BinaryMap::subset_of(const BinaryMap& o) const {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i)
        if (data_[i] && !o.data_[i]) return false;
    return true;
}

AnatomyTensor::AnatomyTensor(std::vector<BinaryMap> channels, std::vector<ChannelRole> roles,
                             std::string subject_id, PathologyLabel pathology)
    : channels_(std::move(channels)), roles_(std::move(roles)), subject_id_(std::move(subject_id)),
      pathology_(std::move(pathology)) {
    if (channels_.empty()) throw InvalidArgument("anatomy tensor needs at least one channel");
    if (roles_.size() != channels_.size()) throw InvalidArgument("one role per channel required");
    const auto& first = channels_.front();
    if (first.rows() < 8 || first.cols() < 8) throw InvalidArgument("anatomy maps must be at least 8x8");
    for (const auto& ch : channels_)
        if (!ch.same_shape(first)) throw ShapeMismatch("anatomy channels differ in shape");
    if (std::none_of(roles_.begin(), roles_.end(), [](ChannelRole r) { return r == ChannelRole::heart; }))
        throw InvalidArgument("at least one channel must be heart-related");
    if (pathology_.class_index < 0) throw InvalidArgument("negative pathology class index");
}

const BinaryMap& AnatomyTensor::channel(int k) const {
    if (k < 0 || k >= num_channels()) throw InvalidArgument("channel index " + std::to_string(k) + " out of range");
    return channels_[static_cast<std::size_t>(k)];
}

void AnatomyTensor::set_channel(int k, BinaryMap m) {
    if (k < 0 || k >= num_channels()) throw InvalidArgument("channel index " + std::to_string(k) + " out of range");
    if (!m.same_shape(channels_.front())) throw ShapeMismatch("replacement channel has a different shape");
    channels_[static_cast<std::size_t>(k)] = std::move(m);
}

std::vector<int> AnatomyTensor::heart_channels() const {
    std::vector<int> out;
    for (int k = 0; k < num_channels(); ++k)
        if (is_heart(k)) out.push_back(k);
    return out;
}

const char* to_string(OpKind kind) {
    switch (kind) {
    case OpKind::swap: return "swap";
    case OpKind::remove: return "remove";
    case OpKind::add: return "add";
    }
    return "?";
}

OpKind op_kind_from_string(const std::string& s) {
    if (s == "swap") return OpKind::swap;
    if (s == "remove") return OpKind::remove;
    if (s == "add") return OpKind::add;
    throw InvalidArgument("unknown factor op '" + s + "'");
}

const char* to_string(MorphOp op) { return op == MorphOp::erode ? "erode" : "dilate"; }

MorphOp morph_op_from_string(const std::string& s) {
    if (s == "erode") return MorphOp::erode;
    if (s == "dilate") return MorphOp::dilate;
    throw InvalidArgument("unknown morphology op '" + s + "'");
}

PixelCoord center_of_mass(const BinaryMap& channel) {
    double sr = 0.0, sc = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < channel.rows(); ++r)
        for (int c = 0; c < channel.cols(); ++c)
            if (channel.at(r, c)) {
                sr += r;
                sc += c;
                ++n;
            }
    if (n == 0) throw EmptyFactor("centre of mass of an empty factor");
    return {sr / static_cast<double>(n), sc / static_cast<double>(n)};
}

BinaryMap translate(const BinaryMap& m, int dr, int dc) {
    BinaryMap out(m.rows(), m.cols());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (m.at(r, c) && out.in_bounds(r + dr, c + dc)) out.set(r + dr, c + dc, true);
    return out;
}

BinaryMap register_factor(const BinaryMap& donor, const BinaryMap& target) {
    if (!donor.same_shape(target)) throw ShapeMismatch("donor and target factors differ in shape");
    if (!donor.any()) throw EmptyFactor("donor factor is empty");
    if (!target.any()) throw EmptyFactor("registration target factor is empty");
    const auto d = center_of_mass(donor);
    const auto t = center_of_mass(target);
    const int dr = static_cast<int>(std::lround(t.row - d.row));
    const int dc = static_cast<int>(std::lround(t.col - d.col));
    return translate(donor, dr, dc);
}

namespace {

const AnatomyTensor& lookup(const SubjectStore& store, const std::string& id) {
    auto it = store.find(id);
    if (it == store.end()) throw UnknownSubject(id);
    return it->second;
}

void check_structure(const ArithmeticPlan& plan, const SubjectStore& subjects, std::vector<PlanViolation>& out) {
    const auto& base = lookup(subjects, plan.base_subject);
    for (std::size_t i = 0; i < plan.ops.size(); ++i) {
        const auto& op = plan.ops[i];
        const int idx = static_cast<int>(i);
        if (op.kind == OpKind::remove && op.donor_subject) {
            out.push_back({"remove_with_donor", "remove must not name a donor", idx});
        }
        if (op.kind != OpKind::remove && !op.donor_subject) {
            out.push_back({"missing_donor", std::string(to_string(op.kind)) + " requires a donor subject", idx});
        }
        if (op.channel < 0 || op.channel >= base.num_channels()) {
            out.push_back({"bad_channel", "channel " + std::to_string(op.channel) + " outside base subject", idx});
            continue;
        }
        if (op.donor_subject) {
            const auto& donor = lookup(subjects, *op.donor_subject);
            if (op.channel >= donor.num_channels())
                out.push_back({"bad_channel", "channel " + std::to_string(op.channel) + " outside donor subject", idx});
            else if (donor.rows() != base.rows() || donor.cols() != base.cols())
                out.push_back({"shape_mismatch", "donor '" + *op.donor_subject + "' has a different frame size", idx});
        }
    }
}

} // namespace

std::vector<PlanViolation> validate_plan(const ArithmeticPlan& plan, const SubjectStore& subjects) {
    std::vector<PlanViolation> out;
    check_structure(plan, subjects, out);

    const auto& base = lookup(subjects, plan.base_subject);
    std::map<int, std::string> pathologies; // non-normal class -> name
    if (!base.pathology().is_normal()) pathologies.emplace(base.pathology().class_index, base.pathology().class_name);
    for (const auto& op : plan.ops) {
        if (!op.donor_subject) continue;
        const auto& p = lookup(subjects, *op.donor_subject).pathology();
        if (!p.is_normal()) pathologies.emplace(p.class_index, p.class_name);
    }
    if (pathologies.size() > 1) {
        std::string names;
        for (const auto& [idx, name] : pathologies) names += (names.empty() ? "" : ", ") + name;
        out.push_back({"multiple_pathologies",
                       "plan would combine factors of different pathologies (" + names + ") in one subject", -1});
    }
    return out;
}

PathologyLabel plan_target_pathology(const ArithmeticPlan& plan, const SubjectStore& subjects) {
    const auto& base = lookup(subjects, plan.base_subject);
    if (!base.pathology().is_normal()) return base.pathology();
    for (const auto& op : plan.ops) {
        if (!op.donor_subject) continue;
        const auto& p = lookup(subjects, *op.donor_subject).pathology();
        if (!p.is_normal()) return p;
    }
    return base.pathology();
}

std::pair<AnatomyTensor, MixRecord> apply_plan(const AnatomyTensor& base, const SubjectStore& donors,
                                               const ArithmeticPlan& plan) {
    for (std::size_t i = 0; i < plan.ops.size(); ++i) {
        const auto& op = plan.ops[i];
        if (op.channel < 0 || op.channel >= base.num_channels())
            throw InvalidPlan("op " + std::to_string(i) + ": channel out of range");
        if ((op.kind == OpKind::remove) == op.donor_subject.has_value())
            throw InvalidPlan("op " + std::to_string(i) + ": donor presence does not match op kind");
    }

    AnatomyTensor out = base;
    MixRecord rec{BinaryMap(base.rows(), base.cols()), {}};
    for (const auto& op : plan.ops) {
        const BinaryMap& current = out.channel(op.channel);
        switch (op.kind) {
        case OpKind::remove:
            rec.modified_support |= current;
            out.set_channel(op.channel, BinaryMap(base.rows(), base.cols()));
            break;
        case OpKind::swap:
        case OpKind::add: {
            const auto& donor = lookup(donors, *op.donor_subject);
            if (op.channel >= donor.num_channels()) throw InvalidPlan("donor lacks channel " + std::to_string(op.channel));
            if (!donor.channel(op.channel).same_shape(current)) throw ShapeMismatch("donor frame differs from base");
            BinaryMap moved = register_factor(donor.channel(op.channel), base.channel(op.channel));
            rec.modified_support |= moved;
            if (op.kind == OpKind::swap) {
                rec.modified_support |= current;
                out.set_channel(op.channel, std::move(moved));
            } else {
                out.set_channel(op.channel, current | moved);
            }
            break;
        }
        }
        rec.ops_applied.push_back(op);
    }
    return {std::move(out), std::move(rec)};
}

BinaryMap heart_mask(const AnatomyTensor& c) {
    BinaryMap m(c.rows(), c.cols());
    for (int k : c.heart_channels()) m |= c.channel(k);
    return m;
}

std::vector<ChannelOverlap> overlap_report(const AnatomyTensor& c) {
    std::vector<ChannelOverlap> out;
    const auto heart = c.heart_channels();
    for (std::size_t a = 0; a < heart.size(); ++a)
        for (std::size_t b = a + 1; b < heart.size(); ++b) {
            const auto n = (c.channel(heart[a]) & c.channel(heart[b])).count();
            if (n > 0) out.push_back({heart[a], heart[b], n});
        }
    return out;
}

namespace {

// Separable square-window min/max filter. Out-of-frame pixels count as 0.
BinaryMap window_filter(const BinaryMap& m, int radius, bool want_all) {
    if (radius < 0) throw InvalidArgument("negative structuring radius");
    if (radius == 0) return m;
    auto pass = [&](const BinaryMap& in, bool along_rows) {
        BinaryMap out(in.rows(), in.cols());
        for (int r = 0; r < in.rows(); ++r)
            for (int c = 0; c < in.cols(); ++c) {
                bool acc = want_all;
                for (int d = -radius; d <= radius; ++d) {
                    const int rr = along_rows ? r : r + d;
                    const int cc = along_rows ? c + d : c;
                    const bool v = in.in_bounds(rr, cc) && in.at(rr, cc);
                    if (want_all && !v) { acc = false; break; }
                    if (!want_all && v) { acc = true; break; }
                }
                out.set(r, c, acc);
            }
        return out;
    };
    return pass(pass(m, true), false);
}

} // namespace

BinaryMap erode(const BinaryMap& m, int radius) { return window_filter(m, radius, true); }
BinaryMap dilate(const BinaryMap& m, int radius) { return window_filter(m, radius, false); }

AnatomyTensor morph_traverse(const AnatomyTensor& c, int channel, MorphOp op, int step) {
    if (step < 1) throw InvalidArgument("traversal step must be >= 1");
    const BinaryMap& src = c.channel(channel);
    BinaryMap moved = op == MorphOp::erode ? erode(src, step) : dilate(src, step);
    if (op == MorphOp::erode && src.any() && !moved.any())
        throw EmptyFactor("erosion with step " + std::to_string(step) + " empties channel " + std::to_string(channel));
    AnatomyTensor out = c;
    out.set_channel(channel, std::move(moved));
    return out;
}

} // namespace daa
