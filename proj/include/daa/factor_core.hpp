#pragma once

// Anatomy factor tensors and the arithmetic performed on them: centre-of-mass
// registration, swap/remove/add, heart-mask union, overlap detection and
// morphological traversals. Everything here is a pure function of its inputs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "daa/errors.hpp"

namespace daa {

// H×W map with values in {0,1}, row-major.
class BinaryMap {
public:
    BinaryMap() = default;
    BinaryMap(int rows, int cols);
    // Throws InvalidArgument if any value is not 0 or 1.
    BinaryMap(int rows, int cols, std::vector<std::uint8_t> values);

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::uint8_t at(int r, int c) const { return data_[index(r, c)]; }
    void set(int r, int c, bool v) { data_[index(r, c)] = v ? 1 : 0; }
    bool in_bounds(int r, int c) const noexcept { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }

    const std::vector<std::uint8_t>& data() const noexcept { return data_; }
    std::size_t count() const noexcept;
    bool any() const noexcept;
    bool same_shape(const BinaryMap& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    BinaryMap operator|(const BinaryMap& o) const;
    BinaryMap operator&(const BinaryMap& o) const;
    BinaryMap& operator|=(const BinaryMap& o);
    bool operator==(const BinaryMap& o) const = default;

    // true when every set pixel of *this is also set in `o`.
    bool subset_of(const BinaryMap& o) const;

private:
    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols_ + c; }
    void require_same_shape(const BinaryMap& o) const;

    int rows_ = 0;
    int cols_ = 0;
    std::vector<std::uint8_t> data_;
};

enum class ChannelRole { heart, other };

// Class index 0 is the normal (healthy) class by convention.
struct PathologyLabel {
    int class_index = 0;
    std::string class_name = "NOR";

    bool is_normal() const noexcept { return class_index == 0; }
    bool operator==(const PathologyLabel&) const = default;
};

class AnatomyTensor {
public:
    AnatomyTensor() = default;
    // Validates: K >= 1, H,W >= 8, shared shape, one role per channel, at least one heart channel.
    AnatomyTensor(std::vector<BinaryMap> channels, std::vector<ChannelRole> roles, std::string subject_id,
                  PathologyLabel pathology);

    int num_channels() const noexcept { return static_cast<int>(channels_.size()); }
    int rows() const noexcept { return channels_.empty() ? 0 : channels_.front().rows(); }
    int cols() const noexcept { return channels_.empty() ? 0 : channels_.front().cols(); }

    const BinaryMap& channel(int k) const;
    // Replacement must keep the shape.
    void set_channel(int k, BinaryMap m);
    const std::vector<BinaryMap>& channels() const noexcept { return channels_; }
    const std::vector<ChannelRole>& roles() const noexcept { return roles_; }
    bool is_heart(int k) const { return roles_.at(static_cast<std::size_t>(k)) == ChannelRole::heart; }
    std::vector<int> heart_channels() const;

    const std::string& subject_id() const noexcept { return subject_id_; }
    const PathologyLabel& pathology() const noexcept { return pathology_; }
    void set_subject_id(std::string id) { subject_id_ = std::move(id); }
    void set_pathology(PathologyLabel p) { pathology_ = std::move(p); }

    bool operator==(const AnatomyTensor&) const = default;

private:
    std::vector<BinaryMap> channels_;
    std::vector<ChannelRole> roles_;
    std::string subject_id_;
    PathologyLabel pathology_;
};

enum class OpKind { swap, remove, add };

struct FactorOp {
    OpKind kind = OpKind::swap;
    int channel = 0;
    std::optional<std::string> donor_subject;

    bool operator==(const FactorOp&) const = default;
};

struct ArithmeticPlan {
    std::string base_subject;
    std::vector<FactorOp> ops;
};

using SubjectStore = std::map<std::string, AnatomyTensor>;

struct MixRecord {
    BinaryMap modified_support;
    std::vector<FactorOp> ops_applied;
};

struct PlanViolation {
    std::string code;
    std::string message;
    int op_index = -1; // -1 when the violation concerns the plan as a whole
};

struct ChannelOverlap {
    int channel_i = 0;
    int channel_j = 0;
    std::size_t pixels = 0;
    bool operator==(const ChannelOverlap&) const = default;
};

enum class MorphOp { erode, dilate };

struct PixelCoord {
    double row = 0.0;
    double col = 0.0;
};

const char* to_string(OpKind kind);
OpKind op_kind_from_string(const std::string& s);
const char* to_string(MorphOp op);
MorphOp morph_op_from_string(const std::string& s);

// Mean of the coordinates of the set pixels. Throws EmptyFactor on an all-zero map.
PixelCoord center_of_mass(const BinaryMap& channel);

// Integer translation of `donor` that brings its centre of mass onto the target's
// (offset rounded to nearest). Pixels shifted out of frame are dropped.
BinaryMap register_factor(const BinaryMap& donor, const BinaryMap& target);

// Shift by (dr, dc) pixels, dropping what leaves the frame.
BinaryMap translate(const BinaryMap& m, int dr, int dc);

// Ops are applied in order. Registration always targets the base subject's
// original channel (the factor being swapped out), so a remove followed by an add
// of the same channel lands where the removed factor was.
std::pair<AnatomyTensor, MixRecord> apply_plan(const AnatomyTensor& base, const SubjectStore& donors,
                                               const ArithmeticPlan& plan);

BinaryMap heart_mask(const AnatomyTensor& c);

std::vector<ChannelOverlap> overlap_report(const AnatomyTensor& c);

BinaryMap erode(const BinaryMap& m, int radius);
BinaryMap dilate(const BinaryMap& m, int radius);

// Square structuring element of side 2*step+1 applied to one channel.
// Throws EmptyFactor when erosion wipes out a non-empty channel.
AnatomyTensor morph_traverse(const AnatomyTensor& c, int channel, MorphOp op, int step);

// Structural checks plus the one-pathology-per-subject rule: the base and every
// contributing donor may carry at most one distinct non-normal pathology between
// them. Unresolvable subject ids throw UnknownSubject.
std::vector<PlanViolation> validate_plan(const ArithmeticPlan& plan, const SubjectStore& subjects);

// The pathology a successfully validated plan produces: the single non-normal
// pathology involved, or the base's label when everything is normal.
PathologyLabel plan_target_pathology(const ArithmeticPlan& plan, const SubjectStore& subjects);

} // namespace daa
