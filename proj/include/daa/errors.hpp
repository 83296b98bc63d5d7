#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace daa {

// Base of every error the pipeline raises. `code()` is a stable machine-readable
// tag that the HTTP layer forwards to clients.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct EmptyFactor : Error {
    explicit EmptyFactor(const std::string& m) : Error("empty_factor", m) {}
};
struct UnknownSubject : Error {
    explicit UnknownSubject(const std::string& id) : Error("unknown_subject", "unknown subject '" + id + "'") {}
};
struct InvalidPlan : Error {
    explicit InvalidPlan(const std::string& m) : Error("invalid_plan", m) {}
};
struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& m) : Error("shape_mismatch", m) {}
};
struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& m) : Error("invalid_argument", m) {}
};
struct OverlapError : Error {
    explicit OverlapError(const std::string& m) : Error("overlap", m) {}
};
struct SpecInfeasible : Error {
    explicit SpecInfeasible(const std::string& m) : Error("spec_infeasible", m) {}
};
struct InsufficientSubjects : Error {
    explicit InsufficientSubjects(const std::string& m) : Error("insufficient_subjects", m) {}
};
struct InsufficientCandidates : Error {
    explicit InsufficientCandidates(const std::string& m) : Error("insufficient_candidates", m) {}
};
struct NoCompatiblePairs : Error {
    explicit NoCompatiblePairs(const std::string& m) : Error("no_compatible_pairs", m) {}
};
struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& m) : Error("non_finite_loss", m) {}
};

class FormatError : public Error {
public:
    FormatError(const std::string& m, std::uint64_t offset)
        : Error("format", m + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

} // namespace daa
