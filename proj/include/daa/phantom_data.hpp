#pragma once

// Desk-scale data: a nested-ellipse cardiac phantom with controllable pathology
// classes and acquisition "vendors", conversion of segmentation masks into anatomy
// factors, DAAF1 subject files and split manifests.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "daa/factor_core.hpp"

namespace daa {

// Low-dimensional appearance code. For phantoms it is the exact parameter vector of
// the synthetic intensity model, see `ImagingCode`.
struct ImagingFactor {
    std::vector<float> code;
    std::string source_subject;
    bool operator==(const ImagingFactor&) const = default;
};

// Slots of the phantom imaging code.
enum ImagingCode : int {
    kGain = 0,
    kBias,
    kBloodOffset,
    kMyoOffset,
    kFatOffset,
    kLungOffset,
    kBlurSigma,
    kNoiseSigma,
    kImagingDim
};

// Heart structures, in channel order.
enum HeartStructure : int { kLV = 0, kMYO = 1, kRV = 2, kNumHeartStructures = 3 };

inline constexpr std::array<const char*, 3> kStructureNames{"LV", "MYO", "RV"};

// Background tissues; each maps onto one non-heart factor channel.
enum Tissue : std::uint8_t {
    kAir = 0,
    kBodyWall,
    kLung,
    kLiver,
    kSpine,
    kAorta,
    kPericardialFat,
    kSoftTissue,
    kStomach,
    kNumTissues
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

// Morphology of one class, expressed in pixels of a 64x64 frame.
struct ClassMorphology {
    std::string name;
    Range lv_radius;
    Range myo_thickness;
    Range rv_height;
    Range rv_width;
};

struct VendorAppearance {
    std::string name;
    Range gain;
    Range bias;
    Range blood_offset;
    Range myo_offset;
    Range fat_offset;
    Range lung_offset;
    Range blur_sigma;
    Range noise_sigma;
};

struct PhantomSpec {
    int size = 64;
    int count = 200;
    int num_channels = 12;
    std::uint64_t seed = 0;
    std::vector<ClassMorphology> classes; // index 0 must be the normal class
    std::vector<VendorAppearance> vendors;
    // Relative class/vendor frequencies; empty = uniform round-robin.
    std::vector<double> class_weights;

    static PhantomSpec defaults();
};

struct SubjectRecord {
    std::string subject_id;
    int rows = 0;
    int cols = 0;
    std::vector<float> image; // [-1,1], row-major
    std::vector<BinaryMap> masks; // LV, MYO, RV
    AnatomyTensor anatomy;
    ImagingFactor imaging;
    PathologyLabel label;
    int num_classes = 4;
    int vendor = 0;
    bool synthetic = false;
    std::string provenance;

    bool operator==(const SubjectRecord&) const = default;
};

std::vector<std::string> class_names(const PhantomSpec& spec);
std::string vendor_name(int vendor);

// Throws SpecInfeasible when structures cannot stay nested and inside the body.
std::vector<SubjectRecord> generate_phantoms(const PhantomSpec& spec);

// One heart channel per mask, followed by K - masks.size() background channels.
// `background` (optional, one tissue label per pixel) spreads non-heart pixels
// over the background channels; labels past the last channel fold into it.
// Without it every non-heart pixel lands in the first background channel.
AnatomyTensor masks_to_factors(const std::vector<BinaryMap>& masks, int num_channels,
                               const std::optional<std::vector<std::uint8_t>>& background = std::nullopt,
                               std::string subject_id = {}, PathologyLabel label = {});

void save_subject(const SubjectRecord& record, const std::filesystem::path& path);
// Throws FormatError (with byte offset) on malformed or truncated files.
SubjectRecord load_subject(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_subject(const SubjectRecord& record);
SubjectRecord decode_subject(const std::vector<std::uint8_t>& bytes);

struct ManifestEntry {
    std::string subject_id;
    int class_index = 0;
    std::string class_name;
    int vendor = 0;
    bool synthetic = false;
    std::string provenance;
    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> val;
    std::vector<ManifestEntry> test;

    std::map<std::string, int> class_counts(const std::vector<ManifestEntry>& split) const;
    std::map<int, int> vendor_counts(const std::vector<ManifestEntry>& split) const;
    std::size_t size() const { return train.size() + val.size() + test.size(); }
    bool operator==(const DatasetManifest&) const = default;
};

struct Imbalance {
    enum class Kind { pathology_class, vendor } kind = Kind::pathology_class;
    int index = 0;          // class index or vendor index
    double fraction = 0.05; // target share of the resulting train split
};

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
};

// Class-stratified split with exact global totals. An imbalance, when given,
// drops train subjects of the named class/vendor until they make up `fraction`
// of the remaining train split; val and test are untouched.
DatasetManifest build_manifest(const std::vector<SubjectRecord>& records, std::uint64_t split_seed,
                               const std::optional<Imbalance>& imbalance = std::nullopt,
                               SplitFractions fractions = {});

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

// <dir>/subjects/<id>.daaf + <dir>/manifest.json
void save_dataset(const std::filesystem::path& dir, const std::vector<SubjectRecord>& records,
                  const DatasetManifest& manifest);
void save_manifest(const std::filesystem::path& file, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& file);
// Every *.daaf under <dir>/subjects, sorted by id.
std::vector<SubjectRecord> load_records(const std::filesystem::path& dir);

SubjectStore anatomy_store(const std::vector<SubjectRecord>& records);

// Records named by a manifest split, in split order. Throws UnknownSubject.
std::vector<SubjectRecord> select_split(const std::vector<SubjectRecord>& records,
                                        const std::vector<ManifestEntry>& split);

// Grayscale PNG of a [-1,1] image.
std::vector<std::uint8_t> image_png(const std::vector<float>& image, int rows, int cols);

} // namespace daa
