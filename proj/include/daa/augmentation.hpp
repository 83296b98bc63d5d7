#pragma once

// Candidate synthesis, confidence filtering, near-ground-truth masks, augmented
// manifests and the post-hoc evaluations (classification, segmentation, proxy FID).

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "daa/training.hpp"

namespace daa {

struct GeneratedSample {
    std::string sample_id;
    int rows = 0;
    int cols = 0;
    std::vector<float> image;       // [-1,1]
    torch::Tensor refined;          // C~, [K,H,W]
    std::vector<ChannelRole> roles;
    std::vector<BinaryMap> masks;   // near-ground-truth heart masks
    PathologyLabel target;
    int predicted = -1;
    double confidence = 0.0;        // F probability of `predicted`
    double target_confidence = 0.0; // F probability of `target`
    std::string base_subject;
    ArithmeticPlan plan;
    ImagingFactor imaging;
    int vendor = 0;
    std::uint64_t seed = 0;

    std::string provenance() const;
};

// Refine, decode and classify one anatomy. Leaves module modes untouched, so the
// caller puts J, G and F in eval mode first; safe to call concurrently afterwards.
struct Rendering {
    torch::Tensor image;    // [1,1,H,W] in [-1,1]
    RefinedAnatomy refined; // hard C~
    torch::Tensor probs;    // [num_classes]
    int predicted = -1;
    double confidence = 0.0;
};
Rendering render(ModelBundle& m, const AnatomyTensor& chat, const BlendMask& phi, const ImagingFactor& z,
                 std::uint64_t seed);

struct AugmentationRequest {
    std::optional<std::string> target_class;
    std::optional<int> target_vendor;
    int count = 1;
    int pool_multiplier = 4;
    std::uint64_t seed = 0;
    std::string id_prefix = "syn";
    MixPolicy policy;
};

// Candidate plans: for a class target, donors of that class contribute their defining
// channels to normal bases; for a vendor target, bases come from that vendor and
// donors follow the usual compatibility rules. count * pool_multiplier candidates.
std::vector<PlannedMix> plan_candidates(const std::vector<SubjectRecord>& pool, const AugmentationRequest& req);

// Throws InvalidArgument when count < 1, NoCompatiblePairs when no plan is possible.
std::vector<GeneratedSample> synthesize_candidates(ModelBundle& m, const std::vector<SubjectRecord>& pool,
                                                   const AugmentationRequest& req);

// Generates one sample; deterministic in (model, records, mix, seed).
GeneratedSample synthesize(ModelBundle& m, const std::vector<SubjectRecord>& pool, const PlannedMix& mix,
                           std::uint64_t seed, const std::string& sample_id);

// Samples whose prediction equals their target, top req.count by confidence
// (descending, ties in input order). Throws InsufficientCandidates.
std::vector<GeneratedSample> filter_by_confidence(const std::vector<GeneratedSample>& samples,
                                                  const AugmentationRequest& req);

// Heart channels of C~ thresholded at 0.5; a pixel above threshold in several heart
// channels goes to the largest value (lowest index on ties).
std::vector<BinaryMap> extract_near_gt_masks(const torch::Tensor& refined, const std::vector<ChannelRole>& roles);

// Synthetic record (flag set, provenance kept) carrying the near-GT masks.
SubjectRecord to_record(const GeneratedSample& s, int num_classes);

// Appends the samples to the train split only. Rejects duplicate ids/provenance.
DatasetManifest augment_dataset(const DatasetManifest& base, const std::vector<GeneratedSample>& samples);

struct Summary {
    std::vector<double> values;
    double mean = 0.0;
    double stdev = 0.0; // sample standard deviation (0 for one value)
    double median = 0.0;
};
Summary summarize(std::vector<double> values);

struct PosthocClassifierConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3};
    ClassifierOptions options;
    // Seed overridden per run. Unbalanced sampling keeps the imbalance visible.
    ClassifierTrainConfig train{.epochs = 100, .augment = true}; // early stopping ends runs first
};

struct ClassificationEval {
    Summary accuracy;
    std::vector<std::vector<double>> per_class; // [seed][class] recall on the test split
    Summary class_accuracy(int class_index) const;
};

ClassificationEval eval_posthoc_classification(const std::vector<SubjectRecord>& train,
                                               const std::vector<SubjectRecord>& val,
                                               const std::vector<SubjectRecord>& test,
                                               const PosthocClassifierConfig& cfg);

struct SegmenterOptions {
    int width = 8;
    int num_classes = 4; // background + LV, MYO, RV
};

class SegmenterImpl : public torch::nn::Module {
public:
    explicit SegmenterImpl(SegmenterOptions opts = {});
    torch::Tensor forward(const torch::Tensor& x); // [B,1,H,W] -> logits [B,C,H,W]

private:
    torch::nn::Sequential block(int in, int out, const std::string& name);
    torch::nn::Sequential enc1{nullptr}, enc2{nullptr}, mid{nullptr}, dec2{nullptr}, dec1{nullptr};
    torch::nn::ConvTranspose2d up2{nullptr}, up1{nullptr};
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(Segmenter);

struct PosthocSegmenterConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3};
    SegmenterOptions options;
    int epochs = 20;
    int batch_size = 8;
    double lr = 1e-3;
    bool augment = true;
};

// 2|A n B| / (|A| + |B|); 1 when both are empty.
double dice(const BinaryMap& a, const BinaryMap& b);

// Mean over test subjects and structures of the per-structure Dice.
Summary eval_posthoc_segmentation(const std::vector<SubjectRecord>& train, const std::vector<SubjectRecord>& test,
                                  const PosthocSegmenterConfig& cfg);

// Frechet distance between Gaussian fits of two feature sets [n,f] (n >= 2), with
// eps * I added to both covariances.
double frechet_distance(const torch::Tensor& x, const torch::Tensor& y, double eps = 1e-6);

// Frechet distance over the classifier's penultimate features.
double proxy_fid(Classifier& embedder, const torch::Tensor& real, const torch::Tensor& generated);

struct EvalRow {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string metric;
    double value = 0.0;
};
std::string eval_csv(const std::vector<EvalRow>& rows);

} // namespace daa
