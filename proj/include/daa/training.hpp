#pragma once

// Model bundle (J, G, D, F), mix sampling, the alternating adversarial step and the
// epoch loop with validation-based model selection.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "daa/checkpoint.hpp"
#include "daa/losses.hpp"
#include "daa/phantom_data.hpp"
#include "daa/synthesis_nets.hpp"

namespace daa {

struct ModelOptions {
    RefinerOptions refiner;
    GeneratorOptions generator;
    DiscriminatorOptions discriminator;
    ClassifierOptions classifier;
    std::vector<std::string> class_names{"NOR", "HCM", "DCM", "ARV"};
};

struct ModelBundle {
    ModelOptions options;
    Refiner j{nullptr};
    Generator g{nullptr};
    Discriminator d{nullptr};
    Classifier f{nullptr};

    // Fresh modules, Xavier-initialised from `seed`.
    static ModelBundle create(const ModelOptions& opts, std::uint64_t seed);
    ModelBundle clone() const;

    Checkpoint to_checkpoint() const;
    static ModelBundle from_checkpoint(const Checkpoint& ck);
    void save(const std::filesystem::path& path) const;
    static ModelBundle load(const std::filesystem::path& path);
};

// Classifier-only container (prefix "F.").
void save_classifier(const Classifier& f, const std::vector<std::string>& class_names, const std::filesystem::path& path);
std::pair<Classifier, std::vector<std::string>> load_classifier(const std::filesystem::path& path);

// Which heart channels carry each pathology. A pathological donor contributes exactly
// these channels; a normal donor contributes one of the groups at random.
struct MixPolicy {
    std::map<std::string, std::vector<int>> defining_channels{{"HCM", {0, 1}}, {"DCM", {0, 1}}, {"ARV", {2}}};

    std::vector<std::vector<int>> groups() const;
};

struct PlannedMix {
    int base = 0;  // index into the record list
    int donor = 0;
    ArithmeticPlan plan;
    PathologyLabel target;
};

// Swap plan moving `channels` from donor to base.
ArithmeticPlan swap_plan(const std::string& base, const std::string& donor, const std::vector<int>& channels);

// Random valid mixes: a pathological donor goes into a normal or same-class base, a
// normal donor into a normal base. Every plan passes validate_plan.
std::vector<PlannedMix> sample_mixes(const std::vector<SubjectRecord>& records, const MixPolicy& policy, int count,
                                     std::mt19937_64& rng);

struct TrainingBatch {
    torch::Tensor chat;         // [B,K,H,W] mixed anatomy
    torch::Tensor phi;          // [B,1,H,W]
    torch::Tensor base_image;   // [B,1,H,W]
    torch::Tensor base_code;    // [B,d]
    torch::Tensor donor_image;  // [B,1,H,W]
    torch::Tensor donor_heart;  // [B,1,H,W]
    torch::Tensor mix_heart;    // [B,1,H,W] heart mask of the mixed anatomy
    torch::Tensor bg_mask;      // [B,1,H,W] heart(mixed) | heart(base)
    torch::Tensor target;       // [B] int64
    std::vector<ArithmeticPlan> plans;
};

TrainingBatch make_batch(const std::vector<SubjectRecord>& records, const std::vector<PlannedMix>& mixes,
                         int dilation_radius, double blur_sigma);

struct TrainConfig {
    int epochs = 90;
    int batch_size = 8;
    int mixes_per_epoch = 64;
    double lr_j = 1e-4;
    double lr_g = 1e-4;
    double lr_d = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.999;
    LossWeights weights;
    std::uint64_t seed = 0;
    bool freeze_generator = false;
    int dilation_radius = -1; // < 0: scaled default
    double blur_sigma = -1.0; // < 0: scaled default
    MixPolicy policy;
    int val_mixes = 32;
    // Upstream emulation before adversarial training: G as a reconstruction decoder,
    // J as an identity map on unmixed anatomies.
    int generator_pretrain_epochs = 30;
    double generator_pretrain_lr = 1e-3;
    int refiner_warmup_epochs = 10;
    double refiner_warmup_lr = 1e-3;
};

struct StepReport {
    double l_d = 0, l_g = 0, l_path = 0, l_cons = 0, l_bg = 0, l_total = 0;
};

struct Optimizers {
    std::unique_ptr<torch::optim::Adam> d;
    std::unique_ptr<torch::optim::Adam> jg;

    static Optimizers create(ModelBundle& m, const TrainConfig& cfg);
};

// One D update on masked real/fake, then one J (+G unless frozen) update on
// L_G + L_path + lambda1 (L_cons + L_bg). F is never updated. Throws NonFiniteLoss.
StepReport train_step(ModelBundle& m, Optimizers& opt, const TrainingBatch& batch, const TrainConfig& cfg,
                      std::uint64_t seed);

struct LogRow {
    int epoch = 0;
    int step = 0;
    StepReport loss;
};

void write_loss_csv(const std::vector<LogRow>& log, const std::filesystem::path& path);
std::string loss_csv(const std::vector<LogRow>& log);

struct FitResult {
    ModelBundle best;
    std::vector<LogRow> log;
    int best_epoch = -1;
    double best_score = 0.0;
};

using EpochCallback = std::function<void(const LogRow&, double val_score)>;

// Requires m.f to be trained. epochs = 0 returns `m` unchanged with an empty log.
FitResult fit(const ModelBundle& m, const std::vector<SubjectRecord>& train, const std::vector<SubjectRecord>& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Validation proxy: mean F confidence in the target class minus half the gap between
// mean critic scores on real and generated images.
double validation_score(ModelBundle& m, const std::vector<SubjectRecord>& records, const std::vector<PlannedMix>& mixes,
                        const TrainConfig& cfg);

void pretrain_generator(ModelBundle& m, const std::vector<SubjectRecord>& train, const TrainConfig& cfg);
void warmup_refiner(ModelBundle& m, const std::vector<SubjectRecord>& train, const TrainConfig& cfg);

struct ClassifierTrainConfig {
    int epochs = 40;
    int batch_size = 16;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int patience = 8;      // epochs without validation improvement before stopping; 0 disables
    bool balanced = false; // class-balanced sampling
    bool augment = false;  // traditional augmentations on every batch
    std::uint64_t seed = 0;
};

// Settings used to pretrain the frozen classifier F: long schedule, class-balanced
// batches and traditional augmentation.
ClassifierTrainConfig pretrain_classifier_defaults();

struct ClassifierTrainResult {
    double best_val_accuracy = 0.0;
    double best_val_loss = 0.0;
    int best_epoch = -1;
};

// Trains f in place (batch-norm statistics included); leaves f in eval mode holding
// the best-on-validation weights. `val` may be empty (then the last epoch is kept).
ClassifierTrainResult train_classifier(Classifier& f, const std::vector<SubjectRecord>& train,
                                       const std::vector<SubjectRecord>& val, const ClassifierTrainConfig& cfg);

torch::Tensor stack_images(const std::vector<SubjectRecord>& records); // [N,1,H,W]
torch::Tensor stack_labels(const std::vector<SubjectRecord>& records); // [N] int64
// Predicted class per record (eval mode, batched).
std::vector<int> predict(Classifier& f, const std::vector<SubjectRecord>& records);
double accuracy(Classifier& f, const std::vector<SubjectRecord>& records);
double mean_cross_entropy(Classifier& f, const std::vector<SubjectRecord>& records);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

} // namespace daa
