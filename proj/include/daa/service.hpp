#pragma once

// HTTP+JSON service over one loaded dataset and model bundle. Handlers are pure
// functions of (state, request) so they can be exercised without a socket; the
// server wraps them with a bounded worker pool.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "daa/augmentation.hpp"

namespace daa {

// Read-only after construction. Handlers never mutate records or weights.
class ServiceState {
public:
    ServiceState() = default;
    // Sorts records by id and switches every network to eval mode.
    ServiceState(std::optional<std::vector<SubjectRecord>> records, std::optional<ModelBundle> model);

    bool has_dataset() const noexcept { return dataset_loaded_; }
    bool has_model() const noexcept { return model_.has_value(); }
    const std::vector<SubjectRecord>& records() const noexcept { return records_; }
    const SubjectRecord* find(const std::string& id) const;
    const SubjectStore& store() const noexcept { return store_; }
    // Shallow handle onto the shared modules.
    ModelBundle model() const { return *model_; }

private:
    bool dataset_loaded_ = false;
    std::vector<SubjectRecord> records_;
    std::map<std::string, std::size_t> index_;
    SubjectStore store_;
    std::optional<ModelBundle> model_;
};

struct Response {
    int status = 200;
    nlohmann::json body;
};

// Error body: {"error": {"code": ..., "message": ...}} plus optional extra fields.
Response error_response(int status, const std::string& code, const std::string& message);

Response handle_health(const ServiceState& s);
Response handle_list_subjects(const ServiceState& s);
Response handle_get_subject(const ServiceState& s, const std::string& id);
// Plan validation only: 200 with {"valid", "violations", "target"}.
Response handle_validate(const ServiceState& s, const nlohmann::json& req);
Response handle_generate(const ServiceState& s, const nlohmann::json& req);
Response handle_traverse(const ServiceState& s, const nlohmann::json& req);

// |a - b| / 2 for images in [-1,1], so the result lies in [0,1].
std::vector<float> difference_map(const std::vector<float>& a, const std::vector<float>& b);

struct TraversalStep {
    int step = 0;
    AnatomyTensor anatomy; // input anatomy after the morphological op
    Rendering rendering;
    std::vector<float> image;
    std::vector<float> difference; // against the subject's image
};

struct TraversalResult {
    std::vector<TraversalStep> steps;
    std::optional<std::string> warning;
    int emptied_at_step = -1; // first step that erased the factor, -1 if none
};

// Steps must be positive and strictly increasing. Erosion that empties the factor
// stops the traversal with a warning; earlier steps are kept. Modules must be in
// eval mode.
TraversalResult traverse_subject(ModelBundle& m, const SubjectRecord& subject, int channel, MorphOp op,
                                 const std::vector<int>& steps, std::uint64_t seed);

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;       // 0 binds an ephemeral port
    int workers = 4;
    int max_queued = 64;   // requests beyond this are refused
};

class HttpService {
public:
    HttpService(std::shared_ptr<const ServiceState> state, ServerOptions opts);
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    // Binds and serves on a background thread; returns the bound port.
    int start();
    // Blocks until stop() is called from elsewhere.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace daa
