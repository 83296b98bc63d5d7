#include "daa/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>

#include "daa/image_io.hpp"

namespace daa {

using nlohmann::json;

ServiceState::ServiceState(std::optional<std::vector<SubjectRecord>> records, std::optional<ModelBundle> model)
    : model_(std::move(model)) {
    if (records) {
        dataset_loaded_ = true;
        records_ = std::move(*records);
        std::sort(records_.begin(), records_.end(),
                  [](const SubjectRecord& a, const SubjectRecord& b) { return a.subject_id < b.subject_id; });
        for (std::size_t i = 0; i < records_.size(); ++i) index_[records_[i].subject_id] = i;
        store_ = anatomy_store(records_);
    }
    if (model_) {
        model_->j->eval();
        model_->g->eval();
        model_->d->eval();
        model_->f->eval();
    }
}

const SubjectRecord* ServiceState::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

Response error_response(int status, const std::string& code, const std::string& message) {
    return {status, json{{"error", {{"code", code}, {"message", message}}}}};
}

namespace {

std::string png64(const std::vector<std::uint8_t>& png) { return base64_encode(png); }

std::string image64(const std::vector<float>& img, int rows, int cols) { return png64(image_png(img, rows, cols)); }

std::string unit64(const std::vector<float>& values, int rows, int cols) {
    return png64(encode_png_gray(to_gray8(values, 0.0f, 1.0f), cols, rows));
}

std::string map64(const BinaryMap& m) {
    std::vector<float> v(m.data().begin(), m.data().end());
    return unit64(v, m.rows(), m.cols());
}

const char* role_name(ChannelRole r) { return r == ChannelRole::heart ? "heart" : "other"; }

json label_json(int index, const std::vector<std::string>& names) {
    const auto name = index >= 0 && index < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(index)]
                                                                          : std::to_string(index);
    return {{"class_index", index}, {"class_name", name}};
}

std::optional<Response> require_dataset(const ServiceState& s) {
    if (!s.has_dataset()) return error_response(503, "dataset_not_loaded", "no dataset is loaded");
    return std::nullopt;
}

std::optional<Response> require_model(const ServiceState& s) {
    if (auto r = require_dataset(s)) return r;
    if (!s.has_model()) return error_response(503, "model_not_loaded", "no model is loaded");
    return std::nullopt;
}

// Raised for malformed request bodies; mapped to 400.
struct BadRequest : Error {
    explicit BadRequest(const std::string& m) : Error("bad_request", m) {}
};

template <class T>
T field(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception&) {
        throw BadRequest(std::string("field '") + key + "' has the wrong type");
    }
}

template <class T>
T required(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw BadRequest(std::string("missing field '") + key + "'");
    return field<T>(j, key, T{});
}

ArithmeticPlan parse_plan(const json& req) {
    ArithmeticPlan plan;
    plan.base_subject = required<std::string>(req, "base_subject");
    if (req.contains("ops")) {
        if (!req["ops"].is_array()) throw BadRequest("'ops' must be an array");
        for (const auto& o : req["ops"]) {
            FactorOp op;
            try {
                op.kind = op_kind_from_string(required<std::string>(o, "kind"));
            } catch (const InvalidArgument& e) {
                throw BadRequest(e.what());
            }
            op.channel = required<int>(o, "channel");
            if (o.contains("donor") && !o["donor"].is_null()) op.donor_subject = field<std::string>(o, "donor", "");
            plan.ops.push_back(std::move(op));
        }
    }
    return plan;
}

json violations_json(const std::vector<PlanViolation>& v) {
    json out = json::array();
    for (const auto& x : v) out.push_back({{"code", x.code}, {"message", x.message}, {"op_index", x.op_index}});
    return out;
}

// Imaging code: the base subject's by default, another subject's, or explicit values.
ImagingFactor parse_imaging(const ServiceState& s, const json& req, const SubjectRecord& base) {
    if (!req.contains("imaging_source") || req["imaging_source"].is_null()) return base.imaging;
    const auto& src = req["imaging_source"];
    std::string subject;
    if (src.is_string()) {
        subject = src.get<std::string>();
    } else if (src.is_object() && src.contains("code")) {
        ImagingFactor z;
        z.code = field<std::vector<float>>(src, "code", {});
        if (z.code.size() != base.imaging.code.size())
            throw BadRequest("imaging code must have " + std::to_string(base.imaging.code.size()) + " values");
        for (float v : z.code)
            if (!std::isfinite(v)) throw BadRequest("imaging code must be finite");
        z.source_subject = "explicit";
        return z;
    } else if (src.is_object() && src.contains("subject")) {
        subject = field<std::string>(src, "subject", "");
    } else {
        throw BadRequest("'imaging_source' must be a subject id, {\"subject\": id} or {\"code\": [...]}");
    }
    const auto* rec = s.find(subject);
    if (!rec) throw UnknownSubject(subject);
    return rec->imaging;
}

json channel_previews(const RefinedAnatomy& r) {
    json out = json::array();
    for (int k = 0; k < r.values.size(0); ++k) out.push_back(png64(tensor_png(r.values[k], 0.0f, 1.0f)));
    return out;
}

json probabilities_json(const torch::Tensor& probs) {
    json out = json::array();
    for (int c = 0; c < probs.size(0); ++c) out.push_back(probs[c].item<double>());
    return out;
}

double mean_of(const std::vector<float>& v) {
    double acc = 0.0;
    for (float x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

template <class F>
Response guarded(F&& body) {
    try {
        return body();
    } catch (const BadRequest& e) {
        return error_response(400, e.code(), e.what());
    } catch (const UnknownSubject& e) {
        return error_response(404, e.code(), e.what());
    } catch (const EmptyFactor& e) {
        return error_response(422, e.code(), e.what());
    } catch (const InvalidArgument& e) {
        return error_response(400, e.code(), e.what());
    } catch (const InvalidPlan& e) {
        return error_response(422, e.code(), e.what());
    } catch (const Error& e) {
        return error_response(500, e.code(), e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

BinaryMap symmetric_difference(const BinaryMap& a, const BinaryMap& b) {
    BinaryMap out(a.rows(), a.cols());
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) out.set(r, c, a.at(r, c) != b.at(r, c));
    return out;
}

} // namespace

std::vector<float> difference_map(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ShapeMismatch("difference_map operands differ in size");
    std::vector<float> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::clamp(std::abs(a[i] - b[i]) * 0.5f, 0.0f, 1.0f);
    return out;
}

Response handle_health(const ServiceState& s) {
    return {200, json{{"status", "ok"},
                      {"dataset_loaded", s.has_dataset()},
                      {"model_loaded", s.has_model()},
                      {"subjects", s.records().size()}}};
}

Response handle_list_subjects(const ServiceState& s) {
    if (auto r = require_dataset(s)) return *r;
    json out = json::array();
    for (const auto& rec : s.records())
        out.push_back({{"id", rec.subject_id},
                       {"pathology", rec.label.class_name},
                       {"class_index", rec.label.class_index},
                       {"vendor", rec.vendor},
                       {"synthetic", rec.synthetic},
                       {"thumbnail", image64(rec.image, rec.rows, rec.cols)}});
    return {200, json{{"subjects", out}}};
}

Response handle_get_subject(const ServiceState& s, const std::string& id) {
    if (auto r = require_dataset(s)) return *r;
    const auto* rec = s.find(id);
    if (!rec) return error_response(404, "unknown_subject", "unknown subject '" + id + "'");
    json masks = json::array(), channels = json::array(), roles = json::array();
    for (const auto& m : rec->masks) masks.push_back(map64(m));
    for (int k = 0; k < rec->anatomy.num_channels(); ++k) {
        channels.push_back(map64(rec->anatomy.channel(k)));
        roles.push_back(role_name(rec->anatomy.roles()[static_cast<std::size_t>(k)]));
    }
    return {200, json{{"id", rec->subject_id},
                      {"pathology", rec->label.class_name},
                      {"class_index", rec->label.class_index},
                      {"vendor", rec->vendor},
                      {"synthetic", rec->synthetic},
                      {"provenance", rec->provenance},
                      {"rows", rec->rows},
                      {"cols", rec->cols},
                      {"image", image64(rec->image, rec->rows, rec->cols)},
                      {"masks", masks},
                      {"channels", channels},
                      {"roles", roles},
                      {"imaging_code", rec->imaging.code}}};
}

Response handle_validate(const ServiceState& s, const json& req) {
    if (auto r = require_dataset(s)) return *r;
    return guarded([&]() -> Response {
        const auto plan = parse_plan(req);
        const auto v = validate_plan(plan, s.store());
        json body{{"valid", v.empty()}, {"violations", violations_json(v)}};
        if (v.empty()) {
            const auto t = plan_target_pathology(plan, s.store());
            body["target"] = {{"class_index", t.class_index}, {"class_name", t.class_name}};
        }
        return {200, body};
    });
}

Response handle_generate(const ServiceState& s, const json& req) {
    if (auto r = require_model(s)) return *r;
    return guarded([&]() -> Response {
        const auto plan = parse_plan(req);
        const auto seed = field<std::uint64_t>(req, "seed", 0);
        const auto* base = s.find(plan.base_subject);
        if (!base) throw UnknownSubject(plan.base_subject);
        const auto violations = validate_plan(plan, s.store());
        if (!violations.empty()) {
            auto resp = error_response(422, "plan_violation", "plan breaks the one-pathology rule or is malformed");
            resp.body["violations"] = violations_json(violations);
            return resp;
        }
        const auto z = parse_imaging(s, req, *base);
        const auto target = plan_target_pathology(plan, s.store());

        auto [chat, rec] = apply_plan(base->anatomy, s.store(), plan);
        const auto phi = build_blend_mask(rec, default_dilation_radius(base->rows), default_blur_sigma(base->rows));
        auto m = s.model();
        const auto r = render(m, chat, phi, z, seed);
        const auto image = tensor_to_vector(r.image);
        const auto diff = difference_map(image, base->image);
        const auto& names = m.options.class_names;

        json overlaps = json::array();
        for (const auto& o : overlap_report(chat))
            overlaps.push_back({{"channel_i", o.channel_i}, {"channel_j", o.channel_j}, {"pixels", o.pixels}});
        json roles = json::array();
        for (auto role : r.refined.roles) roles.push_back(role_name(role));

        auto predicted = label_json(r.predicted, names);
        predicted["confidence"] = r.confidence;
        return {200, json{{"base_subject", plan.base_subject},
                          {"seed", seed},
                          {"target", label_json(target.class_index, names)},
                          {"predicted", predicted},
                          {"probabilities", probabilities_json(r.probs)},
                          {"image", image64(image, base->rows, base->cols)},
                          {"difference", unit64(diff, base->rows, base->cols)},
                          {"difference_mean", mean_of(diff)},
                          {"blend_mask", unit64(phi.phi, phi.rows, phi.cols)},
                          {"channels", channel_previews(r.refined)},
                          {"roles", roles},
                          {"overlaps", overlaps}}};
    });
}

TraversalResult traverse_subject(ModelBundle& m, const SubjectRecord& subject, int channel, MorphOp op,
                                 const std::vector<int>& steps, std::uint64_t seed) {
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] <= 0) throw InvalidArgument("traversal steps must be positive");
        if (i > 0 && steps[i] <= steps[i - 1]) throw InvalidArgument("traversal steps must be strictly increasing");
    }
    if (channel < 0 || channel >= subject.anatomy.num_channels())
        throw InvalidArgument("channel " + std::to_string(channel) + " out of range");
    TraversalResult out;
    for (int step : steps) {
        AnatomyTensor moved;
        try {
            moved = morph_traverse(subject.anatomy, channel, op, step);
        } catch (const EmptyFactor& e) {
            out.warning = "step " + std::to_string(step) + ": " + e.what();
            out.emptied_at_step = step;
            break;
        }
        const auto support = symmetric_difference(subject.anatomy.channel(channel), moved.channel(channel));
        const auto phi =
            build_blend_mask(support, default_dilation_radius(subject.rows), default_blur_sigma(subject.rows));
        TraversalStep ts;
        ts.step = step;
        ts.rendering = render(m, moved, phi, subject.imaging, mix_seed(seed, static_cast<std::uint64_t>(step)));
        ts.anatomy = std::move(moved);
        ts.image = tensor_to_vector(ts.rendering.image);
        ts.difference = difference_map(ts.image, subject.image);
        out.steps.push_back(std::move(ts));
    }
    return out;
}

Response handle_traverse(const ServiceState& s, const json& req) {
    if (auto r = require_model(s)) return *r;
    return guarded([&]() -> Response {
        const auto id = required<std::string>(req, "subject");
        const auto channel = required<int>(req, "channel");
        MorphOp op;
        try {
            op = morph_op_from_string(required<std::string>(req, "op"));
        } catch (const InvalidArgument& e) {
            throw BadRequest(e.what());
        }
        const auto steps = field<std::vector<int>>(req, "steps", {3, 6, 9});
        const auto seed = field<std::uint64_t>(req, "seed", 0);
        const auto* subject = s.find(id);
        if (!subject) throw UnknownSubject(id);

        auto m = s.model();
        const auto result = traverse_subject(m, *subject, channel, op, steps, seed);
        const auto& names = m.options.class_names;
        json entries = json::array();
        for (const auto& t : result.steps) {
            auto predicted = label_json(t.rendering.predicted, names);
            predicted["confidence"] = t.rendering.confidence;
            const auto& factor = t.anatomy.channel(channel);
            entries.push_back({{"step", t.step},
                               {"factor", map64(factor)},
                               {"factor_area", factor.count()},
                               {"image", image64(t.image, subject->rows, subject->cols)},
                               {"difference", unit64(t.difference, subject->rows, subject->cols)},
                               {"difference_mean", mean_of(t.difference)},
                               {"predicted", predicted},
                               {"probabilities", probabilities_json(t.rendering.probs)}});
        }
        json body{{"subject", id}, {"channel", channel}, {"op", to_string(op)}, {"steps", entries}};
        if (result.warning) {
            body["warning"] = *result.warning;
            body["error"] = {{"code", "empty_factor"}, {"message", *result.warning}};
            return {422, body};
        }
        return {200, body};
    });
}

struct HttpService::Impl {
    std::shared_ptr<const ServiceState> state;
    ServerOptions opts;
    httplib::Server server;
    std::thread thread;
};

namespace {

void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        reply(res, error_response(400, "bad_request", std::string("request body is not valid JSON: ") + e.what()));
        return std::nullopt;
    }
}

} // namespace

HttpService::HttpService(std::shared_ptr<const ServiceState> state, ServerOptions opts) : impl_(new Impl) {
    impl_->state = std::move(state);
    impl_->opts = opts;
    auto& svr = impl_->server;
    const auto workers = static_cast<std::size_t>(std::max(1, opts.workers));
    const auto queued = static_cast<std::size_t>(std::max(1, opts.max_queued));
    svr.new_task_queue = [workers, queued] { return new httplib::ThreadPool(workers, queued); };
    svr.set_payload_max_length(1 << 20);
    const ServiceState* st = impl_->state.get();

    svr.Get("/health", [st](const httplib::Request&, httplib::Response& res) { reply(res, handle_health(*st)); });
    svr.Get("/subjects", [st](const httplib::Request&, httplib::Response& res) {
        reply(res, handle_list_subjects(*st));
    });
    svr.Get(R"(/subjects/([^/]+))", [st](const httplib::Request& req, httplib::Response& res) {
        reply(res, handle_get_subject(*st, req.matches[1]));
    });
    svr.Post("/validate", [st](const httplib::Request& req, httplib::Response& res) {
        if (auto body = parse_body(req, res)) reply(res, handle_validate(*st, *body));
    });
    svr.Post("/generate", [st](const httplib::Request& req, httplib::Response& res) {
        if (auto body = parse_body(req, res)) reply(res, handle_generate(*st, *body));
    });
    svr.Post("/traverse", [st](const httplib::Request& req, httplib::Response& res) {
        if (auto body = parse_body(req, res)) reply(res, handle_traverse(*st, *body));
    });
    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        const std::string code = res.status == 404 ? "not_found" : "http_error";
        reply(res, error_response(res.status, code, "request failed with HTTP status " + std::to_string(res.status)));
    });
}

HttpService::~HttpService() {
    stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpService::start() {
    auto& svr = impl_->server;
    int port = impl_->opts.port;
    if (port == 0) {
        port = svr.bind_to_any_port(impl_->opts.host);
    } else if (!svr.bind_to_port(impl_->opts.host, port)) {
        port = -1;
    }
    if (port < 0) throw InvalidArgument("cannot bind " + impl_->opts.host + ":" + std::to_string(impl_->opts.port));
    impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
    svr.wait_until_ready();
    return port;
}

void HttpService::run() {
    if (!impl_->thread.joinable()) start();
    impl_->thread.join();
}

void HttpService::stop() { impl_->server.stop(); }

} // namespace daa
