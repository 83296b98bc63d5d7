#include "daa/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "daa/augmentation.hpp"
#include "daa/image_io.hpp"
#include "daa/service.hpp"

namespace daa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Dataset {
    std::vector<SubjectRecord> records;
    DatasetManifest manifest;

    std::vector<SubjectRecord> train() const { return select_split(records, manifest.train); }
    std::vector<SubjectRecord> val() const { return select_split(records, manifest.val); }
    std::vector<SubjectRecord> test() const { return select_split(records, manifest.test); }
};

Dataset load_dataset(const fs::path& dir) {
    Dataset d;
    d.records = load_records(dir);
    d.manifest = load_manifest(dir / "manifest.json");
    if (d.records.empty()) throw InsufficientSubjects("no subjects under " + dir.string());
    return d;
}

// Class names indexed by class_index, as carried by the records.
std::vector<std::string> dataset_class_names(const std::vector<SubjectRecord>& records) {
    const int n = records.front().num_classes;
    std::vector<std::string> names(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) names[static_cast<std::size_t>(c)] = std::to_string(c);
    for (const auto& r : records)
        if (r.label.class_index >= 0 && r.label.class_index < n)
            names[static_cast<std::size_t>(r.label.class_index)] = r.label.class_name;
    return names;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot write " + path.string());
    os << text;
}

// "swap:2:P0007", "remove:1", "add:0:P0003".
json parse_op(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() < 2 || parts.size() > 3) throw CLI::ValidationError("--op", "expected kind:channel[:donor], got '" + text + "'");
    json op{{"kind", parts[0]}};
    try {
        op["channel"] = std::stoi(parts[1]);
    } catch (const std::exception&) {
        throw CLI::ValidationError("--op", "channel must be an integer in '" + text + "'");
    }
    if (parts.size() == 3) op["donor"] = parts[2];
    return op;
}

// Writes every base64 PNG field of `body` to <dir>/<prefix><name>.png and strips it
// from the JSON, which is written last as result.json.
void dump_pngs(json& node, const fs::path& dir, const std::string& prefix) {
    static const std::vector<std::string> image_keys{"image", "difference", "blend_mask", "factor", "thumbnail"};
    for (const auto& key : image_keys) {
        if (node.contains(key) && node[key].is_string()) {
            write_bytes(dir / (prefix + key + ".png"), base64_decode(node[key].get<std::string>()));
            node.erase(key);
        }
    }
    if (node.contains("channels") && node["channels"].is_array()) {
        char name[32];
        for (std::size_t k = 0; k < node["channels"].size(); ++k) {
            std::snprintf(name, sizeof name, "channel_%02zu.png", k);
            write_bytes(dir / (prefix + name), base64_decode(node["channels"][k].get<std::string>()));
        }
        node.erase("channels");
    }
}

int report_error(const Response& r, std::ostream& err) {
    const auto& e = r.body.contains("error") ? r.body["error"] : json::object();
    err << "error (" << r.status << ") " << e.value("code", "unknown") << ": " << e.value("message", "") << "\n";
    if (r.body.contains("violations"))
        for (const auto& v : r.body["violations"])
            err << "  violation " << v.value("code", "") << " (op " << v.value("op_index", -1)
                << "): " << v.value("message", "") << "\n";
    return kExitRuntime;
}

ModelBundle load_model(const fs::path& path) { return ModelBundle::load(path); }

// ---------------------------------------------------------------- subcommands

struct PhantomArgs {
    std::string out;
    int n = 200;
    int size = 64;
    int channels = 12;
    std::uint64_t seed = 0;
    std::string imbalance_class;
    int imbalance_vendor = -1;
    double imbalance_fraction = 0.05;
    double train_fraction = 0.70;
    double val_fraction = 0.15;
};

int run_phantom(const PhantomArgs& a, std::ostream& out) {
    auto spec = PhantomSpec::defaults();
    spec.count = a.n;
    spec.size = a.size;
    spec.num_channels = a.channels;
    spec.seed = a.seed;
    const auto records = generate_phantoms(spec);
    std::optional<Imbalance> imb;
    if (!a.imbalance_class.empty()) {
        const auto names = class_names(spec);
        const auto it = std::find(names.begin(), names.end(), a.imbalance_class);
        imb = Imbalance{Imbalance::Kind::pathology_class, static_cast<int>(it - names.begin()), a.imbalance_fraction};
    } else if (a.imbalance_vendor >= 0) {
        imb = Imbalance{Imbalance::Kind::vendor, a.imbalance_vendor, a.imbalance_fraction};
    }
    const auto manifest = build_manifest(records, a.seed, imb, {a.train_fraction, a.val_fraction});
    save_dataset(a.out, records, manifest);
    out << "wrote " << records.size() << " subjects to " << a.out << " (train " << manifest.train.size() << ", val "
        << manifest.val.size() << ", test " << manifest.test.size() << ")\n";
    for (const auto& [name, count] : manifest.class_counts(manifest.train)) out << "  train " << name << ": " << count << "\n";
    return kExitOk;
}

struct PretrainArgs {
    std::string data;
    std::string out;
    ClassifierTrainConfig cfg = pretrain_classifier_defaults();
};

int run_pretrain(const PretrainArgs& a, std::ostream& out) {
    const auto ds = load_dataset(a.data);
    const auto train = ds.train(), val = ds.val(), test = ds.test();
    ClassifierOptions opts;
    opts.image_size = train.front().rows;
    opts.num_classes = train.front().num_classes;
    Classifier f(opts);
    init_params(*f, a.cfg.seed);
    const auto res = train_classifier(f, train, val, a.cfg);
    out << "best epoch " << res.best_epoch << ", val accuracy " << res.best_val_accuracy << ", test accuracy "
        << (test.empty() ? 0.0 : accuracy(f, test)) << "\n";
    save_classifier(f, dataset_class_names(ds.records), a.out);
    out << "saved classifier to " << a.out << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string data;
    std::string classifier;
    std::string out;
    std::string log;
    int hidden = 32;
    TrainConfig cfg;
};

int run_train(const TrainArgs& a, std::ostream& out) {
    const auto ds = load_dataset(a.data);
    const auto train = ds.train(), val = ds.val();
    auto [f, names] = load_classifier(a.classifier);
    ModelOptions opts;
    const int k = train.front().anatomy.num_channels();
    opts.refiner.channels = k;
    opts.refiner.hidden = a.hidden;
    opts.generator.channels = k;
    opts.generator.hidden = a.hidden;
    opts.generator.code_dim = static_cast<int>(train.front().imaging.code.size());
    opts.classifier = f->options();
    opts.class_names = names;
    auto m = ModelBundle::create(opts, a.cfg.seed);
    m.f = f;
    const auto res = fit(m, train, val, a.cfg, [&out](const LogRow& row, double score) {
        out << "epoch " << row.epoch << " L_D " << row.loss.l_d << " L_G " << row.loss.l_g << " L_path "
            << row.loss.l_path << " L_cons " << row.loss.l_cons << " L_bg " << row.loss.l_bg << " val " << score
            << "\n";
    });
    res.best.save(a.out);
    if (!a.log.empty()) write_loss_csv(res.log, a.log);
    out << "best epoch " << res.best_epoch << " (score " << res.best_score << "), saved to " << a.out << "\n";
    return kExitOk;
}

struct GenerateArgs {
    std::string model;
    std::string data;
    std::string base;
    std::vector<std::string> ops;
    std::string imaging;
    std::uint64_t seed = 0;
    std::string out;
};

int run_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
    const ServiceState state(load_records(a.data), load_model(a.model));
    json req{{"base_subject", a.base}, {"seed", a.seed}, {"ops", json::array()}};
    for (const auto& op : a.ops) req["ops"].push_back(parse_op(op));
    if (!a.imaging.empty()) req["imaging_source"] = a.imaging;
    auto resp = handle_generate(state, req);
    if (resp.status != 200) return report_error(resp, err);
    fs::create_directories(a.out);
    dump_pngs(resp.body, a.out, "");
    write_text(fs::path(a.out) / "result.json", resp.body.dump(2) + "\n");
    const auto& p = resp.body["predicted"];
    out << "predicted " << p["class_name"].get<std::string>() << " (confidence " << p["confidence"].get<double>()
        << "), target " << resp.body["target"]["class_name"].get<std::string>() << "; wrote " << a.out << "\n";
    return kExitOk;
}

struct TraverseArgs {
    std::string model;
    std::string data;
    std::string subject;
    int channel = 0;
    std::string op = "dilate";
    std::vector<int> steps{3, 6, 9};
    std::uint64_t seed = 0;
    std::string out;
};

int run_traverse(const TraverseArgs& a, std::ostream& out, std::ostream& err) {
    const ServiceState state(load_records(a.data), load_model(a.model));
    json req{{"subject", a.subject}, {"channel", a.channel}, {"op", a.op}, {"steps", a.steps}, {"seed", a.seed}};
    auto resp = handle_traverse(state, req);
    if (resp.status != 200 && resp.status != 422) return report_error(resp, err);
    fs::create_directories(a.out);
    for (auto& entry : resp.body["steps"]) {
        const auto prefix = "step" + std::to_string(entry["step"].get<int>()) + "_";
        dump_pngs(entry, a.out, prefix);
        out << "step " << entry["step"] << ": factor area " << entry["factor_area"] << ", predicted "
            << entry["predicted"]["class_name"].get<std::string>() << " (" << entry["predicted"]["confidence"] << ")\n";
    }
    if (resp.body.contains("warning")) err << "warning: " << resp.body["warning"].get<std::string>() << "\n";
    write_text(fs::path(a.out) / "result.json", resp.body.dump(2) + "\n");
    return kExitOk;
}

struct AugmentArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string target_class;
    int target_vendor = -1;
    int count = 0; // 0: enough to match the largest group in the train split
    int pool_multiplier = 4;
    std::uint64_t seed = 0;
};

int balance_count(const Dataset& ds, const AugmentArgs& a) {
    if (!a.target_class.empty()) {
        const auto counts = ds.manifest.class_counts(ds.manifest.train);
        int largest = 0;
        for (const auto& [name, c] : counts) largest = std::max(largest, c);
        const auto it = counts.find(a.target_class);
        return largest - (it == counts.end() ? 0 : it->second);
    }
    const auto counts = ds.manifest.vendor_counts(ds.manifest.train);
    int largest = 0;
    for (const auto& [v, c] : counts) largest = std::max(largest, c);
    const auto it = counts.find(a.target_vendor);
    return largest - (it == counts.end() ? 0 : it->second);
}

int run_augment(const AugmentArgs& a, std::ostream& out) {
    const auto ds = load_dataset(a.data);
    auto m = load_model(a.model);
    AugmentationRequest req;
    if (!a.target_class.empty()) req.target_class = a.target_class;
    else req.target_vendor = a.target_vendor;
    req.count = a.count > 0 ? a.count : balance_count(ds, a);
    if (req.count < 1) throw InvalidArgument("the target group is already the largest; pass --count");
    req.pool_multiplier = a.pool_multiplier;
    req.seed = a.seed;
    const auto pool = ds.train();
    const auto candidates = synthesize_candidates(m, pool, req);
    const auto kept = filter_by_confidence(candidates, req);
    auto records = ds.records;
    for (const auto& s : kept) records.push_back(to_record(s, m.options.classifier.num_classes));
    save_dataset(a.out, records, augment_dataset(ds.manifest, kept));
    out << "kept " << kept.size() << " of " << candidates.size() << " candidates; wrote " << a.out << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string data;
    std::string experiment = "eval";
    std::string classifier; // optional embedder for the proxy FID
    std::string out;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int cls_epochs = 100;
    int seg_epochs = 20;
    bool skip_segmentation = false;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
    const auto ds = load_dataset(a.data);
    const auto train = ds.train(), val = ds.val(), test = ds.test();
    const auto names = dataset_class_names(ds.records);
    std::vector<EvalRow> rows;

    PosthocClassifierConfig pc;
    pc.seeds = a.seeds;
    pc.options.image_size = train.front().rows;
    pc.options.num_classes = train.front().num_classes;
    pc.train.epochs = a.cls_epochs;
    const auto ce = eval_posthoc_classification(train, val, test, pc);
    for (std::size_t i = 0; i < a.seeds.size(); ++i) {
        rows.push_back({a.experiment, a.seeds[i], "accuracy", ce.accuracy.values[i]});
        for (std::size_t c = 0; c < names.size(); ++c)
            rows.push_back({a.experiment, a.seeds[i], "recall_" + names[c], ce.per_class[i][c]});
    }
    if (!a.skip_segmentation) {
        PosthocSegmenterConfig sc;
        sc.seeds = a.seeds;
        sc.epochs = a.seg_epochs;
        const auto se = eval_posthoc_segmentation(train, test, sc);
        for (std::size_t i = 0; i < a.seeds.size(); ++i) rows.push_back({a.experiment, a.seeds[i], "dice", se.values[i]});
    }
    if (!a.classifier.empty()) {
        std::vector<SubjectRecord> real, synth;
        for (const auto& r : train) (r.synthetic ? synth : real).push_back(r);
        if (synth.size() >= 2 && real.size() >= 2) {
            auto [f, fnames] = load_classifier(a.classifier);
            rows.push_back({a.experiment, 0, "proxy_fid", proxy_fid(f, stack_images(real), stack_images(synth))});
        }
    }
    const auto csv = eval_csv(rows);
    if (a.out.empty()) out << csv;
    else write_text(a.out, csv);
    return kExitOk;
}

struct ServeArgs {
    std::string data;
    std::string model;
    ServerOptions server;
    std::uint64_t seed = 0;
};

HttpService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

int run_serve(const ServeArgs& a, std::ostream& out) {
    std::optional<std::vector<SubjectRecord>> records;
    std::optional<ModelBundle> model;
    if (!a.data.empty()) records = load_records(a.data);
    if (!a.model.empty()) model = load_model(a.model);
    auto state = std::make_shared<const ServiceState>(std::move(records), std::move(model));
    HttpService svc(state, a.server);
    const int port = svc.start();
    out << "listening on http://" << a.server.host << ":" << port << std::endl;
    g_service = &svc;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    svc.run();
    g_service = nullptr;
    return kExitOk;
}

} // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Anatomy-factor data augmentation pipeline on cardiac phantoms", "daa_cli"};
    app.set_config("--config", "", "Read options from an INI/TOML file; [subcommand] sections hold subcommand keys");
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Torch intra-op threads")->check(CLI::PositiveNumber);

    PhantomArgs pa;
    auto* phantom = app.add_subcommand("phantom", "Generate a phantom dataset with splits");
    phantom->add_option("--out", pa.out, "Output directory")->required();
    phantom->add_option("--n", pa.n, "Number of subjects")->check(CLI::NonNegativeNumber);
    phantom->add_option("--size", pa.size, "Frame edge in pixels");
    phantom->add_option("--channels", pa.channels, "Anatomy channels K");
    phantom->add_option("--seed", pa.seed, "Generation and split seed");
    phantom->add_option("--imbalance-class", pa.imbalance_class, "Class to make scarce in the train split")
        ->check(CLI::IsMember(class_names(PhantomSpec::defaults())));
    phantom->add_option("--imbalance-vendor", pa.imbalance_vendor, "Vendor index to make scarce")
        ->excludes("--imbalance-class");
    phantom->add_option("--imbalance-fraction", pa.imbalance_fraction, "Share of the scarce group in train")
        ->check(CLI::Range(0.0, 1.0));
    phantom->add_option("--train-fraction", pa.train_fraction, "Train share")->check(CLI::Range(0.0, 1.0));
    phantom->add_option("--val-fraction", pa.val_fraction, "Validation share")->check(CLI::Range(0.0, 1.0));

    PretrainArgs pr;
    auto* pretrain = app.add_subcommand("pretrain-f", "Pretrain the pathology classifier F");
    pretrain->add_option("--data", pr.data, "Dataset directory")->required();
    pretrain->add_option("--out", pr.out, "Classifier checkpoint")->required();
    pretrain->add_option("--epochs", pr.cfg.epochs)->check(CLI::NonNegativeNumber);
    pretrain->add_option("--batch", pr.cfg.batch_size)->check(CLI::PositiveNumber);
    pretrain->add_option("--lr", pr.cfg.lr)->check(CLI::PositiveNumber);
    pretrain->add_option("--patience", pr.cfg.patience, "Early-stopping patience (0 disables)");
    pretrain->add_option("--balanced", pr.cfg.balanced, "Class-balanced batches");
    pretrain->add_option("--augment", pr.cfg.augment, "Traditional augmentation");
    pretrain->add_option("--seed", pr.cfg.seed);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train the refiner, generator and discriminator");
    train->add_option("--data", ta.data, "Dataset directory")->required();
    train->add_option("--classifier", ta.classifier, "Pretrained classifier checkpoint")->required();
    train->add_option("--out", ta.out, "Model checkpoint")->required();
    train->add_option("--log", ta.log, "Loss CSV");
    train->add_option("--hidden", ta.hidden, "Hidden width of J and G")->check(CLI::PositiveNumber);
    train->add_option("--epochs", ta.cfg.epochs)->check(CLI::NonNegativeNumber);
    train->add_option("--batch", ta.cfg.batch_size)->check(CLI::PositiveNumber);
    train->add_option("--mixes-per-epoch", ta.cfg.mixes_per_epoch)->check(CLI::PositiveNumber);
    train->add_option("--val-mixes", ta.cfg.val_mixes)->check(CLI::PositiveNumber);
    train->add_option("--lr-j", ta.cfg.lr_j)->check(CLI::PositiveNumber);
    train->add_option("--lr-g", ta.cfg.lr_g)->check(CLI::PositiveNumber);
    train->add_option("--lr-d", ta.cfg.lr_d)->check(CLI::PositiveNumber);
    train->add_option("--lambda1", ta.cfg.weights.lambda1)->check(CLI::NonNegativeNumber);
    train->add_flag("--freeze-generator", ta.cfg.freeze_generator, "Keep G fixed during adversarial training");
    train->add_option("--pretrain-epochs", ta.cfg.generator_pretrain_epochs, "G reconstruction epochs");
    train->add_option("--warmup-epochs", ta.cfg.refiner_warmup_epochs, "J identity warm-up epochs");
    train->add_option("--dilation-radius", ta.cfg.dilation_radius, "Blend-mask dilation (<0: scaled default)");
    train->add_option("--blur-sigma", ta.cfg.blur_sigma, "Blend-mask blur (<0: scaled default)");
    train->add_option("--seed", ta.cfg.seed);

    GenerateArgs ga;
    auto* generate = app.add_subcommand("generate", "Apply an anatomy plan and render the result");
    generate->add_option("--model", ga.model, "Model checkpoint")->required();
    generate->add_option("--data", ga.data, "Dataset directory")->required();
    generate->add_option("--base", ga.base, "Base subject id")->required();
    generate->add_option("--op", ga.ops, "kind:channel[:donor], repeatable");
    generate->add_option("--imaging", ga.imaging, "Subject whose imaging code is used (default: base)");
    generate->add_option("--seed", ga.seed);
    generate->add_option("--out", ga.out, "Output directory")->required();

    TraverseArgs tv;
    auto* traverse = app.add_subcommand("traverse", "Erode or dilate one factor step by step");
    traverse->add_option("--model", tv.model, "Model checkpoint")->required();
    traverse->add_option("--data", tv.data, "Dataset directory")->required();
    traverse->add_option("--subject", tv.subject, "Subject id")->required();
    traverse->add_option("--channel", tv.channel, "Anatomy channel")->required();
    traverse->add_option("--op", tv.op, "erode or dilate")->check(CLI::IsMember({"erode", "dilate"}));
    traverse->add_option("--steps", tv.steps, "Positive increasing steps")->delimiter(',');
    traverse->add_option("--seed", tv.seed);
    traverse->add_option("--out", tv.out, "Output directory")->required();

    AugmentArgs aa;
    auto* augment = app.add_subcommand("augment", "Synthesize, filter and append samples to the train split");
    augment->add_option("--model", aa.model, "Model checkpoint")->required();
    augment->add_option("--data", aa.data, "Dataset directory")->required();
    augment->add_option("--out", aa.out, "Output dataset directory")->required();
    auto* cls = augment->add_option("--class", aa.target_class, "Target pathology class");
    auto* ven = augment->add_option("--vendor", aa.target_vendor, "Target vendor index");
    cls->excludes(ven);
    augment->add_option("--count", aa.count, "Samples to keep (0: balance the train split)");
    augment->add_option("--pool-multiplier", aa.pool_multiplier, "Candidates per kept sample")
        ->check(CLI::PositiveNumber);
    augment->add_option("--seed", aa.seed);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Post-hoc classification and segmentation over seeds");
    eval->add_option("--data", ea.data, "Dataset directory")->required();
    eval->add_option("--experiment", ea.experiment, "Experiment name in the CSV");
    eval->add_option("--classifier", ea.classifier, "Embedder for the proxy FID of synthetic train records");
    eval->add_option("--out", ea.out, "CSV path (default: stdout)");
    eval->add_option("--seeds", ea.seeds, "Comma-separated seeds")->delimiter(',');
    eval->add_option("--seed", ea.seeds, "Alias of --seeds")->delimiter(',');
    eval->add_option("--cls-epochs", ea.cls_epochs)->check(CLI::PositiveNumber);
    eval->add_option("--seg-epochs", ea.seg_epochs)->check(CLI::PositiveNumber);
    eval->add_flag("--skip-segmentation", ea.skip_segmentation);

    ServeArgs sa;
    auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
    serve->add_option("--data", sa.data, "Dataset directory");
    serve->add_option("--model", sa.model, "Model checkpoint");
    serve->add_option("--host", sa.server.host);
    serve->add_option("--port", sa.server.port)->check(CLI::Range(0, 65535));
    serve->add_option("--workers", sa.server.workers)->check(CLI::PositiveNumber);
    serve->add_option("--max-queued", sa.server.max_queued)->check(CLI::PositiveNumber);
    serve->add_option("--seed", sa.seed, "Accepted for uniformity; requests carry their own seeds");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        err << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        torch::set_num_threads(threads);
        if (phantom->parsed()) return run_phantom(pa, out);
        if (pretrain->parsed()) return run_pretrain(pr, out);
        if (train->parsed()) return run_train(ta, out);
        if (generate->parsed()) return run_generate(ga, out, err);
        if (traverse->parsed()) return run_traverse(tv, out, err);
        if (augment->parsed()) {
            if (aa.target_class.empty() && aa.target_vendor < 0) {
                err << "augment needs --class or --vendor\n\n" << augment->help();
                return kExitUsage;
            }
            return run_augment(aa, out);
        }
        if (eval->parsed()) return run_eval(ea, out);
        if (serve->parsed()) return run_serve(sa, out);
    } catch (const CLI::ValidationError& e) {
        err << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_dispatch(args, std::cout, std::cerr);
}

} // namespace daa
