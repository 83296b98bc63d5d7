#include "daa/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "daa/traditional_augment.hpp"

namespace daa {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------- bundle

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    for (const auto& t : split_csv(s)) out.push_back(std::stoi(t));
    return out;
}

const std::string& meta_at(const Checkpoint& ck, const std::string& key) {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw FormatError("checkpoint lacks meta key '" + key + "'", 0);
    return it->second;
}

void put_classifier_meta(Checkpoint& ck, const ClassifierOptions& o, const std::vector<std::string>& names) {
    ck.meta["classifier.image_size"] = std::to_string(o.image_size);
    ck.meta["classifier.num_classes"] = std::to_string(o.num_classes);
    ck.meta["classifier.widths"] = join(o.widths);
    ck.meta["classifier.pool_after"] = join(o.pool_after);
    ck.meta["classifier.fc1"] = std::to_string(o.fc1);
    ck.meta["classifier.fc2"] = std::to_string(o.fc2);
    ck.meta["classes"] = join(names);
}

ClassifierOptions get_classifier_meta(const Checkpoint& ck) {
    ClassifierOptions o;
    o.image_size = std::stoi(meta_at(ck, "classifier.image_size"));
    o.num_classes = std::stoi(meta_at(ck, "classifier.num_classes"));
    o.widths = split_ints(meta_at(ck, "classifier.widths"));
    o.pool_after = split_ints(meta_at(ck, "classifier.pool_after"));
    o.fc1 = std::stoi(meta_at(ck, "classifier.fc1"));
    o.fc2 = std::stoi(meta_at(ck, "classifier.fc2"));
    return o;
}

void set_requires_grad(torch::nn::Module& m, bool on) {
    for (auto& p : m.parameters()) p.set_requires_grad(on);
}

} // namespace

ModelBundle ModelBundle::create(const ModelOptions& opts, std::uint64_t seed) {
    ModelBundle b;
    b.options = opts;
    b.j = Refiner(opts.refiner);
    b.g = Generator(opts.generator);
    b.d = Discriminator(opts.discriminator);
    b.f = Classifier(opts.classifier);
    init_params(*b.j, mix_seed(seed, 1));
    init_params(*b.g, mix_seed(seed, 2));
    init_params(*b.d, mix_seed(seed, 3));
    init_params(*b.f, mix_seed(seed, 4));
    return b;
}

Checkpoint ModelBundle::to_checkpoint() const {
    Checkpoint ck;
    const auto& o = options;
    ck.meta["refiner.channels"] = std::to_string(o.refiner.channels);
    ck.meta["refiner.hidden"] = std::to_string(o.refiner.hidden);
    ck.meta["refiner.tau"] = fmt_double(o.refiner.tau);
    ck.meta["refiner.gain_init"] = fmt_double(o.refiner.gain_init);
    ck.meta["generator.channels"] = std::to_string(o.generator.channels);
    ck.meta["generator.hidden"] = std::to_string(o.generator.hidden);
    ck.meta["generator.code_dim"] = std::to_string(o.generator.code_dim);
    ck.meta["generator.mapper_hidden"] = std::to_string(o.generator.mapper_hidden);
    ck.meta["discriminator.widths"] = join(o.discriminator.widths);
    ck.meta["discriminator.slope"] = fmt_double(o.discriminator.slope);
    put_classifier_meta(ck, o.classifier, o.class_names);
    append_module(ck, *j, "J.");
    append_module(ck, *g, "G.");
    append_module(ck, *d, "D.");
    append_module(ck, *f, "F.");
    return ck;
}

ModelBundle ModelBundle::from_checkpoint(const Checkpoint& ck) {
    ModelOptions o;
    try {
        o.refiner.channels = std::stoi(meta_at(ck, "refiner.channels"));
        o.refiner.hidden = std::stoi(meta_at(ck, "refiner.hidden"));
        o.refiner.tau = std::stod(meta_at(ck, "refiner.tau"));
        o.refiner.gain_init = std::stod(meta_at(ck, "refiner.gain_init"));
        o.generator.channels = std::stoi(meta_at(ck, "generator.channels"));
        o.generator.hidden = std::stoi(meta_at(ck, "generator.hidden"));
        o.generator.code_dim = std::stoi(meta_at(ck, "generator.code_dim"));
        o.generator.mapper_hidden = std::stoi(meta_at(ck, "generator.mapper_hidden"));
        o.discriminator.widths = split_ints(meta_at(ck, "discriminator.widths"));
        o.discriminator.slope = std::stod(meta_at(ck, "discriminator.slope"));
        o.classifier = get_classifier_meta(ck);
        o.class_names = split_csv(meta_at(ck, "classes"));
    } catch (const std::invalid_argument&) {
        throw FormatError("malformed checkpoint metadata", 0);
    }
    ModelBundle b;
    b.options = o;
    b.j = Refiner(o.refiner);
    b.g = Generator(o.generator);
    b.d = Discriminator(o.discriminator);
    b.f = Classifier(o.classifier);
    restore_module(ck, *b.j, "J.");
    restore_module(ck, *b.g, "G.");
    restore_module(ck, *b.d, "D.");
    restore_module(ck, *b.f, "F.");
    b.f->eval();
    return b;
}

ModelBundle ModelBundle::clone() const { return from_checkpoint(to_checkpoint()); }

void ModelBundle::save(const std::filesystem::path& path) const { save_checkpoint(to_checkpoint(), path); }

ModelBundle ModelBundle::load(const std::filesystem::path& path) { return from_checkpoint(load_checkpoint(path)); }

void save_classifier(const Classifier& f, const std::vector<std::string>& class_names, const std::filesystem::path& path) {
    Checkpoint ck;
    put_classifier_meta(ck, f->options(), class_names);
    append_module(ck, *f, "F.");
    save_checkpoint(ck, path);
}

std::pair<Classifier, std::vector<std::string>> load_classifier(const std::filesystem::path& path) {
    const auto ck = load_checkpoint(path);
    Classifier f(get_classifier_meta(ck));
    restore_module(ck, *f, "F.");
    f->eval();
    return {f, split_csv(meta_at(ck, "classes"))};
}

// ---------------------------------------------------------------- mixes

std::vector<std::vector<int>> MixPolicy::groups() const {
    std::set<std::vector<int>> uniq;
    for (const auto& [name, chans] : defining_channels) uniq.insert(chans);
    return {uniq.begin(), uniq.end()};
}

ArithmeticPlan swap_plan(const std::string& base, const std::string& donor, const std::vector<int>& channels) {
    ArithmeticPlan plan{base, {}};
    for (int k : channels) plan.ops.push_back({OpKind::swap, k, donor});
    return plan;
}

std::vector<PlannedMix> sample_mixes(const std::vector<SubjectRecord>& records, const MixPolicy& policy, int count,
                                     std::mt19937_64& rng) {
    std::vector<PlannedMix> out;
    if (count <= 0) return out;
    std::vector<int> normals;
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < static_cast<int>(records.size()); ++i) {
        by_class[records[static_cast<std::size_t>(i)].label.class_index].push_back(i);
        if (records[static_cast<std::size_t>(i)].label.is_normal()) normals.push_back(i);
    }
    const auto groups = policy.groups();
    if (groups.empty()) throw InvalidArgument("mix policy defines no channel groups");
    auto pick = [&](const std::vector<int>& v) {
        return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    };
    const int max_attempts = 50 * count + 100;
    for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < count; ++attempt) {
        const int donor = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, records.size() - 1)(rng));
        const auto& dr = records[static_cast<std::size_t>(donor)];
        std::vector<int> bases;
        std::vector<int> channels;
        if (dr.label.is_normal()) {
            bases = normals;
            channels = groups[std::uniform_int_distribution<std::size_t>(0, groups.size() - 1)(rng)];
        } else {
            bases = normals;
            const auto& same = by_class[dr.label.class_index];
            bases.insert(bases.end(), same.begin(), same.end());
            auto it = policy.defining_channels.find(dr.label.class_name);
            channels = it != policy.defining_channels.end()
                           ? it->second
                           : groups[std::uniform_int_distribution<std::size_t>(0, groups.size() - 1)(rng)];
        }
        bases.erase(std::remove(bases.begin(), bases.end(), donor), bases.end());
        if (bases.empty()) continue;
        const int base = pick(bases);
        const auto& br = records[static_cast<std::size_t>(base)];
        auto plan = swap_plan(br.subject_id, dr.subject_id, channels);
        SubjectStore store{{br.subject_id, br.anatomy}, {dr.subject_id, dr.anatomy}};
        if (!validate_plan(plan, store).empty()) continue;
        out.push_back({base, donor, plan, dr.label.is_normal() ? br.label : dr.label});
    }
    if (static_cast<int>(out.size()) < count) throw NoCompatiblePairs("could not sample enough compatible base/donor pairs");
    return out;
}

TrainingBatch make_batch(const std::vector<SubjectRecord>& records, const std::vector<PlannedMix>& mixes,
                         int dilation_radius, double blur_sigma) {
    if (mixes.empty()) throw InvalidArgument("empty batch");
    std::vector<torch::Tensor> chat, phi, bimg, bcode, dimg, dheart, mheart, bgm, target;
    TrainingBatch b;
    for (const auto& m : mixes) {
        const auto& base = records.at(static_cast<std::size_t>(m.base));
        const auto& donor = records.at(static_cast<std::size_t>(m.donor));
        const int r = dilation_radius >= 0 ? dilation_radius : default_dilation_radius(base.rows);
        const double s = blur_sigma >= 0.0 ? blur_sigma : default_blur_sigma(base.rows);
        SubjectStore store{{donor.subject_id, donor.anatomy}};
        auto [mixed, rec] = apply_plan(base.anatomy, store, m.plan);
        const auto mh = heart_mask(mixed);
        chat.push_back(anatomy_to_tensor(mixed));
        phi.push_back(phi_to_tensor(build_blend_mask(rec, r, s)));
        bimg.push_back(image_to_tensor(base.image, base.rows, base.cols));
        bcode.push_back(code_to_tensor(base.imaging));
        dimg.push_back(image_to_tensor(donor.image, donor.rows, donor.cols));
        dheart.push_back(map_to_tensor(heart_mask(donor.anatomy)));
        mheart.push_back(map_to_tensor(mh));
        bgm.push_back(map_to_tensor(mh | heart_mask(base.anatomy)));
        target.push_back(torch::tensor(static_cast<std::int64_t>(m.target.class_index)));
        b.plans.push_back(m.plan);
    }
    b.chat = torch::stack(chat);
    b.phi = torch::stack(phi);
    b.base_image = torch::stack(bimg);
    b.base_code = torch::stack(bcode);
    b.donor_image = torch::stack(dimg);
    b.donor_heart = torch::stack(dheart);
    b.mix_heart = torch::stack(mheart);
    b.bg_mask = torch::stack(bgm);
    b.target = torch::stack(target);
    return b;
}

// ---------------------------------------------------------------- step

Optimizers Optimizers::create(ModelBundle& m, const TrainConfig& cfg) {
    if (cfg.lr_j < 0 || cfg.lr_g < 0 || cfg.lr_d < 0) throw InvalidArgument("learning rates must be non-negative");
    Optimizers o;
    auto adam = [&](double lr) { return torch::optim::AdamOptions(lr).betas({cfg.beta1, cfg.beta2}); };
    o.d = std::make_unique<torch::optim::Adam>(m.d->parameters(), adam(cfg.lr_d));
    std::vector<torch::optim::OptimizerParamGroup> groups;
    groups.emplace_back(m.j->parameters(), std::make_unique<torch::optim::AdamOptions>(adam(cfg.lr_j)));
    if (!cfg.freeze_generator)
        groups.emplace_back(m.g->parameters(), std::make_unique<torch::optim::AdamOptions>(adam(cfg.lr_g)));
    o.jg = std::make_unique<torch::optim::Adam>(std::move(groups), adam(cfg.lr_j));
    return o;
}

namespace {

void require_finite(const char* what, const torch::Tensor& v, const StepReport& so_far) {
    if (std::isfinite(v.item<double>())) return;
    std::ostringstream os;
    os << "non-finite " << what << " (L_D=" << so_far.l_d << " L_G=" << so_far.l_g << " L_path=" << so_far.l_path
       << " L_cons=" << so_far.l_cons << " L_bg=" << so_far.l_bg << ")";
    throw NonFiniteLoss(os.str());
}

} // namespace

StepReport train_step(ModelBundle& m, Optimizers& opt, const TrainingBatch& batch, const TrainConfig& cfg,
                      std::uint64_t seed) {
    m.j->train();
    m.g->train();
    m.d->train();
    m.f->eval();
    set_requires_grad(*m.f, false);
    set_requires_grad(*m.g, !cfg.freeze_generator);

    StepReport rep;
    auto gen = make_generator(seed);
    auto ct = refine(*m.j, batch.chat, batch.phi, gen, false);
    auto fake = m.g->forward(ct, batch.base_code);

    opt.d->zero_grad();
    auto d_real = discriminate(*m.d, batch.donor_image, batch.donor_heart);
    auto d_fake = discriminate(*m.d, fake.detach(), batch.mix_heart);
    auto l_d = loss_adv_d(d_real, d_fake);
    rep.l_d = l_d.item<double>();
    require_finite("L_D", l_d, rep);
    l_d.backward();
    opt.d->step();

    opt.jg->zero_grad();
    LossParts parts;
    parts.adv = loss_adv_g(discriminate(*m.d, fake, batch.mix_heart));
    parts.path = loss_path(classify(*m.f, fake), batch.target);
    parts.cons = loss_cons(batch.chat, ct, batch.phi);
    parts.bg = loss_bg(batch.base_image, fake, batch.bg_mask);
    auto total = total_loss(parts, cfg.weights);
    rep.l_g = parts.adv.item<double>();
    rep.l_path = parts.path.item<double>();
    rep.l_cons = parts.cons.item<double>();
    rep.l_bg = parts.bg.item<double>();
    rep.l_total = total.item<double>();
    require_finite("L_total", total, rep);
    total.backward();
    opt.jg->step();
    // D gradients from the generator pass are discarded at the next D step.
    return rep;
}

// ---------------------------------------------------------------- log

std::string loss_csv(const std::vector<LogRow>& log) {
    std::ostringstream os;
    os << "epoch,step,L_D,L_G,L_path,L_cons,L_bg,L_total\n";
    char buf[256];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.step, r.loss.l_d, r.loss.l_g,
                      r.loss.l_path, r.loss.l_cons, r.loss.l_bg, r.loss.l_total);
        os << buf;
    }
    return os.str();
}

void write_loss_csv(const std::vector<LogRow>& log, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("io", "cannot write " + path.string());
    os << loss_csv(log);
}

// ---------------------------------------------------------------- fit

double validation_score(ModelBundle& m, const std::vector<SubjectRecord>& records, const std::vector<PlannedMix>& mixes,
                        const TrainConfig& cfg) {
    if (mixes.empty()) return 0.0;
    torch::NoGradGuard ng;
    m.j->eval();
    m.g->eval();
    m.d->eval();
    m.f->eval();
    auto gen = make_generator(mix_seed(cfg.seed, 0x7a11));
    double conf = 0.0, dr = 0.0, df = 0.0;
    const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    for (std::size_t i = 0; i < mixes.size(); i += bs) {
        std::vector<PlannedMix> part(mixes.begin() + static_cast<std::ptrdiff_t>(i),
                                     mixes.begin() + static_cast<std::ptrdiff_t>(std::min(mixes.size(), i + bs)));
        const auto b = make_batch(records, part, cfg.dilation_radius, cfg.blur_sigma);
        auto ct = refine(*m.j, b.chat, b.phi, gen, true);
        auto fake = m.g->forward(ct, b.base_code);
        conf += classify(*m.f, fake).gather(1, b.target.unsqueeze(1)).sum().item<double>();
        dr += discriminate(*m.d, b.donor_image, b.donor_heart).sum().item<double>();
        df += discriminate(*m.d, fake, b.mix_heart).sum().item<double>();
    }
    const double n = static_cast<double>(mixes.size());
    return conf / n - 0.5 * std::abs(dr / n - df / n);
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

torch::Tensor index_rows(const torch::Tensor& t, const std::vector<std::size_t>& idx, std::size_t from, std::size_t to) {
    std::vector<std::int64_t> sel(idx.begin() + static_cast<std::ptrdiff_t>(from), idx.begin() + static_cast<std::ptrdiff_t>(to));
    return t.index_select(0, torch::tensor(sel, torch::kInt64));
}

} // namespace

void pretrain_generator(ModelBundle& m, const std::vector<SubjectRecord>& train, const TrainConfig& cfg) {
    if (train.empty() || cfg.generator_pretrain_epochs <= 0) return;
    std::vector<torch::Tensor> cs, zs;
    for (const auto& r : train) {
        cs.push_back(anatomy_to_tensor(r.anatomy));
        zs.push_back(code_to_tensor(r.imaging));
    }
    const auto c = torch::stack(cs), z = torch::stack(zs), img = stack_images(train);
    set_requires_grad(*m.g, true);
    m.g->train();
    torch::optim::Adam opt(m.g->parameters(), torch::optim::AdamOptions(cfg.generator_pretrain_lr).betas({0.9, 0.999}));
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x6e6));
    const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    for (int e = 0; e < cfg.generator_pretrain_epochs; ++e) {
        const auto idx = permutation(train.size(), rng);
        for (std::size_t i = 0; i < idx.size(); i += bs) {
            const std::size_t end = std::min(idx.size(), i + bs);
            opt.zero_grad();
            auto out = m.g->forward(index_rows(c, idx, i, end), index_rows(z, idx, i, end));
            auto loss = (out - index_rows(img, idx, i, end)).abs().mean();
            loss.backward();
            opt.step();
        }
    }
}

void warmup_refiner(ModelBundle& m, const std::vector<SubjectRecord>& train, const TrainConfig& cfg) {
    if (train.empty() || cfg.refiner_warmup_epochs <= 0) return;
    std::vector<torch::Tensor> cs;
    for (const auto& r : train) cs.push_back(anatomy_to_tensor(r.anatomy));
    const auto c = torch::stack(cs);
    m.j->train();
    torch::optim::Adam opt(m.j->parameters(), torch::optim::AdamOptions(cfg.refiner_warmup_lr).betas({0.9, 0.999}));
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x3e1));
    auto gen = make_generator(mix_seed(cfg.seed, 0x3e2));
    const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    for (int e = 0; e < cfg.refiner_warmup_epochs; ++e) {
        const auto idx = permutation(train.size(), rng);
        for (std::size_t i = 0; i < idx.size(); i += bs) {
            const std::size_t end = std::min(idx.size(), i + bs);
            auto chat = index_rows(c, idx, i, end);
            auto phi = torch::zeros({chat.size(0), 1, chat.size(2), chat.size(3)});
            opt.zero_grad();
            // Cross-entropy rather than L1: L1 on a saturated softmax has vanishing gradients.
            auto logits = m.j->logits(chat, sample_noise_patches(phi, *m.j, gen)) / m.j->options().tau;
            auto loss = torch::nn::functional::cross_entropy(logits, chat.argmax(1));
            loss.backward();
            opt.step();
        }
    }
}

FitResult fit(const ModelBundle& m, const std::vector<SubjectRecord>& train, const std::vector<SubjectRecord>& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch) {
    FitResult res;
    res.best = m.clone();
    if (cfg.epochs <= 0) return res;
    if (cfg.batch_size < 1 || cfg.mixes_per_epoch < 1) throw InvalidArgument("batch size and mixes per epoch must be positive");
    if (train.empty()) throw InsufficientSubjects("no training subjects");

    ModelBundle work = m.clone();
    work.f->eval();
    set_requires_grad(*work.f, false);
    pretrain_generator(work, train, cfg);
    warmup_refiner(work, train, cfg);
    auto opt = Optimizers::create(work, cfg);

    const auto& val_records = val.empty() ? train : val;
    std::mt19937_64 val_rng(mix_seed(cfg.seed, 0x5a1));
    const auto val_mixes = sample_mixes(val_records, cfg.policy, cfg.val_mixes, val_rng);

    std::mt19937_64 rng(mix_seed(cfg.seed, 0x71a));
    int step = 0;
    bool have_best = false;
    for (int e = 1; e <= cfg.epochs; ++e) {
        const auto mixes = sample_mixes(train, cfg.policy, cfg.mixes_per_epoch, rng);
        StepReport sum;
        int steps = 0;
        for (std::size_t i = 0; i < mixes.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<PlannedMix> part(mixes.begin() + static_cast<std::ptrdiff_t>(i),
                                         mixes.begin() + static_cast<std::ptrdiff_t>(std::min(mixes.size(), i + static_cast<std::size_t>(cfg.batch_size))));
            const auto batch = make_batch(train, part, cfg.dilation_radius, cfg.blur_sigma);
            const auto r = train_step(work, opt, batch, cfg, mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
            sum.l_d += r.l_d;
            sum.l_g += r.l_g;
            sum.l_path += r.l_path;
            sum.l_cons += r.l_cons;
            sum.l_bg += r.l_bg;
            sum.l_total += r.l_total;
            ++steps;
            ++step;
        }
        const double n = static_cast<double>(steps);
        LogRow row{e, step, {sum.l_d / n, sum.l_g / n, sum.l_path / n, sum.l_cons / n, sum.l_bg / n, sum.l_total / n}};
        res.log.push_back(row);
        const double score = validation_score(work, val_records, val_mixes, cfg);
        if (!have_best || score > res.best_score) {
            res.best = work.clone();
            res.best_score = score;
            res.best_epoch = e;
            have_best = true;
        }
        if (on_epoch) on_epoch(row, score);
    }
    return res;
}

// ---------------------------------------------------------------- classifier

torch::Tensor stack_images(const std::vector<SubjectRecord>& records) {
    std::vector<torch::Tensor> v;
    v.reserve(records.size());
    for (const auto& r : records) v.push_back(image_to_tensor(r.image, r.rows, r.cols));
    return torch::stack(v);
}

torch::Tensor stack_labels(const std::vector<SubjectRecord>& records) {
    std::vector<std::int64_t> v;
    for (const auto& r : records) v.push_back(r.label.class_index);
    return torch::tensor(v, torch::kInt64);
}

std::vector<int> predict(Classifier& f, const std::vector<SubjectRecord>& records) {
    std::vector<int> out;
    if (records.empty()) return out;
    torch::NoGradGuard ng;
    f->eval();
    const auto x = stack_images(records);
    for (long i = 0; i < x.size(0); i += 64) {
        auto pred = f->forward(x.slice(0, i, std::min<long>(x.size(0), i + 64))).argmax(1);
        for (long k = 0; k < pred.size(0); ++k) out.push_back(static_cast<int>(pred[k].item<std::int64_t>()));
    }
    return out;
}

double mean_cross_entropy(Classifier& f, const std::vector<SubjectRecord>& records) {
    if (records.empty()) return 0.0;
    torch::NoGradGuard ng;
    f->eval();
    return torch::nn::functional::cross_entropy(f->forward(stack_images(records)), stack_labels(records)).item<double>();
}

double accuracy(Classifier& f, const std::vector<SubjectRecord>& records) {
    if (records.empty()) return 0.0;
    const auto pred = predict(f, records);
    int ok = 0;
    for (std::size_t i = 0; i < records.size(); ++i) ok += pred[i] == records[i].label.class_index;
    return static_cast<double>(ok) / static_cast<double>(records.size());
}

ClassifierTrainConfig pretrain_classifier_defaults() {
    ClassifierTrainConfig c;
    c.epochs = 80;
    c.patience = 20;
    c.balanced = true;
    c.augment = true;
    return c;
}

ClassifierTrainResult train_classifier(Classifier& f, const std::vector<SubjectRecord>& train,
                                       const std::vector<SubjectRecord>& val, const ClassifierTrainConfig& cfg) {
    ClassifierTrainResult res;
    if (train.empty()) throw InsufficientSubjects("no training subjects for the classifier");
    const auto x = stack_images(train);
    const auto y = stack_labels(train);
    set_requires_grad(*f, true);
    torch::optim::Adam opt(f->parameters(), torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}));
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xc1a));
    auto gen = make_generator(mix_seed(cfg.seed, 0xc1b));

    // Class-balanced draw: every class gets the same expected number of samples.
    std::vector<double> weight(train.size(), 1.0);
    if (cfg.balanced) {
        std::map<int, int> count;
        for (const auto& r : train) ++count[r.label.class_index];
        for (std::size_t i = 0; i < train.size(); ++i) weight[i] = 1.0 / count[train[i].label.class_index];
    }
    Checkpoint best;
    int since_best = 0;
    const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    for (int e = 0; e < cfg.epochs; ++e) {
        std::vector<std::size_t> idx;
        if (cfg.balanced) {
            std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
            for (std::size_t i = 0; i < train.size(); ++i) idx.push_back(pick(rng));
        } else {
            idx = permutation(train.size(), rng);
        }
        f->train();
        for (std::size_t i = 0; i < idx.size(); i += bs) {
            const std::size_t end = std::min(idx.size(), i + bs);
            auto xb = index_rows(x, idx, i, end);
            if (cfg.augment) xb = traditional_augment(xb, {}, gen).first;
            opt.zero_grad();
            auto loss = torch::nn::functional::cross_entropy(f->forward(xb), index_rows(y, idx, i, end));
            loss.backward();
            opt.step();
        }
        if (val.empty()) {
            res.best_epoch = e;
            continue;
        }
        const double acc = accuracy(f, val);
        const double loss = mean_cross_entropy(f, val);
        // Accuracy first; validation loss breaks ties.
        if (res.best_epoch < 0 || acc > res.best_val_accuracy ||
            (acc == res.best_val_accuracy && loss < res.best_val_loss)) {
            res.best_val_accuracy = acc;
            res.best_val_loss = loss;
            res.best_epoch = e;
            best = Checkpoint{};
            append_module(best, *f, "");
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }
    if (!val.empty() && res.best_epoch >= 0) restore_module(best, *f, "");
    f->eval();
    set_requires_grad(*f, false);
    return res;
}

} // namespace daa
