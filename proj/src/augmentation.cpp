#include "daa/augmentation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "daa/traditional_augment.hpp"

namespace daa {

std::string GeneratedSample::provenance() const {
    std::ostringstream os;
    os << "base=" << base_subject << ";plan=";
    for (std::size_t i = 0; i < plan.ops.size(); ++i) {
        const auto& op = plan.ops[i];
        os << (i ? "," : "") << to_string(op.kind) << ':' << op.channel;
        if (op.donor_subject) os << ':' << *op.donor_subject;
    }
    os << ";seed=" << seed;
    return os.str();
}

// ---------------------------------------------------------------- candidates

namespace {

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::vector<int> defining(const MixPolicy& policy, const PathologyLabel& label, std::mt19937_64& rng) {
    if (!label.is_normal()) {
        auto it = policy.defining_channels.find(label.class_name);
        if (it == policy.defining_channels.end())
            throw InvalidArgument("no defining channels configured for class '" + label.class_name + "'");
        return it->second;
    }
    const auto groups = policy.groups();
    if (groups.empty()) throw InvalidArgument("mix policy defines no channel groups");
    return pick(groups, rng);
}

} // namespace

std::vector<PlannedMix> plan_candidates(const std::vector<SubjectRecord>& pool, const AugmentationRequest& req) {
    if (req.count < 1) throw InvalidArgument("augmentation count must be at least 1");
    if (req.pool_multiplier < 1) throw InvalidArgument("pool multiplier must be at least 1");
    if (req.target_class.has_value() == req.target_vendor.has_value())
        throw InvalidArgument("request exactly one of target class or target vendor");
    const int n = req.count * req.pool_multiplier;
    std::mt19937_64 rng(mix_seed(req.seed, 0xa06));
    std::vector<PlannedMix> out;
    auto store_of = [&](int a, int b) {
        return SubjectStore{{pool[static_cast<std::size_t>(a)].subject_id, pool[static_cast<std::size_t>(a)].anatomy},
                            {pool[static_cast<std::size_t>(b)].subject_id, pool[static_cast<std::size_t>(b)].anatomy}};
    };

    if (req.target_class) {
        std::vector<int> donors, bases;
        for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
            const auto& l = pool[static_cast<std::size_t>(i)].label;
            if (l.class_name == *req.target_class) donors.push_back(i);
            if (l.is_normal()) bases.push_back(i);
        }
        if (donors.empty() || bases.empty() || (donors == bases && donors.size() < 2))
            throw NoCompatiblePairs("no donor/base pair available for class '" + *req.target_class + "'");
        for (int i = 0; i < n; ++i) {
            const int donor = pick(donors, rng);
            int base = pick(bases, rng);
            for (int t = 0; base == donor && t < 100; ++t) base = pick(bases, rng);
            if (base == donor) throw NoCompatiblePairs("no distinct base for donor");
            const auto& dr = pool[static_cast<std::size_t>(donor)];
            const auto& br = pool[static_cast<std::size_t>(base)];
            auto plan = swap_plan(br.subject_id, dr.subject_id, defining(req.policy, dr.label, rng));
            if (!validate_plan(plan, store_of(base, donor)).empty()) throw NoCompatiblePairs("candidate plan rejected");
            out.push_back({base, donor, plan, dr.label});
        }
        return out;
    }

    std::vector<int> bases;
    for (int i = 0; i < static_cast<int>(pool.size()); ++i)
        if (pool[static_cast<std::size_t>(i)].vendor == *req.target_vendor) bases.push_back(i);
    if (bases.empty() || pool.size() < 2) throw NoCompatiblePairs("no base subjects from the target vendor");
    for (int attempt = 0; attempt < 100 * n && static_cast<int>(out.size()) < n; ++attempt) {
        const int base = pick(bases, rng);
        const int donor = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng));
        if (donor == base) continue;
        const auto& br = pool[static_cast<std::size_t>(base)];
        const auto& dr = pool[static_cast<std::size_t>(donor)];
        if (!br.label.is_normal() && dr.label != br.label) continue;
        auto plan = swap_plan(br.subject_id, dr.subject_id, defining(req.policy, dr.label, rng));
        if (!validate_plan(plan, store_of(base, donor)).empty()) continue;
        out.push_back({base, donor, plan, dr.label.is_normal() ? br.label : dr.label});
    }
    if (static_cast<int>(out.size()) < n) throw NoCompatiblePairs("too few compatible pairs for the target vendor");
    return out;
}

Rendering render(ModelBundle& m, const AnatomyTensor& chat, const BlendMask& phi, const ImagingFactor& z,
                 std::uint64_t seed) {
    Rendering r;
    r.refined = refine(*m.j, chat, phi, seed, true);
    torch::NoGradGuard ng;
    r.image = m.g->forward(r.refined.values.unsqueeze(0), code_to_tensor(z).unsqueeze(0));
    r.probs = classify(*m.f, r.image).squeeze(0);
    r.predicted = static_cast<int>(r.probs.argmax().item<std::int64_t>());
    r.confidence = r.probs[r.predicted].item<double>();
    return r;
}

GeneratedSample synthesize(ModelBundle& m, const std::vector<SubjectRecord>& pool, const PlannedMix& mix,
                           std::uint64_t seed, const std::string& sample_id) {
    const auto& base = pool.at(static_cast<std::size_t>(mix.base));
    const auto& donor = pool.at(static_cast<std::size_t>(mix.donor));
    SubjectStore store{{donor.subject_id, donor.anatomy}, {base.subject_id, base.anatomy}};
    auto [chat, rec] = apply_plan(base.anatomy, store, mix.plan);
    const auto phi = build_blend_mask(rec, default_dilation_radius(base.rows), default_blur_sigma(base.rows));
    m.j->eval();
    m.g->eval();
    m.f->eval();
    const auto r = render(m, chat, phi, base.imaging, seed);

    GeneratedSample s;
    s.sample_id = sample_id;
    s.rows = base.rows;
    s.cols = base.cols;
    s.image = tensor_to_vector(r.image);
    s.refined = r.refined.values;
    s.roles = r.refined.roles;
    s.masks = extract_near_gt_masks(r.refined.values, r.refined.roles);
    s.target = mix.target;
    s.predicted = r.predicted;
    s.confidence = r.confidence;
    s.target_confidence = r.probs[mix.target.class_index].item<double>();
    s.base_subject = base.subject_id;
    s.plan = mix.plan;
    s.imaging = base.imaging;
    s.vendor = base.vendor;
    s.seed = seed;
    return s;
}

std::vector<GeneratedSample> synthesize_candidates(ModelBundle& m, const std::vector<SubjectRecord>& pool,
                                                   const AugmentationRequest& req) {
    const auto mixes = plan_candidates(pool, req);
    std::vector<GeneratedSample> out;
    out.reserve(mixes.size());
    char id[64];
    for (std::size_t i = 0; i < mixes.size(); ++i) {
        std::snprintf(id, sizeof id, "%s%05zu", req.id_prefix.c_str(), i);
        out.push_back(synthesize(m, pool, mixes[i], mix_seed(req.seed, i), id));
    }
    return out;
}

std::vector<GeneratedSample> filter_by_confidence(const std::vector<GeneratedSample>& samples,
                                                  const AugmentationRequest& req) {
    if (req.count < 1) throw InvalidArgument("augmentation count must be at least 1");
    std::vector<GeneratedSample> keep;
    for (const auto& s : samples)
        if (s.predicted == s.target.class_index) keep.push_back(s);
    if (static_cast<int>(keep.size()) < req.count)
        throw InsufficientCandidates("only " + std::to_string(keep.size()) + " of " + std::to_string(samples.size()) +
                                     " candidates match their target; " + std::to_string(req.count) + " requested");
    std::stable_sort(keep.begin(), keep.end(),
                     [](const GeneratedSample& a, const GeneratedSample& b) { return a.confidence > b.confidence; });
    keep.resize(static_cast<std::size_t>(req.count));
    return keep;
}

std::vector<BinaryMap> extract_near_gt_masks(const torch::Tensor& refined, const std::vector<ChannelRole>& roles) {
    if (refined.dim() != 3 || refined.size(0) != static_cast<long>(roles.size()))
        throw ShapeMismatch("C~ must be [K,H,W] with one role per channel");
    std::vector<long> heart;
    for (std::size_t k = 0; k < roles.size(); ++k)
        if (roles[k] == ChannelRole::heart) heart.push_back(static_cast<long>(k));
    const auto v = refined.detach().to(torch::kFloat32).contiguous();
    const int rows = static_cast<int>(v.size(1)), cols = static_cast<int>(v.size(2));
    const auto* p = v.data_ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    std::vector<BinaryMap> out(heart.size(), BinaryMap(rows, cols));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const std::size_t j = static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c);
            int best = -1;
            float best_v = 0.5f;
            for (std::size_t h = 0; h < heart.size(); ++h) {
                const float x = p[static_cast<std::size_t>(heart[h]) * plane + j];
                if (x > best_v) {
                    best_v = x;
                    best = static_cast<int>(h);
                }
            }
            if (best >= 0) out[static_cast<std::size_t>(best)].set(r, c, true);
        }
    return out;
}

SubjectRecord to_record(const GeneratedSample& s, int num_classes) {
    SubjectRecord r;
    r.subject_id = s.sample_id;
    r.rows = s.rows;
    r.cols = s.cols;
    r.image = s.image;
    r.masks = s.masks;
    r.anatomy = harden(RefinedAnatomy{s.refined, s.roles, s.sample_id}, s.target);
    r.imaging = s.imaging;
    r.label = s.target;
    r.num_classes = num_classes;
    r.vendor = s.vendor;
    r.synthetic = true;
    r.provenance = s.provenance();
    return r;
}

DatasetManifest augment_dataset(const DatasetManifest& base, const std::vector<GeneratedSample>& samples) {
    DatasetManifest out = base;
    std::set<std::string> ids, provs;
    for (const auto* split : {&base.train, &base.val, &base.test})
        for (const auto& e : *split) {
            ids.insert(e.subject_id);
            if (!e.provenance.empty()) provs.insert(e.provenance);
        }
    for (const auto& s : samples) {
        const auto prov = s.provenance();
        if (!ids.insert(s.sample_id).second) throw InvalidArgument("duplicate subject id '" + s.sample_id + "'");
        if (!provs.insert(prov).second) throw InvalidArgument("duplicate provenance '" + prov + "'");
        out.train.push_back({s.sample_id, s.target.class_index, s.target.class_name, s.vendor, true, prov});
    }
    return out;
}

// ---------------------------------------------------------------- evaluation

Summary summarize(std::vector<double> values) {
    Summary s;
    s.values = values;
    if (values.empty()) return s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stdev = std::sqrt(ss / (n - 1.0));
    }
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    s.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
    return s;
}

Summary ClassificationEval::class_accuracy(int class_index) const {
    std::vector<double> v;
    for (const auto& row : per_class) v.push_back(row.at(static_cast<std::size_t>(class_index)));
    return summarize(v);
}

ClassificationEval eval_posthoc_classification(const std::vector<SubjectRecord>& train,
                                               const std::vector<SubjectRecord>& val,
                                               const std::vector<SubjectRecord>& test,
                                               const PosthocClassifierConfig& cfg) {
    if (test.empty()) throw InsufficientSubjects("empty test split");
    ClassificationEval ev;
    std::vector<double> acc;
    const int omega = cfg.options.num_classes;
    for (auto seed : cfg.seeds) {
        Classifier f(cfg.options);
        init_params(*f, mix_seed(seed, 0xf00));
        auto tc = cfg.train;
        tc.seed = seed;
        train_classifier(f, train, val, tc);
        const auto pred = predict(f, test);
        std::vector<double> hit(static_cast<std::size_t>(omega), 0.0), tot(static_cast<std::size_t>(omega), 0.0);
        int ok = 0;
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto c = static_cast<std::size_t>(test[i].label.class_index);
            tot[c] += 1.0;
            if (pred[i] == test[i].label.class_index) {
                hit[c] += 1.0;
                ++ok;
            }
        }
        std::vector<double> recall(static_cast<std::size_t>(omega), 0.0);
        for (std::size_t c = 0; c < recall.size(); ++c) recall[c] = tot[c] > 0 ? hit[c] / tot[c] : 0.0;
        ev.per_class.push_back(recall);
        acc.push_back(static_cast<double>(ok) / static_cast<double>(test.size()));
    }
    ev.accuracy = summarize(acc);
    return ev;
}

torch::nn::Sequential SegmenterImpl::block(int in, int out, const std::string& name) {
    return register_module(name, torch::nn::Sequential(
                                     torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)),
                                     torch::nn::BatchNorm2d(out), torch::nn::ReLU(),
                                     torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)),
                                     torch::nn::BatchNorm2d(out), torch::nn::ReLU()));
}

SegmenterImpl::SegmenterImpl(SegmenterOptions o) {
    const int w = o.width;
    enc1 = block(1, w, "enc1");
    enc2 = block(w, 2 * w, "enc2");
    mid = block(2 * w, 4 * w, "mid");
    up2 = register_module("up2", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(4 * w, 2 * w, 2).stride(2)));
    dec2 = block(4 * w, 2 * w, "dec2");
    up1 = register_module("up1", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(2 * w, w, 2).stride(2)));
    dec1 = block(2 * w, w, "dec1");
    head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, o.num_classes, 1)));
}

torch::Tensor SegmenterImpl::forward(const torch::Tensor& x) {
    auto e1 = enc1->forward(x);
    auto e2 = enc2->forward(torch::max_pool2d(e1, 2));
    auto m = mid->forward(torch::max_pool2d(e2, 2));
    auto d2 = dec2->forward(torch::cat({up2->forward(m), e2}, 1));
    auto d1 = dec1->forward(torch::cat({up1->forward(d2), e1}, 1));
    return head->forward(d1);
}

double dice(const BinaryMap& a, const BinaryMap& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("dice of maps with different shapes");
    const double sa = static_cast<double>(a.count()), sb = static_cast<double>(b.count());
    if (sa + sb == 0.0) return 1.0;
    return 2.0 * static_cast<double>((a & b).count()) / (sa + sb);
}

Summary eval_posthoc_segmentation(const std::vector<SubjectRecord>& train, const std::vector<SubjectRecord>& test,
                                  const PosthocSegmenterConfig& cfg) {
    if (train.empty() || test.empty()) throw InsufficientSubjects("segmentation needs train and test subjects");
    const auto x = stack_images(train);
    std::vector<torch::Tensor> labs;
    for (const auto& r : train) labs.push_back(masks_to_labels(r.masks));
    const auto y = torch::stack(labs);
    const auto xt = stack_images(test);
    std::vector<double> per_seed;
    for (auto seed : cfg.seeds) {
        Segmenter net(cfg.options);
        init_params(*net, mix_seed(seed, 0x5e9));
        torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));
        std::mt19937_64 rng(mix_seed(seed, 0x5ea));
        auto gen = make_generator(mix_seed(seed, 0x5eb));
        const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
        net->train();
        for (int e = 0; e < cfg.epochs; ++e) {
            std::vector<std::int64_t> idx(train.size());
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            for (std::size_t i = 0; i < idx.size(); i += bs) {
                std::vector<std::int64_t> sel(idx.begin() + static_cast<std::ptrdiff_t>(i),
                                              idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + bs)));
                const auto t = torch::tensor(sel, torch::kInt64);
                auto xb = x.index_select(0, t);
                auto yb = y.index_select(0, t);
                if (cfg.augment) std::tie(xb, yb) = traditional_augment(xb, yb, gen);
                opt.zero_grad();
                auto loss = torch::nn::functional::cross_entropy(net->forward(xb), yb);
                loss.backward();
                opt.step();
            }
        }
        net->eval();
        torch::NoGradGuard ng;
        double total = 0.0;
        for (long i = 0; i < xt.size(0); i += 32) {
            auto pred = net->forward(xt.slice(0, i, std::min<long>(xt.size(0), i + 32))).argmax(1);
            for (long k = 0; k < pred.size(0); ++k) {
                const auto& gt = test[static_cast<std::size_t>(i + k)].masks;
                double s = 0.0;
                for (std::size_t c = 0; c < gt.size(); ++c)
                    s += dice(tensor_to_map(pred[k].eq(static_cast<long>(c + 1)).to(torch::kFloat32)), gt[c]);
                total += s / static_cast<double>(gt.size());
            }
        }
        per_seed.push_back(total / static_cast<double>(test.size()));
    }
    return summarize(per_seed);
}

double frechet_distance(const torch::Tensor& x, const torch::Tensor& y, double eps) {
    if (x.dim() != 2 || y.dim() != 2 || x.size(1) != y.size(1)) throw ShapeMismatch("feature sets must be [n,f] with equal f");
    if (x.size(0) < 2 || y.size(0) < 2) throw InvalidArgument("need at least two samples per set");
    using Mat = Eigen::MatrixXd;
    auto to_eigen = [](const torch::Tensor& t) {
        auto c = t.detach().to(torch::kFloat64).contiguous();
        return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                   c.data_ptr<double>(), c.size(0), c.size(1))
            .eval();
    };
    const Mat a = to_eigen(x), b = to_eigen(y);
    const Eigen::VectorXd ma = a.colwise().mean(), mb = b.colwise().mean();
    const Mat ca = a.rowwise() - ma.transpose(), cb = b.rowwise() - mb.transpose();
    const auto f = a.cols();
    const Mat sa = ca.transpose() * ca / static_cast<double>(a.rows() - 1) + eps * Mat::Identity(f, f);
    const Mat sb = cb.transpose() * cb / static_cast<double>(b.rows() - 1) + eps * Mat::Identity(f, f);
    // tr((Sa Sb)^(1/2)) = tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)), the inner matrix being symmetric PSD.
    Eigen::SelfAdjointEigenSolver<Mat> ea(sa);
    const Mat root_a = ea.eigenvectors() * ea.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
    const Mat inner = root_a * sb * root_a;
    Eigen::SelfAdjointEigenSolver<Mat> ei(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_root = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_root;
    return std::max(0.0, d);
}

double proxy_fid(Classifier& embedder, const torch::Tensor& real, const torch::Tensor& generated) {
    torch::NoGradGuard ng;
    embedder->eval();
    return frechet_distance(embedder->features(real), embedder->features(generated));
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
    std::ostringstream os;
    os << "experiment,seed,metric,value\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.9g", r.value);
        os << r.experiment << ',' << r.seed << ',' << r.metric << ',' << buf << '\n';
    }
    return os.str();
}

} // namespace daa
