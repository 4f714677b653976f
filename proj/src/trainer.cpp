#include "floodcpf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

namespace floodcpf {

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& prob, const Tensor<T>& target, double eps_prob) {
    check(prob.shape() == target.shape(), "bce_loss: shape mismatch " + shape_str(prob.shape()) +
                                              " vs " + shape_str(target.shape()));
    check(eps_prob > 0.0 && eps_prob < 0.5, "bce_loss: eps_prob must be in (0,0.5)");
    const T eps = static_cast<T>(eps_prob);
    const Tensor<T> p = clamp(prob, eps, static_cast<T>(1) - eps);
    const Tensor<T> pos = mul(target, log(p));
    const Tensor<T> neg = mul(affine(target, static_cast<T>(-1), static_cast<T>(1)),
                              log(affine(p, static_cast<T>(-1), static_cast<T>(1))));
    const T inv_n = static_cast<T>(-1.0 / static_cast<double>(prob.numel()));
    return affine(sum_all(add(pos, neg)), inv_n, static_cast<T>(0));
}

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, double lr, double beta1, double beta2,
               double eps, i64 t) {
    check(t >= 1, "adam_step: t counts from 1");
    check(lr > 0.0 && eps > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "adam_step: bad constants");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (Parameter<T>* p : params) {
        const i64 n = p->value.numel();
        if (p->m.empty()) {
            p->m.assign(static_cast<std::size_t>(n), static_cast<T>(0));
            p->v.assign(static_cast<std::size_t>(n), static_cast<T>(0));
        }
        check(static_cast<i64>(p->m.size()) == n && static_cast<i64>(p->v.size()) == n,
              "adam_step: moment size mismatch for " + p->name);
        T* w = p->value.data();
        const T* g = p->value.grad();
        for (i64 i = 0; i < n; ++i) {
            const double gi = static_cast<double>(g[i]);
            if (!std::isfinite(gi))
                fail("adam_step: non-finite gradient in " + p->name + " at index " +
                     std::to_string(i));
            const double m = beta1 * static_cast<double>(p->m[static_cast<std::size_t>(i)]) +
                             (1.0 - beta1) * gi;
            const double v = beta2 * static_cast<double>(p->v[static_cast<std::size_t>(i)]) +
                             (1.0 - beta2) * gi * gi;
            p->m[static_cast<std::size_t>(i)] = static_cast<T>(m);
            p->v[static_cast<std::size_t>(i)] = static_cast<T>(v);
            const double step = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - step);
        }
        p->value.zero_grad();
    }
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    validate_config(cfg);
    check(!cfg.manifest.empty(), "prepare_data: config needs a dataset manifest");
    const std::vector<ManifestEntry> entries = read_manifest(cfg.manifest);
    check(!entries.empty(), "prepare_data: empty manifest");
    std::map<std::string, SceneFeatures> features;
    std::vector<PatchRef> refs;
    for (const ManifestEntry& e : entries) {
        const DualPolScene scene = load_scene(resolve_scene_dir(cfg.manifest, e), e.id);
        check(scene.height == e.height && scene.width == e.width,
              "prepare_data: manifest extents disagree with scene " + e.id);
        SceneFeatures f = make_features(scene, cfg.eps_feature);
        const std::vector<PatchRef> grid = patch_grid(f, cfg.patch, cfg.patch);
        refs.insert(refs.end(), grid.begin(), grid.end());
        features.emplace(e.id, std::move(f));
    }
    check(!refs.empty(), "prepare_data: no scene fits a single patch");

    PreparedData d;
    d.splits = split_patches(refs, cfg.patch,
                             {{"train", cfg.split_train},
                              {"val", cfg.split_val},
                              {"test", cfg.split_test}},
                             Rng(cfg.seed).split(1).next_u64());
    auto read_all = [&](const std::vector<PatchRef>& rs) {
        std::vector<Patch> out;
        out.reserve(rs.size());
        for (const PatchRef& r : rs) out.push_back(read_patch(features.at(r.scene_id), r, cfg.patch));
        return out;
    };
    d.train = read_all(d.splits.members[0]);
    d.val = read_all(d.splits.members[1]);
    d.test = read_all(d.splits.members[2]);
    check(!d.train.empty(), "prepare_data: training split is empty");
    d.stats = compute_feature_stats(d.train);
    for (Patch& p : d.train) standardize(p, d.stats);
    for (Patch& p : d.val) standardize(p, d.stats);
    for (Patch& p : d.test) standardize(p, d.stats);
    return d;
}

SegModel<float> build_model(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const u64 init_seed = Rng(cfg.seed).split(2).next_u64();
    return SegModel<float>(backbone_config(cfg), stem_config(cfg), cpf_config(cfg), init_seed);
}

namespace {

// Packs patches[idx[b0..b0+bs)] into one (bs,4,p,p) stack and a (bs,1,p,p)
// target, applying one augmentation draw per sample when aug_rng is set.
void fill_batch(const std::vector<Patch>& patches, const std::vector<i64>& idx, i64 b0, i64 bs,
                Rng* aug_rng, Tensor<float>& x, Tensor<float>& y) {
    const i64 plane = patches[0].size * patches[0].size;
    for (i64 b = 0; b < bs; ++b) {
        const Patch& src = patches[static_cast<std::size_t>(idx[static_cast<std::size_t>(b0 + b)])];
        Patch tmp;
        const Patch* use = &src;
        if (aug_rng != nullptr) {
            const AugmentOp op = draw_augment(*aug_rng);
            if (op != AugmentOp::identity) {
                tmp = augment(src, op);
                use = &tmp;
            }
        }
        std::memcpy(x.data() + b * 4 * plane, use->stack.data(),
                    static_cast<std::size_t>(4 * plane) * sizeof(float));
        float* ty = y.data() + b * plane;
        for (i64 i = 0; i < plane; ++i) ty[i] = static_cast<float>(use->mask[static_cast<std::size_t>(i)]);
    }
}

std::vector<std::vector<float>> snapshot_params(const std::vector<Parameter<float>*>& params) {
    std::vector<std::vector<float>> out;
    out.reserve(params.size());
    for (const Parameter<float>* p : params)
        out.emplace_back(p->value.data(), p->value.data() + p->value.numel());
    return out;
}

void restore_params(const std::vector<Parameter<float>*>& params,
                    const std::vector<std::vector<float>>& saved) {
    check(saved.size() == params.size(), "restore_params: snapshot size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        std::copy(saved[i].begin(), saved[i].end(), params[i]->value.data());
}

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double popsd_of(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

std::string pct2(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
    return buf;
}

}  // namespace

ConfusionCounts eval_patches(const SegModel<float>& model, const std::vector<Patch>& patches,
                             double tau, i64 batch_size) {
    check(batch_size >= 1, "eval_patches: batch_size must be >= 1");
    ConfusionCounts counts;
    if (patches.empty()) return counts;
    NoGrad ng;
    const i64 p = patches[0].size;
    const i64 n = static_cast<i64>(patches.size());
    std::vector<i64> idx(patches.size());
    std::iota(idx.begin(), idx.end(), i64{0});
    for (i64 b0 = 0; b0 < n; b0 += batch_size) {
        const i64 bs = std::min(batch_size, n - b0);
        Tensor<float> x = Tensor<float>::zeros(Shape{bs, 4, p, p});
        Tensor<float> y = Tensor<float>::zeros(Shape{bs, 1, p, p});
        fill_batch(patches, idx, b0, bs, nullptr, x, y);
        const std::vector<unsigned char> pred = binarize(model.forward(x), tau);
        std::vector<unsigned char> truth;
        truth.reserve(pred.size());
        for (i64 b = 0; b < bs; ++b) {
            const Patch& src = patches[static_cast<std::size_t>(b0 + b)];
            truth.insert(truth.end(), src.mask.begin(), src.mask.end());
        }
        accumulate(counts, pred.data(), truth.data(), static_cast<i64>(pred.size()));
    }
    return counts;
}

TrainResult train(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    PreparedData data = prepare_data(cfg);
    check(!data.test.empty(), "train: test split is empty");
    if (cfg.epochs > 0)
        check(!data.val.empty(), "train: validation split is empty, cannot select a checkpoint");

    SegModel<float> model = build_model(cfg);
    std::vector<Parameter<float>*> params;
    model.collect(params);

    TrainResult res;
    std::vector<std::vector<float>> best = snapshot_params(params);
    double best_iou = -1.0;
    const Rng shuffle_base = Rng(cfg.seed).split(3);
    const Rng augment_base = Rng(cfg.seed).split(4);
    const i64 n_train = static_cast<i64>(data.train.size());
    i64 t = 0;
    for (i64 e = 0; e < cfg.epochs; ++e) {
        const auto tic = std::chrono::steady_clock::now();
        Rng shuffle_rng = shuffle_base.split(static_cast<u64>(e));
        Rng aug_rng = augment_base.split(static_cast<u64>(e));
        std::vector<i64> order(static_cast<std::size_t>(n_train));
        std::iota(order.begin(), order.end(), i64{0});
        for (i64 i = n_train - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[shuffle_rng.uniform_int(static_cast<u64>(i) + 1)]);

        double loss_sum = 0.0;
        for (i64 b0 = 0; b0 < n_train; b0 += cfg.batch_size) {
            const i64 bs = std::min(cfg.batch_size, n_train - b0);
            Tensor<float> x = Tensor<float>::zeros(Shape{bs, 4, cfg.patch, cfg.patch});
            Tensor<float> y = Tensor<float>::zeros(Shape{bs, 1, cfg.patch, cfg.patch});
            fill_batch(data.train, order, b0, bs, cfg.augment == 1 ? &aug_rng : nullptr, x, y);
            Tensor<float> loss = bce_loss(model.forward(x), y, cfg.eps_prob);
            const double lv = loss.item();
            check(std::isfinite(lv), "train: non-finite loss at epoch " + std::to_string(e) +
                                         ", batch " + std::to_string(b0 / cfg.batch_size));
            backward(loss);
            adam_step(params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, ++t);
            loss_sum += lv * static_cast<double>(bs);
        }
        const ConfusionCounts vc = eval_patches(model, data.val, cfg.tau, cfg.batch_size);
        const double viou = iou(vc);
        if (viou > best_iou) {  // strict: ties keep the earliest epoch
            best_iou = viou;
            best = snapshot_params(params);
            res.best_epoch = e;
            res.best_val_iou = viou;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
        res.log.push_back({e, loss_sum / static_cast<double>(n_train), viou, secs});
    }

    restore_params(params, best);
    res.test_counts = eval_patches(model, data.test, cfg.tau, cfg.batch_size);

    save_checkpoint(out_dir, cfg, params, data.stats, data.splits);
    write_trainlog(res.log, out_dir + "/trainlog.csv");
    const std::vector<MetricRow> rows{{mode_label(cfg.mode), res.test_counts}};
    write_text_atomic(out_dir + "/metrics.csv", report_csv(rows));
    return res;
}

std::string mode_label(FusionMode m) {
    switch (m) {
        case FusionMode::vv_only: return "VV only";
        case FusionMode::vh_only: return "VH only";
        case FusionMode::addition: return "Addition Fusion";
        case FusionMode::concat: return "Early Fusion (Concat)";
        case FusionMode::cpf: return "CPF (VV, VH)";
    }
    fail("mode_label: bad mode");
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const std::vector<u64>& seeds,
                                      const std::string& out_root) {
    check(!seeds.empty(), "run_ablation: need at least one seed");
    static const FusionMode kModes[5] = {FusionMode::vv_only, FusionMode::vh_only,
                                         FusionMode::addition, FusionMode::concat,
                                         FusionMode::cpf};
    std::vector<AblationRow> rows;
    for (FusionMode mode : kModes) {
        AblationRow row;
        row.mode = mode;
        std::vector<double> ious, f1s;
        for (u64 seed : seeds) {
            ExperimentConfig cfg = base;
            cfg.mode = mode;
            cfg.seed = seed;
            const std::string dir = out_root + "/" + backbone_kind_name(cfg.backbone) + "_" +
                                    fusion_mode_name(mode) + "_seed" + std::to_string(seed);
            const TrainResult r = train(cfg, dir);
            ious.push_back(iou(r.test_counts));
            f1s.push_back(f1(r.test_counts));
            row.pooled += r.test_counts;
        }
        row.mean_iou = mean_of(ious);
        row.sd_iou = popsd_of(ious);
        row.mean_f1 = mean_of(f1s);
        row.sd_f1 = popsd_of(f1s);
        rows.push_back(row);
    }
    return rows;
}

void write_ablation_report(const std::vector<AblationRow>& rows, i64 n_seeds,
                           const std::string& out_root, BackboneKind kind) {
    std::vector<MetricRow> mrows;
    mrows.reserve(rows.size());
    for (const AblationRow& r : rows) mrows.push_back({mode_label(r.mode), r.pooled});
    const std::string kind_name = backbone_kind_name(kind);
    write_text_atomic(out_root + "/table_" + kind_name + ".csv", report_csv(mrows));
    write_text_atomic(out_root + "/table_" + kind_name + ".txt", report_table(mrows));
    std::ostringstream os;
    os << "method,seeds,iou_mean,iou_sd,f1_mean,f1_sd\n";
    for (const AblationRow& r : rows)
        os << mode_label(r.mode) << ',' << n_seeds << ',' << pct2(r.mean_iou) << ','
           << pct2(r.sd_iou) << ',' << pct2(r.mean_f1) << ',' << pct2(r.sd_f1) << '\n';
    write_text_atomic(out_root + "/ablation_" + kind_name + ".csv", os.str());
}

#define FLOODCPF_TRAINER_INSTANCES(T)                                                       \
    template Tensor<T> bce_loss<T>(const Tensor<T>&, const Tensor<T>&, double);             \
    template void adam_step<T>(const std::vector<Parameter<T>*>&, double, double, double,   \
                               double, i64);

FLOODCPF_TRAINER_INSTANCES(float)
FLOODCPF_TRAINER_INSTANCES(double)

#undef FLOODCPF_TRAINER_INSTANCES

}  // namespace floodcpf
