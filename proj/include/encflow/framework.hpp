#pragma once

#include "encflow/metrics.hpp"
#include "encflow/model_io.hpp"

namespace encflow {

enum class BranchView : uint8_t { time = 1, image = 2, gram = 3, ratio = 4 };

inline const char* branch_view_name(BranchView v) {
    switch (v) {
        case BranchView::time: return "time";
        case BranchView::image: return "image";
        case BranchView::gram: return "gram";
        case BranchView::ratio: return "ratio";
    }
    return "?";
}

struct BranchSpec {
    BranchView view = BranchView::ratio;
    ModelKind kind = ModelKind::gbt;
    RnnParams rnn;
    CnnParams cnn;
    TreeEnsembleParams tree;
};

struct FrameworkConfig {
    std::vector<BranchSpec> branches;
    bool layer2_random_forest = true;  // false selects the average ensemble
    TreeEnsembleParams layer2_params;
    size_t stacking_folds = 5;
    double decision_threshold = 0.5;
    uint64_t seed = 1;

    // Time matrix into a recurrent net, payload image into the CNN, ratio
    // vector into boosted trees; a small random forest on top.
    static FrameworkConfig defaults() {
        FrameworkConfig cfg;
        BranchSpec time;
        time.view = BranchView::time;
        time.kind = ModelKind::rnn;
        time.rnn.hidden = 16;
        time.rnn.epochs = 30;
        time.rnn.learning_rate = 0.02;
        BranchSpec image;
        image.view = BranchView::image;
        image.kind = ModelKind::cnn;
        image.cnn.blocks = 1;
        image.cnn.channels = {4, 4};
        image.cnn.epochs = 30;
        image.cnn.learning_rate = 0.02;
        BranchSpec ratio;
        ratio.view = BranchView::ratio;
        ratio.kind = ModelKind::gbt;
        ratio.tree.n_estimators = 60;
        ratio.tree.max_depth = 3;
        cfg.branches = {time, image, ratio};
        cfg.layer2_params.n_estimators = 50;
        cfg.layer2_params.max_depth = 3;
        cfg.layer2_params.min_samples_leaf = 2;
        return cfg;
    }

    void validate() const {
        if (branches.size() != 3) {
            throw SpecInvalid("framework needs exactly three branches");
        }
        if (stacking_folds < 2) {
            throw SpecInvalid("stacking needs at least two folds");
        }
        if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
            throw SpecInvalid("decision threshold must lie inside (0,1)");
        }
        for (const auto& b : branches) {
            bool tree_kind = b.kind == ModelKind::random_forest ||
                             b.kind == ModelKind::gbt;
            if (tree_kind != (b.view == BranchView::ratio)) {
                throw SpecInvalid(
                    "tree branches take the ratio view; nets take a matrix");
            }
        }
    }
};

struct FrameworkModel {
    FrameworkConfig config;
    std::vector<ModelVariant> branches;  // parallel to config.branches
    std::optional<RandomForestModel> layer2;
    Scaler scaler;
    std::string manifest_version;
    std::string stamp;  // provenance record carried by the container
    MetricsReport oof_report;  // honest training estimate, out-of-fold
};

struct PredictOutcome {
    bool malicious = false;
    double probability = 0.0;
    std::array<double, 3> branch_probs{};
};

inline double layer2_average(std::span<const double> probs) {
    if (probs.empty()) throw EmptyInput("no branch probabilities");
    double sum = 0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw RangeError("branch probability outside [0,1]");
        }
        sum += p;
    }
    return sum / double(probs.size());
}

namespace detail {

inline const Matrix& view_matrix(const TensorBundle& b, BranchView view) {
    switch (view) {
        case BranchView::time: return b.time_matrix;
        case BranchView::image: return b.image_matrix;
        case BranchView::gram: return b.square_matrix;
        default: throw ShapeError("ratio view carries no matrix");
    }
}

inline double branch_predict(const ModelVariant& model, BranchView view,
                             const TensorBundle& bundle) {
    return std::visit(
        [&](const auto& m) -> double {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, RandomForestModel> ||
                          std::is_same_v<M, GbtModel>) {
                if (view != BranchView::ratio) {
                    throw ShapeError("tree branch expects the ratio view");
                }
                return m.predict_proba(bundle.ratio_vector);
            } else {
                return m.predict_proba(view_matrix(bundle, view));
            }
        },
        model);
}

inline ModelVariant train_branch(const BranchSpec& spec,
                                 const std::vector<TensorBundle>& bundles,
                                 const std::vector<size_t>& rows,
                                 const std::vector<int>& y, uint64_t salt) {
    std::vector<int> labels;
    labels.reserve(rows.size());
    for (size_t r : rows) labels.push_back(y[r]);
    switch (spec.kind) {
        case ModelKind::rnn: {
            RnnParams p = spec.rnn;
            p.seed = keyed_hash(salt, p.seed);
            std::vector<Matrix> xs;
            xs.reserve(rows.size());
            for (size_t r : rows) xs.push_back(view_matrix(bundles[r], spec.view));
            return fit_rnn(xs, labels, p);
        }
        case ModelKind::cnn: {
            CnnParams p = spec.cnn;
            p.seed = keyed_hash(salt, p.seed);
            std::vector<Matrix> xs;
            xs.reserve(rows.size());
            for (size_t r : rows) xs.push_back(view_matrix(bundles[r], spec.view));
            return fit_cnn(xs, labels, p);
        }
        default: {
            TreeEnsembleParams p = spec.tree;
            p.seed = keyed_hash(salt, p.seed);
            size_t width = bundles[rows.front()].ratio_vector.size();
            Matrix x(rows.size(), width);
            std::vector<uint64_t> ids;
            ids.reserve(rows.size());
            for (size_t i = 0; i < rows.size(); ++i) {
                const auto& rv = bundles[rows[i]].ratio_vector;
                for (size_t c = 0; c < width; ++c) x(i, c) = rv[c];
                ids.push_back(rows[i]);
            }
            if (spec.kind == ModelKind::random_forest) {
                return fit_random_forest(x, labels, p, ids);
            }
            return fit_gbt(x, labels, p, ids);
        }
    }
}

}  // namespace detail

inline PredictOutcome predict_session(const FrameworkModel& model,
                                      const TensorBundle& bundle) {
    if (bundle.manifest_version != model.manifest_version) {
        throw VersionMismatch("bundle manifest '" + bundle.manifest_version +
                              "' does not match the model's '" +
                              model.manifest_version + "'");
    }
    PredictOutcome out;
    for (size_t b = 0; b < 3; ++b) {
        out.branch_probs[b] = detail::branch_predict(
            model.branches[b], model.config.branches[b].view, bundle);
    }
    if (model.layer2) {
        out.probability = model.layer2->predict_proba(out.branch_probs);
    } else {
        out.probability = layer2_average(out.branch_probs);
    }
    out.malicious = out.probability >= model.config.decision_threshold;
    return out;
}

// Out-of-fold stacking: every record's layer-2 training row comes from
// branch models fitted without that record, then branches are refit on the
// full set. The fold index `stacking_folds` salts the final refit.
inline FrameworkModel train_framework(
    const std::vector<FeatureRecord>& records, const FrameworkConfig& cfg,
    const FeatureManifest& manifest = FeatureManifest::builtin()) {
    cfg.validate();

    std::vector<const FeatureRecord*> labeled;
    std::vector<int> y;
    for (const auto& r : records) {
        if (r.label == Label::unlabeled) continue;
        labeled.push_back(&r);
        y.push_back(r.label == Label::malicious ? 1 : 0);
    }
    size_t n = labeled.size();
    if (n < 2 * cfg.stacking_folds) {
        throw TooFewRecords("need at least " +
                            std::to_string(2 * cfg.stacking_folds) +
                            " labeled records, got " + std::to_string(n));
    }
    detail::require_binary_labels(y);

    std::vector<FeatureRecord> subset;
    subset.reserve(n);
    for (const auto* r : labeled) subset.push_back(*r);
    Scaler scaler = fit_scaler(subset, manifest);
    std::vector<TensorBundle> bundles;
    bundles.reserve(n);
    for (const auto& r : subset) bundles.push_back(tensorize(r, scaler, manifest));

    // Shuffled striping assigns folds.
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng fold_rng(keyed_hash(cfg.seed, uint64_t{0xf01d5}));
    fold_rng.shuffle(order);
    std::vector<size_t> fold(n);
    for (size_t i = 0; i < n; ++i) fold[order[i]] = i % cfg.stacking_folds;

    Matrix oof(n, 3);
    for (size_t f = 0; f < cfg.stacking_folds; ++f) {
        std::vector<size_t> train_rows, held;
        for (size_t i = 0; i < n; ++i) {
            (fold[i] == f ? held : train_rows).push_back(i);
        }
        for (size_t b = 0; b < 3; ++b) {
            ModelVariant m = detail::train_branch(
                cfg.branches[b], bundles, train_rows, y,
                keyed_hash(cfg.seed, uint64_t{0xb7a9c4}, b, f));
            for (size_t i : held) {
                oof(i, b) = detail::branch_predict(m, cfg.branches[b].view,
                                                   bundles[i]);
            }
        }
    }

    FrameworkModel model;
    model.config = cfg;
    model.scaler = scaler;
    model.manifest_version = manifest.version;

    std::vector<size_t> all(n);
    for (size_t i = 0; i < n; ++i) all[i] = i;
    for (size_t b = 0; b < 3; ++b) {
        model.branches.push_back(detail::train_branch(
            cfg.branches[b], bundles, all, y,
            keyed_hash(cfg.seed, uint64_t{0xb7a9c4}, b, cfg.stacking_folds)));
    }

    if (cfg.layer2_random_forest) {
        TreeEnsembleParams p2 = cfg.layer2_params;
        p2.seed = keyed_hash(cfg.seed, uint64_t{0x1a7e72}, p2.seed);
        model.layer2 = fit_random_forest(oof, y, p2);
    }

    std::vector<double> scores(n);
    for (size_t i = 0; i < n; ++i) {
        if (model.layer2) {
            scores[i] = model.layer2->predict_proba(oof.row_span(i));
        } else {
            scores[i] = layer2_average(oof.row_span(i));
        }
    }
    model.oof_report = evaluate_scores(scores, y, cfg.decision_threshold);
    return model;
}

// Column is derived from ciphertext-only packets, by naming convention.
inline bool is_enc_column(const std::string& name) {
    return name.find("_enc_") != std::string::npos ||
           (name.size() >= 4 && name.compare(name.size() - 4, 4, "_enc") == 0);
}

// Training-set constants the with/without-Enc comparison substitutes for
// every Enc-derived value. Kept separate from the substitution so held-out
// records can be ablated with the training set's means.
struct AblationMeans {
    std::map<std::string, double> scalars;  // enc scalars and aggregates
    std::map<std::string, double> ratios;
    std::map<std::string, double> series;   // enc packet series
    std::vector<double> time_cols;          // full width; enc columns only
    std::vector<double> payload_cols;
};

inline AblationMeans compute_ablation_means(
    const std::vector<FeatureRecord>& records,
    const FeatureManifest& manifest = FeatureManifest::builtin()) {
    if (records.empty()) throw EmptyInput("nothing to ablate");
    AblationMeans means;

    std::vector<std::string> scalar_names = manifest.enc_session_features;
    for (const auto& a : manifest.aggregate_specs) {
        scalar_names.push_back(a.enc_name());
    }
    for (const auto& name : scalar_names) {
        double sum = 0;
        for (const auto& r : records) sum += r.session_features.at(name);
        means.scalars[name] = sum / double(records.size());
    }
    for (const auto& spec : manifest.ratio_specs) {
        double sum = 0;
        for (const auto& r : records) {
            sum += r.ratio_features.at(spec.ratio_name);
        }
        means.ratios[spec.ratio_name] = sum / double(records.size());
    }
    for (const auto& name : manifest.enc_packet_features) {
        double sum = 0;
        size_t count = 0;
        for (const auto& r : records) {
            for (double v : r.packet_series.at(name)) {
                sum += v;
                ++count;
            }
        }
        means.series[name] = count ? sum / double(count) : 0.0;
    }

    auto column_means = [&records](const std::vector<std::string>& cols,
                                   auto&& rows_of) {
        std::vector<double> mean(cols.size(), 0.0);
        size_t total = 0;
        for (const auto& r : records) total += rows_of(r).rows();
        for (size_t c = 0; c < cols.size(); ++c) {
            if (!is_enc_column(cols[c])) continue;
            double sum = 0;
            for (const auto& r : records) {
                const Matrix& m = rows_of(r);
                for (size_t i = 0; i < m.rows(); ++i) sum += m(i, c);
            }
            mean[c] = total ? sum / double(total) : 0.0;
        }
        return mean;
    };
    means.time_cols = column_means(
        manifest.time_feature_list,
        [](const FeatureRecord& r) -> const Matrix& { return r.time_rows; });
    means.payload_cols = column_means(
        manifest.payload_feature_list,
        [](const FeatureRecord& r) -> const Matrix& { return r.payload_rows; });
    return means;
}

// Constant-substitutes every Enc-derived value; shapes stay fixed, so the
// same tensorizer and models run on the ablated set.
inline std::vector<FeatureRecord> apply_ablation(
    const std::vector<FeatureRecord>& records, const AblationMeans& means,
    const FeatureManifest& manifest = FeatureManifest::builtin()) {
    std::vector<FeatureRecord> out = records;
    for (auto& r : out) {
        for (const auto& [name, m] : means.scalars) r.session_features[name] = m;
        for (const auto& [name, m] : means.ratios) r.ratio_features[name] = m;
        for (const auto& [name, m] : means.series) {
            for (double& v : r.packet_series[name]) v = m;
        }
        for (size_t c = 0; c < manifest.time_feature_list.size(); ++c) {
            if (!is_enc_column(manifest.time_feature_list[c])) continue;
            for (size_t i = 0; i < r.time_rows.rows(); ++i) {
                r.time_rows(i, c) = means.time_cols[c];
            }
        }
        for (size_t c = 0; c < manifest.payload_feature_list.size(); ++c) {
            if (!is_enc_column(manifest.payload_feature_list[c])) continue;
            for (size_t i = 0; i < r.payload_rows.rows(); ++i) {
                r.payload_rows(i, c) = means.payload_cols[c];
            }
        }
        r.degenerate_ratios.clear();
    }
    return out;
}

inline std::vector<FeatureRecord> ablate_enc(
    const std::vector<FeatureRecord>& records,
    const FeatureManifest& manifest = FeatureManifest::builtin()) {
    return apply_ablation(records, compute_ablation_means(records, manifest),
                          manifest);
}

// ----------------------------------------------------------------------------
// Framework container: one deployable file embedding the scaler, the three
// branch model files, and the layer-2 detector.
// ----------------------------------------------------------------------------

inline constexpr char kFrameworkMagic[4] = {'E', 'F', 'F', '1'};

inline Bytes save_framework(const FrameworkModel& model) {
    Bytes out;
    out.insert(out.end(), kFrameworkMagic, kFrameworkMagic + 4);
    put_u16le(out, kModelFormatVersion);
    detail::put_string(out, model.stamp);
    detail::put_string(out, model.manifest_version);
    std::string scaler_json = model.scaler.to_json().dump();
    detail::put_string(out, scaler_json);
    out.push_back(model.config.layer2_random_forest ? 1 : 0);
    put_f64le(out, model.config.decision_threshold);
    put_u32le(out, static_cast<uint32_t>(model.config.stacking_folds));
    put_u64le(out, model.config.seed);
    detail::put_tree_params(out, model.config.layer2_params);
    if (model.layer2) {
        detail::put_blob(out, save_model(*model.layer2,
                                         model.manifest_version,
                                         fnv1a64(scaler_json)));
    } else {
        put_u32le(out, 0);
    }
    detail::put_string(out, report_json(model.oof_report).dump());
    uint64_t digest = fnv1a64(scaler_json);
    for (size_t b = 0; b < model.branches.size(); ++b) {
        out.push_back(static_cast<uint8_t>(model.config.branches[b].view));
        detail::put_blob(out,
                         save_model(model.branches[b], model.manifest_version,
                                    digest));
    }
    return out;
}

inline FrameworkModel load_framework(ByteView data) {
    if (data.size() < 6 ||
        !std::equal(kFrameworkMagic, kFrameworkMagic + 4, data.begin())) {
        throw BadMagic("not a framework file");
    }
    detail::Cursor c{data, 4};
    uint16_t fmt = c.u16();
    if (fmt != kModelFormatVersion) {
        throw VersionMismatch("unsupported framework format version " +
                              std::to_string(fmt));
    }
    FrameworkModel model;
    model.stamp = c.str();
    model.manifest_version = c.str();
    std::string scaler_json = c.str();
    nlohmann::json sj = nlohmann::json::parse(scaler_json, nullptr, false);
    if (sj.is_discarded()) throw ConfigError("framework scaler block invalid");
    model.scaler = Scaler::from_json(sj);
    uint64_t digest = fnv1a64(scaler_json);
    model.config.layer2_random_forest = c.u8() != 0;
    model.config.decision_threshold = c.f64();
    model.config.stacking_folds = c.u32();
    model.config.seed = c.u64();
    model.config.layer2_params = detail::get_tree_params(c);
    ByteView layer2_blob = c.blob();
    if (!layer2_blob.empty()) {
        SavedModel saved = load_model(layer2_blob);
        if (saved.scaler_digest != digest) {
            throw VersionMismatch("layer-2 scaler digest mismatch");
        }
        model.layer2 = std::get<RandomForestModel>(saved.model);
    }
    std::string report = c.str();
    nlohmann::json rj = nlohmann::json::parse(report, nullptr, false);
    if (!rj.is_discarded()) {
        model.oof_report.accuracy = rj.value("accuracy", 0.0);
        model.oof_report.precision = rj.value("precision", 0.0);
        model.oof_report.recall_tpr = rj.value("recall_tpr", 0.0);
        model.oof_report.fpr = rj.value("fpr", 0.0);
        model.oof_report.f1 = rj.value("f1", 0.0);
        model.oof_report.roc_auc = rj.value("roc_auc", 0.0);
        if (rj.contains("confusion")) {
            const auto& cj = rj.at("confusion");
            model.oof_report.confusion.tp = cj.value("tp", uint64_t{0});
            model.oof_report.confusion.tn = cj.value("tn", uint64_t{0});
            model.oof_report.confusion.fp = cj.value("fp", uint64_t{0});
            model.oof_report.confusion.fn = cj.value("fn", uint64_t{0});
        }
        if (rj.contains("degenerate")) {
            model.oof_report.degenerate =
                rj.at("degenerate").get<std::vector<std::string>>();
        }
    }
    for (size_t b = 0; b < 3; ++b) {
        BranchSpec spec;
        spec.view = static_cast<BranchView>(c.u8());
        SavedModel saved = load_model(c.blob());
        if (saved.manifest_version != model.manifest_version) {
            throw VersionMismatch("branch manifest version mismatch");
        }
        if (saved.scaler_digest != digest) {
            throw VersionMismatch("branch scaler digest mismatch");
        }
        spec.kind = saved.kind();
        std::visit(
            [&spec](const auto& m) {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, RnnModel>) {
                    spec.rnn = m.params;
                } else if constexpr (std::is_same_v<M, CnnModel>) {
                    spec.cnn = m.params;
                } else {
                    spec.tree = m.params;
                }
            },
            saved.model);
        model.config.branches.push_back(spec);
        model.branches.push_back(std::move(saved.model));
    }
    return model;
}

}  // namespace encflow
