#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "encflow/matrix.hpp"

namespace encflow {

struct TreeEnsembleParams {
    size_t n_estimators = 100;
    // <= 0 means every feature; (0,1) a fraction (ceil); >= 1 a count.
    double max_features = 0.0;
    size_t min_samples_leaf = 1;
    std::optional<size_t> max_depth;
    double learning_rate = 0.1;  // boosting only
    double subsample = 1.0;      // boosting only
    uint64_t seed = 1;

    void validate() const {
        if (n_estimators < 1) throw SpecInvalid("n_estimators must be >= 1");
        if (min_samples_leaf < 1) throw SpecInvalid("min_samples_leaf must be >= 1");
        if (!(subsample > 0.0 && subsample <= 1.0)) {
            throw SpecInvalid("subsample must lie in (0, 1]");
        }
        if (!(learning_rate > 0.0)) throw SpecInvalid("learning_rate must be > 0");
    }

    size_t resolve_max_features(size_t dims) const {
        if (max_features <= 0.0) return dims;
        if (max_features < 1.0) {
            auto m = static_cast<size_t>(std::ceil(max_features * double(dims)));
            return std::clamp<size_t>(m, 1, dims);
        }
        return std::clamp<size_t>(static_cast<size_t>(std::llround(max_features)),
                                  1, dims);
    }
};

// Axis-aligned binary tree. Leaves carry a real value: a malicious-class
// frequency for classification trees, a regression output for boosted stages.
struct DecisionTree {
    struct Node {
        int32_t feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        uint32_t left = 0;
        uint32_t right = 0;
        double value = 0.0;
    };
    std::vector<Node> nodes;

    bool empty() const { return nodes.empty(); }

    size_t leaf_index(std::span<const double> x) const {
        size_t at = 0;
        while (nodes[at].feature >= 0) {
            const Node& n = nodes[at];
            if (size_t(n.feature) >= x.size()) {
                throw ShapeError("sample narrower than the fitted tree");
            }
            at = x[size_t(n.feature)] < n.threshold ? n.left : n.right;
        }
        return at;
    }

    double predict(std::span<const double> x) const {
        return nodes[leaf_index(x)].value;
    }
};

namespace detail {

// One candidate split. Lower score wins; ties go to the lowest feature and
// then the lowest threshold, which the ascending scan gives for free.
struct Split {
    double score = std::numeric_limits<double>::infinity();
    int32_t feature = -1;
    double threshold = 0.0;
};

enum class SplitObjective { gini, mse };

struct TreeBuilder {
    const Matrix& x;
    const std::vector<double>& target;  // class in {0,1} or residual
    SplitObjective objective;
    const TreeEnsembleParams& params;
    Rng& rng;
    DecisionTree tree;

    double leaf_value(const std::vector<size_t>& rows) const {
        double sum = 0;
        for (size_t r : rows) sum += target[r];
        return sum / double(rows.size());
    }

    double impurity_score(double sum, double sq_sum, double count) const {
        if (objective == SplitObjective::gini) {
            double p = sum / count;
            return count * 2.0 * p * (1.0 - p);
        }
        return sq_sum - sum * sum / count;  // sum of squared errors
    }

    Split best_split_on_feature(const std::vector<size_t>& rows,
                                int32_t feature) const {
        std::vector<std::pair<double, double>> vals;  // (x_f, target)
        vals.reserve(rows.size());
        for (size_t r : rows) vals.emplace_back(x(r, size_t(feature)), target[r]);
        std::stable_sort(vals.begin(), vals.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        double total_sum = 0, total_sq = 0;
        for (const auto& [v, t] : vals) {
            total_sum += t;
            total_sq += t * t;
        }
        Split best;
        double left_sum = 0, left_sq = 0;
        size_t n = vals.size();
        for (size_t i = 0; i + 1 < n; ++i) {
            left_sum += vals[i].second;
            left_sq += vals[i].second * vals[i].second;
            if (vals[i].first == vals[i + 1].first) continue;
            size_t nl = i + 1, nr = n - nl;
            if (nl < params.min_samples_leaf || nr < params.min_samples_leaf) {
                continue;
            }
            double score = impurity_score(left_sum, left_sq, double(nl)) +
                           impurity_score(total_sum - left_sum,
                                          total_sq - left_sq, double(nr));
            if (score < best.score) {
                best.score = score;
                best.feature = feature;
                best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
            }
        }
        return best;
    }

    std::vector<int32_t> feature_subset() {
        size_t dims = x.cols();
        size_t m = params.resolve_max_features(dims);
        std::vector<int32_t> all(dims);
        std::iota(all.begin(), all.end(), 0);
        if (m >= dims) return all;
        // Partial Fisher-Yates, then sorted so the ascending split scan keeps
        // the lowest-feature tie-break.
        for (size_t i = 0; i < m; ++i) {
            size_t j = i + size_t(rng.uniform(uint64_t(dims - i)));
            std::swap(all[i], all[j]);
        }
        all.resize(m);
        std::sort(all.begin(), all.end());
        return all;
    }

    uint32_t build(std::vector<size_t> rows, size_t depth) {
        uint32_t index = static_cast<uint32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[index].value = leaf_value(rows);

        bool pure = true;
        for (size_t r : rows) {
            if (target[r] != target[rows[0]]) {
                pure = false;
                break;
            }
        }
        bool depth_capped = params.max_depth && depth >= *params.max_depth;
        if (pure || depth_capped || rows.size() < 2 * params.min_samples_leaf) {
            return index;
        }

        Split best;
        for (int32_t f : feature_subset()) {
            Split s = best_split_on_feature(rows, f);
            if (s.feature >= 0 && s.score < best.score) best = s;
        }
        if (best.feature < 0) return index;

        std::vector<size_t> left, right;
        for (size_t r : rows) {
            (x(r, size_t(best.feature)) < best.threshold ? left : right)
                .push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        tree.nodes[index].feature = best.feature;
        tree.nodes[index].threshold = best.threshold;
        uint32_t l = build(std::move(left), depth + 1);
        tree.nodes[index].left = l;
        uint32_t r = build(std::move(right), depth + 1);
        tree.nodes[index].right = r;
        return index;
    }
};

inline DecisionTree fit_tree(const Matrix& x, const std::vector<double>& target,
                             const std::vector<size_t>& rows,
                             SplitObjective objective,
                             const TreeEnsembleParams& params, Rng& rng) {
    TreeBuilder b{x, target, objective, params, rng, {}};
    b.build(rows, 0);
    return std::move(b.tree);
}

inline void require_binary_labels(const std::vector<int>& y) {
    bool pos = false, neg = false;
    for (int v : y) {
        if (v != 0 && v != 1) throw SpecInvalid("labels must be 0 or 1");
        (v != 0 ? pos : neg) = true;
    }
    if (!pos || !neg) throw DegenerateLabels("training labels are single-class");
}

}  // namespace detail

struct RandomForestModel {
    TreeEnsembleParams params;
    std::vector<DecisionTree> trees;

    double predict_proba(std::span<const double> x) const {
        double sum = 0;
        for (const auto& t : trees) sum += t.predict(x);
        return sum / double(trees.size());
    }
};

// Bootstrap draws are keyed on stable row ids, not row positions, so a
// permuted training set with matching ids grows the same forest.
inline RandomForestModel fit_random_forest(
    const Matrix& x, const std::vector<int>& y, const TreeEnsembleParams& params,
    std::vector<uint64_t> row_ids = {}) {
    params.validate();
    if (x.rows() != y.size()) throw LengthMismatch("feature/label row mismatch");
    if (x.rows() < 2) throw TooFewRecords("need at least two training rows");
    detail::require_binary_labels(y);
    if (row_ids.empty()) {
        row_ids.resize(x.rows());
        std::iota(row_ids.begin(), row_ids.end(), uint64_t{0});
    }
    if (row_ids.size() != x.rows()) {
        throw LengthMismatch("row id list does not match the training rows");
    }
    std::vector<size_t> by_id(x.rows());
    std::iota(by_id.begin(), by_id.end(), size_t{0});
    std::sort(by_id.begin(), by_id.end(), [&row_ids](size_t a, size_t b) {
        return row_ids[a] < row_ids[b];
    });
    for (size_t i = 0; i + 1 < by_id.size(); ++i) {
        if (row_ids[by_id[i]] == row_ids[by_id[i + 1]]) {
            throw SpecInvalid("duplicate training row id");
        }
    }

    std::vector<double> target(y.begin(), y.end());
    size_t n = x.rows();
    RandomForestModel model;
    model.params = params;
    for (size_t t = 0; t < params.n_estimators; ++t) {
        // Draw d of tree t picks the row holding the d-th sampled id rank.
        std::vector<size_t> sample;
        sample.reserve(n);
        for (size_t d = 0; d < n; ++d) {
            uint64_t pick = keyed_hash(params.seed, uint64_t{0xb001}, t, d) %
                            uint64_t(n);
            sample.push_back(by_id[size_t(pick)]);
        }
        std::sort(sample.begin(), sample.end(), [&row_ids](size_t a, size_t b) {
            return row_ids[a] < row_ids[b];
        });
        Rng tree_rng(keyed_hash(params.seed, uint64_t{0xf02e57}, t));
        DecisionTree tree = detail::fit_tree(
            x, target, sample, detail::SplitObjective::gini, params, tree_rng);
        // Leaf probabilities come from the full training set routed through
        // the bootstrap-grown structure.
        std::vector<double> sums(tree.nodes.size(), 0.0);
        std::vector<double> counts(tree.nodes.size(), 0.0);
        for (size_t i : by_id) {
            size_t leaf = tree.leaf_index(x.row_span(i));
            sums[leaf] += target[i];
            counts[leaf] += 1.0;
        }
        for (size_t k = 0; k < tree.nodes.size(); ++k) {
            if (tree.nodes[k].feature < 0 && counts[k] > 0.0) {
                tree.nodes[k].value = sums[k] / counts[k];
            }
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

struct GbtModel {
    TreeEnsembleParams params;
    double base_score = 0.0;  // prior log-odds
    std::vector<DecisionTree> stages;

    double decision_function(std::span<const double> x) const {
        double f = base_score;
        for (const auto& s : stages) f += params.learning_rate * s.predict(x);
        return f;
    }

    double predict_proba(std::span<const double> x) const {
        return sigmoid(decision_function(x));
    }
};

inline constexpr double kGbtLeafClip = 10.0;

inline GbtModel fit_gbt(const Matrix& x, const std::vector<int>& y,
                        const TreeEnsembleParams& params,
                        std::vector<uint64_t> row_ids = {}) {
    params.validate();
    if (x.rows() != y.size()) throw LengthMismatch("feature/label row mismatch");
    if (x.rows() < 2) throw TooFewRecords("need at least two training rows");
    detail::require_binary_labels(y);
    if (row_ids.empty()) {
        row_ids.resize(x.rows());
        std::iota(row_ids.begin(), row_ids.end(), uint64_t{0});
    }
    if (row_ids.size() != x.rows()) {
        throw LengthMismatch("row id list does not match the training rows");
    }
    std::vector<size_t> by_id(x.rows());
    std::iota(by_id.begin(), by_id.end(), size_t{0});
    std::sort(by_id.begin(), by_id.end(), [&row_ids](size_t a, size_t b) {
        return row_ids[a] < row_ids[b];
    });

    size_t n = x.rows();
    double prior = 0;
    for (int v : y) prior += v;
    prior /= double(n);

    GbtModel model;
    model.params = params;
    model.base_score = std::log(prior / (1.0 - prior));

    std::vector<double> f(n, model.base_score);
    std::vector<double> residual(n, 0.0);
    for (size_t k = 0; k < params.n_estimators; ++k) {
        for (size_t i = 0; i < n; ++i) {
            residual[i] = double(y[i]) - sigmoid(f[i]);
        }
        std::vector<size_t> rows;
        if (params.subsample >= 1.0) {
            rows = by_id;
        } else {
            for (size_t i : by_id) {
                double u = double(keyed_hash(params.seed, uint64_t{0x5b5a3}, k,
                                             row_ids[i]) >>
                                  11) *
                           0x1.0p-53;
                if (u < params.subsample) rows.push_back(i);
            }
            if (rows.size() < 2) rows = by_id;
        }
        Rng stage_rng(keyed_hash(params.seed, uint64_t{0x9b7}, k));
        DecisionTree tree = detail::fit_tree(
            x, residual, rows, detail::SplitObjective::mse, params, stage_rng);
        // Newton leaf values on the stage sample, clipped for stability.
        std::vector<double> num(tree.nodes.size(), 0.0);
        std::vector<double> den(tree.nodes.size(), 0.0);
        for (size_t i : rows) {
            size_t leaf = tree.leaf_index(x.row_span(i));
            double p = sigmoid(f[i]);
            num[leaf] += residual[i];
            den[leaf] += p * (1.0 - p);
        }
        for (size_t t = 0; t < tree.nodes.size(); ++t) {
            if (tree.nodes[t].feature >= 0) continue;
            double v = den[t] > 0.0 ? num[t] / den[t] : 0.0;
            tree.nodes[t].value = std::clamp(v, -kGbtLeafClip, kGbtLeafClip);
        }
        for (size_t i = 0; i < n; ++i) {
            f[i] += params.learning_rate * tree.predict(x.row_span(i));
        }
        model.stages.push_back(std::move(tree));
    }
    return model;
}

// Mean logistic loss of a boosted model on its input set.
inline double gbt_log_loss(const GbtModel& model, const Matrix& x,
                           const std::vector<int>& y) {
    double loss = 0;
    for (size_t i = 0; i < x.rows(); ++i) {
        loss += bce_from_logit(model.decision_function(x.row_span(i)), double(y[i]));
    }
    return loss / double(x.rows());
}

}  // namespace encflow
