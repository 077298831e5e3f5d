#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "encflow/common.hpp"

namespace encflow {

// Positive class = malicious.
struct Confusion {
    uint64_t tp = 0;
    uint64_t tn = 0;
    uint64_t fp = 0;
    uint64_t fn = 0;

    uint64_t total() const { return tp + tn + fp + fn; }
    bool operator==(const Confusion&) const = default;
};

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall_tpr = 0.0;
    double fpr = 0.0;
    double f1 = 0.0;
    double roc_auc = 0.0;
    Confusion confusion;
    // Names of metrics whose denominator was zero; their value is 0.0.
    std::vector<std::string> degenerate;
};

inline Confusion confusion(const std::vector<int>& labels,
                           const std::vector<int>& verdicts) {
    if (labels.size() != verdicts.size()) {
        throw LengthMismatch("labels and verdicts differ in length");
    }
    if (labels.empty()) throw EmptyInput("no predictions to score");
    Confusion c;
    for (size_t i = 0; i < labels.size(); ++i) {
        bool truth = labels[i] != 0;
        bool said = verdicts[i] != 0;
        if (truth && said) ++c.tp;
        else if (truth && !said) ++c.fn;
        else if (!truth && said) ++c.fp;
        else ++c.tn;
    }
    return c;
}

inline MetricsReport metrics(const Confusion& c) {
    MetricsReport r;
    r.confusion = c;
    auto ratio = [&r](uint64_t num, uint64_t den, const char* name) {
        if (den == 0) {
            r.degenerate.push_back(name);
            return 0.0;
        }
        return double(num) / double(den);
    };
    r.accuracy = ratio(c.tp + c.tn, c.total(), "accuracy");
    r.recall_tpr = ratio(c.tp, c.tp + c.fn, "recall");
    r.fpr = ratio(c.fp, c.fp + c.tn, "fpr");
    r.precision = ratio(c.tp, c.tp + c.fp, "precision");
    double denom = r.precision + r.recall_tpr;
    if (denom == 0.0) {
        r.degenerate.push_back("f1");
        r.f1 = 0.0;
    } else {
        r.f1 = 2.0 * r.precision * r.recall_tpr / denom;
    }
    return r;
}

// Probability that a random positive outscores a random negative, ties 0.5.
// Computed through average ranks, which equals trapezoidal ROC integration.
inline double roc_auc(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw LengthMismatch("scores and labels differ in length");
    }
    uint64_t pos = 0, neg = 0;
    for (int y : labels) (y != 0 ? pos : neg) += 1;
    if (pos == 0 || neg == 0) {
        throw SingleClass("roc_auc needs both classes");
    }
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&scores](size_t a, size_t b) {
        return scores[a] < scores[b];
    });
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * double(i + 1 + j);  // ranks are 1-based
        for (size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    return (pos_rank_sum - 0.5 * double(pos) * double(pos + 1)) /
           (double(pos) * double(neg));
}

// Threshold at 0.5, plus AUC when the label set carries both classes.
inline MetricsReport evaluate_scores(const std::vector<double>& scores,
                                     const std::vector<int>& labels,
                                     double threshold = 0.5) {
    std::vector<int> verdicts;
    verdicts.reserve(scores.size());
    for (double s : scores) verdicts.push_back(s >= threshold ? 1 : 0);
    MetricsReport r = metrics(confusion(labels, verdicts));
    bool pos = false, neg = false;
    for (int y : labels) (y != 0 ? pos : neg) = true;
    if (pos && neg) {
        r.roc_auc = roc_auc(scores, labels);
    } else {
        r.degenerate.push_back("roc_auc");
    }
    return r;
}

struct ReportRow {
    std::string name;
    MetricsReport report;
};

inline std::string render_report_table(const std::vector<ReportRow>& rows) {
    std::string out;
    auto cell = [](double v) {
        std::string s = format_double(v);
        if (s.size() > 7) s.resize(7);
        while (s.size() < 8) s.push_back(' ');
        return s;
    };
    size_t name_width = 5;
    for (const auto& row : rows) name_width = std::max(name_width, row.name.size());
    out += "model";
    out.append(name_width - 5 + 2, ' ');
    out += "Accuracy  F1        Recall    Precision  ROC-AUC   FPR       TPR\n";
    for (const auto& row : rows) {
        const MetricsReport& m = row.report;
        out += row.name;
        out.append(name_width - row.name.size() + 2, ' ');
        out += cell(m.accuracy) + "  " + cell(m.f1) + "  " + cell(m.recall_tpr) +
               "  " + cell(m.precision) + "   " + cell(m.roc_auc) + "  " +
               cell(m.fpr) + "  " + cell(m.recall_tpr);
        out += '\n';
    }
    return out;
}

inline nlohmann::json report_json(const MetricsReport& m) {
    return nlohmann::json{
        {"accuracy", m.accuracy},
        {"precision", m.precision},
        {"recall_tpr", m.recall_tpr},
        {"fpr", m.fpr},
        {"f1", m.f1},
        {"roc_auc", m.roc_auc},
        {"confusion",
         {{"tp", m.confusion.tp},
          {"tn", m.confusion.tn},
          {"fp", m.confusion.fp},
          {"fn", m.confusion.fn}}},
        {"degenerate", m.degenerate}};
}

inline std::string report_jsonl(const std::vector<ReportRow>& rows) {
    std::string out;
    for (const auto& row : rows) {
        nlohmann::json j = report_json(row.report);
        j["model"] = row.name;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace encflow
