#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "encflow/common.hpp"

namespace encflow {

// The frozen feature catalog. Everything downstream (records, CSV headers,
// tensor layouts, model inputs) is ordered by this manifest, and the counts
// are validated on every load so a stale or hand-edited file cannot silently
// shift feature positions.

struct AggregateSpec {
    std::string stat;    // mean | median | max | min | std | var
    std::string series;  // base series name, e.g. ip_len_fwd

    std::string base_name() const { return stat + "_" + series; }
    std::string enc_name() const { return "enc_" + base_name(); }
    std::string trad_name() const { return "trad_" + base_name(); }

    bool operator==(const AggregateSpec&) const = default;
};

struct RatioSpec {
    std::string trad_name;   // denominator operand
    std::string enc_name;    // numerator operand
    std::string ratio_name;

    bool operator==(const RatioSpec&) const = default;
};

inline const std::vector<std::string>& aggregate_stat_names() {
    static const std::vector<std::string> kStats{"mean", "median", "max",
                                                 "min", "std", "var"};
    return kStats;
}

inline const std::vector<std::string>& aggregate_series_names() {
    static const std::vector<std::string> kSeries{
        "ip_len_fwd", "iat_fwd", "iat_bwd",    "ttl_fwd", "ttl_bwd",
        "window_fwd", "window_bwd", "ip_len",  "ip_len_bwd"};
    return kSeries;
}

class FeatureManifest {
public:
    std::string version;
    std::vector<std::string> enc_packet_features;    // per-packet series names
    std::vector<std::string> enc_session_features;   // session scalar names
    std::vector<AggregateSpec> aggregate_specs;
    std::vector<RatioSpec> ratio_specs;
    std::vector<std::string> time_feature_list;      // per-packet, 85 columns
    std::vector<std::string> payload_feature_list;   // per-packet, 38 columns

    static constexpr size_t kPacketFeatureCount = 4;
    static constexpr size_t kSessionFeatureCount = 20;
    static constexpr size_t kAggregateCount = 54;
    static constexpr size_t kRatioCount = 65;
    static constexpr size_t kTimeFeatureCount = 85;
    static constexpr size_t kPayloadFeatureCount = 38;

    static std::string trad_counterpart(const std::string& enc_name) {
        if (enc_name.rfind("enc_", 0) != 0) {
            throw ManifestMismatch("not an enc-prefixed name: " + enc_name);
        }
        return "trad_" + enc_name.substr(4);
    }

    void validate() const {
        auto expect = [](size_t got, size_t want, const char* what) {
            if (got != want) {
                throw ManifestMismatch(std::string(what) + ": expected " +
                                       std::to_string(want) + ", got " +
                                       std::to_string(got));
            }
        };
        if (version.empty()) {
            throw ManifestMismatch("manifest version missing");
        }
        expect(enc_packet_features.size(), kPacketFeatureCount,
               "enc packet features");
        expect(enc_session_features.size(), kSessionFeatureCount,
               "enc session features");
        expect(aggregate_specs.size(), kAggregateCount, "aggregate specs");
        expect(ratio_specs.size(), kRatioCount, "ratio specs");
        expect(time_feature_list.size(), kTimeFeatureCount,
               "time feature list");
        expect(payload_feature_list.size(), kPayloadFeatureCount,
               "payload feature list");

        std::set<std::string> seen;
        auto unique = [&seen](const std::string& n) {
            if (!seen.insert(n).second) {
                throw ManifestMismatch("duplicate feature name: " + n);
            }
        };
        for (const auto& n : enc_packet_features) unique(n);
        for (const auto& n : enc_session_features) unique(n);
        for (const auto& a : aggregate_specs) unique(a.enc_name());
        for (const auto& r : ratio_specs) unique(r.ratio_name);
        seen.clear();
        for (const auto& n : time_feature_list) unique(n);
        seen.clear();
        for (const auto& n : payload_feature_list) unique(n);
    }

    // Scalar names a FeatureRecord's session_features map must carry: every
    // enc scalar plus its traditional counterpart.
    std::set<std::string> session_key_set() const {
        std::set<std::string> keys;
        for (const auto& n : enc_session_features) {
            keys.insert(n);
            keys.insert(trad_counterpart(n));
        }
        for (const auto& a : aggregate_specs) {
            keys.insert(a.enc_name());
            keys.insert(a.trad_name());
        }
        return keys;
    }

    std::set<std::string> packet_series_key_set() const {
        std::set<std::string> keys;
        for (const auto& n : enc_packet_features) {
            keys.insert(n);
            keys.insert(trad_counterpart(n));
        }
        return keys;
    }

    // Column order for the one-row-per-session CSV export.
    std::vector<std::string> scalar_column_order() const {
        std::vector<std::string> cols;
        for (const auto& n : enc_session_features) cols.push_back(n);
        for (const auto& a : aggregate_specs) cols.push_back(a.enc_name());
        for (const auto& n : enc_session_features) {
            cols.push_back(trad_counterpart(n));
        }
        for (const auto& a : aggregate_specs) cols.push_back(a.trad_name());
        for (const auto& r : ratio_specs) cols.push_back(r.ratio_name);
        return cols;
    }

    static FeatureManifest builtin();
    std::string serialize() const;
    static FeatureManifest parse(const std::string& text);
};

inline FeatureManifest FeatureManifest::builtin() {
    FeatureManifest m;
    m.version = "enc-manifest-v1";

    m.enc_packet_features = {"enc_iat_fwd", "enc_iat_bwd",
                             "enc_ratio_to_prev", "enc_ip_ratio"};

    m.enc_session_features = {
        "enc_flow_duration",      "enc_flow_duration_bwd",
        "enc_flow_duration_fwd",  "enc_total_ttl_fwd",
        "enc_total_ttl_bwd",      "enc_total_window_fwd",
        "enc_total_window_bwd",   "enc_total_ip_len",
        "enc_total_ttl",          "enc_total_payload_fwd",
        "enc_total_payload_bwd",  "enc_total_ip_header_fwd",
        "enc_total_ip_header_bwd","enc_total_tcp_header_fwd",
        "enc_total_tcp_header_bwd","enc_packet_count_fwd",
        "enc_packet_count_bwd",   "enc_total_segment_fwd",
        "enc_total_segment_bwd",  "enc_total_payload"};

    for (const auto& series : aggregate_series_names()) {
        for (const auto& stat : aggregate_stat_names()) {
            m.aggregate_specs.push_back({stat, series});
        }
    }

    // Ratios cover every scalar pair except the variance aggregates: a
    // variance ratio is the squared standard-deviation ratio, so it carries
    // no extra signal and the catalog stays at its declared width.
    for (const auto& enc : m.enc_session_features) {
        m.ratio_specs.push_back(
            {trad_counterpart(enc), enc, "ratio_" + enc.substr(4)});
    }
    for (const auto& a : m.aggregate_specs) {
        if (a.stat == "var") continue;
        m.ratio_specs.push_back(
            {a.trad_name(), a.enc_name(), "ratio_" + a.base_name()});
    }

    m.time_feature_list.push_back("pkt_index");
    const char* time_metrics[] = {"iat",      "dur",       "ttl",
                                  "iat_delta","iat_lag2",  "iat_lag3",
                                  "iat_mean", "iat_dev",   "rate",
                                  "ttl_cum",  "ttl_delta", "ttl_mean",
                                  "dur_frac", "iat_ratio"};
    for (const char* metric : time_metrics) {
        for (const char* scope : {"trad", "enc"}) {
            for (const char* dir : {"all", "fwd", "bwd"}) {
                m.time_feature_list.push_back(std::string("t_") + metric +
                                              "_" + scope + "_" + dir);
            }
        }
    }

    const char* payload_metrics[] = {
        "ip_len",      "payload",     "ip_hdr",      "tcp_hdr",
        "window",      "seg_len",     "ratio_prev",  "ip_ratio",
        "payload_fwd", "payload_bwd", "ip_len_fwd",  "ip_len_bwd",
        "window_fwd",  "window_bwd",  "payload_cum", "ip_len_cum",
        "payload_frac","hdr_len",     "payload_delta"};
    for (const char* metric : payload_metrics) {
        for (const char* scope : {"trad", "enc"}) {
            m.payload_feature_list.push_back(std::string("p_") + metric +
                                             "_" + scope);
        }
    }

    m.validate();
    return m;
}

inline std::string FeatureManifest::serialize() const {
    std::ostringstream out;
    out << "version " << version << "\n";
    auto section = [&out](const char* name) { out << "[" << name << "]\n"; };
    section("enc_packet_features");
    for (const auto& n : enc_packet_features) out << n << "\n";
    section("enc_session_features");
    for (const auto& n : enc_session_features) out << n << "\n";
    section("aggregate_specs");
    for (const auto& a : aggregate_specs) {
        out << a.stat << " " << a.series << "\n";
    }
    section("ratio_specs");
    for (const auto& r : ratio_specs) {
        out << r.trad_name << " " << r.enc_name << " " << r.ratio_name << "\n";
    }
    section("time_feature_list");
    for (const auto& n : time_feature_list) out << n << "\n";
    section("payload_feature_list");
    for (const auto& n : payload_feature_list) out << n << "\n";
    return out.str();
}

inline FeatureManifest FeatureManifest::parse(const std::string& text) {
    FeatureManifest m;
    std::istringstream in(text);
    std::string line;
    std::string section;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("version ", 0) == 0) {
            m.version = line.substr(8);
            continue;
        }
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        std::istringstream fields(line);
        if (section == "enc_packet_features") {
            m.enc_packet_features.push_back(line);
        } else if (section == "enc_session_features") {
            m.enc_session_features.push_back(line);
        } else if (section == "aggregate_specs") {
            AggregateSpec a;
            if (!(fields >> a.stat >> a.series)) {
                throw ConfigError("bad aggregate spec line: " + line);
            }
            m.aggregate_specs.push_back(a);
        } else if (section == "ratio_specs") {
            RatioSpec r;
            if (!(fields >> r.trad_name >> r.enc_name >> r.ratio_name)) {
                throw ConfigError("bad ratio spec line: " + line);
            }
            m.ratio_specs.push_back(r);
        } else if (section == "time_feature_list") {
            m.time_feature_list.push_back(line);
        } else if (section == "payload_feature_list") {
            m.payload_feature_list.push_back(line);
        } else {
            throw ConfigError("line outside any manifest section: " + line);
        }
    }
    m.validate();
    return m;
}

}  // namespace encflow
