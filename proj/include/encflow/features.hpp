#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "encflow/enc_filter.hpp"
#include "encflow/manifest.hpp"
#include "encflow/matrix.hpp"

namespace encflow {

enum class Label : uint8_t { unlabeled = 0, benign = 1, malicious = 2 };

inline const char* label_name(Label l) {
    switch (l) {
        case Label::benign: return "benign";
        case Label::malicious: return "malicious";
        default: return "unlabeled";
    }
}

inline Label label_from_name(const std::string& s) {
    if (s == "benign") return Label::benign;
    if (s == "malicious") return Label::malicious;
    if (s == "unlabeled") return Label::unlabeled;
    throw ConfigError("unknown label: " + s);
}

struct AggStats {
    double mean = 0, median = 0, max = 0, min = 0, std_dev = 0, var = 0;

    double by_stat(const std::string& stat) const {
        if (stat == "mean") return mean;
        if (stat == "median") return median;
        if (stat == "max") return max;
        if (stat == "min") return min;
        if (stat == "std") return std_dev;
        if (stat == "var") return var;
        throw ManifestMismatch("unknown aggregate stat: " + stat);
    }
};

// Population statistics; median of an even-length series averages the two
// middle elements.
inline AggStats aggregate_stats(const std::vector<double>& series) {
    if (series.empty()) {
        throw EmptySeries("aggregate_stats over an empty series");
    }
    AggStats s;
    double sum = 0;
    s.min = series[0];
    s.max = series[0];
    for (double v : series) {
        sum += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean = sum / static_cast<double>(series.size());
    double sq = 0;
    for (double v : series) sq += (v - s.mean) * (v - s.mean);
    s.var = sq / static_cast<double>(series.size());
    s.std_dev = std::sqrt(s.var);

    std::vector<double> sorted = series;
    std::sort(sorted.begin(), sorted.end());
    size_t n = sorted.size();
    s.median = (n % 2 == 1) ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    return s;
}

namespace detail {

using PacketRefs = std::vector<const ParsedPacket*>;

inline double seconds_between(int64_t from_ns, int64_t to_ns) {
    return static_cast<double>(to_ns - from_ns) / 1e9;
}

inline PacketRefs directional(const PacketRefs& scope, Dir d) {
    PacketRefs out;
    for (const auto* p : scope) {
        if (p->direction == d) out.push_back(p);
    }
    return out;
}

inline std::vector<double> iat_series(const PacketRefs& seq) {
    std::vector<double> out;
    out.reserve(seq.size());
    for (size_t i = 0; i < seq.size(); ++i) {
        out.push_back(i == 0 ? 0.0
                            : seconds_between(seq[i - 1]->timestamp_ns,
                                              seq[i]->timestamp_ns));
    }
    return out;
}

inline std::vector<double> field_series(const PacketRefs& seq,
                                        double (*get)(const ParsedPacket&)) {
    std::vector<double> out;
    out.reserve(seq.size());
    for (const auto* p : seq) out.push_back(get(*p));
    return out;
}

inline double get_ip_len(const ParsedPacket& p) {
    return static_cast<double>(p.ip_total_length);
}
inline double get_ttl(const ParsedPacket& p) {
    return static_cast<double>(p.ttl);
}
inline double get_window(const ParsedPacket& p) {
    return static_cast<double>(p.tcp_window);
}

inline double span_seconds(const PacketRefs& seq) {
    if (seq.size() < 2) return 0.0;
    return seconds_between(seq.front()->timestamp_ns,
                           seq.back()->timestamp_ns);
}

// The 20 session scalars plus the 54 aggregates for one scope, keyed by base
// name (no enc_/trad_ prefix).
inline std::map<std::string, double> scope_scalars(const PacketRefs& scope) {
    std::map<std::string, double> out;
    PacketRefs fwd = directional(scope, Dir::forward);
    PacketRefs bwd = directional(scope, Dir::backward);

    auto total = [](const PacketRefs& seq,
                    double (*get)(const ParsedPacket&)) {
        double s = 0;
        for (const auto* p : seq) s += get(*p);
        return s;
    };

    out["flow_duration"] = span_seconds(scope);
    out["flow_duration_fwd"] = span_seconds(fwd);
    out["flow_duration_bwd"] = span_seconds(bwd);
    out["total_ttl_fwd"] = total(fwd, get_ttl);
    out["total_ttl_bwd"] = total(bwd, get_ttl);
    out["total_ttl"] = total(scope, get_ttl);
    out["total_window_fwd"] = total(fwd, get_window);
    out["total_window_bwd"] = total(bwd, get_window);
    out["total_ip_len"] = total(scope, get_ip_len);
    out["total_payload_fwd"] = total(fwd, [](const ParsedPacket& p) {
        return static_cast<double>(p.payload_length);
    });
    out["total_payload_bwd"] = total(bwd, [](const ParsedPacket& p) {
        return static_cast<double>(p.payload_length);
    });
    out["total_payload"] = total(scope, [](const ParsedPacket& p) {
        return static_cast<double>(p.payload_length);
    });
    out["total_ip_header_fwd"] = total(fwd, [](const ParsedPacket& p) {
        return static_cast<double>(p.ip_header_length);
    });
    out["total_ip_header_bwd"] = total(bwd, [](const ParsedPacket& p) {
        return static_cast<double>(p.ip_header_length);
    });
    out["total_tcp_header_fwd"] = total(fwd, [](const ParsedPacket& p) {
        return static_cast<double>(p.tcp_header_length);
    });
    out["total_tcp_header_bwd"] = total(bwd, [](const ParsedPacket& p) {
        return static_cast<double>(p.tcp_header_length);
    });
    out["packet_count_fwd"] = static_cast<double>(fwd.size());
    out["packet_count_bwd"] = static_cast<double>(bwd.size());
    out["total_segment_fwd"] = total(fwd, [](const ParsedPacket& p) {
        return static_cast<double>(p.tcp_header_length + p.payload_length);
    });
    out["total_segment_bwd"] = total(bwd, [](const ParsedPacket& p) {
        return static_cast<double>(p.tcp_header_length + p.payload_length);
    });

    auto agg = [&out](const std::string& series_name,
                      const std::vector<double>& series) {
        AggStats s = series.empty() ? AggStats{} : aggregate_stats(series);
        for (const auto& stat : aggregate_stat_names()) {
            out[stat + "_" + series_name] = s.by_stat(stat);
        }
    };
    agg("ip_len_fwd", field_series(fwd, get_ip_len));
    agg("iat_fwd", iat_series(fwd));
    agg("iat_bwd", iat_series(bwd));
    agg("ttl_fwd", field_series(fwd, get_ttl));
    agg("ttl_bwd", field_series(bwd, get_ttl));
    agg("window_fwd", field_series(fwd, get_window));
    agg("window_bwd", field_series(bwd, get_window));
    agg("ip_len", field_series(scope, get_ip_len));
    agg("ip_len_bwd", field_series(bwd, get_ip_len));
    return out;
}

// Per-packet series over one scope, row-aligned with the scope sequence.
// Directional inter-arrival columns hold 0 at the other direction's rows.
inline std::map<std::string, std::vector<double>> scope_packet_series(
    const PacketRefs& scope) {
    size_t n = scope.size();
    std::map<std::string, std::vector<double>> out;
    for (const char* k :
         {"iat", "iat_fwd", "iat_bwd", "ip_total_length", "ip_header_length",
          "tcp_header_length", "payload_length", "ttl", "tcp_window",
          "ratio_to_prev", "ip_ratio"}) {
        out[k].assign(n, 0.0);
    }

    const ParsedPacket* prev = nullptr;
    const ParsedPacket* prev_dir[2] = {nullptr, nullptr};
    for (size_t i = 0; i < n; ++i) {
        const ParsedPacket& p = *scope[i];
        if (prev) {
            out["iat"][i] = seconds_between(prev->timestamp_ns, p.timestamp_ns);
        }
        size_t d = p.is_forward() ? 0 : 1;
        const char* dir_key = p.is_forward() ? "iat_fwd" : "iat_bwd";
        if (prev_dir[d]) {
            out[dir_key][i] =
                seconds_between(prev_dir[d]->timestamp_ns, p.timestamp_ns);
        }
        out["ip_total_length"][i] = get_ip_len(p);
        out["ip_header_length"][i] = static_cast<double>(p.ip_header_length);
        out["tcp_header_length"][i] = static_cast<double>(p.tcp_header_length);
        out["payload_length"][i] = static_cast<double>(p.payload_length);
        out["ttl"][i] = get_ttl(p);
        out["tcp_window"][i] = get_window(p);
        out["ratio_to_prev"][i] =
            (prev && get_ip_len(*prev) > 0.0) ? get_ip_len(p) / get_ip_len(*prev)
                                              : 1.0;
        out["ip_ratio"][i] =
            p.ip_total_length > 0
                ? static_cast<double>(p.ip_header_length) / get_ip_len(p)
                : 0.0;
        prev = &p;
        prev_dir[d] = &p;
    }
    return out;
}

}  // namespace detail

struct PacketFeatures {
    // Keys: iat, iat_fwd, iat_bwd, ip_total_length, ip_header_length,
    // tcp_header_length, payload_length, ttl, tcp_window, ratio_to_prev,
    // ip_ratio. enc series run over enc_packets, trad over all_packets.
    std::map<std::string, std::vector<double>> enc;
    std::map<std::string, std::vector<double>> trad;
};

inline PacketFeatures packet_features(const EncView& view) {
    detail::PacketRefs all, enc;
    for (const auto& p : view.all_packets()) all.push_back(&p);
    for (size_t i = 0; i < view.enc_size(); ++i) enc.push_back(&view.enc(i));
    PacketFeatures out;
    out.enc = detail::scope_packet_series(enc);
    out.trad = detail::scope_packet_series(all);
    return out;
}

// All 148 session scalars: 20 + 54 per scope, prefixed enc_/trad_.
inline std::map<std::string, double> session_features(const EncView& view) {
    if (view.enc_size() == 0) {
        throw EmptyEncView("session_features: no encrypted packets");
    }
    detail::PacketRefs all, enc;
    for (const auto& p : view.all_packets()) all.push_back(&p);
    for (size_t i = 0; i < view.enc_size(); ++i) enc.push_back(&view.enc(i));

    std::map<std::string, double> out;
    for (const auto& [name, value] : detail::scope_scalars(enc)) {
        out["enc_" + name] = value;
    }
    for (const auto& [name, value] : detail::scope_scalars(all)) {
        out["trad_" + name] = value;
    }
    return out;
}

struct RatioResult {
    std::map<std::string, double> values;
    std::vector<std::string> degenerate;  // enc > 0 over a zero denominator
};

inline RatioResult ratio_features(const std::map<std::string, double>& scalars,
                                  const FeatureManifest& manifest) {
    RatioResult out;
    for (const auto& spec : manifest.ratio_specs) {
        auto t = scalars.find(spec.trad_name);
        auto e = scalars.find(spec.enc_name);
        if (t == scalars.end()) {
            throw MissingOperand("ratio operand absent: " + spec.trad_name);
        }
        if (e == scalars.end()) {
            throw MissingOperand("ratio operand absent: " + spec.enc_name);
        }
        double value;
        if (t->second == 0.0) {
            if (e->second == 0.0) {
                value = 1.0;
            } else {
                value = 0.0;
                out.degenerate.push_back(spec.ratio_name);
            }
        } else {
            value = e->second / t->second;
        }
        out.values[spec.ratio_name] = value;
    }
    return out;
}

struct FeatureRecord {
    std::string session_id;
    Label label = Label::unlabeled;
    std::map<std::string, std::vector<double>> packet_series;
    std::map<std::string, double> session_features;
    std::map<std::string, double> ratio_features;
    std::vector<std::string> degenerate_ratios;
    Matrix time_rows;       // |all_packets| x 85, manifest column order
    Matrix payload_rows;    // |all_packets| x 38
    std::vector<uint8_t> row_is_enc;
    std::string manifest_version;
};

namespace detail {

// Running state for one (scope, direction) membership set of the time matrix.
struct TimeSetState {
    size_t k = 0;
    int64_t first_ts = 0;
    int64_t prev_ts = 0;
    int64_t lag2_ts = 0;
    int64_t lag3_ts = 0;
    double prev_iat = 0;
    double ttl_sum = 0;
    double prev_ttl = 0;
    double dur = 0;  // duration-so-far after the latest member
};

inline void fill_time_row(double* row, size_t set_col, TimeSetState& st,
                          const ParsedPacket& p, const TimeSetState& scope_all) {
    ++st.k;
    double iat = st.k > 1 ? seconds_between(st.prev_ts, p.timestamp_ns) : 0.0;
    if (st.k == 1) st.first_ts = p.timestamp_ns;
    double dur = seconds_between(st.first_ts, p.timestamp_ns);
    st.dur = dur;
    double ttl = get_ttl(p);
    st.ttl_sum += ttl;
    double kd = static_cast<double>(st.k);

    // Column stride: metrics are laid out metric-major, 6 set-columns each.
    auto put = [&](size_t metric, double v) { row[1 + metric * 6 + set_col] = v; };
    put(0, iat);
    put(1, dur);
    put(2, ttl);
    put(3, iat - st.prev_iat);
    put(4, st.k > 2 ? seconds_between(st.lag2_ts, p.timestamp_ns) : 0.0);
    put(5, st.k > 3 ? seconds_between(st.lag3_ts, p.timestamp_ns) : 0.0);
    double iat_mean = st.k > 1 ? dur / (kd - 1.0) : 0.0;
    put(6, iat_mean);
    put(7, iat - iat_mean);
    put(8, dur > 0.0 ? (kd - 1.0) / dur : 0.0);
    put(9, st.ttl_sum);
    put(10, st.k > 1 ? ttl - st.prev_ttl : 0.0);
    put(11, st.ttl_sum / kd);
    put(12, scope_all.dur > 0.0 ? dur / scope_all.dur : 0.0);
    put(13, st.k > 1 && st.prev_iat > 0.0 ? iat / st.prev_iat : 1.0);

    st.lag3_ts = st.lag2_ts;
    st.lag2_ts = st.prev_ts;
    st.prev_ts = p.timestamp_ns;
    st.prev_iat = iat;
    st.prev_ttl = ttl;
}

// Running state for one scope of the payload matrix.
struct PayloadScopeState {
    size_t k = 0;
    double prev_ip_len = 0;
    double prev_payload = 0;
    double payload_cum = 0;
    double ip_len_cum = 0;
};

inline void fill_payload_row(double* row, size_t scope_col,
                             PayloadScopeState& st, const ParsedPacket& p) {
    ++st.k;
    double ip_len = get_ip_len(p);
    double payload = static_cast<double>(p.payload_length);
    double ip_hdr = static_cast<double>(p.ip_header_length);
    double tcp_hdr = static_cast<double>(p.tcp_header_length);
    double window = get_window(p);
    bool fwd = p.is_forward();
    st.payload_cum += payload;
    st.ip_len_cum += ip_len;

    auto put = [&](size_t metric, double v) { row[metric * 2 + scope_col] = v; };
    put(0, ip_len);
    put(1, payload);
    put(2, ip_hdr);
    put(3, tcp_hdr);
    put(4, window);
    put(5, tcp_hdr + payload);
    put(6, st.k > 1 && st.prev_ip_len > 0.0 ? ip_len / st.prev_ip_len : 1.0);
    put(7, ip_len > 0.0 ? ip_hdr / ip_len : 0.0);
    put(8, fwd ? payload : 0.0);
    put(9, fwd ? 0.0 : payload);
    put(10, fwd ? ip_len : 0.0);
    put(11, fwd ? 0.0 : ip_len);
    put(12, fwd ? window : 0.0);
    put(13, fwd ? 0.0 : window);
    put(14, st.payload_cum);
    put(15, st.ip_len_cum);
    put(16, st.payload_cum > 0.0 ? payload / st.payload_cum : 0.0);
    put(17, ip_hdr + tcp_hdr);
    put(18, st.k > 1 ? payload - st.prev_payload : 0.0);

    st.prev_ip_len = ip_len;
    st.prev_payload = payload;
}

}  // namespace detail

// Per-packet matrices over all_packets in manifest column order. Enc-scope
// columns are zero at plaintext rows: the packet is not a member of any
// enc set.
inline void build_packet_matrices(const EncView& view, FeatureRecord& record) {
    const auto& all = view.all_packets();
    size_t n = all.size();
    record.time_rows = Matrix(n, FeatureManifest::kTimeFeatureCount);
    record.payload_rows = Matrix(n, FeatureManifest::kPayloadFeatureCount);
    record.row_is_enc.assign(n, 0);

    // Set columns: scope-major {trad, enc}, direction-minor {all, fwd, bwd}.
    detail::TimeSetState time_state[6];
    detail::PayloadScopeState payload_state[2];

    for (size_t i = 0; i < n; ++i) {
        const ParsedPacket& p = all[i];
        bool enc = p.enc_class == EncClass::encrypted;
        record.row_is_enc[i] = enc ? 1 : 0;
        double* trow = record.time_rows.row(i);
        trow[0] = static_cast<double>(i);
        size_t dir_col = p.is_forward() ? 1 : 2;

        detail::fill_time_row(trow, 0, time_state[0], p, time_state[0]);
        detail::fill_time_row(trow, dir_col, time_state[dir_col], p,
                              time_state[0]);
        if (enc) {
            detail::fill_time_row(trow, 3, time_state[3], p, time_state[3]);
            detail::fill_time_row(trow, 3 + dir_col, time_state[3 + dir_col],
                                  p, time_state[3]);
        }

        double* prow = record.payload_rows.row(i);
        detail::fill_payload_row(prow, 0, payload_state[0], p);
        if (enc) {
            detail::fill_payload_row(prow, 1, payload_state[1], p);
        }
    }
}

inline FeatureRecord build_feature_record(const Session& session,
                                          const EncPolicy& policy,
                                          const FeatureManifest& manifest) {
    manifest.validate();
    Session owned;
    const Session* src = &session;
    if (!session.is_encrypted) {
        owned = classify_packets(session, policy);
        for (const auto& p : owned.packets) {
            if (p.enc_class == EncClass::encrypted) {
                owned.is_encrypted = true;
                break;
            }
        }
        src = &owned;
    }
    EncView view = encrypted_view(*src);

    FeatureRecord record;
    record.session_id =
        src->key.to_string() + "#" + std::to_string(src->first_ts());
    record.manifest_version = manifest.version;
    record.session_features = session_features(view);

    PacketFeatures pf = packet_features(view);
    auto adopt = [&record](const std::map<std::string, std::vector<double>>& in,
                           const char* series_key, const std::string& out_key) {
        record.packet_series[out_key] = in.at(series_key);
    };
    adopt(pf.enc, "iat_fwd", "enc_iat_fwd");
    adopt(pf.enc, "iat_bwd", "enc_iat_bwd");
    adopt(pf.enc, "ratio_to_prev", "enc_ratio_to_prev");
    adopt(pf.enc, "ip_ratio", "enc_ip_ratio");
    adopt(pf.trad, "iat_fwd", "trad_iat_fwd");
    adopt(pf.trad, "iat_bwd", "trad_iat_bwd");
    adopt(pf.trad, "ratio_to_prev", "trad_ratio_to_prev");
    adopt(pf.trad, "ip_ratio", "trad_ip_ratio");

    RatioResult ratios = ratio_features(record.session_features, manifest);
    record.ratio_features = std::move(ratios.values);
    record.degenerate_ratios = std::move(ratios.degenerate);

    build_packet_matrices(view, record);
    return record;
}

// Exact key-set equality against the manifest, plus finiteness.
inline void validate_record(const FeatureRecord& record,
                            const FeatureManifest& manifest) {
    auto keys_of = [](const auto& m) {
        std::set<std::string> keys;
        for (const auto& [k, v] : m) keys.insert(k);
        return keys;
    };
    if (keys_of(record.session_features) != manifest.session_key_set()) {
        throw ManifestMismatch("session feature keys diverge from manifest");
    }
    std::set<std::string> ratio_keys;
    for (const auto& r : manifest.ratio_specs) ratio_keys.insert(r.ratio_name);
    if (keys_of(record.ratio_features) != ratio_keys) {
        throw ManifestMismatch("ratio keys diverge from manifest");
    }
    if (keys_of(record.packet_series) != manifest.packet_series_key_set()) {
        throw ManifestMismatch("packet series keys diverge from manifest");
    }
    auto check_finite = [](double v, const std::string& name) {
        if (!std::isfinite(v)) {
            throw RangeError("non-finite feature value: " + name);
        }
    };
    for (const auto& [k, v] : record.session_features) check_finite(v, k);
    for (const auto& [k, v] : record.ratio_features) check_finite(v, k);
    for (const auto& [k, series] : record.packet_series) {
        for (double v : series) check_finite(v, k);
    }
    for (double v : record.time_rows.data()) check_finite(v, "time_rows");
    for (double v : record.payload_rows.data()) check_finite(v, "payload_rows");
    if (record.manifest_version != manifest.version) {
        throw ManifestMismatch("record built against manifest version " +
                               record.manifest_version);
    }
}

// ----------------------------------------------------------------------------
// Export
// ----------------------------------------------------------------------------

inline std::string feature_csv(const std::vector<FeatureRecord>& records,
                               const FeatureManifest& manifest) {
    std::vector<std::string> cols = manifest.scalar_column_order();
    std::string out = "session_id,label";
    for (const auto& c : cols) {
        out += ",";
        out += c;
    }
    out += ",degenerate_ratios\n";
    for (const auto& r : records) {
        out += r.session_id;
        out += ",";
        out += label_name(r.label);
        for (const auto& c : cols) {
            auto it = r.session_features.find(c);
            double v = (it != r.session_features.end())
                           ? it->second
                           : r.ratio_features.at(c);
            out += ",";
            out += format_double(v);
        }
        out += ",";
        for (size_t i = 0; i < r.degenerate_ratios.size(); ++i) {
            if (i) out += ";";
            out += r.degenerate_ratios[i];
        }
        out += "\n";
    }
    return out;
}

namespace detail {

inline nlohmann::json matrix_rows_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (size_t r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_rows_json(const nlohmann::json& rows) {
    if (!rows.is_array()) throw ConfigError("matrix field is not an array");
    if (rows.empty()) return Matrix();
    size_t cols = rows.front().size();
    Matrix m(rows.size(), cols);
    for (size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows.at(r);
        if (row.size() != cols) {
            throw ConfigError("ragged matrix rows in feature file");
        }
        for (size_t c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
    }
    return m;
}

}  // namespace detail

// One JSON object per line; map keys serialize sorted, so output is
// byte-stable.
inline std::string feature_jsonl(const std::vector<FeatureRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j;
        j["session_id"] = r.session_id;
        j["label"] = label_name(r.label);
        j["manifest_version"] = r.manifest_version;
        j["session_features"] = r.session_features;
        j["ratio_features"] = r.ratio_features;
        j["degenerate_ratios"] = r.degenerate_ratios;
        j["packet_series"] = r.packet_series;
        j["time_rows"] = detail::matrix_rows_json(r.time_rows);
        j["payload_rows"] = detail::matrix_rows_json(r.payload_rows);
        j["row_is_enc"] = r.row_is_enc;
        out += j.dump();
        out += "\n";
    }
    return out;
}

inline FeatureRecord record_from_json(const nlohmann::json& j) {
    FeatureRecord r;
    r.session_id = j.at("session_id").get<std::string>();
    std::string label = j.at("label").get<std::string>();
    r.label = label == "malicious" ? Label::malicious
              : label == "benign"  ? Label::benign
                                   : Label::unlabeled;
    r.manifest_version = j.at("manifest_version").get<std::string>();
    r.session_features =
        j.at("session_features").get<std::map<std::string, double>>();
    r.ratio_features =
        j.at("ratio_features").get<std::map<std::string, double>>();
    r.degenerate_ratios =
        j.at("degenerate_ratios").get<std::vector<std::string>>();
    r.packet_series =
        j.at("packet_series")
            .get<std::map<std::string, std::vector<double>>>();
    r.time_rows = detail::matrix_from_rows_json(j.at("time_rows"));
    r.payload_rows = detail::matrix_from_rows_json(j.at("payload_rows"));
    r.row_is_enc = j.at("row_is_enc").get<std::vector<uint8_t>>();
    return r;
}

// Reads feature lines back; objects without a session_id (such as the
// provenance stamp) are skipped.
inline std::vector<FeatureRecord> parse_feature_jsonl(const std::string& text) {
    std::vector<FeatureRecord> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw ConfigError("feature file line is not valid JSON");
        }
        if (!j.contains("session_id")) continue;
        out.push_back(record_from_json(j));
    }
    return out;
}

}  // namespace encflow
