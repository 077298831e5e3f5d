#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "encflow/features.hpp"

namespace encflow {

inline constexpr size_t kTensorRows = 15;

// Fixed-shape model inputs for one session. square_matrix is the Gram
// product of the scaled image and therefore symmetric PSD by construction.
struct TensorBundle {
    Matrix time_matrix;    // 15 x 85
    Matrix image_matrix;   // 15 x 38
    Matrix square_matrix;  // 38 x 38
    std::vector<double> ratio_vector;
    std::optional<Label> label;
    std::string manifest_version;
};

// Keeps the first `target` rows; short inputs are padded with rows of
// per-column means over the rows actually present.
inline Matrix truncate_and_pad(const Matrix& rows, size_t target = kTensorRows) {
    if (rows.rows() == 0) throw EmptyInput("cannot pad an empty packet matrix");
    Matrix out(target, rows.cols());
    size_t keep = std::min(rows.rows(), target);
    for (size_t r = 0; r < keep; ++r) {
        for (size_t c = 0; c < rows.cols(); ++c) out(r, c) = rows(r, c);
    }
    if (keep < target) {
        std::vector<double> mean(rows.cols(), 0.0);
        for (size_t r = 0; r < rows.rows(); ++r) {
            for (size_t c = 0; c < rows.cols(); ++c) mean[c] += rows(r, c);
        }
        for (size_t c = 0; c < rows.cols(); ++c) {
            mean[c] /= double(rows.rows());
        }
        for (size_t r = keep; r < target; ++r) {
            for (size_t c = 0; c < rows.cols(); ++c) out(r, c) = mean[c];
        }
    }
    return out;
}

// Per-column min-max ranges over the training set, fitted on the exact raw
// matrices the models consume (already truncated and padded). Apply clamps,
// so out-of-range values at predict time stay inside [0, 1].
struct Scaler {
    static constexpr double kEpsilon = 1e-12;

    struct Range {
        double min = 0.0;
        double max = 0.0;
    };

    std::string manifest_version;
    std::vector<Range> time;     // one per time feature column
    std::vector<Range> payload;  // one per payload feature column
    std::vector<Range> ratio;    // one per ratio entry
    bool pass_through = false;

    bool fitted() const {
        return pass_through ||
               (!time.empty() && !payload.empty() && !ratio.empty());
    }

    double apply(double v, const Range& r) const {
        if (pass_through) return v;
        double s = (v - r.min) / (r.max - r.min + kEpsilon);
        return std::clamp(s, 0.0, 1.0);
    }

    static Scaler identity(const FeatureManifest& manifest) {
        Scaler s;
        s.manifest_version = manifest.version;
        s.time.resize(manifest.time_feature_list.size());
        s.payload.resize(manifest.payload_feature_list.size());
        s.ratio.resize(manifest.ratio_specs.size());
        s.pass_through = true;
        return s;
    }

    nlohmann::json to_json() const {
        auto dump = [](const std::vector<Range>& v) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& r : v) arr.push_back({r.min, r.max});
            return arr;
        };
        return nlohmann::json{{"manifest_version", manifest_version},
                              {"pass_through", pass_through},
                              {"time", dump(time)},
                              {"payload", dump(payload)},
                              {"ratio", dump(ratio)}};
    }

    static Scaler from_json(const nlohmann::json& j) {
        Scaler s;
        s.manifest_version = j.at("manifest_version").get<std::string>();
        s.pass_through = j.at("pass_through").get<bool>();
        auto load = [&j](const char* key, std::vector<Range>& out) {
            for (const auto& pair : j.at(key)) {
                if (!pair.is_array() || pair.size() != 2) {
                    throw ConfigError("malformed scaler range");
                }
                Range r{pair[0].get<double>(), pair[1].get<double>()};
                if (!(r.max >= r.min)) throw ConfigError("scaler max < min");
                out.push_back(r);
            }
        };
        load("time", s.time);
        load("payload", s.payload);
        load("ratio", s.ratio);
        return s;
    }
};

namespace detail {

inline void require_record_shape(const FeatureRecord& record,
                                 const FeatureManifest& manifest) {
    if (record.manifest_version != manifest.version) {
        throw ManifestMismatch("record built against manifest '" +
                               record.manifest_version + "', expected '" +
                               manifest.version + "'");
    }
    if (record.time_rows.cols() != manifest.time_feature_list.size() ||
        record.payload_rows.cols() != manifest.payload_feature_list.size()) {
        throw ManifestMismatch("record matrix width disagrees with manifest");
    }
}

inline void track(std::vector<Scaler::Range>& ranges, const Matrix& m,
                  bool& first) {
    for (size_t c = 0; c < m.cols(); ++c) {
        size_t r0 = 0;
        if (first) {
            ranges[c].min = ranges[c].max = m(0, c);
            r0 = 1;
        }
        for (size_t r = r0; r < m.rows(); ++r) {
            double v = m(r, c);
            ranges[c].min = std::min(ranges[c].min, v);
            ranges[c].max = std::max(ranges[c].max, v);
        }
    }
    first = false;
}

}  // namespace detail

// Ratio features flattened in manifest order.
inline std::vector<double> ratio_vector_of(const FeatureRecord& record,
                                           const FeatureManifest& manifest) {
    std::vector<double> out;
    out.reserve(manifest.ratio_specs.size());
    for (const auto& spec : manifest.ratio_specs) {
        auto it = record.ratio_features.find(spec.ratio_name);
        if (it == record.ratio_features.end()) {
            throw ManifestMismatch("record lacks ratio " + spec.ratio_name);
        }
        out.push_back(it->second);
    }
    return out;
}

inline Scaler fit_scaler(const std::vector<FeatureRecord>& records,
                         const FeatureManifest& manifest) {
    if (records.empty()) throw EmptyInput("scaler needs at least one record");
    Scaler s;
    s.manifest_version = manifest.version;
    s.time.resize(manifest.time_feature_list.size());
    s.payload.resize(manifest.payload_feature_list.size());
    s.ratio.resize(manifest.ratio_specs.size());
    bool first_time = true, first_payload = true, first_ratio = true;
    for (const auto& record : records) {
        detail::require_record_shape(record, manifest);
        detail::track(s.time, truncate_and_pad(record.time_rows), first_time);
        detail::track(s.payload, truncate_and_pad(record.payload_rows),
                      first_payload);
        std::vector<double> rv = ratio_vector_of(record, manifest);
        for (size_t i = 0; i < rv.size(); ++i) {
            if (first_ratio) {
                s.ratio[i].min = s.ratio[i].max = rv[i];
            } else {
                s.ratio[i].min = std::min(s.ratio[i].min, rv[i]);
                s.ratio[i].max = std::max(s.ratio[i].max, rv[i]);
            }
        }
        first_ratio = false;
    }
    return s;
}

namespace detail {

inline Matrix scaled_matrix(const Matrix& raw,
                            const std::vector<Scaler::Range>& ranges,
                            const Scaler& scaler) {
    Matrix out(raw.rows(), raw.cols());
    for (size_t r = 0; r < raw.rows(); ++r) {
        for (size_t c = 0; c < raw.cols(); ++c) {
            out(r, c) = scaler.apply(raw(r, c), ranges[c]);
        }
    }
    return out;
}

}  // namespace detail

inline Matrix build_time_matrix(const FeatureRecord& record,
                                const Scaler& scaler,
                                const FeatureManifest& manifest) {
    detail::require_record_shape(record, manifest);
    if (!scaler.fitted() || scaler.manifest_version != manifest.version) {
        throw ManifestMismatch("scaler not fitted for this manifest");
    }
    return detail::scaled_matrix(truncate_and_pad(record.time_rows),
                                 scaler.time, scaler);
}

inline Matrix build_image_matrix(const FeatureRecord& record,
                                 const Scaler& scaler,
                                 const FeatureManifest& manifest) {
    detail::require_record_shape(record, manifest);
    if (!scaler.fitted() || scaler.manifest_version != manifest.version) {
        throw ManifestMismatch("scaler not fitted for this manifest");
    }
    return detail::scaled_matrix(truncate_and_pad(record.payload_rows),
                                 scaler.payload, scaler);
}

inline Matrix gram_square(const Matrix& image) {
    if (image.rows() != kTensorRows ||
        image.cols() != FeatureManifest::kPayloadFeatureCount) {
        throw ShapeError("gram_square expects a 15x38 image");
    }
    return transpose_times_self(image);
}

inline TensorBundle tensorize(const FeatureRecord& record, const Scaler& scaler,
                              const FeatureManifest& manifest) {
    TensorBundle b;
    b.time_matrix = build_time_matrix(record, scaler, manifest);
    b.image_matrix = build_image_matrix(record, scaler, manifest);
    b.square_matrix = gram_square(b.image_matrix);
    std::vector<double> rv = ratio_vector_of(record, manifest);
    b.ratio_vector.reserve(rv.size());
    for (size_t i = 0; i < rv.size(); ++i) {
        b.ratio_vector.push_back(scaler.apply(rv[i], scaler.ratio[i]));
    }
    if (record.label != Label::unlabeled) b.label = record.label;
    b.manifest_version = scaler.manifest_version;
    return b;
}

// Flat binary form: magic, count, then per bundle a label byte, the ratio
// length, and the three matrices plus the ratio vector as LE doubles.
inline constexpr char kBundleMagic[4] = {'E', 'F', 'T', '1'};

namespace detail {

inline void put_matrix(Bytes& out, const Matrix& m) {
    for (size_t r = 0; r < m.rows(); ++r) {
        for (size_t c = 0; c < m.cols(); ++c) put_f64le(out, m(r, c));
    }
}

inline Matrix get_matrix(ByteView data, size_t& pos, size_t rows, size_t cols) {
    if (data.size() - pos < rows * cols * 8) {
        throw Truncated("bundle file ends inside a matrix");
    }
    Matrix m(rows, cols);
    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) {
            m(r, c) = read_f64le(data.data() + pos);
            pos += 8;
        }
    }
    return m;
}

}  // namespace detail

inline Bytes write_bundles(const std::vector<TensorBundle>& bundles,
                           const std::string& stamp = {}) {
    Bytes out;
    out.insert(out.end(), kBundleMagic, kBundleMagic + 4);
    const std::string& ver =
        bundles.empty() ? std::string{} : bundles.front().manifest_version;
    put_u32le(out, static_cast<uint32_t>(ver.size()));
    out.insert(out.end(), ver.begin(), ver.end());
    put_u32le(out, static_cast<uint32_t>(stamp.size()));
    out.insert(out.end(), stamp.begin(), stamp.end());
    put_u32le(out, static_cast<uint32_t>(bundles.size()));
    for (const auto& b : bundles) {
        out.push_back(b.label ? static_cast<uint8_t>(*b.label) : 0);
        put_u32le(out, static_cast<uint32_t>(b.ratio_vector.size()));
        detail::put_matrix(out, b.time_matrix);
        detail::put_matrix(out, b.image_matrix);
        detail::put_matrix(out, b.square_matrix);
        for (double v : b.ratio_vector) put_f64le(out, v);
    }
    return out;
}

inline std::vector<TensorBundle> read_bundles(ByteView data,
                                              std::string* stamp = nullptr) {
    if (data.size() < 8 || !std::equal(kBundleMagic, kBundleMagic + 4,
                                       data.begin())) {
        throw BadMagic("not a tensor bundle file");
    }
    size_t pos = 4;
    uint32_t ver_len = read_u32le(data.data() + pos);
    pos += 4;
    if (data.size() - pos < size_t(ver_len) + 4) {
        throw Truncated("bundle header cut short");
    }
    std::string ver(data.begin() + pos, data.begin() + pos + ver_len);
    pos += ver_len;
    uint32_t stamp_len = read_u32le(data.data() + pos);
    pos += 4;
    if (data.size() - pos < size_t(stamp_len) + 4) {
        throw Truncated("bundle header cut short");
    }
    std::string stamp_str(data.begin() + pos, data.begin() + pos + stamp_len);
    pos += stamp_len;
    if (stamp) *stamp = std::move(stamp_str);
    uint32_t count = read_u32le(data.data() + pos);
    pos += 4;
    std::vector<TensorBundle> out;
    out.reserve(count);
    constexpr size_t kT = FeatureManifest::kTimeFeatureCount;
    constexpr size_t kP = FeatureManifest::kPayloadFeatureCount;
    for (uint32_t i = 0; i < count; ++i) {
        if (data.size() - pos < 5) throw Truncated("bundle header cut short");
        uint8_t label_byte = data[pos++];
        uint32_t ratio_len = read_u32le(data.data() + pos);
        pos += 4;
        TensorBundle b;
        if (label_byte != 0) b.label = static_cast<Label>(label_byte);
        b.time_matrix = detail::get_matrix(data, pos, kTensorRows, kT);
        b.image_matrix = detail::get_matrix(data, pos, kTensorRows, kP);
        b.square_matrix = detail::get_matrix(data, pos, kP, kP);
        if (data.size() - pos < size_t(ratio_len) * 8) {
            throw Truncated("bundle file ends inside the ratio vector");
        }
        for (uint32_t k = 0; k < ratio_len; ++k) {
            b.ratio_vector.push_back(read_f64le(data.data() + pos));
            pos += 8;
        }
        b.manifest_version = ver;
        out.push_back(std::move(b));
    }
    return out;
}

inline std::string bundle_jsonl(const std::vector<TensorBundle>& bundles) {
    auto matrix_json = [](const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (size_t r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    std::string out;
    for (const auto& b : bundles) {
        nlohmann::json j{{"time", matrix_json(b.time_matrix)},
                         {"image", matrix_json(b.image_matrix)},
                         {"square", matrix_json(b.square_matrix)},
                         {"ratio", b.ratio_vector}};
        j["label"] = b.label ? label_name(*b.label) : "";
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace encflow
