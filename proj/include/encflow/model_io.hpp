#pragma once

#include <variant>

#include "encflow/cnn.hpp"
#include "encflow/rnn.hpp"
#include "encflow/tensorize.hpp"
#include "encflow/tree.hpp"

namespace encflow {

enum class ModelKind : uint8_t { random_forest = 1, gbt = 2, rnn = 3, cnn = 4 };

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::random_forest: return "random_forest";
        case ModelKind::gbt: return "gbt";
        case ModelKind::rnn: return "rnn";
        case ModelKind::cnn: return "cnn";
    }
    return "?";
}

using ModelVariant =
    std::variant<RandomForestModel, GbtModel, RnnModel, CnnModel>;

inline ModelKind model_kind(const ModelVariant& m) {
    switch (m.index()) {
        case 0: return ModelKind::random_forest;
        case 1: return ModelKind::gbt;
        case 2: return ModelKind::rnn;
        default: return ModelKind::cnn;
    }
}

inline uint64_t scaler_digest(const Scaler& s) {
    return fnv1a64(s.to_json().dump());
}

inline constexpr char kModelMagic[4] = {'E', 'F', 'M', '1'};
inline constexpr uint16_t kModelFormatVersion = 1;

namespace detail {

// Bounds-checked reader over a byte view.
struct Cursor {
    ByteView data;
    size_t pos = 0;

    void need(size_t n) const {
        if (data.size() - pos < n) throw Truncated("model file cut short");
    }
    uint8_t u8() {
        need(1);
        return data[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = read_u16le(data.data() + pos);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = read_u32le(data.data() + pos);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = read_u64le(data.data() + pos);
        pos += 8;
        return v;
    }
    double f64() {
        need(8);
        double v = read_f64le(data.data() + pos);
        pos += 8;
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s(data.begin() + pos, data.begin() + pos + n);
        pos += n;
        return s;
    }
    std::vector<double> f64_vec() {
        uint32_t n = u32();
        need(size_t(n) * 8);
        std::vector<double> v(n);
        for (uint32_t i = 0; i < n; ++i) {
            v[i] = read_f64le(data.data() + pos);
            pos += 8;
        }
        return v;
    }
    ByteView blob() {
        uint32_t n = u32();
        need(n);
        ByteView v = data.subspan(pos, n);
        pos += n;
        return v;
    }
};

inline void put_string(Bytes& out, std::string_view s) {
    put_u32le(out, static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

inline void put_f64_vec(Bytes& out, const std::vector<double>& v) {
    put_u32le(out, static_cast<uint32_t>(v.size()));
    for (double e : v) put_f64le(out, e);
}

inline void put_blob(Bytes& out, const Bytes& b) {
    put_u32le(out, static_cast<uint32_t>(b.size()));
    out.insert(out.end(), b.begin(), b.end());
}

inline void put_tree_params(Bytes& out, const TreeEnsembleParams& p) {
    put_u32le(out, static_cast<uint32_t>(p.n_estimators));
    put_f64le(out, p.max_features);
    put_u32le(out, static_cast<uint32_t>(p.min_samples_leaf));
    out.push_back(p.max_depth ? 1 : 0);
    put_u32le(out, static_cast<uint32_t>(p.max_depth.value_or(0)));
    put_f64le(out, p.learning_rate);
    put_f64le(out, p.subsample);
    put_u64le(out, p.seed);
}

inline TreeEnsembleParams get_tree_params(Cursor& c) {
    TreeEnsembleParams p;
    p.n_estimators = c.u32();
    p.max_features = c.f64();
    p.min_samples_leaf = c.u32();
    bool has_depth = c.u8() != 0;
    uint32_t depth = c.u32();
    if (has_depth) p.max_depth = depth;
    p.learning_rate = c.f64();
    p.subsample = c.f64();
    p.seed = c.u64();
    return p;
}

inline void put_tree(Bytes& out, const DecisionTree& t) {
    put_u32le(out, static_cast<uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
        put_u32le(out, static_cast<uint32_t>(n.feature));
        put_f64le(out, n.threshold);
        put_u32le(out, n.left);
        put_u32le(out, n.right);
        put_f64le(out, n.value);
    }
}

inline DecisionTree get_tree(Cursor& c) {
    DecisionTree t;
    uint32_t count = c.u32();
    t.nodes.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        DecisionTree::Node n;
        n.feature = static_cast<int32_t>(c.u32());
        n.threshold = c.f64();
        n.left = c.u32();
        n.right = c.u32();
        n.value = c.f64();
        t.nodes.push_back(n);
    }
    return t;
}

inline void put_model_payload(Bytes& out, const RandomForestModel& m) {
    put_tree_params(out, m.params);
    put_u32le(out, static_cast<uint32_t>(m.trees.size()));
    for (const auto& t : m.trees) put_tree(out, t);
}

inline void put_model_payload(Bytes& out, const GbtModel& m) {
    put_tree_params(out, m.params);
    put_f64le(out, m.base_score);
    put_u32le(out, static_cast<uint32_t>(m.stages.size()));
    for (const auto& t : m.stages) put_tree(out, t);
}

inline void put_model_payload(Bytes& out, const RnnModel& m) {
    out.push_back(static_cast<uint8_t>(m.params.cell));
    out.push_back(m.params.bidirectional ? 1 : 0);
    put_u32le(out, static_cast<uint32_t>(m.params.layers));
    put_u32le(out, static_cast<uint32_t>(m.params.hidden));
    put_u32le(out, static_cast<uint32_t>(m.params.epochs));
    put_u32le(out, static_cast<uint32_t>(m.params.batch));
    put_f64le(out, m.params.learning_rate);
    put_u64le(out, m.params.seed);
    put_u32le(out, static_cast<uint32_t>(m.input_dim));
    put_f64_vec(out, m.theta);
}

inline void put_model_payload(Bytes& out, const CnnModel& m) {
    put_u32le(out, static_cast<uint32_t>(m.params.blocks));
    put_u32le(out, static_cast<uint32_t>(m.params.channels.size()));
    for (size_t ch : m.params.channels) {
        put_u32le(out, static_cast<uint32_t>(ch));
    }
    put_u32le(out, static_cast<uint32_t>(m.params.epochs));
    put_u32le(out, static_cast<uint32_t>(m.params.batch));
    put_f64le(out, m.params.learning_rate);
    put_u64le(out, m.params.seed);
    put_u32le(out, static_cast<uint32_t>(m.in_h));
    put_u32le(out, static_cast<uint32_t>(m.in_w));
    put_f64_vec(out, m.theta);
}

inline ModelVariant get_model_payload(Cursor& c, ModelKind kind) {
    switch (kind) {
        case ModelKind::random_forest: {
            RandomForestModel m;
            m.params = get_tree_params(c);
            uint32_t n = c.u32();
            for (uint32_t i = 0; i < n; ++i) m.trees.push_back(get_tree(c));
            return m;
        }
        case ModelKind::gbt: {
            GbtModel m;
            m.params = get_tree_params(c);
            m.base_score = c.f64();
            uint32_t n = c.u32();
            for (uint32_t i = 0; i < n; ++i) m.stages.push_back(get_tree(c));
            return m;
        }
        case ModelKind::rnn: {
            RnnModel m;
            m.params.cell = static_cast<CellKind>(c.u8());
            m.params.bidirectional = c.u8() != 0;
            m.params.layers = c.u32();
            m.params.hidden = c.u32();
            m.params.epochs = c.u32();
            m.params.batch = c.u32();
            m.params.learning_rate = c.f64();
            m.params.seed = c.u64();
            m.input_dim = c.u32();
            m.theta = c.f64_vec();
            return m;
        }
        case ModelKind::cnn: {
            CnnModel m;
            m.params.blocks = c.u32();
            uint32_t nch = c.u32();
            m.params.channels.clear();
            for (uint32_t i = 0; i < nch; ++i) {
                m.params.channels.push_back(c.u32());
            }
            m.params.epochs = c.u32();
            m.params.batch = c.u32();
            m.params.learning_rate = c.f64();
            m.params.seed = c.u64();
            m.in_h = c.u32();
            m.in_w = c.u32();
            m.theta = c.f64_vec();
            return m;
        }
    }
    throw SpecInvalid("unknown model kind tag");
}

}  // namespace detail

// A model together with the manifest and scaler identity it was trained under.
struct SavedModel {
    std::string manifest_version;
    uint64_t scaler_digest = 0;
    ModelVariant model;

    ModelKind kind() const { return model_kind(model); }
};

inline Bytes save_model(const ModelVariant& model,
                        const std::string& manifest_version,
                        uint64_t scaler_digest) {
    Bytes out;
    out.insert(out.end(), kModelMagic, kModelMagic + 4);
    put_u16le(out, kModelFormatVersion);
    out.push_back(static_cast<uint8_t>(model_kind(model)));
    detail::put_string(out, manifest_version);
    put_u64le(out, scaler_digest);
    std::visit([&out](const auto& m) { detail::put_model_payload(out, m); },
               model);
    return out;
}

inline SavedModel load_model(ByteView data) {
    if (data.size() < 7 ||
        !std::equal(kModelMagic, kModelMagic + 4, data.begin())) {
        throw BadMagic("not a model file");
    }
    detail::Cursor c{data, 4};
    uint16_t fmt = c.u16();
    if (fmt != kModelFormatVersion) {
        throw VersionMismatch("unsupported model format version " +
                              std::to_string(fmt));
    }
    uint8_t kind_tag = c.u8();
    if (kind_tag < 1 || kind_tag > 4) {
        throw SpecInvalid("unknown model kind tag " + std::to_string(kind_tag));
    }
    SavedModel out;
    out.manifest_version = c.str();
    out.scaler_digest = c.u64();
    out.model = detail::get_model_payload(c, static_cast<ModelKind>(kind_tag));
    return out;
}

}  // namespace encflow
