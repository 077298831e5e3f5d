#pragma once

// Structured text config shared by the command-line stages. Sections:
// [policy] capture filtering, [manifest] expected feature naming,
// [branches] per-branch learner knobs, [layer2] stacking, [seed].
// Unknown sections or keys are errors, so typos cannot silently fall back
// to defaults.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "encflow/enc_filter.hpp"
#include "encflow/framework.hpp"
#include "encflow/manifest.hpp"
#include "encflow/sessions.hpp"

namespace encflow {

struct CliConfig {
    EncPolicy policy;
    double idle_timeout_sec = kDefaultIdleTimeoutSec;
    std::string manifest_version = FeatureManifest::builtin().version;
    FrameworkConfig framework = FrameworkConfig::defaults();
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        std::string item = trim(s.substr(pos, comma - pos));
        if (!item.empty()) out.push_back(item);
        pos = comma + 1;
    }
    return out;
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    if (v.empty() || v[0] < '0' || v[0] > '9') {
        throw ConfigError(key + ": '" + v + "' is not an unsigned integer");
    }
    size_t used = 0;
    uint64_t out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not an unsigned integer");
    }
    if (used != v.size()) {
        throw ConfigError(key + ": '" + v + "' is not an unsigned integer");
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not a number");
    }
    if (used != v.size()) {
        throw ConfigError(key + ": '" + v + "' is not a number");
    }
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

inline std::vector<uint16_t> parse_ports(const std::string& key,
                                         const std::string& v) {
    std::vector<uint16_t> out;
    for (const auto& item : split_list(v)) {
        uint64_t p = parse_u64(key, item);
        if (p == 0 || p > 65535) {
            throw ConfigError(key + ": port " + item + " out of range");
        }
        out.push_back(static_cast<uint16_t>(p));
    }
    return out;
}

inline std::vector<size_t> parse_size_list(const std::string& key,
                                           const std::string& v) {
    std::vector<size_t> out;
    for (const auto& item : split_list(v)) {
        out.push_back(static_cast<size_t>(parse_u64(key, item)));
    }
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

}  // namespace detail

inline EncClass parse_enc_class(const std::string& v) {
    if (v == "plaintext") return EncClass::plaintext;
    if (v == "encrypted") return EncClass::encrypted;
    throw ConfigError("treat_ambiguous_as: '" + v +
                      "' is neither plaintext nor encrypted");
}

// section -> key -> value; '#' and ';' start comments.
using IniDoc = std::map<std::string, std::map<std::string, std::string>>;

inline IniDoc parse_ini(const std::string& text) {
    IniDoc doc;
    std::string section;
    size_t lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.resize(comment);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": malformed section header");
            }
            section = detail::trim(line.substr(1, line.size() - 2));
            doc[section];
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) +
                              ": expected key=value");
        }
        if (section.empty()) {
            throw ConfigError("line " + std::to_string(lineno) +
                              ": key outside any section");
        }
        std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        }
        doc[section][key] = detail::trim(line.substr(eq + 1));
    }
    return doc;
}

inline void apply_config(CliConfig& cfg, const IniDoc& doc) {
    auto unknown = [](const std::string& section, const std::string& key) {
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    };
    for (const auto& [section, entries] : doc) {
        if (section == "policy") {
            for (const auto& [k, v] : entries) {
                if (k == "tls_ports") {
                    cfg.policy.tls_ports = detail::parse_ports(k, v);
                } else if (k == "ssh_ports") {
                    cfg.policy.ssh_ports = detail::parse_ports(k, v);
                } else if (k == "detect_by_content") {
                    cfg.policy.detect_by_content = detail::parse_bool(k, v);
                } else if (k == "treat_ambiguous_as") {
                    cfg.policy.treat_ambiguous_as = parse_enc_class(v);
                } else if (k == "idle_timeout_sec") {
                    cfg.idle_timeout_sec = detail::parse_double(k, v);
                } else {
                    unknown(section, k);
                }
            }
        } else if (section == "manifest") {
            for (const auto& [k, v] : entries) {
                if (k == "version") {
                    cfg.manifest_version = v;
                } else {
                    unknown(section, k);
                }
            }
        } else if (section == "branches") {
            for (const auto& [k, v] : entries) {
                RnnParams& rnn = cfg.framework.branches[0].rnn;
                CnnParams& cnn = cfg.framework.branches[1].cnn;
                BranchSpec& ratio = cfg.framework.branches[2];
                if (k == "time_cell") {
                    if (v == "lstm") {
                        rnn.cell = CellKind::lstm;
                    } else if (v == "gru") {
                        rnn.cell = CellKind::gru;
                    } else {
                        throw ConfigError("time_cell: '" + v +
                                          "' is neither lstm nor gru");
                    }
                } else if (k == "time_bidirectional") {
                    rnn.bidirectional = detail::parse_bool(k, v);
                } else if (k == "time_layers") {
                    rnn.layers = detail::parse_u64(k, v);
                } else if (k == "time_hidden") {
                    rnn.hidden = detail::parse_u64(k, v);
                } else if (k == "time_epochs") {
                    rnn.epochs = detail::parse_u64(k, v);
                } else if (k == "time_batch") {
                    rnn.batch = detail::parse_u64(k, v);
                } else if (k == "time_learning_rate") {
                    rnn.learning_rate = detail::parse_double(k, v);
                } else if (k == "image_blocks") {
                    cnn.blocks = detail::parse_u64(k, v);
                } else if (k == "image_channels") {
                    cnn.channels = detail::parse_size_list(k, v);
                } else if (k == "image_epochs") {
                    cnn.epochs = detail::parse_u64(k, v);
                } else if (k == "image_batch") {
                    cnn.batch = detail::parse_u64(k, v);
                } else if (k == "image_learning_rate") {
                    cnn.learning_rate = detail::parse_double(k, v);
                } else if (k == "ratio_kind") {
                    if (v == "gbt") {
                        ratio.kind = ModelKind::gbt;
                    } else if (v == "random_forest") {
                        ratio.kind = ModelKind::random_forest;
                    } else {
                        throw ConfigError(
                            "ratio_kind: '" + v +
                            "' is neither gbt nor random_forest");
                    }
                } else if (k == "ratio_estimators") {
                    ratio.tree.n_estimators = detail::parse_u64(k, v);
                } else if (k == "ratio_depth") {
                    uint64_t d = detail::parse_u64(k, v);
                    if (d == 0) {
                        ratio.tree.max_depth.reset();
                    } else {
                        ratio.tree.max_depth = d;
                    }
                } else if (k == "ratio_min_leaf") {
                    ratio.tree.min_samples_leaf = detail::parse_u64(k, v);
                } else if (k == "ratio_max_features") {
                    ratio.tree.max_features = detail::parse_double(k, v);
                } else if (k == "ratio_learning_rate") {
                    ratio.tree.learning_rate = detail::parse_double(k, v);
                } else if (k == "ratio_subsample") {
                    ratio.tree.subsample = detail::parse_double(k, v);
                } else {
                    unknown(section, k);
                }
            }
        } else if (section == "layer2") {
            for (const auto& [k, v] : entries) {
                TreeEnsembleParams& p = cfg.framework.layer2_params;
                if (k == "kind") {
                    if (v == "random_forest") {
                        cfg.framework.layer2_random_forest = true;
                    } else if (v == "average") {
                        cfg.framework.layer2_random_forest = false;
                    } else {
                        throw ConfigError(
                            "layer2 kind: '" + v +
                            "' is neither random_forest nor average");
                    }
                } else if (k == "estimators") {
                    p.n_estimators = detail::parse_u64(k, v);
                } else if (k == "depth") {
                    uint64_t d = detail::parse_u64(k, v);
                    if (d == 0) {
                        p.max_depth.reset();
                    } else {
                        p.max_depth = d;
                    }
                } else if (k == "min_leaf") {
                    p.min_samples_leaf = detail::parse_u64(k, v);
                } else if (k == "max_features") {
                    p.max_features = detail::parse_double(k, v);
                } else if (k == "folds") {
                    cfg.framework.stacking_folds = detail::parse_u64(k, v);
                } else if (k == "threshold") {
                    cfg.framework.decision_threshold =
                        detail::parse_double(k, v);
                } else {
                    unknown(section, k);
                }
            }
        } else if (section == "seed") {
            for (const auto& [k, v] : entries) {
                if (k == "value") {
                    cfg.framework.seed = detail::parse_u64(k, v);
                } else {
                    unknown(section, k);
                }
            }
        } else {
            throw ConfigError("unknown section [" + section + "]");
        }
    }
    if (cfg.idle_timeout_sec <= 0) {
        throw ConfigError("idle_timeout_sec must be > 0");
    }
    cfg.policy.validate();
}

inline CliConfig parse_config_text(const std::string& text) {
    CliConfig cfg;
    apply_config(cfg, parse_ini(text));
    return cfg;
}

// Canonical rendering of the sections that decide what a feature value
// means. Two configs that agree here produce interchangeable feature files;
// its digest is the compatibility stamp carried through every stage output.
inline std::string feature_config_text(const CliConfig& cfg) {
    auto ports = [](const std::vector<uint16_t>& v) {
        std::string out;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(v[i]);
        }
        return out;
    };
    char timeout[32];
    std::snprintf(timeout, sizeof(timeout), "%.17g", cfg.idle_timeout_sec);
    std::string text;
    text += "[policy]\n";
    text += "tls_ports=" + ports(cfg.policy.tls_ports) + "\n";
    text += "ssh_ports=" + ports(cfg.policy.ssh_ports) + "\n";
    text += std::string("detect_by_content=") +
            (cfg.policy.detect_by_content ? "1" : "0") + "\n";
    text += std::string("treat_ambiguous_as=") +
            (cfg.policy.treat_ambiguous_as == EncClass::encrypted
                 ? "encrypted"
                 : "plaintext") +
            "\n";
    text += std::string("idle_timeout_sec=") + timeout + "\n";
    text += "[manifest]\n";
    text += "version=" + cfg.manifest_version + "\n";
    return text;
}

inline uint64_t feature_config_digest(const CliConfig& cfg) {
    return fnv1a64(feature_config_text(cfg));
}

// Records transformed by the Enc ablation are incompatible with both raw
// features and the original digest chain, so the stamp forks.
inline uint64_t ablated_digest(uint64_t digest) {
    return keyed_hash(digest, uint64_t{0xab1a7ed});
}

}  // namespace encflow
