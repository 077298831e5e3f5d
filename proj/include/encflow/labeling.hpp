#pragma once

#include <map>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

#include "encflow/features.hpp"

namespace encflow {

// Per-capture labeling rules: a default label and endpoint-IP overrides.
// An IP listed in both sets is rejected when the manifest is loaded; a
// session whose endpoints match both sets (one IP per set) stays benign,
// so a known-clean host is never flagged by its peer.
struct CaptureRule {
    std::optional<Label> default_label;
    std::set<IpAddr> malicious_ips;
    std::set<IpAddr> benign_ips;
};

struct LabelManifest {
    std::map<std::string, CaptureRule> captures;
    std::optional<Label> global_default;

    static Label parse_label(const std::string& s) {
        if (s == "benign") return Label::benign;
        if (s == "malicious") return Label::malicious;
        throw ConfigError("unknown label '" + s + "'");
    }

    static LabelManifest parse(const nlohmann::json& j) {
        LabelManifest m;
        if (j.contains("default")) {
            m.global_default = parse_label(j.at("default").get<std::string>());
        }
        if (!j.contains("captures")) return m;
        for (const auto& [capture, rule_json] : j.at("captures").items()) {
            CaptureRule rule;
            if (rule_json.contains("default")) {
                rule.default_label =
                    parse_label(rule_json.at("default").get<std::string>());
            }
            auto read_set = [&rule_json](const char* key) {
                std::set<IpAddr> out;
                if (!rule_json.contains(key)) return out;
                for (const auto& ip : rule_json.at(key)) {
                    out.insert(IpAddr::parse(ip.get<std::string>()));
                }
                return out;
            };
            rule.malicious_ips = read_set("malicious_ips");
            rule.benign_ips = read_set("benign_ips");
            for (const auto& ip : rule.malicious_ips) {
                if (rule.benign_ips.count(ip)) {
                    throw ConflictingRule("ip " + ip.to_string() +
                                          " is listed malicious and benign "
                                          "for capture '" +
                                          capture + "'");
                }
            }
            m.captures.emplace(capture, std::move(rule));
        }
        return m;
    }

    static LabelManifest parse_text(const std::string& text) {
        nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded()) {
            throw ConfigError("label manifest is not valid JSON");
        }
        return parse(j);
    }

    const CaptureRule* rule_for(const std::string& capture) const {
        auto it = captures.find(capture);
        return it == captures.end() ? nullptr : &it->second;
    }

    Label label_for(const std::string& capture, const IpAddr& x,
                    const IpAddr& y) const {
        const CaptureRule* rule = rule_for(capture);
        if (!rule) {
            if (global_default) return *global_default;
            throw UncoveredCapture("no labeling rule for capture '" + capture +
                                   "'");
        }
        bool bad = rule->malicious_ips.count(x) || rule->malicious_ips.count(y);
        bool good = rule->benign_ips.count(x) || rule->benign_ips.count(y);
        if (good) return Label::benign;
        if (bad) return Label::malicious;
        if (rule->default_label) return *rule->default_label;
        if (global_default) return *global_default;
        return Label::unlabeled;
    }
};

namespace detail {

// session_id format: proto "/" a ":" porta "<->" b ":" portb "#" start.
inline std::pair<IpAddr, IpAddr> session_id_ips(const std::string& id) {
    size_t slash = id.find('/');
    size_t sep = id.find("<->");
    size_t hash = id.rfind('#');
    if (slash == std::string::npos || sep == std::string::npos ||
        hash == std::string::npos || sep < slash || hash < sep) {
        throw SpecInvalid("unparseable session id '" + id + "'");
    }
    auto strip_port = [](const std::string& ep) {
        size_t colon = ep.rfind(':');
        if (colon == std::string::npos) {
            throw SpecInvalid("endpoint without a port: '" + ep + "'");
        }
        return IpAddr::parse(ep.substr(0, colon));
    };
    std::string a = id.substr(slash + 1, sep - slash - 1);
    std::string b = id.substr(sep + 3, hash - sep - 3);
    return {strip_port(a), strip_port(b)};
}

}  // namespace detail

inline Label session_label(const LabelManifest& manifest,
                           const std::string& capture, const FlowKey& key) {
    return manifest.label_for(capture, key.a.ip, key.b.ip);
}

// Relabels extracted records in place; endpoint addresses come back out of
// the session id.
inline void apply_labels(std::vector<FeatureRecord>& records,
                         const std::string& capture,
                         const LabelManifest& manifest) {
    for (auto& r : records) {
        auto [a, b] = detail::session_id_ips(r.session_id);
        r.label = manifest.label_for(capture, a, b);
    }
}

}  // namespace encflow
