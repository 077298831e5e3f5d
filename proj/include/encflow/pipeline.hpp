#pragma once

// Shared stage plumbing: capture decode, the extract chain, and file IO
// with provenance stamps. The CLI and the tests both drive these.

#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "encflow/decode.hpp"
#include "encflow/enc_filter.hpp"
#include "encflow/features.hpp"
#include "encflow/manifest.hpp"
#include "encflow/pcap.hpp"
#include "encflow/sessions.hpp"

namespace encflow {

// ----------------------------------------------------------------------------
// File IO
// ----------------------------------------------------------------------------

inline Bytes load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    Bytes data((std::istreambuf_iterator<char>(in)),
               std::istreambuf_iterator<char>());
    return data;
}

inline void save_file(const std::string& path, ByteView data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + path);
}

inline void save_text(const std::string& path, const std::string& text) {
    save_file(path, ByteView(reinterpret_cast<const uint8_t*>(text.data()),
                             text.size()));
}

// ----------------------------------------------------------------------------
// Provenance. Every produced file opens with a stamp naming the tool
// version, the manifest version, and a digest of the effective config, so
// downstream stages can refuse mismatched inputs.
// ----------------------------------------------------------------------------

struct Provenance {
    std::string tool_version = kToolVersion;
    std::string manifest_version;
    uint64_t config_digest = 0;
};

inline nlohmann::json provenance_json(const Provenance& p) {
    nlohmann::json j;
    j["provenance"] = {{"tool_version", p.tool_version},
                       {"manifest_version", p.manifest_version},
                       {"config_digest", p.config_digest}};
    return j;
}

// First line of a JSONL output.
inline std::string provenance_line(const Provenance& p) {
    return provenance_json(p).dump() + "\n";
}

// Leading comment of a CSV/text output.
inline std::string provenance_comment(const Provenance& p) {
    return "# " + provenance_json(p).dump() + "\n";
}

// Reads the stamp back from the first line of a JSONL file, if present.
inline std::optional<Provenance> parse_provenance(const std::string& text) {
    size_t end = text.find('\n');
    std::string line =
        end == std::string::npos ? text : text.substr(0, end);
    if (!line.empty() && line[0] == '#') line = line.substr(2);
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("provenance")) return std::nullopt;
    const auto& pj = j.at("provenance");
    Provenance p;
    p.tool_version = pj.value("tool_version", std::string{});
    p.manifest_version = pj.value("manifest_version", std::string{});
    p.config_digest = pj.value("config_digest", uint64_t{0});
    return p;
}

// ----------------------------------------------------------------------------
// Extract chain: pcap bytes -> packets -> sessions -> encrypted sessions
// -> feature records.
// ----------------------------------------------------------------------------

inline std::vector<ParsedPacket> decode_capture(ByteView pcap_bytes,
                                                DecodeCounters& counters) {
    pcap::Reader reader(pcap_bytes);
    std::vector<ParsedPacket> packets;
    uint64_t index = 0;
    while (auto rec = reader.next()) {
        auto pkt = decode_packet(rec->bytes, reader.link_type(), counters);
        if (pkt) {
            pkt->timestamp_ns = rec->timestamp_ns;
            pkt->capture_index = index;
            packets.push_back(std::move(*pkt));
        }
        ++index;
    }
    return packets;
}

struct ExtractOptions {
    EncPolicy policy;
    double idle_timeout_sec = kDefaultIdleTimeoutSec;
};

struct ExtractResult {
    std::vector<FeatureRecord> records;
    DecodeCounters decode_counters;
    FilterStats filter_stats;
    uint64_t sessions_total = 0;  // before the encrypted-session filter
};

inline ExtractResult extract_records(
    ByteView pcap_bytes, const ExtractOptions& opts,
    const FeatureManifest& manifest = FeatureManifest::builtin()) {
    ExtractResult out;
    auto packets = decode_capture(pcap_bytes, out.decode_counters);
    auto sessions = assemble_sessions(packets, opts.idle_timeout_sec);
    out.sessions_total = sessions.size();
    auto kept = filter_encrypted_sessions(std::move(sessions), opts.policy,
                                          &out.filter_stats);
    out.records.reserve(kept.size());
    for (const auto& s : kept) {
        out.records.push_back(build_feature_record(s, opts.policy, manifest));
    }
    return out;
}

}  // namespace encflow
