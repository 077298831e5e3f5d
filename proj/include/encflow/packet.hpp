#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "encflow/common.hpp"

namespace encflow {

enum class Transport : uint8_t { tcp = 6, udp = 17 };

enum class Dir : uint8_t { forward = 0, backward = 1 };

enum class EncClass : uint8_t { ambiguous = 0, plaintext = 1, encrypted = 2 };

// IPv4 or IPv6 address. v4 keeps its 4 bytes at the front of the array.
struct IpAddr {
    bool v6 = false;
    std::array<uint8_t, 16> bytes{};

    static IpAddr v4(uint8_t a, uint8_t b, uint8_t c, uint8_t d) {
        IpAddr ip;
        ip.bytes[0] = a; ip.bytes[1] = b; ip.bytes[2] = c; ip.bytes[3] = d;
        return ip;
    }

    static IpAddr from_v4_bytes(const uint8_t* p) {
        return v4(p[0], p[1], p[2], p[3]);
    }

    static IpAddr from_v6_bytes(const uint8_t* p) {
        IpAddr ip;
        ip.v6 = true;
        for (int i = 0; i < 16; ++i) ip.bytes[i] = p[i];
        return ip;
    }

    auto operator<=>(const IpAddr&) const = default;

    std::string to_string() const {
        char buf[64];
        if (!v6) {
            std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", bytes[0], bytes[1],
                          bytes[2], bytes[3]);
            return buf;
        }
        std::string s;
        for (int i = 0; i < 16; i += 2) {
            std::snprintf(buf, sizeof(buf), "%02x%02x", bytes[i], bytes[i + 1]);
            if (!s.empty()) s += ':';
            s += buf;
        }
        return s;
    }

    // Accepts dotted-quad v4 or full/compressed-colon v6 text.
    static IpAddr parse(const std::string& s);
};

struct Endpoint {
    IpAddr ip;
    uint16_t port = 0;

    auto operator<=>(const Endpoint&) const = default;

    std::string to_string() const {
        return ip.to_string() + ":" + std::to_string(port);
    }
};

// Canonical bidirectional flow identity: endpoints ordered so a <= b, which
// makes FlowKey(a->b) == FlowKey(b->a).
struct FlowKey {
    Transport proto = Transport::tcp;
    Endpoint a;
    Endpoint b;

    FlowKey() = default;
    FlowKey(Transport p, const Endpoint& x, const Endpoint& y) : proto(p) {
        if (y < x) {
            a = y;
            b = x;
        } else {
            a = x;
            b = y;
        }
    }

    auto operator<=>(const FlowKey&) const = default;

    std::string to_string() const {
        return std::string(proto == Transport::tcp ? "tcp" : "udp") + "/" +
               a.to_string() + "<->" + b.to_string();
    }
};

struct FlowKeyHash {
    size_t operator()(const FlowKey& k) const {
        uint64_t h = fnv1a64(k.a.ip.bytes.data(), 16);
        h = fnv1a64(k.b.ip.bytes.data(), 16, h);
        h = fnv_mix(h, (static_cast<uint64_t>(k.a.port) << 32) |
                           (static_cast<uint64_t>(k.b.port) << 16) |
                           static_cast<uint64_t>(k.proto));
        return static_cast<size_t>(h);
    }
};

// One decoded packet. Timestamps are integer nanoseconds since epoch so that
// microsecond and nanosecond captures share one lossless representation.
struct ParsedPacket {
    int64_t timestamp_ns = 0;
    uint64_t capture_index = 0;  // position in the capture file, breaks ts ties

    Endpoint src;
    Endpoint dst;
    Transport transport = Transport::tcp;

    uint32_t ip_total_length = 0;
    uint32_t ip_header_length = 0;
    uint8_t ttl = 0;
    uint32_t tcp_header_length = 0;  // 0 for UDP
    uint16_t tcp_window = 0;         // 0 for UDP
    uint32_t payload_length = 0;

    Bytes payload;  // captured transport payload bytes (may be shorter than
                    // payload_length when the capture was truncated)

    Dir direction = Dir::forward;  // assigned at session assembly
    EncClass enc_class = EncClass::ambiguous;

    FlowKey flow_key() const { return FlowKey(transport, src, dst); }
    bool is_forward() const { return direction == Dir::forward; }
};

// A canonicalized bidirectional flow: packets time-ordered, direction assigned
// relative to the initiator (sender of the first packet).
struct Session {
    FlowKey key;
    Endpoint initiator;
    Endpoint responder;
    std::vector<ParsedPacket> packets;
    bool is_encrypted = false;

    bool empty() const { return packets.empty(); }
    size_t size() const { return packets.size(); }
    int64_t first_ts() const { return packets.front().timestamp_ns; }
    int64_t last_ts() const { return packets.back().timestamp_ns; }
};

inline IpAddr IpAddr::parse(const std::string& s) {
    IpAddr ip;
    if (s.find(':') == std::string::npos) {
        unsigned a, b, c, d;
        if (std::sscanf(s.c_str(), "%u.%u.%u.%u", &a, &b, &c, &d) != 4 ||
            a > 255 || b > 255 || c > 255 || d > 255) {
            throw ConfigError("bad IPv4 address: " + s);
        }
        return v4(static_cast<uint8_t>(a), static_cast<uint8_t>(b),
                  static_cast<uint8_t>(c), static_cast<uint8_t>(d));
    }
    ip.v6 = true;
    // Split on "::" once, then fill groups from both ends.
    auto parse_groups = [](const std::string& part) {
        std::vector<uint16_t> out;
        size_t pos = 0;
        while (pos <= part.size() && !part.empty()) {
            size_t next = part.find(':', pos);
            std::string g = part.substr(pos, next == std::string::npos
                                                 ? std::string::npos
                                                 : next - pos);
            if (g.empty()) throw ConfigError("bad IPv6 group");
            out.push_back(static_cast<uint16_t>(std::stoul(g, nullptr, 16)));
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        return out;
    };
    size_t gap = s.find("::");
    std::vector<uint16_t> head, tail;
    if (gap == std::string::npos) {
        head = parse_groups(s);
        if (head.size() != 8) throw ConfigError("bad IPv6 address: " + s);
    } else {
        head = parse_groups(s.substr(0, gap));
        tail = parse_groups(s.substr(gap + 2));
        if (head.size() + tail.size() > 8) {
            throw ConfigError("bad IPv6 address: " + s);
        }
    }
    std::array<uint16_t, 8> groups{};
    for (size_t i = 0; i < head.size(); ++i) groups[i] = head[i];
    for (size_t i = 0; i < tail.size(); ++i) {
        groups[8 - tail.size() + i] = tail[i];
    }
    for (int i = 0; i < 8; ++i) {
        ip.bytes[2 * i] = static_cast<uint8_t>(groups[i] >> 8);
        ip.bytes[2 * i + 1] = static_cast<uint8_t>(groups[i] & 0xff);
    }
    return ip;
}

}  // namespace encflow
