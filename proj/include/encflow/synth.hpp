#pragma once

#include <algorithm>
#include <variant>
#include <vector>

#include "encflow/packet.hpp"
#include "encflow/pcap.hpp"

namespace encflow {

// Synthetic capture generator. Emits a valid little-endian microsecond PCAP
// whose parse -> decode -> assemble round trip reproduces the spec exactly;
// the test oracles recompute expected values straight from these structs.

// One TLS record: 5-byte header (content type, version 0x0303, length) plus
// body_len fill bytes.
struct TlsRecordTemplate {
    uint8_t content_type = 0x17;
    uint16_t body_len = 0;
    uint8_t fill = 0xab;
};

using PayloadSpec = std::variant<Bytes, std::vector<TlsRecordTemplate>>;

struct PacketSpec {
    int64_t delta_us = 0;  // elapsed microseconds since the previous packet
    bool forward = true;   // true: src -> dst of the owning SessionSpec
    PayloadSpec payload;
    uint8_t ttl = 64;
    uint16_t window = 65535;

    // Annotation for oracles: what the enc-filter is expected to decide.
    // Never serialized into the capture.
    EncClass expect = EncClass::ambiguous;

    uint32_t payload_bytes() const {
        if (std::holds_alternative<Bytes>(payload)) {
            return static_cast<uint32_t>(std::get<Bytes>(payload).size());
        }
        uint32_t n = 0;
        for (const auto& r : std::get<std::vector<TlsRecordTemplate>>(payload)) {
            n += 5u + r.body_len;
        }
        return n;
    }

    Bytes expand_payload() const {
        if (std::holds_alternative<Bytes>(payload)) {
            return std::get<Bytes>(payload);
        }
        Bytes out;
        for (const auto& r : std::get<std::vector<TlsRecordTemplate>>(payload)) {
            out.push_back(r.content_type);
            out.push_back(0x03);
            out.push_back(0x03);
            put_u16be(out, r.body_len);
            out.insert(out.end(), r.body_len, r.fill);
        }
        return out;
    }
};

struct SessionSpec {
    Transport proto = Transport::tcp;
    Endpoint src;  // initiator
    Endpoint dst;
    int64_t start_us = 0;
    std::vector<PacketSpec> packets;

    int64_t packet_time_us(size_t i) const {
        int64_t t = start_us;
        for (size_t k = 0; k <= i; ++k) t += packets[k].delta_us;
        return t;
    }
};

namespace detail {

// Max transport payload that fits a 65535-byte IPv4 datagram with minimal
// IP + TCP headers.
constexpr uint32_t kMaxSynthPayload = 65495;

inline uint16_t ipv4_checksum(const uint8_t* hdr, size_t len) {
    uint32_t sum = 0;
    for (size_t i = 0; i + 1 < len; i += 2) {
        sum += read_u16be(hdr + i);
    }
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<uint16_t>(~sum);
}

inline void append_mac(Bytes& out, uint8_t tag) {
    const uint8_t mac[6] = {0x02, 0x00, 0x00, 0x00, 0x00, tag};
    out.insert(out.end(), mac, mac + 6);
}

struct DirState {
    uint32_t seq = 0x1000;
};

inline Bytes build_frame(const SessionSpec& s, const PacketSpec& p,
                         DirState& fwd, DirState& bwd) {
    const Endpoint& from = p.forward ? s.src : s.dst;
    const Endpoint& to = p.forward ? s.dst : s.src;
    Bytes payload = p.expand_payload();
    bool v6 = from.ip.v6;

    uint32_t transport_header =
        (s.proto == Transport::tcp) ? 20u : 8u;

    Bytes frame;
    frame.reserve(14 + 40 + transport_header + payload.size());
    append_mac(frame, p.forward ? 0x02 : 0x01);  // dst
    append_mac(frame, p.forward ? 0x01 : 0x02);  // src
    put_u16be(frame, v6 ? 0x86dd : 0x0800);

    size_t ip_start = frame.size();
    if (!v6) {
        uint16_t total =
            static_cast<uint16_t>(20 + transport_header + payload.size());
        frame.push_back(0x45);
        frame.push_back(0x00);
        put_u16be(frame, total);
        put_u16be(frame, 0x0000);  // identification
        put_u16be(frame, 0x4000);  // don't fragment
        frame.push_back(p.ttl);
        frame.push_back(static_cast<uint8_t>(s.proto));
        put_u16be(frame, 0x0000);  // checksum placeholder
        frame.insert(frame.end(), from.ip.bytes.begin(),
                     from.ip.bytes.begin() + 4);
        frame.insert(frame.end(), to.ip.bytes.begin(), to.ip.bytes.begin() + 4);
        uint16_t csum = ipv4_checksum(frame.data() + ip_start, 20);
        frame[ip_start + 10] = static_cast<uint8_t>(csum >> 8);
        frame[ip_start + 11] = static_cast<uint8_t>(csum & 0xff);
    } else {
        uint16_t v6_payload =
            static_cast<uint16_t>(transport_header + payload.size());
        put_u32be(frame, 0x60000000u);
        put_u16be(frame, v6_payload);
        frame.push_back(static_cast<uint8_t>(s.proto));
        frame.push_back(p.ttl);  // hop limit
        frame.insert(frame.end(), from.ip.bytes.begin(), from.ip.bytes.end());
        frame.insert(frame.end(), to.ip.bytes.begin(), to.ip.bytes.end());
    }

    if (s.proto == Transport::tcp) {
        DirState& self = p.forward ? fwd : bwd;
        DirState& peer = p.forward ? bwd : fwd;
        put_u16be(frame, from.port);
        put_u16be(frame, to.port);
        put_u32be(frame, self.seq);
        put_u32be(frame, peer.seq);
        frame.push_back(0x50);  // data offset 5 words
        frame.push_back(payload.empty() ? 0x10 : 0x18);  // ACK | PSH
        put_u16be(frame, p.window);
        put_u16be(frame, 0x0000);  // checksum (not validated downstream)
        put_u16be(frame, 0x0000);  // urgent
        self.seq += static_cast<uint32_t>(payload.size());
    } else {
        put_u16be(frame, from.port);
        put_u16be(frame, to.port);
        put_u16be(frame, static_cast<uint16_t>(8 + payload.size()));
        put_u16be(frame, 0x0000);
    }

    frame.insert(frame.end(), payload.begin(), payload.end());
    return frame;
}

}  // namespace detail

inline void validate_session_spec(const SessionSpec& s) {
    if (s.packets.empty()) {
        throw SpecInvalid("session spec has no packets");
    }
    if (!s.packets.front().forward) {
        throw SpecInvalid("first packet of a session spec must be forward");
    }
    if (s.src.ip.v6 != s.dst.ip.v6) {
        throw SpecInvalid("mixed IPv4/IPv6 endpoints in one session");
    }
    for (const auto& p : s.packets) {
        if (p.delta_us < 0) throw SpecInvalid("negative inter-packet delta");
        if (p.payload_bytes() > detail::kMaxSynthPayload) {
            throw SpecInvalid("payload exceeds " +
                              std::to_string(detail::kMaxSynthPayload) +
                              " bytes");
        }
    }
}

// Builds the capture. Packets of all sessions are merged into global time
// order (spec order breaks ties) the way a real capture interleaves flows.
inline Bytes synth_pcap(const std::vector<SessionSpec>& specs) {
    struct Slot {
        int64_t t_us;
        size_t spec_idx;
        size_t pkt_idx;
    };
    std::vector<Slot> slots;
    for (size_t si = 0; si < specs.size(); ++si) {
        validate_session_spec(specs[si]);
        int64_t t = specs[si].start_us;
        for (size_t pi = 0; pi < specs[si].packets.size(); ++pi) {
            t += specs[si].packets[pi].delta_us;
            slots.push_back({t, si, pi});
        }
    }
    std::stable_sort(slots.begin(), slots.end(),
                     [](const Slot& a, const Slot& b) { return a.t_us < b.t_us; });

    std::vector<detail::DirState> fwd(specs.size()), bwd(specs.size());
    pcap::Writer writer(pcap::kLinkEthernet);
    for (const auto& slot : slots) {
        const SessionSpec& s = specs[slot.spec_idx];
        Bytes frame = detail::build_frame(s, s.packets[slot.pkt_idx],
                                          fwd[slot.spec_idx], bwd[slot.spec_idx]);
        writer.add(slot.t_us, frame);
    }
    return writer.take();
}

}  // namespace encflow
