#pragma once

#include <optional>

#include "encflow/packet.hpp"
#include "encflow/pcap.hpp"

namespace encflow {

// Per-capture tally of frames that did not become ParsedPackets. Malformed
// input is never fatal; real captures contain junk.
struct DecodeCounters {
    uint64_t non_ip = 0;
    uint64_t non_tcp_udp = 0;
    uint64_t malformed = 0;
    uint64_t deep_encapsulation = 0;

    uint64_t total_skipped() const {
        return non_ip + non_tcp_udp + malformed + deep_encapsulation;
    }
};

namespace detail {

constexpr uint16_t kEthertypeIpv4 = 0x0800;
constexpr uint16_t kEthertypeIpv6 = 0x86dd;
constexpr uint16_t kEthertypeVlan = 0x8100;

// IPv6 extension headers that sit between the fixed header and the transport
// header. Their length counts into ip_header_length.
inline bool is_v6_extension(uint8_t next_header) {
    switch (next_header) {
        case 0:    // hop-by-hop
        case 43:   // routing
        case 60:   // destination options
        case 51:   // authentication
            return true;
        default:
            return false;
    }
}

struct IpInfo {
    IpAddr src, dst;
    uint8_t protocol = 0;
    uint8_t ttl = 0;
    uint32_t total_length = 0;
    uint32_t header_length = 0;
    size_t transport_offset = 0;  // from start of the IP header
};

inline std::optional<IpInfo> decode_ipv4(ByteView ip) {
    if (ip.size() < 20) return std::nullopt;
    const uint8_t* p = ip.data();
    if ((p[0] >> 4) != 4) return std::nullopt;
    IpInfo info;
    info.header_length = static_cast<uint32_t>(p[0] & 0x0f) * 4;
    if (info.header_length < 20 || ip.size() < info.header_length) {
        return std::nullopt;
    }
    info.total_length = read_u16be(p + 2);
    if (info.total_length < info.header_length) return std::nullopt;
    info.ttl = p[8];
    info.protocol = p[9];
    info.src = IpAddr::from_v4_bytes(p + 12);
    info.dst = IpAddr::from_v4_bytes(p + 16);
    info.transport_offset = info.header_length;
    return info;
}

inline std::optional<IpInfo> decode_ipv6(ByteView ip) {
    if (ip.size() < 40) return std::nullopt;
    const uint8_t* p = ip.data();
    if ((p[0] >> 4) != 6) return std::nullopt;
    IpInfo info;
    uint16_t payload_len = read_u16be(p + 4);
    info.total_length = 40u + payload_len;
    info.ttl = p[7];  // hop limit
    info.src = IpAddr::from_v6_bytes(p + 8);
    info.dst = IpAddr::from_v6_bytes(p + 24);
    uint8_t next = p[6];
    size_t off = 40;
    // ip_header_length for IPv6 = 40 + extension headers.
    while (is_v6_extension(next)) {
        if (ip.size() < off + 8) return std::nullopt;
        uint8_t hdr_ext_len = ip[off + 1];
        size_t ext_bytes = (next == 51) ? (hdr_ext_len + 2u) * 4u
                                        : (hdr_ext_len + 1u) * 8u;
        next = ip[off];
        off += ext_bytes;
        if (off > ip.size()) return std::nullopt;
    }
    info.protocol = next;
    info.header_length = static_cast<uint32_t>(off);
    info.transport_offset = off;
    return info;
}

}  // namespace detail

// Decodes one captured frame into a ParsedPacket. Non-IP frames, non-TCP/UDP
// protocols, and anything malformed return nullopt (Skip) and bump a counter.
// VLAN (0x8100) is unwrapped once; deeper encapsulation is skipped.
inline std::optional<ParsedPacket> decode_packet(ByteView frame,
                                                 uint32_t link_type,
                                                 DecodeCounters& counters) {
    ByteView ip = frame;
    if (link_type == pcap::kLinkEthernet) {
        if (frame.size() < 14) {
            ++counters.malformed;
            return std::nullopt;
        }
        uint16_t ethertype = read_u16be(frame.data() + 12);
        size_t l3 = 14;
        if (ethertype == detail::kEthertypeVlan) {
            if (frame.size() < 18) {
                ++counters.malformed;
                return std::nullopt;
            }
            ethertype = read_u16be(frame.data() + 16);
            l3 = 18;
            if (ethertype == detail::kEthertypeVlan) {
                ++counters.deep_encapsulation;
                return std::nullopt;
            }
        }
        if (ethertype != detail::kEthertypeIpv4 &&
            ethertype != detail::kEthertypeIpv6) {
            ++counters.non_ip;
            return std::nullopt;
        }
        ip = frame.subspan(l3);
    } else if (link_type != pcap::kLinkRawIp) {
        ++counters.non_ip;
        return std::nullopt;
    }

    if (ip.empty()) {
        ++counters.malformed;
        return std::nullopt;
    }
    std::optional<detail::IpInfo> info;
    uint8_t version = ip[0] >> 4;
    if (version == 4) {
        info = detail::decode_ipv4(ip);
    } else if (version == 6) {
        info = detail::decode_ipv6(ip);
    } else {
        ++counters.non_ip;
        return std::nullopt;
    }
    if (!info) {
        ++counters.malformed;
        return std::nullopt;
    }

    ParsedPacket pkt;
    pkt.ip_total_length = info->total_length;
    pkt.ip_header_length = info->header_length;
    pkt.ttl = info->ttl;
    pkt.src.ip = info->src;
    pkt.dst.ip = info->dst;

    ByteView transport = ip.subspan(
        std::min(info->transport_offset, ip.size()));
    uint32_t transport_header = 0;
    if (info->protocol == 6) {
        pkt.transport = Transport::tcp;
        if (transport.size() < 20) {
            ++counters.malformed;
            return std::nullopt;
        }
        pkt.src.port = read_u16be(transport.data());
        pkt.dst.port = read_u16be(transport.data() + 2);
        pkt.tcp_header_length = static_cast<uint32_t>(transport[12] >> 4) * 4;
        if (pkt.tcp_header_length < 20 ||
            transport.size() < pkt.tcp_header_length) {
            ++counters.malformed;
            return std::nullopt;
        }
        pkt.tcp_window = read_u16be(transport.data() + 14);
        transport_header = pkt.tcp_header_length;
    } else if (info->protocol == 17) {
        pkt.transport = Transport::udp;
        if (transport.size() < 8) {
            ++counters.malformed;
            return std::nullopt;
        }
        pkt.src.port = read_u16be(transport.data());
        pkt.dst.port = read_u16be(transport.data() + 2);
        transport_header = 8;
    } else {
        ++counters.non_tcp_udp;
        return std::nullopt;
    }

    // Declared payload length from the IP header; what we can actually slice
    // may be shorter when snaplen truncated the capture.
    uint32_t declared = 0;
    uint32_t consumed = info->header_length + transport_header;
    if (info->total_length > consumed) declared = info->total_length - consumed;
    pkt.payload_length = declared;

    ByteView payload = transport.subspan(transport_header);
    size_t take = std::min<size_t>(payload.size(), declared);
    pkt.payload.assign(payload.begin(), payload.begin() + take);

    pkt.enc_class = EncClass::ambiguous;
    return pkt;
}

}  // namespace encflow
