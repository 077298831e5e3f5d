#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "encflow/decode.hpp"
#include "encflow/pcap.hpp"
#include "encflow/sessions.hpp"
#include "encflow/synth.hpp"

using namespace encflow;

namespace {

// Parse + decode an in-memory capture into ParsedPackets.
std::vector<ParsedPacket> decode_capture(const Bytes& file,
                                         DecodeCounters* out_counters = nullptr) {
    pcap::Reader reader(file);
    DecodeCounters counters;
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
    if (out_counters) *out_counters = counters;
    return packets;
}

Endpoint ep4(uint8_t last, uint16_t port) {
    return Endpoint{IpAddr::v4(10, 0, 0, last), port};
}

SessionSpec basic_tcp_spec() {
    SessionSpec s;
    s.proto = Transport::tcp;
    s.src = ep4(1, 40001);
    s.dst = ep4(2, 443);
    s.start_us = 1'700'000'000'000'000;
    s.packets.push_back({0, true, Bytes{0xde, 0xad}, 63, 1024});
    s.packets.push_back({1500, false, Bytes{0xbe, 0xef, 0x01}, 120, 2048});
    s.packets.push_back({250, true, Bytes{}, 63, 512});
    return s;
}

}  // namespace

TEST_CASE("pcap reader accepts all four magics") {
    // Hand-built one-record captures, independent of the Writer.
    auto build = [](bool big_endian, bool nanos) {
        Bytes f;
        uint32_t magic = nanos ? pcap::kMagicNsec : pcap::kMagicUsec;
        auto put32 = [&](uint32_t v) {
            if (big_endian) {
                put_u32be(f, v);
            } else {
                put_u32le(f, v);
            }
        };
        // A swapped-magic file stores the magic itself byte-reversed relative
        // to little-endian order.
        if (big_endian) {
            put_u32be(f, magic);
        } else {
            put_u32le(f, magic);
        }
        if (big_endian) {
            put_u16be(f, 2); put_u16be(f, 4);
        } else {
            put_u16le(f, 2); put_u16le(f, 4);
        }
        put32(0); put32(0); put32(65535);
        put32(pcap::kLinkRawIp);
        put32(7);           // ts_sec
        put32(5);           // ts_frac
        put32(3);           // incl_len
        put32(3);           // orig_len
        f.push_back(0xaa); f.push_back(0xbb); f.push_back(0xcc);
        return f;
    };

    struct Case { bool be, ns; int64_t want_ts; };
    for (Case c : {Case{false, false, 7'000'005'000},
                   Case{false, true, 7'000'000'005},
                   Case{true, false, 7'000'005'000},
                   Case{true, true, 7'000'000'005}}) {
        Bytes file = build(c.be, c.ns);
        pcap::Reader reader(file);
        CHECK(reader.link_type() == pcap::kLinkRawIp);
        CHECK(reader.nanosecond_resolution() == c.ns);
        auto rec = reader.next();
        REQUIRE(rec.has_value());
        CHECK(rec->timestamp_ns == c.want_ts);
        REQUIRE(rec->bytes.size() == 3);
        CHECK(rec->bytes[0] == 0xaa);
        CHECK(rec->orig_len == 3);
        CHECK_FALSE(reader.next().has_value());
    }
}

TEST_CASE("pcap reader rejects bad input") {
    Bytes junk{0x00, 0x01, 0x02, 0x03};
    junk.resize(24, 0x00);
    CHECK_THROWS_AS(pcap::Reader{ByteView(junk)}, BadMagic);

    Bytes short_hdr{0xd4, 0xc3, 0xb2, 0xa1};
    CHECK_THROWS_AS(pcap::Reader{ByteView(short_hdr)}, Truncated);

    // Valid header, then a record claiming more bytes than remain.
    pcap::Writer w;
    Bytes file = w.take();
    put_u32le(file, 0); put_u32le(file, 0);
    put_u32le(file, 100); put_u32le(file, 100);
    file.push_back(0x00);
    pcap::Reader reader(file);
    CHECK_THROWS_AS(reader.next(), Truncated);

    // Partial record header.
    pcap::Writer w2;
    Bytes file2 = w2.take();
    file2.push_back(0x01);
    pcap::Reader reader2(file2);
    CHECK_THROWS_AS(reader2.next(), Truncated);
}

TEST_CASE("synthetic tcp session round-trips through parse and decode") {
    SessionSpec spec = basic_tcp_spec();
    Bytes file = synth_pcap({spec});
    DecodeCounters counters;
    auto packets = decode_capture(file, &counters);

    REQUIRE(packets.size() == 3);
    CHECK(counters.total_skipped() == 0);

    for (size_t i = 0; i < 3; ++i) {
        const auto& p = packets[i];
        const auto& ps = spec.packets[i];
        CHECK(p.timestamp_ns == spec.packet_time_us(i) * 1000);
        CHECK(p.capture_index == i);
        CHECK(p.transport == Transport::tcp);
        const Endpoint& from = ps.forward ? spec.src : spec.dst;
        const Endpoint& to = ps.forward ? spec.dst : spec.src;
        CHECK(p.src == from);
        CHECK(p.dst == to);
        CHECK(p.ttl == ps.ttl);
        CHECK(p.tcp_window == ps.window);
        CHECK(p.ip_header_length == 20);
        CHECK(p.tcp_header_length == 20);
        CHECK(p.ip_total_length == 40 + ps.payload_bytes());
        CHECK(p.payload_length == ps.payload_bytes());
        CHECK(p.payload == ps.expand_payload());
        CHECK(p.enc_class == EncClass::ambiguous);
    }
}

TEST_CASE("synthetic frames carry valid ipv4 checksums") {
    Bytes file = synth_pcap({basic_tcp_spec()});
    pcap::Reader reader(file);
    while (auto rec = reader.next()) {
        // Sum of all header words including the stored checksum must be
        // 0xffff in ones-complement.
        const uint8_t* ip = rec->bytes.data() + 14;
        uint32_t sum = 0;
        for (int i = 0; i < 20; i += 2) sum += read_u16be(ip + i);
        while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
        CHECK(sum == 0xffff);
    }
}

TEST_CASE("synthetic udp and ipv6 sessions decode") {
    SessionSpec udp;
    udp.proto = Transport::udp;
    udp.src = ep4(3, 5000);
    udp.dst = ep4(4, 53);
    udp.packets.push_back({0, true, Bytes{1, 2, 3, 4, 5}, 64, 0});
    udp.packets.push_back({100, false, Bytes{9, 9}, 64, 0});

    SessionSpec six;
    six.proto = Transport::tcp;
    six.src = Endpoint{IpAddr::parse("2001:db8::1"), 50000};
    six.dst = Endpoint{IpAddr::parse("2001:db8::2"), 443};
    six.start_us = 10'000'000;
    six.packets.push_back({0, true, Bytes{0x16, 0x03}, 60, 100});

    auto packets = decode_capture(synth_pcap({udp, six}));
    REQUIRE(packets.size() == 3);

    CHECK(packets[0].transport == Transport::udp);
    CHECK(packets[0].tcp_header_length == 0);
    CHECK(packets[0].tcp_window == 0);
    CHECK(packets[0].ip_total_length == 20 + 8 + 5);
    CHECK(packets[0].payload_length == 5);

    const auto& v6 = packets[2];
    CHECK(v6.src.ip.v6);
    CHECK(v6.src == six.src);
    CHECK(v6.dst == six.dst);
    CHECK(v6.ip_header_length == 40);
    CHECK(v6.ip_total_length == 40 + 20 + 2);
    CHECK(v6.ttl == 60);
    CHECK(v6.payload == Bytes{0x16, 0x03});
}

TEST_CASE("tls record templates expand to typed records") {
    PacketSpec p;
    p.payload = std::vector<TlsRecordTemplate>{
        {0x16, 4, 0x01}, {0x17, 2, 0xff}};
    Bytes bytes = p.expand_payload();
    REQUIRE(bytes.size() == 5 + 4 + 5 + 2);
    CHECK(bytes[0] == 0x16);
    CHECK(bytes[1] == 0x03);
    CHECK(bytes[2] == 0x03);
    CHECK(read_u16be(bytes.data() + 3) == 4);
    CHECK(bytes[9] == 0x17);
    CHECK(read_u16be(bytes.data() + 12) == 2);
    CHECK(p.payload_bytes() == 16);
}

TEST_CASE("session spec validation") {
    SessionSpec s = basic_tcp_spec();
    s.packets[1].delta_us = -1;
    CHECK_THROWS_AS(synth_pcap({s}), SpecInvalid);

    SessionSpec s2 = basic_tcp_spec();
    s2.packets[0].forward = false;
    CHECK_THROWS_AS(synth_pcap({s2}), SpecInvalid);

    SessionSpec s3 = basic_tcp_spec();
    s3.packets[0].payload = Bytes(65496, 0);
    CHECK_THROWS_AS(synth_pcap({s3}), SpecInvalid);

    SessionSpec s4 = basic_tcp_spec();
    s4.packets.clear();
    CHECK_THROWS_AS(synth_pcap({s4}), SpecInvalid);

    SessionSpec s5 = basic_tcp_spec();
    s5.dst.ip = IpAddr::parse("2001:db8::9");
    CHECK_THROWS_AS(synth_pcap({s5}), SpecInvalid);
}

TEST_CASE("decoder skip counters") {
    DecodeCounters c;

    // ARP frame.
    Bytes arp(64, 0);
    arp[12] = 0x08; arp[13] = 0x06;
    CHECK_FALSE(decode_packet(arp, pcap::kLinkEthernet, c).has_value());
    CHECK(c.non_ip == 1);

    // ICMP inside IPv4.
    SessionSpec s = basic_tcp_spec();
    Bytes file = synth_pcap({s});
    pcap::Reader reader(file);
    auto rec = reader.next();
    Bytes icmp(rec->bytes.begin(), rec->bytes.end());
    icmp[14 + 9] = 1;  // protocol
    CHECK_FALSE(decode_packet(icmp, pcap::kLinkEthernet, c).has_value());
    CHECK(c.non_tcp_udp == 1);

    // Runt frame.
    Bytes runt{0x01, 0x02, 0x03};
    CHECK_FALSE(decode_packet(runt, pcap::kLinkEthernet, c).has_value());
    CHECK(c.malformed == 1);

    // Truncated IPv4 header.
    Bytes cut(rec->bytes.begin(), rec->bytes.begin() + 20);
    CHECK_FALSE(decode_packet(cut, pcap::kLinkEthernet, c).has_value());
    CHECK(c.malformed == 2);
}

TEST_CASE("single vlan tag is unwrapped, double vlan is skipped") {
    SessionSpec s = basic_tcp_spec();
    Bytes file = synth_pcap({s});
    pcap::Reader reader(file);
    auto rec = reader.next();

    Bytes tagged(rec->bytes.begin(), rec->bytes.begin() + 12);
    tagged.push_back(0x81); tagged.push_back(0x00);
    tagged.push_back(0x00); tagged.push_back(0x64);  // VID 100
    tagged.insert(tagged.end(), rec->bytes.begin() + 12, rec->bytes.end());

    DecodeCounters c;
    auto pkt = decode_packet(tagged, pcap::kLinkEthernet, c);
    REQUIRE(pkt.has_value());
    CHECK(pkt->src == s.src);
    CHECK(pkt->payload == s.packets[0].expand_payload());

    Bytes doubled(tagged.begin(), tagged.begin() + 12);
    doubled.push_back(0x81); doubled.push_back(0x00);
    doubled.push_back(0x00); doubled.push_back(0xc8);
    doubled.insert(doubled.end(), tagged.begin() + 12, tagged.end());
    CHECK_FALSE(decode_packet(doubled, pcap::kLinkEthernet, c).has_value());
    CHECK(c.deep_encapsulation == 1);
}

TEST_CASE("raw-ip link type decodes bare ip packets") {
    SessionSpec s = basic_tcp_spec();
    Bytes file = synth_pcap({s});
    pcap::Reader reader(file);
    auto rec = reader.next();
    Bytes bare(rec->bytes.begin() + 14, rec->bytes.end());

    DecodeCounters c;
    auto pkt = decode_packet(bare, pcap::kLinkRawIp, c);
    REQUIRE(pkt.has_value());
    CHECK(pkt->src == s.src);
    CHECK(pkt->dst == s.dst);
}

TEST_CASE("ipv6 extension headers count into the header length") {
    SessionSpec six;
    six.proto = Transport::udp;
    six.src = Endpoint{IpAddr::parse("fd00::1"), 1000};
    six.dst = Endpoint{IpAddr::parse("fd00::2"), 2000};
    six.packets.push_back({0, true, Bytes{0x42}, 64, 0});
    Bytes file = synth_pcap({six});
    pcap::Reader reader(file);
    auto rec = reader.next();

    // Splice a hop-by-hop options header (8 bytes) between the fixed header
    // and the UDP header.
    Bytes frame(rec->bytes.begin(), rec->bytes.end());
    uint8_t transport_proto = frame[14 + 6];
    frame[14 + 6] = 0;  // next header: hop-by-hop
    Bytes ext{transport_proto, 0, 1, 4, 0, 0, 0, 0};
    frame.insert(frame.begin() + 14 + 40, ext.begin(), ext.end());
    uint16_t payload_len = read_u16be(frame.data() + 14 + 4);
    frame[14 + 4] = static_cast<uint8_t>((payload_len + 8) >> 8);
    frame[14 + 5] = static_cast<uint8_t>((payload_len + 8) & 0xff);

    DecodeCounters c;
    auto pkt = decode_packet(frame, pcap::kLinkEthernet, c);
    REQUIRE(pkt.has_value());
    CHECK(pkt->ip_header_length == 48);
    CHECK(pkt->transport == Transport::udp);
    CHECK(pkt->payload == Bytes{0x42});
}

TEST_CASE("snaplen truncation shortens captured payload, not declared length") {
    SessionSpec s = basic_tcp_spec();
    s.packets[0].payload = Bytes(100, 0x55);
    Bytes file = synth_pcap({s});

    // Rewrite record 0 to capture only the first 60 frame bytes.
    size_t rec_off = pcap::kGlobalHeaderLen;
    uint32_t incl = read_u32le(file.data() + rec_off + 8);
    REQUIRE(incl == 14 + 40 + 100);
    Bytes cut(file.begin(), file.begin() + rec_off);
    Bytes hdr(file.begin() + rec_off, file.begin() + rec_off + 16);
    hdr[8] = 60; hdr[9] = 0; hdr[10] = 0; hdr[11] = 0;
    cut.insert(cut.end(), hdr.begin(), hdr.end());
    cut.insert(cut.end(), file.begin() + rec_off + 16,
               file.begin() + rec_off + 16 + 60);
    cut.insert(cut.end(), file.begin() + rec_off + 16 + incl, file.end());

    auto packets = decode_capture(cut);
    REQUIRE(packets.size() == 3);
    CHECK(packets[0].payload_length == 100);
    CHECK(packets[0].payload.size() == 60 - 54);
}

TEST_CASE("flow key canonicalizes direction") {
    Endpoint a = ep4(1, 40001);
    Endpoint b = ep4(2, 443);
    FlowKey ab(Transport::tcp, a, b);
    FlowKey ba(Transport::tcp, b, a);
    CHECK(ab == ba);
    CHECK(FlowKeyHash{}(ab) == FlowKeyHash{}(ba));
    CHECK(ab.a <= ab.b);

    FlowKey udp(Transport::udp, a, b);
    CHECK(ab != udp);
}

TEST_CASE("session assembly groups, splits on idle timeout, assigns direction") {
    // Two interleaved flows plus a third appearance of flow one after a gap
    // beyond the timeout.
    SessionSpec s1 = basic_tcp_spec();
    SessionSpec s2;
    s2.proto = Transport::udp;
    s2.src = ep4(7, 1111);
    s2.dst = ep4(8, 53);
    s2.start_us = s1.start_us + 100;
    s2.packets.push_back({0, true, Bytes{1}, 64, 0});
    s2.packets.push_back({50, false, Bytes{2}, 64, 0});

    SessionSpec s3 = s1;  // same 5-tuple, far in the future, opened by dst
    std::swap(s3.src, s3.dst);
    s3.start_us = s1.packet_time_us(2) + 301'000'000;
    s3.packets = {{0, true, Bytes{0xaa}, 64, 100}};

    auto packets = decode_capture(synth_pcap({s1, s2, s3}));
    auto sessions = assemble_sessions(packets);

    REQUIRE(sessions.size() == 3);
    CHECK(sessions[0].key == FlowKey(Transport::tcp, s1.src, s1.dst));
    CHECK(sessions[0].size() == 3);
    CHECK(sessions[0].initiator == s1.src);
    CHECK(sessions[0].packets[0].direction == Dir::forward);
    CHECK(sessions[0].packets[1].direction == Dir::backward);
    CHECK(sessions[0].packets[2].direction == Dir::forward);

    CHECK(sessions[1].key == FlowKey(Transport::udp, s2.src, s2.dst));
    CHECK(sessions[1].size() == 2);

    // Same canonical key as session 0 but a fresh session, initiated by the
    // old responder.
    CHECK(sessions[2].key == sessions[0].key);
    CHECK(sessions[2].initiator == s3.src);
    CHECK(sessions[2].packets[0].direction == Dir::forward);
}

TEST_CASE("idle gap exactly at the timeout does not split") {
    SessionSpec s = basic_tcp_spec();
    s.packets = {{0, true, Bytes{1}, 64, 100},
                 {300'000'000, true, Bytes{2}, 64, 100},   // == 300s
                 {300'000'001, true, Bytes{3}, 64, 100}};  // > 300s
    auto sessions = assemble_sessions(decode_capture(synth_pcap({s})));
    REQUIRE(sessions.size() == 2);
    CHECK(sessions[0].size() == 2);
    CHECK(sessions[1].size() == 1);
}

TEST_CASE("assembly matches a brute-force oracle on randomized traffic") {
    Rng rng(20240817);
    std::vector<SessionSpec> specs;
    std::vector<Endpoint> pool;
    for (int i = 0; i < 6; ++i) {
        pool.push_back(ep4(static_cast<uint8_t>(10 + i),
                           static_cast<uint16_t>(1000 + 7 * i)));
    }
    int64_t base_us = 0;
    for (int i = 0; i < 40; ++i) {
        SessionSpec s;
        s.proto = (rng.uniform(2) == 0) ? Transport::tcp : Transport::udp;
        size_t a = rng.uniform(pool.size());
        size_t b = rng.uniform(pool.size());
        if (a == b) b = (b + 1) % pool.size();
        s.src = pool[a];
        s.dst = pool[b];
        s.start_us = base_us + static_cast<int64_t>(rng.uniform(500'000'000));
        size_t n = 1 + rng.uniform(6);
        for (size_t k = 0; k < n; ++k) {
            PacketSpec p;
            p.delta_us = static_cast<int64_t>(rng.uniform(400'000'000));
            p.forward = (k == 0) || (rng.uniform(2) == 0);
            p.payload = Bytes(rng.uniform(40), 0x11);
            s.packets.push_back(p);
        }
        specs.push_back(s);
    }

    auto packets = decode_capture(synth_pcap(specs));
    auto sessions = assemble_sessions(packets);

    // Oracle: sort by (ts, index), group by canonical key string, split on
    // strict >300s gaps.
    std::vector<ParsedPacket> sorted = packets;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ParsedPacket& x, const ParsedPacket& y) {
                         if (x.timestamp_ns != y.timestamp_ns) {
                             return x.timestamp_ns < y.timestamp_ns;
                         }
                         return x.capture_index < y.capture_index;
                     });
    struct OracleSession {
        std::string key;
        std::vector<uint64_t> captures;
        int64_t last_ts;
        int64_t first_ts;
        uint64_t first_capture;
    };
    std::vector<OracleSession> oracle;
    std::map<std::string, size_t> open;
    constexpr int64_t kTimeoutNs = 300'000'000'000ll;
    for (const auto& p : sorted) {
        std::string key = p.flow_key().to_string();
        auto it = open.find(key);
        bool fresh = it == open.end() ||
                     p.timestamp_ns - oracle[it->second].last_ts > kTimeoutNs;
        if (fresh) {
            oracle.push_back({key, {}, p.timestamp_ns, p.timestamp_ns,
                              p.capture_index});
            open[key] = oracle.size() - 1;
        }
        OracleSession& sess = oracle[open[key]];
        sess.captures.push_back(p.capture_index);
        sess.last_ts = p.timestamp_ns;
    }
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const OracleSession& x, const OracleSession& y) {
                         if (x.first_ts != y.first_ts) {
                             return x.first_ts < y.first_ts;
                         }
                         return x.first_capture < y.first_capture;
                     });

    REQUIRE(sessions.size() == oracle.size());
    for (size_t i = 0; i < sessions.size(); ++i) {
        CHECK(sessions[i].key.to_string() == oracle[i].key);
        REQUIRE(sessions[i].size() == oracle[i].captures.size());
        for (size_t k = 0; k < oracle[i].captures.size(); ++k) {
            CHECK(sessions[i].packets[k].capture_index == oracle[i].captures[k]);
        }
        // Direction always relative to the initiator.
        for (const auto& p : sessions[i].packets) {
            CHECK((p.src == sessions[i].initiator) ==
                  (p.direction == Dir::forward));
        }
    }
}

TEST_CASE("assemble_sessions rejects a non-positive timeout") {
    CHECK_THROWS_AS(assemble_sessions({}, 0.0), SpecInvalid);
    CHECK_THROWS_AS(assemble_sessions({}, -3.0), SpecInvalid);
}

TEST_CASE("reader and decoder never crash on fuzzed bytes") {
    Rng rng(99);
    for (int iter = 0; iter < 300; ++iter) {
        Bytes blob(rng.uniform(200), 0);
        for (auto& b : blob) b = static_cast<uint8_t>(rng.uniform(256));
        try {
            pcap::Reader reader(blob);
            while (reader.next()) {
            }
        } catch (const Error&) {
        }
        DecodeCounters c;
        decode_packet(blob, pcap::kLinkEthernet, c);
        decode_packet(blob, pcap::kLinkRawIp, c);
    }

    // Mutated valid captures: flip bytes in a real file.
    Bytes good = synth_pcap({basic_tcp_spec()});
    for (int iter = 0; iter < 300; ++iter) {
        Bytes mutated = good;
        size_t flips = 1 + rng.uniform(8);
        for (size_t f = 0; f < flips; ++f) {
            mutated[rng.uniform(mutated.size())] ^=
                static_cast<uint8_t>(1 + rng.uniform(255));
        }
        try {
            decode_capture(mutated);
        } catch (const Error&) {
        }
    }
}
