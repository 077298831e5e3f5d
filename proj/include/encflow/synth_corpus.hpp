#pragma once

#include <nlohmann/json.hpp>

#include "encflow/synth.hpp"

namespace encflow {

// Corpus generators for pipeline smoke runs and the with/without-Enc
// comparison. Malicious sessions terminate at one peer address, benign at
// another, so a small IP-based label manifest covers every capture.

inline IpAddr corpus_malicious_ip() { return IpAddr::v4(10, 66, 6, 6); }
inline IpAddr corpus_benign_ip() { return IpAddr::v4(10, 77, 7, 7); }

inline nlohmann::json corpus_label_manifest(const std::string& capture_id) {
    nlohmann::json j;
    j["captures"][capture_id] = {
        {"default", "benign"},
        {"malicious_ips", {corpus_malicious_ip().to_string()}},
    };
    return j;
}

namespace detail {

inline PacketSpec enc_record_packet(uint32_t payload_len) {
    PacketSpec p;
    p.payload = std::vector<TlsRecordTemplate>{
        {0x17, static_cast<uint16_t>(payload_len - 5), 0xab}};
    p.expect = EncClass::encrypted;
    return p;
}

inline PacketSpec plain_packet(uint32_t payload_len, Rng& rng) {
    Bytes body(payload_len);
    body[0] = 'A';  // never parses as a TLS record header
    for (size_t i = 1; i < body.size(); ++i) {
        body[i] = static_cast<uint8_t>(0x20 + rng.uniform(95));
    }
    PacketSpec p;
    p.payload = std::move(body);
    p.expect = EncClass::plaintext;
    return p;
}

inline Bytes ssh_binary_packet(uint8_t msg, uint32_t extra, Rng& rng) {
    Bytes out;
    put_u32be(out, 2 + extra);
    out.push_back(4);  // padding length, unchecked downstream
    out.push_back(msg);
    for (uint32_t i = 0; i < extra; ++i) {
        out.push_back(static_cast<uint8_t>(rng.uniform(256)));
    }
    return out;
}

}  // namespace detail

// One session of the comparison corpus. The peer port is off every policy
// list; the leading application-data record latches content detection, and
// later packets interleave ciphertext records with unparseable filler.
//
// Construction keeps the traditional view class-identical in distribution:
// every session draws six large and six small payload sizes, a uniformly
// random six-of-twelve subset of the tail positions carries ciphertext, and
// the class only decides which pool half the ciphertext positions receive.
// The all-packet multiset, each position's marginal, timing, and directions
// never depend on the class, so only Enc statistics separate the classes.
// With `neutral_head`, the signal-bearing tail starts after enough neutral
// packets to fill the per-packet tensors, leaving the signal visible to the
// session scalars and ratios alone.
inline SessionSpec comparison_session(uint64_t seed, uint32_t index,
                                      bool malicious,
                                      bool neutral_head = false) {
    Rng rng(keyed_hash(seed, uint64_t{0xab1a7}, index));
    SessionSpec s;
    s.proto = Transport::tcp;
    s.src.ip = IpAddr::v4(10, 0, uint8_t(index / 200), uint8_t(index % 200 + 1));
    s.src.port = static_cast<uint16_t>(39000 + index % 20000);
    s.dst.ip = malicious ? corpus_malicious_ip() : corpus_benign_ip();
    s.dst.port = 4444;
    s.start_us = int64_t(index) * 3'000'000;

    PacketSpec lead = detail::enc_record_packet(160);
    lead.delta_us = 0;
    lead.forward = true;
    s.packets.push_back(std::move(lead));

    struct Slot {
        int64_t delta;
        bool forward;
    };
    size_t head_extra = neutral_head ? 14 : 0;
    size_t pairs = neutral_head ? 12 : 6;

    // Class-independent draws come first so the stream never shifts by label.
    std::vector<Slot> head_slots(head_extra);
    std::vector<uint32_t> head_sizes(head_extra);
    std::vector<bool> head_enc(head_extra);
    for (size_t i = 0; i < head_extra; ++i) {
        head_slots[i] = {2000 + int64_t(rng.uniform(30000)),
                         rng.uniform(2) == 0};
        head_sizes[i] = 150 + uint32_t(rng.uniform(60));
        head_enc[i] = rng.uniform(2) == 0;
    }
    std::vector<Slot> tail_slots(2 * pairs);
    for (auto& slot : tail_slots) {
        slot = {2000 + int64_t(rng.uniform(30000)), rng.uniform(2) == 0};
    }
    std::vector<uint32_t> big(pairs), small(pairs);
    for (auto& v : big) v = 370 + uint32_t(rng.uniform(80));
    for (auto& v : small) v = 50 + uint32_t(rng.uniform(40));
    std::vector<size_t> tail_order(2 * pairs);
    for (size_t i = 0; i < tail_order.size(); ++i) tail_order[i] = i;
    rng.shuffle(tail_order);  // first half of the order carries ciphertext

    std::vector<bool> tail_enc(2 * pairs, false);
    for (size_t i = 0; i < pairs; ++i) tail_enc[tail_order[i]] = true;

    for (size_t i = 0; i < head_extra; ++i) {
        PacketSpec p = head_enc[i] ? detail::enc_record_packet(head_sizes[i])
                                   : detail::plain_packet(head_sizes[i], rng);
        p.delta_us = head_slots[i].delta;
        p.forward = head_slots[i].forward;
        s.packets.push_back(std::move(p));
    }
    size_t big_at = 0, small_at = 0;
    for (size_t i = 0; i < 2 * pairs; ++i) {
        bool enc = tail_enc[i];
        bool takes_big = enc == malicious;
        uint32_t size = takes_big ? big[big_at++] : small[small_at++];
        PacketSpec p = enc ? detail::enc_record_packet(size)
                           : detail::plain_packet(size, rng);
        p.delta_us = tail_slots[i].delta;
        p.forward = tail_slots[i].forward;
        s.packets.push_back(std::move(p));
    }
    return s;
}

// Balanced comparison corpus; even indices are malicious.
inline std::vector<SessionSpec> comparison_corpus(size_t sessions,
                                                  uint64_t seed,
                                                  bool neutral_head = false) {
    if (sessions == 0) throw EmptyInput("corpus needs at least one session");
    std::vector<SessionSpec> out;
    out.reserve(sessions);
    for (size_t i = 0; i < sessions; ++i) {
        out.push_back(comparison_session(seed, static_cast<uint32_t>(i),
                                         i % 2 == 0, neutral_head));
    }
    return out;
}

// Protocol-mix corpus: proper TLS handshakes on 443, SSH transport setup on
// 22, and plaintext exchanges the session filter must drop.
inline SessionSpec mixed_session(uint64_t seed, uint32_t index) {
    Rng rng(keyed_hash(seed, uint64_t{0x313ed}, index));
    bool malicious = rng.uniform(2) == 0;
    uint32_t kind = index % 3;

    SessionSpec s;
    s.proto = Transport::tcp;
    s.src.ip = IpAddr::v4(10, 1, uint8_t(index / 200), uint8_t(index % 200 + 1));
    s.src.port = static_cast<uint16_t>(40000 + index % 20000);
    s.dst.ip = malicious ? corpus_malicious_ip() : corpus_benign_ip();
    s.start_us = int64_t(index) * 2'000'000;

    auto push = [&s, &rng](PacketSpec p, bool forward) {
        p.delta_us = s.packets.empty() ? 0 : 1000 + int64_t(rng.uniform(20000));
        p.forward = forward;
        s.packets.push_back(std::move(p));
    };

    if (kind == 0) {  // TLS
        s.dst.port = 443;
        PacketSpec hello;
        hello.payload = std::vector<TlsRecordTemplate>{
            {0x16, static_cast<uint16_t>(180 + rng.uniform(60)), 0x01}};
        hello.expect = EncClass::plaintext;
        push(hello, true);
        PacketSpec server_hello;
        server_hello.payload = std::vector<TlsRecordTemplate>{
            {0x16, static_cast<uint16_t>(800 + rng.uniform(300)), 0x02}};
        server_hello.expect = EncClass::plaintext;
        push(server_hello, false);
        for (bool forward : {true, false}) {
            PacketSpec finish;
            finish.payload = std::vector<TlsRecordTemplate>{
                {0x14, 1, 0x01}, {0x16, 40, 0x0f}};  // post-CCS, ciphertext
            finish.expect = EncClass::encrypted;
            push(finish, forward);
        }
        size_t exchanges = 3 + rng.uniform(6);
        for (size_t i = 0; i < exchanges; ++i) {
            PacketSpec data = detail::enc_record_packet(
                static_cast<uint32_t>(80 + rng.uniform(900)));
            push(data, rng.uniform(2) == 0);
        }
        PacketSpec ack;
        ack.payload = Bytes{};
        ack.expect = EncClass::plaintext;
        push(ack, rng.uniform(2) == 0);
    } else if (kind == 1) {  // SSH
        s.dst.port = 22;
        PacketSpec banner_c;
        const char* bc = "SSH-2.0-encflow_client\r\n";
        banner_c.payload = Bytes(bc, bc + std::char_traits<char>::length(bc));
        banner_c.expect = EncClass::plaintext;
        push(banner_c, true);
        PacketSpec banner_s;
        const char* bs = "SSH-2.0-encflow_server\r\n";
        banner_s.payload = Bytes(bs, bs + std::char_traits<char>::length(bs));
        banner_s.expect = EncClass::plaintext;
        push(banner_s, false);
        for (bool forward : {true, false}) {
            PacketSpec kex;
            kex.payload = detail::ssh_binary_packet(
                20, 300 + uint32_t(rng.uniform(200)), rng);
            kex.expect = EncClass::plaintext;
            push(kex, forward);
        }
        for (bool forward : {true, false}) {
            PacketSpec newkeys;
            newkeys.payload = detail::ssh_binary_packet(21, 8, rng);
            newkeys.expect = EncClass::plaintext;
            push(newkeys, forward);
        }
        size_t exchanges = 4 + rng.uniform(6);
        for (size_t i = 0; i < exchanges; ++i) {
            Bytes blob(60 + rng.uniform(700));
            for (auto& b : blob) b = static_cast<uint8_t>(rng.uniform(256));
            PacketSpec data;
            data.payload = std::move(blob);
            data.expect = EncClass::encrypted;
            push(data, rng.uniform(2) == 0);
        }
    } else {  // plaintext, filtered out downstream
        s.dst.port = 8080;
        const char* req = "GET /index.html HTTP/1.1\r\nHost: svc\r\n\r\n";
        PacketSpec get;
        get.payload = Bytes(req, req + std::char_traits<char>::length(req));
        get.expect = EncClass::plaintext;
        push(get, true);
        PacketSpec resp;
        Bytes body(200 + rng.uniform(500), uint8_t('x'));
        const char* hdr = "HTTP/1.1 200 OK\r\n\r\n";
        body.insert(body.begin(), hdr,
                    hdr + std::char_traits<char>::length(hdr));
        resp.payload = std::move(body);
        resp.expect = EncClass::plaintext;
        push(resp, false);
    }
    return s;
}

inline std::vector<SessionSpec> mixed_corpus(size_t sessions, uint64_t seed) {
    if (sessions == 0) throw EmptyInput("corpus needs at least one session");
    std::vector<SessionSpec> out;
    out.reserve(sessions);
    for (size_t i = 0; i < sessions; ++i) {
        out.push_back(mixed_session(seed, static_cast<uint32_t>(i)));
    }
    return out;
}

}  // namespace encflow
