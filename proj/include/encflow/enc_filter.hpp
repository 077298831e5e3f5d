#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "encflow/packet.hpp"

namespace encflow {

// Two-step filter: (1) drop sessions with no encrypted traffic, (2) mark the
// plaintext packets inside surviving sessions so downstream features can be
// computed over ciphertext only.
//
// Classification is content-based (TLS record types, SSH banner/KEX framing)
// with the policy's port sets as fallback for unparseable payloads. Record
// headers split across TCP segments are not reassembled; record bodies are,
// via per-direction continuation counters.

struct EncPolicy {
    std::vector<uint16_t> tls_ports{443, 8443, 993, 995, 465, 990};
    std::vector<uint16_t> ssh_ports{22};
    bool detect_by_content = true;
    EncClass treat_ambiguous_as = EncClass::plaintext;

    // Port sets must not overlap.
    void validate() const {
        for (uint16_t p : tls_ports) {
            if (std::find(ssh_ports.begin(), ssh_ports.end(), p) !=
                ssh_ports.end()) {
                throw SpecInvalid("port " + std::to_string(p) +
                                  " is in both tls_ports and ssh_ports");
            }
        }
        if (treat_ambiguous_as == EncClass::ambiguous) {
            throw SpecInvalid("treat_ambiguous_as must resolve to a class");
        }
    }

    bool is_tls_port(uint16_t p) const {
        return std::find(tls_ports.begin(), tls_ports.end(), p) !=
               tls_ports.end();
    }
    bool is_ssh_port(uint16_t p) const {
        return std::find(ssh_ports.begin(), ssh_ports.end(), p) !=
               ssh_ports.end();
    }
};

struct FilterStats {
    uint64_t sessions_kept = 0;
    uint64_t sessions_dropped_not_encrypted = 0;
    uint64_t packets_encrypted = 0;
    uint64_t packets_plaintext = 0;
    uint64_t packets_ambiguous_resolved = 0;
};

enum class SessionProto : uint8_t { none = 0, tls = 1, ssh = 2 };

namespace detail {

constexpr uint32_t kTlsMaxRecordLen = 18432;  // 2^14 + 2048 ciphertext bound
constexpr uint32_t kSshMaxPacketLen = 35000;
constexpr uint8_t kSshMsgNewkeys = 21;

inline bool plausible_tls_header(const uint8_t* p, size_t n) {
    if (n < 5) return false;
    if (p[0] < 0x14 || p[0] > 0x17) return false;
    if (p[1] != 0x03 || p[2] > 0x04) return false;
    return read_u16be(p + 3) <= kTlsMaxRecordLen;
}

inline bool has_ssh_banner(const Bytes& payload) {
    return payload.size() >= 4 && payload[0] == 'S' && payload[1] == 'S' &&
           payload[2] == 'H' && payload[3] == '-';
}

struct TlsDirState {
    bool ccs_seen = false;       // ChangeCipherSpec sent by this direction
    uint64_t pending = 0;        // body bytes of an unfinished record
    EncClass pending_class = EncClass::plaintext;
};

// Parses one packet's payload as consecutive TLS records, continuing any
// record left unfinished by the previous packet of the same direction.
// All-or-nothing: a malformed header fails the whole packet and leaves the
// direction state untouched except for a pending reset.
inline std::optional<EncClass> tls_classify_payload(const Bytes& payload,
                                                    TlsDirState& st,
                                                    bool& handshake_seen) {
    TlsDirState next = st;
    bool any_encrypted = false;
    bool saw_handshake = false;
    size_t pos = 0;

    if (next.pending > 0) {
        size_t take = std::min<uint64_t>(next.pending, payload.size());
        if (next.pending_class == EncClass::encrypted) any_encrypted = true;
        next.pending -= take;
        pos = take;
    }

    while (pos < payload.size()) {
        if (payload.size() - pos < 5 ||
            !plausible_tls_header(payload.data() + pos, payload.size() - pos)) {
            st.pending = 0;
            return std::nullopt;
        }
        uint8_t type = payload[pos];
        uint32_t len = read_u16be(payload.data() + pos + 3);

        EncClass cls;
        switch (type) {
            case 0x17:
                cls = EncClass::encrypted;
                break;
            case 0x14:
                cls = EncClass::plaintext;
                saw_handshake = true;
                break;
            default:  // 0x16 handshake, 0x15 alert
                cls = next.ccs_seen ? EncClass::encrypted : EncClass::plaintext;
                if (type == 0x16) saw_handshake = true;
                break;
        }
        if (cls == EncClass::encrypted) any_encrypted = true;
        if (type == 0x14) next.ccs_seen = true;

        size_t body = payload.size() - pos - 5;
        if (body < len) {
            next.pending = len - body;
            next.pending_class = cls;
            pos = payload.size();
        } else {
            pos += 5 + len;
        }
    }

    st = next;
    if (saw_handshake) handshake_seen = true;
    return any_encrypted ? EncClass::encrypted : EncClass::plaintext;
}

struct SshDirState {
    enum class Phase : uint8_t { banner, kex, encrypted } phase = Phase::banner;
    // In kex: body bytes of an unfinished binary packet. In banner: nonzero
    // while the banner line continues into the next packet.
    uint64_t pending = 0;
};

// SSH transport framing: a version banner line, then length-prefixed binary
// packets. Everything through NEWKEYS (message 21) is plaintext for that
// direction; all later traffic is ciphertext.
inline std::optional<EncClass> ssh_classify_payload(const Bytes& payload,
                                                    SshDirState& st,
                                                    bool& handshake_seen) {
    if (st.phase == SshDirState::Phase::encrypted) {
        return EncClass::encrypted;
    }

    SshDirState next = st;
    bool saw_handshake = false;
    size_t pos = 0;

    if (next.phase == SshDirState::Phase::banner) {
        if (next.pending == 0) {
            if (!has_ssh_banner(payload)) {
                return std::nullopt;
            }
            saw_handshake = true;
        }
        auto nl = std::find(payload.begin(), payload.end(), uint8_t('\n'));
        if (nl == payload.end()) {
            next.pending = 1;
            st = next;
            if (saw_handshake) handshake_seen = true;
            return EncClass::plaintext;
        }
        next.pending = 0;
        next.phase = SshDirState::Phase::kex;
        pos = static_cast<size_t>(nl - payload.begin()) + 1;
    }

    bool newkeys = false;
    if (next.pending > 0) {
        size_t take = std::min<uint64_t>(next.pending, payload.size());
        next.pending -= take;
        pos = take;
    }
    while (pos < payload.size() && !newkeys) {
        if (payload.size() - pos < 6) {
            st.pending = 0;
            return std::nullopt;
        }
        uint32_t len = read_u32be(payload.data() + pos);
        if (len < 2 || len > kSshMaxPacketLen) {
            st.pending = 0;
            return std::nullopt;
        }
        uint8_t msg = payload[pos + 5];
        if (msg == kSshMsgNewkeys) newkeys = true;
        saw_handshake = true;
        uint64_t total = 4ull + len;
        size_t avail = payload.size() - pos;
        if (avail < total) {
            next.pending = total - avail;
            pos = payload.size();
        } else {
            pos += static_cast<size_t>(total);
        }
    }

    if (newkeys) {
        // Trailing bytes after NEWKEYS in the same packet are already
        // ciphertext, but the packet that carries NEWKEYS counts plaintext.
        next.phase = SshDirState::Phase::encrypted;
        next.pending = 0;
    }
    st = next;
    if (saw_handshake) handshake_seen = true;
    return EncClass::plaintext;
}

inline SessionProto detect_protocol(const Session& session,
                                    const EncPolicy& policy) {
    uint16_t pa = session.key.a.port;
    uint16_t pb = session.key.b.port;
    if (policy.is_tls_port(pa) || policy.is_tls_port(pb)) {
        return SessionProto::tls;
    }
    if (policy.is_ssh_port(pa) || policy.is_ssh_port(pb)) {
        return SessionProto::ssh;
    }
    if (policy.detect_by_content) {
        for (const auto& pkt : session.packets) {
            if (pkt.payload.empty()) continue;
            if (has_ssh_banner(pkt.payload)) return SessionProto::ssh;
            if (plausible_tls_header(pkt.payload.data(), pkt.payload.size())) {
                return SessionProto::tls;
            }
            break;  // only the first non-empty payload is sniffed
        }
    }
    return SessionProto::none;
}

}  // namespace detail

// Assigns enc_class to every packet. Pure: identical session and policy give
// identical classification.
inline Session classify_packets(Session session, const EncPolicy& policy) {
    policy.validate();
    if (session.empty()) {
        throw SpecInvalid("classify_packets: empty session");
    }

    SessionProto proto = detail::detect_protocol(session, policy);
    bool on_policy_port =
        policy.is_tls_port(session.key.a.port) ||
        policy.is_tls_port(session.key.b.port) ||
        policy.is_ssh_port(session.key.a.port) ||
        policy.is_ssh_port(session.key.b.port);

    detail::TlsDirState tls_state[2];
    detail::SshDirState ssh_state[2];
    bool handshake_seen = false;

    for (auto& pkt : session.packets) {
        if (pkt.payload.empty()) {
            pkt.enc_class = EncClass::plaintext;
            continue;
        }
        size_t d = (pkt.direction == Dir::forward) ? 0 : 1;
        std::optional<EncClass> cls;
        if (proto == SessionProto::tls) {
            cls = detail::tls_classify_payload(pkt.payload, tls_state[d],
                                               handshake_seen);
        } else if (proto == SessionProto::ssh) {
            cls = detail::ssh_classify_payload(pkt.payload, ssh_state[d],
                                               handshake_seen);
        }
        if (cls) {
            pkt.enc_class = *cls;
        } else if (on_policy_port && handshake_seen) {
            pkt.enc_class = EncClass::encrypted;
        } else {
            pkt.enc_class = policy.treat_ambiguous_as;
        }
    }
    return session;
}

// Step 1: keep only sessions with at least one encrypted packet.
inline std::vector<Session> filter_encrypted_sessions(
    std::vector<Session> sessions, const EncPolicy& policy,
    FilterStats* stats = nullptr) {
    FilterStats local;
    std::vector<Session> kept;
    for (auto& s : sessions) {
        Session classified = classify_packets(std::move(s), policy);
        size_t enc = 0;
        for (const auto& p : classified.packets) {
            if (p.enc_class == EncClass::encrypted) {
                ++enc;
                ++local.packets_encrypted;
            } else {
                ++local.packets_plaintext;
            }
        }
        if (enc > 0) {
            classified.is_encrypted = true;
            ++local.sessions_kept;
            kept.push_back(std::move(classified));
        } else {
            ++local.sessions_dropped_not_encrypted;
        }
    }
    if (stats) *stats = local;
    return kept;
}

// Step 2 output: the ciphertext-only projection of a surviving session.
// Holds indices into session.packets; must not outlive the session.
class EncView {
public:
    explicit EncView(const Session& session) : session_(&session) {
        if (!session.is_encrypted) {
            throw NotEncrypted("encrypted_view: session is not encrypted");
        }
        for (size_t i = 0; i < session.packets.size(); ++i) {
            if (session.packets[i].enc_class == EncClass::encrypted) {
                enc_indices_.push_back(i);
            }
        }
    }

    const Session& session() const { return *session_; }
    const std::vector<ParsedPacket>& all_packets() const {
        return session_->packets;
    }
    size_t enc_size() const { return enc_indices_.size(); }
    const ParsedPacket& enc(size_t i) const {
        return session_->packets[enc_indices_[i]];
    }
    const std::vector<size_t>& enc_indices() const { return enc_indices_; }

private:
    const Session* session_;
    std::vector<size_t> enc_indices_;
};

inline EncView encrypted_view(const Session& session) {
    return EncView(session);
}

}  // namespace encflow
