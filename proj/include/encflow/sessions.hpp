#pragma once

#include <algorithm>
#include <unordered_map>
#include <vector>

#include "encflow/packet.hpp"

namespace encflow {

constexpr double kDefaultIdleTimeoutSec = 300.0;

// Groups packets into bidirectional sessions keyed on the canonical 5-tuple.
// A gap longer than idle_timeout_sec between consecutive packets of the same
// key starts a new session. FIN/RST do not split sessions; the timeout rule is
// the only boundary, which keeps TCP and UDP uniform.
//
// Output sessions are sorted by first-packet time (capture index breaks ties)
// and every packet carries its direction relative to the session initiator.
inline std::vector<Session> assemble_sessions(
    std::vector<ParsedPacket> packets,
    double idle_timeout_sec = kDefaultIdleTimeoutSec) {
    if (idle_timeout_sec <= 0.0) {
        throw SpecInvalid("idle_timeout must be > 0");
    }
    const int64_t timeout_ns =
        static_cast<int64_t>(idle_timeout_sec * 1e9);

    std::stable_sort(packets.begin(), packets.end(),
                     [](const ParsedPacket& a, const ParsedPacket& b) {
                         if (a.timestamp_ns != b.timestamp_ns) {
                             return a.timestamp_ns < b.timestamp_ns;
                         }
                         return a.capture_index < b.capture_index;
                     });

    std::unordered_map<FlowKey, std::vector<size_t>, FlowKeyHash> open;
    std::vector<Session> sessions;

    for (auto& pkt : packets) {
        FlowKey key = pkt.flow_key();
        auto [it, inserted] = open.try_emplace(key);
        auto& session_idx = it->second;

        bool fresh = session_idx.empty();
        if (!fresh) {
            Session& current = sessions[session_idx.back()];
            if (pkt.timestamp_ns - current.last_ts() > timeout_ns) {
                fresh = true;
            }
        }
        if (fresh) {
            Session s;
            s.key = key;
            s.initiator = pkt.src;
            s.responder = pkt.dst;
            session_idx.push_back(sessions.size());
            sessions.push_back(std::move(s));
        }

        Session& current = sessions[session_idx.back()];
        pkt.direction =
            (pkt.src == current.initiator) ? Dir::forward : Dir::backward;
        current.packets.push_back(std::move(pkt));
    }

    std::stable_sort(sessions.begin(), sessions.end(),
                     [](const Session& a, const Session& b) {
                         if (a.first_ts() != b.first_ts()) {
                             return a.first_ts() < b.first_ts();
                         }
                         return a.packets.front().capture_index <
                                b.packets.front().capture_index;
                     });
    return sessions;
}

}  // namespace encflow
