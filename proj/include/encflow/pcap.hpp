#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "encflow/common.hpp"

namespace encflow {

// Classic PCAP only (no pcapng): 24-byte global header, 16-byte record
// headers (ts_sec, ts_frac, incl_len, orig_len). Endianness and the fractional
// unit come from the magic.
namespace pcap {

constexpr uint32_t kMagicUsec = 0xa1b2c3d4u;
constexpr uint32_t kMagicNsec = 0xa1b23c4du;
constexpr uint32_t kMagicUsecSwapped = 0xd4c3b2a1u;
constexpr uint32_t kMagicNsecSwapped = 0x4d3cb2a1u;

constexpr size_t kGlobalHeaderLen = 24;
constexpr size_t kRecordHeaderLen = 16;

constexpr uint32_t kLinkEthernet = 1;
constexpr uint32_t kLinkRawIp = 101;

struct RawRecord {
    int64_t timestamp_ns = 0;
    ByteView bytes;        // captured bytes (incl_len of them)
    uint32_t orig_len = 0; // original on-wire length
};

class Reader {
public:
    // Validates the global header; throws BadMagic on an unknown magic and
    // Truncated when fewer than 24 bytes are present.
    explicit Reader(ByteView file) : file_(file) {
        if (file.size() < kGlobalHeaderLen) {
            throw Truncated("pcap global header: have " +
                            std::to_string(file.size()) + " bytes, need 24");
        }
        uint32_t magic = read_u32le(file.data());
        switch (magic) {
            case kMagicUsec: big_endian_ = false; nanos_ = false; break;
            case kMagicNsec: big_endian_ = false; nanos_ = true; break;
            case kMagicUsecSwapped: big_endian_ = true; nanos_ = false; break;
            case kMagicNsecSwapped: big_endian_ = true; nanos_ = true; break;
            default: {
                char buf[16];
                std::snprintf(buf, sizeof(buf), "0x%08x", magic);
                throw BadMagic(std::string("unrecognized pcap magic ") + buf);
            }
        }
        link_type_ = u32(file.data() + 20);
        offset_ = kGlobalHeaderLen;
    }

    uint32_t link_type() const { return link_type_; }
    bool nanosecond_resolution() const { return nanos_; }

    // Next record, or nullopt at clean EOF. Throws Truncated when a record
    // header or its claimed payload runs past the end of the buffer.
    std::optional<RawRecord> next() {
        if (offset_ == file_.size()) return std::nullopt;
        if (file_.size() - offset_ < kRecordHeaderLen) {
            throw Truncated("pcap record header at offset " +
                            std::to_string(offset_));
        }
        const uint8_t* h = file_.data() + offset_;
        uint32_t ts_sec = u32(h);
        uint32_t ts_frac = u32(h + 4);
        uint32_t incl_len = u32(h + 8);
        uint32_t orig_len = u32(h + 12);
        if (file_.size() - offset_ - kRecordHeaderLen < incl_len) {
            throw Truncated("pcap record at offset " + std::to_string(offset_) +
                            " claims " + std::to_string(incl_len) + " bytes");
        }
        RawRecord rec;
        rec.timestamp_ns = static_cast<int64_t>(ts_sec) * 1'000'000'000ll +
                           static_cast<int64_t>(ts_frac) * (nanos_ ? 1 : 1000);
        rec.bytes = file_.subspan(offset_ + kRecordHeaderLen, incl_len);
        rec.orig_len = orig_len;
        offset_ += kRecordHeaderLen + incl_len;
        return rec;
    }

private:
    uint32_t u32(const uint8_t* p) const {
        return big_endian_ ? read_u32be(p) : read_u32le(p);
    }

    ByteView file_;
    size_t offset_ = 0;
    uint32_t link_type_ = kLinkEthernet;
    bool big_endian_ = false;
    bool nanos_ = false;
};

// Little-endian microsecond writer; the only flavor the synthetic generator
// emits.
class Writer {
public:
    explicit Writer(uint32_t link_type = kLinkEthernet) {
        put_u32le(out_, kMagicUsec);
        put_u16le(out_, 2);   // version 2.4
        put_u16le(out_, 4);
        put_u32le(out_, 0);   // thiszone
        put_u32le(out_, 0);   // sigfigs
        put_u32le(out_, 65535);
        put_u32le(out_, link_type);
    }

    void add(int64_t timestamp_us, ByteView frame) {
        put_u32le(out_, static_cast<uint32_t>(timestamp_us / 1'000'000));
        put_u32le(out_, static_cast<uint32_t>(timestamp_us % 1'000'000));
        put_u32le(out_, static_cast<uint32_t>(frame.size()));
        put_u32le(out_, static_cast<uint32_t>(frame.size()));
        out_.insert(out_.end(), frame.begin(), frame.end());
    }

    const Bytes& bytes() const { return out_; }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

}  // namespace pcap
}  // namespace encflow
