#pragma once

#include <cstdint>
#include <cstring>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace encflow {

// ----------------------------------------------------------------------------
// Error taxonomy. Every throwable condition named by the public contracts gets
// its own type so callers (and the CLI's error records) can key on `kind()`.
// ----------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define ENCFLOW_ERROR_TYPE(Name)                                   \
    class Name : public Error {                                    \
    public:                                                        \
        explicit Name(const std::string& msg) : Error(#Name, msg) {} \
    }

ENCFLOW_ERROR_TYPE(BadMagic);
ENCFLOW_ERROR_TYPE(Truncated);
ENCFLOW_ERROR_TYPE(SpecInvalid);
ENCFLOW_ERROR_TYPE(NotEncrypted);
ENCFLOW_ERROR_TYPE(EmptyEncView);
ENCFLOW_ERROR_TYPE(EmptySeries);
ENCFLOW_ERROR_TYPE(EmptyInput);
ENCFLOW_ERROR_TYPE(MissingOperand);
ENCFLOW_ERROR_TYPE(ManifestMismatch);
ENCFLOW_ERROR_TYPE(ShapeError);
ENCFLOW_ERROR_TYPE(DegenerateLabels);
ENCFLOW_ERROR_TYPE(TooFewRecords);
ENCFLOW_ERROR_TYPE(NotDifferentiable);
ENCFLOW_ERROR_TYPE(RangeError);
ENCFLOW_ERROR_TYPE(LengthMismatch);
ENCFLOW_ERROR_TYPE(SingleClass);
ENCFLOW_ERROR_TYPE(ConflictingRule);
ENCFLOW_ERROR_TYPE(UncoveredCapture);
ENCFLOW_ERROR_TYPE(VersionMismatch);
ENCFLOW_ERROR_TYPE(ConfigError);
ENCFLOW_ERROR_TYPE(IoError);

#undef ENCFLOW_ERROR_TYPE

// ----------------------------------------------------------------------------
// FNV-1a 64-bit. Used for config digests, model/scaler digests, and as the
// keyed hash behind id-based resampling (bootstrap draws keyed on row ids so
// that permuting training rows cannot change which rows a tree sees).
// ----------------------------------------------------------------------------

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr uint64_t kFnvPrime  = 0x100000001b3ull;

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t fnv_mix(uint64_t h, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= v & 0xffu;
        h *= kFnvPrime;
        v >>= 8;
    }
    return h;
}

// Combine an arbitrary list of integer keys into one 64-bit hash.
template <typename... Keys>
uint64_t keyed_hash(uint64_t seed, Keys... keys) {
    uint64_t h = fnv_mix(kFnvOffset, seed);
    ((h = fnv_mix(h, static_cast<uint64_t>(keys))), ...);
    return h;
}

// ----------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 with hand-rolled draw helpers; the standard
// distribution objects are implementation-defined, which would tie model files
// to one libstdc++ version.
// ----------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t uniform(uint64_t n) { return gen_() % n; }

    // Uniform real in [0, 1).
    double uniform_real() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform_real(double lo, double hi) {
        return lo + (hi - lo) * uniform_real();
    }

    // Box-Muller; consumes two uniforms per pair, caches the second.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform_real();
        double u2 = uniform_real();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mean + stddev * r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// ----------------------------------------------------------------------------
// Numerics
// ----------------------------------------------------------------------------

// Sign-branched sigmoid; finite for any finite logit.
inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

// Binary cross-entropy evaluated from the logit: softplus(z) - y*z.
inline double bce_from_logit(double logit, double y) {
    return softplus(logit) - y * logit;
}

// ----------------------------------------------------------------------------
// Little/big-endian byte readers and writers over raw buffers.
// ----------------------------------------------------------------------------

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

inline uint16_t read_u16le(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline uint16_t read_u16be(const uint8_t* p) {
    return static_cast<uint16_t>((p[0] << 8) | p[1]);
}
inline uint32_t read_u32le(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint32_t read_u32be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void put_u16le(Bytes& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u16be(Bytes& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v & 0xff));
}
inline void put_u32le(Bytes& out, uint32_t v) {
    put_u16le(out, static_cast<uint16_t>(v & 0xffff));
    put_u16le(out, static_cast<uint16_t>(v >> 16));
}
inline void put_u32be(Bytes& out, uint32_t v) {
    put_u16be(out, static_cast<uint16_t>(v >> 16));
    put_u16be(out, static_cast<uint16_t>(v & 0xffff));
}
inline void put_u64le(Bytes& out, uint64_t v) {
    put_u32le(out, static_cast<uint32_t>(v & 0xffffffffu));
    put_u32le(out, static_cast<uint32_t>(v >> 32));
}
inline void put_f64le(Bytes& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64le(out, bits);
}
inline uint64_t read_u64le(const uint8_t* p) {
    return static_cast<uint64_t>(read_u32le(p)) |
           (static_cast<uint64_t>(read_u32le(p + 4)) << 32);
}
inline double read_f64le(const uint8_t* p) {
    uint64_t bits = read_u64le(p);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

// Deterministic double formatting (shortest round-trip is not needed; fixed
// %.17g keeps CSV/JSON output byte-stable across runs).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace encflow
