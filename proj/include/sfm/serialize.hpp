#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <variant>

#include "sfm/mechanism.hpp"
#include "sfm/private_sketch.hpp"
#include "sfm/sketch.hpp"

namespace sfm {

/// On-disk header of a sketch file. All multi-byte fields little-endian
/// regardless of host; payload is ceil(B*P/8) bytes, bit (bucket i,
/// level j) at bit index i*P + (j-1), LSB-first within each byte, pad
/// bits zero.
struct SketchFileHeader {
    static constexpr std::array<char, 4> kMagic = {'S', 'F', 'M', '1'};
    static constexpr uint8_t kVersion = 1;
    static constexpr size_t kSize = 4 + 1 + 1 + 4 + 4 + 8 + 8 + 8 + 8 + 4;

    uint8_t format_version = kVersion;
    uint8_t mechanism_tag = 0;
    uint32_t buckets = 0;
    uint32_t levels = 0;
    uint64_t hash_seed = 0;
    double p = 1.0;
    double q = 0.0;
    double epsilon = std::numeric_limits<double>::infinity();
    uint32_t merge_count = 0;
};

namespace detail {

inline void put_bytes(std::ostream& out, uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, n);
}

inline uint64_t get_bytes(std::istream& in, int n) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), n);
    if (in.gcount() != n) throw TruncatedPayloadError("sketch stream: unexpected end of header");
    uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

inline bool relative_close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1.0});
}

/// mechanism_tag <-> (p, q, epsilon) cross-validation.
inline void check_header_consistency(const SketchFileHeader& h) {
    const auto fail = [](const char* msg) { throw HeaderInconsistencyError(msg); };
    if (h.buckets < 1 || h.levels < 1 ||
        static_cast<uint64_t>(h.buckets) * h.levels > (uint64_t(1) << 32)) {
        fail("sketch header: invalid dimensions");
    }
    constexpr double tol = 1e-12;
    switch (h.mechanism_tag) {
        case 0:
            if (h.p != 1.0 || h.q != 0.0 || !std::isinf(h.epsilon) || h.epsilon < 0 ||
                h.merge_count != 0) {
                fail("sketch header: none-mechanism fields inconsistent");
            }
            break;
        case 1: {
            if (!(h.epsilon > 0) || !std::isfinite(h.epsilon)) {
                fail("sketch header: sym mechanism needs finite positive epsilon");
            }
            if (!relative_close(h.q, 1.0 - h.p, tol)) {
                fail("sketch header: sym mechanism requires q = 1 - p");
            }
            if (!relative_close(h.p, 1.0 - 1.0 / (std::exp(h.epsilon) + 1.0), tol)) {
                fail("sketch header: sym mechanism p does not match epsilon");
            }
            break;
        }
        case 2: {
            if (!(h.epsilon > 0) || !std::isfinite(h.epsilon)) {
                fail("sketch header: xor mechanism needs finite positive epsilon");
            }
            if (h.p != 0.5) fail("sketch header: xor mechanism requires p = 1/2");
            if (!relative_close(h.q, 0.5 * std::exp(-h.epsilon), tol)) {
                fail("sketch header: xor mechanism q does not match epsilon");
            }
            break;
        }
        case 3:
            if (!(h.q <= 0.5 && 0.5 <= h.p) || !validate_dp(h.p, h.q, h.epsilon)) {
                fail("sketch header: custom mechanism violates the DP constraint");
            }
            break;
        default:
            fail("sketch header: unknown mechanism tag");
    }
}

inline uint64_t write_sketch_impl(const SketchParams& params, const BitMatrix& bits,
                                  const FlipMechanism& mech, uint32_t merge_count,
                                  std::ostream& out) {
    out.write(SketchFileHeader::kMagic.data(), 4);
    detail::put_bytes(out, SketchFileHeader::kVersion, 1);
    detail::put_bytes(out, static_cast<uint8_t>(mech.kind), 1);
    detail::put_bytes(out, params.buckets, 4);
    detail::put_bytes(out, params.levels, 4);
    detail::put_bytes(out, params.hash_seed, 8);
    detail::put_bytes(out, std::bit_cast<uint64_t>(mech.p), 8);
    detail::put_bytes(out, std::bit_cast<uint64_t>(mech.q), 8);
    detail::put_bytes(out, std::bit_cast<uint64_t>(mech.epsilon), 8);
    detail::put_bytes(out, merge_count, 4);

    const uint64_t payload_bytes = (params.bit_count() + 7) / 8;
    for (uint64_t byte = 0; byte < payload_bytes; ++byte) {
        const uint64_t word = bits.words()[byte >> 3];
        const char b = static_cast<char>((word >> (8 * (byte & 7))) & 0xFF);
        out.write(&b, 1);
    }
    if (!out) throw IoError("sketch stream: write failure");
    return SketchFileHeader::kSize + payload_bytes;
}

} // namespace detail

/// Serialize a plain sketch (mechanism tag 0). Returns bytes written.
inline uint64_t write_sketch(const PcsaSketch& sketch, std::ostream& out) {
    return detail::write_sketch_impl(sketch.params(), sketch.bits(), mechanism_none(), 0, out);
}

/// Serialize a private sketch. Returns bytes written.
inline uint64_t write_sketch(const PrivateSketch& sketch, std::ostream& out) {
    return detail::write_sketch_impl(sketch.params(), sketch.bits(), sketch.mechanism(),
                                     sketch.merge_count(), out);
}

using LoadedSketch = std::variant<PcsaSketch, PrivateSketch>;

/// Parse one sketch from a stream; exact inverse of write_sketch.
/// Malformed input raises a distinct error per defect: BadMagicError,
/// UnsupportedVersionError, HeaderInconsistencyError,
/// TruncatedPayloadError, NonzeroPadBitsError.
inline LoadedSketch read_sketch(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, SketchFileHeader::kMagic.data(), 4) != 0) {
        throw BadMagicError("sketch stream: bad magic");
    }
    SketchFileHeader h;
    h.format_version = static_cast<uint8_t>(detail::get_bytes(in, 1));
    if (h.format_version != SketchFileHeader::kVersion) {
        throw UnsupportedVersionError("sketch stream: unsupported format version");
    }
    h.mechanism_tag = static_cast<uint8_t>(detail::get_bytes(in, 1));
    h.buckets = static_cast<uint32_t>(detail::get_bytes(in, 4));
    h.levels = static_cast<uint32_t>(detail::get_bytes(in, 4));
    h.hash_seed = detail::get_bytes(in, 8);
    h.p = std::bit_cast<double>(detail::get_bytes(in, 8));
    h.q = std::bit_cast<double>(detail::get_bytes(in, 8));
    h.epsilon = std::bit_cast<double>(detail::get_bytes(in, 8));
    h.merge_count = static_cast<uint32_t>(detail::get_bytes(in, 4));
    detail::check_header_consistency(h);

    const SketchParams params{h.buckets, h.levels, h.hash_seed};
    BitMatrix bits(params.bit_count());
    const uint64_t payload_bytes = (params.bit_count() + 7) / 8;
    for (uint64_t byte = 0; byte < payload_bytes; ++byte) {
        char c;
        in.read(&c, 1);
        if (in.gcount() != 1) {
            throw TruncatedPayloadError("sketch stream: truncated payload");
        }
        bits.words()[byte >> 3] |=
            static_cast<uint64_t>(static_cast<unsigned char>(c)) << (8 * (byte & 7));
    }
    for (uint64_t idx = params.bit_count(); idx < payload_bytes * 8; ++idx) {
        if ((bits.words()[idx >> 6] >> (idx & 63)) & 1u) {
            throw NonzeroPadBitsError("sketch stream: nonzero padding bits");
        }
    }

    if (h.mechanism_tag == 0) {
        return PcsaSketch(params, std::move(bits));
    }
    FlipMechanism mech{h.p, h.q, h.epsilon, static_cast<MechanismKind>(h.mechanism_tag)};
    return PrivateSketch(params, std::move(bits), mech, h.merge_count);
}

} // namespace sfm
