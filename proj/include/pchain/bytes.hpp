#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace pchain {

using json = nlohmann::json;
using Bytes = std::vector<uint8_t>;

// Strict lowercase hex. Uppercase or odd-length input is rejected so that a
// persisted chain file has exactly one accepted encoding for every byte.
std::string to_hex(std::span<const uint8_t> data);
std::optional<Bytes> from_hex(std::string_view hex);

inline std::string to_hex(const Bytes& b) { return to_hex(std::span<const uint8_t>(b)); }

template <size_t N>
std::optional<std::array<uint8_t, N>> from_hex_array(std::string_view hex) {
    auto raw = from_hex(hex);
    if (!raw || raw->size() != N) return std::nullopt;
    std::array<uint8_t, N> out{};
    std::copy(raw->begin(), raw->end(), out.begin());
    return out;
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(std::span<const uint8_t> b) { return std::string(b.begin(), b.end()); }

// Canonical encoding used everywhere bytes are signed or hashed: compact JSON
// with lexicographically sorted keys (nlohmann's default object order).
inline Bytes canonical_bytes(const json& j) { return to_bytes(j.dump()); }

Bytes concat(std::span<const uint8_t> a, std::span<const uint8_t> b);

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pchain
