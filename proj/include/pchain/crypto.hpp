#pragma once

#include <array>
#include <compare>
#include <optional>
#include <span>

#include "pchain/bytes.hpp"

namespace pchain {

// 32-byte SHA-256 digest.
struct Digest {
    std::array<uint8_t, 32> bytes{};

    auto operator<=>(const Digest&) const = default;
    std::string hex() const { return to_hex(bytes); }
    static std::optional<Digest> from_hex(std::string_view h);
    static Digest zero() { return Digest{}; }
};

Digest sha256(std::span<const uint8_t> data);
inline Digest sha256(const Bytes& b) { return sha256(std::span<const uint8_t>(b)); }
inline Digest sha256(std::string_view s) {
    return sha256(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

// Incremental hashing, used by the miner so the header prefix is hashed once
// per nonce without re-serializing.
class Sha256 {
  public:
    Sha256();
    Sha256& update(std::span<const uint8_t> data);
    Sha256& update(std::string_view s);
    Digest finish() const;  // copies internal state; the hasher stays usable

  private:
    std::array<uint8_t, 128> state_;  // large enough for crypto_hash_sha256_state
};

// Ed25519 verification key; doubles as the public identity of every actor.
// Sealed boxes convert it to its X25519 counterpart internally.
using PublicKey = std::array<uint8_t, 32>;

struct Signature {
    std::array<uint8_t, 64> bytes{};
    PublicKey signer{};

    json to_json() const;
    static std::optional<Signature> from_json(const json& j);
    bool operator==(const Signature&) const = default;
};

struct SealedBox {
    Bytes ciphertext;  // ephemeral X25519 key (32 bytes) followed by box ciphertext
    PublicKey recipient{};
    std::optional<PublicKey> sender_hint;

    json to_json() const;
    static std::optional<SealedBox> from_json(const json& j);
    bool operator==(const SealedBox&) const = default;
};

// Deterministic byte generator (SHA-256 in counter mode). Every source of
// randomness in a scenario draws from one of these, keyed by the scenario seed.
class Drbg {
  public:
    explicit Drbg(uint64_t seed);
    Drbg(uint64_t seed, std::string_view domain);

    void fill(std::span<uint8_t> out);
    Bytes bytes(size_t n);
    uint64_t next_u64();
    uint64_t uniform(uint64_t bound);  // unbiased in [0, bound)

  private:
    std::array<uint8_t, 32> key_{};
    uint64_t counter_ = 0;
    std::array<uint8_t, 32> block_{};
    size_t used_ = 32;
};

struct KeyPair {
    PublicKey public_key{};                // Ed25519 verify key, the actor's identity
    std::array<uint8_t, 64> secret_key{};  // Ed25519 expanded secret; never serialized
    std::array<uint8_t, 32> box_public{};  // derived X25519 keys for sealed boxes
    std::array<uint8_t, 32> box_secret{};

    static KeyPair from_seed(std::span<const uint8_t, 32> seed);
    static KeyPair generate(Drbg& rng);
};

Signature sign(const KeyPair& signer, std::span<const uint8_t> message);
bool verify(const PublicKey& pk, std::span<const uint8_t> message, const Signature& sig);

// libsodium crypto_box_seal-compatible envelope, with the ephemeral key drawn
// from the caller's Drbg so sealing is reproducible under a fixed seed.
SealedBox seal(Drbg& rng, const PublicKey& recipient, std::span<const uint8_t> plaintext,
               std::optional<PublicKey> sender_hint = std::nullopt);

// Wrong key, truncation and tampering all fail the same way: nullopt.
std::optional<Bytes> open(const KeyPair& recipient, const SealedBox& box);

inline constexpr const char* kSigningAlgorithm = "ed25519";
inline constexpr const char* kSealAlgorithm = "x25519-xsalsa20-poly1305";

}  // namespace pchain
