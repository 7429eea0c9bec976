#include "pchain/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>

namespace pchain {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
    });
}

int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;  // uppercase is not canonical
}

}  // namespace

std::string to_hex(std::span<const uint8_t> data) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.resize(data.size() * 2);
    for (size_t i = 0; i < data.size(); ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0x0f];
    }
    return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) return std::nullopt;
    Bytes out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        int hi = hex_nibble(hex[2 * i]);
        int lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out[i] = static_cast<uint8_t>((hi << 4) | lo);
    }
    return out;
}

Bytes concat(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    Bytes out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::optional<Digest> Digest::from_hex(std::string_view h) {
    auto arr = from_hex_array<32>(h);
    if (!arr) return std::nullopt;
    return Digest{*arr};
}

Digest sha256(std::span<const uint8_t> data) {
    ensure_sodium();
    Digest d;
    crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
    return d;
}

Sha256::Sha256() {
    ensure_sodium();
    static_assert(sizeof(crypto_hash_sha256_state) <= 128);
    auto* st = reinterpret_cast<crypto_hash_sha256_state*>(state_.data());
    crypto_hash_sha256_init(st);
}

Sha256& Sha256::update(std::span<const uint8_t> data) {
    auto* st = reinterpret_cast<crypto_hash_sha256_state*>(state_.data());
    crypto_hash_sha256_update(st, data.data(), data.size());
    return *this;
}

Sha256& Sha256::update(std::string_view s) {
    return update(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

Digest Sha256::finish() const {
    crypto_hash_sha256_state st;
    std::memcpy(&st, state_.data(), sizeof(st));
    Digest d;
    crypto_hash_sha256_final(&st, d.bytes.data());
    return d;
}

json Signature::to_json() const {
    return json{{"bytes", to_hex(bytes)}, {"signer", to_hex(signer)}};
}

std::optional<Signature> Signature::from_json(const json& j) {
    if (!j.is_object() || !j.contains("bytes") || !j.contains("signer")) return std::nullopt;
    if (!j["bytes"].is_string() || !j["signer"].is_string()) return std::nullopt;
    auto b = from_hex_array<64>(j["bytes"].get_ref<const std::string&>());
    auto s = from_hex_array<32>(j["signer"].get_ref<const std::string&>());
    if (!b || !s) return std::nullopt;
    return Signature{*b, *s};
}

json SealedBox::to_json() const {
    json j{{"ciphertext", to_hex(ciphertext)}, {"recipient", to_hex(recipient)}};
    if (sender_hint) j["sender_hint"] = to_hex(*sender_hint);
    return j;
}

std::optional<SealedBox> SealedBox::from_json(const json& j) {
    if (!j.is_object() || !j.contains("ciphertext") || !j.contains("recipient")) return std::nullopt;
    if (!j["ciphertext"].is_string() || !j["recipient"].is_string()) return std::nullopt;
    auto ct = pchain::from_hex(j["ciphertext"].get_ref<const std::string&>());
    auto rc = from_hex_array<32>(j["recipient"].get_ref<const std::string&>());
    if (!ct || !rc) return std::nullopt;
    SealedBox box{std::move(*ct), *rc, std::nullopt};
    if (j.contains("sender_hint")) {
        if (!j["sender_hint"].is_string()) return std::nullopt;
        auto sh = from_hex_array<32>(j["sender_hint"].get_ref<const std::string&>());
        if (!sh) return std::nullopt;
        box.sender_hint = *sh;
    }
    return box;
}

Drbg::Drbg(uint64_t seed) : Drbg(seed, "pchain-drbg") {}

Drbg::Drbg(uint64_t seed, std::string_view domain) {
    ensure_sodium();
    Sha256 h;
    h.update(domain);
    uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<uint8_t>(seed >> (8 * i));
    h.update(std::span<const uint8_t>(le, 8));
    key_ = h.finish().bytes;
}

void Drbg::fill(std::span<uint8_t> out) {
    size_t i = 0;
    while (i < out.size()) {
        if (used_ == 32) {
            Sha256 h;
            h.update(std::span<const uint8_t>(key_));
            uint8_t le[8];
            for (int k = 0; k < 8; ++k) le[k] = static_cast<uint8_t>(counter_ >> (8 * k));
            h.update(std::span<const uint8_t>(le, 8));
            block_ = h.finish().bytes;
            ++counter_;
            used_ = 0;
        }
        size_t n = std::min(out.size() - i, 32 - used_);
        std::memcpy(out.data() + i, block_.data() + used_, n);
        used_ += n;
        i += n;
    }
}

Bytes Drbg::bytes(size_t n) {
    Bytes out(n);
    fill(out);
    return out;
}

uint64_t Drbg::next_u64() {
    uint8_t buf[8];
    fill(buf);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

uint64_t Drbg::uniform(uint64_t bound) {
    if (bound == 0) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % bound;
}

KeyPair KeyPair::from_seed(std::span<const uint8_t, 32> seed) {
    ensure_sodium();
    KeyPair kp;
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed.data());
    if (crypto_sign_ed25519_pk_to_curve25519(kp.box_public.data(), kp.public_key.data()) != 0 ||
        crypto_sign_ed25519_sk_to_curve25519(kp.box_secret.data(), kp.secret_key.data()) != 0) {
        throw std::runtime_error("ed25519 to curve25519 conversion failed");
    }
    return kp;
}

KeyPair KeyPair::generate(Drbg& rng) {
    std::array<uint8_t, 32> seed;
    rng.fill(seed);
    return from_seed(seed);
}

Signature sign(const KeyPair& signer, std::span<const uint8_t> message) {
    ensure_sodium();
    Signature sig;
    sig.signer = signer.public_key;
    crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(),
                         signer.secret_key.data());
    return sig;
}

bool verify(const PublicKey& pk, std::span<const uint8_t> message, const Signature& sig) {
    ensure_sodium();
    return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                       pk.data()) == 0;
}

SealedBox seal(Drbg& rng, const PublicKey& recipient, std::span<const uint8_t> plaintext,
               std::optional<PublicKey> sender_hint) {
    ensure_sodium();
    std::array<uint8_t, 32> recipient_curve;
    if (crypto_sign_ed25519_pk_to_curve25519(recipient_curve.data(), recipient.data()) != 0) {
        throw CodecError("malformed recipient public key");
    }

    std::array<uint8_t, 32> esk;
    rng.fill(esk);
    std::array<uint8_t, 32> epk;
    crypto_scalarmult_base(epk.data(), esk.data());

    // Same nonce construction as crypto_box_seal: BLAKE2b(epk || recipient_pk).
    std::array<uint8_t, crypto_box_NONCEBYTES> nonce;
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, nonce.size());
    crypto_generichash_update(&st, epk.data(), epk.size());
    crypto_generichash_update(&st, recipient_curve.data(), recipient_curve.size());
    crypto_generichash_final(&st, nonce.data(), nonce.size());

    SealedBox box;
    box.recipient = recipient;
    box.sender_hint = sender_hint;
    box.ciphertext.resize(32 + plaintext.size() + crypto_box_MACBYTES);
    std::memcpy(box.ciphertext.data(), epk.data(), 32);
    if (crypto_box_easy(box.ciphertext.data() + 32, plaintext.data(), plaintext.size(),
                        nonce.data(), recipient_curve.data(), esk.data()) != 0) {
        throw std::runtime_error("crypto_box_easy failed");
    }
    return box;
}

std::optional<Bytes> open(const KeyPair& recipient, const SealedBox& box) {
    ensure_sodium();
    if (box.ciphertext.size() < crypto_box_SEALBYTES) return std::nullopt;
    Bytes plain(box.ciphertext.size() - crypto_box_SEALBYTES);
    if (crypto_box_seal_open(plain.data(), box.ciphertext.data(), box.ciphertext.size(),
                             recipient.box_public.data(), recipient.box_secret.data()) != 0) {
        return std::nullopt;
    }
    return plain;
}

}  // namespace pchain
