#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pchain/crypto.hpp"

namespace pchain {

// 20-byte account identifier.
struct Address {
    std::array<uint8_t, 20> bytes{};

    auto operator<=>(const Address&) const = default;
    std::string hex() const { return to_hex(bytes); }
    static std::optional<Address> from_hex(std::string_view h);
};

Address address_of(const PublicKey& pk);
Address contract_address(const Address& creator, uint64_t creator_nonce);

// Per-step gas costs. storage_write is charged per started 32-byte word of
// the stored value; everything else is flat per step.
struct GasSchedule {
    uint64_t storage_write = 100;
    uint64_t storage_read = 10;
    uint64_t log_emit = 15;
    uint64_t call_base = 40;
    uint64_t value_transfer = 25;
    uint64_t compute_step = 1;
    uint64_t contract_create = 500;

    uint64_t cost_of(std::string_view step_kind, size_t value_bytes = 0) const;
    static uint64_t words(size_t bytes) { return bytes == 0 ? 1 : (bytes + 31) / 32; }

    json to_json() const;
    static GasSchedule from_json(const json& j);
};

struct ChainConfig {
    uint64_t difficulty = 1;
    uint64_t block_reward = 10;
    uint64_t block_gas_limit = 10'000'000;
    uint32_t max_call_depth = 64;
    GasSchedule gas;

    json to_json() const;
    static ChainConfig from_json(const json& j);
};

enum class TxStatus { Succeeded, Reverted, OutOfGas };

std::string_view to_string(TxStatus s);
std::optional<TxStatus> tx_status_from_string(std::string_view s);

struct LogEvent {
    Address emitter{};
    std::string topic;
    Bytes data;  // canonical JSON bytes of the event payload
    uint64_t block_height = 0;
    uint32_t tx_index = 0;

    json to_json() const;
    static std::optional<LogEvent> from_json(const json& j);
    bool operator==(const LogEvent&) const = default;
};

// Call payloads are canonical JSON: {"args": [...], "contract": <hex|"create">, "method": <string>}.
struct CallPayload {
    std::string contract;  // recipient hex, or "create"
    std::string method;    // prototype name when creating
    json args = json::array();

    Bytes encode() const;
    static std::optional<CallPayload> decode(const Bytes& payload);
};

struct Transaction {
    uint64_t nonce = 0;
    Address sender{};
    std::optional<Address> recipient;  // absent = contract creation
    Bytes payload;
    uint64_t value = 0;
    uint64_t gas_limit = 0;
    uint64_t gas_price = 0;
    Signature signature{};

    Bytes signing_bytes() const;  // canonical JSON of all fields except the signature
    Digest digest() const;        // over the full canonical form, signature included

    json to_json() const;
    static std::optional<Transaction> from_json(const json& j);
    bool operator==(const Transaction&) const = default;
};

Transaction make_transaction(const KeyPair& sender, uint64_t nonce, std::optional<Address> recipient,
                             const CallPayload& payload, uint64_t value, uint64_t gas_limit,
                             uint64_t gas_price);

struct Receipt {
    Digest tx_digest{};
    TxStatus status = TxStatus::Succeeded;
    uint64_t gas_used = 0;
    std::vector<LogEvent> logs;
    std::optional<Address> created_address;

    json to_json() const;
    static std::optional<Receipt> from_json(const json& j);
    bool operator==(const Receipt&) const = default;
};

struct ContractIdentity {
    std::string prototype_name;
    std::string version;
    bool operator==(const ContractIdentity&) const = default;
};

struct Account {
    uint64_t balance = 0;
    uint64_t nonce = 0;
    std::optional<ContractIdentity> contract;
    std::map<Digest, Bytes> storage;  // digest(key string) -> canonical JSON value bytes

    bool operator==(const Account&) const = default;
};

class WorldState {
  public:
    Account& get_or_create(const Address& a) { return accounts_[a]; }
    const Account* find(const Address& a) const;
    Account* find(const Address& a);
    const std::map<Address, Account>& accounts() const { return accounts_; }

    uint64_t total_supply() const;
    Digest digest() const;

    // Free read of committed contract storage, for off-chain consumers.
    std::optional<json> contract_storage(const Address& a, std::string_view key) const;

    json to_json() const;  // full dump, used by inspect and the genesis record
    static std::optional<WorldState> from_json(const json& j);

    bool operator==(const WorldState&) const = default;

  private:
    std::map<Address, Account> accounts_;
};

Digest storage_key(std::string_view key);

struct Block {
    uint64_t height = 0;
    Digest prev_hash{};
    uint64_t timestamp = 0;  // logical clock: equals height
    uint64_t difficulty = 1;
    uint64_t pow_nonce = 0;
    std::vector<Transaction> tx_list;
    std::vector<Receipt> receipts;
    Digest receipts_digest{};
    Digest state_digest{};
    Digest block_hash{};
    // Height 0 only: {"allocations": {hex: balance}, "config": {...}} so a
    // chain file replays without sidecars.
    json genesis;

    Digest txs_digest() const;
    json header_json(uint64_t nonce) const;  // everything block_hash covers
    Digest compute_hash() const;

    json to_json() const;
    static std::optional<Block> from_json(const json& j);
};

// Difficulty predicate: hash, read as a big-endian 256-bit integer, must be
// strictly below 2^256 / difficulty.
bool meets_difficulty(const Digest& hash, uint64_t difficulty);

Digest receipts_digest_of(const std::vector<Receipt>& receipts);

}  // namespace pchain
