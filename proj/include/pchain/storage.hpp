#pragma once

#include <filesystem>
#include <set>
#include <variant>

#include "pchain/types.hpp"

namespace pchain {

// Off-chain data silo backed by a JSON file. Record contents never leave
// this layer; only signed descriptors go on-chain.
struct DataSilo {
    std::string silo_id;
    std::string kind;  // "LFQ" or "HFQ"
    KeyPair owner_keys;
    std::map<std::string, json> records;

    json to_json() const;  // {"kind":..., "records":{...}, "silo_id":...}; keys stay off disk
    static std::optional<DataSilo> from_json(const json& j, KeyPair owner_keys);
    void save(const std::filesystem::path& file) const;
};

struct ConnectorDescriptor {
    std::string name;
    std::map<std::string, std::string> meta;  // silo_id, locator, schema tag, ...
    Signature owner_signature{};

    Bytes signing_bytes() const;  // canonical {"meta":..., "name":...}
    json to_json() const;
    static std::optional<ConnectorDescriptor> from_json(const json& j);
    bool operator==(const ConnectorDescriptor&) const = default;
};

inline constexpr size_t kDefaultDescriptorBound = 1024;

struct StorageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Signs a minimal stand-in for the silo; meta is augmented with the silo id
// and schema tag. Throws StorageError if the serialized form exceeds `bound`.
ConnectorDescriptor create_connector(const DataSilo& silo, const std::string& name,
                                     std::map<std::string, std::string> meta,
                                     size_t bound = kDefaultDescriptorBound);

bool verify_connector(const ConnectorDescriptor& descriptor, const PublicKey& owner);

// --- audit trail ---------------------------------------------------------

enum class AuditAction { Read, Write, TokenCreate, TokenAccess, TokenRevoke, Denied };

std::string_view to_string(AuditAction a);
std::optional<AuditAction> audit_action_from_string(std::string_view s);

struct AuditEntry {
    uint64_t seq = 0;
    PublicKey actor{};
    AuditAction action = AuditAction::Read;
    std::string target;  // record id or token id
    std::string detail;  // failing check name for Denied, empty otherwise
    Digest entry_digest{};

    json to_json() const;
    static std::optional<AuditEntry> from_json(const json& j);
    Bytes chain_input(const Digest& prev) const;
};

// Hash-chained, append-only. entry_digest = sha256(prev_digest || entry fields).
class AuditTrail {
  public:
    const AuditEntry& append(const PublicKey& actor, AuditAction action, std::string target,
                             std::string detail = "");
    const std::vector<AuditEntry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }

    void save(const std::filesystem::path& file) const;  // JSON lines
    static std::optional<std::vector<AuditEntry>> load(const std::filesystem::path& file);

  private:
    std::vector<AuditEntry> entries_;
};

struct AuditVerifyResult {
    bool ok = true;
    uint64_t seq = 0;  // first bad seq when !ok
};

AuditVerifyResult verify_audit(const std::vector<AuditEntry>& trail);

// --- proxy ----------------------------------------------------------------

struct AccessPolicy {
    std::map<PublicKey, std::set<std::string>> allowed;  // rights: "Read", "Write"
    // Lightweight checks, evaluated in order. Every failure is logged as
    // Denied with the check's name.
    static const std::vector<std::string>& check_names();
};

struct ProxyRequest {
    std::string action;  // "read" | "write"
    ConnectorDescriptor descriptor;
    std::string record_id;
    json document;  // writes only
    PublicKey actor{};
    Signature request_signature{};

    Bytes signing_bytes() const;
};

ProxyRequest make_proxy_request(const KeyPair& actor, const ConnectorDescriptor& descriptor,
                                const std::string& action, const std::string& record_id,
                                json document = nullptr);

struct ProxyResult {
    bool ok = false;
    std::string denied_check;  // which check failed
    json document;             // reads only
};

// The Database Proxy: runs the policy checks, forwards to the connector
// handler (silo resolution) and appends exactly one audit entry per request.
class DatabaseProxy {
  public:
    DatabaseProxy(AccessPolicy policy, AuditTrail& trail) : policy_(std::move(policy)), trail_(trail) {}

    void attach_silo(DataSilo& silo);
    void set_policy(AccessPolicy policy) { policy_ = std::move(policy); }

    ProxyResult read(const KeyPair& actor, const ConnectorDescriptor& descriptor,
                     const std::string& record_id);
    ProxyResult write(const KeyPair& actor, const ConnectorDescriptor& descriptor,
                      const std::string& record_id, json document);
    // Raw entry point used by tests to submit tampered requests.
    ProxyResult submit(const ProxyRequest& request);

  private:
    AccessPolicy policy_;
    AuditTrail& trail_;
    std::map<std::string, DataSilo*> silos_;
};

// --- tokenized exchange -----------------------------------------------------

struct TokenRecord {
    Digest token_id{};
    SealedBox sealed_payload;
    Signature owner_signature{};
    std::map<std::string, std::string> algorithm_labels;  // {"encryption":..., "signing":...}
    PublicKey recipient_hint{};
    std::string status = "Active";

    json to_json() const;  // on-chain registration argument
};

TokenRecord tokenize_connector(Drbg& rng, const ConnectorDescriptor& descriptor,
                               const KeyPair& owner, const PublicKey& recipient);

enum class TokenError { DecryptionFailure, IntegrityFailure };

std::variant<ConnectorDescriptor, TokenError> redeem_token(const TokenRecord& token,
                                                           const KeyPair& recipient);

// Audited wrappers used by the scenario harness: one trail entry per operation.
TokenRecord tokenize_and_log(AuditTrail& trail, Drbg& rng, const ConnectorDescriptor& descriptor,
                             const KeyPair& owner, const PublicKey& recipient);
std::variant<ConnectorDescriptor, TokenError> redeem_and_log(AuditTrail& trail,
                                                             const TokenRecord& token,
                                                             const KeyPair& recipient,
                                                             const std::string& onchain_status);

}  // namespace pchain
