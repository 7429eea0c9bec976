#include "pchain/storage.hpp"

#include <fstream>

namespace pchain {

json DataSilo::to_json() const {
    json recs = json::object();
    for (const auto& [id, doc] : records) recs[id] = doc;
    return json{{"kind", kind}, {"records", std::move(recs)}, {"silo_id", silo_id}};
}

std::optional<DataSilo> DataSilo::from_json(const json& j, KeyPair owner_keys) {
    if (!j.is_object() || !j.contains("silo_id") || !j.contains("kind") || !j.contains("records") ||
        !j["silo_id"].is_string() || !j["kind"].is_string() || !j["records"].is_object()) {
        return std::nullopt;
    }
    DataSilo s;
    s.silo_id = j["silo_id"].get<std::string>();
    s.kind = j["kind"].get<std::string>();
    if (s.kind != "LFQ" && s.kind != "HFQ") return std::nullopt;
    s.owner_keys = owner_keys;
    for (const auto& [id, doc] : j["records"].items()) s.records[id] = doc;
    return s;
}

void DataSilo::save(const std::filesystem::path& file) const {
    std::ofstream out(file);
    out << to_json().dump() << '\n';
}

Bytes ConnectorDescriptor::signing_bytes() const {
    return canonical_bytes(json{{"meta", meta}, {"name", name}});
}

json ConnectorDescriptor::to_json() const {
    return json{{"meta", meta}, {"name", name}, {"owner_signature", owner_signature.to_json()}};
}

std::optional<ConnectorDescriptor> ConnectorDescriptor::from_json(const json& j) {
    if (!j.is_object() || !j.contains("name") || !j.contains("meta") ||
        !j.contains("owner_signature") || !j["name"].is_string() || !j["meta"].is_object()) {
        return std::nullopt;
    }
    ConnectorDescriptor d;
    d.name = j["name"].get<std::string>();
    for (const auto& [k, v] : j["meta"].items()) {
        if (!v.is_string()) return std::nullopt;
        d.meta[k] = v.get<std::string>();
    }
    auto sig = Signature::from_json(j["owner_signature"]);
    if (!sig) return std::nullopt;
    d.owner_signature = *sig;
    return d;
}

ConnectorDescriptor create_connector(const DataSilo& silo, const std::string& name,
                                     std::map<std::string, std::string> meta, size_t bound) {
    ConnectorDescriptor d;
    d.name = name;
    d.meta = std::move(meta);
    d.meta["silo_id"] = silo.silo_id;
    d.meta["schema"] = silo.kind;
    d.owner_signature = sign(silo.owner_keys, d.signing_bytes());
    if (d.to_json().dump().size() > bound) {
        throw StorageError("descriptor exceeds size bound");
    }
    return d;
}

bool verify_connector(const ConnectorDescriptor& descriptor, const PublicKey& owner) {
    if (descriptor.owner_signature.signer != owner) return false;
    return verify(owner, descriptor.signing_bytes(), descriptor.owner_signature);
}

std::string_view to_string(AuditAction a) {
    switch (a) {
        case AuditAction::Read: return "Read";
        case AuditAction::Write: return "Write";
        case AuditAction::TokenCreate: return "TokenCreate";
        case AuditAction::TokenAccess: return "TokenAccess";
        case AuditAction::TokenRevoke: return "TokenRevoke";
        case AuditAction::Denied: return "Denied";
    }
    return "Denied";
}

std::optional<AuditAction> audit_action_from_string(std::string_view s) {
    if (s == "Read") return AuditAction::Read;
    if (s == "Write") return AuditAction::Write;
    if (s == "TokenCreate") return AuditAction::TokenCreate;
    if (s == "TokenAccess") return AuditAction::TokenAccess;
    if (s == "TokenRevoke") return AuditAction::TokenRevoke;
    if (s == "Denied") return AuditAction::Denied;
    return std::nullopt;
}

json AuditEntry::to_json() const {
    return json{{"action", std::string(to_string(action))},
                {"actor", to_hex(actor)},
                {"detail", detail},
                {"entry_digest", entry_digest.hex()},
                {"seq", seq},
                {"target", target}};
}

std::optional<AuditEntry> AuditEntry::from_json(const json& j) {
    if (!j.is_object()) return std::nullopt;
    AuditEntry e;
    if (!j.contains("seq") || !j["seq"].is_number_unsigned()) return std::nullopt;
    e.seq = j["seq"].get<uint64_t>();
    if (!j.contains("actor") || !j["actor"].is_string()) return std::nullopt;
    auto actor = from_hex_array<32>(j["actor"].get_ref<const std::string&>());
    if (!actor) return std::nullopt;
    e.actor = *actor;
    if (!j.contains("action") || !j["action"].is_string()) return std::nullopt;
    auto action = audit_action_from_string(j["action"].get_ref<const std::string&>());
    if (!action) return std::nullopt;
    e.action = *action;
    if (!j.contains("target") || !j["target"].is_string()) return std::nullopt;
    e.target = j["target"].get<std::string>();
    if (!j.contains("detail") || !j["detail"].is_string()) return std::nullopt;
    e.detail = j["detail"].get<std::string>();
    if (!j.contains("entry_digest") || !j["entry_digest"].is_string()) return std::nullopt;
    auto d = Digest::from_hex(j["entry_digest"].get_ref<const std::string&>());
    if (!d) return std::nullopt;
    e.entry_digest = *d;
    return e;
}

Bytes AuditEntry::chain_input(const Digest& prev) const {
    json fields{{"action", std::string(to_string(action))},
                {"actor", to_hex(actor)},
                {"detail", detail},
                {"seq", seq},
                {"target", target}};
    return concat(prev.bytes, canonical_bytes(fields));
}

const AuditEntry& AuditTrail::append(const PublicKey& actor, AuditAction action,
                                     std::string target, std::string detail) {
    AuditEntry e;
    e.seq = entries_.size();
    e.actor = actor;
    e.action = action;
    e.target = std::move(target);
    e.detail = std::move(detail);
    Digest prev = entries_.empty() ? Digest::zero() : entries_.back().entry_digest;
    e.entry_digest = sha256(e.chain_input(prev));
    entries_.push_back(std::move(e));
    return entries_.back();
}

void AuditTrail::save(const std::filesystem::path& file) const {
    std::ofstream out(file);
    for (const auto& e : entries_) out << e.to_json().dump() << '\n';
}

std::optional<std::vector<AuditEntry>> AuditTrail::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    std::vector<AuditEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        auto e = AuditEntry::from_json(j);
        if (!e) return std::nullopt;
        entries.push_back(std::move(*e));
    }
    return entries;
}

AuditVerifyResult verify_audit(const std::vector<AuditEntry>& trail) {
    Digest prev = Digest::zero();
    for (size_t i = 0; i < trail.size(); ++i) {
        const AuditEntry& e = trail[i];
        if (e.seq != i || sha256(e.chain_input(prev)) != e.entry_digest) {
            return {false, i};
        }
        prev = e.entry_digest;
    }
    return {true, 0};
}

const std::vector<std::string>& AccessPolicy::check_names() {
    static const std::vector<std::string> names = {"descriptor-valid", "signature-valid",
                                                   "actor-allowed", "record-exists"};
    return names;
}

Bytes ProxyRequest::signing_bytes() const {
    return canonical_bytes(json{{"action", action},
                                {"descriptor", descriptor.to_json()},
                                {"document", document},
                                {"record_id", record_id}});
}

ProxyRequest make_proxy_request(const KeyPair& actor, const ConnectorDescriptor& descriptor,
                                const std::string& action, const std::string& record_id,
                                json document) {
    ProxyRequest r;
    r.action = action;
    r.descriptor = descriptor;
    r.record_id = record_id;
    r.document = std::move(document);
    r.actor = actor.public_key;
    r.request_signature = sign(actor, r.signing_bytes());
    return r;
}

void DatabaseProxy::attach_silo(DataSilo& silo) { silos_[silo.silo_id] = &silo; }

ProxyResult DatabaseProxy::read(const KeyPair& actor, const ConnectorDescriptor& descriptor,
                                const std::string& record_id) {
    return submit(make_proxy_request(actor, descriptor, "read", record_id));
}

ProxyResult DatabaseProxy::write(const KeyPair& actor, const ConnectorDescriptor& descriptor,
                                 const std::string& record_id, json document) {
    return submit(make_proxy_request(actor, descriptor, "write", record_id, std::move(document)));
}

ProxyResult DatabaseProxy::submit(const ProxyRequest& request) {
    auto deny = [&](const std::string& check) {
        trail_.append(request.actor, AuditAction::Denied, request.record_id, check);
        return ProxyResult{false, check, nullptr};
    };

    // Connector handler resolution and the policy checks, in fixed order.
    auto silo_it = silos_.find(request.descriptor.meta.count("silo_id")
                                   ? request.descriptor.meta.at("silo_id")
                                   : std::string());
    if (silo_it == silos_.end() ||
        !verify_connector(request.descriptor, silo_it->second->owner_keys.public_key)) {
        return deny("descriptor-valid");
    }
    if (!verify(request.actor, request.signing_bytes(), request.request_signature) ||
        request.request_signature.signer != request.actor) {
        return deny("signature-valid");
    }
    auto rights_it = policy_.allowed.find(request.actor);
    std::string needed = request.action == "write" ? "Write" : "Read";
    if (rights_it == policy_.allowed.end() || rights_it->second.count(needed) == 0) {
        return deny("actor-allowed");
    }
    DataSilo& silo = *silo_it->second;
    if (request.action == "read") {
        auto rec = silo.records.find(request.record_id);
        if (rec == silo.records.end()) return deny("record-exists");
        trail_.append(request.actor, AuditAction::Read, request.record_id);
        return ProxyResult{true, "", rec->second};
    }
    silo.records[request.record_id] = request.document;
    trail_.append(request.actor, AuditAction::Write, request.record_id);
    return ProxyResult{true, "", nullptr};
}

json TokenRecord::to_json() const {
    return json{{"algorithm_labels", algorithm_labels},
                {"owner_signature", owner_signature.to_json()},
                {"recipient_hint", to_hex(recipient_hint)},
                {"sealed_payload", sealed_payload.to_json()}};
}

TokenRecord tokenize_connector(Drbg& rng, const ConnectorDescriptor& descriptor,
                               const KeyPair& owner, const PublicKey& recipient) {
    if (!verify_connector(descriptor, owner.public_key)) {
        throw StorageError("descriptor does not verify under owner key");
    }
    TokenRecord t;
    t.sealed_payload =
        seal(rng, recipient, canonical_bytes(descriptor.to_json()), owner.public_key);
    Bytes signed_bytes = canonical_bytes(t.sealed_payload.to_json());
    t.owner_signature = sign(owner, signed_bytes);
    t.token_id = sha256(signed_bytes);
    t.algorithm_labels = {{"encryption", kSealAlgorithm}, {"signing", kSigningAlgorithm}};
    t.recipient_hint = recipient;
    t.status = "Active";
    return t;
}

std::variant<ConnectorDescriptor, TokenError> redeem_token(const TokenRecord& token,
                                                           const KeyPair& recipient) {
    auto plain = open(recipient, token.sealed_payload);
    if (!plain) return TokenError::DecryptionFailure;
    json j = json::parse(to_string(*plain), nullptr, false);
    if (j.is_discarded()) return TokenError::IntegrityFailure;
    auto descriptor = ConnectorDescriptor::from_json(j);
    if (!descriptor) return TokenError::IntegrityFailure;
    // Re-verify before handing the descriptor out.
    if (!verify_connector(*descriptor, token.owner_signature.signer)) {
        return TokenError::IntegrityFailure;
    }
    return *descriptor;
}

TokenRecord tokenize_and_log(AuditTrail& trail, Drbg& rng, const ConnectorDescriptor& descriptor,
                             const KeyPair& owner, const PublicKey& recipient) {
    TokenRecord t = tokenize_connector(rng, descriptor, owner, recipient);
    trail.append(owner.public_key, AuditAction::TokenCreate, t.token_id.hex());
    return t;
}

std::variant<ConnectorDescriptor, TokenError> redeem_and_log(AuditTrail& trail,
                                                             const TokenRecord& token,
                                                             const KeyPair& recipient,
                                                             const std::string& onchain_status) {
    if (onchain_status != "Active") {
        trail.append(recipient.public_key, AuditAction::Denied, token.token_id.hex(),
                     "token-revoked");
        return TokenError::IntegrityFailure;
    }
    auto result = redeem_token(token, recipient);
    if (std::holds_alternative<TokenError>(result)) {
        trail.append(recipient.public_key, AuditAction::Denied, token.token_id.hex(),
                     "token-unreadable");
    } else {
        trail.append(recipient.public_key, AuditAction::TokenAccess, token.token_id.hex());
    }
    return result;
}

}  // namespace pchain
