#include "pchain/contracts.hpp"

#include <algorithm>

namespace pchain {

namespace {

const json& arg(Frame& f, size_t i) {
    if (!f.args().is_array() || f.args().size() <= i) f.revert("bad-args");
    return f.args()[i];
}

std::string str_arg(Frame& f, size_t i) {
    const json& v = arg(f, i);
    if (!v.is_string()) f.revert("bad-args");
    return v.get<std::string>();
}

bool is_u64(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<int64_t>() >= 0);
}

uint64_t u64_arg(Frame& f, size_t i) {
    const json& v = arg(f, i);
    if (!is_u64(v)) f.revert("bad-args");
    return v.get<uint64_t>();
}

Address addr_arg(Frame& f, size_t i) {
    auto a = Address::from_hex(str_arg(f, i));
    if (!a) f.revert("bad-args");
    return *a;
}

uint64_t u64_or_zero(const json& v) { return v.is_null() ? 0 : v.get<uint64_t>(); }

// --- vaults ------------------------------------------------------------

json vault_deposit(Frame& f) {
    std::string key = "bal/" + f.caller().hex();
    uint64_t bal = u64_or_zero(f.storage_get(key)) + f.value();
    f.storage_put(key, bal);
    return bal;
}

json vault_balance_of(Frame& f) {
    return u64_or_zero(f.storage_get("bal/" + str_arg(f, 0)));
}

// Fig. 3 ordering: pay out first, record afterwards. The recorded balance is
// stale for the whole duration of the recipient's fallback.
json vulnerable_withdraw(Frame& f) {
    uint64_t amount = u64_arg(f, 0);
    std::string key = "bal/" + f.caller().hex();
    uint64_t bal = u64_or_zero(f.storage_get(key));
    if (bal < amount) f.revert("insufficient-balance");
    if (!f.send(f.caller(), amount)) f.revert("transfer-failed");
    uint64_t now = u64_or_zero(f.storage_get(key));
    f.storage_put(key, now >= amount ? now - amount : 0);
    return nullptr;
}

// Fig. 4: a boolean guard makes the balance update atomic with respect to
// nested calls; a reentrant entry observes the flag and reverts.
json guarded_withdraw(Frame& f) {
    uint64_t amount = u64_arg(f, 0);
    json guard = f.storage_get("guard");
    if (!guard.is_null() && guard.get<bool>()) f.revert("reentrancy-blocked");
    f.storage_put("guard", true);
    std::string key = "bal/" + f.caller().hex();
    uint64_t bal = u64_or_zero(f.storage_get(key));
    if (bal < amount) f.revert("insufficient-balance");
    if (!f.send(f.caller(), amount)) f.revert("transfer-failed");
    f.storage_put(key, bal - amount);
    f.storage_put("guard", false);
    return nullptr;
}

Prototype make_vulnerable_vault() {
    Prototype p;
    p.name = kVulnerableVault;
    p.methods["deposit"] = vault_deposit;
    p.methods["withdraw"] = vulnerable_withdraw;
    p.methods["balance_of"] = vault_balance_of;
    return p;
}

Prototype make_guarded_vault() {
    Prototype p;
    p.name = kGuardedVault;
    p.methods["deposit"] = vault_deposit;
    p.methods["withdraw"] = guarded_withdraw;
    p.methods["balance_of"] = vault_balance_of;
    return p;
}

// --- exploit -----------------------------------------------------------

json exploit_ctor(Frame& f) {
    const json& a = arg(f, 0);
    if (!a.is_object() || !a.contains("target") || !a.contains("amount") ||
        !a.contains("min_gas") || !a["target"].is_string() ||
        !Address::from_hex(a["target"].get<std::string>()) || !is_u64(a["amount"]) ||
        !is_u64(a["min_gas"])) {
        f.revert("bad-args");
    }
    f.storage_put("target", a["target"]);
    f.storage_put("amount", a["amount"]);
    f.storage_put("min_gas", a["min_gas"]);
    return nullptr;
}

json exploit_attack(Frame& f) {
    auto target = *Address::from_hex(f.storage_get("target").get<std::string>());
    uint64_t amount = f.storage_get("amount").get<uint64_t>();
    CallResult dep = f.call(target, "deposit", json::array(), f.value());
    if (!dep.ok) f.revert("deposit-failed");
    CallResult wd = f.call(target, "withdraw", json::array({amount}));
    if (!wd.ok) {
        f.storage_put("last_error", wd.revert_reason);
        f.revert("withdraw-failed");
    }
    return nullptr;
}

// Re-enters withdraw from the payout callback while the vault's recorded
// balance is still stale. Declines when gas runs low so the legitimate
// withdrawal still completes instead of voiding the whole transaction.
json exploit_fallback(Frame& f) {
    auto target = *Address::from_hex(f.storage_get("target").get<std::string>());
    uint64_t amount = f.storage_get("amount").get<uint64_t>();
    uint64_t min_gas = f.storage_get("min_gas").get<uint64_t>();
    f.step();
    if (f.gas_left() < min_gas) return nullptr;
    if (f.balance(target) < amount) return nullptr;
    CallResult r = f.call(target, "withdraw", json::array({amount}));
    if (!r.ok) f.storage_put("last_error", r.revert_reason);
    return nullptr;
}

json exploit_collect(Frame& f) {
    uint64_t bal = f.self_balance();
    if (bal > 0 && !f.send(f.caller(), bal)) f.revert("transfer-failed");
    return bal;
}

Prototype make_exploit() {
    Prototype p;
    p.name = kExploit;
    p.constructor = exploit_ctor;
    p.methods["attack"] = exploit_attack;
    p.methods["collect"] = exploit_collect;
    p.fallback = exploit_fallback;
    return p;
}

// --- contract manager (permanent storage + versioned repository) --------

int privilege_rank(const json& v) {
    if (v.is_null()) return 0;
    std::string s = v.get<std::string>();
    if (s == "Read") return 1;
    if (s == "Write") return 2;
    if (s == "Admin") return 3;
    return 0;
}

json manager_ctor(Frame& f) {
    f.storage_put("owner", f.caller().hex());
    f.storage_put("acl/" + f.caller().hex(), "Admin");
    return nullptr;
}

json manager_set(Frame& f) {
    // Charge sequence is load-bearing for gas tests: one ACL read, one field write.
    if (privilege_rank(f.storage_get("acl/" + f.caller().hex())) < 2) f.revert("unauthorized");
    f.storage_put("field/" + str_arg(f, 0), arg(f, 1));
    return nullptr;
}

json manager_get(Frame& f) {
    json v = f.storage_get("field/" + str_arg(f, 0));
    if (v.is_null()) f.revert("not-found");
    return v;
}

json manager_grant(Frame& f) {
    if (privilege_rank(f.storage_get("acl/" + f.caller().hex())) < 3) f.revert("unauthorized");
    Address who = addr_arg(f, 0);
    std::string priv = str_arg(f, 1);
    if (priv != "Read" && priv != "Write" && priv != "Admin") f.revert("bad-args");
    if (who.hex() == f.storage_get("owner").get<std::string>()) f.revert("owner-irrevocable");
    f.storage_put("acl/" + who.hex(), priv);
    return nullptr;
}

json manager_revoke(Frame& f) {
    if (privilege_rank(f.storage_get("acl/" + f.caller().hex())) < 3) f.revert("unauthorized");
    Address who = addr_arg(f, 0);
    if (who.hex() == f.storage_get("owner").get<std::string>()) f.revert("owner-irrevocable");
    f.storage_del("acl/" + who.hex());
    return nullptr;
}

json manager_register_version(Frame& f) {
    if (privilege_rank(f.storage_get("acl/" + f.caller().hex())) < 3) f.revert("unauthorized");
    std::string component = str_arg(f, 0);
    std::string version = str_arg(f, 1);
    Address address = addr_arg(f, 2);
    json history = f.storage_get("repo/" + component);
    if (history.is_null()) history = json::array();
    for (const auto& entry : history) {
        f.step();
        if (entry["v"] == version) f.revert("duplicate-version");
    }
    history.push_back(json{{"a", address.hex()}, {"v", version}});
    f.storage_put("repo/" + component, history);
    return history.size();
}

json manager_latest(Frame& f) {
    json history = f.storage_get("repo/" + str_arg(f, 0));
    if (history.is_null() || history.empty()) f.revert("not-found");
    return history.back();
}

json manager_history(Frame& f) {
    json history = f.storage_get("repo/" + str_arg(f, 0));
    if (history.is_null()) f.revert("not-found");
    return history;
}

Prototype make_contract_manager() {
    Prototype p;
    p.name = kContractManager;
    p.constructor = manager_ctor;
    p.methods["set"] = manager_set;
    p.methods["get"] = manager_get;
    p.methods["grant"] = manager_grant;
    p.methods["revoke"] = manager_revoke;
    p.methods["register_version"] = manager_register_version;
    p.methods["latest"] = manager_latest;
    p.methods["history"] = manager_history;
    return p;
}

// --- entity (factory product; holds extrinsic data only) ----------------

json entity_ctor(Frame& f) {
    f.storage_put("owner", f.caller().hex());
    f.storage_put("data", arg(f, 0));
    return nullptr;
}

json entity_get_data(Frame& f) { return f.storage_get("data"); }

json entity_set_data(Frame& f) {
    if (f.caller().hex() != f.storage_get("owner").get<std::string>()) f.revert("unauthorized");
    f.storage_put("data", arg(f, 0));
    return nullptr;
}

Prototype make_entity() {
    Prototype p;
    p.name = kEntity;
    p.constructor = entity_ctor;
    p.methods["get_data"] = entity_get_data;
    p.methods["set_data"] = entity_set_data;
    return p;
}

// --- entity registry (flyweight + factory) ------------------------------

json registry_get_entity(Frame& f) {
    std::string id = str_arg(f, 0);
    if (id.empty()) f.revert("empty-entity-id");
    std::string kind = str_arg(f, 1);
    if (kind != "Patient" && kind != "Provider" && kind != "Insurer") f.revert("bad-args");
    std::string intrinsic_key = str_arg(f, 2);
    const json& intrinsic_value = arg(f, 3);
    const json& extrinsic_init = arg(f, 4);

    json record = f.storage_get("entity/" + id);
    if (!record.is_null()) {
        if (record["k"] != kind) f.revert("kind-mismatch");
        return record["a"];
    }
    // Intrinsic data is stored once and shared; only the varying extrinsic
    // part goes into the per-entity contract.
    if (!f.storage_has("intrinsic/" + intrinsic_key)) {
        f.storage_put("intrinsic/" + intrinsic_key, intrinsic_value);
    }
    Address addr = f.create(kEntity, json::array({extrinsic_init}));
    f.storage_put("entity/" + id, json{{"a", addr.hex()}, {"i", intrinsic_key}, {"k", kind}});
    return addr.hex();
}

json registry_get_record(Frame& f) {
    std::string id = str_arg(f, 0);
    json record = f.storage_get("entity/" + id);
    if (record.is_null()) f.revert("not-found");
    json intrinsic = f.storage_get("intrinsic/" + record["i"].get<std::string>());
    auto addr = *Address::from_hex(record["a"].get<std::string>());
    CallResult r = f.call(addr, "get_data", json::array());
    if (!r.ok) f.revert("entity-unavailable");
    return json{{"address", record["a"]},
                {"extrinsic", r.value},
                {"intrinsic", intrinsic},
                {"kind", record["k"]}};
}

Prototype make_entity_registry() {
    Prototype p;
    p.name = kEntityRegistry;
    p.methods["get_entity"] = registry_get_entity;
    p.methods["get_record"] = registry_get_record;
    return p;
}

// --- token registry ------------------------------------------------------

json token_audit_event(Frame& f, const char* action, const std::string& token_id) {
    json data{{"action", action}, {"actor", f.caller().hex()}, {"token", token_id}};
    f.log("audit", data);
    return nullptr;
}

json token_register(Frame& f) {
    const json& t = arg(f, 0);
    if (!t.is_object() || !t.contains("sealed_payload") || !t.contains("owner_signature") ||
        !t.contains("algorithm_labels") || !t.contains("recipient_hint")) {
        f.revert("invalid-token");
    }
    auto sig = Signature::from_json(t["owner_signature"]);
    auto box = SealedBox::from_json(t["sealed_payload"]);
    if (!sig || !box) f.revert("invalid-token");
    f.step(32);  // signature verification cost
    Bytes signed_bytes = canonical_bytes(box->to_json());
    if (!verify(sig->signer, signed_bytes, *sig)) f.revert("invalid-token");

    std::string id = sha256(signed_bytes).hex();
    if (f.storage_has("token/" + id)) f.revert("duplicate-token");
    json record{{"algorithm_labels", t["algorithm_labels"]},
                {"owner", address_of(sig->signer).hex()},
                {"owner_signature", t["owner_signature"]},
                {"recipient_hint", t["recipient_hint"]},
                {"sealed_payload", t["sealed_payload"]},
                {"status", "Active"},
                {"token_id", id}};
    f.storage_put("token/" + id, record);
    token_audit_event(f, "TokenCreate", id);
    return id;
}

json token_access(Frame& f) {
    std::string id = str_arg(f, 0);
    json record = f.storage_get("token/" + id);
    if (record.is_null()) f.revert("not-found");
    token_audit_event(f, "TokenAccess", id);
    if (record["status"] == "Revoked") {
        return json{{"status", "Revoked"}, {"token_id", id}};
    }
    return record;
}

json token_revoke(Frame& f) {
    std::string id = str_arg(f, 0);
    json record = f.storage_get("token/" + id);
    if (record.is_null()) f.revert("not-found");
    if (record["owner"] != f.caller().hex()) f.revert("unauthorized");
    if (record["status"] == "Revoked") f.revert("already-revoked");
    record["status"] = "Revoked";
    f.storage_put("token/" + id, record);
    token_audit_event(f, "TokenRevoke", id);
    return nullptr;
}

Prototype make_token_registry() {
    Prototype p;
    p.name = kTokenRegistry;
    p.methods["register"] = token_register;
    p.methods["access"] = token_access;
    p.methods["revoke"] = token_revoke;
    return p;
}

// --- publisher hub --------------------------------------------------------

json hub_ctor(Frame& f) {
    const json& a = arg(f, 0);
    if (!a.is_object() || !a.contains("mode") || !a["mode"].is_string()) f.revert("bad-args");
    std::string mode = a["mode"].get<std::string>();
    if (mode != "poll" && mode != "push") f.revert("bad-args");
    f.storage_put("mode", mode);
    if (mode == "push") {
        if (!a.contains("oracle") || !a["oracle"].is_string() ||
            !Address::from_hex(a["oracle"].get<std::string>())) {
            f.revert("bad-args");
        }
        uint64_t fee = a.contains("fee") ? a["fee"].get<uint64_t>() : 0;
        f.storage_put("oracle", a["oracle"]);
        f.storage_put("fee", fee);
        f.storage_put("qtail", 0);
    }
    return nullptr;
}

json hub_subscribe(Frame& f) {
    std::string topic = str_arg(f, 0);
    if (topic.empty()) f.revert("empty-topic");
    json subs = f.storage_get("subs/" + topic);
    if (subs.is_null()) subs = json::array();
    std::string who = f.caller().hex();
    std::vector<std::string> set = subs.get<std::vector<std::string>>();
    if (std::find(set.begin(), set.end(), who) == set.end()) {
        set.push_back(who);
        std::sort(set.begin(), set.end());
    }
    f.storage_put("subs/" + topic, set);
    f.log(topic, json{{"action", "subscribe"}, {"subscriber", who}});
    return set.size();
}

json hub_unsubscribe(Frame& f) {
    std::string topic = str_arg(f, 0);
    if (topic.empty()) f.revert("empty-topic");
    json subs = f.storage_get("subs/" + topic);
    if (subs.is_null()) subs = json::array();
    std::string who = f.caller().hex();
    std::vector<std::string> set = subs.get<std::vector<std::string>>();
    std::erase(set, who);  // absent subscriber: no-op by design
    f.storage_put("subs/" + topic, set);
    f.log(topic, json{{"action", "unsubscribe"}, {"subscriber", who}});
    return set.size();
}

json hub_publish(Frame& f) {
    std::string topic = str_arg(f, 0);
    if (topic.empty()) f.revert("empty-topic");
    std::string payload_ref = str_arg(f, 1);
    json latest = f.storage_get("latest/" + topic);
    uint64_t seq = latest.is_null() ? 1 : latest["seq"].get<uint64_t>() + 1;
    f.storage_put("latest/" + topic, json{{"publisher", f.caller().hex()}, {"seq", seq}});
    std::string mode = f.storage_get("mode").get<std::string>();
    if (mode == "poll") {
        f.log(topic, json{{"action", "publish"},
                          {"payload_ref", payload_ref},
                          {"publisher", f.caller().hex()},
                          {"seq", seq}});
    } else {
        uint64_t qtail = f.storage_get("qtail").get<uint64_t>();
        f.storage_put("task/" + std::to_string(qtail),
                      json{{"h", f.height()},
                           {"payload_ref", payload_ref},
                           {"publisher", f.caller().hex()},
                           {"seq", seq},
                           {"t", f.tx_index()},
                           {"topic", topic}});
        f.storage_put("qtail", qtail + 1);
    }
    return seq;
}

json hub_oracle_callback(Frame& f) {
    if (f.storage_get("mode") != json("push")) f.revert("not-push-mode");
    if (f.caller().hex() != f.storage_get("oracle").get<std::string>()) f.revert("unauthorized");
    uint64_t index = u64_arg(f, 0);
    uint64_t delivered = u64_arg(f, 1);
    json task = f.storage_get("task/" + std::to_string(index));
    if (task.is_null()) f.revert("unknown-task");
    uint64_t fee = f.storage_get("fee").get<uint64_t>();
    if (fee > 0 && !f.send(f.caller(), fee)) f.revert("escrow-exhausted");
    std::string topic = task["topic"].get<std::string>();
    f.storage_put("delivered/" + topic,
                  json{{"count", delivered}, {"seq", task["seq"].get<uint64_t>()}});
    f.storage_del("task/" + std::to_string(index));
    f.log(topic, json{{"action", "delivered"},
                      {"count", delivered},
                      {"seq", task["seq"].get<uint64_t>()}});
    return nullptr;
}

Prototype make_publisher_hub() {
    Prototype p;
    p.name = kPublisherHub;
    p.constructor = hub_ctor;
    p.methods["subscribe"] = hub_subscribe;
    p.methods["unsubscribe"] = hub_unsubscribe;
    p.methods["publish"] = hub_publish;
    p.methods["oracle_callback"] = hub_oracle_callback;
    return p;
}

}  // namespace

void register_pattern_prototypes(PrototypeCatalog& catalog) {
    catalog.add(make_vulnerable_vault());
    catalog.add(make_guarded_vault());
    catalog.add(make_exploit());
    catalog.add(make_contract_manager());
    catalog.add(make_entity());
    catalog.add(make_entity_registry());
    catalog.add(make_token_registry());
    catalog.add(make_publisher_hub());
}

}  // namespace pchain
