#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "pchain/chain.hpp"
#include "pchain/contracts.hpp"
#include "pchain/storage.hpp"

using namespace pchain;

namespace {

struct Net {
    ChainConfig cfg;
    Drbg rng{555};
    KeyPair alice = KeyPair::generate(rng);
    KeyPair bob = KeyPair::generate(rng);
    KeyPair carol = KeyPair::generate(rng);
    KeyPair mallory = KeyPair::generate(rng);
    KeyPair miner = KeyPair::generate(rng);
    std::optional<Chain> chain;

    Net() {
        std::map<Address, uint64_t> alloc{{addr(alice), 1000},
                                          {addr(bob), 1000},
                                          {addr(carol), 1000},
                                          {addr(mallory), 100}};
        chain.emplace(cfg, alloc, addr(miner));
    }

    static Address addr(const KeyPair& kp) { return address_of(kp.public_key); }

    Address deploy(const KeyPair& creator, const std::string& proto, json args = json::array(),
                   uint64_t value = 0, uint64_t gas = 200000, StepObserver* obs = nullptr) {
        CallPayload p;
        p.contract = "create";
        p.method = proto;
        p.args = std::move(args);
        uint64_t nonce = chain->next_nonce(addr(creator));
        chain->submit(make_transaction(creator, nonce, std::nullopt, p, value, gas, 0));
        chain->mine(obs);
        return contract_address(addr(creator), nonce);
    }

    Receipt call(const KeyPair& sender, const Address& to, const std::string& method, json args,
                 uint64_t value = 0, uint64_t gas = 200000, StepObserver* obs = nullptr) {
        CallPayload p;
        p.contract = to.hex();
        p.method = method;
        p.args = std::move(args);
        Transaction tx =
            make_transaction(sender, chain->next_nonce(addr(sender)), to, p, value, gas, 0);
        Digest d = tx.digest();
        chain->submit(std::move(tx));
        chain->mine(obs);
        const Receipt* r = chain->find_receipt(d);
        REQUIRE(r != nullptr);
        return *r;
    }

    CallResult view(const Address& to, const std::string& method, json args,
                    std::optional<Address> caller = std::nullopt) const {
        return chain->call_view(to, method, std::move(args), caller);
    }

    uint64_t balance(const Address& a) const {
        const Account* acct = chain->state().find(a);
        return acct ? acct->balance : 0;
    }

    json storage(const Address& a, const std::string& key) const {
        auto v = chain->state().contract_storage(a, key);
        return v ? *v : json(nullptr);
    }
};

// Deploys a vault funded with 10 units from honest depositors plus the
// exploit contract primed to withdraw `amount` repeatedly.
struct AttackRig {
    Net net;
    Address vault{};
    Address exploit{};

    explicit AttackRig(const std::string& vault_proto, uint64_t min_gas = 1200) {
        vault = net.deploy(net.alice, vault_proto);
        net.call(net.alice, vault, "deposit", json::array(), 6);
        net.call(net.bob, vault, "deposit", json::array(), 4);
        exploit = net.deploy(net.mallory, kExploit,
                             json::array({json{{"amount", 1},
                                               {"min_gas", min_gas},
                                               {"target", vault.hex()}}}));
    }

    Receipt attack(uint64_t gas_limit) {
        return net.call(net.mallory, exploit, "attack", json::array(), 1, gas_limit);
    }
};

}  // namespace

TEST_CASE("honest deposits and withdrawals look the same on both vaults") {
    for (const char* proto : {kVulnerableVault, kGuardedVault}) {
        Net net;
        Address vault = net.deploy(net.alice, proto);
        net.call(net.alice, vault, "deposit", json::array(), 25);
        CHECK(net.balance(vault) == 25);
        CHECK(net.view(vault, "balance_of", json::array({Net::addr(net.alice).hex()})).value ==
              json(25));
        Receipt wd = net.call(net.alice, vault, "withdraw", json::array({5}));
        CHECK(wd.status == TxStatus::Succeeded);
        CHECK(net.balance(vault) == 20);
        CHECK(net.view(vault, "balance_of", json::array({Net::addr(net.alice).hex()})).value ==
              json(20));
        CHECK(net.balance(Net::addr(net.alice)) == 1000 - 20);
    }
}

TEST_CASE("withdraw beyond the recorded balance reverts") {
    Net net;
    Address vault = net.deploy(net.alice, kVulnerableVault);
    net.call(net.alice, vault, "deposit", json::array(), 5);
    Receipt r = net.call(net.alice, vault, "withdraw", json::array({6}));
    CHECK(r.status == TxStatus::Reverted);
    CallResult v = net.view(vault, "withdraw", json::array({6}), Net::addr(net.alice));
    CHECK_FALSE(v.ok);
    CHECK(v.revert_reason == "insufficient-balance");
}

TEST_CASE("the exploit drains the vulnerable vault past its own deposit") {
    AttackRig rig(kVulnerableVault);
    uint64_t mallory_before = rig.net.balance(Net::addr(rig.net.mallory));
    Receipt r = rig.attack(50000);
    REQUIRE(r.status == TxStatus::Succeeded);
    // Vault held 10 from honest users + 1 attacker deposit; all of it moved out.
    CHECK(rig.net.balance(rig.vault) == 0);
    CHECK(rig.net.balance(rig.exploit) == 11);
    rig.net.call(rig.net.mallory, rig.exploit, "collect", json::array());
    uint64_t gained = rig.net.balance(Net::addr(rig.net.mallory)) - mallory_before;
    CHECK(gained == 10);  // strictly more than the 1 it deposited
    // The recorded balances say nothing was withdrawn beyond the books.
    CHECK(rig.net.chain->state().total_supply() == rig.net.chain->expected_supply());
}

TEST_CASE("the guarded vault blocks the reentrant call and honours the invariant") {
    AttackRig rig(kGuardedVault);
    uint64_t mallory_before = rig.net.balance(Net::addr(rig.net.mallory));
    Receipt r = rig.attack(50000);
    REQUIRE(r.status == TxStatus::Succeeded);
    CHECK(rig.net.balance(rig.vault) == 10);   // honest deposits intact
    CHECK(rig.net.balance(rig.exploit) == 1);  // only its own deposit came back
    CHECK(rig.net.storage(rig.exploit, "last_error") == json("reentrancy-blocked"));
    CHECK(rig.net.storage(rig.vault, "guard") == json(false));
    rig.net.call(rig.net.mallory, rig.exploit, "collect", json::array());
    CHECK(rig.net.balance(Net::addr(rig.net.mallory)) <= mallory_before + 1);
}

TEST_CASE("a reverted guarded withdraw charges exactly the steps it executed") {
    Net net;
    Address vault = net.deploy(net.alice, kGuardedVault);
    net.call(net.alice, vault, "deposit", json::array(), 5);
    // withdraw(99): call_base, guard read, guard write (true, 1 word),
    // balance read, then the insufficient-balance revert.
    const GasSchedule& g = net.cfg.gas;
    uint64_t steps_executed = g.call_base + g.storage_read + g.storage_write + g.storage_read;
    Receipt r = net.call(net.alice, vault, "withdraw", json::array({99}));
    CHECK(r.status == TxStatus::Reverted);
    CHECK(r.gas_used == steps_executed);
}

TEST_CASE("only contract accounts ever hold storage") {
    AttackRig rig(kVulnerableVault);
    rig.attack(50000);
    for (const auto& [addr, acct] : rig.net.chain->state().accounts()) {
        if (!acct.storage.empty()) CHECK(acct.contract.has_value());
    }
}

TEST_CASE("guard flag is false after reverted transactions too") {
    Net net;
    Address vault = net.deploy(net.alice, kGuardedVault);
    net.call(net.alice, vault, "deposit", json::array(), 5);
    Receipt r = net.call(net.alice, vault, "withdraw", json::array({99}));
    CHECK(r.status == TxStatus::Reverted);
    json guard = net.storage(vault, "guard");
    CHECK((guard.is_null() || guard == json(false)));
}

TEST_CASE("bisecting the gas budget finds a band where only the legitimate unit moves") {
    auto extracted = [](uint64_t gas_limit) -> std::pair<TxStatus, uint64_t> {
        AttackRig rig(kVulnerableVault);
        Receipt r = rig.attack(gas_limit);
        return {r.status, rig.net.balance(rig.exploit)};
    };

    // Find the smallest budget where recursion kicks in (> 1 extracted).
    uint64_t lo = 400, hi = 8000;
    REQUIRE(extracted(hi).second > 1);
    while (lo + 1 < hi) {
        uint64_t mid = (lo + hi) / 2;
        auto [status, got] = extracted(mid);
        if (status == TxStatus::Succeeded && got > 1) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    auto [status_below, got_below] = extracted(hi - 1);
    CHECK(extracted(hi).second > 1);
    CHECK(status_below == TxStatus::Succeeded);
    CHECK(got_below == 1);  // gas too small for one reentry: only the legit withdrawal
}

TEST_CASE("contract manager: permanent fields survive logic upgrades") {
    Net net;
    Address mgr = net.deploy(net.alice, kContractManager);
    Address logic_v1 = net.deploy(net.alice, kEntity, json::array({json{{"v", 1}}}));
    Address logic_v2 = net.deploy(net.alice, kEntity, json::array({json{{"v", 2}}}));

    CHECK(net.call(net.alice, mgr, "set", json::array({"schema_version", "2"})).status ==
          TxStatus::Succeeded);
    CHECK(net.view(mgr, "get", json::array({"schema_version"})).value == json("2"));

    CHECK(net.call(net.alice, mgr, "register_version",
                   json::array({"records-logic", "v1", logic_v1.hex()}))
              .status == TxStatus::Succeeded);
    CHECK(net.call(net.alice, mgr, "register_version",
                   json::array({"records-logic", "v2", logic_v2.hex()}))
              .status == TxStatus::Succeeded);

    json latest = net.view(mgr, "latest", json::array({"records-logic"})).value;
    CHECK(latest["v"] == "v2");
    CHECK(latest["a"] == logic_v2.hex());
    json history = net.view(mgr, "history", json::array({"records-logic"})).value;
    REQUIRE(history.size() == 2);
    CHECK(history[0]["v"] == "v1");

    // Data written before the upgrade reads back unchanged.
    CHECK(net.view(mgr, "get", json::array({"schema_version"})).value == json("2"));

    CallResult missing = net.view(mgr, "latest", json::array({"unknown"}));
    CHECK_FALSE(missing.ok);
    CHECK(missing.revert_reason == "not-found");
}

TEST_CASE("contract manager access control") {
    Net net;
    Address mgr = net.deploy(net.alice, kContractManager);
    Address somewhere = net.deploy(net.alice, kEntity, json::array({json{{"x", 0}}}));

    // non-member writes are rejected
    CHECK(net.call(net.bob, mgr, "set", json::array({"f", "v"})).status == TxStatus::Reverted);
    CHECK(net.view(mgr, "set", json::array({"f", "v"}), Net::addr(net.bob)).revert_reason ==
          "unauthorized");

    // Write privilege allows set but not version registration
    net.call(net.alice, mgr, "grant", json::array({Net::addr(net.carol).hex(), "Write"}));
    CHECK(net.call(net.carol, mgr, "set", json::array({"f", "v"})).status == TxStatus::Succeeded);
    CHECK(net.call(net.carol, mgr, "register_version",
                   json::array({"c", "v1", somewhere.hex()}))
              .status == TxStatus::Reverted);

    // Admin can register, a revoked admin cannot
    net.call(net.alice, mgr, "grant", json::array({Net::addr(net.carol).hex(), "Admin"}));
    CHECK(net.call(net.carol, mgr, "register_version",
                   json::array({"c", "v1", somewhere.hex()}))
              .status == TxStatus::Succeeded);
    CHECK(net.call(net.carol, mgr, "register_version",
                   json::array({"c", "v1", somewhere.hex()}))
              .status == TxStatus::Reverted);  // duplicate version
    net.call(net.alice, mgr, "revoke", json::array({Net::addr(net.carol).hex()}));
    CHECK(net.call(net.carol, mgr, "register_version",
                   json::array({"c", "v2", somewhere.hex()}))
              .status == TxStatus::Reverted);

    // the owner's Admin right cannot be taken away
    CHECK(net.view(mgr, "revoke", json::array({Net::addr(net.alice).hex()}),
                   Net::addr(net.alice))
              .revert_reason == "owner-irrevocable");
    CHECK(net.view(mgr, "get", json::array({"nope"})).revert_reason == "not-found");
}

TEST_CASE("entity registry is idempotent and shares intrinsic data") {
    Net net;
    Address reg = net.deploy(net.alice, kEntityRegistry);
    json policy = json{{"copay", 20}, {"insurer", "Acme Health"}, {"plan", "GOLD"}};

    GasCounter first;
    Receipt r1 = net.call(net.alice, reg, "get_entity",
                          json::array({"P-001", "Patient", "POL-GOLD", policy,
                                       json{{"member_no", 1}}}),
                          0, 200000, &first);
    REQUIRE(r1.status == TxStatus::Succeeded);
    CHECK(first.total("contract_create") == net.cfg.gas.contract_create);

    json rec = net.storage(reg, "entity/P-001");
    REQUIRE(rec.is_object());
    Address entity = *Address::from_hex(rec["a"].get<std::string>());
    CHECK(net.storage(reg, "intrinsic/POL-GOLD") == policy);
    CHECK(net.storage(entity, "data") == json{{"member_no", 1}});

    // Second call: same address back, zero creation charges.
    GasCounter second;
    Receipt r2 = net.call(net.alice, reg, "get_entity",
                          json::array({"P-001", "Patient", "POL-GOLD", policy,
                                       json{{"member_no", 999}}}),
                          0, 200000, &second);
    REQUIRE(r2.status == TxStatus::Succeeded);
    CHECK(second.total("contract_create") == 0);
    CHECK(net.view(reg, "get_entity",
                   json::array({"P-001", "Patient", "POL-GOLD", policy, json{{"member_no", 999}}}))
              .value == json(entity.hex()));
    // extrinsic data was not overwritten by the repeat call
    CHECK(net.storage(entity, "data") == json{{"member_no", 1}});

    // kind mismatch on the repeat call is an error
    CallResult mismatch = net.view(reg, "get_entity",
                                   json::array({"P-001", "Provider", "POL-GOLD", policy,
                                                json{{"member_no", 1}}}));
    CHECK_FALSE(mismatch.ok);
    CHECK(mismatch.revert_reason == "kind-mismatch");

    // combined record: shared intrinsic + per-entity extrinsic
    json full = net.view(reg, "get_record", json::array({"P-001"})).value;
    CHECK(full["intrinsic"] == policy);
    CHECK(full["extrinsic"] == json{{"member_no", 1}});
    CHECK(full["kind"] == "Patient");
}

TEST_CASE("flyweight layout writes less storage gas than duplicating the policy") {
    Net net;
    json policy;
    policy["coverage"] = json::array({"consult", "imaging", "labs", "pharmacy", "surgery"});
    policy["copay"] = 20;
    policy["insurer"] = "Acme Health Insurance Co.";
    policy["notes"] = "standard gold plan, regional network, prior auth for imaging";

    GasCounter naive;
    for (int i = 0; i < 10; ++i) {
        json combined = policy;
        combined["member_no"] = i;
        net.deploy(net.alice, kEntity, json::array({combined}), 0, 200000, &naive);
    }

    GasCounter fly;
    Address reg = net.deploy(net.alice, kEntityRegistry);
    for (int i = 0; i < 10; ++i) {
        Receipt r = net.call(net.alice, reg, "get_entity",
                             json::array({"P-" + std::to_string(i), "Patient", "POL-GOLD", policy,
                                          json{{"member_no", i}}}),
                             0, 200000, &fly);
        REQUIRE(r.status == TxStatus::Succeeded);
    }
    CHECK(fly.total("storage_write") < naive.total("storage_write"));
}

TEST_CASE("token registry keeps a full on-chain audit trail of token events") {
    Net net;
    Drbg rng(91);
    Address reg = net.deploy(net.alice, kTokenRegistry);

    SealedBox box = seal(rng, net.bob.public_key, to_bytes("the sealed grant"),
                         net.alice.public_key);
    json sealed_payload = box.to_json();
    Signature sig = sign(net.alice, canonical_bytes(sealed_payload));
    json token{{"algorithm_labels", json{{"encryption", kSealAlgorithm}, {"signing", kSigningAlgorithm}}},
               {"owner_signature", sig.to_json()},
               {"recipient_hint", to_hex(net.bob.public_key)},
               {"sealed_payload", sealed_payload}};
    std::string token_id = sha256(canonical_bytes(sealed_payload)).hex();

    CHECK(net.call(net.alice, reg, "register", json::array({token})).status ==
          TxStatus::Succeeded);
    CHECK(net.call(net.bob, reg, "access", json::array({token_id})).status == TxStatus::Succeeded);
    CHECK(net.call(net.alice, reg, "revoke", json::array({token_id})).status ==
          TxStatus::Succeeded);
    Receipt last = net.call(net.bob, reg, "access", json::array({token_id}));
    CHECK(last.status == TxStatus::Succeeded);

    // exactly 4 audit events, in call order
    std::vector<std::string> actions;
    for (const auto& b : net.chain->blocks()) {
        for (const auto& r : b.receipts) {
            for (const auto& e : r.logs) {
                if (e.emitter != reg || e.topic != "audit") continue;
                actions.push_back(json::parse(to_string(e.data))["action"].get<std::string>());
            }
        }
    }
    CHECK(actions == std::vector<std::string>{"TokenCreate", "TokenAccess", "TokenRevoke",
                                              "TokenAccess"});

    // a revoked token serves its status but not the payload
    json after = net.view(reg, "access", json::array({token_id}), Net::addr(net.bob)).value;
    CHECK(after["status"] == "Revoked");
    CHECK_FALSE(after.contains("sealed_payload"));

    // and the stored payload opens only for the intended recipient
    json record = net.storage(reg, "token/" + token_id);
    auto stored_box = SealedBox::from_json(record["sealed_payload"]);
    REQUIRE(stored_box.has_value());
    auto opened = open(net.bob, *stored_box);
    REQUIRE(opened.has_value());
    CHECK(to_string(*opened) == "the sealed grant");
    CHECK_FALSE(open(net.carol, *stored_box).has_value());
}

TEST_CASE("token registration demands a valid owner signature and ownership for revoke") {
    Net net;
    Drbg rng(92);
    Address reg = net.deploy(net.alice, kTokenRegistry);
    SealedBox box = seal(rng, net.bob.public_key, to_bytes("x"), net.alice.public_key);
    json sealed_payload = box.to_json();
    Signature sig = sign(net.alice, canonical_bytes(sealed_payload));
    std::string token_id = sha256(canonical_bytes(sealed_payload)).hex();

    json bad = json{{"algorithm_labels", json::object()},
                    {"owner_signature", sig.to_json()},
                    {"recipient_hint", to_hex(net.bob.public_key)},
                    {"sealed_payload", sealed_payload}};
    bad["owner_signature"]["bytes"] = std::string(128, 'a');  // signature over different bytes
    CallResult r = net.view(reg, "register", json::array({bad}), Net::addr(net.alice));
    CHECK_FALSE(r.ok);
    CHECK(r.revert_reason == "invalid-token");

    json good = bad;
    good["owner_signature"] = sig.to_json();
    net.call(net.alice, reg, "register", json::array({good}));
    CHECK(net.view(reg, "revoke", json::array({token_id}), Net::addr(net.mallory)).revert_reason ==
          "unauthorized");
    net.call(net.alice, reg, "revoke", json::array({token_id}));
    CHECK(net.view(reg, "revoke", json::array({token_id}), Net::addr(net.alice)).revert_reason ==
          "already-revoked");
}

TEST_CASE("publisher hub maintains subscription sets and sequence numbers exactly") {
    Net net;
    Address hub = net.deploy(net.alice, kPublisherHub,
                             json::array({json{{"mode", "poll"}}}));

    net.call(net.alice, hub, "subscribe", json::array({"patient/42"}));
    net.call(net.bob, hub, "subscribe", json::array({"patient/42"}));
    net.call(net.bob, hub, "subscribe", json::array({"patient/42"}));  // duplicate: no-op
    json subs = net.storage(hub, "subs/patient/42");
    REQUIRE(subs.is_array());
    CHECK(subs.size() == 2);

    net.call(net.bob, hub, "unsubscribe", json::array({"patient/42"}));
    net.call(net.carol, hub, "unsubscribe", json::array({"patient/42"}));  // non-subscriber: no-op
    subs = net.storage(hub, "subs/patient/42");
    CHECK(subs == json::array({Net::addr(net.alice).hex()}));

    CHECK(net.call(net.alice, hub, "publish", json::array({"patient/42", "ref-1"})).status ==
          TxStatus::Succeeded);
    net.call(net.alice, hub, "publish", json::array({"patient/42", "ref-2"}));
    json latest = net.storage(hub, "latest/patient/42");
    CHECK(latest["seq"] == 2);
    CHECK(net.view(hub, "publish", json::array({"", "x"}), Net::addr(net.alice)).revert_reason ==
          "empty-topic");
}

TEST_CASE("push-mode hub queues tasks and the callback settles them with a fee") {
    Net net;
    Address oracle = Net::addr(net.carol);
    Address hub = net.deploy(net.alice, kPublisherHub,
                             json::array({json{{"fee", 3}, {"mode", "push"}, {"oracle", oracle.hex()}}}),
                             50);  // escrow
    net.call(net.bob, hub, "subscribe", json::array({"topic/a"}));
    net.call(net.alice, hub, "publish", json::array({"topic/a", "ref"}));

    CHECK(net.storage(hub, "qtail") == json(1));
    json task = net.storage(hub, "task/0");
    REQUIRE(task.is_object());
    CHECK(task["topic"] == "topic/a");
    CHECK(task["seq"] == 1);

    // only the registered oracle may call back
    CHECK(net.view(hub, "oracle_callback", json::array({0, 1}), Net::addr(net.mallory))
              .revert_reason == "unauthorized");

    uint64_t oracle_before = net.balance(oracle);
    Receipt cb = net.call(net.carol, hub, "oracle_callback", json::array({0, 1}));
    CHECK(cb.status == TxStatus::Succeeded);
    CHECK(net.balance(oracle) == oracle_before + 3);
    CHECK(net.storage(hub, "task/0").is_null());
    CHECK(net.storage(hub, "delivered/topic/a") == json{{"count", 1}, {"seq", 1}});

    // unknown task index reverts
    CHECK(net.view(hub, "oracle_callback", json::array({0, 1}), oracle).revert_reason ==
          "unknown-task");
}

TEST_CASE("push-mode callback reverts when the escrow cannot pay the fee") {
    Net net;
    Address oracle = Net::addr(net.carol);
    Address hub = net.deploy(net.alice, kPublisherHub,
                             json::array({json{{"fee", 7}, {"mode", "push"}, {"oracle", oracle.hex()}}}),
                             0);  // no escrow
    net.call(net.alice, hub, "publish", json::array({"t", "r"}));
    CallResult r = net.view(hub, "oracle_callback", json::array({0, 0}), oracle);
    CHECK_FALSE(r.ok);
    CHECK(r.revert_reason == "escrow-exhausted");
}
