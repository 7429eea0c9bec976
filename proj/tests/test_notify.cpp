#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pchain/contracts.hpp"
#include "pchain/notify.hpp"

using namespace pchain;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("pchain-notify-" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

using Delivery = std::tuple<std::string, std::string, uint64_t>;  // topic, subscriber, seq

std::vector<Delivery> key_of(const std::vector<Notification>& ns) {
    std::vector<Delivery> out;
    for (const auto& n : ns) out.emplace_back(n.topic, n.subscriber.hex(), n.sequence);
    std::sort(out.begin(), out.end());
    return out;
}

struct PubSubWorld {
    ChainConfig cfg;
    Drbg rng{909};
    KeyPair publisher = KeyPair::generate(rng);
    KeyPair s1 = KeyPair::generate(rng);
    KeyPair s2 = KeyPair::generate(rng);
    KeyPair s3 = KeyPair::generate(rng);
    KeyPair oracle_keys = KeyPair::generate(rng);
    KeyPair miner = KeyPair::generate(rng);
    std::optional<Chain> chain;
    Address hub{};

    explicit PubSubWorld(const std::string& mode, uint64_t fee = 2, uint64_t escrow = 100,
                         uint64_t oracle_funds = 100) {
        std::map<Address, uint64_t> alloc{{addr(publisher), 1000}, {addr(s1), 100},
                                          {addr(s2), 100},        {addr(s3), 100},
                                          {addr(oracle_keys), oracle_funds}};
        chain.emplace(cfg, alloc, addr(miner));
        json init{{"mode", mode}};
        if (mode == "push") {
            init["oracle"] = addr(oracle_keys).hex();
            init["fee"] = fee;
        }
        CallPayload p;
        p.contract = "create";
        p.method = kPublisherHub;
        p.args = json::array({init});
        uint64_t nonce = chain->next_nonce(addr(publisher));
        chain->submit(make_transaction(publisher, nonce, std::nullopt, p, escrow, 200000, 0));
        hub = contract_address(addr(publisher), nonce);
        chain->mine();
    }

    static Address addr(const KeyPair& kp) { return address_of(kp.public_key); }

    void call(const KeyPair& kp, const std::string& method, json args) {
        CallPayload p;
        p.contract = hub.hex();
        p.method = method;
        p.args = std::move(args);
        chain->submit(make_transaction(kp, chain->next_nonce(addr(kp)), hub, p, 0, 200000, 0));
    }

    void run_script() {
        call(s1, "subscribe", json::array({"t/a"}));
        call(s2, "subscribe", json::array({"t/a"}));
        call(s3, "subscribe", json::array({"t/b"}));
        chain->mine();
        call(publisher, "publish", json::array({"t/a", "ref-1"}));
        call(publisher, "publish", json::array({"t/b", "ref-2"}));
        chain->mine();
        call(s2, "unsubscribe", json::array({"t/a"}));
        chain->mine();
        call(publisher, "publish", json::array({"t/a", "ref-3"}));
        chain->mine();
    }

    uint64_t total_gas() const {
        uint64_t g = 0;
        for (const auto& b : chain->blocks()) {
            for (const auto& r : b.receipts) g += r.gas_used;
        }
        return g;
    }
};

}  // namespace

TEST_CASE("poll with no new blocks delivers nothing and keeps the cursor") {
    PubSubWorld w("poll");
    fs::path dir = fresh_dir("empty");
    Messenger m(w.hub, dir);
    auto first = m.poll_once(*w.chain);
    CHECK(first.empty());  // only subscribe-less deploy block so far
    uint64_t cursor = m.cursor();
    auto again = m.poll_once(*w.chain);
    CHECK(again.empty());
    CHECK(m.cursor() == cursor);
}

TEST_CASE("one publish reaches each of the three subscribers exactly once") {
    PubSubWorld w("poll");
    w.call(w.s1, "subscribe", json::array({"topic/x"}));
    w.call(w.s2, "subscribe", json::array({"topic/x"}));
    w.call(w.s3, "subscribe", json::array({"topic/x"}));
    w.chain->mine();
    w.call(w.publisher, "publish", json::array({"topic/x", "ref"}));
    w.chain->mine();

    fs::path dir = fresh_dir("three");
    Messenger m(w.hub, dir);
    auto notes = m.poll_once(*w.chain);
    REQUIRE(notes.size() == 3);
    for (const auto& n : notes) {
        CHECK(n.topic == "topic/x");
        CHECK(n.sequence == 1);
        CHECK(n.publisher == PubSubWorld::addr(w.publisher));
    }

    // outbox file: one canonical JSON line per notification
    fs::path outbox = dir / "notifications" / (PubSubWorld::addr(w.s1).hex() + ".jsonl");
    REQUIRE(fs::exists(outbox));
    std::ifstream in(outbox);
    std::string line;
    REQUIRE(std::getline(in, line));
    json j = json::parse(line);
    CHECK(j["topic"] == "topic/x");
    CHECK(j["sequence"] == 1);
    CHECK_FALSE(std::getline(in, line));  // exactly one

    // cursor file persisted
    CHECK(fs::exists(dir / "messenger-cursor.json"));
}

TEST_CASE("an unsubscribed address receives nothing afterwards") {
    PubSubWorld w("poll");
    w.run_script();
    fs::path dir = fresh_dir("unsub");
    Messenger m(w.hub, dir);
    auto notes = m.poll_once(*w.chain);
    std::vector<Delivery> got = key_of(notes);
    std::vector<Delivery> expected{
        {"t/a", PubSubWorld::addr(w.s1).hex(), 1},
        {"t/a", PubSubWorld::addr(w.s1).hex(), 2},
        {"t/a", PubSubWorld::addr(w.s2).hex(), 1},
        {"t/b", PubSubWorld::addr(w.s3).hex(), 1},
    };
    std::sort(expected.begin(), expected.end());
    CHECK(got == expected);
}

TEST_CASE("restarting the messenger between polls neither drops nor duplicates") {
    // Oracle: one uninterrupted poll over the full chain.
    PubSubWorld w("poll");
    w.run_script();
    fs::path full_dir = fresh_dir("full");
    Messenger full(w.hub, full_dir);
    auto uninterrupted = key_of(full.poll_once(*w.chain));

    for (uint64_t seed = 0; seed < 10; ++seed) {
        // Replay the same chain, polling at random block boundaries with a
        // fresh Messenger instance each time (simulated crash/restart).
        PubSubWorld v("poll");
        fs::path dir = fresh_dir("part-" + std::to_string(seed));
        Drbg rng(seed);
        std::vector<Notification> collected;
        auto maybe_poll = [&] {
            if (rng.uniform(2) == 0) {
                Messenger m(v.hub, dir);  // restarts from the persisted cursor
                auto notes = m.poll_once(*v.chain);
                collected.insert(collected.end(), notes.begin(), notes.end());
            }
        };
        v.call(v.s1, "subscribe", json::array({"t/a"}));
        v.call(v.s2, "subscribe", json::array({"t/a"}));
        v.call(v.s3, "subscribe", json::array({"t/b"}));
        v.chain->mine();
        maybe_poll();
        v.call(v.publisher, "publish", json::array({"t/a", "ref-1"}));
        v.call(v.publisher, "publish", json::array({"t/b", "ref-2"}));
        v.chain->mine();
        maybe_poll();
        v.call(v.s2, "unsubscribe", json::array({"t/a"}));
        v.chain->mine();
        maybe_poll();
        v.call(v.publisher, "publish", json::array({"t/a", "ref-3"}));
        v.chain->mine();
        {
            Messenger m(v.hub, dir);
            auto notes = m.poll_once(*v.chain);
            collected.insert(collected.end(), notes.begin(), notes.end());
        }
        CHECK(key_of(collected) == uninterrupted);
    }
}

TEST_CASE("push mode delivers the same multiset as poll mode at higher on-chain cost") {
    PubSubWorld poll_world("poll");
    poll_world.run_script();
    fs::path poll_dir = fresh_dir("eq-poll");
    Messenger m(poll_world.hub, poll_dir);
    auto poll_notes = key_of(m.poll_once(*poll_world.chain));
    uint64_t poll_gas = poll_world.total_gas();

    PubSubWorld push_world("push");
    push_world.run_script();
    fs::path push_dir = fresh_dir("eq-push");
    OracleService oracle(push_world.oracle_keys, push_world.hub, push_dir);
    auto push_notes = oracle.process_pending(*push_world.chain);
    push_world.chain->mine();  // mine the callbacks
    auto more = oracle.process_pending(*push_world.chain);
    CHECK(more.empty());
    uint64_t push_gas = push_world.total_gas();

    CHECK(key_of(push_notes) == poll_notes);
    CHECK(push_gas > poll_gas);

    // every task settled: queue slots consumed, callbacks mined
    CHECK_FALSE(push_world.chain->state().contract_storage(push_world.hub, "task/0").has_value());
    uint64_t mined_callbacks = 0;
    for (const auto& e : oracle.journal()) {
        if (e["status"] == "callback-mined") ++mined_callbacks;
    }
    CHECK(mined_callbacks == 3);

    // the oracle collected its fee per task
    uint64_t oracle_balance =
        push_world.chain->state().find(PubSubWorld::addr(push_world.oracle_keys))->balance;
    CHECK(oracle_balance == 100 + 3 * 2);
}

TEST_CASE("an oracle facing an empty escrow records the failure and submits nothing") {
    PubSubWorld w("push", /*fee=*/5, /*escrow=*/0);
    w.call(w.s1, "subscribe", json::array({"t/a"}));
    w.chain->mine();
    w.call(w.publisher, "publish", json::array({"t/a", "ref"}));
    w.chain->mine();

    fs::path dir = fresh_dir("no-escrow");
    OracleService oracle(w.oracle_keys, w.hub, dir);
    auto notes = oracle.process_pending(*w.chain);
    CHECK(notes.empty());
    CHECK(w.chain->pending_count() == 0);  // no callback transaction
    REQUIRE_FALSE(oracle.journal().empty());
    CHECK(oracle.journal().back()["status"] == "failed-escrow-exhausted");

    // and it does not retry on the next round
    auto again = oracle.process_pending(*w.chain);
    CHECK(again.empty());
    CHECK(w.chain->pending_count() == 0);
    CHECK(fs::exists(dir / "oracle-journal.jsonl"));
}

TEST_CASE("an underfunded oracle refuses to pay for callback gas") {
    PubSubWorld w("push", /*fee=*/1, /*escrow=*/50, /*oracle_funds=*/0);
    w.call(w.s1, "subscribe", json::array({"t/a"}));
    w.chain->mine();
    w.call(w.publisher, "publish", json::array({"t/a", "ref"}));
    w.chain->mine();
    fs::path dir = fresh_dir("no-gas-funds");
    OracleService oracle(w.oracle_keys, w.hub, dir);
    auto notes = oracle.process_pending(*w.chain, /*callback_gas_limit=*/20000, /*gas_price=*/1);
    CHECK(notes.empty());
    CHECK(w.chain->pending_count() == 0);
    CHECK(oracle.journal().back()["status"] == "failed-oracle-underfunded");
}

TEST_CASE("one poll cycle over 1000 blocks with 100 events stays fast") {
    PubSubWorld w("poll");
    w.call(w.s1, "subscribe", json::array({"t/a"}));
    w.chain->mine();
    for (int i = 0; i < 1000; ++i) {
        if (i % 10 == 0) w.call(w.publisher, "publish", json::array({"t/a", "r"}));
        w.chain->mine();
    }
    REQUIRE(w.chain->height() >= 1000);

    fs::path dir = fresh_dir("liveness");
    Messenger m(w.hub, dir);
    auto started = std::chrono::steady_clock::now();
    auto notes = m.poll_once(*w.chain);
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    CHECK(notes.size() == 100);
    CHECK(elapsed < 5.0);
}

TEST_CASE("deliveries are keyed by the subscription set at publish time") {
    // s2 unsubscribes in the block AFTER a publish; a late poll must still
    // deliver that earlier publish to s2.
    PubSubWorld w("poll");
    w.call(w.s1, "subscribe", json::array({"t/x"}));
    w.call(w.s2, "subscribe", json::array({"t/x"}));
    w.chain->mine();
    w.call(w.publisher, "publish", json::array({"t/x", "early"}));
    w.chain->mine();
    w.call(w.s2, "unsubscribe", json::array({"t/x"}));
    w.chain->mine();
    w.call(w.publisher, "publish", json::array({"t/x", "late"}));
    w.chain->mine();

    fs::path dir = fresh_dir("at-publish-time");
    Messenger m(w.hub, dir);
    auto notes = key_of(m.poll_once(*w.chain));
    std::vector<Delivery> expected{
        {"t/x", PubSubWorld::addr(w.s1).hex(), 1},
        {"t/x", PubSubWorld::addr(w.s1).hex(), 2},
        {"t/x", PubSubWorld::addr(w.s2).hex(), 1},
    };
    std::sort(expected.begin(), expected.end());
    CHECK(notes == expected);
}
