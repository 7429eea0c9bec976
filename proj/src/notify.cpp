#include "pchain/notify.hpp"

#include <algorithm>
#include <fstream>

namespace pchain {

json Notification::to_json() const {
    return json{{"delivered_at", delivered_at},
                {"publisher", publisher.hex()},
                {"sequence", sequence},
                {"subscriber", subscriber.hex()},
                {"topic", topic}};
}

void SubscriptionFold::apply(const std::string& topic, const json& event_data) {
    if (!event_data.is_object() || !event_data.contains("action")) return;
    const json& action = event_data["action"];
    if (action != "subscribe" && action != "unsubscribe") return;
    std::string who = event_data.value("subscriber", std::string());
    auto& set = subs_[topic];
    if (action == "subscribe") {
        if (std::find(set.begin(), set.end(), who) == set.end()) {
            set.push_back(who);
            std::sort(set.begin(), set.end());
        }
    } else {
        std::erase(set, who);
    }
}

const std::vector<std::string>& SubscriptionFold::subscribers(const std::string& topic) const {
    static const std::vector<std::string> empty;
    auto it = subs_.find(topic);
    return it == subs_.end() ? empty : it->second;
}

json SubscriptionFold::to_json() const {
    json j = json::object();
    for (const auto& [topic, set] : subs_) j[topic] = set;
    return j;
}

SubscriptionFold SubscriptionFold::from_json(const json& j) {
    SubscriptionFold f;
    if (!j.is_object()) return f;
    for (const auto& [topic, set] : j.items()) {
        if (!set.is_array()) continue;
        f.subs_[topic] = set.get<std::vector<std::string>>();
    }
    return f;
}

void append_outbox(const std::filesystem::path& base_dir, const Notification& n) {
    auto dir = base_dir / "notifications";
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / (n.subscriber.hex() + ".jsonl"), std::ios::app);
    out << n.to_json().dump() << '\n';
}

Messenger::Messenger(Address hub, std::filesystem::path base_dir)
    : hub_(hub), base_dir_(std::move(base_dir)) {
    restore();
}

void Messenger::restore() {
    std::ifstream in(base_dir_ / "messenger-cursor.json");
    if (!in) return;
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return;
    cursor_ = j.value("cursor", uint64_t{0});
    if (j.contains("subscriptions")) fold_ = SubscriptionFold::from_json(j["subscriptions"]);
}

void Messenger::persist() const {
    std::filesystem::create_directories(base_dir_);
    std::ofstream out(base_dir_ / "messenger-cursor.json");
    out << json{{"cursor", cursor_}, {"subscriptions", fold_.to_json()}}.dump() << '\n';
}

std::vector<Notification> Messenger::poll_once(const Chain& chain) {
    std::vector<Notification> delivered;
    uint64_t tip = chain.height();
    for (uint64_t h = cursor_ + 1; h <= tip; ++h) {
        const Block& b = chain.blocks()[h];
        for (const Receipt& r : b.receipts) {
            for (const LogEvent& e : r.logs) {
                if (e.emitter != hub_) continue;
                json data = json::parse(to_string(e.data), nullptr, false);
                if (data.is_discarded() || !data.is_object()) continue;
                if (data.value("action", std::string()) == "publish") {
                    for (const auto& sub_hex : fold_.subscribers(e.topic)) {
                        auto sub = Address::from_hex(sub_hex);
                        if (!sub) continue;
                        Notification n;
                        n.topic = e.topic;
                        n.subscriber = *sub;
                        n.publisher = *Address::from_hex(data["publisher"].get<std::string>());
                        n.sequence = data["seq"].get<uint64_t>();
                        n.delivered_at = e.block_height;
                        append_outbox(base_dir_, n);
                        delivered.push_back(std::move(n));
                    }
                } else {
                    fold_.apply(e.topic, data);
                }
            }
        }
    }
    cursor_ = tip;
    persist();
    return delivered;
}

OracleService::OracleService(KeyPair keys, Address hub, std::filesystem::path base_dir)
    : keys_(std::move(keys)),
      address_(address_of(keys_.public_key)),
      hub_(hub),
      base_dir_(std::move(base_dir)) {}

std::optional<OracleTask> OracleService::load_task(const Chain& chain, uint64_t index) const {
    auto t = chain.state().contract_storage(hub_, "task/" + std::to_string(index));
    if (!t || !t->is_object()) return std::nullopt;
    OracleTask task;
    task.topic = t->value("topic", std::string());
    task.payload_ref = t->value("payload_ref", std::string());
    task.callback_contract = hub_;
    task.callback_method = "oracle_callback";
    task.sequence = t->value("seq", uint64_t{0});
    auto pub = Address::from_hex(t->value("publisher", std::string()));
    if (pub) task.publisher = *pub;
    task.queue_index = index;
    task.publish_height = t->value("h", uint64_t{0});
    task.publish_tx_index = static_cast<uint32_t>(t->value("t", uint64_t{0}));
    auto fee = chain.state().contract_storage(hub_, "fee");
    task.fee = fee && fee->is_number_unsigned() ? fee->get<uint64_t>() : 0;
    task.task_id = sha256(canonical_bytes(
        json{{"index", index}, {"seq", task.sequence}, {"topic", task.topic}}));
    return task;
}

std::vector<std::string> OracleService::subscribers_at(const Chain& chain,
                                                       const OracleTask& task) const {
    // The hub emits subscribe/unsubscribe events in both modes; folding them
    // up to the publish position yields the set the poll variant would use.
    SubscriptionFold fold;
    for (uint64_t h = 1; h <= chain.height() && h <= task.publish_height; ++h) {
        const Block& b = chain.blocks()[h];
        for (uint32_t t = 0; t < b.receipts.size(); ++t) {
            if (h == task.publish_height && t > task.publish_tx_index) break;
            for (const LogEvent& e : b.receipts[t].logs) {
                if (e.emitter != hub_) continue;
                json data = json::parse(to_string(e.data), nullptr, false);
                if (!data.is_discarded()) fold.apply(e.topic, data);
            }
        }
    }
    return fold.subscribers(task.topic);
}

std::vector<Notification> OracleService::process_pending(Chain& chain,
                                                         uint64_t callback_gas_limit,
                                                         uint64_t gas_price) {
    std::vector<Notification> delivered;

    // Resolve callbacks submitted in earlier rounds. Reverted callbacks are
    // recorded and never retried.
    for (auto it = inflight_.begin(); it != inflight_.end();) {
        auto digest = Digest::from_hex(it->first);
        const Receipt* r = digest ? chain.find_receipt(*digest) : nullptr;
        if (r) {
            journal_.push_back(json{{"queue_index", it->second},
                                    {"status", r->status == TxStatus::Succeeded
                                                   ? "callback-mined"
                                                   : "callback-reverted"}});
            it = inflight_.erase(it);
        } else {
            ++it;
        }
    }

    auto qtail_json = chain.state().contract_storage(hub_, "qtail");
    uint64_t qtail = qtail_json && qtail_json->is_number_unsigned() ? qtail_json->get<uint64_t>() : 0;

    uint64_t committed_fees = 0;
    for (uint64_t index = next_index_; index < qtail; ++index) {
        if (handled_.count(index)) continue;
        auto task = load_task(chain, index);
        if (!task) continue;  // slot already consumed by a mined callback
        handled_.insert(index);

        uint64_t own_balance = 0;
        if (const Account* a = chain.state().find(address_)) own_balance = a->balance;
        uint64_t hub_balance = 0;
        if (const Account* a = chain.state().find(hub_)) hub_balance = a->balance;

        if (own_balance < callback_gas_limit * gas_price) {
            journal_.push_back(json{{"queue_index", index},
                                    {"status", "failed-oracle-underfunded"},
                                    {"topic", task->topic}});
            continue;
        }
        if (hub_balance < committed_fees + task->fee) {
            journal_.push_back(json{{"queue_index", index},
                                    {"status", "failed-escrow-exhausted"},
                                    {"topic", task->topic}});
            continue;
        }
        committed_fees += task->fee;

        // Off-chain delivery is the oracle's task; the callback transaction
        // reports completion back into the hub's state.
        auto subscribers = subscribers_at(chain, *task);
        for (const auto& sub_hex : subscribers) {
            auto sub = Address::from_hex(sub_hex);
            if (!sub) continue;
            Notification n;
            n.topic = task->topic;
            n.subscriber = *sub;
            n.publisher = task->publisher;
            n.sequence = task->sequence;
            n.delivered_at = task->publish_height;
            append_outbox(base_dir_, n);
            delivered.push_back(std::move(n));
        }

        CallPayload payload;
        payload.contract = hub_.hex();
        payload.method = task->callback_method;
        payload.args = json::array({index, subscribers.size()});
        Transaction tx = make_transaction(keys_, chain.next_nonce(address_), hub_, payload, 0,
                                          callback_gas_limit, gas_price);
        inflight_[tx.digest().hex()] = index;
        journal_.push_back(json{{"delivered", subscribers.size()},
                                {"fee", task->fee},
                                {"queue_index", index},
                                {"status", "submitted"},
                                {"topic", task->topic}});
        chain.submit(std::move(tx));
    }
    next_index_ = std::max(next_index_, qtail);
    save_journal();
    return delivered;
}

void OracleService::save_journal() const {
    std::filesystem::create_directories(base_dir_);
    std::ofstream out(base_dir_ / "oracle-journal.jsonl");
    for (const auto& entry : journal_) out << entry.dump() << '\n';
}

}  // namespace pchain
