#pragma once

#include <filesystem>
#include <set>

#include "pchain/chain.hpp"

namespace pchain {

struct Notification {
    std::string topic;
    Address subscriber{};
    Address publisher{};
    uint64_t sequence = 0;
    uint64_t delivered_at = 0;  // logical time: block height of the publish

    json to_json() const;
    auto operator<=>(const Notification&) const = default;
};

// Replays a hub's subscribe/unsubscribe events to recover the subscription
// table at any point in the log. Both notification variants use this, so the
// delivered set always reflects the subscriptions at publish time.
class SubscriptionFold {
  public:
    void apply(const std::string& topic, const json& event_data);
    const std::vector<std::string>& subscribers(const std::string& topic) const;

    json to_json() const;
    static SubscriptionFold from_json(const json& j);

  private:
    std::map<std::string, std::vector<std::string>> subs_;  // sorted hex addresses
};

void append_outbox(const std::filesystem::path& base_dir, const Notification& n);

// Poll variant: scans only committed blocks past its cursor, delivers
// notifications to per-subscriber outbox files and persists its cursor (plus
// the folded subscription table) so a restart neither duplicates nor drops.
class Messenger {
  public:
    Messenger(Address hub, std::filesystem::path base_dir);

    std::vector<Notification> poll_once(const Chain& chain);
    uint64_t cursor() const { return cursor_; }
    void persist() const;

  private:
    void restore();

    Address hub_{};
    std::filesystem::path base_dir_;
    uint64_t cursor_ = 0;
    SubscriptionFold fold_;
};

struct OracleTask {
    Digest task_id{};
    std::string topic;
    std::string payload_ref;
    Address callback_contract{};
    std::string callback_method;
    uint64_t fee = 0;
    uint64_t sequence = 0;
    Address publisher{};
    uint64_t queue_index = 0;
    uint64_t publish_height = 0;
    uint32_t publish_tx_index = 0;
};

// Push variant: a trusted third party with its own keys and balance. Each
// queued task yields exactly one callback transaction or one recorded failure
// in the journal; there are no retries.
class OracleService {
  public:
    OracleService(KeyPair keys, Address hub, std::filesystem::path base_dir);

    // Reads the hub's on-chain task queue, delivers notifications off-chain
    // and submits one callback transaction per task to the pending pool.
    std::vector<Notification> process_pending(Chain& chain, uint64_t callback_gas_limit = 20000,
                                              uint64_t gas_price = 0);

    const std::vector<json>& journal() const { return journal_; }
    void save_journal() const;  // oracle-journal.jsonl under base_dir
    const Address& address() const { return address_; }

  private:
    std::optional<OracleTask> load_task(const Chain& chain, uint64_t index) const;
    std::vector<std::string> subscribers_at(const Chain& chain, const OracleTask& task) const;

    KeyPair keys_;
    Address address_{};
    Address hub_{};
    std::filesystem::path base_dir_;
    uint64_t next_index_ = 0;
    std::set<uint64_t> handled_;
    std::map<std::string, uint64_t> inflight_;  // callback tx digest hex -> queue index
    std::vector<json> journal_;
};

}  // namespace pchain
