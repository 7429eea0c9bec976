#pragma once

#include <functional>
#include <memory>

#include "pchain/types.hpp"

namespace pchain {

struct CallResult {
    bool ok = false;
    std::string revert_reason;
    json value;
};

struct MessageCall {
    Address caller{};
    Address callee{};
    uint64_t value = 0;
    std::string method;  // empty = fallback / plain transfer
    json args = json::array();
    uint64_t gas_budget = 0;
    uint32_t depth = 0;
};

// One record per metered VM step. The trace recorder serializes exactly
// these fields as JSON lines.
class StepObserver {
  public:
    virtual ~StepObserver() = default;
    virtual void on_step(uint32_t frame_depth, std::string_view step_kind, uint64_t cost,
                         uint64_t gas_after, const Address& contract, std::string_view method) = 0;
};

class TraceRecorder : public StepObserver {
  public:
    void on_step(uint32_t frame_depth, std::string_view step_kind, uint64_t cost,
                 uint64_t gas_after, const Address& contract, std::string_view method) override;
    const std::vector<json>& records() const { return records_; }
    std::string to_jsonl() const;
    void clear() { records_.clear(); }

  private:
    std::vector<json> records_;
};

// Accumulates charged gas per step kind; the scenario runner brackets phases
// with these to compare layouts (e.g. flyweight vs naive storage).
class GasCounter : public StepObserver {
  public:
    void on_step(uint32_t, std::string_view step_kind, uint64_t cost, uint64_t, const Address&,
                 std::string_view) override;
    uint64_t total(std::string_view step_kind) const;
    const std::map<std::string, uint64_t>& by_kind() const { return by_kind_; }

  private:
    std::map<std::string, uint64_t> by_kind_;
};

class Vm;
namespace detail {
struct Exec;
}

// Handle given to contract handlers; every operation meters gas and may
// terminate the frame (revert) or the whole transaction (out of gas).
class Frame {
  public:
    const Address& self() const;
    const Address& caller() const;
    uint64_t value() const;
    const json& args() const;
    const std::string& method() const;
    uint32_t depth() const;
    uint64_t height() const;
    uint32_t tx_index() const;

    json storage_get(const std::string& key);  // null when absent
    bool storage_has(const std::string& key);
    void storage_put(const std::string& key, const json& value);
    void storage_del(const std::string& key);
    void log(const std::string& topic, const json& data);
    uint64_t balance(const Address& a);
    uint64_t self_balance() { return balance(self()); }
    uint64_t gas_left() const;
    void step(uint64_t n = 1);

    // Checked transfer: runs the recipient's fallback if it has one and
    // reports failure instead of propagating it (Fig. 3 send semantics).
    bool send(const Address& to, uint64_t amount);
    CallResult call(const Address& to, const std::string& method, json args, uint64_t value = 0,
                    std::optional<uint64_t> gas_cap = std::nullopt);
    Address create(const std::string& prototype, json init_args, uint64_t value = 0);

    [[noreturn]] void revert(std::string reason) const;

  private:
    friend class Vm;
    Frame(Vm& vm, detail::Exec& exec, size_t frame_index);
    Vm& vm_;
    detail::Exec& exec_;
    size_t index_;
};

struct Prototype {
    using Handler = std::function<json(Frame&)>;
    std::string name;
    std::string version = "1";
    Handler constructor;                      // optional
    std::map<std::string, Handler> methods;
    Handler fallback;                         // optional, argumentless
};

class PrototypeCatalog {
  public:
    void add(Prototype proto);
    const Prototype* find(const std::string& name) const;

  private:
    std::map<std::string, Prototype> protos_;
};

struct TxOutcome {
    TxStatus status = TxStatus::Succeeded;
    std::string revert_reason;
    uint64_t gas_used = 0;
    std::vector<LogEvent> logs;
    std::optional<Address> created;
};

class Vm {
  public:
    explicit Vm(const ChainConfig& cfg);

    PrototypeCatalog& catalog() { return catalog_; }
    const PrototypeCatalog& catalog() const { return catalog_; }
    const ChainConfig& config() const { return cfg_; }

    // Runs a validated transaction. Commits to `state` only on success;
    // gas/fee/nonce accounting is the caller's job.
    TxOutcome execute(WorldState& state, const Transaction& tx, const CallPayload& payload,
                      uint64_t height, uint32_t tx_index, StepObserver* observer = nullptr) const;

    // Read-only call against a throwaway copy of the state; no gas is billed
    // to anyone and no effect escapes.
    CallResult call_view(const WorldState& state, const Address& target, const std::string& method,
                         json args, std::optional<Address> caller = std::nullopt) const;

  private:
    friend class Frame;
    CallResult execute_call(detail::Exec& exec, const MessageCall& call) const;
    Address execute_create(detail::Exec& exec, const Address& creator, uint64_t creator_nonce,
                           const std::string& prototype, json init_args, uint64_t value,
                           uint32_t depth) const;
    void charge(detail::Exec& exec, std::string_view kind, size_t value_bytes = 0) const;

    ChainConfig cfg_;
    PrototypeCatalog catalog_;
};

}  // namespace pchain
