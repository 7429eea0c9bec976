#pragma once

#include <filesystem>

#include "pchain/notify.hpp"
#include "pchain/storage.hpp"

namespace pchain {

// Script problems (unknown action, missing field, bad reference). The CLI
// maps these to exit code 2; assertion failures exit 1.
struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Transcript {
    std::string name;
    uint64_t seed = 0;
    std::vector<json> steps;
    uint64_t assertions = 0;
    uint64_t failures = 0;
    std::string first_failure;

    bool passed() const { return failures == 0; }
    json to_json() const;
};

// Executes a declarative scenario script against a fresh chain and writes
// chain.jsonl, transcript.json, audit.jsonl, silo and outbox files under the
// output directory. Same script + seed => byte-identical outputs.
class ScenarioRunner {
  public:
    explicit ScenarioRunner(std::filesystem::path out_dir, bool record_trace = false);

    Transcript run(const json& script, std::optional<uint64_t> seed_override = std::nullopt);
    Transcript run_file(const std::filesystem::path& script_file,
                        std::optional<uint64_t> seed_override = std::nullopt);

    const Chain* chain() const { return chain_ ? &*chain_ : nullptr; }
    const AuditTrail& audit_trail() const { return trail_; }
    const std::vector<Notification>& delivered() const { return delivered_; }
    const std::map<std::string, GasCounter>& counters() const { return counters_; }
    Address resolve_address(const std::string& ref) const;
    const KeyPair& account_keys(const std::string& name) const;

  private:
    struct MultiObserver : StepObserver {
        std::vector<StepObserver*> sinks;
        void on_step(uint32_t depth, std::string_view kind, uint64_t cost, uint64_t gas_after,
                     const Address& contract, std::string_view method) override {
            for (auto* s : sinks) s->on_step(depth, kind, cost, gas_after, contract, method);
        }
    };

    void execute_step(const json& step, Transcript& out);
    void run_assert(const json& step, Transcript& out, json& record);
    Chain& require_chain();
    void build_chain();
    json substitute(const json& value) const;
    uint64_t resolve_amount(const json& spec) const;
    StepObserver* observer();
    void flush_outputs();

    std::filesystem::path out_dir_;
    bool record_trace_ = false;
    json config_;
    std::optional<Drbg> rng_;
    std::optional<Chain> chain_;

    std::vector<std::string> account_order_;
    std::map<std::string, KeyPair> accounts_;
    std::map<std::string, uint64_t> initial_balances_;
    std::map<std::string, Address> labels_;
    std::map<std::string, ConnectorDescriptor> descriptors_;
    std::map<std::string, TokenRecord> tokens_;
    std::map<std::string, DataSilo> silos_;
    std::map<std::string, Digest> tags_;

    AuditTrail trail_;
    std::optional<DatabaseProxy> proxy_;
    std::map<std::string, Messenger> messengers_;  // keyed by hub label
    std::map<std::string, OracleService> oracles_;
    std::vector<Notification> delivered_;

    std::map<std::string, GasCounter> counters_;
    std::vector<std::string> active_counters_;
    TraceRecorder trace_;
    MultiObserver observer_mux_;
};

}  // namespace pchain
