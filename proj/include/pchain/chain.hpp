#pragma once

#include <functional>
#include <iosfwd>
#include <variant>

#include "pchain/vm.hpp"

namespace pchain {

struct TxRejection {
    Digest tx_digest{};
    std::string reason;
};

// Validates and executes one transaction against `state`. Preconditions that
// fail reject the transaction outright (no receipt, no fee); execution
// failures produce a receipt, increment the sender nonce and charge gas.
std::variant<Receipt, TxRejection> apply_transaction(WorldState& state, const Transaction& tx,
                                                     const Address& miner, uint64_t height,
                                                     uint32_t tx_index, const Vm& vm,
                                                     StepObserver* observer = nullptr);

struct VerifyResult {
    bool ok = true;
    uint64_t height = 0;
    std::string reason;

    static VerifyResult accept() { return {}; }
    static VerifyResult reject(uint64_t h, std::string r) { return {false, h, std::move(r)}; }
};

struct LoadedChain {
    std::vector<Block> blocks;
    WorldState final_state;
    ChainConfig config;
    Address miner{};
};

using CatalogHook = std::function<void(PrototypeCatalog&)>;

// Full replay: hash links, PoW predicate, signatures, state transitions and
// receipts must all reproduce. The first failing height wins.
VerifyResult verify_chain(const std::vector<Block>& blocks, const CatalogHook& extend = nullptr);
std::variant<LoadedChain, VerifyResult> load_and_verify(std::istream& in,
                                                        const CatalogHook& extend = nullptr);
VerifyResult verify_chain_stream(std::istream& in, const CatalogHook& extend = nullptr);

// Single-miner chain instance: owns the world state, the pending pool and the
// VM with the pattern prototypes registered.
class Chain {
  public:
    Chain(ChainConfig cfg, std::map<Address, uint64_t> allocations, Address miner,
          const CatalogHook& extend = nullptr);

    void submit(Transaction tx);
    size_t pending_count() const { return pending_.size(); }
    uint64_t next_nonce(const Address& sender) const;

    // Mines one block from the pending pool (up to the block gas limit).
    // Invalid transactions are dropped, not mined.
    const Block& mine(StepObserver* observer = nullptr);
    void mine_until_drained(StepObserver* observer = nullptr);

    const Block& tip() const { return blocks_.back(); }
    uint64_t height() const { return blocks_.back().height; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const WorldState& state() const { return state_; }
    const ChainConfig& config() const { return cfg_; }
    const Address& miner() const { return miner_; }
    Vm& vm() { return vm_; }
    const Vm& vm() const { return vm_; }
    uint64_t initial_supply() const { return initial_supply_; }
    uint64_t expected_supply() const { return initial_supply_ + cfg_.block_reward * height(); }
    const std::vector<TxRejection>& last_rejected() const { return last_rejected_; }

    const Receipt* find_receipt(const Digest& tx_digest) const;

    CallResult call_view(const Address& target, const std::string& method, json args,
                         std::optional<Address> caller = std::nullopt) const {
        return vm_.call_view(state_, target, method, std::move(args), caller);
    }

    void save(std::ostream& out) const;

  private:
    ChainConfig cfg_;
    Vm vm_;
    WorldState state_;
    std::vector<Block> blocks_;
    std::vector<Transaction> pending_;
    std::vector<TxRejection> last_rejected_;
    Address miner_{};
    uint64_t initial_supply_ = 0;
};

// PoW search helper, exposed for the mining-statistics tests: finds the
// smallest nonce (from 0) whose header hash meets the difficulty predicate.
uint64_t solve_pow(Block& block);

}  // namespace pchain
