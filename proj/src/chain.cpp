#include "pchain/chain.hpp"

#include <istream>
#include <ostream>

#include "pchain/contracts.hpp"

namespace pchain {

std::variant<Receipt, TxRejection> apply_transaction(WorldState& state, const Transaction& tx,
                                                     const Address& miner, uint64_t height,
                                                     uint32_t tx_index, const Vm& vm,
                                                     StepObserver* observer) {
    Digest txd = tx.digest();
    auto payload = CallPayload::decode(tx.payload);
    if (!payload) return TxRejection{txd, "payload-invalid"};
    std::string expected_target = tx.recipient ? tx.recipient->hex() : std::string("create");
    if (payload->contract != expected_target) return TxRejection{txd, "payload-mismatch"};

    if (address_of(tx.signature.signer) != tx.sender ||
        !verify(tx.signature.signer, tx.signing_bytes(), tx.signature)) {
        return TxRejection{txd, "signature-invalid"};
    }

    const Account* sender = state.find(tx.sender);
    uint64_t sender_nonce = sender ? sender->nonce : 0;
    uint64_t sender_balance = sender ? sender->balance : 0;
    if (sender_nonce != tx.nonce) return TxRejection{txd, "nonce-mismatch"};
    if (sender_balance < tx.value + tx.gas_limit * tx.gas_price) {
        return TxRejection{txd, "insufficient-funds"};
    }

    TxOutcome outcome = vm.execute(state, tx, *payload, height, tx_index, observer);

    // The nonce advances and gas is paid on every outcome, success or not.
    state.get_or_create(tx.sender).nonce += 1;
    uint64_t fee = outcome.gas_used * tx.gas_price;
    state.get_or_create(tx.sender).balance -= fee;
    state.get_or_create(miner).balance += fee;

    Receipt receipt;
    receipt.tx_digest = txd;
    receipt.status = outcome.status;
    receipt.gas_used = outcome.gas_used;
    receipt.created_address = outcome.created;
    if (outcome.status == TxStatus::Succeeded) receipt.logs = std::move(outcome.logs);
    return receipt;
}

uint64_t solve_pow(Block& block) {
    // Split the canonical header around the nonce so each attempt hashes a
    // rebuilt string instead of re-serializing JSON.
    const uint64_t marker = UINT64_MAX;
    std::string templ = block.header_json(marker).dump();
    std::string needle = "\"pow_nonce\":18446744073709551615";
    size_t pos = templ.find(needle);
    if (pos == std::string::npos || templ.find(needle, pos + 1) != std::string::npos) {
        throw std::logic_error("pow header template construction failed");
    }
    std::string prefix = templ.substr(0, pos) + "\"pow_nonce\":";
    std::string suffix = templ.substr(pos + needle.size());

    for (uint64_t nonce = 0;; ++nonce) {
        Digest h = Sha256().update(prefix).update(std::to_string(nonce)).update(suffix).finish();
        if (meets_difficulty(h, block.difficulty)) {
            block.pow_nonce = nonce;
            block.block_hash = h;
            return nonce;
        }
    }
}

namespace {

json genesis_record(const ChainConfig& cfg, const std::map<Address, uint64_t>& allocations,
                    const Address& miner) {
    json alloc = json::object();
    for (const auto& [addr, amount] : allocations) alloc[addr.hex()] = amount;
    return json{{"allocations", std::move(alloc)}, {"config", cfg.to_json()}, {"miner", miner.hex()}};
}

Block make_genesis(const ChainConfig& cfg, const std::map<Address, uint64_t>& allocations,
                   const Address& miner, const WorldState& state) {
    Block g;
    g.height = 0;
    g.prev_hash = Digest::zero();
    g.timestamp = 0;
    g.difficulty = cfg.difficulty;
    g.pow_nonce = 0;
    g.receipts_digest = receipts_digest_of({});
    g.state_digest = state.digest();
    g.genesis = genesis_record(cfg, allocations, miner);
    g.block_hash = g.compute_hash();
    return g;
}

}  // namespace

Chain::Chain(ChainConfig cfg, std::map<Address, uint64_t> allocations, Address miner,
             const CatalogHook& extend)
    : cfg_(cfg), vm_(cfg), miner_(miner) {
    register_pattern_prototypes(vm_.catalog());
    if (extend) extend(vm_.catalog());
    for (const auto& [addr, amount] : allocations) {
        state_.get_or_create(addr).balance = amount;
        initial_supply_ += amount;
    }
    blocks_.push_back(make_genesis(cfg_, allocations, miner_, state_));
}

void Chain::submit(Transaction tx) { pending_.push_back(std::move(tx)); }

uint64_t Chain::next_nonce(const Address& sender) const {
    const Account* acct = state_.find(sender);
    uint64_t nonce = acct ? acct->nonce : 0;
    for (const auto& tx : pending_) {
        if (tx.sender == sender) ++nonce;
    }
    return nonce;
}

const Block& Chain::mine(StepObserver* observer) {
    Block b;
    b.height = blocks_.back().height + 1;
    b.prev_hash = blocks_.back().block_hash;
    b.timestamp = b.height;  // logical clock
    b.difficulty = cfg_.difficulty;

    last_rejected_.clear();
    WorldState working = state_;
    std::vector<Transaction> leftover;
    uint64_t gas_in_block = 0;
    uint32_t tx_index = 0;
    bool block_full = false;
    for (auto& tx : pending_) {
        // The chain-wide gas cap bounds what any single transaction may ask
        // for; anything above it could never be included.
        if (tx.gas_limit > cfg_.block_gas_limit) {
            last_rejected_.push_back(TxRejection{tx.digest(), "exceeds-block-gas-limit"});
            continue;
        }
        if (block_full || gas_in_block + tx.gas_limit > cfg_.block_gas_limit) {
            block_full = true;
            leftover.push_back(std::move(tx));
            continue;
        }
        auto result = apply_transaction(working, tx, miner_, b.height, tx_index, vm_, observer);
        if (auto* rejection = std::get_if<TxRejection>(&result)) {
            last_rejected_.push_back(*rejection);
            continue;
        }
        Receipt receipt = std::move(std::get<Receipt>(result));
        gas_in_block += receipt.gas_used;
        b.receipts.push_back(std::move(receipt));
        b.tx_list.push_back(std::move(tx));
        ++tx_index;
    }
    pending_ = std::move(leftover);

    working.get_or_create(miner_).balance += cfg_.block_reward;
    b.receipts_digest = receipts_digest_of(b.receipts);
    b.state_digest = working.digest();
    solve_pow(b);

    state_ = std::move(working);
    blocks_.push_back(std::move(b));
    return blocks_.back();
}

void Chain::mine_until_drained(StepObserver* observer) {
    do {
        mine(observer);
    } while (!pending_.empty());
}

const Receipt* Chain::find_receipt(const Digest& tx_digest) const {
    for (const auto& b : blocks_) {
        for (const auto& r : b.receipts) {
            if (r.tx_digest == tx_digest) return &r;
        }
    }
    return nullptr;
}

void Chain::save(std::ostream& out) const {
    for (const auto& b : blocks_) out << b.to_json().dump() << '\n';
}

namespace {

struct ReplayContext {
    ChainConfig cfg;
    Address miner{};
    WorldState state;
};

std::optional<ReplayContext> load_genesis(const Block& g, std::string& reason) {
    if (g.height != 0 || g.prev_hash != Digest::zero() || g.timestamp != 0 ||
        !g.tx_list.empty() || !g.receipts.empty()) {
        reason = "genesis-invalid";
        return std::nullopt;
    }
    if (!g.genesis.is_object() || !g.genesis.contains("allocations") ||
        !g.genesis.contains("config") || !g.genesis.contains("miner") ||
        !g.genesis["allocations"].is_object() || !g.genesis["miner"].is_string()) {
        reason = "genesis-invalid";
        return std::nullopt;
    }
    ReplayContext ctx;
    try {
        ctx.cfg = ChainConfig::from_json(g.genesis["config"]);
    } catch (const std::exception&) {
        reason = "genesis-invalid";
        return std::nullopt;
    }
    auto miner = Address::from_hex(g.genesis["miner"].get_ref<const std::string&>());
    if (!miner) {
        reason = "genesis-invalid";
        return std::nullopt;
    }
    ctx.miner = *miner;
    for (const auto& [hex_addr, amount] : g.genesis["allocations"].items()) {
        auto addr = Address::from_hex(hex_addr);
        if (!addr || !amount.is_number_unsigned()) {
            reason = "genesis-invalid";
            return std::nullopt;
        }
        ctx.state.get_or_create(*addr).balance = amount.get<uint64_t>();
    }
    if (g.difficulty != ctx.cfg.difficulty) {
        reason = "difficulty-mismatch";
        return std::nullopt;
    }
    if (g.state_digest != ctx.state.digest()) {
        reason = "state-mismatch";
        return std::nullopt;
    }
    if (g.receipts_digest != receipts_digest_of({})) {
        reason = "receipts-mismatch";
        return std::nullopt;
    }
    if (g.block_hash != g.compute_hash()) {
        reason = "hash-mismatch";
        return std::nullopt;
    }
    return ctx;
}

}  // namespace

VerifyResult verify_chain(const std::vector<Block>& blocks, const CatalogHook& extend) {
    if (blocks.empty()) return VerifyResult::reject(0, "empty-chain");

    std::string reason;
    auto ctx = load_genesis(blocks[0], reason);
    if (!ctx) return VerifyResult::reject(0, reason);

    Vm vm(ctx->cfg);
    register_pattern_prototypes(vm.catalog());
    if (extend) extend(vm.catalog());

    for (size_t i = 1; i < blocks.size(); ++i) {
        const Block& b = blocks[i];
        const Block& parent = blocks[i - 1];
        uint64_t h = b.height;
        if (b.height != parent.height + 1) return VerifyResult::reject(h, "height-mismatch");
        if (b.prev_hash != parent.block_hash) return VerifyResult::reject(h, "prev-hash-mismatch");
        if (b.timestamp != b.height) return VerifyResult::reject(h, "timestamp-invalid");
        if (b.difficulty != ctx->cfg.difficulty) return VerifyResult::reject(h, "difficulty-mismatch");
        if (!b.genesis.is_null()) return VerifyResult::reject(h, "genesis-invalid");
        if (b.block_hash != b.compute_hash()) return VerifyResult::reject(h, "hash-mismatch");
        if (!meets_difficulty(b.block_hash, b.difficulty)) return VerifyResult::reject(h, "pow-failed");

        std::vector<Receipt> receipts;
        uint64_t gas_in_block = 0;
        for (uint32_t t = 0; t < b.tx_list.size(); ++t) {
            auto result = apply_transaction(ctx->state, b.tx_list[t], ctx->miner, h, t, vm);
            if (std::holds_alternative<TxRejection>(result)) {
                return VerifyResult::reject(h, "invalid-transaction");
            }
            receipts.push_back(std::move(std::get<Receipt>(result)));
            gas_in_block += receipts.back().gas_used;
        }
        if (gas_in_block > ctx->cfg.block_gas_limit) {
            return VerifyResult::reject(h, "block-gas-exceeded");
        }
        ctx->state.get_or_create(ctx->miner).balance += ctx->cfg.block_reward;

        if (receipts_digest_of(receipts) != b.receipts_digest ||
            receipts_digest_of(b.receipts) != b.receipts_digest) {
            return VerifyResult::reject(h, "receipts-mismatch");
        }
        if (ctx->state.digest() != b.state_digest) return VerifyResult::reject(h, "state-mismatch");
    }
    return VerifyResult::accept();
}

std::variant<LoadedChain, VerifyResult> load_and_verify(std::istream& in,
                                                        const CatalogHook& extend) {
    std::vector<Block> blocks;
    std::string line;
    uint64_t line_no = 0;
    while (std::getline(in, line)) {
        if (line.empty()) return VerifyResult::reject(line_no, "parse-error");
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) return VerifyResult::reject(line_no, "parse-error");
        auto block = Block::from_json(j);
        if (!block) return VerifyResult::reject(line_no, "parse-error");
        // Exactly one accepted byte encoding per block: reject anything that
        // does not re-serialize to the same line.
        if (block->to_json().dump() != line) {
            return VerifyResult::reject(line_no, "non-canonical-encoding");
        }
        blocks.push_back(std::move(*block));
        ++line_no;
    }

    VerifyResult vr = verify_chain(blocks, extend);
    if (!vr.ok) return vr;

    std::string reason;
    auto ctx = load_genesis(blocks[0], reason);
    Vm vm(ctx->cfg);
    register_pattern_prototypes(vm.catalog());
    if (extend) extend(vm.catalog());
    for (size_t i = 1; i < blocks.size(); ++i) {
        for (uint32_t t = 0; t < blocks[i].tx_list.size(); ++t) {
            apply_transaction(ctx->state, blocks[i].tx_list[t], ctx->miner, blocks[i].height, t, vm);
        }
        ctx->state.get_or_create(ctx->miner).balance += ctx->cfg.block_reward;
    }

    LoadedChain loaded;
    loaded.blocks = std::move(blocks);
    loaded.final_state = std::move(ctx->state);
    loaded.config = ctx->cfg;
    loaded.miner = ctx->miner;
    return loaded;
}

VerifyResult verify_chain_stream(std::istream& in, const CatalogHook& extend) {
    auto result = load_and_verify(in, extend);
    if (auto* vr = std::get_if<VerifyResult>(&result)) return *vr;
    return VerifyResult::accept();
}

}  // namespace pchain
