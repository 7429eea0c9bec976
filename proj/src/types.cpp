#include "pchain/types.hpp"

namespace pchain {

namespace {

bool get_u64(const json& j, const char* key, uint64_t& out) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) return false;
    out = j[key].get<uint64_t>();
    return true;
}

bool get_str(const json& j, const char* key, std::string& out) {
    if (!j.contains(key) || !j[key].is_string()) return false;
    out = j[key].get<std::string>();
    return true;
}

}  // namespace

std::optional<Address> Address::from_hex(std::string_view h) {
    auto arr = from_hex_array<20>(h);
    if (!arr) return std::nullopt;
    return Address{*arr};
}

Address address_of(const PublicKey& pk) {
    Sha256 h;
    h.update("pchain-addr");
    h.update(std::span<const uint8_t>(pk));
    Digest d = h.finish();
    Address a;
    std::copy(d.bytes.begin() + 12, d.bytes.end(), a.bytes.begin());
    return a;
}

Address contract_address(const Address& creator, uint64_t creator_nonce) {
    Sha256 h;
    h.update("pchain-create");
    h.update(std::span<const uint8_t>(creator.bytes));
    uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<uint8_t>(creator_nonce >> (8 * i));
    h.update(std::span<const uint8_t>(le, 8));
    Digest d = h.finish();
    Address a;
    std::copy(d.bytes.begin() + 12, d.bytes.end(), a.bytes.begin());
    return a;
}

uint64_t GasSchedule::cost_of(std::string_view step_kind, size_t value_bytes) const {
    if (step_kind == "storage_write") return storage_write * words(value_bytes);
    if (step_kind == "storage_read") return storage_read;
    if (step_kind == "log_emit") return log_emit;
    if (step_kind == "call_base") return call_base;
    if (step_kind == "value_transfer") return value_transfer;
    if (step_kind == "compute_step") return compute_step;
    if (step_kind == "contract_create") return contract_create;
    throw std::logic_error("unknown gas step kind: " + std::string(step_kind));
}

json GasSchedule::to_json() const {
    return json{{"call_base", call_base},
                {"compute_step", compute_step},
                {"contract_create", contract_create},
                {"log_emit", log_emit},
                {"storage_read", storage_read},
                {"storage_write", storage_write},
                {"value_transfer", value_transfer}};
}

GasSchedule GasSchedule::from_json(const json& j) {
    GasSchedule g;
    auto pick = [&](const char* key, uint64_t& field) {
        if (j.contains(key)) {
            if (!j[key].is_number_unsigned() || j[key].get<uint64_t>() == 0)
                throw CodecError(std::string("gas schedule: ") + key + " must be a positive integer");
            field = j[key].get<uint64_t>();
        }
    };
    pick("call_base", g.call_base);
    pick("compute_step", g.compute_step);
    pick("contract_create", g.contract_create);
    pick("log_emit", g.log_emit);
    pick("storage_read", g.storage_read);
    pick("storage_write", g.storage_write);
    pick("value_transfer", g.value_transfer);
    return g;
}

json ChainConfig::to_json() const {
    return json{{"block_gas_limit", block_gas_limit},
                {"block_reward", block_reward},
                {"difficulty", difficulty},
                {"gas", gas.to_json()},
                {"max_call_depth", max_call_depth}};
}

ChainConfig ChainConfig::from_json(const json& j) {
    ChainConfig c;
    if (j.contains("block_gas_limit")) c.block_gas_limit = j["block_gas_limit"].get<uint64_t>();
    if (j.contains("block_reward")) c.block_reward = j["block_reward"].get<uint64_t>();
    if (j.contains("difficulty")) {
        c.difficulty = j["difficulty"].get<uint64_t>();
        if (c.difficulty == 0) throw CodecError("difficulty must be positive");
    }
    if (j.contains("max_call_depth")) c.max_call_depth = j["max_call_depth"].get<uint32_t>();
    if (j.contains("gas")) c.gas = GasSchedule::from_json(j["gas"]);
    return c;
}

std::string_view to_string(TxStatus s) {
    switch (s) {
        case TxStatus::Succeeded: return "Succeeded";
        case TxStatus::Reverted: return "Reverted";
        case TxStatus::OutOfGas: return "OutOfGas";
    }
    return "Succeeded";
}

std::optional<TxStatus> tx_status_from_string(std::string_view s) {
    if (s == "Succeeded") return TxStatus::Succeeded;
    if (s == "Reverted") return TxStatus::Reverted;
    if (s == "OutOfGas") return TxStatus::OutOfGas;
    return std::nullopt;
}

json LogEvent::to_json() const {
    return json{{"block_height", block_height},
                {"data", to_hex(data)},
                {"emitter", emitter.hex()},
                {"topic", topic},
                {"tx_index", tx_index}};
}

std::optional<LogEvent> LogEvent::from_json(const json& j) {
    LogEvent e;
    std::string emitter, data;
    uint64_t txi = 0;
    if (!j.is_object() || !get_u64(j, "block_height", e.block_height) ||
        !get_str(j, "data", data) || !get_str(j, "emitter", emitter) ||
        !get_str(j, "topic", e.topic) || !get_u64(j, "tx_index", txi)) {
        return std::nullopt;
    }
    auto em = Address::from_hex(emitter);
    auto d = from_hex(data);
    if (!em || !d) return std::nullopt;
    e.emitter = *em;
    e.data = std::move(*d);
    e.tx_index = static_cast<uint32_t>(txi);
    return e;
}

Bytes CallPayload::encode() const {
    return canonical_bytes(json{{"args", args}, {"contract", contract}, {"method", method}});
}

std::optional<CallPayload> CallPayload::decode(const Bytes& payload) {
    json j = json::parse(to_string(payload), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    CallPayload p;
    if (!get_str(j, "contract", p.contract) || !get_str(j, "method", p.method)) return std::nullopt;
    if (!j.contains("args") || !j["args"].is_array()) return std::nullopt;
    p.args = j["args"];
    if (p.encode() != payload) return std::nullopt;  // payloads must be canonical
    return p;
}

Bytes Transaction::signing_bytes() const {
    json j{{"gas_limit", gas_limit},
           {"gas_price", gas_price},
           {"nonce", nonce},
           {"payload", to_hex(payload)},
           {"recipient", recipient ? json(recipient->hex()) : json(nullptr)},
           {"sender", sender.hex()},
           {"value", value}};
    return canonical_bytes(j);
}

Digest Transaction::digest() const { return sha256(canonical_bytes(to_json())); }

json Transaction::to_json() const {
    json j = json::parse(to_string(signing_bytes()));
    j["signature"] = signature.to_json();
    return j;
}

std::optional<Transaction> Transaction::from_json(const json& j) {
    Transaction tx;
    std::string sender, payload;
    if (!j.is_object() || !get_u64(j, "gas_limit", tx.gas_limit) ||
        !get_u64(j, "gas_price", tx.gas_price) || !get_u64(j, "nonce", tx.nonce) ||
        !get_str(j, "payload", payload) || !get_str(j, "sender", sender) ||
        !get_u64(j, "value", tx.value) || !j.contains("recipient") || !j.contains("signature")) {
        return std::nullopt;
    }
    auto s = Address::from_hex(sender);
    auto p = from_hex(payload);
    auto sig = Signature::from_json(j["signature"]);
    if (!s || !p || !sig) return std::nullopt;
    tx.sender = *s;
    tx.payload = std::move(*p);
    tx.signature = *sig;
    if (j["recipient"].is_null()) {
        tx.recipient = std::nullopt;
    } else if (j["recipient"].is_string()) {
        auto r = Address::from_hex(j["recipient"].get_ref<const std::string&>());
        if (!r) return std::nullopt;
        tx.recipient = *r;
    } else {
        return std::nullopt;
    }
    return tx;
}

Transaction make_transaction(const KeyPair& sender, uint64_t nonce, std::optional<Address> recipient,
                             const CallPayload& payload, uint64_t value, uint64_t gas_limit,
                             uint64_t gas_price) {
    Transaction tx;
    tx.nonce = nonce;
    tx.sender = address_of(sender.public_key);
    tx.recipient = recipient;
    tx.payload = payload.encode();
    tx.value = value;
    tx.gas_limit = gas_limit;
    tx.gas_price = gas_price;
    tx.signature = sign(sender, tx.signing_bytes());
    return tx;
}

json Receipt::to_json() const {
    json logs_json = json::array();
    for (const auto& l : logs) logs_json.push_back(l.to_json());
    return json{{"created_address", created_address ? json(created_address->hex()) : json(nullptr)},
                {"gas_used", gas_used},
                {"logs", std::move(logs_json)},
                {"status", std::string(to_string(status))},
                {"tx_digest", tx_digest.hex()}};
}

std::optional<Receipt> Receipt::from_json(const json& j) {
    Receipt r;
    std::string status, tx_digest;
    if (!j.is_object() || !get_u64(j, "gas_used", r.gas_used) || !get_str(j, "status", status) ||
        !get_str(j, "tx_digest", tx_digest) || !j.contains("logs") || !j["logs"].is_array() ||
        !j.contains("created_address")) {
        return std::nullopt;
    }
    auto st = tx_status_from_string(status);
    auto td = Digest::from_hex(tx_digest);
    if (!st || !td) return std::nullopt;
    r.status = *st;
    r.tx_digest = *td;
    for (const auto& lj : j["logs"]) {
        auto l = LogEvent::from_json(lj);
        if (!l) return std::nullopt;
        r.logs.push_back(std::move(*l));
    }
    if (j["created_address"].is_null()) {
        r.created_address = std::nullopt;
    } else if (j["created_address"].is_string()) {
        auto a = Address::from_hex(j["created_address"].get_ref<const std::string&>());
        if (!a) return std::nullopt;
        r.created_address = *a;
    } else {
        return std::nullopt;
    }
    return r;
}

const Account* WorldState::find(const Address& a) const {
    auto it = accounts_.find(a);
    return it == accounts_.end() ? nullptr : &it->second;
}

Account* WorldState::find(const Address& a) {
    auto it = accounts_.find(a);
    return it == accounts_.end() ? nullptr : &it->second;
}

uint64_t WorldState::total_supply() const {
    uint64_t total = 0;
    for (const auto& [_, acct] : accounts_) total += acct.balance;
    return total;
}

Digest storage_key(std::string_view key) { return sha256(key); }

std::optional<json> WorldState::contract_storage(const Address& a, std::string_view key) const {
    const Account* acct = find(a);
    if (!acct) return std::nullopt;
    auto it = acct->storage.find(storage_key(key));
    if (it == acct->storage.end()) return std::nullopt;
    json v = json::parse(to_string(it->second), nullptr, false);
    if (v.is_discarded()) return std::nullopt;
    return v;
}

json WorldState::to_json() const {
    json j = json::object();
    for (const auto& [addr, acct] : accounts_) {
        json storage = json::object();
        for (const auto& [k, v] : acct.storage) storage[k.hex()] = to_hex(v);
        json aj{{"balance", acct.balance}, {"nonce", acct.nonce}, {"storage", std::move(storage)}};
        aj["contract"] = acct.contract ? json{{"name", acct.contract->prototype_name},
                                              {"version", acct.contract->version}}
                                       : json(nullptr);
        j[addr.hex()] = std::move(aj);
    }
    return j;
}

std::optional<WorldState> WorldState::from_json(const json& j) {
    if (!j.is_object()) return std::nullopt;
    WorldState s;
    for (const auto& [hex_addr, aj] : j.items()) {
        auto addr = Address::from_hex(hex_addr);
        if (!addr || !aj.is_object()) return std::nullopt;
        Account acct;
        if (!get_u64(aj, "balance", acct.balance) || !get_u64(aj, "nonce", acct.nonce) ||
            !aj.contains("contract") || !aj.contains("storage") || !aj["storage"].is_object()) {
            return std::nullopt;
        }
        if (!aj["contract"].is_null()) {
            ContractIdentity id;
            if (!get_str(aj["contract"], "name", id.prototype_name) ||
                !get_str(aj["contract"], "version", id.version)) {
                return std::nullopt;
            }
            acct.contract = std::move(id);
        }
        for (const auto& [kh, vh] : aj["storage"].items()) {
            auto kd = Digest::from_hex(kh);
            if (!kd || !vh.is_string()) return std::nullopt;
            auto vb = from_hex(vh.get_ref<const std::string&>());
            if (!vb) return std::nullopt;
            acct.storage[*kd] = std::move(*vb);
        }
        s.accounts_[*addr] = std::move(acct);
    }
    return s;
}

Digest WorldState::digest() const { return sha256(canonical_bytes(to_json())); }

Digest Block::txs_digest() const {
    json arr = json::array();
    for (const auto& tx : tx_list) arr.push_back(tx.to_json());
    return sha256(canonical_bytes(arr));
}

json Block::header_json(uint64_t nonce) const {
    json h{{"difficulty", difficulty},
           {"height", height},
           {"pow_nonce", nonce},
           {"prev_hash", prev_hash.hex()},
           {"receipts_digest", receipts_digest.hex()},
           {"state_digest", state_digest.hex()},
           {"timestamp", timestamp},
           {"txs_digest", txs_digest().hex()}};
    if (!genesis.is_null()) h["genesis_digest"] = sha256(canonical_bytes(genesis)).hex();
    return h;
}

Digest Block::compute_hash() const { return sha256(canonical_bytes(header_json(pow_nonce))); }

json Block::to_json() const {
    json txs = json::array();
    for (const auto& tx : tx_list) txs.push_back(tx.to_json());
    json rcpts = json::array();
    for (const auto& r : receipts) rcpts.push_back(r.to_json());
    json j{{"block_hash", block_hash.hex()},
           {"difficulty", difficulty},
           {"height", height},
           {"pow_nonce", pow_nonce},
           {"prev_hash", prev_hash.hex()},
           {"receipts", std::move(rcpts)},
           {"receipts_digest", receipts_digest.hex()},
           {"state_digest", state_digest.hex()},
           {"timestamp", timestamp},
           {"txs", std::move(txs)}};
    if (!genesis.is_null()) j["genesis"] = genesis;
    return j;
}

std::optional<Block> Block::from_json(const json& j) {
    Block b;
    std::string prev, rd, sd, bh;
    if (!j.is_object() || !get_u64(j, "difficulty", b.difficulty) ||
        !get_u64(j, "height", b.height) || !get_u64(j, "pow_nonce", b.pow_nonce) ||
        !get_u64(j, "timestamp", b.timestamp) || !get_str(j, "prev_hash", prev) ||
        !get_str(j, "receipts_digest", rd) || !get_str(j, "state_digest", sd) ||
        !get_str(j, "block_hash", bh) || !j.contains("txs") || !j["txs"].is_array() ||
        !j.contains("receipts") || !j["receipts"].is_array()) {
        return std::nullopt;
    }
    auto ph = Digest::from_hex(prev);
    auto rdd = Digest::from_hex(rd);
    auto sdd = Digest::from_hex(sd);
    auto bhd = Digest::from_hex(bh);
    if (!ph || !rdd || !sdd || !bhd) return std::nullopt;
    b.prev_hash = *ph;
    b.receipts_digest = *rdd;
    b.state_digest = *sdd;
    b.block_hash = *bhd;
    for (const auto& tj : j["txs"]) {
        auto tx = Transaction::from_json(tj);
        if (!tx) return std::nullopt;
        b.tx_list.push_back(std::move(*tx));
    }
    for (const auto& rj : j["receipts"]) {
        auto r = Receipt::from_json(rj);
        if (!r) return std::nullopt;
        b.receipts.push_back(std::move(*r));
    }
    if (j.contains("genesis")) b.genesis = j["genesis"];
    return b;
}

bool meets_difficulty(const Digest& hash, uint64_t difficulty) {
    if (difficulty <= 1) return true;
    // target = floor(2^256 / difficulty), long division over 33 big-endian bytes.
    std::array<uint8_t, 33> numerator{};
    numerator[0] = 1;
    std::array<uint8_t, 33> target{};
    uint64_t rem = 0;
    for (size_t i = 0; i < 33; ++i) {
        // rem < difficulty <= 2^64-1; rem*256 can overflow u64, widen via __int128
        unsigned __int128 cur = (static_cast<unsigned __int128>(rem) << 8) | numerator[i];
        target[i] = static_cast<uint8_t>(cur / difficulty);
        rem = static_cast<uint64_t>(cur % difficulty);
    }
    // target[0] is zero for difficulty >= 2; compare the low 32 bytes.
    for (size_t i = 0; i < 32; ++i) {
        if (hash.bytes[i] < target[i + 1]) return true;
        if (hash.bytes[i] > target[i + 1]) return false;
    }
    return false;  // equal: not strictly below
}

Digest receipts_digest_of(const std::vector<Receipt>& receipts) {
    json arr = json::array();
    for (const auto& r : receipts) arr.push_back(r.to_json());
    return sha256(canonical_bytes(arr));
}

}  // namespace pchain
