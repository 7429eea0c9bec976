#include "pchain/scenario.hpp"

#include <fstream>
#include <sstream>

namespace pchain {

namespace {

constexpr uint64_t kDefaultGasLimit = 200000;

std::string require_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw ScenarioError(std::string("missing or invalid field: ") + key);
    }
    return j[key].get<std::string>();
}

uint64_t optional_u64(const json& j, const char* key, uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_unsigned() &&
        !(j[key].is_number_integer() && j[key].get<int64_t>() >= 0)) {
        throw ScenarioError(std::string("field must be a non-negative integer: ") + key);
    }
    return j[key].get<uint64_t>();
}

bool cmp_u64(const std::string& op, uint64_t lhs, uint64_t rhs) {
    if (op == "eq") return lhs == rhs;
    if (op == "ne") return lhs != rhs;
    if (op == "lt") return lhs < rhs;
    if (op == "le") return lhs <= rhs;
    if (op == "gt") return lhs > rhs;
    if (op == "ge") return lhs >= rhs;
    throw ScenarioError("unknown comparator: " + op);
}

// "$i" in repeat templates expands to the zero-padded (3-digit) iteration index.
json expand_index(const json& value, const std::string& index) {
    if (value.is_string()) {
        std::string s = value.get<std::string>();
        size_t pos;
        while ((pos = s.find("$i")) != std::string::npos) s.replace(pos, 2, index);
        return s;
    }
    if (value.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : value.items()) out[k] = expand_index(v, index);
        return out;
    }
    if (value.is_array()) {
        json out = json::array();
        for (const auto& v : value) out.push_back(expand_index(v, index));
        return out;
    }
    return value;
}

}  // namespace

json Transcript::to_json() const {
    return json{{"assertions", assertions},
                {"failures", failures},
                {"first_failure", first_failure},
                {"name", name},
                {"pass", failures == 0},
                {"seed", seed},
                {"steps", steps}};
}

ScenarioRunner::ScenarioRunner(std::filesystem::path out_dir, bool record_trace)
    : out_dir_(std::move(out_dir)), record_trace_(record_trace) {}

Address ScenarioRunner::resolve_address(const std::string& ref) const {
    if (auto it = labels_.find(ref); it != labels_.end()) return it->second;
    if (auto it = accounts_.find(ref); it != accounts_.end()) {
        return address_of(it->second.public_key);
    }
    if (auto a = Address::from_hex(ref)) return *a;
    throw ScenarioError("unknown address reference: " + ref);
}

const KeyPair& ScenarioRunner::account_keys(const std::string& name) const {
    auto it = accounts_.find(name);
    if (it == accounts_.end()) throw ScenarioError("unknown account: " + name);
    return it->second;
}

json ScenarioRunner::substitute(const json& value) const {
    if (value.is_string()) {
        const std::string& s = value.get_ref<const std::string&>();
        if (s.rfind("@addr:", 0) == 0) return resolve_address(s.substr(6)).hex();
        if (s.rfind("@token:", 0) == 0) {
            auto it = tokens_.find(s.substr(7));
            if (it == tokens_.end()) throw ScenarioError("unknown token label: " + s);
            return it->second.to_json();
        }
        if (s.rfind("@tokenid:", 0) == 0) {
            auto it = tokens_.find(s.substr(9));
            if (it == tokens_.end()) throw ScenarioError("unknown token label: " + s);
            return it->second.token_id.hex();
        }
        if (s.rfind("@desc:", 0) == 0) {
            auto it = descriptors_.find(s.substr(6));
            if (it == descriptors_.end()) throw ScenarioError("unknown descriptor label: " + s);
            return it->second.to_json();
        }
        return value;
    }
    if (value.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : value.items()) out[k] = substitute(v);
        return out;
    }
    if (value.is_array()) {
        json out = json::array();
        for (const auto& v : value) out.push_back(substitute(v));
        return out;
    }
    return value;
}

void ScenarioRunner::build_chain() {
    ChainConfig cfg = ChainConfig::from_json(config_);
    if (!accounts_.count("miner")) {
        accounts_.emplace("miner", KeyPair::generate(*rng_));
        account_order_.push_back("miner");
        initial_balances_["miner"] = 0;
    }
    std::map<Address, uint64_t> allocations;
    for (const auto& [name, keys] : accounts_) {
        allocations[address_of(keys.public_key)] = initial_balances_[name];
    }
    chain_.emplace(cfg, allocations, resolve_address("miner"));
}

Chain& ScenarioRunner::require_chain() {
    if (!chain_) build_chain();
    return *chain_;
}

StepObserver* ScenarioRunner::observer() {
    observer_mux_.sinks.clear();
    for (const auto& name : active_counters_) observer_mux_.sinks.push_back(&counters_[name]);
    if (record_trace_) observer_mux_.sinks.push_back(&trace_);
    return observer_mux_.sinks.empty() ? nullptr : &observer_mux_;
}

Transcript ScenarioRunner::run_file(const std::filesystem::path& script_file,
                                    std::optional<uint64_t> seed_override) {
    std::ifstream in(script_file);
    if (!in) throw ScenarioError("cannot open scenario file: " + script_file.string());
    json script = json::parse(in, nullptr, false);
    if (script.is_discarded()) throw ScenarioError("scenario file is not valid JSON");
    return run(script, seed_override);
}

Transcript ScenarioRunner::run(const json& script, std::optional<uint64_t> seed_override) {
    if (!script.is_object() || !script.contains("name") || !script["name"].is_string() ||
        !script.contains("steps") || !script["steps"].is_array()) {
        throw ScenarioError("scenario must be an object with name and steps");
    }
    if (rng_) throw ScenarioError("a ScenarioRunner instance runs one scenario");
    Transcript out;
    out.name = script["name"].get<std::string>();
    out.seed = seed_override.value_or(optional_u64(script, "seed", 0));
    rng_.emplace(out.seed);
    config_ = script.value("config", json::object());

    for (const auto& step : script["steps"]) execute_step(step, out);

    flush_outputs();
    std::filesystem::create_directories(out_dir_);
    std::ofstream tf(out_dir_ / "transcript.json");
    tf << out.to_json().dump() << '\n';
    return out;
}

void ScenarioRunner::execute_step(const json& raw_step, Transcript& out) {
    if (!raw_step.is_object() || !raw_step.contains("action") || !raw_step["action"].is_string()) {
        throw ScenarioError("step must be an object with an action");
    }
    json step = substitute(raw_step);
    std::string action = step["action"].get<std::string>();
    json record{{"action", action}, {"index", out.steps.size()}};

    if (action == "repeat") {
        uint64_t count = optional_u64(step, "count", 0);
        if (!raw_step.contains("steps") || !raw_step["steps"].is_array()) {
            throw ScenarioError("repeat needs steps");
        }
        for (uint64_t i = 0; i < count; ++i) {
            std::string index = std::to_string(i);
            if (index.size() < 3) index.insert(0, 3 - index.size(), '0');
            for (const auto& inner : raw_step["steps"]) {
                execute_step(expand_index(inner, index), out);
            }
        }
        return;
    }

    if (action == "create-accounts") {
        if (chain_) throw ScenarioError("create-accounts must precede the first chain action");
        if (!step.contains("accounts") || !step["accounts"].is_array()) {
            throw ScenarioError("create-accounts needs an accounts array");
        }
        json created = json::array();
        for (const auto& spec : step["accounts"]) {
            std::string name = require_string(spec, "name");
            uint64_t balance = optional_u64(spec, "balance", 0);
            if (accounts_.count(name)) throw ScenarioError("duplicate account: " + name);
            accounts_.emplace(name, KeyPair::generate(*rng_));
            account_order_.push_back(name);
            initial_balances_[name] = balance;
            created.push_back(json{{"address", address_of(accounts_.at(name).public_key).hex()},
                                   {"balance", balance},
                                   {"name", name}});
        }
        record["accounts"] = std::move(created);
    } else if (action == "create-silo") {
        std::string id = require_string(step, "silo");
        std::string kind = require_string(step, "kind");
        if (kind != "LFQ" && kind != "HFQ") throw ScenarioError("silo kind must be LFQ or HFQ");
        std::string owner = require_string(step, "owner");
        DataSilo silo;
        silo.silo_id = id;
        silo.kind = kind;
        silo.owner_keys = account_keys(owner);
        if (step.contains("records")) {
            if (!step["records"].is_object()) throw ScenarioError("silo records must be an object");
            for (const auto& [rid, doc] : step["records"].items()) silo.records[rid] = doc;
        }
        auto [it, fresh] = silos_.insert_or_assign(id, std::move(silo));
        if (!proxy_) proxy_.emplace(AccessPolicy{}, trail_);
        proxy_->attach_silo(it->second);
        record["records"] = it->second.records.size();
    } else if (action == "policy") {
        AccessPolicy policy;
        if (step.contains("allow")) {
            for (const auto& entry : step["allow"]) {
                std::string actor = require_string(entry, "actor");
                if (!entry.contains("rights") || !entry["rights"].is_array()) {
                    throw ScenarioError("policy entry needs rights");
                }
                for (const auto& r : entry["rights"]) {
                    policy.allowed[account_keys(actor).public_key].insert(r.get<std::string>());
                }
            }
        }
        if (!proxy_) proxy_.emplace(AccessPolicy{}, trail_);
        proxy_->set_policy(std::move(policy));
    } else if (action == "create-connector") {
        std::string silo_id = require_string(step, "silo");
        auto it = silos_.find(silo_id);
        if (it == silos_.end()) throw ScenarioError("unknown silo: " + silo_id);
        std::map<std::string, std::string> meta;
        if (step.contains("meta")) {
            for (const auto& [k, v] : step["meta"].items()) meta[k] = v.get<std::string>();
        }
        if (!meta.count("locator")) meta["locator"] = "file://silos/" + silo_id + ".json";
        size_t bound = optional_u64(config_, "descriptor_bound", kDefaultDescriptorBound);
        ConnectorDescriptor d =
            create_connector(it->second, require_string(step, "name"), std::move(meta), bound);
        record["descriptor"] = d.to_json();
        descriptors_[require_string(step, "as")] = std::move(d);
    } else if (action == "deploy") {
        Chain& c = require_chain();
        const KeyPair& creator = account_keys(require_string(step, "creator"));
        Address sender = address_of(creator.public_key);
        uint64_t nonce = c.next_nonce(sender);
        CallPayload payload;
        payload.contract = "create";
        payload.method = require_string(step, "prototype");
        payload.args = step.value("args", json::array());
        Transaction tx = make_transaction(creator, nonce, std::nullopt, payload,
                                          optional_u64(step, "value", 0),
                                          optional_u64(step, "gas_limit", kDefaultGasLimit),
                                          optional_u64(step, "gas_price", 0));
        Address predicted = contract_address(sender, nonce);
        if (step.contains("as")) labels_[require_string(step, "as")] = predicted;
        if (step.contains("tag")) tags_[require_string(step, "tag")] = tx.digest();
        record["address"] = predicted.hex();
        record["tx"] = tx.digest().hex();
        c.submit(std::move(tx));
    } else if (action == "call" || action == "transfer") {
        Chain& c = require_chain();
        const KeyPair& sender_keys = account_keys(require_string(step, "sender"));
        Address sender = address_of(sender_keys.public_key);
        Address target = resolve_address(
            action == "call" ? require_string(step, "contract") : require_string(step, "to"));
        CallPayload payload;
        payload.contract = target.hex();
        payload.method = action == "call" ? require_string(step, "method") : "";
        payload.args = step.value("args", json::array());
        Transaction tx = make_transaction(sender_keys, c.next_nonce(sender), target, payload,
                                          optional_u64(step, "value", 0),
                                          optional_u64(step, "gas_limit", kDefaultGasLimit),
                                          optional_u64(step, "gas_price", 0));
        if (step.contains("tag")) tags_[require_string(step, "tag")] = tx.digest();
        record["tx"] = tx.digest().hex();
        c.submit(std::move(tx));
    } else if (action == "mine") {
        Chain& c = require_chain();
        bool drain = step.value("drain", false);
        json blocks = json::array();
        json rejected = json::array();
        StepObserver* obs = observer();
        do {
            const Block& b = c.mine(obs);
            json receipts = json::array();
            for (const auto& r : b.receipts) receipts.push_back(r.to_json());
            blocks.push_back(json{{"height", b.height},
                                  {"receipts", std::move(receipts)},
                                  {"state_digest", b.state_digest.hex()}});
            for (const auto& rej : c.last_rejected()) {
                rejected.push_back(json{{"reason", rej.reason}, {"tx", rej.tx_digest.hex()}});
            }
        } while (drain && c.pending_count() > 0);
        record["blocks"] = std::move(blocks);
        record["rejected"] = std::move(rejected);
    } else if (action == "view") {
        Chain& c = require_chain();
        std::optional<Address> caller;
        if (step.contains("caller")) caller = resolve_address(step["caller"].get<std::string>());
        CallResult r = c.call_view(resolve_address(require_string(step, "contract")),
                                   require_string(step, "method"), step.value("args", json::array()),
                                   caller);
        record["ok"] = r.ok;
        record["result"] = r.ok ? r.value : json(nullptr);
        record["revert_reason"] = r.revert_reason;
    } else if (action == "tokenize") {
        auto it = descriptors_.find(require_string(step, "connector"));
        if (it == descriptors_.end()) throw ScenarioError("unknown descriptor");
        const KeyPair& owner = account_keys(require_string(step, "owner"));
        const KeyPair& recipient = account_keys(require_string(step, "recipient"));
        TokenRecord t;
        try {
            t = tokenize_and_log(trail_, *rng_, it->second, owner, recipient.public_key);
        } catch (const StorageError& e) {
            throw ScenarioError(std::string("tokenize failed: ") + e.what());
        }
        record["token_id"] = t.token_id.hex();
        tokens_[require_string(step, "as")] = std::move(t);
    } else if (action == "redeem") {
        auto it = tokens_.find(require_string(step, "token"));
        if (it == tokens_.end()) throw ScenarioError("unknown token label");
        const KeyPair& recipient = account_keys(require_string(step, "recipient"));
        std::string status = "Unregistered";
        if (step.contains("registry")) {
            Chain& c = require_chain();
            auto rec = c.state().contract_storage(resolve_address(require_string(step, "registry")),
                                                  "token/" + it->second.token_id.hex());
            if (rec && rec->is_object()) status = rec->value("status", status);
        }
        auto result = redeem_and_log(trail_, it->second, recipient, status);
        bool ok = std::holds_alternative<ConnectorDescriptor>(result);
        std::string expect = step.value("expect", std::string("ok"));
        bool pass = (expect == "ok") == ok;
        out.assertions += 1;
        if (!pass) {
            out.failures += 1;
            if (out.first_failure.empty()) {
                out.first_failure = "step " + std::to_string(out.steps.size()) + ": redeem";
            }
        }
        record["ok"] = ok;
        record["expect"] = expect;
        record["pass"] = pass;
        record["status_checked"] = status;
        if (ok) record["descriptor_name"] = std::get<ConnectorDescriptor>(result).name;
    } else if (action == "revoke-log") {
        auto it = tokens_.find(require_string(step, "token"));
        if (it == tokens_.end()) throw ScenarioError("unknown token label");
        const KeyPair& owner = account_keys(require_string(step, "owner"));
        trail_.append(owner.public_key, AuditAction::TokenRevoke, it->second.token_id.hex());
    } else if (action == "proxy-read" || action == "proxy-write") {
        auto it = descriptors_.find(require_string(step, "connector"));
        if (it == descriptors_.end()) throw ScenarioError("unknown descriptor");
        if (!proxy_) proxy_.emplace(AccessPolicy{}, trail_);
        const KeyPair& actor = account_keys(require_string(step, "actor"));
        std::string rid = require_string(step, "record");
        ProxyResult r = action == "proxy-read"
                            ? proxy_->read(actor, it->second, rid)
                            : proxy_->write(actor, it->second, rid, step.value("document", json()));
        std::string expect = step.value("expect", std::string("ok"));
        bool pass = (expect == "ok") == r.ok;
        out.assertions += 1;
        if (!pass) {
            out.failures += 1;
            if (out.first_failure.empty()) {
                out.first_failure = "step " + std::to_string(out.steps.size()) + ": " + action;
            }
        }
        record["ok"] = r.ok;
        record["denied_check"] = r.denied_check;
        record["expect"] = expect;
        record["pass"] = pass;
        if (action == "proxy-read" && r.ok) record["document"] = r.document;
    } else if (action == "poll") {
        Chain& c = require_chain();
        std::string hub = require_string(step, "hub");
        auto [it, _] = messengers_.try_emplace(hub, resolve_address(hub), out_dir_);
        auto notes = it->second.poll_once(c);
        json delivered = json::array();
        for (const auto& n : notes) delivered.push_back(n.to_json());
        delivered_.insert(delivered_.end(), notes.begin(), notes.end());
        record["delivered"] = std::move(delivered);
        record["cursor"] = it->second.cursor();
    } else if (action == "oracle-run") {
        Chain& c = require_chain();
        std::string hub = require_string(step, "hub");
        const KeyPair& oracle_keys = account_keys(require_string(step, "oracle"));
        auto [it, _] = oracles_.try_emplace(hub, oracle_keys, resolve_address(hub), out_dir_);
        auto notes = it->second.process_pending(c, optional_u64(step, "gas_limit", 20000),
                                                optional_u64(step, "gas_price", 0));
        json delivered = json::array();
        for (const auto& n : notes) delivered.push_back(n.to_json());
        delivered_.insert(delivered_.end(), notes.begin(), notes.end());
        record["delivered"] = std::move(delivered);
        record["journal_size"] = it->second.journal().size();
    } else if (action == "counter-begin") {
        std::string name = require_string(step, "name");
        counters_[name];  // reset-free: counters accumulate across begin/end pairs
        if (std::find(active_counters_.begin(), active_counters_.end(), name) !=
            active_counters_.end()) {
            throw ScenarioError("counter already active: " + name);
        }
        active_counters_.push_back(name);
    } else if (action == "counter-end") {
        std::string name = require_string(step, "name");
        auto it = std::find(active_counters_.begin(), active_counters_.end(), name);
        if (it == active_counters_.end()) throw ScenarioError("counter not active: " + name);
        active_counters_.erase(it);
        record["by_kind"] = counters_[name].by_kind();
    } else if (action == "assert") {
        run_assert(step, out, record);
    } else {
        throw ScenarioError("unknown action: " + action);
    }

    out.steps.push_back(std::move(record));
}

void ScenarioRunner::run_assert(const json& step, Transcript& out, json& record) {
    std::string check = require_string(step, "check");
    record["check"] = check;
    bool pass = false;
    std::string cmp = step.value("cmp", std::string("eq"));

    if (check == "balance") {
        Chain& c = require_chain();
        uint64_t lhs = 0;
        auto add_balance = [&](const std::string& ref) {
            const Account* a = c.state().find(resolve_address(ref));
            lhs += a ? a->balance : 0;
        };
        if (step.contains("accounts")) {
            for (const auto& r : step["accounts"]) add_balance(r.get<std::string>());
        } else {
            add_balance(require_string(step, "account"));
        }
        uint64_t rhs = 0;
        if (step.contains("initial")) {
            auto add_initial = [&](const std::string& name) {
                auto it = initial_balances_.find(name);
                if (it == initial_balances_.end()) throw ScenarioError("unknown account: " + name);
                rhs += it->second;
            };
            if (step["initial"].is_array()) {
                for (const auto& n : step["initial"]) add_initial(n.get<std::string>());
            } else {
                add_initial(step["initial"].get<std::string>());
            }
        } else {
            rhs = optional_u64(step, "value", 0);
        }
        if (step.contains("offset")) rhs += step["offset"].get<int64_t>();
        pass = cmp_u64(cmp, lhs, rhs);
        record["lhs"] = lhs;
        record["rhs"] = rhs;
    } else if (check == "storage") {
        Chain& c = require_chain();
        auto value = c.state().contract_storage(resolve_address(require_string(step, "contract")),
                                                require_string(step, "key"));
        if (step.contains("exists")) {
            pass = value.has_value() == step["exists"].get<bool>();
        } else {
            json expected = step.contains("value") ? step["value"] : json(nullptr);
            bool equal = value.has_value() && *value == expected;
            pass = cmp == "ne" ? !equal : equal;
        }
        record["actual"] = value ? *value : json(nullptr);
    } else if (check == "receipt") {
        Chain& c = require_chain();
        auto tag_it = tags_.find(require_string(step, "tag"));
        if (tag_it == tags_.end()) throw ScenarioError("unknown tag");
        const Receipt* r = c.find_receipt(tag_it->second);
        if (!r) {
            pass = false;
            record["actual"] = "receipt-not-found";
        } else {
            pass = true;
            if (step.contains("status")) pass = pass && step["status"] == to_string(r->status);
            if (step.contains("gas_used")) pass = pass && r->gas_used == step["gas_used"].get<uint64_t>();
            if (step.contains("created")) pass = pass && r->created_address.has_value() == step["created"].get<bool>();
            if (step.contains("log_count")) pass = pass && r->logs.size() == step["log_count"].get<size_t>();
            record["actual"] = r->to_json();
        }
    } else if (check == "view") {
        Chain& c = require_chain();
        std::optional<Address> caller;
        if (step.contains("caller")) caller = resolve_address(step["caller"].get<std::string>());
        CallResult r = c.call_view(resolve_address(require_string(step, "contract")),
                                   require_string(step, "method"), step.value("args", json::array()),
                                   caller);
        if (step.contains("reason")) {
            pass = !r.ok && r.revert_reason == step["reason"].get<std::string>();
            record["actual"] = r.revert_reason;
        } else {
            json expected;
            if (step.contains("value_from")) {
                // compare against a committed storage value (optionally a
                // JSON-pointer into it)
                const json& vf = step["value_from"];
                auto sv = c.state().contract_storage(
                    resolve_address(require_string(vf, "contract")), require_string(vf, "key"));
                if (!sv) throw ScenarioError("value_from storage key is absent");
                expected = *sv;
                if (vf.contains("pointer")) {
                    expected = expected.at(json::json_pointer(vf["pointer"].get<std::string>()));
                }
            } else {
                expected = step.contains("value") ? step["value"] : json(nullptr);
            }
            bool equal = r.ok && r.value == expected;
            pass = cmp == "ne" ? !equal : equal;
            record["actual"] = r.ok ? r.value : json(r.revert_reason);
        }
    } else if (check == "conservation") {
        Chain& c = require_chain();
        uint64_t lhs = c.state().total_supply();
        uint64_t rhs = c.expected_supply();
        pass = lhs == rhs;
        record["lhs"] = lhs;
        record["rhs"] = rhs;
    } else if (check == "chain-verifies") {
        Chain& c = require_chain();
        std::stringstream ss;
        c.save(ss);
        VerifyResult vr = verify_chain_stream(ss);
        pass = vr.ok;
        if (!vr.ok) record["reason"] = vr.reason;
    } else if (check == "counter") {
        auto it = counters_.find(require_string(step, "name"));
        if (it == counters_.end()) throw ScenarioError("unknown counter");
        uint64_t lhs = it->second.total(require_string(step, "kind"));
        uint64_t rhs = optional_u64(step, "value", 0);
        pass = cmp_u64(cmp, lhs, rhs);
        record["lhs"] = lhs;
        record["rhs"] = rhs;
    } else if (check == "counter-ratio") {
        auto a = counters_.find(require_string(step, "name"));
        auto b = counters_.find(require_string(step, "of"));
        if (a == counters_.end() || b == counters_.end()) throw ScenarioError("unknown counter");
        std::string kind = require_string(step, "kind");
        uint64_t lhs = a->second.total(kind);
        uint64_t rhs = b->second.total(kind);
        uint64_t max_percent = optional_u64(step, "max_percent", 100);
        pass = lhs * 100 <= max_percent * rhs;
        record["lhs"] = lhs;
        record["rhs"] = rhs;
        record["max_percent"] = max_percent;
    } else if (check == "audit-length") {
        uint64_t rhs = optional_u64(step, "value", 0);
        pass = cmp_u64(cmp, trail_.size(), rhs);
        record["lhs"] = trail_.size();
        record["rhs"] = rhs;
    } else if (check == "audit-verifies") {
        pass = verify_audit(trail_.entries()).ok;
    } else if (check == "notifications") {
        Address subscriber = resolve_address(require_string(step, "subscriber"));
        uint64_t count = 0;
        for (const auto& n : delivered_) {
            if (n.subscriber != subscriber) continue;
            if (step.contains("topic") && n.topic != step["topic"].get<std::string>()) continue;
            ++count;
        }
        uint64_t rhs = optional_u64(step, "value", 0);
        pass = cmp_u64(cmp, count, rhs);
        record["lhs"] = count;
        record["rhs"] = rhs;
    } else if (check == "log-count") {
        Chain& c = require_chain();
        std::optional<Address> emitter;
        if (step.contains("contract")) emitter = resolve_address(step["contract"].get<std::string>());
        uint64_t count = 0;
        for (const auto& b : c.blocks()) {
            for (const auto& r : b.receipts) {
                for (const auto& e : r.logs) {
                    if (emitter && e.emitter != *emitter) continue;
                    if (step.contains("topic") && e.topic != step["topic"].get<std::string>()) continue;
                    if (step.contains("event_action")) {
                        json data = json::parse(to_string(e.data), nullptr, false);
                        if (data.is_discarded() || !data.is_object() ||
                            data.value("action", std::string()) !=
                                step["event_action"].get<std::string>()) {
                            continue;
                        }
                    }
                    ++count;
                }
            }
        }
        uint64_t rhs = optional_u64(step, "value", 0);
        pass = cmp_u64(cmp, count, rhs);
        record["lhs"] = count;
        record["rhs"] = rhs;
    } else {
        throw ScenarioError("unknown assert check: " + check);
    }

    out.assertions += 1;
    if (!pass) {
        out.failures += 1;
        if (out.first_failure.empty()) {
            out.first_failure = "step " + std::to_string(out.steps.size()) + ": assert " + check;
        }
    }
    record["pass"] = pass;
}

void ScenarioRunner::flush_outputs() {
    std::filesystem::create_directories(out_dir_);
    if (chain_) {
        std::ofstream cf(out_dir_ / "chain.jsonl");
        chain_->save(cf);
    }
    if (trail_.size() > 0) trail_.save(out_dir_ / "audit.jsonl");
    if (!silos_.empty()) {
        std::filesystem::create_directories(out_dir_ / "silos");
        for (const auto& [id, silo] : silos_) silo.save(out_dir_ / "silos" / (id + ".json"));
    }
    if (record_trace_) {
        std::ofstream tf(out_dir_ / "trace.jsonl");
        tf << trace_.to_jsonl();
    }
}

}  // namespace pchain
