#include "pchain/vm.hpp"

namespace pchain {

namespace {

struct RevertError {
    std::string reason;
};

struct OutOfGasError {};

}  // namespace

namespace detail {

struct FrameInfo {
    Address contract{};
    Address caller{};
    std::string method;
    json args;
    uint64_t value = 0;
    uint32_t depth = 0;
};

struct Exec {
    std::vector<WorldState> states;          // states.back() is the active view
    std::vector<std::vector<LogEvent>> logs;
    std::vector<uint64_t> gas;               // gas[0] = transaction budget, then one entry per frame
    std::vector<FrameInfo> frames;
    uint64_t height = 0;
    uint32_t tx_index = 0;
    StepObserver* obs = nullptr;
};

}  // namespace detail

using detail::Exec;
using detail::FrameInfo;

void TraceRecorder::on_step(uint32_t frame_depth, std::string_view step_kind, uint64_t,
                            uint64_t gas_after, const Address& contract, std::string_view method) {
    records_.push_back(json{{"contract", contract.hex()},
                            {"frame_depth", frame_depth},
                            {"gas_after", gas_after},
                            {"method", std::string(method)},
                            {"step_kind", std::string(step_kind)}});
}

std::string TraceRecorder::to_jsonl() const {
    std::string out;
    for (const auto& r : records_) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

void GasCounter::on_step(uint32_t, std::string_view step_kind, uint64_t cost, uint64_t,
                         const Address&, std::string_view) {
    by_kind_[std::string(step_kind)] += cost;
}

uint64_t GasCounter::total(std::string_view step_kind) const {
    auto it = by_kind_.find(std::string(step_kind));
    return it == by_kind_.end() ? 0 : it->second;
}

Frame::Frame(Vm& vm, Exec& exec, size_t frame_index) : vm_(vm), exec_(exec), index_(frame_index) {}

const Address& Frame::self() const { return exec_.frames[index_].contract; }
const Address& Frame::caller() const { return exec_.frames[index_].caller; }
uint64_t Frame::value() const { return exec_.frames[index_].value; }
const json& Frame::args() const { return exec_.frames[index_].args; }
const std::string& Frame::method() const { return exec_.frames[index_].method; }
uint32_t Frame::depth() const { return exec_.frames[index_].depth; }
uint64_t Frame::height() const { return exec_.height; }
uint32_t Frame::tx_index() const { return exec_.tx_index; }
uint64_t Frame::gas_left() const { return exec_.gas.back(); }

void Frame::revert(std::string reason) const { throw RevertError{std::move(reason)}; }

json Frame::storage_get(const std::string& key) {
    vm_.charge(exec_, "storage_read");
    const Account* acct = exec_.states.back().find(self());
    if (!acct) return json(nullptr);
    auto it = acct->storage.find(storage_key(key));
    if (it == acct->storage.end()) return json(nullptr);
    return json::parse(to_string(it->second));
}

bool Frame::storage_has(const std::string& key) {
    vm_.charge(exec_, "storage_read");
    const Account* acct = exec_.states.back().find(self());
    return acct && acct->storage.count(storage_key(key)) > 0;
}

void Frame::storage_put(const std::string& key, const json& value) {
    Bytes bytes = canonical_bytes(value);
    vm_.charge(exec_, "storage_write", bytes.size());
    exec_.states.back().get_or_create(self()).storage[storage_key(key)] = std::move(bytes);
}

void Frame::storage_del(const std::string& key) {
    vm_.charge(exec_, "storage_write");
    Account* acct = exec_.states.back().find(self());
    if (acct) acct->storage.erase(storage_key(key));
}

void Frame::log(const std::string& topic, const json& data) {
    vm_.charge(exec_, "log_emit");
    LogEvent e;
    e.emitter = self();
    e.topic = topic;
    e.data = canonical_bytes(data);
    e.block_height = exec_.height;
    e.tx_index = exec_.tx_index;
    exec_.logs.back().push_back(std::move(e));
}

uint64_t Frame::balance(const Address& a) {
    vm_.charge(exec_, "storage_read");
    const Account* acct = exec_.states.back().find(a);
    return acct ? acct->balance : 0;
}

void Frame::step(uint64_t n) {
    for (uint64_t i = 0; i < n; ++i) vm_.charge(exec_, "compute_step");
}

bool Frame::send(const Address& to, uint64_t amount) {
    return call(to, "", json::array(), amount).ok;
}

CallResult Frame::call(const Address& to, const std::string& method, json args, uint64_t value,
                       std::optional<uint64_t> gas_cap) {
    MessageCall mc;
    mc.caller = self();
    mc.callee = to;
    mc.value = value;
    mc.method = method;
    mc.args = args.is_array() ? std::move(args) : json::array({std::move(args)});
    mc.gas_budget = std::min(gas_cap.value_or(exec_.gas.back()), exec_.gas.back());
    mc.depth = depth() + 1;
    return vm_.execute_call(exec_, mc);
}

Address Frame::create(const std::string& prototype, json init_args, uint64_t value) {
    Account& me = exec_.states.back().get_or_create(self());
    uint64_t nonce = me.nonce++;
    return vm_.execute_create(exec_, self(), nonce, prototype, std::move(init_args), value,
                              depth() + 1);
}

void PrototypeCatalog::add(Prototype proto) {
    std::string name = proto.name;
    protos_[name] = std::move(proto);
}

const Prototype* PrototypeCatalog::find(const std::string& name) const {
    auto it = protos_.find(name);
    return it == protos_.end() ? nullptr : &it->second;
}

Vm::Vm(const ChainConfig& cfg) : cfg_(cfg) {}

void Vm::charge(Exec& exec, std::string_view kind, size_t value_bytes) const {
    uint64_t cost = cfg_.gas.cost_of(kind, value_bytes);
    for (uint64_t g : exec.gas) {
        if (cost > g) throw OutOfGasError{};
    }
    for (uint64_t& g : exec.gas) g -= cost;
    if (exec.obs) {
        static const Address no_contract{};
        const FrameInfo* fi = exec.frames.empty() ? nullptr : &exec.frames.back();
        exec.obs->on_step(fi ? fi->depth : 0, kind, cost, exec.gas.back(),
                          fi ? fi->contract : no_contract, fi ? fi->method : std::string_view(""));
    }
}

namespace {

// Pops one frame's stacks; when `commit` is set the child state and logs
// replace/extend the parent's.
void unwind(Exec& exec, bool commit) {
    size_t n = exec.states.size();
    if (commit) {
        exec.states[n - 2] = std::move(exec.states[n - 1]);
        auto& parent_logs = exec.logs[n - 2];
        auto& child_logs = exec.logs[n - 1];
        parent_logs.insert(parent_logs.end(), std::make_move_iterator(child_logs.begin()),
                           std::make_move_iterator(child_logs.end()));
    }
    exec.states.pop_back();
    exec.logs.pop_back();
    exec.gas.pop_back();
    exec.frames.pop_back();
}

void transfer_value(Exec& exec, const Address& from, const Address& to, uint64_t amount) {
    WorldState& st = exec.states.back();
    Account* src = st.find(from);
    if (!src || src->balance < amount) throw RevertError{"insufficient-balance"};
    src->balance -= amount;
    st.get_or_create(to).balance += amount;
}

}  // namespace

CallResult Vm::execute_call(Exec& exec, const MessageCall& call) const {
    exec.states.push_back(exec.states.back());
    exec.logs.emplace_back();
    exec.gas.push_back(std::min(call.gas_budget, exec.gas.back()));
    exec.frames.push_back(FrameInfo{call.callee, call.caller, call.method, call.args, call.value,
                                    call.depth});
    try {
        charge(exec, "call_base");
        if (call.depth >= cfg_.max_call_depth) throw RevertError{"depth-exceeded"};
        if (call.value > 0) {
            charge(exec, "value_transfer");
            transfer_value(exec, call.caller, call.callee, call.value);
        }

        const Prototype* proto = nullptr;
        if (const Account* callee = exec.states.back().find(call.callee);
            callee && callee->contract) {
            proto = catalog_.find(callee->contract->prototype_name);
            if (!proto) throw RevertError{"unknown-prototype"};
        }

        json ret;
        const Prototype::Handler* handler = nullptr;
        if (proto) {
            if (call.method.empty()) {
                if (proto->fallback) handler = &proto->fallback;
                // no fallback: a plain transfer to the contract is fine
            } else if (auto it = proto->methods.find(call.method); it != proto->methods.end()) {
                handler = &it->second;
            } else if (proto->fallback && call.value > 0) {
                handler = &proto->fallback;
            } else {
                throw RevertError{"unknown-method"};
            }
        } else if (!call.method.empty()) {
            throw RevertError{"not-a-contract"};
        }
        if (handler) {
            Frame frame(const_cast<Vm&>(*this), exec, exec.frames.size() - 1);
            ret = (*handler)(frame);
        }

        unwind(exec, /*commit=*/true);
        return CallResult{true, "", std::move(ret)};
    } catch (const RevertError& e) {
        unwind(exec, /*commit=*/false);
        return CallResult{false, e.reason, {}};
    }
    // OutOfGasError deliberately not caught: it voids every frame.
}

Address Vm::execute_create(Exec& exec, const Address& creator, uint64_t creator_nonce,
                           const std::string& prototype, json init_args, uint64_t value,
                           uint32_t depth) const {
    Address addr = contract_address(creator, creator_nonce);
    exec.states.push_back(exec.states.back());
    exec.logs.emplace_back();
    exec.gas.push_back(exec.gas.back());
    exec.frames.push_back(FrameInfo{addr, creator, "<init>",
                                    init_args.is_array() ? std::move(init_args)
                                                         : json::array({std::move(init_args)}),
                                    value, depth});
    try {
        charge(exec, "contract_create");
        if (depth >= cfg_.max_call_depth) throw RevertError{"depth-exceeded"};
        const Prototype* proto = catalog_.find(prototype);
        if (!proto) throw RevertError{"unknown-prototype"};

        WorldState& st = exec.states.back();
        if (st.find(addr)) throw RevertError{"address-collision"};
        st.get_or_create(addr).contract = ContractIdentity{proto->name, proto->version};
        if (value > 0) {
            charge(exec, "value_transfer");
            transfer_value(exec, creator, addr, value);
        }
        if (proto->constructor) {
            Frame frame(const_cast<Vm&>(*this), exec, exec.frames.size() - 1);
            proto->constructor(frame);
        }
        unwind(exec, /*commit=*/true);
        return addr;
    } catch (const RevertError&) {
        unwind(exec, /*commit=*/false);
        throw;  // creation failures revert the creating frame as well
    }
}

TxOutcome Vm::execute(WorldState& state, const Transaction& tx, const CallPayload& payload,
                      uint64_t height, uint32_t tx_index, StepObserver* observer) const {
    Exec exec;
    exec.states.push_back(state);
    exec.logs.emplace_back();
    exec.gas.push_back(tx.gas_limit);
    exec.height = height;
    exec.tx_index = tx_index;
    exec.obs = observer;

    TxOutcome out;
    try {
        if (!tx.recipient) {
            out.created = execute_create(exec, tx.sender, tx.nonce, payload.method, payload.args,
                                         tx.value, 0);
        } else {
            MessageCall mc;
            mc.caller = tx.sender;
            mc.callee = *tx.recipient;
            mc.value = tx.value;
            mc.method = payload.method;
            mc.args = payload.args;
            mc.gas_budget = tx.gas_limit;
            mc.depth = 0;
            CallResult r = execute_call(exec, mc);
            if (!r.ok) throw RevertError{r.revert_reason};
        }
        out.status = TxStatus::Succeeded;
        out.gas_used = tx.gas_limit - exec.gas[0];
        out.logs = std::move(exec.logs[0]);
        state = std::move(exec.states[0]);
    } catch (const RevertError& e) {
        out.status = TxStatus::Reverted;
        out.revert_reason = e.reason;
        out.gas_used = tx.gas_limit - exec.gas[0];
        out.created = std::nullopt;
    } catch (const OutOfGasError&) {
        out.status = TxStatus::OutOfGas;
        out.gas_used = tx.gas_limit;
        out.created = std::nullopt;
    }
    return out;
}

CallResult Vm::call_view(const WorldState& state, const Address& target, const std::string& method,
                         json args, std::optional<Address> caller) const {
    Exec exec;
    exec.states.push_back(state);
    exec.logs.emplace_back();
    exec.gas.push_back(cfg_.block_gas_limit);
    exec.height = 0;
    exec.tx_index = 0;
    exec.obs = nullptr;

    MessageCall mc;
    mc.caller = caller.value_or(Address{});
    mc.callee = target;
    mc.value = 0;
    mc.method = method;
    mc.args = args.is_array() ? std::move(args) : json::array({std::move(args)});
    mc.gas_budget = cfg_.block_gas_limit;
    mc.depth = 0;
    try {
        return execute_call(exec, mc);
    } catch (const OutOfGasError&) {
        return CallResult{false, "out-of-gas", {}};
    }
}

}  // namespace pchain
