#include "pchain/inspect.hpp"

namespace pchain {

json inspect_block(const LoadedChain& chain, uint64_t height) {
    if (height >= chain.blocks.size()) {
        return json{{"error", "no-such-block"}, {"height", height}};
    }
    return chain.blocks[height].to_json();
}

json inspect_account(const LoadedChain& chain, const Address& address) {
    const Account* acct = chain.final_state.find(address);
    if (!acct) return json{{"address", address.hex()}, {"error", "no-such-account"}};
    json storage = json::object();
    for (const auto& [k, v] : acct->storage) {
        // Values are canonical JSON; decode them for the report.
        json decoded = json::parse(to_string(v), nullptr, false);
        storage[k.hex()] = decoded.is_discarded() ? json(to_hex(v)) : decoded;
    }
    return json{{"address", address.hex()},
                {"balance", acct->balance},
                {"contract", acct->contract ? json{{"name", acct->contract->prototype_name},
                                                   {"version", acct->contract->version}}
                                            : json(nullptr)},
                {"nonce", acct->nonce},
                {"storage", std::move(storage)}};
}

json inspect_topic(const LoadedChain& chain, const std::string& topic) {
    json events = json::array();
    for (const auto& b : chain.blocks) {
        for (const auto& r : b.receipts) {
            for (const auto& e : r.logs) {
                if (e.topic != topic) continue;
                json data = json::parse(to_string(e.data), nullptr, false);
                if (data.is_discarded() || !data.is_object() ||
                    data.value("action", std::string()) != "publish") {
                    continue;
                }
                json ev = e.to_json();
                ev["data_json"] = data;
                events.push_back(std::move(ev));
            }
        }
    }
    return json{{"events", std::move(events)}, {"topic", topic}};
}

}  // namespace pchain
