#pragma once

#include "pchain/chain.hpp"

namespace pchain {

// Read-only reports over a verified chain, backing the CLI `inspect` command.
json inspect_block(const LoadedChain& chain, uint64_t height);
json inspect_account(const LoadedChain& chain, const Address& address);
// All publish events for a pub-sub topic, in (height, tx, emission) order.
json inspect_topic(const LoadedChain& chain, const std::string& topic);

}  // namespace pchain
