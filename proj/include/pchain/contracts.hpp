#pragma once

#include "pchain/vm.hpp"

namespace pchain {

// Stable prototype catalog names, used in transaction payloads.
inline constexpr const char* kVulnerableVault = "vulnerable_vault";
inline constexpr const char* kExploit = "exploit";
inline constexpr const char* kGuardedVault = "guarded_vault";
inline constexpr const char* kContractManager = "contract_manager";
inline constexpr const char* kEntityRegistry = "entity_registry";
inline constexpr const char* kTokenRegistry = "token_registry";
inline constexpr const char* kPublisherHub = "publisher_hub";
inline constexpr const char* kEntity = "entity";  // factory product of the registry

void register_pattern_prototypes(PrototypeCatalog& catalog);

}  // namespace pchain
