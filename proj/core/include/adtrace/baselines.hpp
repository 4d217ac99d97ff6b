#pragma once

#include "adtrace/log_store.hpp"

#include <cstddef>
#include <set>
#include <utility>

namespace adtrace {

using HostPair = std::pair<Symbol, Symbol>;

/// Every connect between two domain hosts is a cross-machine edge.
std::size_t connection_baseline_edges(const EventStore& store);
/// Every logon whose source is another domain host is a cross-machine edge.
std::size_t logon_baseline_edges(const EventStore& store);

/// Distinct (source, destination) host pairs seen by each baseline.
std::set<HostPair> connection_baseline_pairs(const EventStore& store);
std::set<HostPair> logon_baseline_pairs(const EventStore& store);

} // namespace adtrace
