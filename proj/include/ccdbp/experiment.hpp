#pragma once

#include <cstdint>

#include "ccdbp/channel.hpp"
#include "ccdbp/txrx.hpp"

namespace ccdbp {

struct Simulation {
  SymbolFrame frame;
  DualPolSignal transmitted;
  DualPolSignal received;
};

/// Transmits a frame from tx.rng_seed and propagates it over the link. ASE is
/// drawn from `noise_seed`, so runs that share both seeds see the same
/// symbols and the same noise realization.
Simulation simulate(const TxConfig& tx, const Link& link, const StepPlan& plan,
                    std::uint64_t noise_seed);

}  // namespace ccdbp
