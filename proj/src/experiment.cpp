#include "ccdbp/experiment.hpp"

#include <random>

namespace ccdbp {

Simulation simulate(const TxConfig& tx, const Link& link, const StepPlan& plan,
                    std::uint64_t noise_seed) {
  tx.validate();
  Simulation sim;
  sim.frame = generate_frame(tx);
  sim.transmitted = shape_and_mux(sim.frame, tx);
  std::mt19937_64 rng(noise_seed);
  sim.received = link.spans.empty() ? sim.transmitted
                                    : propagate_link(sim.transmitted, link, plan, rng);
  return sim;
}

}  // namespace ccdbp
