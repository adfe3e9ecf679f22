#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "audit/assembly.hpp"
#include "audit/item_bank.hpp"

namespace audit {

// Planted-parameter generative model behind synthetic runs: latent
// y = mu + u_provider + v_item + e with independent Gaussian effects, every
// draw derived from the seeded SHA-256 stream, so simulated runs are
// bit-identical across platforms.
struct SimulationSpec {
  double mu = 3.0;
  double sigma2_provider = 0.0;
  double sigma2_item = 0.0;
  double sigma2_residual = 1.0;
  int n_providers = 2;
  int n_models_per_provider = 1;
  int n_items = 2;
  int n_replicates = 1;
  double decoy_noise_sd = 0.0;  // extra residual sd in with_decoys mode only
  std::string sim_seed = "sim";

  void validate() const;
};

SimulationSpec simulation_spec_from_json(std::string_view bytes);
std::string simulation_spec_to_json(const SimulationSpec& spec);

// Deterministic effect draws, exposed so recovery tests can reuse them.
double simulated_provider_effect(const SimulationSpec& spec, int provider_idx);
double simulated_item_effect(const SimulationSpec& spec, int item_idx);

// Ordinal score for one (provider, model, item, replicate) cell:
// clamp(round(y), 1, 5) with round-half-away-from-zero.
int simulated_score(const SimulationSpec& spec, int provider_idx,
                    int model_idx, int item_idx, int replicate_idx,
                    DecoyMode decoy_mode);

struct SimulatedResponse {
  int score = 0;  // on the normal-pole 1..5 scale
  std::string raw_text;
};

// Score plus an answer sheet written against the assembled prompt: the
// responder selects by option content (the option whose latent score equals
// the drawn score), so de-permuted results do not depend on the run seed.
// `item` must be the bank item as stored (normal-pole scores).
SimulatedResponse simulate_response(const SimulationSpec& spec,
                                    int provider_idx, int model_idx,
                                    int item_idx, int replicate_idx,
                                    DecoyMode decoy_mode, const AuditItem& item,
                                    const AssembledPrompt& prompt);

// Deterministic synthetic bank for simulation and tests: n_items items, one
// probe plus n_decoys decoy blanks each, round-robin over the given
// dimension names.
ItemBank make_synthetic_bank(int n_items, int n_decoys = 2,
                             const std::vector<std::string>& dimensions = {
                                 "synthetic"});

std::string simulated_provider_name(int provider_idx);
std::string simulated_model_name(int provider_idx, int model_idx);

}  // namespace audit
