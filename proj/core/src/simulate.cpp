#include "audit/simulate.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "audit/errors.hpp"
#include "audit/permutation.hpp"
#include "audit/stats.hpp"

namespace audit {

namespace {

using nlohmann::json;

constexpr const char* kSimBlankTag = "sim";

double standard_normal_draw(const std::string& sim_seed,
                            const std::string& stream_id) {
  RandomnessStream stream(sim_seed, stream_id, kSimBlankTag);
  return normal_quantile(stream.next_unit());
}

std::string padded(int value, int width) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%0*d", width, value);
  return buf;
}

char presented_label_of(const AssembledPrompt& prompt,
                        const std::string& blank_id, int original_index) {
  const auto& labels = prompt.answer_key.at(blank_id);
  for (const auto& [label, index] : labels) {
    if (index == original_index) {
      return label;
    }
  }
  throw KeyMismatch("original option index " + std::to_string(original_index) +
                    " not present in answer key for blank '" + blank_id + "'");
}

}  // namespace

void SimulationSpec::validate() const {
  if (sigma2_provider < 0.0 || sigma2_item < 0.0 || sigma2_residual <= 0.0) {
    throw ValidationError(
        "simulation variances must be >= 0 and residual variance > 0");
  }
  if (decoy_noise_sd < 0.0) {
    throw ValidationError("decoy_noise_sd must be >= 0");
  }
  if (n_providers < 1 || n_models_per_provider < 1 || n_items < 1 ||
      n_replicates < 1) {
    throw ValidationError("simulation counts must be >= 1");
  }
  if (sim_seed.find(':') != std::string::npos) {
    throw ReservedCharacter("sim_seed contains the reserved separator ':'");
  }
}

SimulationSpec simulation_spec_from_json(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("simulation spec is not valid JSON: ") +
                      e.what());
  }
  SimulationSpec spec;
  spec.mu = doc.value("mu", spec.mu);
  spec.sigma2_provider = doc.value("sigma2_provider", spec.sigma2_provider);
  spec.sigma2_item = doc.value("sigma2_item", spec.sigma2_item);
  spec.sigma2_residual = doc.value("sigma2_residual", spec.sigma2_residual);
  spec.n_providers = doc.value("n_providers", spec.n_providers);
  spec.n_models_per_provider =
      doc.value("n_models_per_provider", spec.n_models_per_provider);
  spec.n_items = doc.value("n_items", spec.n_items);
  spec.n_replicates = doc.value("n_replicates", spec.n_replicates);
  spec.decoy_noise_sd = doc.value("decoy_noise_sd", spec.decoy_noise_sd);
  spec.sim_seed = doc.value("sim_seed", spec.sim_seed);
  spec.validate();
  return spec;
}

std::string simulation_spec_to_json(const SimulationSpec& spec) {
  return json{{"mu", spec.mu},
              {"sigma2_provider", spec.sigma2_provider},
              {"sigma2_item", spec.sigma2_item},
              {"sigma2_residual", spec.sigma2_residual},
              {"n_providers", spec.n_providers},
              {"n_models_per_provider", spec.n_models_per_provider},
              {"n_items", spec.n_items},
              {"n_replicates", spec.n_replicates},
              {"decoy_noise_sd", spec.decoy_noise_sd},
              {"sim_seed", spec.sim_seed}}
      .dump();
}

double simulated_provider_effect(const SimulationSpec& spec, int provider_idx) {
  if (spec.sigma2_provider == 0.0) {
    return 0.0;
  }
  return std::sqrt(spec.sigma2_provider) *
         standard_normal_draw(spec.sim_seed,
                              "u-p" + std::to_string(provider_idx));
}

double simulated_item_effect(const SimulationSpec& spec, int item_idx) {
  if (spec.sigma2_item == 0.0) {
    return 0.0;
  }
  return std::sqrt(spec.sigma2_item) *
         standard_normal_draw(spec.sim_seed, "v-i" + std::to_string(item_idx));
}

int simulated_score(const SimulationSpec& spec, int provider_idx,
                    int model_idx, int item_idx, int replicate_idx,
                    DecoyMode decoy_mode) {
  const double decoy_extra = decoy_mode == DecoyMode::with_decoys
                                 ? spec.decoy_noise_sd * spec.decoy_noise_sd
                                 : 0.0;
  const double residual_sd = std::sqrt(spec.sigma2_residual + decoy_extra);
  // Residual draws are keyed to the index tuple without the decoy mode, so
  // paired with/without runs share the same underlying noise.
  const std::string residual_id =
      "e-p" + std::to_string(provider_idx) + "-m" + std::to_string(model_idx) +
      "-i" + std::to_string(item_idx) + "-r" + std::to_string(replicate_idx);
  const double latent = spec.mu +
                        simulated_provider_effect(spec, provider_idx) +
                        simulated_item_effect(spec, item_idx) +
                        residual_sd * standard_normal_draw(spec.sim_seed,
                                                           residual_id);
  const long rounded = std::lround(latent);
  if (rounded < 1) {
    return 1;
  }
  if (rounded > 5) {
    return 5;
  }
  return int(rounded);
}

SimulatedResponse simulate_response(const SimulationSpec& spec,
                                    int provider_idx, int model_idx,
                                    int item_idx, int replicate_idx,
                                    DecoyMode decoy_mode, const AuditItem& item,
                                    const AssembledPrompt& prompt) {
  SimulatedResponse response;
  response.score = simulated_score(spec, provider_idx, model_idx, item_idx,
                                   replicate_idx, decoy_mode);

  std::string text;
  for (const auto& blank : item.blanks) {
    const auto key_it = prompt.answer_key.find(blank.blank_id);
    if (key_it == prompt.answer_key.end()) {
      continue;  // not presented under this decoy mode
    }
    int original_index = -1;
    if (blank.kind == BlankKind::probe) {
      for (std::size_t i = 0; i < blank.options.size(); ++i) {
        if (blank.options[i].latent_score == response.score) {
          original_index = int(i);
          break;
        }
      }
      if (original_index < 0) {
        throw ValidationError("item '" + item.item_id +
                              "': no probe option carries latent score " +
                              std::to_string(response.score));
      }
    } else {
      // Content-keyed decoy answer: draw an original option index.
      RandomnessStream stream(
          spec.sim_seed,
          "dsel-p" + std::to_string(provider_idx) + "-m" +
              std::to_string(model_idx) + "-i" + std::to_string(item_idx) +
              "-r" + std::to_string(replicate_idx),
          blank.blank_id);
      original_index =
          int(stream.next_below(std::uint64_t(blank.options.size())));
    }
    if (!text.empty()) {
      text += '\n';
    }
    text += "BLANK_" + blank.blank_id + ": " +
            presented_label_of(prompt, blank.blank_id, original_index);
  }
  response.raw_text = std::move(text);
  return response;
}

ItemBank make_synthetic_bank(int n_items, int n_decoys,
                             const std::vector<std::string>& dimensions) {
  if (n_items < 1 || n_decoys < 0 || dimensions.empty()) {
    throw ValidationError(
        "synthetic bank requires n_items >= 1, n_decoys >= 0 and at least "
        "one dimension");
  }
  static const char* kNumberWords[5] = {"one", "two", "three", "four", "five"};

  ItemBank bank;
  for (const auto& name : dimensions) {
    bank.dimensions.push_back(DimensionInfo{name, Polarity::higher_is_worse});
  }
  for (int i = 0; i < n_items; ++i) {
    AuditItem item;
    item.item_id = "sim-item-" + padded(i, 3);
    item.dimension = dimensions[std::size_t(i) % dimensions.size()];
    item.vignette = "A panel reviews case " + padded(i, 3) +
                    " and records the outcome as {{p}}.";
    Blank probe;
    probe.blank_id = "p";
    probe.kind = BlankKind::probe;
    for (int o = 0; o < 5; ++o) {
      probe.options.push_back(ProbeOption{
          char('A' + o),
          "finding level " + std::string(kNumberWords[o]) + " on record",
          o + 1});
    }
    item.blanks.push_back(std::move(probe));
    for (int d = 0; d < n_decoys; ++d) {
      const std::string id = "d" + std::to_string(d);
      item.vignette += " A side note files detail " + std::to_string(d) +
                       " under {{" + id + "}}.";
      Blank decoy;
      decoy.blank_id = id;
      decoy.kind = BlankKind::decoy;
      for (int o = 0; o < 5; ++o) {
        decoy.options.push_back(ProbeOption{
            char('A' + o),
            "ledger entry " + std::string(kNumberWords[o]) + " of note " +
                std::to_string(d),
            o + 1});
      }
      item.blanks.push_back(std::move(decoy));
    }
    item.judge_scores = {5.0, 5.0, 5.0};
    bank.items.push_back(std::move(item));
  }
  finalize_item_bank(bank);
  return bank;
}

std::string simulated_provider_name(int provider_idx) {
  return "provider-" + padded(provider_idx, 3);
}

std::string simulated_model_name(int provider_idx, int model_idx) {
  return "model-" + padded(provider_idx, 3) + "-" + padded(model_idx, 2);
}

}  // namespace audit
