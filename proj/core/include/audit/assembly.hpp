#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "audit/item_bank.hpp"
#include "audit/permutation.hpp"

namespace audit {

enum class DecoyMode { with_decoys, probe_only };
enum class PoleMode { normal, reversed };

std::string to_string(DecoyMode mode);
std::string to_string(PoleMode mode);
DecoyMode decoy_mode_from_string(std::string_view s);
PoleMode pole_mode_from_string(std::string_view s);

// presented label -> original option index, per blank.
using AnswerKey = std::map<std::string, std::map<char, int>>;

struct AssembledPrompt {
  std::string item_id;
  std::string prompt_text;
  PromptHash hash;
  AnswerKey answer_key;
  std::string probe_blank_id;
  DecoyMode decoy_mode = DecoyMode::with_decoys;
  PoleMode pole_mode = PoleMode::normal;

  // Permutation records recoverable from the answer key, for the run log.
  std::vector<PermutationRecord> permutation_records(
      const std::string& global_seed) const;
};

// Copy of the item with every probe option's latent score s replaced by
// 6 - s. Text, labels and decoys are untouched, so assembled prompt bytes
// are identical in both pole modes; the reversal lives in scoring only.
AuditItem reverse_poles(const AuditItem& item);

// Builds the masked prompt: pinned instruction header, vignette with each
// "{{blank_id}}" replaced by "[BLANK_<id>]", and per-blank option listings in
// the order given by permute_options. In probe_only mode decoy host
// sentences are deleted and only the probe options are listed.
AssembledPrompt assemble_prompt(const AuditItem& item,
                                const std::string& global_seed,
                                DecoyMode decoy_mode, PoleMode pole_mode);

// The fixed, version-pinned instruction header (first two prompt lines).
extern const char* const kPromptHeaderLine1;
extern const char* const kPromptHeaderLine2;

}  // namespace audit
