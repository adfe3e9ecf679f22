#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "audit/assembly.hpp"
#include "audit/item_bank.hpp"
#include "audit/providers.hpp"

namespace audit {

struct ParsedSelection {
  std::string blank_id;
  char presented_label = 'A';
};

enum class ParseFailureReason { missing, ambiguous, invalid_letter };

std::string to_string(ParseFailureReason reason);

struct ParseFailure {
  std::string blank_id;
  ParseFailureReason reason = ParseFailureReason::missing;
};

struct ParseOutcome {
  std::vector<ParsedSelection> selections;
  std::vector<ParseFailure> failures;

  const ParsedSelection* selection_for(std::string_view blank_id) const;
  const ParseFailure* failure_for(std::string_view blank_id) const;
};

// Scans response lines for "BLANK_<id>: <LETTER>" case-insensitively,
// tolerating surrounding whitespace and punctuation around the letter.
// Every blank in the answer key gets either a selection or a failure;
// conflicting repeated answers are ambiguous, letters outside the presented
// set are invalid_letter.
ParseOutcome parse_response(const std::string& raw_text, const AnswerKey& key);

// Latent score of the selected probe option under the prompt's pole mode.
// `item` is the bank item as stored (normal-pole scores); reversed mode
// applies s -> 6 - s here, never in the prompt.
int score_probe(const ParsedSelection& selection, const AssembledPrompt& prompt,
                const AuditItem& item);

struct ScoredObservation {
  std::string run_id;
  std::string provider;
  std::string model;
  std::string item_id;
  std::string dimension;
  int replicate = 0;
  int score = 0;  // 1..5
  PoleMode pole_mode = PoleMode::normal;
  DecoyMode decoy_mode = DecoyMode::with_decoys;
  double completion_rate = 1.0;  // answered blanks / presented blanks
};

struct Exclusion {
  std::string run_id;
  std::string provider;
  std::string model;
  std::string item_id;
  int replicate = 0;
  std::string reason;
};

struct ScoreMatrix {
  std::vector<ScoredObservation> observations;
  std::vector<Exclusion> exclusions;
};

// Joins response records to their assembled prompts and bank items. Parse
// and transport failures go to the exclusion ledger; everything else is
// scored. Throws UnknownPromptHash if a record references an unknown prompt.
ScoreMatrix build_score_matrix(
    std::span<const ResponseRecord> records,
    const std::map<std::string, AssembledPrompt>& prompts_by_hash,
    const ItemBank& bank);

std::string scores_csv(const ScoreMatrix& matrix);
std::string exclusions_csv(const ScoreMatrix& matrix);

}  // namespace audit
