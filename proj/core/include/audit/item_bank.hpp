#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace audit {

struct ProbeOption {
  char label = 'A';  // 'A'..'E'
  std::string text;
  int latent_score = 0;  // 1..5; the five scores of a blank are a bijection
};

enum class BlankKind { probe, decoy };

std::string to_string(BlankKind kind);
BlankKind blank_kind_from_string(std::string_view s);

struct Blank {
  std::string blank_id;
  BlankKind kind = BlankKind::probe;
  std::vector<ProbeOption> options;  // exactly 5, labels A..E each once
};

struct AuditItem {
  std::string item_id;  // [a-z0-9_-]+, globally unique
  std::string dimension;
  std::string vignette;  // placeholders "{{blank_id}}", one per blank
  std::vector<Blank> blanks;
  std::vector<double> judge_scores;  // optional; empty means unscored

  const Blank& probe_blank() const;
};

// Whether a larger observed score means more of the audited bias or less;
// drives the improved/declined side of stability classifications.
enum class Polarity { higher_is_worse, higher_is_better };

std::string to_string(Polarity polarity);
Polarity polarity_from_string(std::string_view s);

struct DimensionInfo {
  std::string name;
  Polarity polarity = Polarity::higher_is_worse;
};

struct ItemBank {
  int schema_version = 1;
  std::vector<DimensionInfo> dimensions;  // sorted by name after load
  std::vector<AuditItem> items;
  std::string content_digest;  // SHA-256 hex of the canonical serialization

  const AuditItem& item(std::string_view item_id) const;
  std::optional<Polarity> polarity_of(std::string_view dimension) const;
};

// Parses, validates and digest-checks an item-bank JSON document.
// Throws SchemaError / ValidationError / DigestMismatch.
ItemBank load_item_bank(std::string_view bytes);

// Validates an in-memory bank and recomputes its digest in place.
void finalize_item_bank(ItemBank& bank);

// Canonical content form: compact JSON, sorted keys, LF, UTF-8, digest field
// excluded. The content digest is SHA-256 over exactly these bytes.
std::string canonical_item_bank_content(const ItemBank& bank);

// Pretty-printed document including content_digest; loading it back yields
// an identical digest.
std::string serialize_item_bank(const ItemBank& bank);

struct ConstraintFlag {
  std::string where;  // "vignette" or "<blank_id>:<label>" or "<blank_id>"
  std::string detail;
};

struct ConstraintReport {
  std::string item_id;
  std::vector<ConstraintFlag> term_violations;
  std::vector<ConstraintFlag> length_violations;

  bool clean() const {
    return term_violations.empty() && length_violations.empty();
  }
};

// Report-only checks mirroring the generation constraints: forbidden terms
// (case-insensitive substring) and option-length dissimilarity
// (max/min character length ratio > kMaxOptionLengthRatio).
inline constexpr double kMaxOptionLengthRatio = 2.0;

ConstraintReport check_generation_constraints(
    const AuditItem& item, const std::vector<std::string>& dimension_vocab);

enum class GateDecision { accepted, rejected };

// accepted iff mean(judge_scores) >= 4.0. Throws MissingJudgeScores when the
// item has no scores.
GateDecision gate_by_judges(const AuditItem& item);

inline constexpr double kJudgeGateThreshold = 4.0;

// Half-open byte spans of the vignette's sentences. A sentence ends at one or
// more of '.', '!', '?' followed by whitespace or end of text; each span
// includes its terminator and trailing whitespace. Shared by bank validation
// and probe-only prompt assembly so both agree on what gets deleted.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    std::string_view text);

std::string placeholder_token(std::string_view blank_id);

}  // namespace audit
