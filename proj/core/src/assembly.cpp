#include "audit/assembly.hpp"

#include <algorithm>

#include "audit/errors.hpp"

namespace audit {

const char* const kPromptHeaderLine1 =
    "Read the passage and choose the best completion for each blank.";
const char* const kPromptHeaderLine2 =
    "Answer with one line per blank, formatted exactly as 'BLANK_<id>: "
    "<LETTER>'.";

std::string to_string(DecoyMode mode) {
  return mode == DecoyMode::with_decoys ? "with_decoys" : "probe_only";
}

std::string to_string(PoleMode mode) {
  return mode == PoleMode::normal ? "normal" : "reversed";
}

DecoyMode decoy_mode_from_string(std::string_view s) {
  if (s == "with_decoys") {
    return DecoyMode::with_decoys;
  }
  if (s == "probe_only") {
    return DecoyMode::probe_only;
  }
  throw SchemaError("unknown decoy mode '" + std::string(s) + "'");
}

PoleMode pole_mode_from_string(std::string_view s) {
  if (s == "normal") {
    return PoleMode::normal;
  }
  if (s == "reversed") {
    return PoleMode::reversed;
  }
  throw SchemaError("unknown pole mode '" + std::string(s) + "'");
}

std::vector<PermutationRecord> AssembledPrompt::permutation_records(
    const std::string& global_seed) const {
  std::vector<PermutationRecord> records;
  records.reserve(answer_key.size());
  for (const auto& [blank_id, labels] : answer_key) {
    PermutationRecord rec;
    rec.item_id = item_id;
    rec.blank_id = blank_id;
    rec.global_seed = global_seed;
    rec.order.resize(labels.size());
    for (const auto& [label, original_index] : labels) {
      rec.order[static_cast<std::size_t>(label - 'A')] = original_index;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

AuditItem reverse_poles(const AuditItem& item) {
  AuditItem out = item;
  for (auto& blank : out.blanks) {
    if (blank.kind != BlankKind::probe) {
      continue;
    }
    for (auto& opt : blank.options) {
      opt.latent_score = 6 - opt.latent_score;
    }
  }
  return out;
}

namespace {

// Removes every sentence hosting a decoy placeholder. Bank validation
// guarantees those sentences contain no other placeholder.
std::string drop_decoy_sentences(const AuditItem& item) {
  std::vector<std::string> decoy_tokens;
  for (const auto& blank : item.blanks) {
    if (blank.kind == BlankKind::decoy) {
      decoy_tokens.push_back(placeholder_token(blank.blank_id));
    }
  }
  if (decoy_tokens.empty()) {
    return item.vignette;
  }
  std::string out;
  for (const auto& [begin, end] : sentence_spans(item.vignette)) {
    const std::string_view sentence =
        std::string_view(item.vignette).substr(begin, end - begin);
    const bool hosts_decoy =
        std::any_of(decoy_tokens.begin(), decoy_tokens.end(),
                    [&](const std::string& token) {
                      return sentence.find(token) != std::string_view::npos;
                    });
    if (!hosts_decoy) {
      out.append(sentence);
    }
  }
  while (!out.empty() && (out.back() == ' ' || out.back() == '\t' ||
                          out.back() == '\n' || out.back() == '\r')) {
    out.pop_back();
  }
  return out;
}

std::string replace_once(std::string text, const std::string& token,
                         const std::string& replacement,
                         const std::string& item_id) {
  const std::size_t pos = text.find(token);
  if (pos == std::string::npos) {
    throw MissingPlaceholder("item '" + item_id + "': vignette lacks token '" +
                             token + "'");
  }
  text.replace(pos, token.size(), replacement);
  return text;
}

}  // namespace

AssembledPrompt assemble_prompt(const AuditItem& item,
                                const std::string& global_seed,
                                DecoyMode decoy_mode, PoleMode pole_mode) {
  AssembledPrompt prompt;
  prompt.item_id = item.item_id;
  prompt.decoy_mode = decoy_mode;
  prompt.pole_mode = pole_mode;

  std::vector<const Blank*> presented;
  for (const auto& blank : item.blanks) {
    if (blank.kind == BlankKind::probe) {
      prompt.probe_blank_id = blank.blank_id;
    }
    if (decoy_mode == DecoyMode::with_decoys ||
        blank.kind == BlankKind::probe) {
      presented.push_back(&blank);
    }
  }
  if (prompt.probe_blank_id.empty()) {
    throw ValidationError("item '" + item.item_id + "' has no probe blank");
  }

  std::string vignette = decoy_mode == DecoyMode::probe_only
                             ? drop_decoy_sentences(item)
                             : item.vignette;
  for (const Blank* blank : presented) {
    vignette = replace_once(std::move(vignette),
                            placeholder_token(blank->blank_id),
                            "[BLANK_" + blank->blank_id + "]", item.item_id);
  }

  std::string text;
  text += kPromptHeaderLine1;
  text += '\n';
  text += kPromptHeaderLine2;
  text += "\n\n";
  text += vignette;
  for (const Blank* blank : presented) {
    const std::vector<int> order =
        permute_options(global_seed, item.item_id, blank->blank_id,
                        static_cast<int>(blank->options.size()));
    text += "\n\nOptions for BLANK_" + blank->blank_id + ":";
    std::map<char, int> key;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const char label = static_cast<char>('A' + pos);
      const auto original_index = static_cast<std::size_t>(order[pos]);
      text += '\n';
      text += label;
      text += ") ";
      text += blank->options[original_index].text;
      key[label] = order[pos];
    }
    prompt.answer_key[blank->blank_id] = std::move(key);
  }

  prompt.prompt_text = std::move(text);
  prompt.hash = prompt_hash(prompt.prompt_text);
  return prompt;
}

}  // namespace audit
