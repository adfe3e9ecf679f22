#include "audit/scoring.hpp"

#include <algorithm>
#include <cctype>

#include "audit/errors.hpp"

namespace audit {

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return out;
}

struct AnswerLine {
  std::string blank_id;  // lowercased
  char letter = 0;       // uppercased
};

bool is_punct_wrap(char c) {
  return c == '(' || c == ')' || c == '[' || c == ']' || c == '{' ||
         c == '}' || c == '.' || c == ',' || c == ';' || c == '!' ||
         c == '\'' || c == '"' || c == '*' || c == '`';
}

// One line: [ws] BLANK_<id> [ws] : [ws] [punct] letter [punct] [ws]
bool parse_line(std::string_view line, AnswerLine& out) {
  std::size_t i = 0;
  const auto skip_ws = [&] {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' ||
                               line[i] == '\r')) {
      ++i;
    }
  };
  skip_ws();
  static constexpr std::string_view kPrefix = "blank_";
  if (line.size() - i < kPrefix.size()) {
    return false;
  }
  for (std::size_t k = 0; k < kPrefix.size(); ++k) {
    if (char(std::tolower(static_cast<unsigned char>(line[i + k]))) !=
        kPrefix[k]) {
      return false;
    }
  }
  i += kPrefix.size();
  std::string id;
  while (i < line.size()) {
    const char c = line[i];
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
      id.push_back(char(std::tolower(static_cast<unsigned char>(c))));
      ++i;
    } else {
      break;
    }
  }
  if (id.empty()) {
    return false;
  }
  skip_ws();
  if (i >= line.size() || line[i] != ':') {
    return false;
  }
  ++i;
  skip_ws();
  while (i < line.size() && is_punct_wrap(line[i])) {
    ++i;
  }
  skip_ws();
  if (i >= line.size() || !std::isalpha(static_cast<unsigned char>(line[i]))) {
    return false;
  }
  const char letter = char(std::toupper(static_cast<unsigned char>(line[i])));
  ++i;
  skip_ws();
  while (i < line.size() &&
         (is_punct_wrap(line[i]) || line[i] == ' ' || line[i] == '\t' ||
          line[i] == '\r')) {
    ++i;
  }
  if (i != line.size()) {
    return false;  // trailing prose; not an answer line
  }
  out.blank_id = std::move(id);
  out.letter = letter;
  return true;
}

}  // namespace

std::string to_string(ParseFailureReason reason) {
  switch (reason) {
    case ParseFailureReason::missing:
      return "missing";
    case ParseFailureReason::ambiguous:
      return "ambiguous";
    case ParseFailureReason::invalid_letter:
      return "invalid_letter";
  }
  return "unknown";
}

const ParsedSelection* ParseOutcome::selection_for(
    std::string_view blank_id) const {
  for (const auto& sel : selections) {
    if (sel.blank_id == blank_id) {
      return &sel;
    }
  }
  return nullptr;
}

const ParseFailure* ParseOutcome::failure_for(std::string_view blank_id) const {
  for (const auto& failure : failures) {
    if (failure.blank_id == blank_id) {
      return &failure;
    }
  }
  return nullptr;
}

ParseOutcome parse_response(const std::string& raw_text, const AnswerKey& key) {
  // Answers collected per known blank; lookup is case-insensitive on the id.
  std::map<std::string, const std::map<char, int>*> known;
  std::map<std::string, std::string> canonical;  // lowercase -> stored id
  for (const auto& [blank_id, labels] : key) {
    known[lowercase(blank_id)] = &labels;
    canonical[lowercase(blank_id)] = blank_id;
  }

  std::map<std::string, std::vector<char>> answers;
  std::size_t start = 0;
  while (start <= raw_text.size()) {
    std::size_t end = raw_text.find('\n', start);
    if (end == std::string::npos) {
      end = raw_text.size();
    }
    const std::string_view line =
        std::string_view(raw_text).substr(start, end - start);
    AnswerLine parsed;
    if (parse_line(line, parsed) && known.count(parsed.blank_id) > 0) {
      answers[parsed.blank_id].push_back(parsed.letter);
    }
    if (end == raw_text.size()) {
      break;
    }
    start = end + 1;
  }

  ParseOutcome outcome;
  for (const auto& [blank_id, labels] : key) {
    const std::string lower = lowercase(blank_id);
    const auto it = answers.find(lower);
    if (it == answers.end() || it->second.empty()) {
      outcome.failures.push_back(
          ParseFailure{blank_id, ParseFailureReason::missing});
      continue;
    }
    const std::vector<char>& letters = it->second;
    const bool any_invalid =
        std::any_of(letters.begin(), letters.end(),
                    [&](char l) { return labels.count(l) == 0; });
    if (any_invalid) {
      outcome.failures.push_back(
          ParseFailure{blank_id, ParseFailureReason::invalid_letter});
      continue;
    }
    const bool conflicting =
        std::any_of(letters.begin(), letters.end(),
                    [&](char l) { return l != letters.front(); });
    if (conflicting) {
      outcome.failures.push_back(
          ParseFailure{blank_id, ParseFailureReason::ambiguous});
      continue;
    }
    outcome.selections.push_back(ParsedSelection{blank_id, letters.front()});
  }
  return outcome;
}

int score_probe(const ParsedSelection& selection, const AssembledPrompt& prompt,
                const AuditItem& item) {
  if (selection.blank_id != prompt.probe_blank_id) {
    throw Error("score_probe called for non-probe blank '" +
                selection.blank_id + "'");
  }
  const auto key_it = prompt.answer_key.find(selection.blank_id);
  if (key_it == prompt.answer_key.end()) {
    throw KeyMismatch("blank '" + selection.blank_id +
                      "' absent from answer key");
  }
  const auto label_it = key_it->second.find(selection.presented_label);
  if (label_it == key_it->second.end()) {
    throw KeyMismatch("label '" + std::string(1, selection.presented_label) +
                      "' absent from answer key of blank '" +
                      selection.blank_id + "'");
  }
  const Blank& probe = item.probe_blank();
  const int original_index = label_it->second;
  if (original_index < 0 ||
      original_index >= int(probe.options.size())) {
    throw KeyMismatch("answer key points past the option list of item '" +
                      item.item_id + "'");
  }
  const int score =
      probe.options[std::size_t(original_index)].latent_score;
  return prompt.pole_mode == PoleMode::reversed ? 6 - score : score;
}

ScoreMatrix build_score_matrix(
    std::span<const ResponseRecord> records,
    const std::map<std::string, AssembledPrompt>& prompts_by_hash,
    const ItemBank& bank) {
  ScoreMatrix matrix;
  for (const auto& record : records) {
    const auto prompt_it = prompts_by_hash.find(record.prompt_hash);
    if (prompt_it == prompts_by_hash.end()) {
      throw UnknownPromptHash("response record for item '" + record.item_id +
                              "' references unknown prompt hash " +
                              record.prompt_hash);
    }
    const AssembledPrompt& prompt = prompt_it->second;
    const AuditItem& item = bank.item(prompt.item_id);

    Exclusion exclusion{record.run_id, record.provider_name,
                        record.model_name, record.item_id, record.replicate,
                        ""};
    if (record.transport_status != TransportStatus::ok) {
      exclusion.reason = "transport_" + to_string(record.transport_status);
      matrix.exclusions.push_back(std::move(exclusion));
      continue;
    }

    const ParseOutcome outcome = parse_response(record.raw_text,
                                                prompt.answer_key);
    const ParsedSelection* probe_sel =
        outcome.selection_for(prompt.probe_blank_id);
    if (probe_sel == nullptr) {
      const ParseFailure* failure =
          outcome.failure_for(prompt.probe_blank_id);
      exclusion.reason =
          "parse_" +
          to_string(failure != nullptr ? failure->reason
                                       : ParseFailureReason::missing);
      matrix.exclusions.push_back(std::move(exclusion));
      continue;
    }

    ScoredObservation obs;
    obs.run_id = record.run_id;
    obs.provider = record.provider_name;
    obs.model = record.model_name;
    obs.item_id = record.item_id;
    obs.dimension = item.dimension;
    obs.replicate = record.replicate;
    obs.score = score_probe(*probe_sel, prompt, item);
    obs.pole_mode = prompt.pole_mode;
    obs.decoy_mode = prompt.decoy_mode;
    obs.completion_rate = prompt.answer_key.empty()
                              ? 1.0
                              : double(outcome.selections.size()) /
                                    double(prompt.answer_key.size());
    matrix.observations.push_back(std::move(obs));
  }
  return matrix;
}

namespace {

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) {
    return value;
  }
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') {
      quoted += "\"\"";
    } else {
      quoted += c;
    }
  }
  quoted += '"';
  return quoted;
}

}  // namespace

std::string scores_csv(const ScoreMatrix& matrix) {
  std::string out =
      "run_id,provider,model,item_id,dimension,score,pole_mode,decoy_mode\n";
  for (const auto& obs : matrix.observations) {
    out += csv_field(obs.run_id) + "," + csv_field(obs.provider) + "," +
           csv_field(obs.model) + "," + csv_field(obs.item_id) + "," +
           csv_field(obs.dimension) + "," + std::to_string(obs.score) + "," +
           to_string(obs.pole_mode) + "," + to_string(obs.decoy_mode) + "\n";
  }
  return out;
}

std::string exclusions_csv(const ScoreMatrix& matrix) {
  std::string out = "run_id,provider,model,item_id,replicate,reason\n";
  for (const auto& ex : matrix.exclusions) {
    out += csv_field(ex.run_id) + "," + csv_field(ex.provider) + "," +
           csv_field(ex.model) + "," + csv_field(ex.item_id) + "," +
           std::to_string(ex.replicate) + "," + csv_field(ex.reason) + "\n";
  }
  return out;
}

}  // namespace audit
