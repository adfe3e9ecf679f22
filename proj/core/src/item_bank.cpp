#include "audit/item_bank.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>

#include "json.hpp"

#include "audit/errors.hpp"
#include "audit/sha256.hpp"

namespace audit {

namespace {

using nlohmann::json;

bool valid_id(std::string_view s) {
  if (s.empty()) {
    return false;
  }
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  });
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return out;
}

const json& require(const json& node, const char* key, const char* context) {
  auto it = node.find(key);
  if (it == node.end()) {
    throw SchemaError(std::string(context) + ": missing key '" + key + "'");
  }
  return *it;
}

ProbeOption parse_option(const json& node, const std::string& context) {
  if (!node.is_object()) {
    throw SchemaError(context + ": option must be an object");
  }
  ProbeOption opt;
  const json& label = require(node, "label", context.c_str());
  if (!label.is_string() || label.get<std::string>().size() != 1) {
    throw SchemaError(context + ": label must be a single letter");
  }
  opt.label = label.get<std::string>()[0];
  const json& text = require(node, "text", context.c_str());
  if (!text.is_string()) {
    throw SchemaError(context + ": text must be a string");
  }
  opt.text = text.get<std::string>();
  const json& score = require(node, "latent_score", context.c_str());
  if (!score.is_number_integer()) {
    throw SchemaError(context + ": latent_score must be an integer");
  }
  opt.latent_score = score.get<int>();
  return opt;
}

json option_to_json(const ProbeOption& opt) {
  return json{{"label", std::string(1, opt.label)},
              {"text", opt.text},
              {"latent_score", opt.latent_score}};
}

json blank_to_json(const Blank& blank) {
  json options = json::array();
  for (const auto& opt : blank.options) {
    options.push_back(option_to_json(opt));
  }
  return json{{"blank_id", blank.blank_id},
              {"kind", to_string(blank.kind)},
              {"options", std::move(options)}};
}

json item_to_json(const AuditItem& item) {
  json blanks = json::array();
  for (const auto& blank : item.blanks) {
    blanks.push_back(blank_to_json(blank));
  }
  json j{{"item_id", item.item_id},
         {"dimension", item.dimension},
         {"vignette", item.vignette},
         {"blanks", std::move(blanks)}};
  json scores = json::array();
  for (double s : item.judge_scores) {
    scores.push_back(s);
  }
  j["judge_scores"] = std::move(scores);
  return j;
}

json bank_to_content_json(const ItemBank& bank) {
  json dims = json::array();
  for (const auto& d : bank.dimensions) {
    dims.push_back(json{{"name", d.name}, {"polarity", to_string(d.polarity)}});
  }
  json items = json::array();
  for (const auto& item : bank.items) {
    items.push_back(item_to_json(item));
  }
  return json{{"schema_version", bank.schema_version},
              {"dimensions", std::move(dims)},
              {"items", std::move(items)}};
}

// Positions of every "{{...}}" token, in text order.
struct PlaceholderHit {
  std::string id;
  std::size_t pos;
  std::size_t len;
};

std::vector<PlaceholderHit> find_placeholders(std::string_view vignette) {
  std::vector<PlaceholderHit> hits;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = vignette.find("{{", pos);
    if (open == std::string_view::npos) {
      break;
    }
    const std::size_t close = vignette.find("}}", open + 2);
    if (close == std::string_view::npos) {
      break;
    }
    hits.push_back(PlaceholderHit{
        std::string(vignette.substr(open + 2, close - open - 2)), open,
        close + 2 - open});
    pos = close + 2;
  }
  return hits;
}

void validate_item(const AuditItem& item) {
  const std::string id = item.item_id;
  if (!valid_id(id)) {
    throw ValidationError("item '" + id +
                          "': item_id must match [a-z0-9_-]+ and be non-empty");
  }
  int probe_count = 0;
  std::set<std::string> blank_ids;
  for (const auto& blank : item.blanks) {
    if (!valid_id(blank.blank_id)) {
      throw ValidationError("item '" + id + "': blank_id '" + blank.blank_id +
                            "' must match [a-z0-9_-]+");
    }
    if (!blank_ids.insert(blank.blank_id).second) {
      throw ValidationError("item '" + id + "': duplicate blank_id '" +
                            blank.blank_id + "'");
    }
    if (blank.kind == BlankKind::probe) {
      ++probe_count;
    }
    if (blank.options.size() != 5) {
      throw ValidationError("item '" + id + "' blank '" + blank.blank_id +
                            "': exactly 5 options required");
    }
    std::set<char> labels;
    std::set<int> scores;
    for (const auto& opt : blank.options) {
      if (opt.label < 'A' || opt.label > 'E') {
        throw ValidationError("item '" + id + "' blank '" + blank.blank_id +
                              "': labels must be A..E");
      }
      labels.insert(opt.label);
      if (opt.text.empty()) {
        throw ValidationError("item '" + id + "' blank '" + blank.blank_id +
                              "': option text must be non-empty");
      }
      scores.insert(opt.latent_score);
    }
    if (labels.size() != 5) {
      throw ValidationError("item '" + id + "' blank '" + blank.blank_id +
                            "': labels A..E must each appear exactly once");
    }
    if (scores != std::set<int>{1, 2, 3, 4, 5}) {
      throw ValidationError(
          "item '" + id + "' blank '" + blank.blank_id +
          "': latent scores must be a bijection onto {1,2,3,4,5}");
    }
  }
  if (probe_count != 1) {
    throw ValidationError("item '" + id + "': exactly one probe blank " +
                          "required, found " + std::to_string(probe_count));
  }

  // Every blank has its "{{id}}" token exactly once, and no stray tokens.
  const auto hits = find_placeholders(item.vignette);
  std::set<std::string> seen;
  for (const auto& hit : hits) {
    if (blank_ids.count(hit.id) == 0) {
      throw ValidationError("item '" + id + "': vignette placeholder '{{" +
                            hit.id + "}}' matches no blank");
    }
    if (!seen.insert(hit.id).second) {
      throw ValidationError("item '" + id + "': placeholder '{{" + hit.id +
                            "}}' appears more than once");
    }
  }
  for (const auto& bid : blank_ids) {
    if (seen.count(bid) == 0) {
      throw ValidationError("item '" + id + "': vignette lacks placeholder '{{" +
                            bid + "}}'");
    }
  }

  // Decoy host sentences must be self-contained: deleting them in probe-only
  // mode must not take another blank's placeholder with them.
  const auto spans = sentence_spans(item.vignette);
  for (const auto& blank : item.blanks) {
    if (blank.kind != BlankKind::decoy) {
      continue;
    }
    const std::string token = placeholder_token(blank.blank_id);
    const std::size_t pos = item.vignette.find(token);
    for (const auto& [begin, end] : spans) {
      if (pos < begin || pos >= end) {
        continue;
      }
      for (const auto& hit : hits) {
        if (hit.id != blank.blank_id && hit.pos >= begin && hit.pos < end) {
          throw ValidationError(
              "item '" + id + "': decoy blank '" + blank.blank_id +
              "' shares a sentence with placeholder '{{" + hit.id +
              "}}'; decoy host sentences must be self-contained");
        }
      }
    }
  }

  for (double s : item.judge_scores) {
    if (!(s >= 1.0 && s <= 5.0)) {
      throw ValidationError("item '" + id +
                            "': judge scores must lie in [1, 5]");
    }
  }
}

void validate_bank(const ItemBank& bank) {
  if (bank.schema_version != 1) {
    throw SchemaError("unsupported schema_version " +
                      std::to_string(bank.schema_version));
  }
  std::set<std::string> dim_names;
  for (const auto& d : bank.dimensions) {
    if (d.name.empty()) {
      throw ValidationError("dimension names must be non-empty");
    }
    if (!dim_names.insert(d.name).second) {
      throw ValidationError("duplicate dimension '" + d.name + "'");
    }
  }
  std::set<std::string> ids;
  for (const auto& item : bank.items) {
    if (!ids.insert(item.item_id).second) {
      throw ValidationError("duplicate item_id '" + item.item_id + "'");
    }
    if (dim_names.count(item.dimension) == 0) {
      throw ValidationError("item '" + item.item_id + "': dimension '" +
                            item.dimension + "' not in dimension registry");
    }
    validate_item(item);
  }
}

}  // namespace

std::string to_string(BlankKind kind) {
  return kind == BlankKind::probe ? "probe" : "decoy";
}

BlankKind blank_kind_from_string(std::string_view s) {
  if (s == "probe") {
    return BlankKind::probe;
  }
  if (s == "decoy") {
    return BlankKind::decoy;
  }
  throw SchemaError("unknown blank kind '" + std::string(s) + "'");
}

std::string to_string(Polarity polarity) {
  return polarity == Polarity::higher_is_worse ? "higher_is_worse"
                                               : "higher_is_better";
}

Polarity polarity_from_string(std::string_view s) {
  if (s == "higher_is_worse") {
    return Polarity::higher_is_worse;
  }
  if (s == "higher_is_better") {
    return Polarity::higher_is_better;
  }
  throw SchemaError("unknown polarity '" + std::string(s) + "'");
}

const Blank& AuditItem::probe_blank() const {
  for (const auto& blank : blanks) {
    if (blank.kind == BlankKind::probe) {
      return blank;
    }
  }
  throw ValidationError("item '" + item_id + "' has no probe blank");
}

const AuditItem& ItemBank::item(std::string_view item_id) const {
  for (const auto& it : items) {
    if (it.item_id == item_id) {
      return it;
    }
  }
  throw Error("unknown item_id '" + std::string(item_id) + "'");
}

std::optional<Polarity> ItemBank::polarity_of(std::string_view dimension) const {
  for (const auto& d : dimensions) {
    if (d.name == dimension) {
      return d.polarity;
    }
  }
  return std::nullopt;
}

ItemBank load_item_bank(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("item bank is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw SchemaError("item bank document must be a JSON object");
  }

  ItemBank bank;
  const json& version = require(doc, "schema_version", "item bank");
  if (!version.is_number_integer()) {
    throw SchemaError("schema_version must be an integer");
  }
  bank.schema_version = version.get<int>();

  const json& dims = require(doc, "dimensions", "item bank");
  if (!dims.is_array()) {
    throw SchemaError("dimensions must be an array");
  }
  for (const auto& d : dims) {
    DimensionInfo info;
    if (d.is_string()) {
      info.name = d.get<std::string>();
    } else if (d.is_object()) {
      info.name = require(d, "name", "dimension").get<std::string>();
      if (d.contains("polarity")) {
        info.polarity =
            polarity_from_string(d.at("polarity").get<std::string>());
      }
    } else {
      throw SchemaError("dimension entries must be strings or objects");
    }
    bank.dimensions.push_back(std::move(info));
  }

  const json& items = require(doc, "items", "item bank");
  if (!items.is_array()) {
    throw SchemaError("items must be an array");
  }
  for (const auto& j : items) {
    if (!j.is_object()) {
      throw SchemaError("item entries must be objects");
    }
    AuditItem item;
    item.item_id = require(j, "item_id", "item").get<std::string>();
    const std::string ctx = "item '" + item.item_id + "'";
    item.dimension = require(j, "dimension", ctx.c_str()).get<std::string>();
    item.vignette = require(j, "vignette", ctx.c_str()).get<std::string>();
    const json& blanks = require(j, "blanks", ctx.c_str());
    if (!blanks.is_array()) {
      throw SchemaError(ctx + ": blanks must be an array");
    }
    for (const auto& b : blanks) {
      Blank blank;
      blank.blank_id = require(b, "blank_id", ctx.c_str()).get<std::string>();
      blank.kind = blank_kind_from_string(
          require(b, "kind", ctx.c_str()).get<std::string>());
      const json& options = require(b, "options", ctx.c_str());
      if (!options.is_array()) {
        throw SchemaError(ctx + ": options must be an array");
      }
      for (const auto& o : options) {
        blank.options.push_back(
            parse_option(o, ctx + " blank '" + blank.blank_id + "'"));
      }
      item.blanks.push_back(std::move(blank));
    }
    if (j.contains("judge_scores")) {
      const json& scores = j.at("judge_scores");
      if (!scores.is_array()) {
        throw SchemaError(ctx + ": judge_scores must be an array");
      }
      for (const auto& s : scores) {
        if (!s.is_number()) {
          throw SchemaError(ctx + ": judge scores must be numbers");
        }
        item.judge_scores.push_back(s.get<double>());
      }
    }
    bank.items.push_back(std::move(item));
  }

  std::sort(bank.dimensions.begin(), bank.dimensions.end(),
            [](const DimensionInfo& a, const DimensionInfo& b) {
              return a.name < b.name;
            });
  validate_bank(bank);

  const json& digest = require(doc, "content_digest", "item bank");
  if (!digest.is_string()) {
    throw SchemaError("content_digest must be a string");
  }
  bank.content_digest = digest.get<std::string>();
  const std::string recomputed =
      Sha256::hex(canonical_item_bank_content(bank));
  if (bank.content_digest != recomputed) {
    throw DigestMismatch(bank.content_digest, recomputed);
  }
  return bank;
}

void finalize_item_bank(ItemBank& bank) {
  std::sort(bank.dimensions.begin(), bank.dimensions.end(),
            [](const DimensionInfo& a, const DimensionInfo& b) {
              return a.name < b.name;
            });
  validate_bank(bank);
  bank.content_digest = Sha256::hex(canonical_item_bank_content(bank));
}

std::string canonical_item_bank_content(const ItemBank& bank) {
  // nlohmann::json keeps object keys sorted, so dump() is canonical:
  // sorted keys, no insignificant whitespace, UTF-8, no line breaks.
  return bank_to_content_json(bank).dump();
}

std::string serialize_item_bank(const ItemBank& bank) {
  json doc = bank_to_content_json(bank);
  doc["content_digest"] = Sha256::hex(canonical_item_bank_content(bank));
  return doc.dump(2) + "\n";
}

ConstraintReport check_generation_constraints(
    const AuditItem& item, const std::vector<std::string>& dimension_vocab) {
  ConstraintReport report;
  report.item_id = item.item_id;

  std::vector<std::string> vocab;
  vocab.reserve(dimension_vocab.size());
  for (const auto& term : dimension_vocab) {
    if (!term.empty()) {
      vocab.push_back(lowercase(term));
    }
  }

  const auto scan = [&](std::string_view text, const std::string& where) {
    const std::string lower = lowercase(text);
    for (const auto& term : vocab) {
      if (lower.find(term) != std::string::npos) {
        report.term_violations.push_back(
            ConstraintFlag{where, "forbidden term '" + term + "'"});
      }
    }
  };

  scan(item.vignette, "vignette");
  for (const auto& blank : item.blanks) {
    std::size_t min_len = std::string::npos;
    std::size_t max_len = 0;
    for (const auto& opt : blank.options) {
      scan(opt.text, blank.blank_id + ":" + std::string(1, opt.label));
      min_len = std::min(min_len, opt.text.size());
      max_len = std::max(max_len, opt.text.size());
    }
    if (!blank.options.empty() && min_len > 0 &&
        double(max_len) / double(min_len) > kMaxOptionLengthRatio) {
      char buf[96];
      std::snprintf(buf, sizeof(buf),
                    "option length ratio %.2f exceeds %.1f (min %zu, max %zu)",
                    double(max_len) / double(min_len), kMaxOptionLengthRatio,
                    min_len, max_len);
      report.length_violations.push_back(ConstraintFlag{blank.blank_id, buf});
    }
  }
  return report;
}

GateDecision gate_by_judges(const AuditItem& item) {
  if (item.judge_scores.empty()) {
    throw MissingJudgeScores("item '" + item.item_id +
                             "' has no judge scores");
  }
  double sum = 0.0;
  for (double s : item.judge_scores) {
    sum += s;
  }
  const double mean = sum / double(item.judge_scores.size());
  return mean >= kJudgeGateThreshold ? GateDecision::accepted
                                     : GateDecision::rejected;
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  const auto is_terminator = [](char c) {
    return c == '.' || c == '!' || c == '?';
  };
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_terminator(text[i])) {
      while (i < text.size() && is_terminator(text[i])) {
        ++i;
      }
      if (i >= text.size() || is_space(text[i])) {
        while (i < text.size() && is_space(text[i])) {
          ++i;
        }
        spans.emplace_back(start, i);
        start = i;
        continue;
      }
    }
    ++i;
  }
  if (start < text.size()) {
    spans.emplace_back(start, text.size());
  }
  return spans;
}

std::string placeholder_token(std::string_view blank_id) {
  return "{{" + std::string(blank_id) + "}}";
}

}  // namespace audit
