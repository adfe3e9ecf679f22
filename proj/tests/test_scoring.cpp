#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "audit/errors.hpp"
#include "audit/permutation.hpp"
#include "audit/report.hpp"
#include "audit/scoring.hpp"
#include "audit/simulate.hpp"
#include "support/fixtures.hpp"

using namespace audit;

namespace {

AssembledPrompt probe_prompt(const AuditItem& item, const std::string& seed,
                             PoleMode pole = PoleMode::normal) {
  return assemble_prompt(item, seed, DecoyMode::with_decoys, pole);
}

}  // namespace

TEST_CASE("parse_response handles the exact and tolerant forms") {
  const AuditItem item = fixtures::tiny_item();
  const AssembledPrompt p = probe_prompt(item, "parse");

  {
    const ParseOutcome out = parse_response("BLANK_p1: C\nBLANK_d1: A",
                                            p.answer_key);
    CHECK(out.failures.empty());
    REQUIRE(out.selection_for("p1") != nullptr);
    CHECK(out.selection_for("p1")->presented_label == 'C');
    CHECK(out.selection_for("d1")->presented_label == 'A');
  }
  {
    // Case-insensitive, punctuation-wrapped, padded.
    const ParseOutcome out =
        parse_response("  blank_p1:  (c) \n Blank_D1 : e.", p.answer_key);
    REQUIRE(out.selection_for("p1") != nullptr);
    CHECK(out.selection_for("p1")->presented_label == 'C');
    CHECK(out.selection_for("d1")->presented_label == 'E');
  }
}

TEST_CASE("parse_response failure reasons") {
  const AuditItem item = fixtures::tiny_item();
  const AssembledPrompt p = probe_prompt(item, "parse2");

  {
    const ParseOutcome out =
        parse_response("BLANK_p1: C\nBLANK_p1: D", p.answer_key);
    REQUIRE(out.failure_for("p1") != nullptr);
    CHECK(out.failure_for("p1")->reason == ParseFailureReason::ambiguous);
  }
  {
    // Repeating the same answer is not a conflict.
    const ParseOutcome out =
        parse_response("BLANK_p1: C\nBLANK_p1: C\nBLANK_d1: B", p.answer_key);
    CHECK(out.failure_for("p1") == nullptr);
    CHECK(out.selection_for("p1")->presented_label == 'C');
  }
  {
    const ParseOutcome out = parse_response("BLANK_p1: F", p.answer_key);
    REQUIRE(out.failure_for("p1") != nullptr);
    CHECK(out.failure_for("p1")->reason == ParseFailureReason::invalid_letter);
  }
  {
    const ParseOutcome out = parse_response("no answers here", p.answer_key);
    REQUIRE(out.failure_for("p1") != nullptr);
    CHECK(out.failure_for("p1")->reason == ParseFailureReason::missing);
    CHECK(out.failure_for("d1")->reason == ParseFailureReason::missing);
  }
  {
    // Prose around an answer line does not count as an answer.
    const ParseOutcome out = parse_response(
        "I think BLANK_p1: C is the best choice overall", p.answer_key);
    CHECK(out.failure_for("p1") != nullptr);
  }
}

TEST_CASE("score_probe composes the stored maps") {
  const AuditItem item = fixtures::tiny_item();
  const AssembledPrompt p = probe_prompt(item, "score-seed");
  // Find where original option #4 (latent score 5) was presented.
  char label_of_best = 0;
  for (const auto& [label, original] : p.answer_key.at("p1")) {
    if (original == 4) {
      label_of_best = label;
    }
  }
  REQUIRE(label_of_best != 0);
  CHECK(score_probe(ParsedSelection{"p1", label_of_best}, p, item) == 5);

  // Same selection under reversed poles scores 6 - 5.
  const AssembledPrompt reversed =
      probe_prompt(item, "score-seed", PoleMode::reversed);
  CHECK(score_probe(ParsedSelection{"p1", label_of_best}, reversed, item) ==
        1);
}

TEST_CASE("score_probe equals direct lookup for random permutations") {
  const AuditItem item = fixtures::tiny_item();
  RandomnessStream picker("score-prop", "seed", "t");
  for (int t = 0; t < 100; ++t) {
    const AssembledPrompt p = probe_prompt(item, "sp-" + std::to_string(t));
    const char label = char('A' + picker.next_below(5));
    const int via_op = score_probe(ParsedSelection{"p1", label}, p, item);
    // Brute-force oracle: locate the presented text in the unpermuted item.
    const int original = p.answer_key.at("p1").at(label);
    const int expected =
        item.blanks[0].options[std::size_t(original)].latent_score;
    CHECK(via_op == expected);
  }
}

TEST_CASE("score_probe rejects unknown labels and foreign blanks") {
  const AuditItem item = fixtures::tiny_item();
  const AssembledPrompt p = probe_prompt(item, "reject");
  CHECK_THROWS_AS(score_probe(ParsedSelection{"p1", 'Z'}, p, item),
                  KeyMismatch);
  CHECK_THROWS_AS(score_probe(ParsedSelection{"d1", 'A'}, p, item), Error);
}

TEST_CASE("build_score_matrix conserves records") {
  const AuditItem item = fixtures::tiny_item();
  ItemBank bank;
  bank.dimensions.push_back(
      DimensionInfo{"dim_a", Polarity::higher_is_worse});
  bank.items.push_back(item);
  finalize_item_bank(bank);

  const AssembledPrompt p = probe_prompt(item, "bsm");
  std::map<std::string, AssembledPrompt> prompts{{p.hash.hex, p}};

  std::vector<ResponseRecord> records;
  const auto make_record = [&](const std::string& raw,
                               TransportStatus status) {
    ResponseRecord r;
    r.run_id = "r";
    r.provider_name = "prov";
    r.model_name = "model";
    r.item_id = item.item_id;
    r.replicate = int(records.size());
    r.prompt_hash = p.hash.hex;
    r.raw_text = raw;
    r.transport_status = status;
    records.push_back(r);
  };

  for (int i = 0; i < 7; ++i) {
    make_record("BLANK_p1: A\nBLANK_d1: B", TransportStatus::ok);
  }
  make_record("", TransportStatus::timeout);
  make_record("", TransportStatus::timeout);
  make_record("BLANK_p1: C\nBLANK_p1: D", TransportStatus::ok);  // ambiguous

  const ScoreMatrix matrix = build_score_matrix(records, prompts, bank);
  CHECK(matrix.observations.size() == 7);
  CHECK(matrix.exclusions.size() == 3);
  CHECK(matrix.observations.size() + matrix.exclusions.size() ==
        records.size());
  int timeouts = 0, ambiguous = 0;
  for (const auto& ex : matrix.exclusions) {
    if (ex.reason == "transport_timeout") {
      ++timeouts;
    }
    if (ex.reason == "parse_ambiguous") {
      ++ambiguous;
    }
  }
  CHECK(timeouts == 2);
  CHECK(ambiguous == 1);
  for (const auto& obs : matrix.observations) {
    CHECK(obs.dimension == "dim_a");
    CHECK(obs.completion_rate == 1.0);
  }

  ResponseRecord stray = records.front();
  stray.prompt_hash = std::string(64, 'f');
  records.push_back(stray);
  CHECK_THROWS_AS(build_score_matrix(records, prompts, bank),
                  UnknownPromptHash);
}

TEST_CASE("decoy answers are logged but never scored") {
  const AuditItem item = fixtures::tiny_item();
  ItemBank bank;
  bank.dimensions.push_back(DimensionInfo{"dim_a", Polarity::higher_is_worse});
  bank.items.push_back(item);
  finalize_item_bank(bank);
  const AssembledPrompt p = probe_prompt(item, "decoy-log");
  std::map<std::string, AssembledPrompt> prompts{{p.hash.hex, p}};

  ResponseRecord r;
  r.run_id = "r";
  r.provider_name = "prov";
  r.model_name = "model";
  r.item_id = item.item_id;
  r.prompt_hash = p.hash.hex;
  r.raw_text = "BLANK_p1: B";  // decoy unanswered
  r.transport_status = TransportStatus::ok;

  const ScoreMatrix matrix = build_score_matrix({&r, 1}, prompts, bank);
  REQUIRE(matrix.observations.size() == 1);
  CHECK(matrix.observations[0].completion_rate == doctest::Approx(0.5));
}

TEST_CASE("csv export shapes") {
  ScoreMatrix matrix;
  matrix.observations.push_back(ScoredObservation{
      "run", "prov", "model", "item-1", "dim_a", 0, 4, PoleMode::normal,
      DecoyMode::with_decoys, 1.0});
  matrix.exclusions.push_back(
      Exclusion{"run", "prov", "model", "item-2", 1, "transport_timeout"});
  const std::string scores = scores_csv(matrix);
  CHECK(scores.rfind("run_id,provider,model,item_id,dimension,score,"
                     "pole_mode,decoy_mode\n",
                     0) == 0);
  CHECK(scores.find("run,prov,model,item-1,dim_a,4,normal,with_decoys\n") !=
        std::string::npos);
  const std::string exclusions = exclusions_csv(matrix);
  CHECK(exclusions.find("run,prov,model,item-2,1,transport_timeout\n") !=
        std::string::npos);
}

TEST_CASE("simulated provider means match the clamped-Gaussian expectation") {
  // Independent oracle: E[clamp(round(theta + e), 1, 5)] for e ~ N(0, sd^2)
  // in closed form through the normal CDF, averaged over the run's cells.
  SimulationSpec spec;
  spec.mu = 2.4;
  spec.sigma2_provider = 0.2;
  spec.sigma2_item = 0.25;
  spec.sigma2_residual = 0.5;
  spec.n_providers = 3;
  spec.n_models_per_provider = 1;
  spec.n_items = 6;
  spec.n_replicates = 400;
  spec.sim_seed = "analytic-mean";

  const auto normal_cdf = [](double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
  };
  const double sd = std::sqrt(spec.sigma2_residual);
  const auto cell_mean = [&](double theta) {
    double mean = 0.0;
    for (int s = 1; s <= 5; ++s) {
      const double lo =
          s == 1 ? 0.0 : normal_cdf((double(s) - 0.5 - theta) / sd);
      const double hi =
          s == 5 ? 1.0 : normal_cdf((double(s) + 0.5 - theta) / sd);
      mean += double(s) * (hi - lo);
    }
    return mean;
  };

  for (int p = 0; p < spec.n_providers; ++p) {
    double expected = 0.0;
    double observed = 0.0;
    int count = 0;
    for (int i = 0; i < spec.n_items; ++i) {
      const double theta = spec.mu + simulated_provider_effect(spec, p) +
                           simulated_item_effect(spec, i);
      expected += spec.n_replicates * cell_mean(theta);
      for (int r = 0; r < spec.n_replicates; ++r) {
        observed +=
            simulated_score(spec, p, 0, i, r, DecoyMode::probe_only);
        ++count;
      }
    }
    expected /= count;
    observed /= count;
    // Residual averaging SE is about 0.75 / sqrt(2400) ~ 0.015.
    CHECK(std::fabs(observed - expected) < 0.06);
  }
}

TEST_CASE("permutation invariance: content-keyed responder, two seeds") {
  // Different global seeds permute the presentation, but a responder that
  // selects by option content yields the identical score matrix.
  fixtures::TempDir dir_a("audit-perminv-a");
  fixtures::TempDir dir_b("audit-perminv-b");
  SimRunConfig config;
  config.simulation = simulation_spec_from_json(R"({
    "mu": 2.8, "sigma2_provider": 0.2, "sigma2_item": 0.3,
    "sigma2_residual": 0.4, "n_providers": 3, "n_models_per_provider": 1,
    "n_items": 6, "n_replicates": 2, "decoy_noise_sd": 0.0,
    "sim_seed": "perm-inv"})");
  config.global_seed = "seed-A";
  simulate_run(config, dir_a.path());
  config.global_seed = "seed-B";
  simulate_run(config, dir_b.path());

  const RunAnalysis a = analyze_run(dir_a.path());
  const RunAnalysis b = analyze_run(dir_b.path());
  REQUIRE(a.matrix.observations.size() == b.matrix.observations.size());

  auto key_sorted = [](const ScoreMatrix& m) {
    std::vector<std::tuple<std::string, std::string, std::string, int, int>>
        rows;
    for (const auto& obs : m.observations) {
      rows.emplace_back(obs.provider, obs.model, obs.item_id, obs.replicate,
                        obs.score);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  CHECK(key_sorted(a.matrix) == key_sorted(b.matrix));
}

TEST_CASE("pole reversal at matrix level: reversed equals 6 - normal") {
  fixtures::TempDir dir_n("audit-pole-n");
  fixtures::TempDir dir_r("audit-pole-r");
  SimRunConfig config;
  config.simulation = simulation_spec_from_json(R"({
    "mu": 2.2, "sigma2_provider": 0.15, "sigma2_item": 0.25,
    "sigma2_residual": 0.5, "n_providers": 3, "n_models_per_provider": 2,
    "n_items": 5, "n_replicates": 2, "decoy_noise_sd": 0.0,
    "sim_seed": "pole-matrix"})");
  config.global_seed = "shared-seed";
  config.pole_mode = PoleMode::normal;
  simulate_run(config, dir_n.path());
  config.pole_mode = PoleMode::reversed;
  simulate_run(config, dir_r.path());

  const RunAnalysis normal = analyze_run(dir_n.path());
  const RunAnalysis reversed = analyze_run(dir_r.path());
  REQUIRE(normal.matrix.observations.size() ==
          reversed.matrix.observations.size());

  std::map<std::tuple<std::string, std::string, std::string, int>, int>
      normal_scores;
  for (const auto& obs : normal.matrix.observations) {
    normal_scores[{obs.provider, obs.model, obs.item_id, obs.replicate}] =
        obs.score;
  }
  for (const auto& obs : reversed.matrix.observations) {
    CHECK(obs.score ==
          6 - normal_scores.at({obs.provider, obs.model, obs.item_id,
                                obs.replicate}));
  }
}
