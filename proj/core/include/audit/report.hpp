#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "audit/assembly.hpp"
#include "audit/item_bank.hpp"
#include "audit/providers.hpp"
#include "audit/scoring.hpp"
#include "audit/simulate.hpp"
#include "audit/stats.hpp"

namespace audit {

// The unit of reproducibility: immutable once written, referenced by every
// downstream artifact in the run directory.
struct RunManifest {
  std::string run_id;
  std::string mode;  // "live" or "simulated"
  std::string global_seed;
  DecoyMode decoy_mode = DecoyMode::with_decoys;
  PoleMode pole_mode = PoleMode::normal;
  std::string item_bank_digest;
  int replicates = 1;
  std::vector<ProviderConfig> roster;
  std::string created_at;
  std::optional<SimulationSpec> simulation;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(std::string_view bytes);
RunManifest read_manifest(const std::filesystem::path& run_dir);

// Simulation run inputs: the generative spec plus the run condition and an
// optional bank file (synthetic bank when absent).
struct SimRunConfig {
  SimulationSpec simulation;
  std::string global_seed = "0";
  DecoyMode decoy_mode = DecoyMode::with_decoys;
  PoleMode pole_mode = PoleMode::normal;
  std::optional<std::filesystem::path> bank_path;
};

SimRunConfig load_sim_spec_file(const std::filesystem::path& path);

// Fully deterministic synthetic run: writes manifest.json, bank.json,
// permutations.jsonl and responses.jsonl under out_dir. Byte-identical for
// identical inputs. Returns the manifest.
RunManifest simulate_run(const SimRunConfig& config,
                         const std::filesystem::path& out_dir);

struct RunTotals {
  int dispatched = 0;
  int ok = 0;
  int failed = 0;
  int skipped = 0;  // already in the response log (idempotent resume)
};

// Live run against the roster: assembles every prompt, persists permutation
// and response logs, skips (model, item, replicate) triples already logged.
// Per-record transport errors are recorded, not thrown.
RunTotals run_audit(const ItemBank& bank,
                    const std::vector<ProviderConfig>& roster,
                    const std::string& global_seed, DecoyMode decoy_mode,
                    PoleMode pole_mode, int replicates,
                    const std::filesystem::path& out_dir);

struct ProviderSummary {
  std::string provider;
  double mean = 0.0;
  int count = 0;
  double completion_rate = 1.0;
};

struct DimensionReport {
  std::string dimension;
  int n_observations = 0;
  std::vector<ProviderSummary> providers;
  std::optional<VarianceComponents> variance;
  std::optional<TestResult> lrt;
  std::optional<TestResult> kw;
  std::optional<TestResult> fr;
  std::optional<PairwiseMatrix> pairwise;
  std::map<std::string, std::string> not_applicable;  // analysis -> reason
  std::map<std::string, int> exclusion_counts;
};

struct RunAnalysis {
  RunManifest manifest;
  ItemBank bank;
  ScoreMatrix matrix;
  std::vector<DimensionReport> reports;
  std::vector<std::string> empty_dimensions;
};

// Rebuilds prompts from the stored bank and manifest, scores the response
// log, and runs the per-dimension battery. Pure read.
RunAnalysis analyze_run(const std::filesystem::path& run_dir);

// analyze_run plus rendered outputs: scores.csv, exclusions.csv,
// analysis/<dimension>.json, analysis/table1.csv, analysis/table2.csv and
// report.md, all under the run directory. Deterministic byte-for-byte.
RunAnalysis analyze(const std::filesystem::path& run_dir);

// ---------------------------------------------------------------------------
// Run comparisons (the two validity studies)
// ---------------------------------------------------------------------------

struct PoleProviderDelta {
  std::string provider;
  double mean_normal = 0.0;
  double mean_reversed = 0.0;
  double reflection_deviation = 0.0;  // |mean_reversed - (6 - mean_normal)|
};

struct PoleDimensionComparison {
  std::string dimension;
  std::vector<PoleProviderDelta> providers;
  double spearman_rank_correlation = 0.0;  // expected -1 directionally
  double icc_normal = 0.0;
  double icc_reversed = 0.0;
  double icc_abs_delta = 0.0;
};

struct DecoyProviderDelta {
  std::string provider;
  double mean_with = 0.0;
  double mean_without = 0.0;
};

struct DecoyDimensionComparison {
  std::string dimension;
  double h_with = 0.0;
  double h_without = 0.0;
  int significant_pairs_with = 0;
  int significant_pairs_without = 0;
  double icc_with = 0.0;
  double icc_without = 0.0;
  std::vector<DecoyProviderDelta> providers;
};

inline constexpr double kStabilityThreshold = 0.15;

struct ModelStability {
  std::string provider;
  std::string model;
  std::string dimension;
  double mean_with = 0.0;
  double mean_without = 0.0;
  double delta = 0.0;  // without - with
  std::string classification;  // static | improved | declined
};

struct ComparisonReport {
  std::string mode;  // "poles" or "decoys"
  std::string run_normal_or_with;
  std::string run_reversed_or_without;
  std::vector<PoleDimensionComparison> pole_dimensions;
  std::vector<DecoyDimensionComparison> decoy_dimensions;
  std::vector<ModelStability> stability;
};

// Both runs must share bank digest, seed and decoy mode, with pole modes
// differing; throws MismatchedRuns otherwise.
ComparisonReport pole_reversal_check(const std::filesystem::path& run_a,
                                     const std::filesystem::path& run_b);

// Both runs must share bank digest, seed and pole mode, with decoy modes
// differing; throws MismatchedRuns otherwise.
ComparisonReport decoy_impact(const std::filesystem::path& run_a,
                              const std::filesystem::path& run_b);

std::string comparison_to_json(const ComparisonReport& report);

// "<1e-15" below the display floor, shortest round-trip otherwise.
std::string format_p_value(double p);

}  // namespace audit
