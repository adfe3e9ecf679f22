// audit — masked forced-choice behavioral audit harness.
//
// Subcommands: run, simulate, analyze, compare, validate-bank.
// Exit codes: 0 ok, 1 usage, 2 validation, 3 transport-incomplete.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "audit/errors.hpp"
#include "audit/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitTransportIncomplete = 3;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw audit::Error("cannot read " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int cmd_run(const std::string& bank_path, const std::string& roster_path,
            const std::string& seed, const std::string& decoys,
            const std::string& poles, int replicates,
            const std::string& out_dir) {
  const audit::ItemBank bank = audit::load_item_bank(slurp(bank_path));
  const auto roster = audit::load_roster(slurp(roster_path));
  const audit::DecoyMode decoy_mode = decoys == "on"
                                          ? audit::DecoyMode::with_decoys
                                          : audit::DecoyMode::probe_only;
  const audit::PoleMode pole_mode = audit::pole_mode_from_string(poles);
  const audit::RunTotals totals = audit::run_audit(
      bank, roster, seed, decoy_mode, pole_mode, replicates, out_dir);
  std::cout << "dispatched " << totals.dispatched << ", ok " << totals.ok
            << ", failed " << totals.failed << ", skipped " << totals.skipped
            << "\n";
  return totals.failed > 0 ? kExitTransportIncomplete : kExitOk;
}

int cmd_simulate(const std::string& spec_path, const std::string& out_dir) {
  const audit::SimRunConfig config = audit::load_sim_spec_file(spec_path);
  const audit::RunManifest manifest = audit::simulate_run(config, out_dir);
  std::cout << "simulated run " << manifest.run_id << " -> " << out_dir
            << "\n";
  return kExitOk;
}

int cmd_analyze(const std::string& run_dir) {
  const audit::RunAnalysis analysis = audit::analyze(run_dir);
  std::cout << "analyzed " << analysis.manifest.run_id << ": "
            << analysis.matrix.observations.size() << " observations, "
            << analysis.matrix.exclusions.size() << " exclusions, "
            << analysis.reports.size() << " dimensions\n";
  for (const auto& skipped : analysis.empty_dimensions) {
    std::cout << "dimension '" << skipped << "' skipped: no observations\n";
  }
  return kExitOk;
}

int cmd_compare(const std::string& mode, const std::string& dir_a,
                const std::string& dir_b, const std::string& out_file) {
  audit::ComparisonReport report;
  if (mode == "poles") {
    report = audit::pole_reversal_check(dir_a, dir_b);
  } else {
    report = audit::decoy_impact(dir_a, dir_b);
  }
  const std::string rendered = audit::comparison_to_json(report);
  if (out_file.empty()) {
    std::cout << rendered;
  } else {
    std::ofstream out(out_file, std::ios::binary);
    out << rendered;
    std::cout << "wrote " << out_file << "\n";
  }
  return kExitOk;
}

int cmd_validate_bank(const std::string& bank_path, bool print_digest,
                      const std::string& vocab_path) {
  std::string bytes;
  try {
    bytes = slurp(bank_path);
  } catch (const audit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  audit::ItemBank bank;
  try {
    bank = audit::load_item_bank(bytes);
  } catch (const audit::DigestMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (print_digest) {
      std::cout << e.recomputed() << "\n";
    }
    return kExitValidation;
  }
  if (print_digest) {
    std::cout << bank.content_digest << "\n";
    return kExitOk;
  }

  std::vector<std::string> vocab;
  for (const auto& dim : bank.dimensions) {
    vocab.push_back(dim.name);
    // Dimension tags usually join words with underscores; forbid the
    // spaced form too.
    std::string spaced = dim.name;
    for (char& c : spaced) {
      if (c == '_') {
        c = ' ';
      }
    }
    if (spaced != dim.name) {
      vocab.push_back(spaced);
    }
  }
  if (!vocab_path.empty()) {
    std::istringstream lines(slurp(vocab_path));
    std::string term;
    while (std::getline(lines, term)) {
      if (!term.empty() && term.back() == '\r') {
        term.pop_back();
      }
      if (!term.empty()) {
        vocab.push_back(term);
      }
    }
  }

  int flagged = 0;
  int rejected = 0;
  int unscored = 0;
  for (const auto& item : bank.items) {
    const audit::ConstraintReport report =
        audit::check_generation_constraints(item, vocab);
    for (const auto& v : report.term_violations) {
      std::cout << item.item_id << " [" << v.where << "] " << v.detail
                << "\n";
      ++flagged;
    }
    for (const auto& v : report.length_violations) {
      std::cout << item.item_id << " [" << v.where << "] " << v.detail
                << "\n";
      ++flagged;
    }
    if (item.judge_scores.empty()) {
      std::cout << item.item_id << " ungated: no judge scores\n";
      ++unscored;
    } else if (audit::gate_by_judges(item) == audit::GateDecision::rejected) {
      std::cout << item.item_id << " rejected by judge gate (mean < 4.0)\n";
      ++rejected;
    }
  }
  std::cout << "bank ok: " << bank.items.size() << " items, "
            << bank.dimensions.size() << " dimensions, digest "
            << bank.content_digest << "\n";
  if (flagged > 0) {
    std::cout << flagged << " constraint flag(s) (report-only)\n";
  }
  if (rejected > 0 || unscored > 0) {
    std::cout << rejected << " item(s) below the judge gate, " << unscored
              << " without judge scores\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked forced-choice behavioral audit harness"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Dispatch a live audit run");
  std::string bank_path, roster_path, seed, out_dir;
  std::string decoys = "on", poles = "normal";
  int replicates = 1;
  run->add_option("--bank", bank_path, "Item bank JSON file")->required();
  run->add_option("--roster", roster_path, "Provider roster JSON file")
      ->required();
  run->add_option("--seed", seed, "Global seed string")->required();
  run->add_option("--decoys", decoys, "Decoy mode")
      ->check(CLI::IsMember({"on", "off"}));
  run->add_option("--poles", poles, "Pole mode")
      ->check(CLI::IsMember({"normal", "reversed"}));
  run->add_option("--replicates", replicates, "Replicates per (model, item)")
      ->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Run directory")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a synthetic audit");
  std::string spec_path, sim_out;
  simulate->add_option("--spec", spec_path, "Simulation spec JSON file")
      ->required();
  simulate->add_option("--out", sim_out, "Run directory")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Analyze a run directory");
  std::string analyze_dir;
  analyze->add_option("dir", analyze_dir, "Run directory")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "Compare two runs");
  std::string compare_mode, dir_a, dir_b, compare_out;
  compare->add_option("--mode", compare_mode, "poles or decoys")
      ->required()
      ->check(CLI::IsMember({"poles", "decoys"}));
  compare->add_option("dirA", dir_a, "First run directory")->required();
  compare->add_option("dirB", dir_b, "Second run directory")->required();
  compare->add_option("--out", compare_out, "Write JSON here instead of stdout");

  // validate-bank
  auto* validate = app.add_subcommand("validate-bank", "Validate an item bank");
  std::string validate_path, vocab_path;
  bool print_digest = false;
  validate->add_option("file", validate_path, "Item bank JSON file")
      ->required();
  validate->add_flag("--print-digest", print_digest,
                     "Print the recomputed content digest and exit");
  validate->add_option("--vocab", vocab_path,
                       "Extra forbidden terms, one per line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (run->parsed()) {
      return cmd_run(bank_path, roster_path, seed, decoys, poles, replicates,
                     out_dir);
    }
    if (simulate->parsed()) {
      return cmd_simulate(spec_path, sim_out);
    }
    if (analyze->parsed()) {
      return cmd_analyze(analyze_dir);
    }
    if (compare->parsed()) {
      return cmd_compare(compare_mode, dir_a, dir_b, compare_out);
    }
    if (validate->parsed()) {
      return cmd_validate_bank(validate_path, print_digest, vocab_path);
    }
  } catch (const audit::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const audit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
