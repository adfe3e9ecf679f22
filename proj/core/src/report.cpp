#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "audit/errors.hpp"
#include "audit/report.hpp"
#include "run_io.hpp"

namespace audit {

namespace {

using nlohmann::json;

constexpr double kAlpha = 0.05;
constexpr double kDisplayFloor = 1e-15;

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

json test_result_to_json(const TestResult& t) {
  return json{{"statistic", t.statistic},
              {"p_value", t.p_value},
              {"df", t.df},
              {"method", t.method}};
}

json variance_to_json(const VarianceComponents& vc) {
  return json{{"sigma2_provider", vc.sigma2_provider},
              {"sigma2_item", vc.sigma2_item},
              {"sigma2_residual", vc.sigma2_residual},
              {"mu_hat", vc.mu_hat},
              {"icc", vc.icc},
              {"converged", vc.converged},
              {"n_iterations", vc.n_iterations}};
}

struct GroupedScores {
  std::vector<std::string> providers;              // sorted
  std::vector<std::vector<double>> groups;         // aligned with providers
  std::vector<MixedObservation> mixed;             // for the variance fit
};

GroupedScores group_by_provider(
    const std::vector<const ScoredObservation*>& rows) {
  GroupedScores out;
  std::set<std::string> names;
  for (const auto* obs : rows) {
    names.insert(obs->provider);
  }
  out.providers.assign(names.begin(), names.end());
  out.groups.resize(out.providers.size());
  for (const auto& provider : out.providers) {
    auto& group = out.groups[std::size_t(
        std::lower_bound(out.providers.begin(), out.providers.end(),
                         provider) -
        out.providers.begin())];
    for (const auto* obs : rows) {
      if (obs->provider == provider) {
        group.push_back(double(obs->score));
      }
    }
  }
  out.mixed.reserve(rows.size());
  for (const auto* obs : rows) {
    out.mixed.push_back(
        MixedObservation{obs->provider, obs->item_id, double(obs->score)});
  }
  return out;
}

// Friedman blocks: items as blocks, providers as treatments, per-cell means
// over models and replicates; only items covering every provider count.
std::vector<std::vector<double>> friedman_blocks(
    const std::vector<const ScoredObservation*>& rows,
    const std::vector<std::string>& providers) {
  std::map<std::string, std::map<std::string, std::pair<double, int>>> cells;
  for (const auto* obs : rows) {
    auto& cell = cells[obs->item_id][obs->provider];
    cell.first += double(obs->score);
    cell.second += 1;
  }
  std::vector<std::vector<double>> blocks;
  for (const auto& [item_id, per_provider] : cells) {
    if (per_provider.size() != providers.size()) {
      continue;
    }
    std::vector<double> row;
    row.reserve(providers.size());
    for (const auto& provider : providers) {
      const auto& cell = per_provider.at(provider);
      row.push_back(cell.first / double(cell.second));
    }
    blocks.push_back(std::move(row));
  }
  return blocks;
}

DimensionReport analyze_dimension(
    const std::string& dimension,
    const std::vector<const ScoredObservation*>& rows) {
  DimensionReport report;
  report.dimension = dimension;
  report.n_observations = int(rows.size());

  const GroupedScores grouped = group_by_provider(rows);
  for (std::size_t g = 0; g < grouped.providers.size(); ++g) {
    ProviderSummary summary;
    summary.provider = grouped.providers[g];
    summary.count = int(grouped.groups[g].size());
    double sum = 0.0;
    for (double v : grouped.groups[g]) {
      sum += v;
    }
    summary.mean = sum / double(summary.count);
    double completion = 0.0;
    int completion_n = 0;
    for (const auto* obs : rows) {
      if (obs->provider == summary.provider) {
        completion += obs->completion_rate;
        ++completion_n;
      }
    }
    summary.completion_rate = completion / double(completion_n);
    report.providers.push_back(std::move(summary));
  }

  const bool multi_provider = grouped.providers.size() >= 2;

  try {
    if (multi_provider) {
      report.variance = fit_mixedlm(grouped.mixed);
    } else {
      report.variance = fit_item_only(grouped.mixed);
      report.not_applicable["lrt_provider"] = "single provider";
    }
  } catch (const Error& e) {
    report.not_applicable["variance_components"] = e.what();
  }

  if (multi_provider) {
    try {
      report.lrt = lrt_provider(grouped.mixed);
    } catch (const Error& e) {
      report.not_applicable["lrt_provider"] = e.what();
    }
    try {
      report.kw = kruskal_wallis(grouped.groups);
    } catch (const Error& e) {
      report.not_applicable["kruskal_wallis"] = e.what();
    }
    try {
      report.pairwise = pairwise_dunn(grouped.groups, grouped.providers,
                                      kAlpha);
    } catch (const Error& e) {
      report.not_applicable["pairwise_dunn"] = e.what();
    }
    try {
      const auto blocks = friedman_blocks(rows, grouped.providers);
      report.fr = friedman(blocks);
    } catch (const Error& e) {
      report.not_applicable["friedman"] = e.what();
    }
  } else {
    report.not_applicable["kruskal_wallis"] = "single provider";
    report.not_applicable["friedman"] = "single provider";
    report.not_applicable["pairwise_dunn"] = "single provider";
  }
  return report;
}

json dimension_report_to_json(const DimensionReport& report) {
  json providers = json::array();
  for (const auto& p : report.providers) {
    providers.push_back(json{{"provider", p.provider},
                             {"mean", p.mean},
                             {"count", p.count},
                             {"completion_rate", p.completion_rate}});
  }
  json doc{{"dimension", report.dimension},
           {"n_observations", report.n_observations},
           {"providers", std::move(providers)}};
  doc["variance_components"] =
      report.variance ? variance_to_json(*report.variance) : json(nullptr);
  doc["icc"] = report.variance ? json(report.variance->icc) : json(nullptr);
  doc["lrt"] = report.lrt ? test_result_to_json(*report.lrt) : json(nullptr);
  doc["kruskal_wallis"] =
      report.kw ? test_result_to_json(*report.kw) : json(nullptr);
  doc["friedman"] = report.fr ? test_result_to_json(*report.fr) : json(nullptr);
  if (report.pairwise) {
    json pairs = json::array();
    for (const auto& pair : report.pairwise->pairs) {
      pairs.push_back(json{{"provider_a", pair.group_a},
                           {"provider_b", pair.group_b},
                           {"z", pair.z},
                           {"p_raw", pair.p_raw},
                           {"p_adjusted", pair.p_adjusted},
                           {"significant", pair.significant}});
    }
    doc["pairwise"] = json{{"alpha", report.pairwise->alpha},
                           {"pairs", std::move(pairs)}};
  } else {
    doc["pairwise"] = json(nullptr);
  }
  doc["not_applicable"] = report.not_applicable;
  doc["exclusions"] = report.exclusion_counts;
  return doc;
}

std::string significance_label(const DimensionReport& report) {
  std::vector<double> ps;
  if (report.kw) {
    ps.push_back(report.kw->p_value);
  }
  if (report.fr) {
    ps.push_back(report.fr->p_value);
  }
  if (ps.empty()) {
    return "n/a";
  }
  const double worst = *std::max_element(ps.begin(), ps.end());
  if (worst < 1e-5) {
    return "Highly Significant";
  }
  if (worst < kAlpha) {
    return "Significant";
  }
  return "Not Significant";
}

std::string table1_csv(const std::vector<DimensionReport>& reports) {
  std::string out =
      "dimension,sigma2_provider,sigma2_item,sigma2_residual,icc,"
      "provider_effect_p,significant\n";
  for (const auto& r : reports) {
    out += r.dimension + ",";
    if (r.variance) {
      out += fmt("%.9g", r.variance->sigma2_provider) + "," +
             fmt("%.9g", r.variance->sigma2_item) + "," +
             fmt("%.9g", r.variance->sigma2_residual) + "," +
             fmt("%.9g", r.variance->icc) + ",";
    } else {
      out += ",,,,";
    }
    if (r.lrt) {
      out += format_p_value(r.lrt->p_value) + "," +
             (r.lrt->p_value < kAlpha ? "yes" : "no");
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

std::string table2_csv(const std::vector<DimensionReport>& reports) {
  std::string out = "dimension,kruskal_wallis_p,friedman_p,result\n";
  for (const auto& r : reports) {
    out += r.dimension + ",";
    out += (r.kw ? format_p_value(r.kw->p_value) : std::string{}) + ",";
    out += (r.fr ? format_p_value(r.fr->p_value) : std::string{}) + ",";
    out += significance_label(r) + "\n";
  }
  return out;
}

std::string markdown_report(const RunAnalysis& analysis) {
  const RunManifest& m = analysis.manifest;
  std::ostringstream md;
  md << "# Audit report\n\n";
  md << "- run_id: " << m.run_id << "\n";
  md << "- mode: " << m.mode << "\n";
  md << "- global_seed: " << m.global_seed << "\n";
  md << "- decoy_mode: " << to_string(m.decoy_mode) << "\n";
  md << "- pole_mode: " << to_string(m.pole_mode) << "\n";
  md << "- item_bank_digest: " << m.item_bank_digest << "\n";
  md << "- replicates: " << m.replicates << "\n";
  md << "- observations: " << analysis.matrix.observations.size() << "\n";
  md << "- exclusions: " << analysis.matrix.exclusions.size() << "\n";

  for (const auto& r : analysis.reports) {
    md << "\n## " << r.dimension << "\n\n";
    md << "| provider | mean | n | completion |\n";
    md << "|---|---|---|---|\n";
    for (const auto& p : r.providers) {
      md << "| " << p.provider << " | " << fmt("%.4f", p.mean) << " | "
         << p.count << " | " << fmt("%.3f", p.completion_rate) << " |\n";
    }
    if (r.variance) {
      md << "\nVariance components: provider " << fmt("%.6f", r.variance->sigma2_provider)
         << ", item " << fmt("%.6f", r.variance->sigma2_item) << ", residual "
         << fmt("%.6f", r.variance->sigma2_residual) << ", ICC "
         << fmt("%.6f", r.variance->icc)
         << (r.variance->converged ? "" : " (not converged)") << "\n";
    }
    if (r.lrt) {
      md << "\nProvider effect LRT: D = " << fmt("%.6g", r.lrt->statistic)
         << ", p = " << format_p_value(r.lrt->p_value) << "\n";
    }
    if (r.kw) {
      md << "Kruskal-Wallis: H = " << fmt("%.6g", r.kw->statistic)
         << ", df = " << r.kw->df << ", p = " << format_p_value(r.kw->p_value)
         << "\n";
    }
    if (r.fr) {
      md << "Friedman: chi2 = " << fmt("%.6g", r.fr->statistic)
         << ", df = " << r.fr->df << ", p = " << format_p_value(r.fr->p_value)
         << "\n";
    }
    md << "Omnibus result: " << significance_label(r) << "\n";
    if (r.pairwise) {
      md << "\nSignificant pairwise differences (Holm, alpha "
         << fmt("%.2f", r.pairwise->alpha) << "): "
         << r.pairwise->significant_count() << "\n";
      for (const auto& pair : r.pairwise->pairs) {
        if (pair.significant) {
          md << "- " << pair.group_a << " vs " << pair.group_b
             << ": adjusted p = " << format_p_value(pair.p_adjusted) << "\n";
        }
      }
    }
    if (!r.exclusion_counts.empty()) {
      md << "\nExclusions:";
      for (const auto& [reason, count] : r.exclusion_counts) {
        md << " " << reason << "=" << count;
      }
      md << "\n";
    }
    for (const auto& [what, why] : r.not_applicable) {
      md << "\nNot applicable: " << what << " (" << why << ")\n";
    }
  }
  if (!analysis.empty_dimensions.empty()) {
    md << "\n## Skipped dimensions (no scored observations)\n\n";
    for (const auto& d : analysis.empty_dimensions) {
      md << "- " << d << "\n";
    }
  }
  return md.str();
}

struct MeanCell {
  long sum = 0;  // integer score sums stay exact
  int count = 0;

  double mean() const { return double(sum) / double(count); }
};

struct ProviderMeans {
  // dimension -> provider -> cell
  std::map<std::string, std::map<std::string, MeanCell>> by_provider;
  // dimension -> (provider, model) -> cell
  std::map<std::string,
           std::map<std::pair<std::string, std::string>, MeanCell>>
      by_model;
};

ProviderMeans collect_means(const ScoreMatrix& matrix) {
  ProviderMeans means;
  for (const auto& obs : matrix.observations) {
    auto& p = means.by_provider[obs.dimension][obs.provider];
    p.sum += obs.score;
    p.count += 1;
    auto& m = means.by_model[obs.dimension][{obs.provider, obs.model}];
    m.sum += obs.score;
    m.count += 1;
  }
  return means;
}

const DimensionReport* find_report(const RunAnalysis& analysis,
                                   const std::string& dimension) {
  for (const auto& r : analysis.reports) {
    if (r.dimension == dimension) {
      return &r;
    }
  }
  return nullptr;
}

}  // namespace

std::string format_p_value(double p) {
  if (p < kDisplayFloor) {
    return "<1e-15";
  }
  return fmt("%.6g", p);
}

RunAnalysis analyze_run(const std::filesystem::path& run_dir) {
  RunAnalysis analysis;
  analysis.manifest = read_manifest(run_dir);
  analysis.bank =
      load_item_bank(detail::read_text_file(run_dir / "bank.json"));
  if (analysis.bank.content_digest != analysis.manifest.item_bank_digest) {
    throw ValidationError(
        "bank.json digest disagrees with manifest.item_bank_digest in " +
        run_dir.string());
  }

  std::map<std::string, AssembledPrompt> prompts_by_hash;
  for (const auto& item : analysis.bank.items) {
    AssembledPrompt prompt =
        assemble_prompt(item, analysis.manifest.global_seed,
                        analysis.manifest.decoy_mode,
                        analysis.manifest.pole_mode);
    prompts_by_hash.emplace(prompt.hash.hex, std::move(prompt));
  }

  std::vector<ResponseRecord> records;
  for (const auto& line : detail::read_lines(run_dir / "responses.jsonl")) {
    records.push_back(response_record_from_json_line(line));
  }

  analysis.matrix =
      build_score_matrix(records, prompts_by_hash, analysis.bank);

  // Exclusion counts per dimension come from the item -> dimension map.
  std::map<std::string, std::map<std::string, int>> exclusions_by_dim;
  for (const auto& ex : analysis.matrix.exclusions) {
    exclusions_by_dim[analysis.bank.item(ex.item_id).dimension][ex.reason] +=
        1;
  }

  std::map<std::string, std::vector<const ScoredObservation*>> by_dimension;
  for (const auto& obs : analysis.matrix.observations) {
    by_dimension[obs.dimension].push_back(&obs);
  }

  for (const auto& dim : analysis.bank.dimensions) {
    const auto it = by_dimension.find(dim.name);
    if (it == by_dimension.end() || it->second.empty()) {
      analysis.empty_dimensions.push_back(dim.name);
      continue;
    }
    DimensionReport report = analyze_dimension(dim.name, it->second);
    const auto ex_it = exclusions_by_dim.find(dim.name);
    if (ex_it != exclusions_by_dim.end()) {
      report.exclusion_counts = ex_it->second;
    }
    analysis.reports.push_back(std::move(report));
  }
  return analysis;
}

RunAnalysis analyze(const std::filesystem::path& run_dir) {
  RunAnalysis analysis = analyze_run(run_dir);
  detail::write_text_file(run_dir / "scores.csv",
                          scores_csv(analysis.matrix));
  detail::write_text_file(run_dir / "exclusions.csv",
                          exclusions_csv(analysis.matrix));
  for (const auto& report : analysis.reports) {
    detail::write_text_file(
        run_dir / "analysis" / (report.dimension + ".json"),
        dimension_report_to_json(report).dump(2) + "\n");
  }
  detail::write_text_file(run_dir / "analysis" / "table1.csv",
                          table1_csv(analysis.reports));
  detail::write_text_file(run_dir / "analysis" / "table2.csv",
                          table2_csv(analysis.reports));
  detail::write_text_file(run_dir / "report.md", markdown_report(analysis));
  return analysis;
}

ComparisonReport pole_reversal_check(const std::filesystem::path& run_a,
                                     const std::filesystem::path& run_b) {
  RunAnalysis a = analyze_run(run_a);
  RunAnalysis b = analyze_run(run_b);
  if (a.manifest.item_bank_digest != b.manifest.item_bank_digest ||
      a.manifest.global_seed != b.manifest.global_seed ||
      a.manifest.decoy_mode != b.manifest.decoy_mode ||
      a.manifest.pole_mode == b.manifest.pole_mode) {
    throw MismatchedRuns(
        "pole comparison requires equal bank digest, seed and decoy mode "
        "with differing pole modes");
  }
  const RunAnalysis& normal =
      a.manifest.pole_mode == PoleMode::normal ? a : b;
  const RunAnalysis& reversed =
      a.manifest.pole_mode == PoleMode::normal ? b : a;

  const ProviderMeans means_n = collect_means(normal.matrix);
  const ProviderMeans means_r = collect_means(reversed.matrix);

  ComparisonReport report;
  report.mode = "poles";
  report.run_normal_or_with = normal.manifest.run_id;
  report.run_reversed_or_without = reversed.manifest.run_id;

  for (const auto& [dim, providers_n] : means_n.by_provider) {
    const auto dim_r = means_r.by_provider.find(dim);
    if (dim_r == means_r.by_provider.end()) {
      continue;
    }
    PoleDimensionComparison cmp;
    cmp.dimension = dim;
    std::vector<double> vec_n;
    std::vector<double> vec_r;
    for (const auto& [provider, cell_n] : providers_n) {
      const auto it = dim_r->second.find(provider);
      if (it == dim_r->second.end()) {
        continue;
      }
      const MeanCell& cell_r = it->second;
      PoleProviderDelta delta;
      delta.provider = provider;
      delta.mean_normal = cell_n.mean();
      delta.mean_reversed = cell_r.mean();
      if (cell_r.count == cell_n.count) {
        // |mean_r - (6 - mean_n)| == |sum_r + sum_n - 6n| / n, and the
        // right-hand side is exact integer arithmetic: a perfect
        // reflection reports exactly zero.
        delta.reflection_deviation =
            std::fabs(double(cell_r.sum + cell_n.sum -
                             6 * long(cell_n.count))) /
            double(cell_n.count);
      } else {
        delta.reflection_deviation =
            std::fabs(delta.mean_reversed - (6.0 - delta.mean_normal));
      }
      vec_n.push_back(delta.mean_normal);
      vec_r.push_back(delta.mean_reversed);
      cmp.providers.push_back(std::move(delta));
    }
    if (vec_n.size() >= 2) {
      cmp.spearman_rank_correlation = spearman(vec_n, vec_r);
    }
    const DimensionReport* rep_n = find_report(normal, dim);
    const DimensionReport* rep_r = find_report(reversed, dim);
    if (rep_n != nullptr && rep_r != nullptr && rep_n->variance &&
        rep_r->variance) {
      cmp.icc_normal = rep_n->variance->icc;
      cmp.icc_reversed = rep_r->variance->icc;
      cmp.icc_abs_delta = std::fabs(cmp.icc_normal - cmp.icc_reversed);
    }
    report.pole_dimensions.push_back(std::move(cmp));
  }
  return report;
}

ComparisonReport decoy_impact(const std::filesystem::path& run_a,
                              const std::filesystem::path& run_b) {
  RunAnalysis a = analyze_run(run_a);
  RunAnalysis b = analyze_run(run_b);
  if (a.manifest.item_bank_digest != b.manifest.item_bank_digest ||
      a.manifest.global_seed != b.manifest.global_seed ||
      a.manifest.pole_mode != b.manifest.pole_mode ||
      a.manifest.decoy_mode == b.manifest.decoy_mode) {
    throw MismatchedRuns(
        "decoy comparison requires equal bank digest, seed and pole mode "
        "with differing decoy modes");
  }
  const RunAnalysis& with =
      a.manifest.decoy_mode == DecoyMode::with_decoys ? a : b;
  const RunAnalysis& without =
      a.manifest.decoy_mode == DecoyMode::with_decoys ? b : a;

  const ProviderMeans means_w = collect_means(with.matrix);
  const ProviderMeans means_o = collect_means(without.matrix);

  ComparisonReport report;
  report.mode = "decoys";
  report.run_normal_or_with = with.manifest.run_id;
  report.run_reversed_or_without = without.manifest.run_id;

  for (const auto& rep_w : with.reports) {
    const DimensionReport* rep_o = find_report(without, rep_w.dimension);
    if (rep_o == nullptr) {
      continue;
    }
    DecoyDimensionComparison cmp;
    cmp.dimension = rep_w.dimension;
    cmp.h_with = rep_w.kw ? rep_w.kw->statistic : 0.0;
    cmp.h_without = rep_o->kw ? rep_o->kw->statistic : 0.0;
    cmp.significant_pairs_with =
        rep_w.pairwise ? rep_w.pairwise->significant_count() : 0;
    cmp.significant_pairs_without =
        rep_o->pairwise ? rep_o->pairwise->significant_count() : 0;
    cmp.icc_with = rep_w.variance ? rep_w.variance->icc : 0.0;
    cmp.icc_without = rep_o->variance ? rep_o->variance->icc : 0.0;
    const auto dim_w = means_w.by_provider.find(rep_w.dimension);
    const auto dim_o = means_o.by_provider.find(rep_w.dimension);
    if (dim_w != means_w.by_provider.end() &&
        dim_o != means_o.by_provider.end()) {
      for (const auto& [provider, cell_w] : dim_w->second) {
        const auto it = dim_o->second.find(provider);
        if (it != dim_o->second.end()) {
          cmp.providers.push_back(
              DecoyProviderDelta{provider, cell_w.mean(), it->second.mean()});
        }
      }
    }
    report.decoy_dimensions.push_back(std::move(cmp));
  }

  // Per-model stability classification against the dimension's polarity.
  for (const auto& [dim, models_w] : means_w.by_model) {
    const auto dim_o = means_o.by_model.find(dim);
    if (dim_o == means_o.by_model.end()) {
      continue;
    }
    const Polarity polarity =
        with.bank.polarity_of(dim).value_or(Polarity::higher_is_worse);
    for (const auto& [key, cell_w] : models_w) {
      const auto it = dim_o->second.find(key);
      if (it == dim_o->second.end()) {
        continue;
      }
      ModelStability stability;
      stability.provider = key.first;
      stability.model = key.second;
      stability.dimension = dim;
      stability.mean_with = cell_w.mean();
      stability.mean_without = it->second.mean();
      stability.delta = stability.mean_without - stability.mean_with;
      if (std::fabs(stability.delta) <= kStabilityThreshold) {
        stability.classification = "static";
      } else {
        const bool improved = polarity == Polarity::higher_is_worse
                                  ? stability.delta < 0.0
                                  : stability.delta > 0.0;
        stability.classification = improved ? "improved" : "declined";
      }
      report.stability.push_back(std::move(stability));
    }
  }
  return report;
}

std::string comparison_to_json(const ComparisonReport& report) {
  json doc{{"mode", report.mode}};
  if (report.mode == "poles") {
    doc["run_normal"] = report.run_normal_or_with;
    doc["run_reversed"] = report.run_reversed_or_without;
    json dims = json::array();
    for (const auto& cmp : report.pole_dimensions) {
      json providers = json::array();
      for (const auto& p : cmp.providers) {
        providers.push_back(
            json{{"provider", p.provider},
                 {"mean_normal", p.mean_normal},
                 {"mean_reversed", p.mean_reversed},
                 {"reflection_deviation", p.reflection_deviation}});
      }
      dims.push_back(json{
          {"dimension", cmp.dimension},
          {"providers", std::move(providers)},
          {"spearman_rank_correlation", cmp.spearman_rank_correlation},
          {"icc_normal", cmp.icc_normal},
          {"icc_reversed", cmp.icc_reversed},
          {"icc_abs_delta", cmp.icc_abs_delta}});
    }
    doc["dimensions"] = std::move(dims);
  } else {
    doc["run_with_decoys"] = report.run_normal_or_with;
    doc["run_without_decoys"] = report.run_reversed_or_without;
    json dims = json::array();
    for (const auto& cmp : report.decoy_dimensions) {
      json providers = json::array();
      for (const auto& p : cmp.providers) {
        providers.push_back(json{{"provider", p.provider},
                                 {"mean_with", p.mean_with},
                                 {"mean_without", p.mean_without},
                                 {"delta", p.mean_without - p.mean_with}});
      }
      dims.push_back(json{
          {"dimension", cmp.dimension},
          {"kruskal_wallis_h_with", cmp.h_with},
          {"kruskal_wallis_h_without", cmp.h_without},
          {"delta_h", cmp.h_without - cmp.h_with},
          {"significant_pairs_with", cmp.significant_pairs_with},
          {"significant_pairs_without", cmp.significant_pairs_without},
          {"delta_significant_pairs",
           cmp.significant_pairs_without - cmp.significant_pairs_with},
          {"icc_with", cmp.icc_with},
          {"icc_without", cmp.icc_without},
          {"providers", std::move(providers)}});
    }
    doc["dimensions"] = std::move(dims);
    json stability = json::array();
    for (const auto& s : report.stability) {
      stability.push_back(json{{"provider", s.provider},
                               {"model", s.model},
                               {"dimension", s.dimension},
                               {"mean_with", s.mean_with},
                               {"mean_without", s.mean_without},
                               {"delta", s.delta},
                               {"classification", s.classification}});
    }
    doc["model_stability"] = std::move(stability);
  }
  return doc.dump(2) + "\n";
}

}  // namespace audit
