#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"

#include "audit/errors.hpp"
#include "audit/report.hpp"
#include "audit/sha256.hpp"
#include "run_io.hpp"

namespace audit {

namespace detail {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot read " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out.write(content.data(), std::streamsize(content.size()));
  if (!out) {
    throw Error("write failed for " + path.string());
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return lines;
  }
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      lines.push_back(line);
    }
  }
  return lines;
}

RunLock::RunLock(const std::filesystem::path& run_dir)
    : path_(run_dir / "lock") {
  std::filesystem::create_directories(run_dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    throw Error("run directory is locked by another process: " +
                path_.string());
  }
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace detail

namespace {

using nlohmann::json;

constexpr const char* kSimulatedTimestamp = "1970-01-01T00:00:00Z";

std::string now_utc_iso8601() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json roster_entry_to_json(const ProviderConfig& cfg, bool simulated) {
  if (simulated) {
    return json{{"provider_name", cfg.provider_name},
                {"model_name", cfg.model_name}};
  }
  return json{{"provider_name", cfg.provider_name},
              {"model_name", cfg.model_name},
              {"endpoint_url", cfg.endpoint_url},
              {"auth_env_var", cfg.auth_env_var},
              {"max_in_flight", cfg.max_in_flight},
              {"timeout_ms", cfg.timeout_ms},
              {"max_retries", cfg.max_retries}};
}

std::string permutation_record_to_json_line(const PermutationRecord& rec) {
  return json{{"item_id", rec.item_id},
              {"blank_id", rec.blank_id},
              {"global_seed", rec.global_seed},
              {"order", rec.order}}
      .dump();
}

using TripleKey = std::tuple<std::string, std::string, std::string, int>;

// Reads the logged (provider, model, item, replicate) keys. A torn final
// line (crash mid-append) is dropped from the file so the record gets
// re-dispatched; corruption anywhere else still raises.
std::set<TripleKey> logged_triples(const std::filesystem::path& log_path) {
  std::set<TripleKey> seen;
  const std::vector<std::string> lines = detail::read_lines(log_path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      const ResponseRecord rec = response_record_from_json_line(lines[i]);
      seen.insert({rec.provider_name, rec.model_name, rec.item_id,
                   rec.replicate});
    } catch (const SchemaError&) {
      if (i + 1 != lines.size()) {
        throw;
      }
      std::string repaired;
      for (std::size_t k = 0; k + 1 < lines.size(); ++k) {
        repaired += lines[k];
        repaired += '\n';
      }
      detail::write_text_file(log_path, repaired);
    }
  }
  return seen;
}

// Prompts are per item, shared across providers and replicates.
std::vector<AssembledPrompt> assemble_all(const ItemBank& bank,
                                          const std::string& seed,
                                          DecoyMode decoy_mode,
                                          PoleMode pole_mode) {
  std::vector<AssembledPrompt> prompts;
  prompts.reserve(bank.items.size());
  for (const auto& item : bank.items) {
    prompts.push_back(assemble_prompt(item, seed, decoy_mode, pole_mode));
  }
  return prompts;
}

void write_permutation_log(const std::filesystem::path& run_dir,
                           const std::vector<AssembledPrompt>& prompts,
                           const std::string& seed) {
  std::string log;
  for (const auto& prompt : prompts) {
    for (const auto& rec : prompt.permutation_records(seed)) {
      log += permutation_record_to_json_line(rec);
      log += '\n';
    }
  }
  detail::write_text_file(run_dir / "permutations.jsonl", log);
}

void persist_manifest_and_bank(const std::filesystem::path& run_dir,
                               const RunManifest& manifest,
                               const ItemBank& bank) {
  const std::filesystem::path manifest_path = run_dir / "manifest.json";
  const std::string rendered = manifest_to_json(manifest);
  if (std::filesystem::exists(manifest_path)) {
    const std::string existing = detail::read_text_file(manifest_path);
    if (existing != rendered) {
      throw ValidationError(
          "existing manifest.json disagrees with the requested run inputs; "
          "refusing to mix runs in " +
          run_dir.string());
    }
  } else {
    detail::write_text_file(manifest_path, rendered);
  }
  detail::write_text_file(run_dir / "bank.json", serialize_item_bank(bank));
}

std::string digest12(const std::string& payload) {
  return Sha256::hex(payload).substr(0, 12);
}

}  // namespace

std::string manifest_to_json(const RunManifest& manifest) {
  json roster = json::array();
  const bool simulated = manifest.mode == "simulated";
  for (const auto& cfg : manifest.roster) {
    roster.push_back(roster_entry_to_json(cfg, simulated));
  }
  json doc{{"run_id", manifest.run_id},
           {"mode", manifest.mode},
           {"global_seed", manifest.global_seed},
           {"decoy_mode", to_string(manifest.decoy_mode)},
           {"pole_mode", to_string(manifest.pole_mode)},
           {"item_bank_digest", manifest.item_bank_digest},
           {"replicates", manifest.replicates},
           {"provider_roster", std::move(roster)},
           {"created_at", manifest.created_at}};
  if (manifest.simulation.has_value()) {
    doc["simulation"] = json::parse(simulation_spec_to_json(*manifest.simulation));
  }
  return doc.dump(2) + "\n";
}

RunManifest manifest_from_json(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("manifest is not valid JSON: ") + e.what());
  }
  RunManifest manifest;
  manifest.run_id = doc.at("run_id").get<std::string>();
  manifest.mode = doc.at("mode").get<std::string>();
  manifest.global_seed = doc.at("global_seed").get<std::string>();
  manifest.decoy_mode =
      decoy_mode_from_string(doc.at("decoy_mode").get<std::string>());
  manifest.pole_mode =
      pole_mode_from_string(doc.at("pole_mode").get<std::string>());
  manifest.item_bank_digest = doc.at("item_bank_digest").get<std::string>();
  manifest.replicates = doc.at("replicates").get<int>();
  for (const auto& entry : doc.at("provider_roster")) {
    ProviderConfig cfg;
    cfg.provider_name = entry.at("provider_name").get<std::string>();
    cfg.model_name = entry.at("model_name").get<std::string>();
    cfg.endpoint_url = entry.value("endpoint_url", std::string{});
    cfg.auth_env_var = entry.value("auth_env_var", std::string{});
    cfg.max_in_flight = entry.value("max_in_flight", 1);
    cfg.timeout_ms = entry.value("timeout_ms", 30000);
    cfg.max_retries = entry.value("max_retries", 3);
    manifest.roster.push_back(std::move(cfg));
  }
  manifest.created_at = doc.at("created_at").get<std::string>();
  if (doc.contains("simulation")) {
    manifest.simulation =
        simulation_spec_from_json(doc.at("simulation").dump());
  }
  return manifest;
}

RunManifest read_manifest(const std::filesystem::path& run_dir) {
  return manifest_from_json(detail::read_text_file(run_dir / "manifest.json"));
}

SimRunConfig load_sim_spec_file(const std::filesystem::path& path) {
  const std::string bytes = detail::read_text_file(path);
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("simulation spec file is not valid JSON: ") +
                      e.what());
  }
  if (!doc.contains("simulation")) {
    throw SchemaError("simulation spec file requires a 'simulation' object");
  }
  SimRunConfig config;
  config.simulation = simulation_spec_from_json(doc.at("simulation").dump());
  if (doc.contains("run")) {
    const json& run = doc.at("run");
    config.global_seed = run.value("global_seed", config.global_seed);
    if (run.contains("decoy_mode")) {
      config.decoy_mode =
          decoy_mode_from_string(run.at("decoy_mode").get<std::string>());
    }
    if (run.contains("pole_mode")) {
      config.pole_mode =
          pole_mode_from_string(run.at("pole_mode").get<std::string>());
    }
  }
  if (doc.contains("bank")) {
    std::filesystem::path bank = doc.at("bank").get<std::string>();
    if (bank.is_relative()) {
      bank = path.parent_path() / bank;
    }
    config.bank_path = bank;
  }
  return config;
}

namespace {

ItemBank effective_sim_bank(const SimRunConfig& config) {
  if (!config.bank_path.has_value()) {
    return make_synthetic_bank(config.simulation.n_items);
  }
  ItemBank full = load_item_bank(detail::read_text_file(*config.bank_path));
  if (int(full.items.size()) < config.simulation.n_items) {
    throw ValidationError(
        "bank has " + std::to_string(full.items.size()) +
        " items but the simulation spec asks for " +
        std::to_string(config.simulation.n_items));
  }
  if (int(full.items.size()) == config.simulation.n_items) {
    return full;
  }
  ItemBank sub;
  sub.schema_version = full.schema_version;
  sub.dimensions = full.dimensions;
  sub.items.assign(full.items.begin(),
                   full.items.begin() + config.simulation.n_items);
  finalize_item_bank(sub);
  return sub;
}

}  // namespace

RunManifest simulate_run(const SimRunConfig& config,
                         const std::filesystem::path& out_dir) {
  config.simulation.validate();
  const ItemBank bank = effective_sim_bank(config);
  const SimulationSpec& spec = config.simulation;

  RunManifest manifest;
  manifest.mode = "simulated";
  manifest.global_seed = config.global_seed;
  manifest.decoy_mode = config.decoy_mode;
  manifest.pole_mode = config.pole_mode;
  manifest.item_bank_digest = bank.content_digest;
  manifest.replicates = spec.n_replicates;
  manifest.created_at = kSimulatedTimestamp;
  manifest.simulation = spec;
  for (int p = 0; p < spec.n_providers; ++p) {
    for (int m = 0; m < spec.n_models_per_provider; ++m) {
      ProviderConfig cfg;
      cfg.provider_name = simulated_provider_name(p);
      cfg.model_name = simulated_model_name(p, m);
      manifest.roster.push_back(std::move(cfg));
    }
  }
  manifest.run_id =
      "sim-" + digest12(simulation_spec_to_json(spec) + "|" +
                        config.global_seed + "|" +
                        to_string(config.decoy_mode) + "|" +
                        to_string(config.pole_mode) + "|" +
                        bank.content_digest);

  detail::RunLock lock(out_dir);
  persist_manifest_and_bank(out_dir, manifest, bank);

  const std::vector<AssembledPrompt> prompts = assemble_all(
      bank, config.global_seed, config.decoy_mode, config.pole_mode);
  write_permutation_log(out_dir, prompts, config.global_seed);

  const std::filesystem::path log_path = out_dir / "responses.jsonl";
  const std::set<TripleKey> seen = logged_triples(log_path);

  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  if (!log) {
    throw Error("cannot open " + log_path.string());
  }
  for (int p = 0; p < spec.n_providers; ++p) {
    for (int m = 0; m < spec.n_models_per_provider; ++m) {
      const std::string provider = simulated_provider_name(p);
      const std::string model = simulated_model_name(p, m);
      for (int i = 0; i < spec.n_items; ++i) {
        const AuditItem& item = bank.items[std::size_t(i)];
        const AssembledPrompt& prompt = prompts[std::size_t(i)];
        for (int r = 0; r < spec.n_replicates; ++r) {
          if (seen.count({provider, model, item.item_id, r}) > 0) {
            continue;
          }
          const SimulatedResponse sim = simulate_response(
              spec, p, m, i, r, config.decoy_mode, item, prompt);
          ResponseRecord record;
          record.run_id = manifest.run_id;
          record.provider_name = provider;
          record.model_name = model;
          record.item_id = item.item_id;
          record.replicate = r;
          record.prompt_hash = prompt.hash.hex;
          record.raw_text = sim.raw_text;
          record.received_at = kSimulatedTimestamp;
          record.transport_status = TransportStatus::ok;
          log << response_record_to_json_line(record) << '\n';
        }
      }
    }
  }
  log.flush();
  if (!log) {
    throw Error("write failed for " + log_path.string());
  }
  return manifest;
}

RunTotals run_audit(const ItemBank& bank,
                    const std::vector<ProviderConfig>& roster,
                    const std::string& global_seed, DecoyMode decoy_mode,
                    PoleMode pole_mode, int replicates,
                    const std::filesystem::path& out_dir) {
  if (roster.empty()) {
    throw ValidationError("roster lists no providers");
  }
  if (replicates < 1) {
    throw ValidationError("replicates must be >= 1");
  }
  for (const auto& cfg : roster) {
    validate_provider_config(cfg);
  }

  RunManifest manifest;
  manifest.mode = "live";
  manifest.global_seed = global_seed;
  manifest.decoy_mode = decoy_mode;
  manifest.pole_mode = pole_mode;
  manifest.item_bank_digest = bank.content_digest;
  manifest.replicates = replicates;
  manifest.roster = roster;
  {
    std::string key = bank.content_digest + "|" + global_seed + "|" +
                      to_string(decoy_mode) + "|" + to_string(pole_mode) +
                      "|" + std::to_string(replicates);
    for (const auto& cfg : roster) {
      key += "|" + cfg.provider_name + "/" + cfg.model_name;
    }
    manifest.run_id = "run-" + digest12(key);
  }
  manifest.created_at = now_utc_iso8601();

  detail::RunLock lock(out_dir);

  // Resume keeps the original manifest identity; everything else about the
  // inputs must match it.
  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    const RunManifest existing = read_manifest(out_dir);
    if (existing.run_id != manifest.run_id) {
      throw ValidationError(
          "run inputs do not match the existing manifest in " +
          out_dir.string());
    }
    manifest.created_at = existing.created_at;
  }
  persist_manifest_and_bank(out_dir, manifest, bank);

  const std::vector<AssembledPrompt> prompts =
      assemble_all(bank, global_seed, decoy_mode, pole_mode);
  write_permutation_log(out_dir, prompts, global_seed);

  const std::filesystem::path log_path = out_dir / "responses.jsonl";
  const std::set<TripleKey> seen = logged_triples(log_path);

  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  if (!log) {
    throw Error("cannot open " + log_path.string());
  }
  std::mutex log_mutex;

  RunTotals totals;
  for (const auto& cfg : roster) {
    std::vector<std::pair<const AssembledPrompt*, int>> tasks;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      for (int r = 0; r < replicates; ++r) {
        if (seen.count({cfg.provider_name, cfg.model_name,
                        prompts[i].item_id, r}) > 0) {
          ++totals.skipped;
          continue;
        }
        tasks.emplace_back(&prompts[i], r);
      }
    }
    if (tasks.empty()) {
      continue;
    }

    std::mutex task_mutex;
    std::size_t next_task = 0;
    const int workers =
        std::min<int>(cfg.max_in_flight, int(tasks.size()));
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t index;
          {
            std::lock_guard<std::mutex> guard(task_mutex);
            if (next_task >= tasks.size()) {
              return;
            }
            index = next_task++;
          }
          const auto& [prompt, replicate] = tasks[index];
          ResponseRecord record;
          try {
            record = dispatch(*prompt, cfg,
                              DispatchContext{manifest.run_id, replicate});
          } catch (const std::exception& e) {
            // Keep worker threads alive; the record carries the failure.
            record.run_id = manifest.run_id;
            record.provider_name = cfg.provider_name;
            record.model_name = cfg.model_name;
            record.item_id = prompt->item_id;
            record.replicate = replicate;
            record.prompt_hash = prompt->hash.hex;
            record.received_at = now_utc_iso8601();
            record.transport_status = TransportStatus::refused;
            record.body_sha256 = Sha256::hex(e.what());
          }
          std::lock_guard<std::mutex> guard(log_mutex);
          log << response_record_to_json_line(record) << '\n';
          log.flush();
          ++totals.dispatched;
          if (record.transport_status == TransportStatus::ok) {
            ++totals.ok;
          } else {
            ++totals.failed;
          }
        }
      });
    }
    for (auto& worker : pool) {
      worker.join();
    }
  }
  return totals;
}

}  // namespace audit
