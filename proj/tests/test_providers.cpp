#include <atomic>
#include <chrono>
#include <cstdlib>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

#include "audit/errors.hpp"
#include "audit/providers.hpp"
#include "audit/scoring.hpp"
#include "audit/sha256.hpp"
#include "audit/simulate.hpp"
#include "audit/stats.hpp"
#include "support/fixtures.hpp"

using namespace audit;

namespace {

struct StubServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit StubServer(
      const std::function<void(const httplib::Request&, httplib::Response&)>&
          handler) {
    server.Post("/v1/chat/completions", handler);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }

  ProviderConfig config() const {
    ProviderConfig cfg;
    cfg.provider_name = "stub";
    cfg.model_name = "stub-model";
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) +
                       "/v1/chat/completions";
    cfg.timeout_ms = 2000;
    cfg.max_retries = 3;
    return cfg;
  }
};

AssembledPrompt sample_prompt() {
  return assemble_prompt(fixtures::tiny_item(), "prov-seed",
                         DecoyMode::with_decoys, PoleMode::normal);
}

std::string completion_body(const std::string& content) {
  nlohmann::json body{
      {"choices",
       nlohmann::json::array(
           {nlohmann::json{{"message", nlohmann::json{{"role", "assistant"},
                                                      {"content", content}}}}})}};
  return body.dump();
}

}  // namespace

TEST_CASE("load_roster parses and validates") {
  const auto roster = load_roster(R"({"providers":[
    {"provider_name":"lab","model_name":"m1",
     "endpoint_url":"http://localhost:1/x","auth_env_var":"KEY_VAR",
     "max_in_flight":2,"timeout_ms":500,"max_retries":1}]})");
  REQUIRE(roster.size() == 1);
  CHECK(roster[0].provider_name == "lab");
  CHECK(roster[0].max_in_flight == 2);

  CHECK_THROWS_AS(load_roster("druid"), SchemaError);
  CHECK_THROWS_AS(load_roster(R"({"providers":[]})"), ValidationError);
  CHECK_THROWS_AS(load_roster(R"({"providers":[{"provider_name":"x",
    "model_name":"y","endpoint_url":"http://h/","timeout_ms":0}]})"),
                  ValidationError);
}

TEST_CASE("dispatch against an echoing stub endpoint") {
  StubServer stub([](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    CHECK(body.at("temperature").get<double>() == 0.0);
    CHECK(body.at("messages").at(0).at("role").get<std::string>() == "user");
    CHECK(body.at("messages")
              .at(0)
              .at("content")
              .get<std::string>()
              .find("Options for BLANK_p1:") != std::string::npos);
    res.set_content(completion_body("BLANK_p1: C\nBLANK_d1: A"),
                    "application/json");
  });
  const ResponseRecord record =
      dispatch(sample_prompt(), stub.config(), DispatchContext{"run-1", 0});
  CHECK(record.transport_status == TransportStatus::ok);
  CHECK(record.raw_text.find("BLANK_p1: C") != std::string::npos);
  CHECK(record.prompt_hash == sample_prompt().hash.hex);
  CHECK(record.run_id == "run-1");
}

TEST_CASE("dispatch retries transient 500s then succeeds") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n <= 2) {
      res.status = 500;
      res.set_content("overloaded", "text/plain");
    } else {
      res.set_content(completion_body("BLANK_p1: B"), "application/json");
    }
  });
  const ResponseRecord record =
      dispatch(sample_prompt(), stub.config(), DispatchContext{"run-2", 0});
  CHECK(calls.load() == 3);
  CHECK(record.transport_status == TransportStatus::ok);
  CHECK(record.raw_text == "BLANK_p1: B");
}

TEST_CASE("dispatch reports permanent http errors with a body digest") {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("unauthorized", "text/plain");
  });
  ProviderConfig cfg = stub.config();
  const ResponseRecord record =
      dispatch(sample_prompt(), cfg, DispatchContext{"run-3", 0});
  CHECK(record.transport_status == TransportStatus::http_error);
  CHECK(record.http_status == 401);
  CHECK(record.body_sha256 == Sha256::hex("unauthorized"));
  CHECK(record.raw_text.empty());
}

TEST_CASE("dispatch times out against a stalling endpoint") {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content(completion_body("late"), "application/json");
  });
  ProviderConfig cfg = stub.config();
  cfg.timeout_ms = 100;
  cfg.max_retries = 0;
  const auto started = std::chrono::steady_clock::now();
  const ResponseRecord record =
      dispatch(sample_prompt(), cfg, DispatchContext{"run-4", 0});
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  CHECK(record.transport_status == TransportStatus::timeout);
  CHECK(elapsed < 2000);  // timeout plus slack, no retries requested
}

TEST_CASE("dispatch reports connection refused") {
  ProviderConfig cfg;
  cfg.provider_name = "nobody";
  cfg.model_name = "none";
  cfg.endpoint_url = "http://127.0.0.1:9/v1/chat/completions";
  cfg.timeout_ms = 500;
  cfg.max_retries = 0;
  const ResponseRecord record =
      dispatch(sample_prompt(), cfg, DispatchContext{"run-5", 0});
  CHECK(record.transport_status == TransportStatus::refused);
}

TEST_CASE("missing auth env var is a config error") {
  ProviderConfig cfg;
  cfg.provider_name = "lab";
  cfg.model_name = "m";
  cfg.endpoint_url = "http://127.0.0.1:9/v1";
  cfg.auth_env_var = "AUDIT_TEST_SURELY_UNSET_VAR";
  unsetenv("AUDIT_TEST_SURELY_UNSET_VAR");
  CHECK_THROWS_AS(
      dispatch(sample_prompt(), cfg, DispatchContext{"run-6", 0}),
      ConfigError);
  CHECK_THROWS_AS(validate_provider_config(cfg), ConfigError);
}

TEST_CASE("response record JSONL round trip") {
  ResponseRecord record;
  record.run_id = "r";
  record.provider_name = "p";
  record.model_name = "m";
  record.item_id = "item-1";
  record.replicate = 3;
  record.prompt_hash = std::string(64, 'a');
  record.raw_text = "BLANK_p1: A\nwith \"quotes\"";
  record.received_at = "2026-01-01T00:00:00Z";
  record.transport_status = TransportStatus::http_error;
  record.http_status = 503;
  record.body_sha256 = Sha256::hex("body");
  const ResponseRecord back =
      response_record_from_json_line(response_record_to_json_line(record));
  CHECK(back.run_id == record.run_id);
  CHECK(back.replicate == 3);
  CHECK(back.raw_text == record.raw_text);
  CHECK(back.transport_status == TransportStatus::http_error);
  CHECK(back.http_status == 503);
  CHECK(back.body_sha256 == record.body_sha256);
}

TEST_CASE("simulation spec validation") {
  SimulationSpec spec;
  spec.sigma2_residual = 0.0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.sigma2_residual = 0.5;
  spec.n_items = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.n_items = 3;
  spec.sim_seed = "a:b";
  CHECK_THROWS_AS(spec.validate(), ReservedCharacter);
}

TEST_CASE("simulated scores are deterministic and degenerate correctly") {
  SimulationSpec spec;
  spec.mu = 3.0;
  spec.sigma2_provider = 0.0;
  spec.sigma2_item = 0.0;
  spec.sigma2_residual = 1e-12;
  spec.n_providers = 2;
  spec.n_items = 2;
  // All variances effectively zero: every score equals round(mu).
  for (int p = 0; p < 2; ++p) {
    for (int i = 0; i < 2; ++i) {
      CHECK(simulated_score(spec, p, 0, i, 0, DecoyMode::with_decoys) == 3);
    }
  }

  SimulationSpec noisy = spec;
  noisy.sigma2_residual = 0.6;
  noisy.sim_seed = "determinism";
  const int first = simulated_score(noisy, 1, 0, 1, 4, DecoyMode::probe_only);
  for (int t = 0; t < 3; ++t) {
    CHECK(simulated_score(noisy, 1, 0, 1, 4, DecoyMode::probe_only) == first);
  }
}

TEST_CASE("simulated responses exercise the full parse path") {
  const ItemBank bank = make_synthetic_bank(2);
  SimulationSpec spec;
  spec.mu = 2.0;
  spec.sigma2_provider = 0.3;
  spec.sigma2_item = 0.2;
  spec.sigma2_residual = 0.5;
  spec.n_providers = 2;
  spec.n_items = 2;
  spec.sim_seed = "parse-path";

  const AssembledPrompt prompt = assemble_prompt(
      bank.items[0], "g-seed", DecoyMode::with_decoys, PoleMode::normal);
  const SimulatedResponse response = simulate_response(
      spec, 0, 0, 0, 0, DecoyMode::with_decoys, bank.items[0], prompt);

  const ParseOutcome outcome =
      parse_response(response.raw_text, prompt.answer_key);
  CHECK(outcome.failures.empty());
  CHECK(outcome.selections.size() == prompt.answer_key.size());
  const ParsedSelection* probe = outcome.selection_for("p");
  REQUIRE(probe != nullptr);
  CHECK(score_probe(*probe, prompt, bank.items[0]) == response.score);
}

TEST_CASE("decoy noise dampens the Kruskal-Wallis statistic directionally") {
  // Paired simulations share provider, item and residual draws; the
  // with-decoys run only adds noise. Expect H_without >= H_with in a clear
  // majority of pairs.
  const int pairs = 200;
  int weakly_larger = 0;
  for (int t = 0; t < pairs; ++t) {
    SimulationSpec spec;
    spec.mu = 2.6;
    spec.sigma2_provider = 0.12;
    spec.sigma2_item = 0.2;
    spec.sigma2_residual = 0.3;
    spec.decoy_noise_sd = 0.8;
    spec.n_providers = 4;
    spec.n_items = 10;
    spec.n_replicates = 2;
    spec.sim_seed = "dampen-" + std::to_string(t);

    std::vector<std::vector<double>> with(4), without(4);
    for (int p = 0; p < 4; ++p) {
      for (int i = 0; i < 10; ++i) {
        for (int r = 0; r < 2; ++r) {
          with[p].push_back(
              double(simulated_score(spec, p, 0, i, r, DecoyMode::with_decoys)));
          without[p].push_back(
              double(simulated_score(spec, p, 0, i, r, DecoyMode::probe_only)));
        }
      }
    }
    if (kruskal_wallis(without).statistic >=
        kruskal_wallis(with).statistic) {
      ++weakly_larger;
    }
  }
  CHECK(weakly_larger >= pairs * 55 / 100);
}
