#include "audit/providers.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#ifdef AUDIT_WITH_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"
#include "json.hpp"

#include "audit/errors.hpp"
#include "audit/sha256.hpp"

namespace audit {

namespace {

using nlohmann::json;

constexpr int kBackoffBaseMs = 1000;
constexpr int kBackoffFactor = 2;

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
  bool tls = false;
};

ParsedUrl parse_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint_url must include a scheme: " + url);
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("unsupported scheme '" + scheme + "' in " + url);
  }
  ParsedUrl out;
  out.tls = scheme == "https";
  const std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    out.origin = url;
    out.path = "/";
  } else {
    out.origin = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  return out;
}

bool transient(int http_status) { return http_status >= 500; }

std::string now_utc_iso8601() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string extract_content(const std::string& body) {
  // OpenAI-style chat completion; fall back to the raw body so the parse
  // stage can still look for answer lines.
  try {
    const json doc = json::parse(body);
    if (doc.contains("choices") && doc["choices"].is_array() &&
        !doc["choices"].empty()) {
      const json& first = doc["choices"][0];
      if (first.contains("message") && first["message"].contains("content") &&
          first["message"]["content"].is_string()) {
        return first["message"]["content"].get<std::string>();
      }
    }
  } catch (const json::parse_error&) {
  }
  return body;
}

}  // namespace

std::string to_string(TransportStatus status) {
  switch (status) {
    case TransportStatus::ok:
      return "ok";
    case TransportStatus::timeout:
      return "timeout";
    case TransportStatus::http_error:
      return "http_error";
    case TransportStatus::refused:
      return "refused";
  }
  return "unknown";
}

TransportStatus transport_status_from_string(std::string_view s) {
  if (s == "ok") {
    return TransportStatus::ok;
  }
  if (s == "timeout") {
    return TransportStatus::timeout;
  }
  if (s == "http_error") {
    return TransportStatus::http_error;
  }
  if (s == "refused") {
    return TransportStatus::refused;
  }
  throw SchemaError("unknown transport status '" + std::string(s) + "'");
}

std::vector<ProviderConfig> load_roster(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("roster is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("providers") ||
      !doc["providers"].is_array()) {
    throw SchemaError("roster must be an object with a 'providers' array");
  }
  std::vector<ProviderConfig> roster;
  for (const auto& p : doc["providers"]) {
    ProviderConfig cfg;
    if (!p.contains("provider_name") || !p.contains("model_name") ||
        !p.contains("endpoint_url")) {
      throw SchemaError(
          "roster entries require provider_name, model_name, endpoint_url");
    }
    cfg.provider_name = p.at("provider_name").get<std::string>();
    cfg.model_name = p.at("model_name").get<std::string>();
    cfg.endpoint_url = p.at("endpoint_url").get<std::string>();
    cfg.auth_env_var = p.value("auth_env_var", std::string{});
    cfg.max_in_flight = p.value("max_in_flight", 1);
    cfg.timeout_ms = p.value("timeout_ms", 30000);
    cfg.max_retries = p.value("max_retries", 3);
    if (cfg.max_in_flight < 1) {
      throw ValidationError("roster entry '" + cfg.model_name +
                            "': max_in_flight must be >= 1");
    }
    if (cfg.timeout_ms <= 0) {
      throw ValidationError("roster entry '" + cfg.model_name +
                            "': timeout_ms must be positive");
    }
    roster.push_back(std::move(cfg));
  }
  if (roster.empty()) {
    throw ValidationError("roster lists no providers");
  }
  return roster;
}

void validate_provider_config(const ProviderConfig& config) {
  const ParsedUrl url = parse_url(config.endpoint_url);
#ifndef AUDIT_WITH_TLS
  if (url.tls) {
    throw ConfigError(
        "built without TLS support; https endpoints are unavailable");
  }
#endif
  (void)url;
  if (!config.auth_env_var.empty()) {
    const char* key = std::getenv(config.auth_env_var.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("environment variable '" + config.auth_env_var +
                        "' is not set for provider " + config.provider_name);
    }
  }
}

ResponseRecord dispatch(const AssembledPrompt& prompt,
                        const ProviderConfig& config,
                        const DispatchContext& context) {
  ResponseRecord record;
  record.run_id = context.run_id;
  record.provider_name = config.provider_name;
  record.model_name = config.model_name;
  record.item_id = prompt.item_id;
  record.replicate = context.replicate;
  record.prompt_hash = prompt.hash.hex;

  std::string auth_header;
  if (!config.auth_env_var.empty()) {
    const char* key = std::getenv(config.auth_env_var.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("environment variable '" + config.auth_env_var +
                        "' is not set for provider " + config.provider_name);
    }
    auth_header = std::string("Bearer ") + key;
  }

  const ParsedUrl url = parse_url(config.endpoint_url);
#ifndef AUDIT_WITH_TLS
  if (url.tls) {
    throw ConfigError(
        "built without TLS support; https endpoints are unavailable");
  }
#endif

  const json payload{
      {"model", config.model_name},
      {"messages", json::array({json{{"role", "user"},
                                     {"content", prompt.prompt_text}}})},
      {"temperature", 0},
  };
  const std::string body = payload.dump();

  int backoff_ms = kBackoffBaseMs;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= kBackoffFactor;
    }

    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::milliseconds(config.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(config.timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(config.timeout_ms));
    httplib::Headers headers;
    if (!auth_header.empty()) {
      headers.emplace("Authorization", auth_header);
    }

    const httplib::Result result =
        client.Post(url.path, headers, body, "application/json");

    if (!result) {
      switch (result.error()) {
        case httplib::Error::Connection:
          record.transport_status = TransportStatus::refused;
          break;
        case httplib::Error::ConnectionTimeout:
        case httplib::Error::Read:
        case httplib::Error::Write:
          record.transport_status = TransportStatus::timeout;
          break;
        default:
          record.transport_status = TransportStatus::refused;
          break;
      }
      continue;  // transient; retry budget permitting
    }

    record.http_status = result->status;
    if (result->status >= 200 && result->status < 300) {
      record.transport_status = TransportStatus::ok;
      record.raw_text = extract_content(result->body);
      record.http_status = 0;
      record.body_sha256.clear();
      break;
    }
    record.transport_status = TransportStatus::http_error;
    record.body_sha256 = Sha256::hex(result->body);
    if (!transient(result->status)) {
      break;
    }
  }

  record.received_at = now_utc_iso8601();
  return record;
}

std::string response_record_to_json_line(const ResponseRecord& record) {
  json j{{"run_id", record.run_id},
         {"provider_name", record.provider_name},
         {"model_name", record.model_name},
         {"item_id", record.item_id},
         {"replicate", record.replicate},
         {"prompt_hash", record.prompt_hash},
         {"raw_text", record.raw_text},
         {"received_at", record.received_at},
         {"transport_status", to_string(record.transport_status)}};
  if (record.transport_status == TransportStatus::http_error) {
    j["http_status"] = record.http_status;
    j["body_sha256"] = record.body_sha256;
  }
  return j.dump();
}

ResponseRecord response_record_from_json_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    ResponseRecord record;
    record.run_id = j.at("run_id").get<std::string>();
    record.provider_name = j.at("provider_name").get<std::string>();
    record.model_name = j.at("model_name").get<std::string>();
    record.item_id = j.at("item_id").get<std::string>();
    record.replicate = j.at("replicate").get<int>();
    record.prompt_hash = j.at("prompt_hash").get<std::string>();
    record.raw_text = j.at("raw_text").get<std::string>();
    record.received_at = j.at("received_at").get<std::string>();
    record.transport_status = transport_status_from_string(
        j.at("transport_status").get<std::string>());
    record.http_status = j.value("http_status", 0);
    record.body_sha256 = j.value("body_sha256", std::string{});
    return record;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad response log line: ") + e.what());
  }
}

}  // namespace audit
