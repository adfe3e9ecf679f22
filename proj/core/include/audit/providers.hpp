#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "audit/assembly.hpp"

namespace audit {

struct ProviderConfig {
  std::string provider_name;
  std::string model_name;
  std::string endpoint_url;
  std::string auth_env_var;  // name of the env var holding the key; empty
                             // means the endpoint needs no auth
  int max_in_flight = 1;
  int timeout_ms = 30000;
  int max_retries = 3;
};

// Parses a roster document: {"providers": [ProviderConfig, ...]}.
std::vector<ProviderConfig> load_roster(std::string_view bytes);

enum class TransportStatus { ok, timeout, http_error, refused };

std::string to_string(TransportStatus status);
TransportStatus transport_status_from_string(std::string_view s);

struct ResponseRecord {
  std::string run_id;
  std::string provider_name;
  std::string model_name;
  std::string item_id;
  int replicate = 0;
  std::string prompt_hash;
  std::string raw_text;
  std::string received_at;  // UTC ISO-8601; fixed epoch for simulated runs
  TransportStatus transport_status = TransportStatus::ok;
  int http_status = 0;         // last status when transport_status != ok
  std::string body_sha256;     // digest of an error body, never the body
};

struct DispatchContext {
  std::string run_id;
  int replicate = 0;
};

// Sends the prompt as a single user message to a chat-completions endpoint
// with temperature pinned to 0. Transient failures (connect errors, timeouts,
// HTTP 5xx) are retried up to max_retries with exponential backoff, base 1s,
// factor 2. Transport outcomes land in the record; a missing auth variable
// throws ConfigError.
ResponseRecord dispatch(const AssembledPrompt& prompt,
                        const ProviderConfig& config,
                        const DispatchContext& context);

// Checks endpoint URL shape, TLS availability and the auth variable before
// any prompt is sent. Throws ConfigError.
void validate_provider_config(const ProviderConfig& config);

// Serialization for the response log (JSONL, sorted keys).
std::string response_record_to_json_line(const ResponseRecord& record);
ResponseRecord response_record_from_json_line(std::string_view line);

}  // namespace audit
