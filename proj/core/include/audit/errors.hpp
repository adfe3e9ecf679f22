#pragma once

#include <stdexcept>
#include <string>

namespace audit {

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed document structure (bad JSON, missing keys, wrong types).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A domain invariant is violated; the message names the offending
// item/blank and the invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Stored content digest disagrees with the recomputed one.
class DigestMismatch : public Error {
 public:
  DigestMismatch(const std::string& stored, const std::string& recomputed)
      : Error("content_digest mismatch: stored " + stored + ", recomputed " +
              recomputed),
        stored_(stored),
        recomputed_(recomputed) {}
  const std::string& stored() const { return stored_; }
  const std::string& recomputed() const { return recomputed_; }

 private:
  std::string stored_;
  std::string recomputed_;
};

// A seeding input contains the reserved ':' separator.
class ReservedCharacter : public Error {
 public:
  using Error::Error;
};

class MissingJudgeScores : public Error {
 public:
  using Error::Error;
};

// A blank has no matching "{{blank_id}}" token in the vignette.
class MissingPlaceholder : public Error {
 public:
  using Error::Error;
};

// A parsed answer letter is absent from the answer key.
class KeyMismatch : public Error {
 public:
  using Error::Error;
};

// A response record references a prompt hash that no assembled prompt has.
class UnknownPromptHash : public Error {
 public:
  using Error::Error;
};

// Provider/item incidence graph is not connected; variance components
// are not jointly identifiable.
class DesignDisconnected : public Error {
 public:
  using Error::Error;
};

class ZeroTotalVariance : public Error {
 public:
  using Error::Error;
};

class IncompleteBlocks : public Error {
 public:
  using Error::Error;
};

// Missing auth environment variable or unusable endpoint configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Two run directories cannot be compared (different bank, seed or modes).
class MismatchedRuns : public Error {
 public:
  using Error::Error;
};

}  // namespace audit
