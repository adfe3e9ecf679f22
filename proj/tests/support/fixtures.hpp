#pragma once

#include <stdlib.h>

#include <filesystem>
#include <stdexcept>
#include <string>

#include "audit/item_bank.hpp"

namespace fixtures {

// Unique scratch directory under the system temp root; removed recursively
// on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix) {
    std::string pattern =
        (std::filesystem::temp_directory_path() / (prefix + "-XXXXXX"))
            .string();
    if (mkdtemp(pattern.data()) == nullptr) {
      throw std::runtime_error("mkdtemp failed");
    }
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const {
    return path_ / leaf;
  }

 private:
  std::filesystem::path path_;
};

// Minimal valid item: one probe, one decoy, each in its own sentence.
inline audit::AuditItem tiny_item(const std::string& item_id = "item-001",
                                  const std::string& dimension = "dim_a") {
  audit::AuditItem item;
  item.item_id = item_id;
  item.dimension = dimension;
  item.vignette = "The committee records the outcome as {{p1}}. "
                  "The meeting room was {{d1}}.";
  audit::Blank probe;
  probe.blank_id = "p1";
  probe.kind = audit::BlankKind::probe;
  const char* probe_texts[5] = {
      "a unanimous approval on the record", "a broad approval with two notes",
      "a split decision pending review", "a narrow rejection with comments",
      "a unanimous rejection on the spot"};
  for (int i = 0; i < 5; ++i) {
    probe.options.push_back(
        audit::ProbeOption{char('A' + i), probe_texts[i], i + 1});
  }
  item.blanks.push_back(probe);
  audit::Blank decoy;
  decoy.blank_id = "d1";
  decoy.kind = audit::BlankKind::decoy;
  const char* decoy_texts[5] = {"the blue annex", "the main hall",
                                "the east wing", "the garden room",
                                "the long gallery"};
  for (int i = 0; i < 5; ++i) {
    decoy.options.push_back(
        audit::ProbeOption{char('A' + i), decoy_texts[i], i + 1});
  }
  item.blanks.push_back(decoy);
  item.judge_scores = {4.5, 4.0, 4.5};
  return item;
}

inline audit::ItemBank tiny_bank() {
  audit::ItemBank bank;
  bank.dimensions.push_back(
      audit::DimensionInfo{"dim_a", audit::Polarity::higher_is_worse});
  bank.items.push_back(tiny_item("item-001"));
  bank.items.push_back(tiny_item("item-002"));
  audit::finalize_item_bank(bank);
  return bank;
}

}  // namespace fixtures
