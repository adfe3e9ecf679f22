#pragma once

// Internal file helpers shared by run orchestration and analysis. Not
// installed with the public headers.

#include <filesystem>
#include <string>
#include <vector>

namespace audit::detail {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& content);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Exclusive-create lock file; removed on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace audit::detail
