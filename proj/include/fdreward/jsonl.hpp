#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdreward {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JsonlLine {
  std::size_t line_no;  // 1-based
  std::string text;
};

// Non-blank lines of a JSONL file. Throws IoError when unreadable.
std::vector<JsonlLine> read_jsonl(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written output.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace fdreward
