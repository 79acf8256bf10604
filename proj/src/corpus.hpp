#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace parenting {

using Tokens = std::vector<std::string>;

/// Raised for malformed dataset files; carries the 1-based line number.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Record {
  std::string attribute;
  std::string value;
  std::optional<int> entity_index;

  bool operator==(const Record&) const = default;
};

struct Table {
  std::vector<Record> records;

  bool operator==(const Table&) const = default;
  bool has_entities() const;
};

struct Instance {
  Table table;
  std::vector<Tokens> references;

  bool operator==(const Instance&) const = default;
};

/// One value token of a linearized table: (value, field, p+, p-[, entity]).
struct SourceToken {
  std::string value_token;
  std::string attribute;
  int pos_fwd = 1;
  int pos_bwd = 1;
  std::optional<int> entity_index;

  bool operator==(const SourceToken&) const = default;
};

using SourceSequence = std::vector<SourceToken>;

/// Lowercases ASCII letters, splits on whitespace and detaches every ASCII
/// punctuation character as its own token.
Tokens tokenize(std::string_view text);

/// Tokenizes an attribute name, treating underscores as word separators.
Tokens tokenize_attribute(std::string_view attribute);

std::string join(const Tokens& tokens, std::string_view sep = " ");

/// Splits already-tokenized text on whitespace without further processing.
Tokens split_whitespace(std::string_view text);

/// Throws std::invalid_argument when a record or instance breaks its invariants.
void validate(const Record& record);
void validate(const Table& table);
void validate(const Instance& instance);

SourceSequence linearize_table(const Table& table);

std::vector<Instance> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::vector<Instance>& instances, const std::filesystem::path& path);

std::string instance_to_json_line(const Instance& instance);
Instance instance_from_json_line(std::string_view line, std::size_t line_number);

/// Candidate files: one whitespace-tokenized sentence per line.
std::vector<Tokens> load_candidates(const std::filesystem::path& path);
void save_candidates(const std::vector<Tokens>& candidates, const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomically(const std::filesystem::path& path, std::string_view contents);

}  // namespace parenting
