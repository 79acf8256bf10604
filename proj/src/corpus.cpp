#include "corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace parenting {

using nlohmann::json;

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

char lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c); }

}  // namespace

bool Table::has_entities() const {
  for (const auto& r : records)
    if (r.entity_index) return true;
  return false;
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(lower(c));
    }
  }
  flush();
  return out;
}

Tokens tokenize_attribute(std::string_view attribute) {
  std::string spaced(attribute);
  for (auto& c : spaced)
    if (c == '_') c = ' ';
  return tokenize(spaced);
}

std::string join(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.append(sep);
    out.append(tokens[i]);
  }
  return out;
}

Tokens split_whitespace(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

void validate(const Record& record) {
  if (record.attribute.empty()) throw std::invalid_argument("record attribute is empty");
  if (tokenize(record.value).empty())
    throw std::invalid_argument("record '" + record.attribute + "' has an empty value");
  if (record.entity_index && *record.entity_index < 0)
    throw std::invalid_argument("record '" + record.attribute + "' has a negative entity index");
}

void validate(const Table& table) {
  if (table.records.empty()) throw std::invalid_argument("table has no records");
  for (const auto& r : table.records) validate(r);
}

void validate(const Instance& instance) {
  validate(instance.table);
  if (instance.references.empty()) throw std::invalid_argument("instance has no references");
  for (const auto& ref : instance.references)
    if (ref.empty()) throw std::invalid_argument("instance has an empty reference");
}

SourceSequence linearize_table(const Table& table) {
  SourceSequence out;
  const bool entities = table.has_entities();
  for (const auto& record : table.records) {
    const Tokens attr = tokenize_attribute(record.attribute);
    const std::string field = attr.empty() ? record.attribute : join(attr, "_");
    const Tokens value = tokenize(record.value);
    const int n = static_cast<int>(value.size());
    for (int i = 0; i < n; ++i) {
      SourceToken t;
      t.value_token = value[i];
      t.attribute = field;
      t.pos_fwd = i + 1;
      t.pos_bwd = n - i;
      if (entities) t.entity_index = record.entity_index.value_or(0);
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::string instance_to_json_line(const Instance& instance) {
  json table = json::array();
  for (const auto& r : instance.table.records) {
    json rec = {{"attribute", r.attribute}, {"value", r.value}};
    if (r.entity_index) rec["entity"] = *r.entity_index;
    table.push_back(std::move(rec));
  }
  json j = {{"table", std::move(table)}, {"references", instance.references}};
  return j.dump();
}

Instance instance_from_json_line(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DatasetError(line_number, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DatasetError(line_number, "expected a JSON object");
  if (!j.contains("table")) throw DatasetError(line_number, "missing key 'table'");
  if (!j.contains("references")) throw DatasetError(line_number, "missing key 'references'");
  const auto& jt = j["table"];
  const auto& jr = j["references"];
  if (!jt.is_array()) throw DatasetError(line_number, "'table' must be an array");
  if (!jr.is_array()) throw DatasetError(line_number, "'references' must be an array");

  Instance inst;
  for (const auto& rec : jt) {
    if (!rec.is_object() || !rec.contains("attribute") || !rec.contains("value") ||
        !rec["attribute"].is_string() || !rec["value"].is_string())
      throw DatasetError(line_number, "table records need string 'attribute' and 'value'");
    Record r{rec["attribute"].get<std::string>(), rec["value"].get<std::string>(), std::nullopt};
    if (rec.contains("entity")) {
      if (!rec["entity"].is_number_integer()) throw DatasetError(line_number, "'entity' must be an integer");
      r.entity_index = rec["entity"].get<int>();
    }
    inst.table.records.push_back(std::move(r));
  }
  for (const auto& ref : jr) {
    if (!ref.is_array()) throw DatasetError(line_number, "each reference must be an array of tokens");
    Tokens tokens;
    for (const auto& tok : ref) {
      if (!tok.is_string()) throw DatasetError(line_number, "reference tokens must be strings");
      tokens.push_back(tok.get<std::string>());
    }
    inst.references.push_back(std::move(tokens));
  }
  try {
    validate(inst);
  } catch (const std::invalid_argument& e) {
    throw DatasetError(line_number, e.what());
  }
  return inst;
}

std::vector<Instance> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  std::vector<Instance> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (split_whitespace(line).empty()) continue;
    out.push_back(instance_from_json_line(line, number));
  }
  return out;
}

void save_dataset(const std::vector<Instance>& instances, const std::filesystem::path& path) {
  std::string buf;
  for (const auto& inst : instances) {
    buf += instance_to_json_line(inst);
    buf += '\n';
  }
  write_file_atomically(path, buf);
}

std::vector<Tokens> load_candidates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open candidates '" + path.string() + "'");
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_whitespace(line));
  return out;
}

void save_candidates(const std::vector<Tokens>& candidates, const std::filesystem::path& path) {
  std::string buf;
  for (const auto& c : candidates) {
    buf += join(c);
    buf += '\n';
  }
  write_file_atomically(path, buf);
}

void write_file_atomically(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace parenting
