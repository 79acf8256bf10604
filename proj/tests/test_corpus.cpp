#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "corpus.hpp"

using namespace parenting;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "parenting_test_corpus";
  fs::create_directories(dir);
  return dir / name;
}

Table table_of(std::vector<Record> records) {
  Table t;
  t.records = std::move(records);
  return t;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Barack Obama") == Tokens{"barack", "obama"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("b. 1950, london.") == Tokens{"b", ".", "1950", ",", "london", "."});
  CHECK(tokenize("  Tabs\tand\nNEWLINES ") == Tokens{"tabs", "and", "newlines"});
}

TEST_CASE("tokenize is idempotent on rejoined output") {
  std::mt19937_64 rng(5);
  const std::string alphabet = "aB3 ,.;-_()'\tXyZ";
  for (int i = 0; i < 500; ++i) {
    std::string text;
    const auto len = std::uniform_int_distribution<int>(0, 30)(rng);
    for (int k = 0; k < len; ++k) text.push_back(alphabet[rng() % alphabet.size()]);
    const Tokens once = tokenize(text);
    CHECK(tokenize(join(once)) == once);
  }
}

TEST_CASE("linearize_table examples") {
  const auto obama = linearize_table(table_of({{"Name", "Barack Obama", std::nullopt}}));
  REQUIRE(obama.size() == 2);
  CHECK(obama[0] == SourceToken{"barack", "name", 1, 2, std::nullopt});
  CHECK(obama[1] == SourceToken{"obama", "name", 2, 1, std::nullopt});

  const auto age = linearize_table(table_of({{"Age", "25", std::nullopt}}));
  REQUIRE(age.size() == 1);
  CHECK(age[0] == SourceToken{"25", "age", 1, 1, std::nullopt});

  const auto two = linearize_table(
      table_of({{"name", "ada lovelace", std::nullopt}, {"occupation", "mathematician", std::nullopt}}));
  REQUIRE(two.size() == 3);
  CHECK(two[0].attribute == "name");
  CHECK(two[1].attribute == "name");
  CHECK(two[2].attribute == "occupation");
}

TEST_CASE("linearize_table carries entity indices when any record has one") {
  const auto seq = linearize_table(table_of({{"name", "ada", 1}, {"city", "london", std::nullopt}}));
  REQUIRE(seq.size() == 2);
  CHECK(seq[0].entity_index == 1);
  CHECK(seq[1].entity_index == 0);
  CHECK_FALSE(linearize_table(table_of({{"name", "ada", std::nullopt}}))[0].entity_index.has_value());
}

TEST_CASE("linearize_table positions and length invariants") {
  std::mt19937_64 rng(9);
  const std::vector<std::string> words = {"a", "b", "c,", "d.", "e f"};
  for (int i = 0; i < 200; ++i) {
    Table t;
    std::size_t total = 0;
    const int records = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < records; ++k) {
      std::string value;
      const int n = 1 + static_cast<int>(rng() % 4);
      for (int j = 0; j < n; ++j) value += words[rng() % words.size()] + " ";
      total += tokenize(value).size();
      t.records.push_back({"attr_" + std::to_string(k), value, std::nullopt});
    }
    const auto seq = linearize_table(t);
    CHECK(seq.size() == total);
    std::size_t start = 0;
    for (const auto& r : t.records) {
      const auto n = static_cast<int>(tokenize(r.value).size());
      for (int j = 0; j < n; ++j) {
        const SourceToken& s = seq[start + static_cast<std::size_t>(j)];
        CHECK(s.pos_fwd == j + 1);
        CHECK(s.pos_fwd + s.pos_bwd == n + 1);
      }
      start += static_cast<std::size_t>(n);
    }
  }
}

TEST_CASE("validation rejects broken invariants") {
  CHECK_THROWS_AS(validate(Record{"", "x", std::nullopt}), std::invalid_argument);
  CHECK_THROWS_AS(validate(Record{"a", " ", std::nullopt}), std::invalid_argument);
  CHECK_THROWS_AS(validate(Record{"a", "x", -1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(Table{}), std::invalid_argument);
  Instance inst;
  inst.table = table_of({{"a", "x", std::nullopt}});
  CHECK_THROWS_AS(validate(inst), std::invalid_argument);
  inst.references = {{}};
  CHECK_THROWS_AS(validate(inst), std::invalid_argument);
  inst.references = {{"x"}};
  CHECK_NOTHROW(validate(inst));
}

TEST_CASE("dataset round trip") {
  std::vector<Instance> data(3);
  data[0].table = table_of({{"name", "John Smith", std::nullopt}, {"born", "1950", std::nullopt}});
  data[0].references = {{"john", "smith", "was", "born", "in", "1950", "."}};
  data[1].table = table_of({{"subject", "Ada", 0}, {"city", "Lon\"don", 1}});
  data[1].references = {{"ada", "london"}, {"ada", "is", "from", "london"}};
  data[2].table = table_of({{"k", "ünï cödé", std::nullopt}});
  data[2].references = {{"ünï"}};
  const fs::path p = scratch("round_trip.jsonl");
  save_dataset(data, p);
  CHECK(load_dataset(p) == data);
}

TEST_CASE("dataset loading errors and edge cases") {
  const fs::path empty = scratch("empty.jsonl");
  std::ofstream(empty).close();
  CHECK(load_dataset(empty).empty());

  const fs::path two = scratch("two.jsonl");
  std::ofstream(two) << R"({"table":[{"attribute":"a","value":"x"}],"references":[["x"]]})" << "\n\n"
                     << R"({"table":[{"attribute":"b","value":"y z"}],"references":[["y"]]})" << "\n";
  CHECK(load_dataset(two).size() == 2);

  const fs::path missing = scratch("missing.jsonl");
  std::ofstream(missing) << R"({"references":[["x"]]})" << "\n";
  try {
    load_dataset(missing);
    FAIL("expected an error");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 1);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    CHECK(std::string(e.what()).find("table") != std::string::npos);
  }

  const fs::path bad = scratch("bad.jsonl");
  std::ofstream(bad) << R"({"table":[{"attribute":"a","value":"x"}],"references":[["x"]]})" << "\n{oops\n";
  try {
    load_dataset(bad);
    FAIL("expected an error");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 2);
  }

  const fs::path invalid = scratch("invalid.jsonl");
  std::ofstream(invalid) << R"({"table":[],"references":[["x"]]})" << "\n";
  CHECK_THROWS_AS(load_dataset(invalid), DatasetError);
}

TEST_CASE("candidates round trip keeps empty lines") {
  const std::vector<Tokens> cands = {{"a", "b"}, {}, {"c"}};
  const fs::path p = scratch("cands.txt");
  save_candidates(cands, p);
  CHECK(load_candidates(p) == cands);
}
