#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "parenting/parenting.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "parenting_test_capi";
  fs::create_directories(dir);
  return dir;
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pt_string_free(s);
  return out;
}

std::size_t lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("version and error reporting") {
  CHECK(std::strlen(pt_version()) > 0);
  pt_dataset* d = nullptr;
  CHECK(pt_dataset_load((scratch() / "nope.jsonl").string().c_str(), &d) == PT_ERR_IO);
  CHECK(std::string(pt_last_error()).find("nope.jsonl") != std::string::npos);
  CHECK(pt_dataset_load(nullptr, &d) == PT_ERR_INVALID_ARGUMENT);
  CHECK(pt_dataset_size(nullptr) == 0);
}

TEST_CASE("malformed dataset reports the line") {
  const fs::path p = scratch() / "bad.jsonl";
  std::ofstream(p) << "{\"references\":[[\"x\"]]}\n";
  pt_dataset* d = nullptr;
  CHECK(pt_dataset_load(p.string().c_str(), &d) == PT_ERR_DATA);
  CHECK(std::string(pt_last_error()).find("line 1") != std::string::npos);
}

TEST_CASE("make data, train, generate, score and analyze through the C API") {
  const fs::path dir = scratch() / "flow";
  char* summary = nullptr;
  REQUIRE(pt_make_data(R"({"count": 40, "hallucination": 0.3, "seed": 4})", dir.string().c_str(), &summary) == PT_OK);
  CHECK(take(summary) == R"({"train":32,"dev":4,"test":4})");
  CHECK(pt_make_data(R"({"hallucination": 1.5})", dir.string().c_str(), nullptr) == PT_ERR_INVALID_ARGUMENT);

  pt_dataset *train = nullptr, *dev = nullptr;
  REQUIRE(pt_dataset_load((dir / "train.jsonl").string().c_str(), &train) == PT_OK);
  REQUIRE(pt_dataset_load((dir / "dev.jsonl").string().c_str(), &dev) == PT_OK);
  CHECK(pt_dataset_size(train) == 32);

  char* resolved = nullptr;
  REQUIRE(pt_train_config_resolve("rl", "{}", &resolved) == PT_OK);
  const std::string rl_defaults = take(resolved);
  CHECK(rl_defaults.find("\"gamma\":0.9") != std::string::npos);
  CHECK(rl_defaults.find("\"lambda_train\":1.0") != std::string::npos);
  CHECK(pt_train_config_resolve("mle", R"({"bogus": 1})", &resolved) == PT_ERR_INVALID_ARGUMENT);

  const char* cfg = R"({"epochs": 1, "batch_size": 8, "max_decode_length": 10,
                        "dims": {"word_dim": 8, "attr_dim": 4, "pos_dim": 2, "hidden": 8}})";
  std::string log;
  auto sink = [](const char* line, void* user) { *static_cast<std::string*>(user) += std::string(line) + "\n"; };
  pt_model* mle = nullptr;
  REQUIRE(pt_train("mle", train, dev, nullptr, cfg, sink, &log, &mle, &summary) == PT_OK);
  CHECK(take(summary).find("best_epoch") != std::string::npos);
  CHECK(lines(log) == 3);

  pt_model* rl = nullptr;
  CHECK(pt_train("rl", train, dev, nullptr, cfg, nullptr, nullptr, &rl, nullptr) == PT_ERR_INVALID_ARGUMENT);
  REQUIRE(pt_train("rl", train, dev, mle, cfg, nullptr, nullptr, &rl, nullptr) == PT_OK);

  const std::string ckpt = (dir / "model.json").string();
  REQUIRE(pt_model_save(rl, ckpt.c_str()) == PT_OK);
  pt_model* back = nullptr;
  REQUIRE(pt_model_load(ckpt.c_str(), &back) == PT_OK);

  char *g1 = nullptr, *g2 = nullptr;
  REQUIRE(pt_generate(back, dev, "sample", 3, 10, &g1) == PT_OK);
  REQUIRE(pt_generate(back, dev, "sample", 3, 10, &g2) == PT_OK);
  const std::string sampled = take(g1);
  CHECK(sampled == take(g2));
  CHECK(lines(sampled) == 4);
  CHECK(pt_generate(back, dev, "beam", 3, 10, &g1) == PT_ERR_INVALID_ARGUMENT);

  char *report = nullptr, *table = nullptr;
  REQUIRE(pt_score(dev, sampled.c_str(), 0.5, &report, &table) == PT_OK);
  CHECK(take(report).find("\"parent\"") != std::string::npos);
  CHECK(take(table).find("PARENT-F") != std::string::npos);
  CHECK(pt_score(dev, "one line only\n", 0.5, &report, &table) == PT_ERR_DATA);
  const std::string err = pt_last_error();
  CHECK(err.find("1 lines") != std::string::npos);
  CHECK(err.find("4 instances") != std::string::npos);

  REQUIRE(pt_analyze(dev, sampled.c_str(), sampled.c_str(), 0.5, &report, &table) == PT_OK);
  const std::string analysis = take(report);
  CHECK(analysis.find("\"length_delta\": 0.0") != std::string::npos);
  CHECK(analysis.find("\"f_delta\": 0.0") != std::string::npos);
  take(table);

  pt_model_free(back);
  pt_model_free(rl);
  pt_model_free(mle);
  pt_dataset_free(train);
  pt_dataset_free(dev);
}

TEST_CASE("missing checkpoint is an IO error") {
  pt_model* m = nullptr;
  CHECK(pt_model_load((scratch() / "absent.json").string().c_str(), &m) == PT_ERR_IO);
  CHECK(m == nullptr);
}

TEST_CASE("single-instance helpers") {
  const char* inst = R"({"table":[{"attribute":"name","value":"john smith"},{"attribute":"occupation","value":"engineer"}],
                         "references":[["john","smith","is","an","engineer"]]})";
  pt_parent_score s{};
  REQUIRE(pt_parent("john smith is an engineer", inst, 1.0, &s) == PT_OK);
  CHECK(s.f_score == 1.0);
  CHECK(s.recall == s.recall_reference);
  std::size_t copies = 0;
  REQUIRE(pt_copy_count("john john likes engineering", inst, &copies) == PT_OK);
  CHECK(copies == 2);
  const double lengths[] = {10, 10, 50, 50};
  double threshold = 0;
  REQUIRE(pt_cluster_lengths(lengths, 4, 2, &threshold) == PT_OK);
  CHECK(threshold == 30.0);
  CHECK(pt_cluster_lengths(lengths, 4, 1, &threshold) == PT_ERR_INVALID_ARGUMENT);
  const double same[] = {4, 4};
  CHECK(pt_cluster_lengths(same, 2, 2, &threshold) == PT_ERR_INVALID_ARGUMENT);
}
