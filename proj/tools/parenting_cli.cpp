#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "parenting/parenting.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0, kExitRuntime = 1, kExitUsage = 2;

struct Failure {
  int code;
  std::string message;
};

void check(pt_status s) {
  if (s == PT_OK) return;
  throw Failure{s == PT_ERR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime, pt_last_error()};
}

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { pt_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Dataset {
  pt_dataset* p = nullptr;
  explicit Dataset(const fs::path& path) { check(pt_dataset_load(path.string().c_str(), &p)); }
  ~Dataset() { pt_dataset_free(p); }
};

struct ModelHandle {
  pt_model* p = nullptr;
  ModelHandle() = default;
  explicit ModelHandle(const fs::path& path) { check(pt_model_load(path.string().c_str(), &p)); }
  ~ModelHandle() { pt_model_free(p); }
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitRuntime, "cannot open '" + path.string() + "'"};
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Failure{kExitRuntime, "cannot write '" + path.string() + "'"};
  }
  fs::rename(tmp, path);
}

struct Manifest {
  std::string command;
  ordered_json config = ordered_json::object();
  std::uint64_t seed = 0;
  ordered_json inputs = ordered_json::object();
  ordered_json outputs = ordered_json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& path) const {
    ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["version"] = pt_version();
    j["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(path, j.dump(2) + "\n");
  }
};

struct MakeDataArgs {
  std::string schema = "biography";
  std::size_t count = 100;
  double hallucination = 0.0, omission = 0.0;
  std::uint64_t seed = 1;
  std::string out;
};

void cmd_make_data(const MakeDataArgs& a) {
  Manifest m;
  m.command = "make-data";
  m.seed = a.seed;
  m.config["schema"] = a.schema;
  m.config["count"] = a.count;
  m.config["hallucination"] = a.hallucination;
  m.config["omission"] = a.omission;
  m.config["seed"] = a.seed;
  OwnedString summary;
  check(pt_make_data(m.config.dump().c_str(), a.out.c_str(), &summary.p));
  for (const char* split : {"train", "dev", "test"}) {
    m.outputs[split] = (fs::path(a.out) / (std::string(split) + ".jsonl")).string();
    m.outputs[std::string(split) + "_annotations"] = (fs::path(a.out) / (std::string(split) + ".annotations.jsonl")).string();
  }
  m.write(fs::path(a.out) / "manifest.json");
  std::cout << summary.str() << "\n";
}

struct TrainArgs {
  std::string phase, data, checkpoint, out;
  std::optional<double> gamma, lambda_train, lambda_eval, learning_rate, max_grad_norm;
  std::optional<std::size_t> epochs, batch_size, max_len, hidden;
  std::uint64_t seed = 1;
};

void log_to_file(const char* line, void* user) {
  auto& out = *static_cast<std::string*>(user);
  out += line;
  out += '\n';
}

void cmd_train(const TrainArgs& a, std::size_t threads) {
  if (a.phase == "rl" && a.checkpoint.empty()) throw Failure{kExitUsage, "--phase rl requires --checkpoint"};
  ordered_json overrides = ordered_json::object();
  overrides["seed"] = a.seed;
  overrides["threads"] = threads;
  if (a.gamma) overrides["gamma"] = *a.gamma;
  if (a.lambda_train) overrides["lambda_train"] = *a.lambda_train;
  if (a.lambda_eval) overrides["lambda_eval"] = *a.lambda_eval;
  if (a.learning_rate) overrides["learning_rate"] = *a.learning_rate;
  if (a.max_grad_norm) overrides["max_grad_norm"] = *a.max_grad_norm;
  if (a.epochs) overrides["epochs"] = *a.epochs;
  if (a.batch_size) overrides["batch_size"] = *a.batch_size;
  if (a.max_len) overrides["max_decode_length"] = *a.max_len;
  if (a.hidden) overrides["dims"] = {{"hidden", *a.hidden}};
  OwnedString resolved;
  check(pt_train_config_resolve(a.phase.c_str(), overrides.dump().c_str(), &resolved.p));

  Manifest m;
  m.command = "train";
  m.seed = a.seed;
  m.config = ordered_json::parse(resolved.str());
  m.config["phase"] = a.phase;
  const fs::path data(a.data), out(a.out);
  m.inputs["train"] = (data / "train.jsonl").string();
  m.inputs["dev"] = (data / "dev.jsonl").string();
  if (!a.checkpoint.empty()) m.inputs["checkpoint"] = a.checkpoint;

  Dataset train(data / "train.jsonl"), dev(data / "dev.jsonl");
  ModelHandle init;
  if (!a.checkpoint.empty()) check(pt_model_load(a.checkpoint.c_str(), &init.p));
  std::string log;
  ModelHandle trained;
  OwnedString summary;
  check(pt_train(a.phase.c_str(), train.p, dev.p, init.p, resolved.p, log_to_file, &log, &trained.p, &summary.p));

  fs::create_directories(out);
  check(pt_model_save(trained.p, (out / "model.json").string().c_str()));
  write_text(out / "train_log.jsonl", log);
  m.outputs["checkpoint"] = (out / "model.json").string();
  m.outputs["log"] = (out / "train_log.jsonl").string();
  m.config["summary"] = ordered_json::parse(summary.str());
  m.write(out / "manifest.json");
  std::cout << summary.str() << "\n";
}

struct GenerateArgs {
  std::string checkpoint, data, mode = "greedy", out;
  std::uint64_t seed = 1;
  std::size_t max_len = 40;
};

void cmd_generate(const GenerateArgs& a) {
  ModelHandle model(a.checkpoint);
  Dataset data(a.data);
  OwnedString lines;
  check(pt_generate(model.p, data.p, a.mode.c_str(), a.seed, a.max_len, &lines.p));
  write_text(a.out, lines.str());
  Manifest m;
  m.command = "generate";
  m.seed = a.seed;
  m.config["mode"] = a.mode;
  m.config["max_len"] = a.max_len;
  m.config["seed"] = a.seed;
  m.inputs["checkpoint"] = a.checkpoint;
  m.inputs["data"] = a.data;
  m.outputs["candidates"] = a.out;
  m.write(a.out + ".manifest.json");
}

struct ScoreArgs {
  std::string data, candidates, a, b, out;
  double lambda = 0.5;
};

void cmd_score(const ScoreArgs& s) {
  Dataset data(s.data);
  OwnedString report, table;
  check(pt_score(data.p, read_text(s.candidates).c_str(), s.lambda, &report.p, &table.p));
  write_text(s.out, report.str() + "\n");
  write_text(s.out + ".txt", table.str());
  Manifest m;
  m.command = "score";
  m.config["lambda"] = s.lambda;
  m.inputs["data"] = s.data;
  m.inputs["candidates"] = s.candidates;
  m.outputs["report"] = s.out;
  m.outputs["table"] = s.out + ".txt";
  m.write(s.out + ".manifest.json");
  std::cout << table.str();
}

void cmd_analyze(const ScoreArgs& s) {
  Dataset data(s.data);
  OwnedString report, table;
  check(pt_analyze(data.p, read_text(s.a).c_str(), read_text(s.b).c_str(), s.lambda, &report.p, &table.p));
  write_text(s.out, report.str() + "\n");
  write_text(s.out + ".txt", table.str());
  Manifest m;
  m.command = "analyze";
  m.config["lambda"] = s.lambda;
  m.inputs["data"] = s.data;
  m.inputs["a"] = s.a;
  m.inputs["b"] = s.b;
  m.outputs["report"] = s.out;
  m.outputs["table"] = s.out + ".txt";
  m.write(s.out + ".manifest.json");
  std::cout << table.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PARENT metric and PARENTing fine-tuning on synthetic table-to-text corpora"};
  app.set_config("--config", "", "TOML/INI file with flag values; explicit flags win");
  app.set_version_flag("--version", std::string(pt_version()));
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

  MakeDataArgs md;
  auto* make = app.add_subcommand("make-data", "Generate a synthetic corpus with train/dev/test splits");
  make->add_option("--schema", md.schema)->check(CLI::IsMember({"biography"}));
  make->add_option("--count", md.count)->check(CLI::Range(std::size_t{10}, std::size_t{100000000}));
  make->add_option("--hallucination", md.hallucination)->check(CLI::Range(0.0, 1.0));
  make->add_option("--omission", md.omission)->check(CLI::Range(0.0, 1.0));
  make->add_option("--seed", md.seed);
  make->add_option("--out", md.out)->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "MLE pretraining or mixed-objective RL fine-tuning");
  train->add_option("--phase", tr.phase)->required()->check(CLI::IsMember({"mle", "rl"}));
  train->add_option("--data", tr.data, "Directory with train.jsonl and dev.jsonl")->required();
  train->add_option("--checkpoint", tr.checkpoint, "Starting model; required for --phase rl");
  train->add_option("--gamma", tr.gamma)->check(CLI::Range(0.0, 1.0));
  train->add_option("--lambda-train", tr.lambda_train)->check(CLI::Range(0.0, 1.0));
  train->add_option("--lambda-eval", tr.lambda_eval)->check(CLI::Range(0.0, 1.0));
  train->add_option("--lr", tr.learning_rate)->check(CLI::PositiveNumber);
  train->add_option("--max-grad-norm", tr.max_grad_norm);
  train->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  train->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--max-len", tr.max_len)->check(CLI::PositiveNumber);
  train->add_option("--hidden", tr.hidden)->check(CLI::PositiveNumber);
  train->add_option("--seed", tr.seed);
  train->add_option("--out", tr.out)->required();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Decode one line per instance");
  generate->add_option("--checkpoint", gen.checkpoint)->required();
  generate->add_option("--data", gen.data)->required();
  generate->add_option("--mode", gen.mode)->check(CLI::IsMember({"greedy", "sample"}));
  generate->add_option("--seed", gen.seed);
  generate->add_option("--max-len", gen.max_len)->check(CLI::PositiveNumber);
  generate->add_option("--out", gen.out)->required();

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Corpus BLEU and PARENT");
  score->add_option("--data", sc.data)->required();
  score->add_option("--candidates", sc.candidates)->required();
  score->add_option("--lambda", sc.lambda)->check(CLI::Range(0.0, 1.0));
  score->add_option("--out", sc.out)->required();

  ScoreArgs an;
  auto* analyze = app.add_subcommand("analyze", "Length statistics and length-conditioned scores of two systems");
  analyze->add_option("--data", an.data)->required();
  analyze->add_option("--a", an.a)->required();
  analyze->add_option("--b", an.b)->required();
  analyze->add_option("--lambda", an.lambda)->check(CLI::Range(0.0, 1.0));
  analyze->add_option("--out", an.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    pt_set_threads(threads);
    if (*make) cmd_make_data(md);
    else if (*train) cmd_train(tr, threads);
    else if (*generate) cmd_generate(gen);
    else if (*score) cmd_score(sc);
    else if (*analyze) cmd_analyze(an);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
