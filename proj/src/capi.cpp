#include "parenting/parenting.h"

#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include <json.hpp>

#include "analysis.hpp"
#include "corpus.hpp"
#include "datagen.hpp"
#include "metric.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "trainer.hpp"

using nlohmann::json;
using nlohmann::ordered_json;
using namespace parenting;

struct pt_dataset {
  std::vector<Instance> instances;
};

struct pt_model {
  Model model;
};

namespace {

thread_local std::string last_error;

class CallError : public std::runtime_error {
 public:
  CallError(pt_status status, const std::string& what) : std::runtime_error(what), status(status) {}
  pt_status status;
};

template <class Fn>
pt_status guarded(Fn&& fn) {
  last_error.clear();
  try {
    fn();
    return PT_OK;
  } catch (const CallError& e) {
    last_error = e.what();
    return e.status;
  } catch (const DatasetError& e) {
    last_error = e.what();
    return PT_ERR_DATA;
  } catch (const TrainingError& e) {
    last_error = e.what();
    return PT_ERR_RUNTIME;
  } catch (const std::invalid_argument& e) {
    last_error = e.what();
    return PT_ERR_INVALID_ARGUMENT;
  } catch (const json::exception& e) {
    last_error = std::string("invalid JSON: ") + e.what();
    return PT_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    last_error = e.what();
    return PT_ERR_RUNTIME;
  }
}

void require(const void* p, const char* name) {
  if (!p) throw CallError(PT_ERR_INVALID_ARGUMENT, std::string(name) + " is null");
}

void require_file(const char* path, const char* what) {
  require(path, what);
  if (!std::filesystem::is_regular_file(path))
    throw CallError(PT_ERR_IO, std::string(what) + " '" + path + "' does not exist");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void give(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

json parse_object(const char* text) {
  if (!text || !*text) return json::object();
  json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  return j;
}

// One tokenized sentence per line; a trailing newline does not add a line.
std::vector<Tokens> parse_lines(const char* text) {
  std::vector<Tokens> out;
  std::string_view rest(text);
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(split_whitespace(line));
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  return out;
}

void check_aligned(std::size_t candidates, std::size_t instances, const char* what) {
  if (candidates != instances)
    throw CallError(PT_ERR_DATA, std::string(what) + " has " + std::to_string(candidates) + " lines but the dataset has " +
                                     std::to_string(instances) + " instances");
}

TrainConfig resolve_train_config(const std::string& phase, const json& j) {
  if (phase != "mle" && phase != "rl") throw std::invalid_argument("phase must be 'mle' or 'rl'");
  TrainConfig c;
  if (phase == "rl") c.learning_rate = 1e-4;
  for (const auto& [key, value] : j.items()) {
    if (key == "gamma") c.gamma = value.get<double>();
    else if (key == "lambda_train") c.lambda_train = value.get<double>();
    else if (key == "lambda_eval") c.lambda_eval = value.get<double>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "epochs") c.epochs = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "max_decode_length") c.max_decode_length = value.get<std::size_t>();
    else if (key == "selection_metric") c.selection_metric = value.get<std::string>();
    else if (key == "max_grad_norm") c.max_grad_norm = value.get<double>();
    else if (key == "threads") c.threads = value.get<std::size_t>();
    else if (key == "min_count") c.min_count = value.get<std::size_t>();
    else if (key == "dims") {
      for (const auto& [dk, dv] : value.items()) {
        if (dk == "word_dim") c.dims.word_dim = dv.get<std::size_t>();
        else if (dk == "attr_dim") c.dims.attr_dim = dv.get<std::size_t>();
        else if (dk == "pos_dim") c.dims.pos_dim = dv.get<std::size_t>();
        else if (dk == "hidden") c.dims.hidden = dv.get<std::size_t>();
        else if (dk == "max_position") c.dims.max_position = dv.get<std::size_t>();
        else if (dk == "max_entities") c.dims.max_entities = dv.get<std::size_t>();
        else throw std::invalid_argument("unknown dims key '" + dk + "'");
      }
    } else {
      throw std::invalid_argument("unknown training config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["gamma"] = c.gamma;
  j["lambda_train"] = c.lambda_train;
  j["lambda_eval"] = c.lambda_eval;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["max_decode_length"] = c.max_decode_length;
  j["selection_metric"] = c.selection_metric;
  j["max_grad_norm"] = c.max_grad_norm;
  j["threads"] = c.threads;
  j["min_count"] = c.min_count;
  ordered_json d;
  d["word_dim"] = c.dims.word_dim;
  d["attr_dim"] = c.dims.attr_dim;
  d["pos_dim"] = c.dims.pos_dim;
  d["hidden"] = c.dims.hidden;
  d["max_position"] = c.dims.max_position;
  d["max_entities"] = c.dims.max_entities;
  j["dims"] = d;
  return j;
}

ordered_json score_json(const ParentScore& s) {
  ordered_json j;
  j["precision"] = s.precision;
  j["recall_reference"] = s.recall_reference;
  j["coverage_table"] = s.coverage_table;
  j["recall"] = s.recall;
  j["f_score"] = s.f_score;
  return j;
}

}  // namespace

extern "C" {

const char* pt_version(void) { return PARENTING_VERSION; }

const char* pt_last_error(void) { return last_error.c_str(); }

void pt_string_free(char* s) { std::free(s); }

void pt_set_threads(size_t threads) { worker_limit() = threads; }

pt_status pt_dataset_load(const char* path, pt_dataset** out) {
  return guarded([&] {
    require(out, "out");
    require_file(path, "dataset");
    *out = new pt_dataset{load_dataset(path)};
  });
}

pt_status pt_dataset_save(const pt_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "dataset");
    require(path, "path");
    save_dataset(data->instances, path);
  });
}

size_t pt_dataset_size(const pt_dataset* data) { return data ? data->instances.size() : 0; }

void pt_dataset_free(pt_dataset* data) { delete data; }

pt_status pt_make_data(const char* config_json, const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(out_dir, "out_dir");
    const json j = parse_object(config_json);
    DivergenceConfig c;
    c.schema = j.value("schema", c.schema);
    c.count = j.value("count", c.count);
    c.hallucination_rate = j.value("hallucination", c.hallucination_rate);
    c.omission_rate = j.value("omission", c.omission_rate);
    c.seed = j.value("seed", c.seed);
    const GeneratedCorpus corpus = generate_dataset(c);
    write_corpus(corpus, out_dir);
    ordered_json s;
    s["train"] = corpus.train.size();
    s["dev"] = corpus.dev.size();
    s["test"] = corpus.test.size();
    give(summary_json, s.dump());
  });
}

pt_status pt_train_config_resolve(const char* phase, const char* config_json, char** resolved_json) {
  return guarded([&] {
    require(phase, "phase");
    give(resolved_json, to_json(resolve_train_config(phase, parse_object(config_json))).dump());
  });
}

pt_status pt_train(const char* phase, const pt_dataset* train, const pt_dataset* dev, const pt_model* init,
                   const char* config_json, pt_log_fn log, void* user, pt_model** out, char** summary_json) {
  return guarded([&] {
    require(phase, "phase");
    require(train, "train dataset");
    require(dev, "dev dataset");
    require(out, "out");
    const std::string p = phase;
    const TrainConfig config = resolve_train_config(p, parse_object(config_json));
    LogSink sink;
    if (log) sink = [&](const LogRecord& r) { log(to_json_line(r).c_str(), user); };
    TrainResult result;
    if (p == "mle") {
      std::optional<Model> start;
      if (init) start = init->model;
      result = train_mle(train->instances, dev->instances, config, start, sink);
    } else {
      if (!init) throw std::invalid_argument("the rl phase needs a pretrained checkpoint");
      result = train_rl(train->instances, dev->instances, init->model, config, sink);
    }
    ordered_json s;
    s["best_epoch"] = result.best_epoch;
    s["best_dev_parent_f"] = result.best_dev_parent_f;
    s["parameters"] = result.best.parameter_count();
    give(summary_json, s.dump());
    *out = new pt_model{std::move(result.best)};
  });
}

pt_status pt_model_load(const char* path, pt_model** out) {
  return guarded([&] {
    require(out, "out");
    require_file(path, "checkpoint");
    try {
      *out = new pt_model{load_checkpoint(path)};
    } catch (const std::runtime_error& e) {
      throw CallError(PT_ERR_DATA, e.what());
    }
  });
}

pt_status pt_model_save(const pt_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(model->model, path);
  });
}

void pt_model_free(pt_model* model) { delete model; }

pt_status pt_generate(const pt_model* model, const pt_dataset* data, const char* mode, uint64_t seed, size_t max_len,
                      char** lines) {
  return guarded([&] {
    require(model, "model");
    require(data, "dataset");
    require(mode, "mode");
    require(lines, "lines");
    const std::string m = mode;
    if (m != "greedy" && m != "sample") throw std::invalid_argument("mode must be 'greedy' or 'sample'");
    const auto& insts = data->instances;
    std::vector<Tokens> outs(insts.size());
    parallel_for(insts.size(), [&](std::size_t i) {
      outs[i] = m == "greedy" ? greedy_decode(model->model, insts[i].table, max_len)
                              : sample_decode(model->model, insts[i].table, max_len, derive_seed(seed, i)).tokens;
    });
    std::string text;
    for (const auto& o : outs) text += join(o) + "\n";
    *lines = dup(text);
  });
}

pt_status pt_score(const pt_dataset* data, const char* candidates, double lambda, char** report_json,
                   char** table_text) {
  return guarded([&] {
    require(data, "dataset");
    require(candidates, "candidates");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
    const auto cands = parse_lines(candidates);
    check_aligned(cands.size(), data->instances.size(), "candidates");
    const CorpusReport r = corpus_parent(cands, data->instances, lambda);
    ordered_json j;
    j["count"] = r.count;
    j["lambda"] = lambda;
    j["bleu"] = r.bleu;
    j["parent"] = score_json(r.mean);
    give(report_json, j.dump(2));
    std::ostringstream t;
    t << "n      BLEU    PARENT-P  PARENT-R  PARENT-F\n";
    char row[128];
    std::snprintf(row, sizeof row, "%-6zu %-7.2f %-9.2f %-9.2f %.2f\n", r.count, r.bleu, 100 * r.mean.precision,
                  100 * r.mean.recall, 100 * r.mean.f_score);
    t << row;
    give(table_text, t.str());
  });
}

pt_status pt_analyze(const pt_dataset* data, const char* candidates_a, const char* candidates_b, double lambda,
                     char** report_json, char** table_text) {
  return guarded([&] {
    require(data, "dataset");
    require(candidates_a, "candidates a");
    require(candidates_b, "candidates b");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
    const auto a = parse_lines(candidates_a);
    const auto b = parse_lines(candidates_b);
    const auto& insts = data->instances;
    check_aligned(a.size(), insts.size(), "candidates a");
    check_aligned(b.size(), insts.size(), "candidates b");

    std::vector<double> ref_lengths;
    for (const auto& inst : insts) ref_lengths.push_back(static_cast<double>(inst.references.front().size()));
    const double threshold = cluster_lengths(ref_lengths, 2);
    const LengthReport lengths = length_stats(a, b, insts, lambda);
    const ConditionedReport ca = conditioned_scores(a, insts, threshold, lambda);
    const ConditionedReport cb = conditioned_scores(b, insts, threshold, lambda);

    ordered_json j;
    j["lambda"] = lambda;
    j["length"] = ordered_json::parse(to_json(lengths));
    j["threshold"] = threshold;
    j["conditioned_a"] = ordered_json::parse(to_json(ca));
    j["conditioned_b"] = ordered_json::parse(to_json(cb));
    give(report_json, j.dump(2));
    give(table_text, "length statistics (b against a)\n" + render_table(lengths) + "\nsystem a\n" + render_table(ca) +
                         "\nsystem b\n" + render_table(cb));
  });
}

pt_status pt_parent(const char* candidate, const char* instance_json, double lambda, pt_parent_score* out) {
  return guarded([&] {
    require(candidate, "candidate");
    require(instance_json, "instance");
    require(out, "out");
    const ParentScore s = parent(split_whitespace(candidate), instance_from_json_line(instance_json, 1), lambda);
    *out = {s.precision, s.recall_reference, s.coverage_table, s.recall, s.f_score};
  });
}

pt_status pt_copy_count(const char* candidate, const char* instance_json, size_t* out) {
  return guarded([&] {
    require(candidate, "candidate");
    require(instance_json, "instance");
    require(out, "out");
    *out = copy_count(split_whitespace(candidate), instance_from_json_line(instance_json, 1).table);
  });
}

pt_status pt_cluster_lengths(const double* lengths, size_t n, size_t k, double* threshold) {
  return guarded([&] {
    require(threshold, "threshold");
    if (n) require(lengths, "lengths");
    *threshold = cluster_lengths(std::vector<double>(lengths, lengths + n), k);
  });
}

}  // extern "C"
