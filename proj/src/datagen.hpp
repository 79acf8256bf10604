#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "corpus.hpp"

namespace parenting {

struct DivergenceConfig {
  double hallucination_rate = 0.0;  // expected fraction of references with an ungrounded phrase
  double omission_rate = 0.0;       // probability that one realized field is dropped
  std::string schema = "biography";
  std::size_t count = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Span {
  std::size_t start = 0;  // token offsets into the reference, [start, end)
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct Annotation {
  std::size_t index = 0;
  std::vector<Span> hallucinated_spans;
  std::vector<std::string> omitted_attributes;
  bool operator==(const Annotation&) const = default;
};

struct GeneratedInstance {
  Instance instance;
  Annotation annotation;
};

struct GeneratedCorpus {
  std::vector<Instance> train, dev, test;
  std::vector<Annotation> train_notes, dev_notes, test_notes;
};

/// The biography schema's fixed vocabulary, exposed for tests and docs.
struct SchemaLexicons {
  std::vector<std::string> attributes;
  std::vector<std::string> first_names, last_names, months, places, nationalities, occupations, schools;
  std::vector<std::string> distractors;
  std::vector<std::string> hallucination_patterns;  // "{}" marks the distractor slot
  std::vector<std::vector<std::string>> templates;  // segments, "{field}" placeholders
};

const SchemaLexicons& biography_schema();

/// Pure function of (config, index).
GeneratedInstance generate_instance(const DivergenceConfig& config, std::size_t index);

/// 80/10/10 split over consecutive index ranges.
GeneratedCorpus generate_dataset(const DivergenceConfig& config);

/// Hallucination probability for an instance whose occupation sits at
/// `occupation_index` in the schema lexicon. Averages to config.hallucination_rate
/// over the (uniformly drawn) occupations.
double hallucination_probability(double rate, std::size_t occupation_index);

std::string annotation_to_json_line(const Annotation& a, const Instance& instance);

/// Writes {split}.jsonl and {split}.annotations.jsonl for train/dev/test.
void write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& out_dir);

}  // namespace parenting
