#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "autodiff.hpp"
#include "corpus.hpp"
#include "random.hpp"

namespace parenting {

inline constexpr const char* kPad = "<pad>";
inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";
inline constexpr const char* kUnk = "<unk>";

class Vocab {
 public:
  static constexpr int kPadId = 0, kBosId = 1, kEosId = 2, kUnkId = 3;

  Vocab();  // the four specials only
  explicit Vocab(std::vector<std::string> words);

  /// Specials, then every token seen at least min_count times (descending
  /// frequency, ties in byte order).
  static Vocab build(const std::vector<Tokens>& sequences, std::size_t min_count);

  int id(const std::string& word) const;  // UNK when absent
  bool contains(const std::string& word) const { return index_.contains(word); }
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool operator==(const Vocab& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// Default sizes; see README for the full dimension table.
struct ModelDims {
  std::size_t word_dim = 32;
  std::size_t attr_dim = 32;
  std::size_t pos_dim = 8;
  std::size_t hidden = 64;  // decoder width; each encoder direction uses hidden / 2
  std::size_t max_position = 30;
  std::size_t max_entities = 8;
  bool use_entity = false;

  std::size_t source_feature_dim() const {
    return word_dim + attr_dim + 2 * pos_dim + (use_entity ? pos_dim : 0);
  }
  bool operator==(const ModelDims&) const = default;
};

/// Generation vocabulary extended with the out-of-vocabulary value tokens of
/// one table; repeated source tokens share an id.
class ExtendedVocab {
 public:
  ExtendedVocab(const Vocab& base, const SourceSequence& source);

  int id(const std::string& word) const;
  std::string word(int id) const;
  std::size_t size() const { return base_->size() + oov_.size(); }
  std::size_t base_size() const { return base_->size(); }
  const std::vector<std::size_t>& source_ids() const { return source_ids_; }

 private:
  const Vocab* base_;
  std::vector<std::string> oov_;
  std::unordered_map<std::string, int> oov_index_;
  std::vector<std::size_t> source_ids_;
};

/// Indices of the named parameter blocks inside Model::params.
enum Slot : std::size_t {
  kWordEmbedding,
  kAttrEmbedding,
  kPosFwdEmbedding,
  kPosBwdEmbedding,
  kEntityEmbedding,
  kEncFwdWi,
  kEncFwdWh,
  kEncFwdBi,
  kEncFwdBh,
  kEncBwdWi,
  kEncBwdWh,
  kEncBwdBi,
  kEncBwdBh,
  kDecInitW,
  kDecInitB,
  kDecWi,
  kDecWh,
  kDecBi,
  kDecBh,
  kAttnW,
  kOutW,
  kOutB,
  kVocabW,
  kVocabB,
  kGateW,
  kGateB,
  kSlotCount
};

struct Model {
  ModelDims dims;
  Vocab words;
  Vocab attributes;
  std::vector<Tensor> params;  // indexed by Slot

  /// Builds vocabularies from training data (value and reference tokens with
  /// frequency >= min_count) and draws parameters uniformly in [-init, init].
  static Model create(const std::vector<Instance>& training, ModelDims dims, std::uint64_t seed,
                      std::size_t min_count = 2, double init = 0.1);
  static Model create(Vocab words, Vocab attributes, ModelDims dims, std::uint64_t seed, double init = 0.1);

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const Model&) const = default;
};

/// Per-parameter gradient buffers with the same layout as Model::params.
using Gradients = std::vector<std::vector<double>>;
Gradients zero_gradients(const Model& model);

struct Encoded {
  ad::Var states;  // n x hidden, one row per source token
  ad::Var initial_hidden;
  ExtendedVocab vocab;
};

struct DecodeState {
  ad::Var hidden;
  ad::Var context;
  std::size_t step = 0;
  std::vector<int> prefix;
};

struct StepOptions {
  std::optional<double> forced_gate;  // pins p_gen when set
};

struct StepResult {
  ad::Var distribution;  // over the extended vocabulary
  ad::Var gate;          // p_gen
  ad::Var attention;
  DecodeState next;
};

Encoded encode(ad::Tape& tape, const Model& model, const SourceSequence& source);
DecodeState initial_state(ad::Tape& tape, const Model& model, const Encoded& encoded);
StepResult decode_step(ad::Tape& tape, const Model& model, const Encoded& encoded, const DecodeState& state,
                       int prev_token, const StepOptions& options = {});

/// Sum of log-probabilities of `tokens` (then EOS when append_eos) under
/// teacher forcing. Tokens missing from the extended vocabulary score as UNK.
ad::Var sequence_log_prob(ad::Tape& tape, const Model& model, const Table& table, const Tokens& tokens,
                          bool append_eos, const StepOptions& options = {});

/// Negative log-likelihood of the instance, averaged over its references.
ad::Var teacher_forced_nll(ad::Tape& tape, const Model& model, const Instance& instance,
                           const StepOptions& options = {});
double teacher_forced_nll(const Model& model, const Instance& instance);

Tokens greedy_decode(const Model& model, const Table& table, std::size_t max_len);

struct Sample {
  Tokens tokens;
  std::vector<double> log_probs;  // one per step, including the EOS step when reached
  bool terminated = false;        // EOS was drawn before max_len
};

Sample sample_decode(const Model& model, const Table& table, std::size_t max_len, std::uint64_t seed);

/// Sampling on a recording tape: log_prob_sum is differentiable and equals the
/// sum of sample.log_probs (up to the log floor).
struct GraphSample {
  Sample sample;
  ad::Var log_prob_sum;
};
GraphSample sample_decode(ad::Tape& tape, const Model& model, const Table& table, std::size_t max_len,
                          std::uint64_t seed);

/// Draws an index from a probability vector by inverting its CDF.
std::size_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace parenting
