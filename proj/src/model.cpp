#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace parenting {

using ad::Tape;
using ad::Var;

// ---------------------------------------------------------------- vocabulary

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> words) {
  const std::vector<std::string> specials = {kPad, kBos, kEos, kUnk};
  for (const auto& s : specials) {
    index_.emplace(s, static_cast<int>(words_.size()));
    words_.push_back(s);
  }
  for (auto& w : words) {
    if (index_.contains(w)) continue;
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(std::move(w));
  }
}

Vocab Vocab::build(const std::vector<Tokens>& sequences, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : sequences)
    for (const auto& t : seq) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts)
    if (c >= min_count) kept.emplace_back(w, c);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(w);
  return Vocab(std::move(words));
}

int Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnkId : it->second;
}

ExtendedVocab::ExtendedVocab(const Vocab& base, const SourceSequence& source) : base_(&base) {
  source_ids_.reserve(source.size());
  for (const auto& tok : source) {
    if (base.contains(tok.value_token)) {
      source_ids_.push_back(static_cast<std::size_t>(base.id(tok.value_token)));
      continue;
    }
    auto [it, inserted] = oov_index_.emplace(tok.value_token, static_cast<int>(base.size() + oov_.size()));
    if (inserted) oov_.push_back(tok.value_token);
    source_ids_.push_back(static_cast<std::size_t>(it->second));
  }
}

int ExtendedVocab::id(const std::string& word) const {
  if (base_->contains(word)) return base_->id(word);
  auto it = oov_index_.find(word);
  return it == oov_index_.end() ? Vocab::kUnkId : it->second;
}

std::string ExtendedVocab::word(int id) const {
  const auto base = static_cast<int>(base_->size());
  if (id < base) return base_->word(id);
  return oov_.at(static_cast<std::size_t>(id - base));
}

// ---------------------------------------------------------------- parameters

namespace {

struct BlockShape {
  const char* name;
  std::size_t rows, cols;
};

std::vector<BlockShape> block_shapes(const ModelDims& d, std::size_t vocab, std::size_t attrs) {
  const std::size_t he = d.hidden / 2;
  const std::size_t h = d.hidden;
  const std::size_t in = d.source_feature_dim();
  const std::size_t dec_in = d.word_dim + h;
  return {
      {"word_embedding", vocab, d.word_dim},
      {"attr_embedding", attrs, d.attr_dim},
      {"pos_fwd_embedding", d.max_position, d.pos_dim},
      {"pos_bwd_embedding", d.max_position, d.pos_dim},
      {"entity_embedding", d.use_entity ? d.max_entities : 0, d.pos_dim},
      {"enc_fwd_wi", 3 * he, in},
      {"enc_fwd_wh", 3 * he, he},
      {"enc_fwd_bi", 3 * he, 1},
      {"enc_fwd_bh", 3 * he, 1},
      {"enc_bwd_wi", 3 * he, in},
      {"enc_bwd_wh", 3 * he, he},
      {"enc_bwd_bi", 3 * he, 1},
      {"enc_bwd_bh", 3 * he, 1},
      {"dec_init_w", h, 2 * he},
      {"dec_init_b", h, 1},
      {"dec_wi", 3 * h, dec_in},
      {"dec_wh", 3 * h, h},
      {"dec_bi", 3 * h, 1},
      {"dec_bh", 3 * h, 1},
      {"attn_w", h, h},
      {"out_w", h, 2 * h},
      {"out_b", h, 1},
      {"vocab_w", vocab, h},
      {"vocab_b", vocab, 1},
      {"gate_w", 1, 2 * h + d.word_dim},
      {"gate_b", 1, 1},
  };
}

void check_dims(const ModelDims& d) {
  if (d.hidden < 2 || d.hidden % 2) throw std::invalid_argument("hidden size must be even and >= 2");
  if (!d.word_dim || !d.attr_dim || !d.pos_dim || !d.max_position)
    throw std::invalid_argument("model dimensions must be positive");
}

}  // namespace

Model Model::create(Vocab words, Vocab attributes, ModelDims dims, std::uint64_t seed, double init) {
  check_dims(dims);
  Model m;
  m.dims = dims;
  m.words = std::move(words);
  m.attributes = std::move(attributes);
  std::mt19937_64 rng(seed);
  for (const auto& b : block_shapes(dims, m.words.size(), m.attributes.size())) {
    Tensor t(b.name, b.rows, b.cols);
    for (auto& x : t.data) x = (2.0 * uniform01(rng) - 1.0) * init;
    m.params.push_back(std::move(t));
  }
  return m;
}

Model Model::create(const std::vector<Instance>& training, ModelDims dims, std::uint64_t seed,
                    std::size_t min_count, double init) {
  std::vector<Tokens> text;
  std::vector<Tokens> fields;
  bool entities = false;
  for (const auto& inst : training) {
    Tokens values, attrs;
    for (const auto& st : linearize_table(inst.table)) {
      values.push_back(st.value_token);
      attrs.push_back(st.attribute);
      entities = entities || st.entity_index.has_value();
    }
    text.push_back(std::move(values));
    fields.push_back(std::move(attrs));
    for (const auto& ref : inst.references) text.push_back(ref);
  }
  dims.use_entity = dims.use_entity || entities;
  return create(Vocab::build(text, min_count), Vocab::build(fields, 1), dims, seed, init);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

bool Model::all_finite() const {
  for (const auto& p : params)
    for (double x : p.data)
      if (!std::isfinite(x)) return false;
  return true;
}

Gradients zero_gradients(const Model& model) {
  Gradients g(model.params.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i].assign(model.params[i].size(), 0.0);
  return g;
}

// ---------------------------------------------------------------- network

namespace {

Var P(Tape& t, const Model& m, Slot s) { return t.param(m.params[s], s); }

/// Gated recurrent cell; `first` names the input weight block, followed by
/// recurrent weights, input bias and recurrent bias.
Var gru(Tape& t, const Model& m, Slot first, Var x, Var h) {
  const std::size_t n = t.size(h);
  const Var gi = t.add(t.matmul(P(t, m, first), x), P(t, m, static_cast<Slot>(first + 2)));
  const Var gh = t.add(t.matmul(P(t, m, static_cast<Slot>(first + 1)), h), P(t, m, static_cast<Slot>(first + 3)));
  const Var r = t.sigmoid(t.add(t.slice(gi, 0, n), t.slice(gh, 0, n)));
  const Var z = t.sigmoid(t.add(t.slice(gi, n, n), t.slice(gh, n, n)));
  const Var cand = t.tanh(t.add(t.slice(gi, 2 * n, n), t.mul(r, t.slice(gh, 2 * n, n))));
  return t.add(t.mul(t.one_minus(z), cand), t.mul(z, h));
}

std::size_t clamp_index(int value, std::size_t limit) {
  if (value < 1) return 0;
  return std::min(static_cast<std::size_t>(value), limit) - 1;
}

}  // namespace

Encoded encode(Tape& t, const Model& m, const SourceSequence& source) {
  if (source.empty()) throw std::invalid_argument("encode: empty source sequence");
  const ModelDims& d = m.dims;
  const std::size_t he = d.hidden / 2;
  std::vector<Var> features;
  features.reserve(source.size());
  for (const auto& tok : source) {
    std::vector<Var> parts = {
        t.row(P(t, m, kWordEmbedding), static_cast<std::size_t>(m.words.id(tok.value_token))),
        t.row(P(t, m, kAttrEmbedding), static_cast<std::size_t>(m.attributes.id(tok.attribute))),
        t.row(P(t, m, kPosFwdEmbedding), clamp_index(tok.pos_fwd, d.max_position)),
        t.row(P(t, m, kPosBwdEmbedding), clamp_index(tok.pos_bwd, d.max_position)),
    };
    if (d.use_entity) {
      const int e = tok.entity_index.value_or(0);
      parts.push_back(t.row(P(t, m, kEntityEmbedding), clamp_index(e + 1, d.max_entities)));
    }
    features.push_back(t.concat(parts));
  }
  const std::size_t n = source.size();
  std::vector<Var> fwd(n), bwd(n);
  Var h = t.zeros(he);
  for (std::size_t i = 0; i < n; ++i) fwd[i] = h = gru(t, m, kEncFwdWi, features[i], h);
  h = t.zeros(he);
  for (std::size_t i = n; i-- > 0;) bwd[i] = h = gru(t, m, kEncBwdWi, features[i], h);
  std::vector<Var> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = t.concat({fwd[i], bwd[i]});
  const Var summary = t.concat({fwd[n - 1], bwd[0]});
  const Var init = t.tanh(t.add(t.matmul(P(t, m, kDecInitW), summary), P(t, m, kDecInitB)));
  return Encoded{t.stack_rows(rows), init, ExtendedVocab(m.words, source)};
}

DecodeState initial_state(Tape& t, const Model& m, const Encoded& enc) {
  return DecodeState{enc.initial_hidden, t.zeros(m.dims.hidden), 0, {}};
}

StepResult decode_step(Tape& t, const Model& m, const Encoded& enc, const DecodeState& state, int prev_token,
                       const StepOptions& options) {
  const std::size_t vocab = m.words.size();
  const std::size_t input_id =
      prev_token >= 0 && static_cast<std::size_t>(prev_token) < vocab ? static_cast<std::size_t>(prev_token)
                                                                       : static_cast<std::size_t>(Vocab::kUnkId);
  const Var emb = t.row(P(t, m, kWordEmbedding), input_id);
  const Var s = gru(t, m, kDecWi, t.concat({emb, state.context}), state.hidden);
  const Var scores = t.matmul(enc.states, t.matmul(P(t, m, kAttnW), s));
  const Var alpha = t.softmax(scores);
  const Var ctx = t.matvec_t(enc.states, alpha);
  const Var out = t.tanh(t.add(t.matmul(P(t, m, kOutW), t.concat({s, ctx})), P(t, m, kOutB)));
  const Var pv = t.softmax(t.add(t.matmul(P(t, m, kVocabW), out), P(t, m, kVocabB)));
  const Var gate = options.forced_gate
                       ? t.scalar(*options.forced_gate)
                       : t.sigmoid(t.add(t.matmul(P(t, m, kGateW), t.concat({ctx, s, emb})), P(t, m, kGateB)));

  Var generated = pv;
  const std::size_t ext = enc.vocab.size();
  if (ext > vocab) {
    std::vector<std::size_t> identity(vocab);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    generated = t.scatter_add(t.zeros(ext), pv, std::move(identity));
  }
  const Var dist =
      t.scatter_add(t.mul_scalar(generated, gate), t.mul_scalar(alpha, t.one_minus(gate)), enc.vocab.source_ids());

  DecodeState next{s, ctx, state.step + 1, state.prefix};
  if (prev_token != Vocab::kBosId) next.prefix.push_back(prev_token);
  return StepResult{dist, gate, alpha, std::move(next)};
}

Var sequence_log_prob(Tape& t, const Model& m, const Table& table, const Tokens& tokens, bool append_eos,
                      const StepOptions& options) {
  const Encoded enc = encode(t, m, linearize_table(table));
  DecodeState state = initial_state(t, m, enc);
  std::vector<int> targets;
  targets.reserve(tokens.size() + 1);
  for (const auto& tok : tokens) targets.push_back(enc.vocab.id(tok));
  if (append_eos) targets.push_back(Vocab::kEosId);
  if (targets.empty()) return t.scalar(0.0);
  std::vector<Var> terms;
  terms.reserve(targets.size());
  int prev = Vocab::kBosId;
  for (int target : targets) {
    StepResult step = decode_step(t, m, enc, state, prev, options);
    terms.push_back(t.log(t.gather(step.distribution, static_cast<std::size_t>(target))));
    state = std::move(step.next);
    prev = target;
  }
  return t.sum(t.concat(terms));
}

Var teacher_forced_nll(Tape& t, const Model& m, const Instance& inst, const StepOptions& options) {
  if (inst.references.empty()) throw std::invalid_argument("teacher_forced_nll: instance has no reference");
  std::vector<Var> per_ref;
  for (const auto& ref : inst.references) {
    if (ref.empty()) throw std::invalid_argument("teacher_forced_nll: empty reference");
    per_ref.push_back(sequence_log_prob(t, m, inst.table, ref, true, options));
  }
  const Var total = per_ref.size() == 1 ? per_ref.front() : t.sum(t.concat(per_ref));
  return t.scale(total, -1.0 / static_cast<double>(per_ref.size()));
}

double teacher_forced_nll(const Model& m, const Instance& inst) {
  Tape t(false);
  return t.item(teacher_forced_nll(t, m, inst));
}

// ---------------------------------------------------------------- decoding

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

namespace {

template <class Choose>
GraphSample run_decoder(Tape& t, const Model& m, const Table& table, std::size_t max_len, Choose choose) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  const Encoded enc = encode(t, m, linearize_table(table));
  DecodeState state = initial_state(t, m, enc);
  GraphSample out;
  std::vector<Var> terms;
  int prev = Vocab::kBosId;
  for (std::size_t step = 0; step < max_len; ++step) {
    StepResult r = decode_step(t, m, enc, state, prev);
    const auto dist = t.value(r.distribution);
    const std::size_t pick = choose(dist);
    out.sample.log_probs.push_back(std::log(std::max(dist[pick], ad::kLogFloor)));
    if (t.requires_grad()) terms.push_back(t.log(t.gather(r.distribution, pick)));
    if (pick == static_cast<std::size_t>(Vocab::kEosId)) {
      out.sample.terminated = true;
      break;
    }
    out.sample.tokens.push_back(enc.vocab.word(static_cast<int>(pick)));
    state = std::move(r.next);
    prev = static_cast<int>(pick);
  }
  out.log_prob_sum = terms.empty() ? t.scalar(0.0) : t.sum(t.concat(terms));
  return out;
}

}  // namespace

Tokens greedy_decode(const Model& m, const Table& table, std::size_t max_len) {
  Tape t(false);
  return run_decoder(t, m, table, max_len, [](std::span<const double> d) { return argmax(d); }).sample.tokens;
}

Sample sample_decode(const Model& m, const Table& table, std::size_t max_len, std::uint64_t seed) {
  Tape t(false);
  return sample_decode(t, m, table, max_len, seed).sample;
}

GraphSample sample_decode(Tape& t, const Model& m, const Table& table, std::size_t max_len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return run_decoder(t, m, table, max_len, [&](std::span<const double> d) { return sample_categorical(d, rng); });
}

// ---------------------------------------------------------------- checkpoints

namespace {
constexpr const char* kCheckpointFormat = "parenting-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  using nlohmann::json;
  json params = json::array();
  for (const auto& p : m.params)
    params.push_back({{"name", p.name}, {"rows", p.rows}, {"cols", p.cols}, {"data", p.data}});
  const ModelDims& d = m.dims;
  json j = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"dims",
       {{"word_dim", d.word_dim},
        {"attr_dim", d.attr_dim},
        {"pos_dim", d.pos_dim},
        {"hidden", d.hidden},
        {"max_position", d.max_position},
        {"max_entities", d.max_entities},
        {"use_entity", d.use_entity}}},
      {"words", m.words.words()},
      {"attributes", m.attributes.words()},
      {"params", std::move(params)},
  };
  write_file_atomically(path, j.dump());
}

Model load_checkpoint(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != kCheckpointFormat) throw std::runtime_error("not a parenting checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw std::runtime_error("unsupported checkpoint version " + j.at("version").dump());
    Model m;
    const auto& d = j.at("dims");
    m.dims.word_dim = d.at("word_dim");
    m.dims.attr_dim = d.at("attr_dim");
    m.dims.pos_dim = d.at("pos_dim");
    m.dims.hidden = d.at("hidden");
    m.dims.max_position = d.at("max_position");
    m.dims.max_entities = d.at("max_entities");
    m.dims.use_entity = d.at("use_entity");
    check_dims(m.dims);
    auto words = j.at("words").get<std::vector<std::string>>();
    auto attrs = j.at("attributes").get<std::vector<std::string>>();
    m.words = Vocab(std::vector<std::string>(words.begin() + std::min<std::size_t>(4, words.size()), words.end()));
    m.attributes =
        Vocab(std::vector<std::string>(attrs.begin() + std::min<std::size_t>(4, attrs.size()), attrs.end()));
    if (m.words.words() != words || m.attributes.words() != attrs)
      throw std::runtime_error("vocabulary tables are inconsistent");
    const auto shapes = block_shapes(m.dims, m.words.size(), m.attributes.size());
    const auto& jp = j.at("params");
    if (jp.size() != shapes.size()) throw std::runtime_error("unexpected number of parameter tensors");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      Tensor t(jp[i].at("name").get<std::string>(), jp[i].at("rows"), jp[i].at("cols"));
      if (t.name != shapes[i].name || t.rows != shapes[i].rows || t.cols != shapes[i].cols)
        throw std::runtime_error("tensor '" + t.name + "' does not match the expected layout");
      t.data = jp[i].at("data").get<std::vector<double>>();
      if (t.data.size() != t.rows * t.cols) throw std::runtime_error("tensor '" + t.name + "' has the wrong size");
      m.params.push_back(std::move(t));
    }
    return m;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint '" + path.string() + "' is malformed: " + e.what());
  }
}

}  // namespace parenting
