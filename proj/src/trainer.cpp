#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "metric.hpp"
#include "parallel.hpp"

namespace parenting {

using ad::Tape;
using ad::Var;

void TrainConfig::validate() const {
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!unit(gamma)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!unit(lambda_train)) throw std::invalid_argument("lambda_train must lie in [0, 1]");
  if (!unit(lambda_eval)) throw std::invalid_argument("lambda_eval must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (max_decode_length == 0) throw std::invalid_argument("max decode length must be positive");
  if (selection_metric != "dev_parent_f")
    throw std::invalid_argument("unsupported checkpoint-selection metric '" + selection_metric + "'");
}

// ---------------------------------------------------------------- reward and losses

RewardRecord reward(const Tokens& candidate, const Tokens& baseline, const Instance& instance, double lambda_train) {
  RewardRecord r;
  r.candidate = candidate;
  r.baseline = baseline;
  r.parent_candidate = parent_f(candidate, instance, lambda_train);
  r.parent_baseline = candidate == baseline ? r.parent_candidate : parent_f(baseline, instance, lambda_train);
  r.reward = r.parent_candidate - r.parent_baseline;
  return r;
}

double rl_loss(std::span<const double> candidate_log_probs, double r) {
  double sum = 0.0;
  for (double lp : candidate_log_probs) sum += lp;
  return -r * sum;
}

Var rl_loss(Tape& tape, Var log_prob_sum, double r) { return tape.scale(log_prob_sum, -r); }

// ---------------------------------------------------------------- optimizer

Adam::Adam(const Model& model, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(zero_gradients(model)), v_(zero_gradients(model)) {}

void Adam::step(Model& model, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    auto& w = model.params[p].data;
    auto& m = m_[p];
    auto& v = v_[p];
    const auto& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_gradients(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& g : grads)
      for (auto& x : g) x *= k;
  }
  return norm;
}

// ---------------------------------------------------------------- batch gradients

namespace {

using SparseGrad = std::vector<std::pair<std::size_t, std::vector<double>>>;

SparseGrad collect(const Tape& t) {
  SparseGrad out;
  t.for_each_param_grad(
      [&](std::size_t slot, std::span<const double> g) { out.emplace_back(slot, std::vector<double>(g.begin(), g.end())); });
  return out;
}

struct InstanceResult {
  SparseGrad grad;
  double loss = 0.0;
  double nll = 0.0;
  RewardRecord reward;
};

void require_finite(double value, const Instance& inst, const char* what) {
  if (!std::isfinite(value))
    throw TrainingError(std::string("non-finite ") + what + " on instance " + instance_to_json_line(inst));
}

std::pair<double, SparseGrad> nll_gradient(const Model& model, const Instance& inst) {
  Tape t;
  const Var nll = teacher_forced_nll(t, model, inst);
  const double value = t.item(nll);
  require_finite(value, inst, "MLE loss");
  t.backward(nll);
  return {value, collect(t)};
}

BatchGradient reduce(const Model& model, std::vector<InstanceResult>& results) {
  BatchGradient out;
  out.grads = zero_gradients(model);
  for (auto& r : results) {
    for (const auto& [slot, g] : r.grad) {
      auto& dst = out.grads[slot];
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    out.loss += r.loss;
    out.nll += r.nll;
    out.mean_reward += r.reward.reward;
    out.rewards.push_back(std::move(r.reward));
  }
  const double n = static_cast<double>(results.size());
  for (auto& g : out.grads)
    for (auto& x : g) x /= n;
  out.loss /= n;
  out.nll /= n;
  out.mean_reward /= n;
  return out;
}

}  // namespace

BatchGradient mle_gradient(std::span<const Instance* const> batch, const Model& model, double scale,
                           std::size_t threads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::vector<InstanceResult> results(batch.size());
  parallel_for(
      batch.size(),
      [&](std::size_t i) {
        auto [nll, grad] = nll_gradient(model, *batch[i]);
        for (auto& [slot, g] : grad)
          for (auto& x : g) x = scale * x;
        results[i].grad = std::move(grad);
        results[i].loss = scale * nll;
        results[i].nll = nll;
      },
      threads);
  return reduce(model, results);
}

BatchGradient mixed_gradient(std::span<const Instance* const> batch, const Model& model, const TrainConfig& config,
                             std::span<const std::uint64_t> sample_seeds) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (sample_seeds.size() != batch.size()) throw std::invalid_argument("one sampling seed per instance required");
  const double gamma = config.gamma;
  std::vector<InstanceResult> results(batch.size());
  parallel_for(
      batch.size(),
      [&](std::size_t i) {
        const Instance& inst = *batch[i];
        Tape rl_tape;
        GraphSample sampled = sample_decode(rl_tape, model, inst.table, config.max_decode_length, sample_seeds[i]);
        const Tokens baseline = greedy_decode(model, inst.table, config.max_decode_length);
        RewardRecord rec = reward(sampled.sample.tokens, baseline, inst, config.lambda_train);
        const Var rl = rl_loss(rl_tape, sampled.log_prob_sum, rec.reward);
        const double rl_value = rl_tape.item(rl);
        require_finite(rl_value, inst, "RL loss");
        rl_tape.backward(rl);
        SparseGrad rl_grad = collect(rl_tape);

        auto [nll, ml_grad] = nll_gradient(model, inst);

        // gamma * g_rl + (1 - gamma) * g_ml, slot by slot.
        SparseGrad combined = std::move(ml_grad);
        for (auto& [slot, g] : combined) {
          auto it = std::find_if(rl_grad.begin(), rl_grad.end(), [&](const auto& e) { return e.first == slot; });
          if (it == rl_grad.end()) {
            for (auto& x : g) x = (1.0 - gamma) * x;
          } else {
            const auto& r = it->second;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] = gamma * r[k] + (1.0 - gamma) * g[k];
          }
        }
        for (auto& [slot, r] : rl_grad) {
          const bool present =
              std::any_of(combined.begin(), combined.end(), [&](const auto& e) { return e.first == slot; });
          if (present) continue;
          for (auto& x : r) x = gamma * x;
          combined.emplace_back(slot, std::move(r));
        }
        results[i].grad = std::move(combined);
        results[i].loss = gamma * rl_value + (1.0 - gamma) * nll;
        results[i].nll = nll;
        results[i].reward = std::move(rec);
      },
      config.threads);
  return reduce(model, results);
}

StepStats mixed_step(std::span<const Instance* const> batch, Model& model, Adam& optimizer, const TrainConfig& config,
                     std::span<const std::uint64_t> sample_seeds) {
  BatchGradient g = mixed_gradient(batch, model, config, sample_seeds);
  clip_gradients(g.grads, config.max_grad_norm);
  optimizer.step(model, g.grads);
  return {g.loss, g.nll, g.mean_reward};
}

StepStats mle_step(std::span<const Instance* const> batch, Model& model, Adam& optimizer, const TrainConfig& config) {
  BatchGradient g = mle_gradient(batch, model, 1.0, config.threads);
  clip_gradients(g.grads, config.max_grad_norm);
  optimizer.step(model, g.grads);
  return {g.loss, g.nll, 0.0};
}

// ---------------------------------------------------------------- evaluation

std::vector<Tokens> decode_all(const Model& model, const std::vector<Instance>& data, std::size_t max_len,
                               std::size_t threads) {
  std::vector<Tokens> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) { out[i] = greedy_decode(model, data[i].table, max_len); }, threads);
  return out;
}

DevMetrics evaluate(const Model& model, const std::vector<Instance>& data, const TrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("evaluation split is empty");
  std::vector<double> nll(data.size());
  parallel_for(data.size(), [&](std::size_t i) { nll[i] = teacher_forced_nll(model, data[i]); }, config.threads);
  const auto outputs = decode_all(model, data, config.max_decode_length, config.threads);
  const CorpusReport report = corpus_parent(outputs, data, config.lambda_eval);
  DevMetrics m;
  m.nll = std::accumulate(nll.begin(), nll.end(), 0.0) / static_cast<double>(data.size());
  m.parent_f = report.mean.f_score;
  m.bleu = report.bleu;
  return m;
}

std::string to_json_line(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["nll"] = r.nll;
  j["mean_reward"] = r.mean_reward ? nlohmann::ordered_json(*r.mean_reward) : nlohmann::ordered_json(nullptr);
  j["parent_f"] = r.parent_f ? nlohmann::ordered_json(*r.parent_f) : nlohmann::ordered_json(nullptr);
  j["bleu"] = r.bleu ? nlohmann::ordered_json(*r.bleu) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

// ---------------------------------------------------------------- training loops

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult run(const std::vector<Instance>& train, const std::vector<Instance>& dev, const TrainConfig& config,
                Model model, bool reinforce, const LogSink& sink) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("training split is empty");
  if (dev.empty()) throw std::invalid_argument("development split is empty");

  TrainResult result;
  auto emit = [&](LogRecord r) {
    if (sink) sink(r);
    result.log.push_back(std::move(r));
  };

  const DevMetrics start = evaluate(model, dev, config);
  emit({0, "dev", start.nll, std::nullopt, start.parent_f, start.bleu});

  Adam optimizer(model, config.learning_rate);
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = shuffled(train.size(), derive_seed(config.seed, epoch, 0));
    double nll_sum = 0.0, reward_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const Instance*> batch;
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = begin; k < end; ++k) {
        batch.push_back(&train[order[k]]);
        seeds.push_back(derive_seed(config.seed, epoch, 1 + order[k]));
      }
      const double weight = static_cast<double>(batch.size());
      if (reinforce) {
        const StepStats s = mixed_step(batch, model, optimizer, config, seeds);
        nll_sum += s.nll * weight;
        reward_sum += s.mean_reward * weight;
      } else {
        const StepStats s = mle_step(batch, model, optimizer, config);
        nll_sum += s.nll * weight;
      }
    }
    if (!model.all_finite()) throw TrainingError("parameters became non-finite in epoch " + std::to_string(epoch));
    const double n = static_cast<double>(train.size());
    emit({epoch, "train", nll_sum / n, reinforce ? std::optional<double>(reward_sum / n) : std::nullopt, std::nullopt,
          std::nullopt});
    const DevMetrics d = evaluate(model, dev, config);
    emit({epoch, "dev", d.nll, std::nullopt, d.parent_f, d.bleu});
    if (!have_best || d.parent_f > result.best_dev_parent_f) {
      have_best = true;
      result.best = model;
      result.best_epoch = epoch;
      result.best_dev_parent_f = d.parent_f;
    }
  }
  if (!have_best) {
    result.best = std::move(model);
    result.best_dev_parent_f = start.parent_f;
  }
  return result;
}

}  // namespace

TrainResult train_mle(const std::vector<Instance>& train, const std::vector<Instance>& dev, const TrainConfig& config,
                      const std::optional<Model>& init, const LogSink& sink) {
  if (train.empty()) throw std::invalid_argument("training split is empty");
  Model model = init ? *init : Model::create(train, config.dims, config.seed, config.min_count);
  return run(train, dev, config, std::move(model), false, sink);
}

TrainResult train_rl(const std::vector<Instance>& train, const std::vector<Instance>& dev, const Model& pretrained,
                     const TrainConfig& config, const LogSink& sink) {
  if (!pretrained.all_finite()) throw std::invalid_argument("pretrained checkpoint has non-finite parameters");
  return run(train, dev, config, pretrained, true, sink);
}

}  // namespace parenting
