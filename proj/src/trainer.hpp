#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "model.hpp"

namespace parenting {

struct TrainConfig {
  double gamma = 0.9;         // weight of the RL term in the mixed loss
  double lambda_train = 1.0;  // PARENT lambda inside the reward
  double lambda_eval = 0.5;   // PARENT lambda for dev selection
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t max_decode_length = 40;
  std::string selection_metric = "dev_parent_f";
  double max_grad_norm = 5.0;  // <= 0 disables clipping
  std::size_t threads = 0;
  std::size_t min_count = 2;
  ModelDims dims;

  void validate() const;
};

/// Non-finite loss during training; the message carries the offending instance.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RewardRecord {
  Tokens candidate;
  Tokens baseline;
  double parent_candidate = 0.0;
  double parent_baseline = 0.0;
  double reward = 0.0;
};

/// Self-critical reward: PARENT-F of the candidate minus PARENT-F of the baseline.
RewardRecord reward(const Tokens& candidate, const Tokens& baseline, const Instance& instance,
                    double lambda_train);

/// -r * sum(log_probs); r is a constant, so gradients flow only through the log-probs.
double rl_loss(std::span<const double> candidate_log_probs, double r);
ad::Var rl_loss(ad::Tape& tape, ad::Var log_prob_sum, double r);

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam(const Model& model, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Model& model, const Gradients& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  Gradients m_, v_;
};

/// Rescales in place so the global L2 norm is at most max_norm; returns the norm before clipping.
double clip_gradients(Gradients& grads, double max_norm);

struct BatchGradient {
  Gradients grads;          // batch mean of the per-instance gradients
  double loss = 0.0;        // batch mean of the combined loss
  double nll = 0.0;         // batch mean of L_ml
  double mean_reward = 0.0;
  std::vector<RewardRecord> rewards;
};

/// Gradient of scale * L_ml averaged over the batch.
BatchGradient mle_gradient(std::span<const Instance* const> batch, const Model& model, double scale,
                           std::size_t threads = 0);

/// Gradient of gamma * L_rl + (1 - gamma) * L_ml averaged over the batch.
/// Sampling seeds come from sample_seeds (one per instance).
BatchGradient mixed_gradient(std::span<const Instance* const> batch, const Model& model, const TrainConfig& config,
                             std::span<const std::uint64_t> sample_seeds);

struct StepStats {
  double loss = 0.0;
  double nll = 0.0;
  double mean_reward = 0.0;
};

/// One optimizer update on the mixed objective.
StepStats mixed_step(std::span<const Instance* const> batch, Model& model, Adam& optimizer, const TrainConfig& config,
                     std::span<const std::uint64_t> sample_seeds);

/// One optimizer update on L_ml alone.
StepStats mle_step(std::span<const Instance* const> batch, Model& model, Adam& optimizer, const TrainConfig& config);

struct LogRecord {
  std::size_t epoch = 0;
  std::string split;
  double nll = 0.0;
  std::optional<double> mean_reward;
  std::optional<double> parent_f;
  std::optional<double> bleu;

  bool operator==(const LogRecord&) const = default;
};

std::string to_json_line(const LogRecord& record);

using LogSink = std::function<void(const LogRecord&)>;

struct TrainResult {
  Model best;
  std::size_t best_epoch = 0;
  double best_dev_parent_f = 0.0;
  std::vector<LogRecord> log;
};

struct DevMetrics {
  double nll = 0.0;
  double parent_f = 0.0;
  double bleu = 0.0;
};

DevMetrics evaluate(const Model& model, const std::vector<Instance>& data, const TrainConfig& config);
std::vector<Tokens> decode_all(const Model& model, const std::vector<Instance>& data, std::size_t max_len,
                               std::size_t threads = 0);

/// Teacher-forced pretraining. Starts from `init` when given (continued MLE),
/// otherwise from a fresh model built on `train`. Returns the epoch with the
/// best dev PARENT-F.
TrainResult train_mle(const std::vector<Instance>& train, const std::vector<Instance>& dev, const TrainConfig& config,
                      const std::optional<Model>& init = std::nullopt, const LogSink& sink = {});

/// Self-critical mixed-objective fine-tuning from a pretrained model. The
/// returned checkpoint is the best fine-tuned epoch on dev PARENT-F.
TrainResult train_rl(const std::vector<Instance>& train, const std::vector<Instance>& dev, const Model& pretrained,
                     const TrainConfig& config, const LogSink& sink = {});

}  // namespace parenting
