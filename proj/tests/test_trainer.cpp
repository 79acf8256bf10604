#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "datagen.hpp"
#include "gradcheck.hpp"
#include "metric.hpp"
#include "trainer.hpp"

using namespace parenting;

namespace {

std::vector<const Instance*> pointers(const std::vector<Instance>& v) {
  std::vector<const Instance*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

bool bit_equal(const Model& a, const Model& b) {
  for (std::size_t p = 0; p < a.params.size(); ++p) {
    const auto& x = a.params[p].data;
    const auto& y = b.params[p].data;
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

// A model that ends every sequence immediately: sampling and greedy decoding
// both yield the empty sequence, so every self-critical reward is exactly 0.
Model eos_model() {
  Model m = gradcheck::tiny_model();
  m.params[kVocabB].data[Vocab::kEosId] = 40.0;
  m.params[kGateB].data[0] = 40.0;
  return m;
}

std::vector<Instance> small_corpus(std::size_t n, std::uint64_t seed) {
  DivergenceConfig c;
  c.count = n;
  c.seed = seed;
  c.hallucination_rate = 0.3;
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_instance(c, i).instance);
  return out;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.dims.word_dim = 8;
  c.dims.attr_dim = 4;
  c.dims.pos_dim = 2;
  c.dims.hidden = 8;
  c.batch_size = 4;
  c.epochs = 2;
  c.max_decode_length = 12;
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.selection_metric = "bleu";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(TrainConfig{}.gamma == 0.9);
  CHECK(TrainConfig{}.lambda_train == 1.0);
}

TEST_CASE("reward of a sequence against itself is zero") {
  std::mt19937_64 rng(4);
  const auto data = small_corpus(20, 3);
  for (const auto& inst : data) {
    Tokens x = inst.references[0];
    x.resize(rng() % (x.size() + 1));
    CHECK(reward(x, x, inst, 1.0).reward == 0.0);
  }
}

TEST_CASE("reward is the PARENT-F difference") {
  const auto data = small_corpus(5, 8);
  const Instance& inst = data[0];
  const Tokens good = inst.references[0];
  const Tokens bad = {"nonsense", "words"};
  const RewardRecord r = reward(good, bad, inst, 1.0);
  CHECK(r.reward == parent_f(good, inst, 1.0) - parent_f(bad, inst, 1.0));
  CHECK(r.reward > 0.0);
}

TEST_CASE("rl loss") {
  const std::vector<double> lp = {-1.0, -2.0, -0.5};
  CHECK(rl_loss(lp, 2.0) == 7.0);
  CHECK(rl_loss(lp, 0.0) == 0.0);
  ad::Tape t;
  const ad::Var s = t.constant({-3.5});
  CHECK(t.item(rl_loss(t, t.sum(s), 2.0)) == 7.0);
}

TEST_CASE("gradient clipping") {
  Gradients g = {{3.0}, {4.0}};
  CHECK(clip_gradients(g, 1.0) == 5.0);
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][0] == doctest::Approx(0.8));
  Gradients h = {{0.3}};
  clip_gradients(h, 1.0);
  CHECK(h[0][0] == 0.3);
}

TEST_CASE("adam's first step moves each weight by the learning rate") {
  Model m = gradcheck::tiny_model();
  const Model before = m;
  Gradients g = zero_gradients(m);
  g[kGateB][0] = 0.25;
  g[kOutB][1] = -3.0;
  Adam opt(m, 0.01);
  opt.step(m, g);
  CHECK(m.params[kGateB].data[0] == doctest::Approx(before.params[kGateB].data[0] - 0.01).epsilon(1e-6));
  CHECK(m.params[kOutB].data[1] == doctest::Approx(before.params[kOutB].data[1] + 0.01).epsilon(1e-6));
  CHECK(m.params[kOutB].data[0] == before.params[kOutB].data[0]);
}

TEST_CASE("mle batch gradient is the mean of per-instance gradients and scales linearly") {
  Model m = gradcheck::tiny_model();
  std::vector<Instance> data(3, gradcheck::tiny_instance());
  data[1].references = {{"ada", "."}};
  data[2].references = {{"zanzibar", "was", "born"}};
  const auto batch = pointers(data);
  const BatchGradient full = mle_gradient(batch, m, 1.0, 1);
  const BatchGradient half = mle_gradient(batch, m, 0.5, 1);
  for (std::size_t p = 0; p < full.grads.size(); ++p)
    for (std::size_t i = 0; i < full.grads[p].size(); ++i) CHECK(half.grads[p][i] == 0.5 * full.grads[p][i]);

  Gradients sum = zero_gradients(m);
  for (const auto* inst : batch) {
    const std::vector<const Instance*> one = {inst};
    const BatchGradient g = mle_gradient(one, m, 1.0, 1);
    for (std::size_t p = 0; p < sum.size(); ++p)
      for (std::size_t i = 0; i < sum[p].size(); ++i) sum[p][i] += g.grads[p][i];
  }
  for (std::size_t p = 0; p < sum.size(); ++p)
    for (std::size_t i = 0; i < sum[p].size(); ++i)
      CHECK(full.grads[p][i] == doctest::Approx(sum[p][i] / 3.0).epsilon(1e-12));
}

TEST_CASE("batch gradients do not depend on the worker count") {
  Model m = gradcheck::tiny_model();
  const auto data = small_corpus(6, 2);
  const auto batch = pointers(data);
  const BatchGradient one = mle_gradient(batch, m, 1.0, 1);
  const BatchGradient four = mle_gradient(batch, m, 1.0, 4);
  CHECK(one.grads == four.grads);
}

TEST_CASE("all-zero rewards give exactly the (1 - gamma)-scaled MLE update") {
  std::vector<Instance> data(4, gradcheck::tiny_instance());
  data[1].references = {{"ada", "lovelace"}};
  const auto batch = pointers(data);
  TrainConfig cfg = tiny_config();
  cfg.gamma = 0.9;
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4};

  Model mixed = eos_model();
  Model plain = mixed;
  const BatchGradient g = mixed_gradient(batch, mixed, cfg, seeds);
  for (const auto& r : g.rewards) REQUIRE(r.reward == 0.0);

  Adam a(mixed, cfg.learning_rate), b(plain, cfg.learning_rate);
  mixed_step(batch, mixed, a, cfg, seeds);
  BatchGradient ml = mle_gradient(batch, plain, 1.0 - cfg.gamma, cfg.threads);
  clip_gradients(ml.grads, cfg.max_grad_norm);
  b.step(plain, ml.grads);
  CHECK(bit_equal(mixed, plain));
}

TEST_CASE("gamma = 0 fine-tuning reproduces continued MLE") {
  const auto train = small_corpus(12, 21);
  const auto dev = small_corpus(4, 22);
  TrainConfig cfg = tiny_config();
  cfg.learning_rate = 1e-3;
  const Model start = Model::create(train, cfg.dims, 9);
  cfg.gamma = 0.0;
  const TrainResult rl = train_rl(train, dev, start, cfg);
  const TrainResult ml = train_mle(train, dev, cfg, start);
  REQUIRE(rl.log.size() == ml.log.size());
  for (std::size_t i = 0; i < rl.log.size(); ++i) {
    LogRecord r = rl.log[i];
    r.mean_reward.reset();
    CHECK(r == ml.log[i]);
  }
  CHECK(bit_equal(rl.best, ml.best));
}

TEST_CASE("training is deterministic and logs every epoch") {
  const auto train = small_corpus(12, 31);
  const auto dev = small_corpus(4, 32);
  TrainConfig cfg = tiny_config();
  const TrainResult a = train_mle(train, dev, cfg);
  const TrainResult b = train_mle(train, dev, cfg);
  CHECK(a.log == b.log);
  CHECK(bit_equal(a.best, b.best));
  REQUIRE(a.log.size() == 1 + 2 * cfg.epochs);
  CHECK(a.log[0].epoch == 0);
  CHECK(a.log[1].split == "train");
  CHECK(a.log[2].split == "dev");
  CHECK(a.best_epoch >= 1);

  const TrainResult r1 = train_rl(train, dev, a.best, cfg);
  const TrainResult r2 = train_rl(train, dev, a.best, cfg);
  CHECK(r1.log == r2.log);
  CHECK(r1.log[1].mean_reward.has_value());
}

TEST_CASE("training rejects empty splits") {
  TrainConfig cfg = tiny_config();
  const auto data = small_corpus(4, 1);
  CHECK_THROWS_AS(train_mle({}, data, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_mle(data, {}, cfg), std::invalid_argument);
}

TEST_CASE("log records serialize with a fixed key order") {
  LogRecord r{3, "dev", 1.5, std::nullopt, 0.25, 10.0};
  CHECK(to_json_line(r) == R"({"epoch":3,"split":"dev","nll":1.5,"mean_reward":null,"parent_f":0.25,"bleu":10.0})");
}
