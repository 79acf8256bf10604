#include <doctest.h>

#include <cmath>
#include <random>

#include "analysis.hpp"
#include "oracles.hpp"

using namespace parenting;

namespace {

std::vector<double> bimodal_fixture() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> short_len(15.0, 4.0), long_len(45.0, 4.0);
  std::vector<double> out;
  for (int i = 0; i < 100; ++i) out.push_back(std::round(short_len(rng)));
  for (int i = 0; i < 100; ++i) out.push_back(std::round(long_len(rng)));
  return out;
}

std::vector<Instance> corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::random_instance(rng));
  return out;
}

}  // namespace

TEST_CASE("copy_count examples") {
  Table t;
  t.records = {{"name", "john smith", std::nullopt}, {"occupation", "engineer", std::nullopt}};
  CHECK(copy_count({"john", "john", "likes", "engineering"}, t) == 2);
  CHECK(copy_count({"a", "b"}, t) == 0);
  CHECK(copy_count({"john", "smith", "engineer"}, t) == 3);
  CHECK(copy_count({"name", "occupation"}, t) == 0);  // attribute names do not count
}

TEST_CASE("copy_count invariants on random cases") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 1000; ++i) {
    const Instance inst = oracle::random_instance(rng);
    const Tokens c = oracle::random_tokens(rng, 15);
    CHECK(copy_count(c, inst.table) <= c.size());
    Tokens values;
    for (const auto& r : inst.table.records)
      for (const auto& tok : tokenize(r.value)) values.push_back(tok);
    CHECK(copy_count(values, inst.table) == values.size());
  }
}

TEST_CASE("cluster_lengths") {
  CHECK(cluster_lengths({10, 10, 50, 50}) == 30.0);
  const double t = cluster_lengths(bimodal_fixture());
  CHECK(t >= 25.0);
  CHECK(t <= 35.0);
  CHECK_THROWS_AS(cluster_lengths({4, 4, 4}), std::invalid_argument);
  CHECK_THROWS_AS(cluster_lengths({1, 2, 3}, 1), std::invalid_argument);
}

TEST_CASE("cluster_lengths scales with its input") {
  const auto base = bimodal_fixture();
  const double t = cluster_lengths(base);
  for (double k : {0.5, 2.0, 3.0}) {
    std::vector<double> scaled;
    for (double x : base) scaled.push_back(k * x);
    CHECK(cluster_lengths(scaled) == doctest::Approx(k * t).epsilon(1e-12));
  }
}

TEST_CASE("length_stats on identical outputs") {
  const auto insts = corpus(30, 5);
  std::mt19937_64 rng(6);
  std::vector<Tokens> a;
  for (std::size_t i = 0; i < insts.size(); ++i) a.push_back(oracle::random_tokens(rng, 10, 10, 1));
  const LengthReport r = length_stats(a, a, insts, 0.5);
  CHECK(r.length_delta == 0.0);
  CHECK(r.f_delta == 0.0);
  CHECK(r.avg_length_a == r.avg_length_b);
  CHECK(std::isnan(r.correlation));
}

TEST_CASE("length_stats with one extra entailed token") {
  const auto insts = corpus(25, 8);
  std::mt19937_64 rng(9);
  std::vector<Tokens> a, b;
  for (const auto& inst : insts) {
    a.push_back(oracle::random_tokens(rng, 8, 10, 1));
    Tokens extra = a.back();
    extra.push_back(tokenize(inst.table.records[0].value)[0]);
    b.push_back(extra);
  }
  const LengthReport r = length_stats(a, b, insts, 0.5);
  CHECK(r.length_delta == 1.0);
  CHECK(r.avg_length_b - r.avg_length_a == doctest::Approx(1.0));
  CHECK_THROWS_AS(length_stats(a, {b[0]}, insts, 0.5), std::invalid_argument);
}

TEST_CASE("pearson and welch") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
  // scipy.stats.ttest_ind([1,2,3,4,5],[2,4,6,8,10], equal_var=False).pvalue
  CHECK(welch_p_value({1, 2, 3, 4, 5}, {2, 4, 6, 8, 10}) == doctest::Approx(0.10753119493062718).epsilon(1e-9));
  CHECK(std::isnan(welch_p_value({1}, {1, 2})));
}

TEST_CASE("conditioned_scores partitions outputs by length") {
  const auto insts = corpus(40, 12);
  std::mt19937_64 rng(13);
  std::vector<Tokens> outs;
  for (std::size_t i = 0; i < insts.size(); ++i) outs.push_back(oracle::random_tokens(rng, 12, 10, 1));
  const ConditionedReport r = conditioned_scores(outs, insts, 6.5, 0.5);
  const std::size_t n_short = r.short_cluster ? r.short_cluster->size : 0;
  const std::size_t n_long = r.long_cluster ? r.long_cluster->size : 0;
  CHECK(n_short + n_long == outs.size());

  const ConditionedReport all_short = conditioned_scores(outs, insts, 100.0, 0.5);
  CHECK_FALSE(all_short.long_cluster.has_value());
  CHECK(std::isnan(all_short.p_f_score));
  CHECK_THROWS_AS(conditioned_scores(outs, insts, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("single output per cluster reports its own scores") {
  const auto insts = corpus(2, 14);
  const std::vector<Tokens> outs = {{"a", "b"}, {"a", "b", "c", "d", "e", "f"}};
  const ConditionedReport r = conditioned_scores(outs, insts, 4.0, 0.5);
  REQUIRE(r.short_cluster);
  REQUIRE(r.long_cluster);
  CHECK(r.short_cluster->f_score == doctest::Approx(100.0 * parent(outs[0], insts[0], 0.5).f_score));
  CHECK(r.long_cluster->f_score == doctest::Approx(100.0 * parent(outs[1], insts[1], 0.5).f_score));
  CHECK(r.long_cluster->copy_count == static_cast<double>(copy_count(outs[1], insts[1].table)));
}

TEST_CASE("reports render") {
  LengthReport l;
  l.correlation = std::nan("");
  CHECK(to_json(l).find("\"correlation\": null") != std::string::npos);
  CHECK(render_table(l).find("n/a") != std::string::npos);
  ConditionedReport c;
  c.threshold = 30;
  CHECK(render_table(c).find("absent") != std::string::npos);
}
