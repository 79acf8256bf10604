#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "metric.hpp"

namespace parenting {

struct LengthReport {
  double avg_length_a = 0.0;
  double avg_length_b = 0.0;
  double length_delta = 0.0;  // mean of len(b) - len(a)
  double f_delta = 0.0;       // mean of F(b) - F(a), 0..100 scale
  double correlation = 0.0;   // Pearson r of the two delta series; NaN when undefined
  double p_value = 0.0;       // Welch t-test on per-instance F of a vs b; NaN when undefined
  std::size_t count = 0;
};

LengthReport length_stats(const std::vector<Tokens>& outputs_a, const std::vector<Tokens>& outputs_b,
                          const std::vector<Instance>& instances, double lambda);

/// 1-D k-means (Lloyd) seeded at evenly spaced percentiles; returns the
/// midpoint between the two smallest centroids.
double cluster_lengths(const std::vector<double>& lengths, std::size_t k = 2);

/// Centroids after convergence, ascending.
std::vector<double> kmeans_1d(const std::vector<double>& values, std::size_t k);

struct ClusterStats {
  std::size_t size = 0;
  double precision = 0.0;  // means on the 0..100 scale
  double recall = 0.0;
  double f_score = 0.0;
  double copy_count = 0.0;
};

struct ConditionedReport {
  double threshold = 0.0;
  std::optional<ClusterStats> short_cluster;  // length < threshold
  std::optional<ClusterStats> long_cluster;
  // Welch p-values short vs long; NaN when either side has fewer than two members.
  double p_precision = 0.0;
  double p_recall = 0.0;
  double p_f_score = 0.0;
};

ConditionedReport conditioned_scores(const std::vector<Tokens>& outputs, const std::vector<Instance>& instances,
                                     double threshold, double lambda);

/// Candidate token occurrences that appear among the table's value tokens.
std::size_t copy_count(const Tokens& candidate, const Table& table);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Two-sided Welch t-test p-value.
double welch_p_value(const std::vector<double>& a, const std::vector<double>& b);

std::string to_json(const LengthReport& r);
std::string to_json(const ConditionedReport& r);
std::string render_table(const LengthReport& r);
std::string render_table(const ConditionedReport& r);

}  // namespace parenting
