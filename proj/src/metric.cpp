#include "metric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "parallel.hpp"

namespace parenting {

namespace {

using NgramCounts = std::unordered_map<std::string, int>;

std::string ngram_key(const Tokens& tokens, std::size_t start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k) key.push_back('\x1f');
    key += tokens[start + k];
  }
  return key;
}

NgramCounts count_ngrams(const Tokens& tokens, int n) {
  NgramCounts counts;
  if (tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[ngram_key(tokens, i, n)];
  return counts;
}

bool entailed(const Tokens& tokens, std::size_t start, int n, const Lexicon& lexicon) {
  for (int k = 0; k < n; ++k)
    if (!lexicon.contains(tokens[start + k])) return false;
  return true;
}

void check_order(int n_max) {
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
}

double precision_with(const Tokens& candidate, const Tokens& reference, const Lexicon& lexicon, int n_max) {
  check_order(n_max);
  if (candidate.empty()) return 0.0;
  double sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= n_max; ++n) {
    if (candidate.size() < static_cast<std::size_t>(n)) break;
    const NgramCounts ref = count_ngrams(reference, n);
    NgramCounts seen;
    std::size_t credited = 0, total = 0;
    for (std::size_t i = 0; i + n <= candidate.size(); ++i) {
      ++total;
      if (entailed(candidate, i, n, lexicon)) {
        ++credited;
        continue;
      }
      const std::string key = ngram_key(candidate, i, n);
      auto it = ref.find(key);
      if (it != ref.end() && seen[key] < it->second) {
        ++seen[key];
        ++credited;
      }
    }
    sum += static_cast<double>(credited) / static_cast<double>(total);
    ++orders;
  }
  return sum / orders;
}

double recall_with(const Tokens& candidate, const Tokens& reference, const Lexicon& lexicon, int n_max) {
  check_order(n_max);
  double sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= n_max; ++n) {
    if (reference.size() < static_cast<std::size_t>(n)) break;
    NgramCounts wanted;
    for (std::size_t i = 0; i + n <= reference.size(); ++i)
      if (entailed(reference, i, n, lexicon)) ++wanted[ngram_key(reference, i, n)];
    if (wanted.empty()) continue;
    const NgramCounts cand = count_ngrams(candidate, n);
    std::size_t found = 0, total = 0;
    for (const auto& [key, count] : wanted) {
      total += count;
      auto it = cand.find(key);
      if (it != cand.end()) found += std::min(count, it->second);
    }
    sum += static_cast<double>(found) / static_cast<double>(total);
    ++orders;
  }
  return orders ? sum / orders : 1.0;
}

double combine_recall(double recall_reference, double coverage, double lambda) {
  if (lambda == 1.0) return recall_reference;
  if (lambda == 0.0) return coverage;
  return std::pow(recall_reference, lambda) * std::pow(coverage, 1.0 - lambda);
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
}

}  // namespace

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Lexicon table_lexicon(const Table& table) {
  Lexicon lex;
  for (const auto& r : table.records) {
    for (auto& t : tokenize(r.value)) lex.insert(std::move(t));
    for (auto& t : tokenize_attribute(r.attribute)) lex.insert(std::move(t));
  }
  return lex;
}

double entailed_precision(const Tokens& candidate, const Tokens& reference, const Table& table, int n_max) {
  return precision_with(candidate, reference, table_lexicon(table), n_max);
}

double entailed_recall_reference(const Tokens& candidate, const Tokens& reference, const Table& table,
                                 int n_max) {
  return recall_with(candidate, reference, table_lexicon(table), n_max);
}

double table_coverage(const Tokens& candidate, const Table& table) {
  if (table.records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : table.records) {
    const Tokens value = tokenize(r.value);
    if (value.empty()) continue;
    sum += static_cast<double>(lcs_length(value, candidate)) / static_cast<double>(value.size());
  }
  return sum / static_cast<double>(table.records.size());
}

double f_measure(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

ParentScore parent(const Tokens& candidate, const Instance& instance, double lambda, int n_max) {
  check_lambda(lambda);
  const Lexicon lexicon = table_lexicon(instance.table);
  const double coverage = table_coverage(candidate, instance.table);
  ParentScore best;
  bool first = true;
  for (const auto& reference : instance.references) {
    ParentScore s;
    s.lambda = lambda;
    s.precision = precision_with(candidate, reference, lexicon, n_max);
    s.recall_reference = recall_with(candidate, reference, lexicon, n_max);
    s.coverage_table = coverage;
    s.recall = combine_recall(s.recall_reference, s.coverage_table, lambda);
    s.f_score = f_measure(s.precision, s.recall);
    if (first || s.f_score > best.f_score) best = s;
    first = false;
  }
  return best;
}

double parent_f(const Tokens& candidate, const Instance& instance, double lambda, int n_max) {
  check_lambda(lambda);
  if (lambda != 1.0) return parent(candidate, instance, lambda, n_max).f_score;
  const Lexicon lexicon = table_lexicon(instance.table);
  double best = 0.0;
  for (const auto& reference : instance.references) {
    const double p = precision_with(candidate, reference, lexicon, n_max);
    const double r = recall_with(candidate, reference, lexicon, n_max);
    best = std::max(best, f_measure(p, r));
  }
  return best;
}

CorpusReport corpus_parent(const std::vector<Tokens>& candidates, const std::vector<Instance>& instances,
                           double lambda, int n_max) {
  if (candidates.size() != instances.size())
    throw std::invalid_argument("candidate count " + std::to_string(candidates.size()) +
                                " does not match instance count " + std::to_string(instances.size()));
  check_lambda(lambda);
  CorpusReport report;
  report.count = instances.size();
  report.per_instance.resize(instances.size());
  parallel_for(instances.size(),
               [&](std::size_t i) { report.per_instance[i] = parent(candidates[i], instances[i], lambda, n_max); });
  report.mean.lambda = lambda;
  for (const auto& s : report.per_instance) {
    report.mean.precision += s.precision;
    report.mean.recall_reference += s.recall_reference;
    report.mean.coverage_table += s.coverage_table;
    report.mean.recall += s.recall;
    report.mean.f_score += s.f_score;
  }
  if (report.count) {
    const double n = static_cast<double>(report.count);
    report.mean.precision /= n;
    report.mean.recall_reference /= n;
    report.mean.coverage_table /= n;
    report.mean.recall /= n;
    report.mean.f_score /= n;
  }
  if (!instances.empty()) report.bleu = bleu(candidates, instances);
  return report;
}

double bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) {
  constexpr int kOrder = 4;
  constexpr double kEpsilon = 1e-9;
  if (candidates.empty()) throw std::invalid_argument("BLEU needs a non-empty corpus");
  if (candidates.size() != references.size())
    throw std::invalid_argument("BLEU candidate and reference counts differ");

  std::array<double, kOrder> matches{}, totals{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const Tokens& cand = candidates[s];
    const auto& refs = references[s];
    if (refs.empty()) throw std::invalid_argument("BLEU sentence without references");
    cand_len += static_cast<double>(cand.size());
    std::size_t closest = refs.front().size();
    for (const auto& r : refs) {
      const auto dist = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
      if (dist(r.size()) < dist(closest) || (dist(r.size()) == dist(closest) && r.size() < closest))
        closest = r.size();
    }
    ref_len += static_cast<double>(closest);
    for (int n = 1; n <= kOrder; ++n) {
      const NgramCounts cc = count_ngrams(cand, n);
      NgramCounts max_ref;
      for (const auto& r : refs)
        for (const auto& [key, count] : count_ngrams(r, n)) max_ref[key] = std::max(max_ref[key], count);
      for (const auto& [key, count] : cc) {
        totals[n - 1] += count;
        auto it = max_ref.find(key);
        if (it != max_ref.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (cand_len == 0.0 || matches[0] == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < kOrder; ++n) {
    const double num = matches[n] > 0.0 ? matches[n] : kEpsilon;
    const double den = totals[n] > 0.0 ? totals[n] : 1.0;
    log_sum += std::log(num / den);
  }
  const double brevity = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return 100.0 * brevity * std::exp(log_sum / kOrder);
}

double bleu(const std::vector<Tokens>& candidates, const std::vector<Instance>& instances) {
  std::vector<std::vector<Tokens>> refs;
  refs.reserve(instances.size());
  for (const auto& inst : instances) refs.push_back(inst.references);
  return bleu(candidates, refs);
}

}  // namespace parenting
