#include "analysis.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace parenting {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean(const std::vector<double>& v) {
  return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// JSON has no NaN; undefined statistics serialize as null.
nlohmann::ordered_json number(double x) { return std::isfinite(x) ? nlohmann::ordered_json(x) : nullptr; }

std::string fmt(double x, int precision = 2) {
  if (!std::isfinite(x)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << x;
  return os.str();
}

}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: series lengths differ");
  if (x.size() < 2) return kNaN;
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

double welch_p_value(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) return kNaN;
  const double ma = mean(a), mb = mean(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (se2 == 0.0) return ma == mb ? kNaN : 0.0;
  const double t = (ma - mb) / std::sqrt(se2);
  // Welch-Satterthwaite degrees of freedom.
  const double df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

std::size_t copy_count(const Tokens& candidate, const Table& table) {
  std::set<std::string> values;
  for (const auto& r : table.records)
    for (auto& t : tokenize(r.value)) values.insert(std::move(t));
  return static_cast<std::size_t>(
      std::count_if(candidate.begin(), candidate.end(), [&](const std::string& t) { return values.contains(t); }));
}

LengthReport length_stats(const std::vector<Tokens>& outputs_a, const std::vector<Tokens>& outputs_b,
                          const std::vector<Instance>& instances, double lambda) {
  if (outputs_a.size() != instances.size() || outputs_b.size() != instances.size())
    throw std::invalid_argument("length_stats: " + std::to_string(outputs_a.size()) + " and " +
                                std::to_string(outputs_b.size()) + " outputs for " +
                                std::to_string(instances.size()) + " instances");
  if (instances.empty()) throw std::invalid_argument("length_stats: no instances");
  const CorpusReport ra = corpus_parent(outputs_a, instances, lambda);
  const CorpusReport rb = corpus_parent(outputs_b, instances, lambda);

  const std::size_t n = instances.size();
  std::vector<double> len_a(n), len_b(n), f_a(n), f_b(n), d_len(n), d_f(n);
  for (std::size_t i = 0; i < n; ++i) {
    len_a[i] = static_cast<double>(outputs_a[i].size());
    len_b[i] = static_cast<double>(outputs_b[i].size());
    f_a[i] = 100.0 * ra.per_instance[i].f_score;
    f_b[i] = 100.0 * rb.per_instance[i].f_score;
    d_len[i] = len_b[i] - len_a[i];
    d_f[i] = f_b[i] - f_a[i];
  }
  LengthReport r;
  r.count = n;
  r.avg_length_a = mean(len_a);
  r.avg_length_b = mean(len_b);
  r.length_delta = mean(d_len);
  r.f_delta = mean(d_f);
  r.correlation = pearson(d_len, d_f);
  r.p_value = welch_p_value(f_a, f_b);
  return r;
}

std::vector<double> kmeans_1d(const std::vector<double>& values, std::size_t k) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (distinct < k)
    throw std::invalid_argument("kmeans: " + std::to_string(distinct) + " distinct values for k = " + std::to_string(k));
  sorted = values;
  std::sort(sorted.begin(), sorted.end());

  // Percentile seeding: for k = 2 the 25th and 75th percentiles (linear interpolation).
  auto percentile = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  std::vector<double> centroids(k);
  for (std::size_t j = 0; j < k; ++j) centroids[j] = percentile((2.0 * static_cast<double>(j) + 1.0) / (2.0 * static_cast<double>(k)));

  std::vector<std::size_t> assign(sorted.size(), k);
  for (int iter = 0; iter < 1000; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (std::fabs(sorted[i] - centroids[j]) < std::fabs(sorted[i] - centroids[best])) best = j;
      if (best != assign[i]) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      sum[assign[i]] += sorted[i];
      ++cnt[assign[i]];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (cnt[j]) centroids[j] = sum[j] / static_cast<double>(cnt[j]);
  }
  std::sort(centroids.begin(), centroids.end());
  return centroids;
}

double cluster_lengths(const std::vector<double>& lengths, std::size_t k) {
  if (k < 2) throw std::invalid_argument("cluster_lengths: k must be at least 2");
  const std::vector<double> c = kmeans_1d(lengths, k);
  return 0.5 * (c[0] + c[1]);
}

ConditionedReport conditioned_scores(const std::vector<Tokens>& outputs, const std::vector<Instance>& instances,
                                     double threshold, double lambda) {
  if (!(threshold > 0.0)) throw std::invalid_argument("conditioned_scores: threshold must be positive");
  const CorpusReport scores = corpus_parent(outputs, instances, lambda);

  struct Side {
    std::vector<double> p, r, f, copies;
  } sides[2];
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    Side& s = sides[static_cast<double>(outputs[i].size()) < threshold ? 0 : 1];
    const ParentScore& ps = scores.per_instance[i];
    s.p.push_back(100.0 * ps.precision);
    s.r.push_back(100.0 * ps.recall);
    s.f.push_back(100.0 * ps.f_score);
    s.copies.push_back(static_cast<double>(copy_count(outputs[i], instances[i].table)));
  }
  auto summarize = [](const Side& s) -> std::optional<ClusterStats> {
    if (s.f.empty()) return std::nullopt;
    return ClusterStats{s.f.size(), mean(s.p), mean(s.r), mean(s.f), mean(s.copies)};
  };
  ConditionedReport r;
  r.threshold = threshold;
  r.short_cluster = summarize(sides[0]);
  r.long_cluster = summarize(sides[1]);
  r.p_precision = welch_p_value(sides[0].p, sides[1].p);
  r.p_recall = welch_p_value(sides[0].r, sides[1].r);
  r.p_f_score = welch_p_value(sides[0].f, sides[1].f);
  return r;
}

std::string to_json(const LengthReport& r) {
  nlohmann::ordered_json j;
  j["count"] = r.count;
  j["avg_length_a"] = number(r.avg_length_a);
  j["avg_length_b"] = number(r.avg_length_b);
  j["length_delta"] = number(r.length_delta);
  j["f_delta"] = number(r.f_delta);
  j["correlation"] = number(r.correlation);
  j["p_value"] = number(r.p_value);
  return j.dump(2);
}

std::string to_json(const ConditionedReport& r) {
  auto cluster = [](const std::optional<ClusterStats>& c) -> nlohmann::ordered_json {
    if (!c) return nullptr;
    nlohmann::ordered_json j;
    j["size"] = c->size;
    j["precision"] = c->precision;
    j["recall"] = c->recall;
    j["f_score"] = c->f_score;
    j["copy_count"] = c->copy_count;
    return j;
  };
  nlohmann::ordered_json j;
  j["threshold"] = r.threshold;
  j["short"] = cluster(r.short_cluster);
  j["long"] = cluster(r.long_cluster);
  j["p_precision"] = number(r.p_precision);
  j["p_recall"] = number(r.p_recall);
  j["p_f_score"] = number(r.p_f_score);
  return j.dump(2);
}

std::string render_table(const LengthReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "avg len A" << std::setw(14) << "avg len B" << std::setw(10) << "dLen"
     << std::setw(10) << "dF" << std::setw(10) << "corr" << "p\n";
  os << std::setw(14) << fmt(r.avg_length_a) << std::setw(14) << fmt(r.avg_length_b) << std::setw(10)
     << fmt(r.length_delta) << std::setw(10) << fmt(r.f_delta) << std::setw(10) << fmt(r.correlation)
     << fmt(r.p_value, 4) << "\n";
  return os.str();
}

std::string render_table(const ConditionedReport& r) {
  std::ostringstream os;
  os << "threshold " << fmt(r.threshold) << "\n";
  os << std::left << std::setw(8) << "" << std::setw(8) << "n" << std::setw(10) << "P" << std::setw(10) << "R"
     << std::setw(10) << "F" << "Nb-copy\n";
  auto row = [&](const char* name, const std::optional<ClusterStats>& c) {
    os << std::setw(8) << name;
    if (!c) {
      os << "absent\n";
      return;
    }
    os << std::setw(8) << c->size << std::setw(10) << fmt(c->precision) << std::setw(10) << fmt(c->recall)
       << std::setw(10) << fmt(c->f_score) << fmt(c->copy_count) << "\n";
  };
  row("short", r.short_cluster);
  row("long", r.long_cluster);
  os << std::setw(8) << "p" << std::setw(8) << "" << std::setw(10) << fmt(r.p_precision, 4) << std::setw(10)
     << fmt(r.p_recall, 4) << std::setw(10) << fmt(r.p_f_score, 4) << "\n";
  return os.str();
}

}  // namespace parenting
