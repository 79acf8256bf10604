#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"

namespace parenting {

struct ParentScore {
  double precision = 0.0;
  double recall_reference = 0.0;  // E_r(R)
  double coverage_table = 0.0;    // E_r(T)
  double recall = 0.0;            // E_r(R)^lambda * E_r(T)^(1-lambda)
  double f_score = 0.0;
  double lambda = 0.5;
};

struct CorpusReport {
  ParentScore mean;
  double bleu = 0.0;
  std::size_t count = 0;
  std::vector<ParentScore> per_instance;
};

using Lexicon = std::set<std::string>;

std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// Value tokens of every record plus the tokenized attribute names.
Lexicon table_lexicon(const Table& table);

double entailed_precision(const Tokens& candidate, const Tokens& reference, const Table& table, int n_max = 4);
double entailed_recall_reference(const Tokens& candidate, const Tokens& reference, const Table& table,
                                 int n_max = 4);
double table_coverage(const Tokens& candidate, const Table& table);

double f_measure(double precision, double recall);

/// Full PARENT score; with several references the max-F one is returned.
ParentScore parent(const Tokens& candidate, const Instance& instance, double lambda, int n_max = 4);

/// F-score only. At lambda == 1 the table coverage (and its LCS) is skipped.
double parent_f(const Tokens& candidate, const Instance& instance, double lambda, int n_max = 4);

CorpusReport corpus_parent(const std::vector<Tokens>& candidates, const std::vector<Instance>& instances,
                           double lambda, int n_max = 4);

/// Corpus BLEU-4 on a 0..100 scale.
double bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references);
double bleu(const std::vector<Tokens>& candidates, const std::vector<Instance>& instances);

}  // namespace parenting
