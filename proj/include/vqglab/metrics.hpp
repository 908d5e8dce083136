#pragma once

#include <map>
#include <string>
#include <vector>

#include "vqglab/data.hpp"

namespace vqglab {

struct EvalPair {
  Tokens candidate;
  std::vector<Tokens> references;  // >= 1
};

// Corpus-level modified n-gram precision with per-reference clipping,
// geometric mean of precisions 1..n, brevity penalty exp(1 - r/c) when
// c < r (r: closest reference length per pair, ties prefer the shorter).
// Returns BLEU-1..BLEU-max_n on the 0-100 scale.
std::vector<double> bleu(const std::vector<EvalPair>& pairs, int max_n = 4);

// Clipped n-gram recall, max over references, corpus-averaged, x100.
double rouge_n(const std::vector<EvalPair>& pairs, int n);

// Per-pair LCS F-score with recall weight beta = 1.2, max over references,
// corpus-averaged, x100.
double rouge_l(const std::vector<EvalPair>& pairs);

// Exact-match unigram alignment with the fewest chunks; F = 10PR/(R+9P),
// penalty 0.5*(chunks/matches)^3, max over references, corpus mean x100.
// (No synonym or stem stages.)
double meteor_lite(const std::vector<EvalPair>& pairs);

// tf-idf n-gram consensus, n = 1..4: cosine between candidate and each
// reference vector (mean over references, then over n), x100. idf counts
// the images whose references contain the n-gram; needs >= 2 pairs.
double cider(const std::vector<EvalPair>& pairs);

struct ScoreReport {
  std::map<std::string, double> scores;  // metric name -> 0-100
  int corpus_size = 0;
};

// The full report: BLEU-1..4, ROUGE-1/2/L (plus "ROUGE" = ROUGE-L),
// METEOR, CIDEr.
ScoreReport evaluate_corpus(const std::vector<EvalPair>& pairs);

void save_score_report(const ScoreReport& report, const std::string& path);

// Pairs generated questions with the reference questions of the dataset
// sample carrying the same id; every generated id must exist.
std::vector<EvalPair> pair_with_references(
    const std::vector<std::pair<std::string, Tokens>>& generated, const Dataset& refs);

}  // namespace vqglab
