#include "vqglab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace vqglab {

namespace {

void check_pairs(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("metrics: empty corpus");
  for (const EvalPair& p : pairs) {
    if (p.references.empty()) {
      throw std::invalid_argument("metrics: pair without references");
    }
  }
}

// n-gram key: tokens joined with an unlikely separator
std::string ngram_key(const Tokens& toks, std::size_t start, int n) {
  std::string key;
  for (int i = 0; i < n; ++i) {
    if (i) key.push_back('\x1f');
    key += toks[start + static_cast<std::size_t>(i)];
  }
  return key;
}

std::unordered_map<std::string, int> ngram_counts(const Tokens& toks, int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(toks.size()) >= n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i)
      ++counts[ngram_key(toks, i, n)];
  }
  return counts;
}

}  // namespace

// ---- BLEU ---------------------------------------------------------------------

std::vector<double> bleu(const std::vector<EvalPair>& pairs, int max_n) {
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
  check_pairs(pairs);

  std::vector<double> clipped(static_cast<std::size_t>(max_n), 0.0);
  std::vector<double> total(static_cast<std::size_t>(max_n), 0.0);
  long cand_len = 0, ref_len = 0;

  for (const EvalPair& p : pairs) {
    cand_len += static_cast<long>(p.candidate.size());
    // closest reference length; ties prefer the shorter
    long best_ref = std::numeric_limits<long>::max();
    for (const Tokens& r : p.references) {
      const long rl = static_cast<long>(r.size());
      const long cl = static_cast<long>(p.candidate.size());
      if (best_ref == std::numeric_limits<long>::max() ||
          std::abs(rl - cl) < std::abs(best_ref - cl) ||
          (std::abs(rl - cl) == std::abs(best_ref - cl) && rl < best_ref)) {
        best_ref = rl;
      }
    }
    ref_len += best_ref;

    for (int n = 1; n <= max_n; ++n) {
      const auto cand = ngram_counts(p.candidate, n);
      std::unordered_map<std::string, int> max_ref;
      for (const Tokens& r : p.references) {
        for (const auto& [key, cnt] : ngram_counts(r, n)) {
          auto& slot = max_ref[key];
          slot = std::max(slot, cnt);
        }
      }
      for (const auto& [key, cnt] : cand) {
        const auto it = max_ref.find(key);
        clipped[static_cast<std::size_t>(n - 1)] +=
            it == max_ref.end() ? 0 : std::min(cnt, it->second);
      }
      const long positions = static_cast<long>(p.candidate.size()) - n + 1;
      if (positions > 0) total[static_cast<std::size_t>(n - 1)] += static_cast<double>(positions);
    }
  }

  const double bp =
      cand_len == 0 ? 0.0
      : cand_len < ref_len
          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
          : 1.0;

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(max_n));
  for (int k = 1; k <= max_n; ++k) {
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 1; n <= k; ++n) {
      const double num = clipped[static_cast<std::size_t>(n - 1)];
      const double den = total[static_cast<std::size_t>(n - 1)];
      if (num <= 0.0 || den <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(num / den);
    }
    out.push_back(zero ? 0.0 : 100.0 * bp * std::exp(log_sum / k));
  }
  return out;
}

// ---- ROUGE ---------------------------------------------------------------------

double rouge_n(const std::vector<EvalPair>& pairs, int n) {
  if (n < 1) throw std::invalid_argument("rouge: n must be >= 1");
  check_pairs(pairs);
  double sum = 0.0;
  for (const EvalPair& p : pairs) {
    const auto cand = ngram_counts(p.candidate, n);
    double best = 0.0;
    for (const Tokens& r : p.references) {
      const auto ref = ngram_counts(r, n);
      long overlap = 0, total = 0;
      for (const auto& [key, cnt] : ref) {
        total += cnt;
        const auto it = cand.find(key);
        if (it != cand.end()) overlap += std::min(cnt, it->second);
      }
      if (total > 0) best = std::max(best, static_cast<double>(overlap) / total);
    }
    sum += best;
  }
  return 100.0 * sum / static_cast<double>(pairs.size());
}

namespace {

int lcs_length(const Tokens& a, const Tokens& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

}  // namespace

double rouge_l(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs);
  constexpr double beta2 = 1.2 * 1.2;
  double sum = 0.0;
  for (const EvalPair& p : pairs) {
    double best = 0.0;
    for (const Tokens& r : p.references) {
      if (p.candidate.empty() || r.empty()) continue;
      const int l = lcs_length(p.candidate, r);
      if (l == 0) continue;
      const double rec = static_cast<double>(l) / static_cast<double>(r.size());
      const double prec = static_cast<double>(l) / static_cast<double>(p.candidate.size());
      const double f = (1.0 + beta2) * rec * prec / (rec + beta2 * prec);
      best = std::max(best, f);
    }
    sum += best;
  }
  return 100.0 * sum / static_cast<double>(pairs.size());
}

// ---- METEOR-lite ------------------------------------------------------------------

namespace {

// Exhaustive minimum-chunk alignment. The match count is forced to the
// multiset intersection; the search decides which reference occurrence each
// matched candidate token takes, and may defer an occurrence to a later one
// of the same word. Branch-and-bound keeps questions cheap.
struct ChunkSearch {
  const Tokens& cand;
  const Tokens& ref;
  std::unordered_map<std::string, int> budget;  // matches still owed per word
  std::vector<int> future_same;                 // later occurrences of cand[i]
  std::vector<bool> ref_used;
  int best_chunks = std::numeric_limits<int>::max();

  ChunkSearch(const Tokens& c, const Tokens& r)
      : cand(c), ref(r), future_same(c.size(), 0), ref_used(r.size(), false) {
    std::unordered_map<std::string, int> seen;
    for (std::size_t i = c.size(); i-- > 0;) {
      future_same[i] = seen[c[i]];
      ++seen[c[i]];
    }
  }

  void run(std::size_t i, int chunks, int last_ref) {
    if (chunks >= best_chunks) return;  // cannot improve
    if (i == cand.size()) {
      best_chunks = std::min(best_chunks, chunks);
      return;
    }
    const std::string& w = cand[i];
    auto it = budget.find(w);
    const int owed = it == budget.end() ? 0 : it->second;
    if (owed > 0) {
      --it->second;
      // prefer the continuation of the current chunk
      const int cont = last_ref + 1;
      if (cont >= 0 && cont < static_cast<int>(ref.size()) &&
          !ref_used[static_cast<std::size_t>(cont)] &&
          ref[static_cast<std::size_t>(cont)] == w) {
        ref_used[static_cast<std::size_t>(cont)] = true;
        run(i + 1, chunks, cont);
        ref_used[static_cast<std::size_t>(cont)] = false;
      }
      for (int j = 0; j < static_cast<int>(ref.size()); ++j) {
        if (j == cont) continue;
        if (ref_used[static_cast<std::size_t>(j)] || ref[static_cast<std::size_t>(j)] != w)
          continue;
        ref_used[static_cast<std::size_t>(j)] = true;
        run(i + 1, chunks + 1, j);
        ref_used[static_cast<std::size_t>(j)] = false;
      }
      ++it->second;
    }
    // leave this occurrence unmatched when later ones can absorb the budget
    if (owed == 0 || future_same[i] >= owed) run(i + 1, chunks, -2);
  }
};

// (matches, min_chunks) of the best exact alignment
std::pair<int, int> align(const Tokens& cand, const Tokens& ref) {
  const auto cand_counts = ngram_counts(cand, 1);
  const auto ref_counts = ngram_counts(ref, 1);
  int matches = 0;
  ChunkSearch search(cand, ref);
  for (const auto& [w, c] : cand_counts) {
    const auto it = ref_counts.find(w);
    const int m = it == ref_counts.end() ? 0 : std::min(c, it->second);
    matches += m;
    if (m > 0) search.budget[w] = m;
  }
  if (matches == 0) return {0, 0};
  search.run(0, 0, -2);
  return {matches, search.best_chunks};
}

}  // namespace

double meteor_lite(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs);
  double sum = 0.0;
  for (const EvalPair& p : pairs) {
    double best = 0.0;
    for (const Tokens& r : p.references) {
      const auto [m, chunks] = align(p.candidate, r);
      if (m == 0) continue;
      const double prec = static_cast<double>(m) / static_cast<double>(p.candidate.size());
      const double rec = static_cast<double>(m) / static_cast<double>(r.size());
      const double f = 10.0 * prec * rec / (rec + 9.0 * prec);
      const double frag = static_cast<double>(chunks) / static_cast<double>(m);
      const double penalty = 0.5 * frag * frag * frag;
      best = std::max(best, f * (1.0 - penalty));
    }
    sum += best;
  }
  return 100.0 * sum / static_cast<double>(pairs.size());
}

// ---- CIDEr ----------------------------------------------------------------------

double cider(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs);
  if (pairs.size() < 2) {
    throw std::invalid_argument("cider: needs a corpus of >= 2 pairs for idf");
  }
  constexpr int kMaxN = 4;
  const double corpus = static_cast<double>(pairs.size());

  double total = 0.0;
  for (int n = 1; n <= kMaxN; ++n) {
    // document frequency: images whose references contain the n-gram
    std::unordered_map<std::string, int> df;
    for (const EvalPair& p : pairs) {
      std::unordered_map<std::string, int> seen;
      for (const Tokens& r : p.references)
        for (const auto& [key, cnt] : ngram_counts(r, n)) seen[key] = 1;
      for (const auto& [key, one] : seen) df[key] += 1;
    }
    auto idf = [&](const std::string& key) {
      const auto it = df.find(key);
      const double denom = std::max(1, it == df.end() ? 0 : it->second);
      return std::log(corpus / denom);
    };
    auto tfidf = [&](const Tokens& toks) {
      std::unordered_map<std::string, double> vec;
      for (const auto& [key, cnt] : ngram_counts(toks, n)) vec[key] = cnt * idf(key);
      return vec;
    };

    double level = 0.0;
    for (const EvalPair& p : pairs) {
      const auto cand = tfidf(p.candidate);
      double cand_norm = 0.0;
      for (const auto& [key, v] : cand) cand_norm += v * v;
      cand_norm = std::sqrt(cand_norm);

      double pair_score = 0.0;
      for (const Tokens& r : p.references) {
        const auto ref = tfidf(r);
        double ref_norm = 0.0, dot = 0.0;
        for (const auto& [key, v] : ref) {
          ref_norm += v * v;
          const auto it = cand.find(key);
          if (it != cand.end()) dot += v * it->second;
        }
        ref_norm = std::sqrt(ref_norm);
        if (cand_norm > 0.0 && ref_norm > 0.0) pair_score += dot / (cand_norm * ref_norm);
        // zero vectors contribute 0
      }
      level += pair_score / static_cast<double>(p.references.size());
    }
    total += level / corpus;
  }
  return 100.0 * total / kMaxN;
}

// ---- report ----------------------------------------------------------------------

ScoreReport evaluate_corpus(const std::vector<EvalPair>& pairs) {
  ScoreReport report;
  report.corpus_size = static_cast<int>(pairs.size());
  const std::vector<double> b = bleu(pairs, 4);
  report.scores["BLEU-1"] = b[0];
  report.scores["BLEU-2"] = b[1];
  report.scores["BLEU-3"] = b[2];
  report.scores["BLEU-4"] = b[3];
  report.scores["ROUGE-1"] = rouge_n(pairs, 1);
  report.scores["ROUGE-2"] = rouge_n(pairs, 2);
  report.scores["ROUGE-L"] = rouge_l(pairs);
  report.scores["ROUGE"] = report.scores["ROUGE-L"];
  report.scores["METEOR"] = meteor_lite(pairs);
  if (pairs.size() >= 2) report.scores["CIDEr"] = cider(pairs);
  return report;
}

void save_score_report(const ScoreReport& report, const std::string& path) {
  nlohmann::json j;
  j["corpus_size"] = report.corpus_size;
  j["scores"] = report.scores;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write score report '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("short write to '" + path + "'");
}

std::vector<EvalPair> pair_with_references(
    const std::vector<std::pair<std::string, Tokens>>& generated, const Dataset& refs) {
  std::vector<EvalPair> pairs;
  pairs.reserve(generated.size());
  for (const auto& [id, toks] : generated) {
    const Sample& s = refs.by_id(id);  // throws for unknown ids
    pairs.push_back({toks, s.questions});
  }
  return pairs;
}

}  // namespace vqglab
