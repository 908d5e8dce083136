#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "metric_oracle.hpp"
#include "vqglab/metrics.hpp"
#include "vqglab/rng.hpp"

using namespace vqglab;

namespace {

// small word pool so random corpora overlap
const char* kPool[] = {"the", "a", "cat", "dog", "sat", "on", "mat", "what", "is", "?"};

std::vector<EvalPair> random_corpus(int n_pairs, std::uint64_t seed, int max_len = 5) {
  Rng rng(seed);
  std::vector<EvalPair> pairs;
  for (int i = 0; i < n_pairs; ++i) {
    auto sentence = [&rng, max_len] {
      Tokens t;
      const int len = 1 + rng.uniform_int(max_len);
      for (int j = 0; j < len; ++j) t.push_back(kPool[rng.uniform_int(10)]);
      return t;
    };
    EvalPair p;
    p.candidate = sentence();
    const int refs = 1 + rng.uniform_int(3);
    for (int r = 0; r < refs; ++r) p.references.push_back(sentence());
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace

TEST_CASE("BLEU: perfect match, brevity case, disjoint vocabularies") {
  const std::vector<EvalPair> perfect = {
      {{"what", "is", "the", "dog", "doing"}, {{"what", "is", "the", "dog", "doing"}}}};
  const auto scores = bleu(perfect, 4);
  for (double s : scores) CHECK(s == doctest::Approx(100.0).epsilon(1e-12));

  const std::vector<EvalPair> brevity = {
      {{"the", "cat", "sat"}, {{"the", "cat", "sat", "on", "the", "mat"}}}};
  CHECK(bleu(brevity, 1)[0] == doctest::Approx(100.0 * std::exp(1.0 - 6.0 / 3.0)).epsilon(1e-12));
  CHECK(bleu(brevity, 1)[0] == doctest::Approx(36.7879441).epsilon(1e-6));

  const std::vector<EvalPair> disjoint = {{{"aa", "bb"}, {{"cc", "dd"}}}};
  for (double s : bleu(disjoint, 4)) CHECK(s == 0.0);

  CHECK_THROWS_AS(bleu(perfect, 0), std::invalid_argument);
}

TEST_CASE("ROUGE: identity, the beta=1.2 LCS case, disjoint") {
  const std::vector<EvalPair> same = {{{"a", "b", "c"}, {{"a", "b", "c"}}}};
  CHECK(rouge_n(same, 1) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(rouge_l(same) == doctest::Approx(100.0).epsilon(1e-12));

  const std::vector<EvalPair> partial = {{{"the", "cat"}, {{"the", "cat", "sat"}}}};
  // LCS = 2, R = 2/3, P = 1, F = (1+1.44)RP/(R+1.44P)
  const double expect = 100.0 * (2.44 * (2.0 / 3.0) * 1.0) / ((2.0 / 3.0) + 1.44);
  CHECK(rouge_l(partial) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rouge_l(partial) == doctest::Approx(77.2151899).epsilon(1e-6));

  const std::vector<EvalPair> disjoint = {{{"aa"}, {{"bb"}}}};
  CHECK(rouge_n(disjoint, 1) == 0.0);
  CHECK(rouge_l(disjoint) == 0.0);
  CHECK_THROWS_AS(rouge_n(partial, 0), std::invalid_argument);
}

TEST_CASE("ROUGE recall never drops when the candidate gains a correct token") {
  const std::vector<EvalPair> before = {{{"the", "cat"}, {{"the", "cat", "sat"}}}};
  const std::vector<EvalPair> after = {{{"the", "cat", "sat"}, {{"the", "cat", "sat"}}}};
  CHECK(rouge_n(after, 1) >= rouge_n(before, 1));
}

TEST_CASE("METEOR-lite: identities and chunk behaviour") {
  // m identical tokens: one chunk, score 100(1 - 0.5/m^3)
  for (int m : {2, 3, 5}) {
    Tokens t;
    for (int i = 0; i < m; ++i) t.push_back("w" + std::to_string(i));
    const std::vector<EvalPair> pairs = {{t, {t}}};
    CHECK(meteor_lite(pairs) ==
          doctest::Approx(100.0 * (1.0 - 0.5 / (m * m * m))).epsilon(1e-12));
  }

  const std::vector<EvalPair> single = {{{"cat"}, {{"cat"}}}};
  CHECK(meteor_lite(single) == doctest::Approx(50.0).epsilon(1e-12));

  const std::vector<EvalPair> disjoint = {{{"aa", "bb"}, {{"cc"}}}};
  CHECK(meteor_lite(disjoint) == 0.0);

  // the alignment must prefer fewer chunks: deferring the first "a" keeps
  // x-b-a contiguous
  const std::vector<EvalPair> tricky = {{{"a", "x", "b", "a"}, {{"x", "b", "a"}}}};
  const double got = meteor_lite(tricky);
  const double prec = 3.0 / 4.0, rec = 1.0;
  const double f = 10.0 * prec * rec / (rec + 9.0 * prec);
  const double pen = 0.5 * std::pow(1.0 / 3.0, 3.0);
  CHECK(got == doctest::Approx(100.0 * f * (1.0 - pen)).epsilon(1e-12));
}

TEST_CASE("CIDEr: identity corpus, short candidates, disjoint, corpus-size guard") {
  // distinct references keep every tf-idf vector nonzero, so identical
  // candidate/reference pairs score a full 100
  const std::vector<EvalPair> two = {
      {{"what", "is", "the", "cat", "doing"}, {{"what", "is", "the", "cat", "doing"}}},
      {{"where", "did", "the", "dog", "go"}, {{"where", "did", "the", "dog", "go"}}}};
  CHECK(cider(two) == doctest::Approx(100.0).epsilon(1e-9));

  const std::vector<EvalPair> shorty = {
      {{"red", "fish"}, {{"red", "fish", "blue", "fish"}}},
      {{"green", "eggs", "and", "ham"}, {{"green", "eggs", "and", "ham"}}}};
  CHECK(cider(shorty) <= 100.0 * (1.0 + 1.0 + 0.5 + 0.5) / 4.0 + 1e-9);

  const std::vector<EvalPair> disjoint = {{{"aa"}, {{"bb", "cc"}}},
                                          {{"dd"}, {{"ee", "ff"}}}};
  CHECK(cider(disjoint) == 0.0);

  CHECK_THROWS_AS(cider({two[0]}), std::invalid_argument);
}

TEST_CASE("all metrics are invariant under corpus reordering") {
  std::vector<EvalPair> pairs = random_corpus(12, 99);
  std::vector<EvalPair> shuffled = pairs;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(bleu(pairs, 4) == bleu(shuffled, 4));
  CHECK(rouge_n(pairs, 2) == rouge_n(shuffled, 2));
  CHECK(rouge_l(pairs) == rouge_l(shuffled));
  CHECK(meteor_lite(pairs) == meteor_lite(shuffled));
  CHECK(cider(pairs) == doctest::Approx(cider(shuffled)).epsilon(1e-12));
}

TEST_CASE("metrics equal the naive oracle on random toy corpora") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    const std::vector<EvalPair> pairs = random_corpus(10, seed);
    const auto got_bleu = bleu(pairs, 4);
    const auto want_bleu = oracle::bleu(pairs, 4);
    for (int k = 0; k < 4; ++k) {
      CHECK(got_bleu[static_cast<std::size_t>(k)] ==
            doctest::Approx(want_bleu[static_cast<std::size_t>(k)]).epsilon(1e-9));
    }
    CHECK(rouge_n(pairs, 1) == doctest::Approx(oracle::rouge_n(pairs, 1)).epsilon(1e-9));
    CHECK(rouge_n(pairs, 2) == doctest::Approx(oracle::rouge_n(pairs, 2)).epsilon(1e-9));
    CHECK(rouge_l(pairs) == doctest::Approx(oracle::rouge_l(pairs)).epsilon(1e-9));
    CHECK(meteor_lite(pairs) == doctest::Approx(oracle::meteor(pairs)).epsilon(1e-9));
    CHECK(cider(pairs) == doctest::Approx(oracle::cider(pairs)).epsilon(1e-9));
  }
}

TEST_CASE("empty candidates score zero but stay in the corpus") {
  const std::vector<EvalPair> pairs = {{{}, {{"a", "b"}}}, {{"a", "b"}, {{"a", "b"}}}};
  const auto b = bleu(pairs, 1);
  CHECK(b[0] < 100.0);  // the empty candidate drags the corpus down
  CHECK(rouge_l(pairs) == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(meteor_lite(pairs) < 100.0);
}

TEST_CASE("evaluate_corpus produces the full report") {
  const std::vector<EvalPair> pairs = random_corpus(8, 123);
  const ScoreReport report = evaluate_corpus(pairs);
  CHECK(report.corpus_size == 8);
  for (const char* key : {"BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-1", "ROUGE-2",
                          "ROUGE-L", "ROUGE", "METEOR", "CIDEr"}) {
    REQUIRE(report.scores.count(key) == 1);
    CHECK(report.scores.at(key) >= 0.0);
    CHECK(report.scores.at(key) <= 100.0);
  }
  CHECK(report.scores.at("ROUGE") == report.scores.at("ROUGE-L"));
}

TEST_CASE("pair_with_references joins by id and rejects unknown ids") {
  Dataset ds;
  Sample s;
  s.id = "x1";
  s.features = {1.0};
  s.captions = {{"a", "cat"}};
  s.questions = {{"what", "is", "it", "?"}, {"is", "it", "a", "cat", "?"}};
  ds.samples.push_back(s);
  const auto pairs = pair_with_references({{"x1", {"what", "is", "it", "?"}}}, ds);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].references.size() == 2);  // every question is a reference
  CHECK_THROWS_AS(pair_with_references({{"nope", {"a"}}}, ds), std::invalid_argument);
}
