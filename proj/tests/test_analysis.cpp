#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "vqglab/analysis.hpp"
#include "vqglab/rng.hpp"

using namespace vqglab;

TEST_CASE("friedman ranks: dominance, ties, and the hand-ranked case") {
  // system A wins everywhere
  RankMatrix dom;
  dom.systems = {"A", "B"};
  dom.conditions = {"c1", "c2", "c3"};
  dom.scores = {{3, 3, 3}, {1, 2, 1}};
  CHECK(friedman_mean_ranks(dom) == std::vector<double>{1.0, 2.0});

  // an exact tie shares the average rank
  RankMatrix tie;
  tie.systems = {"A", "B"};
  tie.conditions = {"c1", "c2"};
  tie.scores = {{5, 2}, {5, 1}};
  const auto r = friedman_mean_ranks(tie);
  CHECK(r[0] == doctest::Approx((1.5 + 1.0) / 2.0).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx((1.5 + 2.0) / 2.0).epsilon(1e-12));

  // 3 systems, 2 opposite conditions: everyone averages to 2
  RankMatrix cross;
  cross.systems = {"A", "B", "C"};
  cross.conditions = {"c1", "c2"};
  cross.scores = {{3, 1}, {2, 2}, {1, 3}};
  CHECK(friedman_mean_ranks(cross) == std::vector<double>{2.0, 2.0, 2.0});

  RankMatrix degenerate;
  degenerate.systems = {"A"};
  degenerate.conditions = {"c1", "c2"};
  degenerate.scores = {{1, 2}};
  CHECK_THROWS_AS(friedman_mean_ranks(degenerate), std::invalid_argument);
}

TEST_CASE("mean ranks always sum to k(k+1)/2") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 2 + rng.uniform_int(6);
    const int n = 2 + rng.uniform_int(5);
    RankMatrix m;
    for (int s = 0; s < k; ++s) {
      m.systems.push_back("s" + std::to_string(s));
      std::vector<double> row;
      for (int c = 0; c < n; ++c) row.push_back(std::floor(rng.uniform(0.0, 5.0)));
      m.scores.push_back(row);
    }
    for (int c = 0; c < n; ++c) m.conditions.push_back("c" + std::to_string(c));
    const auto ranks = friedman_mean_ranks(m);
    double sum = 0.0;
    for (double v : ranks) sum += v;
    CHECK(sum == doctest::Approx(k * (k + 1) / 2.0).epsilon(1e-9));
  }
}

TEST_CASE("nemenyi critical difference: published q values") {
  CHECK(nemenyi_cd(2, 8, 0.05) == doctest::Approx(0.693).epsilon(1e-3));
  CHECK(nemenyi_cd(3, 4, 0.05) == doctest::Approx(1.657).epsilon(1e-3));
  CHECK(nemenyi_cd(2, 8, 0.05) ==
        doctest::Approx(1.960 * std::sqrt(6.0 / 48.0)).epsilon(1e-12));

  // monotone: shrinks with N, grows with k
  CHECK(nemenyi_cd(4, 100, 0.05) < nemenyi_cd(4, 10, 0.05));
  CHECK(nemenyi_cd(5, 10, 0.05) > nemenyi_cd(4, 10, 0.05));
  // N to infinity: any gap becomes significant
  CHECK(nemenyi_cd(4, 100000000, 0.05) < 1e-3);

  CHECK_THROWS_AS(nemenyi_cd(1, 5, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(nemenyi_cd(11, 5, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(nemenyi_cd(3, 0, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(nemenyi_cd(3, 5, 0.01), std::invalid_argument);
}

TEST_CASE("sunburst: direct counting and invariants") {
  const SunburstNode t = sunburst_stats({{"what", "is"}, {"what", "are"}}, 5);
  CHECK(t.count == 2);
  REQUIRE(t.children.size() == 1);
  CHECK(t.children[0].token == "what");
  CHECK(t.children[0].count == 2);
  REQUIRE(t.children[0].children.size() == 2);  // sorted: are, is
  CHECK(t.children[0].children[0].token == "are");
  CHECK(t.children[0].children[0].count == 1);
  CHECK(t.children[0].children[1].token == "is");

  const SunburstNode empty = sunburst_stats({}, 5);
  CHECK(empty.count == 0);
  CHECK(empty.children.empty());

  CHECK_THROWS_AS(sunburst_stats({{"a"}}, 0), std::invalid_argument);
}

namespace {

// recompute each node's count by scanning all prefixes
void check_counts(const SunburstNode& node, const std::vector<std::vector<std::string>>& qs,
                  std::vector<std::string> prefix) {
  for (const SunburstNode& c : node.children) {
    std::vector<std::string> next = prefix;
    next.push_back(c.token);
    int count = 0;
    for (const auto& q : qs) {
      if (q.size() < next.size()) continue;
      bool match = true;
      for (std::size_t i = 0; i < next.size(); ++i)
        if (q[i] != next[i]) match = false;
      if (match) ++count;
    }
    CHECK(c.count == count);
    check_counts(c, qs, next);
  }
  // node count covers children plus questions terminating here
  int child_sum = 0;
  for (const SunburstNode& c : node.children) child_sum += c.count;
  CHECK(child_sum <= node.count);
}

}  // namespace

TEST_CASE("sunburst counts agree with a brute-force prefix scan on 1000 questions") {
  Rng rng(17);
  const char* words[] = {"what", "is", "the", "a", "dog", "cat", "doing", "?"};
  std::vector<std::vector<std::string>> qs;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> q;
    const int len = 1 + rng.uniform_int(7);
    for (int j = 0; j < len; ++j) q.push_back(words[rng.uniform_int(8)]);
    qs.push_back(q);
  }
  const SunburstNode root = sunburst_stats(qs, 5);
  CHECK(root.count == 1000);
  check_counts(root, qs, {});
}

TEST_CASE("CD diagram SVG: deterministic bytes, bars match the rank-gap rule") {
  CdDiagram d;
  d.systems = {"joint", "hadamard", "addition", "attention"};
  d.mean_ranks = {1.2, 2.4, 2.6, 3.8};
  d.cd = 1.0;
  const std::string svg1 = render_cd_diagram_svg(d);
  const std::string svg2 = render_cd_diagram_svg(d);
  CHECK(svg1 == svg2);

  // expected pairs with |gap| < CD
  std::set<std::pair<int, int>> expect;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      if (std::abs(d.mean_ranks[static_cast<std::size_t>(a)] -
                   d.mean_ranks[static_cast<std::size_t>(b)]) < d.cd)
        expect.insert({a, b});
  std::set<std::pair<int, int>> got;
  std::size_t pos = 0;
  while ((pos = svg1.find("data-pair=\"", pos)) != std::string::npos) {
    pos += 11;
    const std::size_t end = svg1.find('"', pos);
    const std::string pair = svg1.substr(pos, end - pos);
    const std::size_t comma = pair.find(',');
    got.insert({std::stoi(pair.substr(0, comma)), std::stoi(pair.substr(comma + 1))});
  }
  CHECK(got == expect);

  // json mirror carries the same pair list
  const auto j = cd_diagram_to_json(d);
  CHECK(j.at("not_significantly_different").size() == expect.size());
}

TEST_CASE("sunburst SVG renders deterministically with one path per node") {
  const SunburstNode t =
      sunburst_stats({{"what", "is"}, {"what", "are"}, {"where", "is"}}, 3);
  const std::string svg = render_sunburst_svg(t);
  CHECK(svg == render_sunburst_svg(t));
  int paths = 0;
  std::size_t pos = 0;
  while ((pos = svg.find("<path", pos)) != std::string::npos) {
    ++paths;
    ++pos;
  }
  CHECK(paths == 5);  // what, where, what/is, what/are, where/is
  CHECK(svg.find("<title>what: 2</title>") != std::string::npos);
}

TEST_CASE("sunburst JSON round-trips through the parser") {
  const SunburstNode t = sunburst_stats({{"a", "b"}, {"a"}}, 2);
  const auto j = sunburst_to_json(t);
  const auto parsed = nlohmann::json::parse(j.dump());
  CHECK(parsed.at("count") == 2);
  CHECK(parsed.at("children").at(0).at("token") == "a");
  CHECK(parsed.at("children").at(0).at("count") == 2);
  // a terminates once at depth 1, continues once to b
  CHECK(parsed.at("children").at(0).at("children").size() == 1);
}
