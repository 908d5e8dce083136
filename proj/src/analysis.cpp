#include "vqglab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "vqglab/data.hpp"  // IoError

namespace vqglab {

using nlohmann::json;

// ---- rank matrix -----------------------------------------------------------

RankMatrix rank_matrix_from_json(const json& j) {
  RankMatrix m;
  if (!j.is_object() || !j.contains("systems") || !j.contains("scores")) {
    throw std::invalid_argument("scores file: expected {\"systems\", \"conditions\", \"scores\"}");
  }
  m.systems = j.at("systems").get<std::vector<std::string>>();
  if (j.contains("conditions")) {
    m.conditions = j.at("conditions").get<std::vector<std::string>>();
  }
  m.scores = j.at("scores").get<std::vector<std::vector<double>>>();
  if (m.conditions.empty() && !m.scores.empty()) {
    for (std::size_t c = 0; c < m.scores[0].size(); ++c)
      m.conditions.push_back("c" + std::to_string(c));
  }
  return m;
}

RankMatrix load_rank_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scores file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("scores file '" + path + "': " + e.what());
  }
  return rank_matrix_from_json(j);
}

std::vector<double> friedman_mean_ranks(const RankMatrix& m) {
  const int k = static_cast<int>(m.systems.size());
  const int n = static_cast<int>(m.conditions.size());
  if (k < 2 || n < 2) {
    throw std::invalid_argument("friedman_mean_ranks: need >= 2 systems and >= 2 conditions");
  }
  if (static_cast<int>(m.scores.size()) != k) {
    throw std::invalid_argument("friedman_mean_ranks: scores have " +
                                std::to_string(m.scores.size()) + " rows, expected " +
                                std::to_string(k));
  }
  for (const auto& row : m.scores) {
    if (static_cast<int>(row.size()) != n) {
      throw std::invalid_argument("friedman_mean_ranks: row with " +
                                  std::to_string(row.size()) + " entries, expected " +
                                  std::to_string(n));
    }
  }

  std::vector<double> mean(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < n; ++c) {
    // sort systems by score descending; equal scores share the average rank
    std::vector<int> order(static_cast<std::size_t>(k));
    for (int s = 0; s < k; ++s) order[static_cast<std::size_t>(s)] = s;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return m.scores[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] >
             m.scores[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)];
    });
    int pos = 0;
    while (pos < k) {
      int end = pos;
      while (end + 1 < k &&
             m.scores[static_cast<std::size_t>(order[static_cast<std::size_t>(end + 1)])]
                     [static_cast<std::size_t>(c)] ==
                 m.scores[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])]
                         [static_cast<std::size_t>(c)]) {
        ++end;
      }
      const double shared = (static_cast<double>(pos + 1) + static_cast<double>(end + 1)) / 2.0;
      for (int i = pos; i <= end; ++i)
        mean[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] += shared;
      pos = end + 1;
    }
  }
  for (double& v : mean) v /= n;
  return mean;
}

namespace {

// two-tailed studentized-range based q values, k = 2..10
constexpr double kQ05[] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};
constexpr double kQ10[] = {1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920};

}  // namespace

double nemenyi_cd(int k_systems, int n_conditions, double alpha) {
  if (k_systems < 2 || k_systems > 10) {
    throw std::invalid_argument("nemenyi_cd: k must be in [2,10], got " +
                                std::to_string(k_systems));
  }
  if (n_conditions < 1) throw std::invalid_argument("nemenyi_cd: N must be >= 1");
  const double* table = nullptr;
  if (alpha == 0.05) table = kQ05;
  else if (alpha == 0.10) table = kQ10;
  else throw std::invalid_argument("nemenyi_cd: alpha must be 0.05 or 0.10");
  const double q = table[k_systems - 2];
  return q * std::sqrt(static_cast<double>(k_systems) * (k_systems + 1) /
                       (6.0 * n_conditions));
}

// ---- sunburst ---------------------------------------------------------------

namespace {

void insert_prefix(SunburstNode& node, const std::vector<std::string>& q, std::size_t pos,
                   std::size_t depth) {
  if (pos >= q.size() || pos >= depth) return;
  const std::string& tok = q[pos];
  auto it = std::lower_bound(node.children.begin(), node.children.end(), tok,
                             [](const SunburstNode& n, const std::string& t) {
                               return n.token < t;
                             });
  if (it == node.children.end() || it->token != tok) {
    it = node.children.insert(it, SunburstNode{tok, 0, {}});
  }
  ++it->count;
  insert_prefix(*it, q, pos + 1, depth);
}

}  // namespace

SunburstNode sunburst_stats(const std::vector<std::vector<std::string>>& questions,
                            int depth) {
  if (depth < 1) throw std::invalid_argument("sunburst_stats: depth must be >= 1");
  SunburstNode root{"", 0, {}};
  for (const auto& q : questions) {
    ++root.count;
    insert_prefix(root, q, 0, static_cast<std::size_t>(depth));
  }
  return root;
}

json sunburst_to_json(const SunburstNode& root) {
  json j;
  j["token"] = root.token;
  j["count"] = root.count;
  json children = json::array();
  for (const SunburstNode& c : root.children) children.push_back(sunburst_to_json(c));
  j["children"] = children;
  return j;
}

// ---- SVG rendering -------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                          "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

}  // namespace

json cd_diagram_to_json(const CdDiagram& d) {
  json j;
  j["systems"] = d.systems;
  j["mean_ranks"] = d.mean_ranks;
  j["cd"] = d.cd;
  json pairs = json::array();
  for (std::size_t a = 0; a < d.systems.size(); ++a)
    for (std::size_t b = a + 1; b < d.systems.size(); ++b)
      if (std::abs(d.mean_ranks[a] - d.mean_ranks[b]) < d.cd)
        pairs.push_back({static_cast<int>(a), static_cast<int>(b)});
  j["not_significantly_different"] = pairs;
  return j;
}

std::string render_cd_diagram_svg(const CdDiagram& d) {
  const int k = static_cast<int>(d.systems.size());
  if (k < 2 || static_cast<int>(d.mean_ranks.size()) != k) {
    throw std::invalid_argument("render_cd_diagram_svg: need matching systems and ranks");
  }
  const double width = 640.0, margin = 60.0;
  const double axis_y = 70.0;
  const double span = width - 2.0 * margin;
  auto x_of = [&](double rank) { return margin + (rank - 1.0) / (k - 1.0) * span; };

  // bars for pairs closer than CD, staggered above the axis
  std::string bars;
  int level = 0;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      if (std::abs(d.mean_ranks[static_cast<std::size_t>(a)] -
                   d.mean_ranks[static_cast<std::size_t>(b)]) >= d.cd) {
        continue;
      }
      const double y = axis_y - 12.0 - 7.0 * level;
      const double xa = x_of(d.mean_ranks[static_cast<std::size_t>(a)]);
      const double xb = x_of(d.mean_ranks[static_cast<std::size_t>(b)]);
      bars += "  <line class=\"cd-bar\" data-pair=\"" + std::to_string(a) + "," +
              std::to_string(b) + "\" x1=\"" + fmt(std::min(xa, xb)) + "\" y1=\"" + fmt(y) +
              "\" x2=\"" + fmt(std::max(xa, xb)) + "\" y2=\"" + fmt(y) +
              "\" stroke=\"" + kPalette[level % 10] + "\" stroke-width=\"3\"/>\n";
      ++level;
    }
  }
  const double height = axis_y + 30.0 + 16.0 * k;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" +
         fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) + "\">\n";
  svg += "  <line x1=\"" + fmt(margin) + "\" y1=\"" + fmt(axis_y) + "\" x2=\"" +
         fmt(width - margin) + "\" y2=\"" + fmt(axis_y) + "\" stroke=\"black\"/>\n";
  for (int r = 1; r <= k; ++r) {
    svg += "  <line x1=\"" + fmt(x_of(r)) + "\" y1=\"" + fmt(axis_y - 4) + "\" x2=\"" +
           fmt(x_of(r)) + "\" y2=\"" + fmt(axis_y + 4) + "\" stroke=\"black\"/>\n";
    svg += "  <text x=\"" + fmt(x_of(r)) + "\" y=\"" + fmt(axis_y + 18) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + std::to_string(r) + "</text>\n";
  }
  // CD ruler
  svg += "  <line class=\"cd-ruler\" x1=\"" + fmt(margin) + "\" y1=\"20\" x2=\"" +
         fmt(margin + d.cd / (k - 1.0) * span) + "\" y2=\"20\" stroke=\"black\" "
         "stroke-width=\"2\"/>\n";
  svg += "  <text x=\"" + fmt(margin) + "\" y=\"14\" font-size=\"11\">CD = " + fmt(d.cd) +
         "</text>\n";
  svg += bars;
  // system markers and labels, listed by rank
  std::vector<int> order(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return d.mean_ranks[static_cast<std::size_t>(a)] < d.mean_ranks[static_cast<std::size_t>(b)];
  });
  for (int row = 0; row < k; ++row) {
    const int s = order[static_cast<std::size_t>(row)];
    const double x = x_of(d.mean_ranks[static_cast<std::size_t>(s)]);
    const double y = axis_y + 34.0 + 16.0 * row;
    svg += "  <line x1=\"" + fmt(x) + "\" y1=\"" + fmt(axis_y) + "\" x2=\"" + fmt(x) +
           "\" y2=\"" + fmt(y - 4) + "\" stroke=\"#888\" stroke-dasharray=\"2,2\"/>\n";
    svg += "  <text x=\"" + fmt(x + 3) + "\" y=\"" + fmt(y) + "\" font-size=\"12\">" +
           escape_xml(d.systems[static_cast<std::size_t>(s)]) + " (" +
           fmt(d.mean_ranks[static_cast<std::size_t>(s)]) + ")</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string arc_path(double cx, double cy, double r0, double r1, double a0, double a1) {
  // split spans >= pi so the arc flags stay unambiguous
  if (a1 - a0 >= kPi) {
    const double mid = (a0 + a1) / 2.0;
    std::string left = arc_path(cx, cy, r0, r1, a0, mid);
    std::string right = arc_path(cx, cy, r0, r1, mid, a1);
    return left + right;
  }
  auto px = [&](double r, double a) { return cx + r * std::sin(a); };
  auto py = [&](double r, double a) { return cy - r * std::cos(a); };
  std::string p;
  p += "M " + fmt(px(r0, a0)) + " " + fmt(py(r0, a0)) + " ";
  p += "L " + fmt(px(r1, a0)) + " " + fmt(py(r1, a0)) + " ";
  p += "A " + fmt(r1) + " " + fmt(r1) + " 0 0 1 " + fmt(px(r1, a1)) + " " + fmt(py(r1, a1)) +
       " ";
  p += "L " + fmt(px(r0, a1)) + " " + fmt(py(r0, a1)) + " ";
  p += "A " + fmt(r0) + " " + fmt(r0) + " 0 0 0 " + fmt(px(r0, a0)) + " " + fmt(py(r0, a0)) +
       " Z ";
  return p;
}

void render_ring(std::string& svg, const SunburstNode& node, double a0, double a1, int depth,
                 double cx, double cy, double ring, int color_seed) {
  if (node.children.empty() || node.count == 0) return;
  const double r0 = 28.0 + ring * depth;
  const double r1 = r0 + ring - 2.0;
  double angle = a0;
  int ci = color_seed;
  for (const SunburstNode& child : node.children) {
    const double frac = static_cast<double>(child.count) / node.count;
    const double next = angle + frac * (a1 - a0);
    svg += "  <path class=\"ring-" + std::to_string(depth) + "\" d=\"" +
           arc_path(cx, cy, r0, r1, angle, next) + "\" fill=\"" + kPalette[ci % 10] +
           "\" fill-opacity=\"" + fmt(0.95 - 0.12 * depth) + "\" stroke=\"white\" "
           "stroke-width=\"0.5\">";
    svg += "<title>" + escape_xml(child.token) + ": " + std::to_string(child.count) +
           "</title></path>\n";
    render_ring(svg, child, angle, next, depth + 1, cx, cy, ring, ci + 1);
    angle = next;
    ++ci;
  }
}

int tree_depth(const SunburstNode& n) {
  int d = 0;
  for (const SunburstNode& c : n.children) d = std::max(d, 1 + tree_depth(c));
  return d;
}

}  // namespace

std::string render_sunburst_svg(const SunburstNode& root) {
  const int depth = std::max(1, tree_depth(root));
  const double ring = 34.0;
  const double radius = 28.0 + ring * depth + 8.0;
  const double size = 2.0 * radius + 20.0;
  const double c = size / 2.0;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(size) + "\" height=\"" +
         fmt(size) + "\" viewBox=\"0 0 " + fmt(size) + " " + fmt(size) + "\">\n";
  svg += "  <circle cx=\"" + fmt(c) + "\" cy=\"" + fmt(c) + "\" r=\"26\" fill=\"#eee\"/>\n";
  svg += "  <text x=\"" + fmt(c) + "\" y=\"" + fmt(c + 4) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + std::to_string(root.count) +
         "</text>\n";
  render_ring(svg, root, 0.0, 2.0 * kPi, 0, c, c, ring, 0);
  svg += "</svg>\n";
  return svg;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace vqglab
