#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace vqglab {

// systems x conditions scores, higher is better
struct RankMatrix {
  std::vector<std::string> systems;
  std::vector<std::string> conditions;
  std::vector<std::vector<double>> scores;  // [system][condition]
};

RankMatrix rank_matrix_from_json(const nlohmann::json& j);
RankMatrix load_rank_matrix(const std::string& path);

// Per condition: rank the systems (1 = best score, ties averaged), then mean
// over conditions. The mean ranks always sum to k(k+1)/2.
std::vector<double> friedman_mean_ranks(const RankMatrix& m);

// CD = q_alpha(k) * sqrt(k(k+1)/(6N)); q from the bundled studentized-range
// table, k in [2,10], alpha in {0.05, 0.10}.
double nemenyi_cd(int k_systems, int n_conditions, double alpha = 0.05);

// Word-position prefix tree over the first `depth` tokens of each question.
struct SunburstNode {
  std::string token;
  int count = 0;
  std::vector<SunburstNode> children;  // sorted by token
};

SunburstNode sunburst_stats(const std::vector<std::vector<std::string>>& questions,
                            int depth = 5);

nlohmann::json sunburst_to_json(const SunburstNode& root);

struct CdDiagram {
  std::vector<std::string> systems;
  std::vector<double> mean_ranks;
  double cd = 0.0;
};

// Pairs with |rank gap| < CD are connected; each bar carries
// data-pair="i,j" with the original system indices.
std::string render_cd_diagram_svg(const CdDiagram& d);
nlohmann::json cd_diagram_to_json(const CdDiagram& d);

std::string render_sunburst_svg(const SunburstNode& root);

// Canonical bytes (sorted keys, fixed float formatting); identical input
// gives identical files.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace vqglab
