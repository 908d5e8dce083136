#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vqglab {

struct ExemplarPair {
  std::vector<std::string> supporting;
  std::vector<std::string> contrasting;
};

// Exact k-NN over feature vectors (k-d tree, Euclidean metric) plus a coarse
// k-means quantization used to locate the region farthest from a query.
// Immutable after build; concurrent queries are safe.
class ExemplarIndex {
 public:
  // k-means runs to convergence or 100 iterations with farthest-point
  // seeding under `seed`; the k-d tree is built over the raw features.
  static ExemplarIndex build(std::vector<std::pair<std::string, std::vector<double>>> features,
                             int n_clusters, std::uint64_t seed);

  // supporting: the k nearest neighbours of the target (target excluded);
  // contrasting: the k members nearest to the centroid farthest from the
  // target. Ties break by ascending id.
  ExemplarPair find_exemplars(const std::string& target_id, int k) const;

  // uniform without replacement, target excluded; the two draws are
  // independent. Deterministic in seed.
  ExemplarPair random_exemplars(const std::string& target_id, int k,
                                std::uint64_t seed) const;

  int n_samples() const { return static_cast<int>(ids_.size()); }
  int n_clusters() const { return static_cast<int>(centroids_.size()); }
  int dim() const { return dim_; }
  int cluster_of(const std::string& id) const;
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<double>& features_of(const std::string& id) const;
  const std::vector<std::vector<double>>& centroids() const { return centroids_; }

  // versioned little-endian binary file; the tree is rebuilt on load
  void save(const std::string& path) const;
  static ExemplarIndex load(const std::string& path);

 private:
  ExemplarIndex() = default;
  void build_tree();
  void run_kmeans(int n_clusters, std::uint64_t seed);
  int index_of(const std::string& id) const;
  std::vector<int> knn(int target, int k) const;

  struct TreeNode {
    int point = -1;  // index into ids_/features_
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> features_;
  std::vector<std::vector<double>> centroids_;
  std::vector<int> assignment_;
  std::vector<TreeNode> tree_;
  int root_ = -1;
  std::unordered_map<std::string, int> id_index_;
};

double squared_distance(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace vqglab
