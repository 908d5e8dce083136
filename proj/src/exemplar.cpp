#include "vqglab/exemplar.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>

#include "vqglab/data.hpp"  // IoError
#include "vqglab/rng.hpp"

namespace vqglab {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

int ExemplarIndex::index_of(const std::string& id) const {
  auto it = id_index_.find(id);
  if (it == id_index_.end()) {
    throw std::invalid_argument("ExemplarIndex: unknown sample id '" + id + "'");
  }
  return it->second;
}

int ExemplarIndex::cluster_of(const std::string& id) const {
  return assignment_[static_cast<std::size_t>(index_of(id))];
}

const std::vector<double>& ExemplarIndex::features_of(const std::string& id) const {
  return features_[static_cast<std::size_t>(index_of(id))];
}

// ---- build -------------------------------------------------------------------

ExemplarIndex ExemplarIndex::build(
    std::vector<std::pair<std::string, std::vector<double>>> features, int n_clusters,
    std::uint64_t seed) {
  if (features.size() < 2) throw std::invalid_argument("build_index: need at least 2 samples");
  if (n_clusters < 1 || n_clusters > static_cast<int>(features.size())) {
    throw std::invalid_argument("build_index: n_clusters (" + std::to_string(n_clusters) +
                                ") must be in [1, n_samples=" +
                                std::to_string(features.size()) + "]");
  }
  ExemplarIndex idx;
  idx.dim_ = static_cast<int>(features[0].second.size());
  for (auto& [id, f] : features) {
    if (static_cast<int>(f.size()) != idx.dim_) {
      throw std::invalid_argument("build_index: sample '" + id +
                                  "' has feature length " + std::to_string(f.size()) +
                                  ", expected " + std::to_string(idx.dim_));
    }
    if (!idx.id_index_.emplace(id, static_cast<int>(idx.ids_.size())).second) {
      throw std::invalid_argument("build_index: duplicate sample id '" + id + "'");
    }
    idx.ids_.push_back(std::move(id));
    idx.features_.push_back(std::move(f));
  }
  idx.run_kmeans(n_clusters, seed);
  idx.build_tree();
  return idx;
}

void ExemplarIndex::run_kmeans(int n_clusters, std::uint64_t seed) {
  const int n = n_samples();
  Rng rng(mix_seed(seed, 0x6b6d));

  // farthest-point seeding
  std::vector<int> chosen;
  chosen.push_back(rng.uniform_int(n));
  std::vector<double> best_dist(static_cast<std::size_t>(n),
                                std::numeric_limits<double>::infinity());
  while (static_cast<int>(chosen.size()) < n_clusters) {
    const auto& last = features_[static_cast<std::size_t>(chosen.back())];
    int far = -1;
    double far_d = -1.0;
    for (int i = 0; i < n; ++i) {
      best_dist[static_cast<std::size_t>(i)] =
          std::min(best_dist[static_cast<std::size_t>(i)],
                   squared_distance(features_[static_cast<std::size_t>(i)], last));
      if (best_dist[static_cast<std::size_t>(i)] > far_d) {
        far_d = best_dist[static_cast<std::size_t>(i)];
        far = i;
      }
    }
    chosen.push_back(far);
  }
  centroids_.clear();
  for (int c : chosen) centroids_.push_back(features_[static_cast<std::size_t>(c)]);

  assignment_.assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < n_clusters; ++c) {
        const double d = squared_distance(features_[static_cast<std::size_t>(i)],
                                          centroids_[static_cast<std::size_t>(c)]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assignment_[static_cast<std::size_t>(i)] != best) {
        assignment_[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(
        static_cast<std::size_t>(n_clusters),
        std::vector<double>(static_cast<std::size_t>(dim_), 0.0));
    std::vector<int> counts(static_cast<std::size_t>(n_clusters), 0);
    for (int i = 0; i < n; ++i) {
      const int c = assignment_[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(c)];
      for (int d = 0; d < dim_; ++d)
        sums[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] +=
            features_[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
    }
    for (int c = 0; c < n_clusters; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // restart an empty cluster at the point farthest from its centroid
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = squared_distance(
              features_[static_cast<std::size_t>(i)],
              centroids_[static_cast<std::size_t>(assignment_[static_cast<std::size_t>(i)])]);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        centroids_[static_cast<std::size_t>(c)] = features_[static_cast<std::size_t>(far)];
        continue;
      }
      for (int d = 0; d < dim_; ++d)
        centroids_[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] =
            sums[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] /
            counts[static_cast<std::size_t>(c)];
    }
  }
}

void ExemplarIndex::build_tree() {
  tree_.clear();
  std::vector<int> order(ids_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  // recursive median split, axis cycling with depth
  std::function<int(int, int, int)> rec = [&](int lo, int hi, int depth) -> int {
    if (lo >= hi) return -1;
    const int axis = depth % dim_;
    const int mid = (lo + hi) / 2;
    std::nth_element(order.begin() + lo, order.begin() + mid, order.begin() + hi,
                     [&](int a, int b) {
                       const double va = features_[static_cast<std::size_t>(a)]
                                                  [static_cast<std::size_t>(axis)];
                       const double vb = features_[static_cast<std::size_t>(b)]
                                                  [static_cast<std::size_t>(axis)];
                       if (va != vb) return va < vb;
                       return ids_[static_cast<std::size_t>(a)] < ids_[static_cast<std::size_t>(b)];
                     });
    TreeNode node;
    node.point = order[static_cast<std::size_t>(mid)];
    node.axis = axis;
    const int self = static_cast<int>(tree_.size());
    tree_.push_back(node);
    const int left = rec(lo, mid, depth + 1);
    const int right = rec(mid + 1, hi, depth + 1);
    tree_[static_cast<std::size_t>(self)].left = left;
    tree_[static_cast<std::size_t>(self)].right = right;
    return self;
  };
  root_ = rec(0, static_cast<int>(order.size()), 0);
}

// ---- queries -----------------------------------------------------------------

namespace {

// candidate ordering: (distance, id) ascending; heap keeps the worst on top
struct Cand {
  double dist;
  int point;
  const std::vector<std::string>* ids;
  bool operator<(const Cand& o) const {
    if (dist != o.dist) return dist < o.dist;
    return (*ids)[static_cast<std::size_t>(point)] < (*ids)[static_cast<std::size_t>(o.point)];
  }
};

}  // namespace

std::vector<int> ExemplarIndex::knn(int target, int k) const {
  const auto& q = features_[static_cast<std::size_t>(target)];
  std::priority_queue<Cand> heap;  // max-heap by (dist, id)

  std::function<void(int)> visit = [&](int ni) {
    if (ni < 0) return;
    const TreeNode& node = tree_[static_cast<std::size_t>(ni)];
    const int p = node.point;
    if (p != target) {
      const double d = squared_distance(q, features_[static_cast<std::size_t>(p)]);
      const Cand c{d, p, &ids_};
      if (static_cast<int>(heap.size()) < k) {
        heap.push(c);
      } else if (c < heap.top()) {
        heap.pop();
        heap.push(c);
      }
    }
    const double split = features_[static_cast<std::size_t>(p)][static_cast<std::size_t>(node.axis)];
    const double delta = q[static_cast<std::size_t>(node.axis)] - split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    visit(near);
    // the far side may still hold equal-distance lower ids, so prune with <=
    if (static_cast<int>(heap.size()) < k || delta * delta <= heap.top().dist) visit(far);
  };
  visit(root_);

  std::vector<Cand> got;
  while (!heap.empty()) {
    got.push_back(heap.top());
    heap.pop();
  }
  std::sort(got.begin(), got.end());
  std::vector<int> out;
  out.reserve(got.size());
  for (const Cand& c : got) out.push_back(c.point);
  return out;
}

ExemplarPair ExemplarIndex::find_exemplars(const std::string& target_id, int k) const {
  const int target = index_of(target_id);
  if (k < 1 || k >= n_samples()) {
    throw std::invalid_argument("find_exemplars: k (" + std::to_string(k) +
                                ") must be in [1, n_samples-1=" +
                                std::to_string(n_samples() - 1) + "]");
  }

  ExemplarPair out;
  for (int p : knn(target, k)) out.supporting.push_back(ids_[static_cast<std::size_t>(p)]);

  // centroid farthest from the target (ties: lowest centroid index)
  const auto& q = features_[static_cast<std::size_t>(target)];
  int far_c = 0;
  double far_d = -1.0;
  for (int c = 0; c < n_clusters(); ++c) {
    const double d = squared_distance(q, centroids_[static_cast<std::size_t>(c)]);
    if (d > far_d) {
      far_d = d;
      far_c = c;
    }
  }
  // members of that cluster first, then everyone else, by (dist-to-centroid, id)
  const auto& ctr = centroids_[static_cast<std::size_t>(far_c)];
  auto rank = [&](bool member) {
    std::vector<std::pair<double, int>> v;
    for (int i = 0; i < n_samples(); ++i) {
      if (i == target) continue;
      if ((assignment_[static_cast<std::size_t>(i)] == far_c) != member) continue;
      v.emplace_back(squared_distance(features_[static_cast<std::size_t>(i)], ctr), i);
    }
    std::sort(v.begin(), v.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return ids_[static_cast<std::size_t>(a.second)] < ids_[static_cast<std::size_t>(b.second)];
    });
    return v;
  };
  for (const auto& [d, i] : rank(true)) {
    if (static_cast<int>(out.contrasting.size()) >= k) break;
    out.contrasting.push_back(ids_[static_cast<std::size_t>(i)]);
  }
  if (static_cast<int>(out.contrasting.size()) < k) {
    for (const auto& [d, i] : rank(false)) {
      if (static_cast<int>(out.contrasting.size()) >= k) break;
      out.contrasting.push_back(ids_[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

ExemplarPair ExemplarIndex::random_exemplars(const std::string& target_id, int k,
                                             std::uint64_t seed) const {
  const int target = index_of(target_id);
  if (k < 1 || k >= n_samples()) {
    throw std::invalid_argument("random_exemplars: k (" + std::to_string(k) +
                                ") must be in [1, n_samples-1=" +
                                std::to_string(n_samples() - 1) + "]");
  }
  std::vector<int> others;
  for (int i = 0; i < n_samples(); ++i)
    if (i != target) others.push_back(i);

  Rng rng(mix_seed(seed, 0x72616e));
  ExemplarPair out;
  rng.shuffle(others);
  for (int i = 0; i < k; ++i) out.supporting.push_back(ids_[static_cast<std::size_t>(others[static_cast<std::size_t>(i)])]);
  rng.shuffle(others);
  for (int i = 0; i < k; ++i) out.contrasting.push_back(ids_[static_cast<std::size_t>(others[static_cast<std::size_t>(i)])]);
  return out;
}

// ---- persistence ---------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'V', 'Q', 'G', 'I', 'D', 'X', '1', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little,
                "index files are little-endian");
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void ExemplarIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write index file '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, 1);  // version
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(n_samples()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(n_clusters()));
  for (const std::string& id : ids_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  for (const auto& f : features_)
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(double)));
  for (const auto& c : centroids_)
    out.write(reinterpret_cast<const char*>(c.data()),
              static_cast<std::streamsize>(c.size() * sizeof(double)));
  for (int a : assignment_) put<std::uint32_t>(out, static_cast<std::uint32_t>(a));
  if (!out) throw IoError("short write to '" + path + "'");
}

ExemplarIndex ExemplarIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index file '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::invalid_argument("index file '" + path + "' has wrong magic");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != 1) {
    throw std::invalid_argument("index file '" + path + "' has unsupported version " +
                                std::to_string(version));
  }
  ExemplarIndex idx;
  idx.dim_ = static_cast<int>(get<std::uint32_t>(in));
  const int n = static_cast<int>(get<std::uint32_t>(in));
  const int c = static_cast<int>(get<std::uint32_t>(in));
  for (int i = 0; i < n; ++i) {
    const auto len = get<std::uint32_t>(in);
    std::string id(len, '\0');
    in.read(id.data(), len);
    idx.id_index_.emplace(id, static_cast<int>(idx.ids_.size()));
    idx.ids_.push_back(std::move(id));
  }
  idx.features_.assign(static_cast<std::size_t>(n),
                       std::vector<double>(static_cast<std::size_t>(idx.dim_)));
  for (auto& f : idx.features_)
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(double)));
  idx.centroids_.assign(static_cast<std::size_t>(c),
                        std::vector<double>(static_cast<std::size_t>(idx.dim_)));
  for (auto& ctr : idx.centroids_)
    in.read(reinterpret_cast<char*>(ctr.data()),
            static_cast<std::streamsize>(ctr.size() * sizeof(double)));
  idx.assignment_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    idx.assignment_[static_cast<std::size_t>(i)] = static_cast<int>(get<std::uint32_t>(in));
  if (!in) throw std::invalid_argument("index file '" + path + "' is truncated");
  idx.build_tree();
  return idx;
}

}  // namespace vqglab
