#include <algorithm>
#include <numeric>
#include <queue>

#include "coralvol/model.hpp"

namespace coralvol::model {

namespace {

constexpr std::size_t kLeafSize = 8;

struct KdNode {
  std::uint32_t begin, end;  // range into the permutation
  int axis = -1;             // -1 for leaves
  double split = 0.0;
  std::uint32_t left = 0, right = 0;
};

class KdTree {
 public:
  explicit KdTree(const std::vector<std::array<double, 3>>& pts) : pts_(pts), order_(pts.size()) {
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * pts.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(pts.size()));
  }

  // (squared distance, index) pairs of the k best candidates other than `self`.
  void query(std::uint32_t self, std::size_t k, std::vector<std::pair<double, std::uint32_t>>& heap) const {
    heap.clear();
    search(0, self, k, heap);
    std::sort_heap(heap.begin(), heap.end());
  }

 private:
  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;
    std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (auto i = begin; i < end; ++i)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], pts_[order_[i]][a]);
        hi[a] = std::max(hi[a], pts_[order_[i]][a]);
      }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t x, std::uint32_t y) { return pts_[x][axis] < pts_[y][axis]; });
    const double split = pts_[order_[mid]][axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::uint32_t node_id, std::uint32_t self, std::size_t k,
              std::vector<std::pair<double, std::uint32_t>>& heap) const {
    const KdNode& node = nodes_[node_id];
    const auto& q = pts_[self];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const std::uint32_t j = order_[i];
        if (j == self) continue;
        const double dx = pts_[j][0] - q[0], dy = pts_[j][1] - q[1], dz = pts_[j][2] - q[2];
        const std::pair<double, std::uint32_t> cand{dx * dx + dy * dy + dz * dz, j};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t near = diff < 0.0 ? node.left : node.right;
    const std::uint32_t far = diff < 0.0 ? node.right : node.left;
    search(near, self, k, heap);
    // Equal distances must still be explored: a tie may carry a smaller index.
    if (heap.size() < k || diff * diff <= heap.front().first) search(far, self, k, heap);
  }

  const std::vector<std::array<double, 3>>& pts_;
  std::vector<std::uint32_t> order_;
  std::vector<KdNode> nodes_;
};

}  // namespace

std::vector<std::uint32_t> knn_graph(const std::vector<std::array<double, 3>>& points, std::size_t k) {
  if (k < 1) throw ConfigError("knn_graph: k must be at least 1");
  if (points.size() <= k)
    throw DataError("knn_graph: " + std::to_string(points.size()) + " points cannot have " +
                    std::to_string(k) + " neighbours each");
  const KdTree tree(points);
  std::vector<std::uint32_t> out(points.size() * k);
  std::vector<std::pair<double, std::uint32_t>> heap;
  heap.reserve(k + 1);
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    tree.query(i, k, heap);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = heap[j].second;
  }
  return out;
}

}  // namespace coralvol::model
