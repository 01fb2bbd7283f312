#include "nimap/kdtree.hpp"

#include <algorithm>

#include "nimap/errors.hpp"

namespace nimap {

namespace {

// (distance, index) lexicographic; smaller is better.
inline bool betterHit(const KdTree3::Hit& a, const KdTree3::Hit& b) {
  if (a.distSq != b.distSq) {
    return a.distSq < b.distSq;
  }
  return a.index < b.index;
}

// Bounded worst-first pool of the k best hits seen so far.
class HitHeap {
 public:
  explicit HitHeap(std::size_t k) : k_(k) {}

  bool full() const { return hits_.size() == k_; }
  double worstDistSq() const { return hits_.front().distSq; }
  const KdTree3::Hit& worst() const { return hits_.front(); }

  void offer(const KdTree3::Hit& h) {
    if (!full()) {
      hits_.push_back(h);
      std::push_heap(hits_.begin(), hits_.end(), betterHit);
    } else if (betterHit(h, hits_.front())) {
      std::pop_heap(hits_.begin(), hits_.end(), betterHit);
      hits_.back() = h;
      std::push_heap(hits_.begin(), hits_.end(), betterHit);
    }
  }

  std::vector<KdTree3::Hit> sorted() && {
    std::sort(hits_.begin(), hits_.end(), betterHit);
    return std::move(hits_);
  }

 private:
  std::size_t k_;
  std::vector<KdTree3::Hit> hits_;
};

}  // namespace

KdTree3::KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
  std::vector<std::uint32_t> order(points_.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  nodes_.reserve(points_.size());
  root_ = build(order, 0, static_cast<std::int32_t>(order.size()), 0);
}

std::int32_t KdTree3::build(std::vector<std::uint32_t>& order, std::int32_t lo, std::int32_t hi,
                            int depth) {
  if (lo >= hi) {
    return -1;
  }
  const int axis = depth % 3;
  const std::int32_t mid = lo + (hi - lo) / 2;
  std::nth_element(order.begin() + lo, order.begin() + mid, order.begin() + hi,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const std::int32_t nodeIdx = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{-1, -1, order[mid], static_cast<std::uint8_t>(axis)});
  const std::int32_t left = build(order, lo, mid, depth + 1);
  const std::int32_t right = build(order, mid + 1, hi, depth + 1);
  nodes_[nodeIdx].left = left;
  nodes_[nodeIdx].right = right;
  return nodeIdx;
}

std::vector<KdTree3::Hit> KdTree3::knn(const Vec3& query, int k, double maxDist) const {
  if (k <= 0 || root_ < 0) {
    return {};
  }
  const double maxDistSq =
      std::isinf(maxDist) ? std::numeric_limits<double>::infinity() : maxDist * maxDist;
  HitHeap heap(static_cast<std::size_t>(k));

  // Iterative depth-first traversal, near child first.
  struct Frame {
    std::int32_t node;
    double axisGapSq;  // squared plane distance when entering the far child
  };
  std::vector<Frame> stack;
  stack.push_back({root_, 0.0});
  while (!stack.empty()) {
    const Frame frame = stack.back();
    stack.pop_back();
    if (frame.node < 0) {
      continue;
    }
    if (heap.full() && frame.axisGapSq > heap.worstDistSq()) {
      continue;
    }
    const Node& node = nodes_[frame.node];
    const Vec3& p = points_[node.pointIndex];
    const double dSq = (p - query).squaredNorm();
    if (dSq < maxDistSq) {
      heap.offer({node.pointIndex, dSq});
    }
    const double delta = query[node.axis] - p[node.axis];
    const std::int32_t near = delta < 0.0 ? node.left : node.right;
    const std::int32_t far = delta < 0.0 ? node.right : node.left;
    // Far side is pushed first so the near side is explored before it.
    if (far >= 0 && delta * delta < maxDistSq) {
      stack.push_back({far, delta * delta});
    }
    if (near >= 0) {
      stack.push_back({near, 0.0});
    }
  }
  return std::move(heap).sorted();
}

KdTree3::Hit KdTree3::nearest(const Vec3& query) const {
  if (empty()) {
    throw EmptyInputError("KdTree3::nearest: empty tree");
  }
  auto hits = knn(query, 1);
  if (hits.empty()) {
    throw EmptyInputError("KdTree3::nearest: no hit (maxDist too small?)");
  }
  return hits.front();
}

}  // namespace nimap
