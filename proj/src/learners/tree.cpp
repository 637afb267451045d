#include <algorithm>
#include <numeric>

#include "ssls/learners.hpp"

namespace ssls {

namespace {

// Greedy variance-reduction tree growth over per-feature presorted row
// orders. The orders are computed once per design matrix so boosting can
// reuse them for every tree.
class TreeGrower {
 public:
  explicit TreeGrower(const Matrix& x) : x_(x), go_left_(static_cast<std::size_t>(x.rows())) {
    const Index n = x.rows();
    order_.resize(static_cast<std::size_t>(x.cols()));
    for (Index f = 0; f < x.cols(); ++f) {
      auto& ord = order_[static_cast<std::size_t>(f)];
      ord.resize(static_cast<std::size_t>(n));
      std::iota(ord.begin(), ord.end(), Index{0});
      std::stable_sort(ord.begin(), ord.end(),
                       [&](Index i, Index j) { return x(i, f) < x(j, f); });
    }
  }

  // cp: a split must reduce the SSE by more than cp times the root SSE.
  RegressionTree grow(const Vector& target, int max_depth, int min_leaf, double cp = 0.0) {
    target_ = &target;
    max_depth_ = max_depth;
    min_leaf_ = min_leaf;
    min_gain_ = cp > 0.0 ? cp * (target.array() - target.mean()).square().sum() : 0.0;
    nodes_.clear();
    nodes_.emplace_back();
    auto lists = order_;
    grow_node(0, lists, 0);
    return RegressionTree(std::move(nodes_));
  }

 private:
  using Lists = std::vector<std::vector<Index>>;

  void grow_node(int id, Lists& lists, int depth) {
    const Vector& t = *target_;
    const auto& members = lists[0];
    const auto n = static_cast<Index>(members.size());
    double sum = 0.0;
    for (Index i : members) sum += t(i);
    const double mean = sum / static_cast<double>(n);
    double sse = 0.0;
    for (Index i : members) sse += (t(i) - mean) * (t(i) - mean);
    nodes_[static_cast<std::size_t>(id)].value = mean;
    nodes_[static_cast<std::size_t>(id)].n = n;

    if (depth >= max_depth_ || n < 2 * static_cast<Index>(min_leaf_) || !(sse > 0.0)) return;

    // Ties: lowest feature, then smallest threshold (strict improvement only).
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = std::max(1e-10 * sse, min_gain_);
    const double base = sum * sum / static_cast<double>(n);
    for (std::size_t f = 0; f < lists.size(); ++f) {
      const auto& ord = lists[f];
      const auto col = static_cast<Index>(f);
      double left_sum = 0.0;
      for (Index k = 0; k + 1 < n; ++k) {
        left_sum += t(ord[static_cast<std::size_t>(k)]);
        const Index nl = k + 1;
        const Index nr = n - nl;
        if (nr < min_leaf_) break;
        if (nl < min_leaf_) continue;
        const double xv = x_(ord[static_cast<std::size_t>(k)], col);
        const double xn = x_(ord[static_cast<std::size_t>(k + 1)], col);
        if (!(xv < xn)) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - base;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          double mid = xv + 0.5 * (xn - xv);
          if (!(mid < xn)) mid = xv;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return;

    for (Index i : members) {
      go_left_[static_cast<std::size_t>(i)] = x_(i, best_feature) <= best_threshold ? 1 : 0;
    }
    Lists left(lists.size());
    Lists right(lists.size());
    for (std::size_t f = 0; f < lists.size(); ++f) {
      for (Index i : lists[f]) {
        (go_left_[static_cast<std::size_t>(i)] ? left[f] : right[f]).push_back(i);
      }
      std::vector<Index>().swap(lists[f]);
    }

    const int left_id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const int right_id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left_id;
    node.right = right_id;

    grow_node(left_id, left, depth + 1);
    grow_node(right_id, right, depth + 1);
  }

  const Matrix& x_;
  Lists order_;
  std::vector<char> go_left_;
  std::vector<TreeNode> nodes_;
  const Vector* target_ = nullptr;
  int max_depth_ = 0;
  int min_leaf_ = 1;
  double min_gain_ = 0.0;
};

void check_tree_args(const Matrix& x, const Vector& y, int max_depth, int min_leaf) {
  if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "tree: x and y lengths differ");
  if (max_depth < 1 || min_leaf < 1) {
    throw Error(ErrorKind::InvalidArgument, "tree: max_depth and min_leaf must be >= 1");
  }
  if (y.size() < 2 * static_cast<Index>(min_leaf)) {
    throw Error(ErrorKind::TooFewSamples, "tree: fewer than 2*min_leaf training rows");
  }
}

}  // namespace

double RegressionTree::predict_row(const RowRef& row) const {
  int id = 0;
  while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
    const auto& node = nodes_[static_cast<std::size_t>(id)];
    id = row(node.feature) <= node.threshold ? node.left : node.right;
  }
  return nodes_[static_cast<std::size_t>(id)].value;
}

int RegressionTree::leaf_of(const Matrix& x, Index i) const {
  int id = 0;
  while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
    const auto& node = nodes_[static_cast<std::size_t>(id)];
    id = x(i, node.feature) <= node.threshold ? node.left : node.right;
  }
  return id;
}

Vector RegressionTree::predict(const Matrix& x) const {
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out(i) = nodes_[static_cast<std::size_t>(leaf_of(x, i))].value;
  return out;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const auto& node = nodes_[id];
    if (node.feature >= 0) {
      d[static_cast<std::size_t>(node.left)] = d[id] + 1;
      d[static_cast<std::size_t>(node.right)] = d[id] + 1;
      best = std::max(best, d[id] + 1);
    }
  }
  return best;
}

double GbmModel::predict_row(const RowRef& row) const {
  double out = init_;
  for (const auto& tree : trees_) out += shrinkage_ * tree.predict_row(row);
  return out;
}

Vector GbmModel::predict(const Matrix& x) const {
  Vector out = Vector::Constant(x.rows(), init_);
  for (const auto& tree : trees_) out += shrinkage_ * tree.predict(x);
  return out;
}

RegressionTree fit_cart(const Matrix& x, const Vector& y, const CartSpec& spec) {
  check_tree_args(x, y, spec.max_depth, spec.min_leaf);
  TreeGrower grower(x);
  return grower.grow(y, spec.max_depth, spec.min_leaf, spec.cp);
}

GbmModel fit_gbm(const Matrix& x, const Vector& y, const GbmSpec& spec) {
  check_tree_args(x, y, spec.max_depth, spec.min_leaf);
  if (spec.n_trees < 1) throw Error(ErrorKind::InvalidArgument, "gbm: n_trees must be >= 1");
  if (!(spec.shrinkage > 0.0 && spec.shrinkage <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "gbm: shrinkage must lie in (0,1]");
  }
  const double n = static_cast<double>(y.size());
  const double init = y.mean();
  Vector fitted = Vector::Constant(y.size(), init);
  std::vector<double> mse;
  mse.reserve(static_cast<std::size_t>(spec.n_trees) + 1);
  mse.push_back((y - fitted).squaredNorm() / n);

  TreeGrower grower(x);
  std::vector<RegressionTree> trees;
  trees.reserve(static_cast<std::size_t>(spec.n_trees));
  for (int t = 0; t < spec.n_trees; ++t) {
    const Vector residual = y - fitted;
    trees.push_back(grower.grow(residual, spec.max_depth, spec.min_leaf));
    fitted += spec.shrinkage * trees.back().predict(x);
    mse.push_back((y - fitted).squaredNorm() / n);
  }
  return GbmModel(init, spec.shrinkage, std::move(trees), std::move(mse));
}

}  // namespace ssls
