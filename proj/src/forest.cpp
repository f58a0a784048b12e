#include "sbe/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sbe/parallel.hpp"
#include "sbe/random.hpp"

namespace sbe {

void ForestSpec::validate() const {
  if (n_trees < 1) throw std::invalid_argument("forest needs at least one tree");
  if (max_depth < 1) throw std::invalid_argument("max_depth must be at least 1");
  if (min_leaf < 1) throw std::invalid_argument("min_leaf must be at least 1");
  if (max_bins < 2 || max_bins > 256) throw std::invalid_argument("max_bins must be in [2, 256]");
}

namespace {

struct BinnedMatrix {
  std::size_t rows = 0;
  std::vector<std::vector<std::uint8_t>> bins;   // per feature, per row
  std::vector<std::vector<double>> thresholds;   // per feature; bin = #thresholds < x
};

BinnedMatrix bin_features(const Eigen::MatrixXd& x, std::size_t max_bins) {
  BinnedMatrix out;
  out.rows = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  out.bins.resize(d);
  out.thresholds.resize(d);
  parallel_for(d, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto col = x.col(static_cast<Eigen::Index>(j));
      std::vector<double> sorted(col.data(), col.data() + col.size());
      std::sort(sorted.begin(), sorted.end());
      auto& thr = out.thresholds[j];
      std::vector<double> uniq = sorted;
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      if (uniq.size() <= max_bins) {
        for (std::size_t i = 0; i + 1 < uniq.size(); ++i) thr.push_back(uniq[i] + (uniq[i + 1] - uniq[i]) / 2.0);
      } else {
        const std::size_t n = sorted.size();
        for (std::size_t b = 1; b < max_bins; ++b) {
          const double v = sorted[b * n / max_bins];
          auto next = std::upper_bound(uniq.begin(), uniq.end(), v);
          if (next == uniq.end()) continue;
          const double t = v + (*next - v) / 2.0;
          if (thr.empty() || t > thr.back()) thr.push_back(t);
        }
      }
      auto& bins = out.bins[j];
      bins.resize(out.rows);
      for (std::size_t i = 0; i < out.rows; ++i) {
        bins[i] = static_cast<std::uint8_t>(std::lower_bound(thr.begin(), thr.end(), col[static_cast<Eigen::Index>(i)]) -
                                            thr.begin());
      }
    }
  });
  return out;
}

struct NodeStats {
  double n = 0.0;
  std::vector<double> counts;  // classification
  double sum = 0.0;            // regression
  double sum_sq = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const ForestSpec& spec, const BinnedMatrix& x, std::span<const double> y, Task task,
              std::size_t n_classes, std::size_t mtry, StreamKey key)
      : spec_(spec),
        x_(x),
        y_(y),
        classify_(task != Task::regression),
        width_(task != Task::regression ? n_classes : 2),
        mtry_(mtry),
        rng_(key),
        hist_(256 * width_, 0.0),
        importance_(x.bins.size(), 0.0),
        order_(x.bins.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  RandomForest::Tree build(std::vector<std::size_t>& idx) {
    n_root_ = static_cast<double>(idx.size());
    tree_.nodes.emplace_back();
    struct Pending {
      std::int32_t node;
      std::size_t begin, end, depth;
    };
    std::vector<Pending> stack{{0, 0, idx.size(), 0}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      const NodeStats stats = node_stats(idx, p.begin, p.end);
      const double impurity = impurity_of(stats);
      const std::size_t size = p.end - p.begin;

      Split split;
      if (p.depth < spec_.max_depth && size >= 2 * spec_.min_leaf && impurity > 1e-14) {
        split = find_split(idx, p.begin, p.end, stats);
      }
      if (split.feature < 0) {
        make_leaf(p.node, stats);
        continue;
      }
      const auto& fb = x_.bins[static_cast<std::size_t>(split.feature)];
      const auto mid_it = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(p.begin),
                                         idx.begin() + static_cast<std::ptrdiff_t>(p.end),
                                         [&](std::size_t i) { return fb[i] <= split.bin; });
      const auto mid = static_cast<std::size_t>(mid_it - idx.begin());
      const NodeStats left = node_stats(idx, p.begin, mid);
      const NodeStats right = node_stats(idx, mid, p.end);
      importance_[static_cast<std::size_t>(split.feature)] +=
          (stats.n * impurity - left.n * impurity_of(left) - right.n * impurity_of(right)) / n_root_;

      const auto l = static_cast<std::int32_t>(tree_.nodes.size());
      tree_.nodes.emplace_back();
      tree_.nodes.emplace_back();
      auto& node = tree_.nodes[static_cast<std::size_t>(p.node)];
      node.feature = split.feature;
      node.threshold = x_.thresholds[static_cast<std::size_t>(split.feature)][split.bin];
      node.left = l;
      node.right = l + 1;
      stack.push_back({l + 1, mid, p.end, p.depth + 1});
      stack.push_back({l, p.begin, mid, p.depth + 1});
    }
    return std::move(tree_);
  }

  const std::vector<double>& importance() const { return importance_; }

 private:
  struct Split {
    std::int32_t feature = -1;
    std::uint8_t bin = 0;
    double score = -1.0;
  };

  NodeStats node_stats(const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) const {
    NodeStats s;
    s.n = static_cast<double>(end - begin);
    if (classify_) {
      s.counts.assign(width_, 0.0);
      for (std::size_t i = begin; i < end; ++i) s.counts[static_cast<std::size_t>(y_[idx[i]])] += 1.0;
    } else {
      for (std::size_t i = begin; i < end; ++i) {
        const double v = y_[idx[i]];
        s.sum += v;
        s.sum_sq += v * v;
      }
    }
    return s;
  }

  double impurity_of(const NodeStats& s) const {
    if (s.n <= 0.0) return 0.0;
    if (classify_) {
      double sq = 0.0;
      for (double c : s.counts) sq += c * c;
      return 1.0 - sq / (s.n * s.n);
    }
    const double mean = s.sum / s.n;
    return std::max(0.0, s.sum_sq / s.n - mean * mean);
  }

  void make_leaf(std::int32_t node, const NodeStats& s) {
    auto& leaf = tree_.nodes[static_cast<std::size_t>(node)];
    leaf.feature = -1;
    leaf.value = static_cast<std::uint32_t>(tree_.values.size());
    if (classify_) {
      for (double c : s.counts) tree_.values.push_back(c / s.n);
    } else {
      tree_.values.push_back(s.sum / s.n);
    }
  }

  Split find_split(const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                   const NodeStats& total) {
    Split best;
    const std::size_t d = order_.size();
    std::size_t visited = 0;
    for (std::size_t i = 0; i < d && visited < mtry_; ++i) {
      std::swap(order_[i], order_[i + rng_.below(d - i)]);
      const std::size_t f = order_[i];
      if (evaluate_feature(f, idx, begin, end, total, best)) ++visited;
    }
    return best;
  }

  // Returns false when the feature is constant within the node.
  bool evaluate_feature(std::size_t f, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                        const NodeStats& total, Split& best) {
    const auto& bins = x_.bins[f];
    std::size_t lo = 255;
    std::size_t hi = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t r = idx[i];
      const std::size_t b = bins[r];
      lo = std::min(lo, b);
      hi = std::max(hi, b);
      if (classify_) {
        hist_[b * width_ + static_cast<std::size_t>(y_[r])] += 1.0;
      } else {
        hist_[b * 2] += y_[r];
        hist_[b * 2 + 1] += 1.0;
      }
    }
    if (lo == hi) {
      std::fill(hist_.begin() + static_cast<std::ptrdiff_t>(lo * width_),
                hist_.begin() + static_cast<std::ptrdiff_t>((hi + 1) * width_), 0.0);
      return false;
    }

    const double n = total.n;
    const auto min_leaf = static_cast<double>(spec_.min_leaf);
    std::vector<double>& left = left_;
    left.assign(width_, 0.0);
    double nl = 0.0;
    for (std::size_t b = lo; b < hi; ++b) {
      const double* h = &hist_[b * width_];
      if (classify_) {
        for (std::size_t c = 0; c < width_; ++c) {
          left[c] += h[c];
          nl += h[c];
        }
      } else {
        left[0] += h[0];
        nl += h[1];
      }
      const double nr = n - nl;
      if (nl < min_leaf) continue;
      if (nr < min_leaf) break;
      double score = 0.0;
      if (classify_) {
        double sl = 0.0;
        double sr = 0.0;
        for (std::size_t c = 0; c < width_; ++c) {
          const double r = total.counts[c] - left[c];
          sl += left[c] * left[c];
          sr += r * r;
        }
        score = sl / nl + sr / nr;
      } else {
        const double r = total.sum - left[0];
        score = left[0] * left[0] / nl + r * r / nr;
      }
      if (score > best.score) {
        best.score = score;
        best.feature = static_cast<std::int32_t>(f);
        best.bin = static_cast<std::uint8_t>(b);
      }
    }
    std::fill(hist_.begin() + static_cast<std::ptrdiff_t>(lo * width_),
              hist_.begin() + static_cast<std::ptrdiff_t>((hi + 1) * width_), 0.0);
    return true;
  }

  const ForestSpec& spec_;
  const BinnedMatrix& x_;
  std::span<const double> y_;
  bool classify_;
  std::size_t width_;
  std::size_t mtry_;
  Stream rng_;
  std::vector<double> hist_;
  std::vector<double> left_;
  std::vector<double> importance_;
  std::vector<std::size_t> order_;
  RandomForest::Tree tree_;
  double n_root_ = 0.0;
};

}  // namespace

RandomForest RandomForest::train(const ForestSpec& spec, const Eigen::MatrixXd& x, std::span<const double> y,
                                 Task task, std::size_t n_classes) {
  spec.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (n == 0 || d == 0) throw std::invalid_argument("forest needs a non-empty feature matrix");
  if (y.size() != n) throw std::invalid_argument("target length does not match feature rows");
  const bool classify = task != Task::regression;
  if (classify) {
    if (n_classes < 2) throw std::invalid_argument("classification forest needs at least 2 classes");
    for (double v : y) {
      if (!(v >= 0.0) || v >= static_cast<double>(n_classes) || v != std::floor(v)) {
        throw std::invalid_argument("class targets must be integer positions below n_classes");
      }
    }
  }

  std::size_t mtry = spec.features_per_split;
  if (mtry == 0) mtry = classify ? std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(double(d)))) : d;
  mtry = std::min(mtry, d);

  const BinnedMatrix binned = bin_features(x, spec.max_bins);

  RandomForest forest;
  forest.task_ = task;
  forest.n_features_ = d;
  forest.n_outputs_ = classify ? n_classes : 1;
  forest.trees_.resize(spec.n_trees);
  std::vector<std::vector<double>> per_tree(spec.n_trees);

  parallel_for(spec.n_trees, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      Stream sampler(derive_stream(spec.seed, t, 0, 0));
      std::vector<std::size_t> idx(n);
      if (spec.bootstrap) {
        for (auto& i : idx) i = sampler.below(n);
      } else {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
      }
      TreeBuilder builder(spec, binned, y, task, classify ? n_classes : 0, mtry, derive_stream(spec.seed, t, 1, 0));
      forest.trees_[t] = builder.build(idx);
      per_tree[t] = builder.importance();
    }
  });

  std::vector<double> imp(d, 0.0);
  std::size_t contributing = 0;
  for (const auto& v : per_tree) {
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    if (total <= 0.0) continue;
    ++contributing;
    for (std::size_t j = 0; j < d; ++j) imp[j] += v[j] / total;
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (contributing > 0 && total > 0.0) {
    for (double& v : imp) v /= total;
  }
  forest.importance_ = std::move(imp);
  return forest;
}

Eigen::MatrixXd RandomForest::predict(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.cols()) != n_features_) {
    throw std::invalid_argument("forest expects " + std::to_string(n_features_) + " features, got " +
                                std::to_string(x.cols()));
  }
  const auto n = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(n_outputs_));
  const double scale = 1.0 / static_cast<double>(trees_.size());
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      for (const auto& tree : trees_) {
        std::size_t node = 0;
        while (tree.nodes[node].feature >= 0) {
          const auto& nd = tree.nodes[node];
          node = static_cast<std::size_t>(x(r, nd.feature) <= nd.threshold ? nd.left : nd.right);
        }
        const double* v = &tree.values[tree.nodes[node].value];
        for (std::size_t c = 0; c < n_outputs_; ++c) out(r, static_cast<Eigen::Index>(c)) += v[c];
      }
      out.row(r) *= scale;
    }
  });
  return out;
}

RandomForest RandomForest::from_parts(Task task, std::size_t n_features, std::size_t n_outputs,
                                      std::vector<Tree> trees, std::vector<double> importance) {
  RandomForest f;
  f.task_ = task;
  f.n_features_ = n_features;
  f.n_outputs_ = n_outputs;
  f.trees_ = std::move(trees);
  f.importance_ = std::move(importance);
  if (f.trees_.empty()) throw std::invalid_argument("forest has no trees");
  return f;
}

}  // namespace sbe
