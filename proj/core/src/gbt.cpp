#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "prinstrat/error.hpp"
#include "prinstrat/learners.hpp"

namespace prinstrat {

namespace {

struct Node {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<Node> nodes;

  double eval(const Eigen::MatrixXd& x, Eigen::Index row) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const Node& nd = nodes[static_cast<std::size_t>(k)];
      k = x(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
  }
};

class GbtModel final : public Model {
 public:
  GbtModel(double base, std::vector<Tree> trees, bool probability, double clip, std::string desc)
      : base_(base), trees_(std::move(trees)), probability_(probability), clip_(clip), desc_(std::move(desc)) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    Eigen::VectorXd f = Eigen::VectorXd::Constant(x.rows(), base_);
    for (const auto& t : trees_) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) f[i] += t.eval(x, i);
    }
    if (!probability_) return f;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-f[i]));
      f[i] = std::clamp(p, clip_, 1.0 - clip_);
    }
    return f;
  }
  std::string describe() const override { return desc_; }

 private:
  double base_;
  std::vector<Tree> trees_;
  bool probability_;
  double clip_;
  std::string desc_;
};

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
  int count = 0;
};

// Grows one tree level by level using presorted feature orders; `node_of` maps sampled rows to
// their current open node (or -1) and is updated in place.
Tree grow_tree(const Eigen::MatrixXd& x, const std::vector<std::vector<int>>& order, const Eigen::VectorXd& g,
               const Eigen::VectorXd& h, std::vector<int>& node_of, const GbtParams& p, double shrinkage) {
  Tree tree;
  tree.nodes.emplace_back();
  std::vector<int> open{0};
  std::vector<NodeStats> stats(1);
  for (std::size_t i = 0; i < node_of.size(); ++i) {
    if (node_of[i] == 0) {
      stats[0].g += g[static_cast<Eigen::Index>(i)];
      stats[0].h += h[static_cast<Eigen::Index>(i)];
      ++stats[0].count;
    }
  }
  auto score = [&](double gg, double hh) { return gg * gg / (hh + p.l2); };

  for (int level = 0; level < p.depth && !open.empty(); ++level) {
    const std::size_t n_open = open.size();
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < n_open; ++s) slot[static_cast<std::size_t>(open[s])] = static_cast<int>(s);
    std::vector<SplitCandidate> best(n_open);

    for (std::size_t f = 0; f < order.size(); ++f) {
      std::vector<NodeStats> left(n_open);
      std::vector<double> last(n_open, 0.0);
      for (int i : order[f]) {
        const int nd = node_of[static_cast<std::size_t>(i)];
        if (nd < 0) continue;
        const int s = slot[static_cast<std::size_t>(nd)];
        if (s < 0) continue;
        const double xv = x(i, static_cast<Eigen::Index>(f));
        NodeStats& l = left[static_cast<std::size_t>(s)];
        const NodeStats& tot = stats[static_cast<std::size_t>(s)];
        if (l.count >= p.min_leaf && tot.count - l.count >= p.min_leaf && xv > last[static_cast<std::size_t>(s)]) {
          const double gain = score(l.g, l.h) + score(tot.g - l.g, tot.h - l.h) - score(tot.g, tot.h);
          if (gain > best[static_cast<std::size_t>(s)].gain + 1e-12) {
            best[static_cast<std::size_t>(s)] = {gain, static_cast<int>(f), 0.5 * (last[static_cast<std::size_t>(s)] + xv)};
          }
        }
        l.g += g[i];
        l.h += h[i];
        ++l.count;
        last[static_cast<std::size_t>(s)] = xv;
      }
    }

    std::vector<int> next_open;
    std::vector<NodeStats> next_stats;
    for (std::size_t s = 0; s < n_open; ++s) {
      if (best[s].feature < 0) continue;
      const int id = open[s];
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      tree.nodes[static_cast<std::size_t>(id)].feature = best[s].feature;
      tree.nodes[static_cast<std::size_t>(id)].threshold = best[s].threshold;
      tree.nodes[static_cast<std::size_t>(id)].left = l;
      tree.nodes[static_cast<std::size_t>(id)].right = l + 1;
      next_open.push_back(l);
      next_open.push_back(l + 1);
      next_stats.emplace_back();
      next_stats.emplace_back();
    }
    if (next_open.empty()) break;
    std::vector<int> next_slot(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < next_open.size(); ++s) next_slot[static_cast<std::size_t>(next_open[s])] = static_cast<int>(s);
    for (std::size_t i = 0; i < node_of.size(); ++i) {
      const int nd = node_of[i];
      if (nd < 0) continue;
      const Node& parent = tree.nodes[static_cast<std::size_t>(nd)];
      if (parent.feature < 0) {
        node_of[i] = -1;
        continue;
      }
      const int child = x(static_cast<Eigen::Index>(i), parent.feature) <= parent.threshold ? parent.left : parent.right;
      node_of[i] = child;
      NodeStats& st = next_stats[static_cast<std::size_t>(next_slot[static_cast<std::size_t>(child)])];
      st.g += g[static_cast<Eigen::Index>(i)];
      st.h += h[static_cast<Eigen::Index>(i)];
      ++st.count;
    }
    // Finalize leaves of this level that did not split.
    for (std::size_t s = 0; s < n_open; ++s) {
      if (best[s].feature >= 0) continue;
      const NodeStats& st = stats[s];
      tree.nodes[static_cast<std::size_t>(open[s])].value = -shrinkage * st.g / (st.h + p.l2);
    }
    open = std::move(next_open);
    stats = std::move(next_stats);
  }
  for (std::size_t s = 0; s < open.size(); ++s) {
    const NodeStats& st = stats[s];
    tree.nodes[static_cast<std::size_t>(open[s])].value = st.count > 0 ? -shrinkage * st.g / (st.h + p.l2) : 0.0;
  }
  return tree;
}

}  // namespace

ModelPtr fit_gbt(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, Target target, const GbtParams& params) {
  params.validate();
  if (design.rows() != response.size()) throw Error(ErrorCode::SchemaError, "design and response lengths differ");
  if (design.rows() == 0) throw Error(ErrorCode::EmptyCell, "no rows to fit");
  if (!design.allFinite() || !response.allFinite()) {
    throw Error(ErrorCode::DomainError, "non-finite values in design or response");
  }
  const auto n = static_cast<std::size_t>(design.rows());
  const bool prob = target == Target::Probability;
  const double ybar = response.mean();
  double base = ybar;
  if (prob) {
    const double q = std::clamp(ybar, 1e-6, 1.0 - 1e-6);
    base = std::log(q / (1.0 - q));
  }

  std::vector<std::vector<int>> order(static_cast<std::size_t>(design.cols()));
  for (Eigen::Index f = 0; f < design.cols(); ++f) {
    auto& o = order[static_cast<std::size_t>(f)];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return design(a, f) < design(b, f); });
  }

  std::mt19937_64 rng(params.seed);
  const auto n_sample = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(params.subsample * static_cast<double>(n))));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  Eigen::VectorXd f = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), base);
  Eigen::VectorXd g(static_cast<Eigen::Index>(n));
  Eigen::VectorXd h(static_cast<Eigen::Index>(n));
  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(params.trees));
  std::vector<int> node_of(n);
  for (int t = 0; t < params.trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (prob) {
        const double pr = 1.0 / (1.0 + std::exp(-f[ii]));
        g[ii] = pr - response[ii];
        h[ii] = std::max(pr * (1.0 - pr), 1e-12);
      } else {
        g[ii] = f[ii] - response[ii];
        h[ii] = 1.0;
      }
    }
    std::fill(node_of.begin(), node_of.end(), -1);
    if (n_sample < n) {
      for (std::size_t i = 0; i < n_sample; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(perm[i], perm[pick(rng)]);
        node_of[perm[i]] = 0;
      }
    } else {
      std::fill(node_of.begin(), node_of.end(), 0);
    }
    Tree tree = grow_tree(design, order, g, h, node_of, params, params.shrinkage);
    for (std::size_t i = 0; i < n; ++i) f[static_cast<Eigen::Index>(i)] += tree.eval(design, static_cast<Eigen::Index>(i));
    trees.push_back(std::move(tree));
  }

  std::ostringstream desc;
  desc << "gbt(trees=" << params.trees << ", depth=" << params.depth << ", shrinkage=" << params.shrinkage
       << ", min_leaf=" << params.min_leaf << ", subsample=" << params.subsample << ")";
  return std::make_shared<GbtModel>(base, std::move(trees), prob, params.clip, desc.str());
}

}  // namespace prinstrat
