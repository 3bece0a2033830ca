#include "o2o/uplift/gbdt.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "o2o/common/error.hpp"
#include "o2o/common/stats.hpp"

namespace o2o::uplift {

namespace {

constexpr const char* kFormatTag = "o2o-gbdt";
constexpr int kFormatVersion = 1;
constexpr double kMinGain = 1e-12;

std::vector<double> bin_thresholds(std::vector<double> values, int max_bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> unique = values;
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  std::vector<double> cuts;
  if (static_cast<int>(unique.size()) <= max_bins) {
    for (std::size_t i = 0; i + 1 < unique.size(); ++i) cuts.push_back(unique[i] + (unique[i + 1] - unique[i]) / 2.0);
    return cuts;
  }
  const std::size_t n = values.size();
  for (int q = 1; q < max_bins; ++q) {
    const std::size_t idx = static_cast<std::size_t>(q) * n / static_cast<std::size_t>(max_bins);
    if (idx == 0 || idx >= n || values[idx - 1] == values[idx]) continue;
    const double cut = values[idx - 1] + (values[idx] - values[idx - 1]) / 2.0;
    if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
  }
  return cuts;
}

struct Histogram {
  std::vector<double> g, h;  // concatenated per-feature bins
};

class TreeBuilder {
 public:
  TreeBuilder(const GbdtParams& params, const std::vector<std::vector<double>>& thresholds,
              const std::vector<std::uint16_t>& bins, std::size_t n_rows, const std::vector<double>& grad,
              const std::vector<double>& hess)
      : params_(params), thresholds_(thresholds), bins_(bins), n_(n_rows), grad_(grad), hess_(hess) {
    offsets_.push_back(0);
    for (const auto& t : thresholds_) offsets_.push_back(offsets_.back() + t.size() + 1);
  }

  Tree build(std::vector<std::uint32_t> rows) {
    Tree tree;
    auto hist = histogram(rows);
    grow(tree, rows, hist, 0);
    return tree;
  }

 private:
  Histogram histogram(const std::vector<std::uint32_t>& rows) const {
    Histogram hist{std::vector<double>(offsets_.back(), 0.0), std::vector<double>(offsets_.back(), 0.0)};
    for (std::size_t f = 0; f < thresholds_.size(); ++f) {
      const std::uint16_t* col = bins_.data() + f * n_;
      double* g = hist.g.data() + offsets_[f];
      double* h = hist.h.data() + offsets_[f];
      for (auto r : rows) {
        g[col[r]] += grad_[r];
        h[col[r]] += hess_[r];
      }
    }
    return hist;
  }

  int grow(Tree& tree, std::vector<std::uint32_t>& rows, const Histogram& hist, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double g_total = 0.0, h_total = 0.0;
    for (std::size_t b = 0; b < offsets_[1]; ++b) {
      g_total += hist.g[b];
      h_total += hist.h[b];
    }
    const double lambda = params_.lambda;
    const double parent_score = g_total * g_total / (h_total + lambda);

    int best_feature = -1;
    std::size_t best_bin = 0;
    double best_gain = kMinGain;
    if (depth < params_.max_depth && rows.size() >= 2) {
      for (std::size_t f = 0; f < thresholds_.size(); ++f) {
        const std::size_t nb = thresholds_[f].size() + 1;
        double gl = 0.0, hl = 0.0;
        for (std::size_t b = 0; b + 1 < nb; ++b) {
          gl += hist.g[offsets_[f] + b];
          hl += hist.h[offsets_[f] + b];
          const double gr = g_total - gl, hr = h_total - hl;
          if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
          const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            best_bin = b;
          }
        }
      }
    }
    if (best_feature < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = -params_.learning_rate * g_total / (h_total + lambda);
      return id;
    }

    const std::uint16_t* col = bins_.data() + static_cast<std::size_t>(best_feature) * n_;
    std::vector<std::uint32_t> left, right;
    for (auto r : rows) (col[r] <= best_bin ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    Histogram small = histogram(left.size() <= right.size() ? left : right);
    Histogram large{hist.g, hist.h};
    for (std::size_t b = 0; b < large.g.size(); ++b) {
      large.g[b] -= small.g[b];
      large.h[b] -= small.h[b];
    }
    const bool left_small = left.size() <= right.size();
    const int l = grow(tree, left, left_small ? small : large, depth + 1);
    const int r = grow(tree, right, left_small ? large : small, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = thresholds_[static_cast<std::size_t>(best_feature)][best_bin];
    node.left = l;
    node.right = r;
    return id;
  }

  const GbdtParams& params_;
  const std::vector<std::vector<double>>& thresholds_;
  const std::vector<std::uint16_t>& bins_;
  std::size_t n_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  std::vector<std::size_t> offsets_;
};

}  // namespace

double Tree::predict(const double* row, Eigen::Index stride) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(row[n.feature * stride] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

void GbdtClassifier::fit(const Eigen::MatrixXd& x, std::span<const int> y) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0 || y.size() != n) throw PreconditionError("training data is empty or misaligned");
  if (x.cols() == 0) throw PreconditionError("training data has no features");
  if (!x.allFinite()) throw PreconditionError("training features contain non-finite values");
  if (params_.max_depth < 1 || params_.n_estimators < 1 || !(params_.learning_rate > 0.0) ||
      params_.max_bins < 2 || params_.max_bins > 65535 || !(params_.subsample > 0.0 && params_.subsample <= 1.0)) {
    throw PreconditionError("invalid boosting hyperparameters");
  }
  double positives = 0.0;
  for (int v : y) {
    if (v != 0 && v != 1) throw PreconditionError("training labels must be 0/1");
    positives += v;
  }
  n_features_ = x.cols();
  const double prior = std::clamp(positives / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  base_margin_ = std::log(prior / (1.0 - prior));
  trees_.clear();

  const auto p = static_cast<std::size_t>(x.cols());
  std::vector<std::vector<double>> thresholds(p);
  std::vector<std::uint16_t> bins(n * p);
  for (std::size_t f = 0; f < p; ++f) {
    const double* col = x.data() + f * n;
    thresholds[f] = bin_thresholds(std::vector<double>(col, col + n), params_.max_bins);
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = std::lower_bound(thresholds[f].begin(), thresholds[f].end(), col[i]);
      bins[f * n + i] = static_cast<std::uint16_t>(it - thresholds[f].begin());
    }
  }

  std::vector<double> margin(n, base_margin_), grad(n), hess(n);
  std::mt19937_64 rng(params_.seed);
  std::bernoulli_distribution keep(params_.subsample);
  for (int t = 0; t < params_.n_estimators; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double prob = stats::logistic(margin[i]);
      grad[i] = prob - y[i];
      hess[i] = std::max(prob * (1.0 - prob), 1e-16);
    }
    std::vector<std::uint32_t> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (params_.subsample >= 1.0 || keep(rng)) rows.push_back(static_cast<std::uint32_t>(i));
    }
    if (rows.empty()) continue;
    TreeBuilder builder(params_, thresholds, bins, n, grad, hess);
    trees_.push_back(builder.build(std::move(rows)));
    for (std::size_t i = 0; i < n; ++i) margin[i] += trees_.back().predict(x.data() + i, x.rows());
  }
}

double GbdtClassifier::predict_margin(const Eigen::MatrixXd& x, Eigen::Index row) const {
  double m = base_margin_;
  for (const auto& t : trees_) m += t.predict(x.data() + row, x.rows());
  return m;
}

Eigen::VectorXd GbdtClassifier::predict_proba(const Eigen::MatrixXd& x) const {
  if (x.cols() != n_features_) {
    throw PreconditionError(fmt::format("model expects {} features, got {}", n_features_, x.cols()));
  }
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = stats::logistic(predict_margin(x, i));
  return out;
}

void GbdtClassifier::save(std::ostream& out) const {
  out << kFormatTag << ' ' << kFormatVersion << '\n';
  out << fmt::format("params {} {} {:.17g} {:.17g} {:.17g} {} {:.17g} {}\n", params_.max_depth, params_.n_estimators,
                     params_.learning_rate, params_.lambda, params_.min_child_weight, params_.max_bins,
                     params_.subsample, params_.seed);
  out << "n_features " << n_features_ << '\n';
  out << fmt::format("base_margin {:.17g}\n", base_margin_);
  out << "trees " << trees_.size() << '\n';
  for (const auto& t : trees_) {
    out << "tree " << t.nodes.size() << '\n';
    for (const auto& n : t.nodes) {
      out << fmt::format("{} {:.17g} {} {} {:.17g}\n", n.feature, n.threshold, n.left, n.right, n.value);
    }
  }
}

GbdtClassifier GbdtClassifier::load(std::istream& in) {
  auto expect = [&](const char* word) {
    std::string token;
    if (!(in >> token) || token != word) {
      throw InputError(fmt::format("malformed model file: expected '{}'", word));
    }
  };
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != kFormatTag) throw InputError("not a boosted-tree model file");
  if (version != kFormatVersion) {
    throw InputError(fmt::format("unsupported model format version {} (expected {})", version, kFormatVersion));
  }
  GbdtClassifier m;
  expect("params");
  auto& p = m.params_;
  in >> p.max_depth >> p.n_estimators >> p.learning_rate >> p.lambda >> p.min_child_weight >> p.max_bins >>
      p.subsample >> p.seed;
  expect("n_features");
  in >> m.n_features_;
  expect("base_margin");
  in >> m.base_margin_;
  expect("trees");
  std::size_t count = 0;
  in >> count;
  for (std::size_t t = 0; t < count && in; ++t) {
    expect("tree");
    std::size_t nodes = 0;
    in >> nodes;
    Tree tree;
    tree.nodes.resize(nodes);
    for (auto& n : tree.nodes) in >> n.feature >> n.threshold >> n.left >> n.right >> n.value;
    for (const auto& n : tree.nodes) {
      if (n.feature >= m.n_features_ ||
          (n.feature >= 0 && (n.left < 0 || n.right < 0 || static_cast<std::size_t>(n.left) >= nodes ||
                              static_cast<std::size_t>(n.right) >= nodes))) {
        throw InputError("malformed model file: invalid tree node");
      }
    }
    if (tree.nodes.empty()) throw InputError("malformed model file: empty tree");
    m.trees_.push_back(std::move(tree));
  }
  if (!in) throw InputError("malformed model file: truncated");
  return m;
}

}  // namespace o2o::uplift
