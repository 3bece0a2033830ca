#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace o2o::uplift {

struct GbdtParams {
  int max_depth = 10;
  int n_estimators = 100;
  double learning_rate = 0.1;
  double lambda = 1.0;            // L2 penalty on leaf values
  double min_child_weight = 1.0;  // minimum hessian sum per child
  int max_bins = 256;
  double subsample = 1.0;  // row fraction per tree, drawn from `seed`
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf margin contribution
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const double* row, Eigen::Index stride) const;
};

// Gradient-boosted regression trees on the logistic loss with second-order
// leaf values and histogram split finding (quantile bins per feature).
// Split ties go to the lowest feature index, then the lowest threshold.
class GbdtClassifier {
 public:
  GbdtClassifier() = default;
  explicit GbdtClassifier(GbdtParams params) : params_(params) {}

  void fit(const Eigen::MatrixXd& x, std::span<const int> y);
  double predict_margin(const Eigen::MatrixXd& x, Eigen::Index row) const;
  // P(y = 1 | x) per row; exactly in [0, 1].
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const;

  const GbdtParams& params() const { return params_; }
  Eigen::Index n_features() const { return n_features_; }
  double base_margin() const { return base_margin_; }
  const std::vector<Tree>& trees() const { return trees_; }

  void save(std::ostream& out) const;
  static GbdtClassifier load(std::istream& in);

 private:
  GbdtParams params_;
  Eigen::Index n_features_ = 0;
  double base_margin_ = 0.0;
  std::vector<Tree> trees_;
};

}  // namespace o2o::uplift
