#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "o2o/uplift/gbdt.hpp"

namespace o2o::uplift {

inline constexpr double kMinTreatmentShare = 0.4;
inline constexpr double kMaxTreatmentShare = 0.6;

// 1 iff (T = 1 and R = 1) or (T = 0 and R = 0). Throws on non-binary input.
int z_transform(int treated, int revisit);

struct UpliftDataset {
  std::vector<std::string> ids;
  std::vector<std::string> feature_names;
  Eigen::MatrixXd x;  // rows x features
  std::vector<int> t;
  std::vector<int> revisit;
  std::vector<int> z;

  std::size_t size() const { return t.size(); }
  // Fills z from t and revisit.
  void compute_z();
  // Sizes agree, labels binary, z consistent, features finite.
  void validate() const;
  UpliftDataset subset(std::span<const std::size_t> rows) const;
  double treatment_share() const;
};

struct Split {
  std::vector<std::size_t> selection;
  std::vector<std::size_t> train;
  std::vector<std::size_t> evaluation;
};

// Seeded shuffle into selection / train / evaluation parts (default 40/30/30).
Split three_way_split(std::size_t n, std::uint64_t seed, double selection_share = 0.4, double train_share = 0.3);

struct UpliftModel {
  GbdtClassifier learner;
  std::vector<std::size_t> features;  // dataset columns used by the learner
  std::vector<std::string> feature_names;
  std::size_t input_width = 0;  // dataset column count expected at prediction
  std::size_t n_train = 0;
  double treatment_share = 0.0;

  void save(std::ostream& out) const;
  static UpliftModel load(std::istream& in);
};

// Boosted trees predicting P(Z = 1 | X) on the given columns (all when
// empty). Requires both Z classes and a treatment share in [0.4, 0.6].
UpliftModel fit_base_learner(const UpliftDataset& data, const GbdtParams& params,
                             std::span<const std::size_t> features = {});

Eigen::VectorXd predict_proba(const UpliftModel& model, const Eigen::MatrixXd& x);
// tau = 2 P(Z = 1 | X) - 1, in [-1, 1].
Eigen::VectorXd predict_tau(const UpliftModel& model, const Eigen::MatrixXd& x);
inline double tau_from_probability(double p) { return 2.0 * p - 1.0; }

inline constexpr int kDefaultGridPoints = 101;
inline constexpr int kRandomShuffles = 10;

struct UpliftCurve {
  std::vector<double> k;
  std::vector<double> f1;
  std::vector<double> f0;
  std::vector<bool> interpolated;  // k points whose f1 had an empty arm
  double auuc = 0.0;
};

// f(k) = (m/n) * revisit rate of treated units among the top m = round(k n)
// ranked units + (1 - m/n) * revisit rate of control units among the rest.
// f1 ranks by tau (descending; ties by row index), f0 averages 10 seeded
// random orderings. AUUC is the trapezoidal integral of f1 - f0.
UpliftCurve uplift_curve(std::span<const double> tau, std::span<const int> t, std::span<const int> revisit,
                         std::uint64_t seed, int grid_points = kDefaultGridPoints);

struct SelectionTrial {
  int trial = 0;
  std::vector<std::size_t> features;
  double auuc = 0.0;
  bool cached = false;
};

struct SelectionResult {
  std::vector<std::size_t> features;
  double auuc = 0.0;
  std::vector<SelectionTrial> trace;
};

// Random inclusion-mask search scored by validation AUUC. The rows are split
// 50/50 into fit and validation halves; every trial's mask is drawn from
// (seed, trial). Repeated masks reuse the cached score. Ties keep the
// earliest trial.
SelectionResult select_features(const UpliftDataset& data, std::span<const std::size_t> rows, int budget,
                                std::uint64_t seed, const GbdtParams& params);

struct FeatureImportance {
  std::size_t column = 0;
  std::string name;
  bool selected = false;
  double importance = 0.0;  // mean AUUC drop when the column is permuted
  double std_err = 0.0;
  double sign = 0.0;  // correlation of the feature with tau
};

std::vector<FeatureImportance> permutation_importance(const UpliftModel& model, const UpliftDataset& eval,
                                                      int repeats = 10, std::uint64_t seed = 0);

void write_curve(std::ostream& out, const UpliftCurve& curve);
void write_importance(std::ostream& out, std::span<const FeatureImportance> importance);
std::string curve_svg(const UpliftCurve& curve);
std::string importance_svg(std::span<const FeatureImportance> importance, std::size_t top = 20);

}  // namespace o2o::uplift
