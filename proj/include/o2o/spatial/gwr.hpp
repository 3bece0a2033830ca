#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "o2o/trajectory/grid.hpp"

namespace o2o::spatial {

enum class Kernel { kBisquare, kGaussian };
// Adaptive bandwidths are neighbor counts; fixed bandwidths are meters.
enum class BandwidthType { kAdaptive, kFixed };

std::string to_string(Kernel kernel);
Kernel parse_kernel(std::string_view text);
std::string to_string(BandwidthType type);
BandwidthType parse_bandwidth_type(std::string_view text);

inline constexpr std::size_t kMinLocations = 30;
inline constexpr int kMaxIterations = 50;
inline constexpr double kCoefficientClip = 25.0;
inline constexpr double kRidge = 1e-8;
inline constexpr double kMaxNonConvergedShare = 0.05;

// Locations are aligned offsets (u, v) in degrees; distances between them are
// measured in meters in the aligned frame. X includes the intercept column.
struct GwrDesign {
  std::vector<std::pair<double, double>> locations;
  std::vector<int> y;
  Eigen::MatrixXd x;
  std::vector<std::string> names;

  std::size_t size() const { return y.size(); }
  // Throws PreconditionError for misaligned rows, NaN, <30 locations or a
  // single-class response.
  void validate() const;
};

// Intercept, distance from the target shop (km) and, when requested, the
// food and shopping shares of the cell's visits. Constant share columns and a
// shopping share that is implied by the food share are left out.
GwrDesign design_from_labels(std::span<const trajectory::DominanceLabel> labels, bool with_shares);

struct GwrOptions {
  Kernel kernel = Kernel::kBisquare;
  BandwidthType bandwidth_type = BandwidthType::kAdaptive;
  // One entry = shared bandwidth; one entry per column = per-feature.
  std::vector<double> bandwidths;
  // Search bounds for select_bandwidth; unset means data-driven defaults.
  std::optional<double> search_min;
  std::optional<double> search_max;
  bool multiscale = false;
  int max_backfit_sweeps = 5;
};

struct FeatureSummary {
  std::string name;
  double mean = 0.0;      // mean of local coefficients
  double std_err = 0.0;   // mean of local standard errors
  double p_value = 1.0;
  double sd = 0.0;        // dispersion of local coefficients
  double min = 0.0;
  double max = 0.0;
};

struct GwrFit {
  std::vector<std::string> names;
  Kernel kernel = Kernel::kBisquare;
  BandwidthType bandwidth_type = BandwidthType::kAdaptive;
  std::vector<double> bandwidths;  // per feature
  std::vector<std::pair<double, double>> locations;
  Eigen::MatrixXd beta;     // locations x features
  Eigen::MatrixXd std_err;  // locations x features
  Eigen::MatrixXd p_value;  // locations x features
  Eigen::VectorXd fitted;   // in-sample probability at each location
  // Largest kernel radius (meters) at each location over all features.
  std::vector<double> support_radius_m;
  std::vector<std::size_t> non_converged;
  std::vector<std::size_t> separated;
  std::vector<std::string> warnings;
  double deviance = 0.0;
  double trace_hat = 0.0;
  double aicc = 0.0;
  std::vector<FeatureSummary> summary;
};

// Weight of an observation at distance d for kernel radius b. Bisquare
// weights are 1 at d = 0 and 0 for d >= b; b = infinity gives weight 1.
double kernel_weight(Kernel kernel, double d, double b);

// Local-likelihood logistic GWR. Each location is fitted by Newton/IRLS on
// the kernel-weighted log-likelihood. Locations that separate perfectly have
// their coefficients clipped to |beta| <= 25 and are reported in `separated`.
// More than 5% of locations without convergence after 50 iterations raises
// ConvergenceError. Requires options.bandwidths to be set.
GwrFit fit_gwr_logistic(const GwrDesign& design, const GwrOptions& options);

struct BandwidthSelection {
  std::vector<double> bandwidths;  // per feature
  double aicc = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::pair<double, double>> evaluations;  // (bandwidth, AICc) of the shared search
};

// Golden-section search of the shared bandwidth on AICc, with the interval
// endpoints evaluated explicitly. With options.multiscale each feature's
// bandwidth is then refined by coordinate descent (at most
// max_backfit_sweeps sweeps).
BandwidthSelection select_bandwidth(const GwrDesign& design, const GwrOptions& options);

// Unweighted logistic regression by Newton iterations; the all-ones-weight
// special case of the local fits.
Eigen::VectorXd fit_global_logistic(const Eigen::MatrixXd& x, std::span<const int> y);

struct PredictionCell {
  double u = 0.0;
  double v = 0.0;
  Eigen::VectorXd x;
};

struct Prediction {
  double u = 0.0;
  double v = 0.0;
  double probability = 0.0;
  int label = 0;  // 1 iff probability > 0.5
  std::size_t nearest = 0;
  bool extrapolated = false;
};

// Probability from the coefficients of the nearest fitted location. Cells
// farther than one kernel radius outside the convex hull of the fitted
// locations are flagged as extrapolated.
std::vector<Prediction> predict_dominance(const GwrFit& fit, std::span<const PredictionCell> cells);

// Every cell whose center lies within radius_m of the origin, with regressors
// (1, distance_km). Only valid for fits without share columns.
std::vector<PredictionCell> prediction_grid(double cell_size_deg, double radius_m);

}  // namespace o2o::spatial
