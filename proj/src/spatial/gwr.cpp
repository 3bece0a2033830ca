#include "o2o/spatial/gwr.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include "o2o/common/error.hpp"
#include "o2o/common/geo.hpp"
#include "o2o/common/parallel.hpp"
#include "o2o/common/stats.hpp"

namespace o2o::spatial {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStepTolerance = 1e-10;

using DistanceMatrix = Eigen::MatrixXd;

DistanceMatrix distance_matrix(const std::vector<std::pair<double, double>>& loc) {
  const auto n = static_cast<Eigen::Index>(loc.size());
  DistanceMatrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = geo::haversine_m(loc[i].first, loc[i].second, loc[j].first, loc[j].second);
    }
  }
  return d;
}

// Kernel radius (meters) of every location for one bandwidth value.
std::vector<double> kernel_radii(const DistanceMatrix& d, BandwidthType type, double bandwidth) {
  const auto n = static_cast<std::size_t>(d.rows());
  std::vector<double> radii(n, bandwidth);
  if (type == BandwidthType::kFixed) return radii;
  const double k = std::max(1.0, std::round(bandwidth));
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = d(i, j);
    if (k < static_cast<double>(n)) {
      const auto kth = static_cast<std::size_t>(k) - 1;
      std::nth_element(row.begin(), row.begin() + kth, row.end());
      radii[i] = row[kth];
    } else {
      radii[i] = *std::max_element(row.begin(), row.end()) * k / static_cast<double>(n);
    }
  }
  return radii;
}

double bernoulli_loglik(int y, double p) {
  p = std::clamp(p, 1e-15, 1.0 - 1e-15);
  return y ? std::log(p) : std::log1p(-p);
}

struct LocalResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd std_err;
  double probability = 0.5;
  double hat = 0.0;
  bool converged = false;
  bool separated = false;
};

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& info) {
  const Eigen::Index p = info.rows();
  const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd se(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double v = cov(k, k);
    se(k) = (std::isfinite(v) && v > 0.0) ? std::sqrt(v) : kInf;
  }
  return se;
}

// Newton iterations with step halving on the weighted log-likelihood.
LocalResult fit_weighted_logistic(const Eigen::MatrixXd& x, std::span<const int> y, std::span<const double> w,
                                  const Eigen::VectorXd& start, std::optional<std::size_t> self) {
  const Eigen::Index p = x.cols();
  std::vector<Eigen::Index> active;
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (w[l] > 0.0) active.push_back(static_cast<Eigen::Index>(l));
  }
  auto loglik = [&](const Eigen::VectorXd& b) {
    double ll = 0.0;
    for (auto l : active) ll += w[l] * bernoulli_loglik(y[l], stats::logistic(x.row(l).dot(b)));
    return ll;
  };

  LocalResult r;
  r.beta = start;
  Eigen::MatrixXd h(p, p);
  Eigen::VectorXd g(p);
  double ll = loglik(r.beta);
  for (int it = 0; it < kMaxIterations; ++it) {
    h.setZero();
    g.setZero();
    double worst_residual = 0.0;
    for (auto l : active) {
      const auto xl = x.row(l);
      const double prob = stats::logistic(xl.dot(r.beta));
      const double v = prob * (1.0 - prob);
      h.noalias() += (w[l] * v) * xl.transpose() * xl;
      g.noalias() += (w[l] * (y[l] - prob)) * xl.transpose();
      worst_residual = std::max(worst_residual, std::fabs(y[l] - prob));
    }
    if (worst_residual < 1e-6) {
      r.separated = true;
      break;
    }
    h.diagonal().array() += kRidge;
    const Eigen::VectorXd step = h.ldlt().solve(g);
    if (!step.allFinite()) break;
    double scale = 1.0;
    Eigen::VectorXd next = r.beta + step;
    double next_ll = loglik(next);
    for (int half = 0; half < 30 && next_ll < ll - 1e-12 * (1.0 + std::fabs(ll)); ++half) {
      scale *= 0.5;
      next = r.beta + scale * step;
      next_ll = loglik(next);
    }
    r.beta = next;
    ll = next_ll;
    if (r.beta.cwiseAbs().maxCoeff() > kCoefficientClip) {
      r.separated = true;
      break;
    }
    if ((scale * step).cwiseAbs().maxCoeff() < kStepTolerance * (1.0 + r.beta.cwiseAbs().maxCoeff())) {
      r.converged = true;
      break;
    }
  }
  if (r.separated) {
    r.beta = r.beta.cwiseMax(-kCoefficientClip).cwiseMin(kCoefficientClip);
    r.converged = true;
  }

  h.setZero();
  for (auto l : active) {
    const auto xl = x.row(l);
    const double prob = stats::logistic(xl.dot(r.beta));
    h.noalias() += (w[l] * prob * (1.0 - prob)) * xl.transpose() * xl;
  }
  h.diagonal().array() += kRidge;
  r.std_err = standard_errors(h);
  if (self) {
    const auto xi = x.row(static_cast<Eigen::Index>(*self));
    r.probability = stats::logistic(xi.dot(r.beta));
    const double v = r.probability * (1.0 - r.probability);
    const double wi = w[*self];
    r.hat = wi * v * xi.dot(h.ldlt().solve(xi.transpose()));
  }
  return r;
}

double aicc_of(double deviance, double k, std::size_t n) {
  const double denom = static_cast<double>(n) - k - 1.0;
  if (denom <= 0.0) return kInf;
  return deviance + 2.0 * k + 2.0 * k * (k + 1.0) / denom;
}

void finish_fit(GwrFit& fit, const GwrDesign& design) {
  const auto n = design.size();
  fit.deviance = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fit.deviance -= 2.0 * bernoulli_loglik(design.y[i], fit.fitted(static_cast<Eigen::Index>(i)));
  }
  fit.aicc = aicc_of(fit.deviance, fit.trace_hat, n);
  const auto p = design.x.cols();
  fit.p_value.resize(static_cast<Eigen::Index>(n), p);
  for (Eigen::Index i = 0; i < fit.beta.rows(); ++i) {
    for (Eigen::Index k = 0; k < p; ++k) {
      fit.p_value(i, k) = stats::two_sided_p(fit.beta(i, k) / fit.std_err(i, k));
    }
  }
  fit.summary.clear();
  for (Eigen::Index k = 0; k < p; ++k) {
    std::vector<double> col(fit.beta.col(k).data(), fit.beta.col(k).data() + fit.beta.rows());
    FeatureSummary s;
    s.name = design.names[static_cast<std::size_t>(k)];
    s.mean = stats::mean(col);
    s.std_err = fit.std_err.col(k).mean();
    s.p_value = stats::two_sided_p(s.mean / s.std_err);
    s.sd = stats::stddev(col);
    s.min = *std::min_element(col.begin(), col.end());
    s.max = *std::max_element(col.begin(), col.end());
    fit.summary.push_back(s);
  }
  if (!fit.separated.empty()) {
    fit.warnings.push_back(fmt::format("{} location(s) separate perfectly; coefficients clipped at |beta| <= {}",
                                       fit.separated.size(), kCoefficientClip));
  }
  if (!fit.non_converged.empty()) {
    fit.warnings.push_back(fmt::format("{} location(s) did not converge in {} iterations", fit.non_converged.size(),
                                       kMaxIterations));
  }
}

void check_convergence(const GwrFit& fit, const GwrDesign& design) {
  const double share = static_cast<double>(fit.non_converged.size()) / static_cast<double>(design.size());
  if (share <= kMaxNonConvergedShare) return;
  std::string where;
  for (std::size_t idx : fit.non_converged) {
    if (!where.empty()) where += ", ";
    where += fmt::format("#{} ({:.4f}, {:.4f})", idx, design.locations[idx].first, design.locations[idx].second);
  }
  throw ConvergenceError(fmt::format("GWR did not converge at {} of {} locations: {}", fit.non_converged.size(),
                                     design.size(), where));
}

GwrFit fit_shared(const GwrDesign& design, const GwrOptions& options, const DistanceMatrix& d, double bandwidth) {
  const auto n = design.size();
  const auto p = design.x.cols();
  const auto radii = kernel_radii(d, options.bandwidth_type, bandwidth);

  Eigen::VectorXd start = Eigen::VectorXd::Zero(p);
  {
    const std::vector<double> ones(n, 1.0);
    const auto global = fit_weighted_logistic(design.x, design.y, ones, start, std::nullopt);
    if (global.converged && !global.separated) start = global.beta;
  }

  std::vector<LocalResult> local(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> w(n);
    for (std::size_t l = 0; l < n; ++l) w[l] = kernel_weight(options.kernel, d(i, l), radii[i]);
    local[i] = fit_weighted_logistic(design.x, design.y, w, start, i);
  });

  GwrFit fit;
  fit.names = design.names;
  fit.kernel = options.kernel;
  fit.bandwidth_type = options.bandwidth_type;
  fit.bandwidths.assign(static_cast<std::size_t>(p), bandwidth);
  fit.locations = design.locations;
  fit.beta.resize(static_cast<Eigen::Index>(n), p);
  fit.std_err.resize(static_cast<Eigen::Index>(n), p);
  fit.fitted.resize(static_cast<Eigen::Index>(n));
  fit.support_radius_m = radii;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    fit.beta.row(row) = local[i].beta.transpose();
    fit.std_err.row(row) = local[i].std_err.transpose();
    fit.fitted(row) = local[i].probability;
    fit.trace_hat += local[i].hat;
    if (!local[i].converged) fit.non_converged.push_back(i);
    if (local[i].separated) fit.separated.push_back(i);
  }
  check_convergence(fit, design);
  finish_fit(fit, design);
  return fit;
}

// Backfitting inside the IRLS loop: every feature is smoothed against its
// partial working residual with its own kernel.
GwrFit fit_multiscale(const GwrDesign& design, const GwrOptions& options, const DistanceMatrix& d) {
  const auto n = design.size();
  const auto ni = static_cast<Eigen::Index>(n);
  const auto p = design.x.cols();
  const auto& x = design.x;

  std::vector<Eigen::MatrixXd> weights;
  std::vector<std::vector<double>> radii;
  for (Eigen::Index k = 0; k < p; ++k) {
    radii.push_back(kernel_radii(d, options.bandwidth_type, options.bandwidths[static_cast<std::size_t>(k)]));
    Eigen::MatrixXd w(ni, ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
      for (Eigen::Index l = 0; l < ni; ++l) {
        w(i, l) = kernel_weight(options.kernel, d(i, l), radii.back()[static_cast<std::size_t>(i)]);
      }
    }
    weights.push_back(std::move(w));
  }

  const std::vector<double> ones(n, 1.0);
  const auto global = fit_weighted_logistic(x, design.y, ones, Eigen::VectorXd::Zero(p), std::nullopt);
  Eigen::MatrixXd beta = global.beta.transpose().replicate(ni, 1);
  Eigen::VectorXd eta = (x.array() * beta.array()).rowwise().sum();
  Eigen::VectorXd v(ni), z(ni);
  bool converged = false;
  for (int it = 0; it < kMaxIterations * 2 && !converged; ++it) {
    for (Eigen::Index l = 0; l < ni; ++l) {
      const double prob = stats::logistic(eta(l));
      v(l) = std::max(prob * (1.0 - prob), 1e-10);
      z(l) = eta(l) + (design.y[static_cast<std::size_t>(l)] - prob) / v(l);
    }
    double change = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      const Eigen::VectorXd partial = z - eta + x.col(k).cwiseProduct(beta.col(k));
      const Eigen::VectorXd vx = v.cwiseProduct(x.col(k));
      const Eigen::VectorXd num = weights[static_cast<std::size_t>(k)] * vx.cwiseProduct(partial);
      const Eigen::VectorXd den = weights[static_cast<std::size_t>(k)] * vx.cwiseProduct(x.col(k));
      for (Eigen::Index i = 0; i < ni; ++i) {
        const double b = std::clamp(num(i) / (den(i) + kRidge), -kCoefficientClip, kCoefficientClip);
        change = std::max(change, std::fabs(b - beta(i, k)));
        beta(i, k) = b;
      }
      eta = (x.array() * beta.array()).rowwise().sum();
    }
    converged = change < 1e-7;
  }

  GwrFit fit;
  fit.names = design.names;
  fit.kernel = options.kernel;
  fit.bandwidth_type = options.bandwidth_type;
  fit.bandwidths = options.bandwidths;
  fit.locations = design.locations;
  fit.beta = beta;
  fit.std_err.resize(ni, p);
  fit.fitted.resize(ni);
  fit.support_radius_m.assign(n, 0.0);
  for (Eigen::Index l = 0; l < ni; ++l) {
    const double prob = stats::logistic(eta(l));
    fit.fitted(l) = prob;
    v(l) = prob * (1.0 - prob);
  }
  for (Eigen::Index i = 0; i < ni; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    if ((beta.row(i).cwiseAbs().array() >= kCoefficientClip).any()) fit.separated.push_back(iu);
    for (Eigen::Index k = 0; k < p; ++k) {
      const auto& w = weights[static_cast<std::size_t>(k)];
      Eigen::MatrixXd info = x.transpose() * (w.row(i).transpose().cwiseProduct(v)).asDiagonal() * x;
      info.diagonal().array() += kRidge;
      fit.std_err(i, k) = standard_errors(info)(k);
      const double den = w.row(i).dot(v.cwiseProduct(x.col(k).cwiseAbs2()));
      if (den > 0.0) fit.trace_hat += w(i, i) * v(i) * x(i, k) * x(i, k) / den;
      fit.support_radius_m[iu] = std::max(fit.support_radius_m[iu], radii[static_cast<std::size_t>(k)][iu]);
    }
  }
  if (!converged) {
    for (std::size_t i = 0; i < n; ++i) fit.non_converged.push_back(i);
    check_convergence(fit, design);
  }
  finish_fit(fit, design);
  return fit;
}

GwrFit fit_with(const GwrDesign& design, const GwrOptions& options, const DistanceMatrix& d) {
  const auto p = static_cast<std::size_t>(design.x.cols());
  if (options.bandwidths.empty()) throw PreconditionError("GWR fit requires a bandwidth");
  if (options.bandwidths.size() != 1 && options.bandwidths.size() != p) {
    throw PreconditionError(fmt::format("expected 1 or {} bandwidths, got {}", p, options.bandwidths.size()));
  }
  for (double b : options.bandwidths) {
    if (!(b > 0.0)) throw PreconditionError(fmt::format("bandwidth must be positive, got {}", b));
  }
  const bool shared = std::all_of(options.bandwidths.begin(), options.bandwidths.end(),
                                  [&](double b) { return b == options.bandwidths.front(); });
  if (shared) return fit_shared(design, options, d, options.bandwidths.front());
  return fit_multiscale(design, options, d);
}

// Golden-section minimisation of f on [lo, hi]; adaptive bandwidths are
// searched on integers. Returns the best evaluated point, preferring the
// larger bandwidth on ties.
std::pair<double, double> golden_search(double lo, double hi, bool integral,
                                        const std::function<double(double)>& f,
                                        std::vector<std::pair<double, double>>* trace) {
  std::map<double, double> cache;
  auto eval = [&](double b) {
    if (integral) b = std::round(b);
    auto it = cache.find(b);
    if (it != cache.end()) return it->second;
    const double value = f(b);
    cache.emplace(b, value);
    if (trace) trace->emplace_back(b, value);
    return value;
  };
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  const double tol = integral ? 1.0 : std::max(1e-3 * (hi - lo), 1e-9);
  eval(lo);
  eval(hi);
  double a = lo, c = hi;
  double x1 = c - ratio * (c - a), x2 = a + ratio * (c - a);
  double f1 = eval(x1), f2 = eval(x2);
  while (c - a > tol) {
    if (f1 <= f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - ratio * (c - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + ratio * (c - a);
      f2 = eval(x2);
    }
  }
  std::pair<double, double> best{hi, kInf};
  for (const auto& [b, value] : cache) {
    if (value <= best.second) best = {b, value};
  }
  if (!std::isfinite(best.second)) throw ConvergenceError("no bandwidth in the search interval gives a finite AICc");
  return best;
}

double checked_aicc(const GwrDesign& design, const GwrOptions& options, const DistanceMatrix& d) {
  try {
    return fit_with(design, options, d).aicc;
  } catch (const ConvergenceError&) {
    return kInf;
  }
}

double cross(std::pair<double, double> o, std::pair<double, double> a, std::pair<double, double> b) {
  return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
}

std::vector<std::pair<double, double>> convex_hull(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<std::pair<double, double>> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

double segment_distance(std::pair<double, double> p, std::pair<double, double> a, std::pair<double, double> b) {
  const double dx = b.first - a.first, dy = b.second - a.second;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.first - a.first) * dx + (p.second - a.second) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.first - (a.first + t * dx), p.second - (a.second + t * dy));
}

// Distance (degrees) from p to a counter-clockwise hull; 0 inside.
double hull_distance(std::pair<double, double> p, const std::vector<std::pair<double, double>>& hull) {
  if (hull.empty()) return kInf;
  if (hull.size() == 1) return std::hypot(p.first - hull[0].first, p.second - hull[0].second);
  bool inside = hull.size() >= 3;
  double best = kInf;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    if (cross(a, b, p) < 0) inside = false;
    best = std::min(best, segment_distance(p, a, b));
  }
  return inside ? 0.0 : best;
}

}  // namespace

std::string to_string(Kernel kernel) { return kernel == Kernel::kBisquare ? "bisquare" : "gaussian"; }

Kernel parse_kernel(std::string_view text) {
  if (text == "bisquare") return Kernel::kBisquare;
  if (text == "gaussian") return Kernel::kGaussian;
  throw ConfigError(fmt::format("unknown kernel '{}' (expected bisquare or gaussian)", text));
}

std::string to_string(BandwidthType type) { return type == BandwidthType::kAdaptive ? "adaptive" : "fixed"; }

BandwidthType parse_bandwidth_type(std::string_view text) {
  if (text == "adaptive") return BandwidthType::kAdaptive;
  if (text == "fixed") return BandwidthType::kFixed;
  throw ConfigError(fmt::format("unknown bandwidth type '{}' (expected adaptive or fixed)", text));
}

void GwrDesign::validate() const {
  const auto n = y.size();
  if (locations.size() != n || static_cast<std::size_t>(x.rows()) != n) {
    throw PreconditionError(fmt::format("GWR design rows disagree: {} locations, {} labels, {} regressor rows",
                                        locations.size(), n, x.rows()));
  }
  if (names.size() != static_cast<std::size_t>(x.cols())) {
    throw PreconditionError("GWR design needs one name per regressor column");
  }
  if (n < kMinLocations) {
    throw PreconditionError(fmt::format("GWR needs at least {} locations, got {}", kMinLocations, n));
  }
  if (!x.allFinite()) throw PreconditionError("GWR regressors contain missing or non-finite values");
  for (const auto& [u, v] : locations) {
    if (!std::isfinite(u) || !std::isfinite(v)) throw PreconditionError("GWR location is not finite");
  }
  std::size_t ones = 0;
  for (int label : y) {
    if (label != 0 && label != 1) throw PreconditionError("GWR response must be 0/1");
    ones += static_cast<std::size_t>(label);
  }
  if (ones == 0 || ones == n) throw PreconditionError("GWR response contains a single class");
}

GwrDesign design_from_labels(std::span<const trajectory::DominanceLabel> labels, bool with_shares) {
  GwrDesign design;
  const auto n = static_cast<Eigen::Index>(labels.size());
  bool food_varies = false, shopping_varies = false, shopping_implied = true;
  for (const auto& l : labels) {
    design.locations.emplace_back(l.u_center, l.v_center);
    design.y.push_back(l.y);
    food_varies |= l.food_share != labels.front().food_share;
    shopping_varies |= l.shopping_share != labels.front().shopping_share;
    shopping_implied &= std::fabs(l.food_share + l.shopping_share - 1.0) < 1e-12;
  }
  design.names = {"intercept", "distance_km"};
  if (with_shares) {
    if (food_varies) design.names.push_back("food_share");
    if (shopping_varies && !(food_varies && shopping_implied)) design.names.push_back("shopping_share");
  }
  design.x.resize(n, static_cast<Eigen::Index>(design.names.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& l = labels[static_cast<std::size_t>(i)];
    design.x(i, 0) = 1.0;
    design.x(i, 1) = l.distance_m / 1000.0;
    for (std::size_t c = 2; c < design.names.size(); ++c) {
      design.x(i, static_cast<Eigen::Index>(c)) = design.names[c] == "food_share" ? l.food_share : l.shopping_share;
    }
  }
  return design;
}

double kernel_weight(Kernel kernel, double d, double b) {
  if (d <= 0.0) return 1.0;
  const double r = d / b;
  if (kernel == Kernel::kGaussian) return std::exp(-0.5 * r * r);
  if (r >= 1.0) return 0.0;
  const double t = 1.0 - r * r;
  return t * t;
}

GwrFit fit_gwr_logistic(const GwrDesign& design, const GwrOptions& options) {
  design.validate();
  const auto d = distance_matrix(design.locations);
  return fit_with(design, options, d);
}

Eigen::VectorXd fit_global_logistic(const Eigen::MatrixXd& x, std::span<const int> y) {
  const std::vector<double> ones(y.size(), 1.0);
  const auto r = fit_weighted_logistic(x, y, ones, Eigen::VectorXd::Zero(x.cols()), std::nullopt);
  if (!r.converged) throw ConvergenceError("global logistic fit did not converge");
  return r.beta;
}

BandwidthSelection select_bandwidth(const GwrDesign& design, const GwrOptions& options) {
  design.validate();
  const auto d = distance_matrix(design.locations);
  const auto n = design.size();
  const auto p = static_cast<std::size_t>(design.x.cols());
  const bool adaptive = options.bandwidth_type == BandwidthType::kAdaptive;
  const std::size_t min_neighbors = std::max<std::size_t>(2 * p + 2, (n + 19) / 20);

  BandwidthSelection sel;
  if (adaptive) {
    sel.lower = static_cast<double>(min_neighbors);
    sel.upper = static_cast<double>(n);
  } else {
    const auto radii = kernel_radii(d, BandwidthType::kAdaptive, static_cast<double>(min_neighbors));
    sel.lower = *std::max_element(radii.begin(), radii.end());
    sel.upper = d.maxCoeff();
  }
  if (options.search_min) sel.lower = *options.search_min;
  if (options.search_max) sel.upper = *options.search_max;
  if (!(sel.lower > 0.0) || !(sel.lower < sel.upper)) {
    throw PreconditionError(
        fmt::format("degenerate bandwidth search interval [{}, {}]", sel.lower, sel.upper));
  }

  GwrOptions trial = options;
  auto shared = [&](double b) {
    trial.bandwidths = {b};
    return checked_aicc(design, trial, d);
  };
  const auto [best, best_aicc] = golden_search(sel.lower, sel.upper, adaptive, shared, &sel.evaluations);
  sel.bandwidths.assign(p, best);
  sel.aicc = best_aicc;

  if (options.multiscale && p > 1) {
    double current = sel.aicc;
    for (int sweep = 0; sweep < options.max_backfit_sweeps; ++sweep) {
      bool changed = false;
      for (std::size_t k = 0; k < p; ++k) {
        auto per_feature = [&](double b) {
          trial.bandwidths = sel.bandwidths;
          trial.bandwidths[k] = b;
          return checked_aicc(design, trial, d);
        };
        const auto [bk, ak] = golden_search(sel.lower, sel.upper, adaptive, per_feature, nullptr);
        if (ak < current && bk != sel.bandwidths[k]) {
          sel.bandwidths[k] = bk;
          current = ak;
          changed = true;
        }
      }
      if (!changed) break;
    }
    sel.aicc = current;
  }
  return sel;
}

std::vector<Prediction> predict_dominance(const GwrFit& fit, std::span<const PredictionCell> cells) {
  if (fit.locations.empty()) throw PreconditionError("prediction requires a fitted model");
  const auto hull = convex_hull(fit.locations);
  std::vector<Prediction> out;
  out.reserve(cells.size());
  for (const auto& cell : cells) {
    if (cell.x.size() != fit.beta.cols()) {
      throw PreconditionError(fmt::format("prediction cell has {} regressors, model has {}", cell.x.size(),
                                          fit.beta.cols()));
    }
    Prediction pr;
    pr.u = cell.u;
    pr.v = cell.v;
    double best = kInf;
    for (std::size_t i = 0; i < fit.locations.size(); ++i) {
      const double dist = geo::haversine_m(cell.u, cell.v, fit.locations[i].first, fit.locations[i].second);
      if (dist < best) {
        best = dist;
        pr.nearest = i;
      }
    }
    pr.probability = stats::logistic(fit.beta.row(static_cast<Eigen::Index>(pr.nearest)).dot(cell.x));
    pr.label = pr.probability > 0.5 ? 1 : 0;
    const double outside_m = hull_distance({cell.u, cell.v}, hull) * geo::meters_per_degree();
    pr.extrapolated = outside_m > fit.support_radius_m[pr.nearest];
    out.push_back(pr);
  }
  return out;
}

std::vector<PredictionCell> prediction_grid(double cell_size_deg, double radius_m) {
  const int reach = static_cast<int>(std::ceil(radius_m / (cell_size_deg * geo::meters_per_degree()))) + 1;
  std::vector<PredictionCell> cells;
  for (int iu = -reach; iu <= reach; ++iu) {
    for (int iv = -reach; iv <= reach; ++iv) {
      const double u = (iu + 0.5) * cell_size_deg;
      const double v = (iv + 0.5) * cell_size_deg;
      const double dist = geo::offset_distance_m(u, v);
      if (dist > radius_m) continue;
      PredictionCell c{u, v, Eigen::VectorXd(2)};
      c.x << 1.0, dist / 1000.0;
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

}  // namespace o2o::spatial
