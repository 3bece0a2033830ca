#include "o2o/spatial/report.hpp"

#include <algorithm>

#include "o2o/common/csv.hpp"
#include "o2o/common/geo.hpp"
#include "o2o/common/svg.hpp"

namespace o2o::spatial {

void write_summary(std::ostream& out, const GwrFit& fit) {
  csv::Writer w(out);
  w.row({"feature", "mean_coef", "std_err", "p_value", "sd", "min", "max", "bandwidth"});
  for (std::size_t k = 0; k < fit.summary.size(); ++k) {
    const auto& s = fit.summary[k];
    w.row({s.name, csv::num(s.mean), csv::num(s.std_err), csv::num(s.p_value), csv::num(s.sd), csv::num(s.min),
           csv::num(s.max), csv::num(fit.bandwidths[k])});
  }
}

void write_local_coefficients(std::ostream& out, const GwrFit& fit) {
  csv::Writer w(out);
  std::vector<std::string> header = {"u", "v", "fitted"};
  for (const auto& name : fit.names) header.push_back("beta_" + name);
  for (const auto& name : fit.names) header.push_back("se_" + name);
  w.row(header);
  for (Eigen::Index i = 0; i < fit.beta.rows(); ++i) {
    const auto& [u, v] = fit.locations[static_cast<std::size_t>(i)];
    std::vector<std::string> row = {csv::num(u), csv::num(v), csv::num(fit.fitted(i))};
    for (Eigen::Index k = 0; k < fit.beta.cols(); ++k) row.push_back(csv::num(fit.beta(i, k)));
    for (Eigen::Index k = 0; k < fit.beta.cols(); ++k) row.push_back(csv::num(fit.std_err(i, k)));
    w.row(row);
  }
}

void write_prediction(std::ostream& out, std::span<const Prediction> predictions) {
  csv::Writer w(out);
  w.row({"u", "v", "probability", "label", "extrapolated"});
  for (const auto& p : predictions) {
    w.row({csv::num(p.u), csv::num(p.v), csv::num(p.probability), std::to_string(p.label),
           p.extrapolated ? "1" : "0"});
  }
}

std::string prediction_svg(std::span<const Prediction> predictions, double cell_size_deg) {
  // Axes in meters: x = east (v), y = north (u).
  const double m = geo::meters_per_degree();
  double reach = cell_size_deg * m;
  for (const auto& p : predictions) {
    reach = std::max({reach, std::fabs(p.u) * m + cell_size_deg * m, std::fabs(p.v) * m + cell_size_deg * m});
  }
  svg::Plot plot(-reach, reach, -reach, reach, 560, 560);
  plot.title("Predicted treatment dominance");
  plot.axis_labels("east offset (m)", "north offset (m)");
  const double half = cell_size_deg * m / 2.0;
  for (const auto& p : predictions) {
    const double x = p.v * m, y = p.u * m;
    plot.rect(x - half, y - half, x + half, y + half, svg::blend("#2b6cb0", "#c53030", p.probability),
              p.extrapolated ? 0.35 : 1.0);
  }
  plot.point(0.0, 0.0, "#000000", 4.0);
  plot.legend({{"control dominates", "#2b6cb0"}, {"treatment dominates", "#c53030"}});
  return plot.str();
}

}  // namespace o2o::spatial
