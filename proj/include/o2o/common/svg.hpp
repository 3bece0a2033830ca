#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace o2o::svg {

// Minimal SVG chart builder. Coordinates passed to the drawing calls are in
// data units; the plot maps them into a fixed pixel frame with margins for
// axis labels. Output is deterministic (no timestamps, fixed precision).
class Plot {
 public:
  Plot(double x_min, double x_max, double y_min, double y_max, int width = 640, int height = 400);

  void title(std::string_view text);
  void axis_labels(std::string_view x_label, std::string_view y_label);
  void polyline(std::span<const double> xs, std::span<const double> ys, std::string_view color,
                double stroke_width = 2.0, bool dashed = false);
  void point(double x, double y, std::string_view color, double radius = 3.0);
  void segment(double x0, double y0, double x1, double y1, std::string_view color,
               double stroke_width = 1.5, bool dashed = false);
  // Axis-aligned rectangle spanning [x0, x1] x [y0, y1] in data units.
  void rect(double x0, double y0, double x1, double y1, std::string_view fill, double opacity = 1.0);
  void text(double x, double y, std::string_view label, int size = 11, std::string_view anchor = "start");
  void legend(const std::vector<std::pair<std::string, std::string>>& entries);

  std::string str() const;
  void save(const std::string& path) const;

 private:
  double px(double x) const;
  double py(double y) const;

  double x_min_, x_max_, y_min_, y_max_;
  int width_, height_;
  std::string title_, x_label_, y_label_;
  std::vector<std::string> body_;
  std::vector<std::pair<std::string, std::string>> legend_;
};

// Interpolates between two colors for heat maps; t in [0, 1].
std::string blend(std::string_view from_hex, std::string_view to_hex, double t);

}  // namespace o2o::svg
