#include "o2o/common/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>

#include "o2o/common/error.hpp"

namespace o2o::svg {

namespace {

constexpr double kLeft = 64, kRight = 20, kTop = 36, kBottom = 48;

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string tick(double v) {
  if (v == 0.0) return "0";
  return fmt::format("{:.3g}", v);
}

}  // namespace

Plot::Plot(double x_min, double x_max, double y_min, double y_max, int width, int height)
    : x_min_(x_min), x_max_(x_max), y_min_(y_min), y_max_(y_max), width_(width), height_(height) {
  if (!(x_max_ > x_min_)) x_max_ = x_min_ + 1.0;
  if (!(y_max_ > y_min_)) y_max_ = y_min_ + 1.0;
}

double Plot::px(double x) const {
  return kLeft + (x - x_min_) / (x_max_ - x_min_) * (width_ - kLeft - kRight);
}

double Plot::py(double y) const {
  return height_ - kBottom - (y - y_min_) / (y_max_ - y_min_) * (height_ - kTop - kBottom);
}

void Plot::title(std::string_view text) { title_ = text; }

void Plot::axis_labels(std::string_view x_label, std::string_view y_label) {
  x_label_ = x_label;
  y_label_ = y_label;
}

void Plot::polyline(std::span<const double> xs, std::span<const double> ys, std::string_view color,
                    double stroke_width, bool dashed) {
  std::string pts;
  for (std::size_t i = 0; i < std::min(xs.size(), ys.size()); ++i) {
    if (!std::isfinite(ys[i])) continue;
    pts += fmt::format("{:.2f},{:.2f} ", px(xs[i]), py(ys[i]));
  }
  body_.push_back(fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="{}"{} points="{}"/>)",
                              color, stroke_width, dashed ? R"( stroke-dasharray="6,4")" : "", pts));
}

void Plot::point(double x, double y, std::string_view color, double radius) {
  body_.push_back(fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="{}" fill="{}"/>)", px(x), py(y),
                              radius, color));
}

void Plot::segment(double x0, double y0, double x1, double y1, std::string_view color,
                   double stroke_width, bool dashed) {
  body_.push_back(fmt::format(
      R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}" stroke-width="{}"{}/>)", px(x0),
      py(y0), px(x1), py(y1), color, stroke_width, dashed ? R"( stroke-dasharray="6,4")" : ""));
}

void Plot::rect(double x0, double y0, double x1, double y1, std::string_view fill, double opacity) {
  const double left = std::min(px(x0), px(x1));
  const double top = std::min(py(y0), py(y1));
  body_.push_back(fmt::format(
      R"(<rect x="{:.2f}" y="{:.2f}" width="{:.2f}" height="{:.2f}" fill="{}" fill-opacity="{}"/>)", left,
      top, std::fabs(px(x1) - px(x0)), std::fabs(py(y1) - py(y0)), fill, opacity));
}

void Plot::text(double x, double y, std::string_view label, int size, std::string_view anchor) {
  body_.push_back(fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-size="{}" text-anchor="{}">{}</text>)",
                              px(x), py(y), size, anchor, escape(label)));
}

void Plot::legend(const std::vector<std::pair<std::string, std::string>>& entries) { legend_ = entries; }

std::string Plot::str() const {
  std::string out = fmt::format(
      R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif">)"
      "\n",
      width_, height_, width_, height_);
  out += fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)"
                     "\n",
                     width_, height_);
  const double x0 = kLeft, x1 = width_ - kRight, y0 = height_ - kBottom, y1 = kTop;
  out += fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>)"
                     "\n",
                     x0, y1, x1 - x0, y0 - y1);
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_min_ + (x_max_ - x_min_) * i / 4.0;
    const double yv = y_min_ + (y_max_ - y_min_) * i / 4.0;
    out += fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-size="10" text-anchor="middle">{}</text>)"
                       "\n",
                       px(xv), y0 + 14, tick(xv));
    out += fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-size="10" text-anchor="end">{}</text>)"
                       "\n",
                       x0 - 4, py(yv) + 3, tick(yv));
  }
  for (const auto& item : body_) out += item + "\n";
  if (!title_.empty()) {
    out += fmt::format(R"(<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>)"
                       "\n",
                       width_ / 2, escape(title_));
  }
  if (!x_label_.empty()) {
    out += fmt::format(R"(<text x="{:.2f}" y="{}" font-size="12" text-anchor="middle">{}</text>)"
                       "\n",
                       (x0 + x1) / 2, height_ - 10, escape(x_label_));
  }
  if (!y_label_.empty()) {
    out += fmt::format(
        R"svg(<text x="14" y="{:.2f}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2f})">{}</text>)svg"
        "\n",
        (y0 + y1) / 2, (y0 + y1) / 2, escape(y_label_));
  }
  double ly = kTop + 14;
  for (const auto& [label, color] : legend_) {
    out += fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="10" height="10" fill="{}"/>)"
                       "\n",
                       x1 - 150, ly - 9, color);
    out += fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-size="11">{}</text>)"
                       "\n",
                       x1 - 135, ly, escape(label));
    ly += 16;
  }
  out += "</svg>\n";
  return out;
}

void Plot::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << str();
}

std::string blend(std::string_view from_hex, std::string_view to_hex, double t) {
  auto channel = [](std::string_view hex, int i) {
    return std::stoi(std::string(hex.substr(1 + 2 * i, 2)), nullptr, 16);
  };
  t = std::clamp(t, 0.0, 1.0);
  int rgb[3];
  for (int i = 0; i < 3; ++i) {
    rgb[i] = static_cast<int>(std::lround(channel(from_hex, i) * (1 - t) + channel(to_hex, i) * t));
  }
  return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
}

}  // namespace o2o::svg
