#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "bgc/experiment.hpp"

namespace bgc {

namespace {

constexpr double kPanelW = 420.0;
constexpr double kPanelH = 320.0;
constexpr double kMargin = 50.0;

const char* series_color(Variant v) {
  return v == Variant::GC ? "#1f77b4" : "#d62728";
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double p = 0.05 * (hi - lo);
    lo -= p;
    hi += p;
  }
};

// Maps data coordinates into one panel whose top-left corner is (x0, y0).
struct Panel {
  double x0;
  double y0;
  Range x;
  Range y;

  double px(double v) const {
    return x0 + kMargin + (v - x.lo) / (x.hi - x.lo) * (kPanelW - 2 * kMargin);
  }
  double py(double v) const {
    return y0 + kPanelH - kMargin -
           (v - y.lo) / (y.hi - y.lo) * (kPanelH - 2 * kMargin);
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void axes(std::ostream& out, const Panel& p, const std::string& title,
          const std::string& xlabel, const std::string& ylabel) {
  const double left = p.x0 + kMargin;
  const double right = p.x0 + kPanelW - kMargin;
  const double top = p.y0 + kMargin;
  const double bottom = p.y0 + kPanelH - kMargin;
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left
      << "\" height=\"" << bottom - top
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << top - 15
      << "\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << bottom + 35
      << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  out << "<text x=\"" << left - 38 << "\" y=\"" << (top + bottom) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 "
      << left - 38 << ' ' << (top + bottom) / 2 << ")\">" << ylabel
      << "</text>\n";
  out << "<text x=\"" << left << "\" y=\"" << bottom + 15
      << "\" font-size=\"10\">" << num(p.x.lo) << "</text>\n";
  out << "<text x=\"" << right << "\" y=\"" << bottom + 15
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(p.x.hi) << "</text>\n";
  out << "<text x=\"" << left - 4 << "\" y=\"" << bottom
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(p.y.lo) << "</text>\n";
  out << "<text x=\"" << left - 4 << "\" y=\"" << top + 10
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(p.y.hi) << "</text>\n";
}

}  // namespace

void write_svg(std::ostream& out, const ExperimentResult& r) {
  Panel scale{0.0, 0.0, {}, {}};
  Panel bound{kPanelW, 0.0, {}, {}};
  for (const auto& rep : r.reports) {
    for (const auto& rec : rep.records) {
      if (rec.groups >= 2 && rec.E > 0.0) {
        scale.x.add(std::log1p(-1.0 / static_cast<double>(rec.groups)));
        scale.y.add(std::log(rec.E));
      }
      if (rec.bound_ratio) {
        bound.x.add(std::log2(static_cast<double>(rec.groups)));
        bound.y.add(*rec.bound_ratio);
      }
    }
  }
  bound.y.add(r.reference_ceiling());
  bound.y.add(0.0);
  scale.x.pad();
  scale.y.pad();
  bound.x.pad();
  bound.y.pad();

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kPanelW
      << "\" height=\"" << kPanelH + 20 << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  axes(out, scale, "log E vs log(1 - 1/N)", "log(1 - 1/N)", "log E");
  axes(out, bound, "Rel.E / (1 - 1/N)^p vs N", "log2 N", "bound ratio");

  const double ref_y = bound.py(r.reference_ceiling());
  out << "<line class=\"reference\" x1=\"" << bound.x0 + kMargin << "\" y1=\""
      << ref_y << "\" x2=\"" << bound.x0 + kPanelW - kMargin << "\" y2=\""
      << ref_y << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  out << "<text x=\"" << bound.x0 + kPanelW - kMargin - 4 << "\" y=\""
      << ref_y - 4 << "\" text-anchor=\"end\" font-size=\"10\">K/n = "
      << num(r.reference_ceiling()) << "</text>\n";

  double legend_y = kMargin + 15;
  for (const auto& rep : r.reports) {
    const std::string name = to_string(rep.variant);
    const char* color = series_color(rep.variant);
    out << "<g class=\"series\" id=\"scale-" << name << "\">\n";
    for (const auto& rec : rep.records) {
      if (rec.groups < 2 || !(rec.E > 0.0)) continue;
      out << "<circle cx=\""
          << scale.px(std::log1p(-1.0 / static_cast<double>(rec.groups)))
          << "\" cy=\"" << scale.py(std::log(rec.E)) << "\" r=\"3.5\" fill=\""
          << color << "\"/>\n";
    }
    if (rep.fit) {
      const double x1 = scale.x.lo;
      const double x2 = scale.x.hi;
      out << "<line x1=\"" << scale.px(x1) << "\" y1=\""
          << scale.py(rep.fit->intercept + rep.fit->gamma * x1) << "\" x2=\""
          << scale.px(x2) << "\" y2=\""
          << scale.py(rep.fit->intercept + rep.fit->gamma * x2)
          << "\" stroke=\"" << color << "\"/>\n";
    }
    out << "<text x=\"" << kMargin + 8 << "\" y=\"" << legend_y
        << "\" font-size=\"12\" fill=\"" << color << "\">" << name
        << " slope " << (rep.fit ? num(rep.fit->gamma) : std::string("n/a"))
        << "</text>\n";
    out << "</g>\n";
    legend_y += 16;

    out << "<g class=\"series\" id=\"bound-" << name << "\">\n";
    std::string path;
    for (const auto& rec : rep.records) {
      if (!rec.bound_ratio) continue;
      const double x = bound.px(std::log2(static_cast<double>(rec.groups)));
      const double y = bound.py(*rec.bound_ratio);
      path += (path.empty() ? "M" : " L") + num(x) + ' ' + num(y);
      out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3.5\" fill=\""
          << color << "\"/>\n";
    }
    if (!path.empty()) {
      out << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color
          << "\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

}  // namespace bgc
