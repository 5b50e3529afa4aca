#pragma once

// Result writers: RFC-4180 CSV, JSON and a static SVG plot. The plot markers
// carry the CSV cell strings of the row they draw.

#include "tea/table.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace tea {

inline constexpr int output_schema_version = 1;

/// Cell text: dB to 3 decimals, other values round-trip exact, NaN empty.
inline std::string format_cell(double v, ColumnKind kind) {
  if (std::isnan(v)) return "";
  char buf[64];
  if (kind == ColumnKind::db)
    std::snprintf(buf, sizeof buf, "%.3f", v == 0.0 ? 0.0 : v);
  else
    std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// The table plus a trailing schema_version column.
inline void write_csv(const Table& t, std::ostream& os) {
  for (const auto& c : t.columns) os << csv_field(c.name) << ',';
  os << "schema_version\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << format_cell(r[i], t.columns[i].kind) << ',';
    os << output_schema_version << '\n';
  }
}

inline void write_json(const nlohmann::ordered_json& doc, std::ostream& os) { os << doc.dump(2) << '\n'; }

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Tick positions at 1, 2, 5 times powers of ten covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

/// Scatter-and-line plot of the table's PlotSpec series.
inline void write_svg(const Table& t, std::ostream& os) {
  const PlotSpec& p = t.plot;
  const double w = 720, h = 460, ml = 80, mr = 180, mt = 30, mb = 60;
  const double pw = w - ml - mr, ph = h - mt - mb;
  const std::size_t xi = t.index(p.x);
  auto xmap = [&](double x) { return p.log_x ? std::log10(x) : x; };

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  auto grow_y = [&](double v) {
    if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  };
  for (const auto& r : t.rows) {
    if (std::isfinite(r[xi]) && (!p.log_x || r[xi] > 0.0)) x0 = std::min(x0, xmap(r[xi])), x1 = std::max(x1, xmap(r[xi]));
    for (std::size_t s = 0; s < p.y.size(); ++s) {
      grow_y(r[t.index(p.y[s])]);
      if (s < p.ci_low.size() && !p.ci_low[s].empty()) grow_y(r[t.index(p.ci_low[s])]);
      if (s < p.ci_high.size() && !p.ci_high[s].empty()) grow_y(r[t.index(p.ci_high[s])]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0;
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double ypad = 0.05 * (y1 - y0);
  y0 -= ypad;
  y1 += ypad;
  auto px = [&](double x) { return ml + (xmap(x) - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return mt + (y1 - y) / (y1 - y0) * ph; };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  using detail::num;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  std::vector<double> xt;
  if (p.log_x) {
    for (int e = static_cast<int>(std::floor(x0)); e <= static_cast<int>(std::ceil(x1)); ++e)
      for (double m = 1; m < 10; ++m) {
        const double v = m * std::pow(10.0, e);
        if (std::log10(v) >= x0 - 1e-12 && std::log10(v) <= x1 + 1e-12) xt.push_back(v);
      }
  } else {
    xt = detail::nice_ticks(x0, x1);
  }
  for (double v : xt) {
    const double x = px(v);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(mt + ph) << "\" x2=\"" << num(x) << "\" y2=\"" << num(mt + ph + 5)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(x) << "\" y=\"" << num(mt + ph + 18) << "\" text-anchor=\"middle\">" << detail::tick_label(v)
       << "</text>\n";
  }
  for (double v : detail::nice_ticks(y0, y1)) {
    const double y = py(v);
    os << "<line x1=\"" << num(ml - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(ml) << "\" y2=\"" << num(y)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(ml - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << detail::tick_label(v)
       << "</text>\n";
  }
  os << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(h - 15) << "\" text-anchor=\"middle\">"
     << detail::xml_escape(p.x_label) << "</text>\n";
  os << "<text x=\"20\" y=\"" << num(mt + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << num(mt + ph / 2)
     << ")\">" << detail::xml_escape(p.y_label) << "</text>\n";

  for (std::size_t s = 0; s < p.y.size(); ++s) {
    const char* c = colors[s % 6];
    const std::size_t yi = t.index(p.y[s]);
    const bool bars = s < p.ci_low.size() && !p.ci_low[s].empty() && s < p.ci_high.size() && !p.ci_high[s].empty();
    os << "<g class=\"series\" data-column=\"" << detail::xml_escape(p.y[s]) << "\" stroke=\"" << c << "\" fill=\"" << c
       << "\">\n";
    std::string path;
    for (const auto& r : t.rows) {
      const double x = r[xi], y = r[yi];
      if (!std::isfinite(x) || !std::isfinite(y) || (p.log_x && x <= 0.0)) continue;
      path += (path.empty() ? "" : " ") + num(px(x)) + "," + num(py(y));
    }
    if (!path.empty()) os << "<polyline fill=\"none\" stroke-width=\"1.5\" points=\"" << path << "\"/>\n";
    for (const auto& r : t.rows) {
      const double x = r[xi], y = r[yi];
      if (!std::isfinite(x) || !std::isfinite(y) || (p.log_x && x <= 0.0)) continue;
      if (bars) {
        const double lo = r[t.index(p.ci_low[s])], hi = r[t.index(p.ci_high[s])];
        if (std::isfinite(lo) && std::isfinite(hi))
          os << "<line x1=\"" << num(px(x)) << "\" y1=\"" << num(py(lo)) << "\" x2=\"" << num(px(x)) << "\" y2=\""
             << num(py(hi)) << "\"/>\n";
      }
      os << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" data-x=\""
         << format_cell(x, t.columns[xi].kind) << "\" data-y=\"" << format_cell(y, t.columns[yi].kind) << "\"/>\n";
    }
    os << "</g>\n";
    const double ly = mt + 10 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << num(ml + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(ml + pw + 32) << "\" y2=\""
       << num(ly) << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(ml + pw + 38) << "\" y=\"" << num(ly + 4) << "\">" << detail::xml_escape(p.y[s]) << "</text>\n";
  }
  os << "</svg>\n";
}

/// Opens `path`, hands the stream to `writer`, and checks the result.
template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  writer(f);
  f.flush();
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace tea
