#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "nswip/harness.hpp"

namespace nswip {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

std::string format_integer(double v) {
  if (!std::isfinite(v) || std::abs(v) >= 9.0e18) return format_number(v);
  return std::to_string(static_cast<long long>(std::llround(v)));
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << body;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string xml_escape(const std::string& s) {
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

std::string fmt2(double v) {
  std::array<char, 32> buf{};
  const auto res =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, 2);
  return std::string(buf.data(), res.ptr);
}

std::string tick_label(double v) {
  std::array<char, 32> buf{};
  const auto res =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 4);
  return std::string(buf.data(), res.ptr);
}

constexpr std::array<const char*, 8> kColors = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string table_to_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c) out += ',';
    out += t.columns[c];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      const bool integer = c < t.integer.size() && t.integer[c];
      out += integer ? format_integer(row[c]) : format_number(row[c]);
    }
    out += '\n';
  }
  return out;
}

std::string plot_to_svg(const Plot& p) {
  constexpr double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 55;
  auto tx = [&](double v) { return p.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return p.logy ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!p.logx || x > 0) && (!p.logy || y > 0);
  };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : p.series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x0 -= 0.5, x1 += 0.5;
  if (y1 <= y0) y0 -= 0.5, y1 += 0.5;
  const double padx = 0.02 * (x1 - x0), pady = 0.05 * (y1 - y0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
  auto sx = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (W - ml - mr); };
  auto sy = [&](double v) { return H - mb - (ty(v) - y0) / (y1 - y0) * (H - mt - mb); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(p.title) << "</text>\n";
  o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\""
    << H - mt - mb << "\" fill=\"none\" stroke=\"black\"/>\n";

  // Ticks: five per axis, in transformed coordinates.
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0;
    const double fy = y0 + (y1 - y0) * k / 4.0;
    const double px = ml + (W - ml - mr) * k / 4.0;
    const double py = H - mb - (H - mt - mb) * k / 4.0;
    o << "<text x=\"" << fmt2(px) << "\" y=\"" << H - mb + 16
      << "\" text-anchor=\"middle\" font-size=\"11\">"
      << tick_label(p.logx ? std::pow(10.0, fx) : fx) << "</text>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << fmt2(py + 4)
      << "\" text-anchor=\"end\" font-size=\"11\">"
      << tick_label(p.logy ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  o << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
    << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(p.xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
    << "transform=\"rotate(-90 16 " << (mt + H - mb) / 2 << ")\">" << xml_escape(p.ylabel)
    << "</text>\n";

  for (std::size_t si = 0; si < p.series.size(); ++si) {
    const auto& s = p.series[si];
    const char* color = kColors[si % kColors.size()];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.style == "points") {
      for (std::size_t i = 0; i < n; ++i) {
        if (!usable(s.x[i], s.y[i])) continue;
        o << "<circle cx=\"" << fmt2(sx(s.x[i])) << "\" cy=\"" << fmt2(sy(s.y[i]))
          << "\" r=\"2\" fill=\"" << color << "\"/>\n";
      }
    } else {
      std::string pts;
      bool have_prev = false;
      double prev_y = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!usable(s.x[i], s.y[i])) continue;
        if (s.style == "step" && have_prev) {
          pts += fmt2(sx(s.x[i])) + "," + fmt2(sy(prev_y)) + " ";
        }
        pts += fmt2(sx(s.x[i])) + "," + fmt2(sy(s.y[i])) + " ";
        prev_y = s.y[i];
        have_prev = true;
      }
      if (!pts.empty()) pts.pop_back();
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\""
        << pts << "\"/>\n";
    }
  }

  // Legend, capped so path bundles stay readable.
  const std::size_t shown = std::min<std::size_t>(p.series.size(), 8);
  for (std::size_t si = 0; si < shown; ++si) {
    const double y = mt + 14 + 15.0 * static_cast<double>(si);
    o << "<line x1=\"" << ml + 10 << "\" y1=\"" << y - 4 << "\" x2=\"" << ml + 28 << "\" y2=\""
      << y - 4 << "\" stroke=\"" << kColors[si % kColors.size()] << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << ml + 32 << "\" y=\"" << y << "\" font-size=\"11\">"
      << xml_escape(p.series[si].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void emit_artifacts(const Report& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "plots", ec);
  if (ec) throw IoError("cannot create " + (dir / "plots").string() + ": " + ec.message());
  write_file(dir / "report.json", report.to_json().dump(2) + "\n");
  write_file(dir / "data.csv", table_to_csv(report.table));
  nlohmann::json timing = nlohmann::json::object();
  for (const auto& [k, v] : report.timing) timing[k] = v;
  write_file(dir / "timing.json", timing.dump(2) + "\n");
  for (const auto& p : report.plots) write_file(dir / "plots" / p.file, plot_to_svg(p));
  for (const auto& [name, body] : report.extra_files) write_file(dir / name, body);
}

}  // namespace nswip
