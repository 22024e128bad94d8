#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/evalkit/bdrate.hpp"
#include "hytip/evalkit/metrics.hpp"

namespace hytip::cli {

inline constexpr const char* kRdCsvHeader = "dataset,sequence,frame,lambda_idx,bpp,psnr_rgb,ms_ssim";

inline void write_rd_csv(std::ostream& os, const std::vector<evalkit::FrameRecord>& rows) {
  os << kRdCsvHeader << "\n" << std::setprecision(10);
  for (const auto& r : rows)
    os << r.dataset << "," << r.sequence << "," << r.frame << "," << r.lambda_idx << "," << r.bpp << ","
       << r.psnr_rgb << "," << r.ms_ssim << "\n";
}

inline void write_rd_csv(const std::string& path, const std::vector<evalkit::FrameRecord>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_rd_csv(f, rows);
}

/// Reads the RD CSV schema; external codec curves use the same columns.
inline std::vector<evalkit::FrameRecord> read_rd_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::invalid_argument(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRdCsvHeader)
    throw std::invalid_argument(path + ": header must be '" + std::string(kRdCsvHeader) + "', got '" + line + "'");
  std::vector<evalkit::FrameRecord> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 7) throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected 7 columns");
    try {
      out.push_back({cols[0], cols[1], std::stoi(cols[2]), std::stoi(cols[3]), std::stod(cols[4]), std::stod(cols[5]),
                     std::stod(cols[6])});
    } catch (const std::logic_error&) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  if (out.empty()) throw std::invalid_argument(path + ": no rows");
  return out;
}

/// RD curve restricted to one dataset (or the only one present).
inline std::vector<evalkit::RDPoint> curve_for(const std::vector<evalkit::FrameRecord>& rows,
                                               const std::string& dataset = "") {
  std::vector<evalkit::FrameRecord> keep;
  for (const auto& r : rows)
    if (dataset.empty() || r.dataset == dataset) keep.push_back(r);
  if (keep.empty()) throw std::invalid_argument("no rows for dataset '" + dataset + "'");
  auto c = evalkit::dataset_curve(keep);
  std::sort(c.begin(), c.end(), [](const auto& a, const auto& b) { return a.bpp < b.bpp; });
  return c;
}

// ------------------------------------------------------------------ plots

struct PlotSeries {
  std::string name;
  std::vector<evalkit::RDPoint> points;
};

/// Static RD plot: rate (bpp) on x, quality on y, one polyline per series.
inline std::string svg_rd_plot(const std::string& title, const std::vector<PlotSeries>& series,
                               evalkit::QualityAxis axis = evalkit::QualityAxis::kPsnr) {
  const double W = 640, H = 440, L = 70, R = 170, T = 40, B = 55;
  double x0 = std::numeric_limits<double>::max(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      const double q = evalkit::quality_of(p, axis);
      x0 = std::min(x0, p.bpp);
      x1 = std::max(x1, p.bpp);
      y0 = std::min(y0, q);
      y1 = std::max(y1, q);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  const double px = (x1 - x0) * 0.05 + 1e-9, py = (y1 - y0) * 0.05 + 1e-9;
  x0 -= px, x1 += px, y0 -= py, y1 += py;
  auto sx = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22"};
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<line x1=\"" << sx(xv) << "\" y1=\"" << T << "\" x2=\"" << sx(xv) << "\" y2=\"" << H - B
       << "\" stroke=\"#ddd\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << sy(yv) << "\" x2=\"" << W - R << "\" y2=\"" << sy(yv)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << sx(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << std::setprecision(3)
       << xv << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n"
       << std::setprecision(2);
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">Rate (bpp)</text>\n";
  os << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << (axis == evalkit::QualityAxis::kPsnr ? "PSNR-RGB (dB)" : "MS-SSIM") << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* col = colors[k % 10];
    auto pts = series[k].points;
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.bpp < b.bpp; });
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : pts) os << sx(p.bpp) << "," << sy(evalkit::quality_of(p, axis)) << " ";
    os << "\"/>\n";
    for (const auto& p : pts)
      os << "<circle cx=\"" << sx(p.bpp) << "\" cy=\"" << sy(evalkit::quality_of(p, axis)) << "\" r=\"3\" fill=\""
         << col << "\"/>\n";
    const double ly = T + 14 + 18.0 * k;
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 35 << "\" y=\"" << ly << "\">" << series[k].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

/// Markdown table from a header row and body rows.
inline std::string markdown_table(const std::vector<std::string>& head, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& r) {
    os << "|";
    for (const auto& c : r) os << " " << c << " |";
    os << "\n";
  };
  line(head);
  os << "|";
  for (std::size_t i = 0; i < head.size(); ++i) os << "---|";
  os << "\n";
  for (const auto& r : rows) line(r);
  return os.str();
}

inline std::string fmt(double v, int prec = 3) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace hytip::cli
