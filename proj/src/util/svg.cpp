#include "ossdet/util/svg.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ossdet::util {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kLeft = 60, kRight = 20, kTop = 40, kBottom = 70;
constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
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

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
         "\" height=\"" + std::to_string(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + "<text x=\"" +
         std::to_string(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(title) + "</text>\n";
}

}  // namespace

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  if (labels.size() != values.size()) throw std::invalid_argument("bar chart label/value mismatch");
  std::string s = header(title);
  double top = 0;
  for (double v : values) top = std::max(top, v);
  if (top <= 0) top = 1;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  const double slot = labels.empty() ? plot_w : plot_w / double(labels.size());
  s += "<line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(kHeight - kBottom) +
       "\" x2=\"" + std::to_string(kWidth - kRight) + "\" y2=\"" +
       std::to_string(kHeight - kBottom) + "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double bh = plot_h * values[i] / top;
    double x = kLeft + slot * double(i) + slot * 0.1;
    double y = kHeight - kBottom - bh;
    s += "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", y) + "\" width=\"" +
         fmt("%.1f", slot * 0.8) + "\" height=\"" + fmt("%.1f", bh) + "\" fill=\"" + kPalette[0] +
         "\"/>\n";
    s += "<text x=\"" + fmt("%.1f", x + slot * 0.4) + "\" y=\"" + fmt("%.1f", y - 3) +
         "\" text-anchor=\"middle\">" + fmt("%g", values[i]) + "</text>\n";
    s += "<text transform=\"translate(" + fmt("%.1f", x + slot * 0.4) + "," +
         std::to_string(kHeight - kBottom + 12) + ") rotate(30)\">" + escape(labels[i]) + "</text>\n";
  }
  return s + "</svg>\n";
}

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
  std::string s = header(title);
  const double plot_w = kWidth - kLeft - kRight - 110, plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + plot_w * std::clamp(x, 0.0, 1.0); };
  auto py = [&](double y) { return kHeight - kBottom - plot_h * std::clamp(y, 0.0, 1.0); };
  s += "<rect x=\"" + std::to_string(kLeft) + "\" y=\"" + std::to_string(kTop) + "\" width=\"" +
       fmt("%.0f", plot_w) + "\" height=\"" + fmt("%.0f", plot_h) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    double v = t / 4.0;
    s += "<text x=\"" + fmt("%.1f", px(v)) + "\" y=\"" + std::to_string(kHeight - kBottom + 14) +
         "\" text-anchor=\"middle\">" + fmt("%.2f", v) + "</text>\n";
    s += "<text x=\"" + std::to_string(kLeft - 6) + "\" y=\"" + fmt("%.1f", py(v) + 4) +
         "\" text-anchor=\"end\">" + fmt("%.2f", v) + "</text>\n";
  }
  s += "<text x=\"" + fmt("%.1f", px(0.5)) + "\" y=\"" + std::to_string(kHeight - kBottom + 34) +
       "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  s += "<text transform=\"translate(16," + fmt("%.1f", py(0.5)) + ") rotate(-90)\" " +
       "text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& ser = series[k];
    const char* color = kPalette[k % kPalette.size()];
    std::string pts;
    for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
      pts += fmt("%.2f", px(ser.x[i])) + "," + fmt("%.2f", py(ser.y[i])) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" +
         pts + "\"/>\n";
    double ly = kTop + 14.0 * double(k) + 10;
    s += "<text x=\"" + fmt("%.1f", px(1.0) + 10) + "\" y=\"" + fmt("%.1f", ly) + "\" fill=\"" +
         color + "\">" + escape(ser.label) + "</text>\n";
  }
  return s + "</svg>\n";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

}  // namespace ossdet::util
