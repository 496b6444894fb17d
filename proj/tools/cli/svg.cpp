#include "svg.hpp"

#include <algorithm>
#include <cstdio>

namespace stmd::cli {

namespace {

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

void write_scatter_svg(const std::string& path, const Batch& points, const std::string& title) {
  require_shape(points.rows() >= 2, "write_scatter_svg: needs at least two coordinates");
  constexpr double size = 480.0;
  constexpr double margin = 24.0;
  double lo = -1.0;
  double hi = 1.0;
  if (points.cols() > 0) {
    const Batch xy = points.topRows(2);
    lo = std::min(lo, xy.minCoeff());
    hi = std::max(hi, xy.maxCoeff());
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double scale = (size - 2 * margin) / (hi - lo);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw FormatError("cannot open '" + path + "' for writing");
  std::fprintf(f,
               "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
               size, size, size, size);
  std::fprintf(f, "<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n");
  std::fprintf(f, "<text x=\"%.0f\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">%s</text>\n", margin,
               escape(title).c_str());
  // Axes through the origin when it is in view.
  const double ox = margin + (0.0 - lo) * scale;
  const double oy = size - margin - (0.0 - lo) * scale;
  std::fprintf(f, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#bbb\"/>\n", margin, oy,
               size - margin, oy);
  std::fprintf(f, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#bbb\"/>\n", ox, margin, ox,
               size - margin);
  std::fprintf(f, "<g fill=\"#1f5fa8\" fill-opacity=\"0.45\">\n");
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const double x = margin + (points(0, j) - lo) * scale;
    const double y = size - margin - (points(1, j) - lo) * scale;
    std::fprintf(f, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.6\"/>\n", x, y);
  }
  std::fprintf(f, "</g>\n</svg>\n");
  if (std::fclose(f) != 0) throw FormatError("failed writing '" + path + "'");
}

}  // namespace stmd::cli
