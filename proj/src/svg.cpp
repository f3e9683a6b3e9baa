#include "thoughtmdp/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace tmdp {

namespace {
std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}
}  // namespace

SvgWriter::SvgWriter(double width, double height) : width_(width), height_(height) {}

void SvgWriter::rect(double x, double y, double w, double h, const std::string& fill,
                     const std::string& stroke, double stroke_width) {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
             "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"";
    if (!stroke.empty())
        body_ += " stroke=\"" + stroke + "\" stroke-width=\"" + num(stroke_width) + "\"";
    body_ += "/>\n";
}

void SvgWriter::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                     double width) {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
             num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
}

void SvgWriter::polyline(const std::vector<std::pair<double, double>>& pts,
                         const std::string& stroke, double width) {
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) +
             "\" points=\"";
    for (const auto& [x, y] : pts) body_ += num(x) + "," + num(y) + " ";
    body_ += "\"/>\n";
}

void SvgWriter::polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill,
                        double opacity) {
    body_ += "<polygon fill=\"" + fill + "\" fill-opacity=\"" + num(opacity) + "\" points=\"";
    for (const auto& [x, y] : pts) body_ += num(x) + "," + num(y) + " ";
    body_ += "\"/>\n";
}

void SvgWriter::text(double x, double y, const std::string& s, double size,
                     const std::string& anchor) {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) +
             "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\">" + s + "</text>\n";
}

void SvgWriter::arrow(double x, double y, double dx, double dy, double len, const std::string& stroke,
                      double width) {
    double n = std::hypot(dx, dy);
    if (n == 0) return;
    dx /= n;
    dy /= n;
    double x1 = x - dx * len / 2, y1 = y - dy * len / 2;
    double x2 = x + dx * len / 2, y2 = y + dy * len / 2;
    line(x1, y1, x2, y2, stroke, width);
    // head
    double hx = -dx * len * 0.3, hy = -dy * len * 0.3;
    double px = -dy * len * 0.18, py = dx * len * 0.18;
    line(x2, y2, x2 + hx + px, y2 + hy + py, stroke, width);
    line(x2, y2, x2 + hx - px, y2 + hy - py, stroke, width);
}

std::string SvgWriter::str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) + "\" height=\"" +
           num(height_) + "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) + "\">\n" + body_ +
           "</svg>\n";
}

void SvgWriter::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << str();
}

std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    // dark blue (0) -> teal -> yellow (1)
    int r = static_cast<int>(std::round(253 * t * t));
    int g = static_cast<int>(std::round(60 + 180 * t));
    int b = static_cast<int>(std::round(110 * (1.0 - t) + 30));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace tmdp
