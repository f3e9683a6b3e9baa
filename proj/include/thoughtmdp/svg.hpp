#pragma once

#include <string>
#include <vector>

namespace tmdp {

// Minimal SVG writer for the plots and grid renders this project emits.
class SvgWriter {
public:
    SvgWriter(double width, double height);

    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "", double stroke_width = 0.0);
    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width = 1.0);
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double width = 1.5);
    void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill,
                 double opacity = 1.0);
    void text(double x, double y, const std::string& s, double size = 12.0,
              const std::string& anchor = "start");
    // arrow centered at (x, y) pointing along (dx, dy), total length `len`
    void arrow(double x, double y, double dx, double dy, double len,
               const std::string& stroke, double width = 2.0);

    std::string str() const;
    void save(const std::string& path) const;

private:
    double width_, height_;
    std::string body_;
};

// value in [0,1] -> hex color on a dark-blue-to-yellow ramp
std::string heat_color(double t);

}  // namespace tmdp
