#include "plot.hpp"

#include "cvrl/errors.hpp"
#include "cvrl/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace cvrl::tools {

namespace {

constexpr int kW = 900, kH = 560;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

struct Rgb {
  uint8_t r, g, b;
};

const Rgb kPalette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                        {214, 39, 40},  {148, 103, 189}, {140, 86, 75}};

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), data_(static_cast<size_t>(w) * h * 3, 255) {}

  void set(int x, int y, Rgb c, double alpha = 1.0) {
    if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
    uint8_t* p = data_.data() + (static_cast<size_t>(y) * w_ + x) * 3;
    p[0] = static_cast<uint8_t>(alpha * c.r + (1.0 - alpha) * p[0]);
    p[1] = static_cast<uint8_t>(alpha * c.g + (1.0 - alpha) * p[1]);
    p[2] = static_cast<uint8_t>(alpha * c.b + (1.0 - alpha) * p[2]);
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c, double alpha = 1.0) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c, alpha);
  }

  // 5x7 bitmap glyphs: digits, lowercase, and a few symbols
  void text(int x, int y, const std::string& s, Rgb c) {
    for (char ch : s) {
      draw_glyph(x, y, ch, c);
      x += 6;
    }
  }

  void save(const std::string& path) const { write_png_rgb(path, w_, h_, data_); }

 private:
  static const uint8_t* glyph(char ch);
  void draw_glyph(int x, int y, char ch, Rgb c) {
    const uint8_t* g = glyph(ch);
    if (!g) return;
    for (int col = 0; col < 5; ++col)
      for (int row = 0; row < 7; ++row)
        if (g[col] & (1 << row)) set(x + col, y + row, c);
  }

  int w_, h_;
  std::vector<uint8_t> data_;
};

// column-encoded 5x7 font, bit 0 = top row
const uint8_t* Canvas::glyph(char ch) {
  static const struct {
    char ch;
    uint8_t cols[5];
  } font[] = {
      {'0', {0x3e, 0x51, 0x49, 0x45, 0x3e}}, {'1', {0x00, 0x42, 0x7f, 0x40, 0x00}},
      {'2', {0x42, 0x61, 0x51, 0x49, 0x46}}, {'3', {0x21, 0x41, 0x45, 0x4b, 0x31}},
      {'4', {0x18, 0x14, 0x12, 0x7f, 0x10}}, {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
      {'6', {0x3c, 0x4a, 0x49, 0x49, 0x30}}, {'7', {0x01, 0x71, 0x09, 0x05, 0x03}},
      {'8', {0x36, 0x49, 0x49, 0x49, 0x36}}, {'9', {0x06, 0x49, 0x49, 0x29, 0x1e}},
      {'a', {0x20, 0x54, 0x54, 0x54, 0x78}}, {'b', {0x7f, 0x48, 0x44, 0x44, 0x38}},
      {'c', {0x38, 0x44, 0x44, 0x44, 0x20}}, {'d', {0x38, 0x44, 0x44, 0x48, 0x7f}},
      {'e', {0x38, 0x54, 0x54, 0x54, 0x18}}, {'f', {0x08, 0x7e, 0x09, 0x01, 0x02}},
      {'g', {0x0c, 0x52, 0x52, 0x52, 0x3e}}, {'h', {0x7f, 0x08, 0x04, 0x04, 0x78}},
      {'i', {0x00, 0x44, 0x7d, 0x40, 0x00}}, {'j', {0x20, 0x40, 0x44, 0x3d, 0x00}},
      {'k', {0x7f, 0x10, 0x28, 0x44, 0x00}}, {'l', {0x00, 0x41, 0x7f, 0x40, 0x00}},
      {'m', {0x7c, 0x04, 0x18, 0x04, 0x78}}, {'n', {0x7c, 0x08, 0x04, 0x04, 0x78}},
      {'o', {0x38, 0x44, 0x44, 0x44, 0x38}}, {'p', {0x7c, 0x14, 0x14, 0x14, 0x08}},
      {'q', {0x08, 0x14, 0x14, 0x18, 0x7c}}, {'r', {0x7c, 0x08, 0x04, 0x04, 0x08}},
      {'s', {0x48, 0x54, 0x54, 0x54, 0x20}}, {'t', {0x04, 0x3f, 0x44, 0x40, 0x20}},
      {'u', {0x3c, 0x40, 0x40, 0x20, 0x7c}}, {'v', {0x1c, 0x20, 0x40, 0x20, 0x1c}},
      {'w', {0x3c, 0x40, 0x30, 0x40, 0x3c}}, {'x', {0x44, 0x28, 0x10, 0x28, 0x44}},
      {'y', {0x0c, 0x50, 0x50, 0x50, 0x3c}}, {'z', {0x44, 0x64, 0x54, 0x4c, 0x44}},
      {'-', {0x08, 0x08, 0x08, 0x08, 0x08}}, {'.', {0x00, 0x60, 0x60, 0x00, 0x00}},
      {'_', {0x40, 0x40, 0x40, 0x40, 0x40}}, {'+', {0x08, 0x08, 0x3e, 0x08, 0x08}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00}}, {'e' + 0, {0x38, 0x54, 0x54, 0x54, 0x18}},
  };
  for (const auto& g : font)
    if (g.ch == ch) return g.cols;
  return nullptr;
}

std::string format_tick(double v) {
  char buf[32];
  if (std::abs(v) >= 1000.0)
    std::snprintf(buf, sizeof(buf), "%.0f", v);
  else
    std::snprintf(buf, sizeof(buf), "%.4g", v);
  std::string s = buf;
  for (auto& c : s) c = static_cast<char>(std::tolower(c));
  return s;
}

struct Range {
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  void expand(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (lo > hi) {
      lo = 0;
      hi = 1;
    }
    const double span = hi - lo;
    const double margin = span > 0 ? 0.05 * span : 1.0;
    lo -= margin;
    hi += margin;
  }
};

}  // namespace

void write_line_chart(const std::string& png_path, const std::string& title,
                      const std::vector<Series>& series) {
  Canvas canvas(kW, kH);
  Range xr, yr;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xr.expand(s.x[i]);
      yr.expand(s.lo[i]);
      yr.expand(s.hi[i]);
    }
  xr.pad();
  yr.pad();

  auto px = [&](double x) {
    return kMarginL + static_cast<int>((x - xr.lo) / (xr.hi - xr.lo) * (kW - kMarginL - kMarginR));
  };
  auto py = [&](double y) {
    return kH - kMarginB -
           static_cast<int>((y - yr.lo) / (yr.hi - yr.lo) * (kH - kMarginT - kMarginB));
  };

  const Rgb black{0, 0, 0};
  canvas.line(kMarginL, kMarginT, kMarginL, kH - kMarginB, black);
  canvas.line(kMarginL, kH - kMarginB, kW - kMarginR, kH - kMarginB, black);
  for (int i = 0; i <= 5; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    canvas.line(px(xv), kH - kMarginB, px(xv), kH - kMarginB + 4, black);
    canvas.text(px(xv) - 12, kH - kMarginB + 8, format_tick(xv), black);
    canvas.line(kMarginL - 4, py(yv), kMarginL, py(yv), black);
    canvas.text(4, py(yv) - 3, format_tick(yv), black);
  }
  canvas.text(kMarginL, kMarginT - 18, title, black);

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const Rgb c = kPalette[si % std::size(kPalette)];
    for (size_t i = 0; i + 1 < s.x.size(); ++i) {
      // band
      const int x0 = px(s.x[i]), x1 = px(s.x[i + 1]);
      for (int x = x0; x <= x1; ++x) {
        const double t = x1 == x0 ? 0.0 : static_cast<double>(x - x0) / (x1 - x0);
        const double lo = s.lo[i] + t * (s.lo[i + 1] - s.lo[i]);
        const double hi = s.hi[i] + t * (s.hi[i + 1] - s.hi[i]);
        canvas.fill_rect(x, py(hi), x, py(lo), c, 0.18);
      }
    }
    for (size_t i = 0; i + 1 < s.x.size(); ++i)
      canvas.line(px(s.x[i]), py(s.mean[i]), px(s.x[i + 1]), py(s.mean[i + 1]), c);
    canvas.fill_rect(kMarginL + 10, kMarginT + 8 + 12 * static_cast<int>(si), kMarginL + 26,
                     kMarginT + 12 + 12 * static_cast<int>(si), c);
    canvas.text(kMarginL + 32, kMarginT + 6 + 12 * static_cast<int>(si), s.label, black);
  }
  canvas.save(png_path);

  // the raw numbers behind the figure
  std::string csv_path = png_path;
  if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".png")
    csv_path = csv_path.substr(0, csv_path.size() - 4);
  csv_path += ".csv";
  std::ofstream csv(csv_path);
  if (!csv) throw OutputError("cannot write " + csv_path);
  csv << "series,x,mean,lo,hi\n";
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i)
      csv << s.label << ',' << s.x[i] << ',' << s.mean[i] << ',' << s.lo[i] << ',' << s.hi[i]
          << '\n';
}

void write_bar_chart(const std::string& png_path, const std::string& title,
                     const std::vector<Bar>& bars) {
  Canvas canvas(kW, kH);
  Range yr;
  yr.expand(0.0);
  for (const auto& b : bars) {
    yr.expand(b.lo);
    yr.expand(b.hi);
  }
  yr.pad();

  auto py = [&](double y) {
    return kH - kMarginB -
           static_cast<int>((y - yr.lo) / (yr.hi - yr.lo) * (kH - kMarginT - kMarginB));
  };
  const Rgb black{0, 0, 0};
  canvas.line(kMarginL, kMarginT, kMarginL, kH - kMarginB, black);
  canvas.line(kMarginL, kH - kMarginB, kW - kMarginR, kH - kMarginB, black);
  for (int i = 0; i <= 5; ++i) {
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    canvas.line(kMarginL - 4, py(yv), kMarginL, py(yv), black);
    canvas.text(4, py(yv) - 3, format_tick(yv), black);
  }
  canvas.text(kMarginL, kMarginT - 18, title, black);

  const int n = static_cast<int>(bars.size());
  const int span = kW - kMarginL - kMarginR;
  for (int i = 0; i < n; ++i) {
    const Rgb c = kPalette[static_cast<size_t>(i) % std::size(kPalette)];
    const int x0 = kMarginL + span * (2 * i + 1) / (2 * n) - span / (3 * n);
    const int x1 = kMarginL + span * (2 * i + 1) / (2 * n) + span / (3 * n);
    canvas.fill_rect(x0, py(bars[static_cast<size_t>(i)].value), x1, py(0.0), c, 0.8);
    const int xm = (x0 + x1) / 2;
    canvas.line(xm, py(bars[static_cast<size_t>(i)].lo), xm, py(bars[static_cast<size_t>(i)].hi),
                black);
    canvas.text(x0, kH - kMarginB + 8, bars[static_cast<size_t>(i)].label, black);
  }
  canvas.save(png_path);

  std::string csv_path = png_path;
  if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".png")
    csv_path = csv_path.substr(0, csv_path.size() - 4);
  csv_path += ".csv";
  std::ofstream csv(csv_path);
  if (!csv) throw OutputError("cannot write " + csv_path);
  csv << "label,value,lo,hi\n";
  for (const auto& b : bars) csv << b.label << ',' << b.value << ',' << b.lo << ',' << b.hi << '\n';
}

}  // namespace cvrl::tools
