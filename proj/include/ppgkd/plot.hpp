#pragma once

// Small raster plot renderer: RGB canvas, Bresenham lines, a 5x7 bitmap font
// (uppercase fold), and PNG output through zlib. Enough for loss curves,
// sweep curves, and the throughput/parameter scatter.

#include "ppgkd/datagen.hpp"  // IoError

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace ppgkd::plot {

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
};

namespace detail {

// 5x7 glyphs, 'X' = set pixel. Lowercase input is folded to uppercase;
// unknown characters render as a hollow box.
struct Glyph {
  char c;
  const char* rows[7];
};

inline const Glyph* find_glyph(char c) {
  static const Glyph table[] = {
      {'A', {" XXX ", "X   X", "X   X", "XXXXX", "X   X", "X   X", "X   X"}},
      {'B', {"XXXX ", "X   X", "X   X", "XXXX ", "X   X", "X   X", "XXXX "}},
      {'C', {" XXX ", "X   X", "X    ", "X    ", "X    ", "X   X", " XXX "}},
      {'D', {"XXXX ", "X   X", "X   X", "X   X", "X   X", "X   X", "XXXX "}},
      {'E', {"XXXXX", "X    ", "X    ", "XXXX ", "X    ", "X    ", "XXXXX"}},
      {'F', {"XXXXX", "X    ", "X    ", "XXXX ", "X    ", "X    ", "X    "}},
      {'G', {" XXX ", "X   X", "X    ", "X XXX", "X   X", "X   X", " XXX "}},
      {'H', {"X   X", "X   X", "X   X", "XXXXX", "X   X", "X   X", "X   X"}},
      {'I', {" XXX ", "  X  ", "  X  ", "  X  ", "  X  ", "  X  ", " XXX "}},
      {'J', {"  XXX", "   X ", "   X ", "   X ", "   X ", "X  X ", " XX  "}},
      {'K', {"X   X", "X  X ", "X X  ", "XX   ", "X X  ", "X  X ", "X   X"}},
      {'L', {"X    ", "X    ", "X    ", "X    ", "X    ", "X    ", "XXXXX"}},
      {'M', {"X   X", "XX XX", "X X X", "X X X", "X   X", "X   X", "X   X"}},
      {'N', {"X   X", "XX  X", "X X X", "X  XX", "X   X", "X   X", "X   X"}},
      {'O', {" XXX ", "X   X", "X   X", "X   X", "X   X", "X   X", " XXX "}},
      {'P', {"XXXX ", "X   X", "X   X", "XXXX ", "X    ", "X    ", "X    "}},
      {'Q', {" XXX ", "X   X", "X   X", "X   X", "X X X", "X  X ", " XX X"}},
      {'R', {"XXXX ", "X   X", "X   X", "XXXX ", "X X  ", "X  X ", "X   X"}},
      {'S', {" XXXX", "X    ", "X    ", " XXX ", "    X", "    X", "XXXX "}},
      {'T', {"XXXXX", "  X  ", "  X  ", "  X  ", "  X  ", "  X  ", "  X  "}},
      {'U', {"X   X", "X   X", "X   X", "X   X", "X   X", "X   X", " XXX "}},
      {'V', {"X   X", "X   X", "X   X", "X   X", "X   X", " X X ", "  X  "}},
      {'W', {"X   X", "X   X", "X   X", "X X X", "X X X", "XX XX", "X   X"}},
      {'X', {"X   X", "X   X", " X X ", "  X  ", " X X ", "X   X", "X   X"}},
      {'Y', {"X   X", "X   X", " X X ", "  X  ", "  X  ", "  X  ", "  X  "}},
      {'Z', {"XXXXX", "    X", "   X ", "  X  ", " X   ", "X    ", "XXXXX"}},
      {'0', {" XXX ", "X   X", "X  XX", "X X X", "XX  X", "X   X", " XXX "}},
      {'1', {"  X  ", " XX  ", "  X  ", "  X  ", "  X  ", "  X  ", " XXX "}},
      {'2', {" XXX ", "X   X", "    X", "   X ", "  X  ", " X   ", "XXXXX"}},
      {'3', {" XXX ", "X   X", "    X", "  XX ", "    X", "X   X", " XXX "}},
      {'4', {"   X ", "  XX ", " X X ", "X  X ", "XXXXX", "   X ", "   X "}},
      {'5', {"XXXXX", "X    ", "XXXX ", "    X", "    X", "X   X", " XXX "}},
      {'6', {" XXX ", "X    ", "X    ", "XXXX ", "X   X", "X   X", " XXX "}},
      {'7', {"XXXXX", "    X", "   X ", "  X  ", " X   ", " X   ", " X   "}},
      {'8', {" XXX ", "X   X", "X   X", " XXX ", "X   X", "X   X", " XXX "}},
      {'9', {" XXX ", "X   X", "X   X", " XXXX", "    X", "    X", " XXX "}},
      {' ', {"     ", "     ", "     ", "     ", "     ", "     ", "     "}},
      {'.', {"     ", "     ", "     ", "     ", "     ", " XX  ", " XX  "}},
      {',', {"     ", "     ", "     ", "     ", " XX  ", "  X  ", " X   "}},
      {'-', {"     ", "     ", "     ", "XXXXX", "     ", "     ", "     "}},
      {'+', {"     ", "  X  ", "  X  ", "XXXXX", "  X  ", "  X  ", "     "}},
      {'_', {"     ", "     ", "     ", "     ", "     ", "     ", "XXXXX"}},
      {'%', {"XX  X", "XX X ", "  X  ", "  X  ", " X   ", "X  XX", "X  XX"}},
      {'/', {"    X", "   X ", "   X ", "  X  ", " X   ", " X   ", "X    "}},
      {'(', {"   X ", "  X  ", " X   ", " X   ", " X   ", "  X  ", "   X "}},
      {')', {" X   ", "  X  ", "   X ", "   X ", "   X ", "  X  ", " X   "}},
      {':', {"     ", " XX  ", " XX  ", "     ", " XX  ", " XX  ", "     "}},
      {'=', {"     ", "     ", "XXXXX", "     ", "XXXXX", "     ", "     "}},
      {'[', {" XXX ", " X   ", " X   ", " X   ", " X   ", " X   ", " XXX "}},
      {']', {" XXX ", "   X ", "   X ", "   X ", "   X ", "   X ", " XXX "}},
      {'*', {"     ", "X X X", " XXX ", "XXXXX", " XXX ", "X X X", "     "}},
      {'#', {" X X ", "XXXXX", " X X ", " X X ", " X X ", "XXXXX", " X X "}},
  };
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  for (const auto& g : table)
    if (g.c == c) return &g;
  return nullptr;
}

inline void png_put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

inline void png_chunk(std::string& out, const char type[4], const std::string& data) {
  png_put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.append(type, 4);
  out += data;
  const auto crc = ::crc32(
      0L, reinterpret_cast<const Bytef*>(out.data() + crc_start),
      static_cast<uInt>(out.size() - crc_start));
  png_put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

class Canvas {
 public:
  Canvas(int w, int h, Rgb background = {255, 255, 255})
      : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3) {
    for (int i = 0; i < w * h; ++i) {
      px_[3 * static_cast<std::size_t>(i)] = background.r;
      px_[3 * static_cast<std::size_t>(i) + 1] = background.g;
      px_[3 * static_cast<std::size_t>(i) + 2] = background.b;
    }
  }

  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
    px_[i] = c.r;
    px_[i + 1] = c.g;
    px_[i + 2] = c.b;
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

  void disc(int cx, int cy, int radius, Rgb c) {
    for (int y = -radius; y <= radius; ++y)
      for (int x = -radius; x <= radius; ++x)
        if (x * x + y * y <= radius * radius) set(cx + x, cy + y, c);
  }

  void text(int x, int y, const std::string& s, Rgb c, int scale = 1) {
    int cx = x;
    for (char ch : s) {
      const detail::Glyph* g = detail::find_glyph(ch);
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col) {
          const bool on = g ? g->rows[row][col] == 'X'
                            : (row == 0 || row == 6 || col == 0 || col == 4);
          if (!on) continue;
          for (int sy = 0; sy < scale; ++sy)
            for (int sx = 0; sx < scale; ++sx)
              set(cx + col * scale + sx, y + row * scale + sy, c);
        }
      cx += 6 * scale;
    }
  }

  static int text_width(const std::string& s, int scale = 1) {
    return static_cast<int>(s.size()) * 6 * scale;
  }

  void save_png(const std::string& path) const {
    // raw scanlines, filter byte 0 per row
    std::string raw;
    raw.reserve(static_cast<std::size_t>(h_) * (1 + static_cast<std::size_t>(w_) * 3));
    for (int y = 0; y < h_; ++y) {
      raw.push_back('\0');
      raw.append(reinterpret_cast<const char*>(px_.data() +
                                               static_cast<std::size_t>(y) * w_ * 3),
                 static_cast<std::size_t>(w_) * 3);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<Bytef> comp(comp_len);
    if (compress2(comp.data(), &comp_len,
                  reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
      throw std::runtime_error("save_png: deflate failed");

    std::string out;
    out += "\x89PNG\r\n\x1a\n";
    std::string ihdr;
    detail::png_put_be32(ihdr, static_cast<std::uint32_t>(w_));
    detail::png_put_be32(ihdr, static_cast<std::uint32_t>(h_));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT",
                      std::string(reinterpret_cast<const char*>(comp.data()),
                                  comp_len));
    detail::png_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(IoError::Kind::open_failed, "save_png: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError(IoError::Kind::open_failed, "save_png: write failed " + path);
  }

 private:
  int w_, h_;
  std::vector<unsigned char> px_;
};

// ---- line / scatter chart ----------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> xs, ys;
  bool points_only = false;
};

inline Rgb palette(std::size_t i) {
  static const std::array<Rgb, 8> colors = {{{31, 119, 180},
                                             {255, 127, 14},
                                             {44, 160, 44},
                                             {214, 39, 40},
                                             {148, 103, 189},
                                             {140, 86, 75},
                                             {23, 190, 207},
                                             {127, 127, 127}}};
  return colors[i % colors.size()];
}

inline std::string tick_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

inline Canvas render_chart(const std::string& title, const std::string& xlabel,
                           const std::string& ylabel,
                           const std::vector<Series>& series, int w = 880,
                           int h = 560) {
  Canvas cv(w, h);
  const Rgb black{0, 0, 0}, grey{200, 200, 200};
  const int ml = 76, mr = 18, mt = 34, mb = 48;
  const int x0 = ml, x1 = w - mr, y0 = h - mb, y1 = mt;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (first) {
        xmin = xmax = s.xs[i];
        ymin = ymax = s.ys[i];
        first = false;
      }
      xmin = std::min(xmin, s.xs[i]);
      xmax = std::max(xmax, s.xs[i]);
      ymin = std::min(ymin, s.ys[i]);
      ymax = std::max(ymax, s.ys[i]);
    }
  if (xmax - xmin < 1e-30) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (ymax - ymin < 1e-30) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) {
    return x0 + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (x1 - x0)));
  };
  auto py = [&](double y) {
    return y0 - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (y0 - y1)));
  };

  // grid + ticks
  for (int t = 0; t <= 4; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 4.0;
    const double yv = ymin + (ymax - ymin) * t / 4.0;
    cv.line(px(xv), y0, px(xv), y1, grey);
    cv.line(x0, py(yv), x1, py(yv), grey);
    const std::string xl = tick_label(xv);
    cv.text(px(xv) - Canvas::text_width(xl) / 2, y0 + 6, xl, black);
    const std::string yl = tick_label(yv);
    cv.text(x0 - 6 - Canvas::text_width(yl), py(yv) - 3, yl, black);
  }
  cv.line(x0, y0, x1, y0, black);
  cv.line(x0, y0, x0, y1, black);
  cv.text((x0 + x1) / 2 - Canvas::text_width(title) / 2, 8, title, black);
  cv.text((x0 + x1) / 2 - Canvas::text_width(xlabel) / 2, h - 16, xlabel, black);
  cv.text(4, y1 - 14, ylabel, black);

  // series + legend
  int ly = y1 + 6;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const Rgb c = palette(si);
    if (!s.points_only)
      for (std::size_t i = 1; i < s.xs.size(); ++i)
        cv.line(px(s.xs[i - 1]), py(s.ys[i - 1]), px(s.xs[i]), py(s.ys[i]), c);
    for (std::size_t i = 0; i < s.xs.size(); ++i)
      cv.disc(px(s.xs[i]), py(s.ys[i]), s.points_only ? 4 : 2, c);
    const int lx = x1 - 120;
    cv.line(lx, ly + 3, lx + 16, ly + 3, c);
    cv.disc(lx + 8, ly + 3, 2, c);
    cv.text(lx + 20, ly, s.name, black);
    ly += 12;
  }
  return cv;
}

}  // namespace ppgkd::plot
