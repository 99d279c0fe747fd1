#include "vidcl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/metrics.hpp"

namespace vidcl::report {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Minimal raster canvas (PPM output) with a 5x7 bitmap font.

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kBlack{20, 20, 20};
constexpr Rgb kGrey{210, 210, 210};
constexpr Rgb kPalette[] = {
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
    {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
};

const std::uint8_t* glyph(char c) {
  static const struct {
    char ch;
    std::uint8_t rows[7];
  } kFont[] = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
      {'b', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E}},
      {'c', {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
      {'d', {0x01, 0x01, 0x0D, 0x13, 0x11, 0x11, 0x0F}},
      {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
      {'f', {0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08}},
      {'g', {0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
      {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
      {'j', {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0C}},
      {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
      {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'m', {0x00, 0x00, 0x1A, 0x15, 0x15, 0x11, 0x11}},
      {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
      {'p', {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10}},
      {'q', {0x00, 0x00, 0x0D, 0x13, 0x0F, 0x01, 0x01}},
      {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'s', {0x00, 0x00, 0x0E, 0x10, 0x0E, 0x01, 0x1E}},
      {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}},
      {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D}},
      {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'w', {0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0A}},
      {'x', {0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11}},
      {'y', {0x00, 0x00, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
      {'z', {0x00, 0x00, 0x1F, 0x02, 0x04, 0x08, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
  };
  for (const auto& g : kFont)
    if (g.ch == c) return g.rows;
  return nullptr;
}

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> px;

  Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 255) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    auto* p = px.data() + (static_cast<std::size_t>(y) * w + x) * 3;
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
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

  void text(int x, int y, const std::string& s, Rgb c) {
    int cx = x;
    for (char raw : s) {
      const char ch = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
      if (const auto* rows = glyph(ch)) {
        for (int ry = 0; ry < 7; ++ry)
          for (int rx = 0; rx < 5; ++rx)
            if (rows[ry] & (1 << (4 - rx))) set(cx + rx, y + ry, c);
      }
      cx += 6;
    }
  }

  void save_ppm(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write plot '" + path + "'");
    out << "P6\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(px.data()),
              static_cast<std::streamsize>(px.size()));
  }
};

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

void curve_plot(const std::vector<RunSummary>& runs, const std::string& path) {
  const int W = 640, H = 420, L = 60, R = 20, T = 24 + 12 * static_cast<int>(runs.size()),
            B = 40;
  Canvas cv(W, H);
  std::size_t max_len = 1;
  for (const auto& r : runs) max_len = std::max(max_len, r.curve.size());

  const auto px_x = [&](double tasks_done) {
    return L + static_cast<int>((tasks_done - 1) / std::max<double>(1.0, max_len - 1) *
                                (W - L - R));
  };
  const auto px_y = [&](double acc) {
    return H - B - static_cast<int>(acc * (H - T - B));
  };

  for (int i = 0; i <= 4; ++i) {  // horizontal grid every 0.25
    const double acc = i / 4.0;
    cv.line(L, px_y(acc), W - R, px_y(acc), kGrey);
    char lbl[16];
    std::snprintf(lbl, sizeof(lbl), "%.2f", acc);
    cv.text(L - 34, px_y(acc) - 3, lbl, kBlack);
  }
  for (std::size_t t = 1; t <= max_len; ++t) {
    cv.line(px_x(static_cast<double>(t)), H - B, px_x(static_cast<double>(t)), T, kGrey);
    cv.text(px_x(static_cast<double>(t)) - 3, H - B + 6, std::to_string(t), kBlack);
  }
  cv.line(L, T, L, H - B, kBlack);
  cv.line(L, H - B, W - R, H - B, kBlack);
  cv.text(L, H - 14, "average accuracy vs tasks learned", kBlack);

  for (std::size_t r = 0; r < runs.size(); ++r) {
    const Rgb c = kPalette[r % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const auto& curve = runs[r].curve;
    for (std::size_t i = 1; i < curve.size(); ++i)
      cv.line(px_x(static_cast<double>(i)), px_y(curve[i - 1]),
              px_x(static_cast<double>(i + 1)), px_y(curve[i]), c);
    for (std::size_t i = 0; i < curve.size(); ++i)
      cv.fill_rect(px_x(static_cast<double>(i + 1)) - 1, px_y(curve[i]) - 1,
                   px_x(static_cast<double>(i + 1)) + 1, px_y(curve[i]) + 1, c);
    cv.fill_rect(L + 4, 8 + 12 * static_cast<int>(r), L + 12, 14 + 12 * static_cast<int>(r), c);
    cv.text(L + 18, 5 + 12 * static_cast<int>(r), runs[r].run_id, kBlack);
  }
  cv.save_ppm(path);
}

void per_class_plot(const RunSummary& a, const RunSummary& b,
                    const std::vector<int>& order, const std::string& path) {
  const int rows = static_cast<int>(order.size());
  const int W = 560, L = 80, R = 20, T = 36, row_h = 18;
  const int H = T + rows * row_h + 24;
  Canvas cv(W, H);

  cv.fill_rect(L, 8, L + 8, 14, kPalette[0]);
  cv.text(L + 14, 5, a.run_id, kBlack);
  cv.fill_rect(L + 240, 8, L + 248, 14, kPalette[1]);
  cv.text(L + 254, 5, b.run_id, kBlack);

  const auto px_w = [&](double acc) {
    return static_cast<int>(acc * (W - L - R));
  };
  for (int i = 0; i < rows; ++i) {
    const int cls = order[i];
    const int y = T + i * row_h;
    cv.text(8, y + 4, "class " + std::to_string(cls), kBlack);
    const double va = a.per_class.count(cls) ? a.per_class.at(cls) : 0.0;
    const double vb = b.per_class.count(cls) ? b.per_class.at(cls) : 0.0;
    cv.fill_rect(L, y + 2, L + px_w(va), y + 8, kPalette[0]);
    cv.fill_rect(L, y + 9, L + px_w(vb), y + 15, kPalette[1]);
  }
  cv.line(L, T - 2, L, H - 20, kBlack);
  cv.text(L, H - 14, "per-class accuracy, 0 to 1", kBlack);
  cv.save_ppm(path);
}

}  // namespace

RunSummary load_run_summary(const std::string& run_dir) {
  if (!fs::exists(run_dir + "/matrix.csv") || !fs::exists(run_dir + "/run_manifest.json"))
    throw DataError("run folder '" + run_dir + "' is missing or incomplete");

  RunSummary s;
  const auto R = metrics::load_accuracy_matrix(run_dir + "/matrix.csv");
  s.acc = metrics::final_average_accuracy(R);
  s.bwf = metrics::backward_forgetting(R);
  s.curve = metrics::accuracy_curve(R);

  std::ifstream in(run_dir + "/run_manifest.json", std::ios::binary);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError(std::string("run manifest parse error: ") + e.what());
  }
  s.run_id = manifest.at("run_id").get<std::string>();
  s.method = manifest.at("method").get<std::string>();
  s.frames_per_video = manifest.at("frames_per_video").get<std::string>();
  s.frame_capacity = manifest.at("frame_capacity").get<std::string>();

  if (fs::exists(run_dir + "/metrics.json")) {
    std::ifstream min(run_dir + "/metrics.json", std::ios::binary);
    json metrics_json;
    min >> metrics_json;
    for (const auto& [cls, acc] : metrics_json.at("per_class").items())
      s.per_class[std::stoi(cls)] = acc.get<double>();
  }
  return s;
}

std::string comparison_table_text(const std::vector<RunSummary>& runs) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %-16s %-20s %-9s %-9s\n", "Model",
                "Frames per video", "Mem. Frame Capacity", "Acc", "BWF");
  out << buf;
  out << std::string(70, '-') << "\n";
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof(buf), "%-12s %-16s %-20s %-9s %-9s\n", r.method.c_str(),
                  r.frames_per_video.c_str(), r.frame_capacity.c_str(),
                  pct(r.acc).c_str(), pct(r.bwf).c_str());
    out << buf;
  }
  return out.str();
}

std::string comparison_table_csv(const std::vector<RunSummary>& runs) {
  std::ostringstream out;
  out << "model, frames_per_video, mem_frame_capacity, acc_pct, bwf_pct\n";
  char buf[160];
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof(buf), "%s, %s, %s, %.2f, %.2f\n", r.method.c_str(),
                  r.frames_per_video.c_str(), r.frame_capacity.c_str(), 100.0 * r.acc,
                  100.0 * r.bwf);
    out << buf;
  }
  return out.str();
}

std::vector<std::string> emit_report(const std::vector<std::string>& run_dirs,
                                     const std::string& out_dir, bool with_plots) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run folder");
  std::vector<RunSummary> runs;
  runs.reserve(run_dirs.size());
  for (const auto& dir : run_dirs) runs.push_back(load_run_summary(dir));

  fs::create_directories(out_dir);
  std::vector<std::string> written;
  auto write_file = [&](const std::string& name, const std::string& content) {
    const std::string path = out_dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
    written.push_back(path);
  };

  write_file("comparison.txt", comparison_table_text(runs));
  write_file("comparison.csv", comparison_table_csv(runs));

  {
    std::ostringstream csv;
    csv << "run_id";
    std::size_t max_len = 0;
    for (const auto& r : runs) max_len = std::max(max_len, r.curve.size());
    for (std::size_t t = 1; t <= max_len; ++t) csv << ", after_task_" << t - 1;
    csv << "\n";
    char buf[40];
    for (const auto& r : runs) {
      csv << r.run_id;
      for (std::size_t t = 0; t < max_len; ++t) {
        csv << ", ";
        if (t < r.curve.size()) {
          std::snprintf(buf, sizeof(buf), "%.17g", r.curve[t]);
          csv << buf;
        }
      }
      csv << "\n";
    }
    write_file("curves.csv", csv.str());
  }
  if (with_plots) {
    curve_plot(runs, out_dir + "/curves.ppm");
    written.push_back(out_dir + "/curves.ppm");
  }

  if (runs.size() >= 2) {
    const auto& a = runs[0];
    const auto& b = runs[1];
    // classes ordered by the second run's accuracy, hardest first
    std::vector<int> order;
    for (const auto& [cls, acc] : b.per_class) order.push_back(cls);
    std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
      return b.per_class.at(lhs) < b.per_class.at(rhs);
    });
    std::ostringstream csv;
    csv << "class, " << a.run_id << ", " << b.run_id << "\n";
    char buf[80];
    for (int cls : order) {
      std::snprintf(buf, sizeof(buf), "%d, %.17g, %.17g\n", cls,
                    a.per_class.count(cls) ? a.per_class.at(cls) : 0.0,
                    b.per_class.at(cls));
      csv << buf;
    }
    write_file("per_class.csv", csv.str());
    if (with_plots) {
      per_class_plot(a, b, order, out_dir + "/per_class.ppm");
      written.push_back(out_dir + "/per_class.ppm");
    }
  }
  return written;
}

}  // namespace vidcl::report
