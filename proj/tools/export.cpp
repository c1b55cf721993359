#include "export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "awada/pipeline.hpp"
#include "awada/text.hpp"

namespace fs = std::filesystem;

namespace awada::cli {

namespace {

constexpr int kWidth = 480;
constexpr int kHeight = 360;
constexpr int kMargin = 48;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) { return format_double(v); }

// Fixed three-decimal text for coordinates keeps the SVG compact.
std::string coord(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << v;
  return os.str();
}

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

// A CSV field never needs quoting unless it holds a comma, quote or newline.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Canvas {
  std::ostringstream svg;
  double x_max = 1, y_max = 1;

  Canvas(const std::string& title, const std::string& x_label, const std::string& y_label, double xm, double ym)
      : x_max(xm), y_max(ym) {
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
        << "</text>\n"
        << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin / 2
        << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin / 2 << "\" x2=\"" << kMargin << "\" y2=\""
        << kHeight - kMargin << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
        << escape(x_label) << "</text>\n"
        << "<text x=\"14\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n";
    for (int t = 0; t <= 4; ++t) {
      const double fx = t / 4.0;
      svg << "<text x=\"" << coord(px(fx * x_max)) << "\" y=\"" << kHeight - kMargin + 14
          << "\" text-anchor=\"middle\">" << num(fx * x_max) << "</text>\n"
          << "<text x=\"" << kMargin - 4 << "\" y=\"" << coord(py(fx * y_max) + 4) << "\" text-anchor=\"end\">"
          << num(fx * y_max) << "</text>\n";
    }
  }

  double px(double x) const { return kMargin + (kWidth - 1.5 * kMargin) * (x / x_max); }
  double py(double y) const { return kHeight - kMargin - (kHeight - 1.5 * kMargin) * (y / y_max); }

  void legend(int i, const std::string& label) {
    const int y = kMargin / 2 + 14 * i + 6;
    svg << "<rect x=\"" << kWidth - 150 << "\" y=\"" << y - 8 << "\" width=\"10\" height=\"10\" fill=\""
        << kPalette[i % 8] << "\"/>\n<text x=\"" << kWidth - 136 << "\" y=\"" << y << "\">" << escape(label)
        << "</text>\n";
  }

  std::string finish() {
    svg << "</svg>\n";
    return svg.str();
  }
};

// Axis limit: the largest value rounded up to a tenth, at least 0.1.
double axis_limit(double v) { return std::max(0.1, std::ceil(v * 10.0 - 1e-9) / 10.0); }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

}  // namespace

std::vector<fs::path> export_plots(const std::vector<fs::path>& report_paths, const fs::path& out) {
  if (report_paths.empty()) return {};
  struct Named {
    std::string name;
    EvalReport report;
  };
  std::vector<Named> reports;
  for (const auto& p : report_paths) reports.push_back({p.stem().string(), read_report(p)});
  fs::create_directories(out);
  std::vector<fs::path> written;
  auto emit = [&](const std::string& file, const std::string& body) {
    write_text(out / file, body);
    written.push_back(out / file);
  };

  {
    std::ostringstream csv;
    csv << "report,seed,recall,precision\n";
    Canvas c("Precision-recall on target", "recall", "precision", 1.0, 1.0);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      c.legend(static_cast<int>(i), reports[i].name);
      for (const auto& s : reports[i].report.seeds) {
        std::ostringstream pts;
        double r0 = 0;
        pts << coord(c.px(0)) << ',' << coord(c.py(s.pr.empty() ? 0 : s.pr.front().precision));
        for (const auto& p : s.pr) {
          pts << ' ' << coord(c.px(r0)) << ',' << coord(c.py(p.precision)) << ' ' << coord(c.px(p.recall)) << ','
              << coord(c.py(p.precision));
          r0 = p.recall;
          csv << csv_field(reports[i].name) << ',' << s.seed << ',' << num(p.recall) << ',' << num(p.precision)
              << "\n";
        }
        c.svg << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kPalette[i % 8] << "\" points=\""
              << pts.str() << "\"/>\n";
      }
    }
    emit("pr_curves.csv", csv.str());
    emit("pr_curves.svg", c.finish());
  }

  {
    std::ostringstream csv;
    csv << "report,seed,fg_l1,bg_l1,ap\n";
    double x_hi = 0;
    for (const auto& r : reports) {
      for (const auto& s : r.report.seeds) x_hi = std::max(x_hi, s.fg_l1);
    }
    Canvas c("Per-seed results", "foreground L1 to oracle", "AP", axis_limit(x_hi), 1.0);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      c.legend(static_cast<int>(i), reports[i].name);
      for (const auto& s : reports[i].report.seeds) {
        c.svg << "<circle r=\"3.5\" fill=\"" << kPalette[i % 8] << "\" cx=\"" << coord(c.px(s.fg_l1)) << "\" cy=\""
              << coord(c.py(s.ap)) << "\"/>\n";
        csv << csv_field(reports[i].name) << ',' << s.seed << ',' << num(s.fg_l1) << ',' << num(s.bg_l1) << ','
            << num(s.ap) << "\n";
      }
    }
    emit("seeds.csv", csv.str());
    emit("seeds.svg", c.finish());
  }

  {
    std::ostringstream csv;
    csv << "report,fg_l1,bg_l1\n";
    double hi = 0;
    for (const auto& r : reports) {
      hi = std::max({hi, r.report.mean(&SeedResult::fg_l1), r.report.mean(&SeedResult::bg_l1)});
    }
    Canvas c("Mean L1 to oracle", "report", "L1", static_cast<double>(reports.size()), axis_limit(hi));
    c.legend(0, "foreground");
    c.legend(1, "background");
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const double fg = reports[i].report.mean(&SeedResult::fg_l1);
      const double bg = reports[i].report.mean(&SeedResult::bg_l1);
      const double slot = c.px(i + 1.0) - c.px(i);
      const double x0 = c.px(static_cast<double>(i)) + slot * 0.15;
      const double bw = slot * 0.35;
      for (int k = 0; k < 2; ++k) {
        const double v = k == 0 ? fg : bg;
        c.svg << "<rect fill=\"" << kPalette[k] << "\" x=\"" << coord(x0 + k * bw) << "\" y=\"" << coord(c.py(v))
              << "\" width=\"" << coord(bw) << "\" height=\"" << coord(c.py(0) - c.py(v)) << "\"/>\n";
      }
      c.svg << "<text x=\"" << coord(x0 + bw) << "\" y=\"" << kHeight - kMargin + 26 << "\" text-anchor=\"middle\">"
            << escape(reports[i].name) << "</text>\n";
      csv << csv_field(reports[i].name) << ',' << num(fg) << ',' << num(bg) << "\n";
    }
    emit("l1_bars.csv", csv.str());
    emit("l1_bars.svg", c.finish());
  }
  return written;
}

}  // namespace awada::cli
