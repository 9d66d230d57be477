#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "ignite/evaluation.hpp"

namespace ignite {

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  throw InvalidArgument("unknown report format '" + s + "' (expected csv or markdown)");
}

namespace {

struct Table {
  std::string name;
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string num(double v) { return fmt::format("{:.4f}", v); }
std::string cell(double mean, double sd) { return fmt::format("{:.4f} ({:.4f})", mean, sd); }

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

template <typename T, typename Key>
std::vector<Key> unique_in_order(const std::vector<T>& items, Key (*key)(const T&)) {
  std::vector<Key> out;
  for (const auto& it : items) {
    Key k = key(it);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

std::vector<Table> build_tables(const EvalReport& r, const ReportOptions& options) {
  std::vector<Table> tables;

  Table pop{"populations", "Population", {"kind", "stratum", "patients", "positives", "prevalence_pct", "excluded"}, {}};
  for (const auto& p : r.populations) {
    const double prev = p.n == 0 ? 0.0 : 100.0 * static_cast<double>(p.positives) / static_cast<double>(p.n);
    pop.rows.push_back({p.kind, p.stratum, std::to_string(p.n), std::to_string(p.positives), fmt::format("{:.2f}", prev),
                        p.excluded ? "yes" : "no"});
  }
  tables.push_back(std::move(pop));

  Table down{"downstream", "Downstream mortality prediction", {"method", "stratum", "seeds", "auroc", "auprc"}, {}};
  using DKey = std::pair<std::string, std::string>;
  const auto keys = unique_in_order<DownstreamCell, DKey>(
      r.downstream, [](const DownstreamCell& c) { return DKey{c.stratum, c.method}; });
  for (const auto& [stratum, method] : keys) {
    std::vector<double> roc, prc;
    for (const auto& c : r.downstream) {
      if (c.stratum == stratum && c.method == method) {
        roc.push_back(c.auroc);
        prc.push_back(c.auprc);
      }
    }
    const auto [rm, rs] = mean_std(roc);
    const auto [pm, ps] = mean_std(prc);
    down.rows.push_back({method, stratum, std::to_string(roc.size()), cell(rm, rs), cell(pm, ps)});
  }
  tables.push_back(std::move(down));

  Table rec{"reconstruction", "Reconstruction", {"method", "mask_rate", "patients", "rmse", "mae"}, {}};
  if (options.weighted_rmse) rec.header.push_back("rmse_weighted");
  for (const auto& c : r.reconstruction) {
    std::vector<std::string> row{c.method, fmt::format("{:.2f}", c.mask_rate), std::to_string(c.score.patients),
                                 cell(c.score.rmse_mean, c.score.rmse_std), cell(c.score.mae_mean, c.score.mae_std)};
    if (options.weighted_rmse) row.push_back(num(c.score.rmse_weighted));
    rec.rows.push_back(std::move(row));
  }
  tables.push_back(std::move(rec));

  Table sig{"significance", "One-sided Wilcoxon signed-rank tests", {"method", "baseline", "stratum", "metric", "p"}, {}};
  for (const auto& c : r.significance) {
    sig.rows.push_back({c.method, c.baseline, c.stratum, c.metric, fmt::format("{:.5f}", c.p)});
  }
  tables.push_back(std::move(sig));
  return tables;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string render_markdown(const EvalReport& report, const ReportOptions& options) {
  std::ostringstream out;
  out << "# Evaluation report\n";
  for (const Table& t : build_tables(report, options)) {
    out << "\n## " << t.title << "\n\n|";
    for (const auto& h : t.header) out << ' ' << h << " |";
    out << "\n|";
    for (std::size_t i = 0; i < t.header.size(); ++i) out << " --- |";
    out << '\n';
    for (const auto& row : t.rows) {
      out << '|';
      for (const auto& v : row) out << ' ' << v << " |";
      out << '\n';
    }
  }
  return out.str();
}

std::map<std::string, std::string> render_csv(const EvalReport& report, const ReportOptions& options) {
  std::map<std::string, std::string> files;
  for (const Table& t : build_tables(report, options)) {
    std::ostringstream out;
    for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << csv_field(t.header[i]);
    out << '\n';
    for (const auto& row : t.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(row[i]);
      out << '\n';
    }
    files[t.name + ".csv"] = out.str();
  }
  return files;
}

std::string render_plot_svg(const PlotSeries& s) {
  constexpr double W = 720, H = 360, left = 60, right = 150, top = 40, bottom = 40;
  const std::size_t T = s.observed.size();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto extend = [&](const std::vector<double>& v) {
    for (double x : v) {
      if (std::isfinite(x)) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
  };
  extend(s.observed);
  extend(s.ground_truth);
  for (const auto& [m, v] : s.imputed) extend(v);
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto px = [&](std::size_t t) {
    return left + (T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.5) * (W - left - right);
  };
  auto py = [&](double v) { return top + (hi - v) / (hi - lo) * (H - top - bottom); };

  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};
  std::ostringstream o;
  o << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)", W, H, W, H)
    << '\n';
  o << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
  o << fmt::format(R"(<text x="{}" y="22" font-family="sans-serif" font-size="14">{} - patient {} ({:.0f}% masked)</text>)",
                   left, svg_escape(s.feature), s.record_id, s.mask_rate * 100.0)
    << '\n';
  o << fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>)", left, H - bottom, W - right, H - bottom)
    << '\n';
  o << fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>)", left, top, left, H - bottom) << '\n';
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    o << fmt::format(R"(<text x="{}" y="{:.1f}" font-family="sans-serif" font-size="10" text-anchor="end">{:.3g}</text>)",
                     left - 6, py(v) + 3, v)
      << '\n';
  }
  o << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">hour</text>)",
                   (left + W - right) / 2, H - 8)
    << '\n';

  int color = 0;
  double legend_y = top + 10;
  for (const auto& [method, values] : s.imputed) {
    const char* c = palette[color++ % 6];
    o << R"(<polyline fill="none" stroke-width="1.5" stroke=")" << c << R"(" points=")";
    for (std::size_t t = 0; t < values.size(); ++t) {
      if (std::isfinite(values[t])) o << fmt::format("{:.1f},{:.1f} ", px(t), py(values[t]));
    }
    o << "\"/>\n";
    o << fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>)", W - right + 10, legend_y,
                     W - right + 30, legend_y, c)
      << '\n';
    o << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>)", W - right + 35,
                     legend_y + 4, svg_escape(method))
      << '\n';
    legend_y += 18;
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (std::isfinite(s.observed[t])) {
      o << fmt::format(R"(<circle cx="{:.1f}" cy="{:.1f}" r="3" fill="black"/>)", px(t), py(s.observed[t])) << '\n';
    }
    if (t < s.ground_truth.size() && std::isfinite(s.ground_truth[t])) {
      o << fmt::format(R"(<rect x="{:.1f}" y="{:.1f}" width="7" height="7" fill="none" stroke="red" stroke-width="1.5"/>)",
                       px(t) - 3.5, py(s.ground_truth[t]) - 3.5)
        << '\n';
    }
  }
  o << fmt::format(R"(<circle cx="{}" cy="{}" r="3" fill="black"/>)", W - right + 20, legend_y) << '\n';
  o << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="11">observed</text>)", W - right + 35,
                   legend_y + 4)
    << '\n';
  legend_y += 18;
  o << fmt::format(R"(<rect x="{}" y="{}" width="7" height="7" fill="none" stroke="red" stroke-width="1.5"/>)",
                   W - right + 16.5, legend_y - 3.5)
    << '\n';
  o << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="11">masked truth</text>)", W - right + 35,
                   legend_y + 4)
    << '\n';
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> emit_report(const EvalReport& report, ReportFormat format,
                                               const std::filesystem::path& out_dir,
                                               const std::optional<std::filesystem::path>& plot_dir,
                                               const ReportOptions& options) {
  report.validate();
  // Render everything before the first write.
  std::map<std::string, std::string> files;
  if (format == ReportFormat::Markdown) {
    files["report.md"] = render_markdown(report, options);
  } else {
    files = render_csv(report, options);
  }
  std::map<std::string, std::string> plots;
  if (plot_dir) {
    for (const auto& s : report.plots) {
      std::string name = fmt::format("patient{}_{}_{:02.0f}pct.svg", s.record_id, s.feature, s.mask_rate * 100.0);
      std::replace_if(name.begin(), name.end(), [](char c) { return c == '/' || c == ' '; }, '_');
      plots[name] = render_plot_svg(s);
    }
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw InvalidArgument("cannot create '" + out_dir.string() + "': " + ec.message());
  if (plot_dir) {
    std::filesystem::create_directories(*plot_dir, ec);
    if (ec) throw InvalidArgument("cannot create '" + plot_dir->string() + "': " + ec.message());
  }
  std::vector<std::filesystem::path> written;
  for (const auto& [name, text] : files) {
    write_file_atomic(out_dir / name, text);
    written.push_back(out_dir / name);
  }
  for (const auto& [name, text] : plots) {
    write_file_atomic(*plot_dir / name, text);
    written.push_back(*plot_dir / name);
  }
  return written;
}

}  // namespace ignite
