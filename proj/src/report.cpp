#include "modalgraph/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "modalgraph/pipeline.hpp"

namespace fs = std::filesystem;

namespace modalgraph {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
const char* colour(std::size_t i) { return kPalette[i % 8]; }

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '&') o += "&amp;";
    else if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else o += c;
  }
  return o;
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

class Canvas {
 public:
  Canvas(double w, double h) : w_(w), h_(h) {}

  void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "middle",
            double rotate = 0.0) {
    os_ << "<text x='" << x << "' y='" << y << "' font-size='" << size << "' text-anchor='" << anchor << "'";
    if (rotate != 0.0) os_ << " transform='rotate(" << rotate << ' ' << x << ' ' << y << ")'";
    os_ << " font-family='sans-serif'>" << esc(s) << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const char* stroke = "#000", double width = 1.0,
            const char* dash = nullptr) {
    os_ << "<line x1='" << x1 << "' y1='" << y1 << "' x2='" << x2 << "' y2='" << y2 << "' stroke='" << stroke
        << "' stroke-width='" << width << "'";
    if (dash) os_ << " stroke-dasharray='" << dash << "'";
    os_ << "/>\n";
  }
  void rect(double x, double y, double w, double h, const char* fill, const char* stroke = "none") {
    os_ << "<rect x='" << x << "' y='" << y << "' width='" << std::max(0.0, w) << "' height='" << std::max(0.0, h)
        << "' fill='" << fill << "' stroke='" << stroke << "'/>\n";
  }
  void circle(double x, double y, double r, const char* fill, const char* stroke = "none") {
    os_ << "<circle cx='" << x << "' cy='" << y << "' r='" << r << "' fill='" << fill << "' stroke='" << stroke
        << "'/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke, double width = 1.2) {
    if (pts.empty()) return;
    os_ << "<polyline fill='none' stroke='" << stroke << "' stroke-width='" << width << "' points='";
    for (const auto& [x, y] : pts) os_ << x << ',' << y << ' ';
    os_ << "'/>\n";
  }
  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw Error("cannot write '" + path + "'");
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w_ << "' height='" << h_ << "' viewBox='0 0 " << w_
      << ' ' << h_ << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << os_.str() << "</svg>\n";
  }

 private:
  double w_, h_;
  std::ostringstream os_;
};

// Plot area inside a canvas with linear (or log10) data-to-pixel maps.
struct Axes {
  double x0, y0, w, h;  // pixel box, y0 = top
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool log_y = false;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const {
    const double v = log_y ? std::log10(std::max(y, 1e-300)) : y;
    return y0 + h - (v - ymin) / (ymax - ymin) * h;
  }
  void fit(const std::vector<svg::Series>& s) {
    double a = 1e300, b = -1e300, c = 1e300, d = -1e300;
    for (const auto& ser : s) {
      for (double x : ser.x) a = std::min(a, x), b = std::max(b, x);
      for (double y : ser.y) {
        if (!std::isfinite(y) || (log_y && y <= 0)) continue;
        const double v = log_y ? std::log10(y) : y;
        c = std::min(c, v), d = std::max(d, v);
      }
    }
    if (a > b) a = 0, b = 1;
    if (c > d) c = 0, d = 1;
    if (b - a < 1e-12) b = a + 1;
    if (d - c < 1e-12) d = c + 1, c -= 1;
    const double pad = 0.05 * (d - c);
    xmin = a, xmax = b, ymin = c - pad, ymax = d + pad;
  }
  void frame(Canvas& cv, const std::string& xlabel, const std::string& ylabel, bool ticks = true) const {
    cv.rect(x0, y0, w, h, "none", "#444");
    if (ticks) {
      for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        cv.text(px(fx), y0 + h + 13, fmt(fx), 9);
        const double yy = y0 + h - h * i / 4.0;
        cv.text(x0 - 4, yy + 3, log_y ? "1e" + fmt(fy) : fmt(fy), 9, "end");
      }
    }
    if (!xlabel.empty()) cv.text(x0 + w / 2, y0 + h + 27, xlabel, 11);
    if (!ylabel.empty()) cv.text(x0 - 40, y0 + h / 2, ylabel, 11, "middle", -90);
  }
};

}  // namespace

namespace svg {

void line_plot(const std::string& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series, bool log_y) {
  Canvas cv(720, 440);
  Axes ax{70, 40, 600, 330};
  ax.log_y = log_y;
  ax.fit(series);
  cv.text(360, 22, title, 14);
  ax.frame(cv, xlabel, ylabel);
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i)
      if (std::isfinite(series[s].y[i]) && (!log_y || series[s].y[i] > 0))
        pts.emplace_back(ax.px(series[s].x[i]), ax.py(series[s].y[i]));
    cv.polyline(pts, colour(s));
    cv.line(560, 55 + 16 * s, 580, 55 + 16 * s, colour(s), 2);
    cv.text(585, 59 + 16 * s, series[s].name, 11, "start");
  }
  cv.save(path);
}

void bar_chart(const std::string& path, const std::string& title, const std::vector<std::string>& categories,
               const std::vector<Series>& groups, const std::string& ylabel) {
  Canvas cv(720, 440);
  Axes ax{70, 40, 600, 330};
  double top = 0.0;
  for (const auto& g : groups)
    for (double v : g.y)
      if (std::isfinite(v)) top = std::max(top, v);
  ax.xmin = 0, ax.xmax = 1, ax.ymin = 0, ax.ymax = top > 0 ? top * 1.1 : 1.0;
  cv.text(360, 22, title, 14);
  ax.frame(cv, "", ylabel, false);
  for (int i = 0; i <= 4; ++i) {
    const double v = ax.ymax * i / 4.0;
    cv.text(ax.x0 - 4, ax.py(v) + 3, fmt(v), 9, "end");
  }
  const double slot = ax.w / std::max<std::size_t>(1, categories.size());
  const double bw = 0.8 * slot / std::max<std::size_t>(1, groups.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    cv.text(ax.x0 + slot * (c + 0.5), ax.y0 + ax.h + 14, categories[c], 10);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (c >= groups[g].y.size() || !std::isfinite(groups[g].y[c])) continue;
      const double x = ax.x0 + slot * c + 0.1 * slot + bw * g;
      cv.rect(x, ax.py(groups[g].y[c]), bw * 0.95, ax.y0 + ax.h - ax.py(groups[g].y[c]), colour(g));
    }
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    cv.rect(560, 48 + 16 * g, 12, 10, colour(g));
    cv.text(577, 57 + 16 * g, groups[g].name, 11, "start");
  }
  cv.save(path);
}

void histograms(const std::string& path, const std::string& title, const std::vector<Series>& panels, int bins,
                const std::string& xlabel) {
  const double pw = 260, ph = 200;
  const double width = 60 + pw * std::max<std::size_t>(1, panels.size());
  Canvas cv(width, ph + 100);
  cv.text(width / 2, 22, title, 14);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    std::vector<double> v;
    for (double y : panels[p].y)
      if (std::isfinite(y)) v.push_back(y);
    Axes ax{60 + pw * p, 50, pw - 50, ph};
    double lo = v.empty() ? 0 : *std::min_element(v.begin(), v.end());
    double hi = v.empty() ? 1 : *std::max_element(v.begin(), v.end());
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    std::vector<int> counts(bins, 0);
    for (double y : v) counts[std::min(bins - 1, static_cast<int>((y - lo) / (hi - lo) * bins))]++;
    ax.xmin = lo, ax.xmax = hi, ax.ymin = 0;
    ax.ymax = std::max(1, *std::max_element(counts.begin(), counts.end())) * 1.1;
    ax.frame(cv, xlabel, p == 0 ? "count" : "");
    for (int b = 0; b < bins; ++b) {
      const double x1 = ax.px(lo + (hi - lo) * b / bins), x2 = ax.px(lo + (hi - lo) * (b + 1) / bins);
      cv.rect(x1, ax.py(counts[b]), x2 - x1 - 1, ax.y0 + ax.h - ax.py(counts[b]), colour(p));
    }
    cv.text(ax.x0 + ax.w / 2, ax.y0 - 6, panels[p].name + " (n=" + std::to_string(v.size()) + ")", 11);
  }
  cv.save(path);
}

}  // namespace svg

void decomposition_panels(const std::string& path, const PanelData& d) {
  const int P = static_cast<int>(d.Q.rows());
  const double rh = 150, cw = 300;
  Canvas cv(3 * cw + 40, P * rh + 60);
  cv.text((3 * cw + 40) / 2, 20, "graph " + std::to_string(d.id) + ": modal responses, PSD, mode shapes", 14);
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& n : d.truss.nodes)
    xmin = std::min(xmin, n.x), xmax = std::max(xmax, n.x), ymin = std::min(ymin, n.y), ymax = std::max(ymax, n.y);
  for (int p = 0; p < P; ++p) {
    const double top = 40 + p * rh;
    // response
    svg::Series s{"q", {}, {}};
    for (Eigen::Index t = 0; t < d.Q.cols(); ++t) {
      s.x.push_back(t / d.fs_hz);
      s.y.push_back(d.Q(p, t));
    }
    Axes a1{60, top, cw - 80, rh - 50};
    a1.fit({s});
    a1.frame(cv, p + 1 == P ? "time (s)" : "", "q" + std::to_string(p + 1));
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts.emplace_back(a1.px(s.x[i]), a1.py(s.y[i]));
    cv.polyline(pts, colour(p), 0.6);
    // PSD with reference markers
    const Vector row = d.Q.row(p).transpose();
    const auto spec = psd(std::span<const double>(row.data(), row.size()), d.fs_hz);
    svg::Series ps{"psd", spec.freq_hz, spec.power};
    Axes a2{cw + 60, top, cw - 80, rh - 50};
    a2.log_y = true;
    a2.fit({ps});
    a2.frame(cv, p + 1 == P ? "frequency (Hz)" : "", "PSD");
    pts.clear();
    for (std::size_t i = 0; i < ps.x.size(); ++i)
      if (ps.y[i] > 0) pts.emplace_back(a2.px(ps.x[i]), a2.py(ps.y[i]));
    cv.polyline(pts, colour(p), 0.8);
    for (double f : d.reference_hz)
      if (f >= a2.xmin && f <= a2.xmax) cv.line(a2.px(f), a2.y0, a2.px(f), a2.y0 + a2.h, "#888", 0.8, "3,3");
    // shape over topology: node displaced vertically by the shape value
    Axes a3{2 * cw + 40, top + 5, cw - 50, rh - 60};
    a3.xmin = xmin, a3.xmax = xmax, a3.ymin = ymin - 0.35 * (ymax - ymin), a3.ymax = ymax + 0.35 * (ymax - ymin);
    const double amp = 0.3 * (ymax - ymin);
    for (const auto& [i, j] : d.truss.edges) {
      const auto &ni = d.truss.nodes[i], &nj = d.truss.nodes[j];
      cv.line(a3.px(ni.x), a3.py(ni.y), a3.px(nj.x), a3.py(nj.y), "#ccc", 0.6);
      cv.line(a3.px(ni.x), a3.py(ni.y + amp * d.Phi(i, p)), a3.px(nj.x), a3.py(nj.y + amp * d.Phi(j, p)), colour(p),
              0.9);
    }
    for (int i = 0; i < d.truss.node_count(); ++i) {
      const auto& n = d.truss.nodes[i];
      const bool measured = i < static_cast<int>(d.mask.size()) && d.mask[i];
      cv.circle(a3.px(n.x), a3.py(n.y + amp * d.Phi(i, p)), measured ? 3.5 : 1.5, measured ? "#000" : colour(p));
    }
  }
  cv.save(path);
}

namespace {

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << body;
}

std::vector<double> mean_mac_per_mode(const IdentificationReport& r, const std::string& group) {
  std::vector<double> out;
  for (int m = 0; m < r.n_target; ++m) out.push_back(r.stat(group, Metric::mac, m).mean);
  return out;
}

}  // namespace

std::vector<std::string> render_report(const RunConfig& cfg, const std::string& dataset_path) {
  const ArtifactPaths ap{cfg.out_dir};
  fs::create_directories(ap.figures());
  fs::create_directories(ap.tables());
  std::vector<std::string> files;
  auto emit = [&](const std::string& p) { files.push_back(p); };

  if (fs::exists(ap.train_log())) {
    const auto log = TrainLog::read_csv(ap.train_log());
    svg::Series tr{"train", {}, {}}, va{"validation", {}, {}}, rec{"train reconstruction", {}, {}},
        ind{"train independence (R + Rf)", {}, {}};
    for (const auto& e : log.epochs) {
      tr.x.push_back(e.epoch), tr.y.push_back(e.train.total);
      va.x.push_back(e.epoch), va.y.push_back(e.validation.total);
      rec.x.push_back(e.epoch), rec.y.push_back(e.train.reconstruction);
      ind.x.push_back(e.epoch), ind.y.push_back(e.train.time_independence + e.train.spectral_independence);
    }
    const std::string p = ap.figures() + "/loss_curves.svg";
    svg::line_plot(p, "training loss", "epoch", "loss", {tr, va, rec, ind}, true);
    emit(p);
  }

  std::vector<IdentificationReport> methods;
  for (const char* m : {"proposed", "efdd", "ssi"})
    if (fs::exists(ap.report(m))) methods.push_back(read_report(ap.report(m)));

  const bool have_data = fs::exists(dataset_path);
  Dataset data;
  if (have_data) data = load(dataset_path);

  if (have_data) {
    std::vector<svg::Series> freq, damp;
    const int nm = cfg.identify.n_target;
    for (int m = 0; m < nm; ++m) {
      freq.push_back({"mode " + std::to_string(m + 1), {}, {}});
      damp.push_back({"mode " + std::to_string(m + 1), {}, {}});
    }
    bool any = false;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data.has_reference(i)) continue;
      const auto& ref = data.reference(i);
      for (int m = 0; m < nm && m < ref.mode_count(); ++m) {
        freq[m].y.push_back(ref.frequencies_hz[m]);
        damp[m].y.push_back(100.0 * ref.damping_ratios[m]);
        any = true;
      }
    }
    if (any) {
      std::string p = ap.figures() + "/population_frequencies.svg";
      svg::histograms(p, "population natural frequencies", freq, 10, "Hz");
      emit(p);
      p = ap.figures() + "/population_damping.svg";
      svg::histograms(p, "population damping ratios", damp, 10, "%");
      emit(p);
    }
  }

  const std::string dec_path = cfg.decomposition_in.empty() ? ap.decomposition() : cfg.decomposition_in;
  if (have_data && fs::exists(dec_path)) {
    const auto dec = load_decomposition(dec_path);
    // first training structure, else the first record
    const DecompositionRecord* pick = nullptr;
    std::size_t pos = 0;
    for (const auto& r : dec.records) {
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.graphs[i].id != r.id) continue;
        if (!pick || (data.graphs[i].split == Split::train && data.graphs[pos].split != Split::train)) {
          pick = &r;
          pos = i;
        }
      }
    }
    if (pick && data.graphs[pos].signals) {
      PanelData pd{pick->id, pick->modal_responses, pick->mode_shapes, pick->fs_hz, data.graphs[pos].truss,
                   data.graphs[pos].signals->mask, {}};
      if (data.has_reference(pos)) pd.reference_hz = data.reference(pos).frequencies_hz;
      const std::string p = ap.figures() + "/decomposition_graph" + std::to_string(pick->id) + ".svg";
      decomposition_panels(p, pd);
      emit(p);
    }
  }

  for (const auto& r : methods) {
    const std::string t = ap.tables() + "/table_" + r.method + ".txt";
    write_text(t, format_table(r));
    emit(t);
    std::vector<svg::Series> errs;
    for (int m = 0; m < r.n_target; ++m) {
      svg::Series s{"mode " + std::to_string(m + 1), {}, {}};
      for (const auto& st : r.structures)
        for (const auto& mm : st.matches)
          if (mm.reference_mode == m) s.y.push_back(mm.frequency_error_pct);
      errs.push_back(s);
    }
    const std::string p = ap.figures() + "/frequency_errors_" + r.method + ".svg";
    svg::histograms(p, r.method + ": frequency error", errs, 10, "%");
    emit(p);
  }

  if (!methods.empty()) {
    std::vector<std::string> cats;
    for (int m = 0; m < cfg.identify.n_target; ++m) cats.push_back("mode " + std::to_string(m + 1));
    std::vector<svg::Series> groups;
    std::ostringstream csv;
    csv.precision(10);
    csv << "method,group,mode,mean_mac,mean_abs_frequency_error_pct,count\n";
    for (const auto& r : methods) {
      groups.push_back({r.method, {}, mean_mac_per_mode(r, "train")});
      for (const char* g : {"train", "held_out"}) {
        if (!r.has_group(g)) continue;
        for (int m = 0; m < r.n_target; ++m)
          csv << r.method << ',' << g << ',' << m + 1 << ',' << r.stat(g, Metric::mac, m).mean << ','
              << r.stat(g, Metric::frequency_error, m).mean << ',' << r.stat(g, Metric::mac, m).count << '\n';
      }
    }
    const std::string t = ap.tables() + "/method_comparison.csv";
    write_text(t, csv.str());
    emit(t);
    const std::string p = ap.figures() + "/method_comparison.svg";
    svg::bar_chart(p, "mean MAC per mode (train structures)", cats, groups, "MAC");
    emit(p);
  }

  const std::string summary = cfg.out_dir + "/ablation/summary.json";
  if (fs::exists(summary)) {
    std::ifstream f(summary);
    const auto j = nlohmann::json::parse(f);
    std::vector<std::string> cats;
    svg::Series mac{"mode-1 mean MAC", {}, {}}, corr{"mean off-diagonal |R(Q)|", {}, {}};
    std::ostringstream csv;
    csv.precision(10);
    csv << "variant,mode1_mean_mac_train,mean_offdiagonal_correlation\n";
    for (const auto& e : j) {
      const double m1 = e["mode1_mean_mac_train"].is_null() ? kNaN : e["mode1_mean_mac_train"].get<double>();
      cats.push_back(e["variant"].get<std::string>());
      mac.y.push_back(m1);
      corr.y.push_back(e["mean_offdiagonal_correlation"].get<double>());
      csv << cats.back() << ',' << m1 << ',' << corr.y.back() << '\n';
    }
    const std::string t = ap.tables() + "/ablation.csv";
    write_text(t, csv.str());
    emit(t);
    const std::string p = ap.figures() + "/ablation.svg";
    svg::bar_chart(p, "ablation variants", cats, {mac, corr}, "");
    emit(p);
  }
  return files;
}

}  // namespace modalgraph
