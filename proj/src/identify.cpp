#include "modalgraph/identify.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace modalgraph {

dsp::Spectrum psd(std::span<const double> q, double fs_hz) { return dsp::periodogram(q, fs_hz); }

PeakInfo pick_frequency(const dsp::Spectrum& s) {
  const auto& p = s.power;
  require(!p.empty(), "pick_frequency: empty spectrum");
  const int n = static_cast<int>(p.size());
  const int k = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  int lo = k, hi = k;
  while (lo > 0 && p[lo - 1] < p[lo]) --lo;
  while (hi + 1 < n && p[hi + 1] < p[hi]) ++hi;
  double secondary = 0.0;
  for (int i = 0; i < n; ++i)
    if (i < lo || i > hi) secondary = std::max(secondary, p[i]);
  PeakInfo out;
  out.bin = k;
  out.frequency_hz = s.freq_hz[k];
  out.magnitude = p[k];
  out.dominance = p[k] + secondary > 0.0 ? p[k] / (p[k] + secondary) : 0.5;
  return out;
}

RdtSignature rdt(std::span<const double> q, double fs_hz, double fn_hint_hz, const RdtParams& p) {
  require(fs_hz > 0.0 && fn_hint_hz > 0.0, "rdt: fs and fn_hint must be positive");
  RdtSignature out;
  const int n = static_cast<int>(q.size());
  const int len = static_cast<int>(std::lround(p.cycles * fs_hz / fn_hint_hz));
  if (n < 2 || len < 2 || len > n) return out;
  const double mean = std::accumulate(q.begin(), q.end(), 0.0) / n;
  double var = 0.0;
  for (double v : q) var += (v - mean) * (v - mean);
  const double sigma = std::sqrt(var / n);
  if (!(sigma > 0.0)) return out;
  const double level = p.trigger_sigma * sigma;

  out.signature.assign(len, 0.0);
  for (int t = 1; t + len <= n; ++t) {
    if (q[t - 1] - mean < level && q[t] - mean >= level) {
      for (int j = 0; j < len; ++j) out.signature[j] += q[t + j] - mean;
      ++out.segments;
    }
  }
  if (out.segments > 0)
    for (double& v : out.signature) v /= out.segments;
  out.available = out.segments >= p.min_segments;
  return out;
}

DampingFit fit_damping(std::span<const double> sig, double /*fs_hz*/, int n_peaks) {
  require(n_peaks >= 2, "fit_damping: need at least 2 peaks");
  std::vector<double> peaks;
  for (std::size_t t = 1; t + 1 < sig.size() && static_cast<int>(peaks.size()) < n_peaks; ++t) {
    if (sig[t] > 0.0 && sig[t] > sig[t - 1] && sig[t] >= sig[t + 1]) {
      // vertex of the parabola through (t-1, t, t+1)
      const double a = sig[t - 1], b = sig[t], c = sig[t + 1];
      const double denom = a - 2.0 * b + c;
      const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
      peaks.push_back(b - 0.25 * (a - c) * shift);
    }
  }
  DampingFit out;
  out.peaks_used = static_cast<int>(peaks.size());
  if (peaks.size() < 3) return out;
  const double k = static_cast<double>(peaks.size() - 1);
  const double delta = std::log(peaks.front() / peaks.back()) / k;
  out.damping_ratio = delta / std::sqrt(4.0 * kPi * kPi + delta * delta);
  out.valid = out.damping_ratio > 0.0 && std::isfinite(out.damping_ratio);
  return out;
}

double mac(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "mac: length mismatch");
  const double aa = a.squaredNorm(), bb = b.squaredNorm();
  require(aa > 0.0 && bb > 0.0, "mac: zero shape vector");
  const double ab = a.dot(b);
  return std::clamp(ab * ab / (aa * bb), 0.0, 1.0);
}

std::vector<SpuriousCandidate> spurious_filter(const Matrix& Q, double fs_hz, const IdentifyParams& p) {
  const int P = static_cast<int>(Q.rows());
  require(p.n_target >= 1, "spurious_filter: n_target must be >= 1");
  require(P >= p.n_target, "spurious_filter: fewer responses than target modes");
  std::vector<SpuriousCandidate> c(P);
  std::vector<double> row(Q.cols());
  double resolution = 0.0;
  for (int i = 0; i < P; ++i) {
    for (Eigen::Index t = 0; t < Q.cols(); ++t) row[t] = Q(i, t);
    const auto s = psd(row, fs_hz);
    resolution = s.resolution();
    c[i].source_index = i;
    c[i].peak = pick_frequency(s);
  }
  std::vector<int> order(P);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (c[a].peak.magnitude != c[b].peak.magnitude) return c[a].peak.magnitude > c[b].peak.magnitude;
    return c[a].peak.dominance > c[b].peak.dominance;
  });
  std::vector<int> kept;
  for (int i : order) {
    if (static_cast<int>(kept.size()) >= p.n_target) break;
    if (c[i].peak.dominance < p.min_dominance) continue;
    if (!(c[i].peak.magnitude > 0.0)) continue;
    if (!kept.empty() && c[i].peak.magnitude < p.magnitude_ratio * c[kept.front()].peak.magnitude) continue;
    bool duplicate = false;
    for (int k : kept)
      if (std::abs(c[k].peak.frequency_hz - c[i].peak.frequency_hz) <= 1.5 * resolution) duplicate = true;
    if (duplicate) continue;
    kept.push_back(i);
  }
  for (int k : kept) c[k].kept = true;
  return c;
}

StructureIdentification identify_structure(const DecompositionResult& d, double fs_hz, const IdentifyParams& p) {
  require(d.modal_responses.rows() == d.mode_shapes.cols(), "identify_structure: Q rows != Phi columns");
  StructureIdentification out;
  const auto cands = spurious_filter(d.modal_responses, fs_hz, p);
  std::vector<double> row(d.modal_responses.cols());
  for (const auto& c : cands) {
    if (!c.kept) continue;
    IdentifiedMode m;
    m.source_index = c.source_index;
    m.frequency_hz = c.peak.frequency_hz;
    m.psd_peak_magnitude = c.peak.magnitude;
    m.dominance = c.peak.dominance;
    m.mode_shape = d.mode_shapes.col(c.source_index);
    Eigen::Index idx = 0;
    const double peak = m.mode_shape.cwiseAbs().maxCoeff(&idx);
    if (peak > 0.0) m.mode_shape /= m.mode_shape(idx);
    for (Eigen::Index t = 0; t < d.modal_responses.cols(); ++t) row[t] = d.modal_responses(c.source_index, t);
    if (m.frequency_hz > 0.0) {
      const auto sig = rdt(row, fs_hz, m.frequency_hz, p.rdt);
      if (sig.available) {
        const auto fit = fit_damping(sig.signature, fs_hz, p.damping_peaks);
        m.damping_ratio = fit.damping_ratio;
        m.damping_valid = fit.valid;
      }
    }
    out.modes.push_back(std::move(m));
  }
  std::sort(out.modes.begin(), out.modes.end(),
            [](const IdentifiedMode& a, const IdentifiedMode& b) { return a.frequency_hz < b.frequency_hz; });
  out.failed = out.modes.empty();
  return out;
}

MetricStats compute_stats(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  MetricStats s;
  s.count = static_cast<int>(v.size());
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  const std::size_t h = v.size() / 2;
  s.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::mac: return "mac";
    case Metric::frequency_error: return "frequency_error_pct";
    case Metric::damping_error: return "damping_error_pct";
  }
  return "mac";
}

namespace {

constexpr Metric kMetrics[] = {Metric::mac, Metric::frequency_error, Metric::damping_error};

double metric_value(const ModeMatch& m, Metric k) {
  switch (k) {
    case Metric::mac: return m.mac;
    case Metric::frequency_error: return m.frequency_error_pct;
    case Metric::damping_error: return m.damping_error_pct;
  }
  return kNaN;
}

}  // namespace

const char* split_group(Split s) { return s == Split::train ? "train" : "held_out"; }

void IdentificationReport::compute_statistics() {
  stats.clear();
  for (const char* group : {"train", "held_out"}) {
    bool any = false;
    for (const auto& s : structures) any = any || split_group(s.split) == std::string(group);
    if (!any) continue;
    for (Metric k : kMetrics) {
      auto& per_mode = stats[group][k];
      for (int mode = 0; mode < n_target; ++mode) {
        std::vector<double> v;
        for (const auto& s : structures) {
          if (split_group(s.split) != std::string(group)) continue;
          for (const auto& m : s.matches)
            if (m.reference_mode == mode) v.push_back(metric_value(m, k));
        }
        per_mode.push_back(compute_stats(std::move(v)));
      }
    }
  }
}

bool IdentificationReport::has_group(const std::string& group) const { return stats.count(group) > 0; }

const MetricStats& IdentificationReport::stat(const std::string& group, Metric m, int mode) const {
  static const MetricStats empty;
  const auto g = stats.find(group);
  if (g == stats.end()) return empty;
  const auto k = g->second.find(m);
  if (k == g->second.end() || mode < 0 || mode >= static_cast<int>(k->second.size())) return empty;
  return k->second[mode];
}

StructureReport match_structure(const StructureIdentification& s, const ModalReference& ref,
                                const IdentifyParams& p) {
  StructureReport out;
  out.id = s.id;
  out.split = s.split;
  out.failed = s.failed;
  out.modes = s.modes;
  const int n_ref = std::min(p.n_target, ref.mode_count());
  struct Pair {
    double dist;
    int ident, refm;
  };
  std::vector<Pair> pairs;
  for (int i = 0; i < static_cast<int>(s.modes.size()); ++i)
    for (int r = 0; r < n_ref; ++r) {
      const double d = std::abs(s.modes[i].frequency_hz - ref.frequencies_hz[r]) / ref.frequencies_hz[r];
      if (d <= p.max_mismatch) pairs.push_back({d, i, r});
    }
  // ties broken by reference index then identified frequency, never by input order
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.refm != b.refm) return a.refm < b.refm;
    return s.modes[a.ident].frequency_hz < s.modes[b.ident].frequency_hz;
  });
  std::vector<bool> used_i(s.modes.size(), false), used_r(n_ref, false);
  for (const auto& pr : pairs) {
    if (used_i[pr.ident] || used_r[pr.refm]) continue;
    used_i[pr.ident] = used_r[pr.refm] = true;
    const auto& m = s.modes[pr.ident];
    ModeMatch mm;
    mm.reference_mode = pr.refm;
    mm.identified = pr.ident;
    const Vector ref_shape = ref.mode_shapes.col(pr.refm);
    require(m.mode_shape.size() == ref_shape.size(), "match_structure: shape length != reference node count");
    mm.mac = (m.mode_shape.squaredNorm() > 0.0) ? mac(m.mode_shape, ref_shape) : 0.0;
    mm.frequency_error_pct = (m.frequency_hz - ref.frequencies_hz[pr.refm]) / ref.frequencies_hz[pr.refm] * 100.0;
    if (m.damping_valid && pr.refm < static_cast<int>(ref.damping_ratios.size()))
      mm.damping_error_pct =
          (m.damping_ratio - ref.damping_ratios[pr.refm]) / ref.damping_ratios[pr.refm] * 100.0;
    out.matches.push_back(mm);
  }
  std::sort(out.matches.begin(), out.matches.end(),
            [](const ModeMatch& a, const ModeMatch& b) { return a.reference_mode < b.reference_mode; });
  out.unmatched_identified = static_cast<int>(std::count(used_i.begin(), used_i.end(), false));
  out.unmatched_reference = static_cast<int>(std::count(used_r.begin(), used_r.end(), false));
  return out;
}

IdentificationReport match_and_report(const std::vector<StructureIdentification>& structures,
                                      const std::vector<const ModalReference*>& references,
                                      const IdentifyParams& p, const std::string& method) {
  require(structures.size() == references.size(), "match_and_report: structure/reference count mismatch");
  IdentificationReport r;
  r.method = method;
  r.n_target = p.n_target;
  for (std::size_t i = 0; i < structures.size(); ++i) {
    require(references[i] != nullptr, "match_and_report: missing reference");
    r.structures.push_back(match_structure(structures[i], *references[i], p));
  }
  r.compute_statistics();
  return r;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f.precision(10);
  return f;
}

}  // namespace

void write_report_csv(const IdentificationReport& r, const std::string& path) {
  auto f = open_out(path);
  f << "method,split,metric,mode,mean,median,std,count\n";
  for (const auto& [group, per_metric] : r.stats)
    for (Metric k : kMetrics) {
      const auto it = per_metric.find(k);
      if (it == per_metric.end()) continue;
      for (std::size_t mode = 0; mode < it->second.size(); ++mode) {
        const auto& s = it->second[mode];
        f << r.method << ',' << group << ',' << metric_name(k) << ',' << mode + 1 << ',' << s.mean << ','
          << s.median << ',' << s.std << ',' << s.count << '\n';
      }
    }
}

void write_matches_csv(const IdentificationReport& r, const std::string& path) {
  auto f = open_out(path);
  f << "method,graph,split,reference_mode,frequency_hz,damping_ratio,mac,frequency_error_pct,damping_error_pct,"
       "source_index\n";
  for (const auto& s : r.structures)
    for (const auto& m : s.matches) {
      const auto& id = s.modes[m.identified];
      f << r.method << ',' << s.id << ',' << split_name(s.split) << ',' << m.reference_mode + 1 << ','
        << id.frequency_hz << ',' << id.damping_ratio << ',' << m.mac << ',' << m.frequency_error_pct << ','
        << m.damping_error_pct << ',' << id.source_index << '\n';
    }
}

std::string format_table(const IdentificationReport& r) {
  std::ostringstream os;
  char buf[256];
  const bool held = r.has_group("held_out");
  std::snprintf(buf, sizeof buf, "%-10s %-7s | %27s", "Metric", "Mode", "train (mean / median / std)");
  os << buf;
  if (held) os << " | held-out (mean / median / std)";
  os << '\n';
  const char* labels[] = {"MAC", "Freq (%)", "Zeta (%)"};
  int li = 0;
  for (Metric k : kMetrics) {
    for (int mode = 0; mode < r.n_target; ++mode) {
      std::snprintf(buf, sizeof buf, "%-10s mode %-2d |", mode == 0 ? labels[li] : "", mode + 1);
      os << buf;
      for (const char* group : {"train", "held_out"}) {
        if (std::string(group) == "held_out" && !held) continue;
        const auto& s = r.stat(group, k, mode);
        std::snprintf(buf, sizeof buf, " %8.3f %8.3f %8.3f |", s.mean, s.median, s.std);
        os << buf;
      }
      os << '\n';
    }
    ++li;
  }
  if (!held) os << "(no held-out structures; held-out columns omitted)\n";
  return os.str();
}

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double num(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

}  // namespace

nlohmann::json report_to_json(const IdentificationReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["n_target"] = r.n_target;
  j["structures"] = nlohmann::json::array();
  for (const auto& s : r.structures) {
    nlohmann::json js{{"id", s.id},
                      {"split", split_name(s.split)},
                      {"failed", s.failed},
                      {"unmatched_identified", s.unmatched_identified},
                      {"unmatched_reference", s.unmatched_reference}};
    js["modes"] = nlohmann::json::array();
    for (const auto& m : s.modes)
      js["modes"].push_back({{"frequency_hz", m.frequency_hz},
                             {"damping_ratio", num(m.damping_ratio)},
                             {"damping_valid", m.damping_valid},
                             {"mode_shape", std::vector<double>(m.mode_shape.data(),
                                                                m.mode_shape.data() + m.mode_shape.size())},
                             {"psd_peak_magnitude", m.psd_peak_magnitude},
                             {"dominance", m.dominance},
                             {"source_index", m.source_index}});
    js["matches"] = nlohmann::json::array();
    for (const auto& m : s.matches)
      js["matches"].push_back({{"reference_mode", m.reference_mode},
                               {"identified", m.identified},
                               {"mac", m.mac},
                               {"frequency_error_pct", m.frequency_error_pct},
                               {"damping_error_pct", num(m.damping_error_pct)}});
    j["structures"].push_back(std::move(js));
  }
  nlohmann::json st = nlohmann::json::object();
  for (const auto& [group, per_metric] : r.stats)
    for (const auto& [k, v] : per_metric)
      for (const auto& s : v)
        st[group][metric_name(k)].push_back(
            {{"mean", num(s.mean)}, {"median", num(s.median)}, {"std", num(s.std)}, {"count", s.count}});
  j["stats"] = st;
  return j;
}

IdentificationReport report_from_json(const nlohmann::json& j) {
  IdentificationReport r;
  try {
    r.method = j.at("method").get<std::string>();
    r.n_target = j.at("n_target").get<int>();
    for (const auto& js : j.at("structures")) {
      StructureReport s;
      s.id = js.at("id").get<std::int64_t>();
      s.split = parse_split(js.at("split").get<std::string>());
      s.failed = js.at("failed").get<bool>();
      s.unmatched_identified = js.at("unmatched_identified").get<int>();
      s.unmatched_reference = js.at("unmatched_reference").get<int>();
      for (const auto& jm : js.at("modes")) {
        IdentifiedMode m;
        m.frequency_hz = jm.at("frequency_hz").get<double>();
        m.damping_ratio = num(jm.at("damping_ratio"));
        m.damping_valid = jm.at("damping_valid").get<bool>();
        const auto shape = jm.at("mode_shape").get<std::vector<double>>();
        m.mode_shape = Eigen::Map<const Vector>(shape.data(), static_cast<Eigen::Index>(shape.size()));
        m.psd_peak_magnitude = jm.at("psd_peak_magnitude").get<double>();
        m.dominance = jm.at("dominance").get<double>();
        m.source_index = jm.at("source_index").get<int>();
        s.modes.push_back(std::move(m));
      }
      for (const auto& jm : js.at("matches")) {
        ModeMatch m;
        m.reference_mode = jm.at("reference_mode").get<int>();
        m.identified = jm.at("identified").get<int>();
        m.mac = jm.at("mac").get<double>();
        m.frequency_error_pct = jm.at("frequency_error_pct").get<double>();
        m.damping_error_pct = num(jm.at("damping_error_pct"));
        s.matches.push_back(m);
      }
      r.structures.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed identification report: ") + e.what());
  }
  r.compute_statistics();
  return r;
}

}  // namespace modalgraph
