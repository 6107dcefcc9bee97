#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "modalgraph/dsp.hpp"
#include "modalgraph/fem.hpp"
#include "modalgraph/graphdata.hpp"
#include "modalgraph/network.hpp"

namespace modalgraph {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct IdentifiedMode {
  double frequency_hz = 0.0;
  double damping_ratio = kNaN;  // NaN when the estimate is unavailable
  bool damping_valid = false;
  Vector mode_shape;  // unit max-abs, dominant entry positive
  double psd_peak_magnitude = 0.0;
  double dominance = 0.0;
  int source_index = -1;
};

// Zero-padded whole-record periodogram.
dsp::Spectrum psd(std::span<const double> q, double fs_hz);

struct PeakInfo {
  double frequency_hz = 0.0;
  double magnitude = 0.0;
  double dominance = 0.5;
  int bin = 0;
};

// Global maximum bin. The main lobe is the strictly decreasing run on either
// side of it; dominance compares the peak to the largest bin outside that lobe.
PeakInfo pick_frequency(const dsp::Spectrum& s);

struct RdtParams {
  double trigger_sigma = std::sqrt(2.0);  // trigger level in units of the signal std
  double cycles = 10.0;                   // segment length in periods of fn_hint
  int min_segments = 10;
};

struct RdtSignature {
  std::vector<double> signature;
  int segments = 0;
  bool available = false;
};

// Positive-slope level-crossing random decrement on the zero-mean signal.
RdtSignature rdt(std::span<const double> q, double fs_hz, double fn_hint_hz, const RdtParams& p = {});

struct DampingFit {
  double damping_ratio = kNaN;
  bool valid = false;
  int peaks_used = 0;
};

// Log decrement over the first n_peaks positive local maxima (peak values
// refined by a parabola through the three samples around each maximum).
DampingFit fit_damping(std::span<const double> signature, double fs_hz, int n_peaks = 5);

// Modal assurance criterion for real shapes. Throws on zero vectors or length mismatch.
double mac(const Vector& a, const Vector& b);

struct IdentifyParams {
  int n_target = 4;
  double min_dominance = 0.6;
  double magnitude_ratio = 0.1;
  double max_mismatch = 0.25;  // relative frequency distance allowed when matching
  int damping_peaks = 5;
  RdtParams rdt;
};

struct SpuriousCandidate {
  int source_index = 0;
  PeakInfo peak;
  bool kept = false;
};

// Ranks the P responses by (peak magnitude, dominance) and keeps at most
// n_target of them; responses whose peak falls within one bin of an already
// kept response are treated as duplicates.
std::vector<SpuriousCandidate> spurious_filter(const Matrix& Q, double fs_hz, const IdentifyParams& p);

struct StructureIdentification {
  std::int64_t id = 0;
  Split split = Split::train;
  std::vector<IdentifiedMode> modes;
  bool failed = false;  // nothing survived the spurious filter
};

StructureIdentification identify_structure(const DecompositionResult& d, double fs_hz,
                                           const IdentifyParams& p = {});

struct ModeMatch {
  int reference_mode = 0;  // 0-based
  int identified = 0;      // index into StructureReport::modes
  double mac = 0.0;
  double frequency_error_pct = 0.0;
  double damping_error_pct = kNaN;
};

struct StructureReport {
  std::int64_t id = 0;
  Split split = Split::train;
  bool failed = false;
  std::vector<IdentifiedMode> modes;
  std::vector<ModeMatch> matches;
  int unmatched_identified = 0;
  int unmatched_reference = 0;
};

struct MetricStats {
  double mean = kNaN;
  double median = kNaN;
  double std = kNaN;  // population (ddof = 0)
  int count = 0;
};

MetricStats compute_stats(std::vector<double> values);

enum class Metric { mac, frequency_error, damping_error };
const char* metric_name(Metric m);

struct IdentificationReport {
  std::string method = "proposed";
  int n_target = 4;
  std::vector<StructureReport> structures;
  // stats[group][metric][mode]; group is "train" or "held_out"
  std::map<std::string, std::map<Metric, std::vector<MetricStats>>> stats;

  void compute_statistics();
  const MetricStats& stat(const std::string& group, Metric m, int mode) const;
  bool has_group(const std::string& group) const;
};

// Greedy nearest-frequency matching (relative distance, at most max_mismatch)
// against the first n_target reference modes.
StructureReport match_structure(const StructureIdentification& s, const ModalReference& ref,
                                const IdentifyParams& p);

IdentificationReport match_and_report(const std::vector<StructureIdentification>& structures,
                                      const std::vector<const ModalReference*>& references,
                                      const IdentifyParams& p, const std::string& method = "proposed");

// split,metric,mode,mean,median,std,count
void write_report_csv(const IdentificationReport& r, const std::string& path);
// Per-structure, per-matched-mode rows.
void write_matches_csv(const IdentificationReport& r, const std::string& path);
// Fixed-width table: rows MAC / frequency / damping x modes, columns mean, median,
// std for the train split and the held-out (validation + test) split.
std::string format_table(const IdentificationReport& r);
nlohmann::json report_to_json(const IdentificationReport& r);
IdentificationReport report_from_json(const nlohmann::json& j);

// "train" or "held_out" (validation and test combined).
const char* split_group(Split s);

}  // namespace modalgraph
