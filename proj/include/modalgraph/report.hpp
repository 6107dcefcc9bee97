#pragma once

#include <string>
#include <vector>

#include "modalgraph/identify.hpp"

namespace modalgraph {

struct RunConfig;

// Static SVG charts. Colours cycle through a fixed palette.
namespace svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

void line_plot(const std::string& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series, bool log_y = false);

// groups[g].y[c] is the bar of group g in category c; NaN bars are skipped.
void bar_chart(const std::string& path, const std::string& title, const std::vector<std::string>& categories,
               const std::vector<Series>& groups, const std::string& ylabel);

// One panel per series (values in .y), side by side.
void histograms(const std::string& path, const std::string& title, const std::vector<Series>& panels, int bins,
                const std::string& xlabel);

}  // namespace svg

struct PanelData {
  std::int64_t id = 0;
  Matrix Q;    // P x T
  Matrix Phi;  // N x P
  double fs_hz = 1.0;
  TrussSpec truss;
  Mask mask;
  std::vector<double> reference_hz;
};

// P rows x 3 columns: response, PSD with reference-frequency markers, shape
// over the truss with measured nodes highlighted.
void decomposition_panels(const std::string& path, const PanelData& d);

// Tables and figures from whatever artifacts exist under cfg.out_dir. Returns
// the written files.
std::vector<std::string> render_report(const RunConfig& cfg, const std::string& dataset_path);

}  // namespace modalgraph
