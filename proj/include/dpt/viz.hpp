#pragma once

#include <string>
#include <vector>

#include "dpt/tensor.hpp"
#include "dpt/train.hpp"

namespace dpt {

// Binary P6 image in [0,1]; 8-bit channels.
TensorT<double> read_ppm(const std::string& path);
void write_ppm(const std::string& path, const TensorT<double>& image);

// Loads a [H, W, C] image from a .ppm file or a stored tensor ([H,W,C] or
// [N,H,W,C]; `index` picks the sample in the latter case).
TensorT<double> load_image(const std::string& path, int64_t index = 0);

struct VizRequest {
  std::string checkpoint_dir;
  std::string image_path;
  int64_t image_index = 0;
  int64_t stage = 4;       // 1-based; must carry a deformable embedding
  int64_t subsample = 1;   // draw every m-th patch row/column in the SVG
  std::string out_prefix;  // writes <prefix>.svg, <prefix>.csv, <prefix>_hist.svg
  std::string stats_data;  // optional dataset dir: append val-split geometry
                           // statistics (the MetricsLog computation) to the CSV
};

struct VizResult {
  std::string svg_path, csv_path, hist_path;
  std::vector<GeoRow> split_stats;  // filled when stats_data was given
};

// Overlay of the requested stage's predicted patch rectangles and offset
// arrows on the input image, plus the per-patch geometry table and a
// histogram of predicted widths.  SVG rectangle coordinates are the CSV
// corners mapped by the fixed viewport transform and nothing else.
VizResult run_visualize(const VizRequest& req);

}  // namespace dpt
