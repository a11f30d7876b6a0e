#include "dpt/viz.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dpt/io.hpp"
#include "dpt/model.hpp"
#include "dpt/runconfig.hpp"

namespace dpt {

namespace fs = std::filesystem;

TensorT<double> read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw FormatError(path + ": not a binary P6 image");
  auto next_int = [&in, &path]() {
    // Skip whitespace and '#' comment lines between header fields.
    int ch = in.peek();
    while (ch == '#' || (ch != EOF && std::isspace(ch))) {
      if (ch == '#') in.ignore(1 << 20, '\n');
      else in.ignore(1);
      ch = in.peek();
    }
    int64_t v = -1;
    in >> v;
    if (!in || v < 0) throw FormatError(path + ": bad image header");
    return v;
  };
  const int64_t w = next_int();
  const int64_t h = next_int();
  const int64_t maxval = next_int();
  if (maxval != 255) throw FormatError(path + ": only 8-bit images are supported");
  in.ignore(1);  // single whitespace before the raster
  std::vector<unsigned char> raw(static_cast<size_t>(w * h * 3));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError(path + ": truncated pixel data");
  TensorT<double> img({h, w, 3});
  for (int64_t i = 0; i < img.numel(); ++i)
    img.flat(i) = static_cast<double>(raw[static_cast<size_t>(i)]) / 255.0;
  return img;
}

void write_ppm(const std::string& path, const TensorT<double>& image) {
  if (image.rank() != 3 || image.extent(2) != 3)
    throw ShapeError("ppm writer expects [H, W, 3], got " + shape_to_string(image.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << image.extent(1) << " " << image.extent(0) << "\n255\n";
  for (int64_t i = 0; i < image.numel(); ++i) {
    const double v = std::clamp(image.flat(i), 0.0, 1.0);
    out.put(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
  }
  if (!out) throw IoError("write failed for " + path);
}

TensorT<double> load_image(const std::string& path, int64_t index) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm") return read_ppm(path);
  TensorT<double> t = read_tensor<double>(path);
  if (t.rank() == 3) return t;
  if (t.rank() == 4) {
    if (index < 0 || index >= t.extent(0))
      throw ArgumentError("image index " + std::to_string(index) + " out of range for " +
                          shape_to_string(t.shape()));
    const int64_t per = t.extent(1) * t.extent(2) * t.extent(3);
    TensorT<double> out({t.extent(1), t.extent(2), t.extent(3)});
    std::copy(t.data() + index * per, t.data() + (index + 1) * per, out.data());
    return out;
  }
  throw ShapeError("image tensor must be rank 3 or 4, got " + shape_to_string(t.shape()));
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

struct VizContext {
  nlohmann::json echo;
  std::string hash;
  PatchGridSpec grid;
  std::vector<PatchGeometry> geom;
  double upscale = 1;  // image pixels per stage-map pixel
  double r_sc = 4, patch = 2;
  TensorT<double> raw;  // display image in [0,1]
};

constexpr double kSvgScale = 8.0;  // svg units per image pixel (power of two)

// Stage coordinate -> svg coordinate.  The acceptance on "CSV corners scaled
// by the viewport" pins this exact expression, so keep the operation order.
double to_svg(double stage_coord, double upscale) {
  return (stage_coord * upscale + (upscale - 1) * 0.5 + 0.5) * kSvgScale;
}

void write_overlay_svg(const std::string& path, const VizContext& ctx, int64_t subsample) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const int64_t h = ctx.raw.extent(0), w = ctx.raw.extent(1);
  const double W = static_cast<double>(w) * kSvgScale, H = static_cast<double>(h) * kSvgScale;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<!-- config_hash=" << ctx.hash << " -->\n";
  out << "<!-- config=" << ctx.echo.dump() << " -->\n";

  out << "<g id=\"image\">\n";
  const int64_t ch = ctx.raw.extent(2);
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      int rgb[3];
      for (int c = 0; c < 3; ++c) {
        const double v = ctx.raw.flat((i * w + j) * ch + std::min<int64_t>(c, ch - 1));
        rgb[c] = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
      out << "<rect x=\"" << static_cast<double>(j) * kSvgScale << "\" y=\""
          << static_cast<double>(i) * kSvgScale << "\" width=\"" << kSvgScale << "\" height=\""
          << kSvgScale << "\" fill=\"rgb(" << rgb[0] << "," << rgb[1] << "," << rgb[2]
          << ")\"/>\n";
    }
  }
  out << "</g>\n";

  const double s = static_cast<double>(ctx.grid.patch);
  out << "<g id=\"grid\" fill=\"none\" stroke=\"#9a9a9a\" stroke-width=\"1\">\n";
  for (int64_t r = 0; r < ctx.grid.n_rows; ++r) {
    for (int64_t c = 0; c < ctx.grid.n_cols; ++c) {
      const double x1 = to_svg(static_cast<double>(c) * s - 0.5, ctx.upscale);
      const double x2 = to_svg(static_cast<double>(c) * s + s - 0.5, ctx.upscale);
      const double y1 = to_svg(static_cast<double>(r) * s - 0.5, ctx.upscale);
      const double y2 = to_svg(static_cast<double>(r) * s + s - 0.5, ctx.upscale);
      out << "<rect x=\"" << g17(x1) << "\" y=\"" << g17(y1) << "\" width=\"" << g17(x2 - x1)
          << "\" height=\"" << g17(y2 - y1) << "\"/>\n";
    }
  }
  out << "</g>\n";

  out << "<g id=\"patches\" fill=\"none\" stroke=\"#e03434\" stroke-width=\"1.5\">\n";
  for (size_t i = 0; i < ctx.geom.size(); ++i) {
    const int64_t pr = static_cast<int64_t>(i) / ctx.grid.n_cols;
    const int64_t pc = static_cast<int64_t>(i) % ctx.grid.n_cols;
    if (pr % subsample || pc % subsample) continue;
    const PatchGeometry& g = ctx.geom[i];
    const double x1 = to_svg(g.x1, ctx.upscale), x2 = to_svg(g.x2, ctx.upscale);
    const double y1 = to_svg(g.y1, ctx.upscale), y2 = to_svg(g.y2, ctx.upscale);
    out << "<rect data-row=\"" << pr << "\" data-col=\"" << pc << "\" x=\"" << g17(x1)
        << "\" y=\"" << g17(y1) << "\" width=\"" << g17(x2 - x1) << "\" height=\""
        << g17(y2 - y1) << "\"/>\n";
  }
  out << "</g>\n";

  out << "<g id=\"arrows\" stroke=\"#2a62e0\" stroke-width=\"1.5\">\n";
  for (size_t i = 0; i < ctx.geom.size(); ++i) {
    const int64_t pr = static_cast<int64_t>(i) / ctx.grid.n_cols;
    const int64_t pc = static_cast<int64_t>(i) % ctx.grid.n_cols;
    if (pr % subsample || pc % subsample) continue;
    const PatchGeometry& g = ctx.geom[i];
    out << "<line x1=\"" << g17(to_svg(g.x_ct, ctx.upscale)) << "\" y1=\""
        << g17(to_svg(g.y_ct, ctx.upscale)) << "\" x2=\""
        << g17(to_svg(g.x_ct + g.dx, ctx.upscale)) << "\" y2=\""
        << g17(to_svg(g.y_ct + g.dy, ctx.upscale)) << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
  if (!out) throw IoError("write failed for " + path);
}

void write_hist_svg(const std::string& path, const VizContext& ctx) {
  const int bins = 24;
  const double lo = 0.0, hi = ctx.r_sc * ctx.patch;
  std::vector<int64_t> count(bins, 0);
  for (const auto& g : ctx.geom) {
    int b = static_cast<int>(std::floor((g.sw - lo) / (hi - lo) * bins));
    b = std::clamp(b, 0, bins - 1);
    ++count[static_cast<size_t>(b)];
  }
  const int64_t peak = std::max<int64_t>(1, *std::max_element(count.begin(), count.end()));

  const double W = 480, H = 320, mx = 40, my = 30;
  const double pw = W - 2 * mx, ph = H - 2 * my;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<!-- config_hash=" << ctx.hash << " -->\n";
  out << "<g id=\"bars\" fill=\"#4878c8\">\n";
  for (int b = 0; b < bins; ++b) {
    const double bh = ph * static_cast<double>(count[static_cast<size_t>(b)]) /
                      static_cast<double>(peak);
    out << "<rect x=\"" << mx + pw * b / bins << "\" y=\"" << my + ph - bh << "\" width=\""
        << pw / bins - 1 << "\" height=\"" << bh << "\"/>\n";
  }
  out << "</g>\n";
  // Reference line at the fixed patch size (the identity-start width).
  const double xref = mx + pw * (ctx.patch - lo) / (hi - lo);
  out << "<line x1=\"" << xref << "\" y1=\"" << my << "\" x2=\"" << xref << "\" y2=\""
      << my + ph << "\" stroke=\"#d04040\" stroke-dasharray=\"4 3\"/>\n";
  out << "<line x1=\"" << mx << "\" y1=\"" << my + ph << "\" x2=\"" << mx + pw << "\" y2=\""
      << my + ph << "\" stroke=\"#202020\"/>\n";
  out << "<text x=\"" << mx << "\" y=\"" << H - 8 << "\" font-size=\"12\">" << g17(lo)
      << "</text>\n";
  out << "<text x=\"" << mx + pw - 20 << "\" y=\"" << H - 8 << "\" font-size=\"12\">" << g17(hi)
      << "</text>\n";
  out << "<text x=\"" << mx << "\" y=\"18\" font-size=\"12\">predicted width distribution"
      << " (peak bin " << peak << ")</text>\n";
  out << "</svg>\n";
  if (!out) throw IoError("write failed for " + path);
}

void write_geometry_csv(const std::string& path, const VizContext& ctx,
                        const std::vector<GeoRow>& stats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "# config_hash=" << ctx.hash << "\n";
  out << "# config=" << ctx.echo.dump() << "\n";
  out << "patch_row,patch_col,x_ct,y_ct,delta_x,delta_y,s_w,s_h,x1,y1,x2,y2\n";
  for (size_t i = 0; i < ctx.geom.size(); ++i) {
    const PatchGeometry& g = ctx.geom[i];
    out << static_cast<int64_t>(i) / ctx.grid.n_cols << ','
        << static_cast<int64_t>(i) % ctx.grid.n_cols << ',' << g17(g.x_ct) << ','
        << g17(g.y_ct) << ',' << g17(g.dx) << ',' << g17(g.dy) << ',' << g17(g.sw) << ','
        << g17(g.sh) << ',' << g17(g.x1) << ',' << g17(g.y1) << ',' << g17(g.x2) << ','
        << g17(g.y2) << "\n";
  }
  if (!stats.empty()) {
    out << "# split_geo,stage,sw_mean,sw_std,sh_mean,sh_std,od_mean,od_std\n";
    for (const auto& s : stats)
      out << "# split_geo," << s.stage << ',' << g17(s.sw_mean) << ',' << g17(s.sw_std) << ','
          << g17(s.sh_mean) << ',' << g17(s.sh_std) << ',' << g17(s.od_mean) << ','
          << g17(s.od_std) << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

template <class T>
VizContext gather_geometry(const VizRequest& req, const TensorT<double>& raw) {
  ModelT<T> model = ModelT<T>::load_checkpoint(req.checkpoint_dir);
  const ModelConfig& mc = model.config();
  if (!mc.stage_is_depatch(req.stage))
    throw ConfigError("stage " + std::to_string(req.stage) +
                      " has no deformable embedding in this checkpoint");
  if (raw.extent(0) != mc.input_size || raw.extent(1) != mc.input_size ||
      raw.extent(2) != mc.in_chans)
    throw ConfigError("image " + shape_to_string(raw.shape()) + " does not match model input " +
                      std::to_string(mc.input_size) + "x" + std::to_string(mc.input_size) + "x" +
                      std::to_string(mc.in_chans));

  std::vector<double> mean(static_cast<size_t>(mc.in_chans), 0.0);
  std::vector<double> stdev(static_cast<size_t>(mc.in_chans), 1.0);
  const fs::path norm_path = fs::path(req.checkpoint_dir) / "norm.json";
  if (fs::exists(norm_path)) {
    std::ifstream in(norm_path, std::ios::binary);
    nlohmann::json j;
    try {
      in >> j;
      mean = j.at("mean").get<std::vector<double>>();
      stdev = j.at("std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad " + norm_path.string() + ": " + e.what());
    }
    if (mean.size() != static_cast<size_t>(mc.in_chans) || stdev.size() != mean.size())
      throw FormatError("bad " + norm_path.string() + ": channel count mismatch");
  }

  TensorT<T> x({1, raw.extent(0), raw.extent(1), raw.extent(2)});
  for (int64_t i = 0; i < raw.numel(); ++i) {
    const size_t c = static_cast<size_t>(i % raw.extent(2));
    x.flat(i) = static_cast<T>((raw.flat(i) - mean[c]) / stdev[c]);
  }
  model.forward(x);

  auto& st = model.stage(req.stage - 1);
  VizContext ctx;
  ctx.grid = st.grid;
  ctx.geom = st.depatch->last_geometry();
  ctx.upscale = static_cast<double>(mc.input_size) / static_cast<double>(st.grid.input_h);
  ctx.r_sc = mc.r_sc;
  ctx.patch = static_cast<double>(st.grid.patch);
  ctx.raw = raw;
  ctx.echo = nlohmann::json{{"checkpoint", req.checkpoint_dir},
                            {"image", req.image_path},
                            {"image_index", req.image_index},
                            {"stage", req.stage},
                            {"subsample", req.subsample},
                            {"model", mc}};
  const std::string echo = ctx.echo.dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(echo.data(), echo.size())));
  ctx.hash = buf;
  return ctx;
}

}  // namespace

VizResult run_visualize(const VizRequest& req) {
  if (req.subsample < 1) throw ArgumentError("subsample must be >= 1");
  if (req.out_prefix.empty()) throw ArgumentError("output prefix must not be empty");
  const TensorT<double> raw = load_image(req.image_path, req.image_index);
  VizContext ctx = checkpoint_dtype(req.checkpoint_dir) == "f64"
                       ? gather_geometry<double>(req, raw)
                       : gather_geometry<float>(req, raw);

  VizResult res;
  if (!req.stats_data.empty())
    res.split_stats = eval_checkpoint(req.checkpoint_dir, req.stats_data, "val", 128).geo;

  res.svg_path = req.out_prefix + ".svg";
  res.csv_path = req.out_prefix + ".csv";
  res.hist_path = req.out_prefix + "_hist.svg";
  const fs::path parent = fs::path(req.out_prefix).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_geometry_csv(res.csv_path, ctx, res.split_stats);
  write_overlay_svg(res.svg_path, ctx, req.subsample);
  write_hist_svg(res.hist_path, ctx);
  return res;
}

}  // namespace dpt
