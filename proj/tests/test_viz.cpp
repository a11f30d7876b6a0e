#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpt/errors.hpp"
#include "dpt/io.hpp"
#include "dpt/model.hpp"
#include "dpt/rng.hpp"
#include "dpt/viz.hpp"

namespace fs = std::filesystem;
using dpt::ModelConfig;
using dpt::ModelT;
using dpt::Rng;
using dpt::Tensor;
using dpt::VizRequest;
using dpt::VizResult;

namespace {

ModelConfig viz_config() {
  ModelConfig cfg = ModelConfig::preset("toy");
  cfg.input_size = 16;
  cfg.num_classes = 4;
  cfg.k = 2;
  for (auto& s : cfg.stages) {
    s.dim = 8;
    s.heads = 1;
    s.patch = 2;
    s.sr_ratio = 1;
  }
  cfg.validate();
  return cfg;
}

std::string make_image(const std::string& path) {
  Rng r(771);
  dpt::TensorF img({16, 16, 3});
  for (int64_t i = 0; i < img.numel(); ++i) img.flat(i) = static_cast<float>(r.uniform());
  dpt::write_tensor(path, img);
  return path;
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::string attr(const std::string& line, const std::string& name) {
  const std::string probe = " " + name + "=\"";
  auto pos = line.find(probe);
  REQUIRE(pos != std::string::npos);
  pos += probe.size();
  auto end = line.find('"', pos);
  REQUIRE(end != std::string::npos);
  return line.substr(pos, end - pos);
}

// Collects x/y/width/height attribute tuples of every <rect> in group `id`.
std::vector<std::array<std::string, 4>> group_rects(const std::vector<std::string>& lines,
                                                    const std::string& id) {
  std::vector<std::array<std::string, 4>> out;
  bool inside = false;
  for (const auto& line : lines) {
    if (line.find("<g id=\"" + id + "\"") != std::string::npos) {
      inside = true;
      continue;
    }
    if (inside && line.find("</g>") != std::string::npos) break;
    if (inside && line.find("<rect") != std::string::npos)
      out.push_back({attr(line, "x"), attr(line, "y"), attr(line, "width"),
                     attr(line, "height")});
  }
  return out;
}

struct CsvGeo {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvGeo parse_csv(const std::string& path) {
  CsvGeo out;
  for (const std::string& line : lines_of(path)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    if (out.header.empty()) {
      while (std::getline(ss, cell, ',')) out.header.push_back(cell);
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace

TEST_SUITE("viz") {

TEST_CASE("ppm round trip with header comments") {
  fs::create_directories("viz_scratch");
  Tensor img({3, 5, 3});
  Rng r(773);
  for (int64_t i = 0; i < img.numel(); ++i) img.flat(i) = r.uniform();
  dpt::write_ppm("viz_scratch/a.ppm", img);
  Tensor back = dpt::read_ppm("viz_scratch/a.ppm");
  REQUIRE(back.shape() == img.shape());
  for (int64_t i = 0; i < img.numel(); ++i)
    CHECK(std::fabs(back.flat(i) - img.flat(i)) <= 0.5 / 255.0 + 1e-9);

  {
    std::ofstream out("viz_scratch/c.ppm", std::ios::binary);
    out << "P6\n# a comment\n2 1\n# another\n255\n";
    out.put(char(255)); out.put(char(0)); out.put(char(0));
    out.put(char(0)); out.put(char(255)); out.put(char(0));
  }
  Tensor c = dpt::read_ppm("viz_scratch/c.ppm");
  REQUIRE((c.shape() == dpt::Shape{1, 2, 3}));
  CHECK(c.at(0, 0, 0) == 1.0);
  CHECK(c.at(0, 1, 1) == 1.0);

  {
    std::ofstream out("viz_scratch/bad.ppm", std::ios::binary);
    out << "P6\n2 1\n65535\n";
  }
  CHECK_THROWS_AS(dpt::read_ppm("viz_scratch/bad.ppm"), dpt::FormatError);
  {
    std::ofstream out("viz_scratch/short.ppm", std::ios::binary);
    out << "P6\n2 2\n255\nab";
  }
  CHECK_THROWS_AS(dpt::read_ppm("viz_scratch/short.ppm"), dpt::FormatError);
}

TEST_CASE("image loading from stored tensors") {
  fs::create_directories("viz_scratch");
  Rng r(775);
  Tensor batch({3, 4, 5, 3});
  for (int64_t i = 0; i < batch.numel(); ++i) batch.flat(i) = r.uniform();
  dpt::write_tensor("viz_scratch/batch.dpt", batch);
  Tensor one = dpt::load_image("viz_scratch/batch.dpt", 2);
  REQUIRE((one.shape() == dpt::Shape{4, 5, 3}));
  for (int64_t i = 0; i < one.numel(); ++i)
    CHECK(one.flat(i) == batch.flat(2 * 4 * 5 * 3 + i));
  CHECK_THROWS_AS(dpt::load_image("viz_scratch/batch.dpt", 3), dpt::ArgumentError);
  Tensor flat({7});
  dpt::write_tensor("viz_scratch/flat.dpt", flat);
  CHECK_THROWS_AS(dpt::load_image("viz_scratch/flat.dpt", 0), dpt::ShapeError);
}

TEST_CASE("identity-start overlay: boxes on the grid, zero-length arrows") {
  ModelConfig cfg = viz_config();
  ModelT<float> model(cfg, 21);
  const std::string ckpt = "viz_scratch/ckpt_zero";
  model.save_checkpoint(ckpt);

  VizRequest req;
  req.checkpoint_dir = ckpt;
  req.image_path = make_image("viz_scratch/img.dpt");
  req.stage = 2;
  req.out_prefix = "viz_scratch/zero";
  VizResult res = dpt::run_visualize(req);
  CHECK(fs::exists(res.svg_path));
  CHECK(fs::exists(res.csv_path));
  CHECK(fs::exists(res.hist_path));

  CsvGeo csv = parse_csv(res.csv_path);
  REQUIRE(csv.header.size() == 12);
  CHECK(csv.header[4] == "delta_x");
  REQUIRE(csv.rows.size() == 16);  // stage 2: 4x4 patches
  for (const auto& row : csv.rows) {
    CHECK(row[4] == 0.0);   // delta_x
    CHECK(row[5] == 0.0);   // delta_y
    CHECK(row[6] == 2.0);   // s_w equals the patch size exactly
    CHECK(row[7] == 2.0);
    CHECK(row[8] == row[2] - 1.0);  // x1 = x_ct - s/2
  }

  auto lines = lines_of(res.svg_path);
  auto grid = group_rects(lines, "grid");
  auto patches = group_rects(lines, "patches");
  REQUIRE(grid.size() == 16);
  REQUIRE(patches.size() == 16);
  auto key = [](const std::array<std::string, 4>& a) {
    return a[0] + "|" + a[1] + "|" + a[2] + "|" + a[3];
  };
  std::vector<std::string> gk, pk;
  for (const auto& a : grid) gk.push_back(key(a));
  for (const auto& a : patches) pk.push_back(key(a));
  std::sort(gk.begin(), gk.end());
  std::sort(pk.begin(), pk.end());
  CHECK(gk == pk);  // predicted boxes coincide with the grid, textually

  int arrows = 0;
  for (const auto& line : lines) {
    if (line.find("<line") == std::string::npos) continue;
    CHECK(attr(line, "x1") == attr(line, "x2"));
    CHECK(attr(line, "y1") == attr(line, "y2"));
    ++arrows;
  }
  CHECK(arrows == 16);  // one zero-length arrow per patch
}

TEST_CASE("randomized predictor still satisfies the corner identities") {
  ModelConfig cfg = viz_config();
  cfg.init = "truncated-normal";
  ModelT<float> model(cfg, 23);
  // Stretch the head weights so geometry moves visibly off the grid.
  for (auto* p : model.params())
    if (p->name.find(".off.w") != std::string::npos ||
        p->name.find(".scale.w") != std::string::npos)
      for (int64_t i = 0; i < p->value.numel(); ++i) p->value.flat(i) *= 30.0f;
  const std::string ckpt = "viz_scratch/ckpt_rand";
  model.save_checkpoint(ckpt);

  VizRequest req;
  req.checkpoint_dir = ckpt;
  req.image_path = make_image("viz_scratch/img2.dpt");
  req.stage = 4;
  req.out_prefix = "viz_scratch/rand";
  VizResult res = dpt::run_visualize(req);

  CsvGeo csv = parse_csv(res.csv_path);
  REQUIRE(csv.rows.size() == 1);  // stage 4 of a 16px input: single patch
  bool moved = false;
  for (const auto& r : csv.rows) {
    const double x_ct = r[2], y_ct = r[3], dx = r[4], dy = r[5], sw = r[6], sh = r[7];
    CHECK(std::fabs(r[8] - (x_ct + dx - sw / 2)) <= 1e-9);
    CHECK(std::fabs(r[9] - (y_ct + dy - sh / 2)) <= 1e-9);
    CHECK(std::fabs(r[10] - (x_ct + dx + sw / 2)) <= 1e-9);
    CHECK(std::fabs(r[11] - (y_ct + dy + sh / 2)) <= 1e-9);
    moved |= dx != 0.0 || sw != 2.0;
  }
  CHECK(moved);

  // Asking for a fixed-tiling stage is refused.
  VizRequest bad = req;
  bad.stage = 1;
  bad.out_prefix = "viz_scratch/bad";
  CHECK_THROWS_AS(dpt::run_visualize(bad), dpt::ConfigError);
}

TEST_CASE("subsampling thins the drawn patches but not the csv") {
  ModelConfig cfg = viz_config();
  ModelT<float> model(cfg, 25);
  const std::string ckpt = "viz_scratch/ckpt_sub";
  model.save_checkpoint(ckpt);
  VizRequest req;
  req.checkpoint_dir = ckpt;
  req.image_path = make_image("viz_scratch/img3.dpt");
  req.stage = 2;
  req.subsample = 2;
  req.out_prefix = "viz_scratch/sub";
  VizResult res = dpt::run_visualize(req);
  auto lines = lines_of(res.svg_path);
  CHECK(group_rects(lines, "patches").size() == 4);  // every other row/col of 4x4
  CHECK(parse_csv(res.csv_path).rows.size() == 16);
}

}  // TEST_SUITE
