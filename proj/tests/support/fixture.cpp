// SPDX-License-Identifier: Apache-2.0
#include "fixture.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "amodal/coco.hpp"
#include "amodal/image_io.hpp"

namespace fs = std::filesystem;

namespace fixture {

namespace {

constexpr int kSize = 64;
constexpr double kPi = 3.14159265358979323846;

struct Shape {
  std::int64_t id;
  std::string category;
  double cx, cy, rx, ry;
  int lobes;  // star-ish outline so shapes are not plain ellipses
  bool rle = false;
};

struct Category {
  std::int64_t id;
  const char* name;
  const char* super;
};

const std::vector<Category> kCategories = {
    {1, "dog", "animal"},    {2, "cat", "animal"},  {3, "horse", "animal"},     {4, "sheep", "animal"},
    {5, "bird", "animal"},   {6, "car", "vehicle"}, {7, "bus", "vehicle"},      {8, "bicycle", "vehicle"},
    {9, "chair", "furniture"}, {10, "couch", "furniture"}, {11, "bed", "furniture"}, {12, "dining table", "furniture"},
};

std::int64_t category_id(const std::string& name) {
  for (const auto& c : kCategories)
    if (name == c.name) return c.id;
  return -1;
}

std::vector<double> outline(const Shape& s) {
  std::vector<double> xy;
  constexpr int kVerts = 16;
  for (int i = 0; i < kVerts; ++i) {
    const double t = 2.0 * kPi * i / kVerts;
    const double r = 1.0 + 0.15 * std::cos(s.lobes * t);
    xy.push_back(std::round((s.cx + s.rx * r * std::cos(t)) * 10.0) / 10.0);
    xy.push_back(std::round((s.cy + s.ry * r * std::sin(t)) * 10.0) / 10.0);
  }
  return xy;
}

// Smooth background with a per-image tint, objects get a striped texture.
amodal::Image8 paint(int image_index, const std::vector<Shape>& shapes) {
  amodal::Image8 img{kSize, kSize, 3, std::vector<std::uint8_t>(kSize * kSize * 3)};
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x) {
      img.at(y, x, 0) = static_cast<std::uint8_t>(60 + 2 * x + 10 * image_index);
      img.at(y, x, 1) = static_cast<std::uint8_t>(90 + y + 15 * image_index);
      img.at(y, x, 2) = static_cast<std::uint8_t>(150 - x / 2 - y / 2);
    }
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto mask = amodal::rasterize_polygon(outline(shapes[k]), kSize, kSize);
    const int base = 40 + static_cast<int>((shapes[k].id * 37) % 160);
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) {
        if (!mask.get(y, x)) continue;
        const int stripe = ((x + y + static_cast<int>(shapes[k].id)) / 3) % 2 ? 40 : 0;
        img.at(y, x, 0) = static_cast<std::uint8_t>(std::min(255, base + stripe));
        img.at(y, x, 1) = static_cast<std::uint8_t>(std::min(255, 255 - base + stripe / 2));
        img.at(y, x, 2) = static_cast<std::uint8_t>(std::min(255, 80 + (base * 3) % 120));
      }
  }
  return img;
}

Corpus write_corpus(const std::string& dir, const std::vector<std::vector<Shape>>& images) {
  fs::create_directories(fs::path(dir) / "images");
  nlohmann::json doc;
  doc["images"] = nlohmann::json::array();
  doc["annotations"] = nlohmann::json::array();
  doc["categories"] = nlohmann::json::array();
  for (const auto& c : kCategories) doc["categories"].push_back({{"id", c.id}, {"name", c.name}, {"supercategory", c.super}});

  Corpus corpus;
  corpus.images = (fs::path(dir) / "images").string();
  corpus.annotations = (fs::path(dir) / "annotations.json").string();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string file = "img_" + std::to_string(i) + ".png";
    amodal::write_png((fs::path(corpus.images) / file).string(), paint(static_cast<int>(i), images[i]));
    const auto image_id = static_cast<std::int64_t>(i + 1);
    doc["images"].push_back({{"id", image_id}, {"file_name", file}, {"height", kSize}, {"width", kSize}});
    for (const Shape& s : images[i]) {
      const auto xy = outline(s);
      const auto mask = amodal::rasterize_polygon(xy, kSize, kSize);
      const auto box = *mask.bbox();
      nlohmann::json ann = {{"id", s.id},
                            {"image_id", image_id},
                            {"category_id", category_id(s.category)},
                            {"iscrowd", s.rle ? 1 : 0},
                            {"area", mask.count()},
                            {"bbox", {box.x0, box.y0, box.x1 - box.x0 + 1, box.y1 - box.y0 + 1}}};
      if (s.rle)
        ann["segmentation"] = {{"counts", amodal::encode_rle(mask)}, {"size", {kSize, kSize}}};
      else
        ann["segmentation"] = nlohmann::json::array({xy});
      doc["annotations"].push_back(ann);
      corpus.instances.push_back({s.id, s.category});
    }
  }
  std::ofstream(corpus.annotations) << doc.dump(1) << "\n";
  return corpus;
}

}  // namespace

Corpus write_minimal(const std::string& dir) {
  return write_corpus(dir, {{{1, "dog", 22, 26, 13, 11, 3}, {2, "car", 42, 38, 12, 10, 4}}});
}

Corpus write_mixed(const std::string& dir) {
  return write_corpus(dir, {
                               {{11, "dog", 20, 22, 12, 10, 3}, {12, "chair", 44, 44, 11, 12, 4}, {13, "cat", 46, 18, 9, 8, 5}},
                               {{21, "car", 24, 40, 14, 9, 2}, {22, "horse", 42, 22, 12, 11, 3}, {23, "bed", 20, 16, 10, 7, 4}},
                               {{31, "sheep", 22, 24, 11, 11, 5}, {32, "bus", 44, 42, 13, 10, 2}, {33, "couch", 46, 16, 10, 7, 3}},
                               {{41, "bird", 18, 44, 9, 9, 4},
                                {42, "bicycle", 44, 22, 12, 11, 5},
                                {43, "dining table", 30, 20, 12, 8, 3, true}},
                           });
}

std::string temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("amodal_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t digest(const std::string& path) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const std::string& bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  if (!fs::is_directory(path)) {
    feed(read_file(path));
    return h;
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    feed(fs::relative(f, path).string());
    feed(read_file(f.string()));
  }
  return h;
}

}  // namespace fixture
