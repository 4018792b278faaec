// SPDX-License-Identifier: Apache-2.0
#include "amodal/coco.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "amodal/error.hpp"
#include "json.hpp"

namespace amodal {

namespace {

using nlohmann::json;

constexpr char kImages[] = "images";
constexpr char kAnnotations[] = "annotations";
constexpr char kCategories[] = "categories";
constexpr char kSegmentation[] = "segmentation";
constexpr char kCounts[] = "counts";
constexpr char kSize[] = "size";

struct Category {
  std::string name;
  std::string supercategory;
};

struct ImageInfo {
  std::string file_name;
  int height = 0;
  int width = 0;
};

Segmentation parse_segmentation(const json& seg) {
  Segmentation s;
  if (seg.is_array()) {
    for (const auto& ring : seg) {
      if (!ring.is_array()) fail(ErrorKind::kFormat, "polygon ring is not an array");
      std::vector<double> xy;
      for (const auto& v : ring) xy.push_back(v.get<double>());
      if (!xy.empty()) s.polygons.push_back(std::move(xy));
    }
  } else if (seg.is_object() && seg.contains(kCounts) && seg.contains(kSize)) {
    s.rle_height = seg[kSize].at(0).get<int>();
    s.rle_width = seg[kSize].at(1).get<int>();
    if (seg[kCounts].is_string()) {
      s.counts = decode_rle_string(seg[kCounts].get<std::string>());
    } else {
      for (const auto& v : seg[kCounts]) s.counts.push_back(v.get<std::uint32_t>());
    }
  } else if (!seg.is_null()) {
    fail(ErrorKind::kFormat, "unrecognized segmentation encoding");
  }
  return s;
}

}  // namespace

BinaryMask rasterize_polygon(std::span<const double> xy, int height, int width) {
  require(xy.size() % 2 == 0, ErrorKind::kData, "polygon has an odd coordinate count");
  const std::size_t n = xy.size() / 2;
  require(n >= 3, ErrorKind::kData, "polygon needs at least 3 points");
  BinaryMask out(height, width);
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = xy[2 * i], yi = xy[2 * i + 1];
        const double xj = xy[2 * j], yj = xy[2 * j + 1];
        if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
      }
      if (inside) out.set(y, x, true);
    }
  }
  require(!out.empty(), ErrorKind::kData, "polygon covers no pixel centre");
  return out;
}

BinaryMask decode_rle(std::span<const std::uint32_t> counts, int height, int width) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  require(total == static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width), ErrorKind::kData,
          "RLE counts sum " + std::to_string(total) + " != " + std::to_string(height) + "x" + std::to_string(width));
  BinaryMask out(height, width);
  std::uint64_t pos = 0;
  bool value = false;
  for (auto c : counts) {
    for (std::uint32_t k = 0; k < c; ++k, ++pos) {
      if (value) {
        const int x = static_cast<int>(pos / static_cast<std::uint64_t>(height));
        const int y = static_cast<int>(pos % static_cast<std::uint64_t>(height));
        out.set(y, x, true);
      }
    }
    value = !value;
  }
  return out;
}

std::vector<std::uint32_t> encode_rle(const BinaryMask& mask) {
  std::vector<std::uint32_t> counts;
  bool value = false;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x)
    for (int y = 0; y < mask.height(); ++y) {
      if (mask.get(y, x) != value) {
        counts.push_back(run);
        run = 0;
        value = !value;
      }
      ++run;
    }
  counts.push_back(run);
  return counts;
}

std::vector<std::uint32_t> decode_rle_string(const std::string& s) {
  std::vector<std::int64_t> cnts;
  std::size_t p = 0;
  while (p < s.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      require(p < s.size(), ErrorKind::kFormat, "truncated compressed RLE");
      const std::int64_t c = static_cast<std::int64_t>(s[p]) - 48;
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= static_cast<std::int64_t>(-1) * (std::int64_t{1} << (5 * k));
    }
    if (cnts.size() > 2) x += cnts[cnts.size() - 2];
    cnts.push_back(x);
  }
  std::vector<std::uint32_t> out;
  for (auto v : cnts) {
    require(v >= 0, ErrorKind::kFormat, "negative run in compressed RLE");
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

std::string encode_rle_string(std::span<const std::uint32_t> counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::int64_t x = counts[i];
    if (i > 2) x -= static_cast<std::int64_t>(counts[i - 2]);
    bool more = true;
    while (more) {
      std::int64_t c = x & 0x1f;
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

BinaryMask InstanceRecord::rasterize() const {
  const Segmentation& s = segmentation;
  require(!s.empty(), ErrorKind::kData, "instance " + std::to_string(id) + " has no segmentation");
  if (s.is_rle()) {
    require(s.rle_height == image_height && s.rle_width == image_width, ErrorKind::kData,
            "RLE size does not match image extents");
    return decode_rle(s.counts, s.rle_height, s.rle_width);
  }
  BinaryMask out(image_height, image_width);
  bool any = false;
  for (const auto& ring : s.polygons) {
    if (ring.size() < 6) continue;
    BinaryMask part(image_height, image_width);
    try {
      part = rasterize_polygon(ring, image_height, image_width);
    } catch (const Error&) {
      continue;
    }
    for (int y = 0; y < image_height; ++y)
      for (int x = 0; x < image_width; ++x)
        if (part.get(y, x)) out.set(y, x, true);
    any = true;
  }
  require(any && !out.empty(), ErrorKind::kData, "instance " + std::to_string(id) + " rasterizes to an empty mask");
  return out;
}

AnnotationSet parse_annotations_text(const std::string& text, const std::string& image_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed annotation document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains(kImages) || !doc.contains(kAnnotations) || !doc.contains(kCategories))
    fail(ErrorKind::kFormat, "annotation document needs images, annotations and categories arrays");

  AnnotationSet set;
  try {
    std::map<std::int64_t, Category> categories;
    for (const auto& c : doc[kCategories])
      categories[c.at("id").get<std::int64_t>()] = {c.at("name").get<std::string>(), c.value("supercategory", "")};

    std::map<std::int64_t, ImageInfo> images;
    for (const auto& im : doc[kImages]) {
      images[im.at("id").get<std::int64_t>()] = {im.at("file_name").get<std::string>(), im.at("height").get<int>(),
                                                 im.at("width").get<int>()};
      ++set.stats.images;
    }

    for (const auto& a : doc[kAnnotations]) {
      ++set.stats.annotations;
      InstanceRecord r;
      r.id = a.at("id").get<std::int64_t>();
      r.image_id = a.at("image_id").get<std::int64_t>();
      r.category_id = a.at("category_id").get<std::int64_t>();
      const auto img = images.find(r.image_id);
      const auto cat = categories.find(r.category_id);
      if (img == images.end() || cat == categories.end()) {
        ++set.stats.skipped_invalid;
        continue;
      }
      r.image_height = img->second.height;
      r.image_width = img->second.width;
      r.image_path = image_dir.empty() ? img->second.file_name
                                       : (std::filesystem::path(image_dir) / img->second.file_name).string();
      r.category_name = cat->second.name;
      r.supercategory = cat->second.supercategory;
      if (a.contains("bbox"))
        for (std::size_t i = 0; i < 4; ++i) r.bbox[i] = a["bbox"].at(i).get<double>();
      r.segmentation = a.contains(kSegmentation) ? parse_segmentation(a[kSegmentation]) : Segmentation{};
      if (r.segmentation.empty()) {
        ++set.stats.skipped_empty_segmentation;
        continue;
      }
      if (!image_dir.empty() && !std::filesystem::exists(r.image_path)) {
        std::cerr << "warning: missing image " << r.image_path << " (annotation " << r.id << ")\n";
        ++set.stats.skipped_missing_image;
        continue;
      }
      try {
        (void)r.rasterize();
      } catch (const Error&) {
        ++set.stats.skipped_invalid;
        continue;
      }
      set.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed annotation document: ") + e.what());
  }
  set.stats.records = set.records.size();
  return set;
}

AnnotationSet parse_annotations(const std::string& path, const std::string& image_dir) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open annotation file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_annotations_text(ss.str(), image_dir);
}

std::vector<InstanceRecord> filter_category(const std::vector<InstanceRecord>& records, const std::string& filter) {
  if (filter.empty()) return records;
  std::vector<std::string> names;
  std::stringstream ss(filter);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) names.push_back(item);
  std::vector<InstanceRecord> out;
  for (const auto& r : records)
    for (const auto& n : names)
      if (r.category_name == n || r.supercategory == n) {
        out.push_back(r);
        break;
      }
  return out;
}

}  // namespace amodal
