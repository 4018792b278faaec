// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "amodal/mask.hpp"

namespace amodal {

struct Segmentation {
  std::vector<std::vector<double>> polygons;  // each ring x0,y0,x1,y1,...
  std::vector<std::uint32_t> counts;          // uncompressed RLE
  int rle_height = 0;
  int rle_width = 0;

  bool is_rle() const { return !counts.empty(); }
  bool empty() const { return polygons.empty() && counts.empty(); }
};

struct InstanceRecord {
  std::int64_t id = -1;
  std::int64_t image_id = -1;
  std::string image_path;
  int image_height = 0;
  int image_width = 0;
  std::int64_t category_id = -1;
  std::string category_name;
  std::string supercategory;
  Segmentation segmentation;
  std::array<double, 4> bbox{};  // x, y, w, h

  BinaryMask rasterize() const;
};

struct ParseStats {
  std::size_t images = 0;
  std::size_t annotations = 0;
  std::size_t records = 0;
  std::size_t skipped_empty_segmentation = 0;
  std::size_t skipped_missing_image = 0;
  std::size_t skipped_invalid = 0;
};

struct AnnotationSet {
  std::vector<InstanceRecord> records;
  ParseStats stats;
};

/// COCO-style document with images / annotations / categories arrays. When
/// `image_dir` is non-empty, records whose image file is absent are skipped
/// and counted; image_path is then image_dir/file_name.
AnnotationSet parse_annotations(const std::string& path, const std::string& image_dir = "");
AnnotationSet parse_annotations_text(const std::string& text, const std::string& image_dir = "");

/// Keeps records whose category name or supercategory matches any
/// comma-separated entry of `filter`. Empty filter keeps everything.
std::vector<InstanceRecord> filter_category(const std::vector<InstanceRecord>& records, const std::string& filter);

/// Even-odd fill sampled at pixel centres (x + 0.5, y + 0.5).
BinaryMask rasterize_polygon(std::span<const double> xy, int height, int width);

/// COCO column-major runs, alternating zeros then ones.
BinaryMask decode_rle(std::span<const std::uint32_t> counts, int height, int width);
std::vector<std::uint32_t> encode_rle(const BinaryMask& mask);

/// COCO's compressed ASCII form of the run counts.
std::vector<std::uint32_t> decode_rle_string(const std::string& s);
std::string encode_rle_string(std::span<const std::uint32_t> counts);

}  // namespace amodal
