// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fixture {

struct Instance {
  std::int64_t id;
  std::string category;
};

struct Corpus {
  std::string annotations;  // path to the JSON document
  std::string images;       // image directory
  std::vector<Instance> instances;
};

/// One 64x64 image holding two overlapping-ready instances (dog, car).
Corpus write_minimal(const std::string& dir);

/// Four 64x64 images, twelve instances: five animals (dog, cat, horse, sheep,
/// bird), three vehicles (car, bus, bicycle), four furniture (chair, couch,
/// bed, table). The table uses an uncompressed RLE segmentation.
Corpus write_mixed(const std::string& dir);

/// Fresh empty directory under the system temp dir.
std::string temp_dir(const std::string& tag);

/// FNV-1a digest of a file, or of every regular file below a directory in
/// sorted path order (relative names included).
std::uint64_t digest(const std::string& path);

std::string read_file(const std::string& path);

}  // namespace fixture
