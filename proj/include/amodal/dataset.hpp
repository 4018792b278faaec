// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amodal/coco.hpp"
#include "amodal/mask.hpp"

namespace amodal {

struct DatasetManifest {
  std::string split = "train";
  std::vector<InstanceRecord> targets;  // after the category filter
  std::vector<InstanceRecord> pool;     // occluder candidates: every instance of the split
  std::string filter;
  std::vector<std::string> augment{"none"};
  std::uint64_t seed = 1;
};

struct SynthSettings {
  int resolution = 64;
  double margin = 0.15;       // fraction of the object extent added on each side of the crop
  OcclusionBounds bounds{};
  int placement_tries = 50;   // offsets tried per occluder
  int occluder_tries = 8;     // occluders tried per target
};

struct SynthSummary {
  std::size_t targets = 0;
  std::size_t samples = 0;
  std::size_t skipped_no_occluder = 0;
  std::size_t skipped_augment = 0;
};

/// Augmentation recipe tokens: none, hflip, rot90, rot180, rot270, crop, shift.
/// Each token yields one sample per target. "x4" style multipliers are not
/// accepted; list the tokens instead.
std::vector<std::string> parse_augment_recipe(const std::string& recipe);

/// Builds a manifest from parsed records; targets pass the filter, the pool keeps all.
DatasetManifest make_manifest(const AnnotationSet& set, const std::string& filter, const std::string& augment,
                              std::uint64_t seed, const std::string& split = "train");

/// Square crop around the object mask enlarged by `margin`, resampled to
/// size x size (bilinear image, nearest mask). Pixels outside the source
/// frame are zero. Image values are quantized to 8 bits so persisted
/// samples reload exactly.
ObjectCrop crop_instance(const InstanceRecord& record, const Tensor& image, int size, double margin);

/// Seed for target `index`, derived from the manifest seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// In-memory synthesis. Images are loaded from each record's image_path.
std::vector<CompositeSample> synthesize_samples(const DatasetManifest& manifest, const SynthSettings& settings,
                                                SynthSummary& summary);

/// Synthesizes and writes <out_dir>/<split>/ with index.txt.
SynthSummary synthesize_split(const DatasetManifest& manifest, const SynthSettings& settings,
                              const std::string& out_dir);

/// Files: <stem>_gt.png, <stem>_erased.png, <stem>_masks.png (RGBA: occluded,
/// visible, amodal, weighted at 0/128/255).
void write_sample(const std::string& dir, const std::string& stem, const CompositeSample& sample);
CompositeSample read_sample(const std::string& dir, const std::string& stem);

void write_index(const std::string& dir, const std::vector<std::string>& stems,
                 const std::vector<CompositeSample>& samples, std::uint64_t seed);

/// Loads every sample listed in <dir>/index.txt and re-checks its invariants.
/// `dir` is the split directory or its parent when it holds a single split.
/// With `missing`, samples whose files are absent are listed there and
/// skipped; otherwise they are an error.
std::vector<CompositeSample> load_split(const std::string& dir, std::vector<std::string>* stems = nullptr,
                                        std::vector<std::string>* missing = nullptr);

}  // namespace amodal
