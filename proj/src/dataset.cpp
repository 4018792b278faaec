// SPDX-License-Identifier: Apache-2.0
#include "amodal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "amodal/error.hpp"
#include "amodal/image_io.hpp"

namespace amodal {

namespace fs = std::filesystem;

namespace {

constexpr char kIndexName[] = "index.txt";
constexpr char kIndexHeader[] = "# amodal split index v1";

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

double sample_bilinear(const Tensor& img, int c, double y, double x) {
  const Shape& s = img.shape();
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int yy, int xx) {
    return (yy >= 0 && yy < s.h && xx >= 0 && xx < s.w) ? img.at(0, c, yy, xx) : 0.0;
  };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
         fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

Transform resolve_token(const std::string& token, std::mt19937_64& rng, int size) {
  if (token == "none") return Transform::none();
  if (token == "hflip") return Transform::hflip();
  if (token == "rot90") return Transform::rot90(1);
  if (token == "rot180") return Transform::rot90(2);
  if (token == "rot270") return Transform::rot90(3);
  if (token == "crop") {
    const int lo = std::max(1, (3 * size) / 4), hi = std::max(lo, (9 * size) / 10);
    const int side = std::uniform_int_distribution<int>(lo, hi)(rng);
    std::uniform_int_distribution<int> pos(0, size - side);
    const int y0 = pos(rng);
    const int x0 = pos(rng);
    return Transform::crop(y0, x0, side, side);
  }
  if (token == "shift") {
    const int r = std::max(1, size / 8);
    std::uniform_int_distribution<int> d(-r, r);
    const int dx = d(rng);
    const int dy = d(rng);
    return Transform::shift(dx, dy);
  }
  fail(ErrorKind::kUsage, "unknown augmentation '" + token + "' (none|hflip|rot90|rot180|rot270|crop|shift)");
}

std::uint8_t weighted_to_byte(double v) {
  if (v == WeightedMask::kHidden) return 0;
  if (v == WeightedMask::kVisible) return 255;
  return 128;
}

double byte_to_weighted(std::uint8_t b) {
  if (b == 0) return WeightedMask::kHidden;
  if (b == 255) return WeightedMask::kVisible;
  if (b == 128) return WeightedMask::kContext;
  fail(ErrorKind::kFormat, "weighted mask channel holds unexpected value " + std::to_string(b));
}

std::string resolve_split_dir(const std::string& dir) {
  if (fs::exists(fs::path(dir) / kIndexName)) return dir;
  std::vector<fs::path> found;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(e.path() / kIndexName)) found.push_back(e.path());
  if (found.size() == 1) return found.front().string();
  fail(ErrorKind::kData, found.empty() ? "no split index under '" + dir + "'"
                                       : "several splits under '" + dir + "'; name one explicitly");
}

}  // namespace

std::vector<std::string> parse_augment_recipe(const std::string& recipe) {
  std::vector<std::string> out;
  std::stringstream ss(recipe);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }), item.end());
    if (item.empty()) continue;
    std::mt19937_64 probe(0);
    (void)resolve_token(item, probe, 8);  // validates the name
    out.push_back(item);
  }
  if (out.empty()) out.push_back("none");
  return out;
}

DatasetManifest make_manifest(const AnnotationSet& set, const std::string& filter, const std::string& augment,
                              std::uint64_t seed, const std::string& split) {
  DatasetManifest m;
  m.split = split;
  m.pool = set.records;
  m.targets = filter_category(set.records, filter);
  m.filter = filter;
  m.augment = parse_augment_recipe(augment);
  m.seed = seed;
  return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ObjectCrop crop_instance(const InstanceRecord& record, const Tensor& image, int size, double margin) {
  require(size > 0, ErrorKind::kUsage, "crop size must be positive");
  const Shape& s = image.shape();
  require(s.n == 1 && s.c == 3 && s.h == record.image_height && s.w == record.image_width, ErrorKind::kData,
          "image extents " + s.str() + " disagree with annotation for instance " + std::to_string(record.id));
  const BinaryMask full = record.rasterize();
  const auto box = full.bbox();
  require(box.has_value(), ErrorKind::kData, "instance " + std::to_string(record.id) + " has an empty mask");

  const double cy = 0.5 * (box->y0 + box->y1 + 1), cx = 0.5 * (box->x0 + box->x1 + 1);
  const double extent = std::max(box->y1 - box->y0 + 1, box->x1 - box->x0 + 1);
  const double side = std::max(1.0, extent * (1.0 + 2.0 * margin));
  const double oy = cy - side / 2, ox = cx - side / 2;
  const double step = side / size;

  ObjectCrop crop;
  crop.id = record.id;
  crop.image = Tensor({1, 3, size, size});
  crop.mask = BinaryMask(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double sy = oy + (i + 0.5) * step, sx = ox + (j + 0.5) * step;
      for (int c = 0; c < 3; ++c) crop.image.at(0, c, i, j) = quantize8(sample_bilinear(image, c, sy - 0.5, sx - 0.5));
      const int my = static_cast<int>(std::floor(sy)), mx = static_cast<int>(std::floor(sx));
      if (my >= 0 && my < s.h && mx >= 0 && mx < s.w && full.get(my, mx)) crop.mask.set(i, j, true);
    }
  require(!crop.mask.empty(), ErrorKind::kData,
          "instance " + std::to_string(record.id) + " vanishes at crop size " + std::to_string(size));
  return crop;
}

std::vector<CompositeSample> synthesize_samples(const DatasetManifest& manifest, const SynthSettings& settings,
                                                SynthSummary& summary) {
  require(!manifest.targets.empty(), ErrorKind::kData, "manifest has no target instances");
  summary = {};
  summary.targets = manifest.targets.size();

  std::map<std::string, Tensor> images;
  auto image_for = [&](const InstanceRecord& r) -> const Tensor& {
    auto it = images.find(r.image_path);
    if (it == images.end()) it = images.emplace(r.image_path, image_to_tensor(read_image(r.image_path))).first;
    return it->second;
  };

  std::vector<CompositeSample> out;
  for (std::size_t t = 0; t < manifest.targets.size(); ++t) {
    const InstanceRecord& target_rec = manifest.targets[t];
    std::mt19937_64 rng(derive_seed(manifest.seed, t));

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < manifest.pool.size(); ++i)
      if (manifest.pool[i].id != target_rec.id) candidates.push_back(i);

    std::optional<CompositeSample> base;
    try {
      const ObjectCrop target = crop_instance(target_rec, image_for(target_rec), settings.resolution, settings.margin);
      for (int attempt = 0; attempt < settings.occluder_tries && !candidates.empty() && !base; ++attempt) {
        const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng);
        const InstanceRecord& occ_rec = manifest.pool[candidates[pick]];
        const ObjectCrop occluder = crop_instance(occ_rec, image_for(occ_rec), settings.resolution, settings.margin);
        base = compose_random_occlusion(target, occluder, rng, settings.bounds, settings.placement_tries);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kData) throw;
    }
    if (!base) {
      ++summary.skipped_no_occluder;
      continue;
    }

    for (const auto& token : manifest.augment) {
      const Transform tr = resolve_token(token, rng, settings.resolution);
      try {
        CompositeSample s = augment(*base, tr);
        const std::string bad = check_invariants(s);
        require(bad.empty(), ErrorKind::kData, "augmented sample violates invariants: " + bad);
        out.push_back(std::move(s));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kData) throw;
        ++summary.skipped_augment;
      }
    }
  }
  summary.samples = out.size();
  return out;
}

void write_sample(const std::string& dir, const std::string& stem, const CompositeSample& sample) {
  const fs::path base = fs::path(dir) / stem;
  write_png(base.string() + "_gt.png", tensor_to_image(sample.gt_image));
  write_png(base.string() + "_erased.png", tensor_to_image(sample.erased_image));
  Image8 masks{sample.width(), sample.height(), 4, {}};
  masks.pixels.resize(static_cast<std::size_t>(masks.width) * masks.height * 4);
  for (int y = 0; y < masks.height; ++y)
    for (int x = 0; x < masks.width; ++x) {
      masks.at(y, x, 0) = sample.occluded.get(y, x) ? 255 : 0;
      masks.at(y, x, 1) = sample.visible.get(y, x) ? 255 : 0;
      masks.at(y, x, 2) = sample.amodal.get(y, x) ? 255 : 0;
      masks.at(y, x, 3) = weighted_to_byte(sample.weighted.get(y, x));
    }
  write_png(base.string() + "_masks.png", masks);
}

CompositeSample read_sample(const std::string& dir, const std::string& stem) {
  const fs::path base = fs::path(dir) / stem;
  CompositeSample s;
  s.gt_image = image_to_tensor(read_image(base.string() + "_gt.png"));
  s.erased_image = image_to_tensor(read_image(base.string() + "_erased.png"));
  const Image8 masks = read_image(base.string() + "_masks.png");
  require(masks.channels == 4, ErrorKind::kFormat, "mask file for " + stem + " must have 4 channels");
  require(masks.height == s.height() && masks.width == s.width() && s.erased_image.shape() == s.gt_image.shape(),
          ErrorKind::kData, "sample " + stem + " has inconsistent extents");
  s.occluded = BinaryMask(masks.height, masks.width);
  s.visible = BinaryMask(masks.height, masks.width);
  s.amodal = BinaryMask(masks.height, masks.width);
  s.weighted = WeightedMask(masks.height, masks.width);
  for (int y = 0; y < masks.height; ++y)
    for (int x = 0; x < masks.width; ++x) {
      s.occluded.set(y, x, masks.at(y, x, 0) != 0);
      s.visible.set(y, x, masks.at(y, x, 1) != 0);
      s.amodal.set(y, x, masks.at(y, x, 2) != 0);
      s.weighted.set(y, x, byte_to_weighted(masks.at(y, x, 3)));
    }
  return s;
}

void write_index(const std::string& dir, const std::vector<std::string>& stems,
                 const std::vector<CompositeSample>& samples, std::uint64_t seed) {
  std::ofstream out(fs::path(dir) / kIndexName, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write index in '" + dir + "'");
  out << kIndexHeader << "\n# seed " << seed << "\n# stem\ttarget_id\toccluder_id\tdx\tdy\ttransform\n";
  for (std::size_t i = 0; i < stems.size(); ++i) {
    const SampleMeta& m = samples[i].meta;
    out << stems[i] << '\t' << m.target_id << '\t' << m.occluder_id << '\t' << m.dx << '\t' << m.dy << '\t'
        << m.transform << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "failed writing index in '" + dir + "'");
}

SynthSummary synthesize_split(const DatasetManifest& manifest, const SynthSettings& settings,
                              const std::string& out_dir) {
  SynthSummary summary;
  const std::vector<CompositeSample> samples = synthesize_samples(manifest, settings, summary);
  const fs::path dir = fs::path(out_dir) / manifest.split;
  fs::create_directories(dir);
  std::vector<std::string> stems;
  char buf[32];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(buf, sizeof buf, "sample_%06zu", i);
    stems.emplace_back(buf);
    write_sample(dir.string(), stems.back(), samples[i]);
  }
  write_index(dir.string(), stems, samples, manifest.seed);
  return summary;
}

std::vector<CompositeSample> load_split(const std::string& dir, std::vector<std::string>* stems,
                                        std::vector<std::string>* missing) {
  const std::string split_dir = resolve_split_dir(dir);
  std::ifstream in(fs::path(split_dir) / kIndexName);
  if (!in) fail(ErrorKind::kIo, "cannot open index in '" + split_dir + "'");
  std::string line;
  require(std::getline(in, line) && line == kIndexHeader, ErrorKind::kFormat,
          "'" + split_dir + "/index.txt' is not a split index");
  std::vector<CompositeSample> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string stem;
    SampleMeta meta;
    if (!(ls >> stem >> meta.target_id >> meta.occluder_id >> meta.dx >> meta.dy >> meta.transform))
      fail(ErrorKind::kFormat, "malformed index line: " + line);
    if (missing) {
      const fs::path base = fs::path(split_dir) / stem;
      const bool present = fs::exists(base.string() + "_gt.png") && fs::exists(base.string() + "_erased.png") &&
                           fs::exists(base.string() + "_masks.png");
      if (!present) {
        missing->push_back(stem);
        continue;
      }
    }
    CompositeSample s = read_sample(split_dir, stem);
    s.meta = meta;
    const std::string bad = check_invariants(s);
    require(bad.empty(), ErrorKind::kData, "sample " + stem + " fails invariants on reload: " + bad);
    if (stems) stems->push_back(stem);
    out.push_back(std::move(s));
  }
  require(!out.empty(), ErrorKind::kData, "split '" + split_dir + "' lists no samples");
  return out;
}

}  // namespace amodal
