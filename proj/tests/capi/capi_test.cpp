// SPDX-License-Identifier: Apache-2.0
// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "amodal/amodal.h"
#include "fixture.hpp"

namespace fs = std::filesystem;

namespace {

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->emplace_back(line); }

std::string config_text(const amc_config* c) {
  size_t needed = 0;
  REQUIRE(amc_config_text(c, nullptr, 0, &needed) == AMC_OK);
  std::string s(needed, '\0');
  REQUIRE(amc_config_text(c, s.data(), s.size(), &needed) == AMC_OK);
  s.resize(needed - 1);
  return s;
}

struct Workspace {
  std::string root = fixture::temp_dir("capi");
  fixture::Corpus corpus = fixture::write_mixed(root + "/corpus");
  ~Workspace() { fs::remove_all(root); }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

amc_config* tiny_config() {
  amc_config* c = nullptr;
  REQUIRE(amc_config_create(&c) == AMC_OK);
  const char* kv[][2] = {{"model.resolution", "32"},      {"model.channels", "4,6,8"},
                         {"model.disc_channels", "4,6,8,8,8"}, {"backbone.channels", "4,6"},
                         {"loss.perceptual_taps", "block2"},  {"loss.style_taps", "block1,block2"},
                         {"train.batch_size", "2"},           {"train.steps", "4"}};
  for (auto& p : kv) REQUIRE(amc_config_set(c, p[0], p[1]) == AMC_OK);
  return c;
}

std::string synth_split(const std::string& name, const char* filter = "animal") {
  amc_synth_options o{};
  const std::string out = ws().root + "/" + name;
  o.annotations = ws().corpus.annotations.c_str();
  o.images = ws().corpus.images.c_str();
  o.out = out.c_str();
  o.filter = filter;
  o.seed = 3;
  o.resolution = 32;
  amc_synth_summary s{};
  REQUIRE(amc_synth(&o, &s) == AMC_OK);
  REQUIRE(s.samples == 5);
  return out;
}

}  // namespace

TEST_CASE("status names and exit codes") {
  CHECK(std::string(amc_status_name(AMC_OK)) == "ok");
  CHECK(amc_exit_code(AMC_OK) == 0);
  CHECK(amc_exit_code(AMC_ERR_USAGE) == 1);
  CHECK(amc_exit_code(AMC_ERR_DATA) == 2);
  CHECK(amc_exit_code(AMC_ERR_FORMAT) == 2);
  CHECK(amc_exit_code(AMC_ERR_IO) == 2);
  CHECK(amc_exit_code(AMC_ERR_NUMERIC) == 3);
  CHECK(std::strlen(amc_version()) > 0);
}

TEST_CASE("configuration round trip and error reporting") {
  amc_config* c = nullptr;
  REQUIRE(amc_config_create(&c) == AMC_OK);
  CHECK(amc_config_set(c, "train.steps", "12") == AMC_OK);
  CHECK(config_text(c).find("train.steps = 12") != std::string::npos);

  CHECK(amc_config_set(c, "train.nonsense", "1") == AMC_ERR_USAGE);
  CHECK(std::string(amc_last_error()).find("train.nonsense") != std::string::npos);
  CHECK(amc_config_set(c, "train.steps", "twelve") == AMC_ERR_USAGE);
  CHECK(config_text(c).find("train.steps = 12") != std::string::npos);
  CHECK(amc_config_load_file(c, (ws().root + "/absent.cfg").c_str()) != AMC_OK);

  // The two-call protocol reports the full size even when the buffer is short.
  char small[4];
  size_t needed = 0;
  CHECK(amc_config_text(c, small, sizeof small, &needed) == AMC_ERR_USAGE);
  CHECK(needed > sizeof small);
  amc_config_destroy(c);
  CHECK(amc_config_create(nullptr) == AMC_ERR_USAGE);
}

TEST_CASE("synthesis reports a summary and rejects empty selections") {
  amc_synth_options o{};
  const std::string out = ws().root + "/none";
  o.annotations = ws().corpus.annotations.c_str();
  o.images = ws().corpus.images.c_str();
  o.out = out.c_str();
  o.filter = "submarine";
  amc_synth_summary s{};
  CHECK(amc_synth(&o, &s) == AMC_ERR_DATA);
  CHECK(s.records == 12);
  CHECK(s.targets == 0);

  const std::string good = synth_split("animals");
  amc_dataset* d = nullptr;
  REQUIRE(amc_dataset_load(good.c_str(), &d) == AMC_OK);
  CHECK(amc_dataset_size(d) == 5);
  amc_dataset_destroy(d);
  CHECK(amc_dataset_load((ws().root + "/missing").c_str(), &d) != AMC_OK);
}

TEST_CASE("train, save, reload and evaluate") {
  const std::string data = synth_split("train_flow");
  amc_dataset* d = nullptr;
  REQUIRE(amc_dataset_load(data.c_str(), &d) == AMC_OK);
  amc_config* c = tiny_config();
  amc_trainer* t = nullptr;
  REQUIRE(amc_trainer_create(c, &t) == AMC_OK);
  CHECK(amc_trainer_total_steps(t) == 4);

  amc_step_report r{};
  for (int i = 0; i < 2; ++i) REQUIRE(amc_trainer_step(t, d, &r) == AMC_OK);
  CHECK(r.step == 1);
  CHECK(amc_trainer_step_count(t) == 2);
  CHECK(std::isfinite(r.total));
  size_t needed = 0;
  REQUIRE(amc_loss_log_line(&r, nullptr, 0, &needed) == AMC_OK);
  std::string line(needed, '\0');
  REQUIRE(amc_loss_log_line(&r, line.data(), line.size(), &needed) == AMC_OK);
  CHECK(line.rfind("1\t", 0) == 0);
  CHECK(std::string(amc_loss_log_header()).rfind("step\t", 0) == 0);

  const std::string ckpt = ws().root + "/flow.amgc";
  REQUIRE(amc_trainer_save(t, ckpt.c_str()) == AMC_OK);
  amc_trainer* back = nullptr;
  REQUIRE(amc_trainer_load(ckpt.c_str(), &back) == AMC_OK);
  CHECK(amc_trainer_step_count(back) == 2);
  amc_step_report r1{}, r2{};
  REQUIRE(amc_trainer_step(t, d, &r1) == AMC_OK);
  REQUIRE(amc_trainer_step(back, d, &r2) == AMC_OK);
  CHECK(std::memcmp(&r1, &r2, sizeof r1) == 0);

  std::vector<std::string> records;
  amc_eval_options eo{};
  eo.data = data.c_str();
  eo.checkpoint = ckpt.c_str();
  eo.source = AMC_SOURCE_MODEL;
  eo.on_record = collect;
  eo.user = &records;
  amc_metrics m{};
  REQUIRE(amc_eval(&eo, &m) == AMC_OK);
  CHECK(m.count == 5);
  REQUIRE(records.size() == 6);
  const auto agg = nlohmann::json::parse(records.back());
  CHECK(agg["aggregate"] == true);
  CHECK(agg["ssim"].get<double>() == doctest::Approx(m.ssim).epsilon(1e-9));

  eo.source = AMC_SOURCE_IDENTITY;
  eo.on_record = nullptr;
  REQUIRE(amc_eval(&eo, &m) == AMC_OK);
  CHECK(m.l1 == 0.0);
  CHECK(std::isinf(m.psnr_db));

  eo.source = AMC_SOURCE_MODEL;
  eo.checkpoint = nullptr;
  CHECK(amc_eval(&eo, &m) == AMC_ERR_USAGE);

  // A 64-pixel split does not fit a 32-pixel model.
  amc_synth_options o{};
  const std::string big = ws().root + "/big";
  o.annotations = ws().corpus.annotations.c_str();
  o.images = ws().corpus.images.c_str();
  o.out = big.c_str();
  o.filter = "dog";
  amc_synth_summary s{};
  REQUIRE(amc_synth(&o, &s) == AMC_OK);
  amc_dataset* d64 = nullptr;
  REQUIRE(amc_dataset_load(big.c_str(), &d64) == AMC_OK);
  CHECK(amc_trainer_step(t, d64, &r) == AMC_ERR_DATA);

  amc_dataset_destroy(d64);
  amc_trainer_destroy(back);
  amc_trainer_destroy(t);
  amc_config_destroy(c);
  amc_dataset_destroy(d);
}

TEST_CASE("corrupt checkpoints are format errors") {
  const std::string path = ws().root + "/junk.amgc";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("JUNKJUNK", f);
    std::fclose(f);
  }
  amc_trainer* t = nullptr;
  CHECK(amc_trainer_load(path.c_str(), &t) == AMC_ERR_FORMAT);
  CHECK(t == nullptr);
  CHECK(std::string(amc_last_error()).find("magic") != std::string::npos);
}

TEST_CASE("audit passes and the injected fault is caught") {
  std::vector<std::string> lines;
  int passed = 0;
  REQUIRE(amc_audit(0, collect, &lines, &passed) == AMC_OK);
  CHECK(passed == 1);
  CHECK_FALSE(lines.empty());
  lines.clear();
  REQUIRE(amc_audit(1, collect, &lines, &passed) == AMC_OK);
  CHECK(passed == 0);
  std::size_t failed = 0;
  for (const auto& l : lines) failed += l.rfind("FAIL", 0) == 0;
  CHECK(failed > 0);
}
