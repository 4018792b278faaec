// SPDX-License-Identifier: Apache-2.0
// amodal: command-line front end over the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "amodal/amodal.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
  amc_status status;
  bool reported = false;  // message already printed
};

void check(amc_status s) {
  if (s != AMC_OK) throw Failure{s};
}

// Two-call buffer protocol shared by the text getters.
template <typename F>
std::string fetch_text(F&& call) {
  size_t needed = 0;
  check(call(nullptr, 0, &needed));
  std::string buf(needed, '\0');
  check(call(buf.data(), buf.size(), &needed));
  buf.resize(needed - 1);
  return buf;
}

void usage_error(const std::string& message) {
  std::cerr << "amodal: " << message << "\n";
  throw Failure{AMC_ERR_USAGE, true};
}

void print_line(const char* line, void* user) {
  auto* out = static_cast<std::ostream*>(user);
  *out << line << "\n";
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string annotations, images, out, filter, augment = "none", split = "train";
  std::uint64_t seed = 1;
  int resolution = 64;
};

int run_synth(const SynthArgs& a) {
  amc_synth_options o{};
  o.annotations = a.annotations.c_str();
  o.images = a.images.c_str();
  o.out = a.out.c_str();
  o.filter = a.filter.c_str();
  o.augment = a.augment.c_str();
  o.split = a.split.c_str();
  o.seed = a.seed;
  o.resolution = a.resolution;
  std::cerr << "resolved: annotations=" << a.annotations << " images=" << a.images << " out=" << a.out
            << " filter=" << a.filter << " augment=" << a.augment << " split=" << a.split << " seed=" << a.seed
            << " resolution=" << a.resolution << "\n";
  amc_synth_summary s{};
  const amc_status st = amc_synth(&o, &s);
  std::printf(
      "synthesized %zu samples (targets=%zu records=%zu annotations=%zu skipped: empty_segmentation=%zu "
      "missing_image=%zu invalid=%zu no_occluder=%zu augment=%zu)\n",
      s.samples, s.targets, s.records, s.annotations, s.skipped_empty_segmentation, s.skipped_missing_image,
      s.skipped_invalid, s.skipped_no_occluder, s.skipped_augment);
  check(st);
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out, resume;
  std::vector<std::string> sets, ablate;
  int steps = -1;
  long long seed = -1;
};

std::vector<std::string> kept_log_lines(const fs::path& log, long long before_step) {
  std::vector<std::string> kept;
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("step", 0) == 0) continue;
    if (std::stoll(line.substr(0, line.find('\t'))) < before_step) kept.push_back(line);
  }
  return kept;
}

int run_train(const TrainArgs& a) {
  amc_dataset* data = nullptr;
  amc_trainer* trainer = nullptr;
  amc_config* config = nullptr;
  struct Cleanup {
    amc_dataset*& d;
    amc_trainer*& t;
    amc_config*& c;
    ~Cleanup() {
      amc_dataset_destroy(d);
      amc_trainer_destroy(t);
      amc_config_destroy(c);
    }
  } cleanup{data, trainer, config};

  check(amc_dataset_load(a.data.c_str(), &data));
  fs::create_directories(a.out);

  if (!a.resume.empty()) {
    if (!a.config.empty() || !a.sets.empty() || !a.ablate.empty() || a.seed >= 0)
      usage_error("--resume takes its configuration from the checkpoint; only --steps may change");
    check(amc_trainer_load(a.resume.c_str(), &trainer));
    if (a.steps >= 0) check(amc_trainer_set_total_steps(trainer, a.steps));
  } else {
    check(amc_config_create(&config));
    if (!a.config.empty()) check(amc_config_load_file(config, a.config.c_str()));
    for (const auto& kv : a.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) usage_error("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
      };
      check(amc_config_set(config, trim(kv.substr(0, eq)).c_str(), trim(kv.substr(eq + 1)).c_str()));
    }
    if (a.steps >= 0) check(amc_config_set(config, "train.steps", std::to_string(a.steps).c_str()));
    if (a.seed >= 0) check(amc_config_set(config, "train.seed", std::to_string(a.seed).c_str()));
    if (!a.ablate.empty()) {
      std::string joined;
      for (const auto& t : a.ablate) joined += (joined.empty() ? "" : ",") + t;
      check(amc_config_set(config, "loss.ablate", joined.c_str()));
    }
    check(amc_trainer_create(config, &trainer));
  }

  const std::string resolved = fetch_text(
      [&](char* b, size_t c, size_t* n) { return amc_trainer_config_text(trainer, b, c, n); });
  std::cerr << "resolved config:\n" << resolved;
  {
    std::ofstream cfg(fs::path(a.out) / "config.txt");
    cfg << resolved;
  }

  const fs::path log_path = fs::path(a.out) / "loss_log.tsv";
  const long long start = amc_trainer_step_count(trainer);
  std::vector<std::string> previous;
  if (start > 0 && fs::exists(log_path)) previous = kept_log_lines(log_path, start);
  std::ofstream log(log_path, std::ios::trunc);
  log << amc_loss_log_header() << "\n";
  for (const auto& l : previous) log << l << "\n";
  log.flush();

  const int total = amc_trainer_total_steps(trainer);
  const int every = amc_trainer_checkpoint_every(trainer);
  for (long long step = start; step < total; ++step) {
    amc_step_report r{};
    const amc_status st = amc_trainer_step(trainer, data, &r);
    if (st != AMC_OK) {
      std::cerr << "amodal: training aborted at step " << step << "\n";
      throw Failure{st};
    }
    log << fetch_text([&](char* b, size_t c, size_t* n) { return amc_loss_log_line(&r, b, c, n); }) << "\n";
    log.flush();
    const long long done = amc_trainer_step_count(trainer);
    if (every > 0 && done % every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%06lld.amgc", done);
      check(amc_trainer_save(trainer, (fs::path(a.out) / name).string().c_str()));
    }
  }
  check(amc_trainer_save(trainer, (fs::path(a.out) / "final.amgc").string().c_str()));
  std::printf("trained %lld steps (total %lld)\n", static_cast<long long>(total) - start,
              static_cast<long long>(amc_trainer_step_count(trainer)));
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string data, checkpoint, out, region = "full", source = "model", panels;
};

struct EvalSink {
  std::ofstream file;
  std::size_t missing = 0;
};

int run_eval(const EvalArgs& a) {
  amc_eval_options o{};
  o.data = a.data.c_str();
  if (a.source == "model") o.source = AMC_SOURCE_MODEL;
  else if (a.source == "identity") o.source = AMC_SOURCE_IDENTITY;
  else if (a.source == "zero") o.source = AMC_SOURCE_ZERO_MODEL;
  else if (a.source == "masked") o.source = AMC_SOURCE_MASKED_INPUT;
  if (o.source == AMC_SOURCE_MODEL && a.checkpoint.empty()) usage_error("--source model needs --checkpoint");
  o.checkpoint = a.checkpoint.empty() ? nullptr : a.checkpoint.c_str();
  o.hole_region = a.region == "hole" ? 1 : 0;
  o.panel_dir = a.panels.empty() ? nullptr : a.panels.c_str();

  EvalSink sink;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    sink.file.open(fs::path(a.out) / "metrics.jsonl", std::ios::trunc);
  }
  o.user = &sink;
  o.on_record = [](const char* line, void* user) {
    auto* s = static_cast<EvalSink*>(user);
    std::printf("%s\n", line);
    if (s->file.is_open()) s->file << line << "\n";
  };
  o.on_missing = [](const char* stem, void* user) {
    ++static_cast<EvalSink*>(user)->missing;
    std::fprintf(stderr, "missing sample: %s\n", stem);
  };
  std::cerr << "resolved: data=" << a.data << " checkpoint=" << a.checkpoint << " source=" << a.source
            << " region=" << a.region << " panels=" << a.panels << "\n";
  amc_metrics m{};
  check(amc_eval(&o, &m));
  if (sink.missing > 0) std::fprintf(stderr, "%zu samples missing\n", sink.missing);
  return 0;
}

// --- complete / audit --------------------------------------------------------

struct CompleteArgs {
  std::string checkpoint, image, mask, out;
};

int run_complete(const CompleteArgs& a) {
  check(amc_complete(a.checkpoint.c_str(), a.image.c_str(), a.mask.c_str(), a.out.c_str()));
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

int run_audit(bool inject_fault) {
  int passed = 0;
  check(amc_audit(inject_fault ? 1 : 0, print_line, &std::cout, &passed));
  std::cout << (passed ? "audit passed" : "audit FAILED") << std::endl;
  return passed ? 0 : amc_exit_code(AMC_ERR_NUMERIC);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Amodal content completion toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(amc_version()));

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Synthesize occlusion training samples from COCO-style annotations");
  s->add_option("--annotations", synth.annotations, "Annotation JSON")->required()->check(CLI::ExistingFile);
  s->add_option("--images", synth.images, "Image directory")->required()->check(CLI::ExistingDirectory);
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--filter", synth.filter, "Comma-separated category or supercategory names");
  s->add_option("--augment", synth.augment, "Augmentation recipe, e.g. hflip,crop")->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--resolution", synth.resolution, "Square sample size")->capture_default_str()->check(
      CLI::Range(8, 4096));
  s->add_option("--split", synth.split, "Split name")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the completion network");
  t->add_option("--data", train.data, "Synthesized split directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--config", train.config, "Config file (section.key = value)")->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Run directory")->required();
  t->add_option("--set", train.sets, "Override a config key, key=value (repeatable)");
  t->add_option("--steps", train.steps, "Total training steps")->check(CLI::NonNegativeNumber);
  t->add_option("--seed", train.seed, "Training seed")->check(CLI::NonNegativeNumber);
  t->add_option("--ablate", train.ablate, "Drop a loss term: hinge|perceptual|patch|style|l1 (repeatable)");
  t->add_option("--resume", train.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score completions with L1, L2, PSNR and SSIM");
  e->add_option("--data", eval.data, "Synthesized split directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--checkpoint", eval.checkpoint, "Trained checkpoint")->check(CLI::ExistingFile);
  e->add_option("--out", eval.out, "Directory for metrics.jsonl");
  e->add_option("--region", eval.region, "full|hole")->check(CLI::IsMember({"full", "hole"}))->capture_default_str();
  e->add_option("--source", eval.source, "model|identity|zero|masked")
      ->check(CLI::IsMember({"model", "identity", "zero", "masked"}))
      ->capture_default_str();
  e->add_option("--panels", eval.panels, "Write gt | weighted mask | masked | output panels here");

  CompleteArgs complete;
  auto* c = app.add_subcommand("complete", "Complete one image given a three-level weighted mask PNG");
  c->add_option("--checkpoint", complete.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  c->add_option("--image", complete.image, "Input image")->required()->check(CLI::ExistingFile);
  c->add_option("--mask", complete.mask, "Weighted mask (black hidden, grey context, white visible)")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--out", complete.out, "Output PNG")->required();

  bool inject_fault = false;
  auto* a = app.add_subcommand("audit", "Run the finite-difference gradient audit");
  a->add_flag("--inject-fault", inject_fault, "Corrupt one backward rule (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (s->parsed()) return run_synth(synth);
    if (t->parsed()) return run_train(train);
    if (e->parsed()) return run_eval(eval);
    if (c->parsed()) return run_complete(complete);
    if (a->parsed()) return run_audit(inject_fault);
  } catch (const Failure& f) {
    if (!f.reported) std::cerr << "amodal: " << amc_status_name(f.status) << " error: " << amc_last_error() << "\n";
    return amc_exit_code(f.status);
  } catch (const std::exception& ex) {
    std::cerr << "amodal: " << ex.what() << "\n";
    return 2;
  }
  return 1;
}
