// SPDX-License-Identifier: Apache-2.0
#include "amodal/amodal.h"

#include <cstring>
#include <exception>
#include <memory>
#include <string>

#include "amodal/audit.hpp"
#include "amodal/config.hpp"
#include "amodal/dataset.hpp"
#include "amodal/error.hpp"
#include "amodal/evaluate.hpp"
#include "amodal/image_io.hpp"
#include "amodal/ops.hpp"
#include "amodal/trainer.hpp"

struct amc_config {
  amodal::ConfigMap map;
};

struct amc_dataset {
  std::vector<amodal::CompositeSample> samples;
};

struct amc_trainer {
  explicit amc_trainer(amodal::Trainer t) : trainer(std::move(t)) {}
  amodal::Trainer trainer;
};

namespace {

thread_local std::string g_last_error;

amc_status status_of(amodal::ErrorKind k) {
  switch (k) {
    case amodal::ErrorKind::kUsage: return AMC_ERR_USAGE;
    case amodal::ErrorKind::kData: return AMC_ERR_DATA;
    case amodal::ErrorKind::kNumeric: return AMC_ERR_NUMERIC;
    case amodal::ErrorKind::kShape: return AMC_ERR_SHAPE;
    case amodal::ErrorKind::kFormat: return AMC_ERR_FORMAT;
    case amodal::ErrorKind::kIo: return AMC_ERR_IO;
  }
  return AMC_ERR_INTERNAL;
}

template <typename F>
amc_status guard(F&& f) {
  try {
    f();
    return AMC_OK;
  } catch (const amodal::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return AMC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "internal error: unknown exception";
    return AMC_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) amodal::fail(amodal::ErrorKind::kUsage, std::string(what) + " must not be null");
}

void copy_text(const std::string& text, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (buf == nullptr) return;
  if (cap < text.size() + 1) amodal::fail(amodal::ErrorKind::kUsage, "output buffer too small");
  std::memcpy(buf, text.c_str(), text.size() + 1);
}

amodal::StepReport to_internal(const amc_step_report& r) {
  amodal::StepReport s;
  s.step = r.step;
  s.d_loss = r.d_loss;
  for (int i = 0; i < 5; ++i) s.g.components[static_cast<std::size_t>(i)] = r.components[i];
  s.g.total = r.total;
  return s;
}

}  // namespace

extern "C" {

const char* amc_version(void) { return "1.0.0"; }

const char* amc_last_error(void) { return g_last_error.c_str(); }

const char* amc_status_name(amc_status status) {
  switch (status) {
    case AMC_OK: return "ok";
    case AMC_ERR_USAGE: return "usage";
    case AMC_ERR_DATA: return "data";
    case AMC_ERR_NUMERIC: return "numeric";
    case AMC_ERR_SHAPE: return "shape";
    case AMC_ERR_FORMAT: return "format";
    case AMC_ERR_IO: return "io";
    case AMC_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int amc_exit_code(amc_status status) {
  switch (status) {
    case AMC_OK: return 0;
    case AMC_ERR_USAGE: return 1;
    case AMC_ERR_NUMERIC: return 3;
    default: return 2;
  }
}

amc_status amc_config_create(amc_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new amc_config();
  });
}

amc_status amc_config_load_file(amc_config* config, const char* path) {
  return guard([&] {
    need(config, "config");
    need(path, "path");
    config->map.merge(amodal::ConfigMap::load(path));
  });
}

amc_status amc_config_set(amc_config* config, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    amodal::ConfigMap probe;
    probe.set(key, value);
    (void)amodal::apply_config(probe);  // rejects unknown keys and malformed values now
    config->map.set(key, value);
  });
}

amc_status amc_config_text(const amc_config* config, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    need(config, "config");
    copy_text(amodal::config_text(amodal::apply_config(config->map)), buf, cap, needed);
  });
}

void amc_config_destroy(amc_config* config) { delete config; }

amc_status amc_synth(const amc_synth_options* options, amc_synth_summary* summary) {
  return guard([&] {
    need(options, "options");
    need(options->annotations, "annotations");
    need(options->images, "images");
    need(options->out, "out");
    const amodal::AnnotationSet set = amodal::parse_annotations(options->annotations, options->images);
    const std::string filter = options->filter ? options->filter : "";
    const std::string augment = options->augment ? options->augment : "none";
    const std::string split = options->split ? options->split : "train";
    const amodal::DatasetManifest manifest = amodal::make_manifest(set, filter, augment, options->seed, split);
    amodal::SynthSettings settings;
    if (options->resolution > 0) settings.resolution = options->resolution;
    amodal::SynthSummary s;
    if (!manifest.targets.empty()) s = amodal::synthesize_split(manifest, settings, options->out);
    if (summary) {
      summary->annotations = set.stats.annotations;
      summary->records = set.stats.records;
      summary->skipped_empty_segmentation = set.stats.skipped_empty_segmentation;
      summary->skipped_missing_image = set.stats.skipped_missing_image;
      summary->skipped_invalid = set.stats.skipped_invalid;
      summary->targets = manifest.targets.size();
      summary->samples = s.samples;
      summary->skipped_no_occluder = s.skipped_no_occluder;
      summary->skipped_augment = s.skipped_augment;
    }
    if (manifest.targets.empty()) amodal::fail(amodal::ErrorKind::kData, "no instance matches filter '" + filter + "'");
    if (s.samples == 0) amodal::fail(amodal::ErrorKind::kData, "no sample could be synthesized");
  });
}

amc_status amc_dataset_load(const char* dir, amc_dataset** out) {
  return guard([&] {
    need(dir, "dir");
    need(out, "out");
    auto d = std::make_unique<amc_dataset>();
    d->samples = amodal::load_split(dir);
    *out = d.release();
  });
}

size_t amc_dataset_size(const amc_dataset* dataset) { return dataset ? dataset->samples.size() : 0; }

void amc_dataset_destroy(amc_dataset* dataset) { delete dataset; }

amc_status amc_trainer_create(const amc_config* config, amc_trainer** out) {
  return guard([&] {
    need(out, "out");
    const amodal::TrainConfig tc = config ? amodal::apply_config(config->map) : amodal::TrainConfig{};
    *out = new amc_trainer(amodal::Trainer(tc));
  });
}

amc_status amc_trainer_load(const char* checkpoint, amc_trainer** out) {
  return guard([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = new amc_trainer(amodal::Trainer::load(checkpoint));
  });
}

amc_status amc_trainer_step(amc_trainer* trainer, const amc_dataset* data, amc_step_report* report) {
  return guard([&] {
    need(trainer, "trainer");
    need(data, "data");
    const int res = trainer->trainer.config().model.resolution;
    const auto& first = data->samples.front();
    if (first.height() != res || first.width() != res)
      amodal::fail(amodal::ErrorKind::kData, "samples are " + std::to_string(first.height()) + "x" +
                                                 std::to_string(first.width()) + " but model.resolution is " +
                                                 std::to_string(res));
    const amodal::StepReport r = trainer->trainer.step(data->samples);
    if (report) {
      report->step = r.step;
      report->d_loss = r.d_loss;
      for (int i = 0; i < 5; ++i) report->components[i] = r.g.components[static_cast<std::size_t>(i)];
      report->total = r.g.total;
    }
  });
}

amc_status amc_trainer_save(amc_trainer* trainer, const char* path) {
  return guard([&] {
    need(trainer, "trainer");
    need(path, "path");
    trainer->trainer.save(path);
  });
}

int64_t amc_trainer_step_count(const amc_trainer* trainer) { return trainer ? trainer->trainer.step_count() : -1; }

int amc_trainer_total_steps(const amc_trainer* trainer) { return trainer ? trainer->trainer.config().steps : -1; }

amc_status amc_trainer_set_total_steps(amc_trainer* trainer, int steps) {
  return guard([&] {
    need(trainer, "trainer");
    trainer->trainer.set_total_steps(steps);
  });
}

int amc_trainer_checkpoint_every(const amc_trainer* trainer) {
  return trainer ? trainer->trainer.config().checkpoint_every : -1;
}

amc_status amc_trainer_config_text(const amc_trainer* trainer, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    need(trainer, "trainer");
    copy_text(amodal::config_text(trainer->trainer.config()), buf, cap, needed);
  });
}

void amc_trainer_destroy(amc_trainer* trainer) { delete trainer; }

const char* amc_loss_log_header(void) {
  static const std::string header = amodal::loss_log_header();
  return header.c_str();
}

amc_status amc_loss_log_line(const amc_step_report* report, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    need(report, "report");
    copy_text(amodal::loss_log_line(to_internal(*report)), buf, cap, needed);
  });
}

amc_status amc_eval(const amc_eval_options* options, amc_metrics* aggregate) {
  return guard([&] {
    need(options, "options");
    need(options->data, "data");
    std::vector<std::string> stems, missing;
    const auto samples = amodal::load_split(options->data, &stems, &missing);
    if (options->on_missing)
      for (const auto& m : missing) options->on_missing(m.c_str(), options->user);

    std::optional<amodal::Generator> generator;
    amodal::EvalSource source = amodal::EvalSource::kGenerator;
    switch (options->source) {
      case AMC_SOURCE_MODEL: {
        need(options->checkpoint, "checkpoint");
        generator = amodal::Trainer::load(options->checkpoint).generator();
        break;
      }
      case AMC_SOURCE_ZERO_MODEL: {
        amodal::ModelConfig mc;
        mc.resolution = samples.front().height();
        generator.emplace(mc);
        for (amodal::Parameter* p : generator->params()) p->value.fill(0.0);
        break;
      }
      case AMC_SOURCE_IDENTITY: source = amodal::EvalSource::kIdentity; break;
      case AMC_SOURCE_MASKED_INPUT: source = amodal::EvalSource::kMaskedInput; break;
      default: amodal::fail(amodal::ErrorKind::kUsage, "unknown evaluation source");
    }
    if (generator && generator->config().resolution != samples.front().height())
      amodal::fail(amodal::ErrorKind::kData, "checkpoint resolution does not match the samples");

    amodal::EvalOptions eo;
    eo.hole_region = options->hole_region != 0;
    if (options->panel_dir) eo.panel_dir = options->panel_dir;
    const amodal::MetricReport report =
        amodal::evaluate_samples(samples, stems, source, generator ? &*generator : nullptr, eo);
    if (options->on_record) {
      for (const auto& s : report.samples)
        options->on_record(amodal::format_metric_record(s, false).c_str(), options->user);
      options->on_record(amodal::format_metric_record(report.mean, true, report.samples.size()).c_str(),
                         options->user);
    }
    if (aggregate) *aggregate = {report.mean.l1, report.mean.l2, report.mean.psnr_db, report.mean.ssim,
                                 report.samples.size()};
  });
}

amc_status amc_complete(const char* checkpoint, const char* image, const char* mask, const char* out_png) {
  return guard([&] {
    need(checkpoint, "checkpoint");
    need(image, "image");
    need(mask, "mask");
    need(out_png, "out_png");
    amodal::Trainer t = amodal::Trainer::load(checkpoint);
    const amodal::Tensor img = amodal::image_to_tensor(amodal::read_image(image));
    const amodal::WeightedMask levels = amodal::weighted_from_image(amodal::read_image(mask));
    amodal::write_png(out_png, amodal::tensor_to_image(amodal::complete_image(t.generator(), img, levels)));
  });
}

amc_status amc_audit(int inject_fault, amc_line_fn on_line, void* user, int* passed) {
  return guard([&] {
    amodal::testing::set_backward_fault(inject_fault != 0);
    struct Reset {
      ~Reset() { amodal::testing::set_backward_fault(false); }
    } reset;
    const amodal::AuditReport report = amodal::run_audit();
    if (on_line) {
      std::string text = report.format();
      std::size_t start = 0;
      for (std::size_t nl; (nl = text.find('\n', start)) != std::string::npos; start = nl + 1)
        on_line(text.substr(start, nl - start).c_str(), user);
    }
    if (passed) *passed = report.passed() ? 1 : 0;
  });
}

}  // extern "C"
