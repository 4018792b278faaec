/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the amodal completion toolkit. Objects are opaque handles
 * created and destroyed through this API. Every fallible call returns an
 * amc_status; on failure amc_last_error() describes the problem for the
 * calling thread until its next failing call.
 *
 * Text outputs use a two-call protocol: pass buf = NULL to learn the size
 * (including the terminating NUL) in *needed, then call again with a buffer
 * of at least that many bytes.
 */
#ifndef AMODAL_AMODAL_H
#define AMODAL_AMODAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AMC_API __declspec(dllexport)
#else
#define AMC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum amc_status {
  AMC_OK = 0,
  AMC_ERR_USAGE = 1,
  AMC_ERR_DATA = 2,
  AMC_ERR_NUMERIC = 3,
  AMC_ERR_SHAPE = 4,
  AMC_ERR_FORMAT = 5,
  AMC_ERR_IO = 6,
  AMC_ERR_INTERNAL = 7
} amc_status;

typedef struct amc_config amc_config;
typedef struct amc_dataset amc_dataset;
typedef struct amc_trainer amc_trainer;

typedef void (*amc_line_fn)(const char* line, void* user);

AMC_API const char* amc_version(void);
AMC_API const char* amc_last_error(void);
AMC_API const char* amc_status_name(amc_status status);
/* Process exit code for a status: 0 ok, 1 usage, 2 data, 3 numeric. */
AMC_API int amc_exit_code(amc_status status);

/* ---- configuration (section.key = value) ---- */
AMC_API amc_status amc_config_create(amc_config** out);
AMC_API amc_status amc_config_load_file(amc_config* config, const char* path);
AMC_API amc_status amc_config_set(amc_config* config, const char* key, const char* value);
/* Fully resolved configuration text. */
AMC_API amc_status amc_config_text(const amc_config* config, char* buf, size_t cap, size_t* needed);
AMC_API void amc_config_destroy(amc_config* config);

/* ---- dataset synthesis ---- */
typedef struct amc_synth_options {
  const char* annotations; /* COCO-style document */
  const char* images;      /* image directory */
  const char* out;         /* output root; the split lands in out/split */
  const char* filter;      /* category names or supercategories, comma separated; NULL or "" keeps all */
  const char* augment;     /* token list, e.g. "none,hflip,rot90,crop"; NULL means "none" */
  const char* split;       /* NULL means "train" */
  uint64_t seed;
  int resolution;          /* 0 means 64 */
} amc_synth_options;

typedef struct amc_synth_summary {
  uint64_t annotations;
  uint64_t records;
  uint64_t skipped_empty_segmentation;
  uint64_t skipped_missing_image;
  uint64_t skipped_invalid;
  uint64_t targets;
  uint64_t samples;
  uint64_t skipped_no_occluder;
  uint64_t skipped_augment;
} amc_synth_summary;

AMC_API amc_status amc_synth(const amc_synth_options* options, amc_synth_summary* summary);

/* ---- persisted samples ---- */
AMC_API amc_status amc_dataset_load(const char* dir, amc_dataset** out);
AMC_API size_t amc_dataset_size(const amc_dataset* dataset);
AMC_API void amc_dataset_destroy(amc_dataset* dataset);

/* ---- training ---- */
typedef struct amc_step_report {
  int64_t step;
  double d_loss;
  double components[5]; /* hinge_g, perceptual, patch, style, l1; unweighted */
  double total;         /* weighted, ablated terms excluded */
} amc_step_report;

AMC_API amc_status amc_trainer_create(const amc_config* config, amc_trainer** out);
AMC_API amc_status amc_trainer_load(const char* checkpoint, amc_trainer** out);
AMC_API amc_status amc_trainer_step(amc_trainer* trainer, const amc_dataset* data, amc_step_report* report);
AMC_API amc_status amc_trainer_save(amc_trainer* trainer, const char* path);
AMC_API int64_t amc_trainer_step_count(const amc_trainer* trainer);
/* Configured step budget and checkpoint cadence. */
AMC_API int amc_trainer_total_steps(const amc_trainer* trainer);
AMC_API amc_status amc_trainer_set_total_steps(amc_trainer* trainer, int steps);
AMC_API int amc_trainer_checkpoint_every(const amc_trainer* trainer);
AMC_API amc_status amc_trainer_config_text(const amc_trainer* trainer, char* buf, size_t cap, size_t* needed);
AMC_API void amc_trainer_destroy(amc_trainer* trainer);

/* Tab-separated loss-log header and record lines (no trailing newline). */
AMC_API const char* amc_loss_log_header(void);
AMC_API amc_status amc_loss_log_line(const amc_step_report* report, char* buf, size_t cap, size_t* needed);

/* ---- evaluation ---- */
typedef enum amc_eval_source {
  AMC_SOURCE_MODEL = 0,       /* checkpoint generator */
  AMC_SOURCE_IDENTITY = 1,    /* ground truth as output */
  AMC_SOURCE_ZERO_MODEL = 2,  /* generator with every parameter zero */
  AMC_SOURCE_MASKED_INPUT = 3 /* grey-hole input as output */
} amc_eval_source;

typedef struct amc_metrics {
  double l1;
  double l2;
  double psnr_db; /* +inf for identical images */
  double ssim;
  uint64_t count;
} amc_metrics;

typedef struct amc_eval_options {
  const char* data;
  const char* checkpoint; /* required for AMC_SOURCE_MODEL */
  amc_eval_source source;
  int hole_region;        /* nonzero: metrics over the occluded pixels only */
  const char* panel_dir;  /* NULL or "": no panels */
  amc_line_fn on_record;  /* one JSON object per sample, then the aggregate */
  amc_line_fn on_missing; /* stem of each sample whose files are absent */
  void* user;
} amc_eval_options;

AMC_API amc_status amc_eval(const amc_eval_options* options, amc_metrics* aggregate);

/* ---- single image completion ---- */
/* mask: grey PNG, < 64 hidden, >= 192 visible object, otherwise context. */
AMC_API amc_status amc_complete(const char* checkpoint, const char* image, const char* mask, const char* out_png);

/* ---- self audit ---- */
/* Runs the finite-difference gradient audit; one line per check via on_line. */
AMC_API amc_status amc_audit(int inject_fault, amc_line_fn on_line, void* user, int* passed);

#ifdef __cplusplus
}
#endif

#endif /* AMODAL_AMODAL_H */
