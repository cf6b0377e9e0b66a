#ifndef DIFFMOTION_H
#define DIFFMOTION_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every entry point.
typedef enum DmStatus {
  DM_STATUS_OK = 0,
  DM_STATUS_NULL_POINTER = 1,
  DM_STATUS_INVALID_ARGUMENT = 2,
  DM_STATUS_CONFIG = 3,
  DM_STATUS_FORMAT = 4,
  DM_STATUS_IO = 5,
  DM_STATUS_NUMERIC = 6,
  DM_STATUS_SHAPE = 7,
  DM_STATUS_BUFFER_TOO_SMALL = 8,
  DM_STATUS_PANIC = 9,
} DmStatus;

typedef enum DmScheduleKind {
  DM_SCHEDULE_KIND_LINEAR = 0,
  DM_SCHEDULE_KIND_COSINE_STANDARD = 1,
  DM_SCHEDULE_KIND_COSINE_OFFSET1 = 2,
} DmScheduleKind;

// Trained generator loaded from a checkpoint.
typedef struct DmModel DmModel;

// Clips sharing one skeleton.
typedef struct DmMotionSet DmMotionSet;

// Tabulated noise schedule.
typedef struct DmSchedule DmSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The
// pointer stays valid until the next failing call on the same thread.
const char *dm_last_error(void);

// Library version as a static NUL-terminated string.
const char *dm_version(void);

// # Safety
// `out` must be a valid pointer to write the new handle into.
enum DmStatus dm_schedule_new(enum DmScheduleKind kind, uintptr_t steps, struct DmSchedule **out);

// Signal weight at step `t` in `0..=T`.
//
// # Safety
// `schedule` must come from `dm_schedule_new`; `out` must be writable.
enum DmStatus dm_schedule_alpha_bar(const struct DmSchedule *schedule, uintptr_t t, double *out);

// Number of diffusion steps, or 0 for a null handle.
//
// # Safety
// `schedule` must be null or come from `dm_schedule_new`.
uintptr_t dm_schedule_steps(const struct DmSchedule *schedule);

// # Safety
// `schedule` must be null or an unfreed handle from `dm_schedule_new`.
void dm_schedule_free(struct DmSchedule *schedule);

// Reads a motion file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DmStatus dm_motion_load(const char *path, struct DmMotionSet **out);

// Generates synthetic data from a JSON synthesis config (null for defaults).
//
// # Safety
// `config_json` must be null or NUL-terminated; `out` must be writable.
enum DmStatus dm_motion_synth(const char *config_json, struct DmMotionSet **out);

// # Safety
// `set` must be a live handle; `path` must be NUL-terminated.
enum DmStatus dm_motion_save(const struct DmMotionSet *set, const char *path);

// Clip count, or 0 for a null handle.
//
// # Safety
// `set` must be null or a live handle.
uintptr_t dm_motion_clip_count(const struct DmMotionSet *set);

// Joint count, or 0 for a null handle.
//
// # Safety
// `set` must be null or a live handle.
uintptr_t dm_motion_joints(const struct DmMotionSet *set);

// Frame count of clip `index`.
//
// # Safety
// `set` must be a live handle; `frames` must be writable.
enum DmStatus dm_motion_clip_frames(const struct DmMotionSet *set,
                                    uintptr_t index,
                                    uintptr_t *frames);

// Copies clip `index` into `buf` (`frames * joints * 3` values).
//
// # Safety
// `set` must be a live handle; `buf` must hold `len` doubles.
enum DmStatus dm_motion_clip_copy(const struct DmMotionSet *set,
                                  uintptr_t index,
                                  double *buf,
                                  uintptr_t len);

// Parent of every joint (`-1` for the root) into `buf` of `len` entries.
//
// # Safety
// `set` must be a live handle; `buf` must hold `len` values.
enum DmStatus dm_motion_parents(const struct DmMotionSet *set, int64_t *buf, uintptr_t len);

// # Safety
// `set` must be null or an unfreed handle.
void dm_motion_free(struct DmMotionSet *set);

// Loads a checkpoint and rebuilds its generator and schedule.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum DmStatus dm_model_load(const char *path, struct DmModel **out);

// History length, future length, joint count and diffusion steps.
//
// # Safety
// `model` must be a live handle; every output pointer must be writable.
enum DmStatus dm_model_dims(const struct DmModel *model,
                            uintptr_t *history,
                            uintptr_t *future,
                            uintptr_t *joints,
                            uintptr_t *steps);

// Draws `count` futures for one history. `history` holds
// `H * J * 3` values; `out` receives `count * F * J * 3`. Results depend
// only on `(seed, history_index, sample index)`.
//
// # Safety
// `model` must be a live handle; buffers must hold the stated lengths.
enum DmStatus dm_model_sample(const struct DmModel *model,
                              const double *history,
                              uintptr_t history_len,
                              uintptr_t count,
                              uint64_t seed,
                              uint64_t history_index,
                              double *out,
                              uintptr_t out_len);

// # Safety
// `model` must be null or an unfreed handle.
void dm_model_free(struct DmModel *model);

// Average pairwise distance among `count` samples of `[frames, joints, 3]`.
//
// # Safety
// `samples` must hold `count * frames * joints * 3` doubles.
enum DmStatus dm_metric_apd(const double *samples,
                            uintptr_t count,
                            uintptr_t frames,
                            uintptr_t joints,
                            double *out);

// Best-of-`count` average and final displacement errors against `truth`.
//
// # Safety
// `samples` must hold `count * frames * joints * 3` doubles and `truth`
// `frames * joints * 3`.
enum DmStatus dm_metric_ade_fde(const double *samples,
                                uintptr_t count,
                                const double *truth,
                                uintptr_t frames,
                                uintptr_t joints,
                                double *ade,
                                double *fde);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFMOTION_H */
