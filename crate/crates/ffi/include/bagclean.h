#ifndef BAGCLEAN_H
#define BAGCLEAN_H

/* Generated from crates/ffi/src/lib.rs by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define BC_MODE_PR 0

#define BC_MODE_VANILLA 1

#define BC_MODE_NOSELECT 2

typedef enum BcStatus {
  BC_STATUS_OK = 0,
  BC_STATUS_NULL_POINTER = 1,
  BC_STATUS_INVALID_ARGUMENT = 2,
  BC_STATUS_PARSE = 3,
  BC_STATUS_IO = 4,
  BC_STATUS_NOT_FOUND = 5,
  BC_STATUS_CONFIG = 6,
  BC_STATUS_DIMENSION = 7,
  BC_STATUS_VALIDATION = 8,
  BC_STATUS_PANIC = 9,
} BcStatus;

typedef struct BcDataset BcDataset;

typedef struct BcRuleSet BcRuleSet;

typedef struct BcRun BcRun;

/**
 * Options for [`bc_train`]. Start from [`bc_train_options_default`].
 */
typedef struct BcTrainOptions {
  /**
   * One of `BC_MODE_PR`, `BC_MODE_VANILLA`, `BC_MODE_NOSELECT`.
   */
  uint32_t mode;
  uint64_t episodes;
  uint64_t seed;
  double lr_policy;
  double lr_classifier;
  double tau;
  uint64_t pretrain_steps;
} BcTrainOptions;

typedef struct BcEpisodeStats {
  uint64_t episode;
  double mean_reward;
  double selection_rate;
  double matched_selection_rate;
  /**
   * NaN when the dataset has no gold selection labels.
   */
  double selection_f1;
} BcEpisodeStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *bc_last_error(void);

/**
 * Rule-boosted selection probability for a base probability `p_select` in [0, 1].
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum BcStatus bc_pr_transform(double p_select, double *out);

/**
 * Compile a rules JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be null or writable.
 */
enum BcStatus bc_ruleset_from_json(const char *json, struct BcRuleSet **out);

/**
 * # Safety
 * `rules` must be null or a live handle from this library; `out` writable.
 */
enum BcStatus bc_ruleset_len(const struct BcRuleSet *rules, size_t *out);

/**
 * # Safety
 * `rules` must be null or a handle not yet freed.
 */
void bc_ruleset_free(struct BcRuleSet *rules);

/**
 * Read a dataset file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be null or writable.
 */
enum BcStatus bc_dataset_read(const char *path, struct BcDataset **out);

/**
 * Generate a synthetic dataset and its rules. `config_json` holds generator
 * settings (null for defaults); `seed` overrides the config's seed.
 *
 * # Safety
 * `config_json` must be null or NUL-terminated; the out pointers writable.
 */
enum BcStatus bc_generate(const char *config_json,
                          uint64_t seed,
                          struct BcDataset **dataset_out,
                          struct BcRuleSet **rules_out);

/**
 * # Safety
 * `dataset` must be a live handle; `path` NUL-terminated.
 */
enum BcStatus bc_dataset_write(const struct BcDataset *dataset, const char *path);

/**
 * # Safety
 * `dataset` must be a live handle; `out` writable.
 */
enum BcStatus bc_dataset_bag_count(const struct BcDataset *dataset, size_t *out);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void bc_dataset_free(struct BcDataset *dataset);

struct BcTrainOptions bc_train_options_default(void);

/**
 * Train on `dataset`. `rules` may be null except in PR mode; `options`
 * may be null for defaults.
 *
 * # Safety
 * Handles must be live; `options` null or readable; `out` writable.
 */
enum BcStatus bc_train(const struct BcDataset *dataset,
                       const struct BcRuleSet *rules,
                       const struct BcTrainOptions *options,
                       struct BcRun **out);

/**
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum BcStatus bc_run_episode_count(const struct BcRun *run, size_t *out);

/**
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum BcStatus bc_run_episode_stats(const struct BcRun *run,
                                   size_t index,
                                   struct BcEpisodeStats *out);

/**
 * Write the per-episode metrics CSV.
 *
 * # Safety
 * `run` must be a live handle; `path` NUL-terminated.
 */
enum BcStatus bc_run_write_metrics(const struct BcRun *run, const char *path);

/**
 * Write the trained policy and classifier checkpoints as JSON.
 *
 * # Safety
 * `run` must be a live handle; both paths NUL-terminated.
 */
enum BcStatus bc_run_write_checkpoints(const struct BcRun *run,
                                       const char *policy_path,
                                       const char *classifier_path);

/**
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void bc_run_free(struct BcRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BAGCLEAN_H */
