#ifndef REINET_H
#define REINET_H

#pragma once

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * How `reinet_evaluate` picks actions.
 */
typedef enum ReinetPolicy {
  REINET_POLICY_GREEDY = 0,
  REINET_POLICY_SAMPLE = 1,
  REINET_POLICY_RANDOM = 2,
} ReinetPolicy;

/**
 * Result code of every call.
 */
typedef enum ReinetStatus {
  REINET_STATUS_OK = 0,
  REINET_STATUS_NULL_POINTER = 1,
  REINET_STATUS_INVALID_ARGUMENT = 2,
  REINET_STATUS_TOPOLOGY = 3,
  REINET_STATUS_CONFIG = 4,
  REINET_STATUS_SHAPE = 5,
  REINET_STATUS_PROTOCOL = 6,
  REINET_STATUS_ENV = 7,
  REINET_STATUS_NON_FINITE = 8,
  REINET_STATUS_NO_DATA = 9,
  REINET_STATUS_IO = 10,
  REINET_STATUS_JSON = 11,
  REINET_STATUS_BUFFER_TOO_SMALL = 12,
  REINET_STATUS_PANIC = 99,
} ReinetStatus;

/**
 * Opaque environment instance.
 */
typedef struct ReinetEnv ReinetEnv;

/**
 * Opaque directed acyclic graph.
 */
typedef struct ReinetTopology ReinetTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *reinet_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void reinet_string_free(char *s);

/**
 * Parses a graph file document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ReinetStatus reinet_topology_from_json(const char *json, struct ReinetTopology **out);

/**
 * # Safety
 * `t` must be null or a handle from `reinet_topology_from_json`.
 */
void reinet_topology_free(struct ReinetTopology *t);

/**
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum ReinetStatus reinet_topology_vertex_count(const struct ReinetTopology *t, size_t *out);

/**
 * Sets `*valid` and, when invalid, stores the reasons as the last error.
 *
 * # Safety
 * `t` must be a live handle; `valid` must be writable.
 */
enum ReinetStatus reinet_topology_validate(const struct ReinetTopology *t, bool *valid);

/**
 * Writes the outgoing depth of every vertex into `depths[0..len]`.
 *
 * # Safety
 * `t` must be a live handle; `depths` must hold `len` values.
 */
enum ReinetStatus reinet_topology_depths(const struct ReinetTopology *t,
                                         size_t *depths,
                                         size_t len);

/**
 * Layered form of the graph as a JSON document.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum ReinetStatus reinet_topology_to_layered_json(const struct ReinetTopology *t, char **out);

/**
 * Creates an environment by name (`"spread"` or `"balance"`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum ReinetStatus reinet_env_new(const char *name, struct ReinetEnv **out);

/**
 * # Safety
 * `e` must be null or a handle from `reinet_env_new`.
 */
void reinet_env_free(struct ReinetEnv *e);

/**
 * # Safety
 * `e` must be a live handle; the out pointers must be writable.
 */
enum ReinetStatus reinet_env_spec(const struct ReinetEnv *e,
                                  size_t *n_agents,
                                  size_t *obs_dim,
                                  size_t *n_actions);

/**
 * Resets and writes the agent-major observations (`n_agents * obs_dim`).
 *
 * # Safety
 * `e` must be a live handle; `obs` must hold `obs_len` values.
 */
enum ReinetStatus reinet_env_reset(struct ReinetEnv *e, uint64_t seed, double *obs, size_t obs_len);

/**
 * Applies one action per agent.
 *
 * # Safety
 * `e` must be a live handle; `actions` must hold `n_actions_in` values,
 * `obs` `obs_len` values and `rewards` `rewards_len` values; `done` must be
 * writable.
 */
enum ReinetStatus reinet_env_step(struct ReinetEnv *e,
                                  const size_t *actions,
                                  size_t n_actions_in,
                                  double *obs,
                                  size_t obs_len,
                                  double *rewards,
                                  size_t rewards_len,
                                  bool *done);

/**
 * Trains from a run-config JSON document. When `out_dir` is non-null,
 * metrics and checkpoints are written there. `*metrics_json` receives the
 * metrics rows as a JSON array.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string, `out_dir` null or one;
 * `metrics_json` must be writable.
 */
enum ReinetStatus reinet_train(const char *config_json, const char *out_dir, char **metrics_json);

/**
 * Evaluates a checkpoint directory.
 *
 * # Safety
 * `checkpoint_dir` must be a NUL-terminated string; `mean` and `std` must
 * be writable.
 */
enum ReinetStatus reinet_evaluate(const char *checkpoint_dir,
                                  size_t episodes,
                                  uint64_t seed,
                                  enum ReinetPolicy policy,
                                  double *mean,
                                  double *std);

/**
 * Bins a metrics CSV and returns the summary rows as a JSON array.
 *
 * # Safety
 * `metrics_csv` must be a NUL-terminated path; `out` must be writable.
 */
enum ReinetStatus reinet_summarize(const char *metrics_csv, size_t bin, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REINET_H */
