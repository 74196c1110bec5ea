#ifndef CATCHSIM_H
#define CATCHSIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_ARGUMENT = 2,
  CS_STATUS_IO = 3,
  /**
   * Malformed JSON, CSV or weights file.
   */
  CS_STATUS_FORMAT = 4,
  /**
   * The pipeline needs a network that was not loaded.
   */
  CS_STATUS_MISSING_WEIGHTS = 5,
  /**
   * Not enough or unusable detections for a prediction.
   */
  CS_STATUS_ESTIMATION = 6,
  CS_STATUS_INTERNAL = 7,
} CsStatus;

/**
 * Opaque experiment configuration.
 */
typedef struct CsConfig CsConfig;

/**
 * Opaque set of trained networks.
 */
typedef struct CsNetworks CsNetworks;

typedef struct CsEpisode {
  uint64_t seed;
  bool success;
  double miss_distance;
  double tof;
  double distance;
  double required_travel;
  uint32_t n_camera;
  uint32_t n_radar;
  uint32_t n_predictions;
} CsEpisode;

typedef struct CsMetrics {
  uint32_t n;
  uint32_t catches;
  double catch_rate;
  double ci_low;
  double ci_high;
  double miss_mean;
  double miss_p50;
  double miss_p90;
} CsMetrics;

typedef struct CsDetection {
  double x;
  double y;
  double z;
  double t;
  /**
   * 0 camera, 1 radar.
   */
  uint8_t source;
} CsDetection;

typedef struct CsInterception {
  double x;
  double y;
  double z_plane;
  /**
   * NaN when no crossing time was estimated.
   */
  double t_cross;
} CsInterception;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *cs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Paper-like noise profile defaults.
 */
struct CsConfig *cs_config_paper_like(void);

/**
 * Noiseless profile defaults.
 */
struct CsConfig *cs_config_noiseless(void);

/**
 * Parses a JSON config (same keys as the CLI `--config` file).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CsStatus cs_config_from_json(const char *json, struct CsConfig **out);

/**
 * # Safety
 * `cfg` must come from a `cs_config_*` constructor and not be used after.
 */
void cs_config_free(struct CsConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum CsStatus cs_config_set_seed(struct CsConfig *cfg, uint64_t seed);

/**
 * Worker threads for experiments; 0 uses all cores.
 *
 * # Safety
 * `cfg` must be a live config handle.
 */
enum CsStatus cs_config_set_threads(struct CsConfig *cfg, uint32_t threads);

/**
 * Pipeline name such as `"color+ballistic"` or `"cnn+cnn"`.
 *
 * # Safety
 * `cfg` must be a live config handle and `name` a NUL-terminated string.
 */
enum CsStatus cs_config_set_pipeline(struct CsConfig *cfg, const char *name);

/**
 * Loads trained weights. Either path may be NULL to skip that network.
 *
 * # Safety
 * `cfg` must be a live config handle, paths NULL or NUL-terminated, `out`
 * writable.
 */
enum CsStatus cs_networks_load(const struct CsConfig *cfg,
                               const char *localizer_path,
                               const char *interceptor_path,
                               struct CsNetworks **out);

/**
 * # Safety
 * `nets` must come from `cs_networks_load` and not be used after.
 */
void cs_networks_free(struct CsNetworks *nets);

/**
 * One closed-loop episode. `nets` may be NULL for color+ballistic.
 *
 * # Safety
 * `cfg` must be a live config handle, `nets` NULL or live, `out` writable.
 */
enum CsStatus cs_run_episode(const struct CsConfig *cfg,
                             const struct CsNetworks *nets,
                             uint64_t seed,
                             struct CsEpisode *out);

/**
 * `n_throws` seeded episodes aggregated into catch statistics.
 *
 * # Safety
 * `cfg` must be a live config handle, `nets` NULL or live, `out` writable.
 */
enum CsStatus cs_run_experiment(const struct CsConfig *cfg,
                                const struct CsNetworks *nets,
                                uint32_t n_throws,
                                struct CsMetrics *out);

/**
 * Ballistic least-squares interception from time-ordered detections.
 *
 * # Safety
 * `detections` must point to `n` readable elements (or be NULL with n = 0);
 * `out` must be writable.
 */
enum CsStatus cs_predict_ballistic(const struct CsDetection *detections,
                                   size_t n,
                                   double gravity,
                                   double z_plane,
                                   struct CsInterception *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CATCHSIM_H */
