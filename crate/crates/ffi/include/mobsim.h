#ifndef MOBSIM_H
#define MOBSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which per-trajectory samples to extract.
 */
typedef enum {
  /**
   * Radius of gyration per user, meters.
   */
  MOBSIM_MEASURE_RADIUS = 0,
  /**
   * Pooled distances between consecutive stays, meters.
   */
  MOBSIM_MEASURE_TRAVEL_DISTANCE = 1,
  /**
   * Pooled stay durations, slots.
   */
  MOBSIM_MEASURE_STAY_DURATION = 2,
  /**
   * Zipf exponent per user with enough distinct locations.
   */
  MOBSIM_MEASURE_ZETA = 3,
} MobsimMeasure;

/**
 * Result code of every fallible call.
 */
typedef enum {
  MOBSIM_STATUS_OK = 0,
  MOBSIM_STATUS_NULL_POINTER = 1,
  MOBSIM_STATUS_INVALID_UTF8 = 2,
  MOBSIM_STATUS_INVALID_ARGUMENT = 3,
  MOBSIM_STATUS_BUFFER_TOO_SMALL = 4,
  MOBSIM_STATUS_IO = 5,
  MOBSIM_STATUS_PARSE = 6,
  MOBSIM_STATUS_INSUFFICIENT_DATA = 7,
  MOBSIM_STATUS_GENERATION = 8,
  MOBSIM_STATUS_CONFIG = 9,
  MOBSIM_STATUS_SEARCH = 10,
  MOBSIM_STATUS_PANIC = 11,
} MobsimStatus;

/**
 * Grid geometry and time resolution.
 */
typedef struct MobsimGrid MobsimGrid;

/**
 * A prompt set: one structured prompt per user.
 */
typedef struct MobsimPromptSet MobsimPromptSet;

/**
 * A set of trajectories, one per user.
 */
typedef struct MobsimTrajectories MobsimTrajectories;

/**
 * Fitted truncated power law `(x + x0)^-beta * exp(-x / kappa)`.
 */
typedef struct {
  double beta;
  double kappa;
  double x0;
  double loglik;
  /**
   * Positive samples used.
   */
  size_t n;
} MobsimPowerLawFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library; valid until the next failing call on this thread.
 */
const char *mobsim_last_error(void);

/**
 * Library version, statically allocated.
 */
const char *mobsim_version(void);

/**
 * Release a string returned by the library. Null is ignored.
 */
void mobsim_string_free(char *s);

/**
 * Create a grid of square `cell_size_m` cells anchored at
 * (`origin_lat`, `origin_lon`) with `slots_per_day` time slots.
 */
MobsimStatus mobsim_grid_new(double cell_size_m,
                             double origin_lat,
                             double origin_lon,
                             uint32_t slots_per_day,
                             MobsimGrid **out_grid);

/**
 * The default grid: 500 m cells, 48 slots per day.
 */
MobsimStatus mobsim_grid_default(MobsimGrid **out_grid);

void mobsim_grid_free(MobsimGrid *grid);

/**
 * Read a trajectory CSV (`user_id,day,start_slot,duration_slots,cell_x,cell_y`).
 */
MobsimStatus mobsim_trajectories_read_csv(const char *path,
                                          const MobsimGrid *grid,
                                          MobsimTrajectories **out_trajectories);

MobsimStatus mobsim_trajectories_write_csv(const MobsimTrajectories *trajectories,
                                           const MobsimGrid *grid,
                                           const char *path);

/**
 * Number of trajectories (users) in the set.
 */
MobsimStatus mobsim_trajectories_len(const MobsimTrajectories *trajectories, size_t *out_len);

void mobsim_trajectories_free(MobsimTrajectories *trajectories);

/**
 * Copy the samples of `measure` into `buf`.
 */
MobsimStatus mobsim_trajectories_measure(const MobsimTrajectories *trajectories,
                                         const MobsimGrid *grid,
                                         MobsimMeasure measure,
                                         double *buf,
                                         size_t cap,
                                         size_t *out_len);

/**
 * Compare two trajectory sets; writes the evaluation report as a JSON
 * string to `out_json`.
 */
MobsimStatus mobsim_evaluate_json(const MobsimTrajectories *simulated,
                                  const MobsimTrajectories *reference,
                                  const MobsimGrid *grid,
                                  char **out_json);

/**
 * The built-in seeded population of `users` prompts over `days` days.
 */
MobsimStatus mobsim_promptset_default(size_t users,
                                      uint32_t days,
                                      const MobsimGrid *grid,
                                      uint64_t seed,
                                      MobsimPromptSet **out_prompts);

MobsimStatus mobsim_promptset_read(const char *path, MobsimPromptSet **out_prompts);

MobsimStatus mobsim_promptset_write(const MobsimPromptSet *prompts, const char *path);

MobsimStatus mobsim_promptset_len(const MobsimPromptSet *prompts, size_t *out_len);

/**
 * Content hash of the prompt set (hex), as a library-owned string.
 */
MobsimStatus mobsim_promptset_hash(const MobsimPromptSet *prompts, char **out_hash);

void mobsim_promptset_free(MobsimPromptSet *prompts);

/**
 * Generate trajectories with the built-in generator. Users that fail are
 * left out; their number goes to `out_failures` when it is not null.
 */
MobsimStatus mobsim_generate(const MobsimPromptSet *prompts,
                             const MobsimGrid *grid,
                             MobsimTrajectories **out_trajectories,
                             size_t *out_failures);

/**
 * Maximum-likelihood truncated power law of `samples` with offset `x0`.
 */
MobsimStatus mobsim_fit_truncated_power_law(const double *samples,
                                            size_t n,
                                            double x0,
                                            MobsimPowerLawFit *out_fit);

/**
 * 1-Wasserstein distance between `ln(x + eps)` of two samples.
 */
MobsimStatus mobsim_w1_log(const double *a,
                           size_t na,
                           const double *b,
                           size_t nb,
                           double eps,
                           double *out_value);

/**
 * L1 distance between the CCDFs of two samples, in log coordinates when
 * `log_coords` is set.
 */
MobsimStatus mobsim_l1_ccdf(const double *a,
                            size_t na,
                            const double *b,
                            size_t nb,
                            bool log_coords,
                            double eps,
                            double *out_value);

/**
 * Geometric mean of `g_i + eps`.
 */
MobsimStatus mobsim_aggregate_r(const double *gs, size_t n, double eps, double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOBSIM_H */
