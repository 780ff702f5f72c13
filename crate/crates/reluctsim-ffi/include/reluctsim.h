/* C interface for the reluctsim actuator simulation toolkit.
 *
 * Conventions:
 *   - Functions return RsimStatus; RSIM_OK (0) means success.
 *   - On failure, rsim_last_error() returns a thread-local message that
 *     stays valid until the next failing call on the same thread.
 *   - Out-parameters are written only on success.
 *   - Handles are released with their matching _free function; passing NULL
 *     to a _free function is a no-op.
 */

#ifndef RELUCTSIM_H
#define RELUCTSIM_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum RsimStatus {
  RSIM_OK = 0,
  RSIM_INVALID_ARGUMENT = 1,
  RSIM_IO = 2,
  RSIM_SIMULATION = 3,
  RSIM_NULL_POINTER = 4,
} RsimStatus;

typedef enum RsimColumn {
  RSIM_COL_TIME = 0,            /* s */
  RSIM_COL_MODE = 1,            /* dynamic mode index 1..6 */
  RSIM_COL_FIELD_INTENSITY = 2, /* A/m */
  RSIM_COL_GAP = 3,             /* m */
  RSIM_COL_GAP_RATE = 4,        /* m/s */
  RSIM_COL_CURRENT = 5,         /* A */
  RSIM_COL_FLUX = 6,            /* Wb */
  RSIM_COL_FORCE = 7,           /* N */
  RSIM_COL_EDDY_CURRENT = 8,    /* A */
} RsimColumn;

/* Opaque actuator model (resolved configuration). */
typedef struct RsimModel RsimModel;
/* Opaque simulation result. */
typedef struct RsimTrajectory RsimTrajectory;

/* Thread-local message for the most recent failure on this thread. */
const char *rsim_last_error(void);

/* Build a model from a configuration JSON file on disk. Relative
 * reluctance-table paths resolve against the file's directory. */
RsimStatus rsim_model_from_config_file(const char *path, RsimModel **out);

/* Build a model from a configuration JSON string. Relative table paths
 * resolve against the working directory. */
RsimStatus rsim_model_from_config_json(const char *json, RsimModel **out);

void rsim_model_free(RsimModel *model);

/* Simulate a zero-order-hold voltage waveform (times strictly increasing,
 * covering t_end) from the demagnetized rest state. */
RsimStatus rsim_simulate(const RsimModel *model, const double *times,
                         const double *volts, size_t n_samples, double t_end,
                         RsimTrajectory **out);

void rsim_trajectory_free(RsimTrajectory *traj);

/* Number of sampled records. */
size_t rsim_trajectory_len(const RsimTrajectory *traj);

/* Number of discrete jumps in the event log. */
size_t rsim_trajectory_event_count(const RsimTrajectory *traj);

/* Copy one column into a caller buffer of capacity cap (>= record count). */
RsimStatus rsim_trajectory_column(const RsimTrajectory *traj, RsimColumn column,
                                  double *out, size_t cap);

/* Replay a field-intensity sequence (A/m) through the hysteresis model from
 * the demagnetized state; writes the flux density (T) per sample. */
RsimStatus rsim_gpm_replay(const RsimModel *model, const double *h,
                           double *b_out, size_t n);

#ifdef __cplusplus
}
#endif

#endif /* RELUCTSIM_H */
