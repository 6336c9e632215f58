#ifndef BTBEAM_H
#define BTBEAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BtbeamStatus {
  BTBEAM_STATUS_OK = 0,
  BTBEAM_STATUS_NULL_POINTER = 1,
  BTBEAM_STATUS_INVALID_PARAM = 2,
  BTBEAM_STATUS_NUMERICAL = 3,
  BTBEAM_STATUS_IO = 4,
  BTBEAM_STATUS_OUT_OF_RANGE = 5,
  BTBEAM_STATUS_NO_ENVELOPE = 6,
  BTBEAM_STATUS_PANIC = 7,
} BtbeamStatus;

typedef enum BtbeamVariant {
  BTBEAM_VARIANT_FRICTIONAL = 0,
  BTBEAM_VARIANT_STRONG = 1,
} BtbeamVariant;

typedef enum BtbeamScheme {
  BTBEAM_SCHEME_RK4 = 0,
  BTBEAM_SCHEME_MODAL_SPLIT = 1,
} BtbeamScheme;

typedef enum BtbeamInitialKind {
  BTBEAM_INITIAL_KIND_SIN_SQ_MODE = 0,
  BTBEAM_INITIAL_KIND_EIGENMODE = 1,
} BtbeamInitialKind;

/**
 * Opaque simulation result.
 */
typedef struct BtbeamTrace BtbeamTrace;

typedef struct BtbeamParams {
  double kappa;
  double alpha;
  double q;
  enum BtbeamVariant variant;
  double length;
  size_t n;
  double dt;
  double t_end;
  size_t sample_every;
  enum BtbeamScheme scheme;
  uint64_t seed;
  bool allow_low_q;
} BtbeamParams;

typedef struct BtbeamInitial {
  enum BtbeamInitialKind kind;
  size_t k;
  double amp;
} BtbeamInitial;

/**
 * One trace sample; missing envelope values are NaN.
 */
typedef struct BtbeamSample {
  double t;
  double energy;
  double bilap_sq;
  double vel_sq;
  double grad_sq;
  double coeff;
  double dissipation;
  double lower_env;
  double upper_env;
} BtbeamSample;

typedef struct BtbeamEnvelope {
  double e0;
  double alpha;
  double q;
  double kappa;
  double d;
  double c_prime;
  double k_of_e0;
  double j_of_e0;
  /**
   * Lower envelope uses `2^{2q+1}` instead of `2^{q+1}`.
   */
  bool remark_variant;
} BtbeamEnvelope;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *btbeam_last_error_message(void);

/**
 * Fills `out` with the default parameters.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum BtbeamStatus btbeam_params_default(struct BtbeamParams *out);

/**
 * Runs a simulation and stores a new trace handle in `*out`.
 *
 * # Safety
 * `params` and `initial` must be null or valid for reads, `out` null or
 * valid for writes.
 */
enum BtbeamStatus btbeam_simulate(const struct BtbeamParams *params,
                                  const struct BtbeamInitial *initial,
                                  struct BtbeamTrace **out);

/**
 * Releases a trace handle. Null is ignored.
 *
 * # Safety
 * `trace` must be null or a handle from [`btbeam_simulate`] not yet freed.
 */
void btbeam_trace_free(struct BtbeamTrace *trace);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t btbeam_trace_len(const struct BtbeamTrace *trace);

/**
 * Copies sample `index` into `out`.
 *
 * # Safety
 * `trace` must be null or a live handle, `out` null or valid for writes.
 */
enum BtbeamStatus btbeam_trace_sample(const struct BtbeamTrace *trace,
                                      size_t index,
                                      struct BtbeamSample *out);

/**
 * Envelope constants attached to the trace.
 *
 * # Safety
 * `trace` must be null or a live handle, `out` null or valid for writes.
 */
enum BtbeamStatus btbeam_trace_envelope(const struct BtbeamTrace *trace,
                                        struct BtbeamEnvelope *out);

/**
 * Writes the trace as CSV to the NUL-terminated UTF-8 `path`.
 *
 * # Safety
 * `trace` must be null or a live handle, `path` null or a valid C string.
 */
enum BtbeamStatus btbeam_trace_write_csv(const struct BtbeamTrace *trace, const char *path);

/**
 * Least-squares tail exponent of `log E` against `log t`.
 *
 * # Safety
 * `trace` must be null or a live handle, the outputs null or valid for writes.
 */
enum BtbeamStatus btbeam_trace_fit_exponent(const struct BtbeamTrace *trace,
                                            double tail_fraction,
                                            double *exponent,
                                            double *r_squared);

/**
 * Envelope containment and the unit-window decay hypothesis on the trace.
 * `*passed` is set to whether both checks pass.
 *
 * # Safety
 * `trace` must be null or a live handle, `passed` null or valid for writes.
 */
enum BtbeamStatus btbeam_trace_verify(const struct BtbeamTrace *trace,
                                      double tol,
                                      double nakao_tol,
                                      bool *passed);

/**
 * Envelope constants for the given parameters and initial data, without
 * running a simulation.
 *
 * # Safety
 * `params` and `initial` must be null or valid for reads, `out` null or
 * valid for writes.
 */
enum BtbeamStatus btbeam_envelope_constants(const struct BtbeamParams *params,
                                            const struct BtbeamInitial *initial,
                                            bool remark_variant,
                                            struct BtbeamEnvelope *out);

/**
 * Lower envelope at time `t`; NaN for a null pointer.
 *
 * # Safety
 * `env` must be null or valid for reads.
 */
double btbeam_lower_envelope(const struct BtbeamEnvelope *env, double t);

/**
 * Upper envelope at time `t`; NaN for a null pointer.
 *
 * # Safety
 * `env` must be null or valid for reads.
 */
double btbeam_upper_envelope(const struct BtbeamEnvelope *env, double t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BTBEAM_H */
