#ifndef P2AIRCOMP_H
#define P2AIRCOMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

// Result codes.
typedef enum P2Status {
  P2_STATUS_OK = 0,
  P2_STATUS_NULL_POINTER = 1,
  P2_STATUS_INVALID_ARGUMENT = 2,
  P2_STATUS_DOMAIN = 3,
  P2_STATUS_INVARIANT = 4,
  P2_STATUS_NUMERICAL = 5,
  P2_STATUS_RESOURCE = 6,
  P2_STATUS_CONFIG = 7,
  P2_STATUS_IO = 8,
  P2_STATUS_SERIALIZATION = 9,
  // The caller's buffer is too small; the required size was reported.
  P2_STATUS_BUFFER_TOO_SMALL = 10,
  // A Rust panic was caught at the boundary.
  P2_STATUS_INTERNAL = 11,
} P2Status;

// Masking schemes, passed as `int32_t`.
typedef enum P2Scheme {
  P2_SCHEME_P2_MODULO = 0,
  P2_SCHEME_INDEPENDENT = 1,
  P2_SCHEME_CORRELATED = 2,
  P2_SCHEME_ZERO_SUM = 3,
} P2Scheme;

// Opaque round configuration.
typedef struct P2Config P2Config;

// Opaque zero-sum key bundle.
typedef struct P2KeyBundle P2KeyBundle;

// Opaque result of one simulated round.
typedef struct P2Round P2Round;

// A truncated series value with its certified tail bound.
typedef struct P2Series {
  double value;
  uint32_t truncation_l;
  double tail_bound;
} P2Series;

// A Monte-Carlo mean with its standard error.
typedef struct P2McEstimate {
  double mean;
  double std_error;
  uint64_t trials;
} P2McEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *p2_version(void);

// Message of the last failure on this thread, or NULL. The pointer is valid
// until the next failing call on the same thread.
const char *p2_last_error_message(void);

// Static name of a status code, or "unknown status".
const char *p2_status_name(int32_t status);

// Reduces `x` onto the torus `[-1/2, 1/2)`.
//
// # Safety
// `out` must be valid for writes.
enum P2Status p2_mod1(double x, double *out);

// Samples zero-sum keys for `clients` clients and `dim` dimensions with the
// default generator.
//
// # Safety
// `out` must be valid for writes.
enum P2Status p2_keys_sample(uintptr_t clients,
                             uintptr_t dim,
                             uint64_t seed,
                             struct P2KeyBundle **out);

// Parses a key bundle from its JSON form.
//
// # Safety
// `json` must be a NUL-terminated string and `out` valid for writes.
enum P2Status p2_keys_from_json(const char *json, struct P2KeyBundle **out);

// Writes the bundle's JSON form into `buf`. `needed`, if non-NULL, receives
// the size including the terminator even when `buf` is too small.
//
// # Safety
// `bundle` must come from this library; `buf` must hold `cap` bytes.
enum P2Status p2_keys_to_json(const struct P2KeyBundle *bundle,
                              char *buf,
                              uintptr_t cap,
                              uintptr_t *needed);

// # Safety
// Pointers must be valid.
enum P2Status p2_keys_shape(const struct P2KeyBundle *bundle, uintptr_t *clients, uintptr_t *dim);

// Copies client `k`'s key into `out`, which must hold exactly `dim` values.
//
// # Safety
// `out` must hold `len` doubles.
enum P2Status p2_keys_copy(const struct P2KeyBundle *bundle,
                           uintptr_t k,
                           double *out,
                           uintptr_t len);

// Checks shape, the zero-sum property and the generator's rank conditions.
//
// # Safety
// Pointers must be valid; `residual` may be NULL.
enum P2Status p2_keys_verify(const struct P2KeyBundle *bundle, bool *passed, double *residual);

// # Safety
// `bundle` must come from this library or be NULL.
void p2_keys_free(struct P2KeyBundle *bundle);

// The reference round configuration (10 clients, 10 dimensions,
// `P_X / N_0 = 15 dB`, Gaussian messages of variance 0.01) for a scheme.
// `sigma` is ignored for `P2_SCHEME_P2_MODULO`.
//
// # Safety
// `out` must be valid for writes.
enum P2Status p2_config_reference(int32_t scheme,
                                  double sigma,
                                  bool truncate_messages,
                                  struct P2Config **out);

// Parses a configuration from the JSON form written by `p2_config_to_json`.
//
// # Safety
// `json` must be a NUL-terminated string and `out` valid for writes.
enum P2Status p2_config_from_json(const char *json, struct P2Config **out);

// # Safety
// See `p2_keys_to_json`.
enum P2Status p2_config_to_json(const struct P2Config *config,
                                char *buf,
                                uintptr_t cap,
                                uintptr_t *needed);

// # Safety
// `config` must come from this library or be NULL.
void p2_config_free(struct P2Config *config);

// Simulates one round. Rounds with equal seeds share fading, messages and
// channel noise across schemes.
//
// # Safety
// `config` must come from this library and `out` be valid for writes.
enum P2Status p2_round_run(const struct P2Config *config, uint64_t seed, struct P2Round **out);

// # Safety
// Pointers must be valid.
enum P2Status p2_round_summary(const struct P2Round *round,
                               double *mse_per_dim,
                               double *sigma_eff,
                               bool *within_budget);

// # Safety
// Pointers must be valid.
enum P2Status p2_round_dim(const struct P2Round *round, uintptr_t *dim);

// Copies the true aggregate `W` into `out` (exactly `dim` values).
//
// # Safety
// `out` must hold `len` doubles.
enum P2Status p2_round_copy_truth(const struct P2Round *round, double *out, uintptr_t len);

// Copies the server's estimate into `out` (exactly `dim` values).
//
// # Safety
// `out` must hold `len` doubles.
enum P2Status p2_round_copy_estimate(const struct P2Round *round, double *out, uintptr_t len);

// # Safety
// `round` must come from this library or be NULL.
void p2_round_free(struct P2Round *round);

// Closed-form expected squared error at aggregate `s[0..len]` with automatic
// truncation.
//
// # Safety
// `s` must hold `len` doubles and `out` be valid for writes.
enum P2Status p2_delta(const double *s, uintptr_t len, double sigma_eff, struct P2Series *out);

// Bounds of the closed form over the box `[-a, a]^dim`.
//
// # Safety
// Pointers must be valid.
enum P2Status p2_delta_bounds(double half_width,
                              double sigma_eff,
                              uintptr_t dim,
                              double *lower,
                              double *upper);

// Derivative of the one-dimensional closed form in `s_d`.
//
// # Safety
// `out` must be valid for writes.
enum P2Status p2_delta_derivative(double s_d, double sigma_eff, double *out);

// Per-dimension leakage in nats of a scheme against Gaussian messages of
// standard deviation `sigma_w`. Zero for `P2_SCHEME_P2_MODULO`.
//
// # Safety
// `out` must be valid for writes.
enum P2Status p2_leakage(int32_t scheme,
                         double sigma,
                         uintptr_t clients,
                         double sigma_w,
                         double *out);

// Monte-Carlo estimate of the squared error at `s`, reproducible in `seed`
// and independent of the thread count.
//
// # Safety
// `s` must hold `len` doubles and `out` be valid for writes.
enum P2Status p2_mc_mse(const double *s,
                        uintptr_t len,
                        double sigma_eff,
                        uint64_t trials,
                        uint64_t seed,
                        struct P2McEstimate *out);

// Exact mutual information (nats) between the messages and the server's
// view over `Z_q`, with each client's message uniform on `support`.
//
// # Safety
// `support` must hold `support_len` values; outputs must be valid, and
// `outcomes` may be NULL.
enum P2Status p2_oracle_server_leakage(uint32_t q,
                                       uintptr_t clients,
                                       const uint32_t *support,
                                       uintptr_t support_len,
                                       double *mi_nats,
                                       uint64_t *outcomes);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* P2AIRCOMP_H */
