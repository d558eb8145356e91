#ifndef MGF_NETCALC_H
#define MGF_NETCALC_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MNC_OK 0

#define MNC_ERR_NULL_POINTER 1

#define MNC_ERR_UTF8 2

#define MNC_ERR_INVALID_SCENARIO 3

#define MNC_ERR_INVALID_PARAMETER 4

#define MNC_ERR_UNSTABLE 5

#define MNC_ERR_NUMERIC 6

#define MNC_ERR_PANIC 7

#define MNC_STATUS_BOUNDED 0

#define MNC_STATUS_UNSTABLE 1

#define MNC_STATUS_NOT_CERTIFIED 2

// A validated tandem scenario in internal units.
typedef struct MncScenario MncScenario;

// Result of a probabilistic bound.
//
// `value` is in ms for delays, bits for backlogs and a probability for
// violation queries. `theta_star` is NaN when no θ was found.
typedef struct MncBound {
  double value;
  double theta_star;
  double tail_error;
  int32_t status;
} MncBound;

// Worst-case bounds. Rates are in bits per ms, times in ms.
typedef struct MncDeterministic {
  double delay_ms;
  double backlog_bits;
  double rate_bits_per_ms;
  double latency_ms;
} MncDeterministic;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses a JSON scenario and stores a new handle in `*out`.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
int32_t mnc_scenario_from_json(const char *json, struct MncScenario **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `scenario` must come from [`mnc_scenario_from_json`] and not be used again.
void mnc_scenario_free(struct MncScenario *scenario);

// Number of servers in the tandem.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
int32_t mnc_scenario_hops(const struct MncScenario *scenario, uint32_t *out);

// End-to-end delay bound in ms at violation probability `epsilon`.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
int32_t mnc_delay_bound(const struct MncScenario *scenario, double epsilon, struct MncBound *out);

// Backlog bound in bits at violation probability `epsilon`.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
int32_t mnc_backlog_bound(const struct MncScenario *scenario, double epsilon, struct MncBound *out);

// Bound on the probability that the delay exceeds `delay_ms`.
//
// The delay is rounded down to whole slots.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
int32_t mnc_violation_probability(const struct MncScenario *scenario,
                                  double delay_ms,
                                  struct MncBound *out);

// Worst-case delay and backlog from leaky-bucket envelopes.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
int32_t mnc_deterministic_bounds(const struct MncScenario *scenario, struct MncDeterministic *out);

// `ln E[e^{θ A(δ)}]` of a single leaky-bucket source with burst `burst`
// (bits) and rate `rate` (bits per slot).
//
// # Safety
// `out` must be a valid pointer.
int32_t mnc_leaky_bucket_log_mgf(double burst,
                                 double rate,
                                 double theta,
                                 uint64_t delta,
                                 double *out);

// `Σ_{τ>=d} C(τ+n-1, n-1) q^τ`, summed until the remainder is negligible.
//
// # Safety
// `out` must be a valid pointer.
int32_t mnc_negbin_tail(uint32_t n, double q, uint64_t d, double *out);

// Message for the last failed call on this thread, or an empty string.
//
// The pointer stays valid until the next call on the same thread.
const char *mnc_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *mnc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MGF_NETCALC_H */
