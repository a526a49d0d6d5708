#ifndef LIMITRD_H
#define LIMITRD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum LrdStatus {
  LRD_STATUS_OK = 0,
  LRD_STATUS_NULL_POINTER = 1,
  LRD_STATUS_INVALID_UTF8 = 2,
  LRD_STATUS_INVALID_ARGUMENT = 3,
  // Malformed CSV or JSON input.
  LRD_STATUS_PARSE = 4,
  LRD_STATUS_IO = 5,
  // Rank deficiency, non-convergence or an unidentified model.
  LRD_STATUS_NUMERICAL = 6,
  LRD_STATUS_OUT_OF_RANGE = 7,
  LRD_STATUS_PANIC = 99,
} LrdStatus;

typedef enum LrdScheme {
  LRD_SCHEME_TRUE_AMOUNT = 0,
  LRD_SCHEME_REPORTED_AMOUNT = 1,
  LRD_SCHEME_ROUNDED_LIMIT = 2,
} LrdScheme;

// One fitted event study.
typedef struct LrdEstimate LrdEstimate;

// A loaded panel.
typedef struct LrdPanel LrdPanel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *lrd_last_error_message(void);

// Library version as a static string.
const char *lrd_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void lrd_string_free(char *s);

// HMDA rounding of a dollar amount to thousands, half up.
//
// # Safety
// `out` must be valid for writes.
enum LrdStatus lrd_round_hmda(double amount_dollars, uint32_t *out);

// Conforming status under `scheme`. `true_amount` is ignored unless
// `has_true_amount` is set; the true-amount scheme requires it.
//
// # Safety
// `out` must be valid for writes.
enum LrdStatus lrd_is_conforming(double true_amount,
                                 bool has_true_amount,
                                 uint32_t reported_amount,
                                 double limit,
                                 enum LrdScheme scheme,
                                 bool *out);

// `ln(amount / limit)`, both in thousands.
//
// # Safety
// `out` must be valid for writes.
enum LrdStatus lrd_log_distance(double amount, double limit, double *out);

// Parses a panel from CSV text and an event calendar in JSON.
//
// # Safety
// Both strings must be nul-terminated; `out` must be valid for writes.
enum LrdStatus lrd_panel_from_csv(const char *csv,
                                  const char *calendar_json,
                                  struct LrdPanel **out);

// Number of records, or 0 for null.
//
// # Safety
// `panel` must be null or a live handle.
uintptr_t lrd_panel_len(const struct LrdPanel *panel);

// # Safety
// `panel` must be null or a live handle; it is invalid afterwards.
void lrd_panel_free(struct LrdPanel *panel);

// Lints the panel and writes the report as JSON. `options_json` may be null
// for the defaults (window 4, reference period -1).
//
// # Safety
// `panel` must be a live handle; `out_json` must be valid for writes.
enum LrdStatus lrd_validate(const struct LrdPanel *panel,
                            const char *options_json,
                            char **out_json);

// Fits the event study at one bandwidth. `spec_json` may be null for the
// default approval specification.
//
// # Safety
// `panel` must be a live handle; `out` must be valid for writes.
enum LrdStatus lrd_event_study(const struct LrdPanel *panel,
                               const char *spec_json,
                               double bandwidth,
                               struct LrdEstimate **out);

// Number of estimated coefficients, or 0 for null.
//
// # Safety
// `est` must be null or a live handle.
uintptr_t lrd_estimate_len(const struct LrdEstimate *est);

// Name of coefficient `index`, owned by the handle; null when out of range.
//
// # Safety
// `est` must be null or a live handle.
const char *lrd_estimate_name(const struct LrdEstimate *est, uintptr_t index);

// Position of the coefficient called `name`.
//
// # Safety
// `est` must be a live handle, `name` nul-terminated, `out` valid for writes.
enum LrdStatus lrd_estimate_find(const struct LrdEstimate *est, const char *name, uintptr_t *out);

// Coefficient `index` and its clustered standard error without small-sample
// correction. The error is NaN when the two-way variance is negative.
//
// # Safety
// `est` must be a live handle; `coef` and `std_error` valid for writes.
enum LrdStatus lrd_estimate_coefficient(const struct LrdEstimate *est,
                                        uintptr_t index,
                                        double *coef,
                                        double *std_error);

// Observations used by the fit, or 0 for null.
//
// # Safety
// `est` must be null or a live handle.
uintptr_t lrd_estimate_n_obs(const struct LrdEstimate *est);

// Full estimate set as JSON.
//
// # Safety
// `est` must be a live handle; `out_json` valid for writes.
enum LrdStatus lrd_estimate_to_json(const struct LrdEstimate *est, char **out_json);

// # Safety
// `est` must be null or a live handle; it is invalid afterwards.
void lrd_estimate_free(struct LrdEstimate *est);

// Runs the Monte Carlo study for every scenario of `config_json` (null for
// the default configuration) and writes per-scheme summaries as a JSON array.
//
// # Safety
// `config_json` must be null or nul-terminated; `out_json` valid for writes.
enum LrdStatus lrd_mc_study(const char *config_json, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIMITRD_H */
