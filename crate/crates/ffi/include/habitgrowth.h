#ifndef HABITGROWTH_H
#define HABITGROWTH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HgStatus {
  HG_STATUS_OK = 0,
  HG_STATUS_NULL_POINTER = 1,
  HG_STATUS_DOMAIN = 2,
  HG_STATUS_REGIME = 3,
  HG_STATUS_INFEASIBLE = 4,
  HG_STATUS_NUMERICAL = 5,
  HG_STATUS_PARSE = 6,
  HG_STATUS_IO = 7,
  HG_STATUS_OUT_OF_RANGE = 8,
  HG_STATUS_PANIC = 9,
} HgStatus;

typedef enum HgMethod {
  HG_METHOD_INTEGRAL_FORM = 0,
  HG_METHOD_LAMBDA_FORM = 1,
} HgMethod;

typedef struct HgHistory HgHistory;

typedef struct HgParams HgParams;

typedef struct HgTrajectory HgTrajectory;

// Derived constants of a validated parameter set.
typedef struct HgDerived {
  double r;
  double alpha;
  double growth;
  double nu;
  double kappa0;
  double lambda0;
} HgDerived;

// One trajectory node.
typedef struct HgRow {
  double t;
  double k;
  double c;
  double h;
  double g;
  double lambda_check;
  double external_residual;
} HgRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *hg_last_error(void);

// Library version as a static NUL-terminated string.
const char *hg_version(void);

// # Safety
// `out` must be valid for writes.
enum HgStatus hg_params_new(double eps,
                            double eta,
                            double tau,
                            double a,
                            double delta,
                            double rho,
                            double gamma,
                            struct HgParams **out);

struct HgParams *hg_params_baseline(void);

// # Safety
// `p` must come from this library and not be used afterwards. Null is ignored.
void hg_params_free(struct HgParams *p);

// Checks the standing assumptions and fills in the derived constants, including `lambda0`.
//
// # Safety
// `p` must be a live handle and `out` valid for writes.
enum HgStatus hg_params_validate(const struct HgParams *p, struct HgDerived *out);

// Real root of the characteristic function. Works outside the growth regime too.
//
// # Safety
// `p` must be a live handle and `out` valid for writes.
enum HgStatus hg_real_root(const struct HgParams *p, double *out);

// Constant history on `n` intervals of `[-tau, 0]`.
//
// # Safety
// `out` must be valid for writes.
enum HgStatus hg_history_constant(double tau, size_t n, double level, struct HgHistory **out);

// History from `len >= 2` samples, uniform on `[-tau, 0]`, oldest first.
//
// # Safety
// `samples` must point to `len` readable doubles and `out` be valid for writes.
enum HgStatus hg_history_from_samples(double tau,
                                      const double *samples,
                                      size_t len,
                                      struct HgHistory **out);

// # Safety
// `h` must come from this library and not be used afterwards. Null is ignored.
void hg_history_free(struct HgHistory *h);

// Feasibility of `(k0, history)` over `horizon`. Writes the capital threshold and whether
// `k0` clears it.
//
// # Safety
// Handles must be live; out pointers valid for writes.
enum HgStatus hg_feasibility(const struct HgParams *p,
                             double k0,
                             const struct HgHistory *history,
                             double horizon,
                             double *threshold,
                             bool *feasible);

// Value function at `(k, past consumption)`.
//
// # Safety
// Handles must be live and `out` valid for writes.
enum HgStatus hg_value_function(const struct HgParams *p,
                                double k,
                                const struct HgHistory *past,
                                double *out);

// Closed-loop optimal path on `n` intervals per memory length up to `horizon`.
//
// # Safety
// Handles must be live and `out` valid for writes.
enum HgStatus hg_simulate(const struct HgParams *p,
                          double k0,
                          const struct HgHistory *history,
                          double horizon,
                          size_t n,
                          enum HgMethod method,
                          struct HgTrajectory **out);

// Number of nodes; 0 for a null handle.
//
// # Safety
// `t` must be a live handle or null.
size_t hg_trajectory_len(const struct HgTrajectory *t);

// # Safety
// `t` must be a live handle and `out` valid for writes.
enum HgStatus hg_trajectory_row(const struct HgTrajectory *t, size_t i, struct HgRow *out);

// `Lambda`, the level of surplus consumption `c - h = Lambda e^{Gamma t}`.
//
// # Safety
// `t` must be a live handle and `out` valid for writes.
enum HgStatus hg_trajectory_lambda(const struct HgTrajectory *t, double *out);

// # Safety
// `t` must come from this library and not be used afterwards. Null is ignored.
void hg_trajectory_free(struct HgTrajectory *t);

// Runs the full pipeline on a TOML scenario. Writes the CLI exit code and the JSON report,
// which must be released with [`hg_string_free`]. Parse errors return `Parse` with no report.
//
// # Safety
// `toml` must be a NUL-terminated string; out pointers valid for writes.
enum HgStatus hg_run_scenario(const char *toml, int32_t *exit_code, char **report_json);

// # Safety
// `s` must come from this library and not be used afterwards. Null is ignored.
void hg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HABITGROWTH_H */
