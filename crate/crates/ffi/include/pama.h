#ifndef PAMA_H
#define PAMA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PamaStatus {
  PAMA_STATUS_OK = 0,
  PAMA_STATUS_NULL_POINTER = 1,
  PAMA_STATUS_INVALID_PARAMETER = 2,
  PAMA_STATUS_DIMENSION = 3,
  PAMA_STATUS_PARSE = 4,
  PAMA_STATUS_NUMERICAL = 5,
  PAMA_STATUS_IO = 6,
  PAMA_STATUS_BUFFER_TOO_SMALL = 7,
  PAMA_STATUS_PANIC = 8,
} PamaStatus;

typedef enum PamaSolver {
  PAMA_SOLVER_PAMA = 0,
  PAMA_SOLVER_PALM = 1,
} PamaSolver;

/**
 * The regularizer family; `Scad` reads `theta_a` and `theta_rho`.
 */
typedef enum PamaTheta {
  PAMA_THETA_COUNT = 1,
  PAMA_THETA_SQUARE = 2,
  PAMA_THETA_ABS = 3,
  PAMA_THETA_HALF = 4,
  PAMA_THETA_TWO_THIRDS = 5,
  PAMA_THETA_SCAD = 6,
} PamaTheta;

typedef enum PamaNoise {
  PAMA_NOISE_LOGISTIC = 0,
  PAMA_NOISE_LAPLACE = 1,
} PamaNoise;

typedef enum PamaStop {
  PAMA_STOP_MAX_ITERATIONS = 0,
  PAMA_STOP_RELATIVE_CHANGE = 1,
  PAMA_STOP_OBJECTIVE_STALLED = 2,
} PamaStop;

/**
 * A smooth loss together with its observations.
 */
typedef struct PamaProblem PamaProblem;

/**
 * Factors and summary of one solver run.
 */
typedef struct PamaResult PamaResult;

/**
 * Solver settings. Start from [`pama_solve_config_default`] and override.
 */
typedef struct PamaSolveConfig {
  enum PamaSolver solver;
  enum PamaTheta theta;
  double theta_a;
  double theta_rho;
  double lambda;
  double mu;
  /**
   * Number of factor columns `r`.
   */
  size_t rank;
  size_t max_iter;
  /**
   * Relative-change tolerance of the stopping rule.
   */
  double rel_tol;
  /**
   * Objective-stall tolerance of the stopping rule.
   */
  double obj_tol;
  uint64_t seed;
} PamaSolveConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null if none failed.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *pama_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pama_version(void);

/**
 * Fills `config` with the CLI defaults: PAMA, θ1, `μ = 1e-8`, 200
 * iterations, tolerances `5e-4` and `1e-3`. `lambda` and `rank` are left
 * at zero and must be set.
 *
 * # Safety
 * `config` must be valid for a write.
 */
enum PamaStatus pama_solve_config_default(struct PamaSolveConfig *config);

/**
 * Builds a one-bit problem from `count` draws `(rows[t], cols[t], signs[t])`
 * with 0-based indices and signs in `{1, -1}`. `laplace_b` is read only
 * for Laplace noise.
 *
 * # Safety
 * `rows`, `cols` and `signs` must each be valid for `count` reads; `out`
 * must be valid for a write.
 */
enum PamaStatus pama_problem_new_onebit(size_t n,
                                        size_t m,
                                        size_t count,
                                        const size_t *rows,
                                        const size_t *cols,
                                        const int8_t *signs,
                                        enum PamaNoise noise,
                                        double laplace_b,
                                        struct PamaProblem **out);

/**
 * Parses the observation text format (`n m`, `N`, then `N` lines `i j y`).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum PamaStatus pama_problem_from_text(const char *text,
                                       enum PamaNoise noise,
                                       double laplace_b,
                                       struct PamaProblem **out);

/**
 * Releases a problem. Null is accepted and ignored.
 *
 * # Safety
 * `problem` must be null or a handle from this library not yet freed.
 */
void pama_problem_free(struct PamaProblem *problem);

/**
 * Largest column norm of the observed sign matrix; `λ = c_λ ·` this value.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum PamaStatus pama_problem_lambda_scale(const struct PamaProblem *problem, double *out);

/**
 * Runs the configured solver to its stopping rule.
 *
 * # Safety
 * `config` must be valid for a read; `out` must be valid for a write.
 */
enum PamaStatus pama_solve(const struct PamaProblem *problem,
                           const struct PamaSolveConfig *config,
                           struct PamaResult **out);

/**
 * Releases a result. Null is accepted and ignored.
 *
 * # Safety
 * `result` must be null or a handle from this library not yet freed.
 */
void pama_result_free(struct PamaResult *result);

/**
 * Any of the output pointers may be null to skip that value.
 *
 * # Safety
 * Non-null output pointers must be valid for a write.
 */
enum PamaStatus pama_result_dims(const struct PamaResult *result, size_t *n, size_t *m, size_t *r);

/**
 * Final iteration count, objective, nonzero-column count and stop reason.
 * Any of the output pointers may be null to skip that value.
 *
 * # Safety
 * Non-null output pointers must be valid for a write.
 */
enum PamaStatus pama_result_summary(const struct PamaResult *result,
                                    size_t *iterations,
                                    double *objective,
                                    size_t *rank,
                                    enum PamaStop *stop);

/**
 * Copies `U` (`n × r`, column-major) into `buf`, which must hold `n·r`.
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
enum PamaStatus pama_result_copy_u(const struct PamaResult *result, double *buf, size_t len);

/**
 * Copies `V` (`m × r`, column-major) into `buf`, which must hold `m·r`.
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
enum PamaStatus pama_result_copy_v(const struct PamaResult *result, double *buf, size_t len);

/**
 * Scalar proximal map `argmin_x (x − s)²/(2ν) + θ(x)` with the smallest
 * minimizer on ties.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum PamaStatus pama_prox_theta(enum PamaTheta theta,
                                double theta_a,
                                double theta_rho,
                                double nu,
                                double s,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAMA_H */
