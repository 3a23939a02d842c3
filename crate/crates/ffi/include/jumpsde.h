#ifndef JUMPSDE_H
#define JUMPSDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum JumpsdeStatus {
  JUMPSDE_STATUS_OK = 0,
  JUMPSDE_STATUS_NULL_POINTER = 1,
  /**
   * Argument outside the documented domain, or a malformed string.
   */
  JUMPSDE_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The measure violates the integrability contract of its role.
   */
  JUMPSDE_STATUS_INTEGRABILITY = 3,
  /**
   * Quadrature, estimation or level construction failed.
   */
  JUMPSDE_STATUS_NUMERICAL = 4,
  /**
   * The scheme blew up or the noise does not fit the system.
   */
  JUMPSDE_STATUS_SIMULATION = 5,
  /**
   * The output buffer is shorter than the result.
   */
  JUMPSDE_STATUS_BUFFER_TOO_SMALL = 6,
  JUMPSDE_STATUS_IO = 7,
  JUMPSDE_STATUS_PANIC = 8,
} JumpsdeStatus;

typedef enum JumpsdeRole {
  JUMPSDE_ROLE_COMPENSATED_DRIVER = 0,
  JUMPSDE_ROLE_SUBORDINATOR = 1,
} JumpsdeRole;

typedef enum JumpsdeEdgeKind {
  JUMPSDE_EDGE_KIND_ZERO = 0,
  JUMPSDE_EDGE_KIND_POWER = 1,
  JUMPSDE_EDGE_KIND_EXPONENTIAL = 2,
} JumpsdeEdgeKind;

typedef enum JumpsdeTail {
  /**
   * `ν((x, ∞))`.
   */
  JUMPSDE_TAIL_MASS = 0,
  /**
   * `∫_{(x, ∞)} z ν(dz)`.
   */
  JUMPSDE_TAIL_FIRST_MOMENT = 1,
  /**
   * `∫_{(0, x]} z² ν(dz)`.
   */
  JUMPSDE_TAIL_TRUNCATED_SECOND_MOMENT = 2,
} JumpsdeTail;

typedef enum JumpsdeMode {
  JUMPSDE_MODE_PLAIN = 0,
  JUMPSDE_MODE_NONNEG = 1,
  JUMPSDE_MODE_TRUNCATED = 2,
  JUMPSDE_MODE_NONNEG_TRUNCATED = 3,
} JumpsdeMode;

/**
 * A Lévy measure.
 */
typedef struct JumpsdeMeasure JumpsdeMeasure;

/**
 * One sampled noise path.
 */
typedef struct JumpsdeNoise JumpsdeNoise;

/**
 * One solution path.
 */
typedef struct JumpsdePath JumpsdePath;

/**
 * A coefficient system.
 */
typedef struct JumpsdeSystem JumpsdeSystem;

/**
 * Extension of a tabulated density past its first or last knot. `param` is
 * the exponent of `Power` or the rate of `Exponential`.
 */
typedef struct JumpsdeEdge {
  enum JumpsdeEdgeKind kind;
  double param;
} JumpsdeEdge;

typedef struct JumpsdeBetaWindow {
  double lower;
  double upper;
  bool nonempty;
} JumpsdeBetaWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the length the full
 * message needs, including the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t jumpsde_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *jumpsde_version(void);

/**
 * `scale · z^{-1-alpha} dz` with `1 < alpha < 2`, as a compensated driver.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum JumpsdeStatus jumpsde_measure_new_stable(double alpha,
                                              double scale,
                                              struct JumpsdeMeasure **out);

/**
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum JumpsdeStatus jumpsde_measure_new_tempered_stable(double alpha,
                                                       double scale,
                                                       double tempering,
                                                       enum JumpsdeRole role,
                                                       struct JumpsdeMeasure **out);

/**
 * `mass · δ_location`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum JumpsdeStatus jumpsde_measure_new_point_mass(double location,
                                                  double mass,
                                                  enum JumpsdeRole role,
                                                  struct JumpsdeMeasure **out);

/**
 * Compound Poisson with the given rate and exponential jump sizes.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum JumpsdeStatus jumpsde_measure_new_exponential_jumps(double rate,
                                                         double mean,
                                                         enum JumpsdeRole role,
                                                         struct JumpsdeMeasure **out);

/**
 * Density tabulated at `n` increasing knots.
 *
 * # Safety
 * `knots` and `values` must be valid for `n` reads; `out` for a pointer write.
 */
enum JumpsdeStatus jumpsde_measure_new_tabulated(const double *knots,
                                                 const double *values,
                                                 size_t n,
                                                 struct JumpsdeEdge below,
                                                 struct JumpsdeEdge above,
                                                 enum JumpsdeRole role,
                                                 struct JumpsdeMeasure **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void jumpsde_measure_free(struct JumpsdeMeasure *m);

/**
 * One tail functional of `m` at `x > 0`.
 *
 * # Safety
 * `m` must be a live handle and `value` valid for a write.
 */
enum JumpsdeStatus jumpsde_measure_tail(const struct JumpsdeMeasure *m,
                                        enum JumpsdeTail which,
                                        double x,
                                        double *value);

/**
 * `∫ (e^{-uz} - 1 + uz) ν(dz)` for a driver, `∫ (1 - e^{-uz}) ν(dz)` for a
 * subordinator.
 *
 * # Safety
 * `m` must be a live handle and `value` valid for a write.
 */
enum JumpsdeStatus jumpsde_measure_laplace_exponent(const struct JumpsdeMeasure *m,
                                                    double u,
                                                    double *value);

/**
 * Critical exponent of the measure. `exact` is set when it is known in
 * closed form; otherwise it is estimated over `[1e-9, 1e-1]`.
 *
 * # Safety
 * `m` must be a live handle; `alpha` and `exact` valid for writes.
 */
enum JumpsdeStatus jumpsde_measure_alpha_nu(const struct JumpsdeMeasure *m,
                                            double *alpha,
                                            bool *exact);

/**
 * `(a|x|)^{1/r} dB + sign(x)(c|x|)^{1/q} dL0 + (beta·x + b) dt`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum JumpsdeStatus jumpsde_system_new_cbi(double a,
                                          double b,
                                          double beta,
                                          double c,
                                          double r,
                                          double q,
                                          struct JumpsdeSystem **out);

/**
 * `sigma_slope·x dB + (drift_slope·x + drift_intercept) dt`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum JumpsdeStatus jumpsde_system_new_linear(double sigma_slope,
                                             double drift_slope,
                                             double drift_intercept,
                                             struct JumpsdeSystem **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void jumpsde_system_free(struct JumpsdeSystem *s);

/**
 * Samples stream `stream` of the noise with the given drivers on a uniform
 * grid of `cells` cells over `[0, horizon]`. `driver` and `subordinator`
 * may be null; the measures are copied.
 *
 * # Safety
 * Non-null handles must be live; `out` must be valid for a pointer write.
 */
enum JumpsdeStatus jumpsde_noise_sample(double horizon,
                                        uint64_t master_seed,
                                        bool brownian,
                                        const struct JumpsdeMeasure *driver,
                                        const struct JumpsdeMeasure *subordinator,
                                        size_t cells,
                                        uint64_t stream,
                                        struct JumpsdeNoise **out);

/**
 * Number of large jumps of both drivers; 0 for a null handle.
 *
 * # Safety
 * `n` must be null or a live handle.
 */
size_t jumpsde_noise_jump_count(const struct JumpsdeNoise *n);

/**
 * `B(T)`; 0 for a null handle.
 *
 * # Safety
 * `n` must be null or a live handle.
 */
double jumpsde_noise_brownian_terminal(const struct JumpsdeNoise *n);

/**
 * # Safety
 * `n` must be null or a handle from this library not yet freed.
 */
void jumpsde_noise_free(struct JumpsdeNoise *n);

/**
 * Integrates `system` from `x0` along `noise`. `truncation` is read only by
 * the truncated modes.
 *
 * # Safety
 * Handles must be live; `out` must be valid for a pointer write.
 */
enum JumpsdeStatus jumpsde_simulate(const struct JumpsdeSystem *system,
                                    double x0,
                                    const struct JumpsdeNoise *noise,
                                    enum JumpsdeMode mode,
                                    double truncation,
                                    struct JumpsdePath **out);

/**
 * Number of stored points, grid points and jump times together.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t jumpsde_path_len(const struct JumpsdePath *p);

/**
 * Number of clamps in non-negative mode.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
uint64_t jumpsde_path_clamp_count(const struct JumpsdePath *p);

/**
 * Copies times and states into buffers of `cap` entries each. Either buffer
 * may be null to skip it.
 *
 * # Safety
 * `p` must be a live handle; non-null buffers valid for `cap` writes.
 */
enum JumpsdeStatus jumpsde_path_copy(const struct JumpsdePath *p,
                                     double *times,
                                     double *states,
                                     size_t cap);

/**
 * # Safety
 * `p` must be null or a handle from this library not yet freed.
 */
void jumpsde_path_free(struct JumpsdePath *p);

/**
 * Writes the levels `a_0 = 1 > a_1 > … > a_count` of the modulus described
 * by `modulus` (`power:e[:s]`, `linear[:s]` or `log-osgood[:s]`) into
 * `levels`, which must hold `count + 1` values.
 *
 * # Safety
 * `modulus` must be a NUL-terminated string; `levels` valid for `cap` writes.
 */
enum JumpsdeStatus jumpsde_yw_levels(const char *modulus, size_t count, double *levels, size_t cap);

/**
 * Admissible exponent window for `(p, alpha)`.
 */
struct JumpsdeBetaWindow jumpsde_beta_window(double p, double alpha);

/**
 * `1 - 1/alpha`.
 */
double jumpsde_frontier(double alpha);

/**
 * Cut-off `v_k` of the stable boundary case.
 */
double jumpsde_stable_vk(double alpha, uint64_t k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JUMPSDE_H */
