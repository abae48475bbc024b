#ifndef EULER_SIEVE_H
#define EULER_SIEVE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define ES_OK 0

#define ES_ERR_NULL -1

#define ES_ERR_INVALID -2

#define ES_ERR_INSIDE_OBSTACLE -3

#define ES_ERR_NUMERIC -4

#define ES_ERR_IO -5

#define ES_ERR_PANIC -6

#define ES_ERR_BUFFER -7

/**
 * Obstacle shape of a lattice.
 */
typedef enum EsShape {
  ES_SHAPE_DISK = 0,
  /**
   * Ellipse with semi-axes `p >= q`.
   */
  ES_SHAPE_ELLIPSE = 1,
} EsShape;

typedef enum EsVorticityKind {
  ES_VORTICITY_KIND_RADIAL_BUMP = 0,
  ES_VORTICITY_KIND_GAUSSIAN_TRUNCATED = 1,
  ES_VORTICITY_KIND_PATCH_INDICATOR_SMOOTH = 2,
} EsVorticityKind;

/**
 * Corrected velocity of one vorticity on one lattice.
 */
typedef struct EsCorrector EsCorrector;

/**
 * Lattice of obstacles.
 */
typedef struct EsDomain EsDomain;

/**
 * Solved exterior problem of one vorticity on one lattice.
 */
typedef struct EsExterior EsExterior;

typedef struct EsLattice {
  double eps;
  double alpha;
  double mu;
  enum EsShape shape;
  double p;
  double q;
} EsLattice;

typedef struct EsVorticity {
  enum EsVorticityKind kind;
  double center_x;
  double center_y;
  double radius;
  double amplitude;
} EsVorticity;

/**
 * `L^2` norms of the corrector error terms.
 */
typedef struct EsCorrectorNorms {
  double w[4];
  /**
   * Norm of the sum over the fluid.
   */
  double total;
  /**
   * Norm of the plane field over the inclusions.
   */
  double inclusions;
} EsCorrectorNorms;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a NUL-terminated string.
 */
const char *es_version(void);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the length the full message needs,
 * terminator included.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t es_last_error_message(char *buf, size_t len);

/**
 * Build a lattice.
 *
 * # Safety
 * `params` must point to a valid `EsLattice`; `out` must be writable.
 */
int32_t es_domain_new(const struct EsLattice *params, struct EsDomain **out);

/**
 * # Safety
 * `d` must be null or a handle from [`es_domain_new`] not yet freed.
 */
void es_domain_free(struct EsDomain *d);

/**
 * Inclusion counts along the two axes.
 *
 * # Safety
 * `d` must be a live handle; `n1` and `n2` must be writable.
 */
int32_t es_domain_counts(const struct EsDomain *d, size_t *n1, size_t *n2);

/**
 * Inclusion centers as interleaved `x, y` in row-major order; `capacity`
 * is the number of points `xy` holds.
 *
 * # Safety
 * `d` must be a live handle; `xy` must be valid for `2 * capacity` doubles.
 */
int32_t es_domain_centers(const struct EsDomain *d, double *xy, size_t capacity);

/**
 * Corrector of `f` on a copy of `d`, with the default quadrature and the
 * quintic cut-off profile.
 *
 * # Safety
 * `d` must be a live handle, `f` a valid `EsVorticity`, `out` writable.
 */
int32_t es_corrector_new(const struct EsDomain *d,
                         const struct EsVorticity *f,
                         struct EsCorrector **out);

/**
 * # Safety
 * `c` must be null or a handle from [`es_corrector_new`] not yet freed.
 */
void es_corrector_free(struct EsCorrector *c);

/**
 * Corrected velocity at `n` interleaved points.
 *
 * # Safety
 * `c` must be a live handle; `xy` and `uv` valid for `2 * n` doubles.
 */
int32_t es_corrector_velocity(const struct EsCorrector *c, const double *xy, size_t n, double *uv);

/**
 * `L^2` norms of the error terms.
 *
 * # Safety
 * `c` must be a live handle; `out` writable.
 */
int32_t es_corrector_norms(const struct EsCorrector *c, struct EsCorrectorNorms *out);

/**
 * Solve the exterior problem of `f` on a copy of `d` with the default
 * quadrature and solver settings.
 *
 * # Safety
 * `d` must be a live handle, `f` a valid `EsVorticity`, `out` writable.
 */
int32_t es_exterior_solve(const struct EsDomain *d,
                          const struct EsVorticity *f,
                          struct EsExterior **out);

/**
 * # Safety
 * `e` must be null or a handle from [`es_exterior_solve`] not yet freed.
 */
void es_exterior_free(struct EsExterior *e);

/**
 * Exterior velocity at `n` interleaved points.
 *
 * # Safety
 * `e` must be a live handle; `xy` and `uv` valid for `2 * n` doubles.
 */
int32_t es_exterior_velocity(const struct EsExterior *e, const double *xy, size_t n, double *uv);

/**
 * Largest boundary residual of the solve and whether it exceeds the
 * solver tolerance.
 *
 * # Safety
 * `e` must be a live handle; `residual` and `flagged` writable.
 */
int32_t es_exterior_residual(const struct EsExterior *e, double *residual, bool *flagged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EULER_SIEVE_H */
