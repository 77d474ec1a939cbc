#ifndef PSEUDOHEAT_H
#define PSEUDOHEAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every entry point.
typedef enum PhStatus {
  PH_STATUS_OK = 0,
  PH_STATUS_INVALID_ARGUMENT = 1,
  PH_STATUS_DOMAIN = 2,
  PH_STATUS_NON_CONVERGENCE = 3,
  PH_STATUS_NULL_POINTER = 4,
  PH_STATUS_PANIC = 5,
} PhStatus;

// Opaque evaluation context: quadrature settings and cached term sets.
typedef struct PhContext PhContext;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a context with relative quadrature tolerance `rel_tol`; pass 0
// for the library default. Free with [`ph_context_free`].
//
// # Safety
// `out` must be a valid pointer.
enum PhStatus ph_context_new(double rel_tol, struct PhContext **out);

// Releases a context. Null is ignored.
//
// # Safety
// `ctx` must come from [`ph_context_new`] and not be used afterwards.
void ph_context_free(struct PhContext *ctx);

// Kernel value at geodesic distance `s`.
//
// # Safety
// `ctx` must be a live context; `value` and `err_est` valid pointers.
enum PhStatus ph_kernel(const struct PhContext *ctx,
                        size_t dim,
                        double mass,
                        double hbar,
                        double tau,
                        double s,
                        double *value,
                        double *err_est);

// Kernel value between points `(y1, x1)` and `(y2, x2)`; `x1` and `x2`
// hold `dim - 2` doubles each.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum PhStatus ph_kernel_between(const struct PhContext *ctx,
                                size_t dim,
                                double mass,
                                double hbar,
                                double tau,
                                double y1,
                                const double *x1,
                                double y2,
                                const double *x2,
                                double *value,
                                double *err_est);

// Geodesic distance between `(y1, x1)` and `(y2, x2)`.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum PhStatus ph_geodesic_distance(size_t dim,
                                   double y1,
                                   const double *x1,
                                   double y2,
                                   const double *x2,
                                   double *out);

// Message of the last failure on this thread; empty after a success. The
// pointer stays valid until the next call on the same thread.
const char *ph_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ph_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PSEUDOHEAT_H */
