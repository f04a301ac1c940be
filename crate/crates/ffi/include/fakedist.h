#ifndef FAKEDIST_H
#define FAKEDIST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FdStatus {
  FD_STATUS_OK = 0,
  FD_STATUS_NULL_POINTER = 1,
  FD_STATUS_INVALID_ARGUMENT = 2,
  FD_STATUS_DOMAIN = 3,
  FD_STATUS_RANGE = 4,
  FD_STATUS_PARABOLIC = 5,
  FD_STATUS_NON_CONVERGENCE = 6,
  FD_STATUS_PRECONDITION = 7,
  FD_STATUS_IO = 8,
  FD_STATUS_PANIC = 9,
} FdStatus;

// A model manifold `dt² + h(t)² g_{S^{m−1}}`.
typedef struct FdModel FdModel;

// A Green kernel on a radial grid of a model, with its fake distance.
typedef struct FdSolution FdSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to
// `len`). Returns the full message length without the terminator.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t fd_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *fd_version(void);

// Model of constant curvature `−kappa2` in dimension `m`, tabulated up to `t_max`.
//
// # Safety
// `out` must be valid for writes.
enum FdStatus fd_model_new_constant(size_t m, double kappa2, double t_max, struct FdModel **out);

// # Safety
// `model` must be null or a handle from `fd_model_new_constant` not yet freed.
void fd_model_free(struct FdModel *model);

// `h(t)`, the sphere volume `v_h(t)` and the ball volume `V_h(t)`.
//
// # Safety
// `model` must be a live handle; the outputs must be valid for writes.
enum FdStatus fd_model_volumes(const struct FdModel *model,
                               double t,
                               double *h,
                               double *v,
                               double *big_v);

// Value of the entire model kernel of the `p`-Laplacian at distance `t`.
//
// # Safety
// `model` must be a live handle; `out` must be valid for writes.
enum FdStatus fd_model_kernel(const struct FdModel *model, double p, double t, double *out);

// # Safety
// `out` must be valid for writes.
enum FdStatus fd_decay_constant(double p, double nu, double sobolev, double *out);

// # Safety
// `out` must be valid for writes.
enum FdStatus fd_half_harnack_constant(double p, double nu, double q, double *out);

// # Safety
// `out` must be valid for writes.
enum FdStatus fd_flat_sobolev_constant(size_t m, double p, double *out);

// Green kernel of the `p`-Laplacian on a radial grid of `model` with `n` cells on
// `[eps_pole, t_out]`, and its fake distance against the same model.
//
// # Safety
// `model` must be a live handle; `out` must be valid for writes.
enum FdStatus fd_radial_solve(const struct FdModel *model,
                              double p,
                              double eps_pole,
                              double t_out,
                              size_t n,
                              struct FdSolution **out);

// # Safety
// `sol` must be a live handle; `out` must be valid for writes.
enum FdStatus fd_solution_len(const struct FdSolution *sol, size_t *out);

// Copies distances, log kernel values and fake distances per vertex. Any of the buffers may
// be null; the others must hold `len` values, with `len` equal to `fd_solution_len`.
//
// # Safety
// `sol` must be a live handle and every non-null buffer valid for `len` writes.
enum FdStatus fd_solution_fields(const struct FdSolution *sol,
                                 double *r,
                                 double *log_kernel,
                                 double *rho,
                                 size_t len);

// Weak residual of the solve and its `log` capacity.
//
// # Safety
// `sol` must be a live handle; the outputs must be valid for writes.
enum FdStatus fd_solution_stats(const struct FdSolution *sol,
                                double *residual,
                                double *log_capacity);

// # Safety
// `sol` must be null or a handle from `fd_radial_solve` not yet freed.
void fd_solution_free(struct FdSolution *sol);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAKEDIST_H */
