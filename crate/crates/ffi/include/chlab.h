#ifndef CHLAB_H
#define CHLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum ChlabStatus {
  CHLAB_STATUS_OK = 0,
  CHLAB_STATUS_NULL_POINTER = 1,
  CHLAB_STATUS_INVALID_ARGUMENT = 2,
  CHLAB_STATUS_GRID_SIZE = 3,
  CHLAB_STATUS_OUTSIDE_HULL = 4,
  CHLAB_STATUS_POTENTIAL = 5,
  // The run stopped early; the partial trajectory is still returned.
  CHLAB_STATUS_SOLVER_ABORT = 6,
  // A nonlinear solve failed; the partial trajectory is still returned.
  CHLAB_STATUS_NON_CONVERGENCE = 7,
  CHLAB_STATUS_IO = 8,
  CHLAB_STATUS_INDEX_OUT_OF_RANGE = 9,
  CHLAB_STATUS_PANIC = 10,
} ChlabStatus;

// Opaque periodic field handle.
typedef struct ChlabField ChlabField;

// Opaque potential handle.
typedef struct ChlabPotential ChlabPotential;

// Opaque trajectory handle.
typedef struct ChlabTrajectory ChlabTrajectory;

// Solver settings. A negative `stabilization` selects it automatically.
typedef struct ChlabSolverConfig {
  double tau;
  double t_end;
  double stabilization;
  size_t snapshot_stride;
  double nonlinear_tol;
  size_t nonlinear_max_iter;
} ChlabSolverConfig;

typedef struct ChlabLedgerRecord {
  double t;
  double energy;
  double dtnorm2;
  double slope2;
  double residual;
} ChlabLedgerRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread; never null.
const char *chlab_last_error(void);

// The standard double well `(1 - v²)² / 4` tabulated on `[-3, 3]`.
//
// # Safety
// `out` must be a valid pointer.
enum ChlabStatus chlab_potential_double_well(struct ChlabPotential **out);

// Polynomial potential `Σ c_i v^i` with its envelope tabulated on
// `[lo, hi]` at `samples` points.
//
// # Safety
// `coefficients` must point to `len` doubles; `out` must be valid.
enum ChlabStatus chlab_potential_polynomial(const double *coefficients,
                                            size_t len,
                                            double lo,
                                            double hi,
                                            size_t samples,
                                            struct ChlabPotential **out);

// # Safety
// `p` must come from a potential constructor and not be freed twice.
void chlab_potential_free(struct ChlabPotential *p);

// `W(v)`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_potential_eval(const struct ChlabPotential *p, double v, double *out);

// Convex envelope `W**(v)`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_potential_envelope(const struct ChlabPotential *p, double v, double *out);

// `W**'(v)`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_potential_envelope_derivative(const struct ChlabPotential *p,
                                                     double v,
                                                     double *out);

// Number of components of the global unstable set.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_potential_sigma_g_count(const struct ChlabPotential *p, size_t *out);

// Endpoints of component `index` of the global unstable set.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_potential_sigma_g(const struct ChlabPotential *p,
                                         size_t index,
                                         double *lo,
                                         double *hi);

// Concavity defect `ψ(a, b)`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_potential_psi(const struct ChlabPotential *p,
                                     double a,
                                     double b,
                                     double *out);

// Modulus `ω(ρ)` over pairs in `[-m, m]`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_potential_omega(const struct ChlabPotential *p,
                                       double rho,
                                       double m,
                                       double *out);

// Field from `n` grid values at `x_j = j / n`.
//
// # Safety
// `values` must point to `n` doubles; `out` must be valid.
enum ChlabStatus chlab_field_new(const double *values, size_t n, struct ChlabField **out);

// # Safety
// `f` must come from this library and not be freed twice.
void chlab_field_free(struct ChlabField *f);

// Grid size, 0 for a null handle.
//
// # Safety
// `f` must be null or valid.
size_t chlab_field_len(const struct ChlabField *f);

// Copies the values into `buf`, which must hold `len >= n` doubles.
//
// # Safety
// `buf` must point to `len` writable doubles.
enum ChlabStatus chlab_field_values(const struct ChlabField *f, double *buf, size_t len);

// `‖f - mean f‖₋₁`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_h_minus1_norm(const struct ChlabField *f, double *out);

// `F_ε(f)`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_energy_eps(const struct ChlabPotential *p,
                                  const struct ChlabField *f,
                                  double eps,
                                  double *out);

// `F**(f)`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_energy_star(const struct ChlabPotential *p,
                                   const struct ChlabField *f,
                                   double *out);

// Cahn-Hilliard slope `‖(W'(f) - ε² f'')'‖`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_slope_eps(const struct ChlabPotential *p,
                                 const struct ChlabField *f,
                                 double eps,
                                 double *out);

// Relaxed slope `‖(W**'(f))'‖`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_slope_star(const struct ChlabPotential *p,
                                  const struct ChlabField *f,
                                  double *out);

// Well-prepared initial data for `target` at interface width `eps`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_prepare_recovery(const struct ChlabPotential *p,
                                        const struct ChlabField *target,
                                        double eps,
                                        struct ChlabField **out);

// Default Cahn-Hilliard settings for `eps` up to `t_end`.
struct ChlabSolverConfig chlab_solver_config_cahn_hilliard(double eps, double t_end);

// Default relaxed-flow settings up to `t_end`.
struct ChlabSolverConfig chlab_solver_config_stefan(double t_end);

// Cahn-Hilliard run. On `SolverAbort` the partial trajectory is still
// stored in `*out` and must be freed.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_run_cahn_hilliard(const struct ChlabPotential *p,
                                         const struct ChlabField *u0,
                                         double eps,
                                         const struct ChlabSolverConfig *config,
                                         struct ChlabTrajectory **out);

// Relaxed-flow run. On `SolverAbort` or `NonConvergence` the partial
// trajectory is still stored in `*out` and must be freed.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_run_stefan(const struct ChlabPotential *p,
                                  const struct ChlabField *u0,
                                  const struct ChlabSolverConfig *config,
                                  struct ChlabTrajectory **out);

// # Safety
// `t` must come from a run function and not be freed twice.
void chlab_trajectory_free(struct ChlabTrajectory *t);

// Number of ledger records (one per step plus the initial state).
//
// # Safety
// `t` must be null or valid.
size_t chlab_trajectory_ledger_len(const struct ChlabTrajectory *t);

// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_trajectory_ledger(const struct ChlabTrajectory *t,
                                         size_t index,
                                         struct ChlabLedgerRecord *out);

// Number of stored snapshots.
//
// # Safety
// `t` must be null or valid.
size_t chlab_trajectory_snapshot_count(const struct ChlabTrajectory *t);

// Copy of snapshot `index` and its time. The field must be freed.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_trajectory_snapshot(const struct ChlabTrajectory *t,
                                           size_t index,
                                           double *time,
                                           struct ChlabField **out);

// Energy-dissipation residual at ledger time `time`.
//
// # Safety
// Pointers must be valid.
enum ChlabStatus chlab_trajectory_dissipation_residual(const struct ChlabTrajectory *t,
                                                       double time,
                                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHLAB_H */
