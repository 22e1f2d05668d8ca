#include <math.h>
#include <stdio.h>
#include "chlab.h"

#define CHECK(call)                                                      \
    do {                                                                 \
        ChlabStatus s_ = (call);                                         \
        if (s_ != CHLAB_STATUS_OK) {                                     \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, chlab_last_error()); \
            return 1;                                                    \
        }                                                                \
    } while (0)

int main(void) {
    ChlabPotential *p = NULL;
    CHECK(chlab_potential_double_well(&p));
    double lo, hi;
    CHECK(chlab_potential_sigma_g(p, 0, &lo, &hi));

    enum { N = 64 };
    double v[N];
    for (int j = 0; j < N; j++) v[j] = 1.6 + 0.3 * sin(2.0 * M_PI * j / N);
    ChlabField *u0 = NULL;
    CHECK(chlab_field_new(v, N, &u0));

    ChlabSolverConfig cfg = chlab_solver_config_cahn_hilliard(0.1, 1e-3);
    ChlabTrajectory *tr = NULL;
    CHECK(chlab_run_cahn_hilliard(p, u0, 0.1, &cfg, &tr));
    size_t len = chlab_trajectory_ledger_len(tr);
    ChlabLedgerRecord first, last;
    CHECK(chlab_trajectory_ledger(tr, 0, &first));
    CHECK(chlab_trajectory_ledger(tr, len - 1, &last));

    if (chlab_field_new(v, 10, &u0) != CHLAB_STATUS_GRID_SIZE) return 2;

    printf("sigma_g %.6f %.6f ledger %zu energy %.6e -> %.6e\n", lo, hi, len, first.energy, last.energy);
    chlab_trajectory_free(tr);
    chlab_field_free(u0);
    chlab_potential_free(p);
    return last.energy < first.energy ? 0 : 3;
}
