#include "jumpsde.h"
#include <stdio.h>

int run(void) {
    JumpsdeMeasure *nu = NULL;
    JumpsdeSystem *sys = NULL;
    JumpsdeNoise *noise = NULL;
    JumpsdePath *path = NULL;
    char msg[256];

    if (jumpsde_measure_new_stable(1.5, 1.0, &nu) != JUMPSDE_STATUS_OK) {
        jumpsde_last_error(msg, sizeof msg);
        fprintf(stderr, "%s\n", msg);
        return 1;
    }
    double g = 0.0;
    jumpsde_measure_tail(nu, JUMPSDE_TAIL_FIRST_MOMENT, 0.25, &g);

    JumpsdeEdge below = {JUMPSDE_EDGE_KIND_POWER, -2.5};
    JumpsdeEdge above = {JUMPSDE_EDGE_KIND_ZERO, 0.0};
    double knots[2] = {0.01, 1.0}, values[2] = {1000.0, 1.0};
    JumpsdeMeasure *tab = NULL;
    jumpsde_measure_new_tabulated(knots, values, 2, below, above, JUMPSDE_ROLE_COMPENSATED_DRIVER, &tab);
    jumpsde_measure_free(tab);

    jumpsde_system_new_cbi(1.0, 0.1, -0.5, 1.0, 2.0, 1.5, &sys);
    jumpsde_noise_sample(1.0, 7, true, nu, NULL, 100, 0, &noise);
    jumpsde_simulate(sys, 1.0, noise, JUMPSDE_MODE_NONNEG, 0.0, &path);
    size_t n = jumpsde_path_len(path);
    double states[4096];
    if (n <= 4096) {
        jumpsde_path_copy(path, NULL, states, n);
    }

    double levels[6];
    jumpsde_yw_levels("power:0.5", 5, levels, 6);
    JumpsdeBetaWindow w = jumpsde_beta_window(0.5, 1.5);
    printf("%s %g %g %d %g\n", jumpsde_version(), g, levels[1], (int)w.nonempty, jumpsde_stable_vk(1.5, 2));

    jumpsde_path_free(path);
    jumpsde_noise_free(noise);
    jumpsde_system_free(sys);
    jumpsde_measure_free(nu);
    return 0;
}
