#include <stdio.h>
#include <stdlib.h>

#include "pama.h"

#define N 12
#define M 10

int main(void) {
    size_t rows[2 * N * M], cols[2 * N * M];
    int8_t signs[2 * N * M];
    size_t t = 0;
    for (int rep = 0; rep < 2; rep++)
        for (size_t i = 0; i < N; i++)
            for (size_t j = 0; j < M; j++, t++) {
                rows[t] = i;
                cols[t] = j;
                signs[t] = ((i < N / 2) == (j < M / 2)) ? 1 : -1;
            }

    PamaProblem *problem = NULL;
    if (pama_problem_new_onebit(N, M, t, rows, cols, signs, PAMA_NOISE_LOGISTIC, 0.0, &problem) != PAMA_STATUS_OK) {
        fprintf(stderr, "problem: %s\n", pama_last_error());
        return 1;
    }
    double scale = 0.0;
    pama_problem_lambda_scale(problem, &scale);

    PamaSolveConfig cfg;
    pama_solve_config_default(&cfg);
    cfg.lambda = 0.3 * scale;
    cfg.rank = 3;

    PamaResult *result = NULL;
    if (pama_solve(problem, &cfg, &result) != PAMA_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", pama_last_error());
        return 1;
    }
    size_t n, m, r, iterations, rank;
    double objective;
    PamaStop stop;
    pama_result_dims(result, &n, &m, &r);
    pama_result_summary(result, &iterations, &objective, &rank, &stop);
    double *u = malloc(n * r * sizeof(double));
    if (pama_result_copy_u(result, u, n * r) != PAMA_STATUS_OK) return 1;
    printf("n=%zu m=%zu r=%zu iterations=%zu rank=%zu objective=%.6f\n", n, m, r, iterations, rank, objective);

    cfg.lambda = -1.0;
    PamaResult *bad = NULL;
    int status = pama_solve(problem, &cfg, &bad);
    printf("status=%d error=%s\n", status, pama_last_error());

    free(u);
    pama_result_free(result);
    pama_problem_free(problem);
    return status == PAMA_STATUS_INVALID_PARAMETER && bad == NULL ? 0 : 1;
}
