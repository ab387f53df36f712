/* Minimal consumer of the npss C API.
 *
 * Build after `cargo build -p npss-ffi --release`:
 *   cc -I crates/ffi/include crates/ffi/c/demo.c \
 *      target/release/libnpss_ffi.a -lpthread -ldl -lm -o npss_demo
 */
#include <stdio.h>
#include <stdlib.h>

#include "npss.h"

static int check(NpssStatus s, const char *what) {
    if (s != NPSS_STATUS_OK) {
        const char *msg = npss_last_error_message();
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, msg ? msg : "?");
        return 1;
    }
    return 0;
}

static double noise(unsigned *state) {
    *state = *state * 1103515245u + 12345u;
    return ((*state >> 8) & 0xffff) / 65536.0 - 0.5;
}

int main(void) {
    enum { B = 200, M = 40, J = 12 };
    static double ref[B * J], test[M * J];
    unsigned state = 7;
    for (size_t i = 0; i < B * J; i++) ref[i] = noise(&state);
    for (size_t i = 0; i < M * J; i++) test[i] = noise(&state);
    for (size_t m = 0; m < 5; m++)
        for (size_t j = 0; j < 4; j++) test[m * J + j] += 3.0;

    NpssMatrix *r = NULL, *t = NULL;
    NpssStrategyResult *res = NULL;
    int rc = 1;
    if (check(npss_matrix_new(ref, B, J, &r), "reference")) goto done;
    if (check(npss_matrix_new(test, M, J, &t), "test")) goto done;
    if (check(npss_run_strategy(r, t, NPSS_METHOD_SCAN_R, 0, NPSS_STATISTIC_BJ, 10, 42, &res),
              "scan"))
        goto done;

    size_t n = npss_strategy_flagged_count(res);
    size_t *rows = calloc(n ? n : 1, sizeof *rows);
    if (check(npss_strategy_flagged_rows(res, rows, n), "rows")) { free(rows); goto done; }
    printf("npss %s flagged %zu rows:", npss_version(), n);
    for (size_t i = 0; i < n; i++) printf(" %zu", rows[i]);
    printf("\n");
    free(rows);

    char *json = npss_strategy_json(res);
    if (json) {
        puts(json);
        npss_string_free(json);
    }
    rc = 0;
done:
    npss_strategy_free(res);
    npss_matrix_free(t);
    npss_matrix_free(r);
    return rc;
}
