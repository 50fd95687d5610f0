#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "p2aircomp.h"

#define CHECK(expr)                                                     \
    do {                                                                \
        P2Status st_ = (expr);                                          \
        if (st_ != P2_STATUS_OK) {                                      \
            const char *m_ = p2_last_error_message();                   \
            fprintf(stderr, "%s:%d: %s: %s\n", __FILE__, __LINE__,      \
                    p2_status_name(st_), m_ ? m_ : "");                 \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(void) {
    P2KeyBundle *keys = NULL;
    CHECK(p2_keys_sample(4, 3, 42, &keys));
    bool passed = false;
    CHECK(p2_keys_verify(keys, &passed, NULL));
    if (!passed) return 1;

    double sums[3] = {0, 0, 0};
    for (size_t k = 0; k < 4; k++) {
        double key[3];
        CHECK(p2_keys_copy(keys, k, key, 3));
        for (int d = 0; d < 3; d++) sums[d] += key[d];
    }
    for (int d = 0; d < 3; d++)
        if (fabs(sums[d] - round(sums[d])) > 1e-12) return 1;
    p2_keys_free(keys);

    P2Series s;
    double point[2] = {0.1, -0.3};
    CHECK(p2_delta(point, 2, 0.25, &s));
    double lo, hi;
    CHECK(p2_delta_bounds(1.0 / 3.0, 0.25, 2, &lo, &hi));
    if (!(lo <= s.value && s.value <= hi)) return 1;

    P2Config *cfg = NULL;
    CHECK(p2_config_reference(P2_SCHEME_ZERO_SUM, 0.1, false, &cfg));
    P2Round *round_ = NULL;
    CHECK(p2_round_run(cfg, 1, &round_));
    double mse, sigma;
    bool ok;
    CHECK(p2_round_summary(round_, &mse, &sigma, &ok));
    p2_round_free(round_);
    p2_config_free(cfg);

    if (p2_keys_sample(1, 3, 0, &keys) != P2_STATUS_INVALID_ARGUMENT) return 1;
    if (p2_last_error_message() == NULL) return 1;

    printf("ok %s delta=%.6f mse=%.6f\n", p2_version(), s.value, mse);
    return 0;
}
