#include <math.h>
#include <stdio.h>
#include <string.h>

#include "beats.h"

#define CHECK(cond)                                                \
    do {                                                           \
        if (!(cond)) {                                             \
            const char *e = beats_last_error();                    \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, \
                    #cond, e ? e : "no error");                    \
            return 1;                                              \
        }                                                          \
    } while (0)

int main(int argc, char **argv) {
    CHECK(argc == 2);
    CHECK(strlen(beats_version()) > 0);

    double cost[6] = {0.0, 1.0, 2.0, 1.0, 0.0, 0.5};
    double plan[6];
    size_t iters = 0;
    double residual = 1.0;
    CHECK(beats_sinkhorn(cost, 2, 3, 0.1, 1e-9, 1000, plan, &iters, &residual) == BEATS_STATUS_OK);
    for (int i = 0; i < 2; i++) {
        double row = 0.0;
        for (int j = 0; j < 3; j++) row += plan[i * 3 + j];
        CHECK(fabs(row - 0.5) < 1e-8);
    }
    CHECK(beats_sinkhorn(cost, 2, 3, -1.0, 1e-9, 10, plan, NULL, NULL) == BEATS_STATUS_INVALID_ARGUMENT);
    CHECK(beats_last_error() != NULL);

    double loss = 0.0;
    CHECK(beats_joint_loss(0.2, 0.6, 0.2, 1.0, 2.0, 3.0, &loss) == BEATS_STATUS_OK);
    CHECK(fabs(loss - 2.0) < 1e-12);
    CHECK(beats_last_error() == NULL);

    double samples[2000];
    for (int i = 0; i < 2000; i++) samples[i] = 0.5 * sin(0.05 * i);
    BeatsWaveform *w = NULL;
    CHECK(beats_waveform_new(samples, 2000, 16000, &w) == BEATS_STATUS_OK);
    CHECK(beats_waveform_write(w, argv[1]) == BEATS_STATUS_OK);
    BeatsWaveform *r = NULL;
    CHECK(beats_waveform_read(argv[1], &r) == BEATS_STATUS_OK);
    CHECK(beats_waveform_len(r) == 2000);
    CHECK(beats_waveform_sample_rate(r) == 16000);
    CHECK(fabs(beats_waveform_samples(r)[100] - samples[100]) < 1e-4);
    beats_waveform_free(w);
    beats_waveform_free(r);
    CHECK(beats_waveform_read(NULL, &r) == BEATS_STATUS_NULL_POINTER);
    puts("ok");
    return 0;
}
