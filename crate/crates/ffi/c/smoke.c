#include <stdio.h>
#include "wpsd.h"

int main(void) {
    const char *json = "{\"space\": {\"kind\": \"scalar\"}, \"table\": [[2, 1], [1, 2]]}";
    WpsdKernel *k = NULL;
    if (wpsd_kernel_from_json(json, &k) != WPSD_STATUS_OK) {
        fprintf(stderr, "%s\n", wpsd_last_error_message());
        return 1;
    }
    WpsdDecomposition *dec = NULL;
    double defect = -1.0;
    WpsdStatus positivity = wpsd_kernel_check_positivity(k, 16, 0, NULL);
    if (wpsd_decompose(k, &dec) != WPSD_STATUS_OK || wpsd_decomposition_defect(dec, k, &defect) != WPSD_STATUS_OK) {
        fprintf(stderr, "%s\n", wpsd_last_error_message());
        return 1;
    }
    printf("positivity=%d points=%zu dim=%zu defect=%g\n", (int)positivity, (size_t)wpsd_kernel_points(k),
           (size_t)wpsd_decomposition_dim(dec), defect);
    wpsd_decomposition_free(dec);
    wpsd_kernel_free(k);
    return 0;
}
