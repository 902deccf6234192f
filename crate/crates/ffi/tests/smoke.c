#include <math.h>
#include <stdio.h>
#include <string.h>

#include "copb.h"

#define CHECK(cond)                                              \
    do {                                                         \
        if (!(cond)) {                                           \
            const char *e = copb_last_error();                   \
            fprintf(stderr, "line %d: %s\n", __LINE__, e ? e : ""); \
            return 1;                                            \
        }                                                        \
    } while (0)

int main(int argc, char **argv) {
    double d = 0;
    CHECK(argc == 2);
    CHECK(copb_haversine_km(0, 0, 0, 1, &d) == COPB_STATUS_OK && fabs(d - 111.195) < 1e-3);

    uint16_t s = 0, e = 0;
    CHECK(copb_parse_time_window("(21:40, 23:59)", &s, &e) == COPB_STATUS_OK && s == 1300 && e == 1439);
    CHECK(copb_parse_time_window("nonsense", &s, &e) == COPB_STATUS_PARSE);
    CHECK(strlen(copb_last_error()) > 0);

    double p[2] = {1, 0}, q[2] = {0, 1};
    CHECK(copb_jsd(p, q, 2, &d) == COPB_STATUS_OK && d == 1.0);

    CopbPoiIndex *idx = NULL;
    size_t n = 0;
    CHECK(copb_poi_index_load(argv[1], 1.0, &idx) == COPB_STATUS_OK);
    CHECK(copb_poi_index_len(idx, &n) == COPB_STATUS_OK);
    copb_poi_index_free(idx);
    printf("ok %zu\n", n);
    return 0;
}
