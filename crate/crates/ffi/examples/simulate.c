#include <stdio.h>
#include "airgrid.h"

int main(void) {
    AirgridScenario *s = NULL;
    if (airgrid_scenario_default(&s) != AIRGRID_STATUS_OK) {
        fprintf(stderr, "%s\n", airgrid_last_error());
        return 1;
    }
    airgrid_scenario_set_seed(s, 3);
    airgrid_scenario_set_random_uavs(s, 50);

    AirgridResult *r = NULL;
    if (airgrid_simulate(s, &r) != AIRGRID_STATUS_OK) {
        fprintf(stderr, "%s\n", airgrid_last_error());
        airgrid_scenario_free(s);
        return 1;
    }
    printf("arrived %zu/%zu, max occupancy %u, total length %.1f m\n",
           airgrid_result_arrived_count(r), airgrid_result_uav_count(r),
           airgrid_result_max_occupancy(r), airgrid_result_total_length(r));

    const AirgridPoint *pts = NULL;
    size_t n = 0;
    if (airgrid_result_waypoints(r, 0, &pts, &n) == AIRGRID_STATUS_OK && n > 0) {
        printf("uav 1: %zu waypoints, ends at (%.1f, %.1f, %.1f)\n", n, pts[n - 1].x, pts[n - 1].y, pts[n - 1].z);
    }
    airgrid_result_free(r);
    airgrid_scenario_free(s);
    return 0;
}
