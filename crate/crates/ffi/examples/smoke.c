/* Simulates one point target on a small array, images it and prints the peak. */
#include <stdio.h>
#include <stdlib.h>

#include "cylmimo.h"

static int check(CmStatus s, const char *what) {
    if (s != CM_OK) {
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, cm_last_error_message());
        return 1;
    }
    return 0;
}

int main(void) {
    CmSubarray tx = {5, 0.024, 5, 0.024};
    CmSubarray rx = {9, 0.012, 9, 0.012};
    CmLayout *layout = NULL;
    CmScene *scene = NULL;
    CmEcho *echo = NULL;
    CmImage *image = NULL;
    CmRmaParams params;
    CmGrid grid = {{0.03, -0.02, 0.01}, {0.0, 0.0, 0.0}, {12, 12, 12}};
    double peak[3], magnitude = 0.0;
    int rc = 1;

    if (check(cm_layout_new(0.5, &tx, &rx, &layout), "layout")) goto done;
    if (check(cm_scene_new(&scene), "scene")) goto done;
    if (check(cm_scene_add(scene, 0.04, -0.03, 0.02, 1.0, 0.0), "scatterer")) goto done;
    if (check(cm_simulate(layout, scene, 8e9, 12e9, 9, &echo), "simulate")) goto done;
    if (check(cm_rma_params_default(&params), "params")) goto done;
    params.kernel_phase = CM_KERNEL_DEBYE;
    params.target_extent = 0.3;
    if (check(cm_reconstruct_rma(echo, &params, &grid, &image), "rma")) goto done;
    if (check(cm_image_peak(image, peak, &magnitude), "peak")) goto done;
    printf("%.6f %.6f %.6f %.6e\n", peak[0], peak[1], peak[2], magnitude);

    if (cm_layout_new(0.5, NULL, &rx, NULL) != CM_ERR_NULL) goto done;
    rc = 0;
done:
    cm_image_free(image);
    cm_echo_free(echo);
    cm_scene_free(scene);
    cm_layout_free(layout);
    return rc;
}
