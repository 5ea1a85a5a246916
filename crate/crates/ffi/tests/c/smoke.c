#include <math.h>
#include <stdio.h>
#include "hillspec.h"

int main(void) {
    HsPotential *p = NULL;
    if (hs_potential_lame(1, 0.5, M_PI, 0.3 * M_PI, &p) != HS_STATUS_OK) return 1;
    double re, im;
    if (hs_discriminant(p, 0.1, 0.0, &re, &im) != HS_STATUS_OK) return 2;
    HsCurve *c = NULL;
    double edges[3] = {0.0, 1.0, 2.0};
    if (hs_curve_new(edges, 3, &c) != HS_STATUS_OK) return 3;
    double t_re[1], t_im[1];
    size_t len = 0;
    if (hs_curve_tau(c, t_re, t_im, 1, &len) != HS_STATUS_OK || len != 1) return 4;
    double bad[3] = {0.0, 1.0, 1.0};
    HsCurve *d = NULL;
    if (hs_curve_new(bad, 3, &d) != HS_STATUS_DEGENERATE_CURVE || d != NULL) return 5;
    printf("%s %.12f %.12f\n", hs_version(), re, t_re[0]);
    hs_curve_free(c);
    hs_potential_free(p);
    return 0;
}
