// Moderation of the singular drift |x_1|^{-alpha} sign(x_1) e_1: bbar(R) grows like R^{1 - alpha}.
#include <cstdio>

#include "itolab/moderation.hpp"

using namespace itolab;

int main() {
    const auto spec = example22(2, 0.5);
    ModerationGrid g;
    g.d = 2;
    g.start_half = 0.5;
    g.start_n = 3;
    SimConfig cfg;
    cfg.n_paths = 200;
    cfg.seed = 3;
    std::printf("%8s %12s\n", "R", "bbar(R)");
    for (double R : {0.0625, 0.125, 0.25}) {
        cfg.h = 1e-3 * R * R;
        cfg.t_max = 40 * R * R;
        g.start_half = 0.5 * R;
        const auto rep = estimate_bbar(spec, R, dyadic_ladder(R, 3), g, cfg, 1.0, false);
        std::printf("%8.4f %12.6f\n", R, rep.bbar_R());
    }
}
