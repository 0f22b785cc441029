// Mean exit time of planar Brownian motion (a = I/2) from B_R(0) against the closed form R^2/2.
#include <cstdio>

#include "itolab/montecarlo.hpp"
#include "itolab/oracles.hpp"
#include "itolab/stopping.hpp"

using namespace itolab;

int main() {
    const auto spec = brownian(2);
    SimConfig cfg;
    cfg.h = 1e-4;
    cfg.t_max = 10;
    const Point origin{0.0, 0.0};
    std::printf("%6s %12s %12s %12s\n", "R", "mean", "stderr", "exact");
    for (double R : {0.25, 0.5, 1.0}) {
        cfg.h = 1e-3 * R * R;
        cfg.t_max = 20 * R * R;
        const auto st = mc_stats(2000, 1, 42, [&](RandomStream& s, std::size_t) {
            const auto path = simulate_path(spec, cfg, s, 0.0, origin);
            return stopping::exit_time_ball(path, origin, R).value;
        });
        std::printf("%6.2f %12.6f %12.6f %12.6f\n", R, st.mean(), st.stderr_(),
                    oracles::brownian_exit_mean(2, R, origin, 0.5));
    }
}
