// Discounted occupation density of Brownian motion; the total mass is 1/lambda.
#include <cstdio>

#include "itolab/greens.hpp"

using namespace itolab;

int main() {
    const double lambda = 4;
    greens::BinSpec bins;
    bins.t_extent = std::log(1e7) / lambda;
    bins.nt = 32;
    bins.half = 3;
    bins.nx = 24;
    SimConfig cfg;
    cfg.h = 1e-3;
    cfg.n_paths = 2000;
    cfg.seed = 9;
    const auto G = greens::estimate_G(brownian(2), {}, {}, lambda, bins, cfg);
    std::printf("mass %.6f (exact %.6f), outside %.2e\n", G.mass() + G.outside_mass, 1 / lambda, G.outside_mass);
    const auto g = G.elliptic();
    const std::size_t n = g.counts[0];
    std::printf("elliptic density along x_2 = 0:\n");
    for (std::size_t i = 0; i < n; i += 2)
        std::printf("%8.3f %12.6f\n", g.origin[0] + (i + 0.5) * g.spacings[0], g.values[i * g.counts[1] + n / 2]);
}
