#include "isosplat/bench.hpp"

#include "isosplat/loss.hpp"
#include "isosplat/optimize.hpp"
#include "isosplat/reconstruct.hpp"
#include "isosplat/tree_init.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <sstream>

namespace isosplat {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class P>
BenchRow run_cell(const ImageGrid& target, const BenchOptions& opt, KernelKind kind, double d,
                  int k, std::vector<P> init) {
    FitConfig config;
    config.support_radius = d;
    config.particle_budget = k;
    config.lambda = opt.lambda;
    config.epochs = opt.epochs;
    config.rng_seed = opt.seed;
    config.threads = opt.threads;
    config.adapt = false;

    std::vector<double> times;
    double final_loss = 0.0, final_psnr = 0.0;
    int final_count = 0;
    times.reserve(opt.reps);
    for (int r = 0; r < opt.reps; ++r) {
        const auto t0 = Clock::now();
        auto state = fit(target, init, config, AdaptiveControlParams{});
        times.push_back(seconds_since(t0));
        final_loss = state.final_loss;
        final_count = static_cast<int>(state.particles.size());
        const ImageGrid recon =
            reconstruct(std::span<const P>(state.particles), target.width, target.height,
                        target.channels, d, opt.threads);
        final_psnr = psnr(target, recon);
    }
    std::sort(times.begin(), times.end());
    BenchRow row;
    row.kind = kind;
    row.support_radius = d;
    row.particle_count = k;
    row.epochs = opt.epochs;
    row.wall_time_s = times[times.size() / 2];
    row.final_loss = final_loss;
    row.final_psnr_db = final_psnr;
    row.particles_final = final_count;
    row.seed = opt.seed;
    row.threads = opt.threads;
    return row;
}

}  // namespace

BenchResult run_bench_grid(const ImageGrid& target, const BenchOptions& options,
                           std::ostream* progress) {
    BenchResult result;
    const auto t0 = Clock::now();
    for (const KernelKind kind : {KernelKind::iso, KernelKind::aniso}) {
        for (const double d : options.d_values) {
            for (const int k : options.k_values) {
                if (options.budget_s > 0.0 && seconds_since(t0) > options.budget_s) {
                    result.truncated = true;
                    return result;
                }
                BenchRow row;
                if (kind == KernelKind::iso) {
                    auto init = random_init_iso(k, target.width, target.height, target.channels,
                                                options.sigma_lo, options.sigma_hi, options.seed);
                    row = run_cell(target, options, kind, d, k, std::move(init));
                } else {
                    auto init = random_init_aniso(k, target.width, target.height, target.channels,
                                                  options.sigma_lo, options.sigma_hi, options.seed);
                    row = run_cell(target, options, kind, d, k, std::move(init));
                }
                result.rows.push_back(row);
                if (progress != nullptr) {
                    (*progress) << to_string(kind) << " D=" << d << " K=" << k
                                << ": median " << row.wall_time_s << " s, loss "
                                << row.final_loss << ", psnr " << row.final_psnr_db << " dB\n";
                }
            }
        }
    }
    return result;
}

std::string bench_csv(const BenchResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "kernel_kind,D,K,epochs,wall_time_s,final_loss,final_psnr_db,particles_final,seed,"
           "threads\n";
    for (const auto& r : result.rows) {
        out << to_string(r.kind) << "," << r.support_radius << "," << r.particle_count << ","
            << r.epochs << "," << r.wall_time_s << "," << r.final_loss << "," << r.final_psnr_db
            << "," << r.particles_final << "," << r.seed << "," << r.threads << "\n";
    }
    if (result.truncated) out << "# truncated: wall-clock budget exceeded\n";
    return out.str();
}

std::vector<SpeedupCell> bench_speedups(const std::vector<BenchRow>& rows) {
    std::vector<SpeedupCell> out;
    for (const auto& iso_row : rows) {
        if (iso_row.kind != KernelKind::iso) continue;
        for (const auto& aniso_row : rows) {
            if (aniso_row.kind != KernelKind::aniso) continue;
            if (aniso_row.support_radius == iso_row.support_radius &&
                aniso_row.particle_count == iso_row.particle_count) {
                out.push_back({iso_row.support_radius, iso_row.particle_count,
                               aniso_row.wall_time_s / iso_row.wall_time_s});
            }
        }
    }
    return out;
}

}  // namespace isosplat
