#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "isosplat/image.hpp"
#include "isosplat/particle_io.hpp"

namespace isosplat {

struct BenchRow {
    KernelKind kind = KernelKind::iso;
    double support_radius = 0.0;  // D
    int particle_count = 0;       // K
    int epochs = 0;
    double wall_time_s = 0.0;  // median over repetitions
    double final_loss = 0.0;
    double final_psnr_db = 0.0;
    int particles_final = 0;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct BenchOptions {
    std::vector<double> d_values{15.0, 50.0};
    std::vector<int> k_values{1000, 2000};
    int epochs = 2000;
    int reps = 3;
    double lambda = 0.2;
    std::uint64_t seed = 1234;
    int threads = 1;
    double sigma_lo = 2.0;
    double sigma_hi = 16.0;
    double budget_s = 0.0;  // wall-clock budget; 0 = unlimited
};

struct BenchResult {
    std::vector<BenchRow> rows;
    bool truncated = false;
};

/// Runs the {iso, aniso} x D x K grid with adaptive control off and random
/// initialization (identical seed per matched cell). Loss and PSNR are
/// identical across repetitions; only wall time varies.
BenchResult run_bench_grid(const ImageGrid& target, const BenchOptions& options,
                           std::ostream* progress = nullptr);

/// Fixed schema: header then one row per cell. A truncated run ends with
/// a "# truncated" marker line.
std::string bench_csv(const BenchResult& result);

struct SpeedupCell {
    double support_radius;
    int particle_count;
    double ratio;  // aniso wall time / iso wall time
};

std::vector<SpeedupCell> bench_speedups(const std::vector<BenchRow>& rows);

}  // namespace isosplat
