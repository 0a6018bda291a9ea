#pragma once

#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "isosplat/image.hpp"
#include "isosplat/loss.hpp"
#include "isosplat/particles.hpp"

namespace isosplat {

struct AdaptiveControlParams {
    double prune_threshold = 1e-3;      // epsilon_A: drop particles with max |A| below this
    double merge_distance_factor = 0.5; // gamma: merge when |mu1-mu2| < gamma*min(sigma1,sigma2)
    double merge_color_tol = 0.05;      // max per-channel amplitude difference
    double split_sigma_max = 15.0;      // split particles wider than this
    int max_particles = 0;              // 0: defaults to 2x the initial count

    void validate() const {
        if (!(prune_threshold >= 0.0)) throw std::invalid_argument("prune_threshold: must be >= 0");
        if (!(merge_distance_factor > 0.0)) throw std::invalid_argument("merge_distance_factor: must be > 0");
        if (!(merge_color_tol >= 0.0)) throw std::invalid_argument("merge_color_tol: must be >= 0");
        if (!(split_sigma_max > 0.0)) throw std::invalid_argument("split_sigma_max: must be > 0");
        if (max_particles < 0) throw std::invalid_argument("max_particles: must be >= 0");
    }
};

/// Raised when the epoch loss stops being finite.
class DivergenceError : public std::runtime_error {
  public:
    DivergenceError(int epoch_, int particle_index_);
    int epoch;
    int particle_index;
};

template <class P>
struct FitState {
    std::vector<P> particles;
    int epoch = 0;
    std::vector<double> loss_history;         // loss after each epoch
    std::vector<int> particle_count_history;  // count after each epoch
    std::mt19937_64 rng;
    double rate_scale = 1.0;  // halved whenever a step would increase the loss
    long skipped_updates = 0; // particles skipped due to non-finite gradients
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Gradient descent on the particle parameters against the (1-lambda)L1 +
/// lambda(1-SSIM) loss. A step that would increase the loss is rejected and
/// the learning-rate scale halved, so with adaptive control off the recorded
/// loss never increases. Deterministic for a fixed seed at any thread count.
FitState<IsoParticle2D> fit(const ImageGrid& target, std::vector<IsoParticle2D> init,
                            const FitConfig& config, const AdaptiveControlParams& adapt);
FitState<AnisoParticle2D> fit(const ImageGrid& target, std::vector<AnisoParticle2D> init,
                              const FitConfig& config, const AdaptiveControlParams& adapt);

/// Plain gradient descent; sigma and the aniso scales move multiplicatively
/// (log space) so they stay positive. Particles with non-finite gradients
/// are left untouched and counted in *skipped.
void update_step(std::vector<IsoParticle2D>& particles, const std::vector<IsoParticleGrad>& grads,
                 const FitConfig& config, double rate_scale, long* skipped,
                 std::vector<IsoParticleGrad>* velocity = nullptr);
void update_step(std::vector<AnisoParticle2D>& particles,
                 const std::vector<AnisoParticleGrad>& grads, const FitConfig& config,
                 double rate_scale, long* skipped,
                 std::vector<AnisoParticleGrad>* velocity = nullptr);

/// Removes particles whose largest per-channel |amplitude| falls below
/// epsilon; the largest-amplitude particle always survives.
std::vector<IsoParticle2D> prune(std::vector<IsoParticle2D> particles, double epsilon_a,
                                 int channels);
std::vector<AnisoParticle2D> prune(std::vector<AnisoParticle2D> particles, double epsilon_a,
                                   int channels);

/// Two children at mu +/- (sigma/2) along a random direction, each with
/// sigma/sqrt(2) and the parent amplitude, so each carries half the parent
/// zeroth moment A*pi*sigma^2 and the total is conserved.
std::pair<IsoParticle2D, IsoParticle2D> split(const IsoParticle2D& particle, std::mt19937_64& rng);

/// Mass-weighted merge; conserves the per-channel zeroth moment by
/// construction. Returns nullopt when the combined luminance mass is ~0 or
/// the weighted sigma^2 is not positive.
std::optional<IsoParticle2D> merge(const IsoParticle2D& p1, const IsoParticle2D& p2, int channels);

/// prune, then greedy nearest-first pairwise merging, then splitting of
/// oversized particles, never exceeding max_particles.
std::vector<IsoParticle2D> adaptive_control(std::vector<IsoParticle2D> particles,
                                            const AdaptiveControlParams& adapt, int max_particles,
                                            int channels, std::mt19937_64& rng);
/// Anisotropic control is prune-only (merge/split are isotropic operations).
std::vector<AnisoParticle2D> adaptive_control(std::vector<AnisoParticle2D> particles,
                                              const AdaptiveControlParams& adapt,
                                              int max_particles, int channels,
                                              std::mt19937_64& rng);

double luminance(const std::array<double, 3>& amplitude, int channels);

}  // namespace isosplat
