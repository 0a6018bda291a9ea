#include "isosplat/optimize.hpp"

#include "isosplat/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

namespace isosplat {

DivergenceError::DivergenceError(int epoch_, int particle_index_)
    : std::runtime_error("fit diverged at epoch " + std::to_string(epoch_) + " (particle " +
                         std::to_string(particle_index_) + ")"),
      epoch(epoch_),
      particle_index(particle_index_) {}

double luminance(const std::array<double, 3>& amplitude, int channels) {
    if (channels == 1) return amplitude[0];
    return 0.2126 * amplitude[0] + 0.7152 * amplitude[1] + 0.0722 * amplitude[2];
}

namespace {

constexpr double kMomentum = 0.9;

bool finite_grad(const IsoParticleGrad& g, int channels) {
    if (!g.d_mu.allFinite() || !std::isfinite(g.d_sigma)) return false;
    for (int c = 0; c < channels; ++c) {
        if (!std::isfinite(g.d_amplitude[c])) return false;
    }
    return true;
}

bool finite_grad(const AnisoParticleGrad& g, int channels) {
    if (!g.d_mu.allFinite() || !std::isfinite(g.d_theta) || !std::isfinite(g.d_s1) ||
        !std::isfinite(g.d_s2)) {
        return false;
    }
    for (int c = 0; c < channels; ++c) {
        if (!std::isfinite(g.d_amplitude[c])) return false;
    }
    return true;
}

double max_abs_amplitude(const std::array<double, 3>& a, int channels) {
    double m = std::abs(a[0]);
    for (int c = 1; c < channels; ++c) m = std::max(m, std::abs(a[c]));
    return m;
}

template <class P>
int offending_particle(const std::vector<P>& particles, int channels) {
    double worst = -1.0;
    int index = 0;
    for (std::size_t i = 0; i < particles.size(); ++i) {
        const auto& p = particles[i];
        bool bad = !p.mu.allFinite();
        for (int c = 0; c < channels && !bad; ++c) bad = !std::isfinite(p.amplitude[c]);
        if constexpr (std::is_same_v<P, IsoParticle2D>) {
            bad = bad || !std::isfinite(p.sigma);
        } else {
            bad = bad || !std::isfinite(p.theta_rot) || !std::isfinite(p.s1) || !std::isfinite(p.s2);
        }
        if (bad) return static_cast<int>(i);
        const double m = max_abs_amplitude(p.amplitude, channels);
        if (m > worst) {
            worst = m;
            index = static_cast<int>(i);
        }
    }
    return index;
}

}  // namespace

void update_step(std::vector<IsoParticle2D>& particles, const std::vector<IsoParticleGrad>& grads,
                 const FitConfig& config, double rate_scale, long* skipped,
                 std::vector<IsoParticleGrad>* velocity) {
    if (grads.size() != particles.size()) {
        throw std::domain_error("update_step: gradients not aligned with particles");
    }
    if (velocity != nullptr) velocity->resize(particles.size());
    const int channels = 3;
    for (std::size_t i = 0; i < particles.size(); ++i) {
        if (!finite_grad(grads[i], channels)) {
            if (skipped != nullptr) ++(*skipped);
            continue;
        }
        auto& p = particles[i];
        Eigen::Vector2d g_mu = grads[i].d_mu;
        double g_logsigma = grads[i].d_sigma * p.sigma;  // chain to log space
        std::array<double, 3> g_a = grads[i].d_amplitude;
        if (config.momentum && velocity != nullptr) {
            auto& v = (*velocity)[i];
            v.d_mu = kMomentum * v.d_mu + g_mu;
            v.d_sigma = kMomentum * v.d_sigma + g_logsigma;
            for (int c = 0; c < 3; ++c) v.d_amplitude[c] = kMomentum * v.d_amplitude[c] + g_a[c];
            g_mu = v.d_mu;
            g_logsigma = v.d_sigma;
            g_a = v.d_amplitude;
        }
        p.mu -= (config.lr_mu * rate_scale) * g_mu;
        p.sigma *= std::exp(-(config.lr_shape * rate_scale) * g_logsigma);
        for (int c = 0; c < 3; ++c) p.amplitude[c] -= (config.lr_amplitude * rate_scale) * g_a[c];
    }
}

void update_step(std::vector<AnisoParticle2D>& particles,
                 const std::vector<AnisoParticleGrad>& grads, const FitConfig& config,
                 double rate_scale, long* skipped, std::vector<AnisoParticleGrad>* velocity) {
    if (grads.size() != particles.size()) {
        throw std::domain_error("update_step: gradients not aligned with particles");
    }
    if (velocity != nullptr) velocity->resize(particles.size());
    const int channels = 3;
    for (std::size_t i = 0; i < particles.size(); ++i) {
        if (!finite_grad(grads[i], channels)) {
            if (skipped != nullptr) ++(*skipped);
            continue;
        }
        auto& p = particles[i];
        Eigen::Vector2d g_mu = grads[i].d_mu;
        double g_theta = grads[i].d_theta;
        double g_logs1 = grads[i].d_s1 * p.s1;
        double g_logs2 = grads[i].d_s2 * p.s2;
        std::array<double, 3> g_a = grads[i].d_amplitude;
        if (config.momentum && velocity != nullptr) {
            auto& v = (*velocity)[i];
            v.d_mu = kMomentum * v.d_mu + g_mu;
            v.d_theta = kMomentum * v.d_theta + g_theta;
            v.d_s1 = kMomentum * v.d_s1 + g_logs1;
            v.d_s2 = kMomentum * v.d_s2 + g_logs2;
            for (int c = 0; c < 3; ++c) v.d_amplitude[c] = kMomentum * v.d_amplitude[c] + g_a[c];
            g_mu = v.d_mu;
            g_theta = v.d_theta;
            g_logs1 = v.d_s1;
            g_logs2 = v.d_s2;
            g_a = v.d_amplitude;
        }
        p.mu -= (config.lr_mu * rate_scale) * g_mu;
        p.theta_rot -= (config.lr_shape * rate_scale) * g_theta;
        p.s1 *= std::exp(-(config.lr_shape * rate_scale) * g_logs1);
        p.s2 *= std::exp(-(config.lr_shape * rate_scale) * g_logs2);
        for (int c = 0; c < 3; ++c) p.amplitude[c] -= (config.lr_amplitude * rate_scale) * g_a[c];
    }
}

namespace {

template <class P>
std::vector<P> prune_impl(std::vector<P> particles, double epsilon_a, int channels) {
    if (!(epsilon_a >= 0.0)) throw std::domain_error("prune: epsilon must be >= 0");
    if (particles.empty()) return particles;
    std::size_t best = 0;
    double best_amp = -1.0;
    for (std::size_t i = 0; i < particles.size(); ++i) {
        const double m = max_abs_amplitude(particles[i].amplitude, channels);
        if (m > best_amp) {
            best_amp = m;
            best = i;
        }
    }
    std::vector<P> out;
    out.reserve(particles.size());
    for (std::size_t i = 0; i < particles.size(); ++i) {
        if (max_abs_amplitude(particles[i].amplitude, channels) >= epsilon_a) {
            out.push_back(particles[i]);
        }
    }
    if (out.empty()) out.push_back(particles[best]);
    return out;
}

}  // namespace

std::vector<IsoParticle2D> prune(std::vector<IsoParticle2D> particles, double epsilon_a,
                                 int channels) {
    return prune_impl(std::move(particles), epsilon_a, channels);
}

std::vector<AnisoParticle2D> prune(std::vector<AnisoParticle2D> particles, double epsilon_a,
                                   int channels) {
    return prune_impl(std::move(particles), epsilon_a, channels);
}

std::pair<IsoParticle2D, IsoParticle2D> split(const IsoParticle2D& particle,
                                              std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uang(0.0, 2.0 * M_PI);
    const double phi = uang(rng);
    const Eigen::Vector2d offset =
        (particle.sigma / 2.0) * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    IsoParticle2D a = particle, b = particle;
    a.mu = particle.mu + offset;
    b.mu = particle.mu - offset;
    a.sigma = b.sigma = particle.sigma * std::sqrt(0.5);
    return {a, b};
}

std::optional<IsoParticle2D> merge(const IsoParticle2D& p1, const IsoParticle2D& p2,
                                   int channels) {
    const double w1 = luminance(p1.amplitude, channels) * M_PI * p1.sigma * p1.sigma;
    const double w2 = luminance(p2.amplitude, channels) * M_PI * p2.sigma * p2.sigma;
    const double total = w1 + w2;
    if (std::abs(total) < 1e-12) return std::nullopt;
    IsoParticle2D out;
    out.mu = (w1 * p1.mu + w2 * p2.mu) / total;
    const double sigma2 = (w1 * p1.sigma * p1.sigma + w2 * p2.sigma * p2.sigma) / total;
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2) || !out.mu.allFinite()) return std::nullopt;
    out.sigma = std::sqrt(sigma2);
    // per-channel zeroth moment m = A*pi*sigma^2 is conserved exactly
    for (int c = 0; c < channels; ++c) {
        const double m1 = p1.amplitude[c] * M_PI * p1.sigma * p1.sigma;
        const double m2 = p2.amplitude[c] * M_PI * p2.sigma * p2.sigma;
        out.amplitude[c] = (m1 + m2) / (M_PI * sigma2);
    }
    return out;
}

std::vector<IsoParticle2D> adaptive_control(std::vector<IsoParticle2D> particles,
                                            const AdaptiveControlParams& adapt, int max_particles,
                                            int channels, std::mt19937_64& rng) {
    adapt.validate();
    particles = prune(std::move(particles), adapt.prune_threshold, channels);

    // merge: greedy nearest-first over qualifying pairs, one merge per particle
    struct Pair {
        double dist;
        std::size_t i, j;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < particles.size(); ++i) {
        for (std::size_t j = i + 1; j < particles.size(); ++j) {
            const double dist = (particles[i].mu - particles[j].mu).norm();
            if (dist >= adapt.merge_distance_factor * std::min(particles[i].sigma, particles[j].sigma)) {
                continue;
            }
            double color = 0.0;
            for (int c = 0; c < channels; ++c) {
                color = std::max(color,
                                 std::abs(particles[i].amplitude[c] - particles[j].amplitude[c]));
            }
            if (color >= adapt.merge_color_tol) continue;
            pairs.push_back({dist, i, j});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return std::tie(a.dist, a.i, a.j) < std::tie(b.dist, b.i, b.j);
    });
    std::vector<char> used(particles.size(), 0);
    std::vector<std::optional<IsoParticle2D>> merged(particles.size());
    std::vector<char> drop(particles.size(), 0);
    for (const auto& pr : pairs) {
        if (used[pr.i] || used[pr.j]) continue;
        used[pr.i] = used[pr.j] = 1;
        if (auto m = merge(particles[pr.i], particles[pr.j], channels)) {
            merged[pr.i] = *m;
            drop[pr.j] = 1;
        }
    }
    std::vector<IsoParticle2D> result;
    result.reserve(particles.size());
    for (std::size_t i = 0; i < particles.size(); ++i) {
        if (drop[i]) continue;
        result.push_back(merged[i] ? *merged[i] : particles[i]);
    }

    // split: widest first while the budget allows
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < result.size(); ++i) {
        if (result[i].sigma > adapt.split_sigma_max) candidates.push_back(i);
    }
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(result[b].sigma, b) < std::tie(result[a].sigma, a);
    });
    for (const std::size_t i : candidates) {
        if (static_cast<int>(result.size()) + 1 > max_particles) break;
        auto [a, b] = split(result[i], rng);
        result[i] = a;
        result.push_back(b);
    }
    return result;
}

std::vector<AnisoParticle2D> adaptive_control(std::vector<AnisoParticle2D> particles,
                                              const AdaptiveControlParams& adapt,
                                              int max_particles, int channels,
                                              std::mt19937_64& rng) {
    (void)max_particles;
    (void)rng;
    adapt.validate();
    return prune(std::move(particles), adapt.prune_threshold, channels);
}

namespace {

template <class P, class G>
FitState<P> fit_impl(const ImageGrid& target, std::vector<P> init, const FitConfig& config,
                     const AdaptiveControlParams& adapt) {
    config.validate();
    adapt.validate();
    if (init.empty()) throw std::invalid_argument("init_particles: must be nonempty");
    for (const auto& p : init) validate_particle(p, target.channels);

    FitState<P> state;
    state.particles = std::move(init);
    state.rng.seed(config.rng_seed);
    const int max_particles =
        adapt.max_particles > 0
            ? std::max<int>(adapt.max_particles, static_cast<int>(state.particles.size()))
            : 2 * static_cast<int>(state.particles.size());

    std::vector<G> velocity;
    const int w = target.width, h = target.height, ch = target.channels;
    ImageGrid recon = reconstruct(std::span<const P>(state.particles), w, h, ch,
                                  config.support_radius, config.threads);
    double current = loss(target, recon, config.lambda);
    if (!std::isfinite(current)) throw DivergenceError(0, offending_particle(state.particles, ch));
    state.initial_loss = current;

    for (int e = 0; e < config.epochs; ++e) {
        const auto grads = loss_gradients(std::span<const P>(state.particles), target, recon, config);
        std::vector<P> stepped = state.particles;
        update_step(stepped, grads, config, state.rate_scale, &state.skipped_updates,
                    config.momentum ? &velocity : nullptr);
        ImageGrid stepped_recon =
            reconstruct(std::span<const P>(stepped), w, h, ch, config.support_radius, config.threads);
        const double stepped_loss = loss(target, stepped_recon, config.lambda);
        if (!std::isfinite(stepped_loss)) {
            throw DivergenceError(e, offending_particle(stepped, ch));
        }
        if (stepped_loss <= current) {
            state.particles = std::move(stepped);
            recon = std::move(stepped_recon);
            current = stepped_loss;
        } else {
            state.rate_scale *= 0.5;  // reject the step, try smaller
            velocity.clear();
        }
        if (config.adapt && (e + 1) % config.adapt_every == 0) {
            state.particles = adaptive_control(std::move(state.particles), adapt, max_particles,
                                               ch, state.rng);
            velocity.clear();
            recon = reconstruct(std::span<const P>(state.particles), w, h, ch,
                                config.support_radius, config.threads);
            current = loss(target, recon, config.lambda);
            if (!std::isfinite(current)) {
                throw DivergenceError(e, offending_particle(state.particles, ch));
            }
        }
        state.loss_history.push_back(current);
        state.particle_count_history.push_back(static_cast<int>(state.particles.size()));
        state.epoch = e + 1;
    }
    state.final_loss = current;
    return state;
}

}  // namespace

FitState<IsoParticle2D> fit(const ImageGrid& target, std::vector<IsoParticle2D> init,
                            const FitConfig& config, const AdaptiveControlParams& adapt) {
    return fit_impl<IsoParticle2D, IsoParticleGrad>(target, std::move(init), config, adapt);
}

FitState<AnisoParticle2D> fit(const ImageGrid& target, std::vector<AnisoParticle2D> init,
                              const FitConfig& config, const AdaptiveControlParams& adapt) {
    return fit_impl<AnisoParticle2D, AnisoParticleGrad>(target, std::move(init), config, adapt);
}

}  // namespace isosplat
