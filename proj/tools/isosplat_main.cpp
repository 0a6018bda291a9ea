// isosplat: fit images with Gaussian particles, render 3D splat scenes,
// benchmark isotropic vs anisotropic kernels, inspect particle files.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "isosplat/bench.hpp"
#include "isosplat/image.hpp"
#include "isosplat/loss.hpp"
#include "isosplat/optimize.hpp"
#include "isosplat/particle_io.hpp"
#include "isosplat/png_io.hpp"
#include "isosplat/reconstruct.hpp"
#include "isosplat/splat3d.hpp"
#include "isosplat/tree_init.hpp"

namespace {

namespace fs = std::filesystem;
using namespace isosplat;

constexpr int kExitBadInput = 2;
constexpr int kExitBadConfig = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitTruncated = 5;

int default_threads() {
    if (const char* env = std::getenv("ISOSPLAT_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

struct FitArgs {
    std::string image;
    std::string out_dir = "out";
    std::string kernel = "iso";
    std::string init = "tree";
    int tree_depth = 7;
    double var_threshold = 1e-3;
    int min_cell = 1;
    int k = 1000;
    double d = 30.0;
    double lambda = 0.2;
    int epochs = 2000;
    std::uint64_t seed = 0;
    int threads = default_threads();
    std::string adapt = "off";
    int adapt_every = 100;
    double lr_mu = 1e-1;
    double lr_shape = 5e-3;
    double lr_amp = 1e-2;
    bool momentum = false;
    double sigma_lo = 2.0;
    double sigma_hi = 16.0;
    double prune_eps = 1e-3;
    double merge_gamma = 0.5;
    double merge_color_tol = 0.05;
    double split_sigma_max = 0.0;  // 0: defaults to D/2
    int max_particles = 0;
    bool save_json = false;
};

nlohmann::json config_to_json(const FitConfig& c) {
    return {{"support_radius", c.support_radius},
            {"particle_budget", c.particle_budget},
            {"lambda", c.lambda},
            {"epochs", c.epochs},
            {"lr_mu", c.lr_mu},
            {"lr_shape", c.lr_shape},
            {"lr_amplitude", c.lr_amplitude},
            {"momentum", c.momentum},
            {"adapt", c.adapt},
            {"adapt_every", c.adapt_every},
            {"rng_seed", c.rng_seed},
            {"threads", c.threads}};
}

template <class P>
int run_fit_typed(const FitArgs& args, const ImageGrid& target, std::vector<P> init_particles,
                  const FitConfig& config, const AdaptiveControlParams& adapt,
                  ParticleSet set_template) {
    const auto t0 = std::chrono::steady_clock::now();
    const ImageGrid init_recon =
        reconstruct(std::span<const P>(init_particles), target.width, target.height,
                    target.channels, config.support_radius, config.threads);
    write_png((fs::path(args.out_dir) / "init.png").string(), init_recon);

    FitState<P> state;
    try {
        state = fit(target, std::move(init_particles), config, adapt);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    }

    const ImageGrid final_recon =
        reconstruct(std::span<const P>(state.particles), target.width, target.height,
                    target.channels, config.support_radius, config.threads);
    write_png((fs::path(args.out_dir) / "final.png").string(), final_recon);

    if constexpr (std::is_same_v<P, IsoParticle2D>) {
        set_template.iso2d = state.particles;
    } else {
        set_template.aniso2d = state.particles;
    }
    set_template.metadata["epoch"] = state.epoch;
    set_template.metadata["final_loss"] = state.final_loss;
    const std::string particle_name = args.save_json ? "particles.json" : "particles.ispl";
    save_particles((fs::path(args.out_dir) / particle_name).string(), set_template,
                   args.save_json);

    write_loss_csv((fs::path(args.out_dir) / "loss.csv").string(), state.initial_loss,
                   static_cast<int>(state.particle_count_history.empty()
                                        ? state.particles.size()
                                        : state.particle_count_history.front()),
                   state.loss_history, state.particle_count_history);

    nlohmann::json sidecar = {{"epoch", state.epoch},
                              {"initial_loss", state.initial_loss},
                              {"final_loss", state.final_loss},
                              {"rate_scale", state.rate_scale},
                              {"skipped_updates", state.skipped_updates},
                              {"particles", state.particles.size()},
                              {"config", config_to_json(config)},
                              {"loss_history", state.loss_history},
                              {"particle_count_history", state.particle_count_history}};
    std::ofstream(fs::path(args.out_dir) / "state.json") << sidecar.dump(2) << "\n";

    const double psnr_db = psnr(target, final_recon);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "fit: " << state.particles.size() << " particles, loss "
              << state.initial_loss << " -> " << state.final_loss << ", psnr " << psnr_db
              << " dB, " << secs << " s\n";
    return 0;
}

int run_fit(const FitArgs& args) {
    ImageGrid target;
    try {
        target = read_png(args.image);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }

    FitConfig config;
    config.support_radius = args.d;
    config.particle_budget = args.k;
    config.lambda = args.lambda;
    config.epochs = args.epochs;
    config.lr_mu = args.lr_mu;
    config.lr_shape = args.lr_shape;
    config.lr_amplitude = args.lr_amp;
    config.momentum = args.momentum;
    config.adapt = args.adapt == "on";
    config.adapt_every = args.adapt_every;
    config.rng_seed = args.seed;
    config.threads = args.threads;

    AdaptiveControlParams adapt;
    adapt.prune_threshold = args.prune_eps;
    adapt.merge_distance_factor = args.merge_gamma;
    adapt.merge_color_tol = args.merge_color_tol;
    adapt.split_sigma_max = args.split_sigma_max > 0.0 ? args.split_sigma_max : args.d / 2.0;
    adapt.max_particles = args.max_particles;

    InitParams init_params;
    init_params.max_depth = args.tree_depth;
    init_params.variance_threshold = args.var_threshold;
    init_params.min_cell_px = args.min_cell;

    try {
        config.validate();
        adapt.validate();
        init_params.validate();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid config: " << e.what() << "\n";
        return kExitBadConfig;
    }

    std::error_code ec;
    fs::create_directories(args.out_dir, ec);

    ParticleSet set;
    set.dimension = 2;
    set.channels = target.channels;
    set.metadata = {{"source_image", fs::path(args.image).filename().string()},
                    {"init", args.init}};

    try {
        if (args.kernel == "iso") {
            set.kind = KernelKind::iso;
            std::vector<IsoParticle2D> init;
            if (args.init == "tree") {
                double chosen = 0.0;
                const QuadTreeNode tree =
                    build_quadtree_with_budget(target, init_params, args.k, &chosen);
                init = init_particles_from_tree(tree, target.channels);
                set.metadata["tree_threshold"] = chosen;
            } else {
                init = random_init_iso(args.k, target.width, target.height, target.channels,
                                       args.sigma_lo, args.sigma_hi, args.seed);
            }
            return run_fit_typed(args, target, std::move(init), config, adapt, std::move(set));
        }
        set.kind = KernelKind::aniso;
        std::vector<AnisoParticle2D> init;
        if (args.init == "tree") {
            double chosen = 0.0;
            const QuadTreeNode tree =
                build_quadtree_with_budget(target, init_params, args.k, &chosen);
            for (const auto& p : init_particles_from_tree(tree, target.channels)) {
                AnisoParticle2D q;
                q.mu = p.mu;
                q.theta_rot = 0.0;
                q.s1 = q.s2 = p.sigma;
                q.amplitude = p.amplitude;
                init.push_back(q);
            }
            set.metadata["tree_threshold"] = chosen;
        } else {
            init = random_init_aniso(args.k, target.width, target.height, target.channels,
                                     args.sigma_lo, args.sigma_hi, args.seed);
        }
        return run_fit_typed(args, target, std::move(init), config, adapt, std::move(set));
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid config: " << e.what() << "\n";
        return kExitBadConfig;
    }
}

struct BenchArgs {
    std::string image = "data/fixture_gray_256.png";
    std::string out = "bench.csv";
    int size = 0;  // 0: native image size; otherwise box-downscale to size x size
    int epochs = 2000;
    int reps = 3;
    double lambda = 0.2;
    std::uint64_t seed = 1234;
    int threads = default_threads();
    std::vector<double> d_grid{15.0, 50.0};
    std::vector<int> k_grid{1000, 2000};
    double budget_s = 0.0;
};

int run_bench(const BenchArgs& args) {
    ImageGrid target;
    try {
        target = read_png(args.image);
        if (args.size > 0) {
            if (target.width % args.size != 0 || target.height % args.size != 0) {
                std::cerr << "error: invalid config: size must divide the image dimensions\n";
                return kExitBadConfig;
            }
            target = box_downscale(target, target.width / args.size);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    BenchOptions options;
    options.d_values = args.d_grid;
    options.k_values = args.k_grid;
    options.epochs = args.epochs;
    options.reps = args.reps;
    options.lambda = args.lambda;
    options.seed = args.seed;
    options.threads = args.threads;
    options.budget_s = args.budget_s;
    if (options.d_values.empty() || options.k_values.empty() || options.reps < 1) {
        std::cerr << "error: invalid config: d_grid/k_grid/reps must be nonempty\n";
        return kExitBadConfig;
    }

    const BenchResult result = run_bench_grid(target, options, &std::cout);
    std::ofstream(args.out) << bench_csv(result);
    for (const auto& cell : bench_speedups(result.rows)) {
        std::cout << "speedup D=" << cell.support_radius << " K=" << cell.particle_count
                  << ": " << cell.ratio << "x (aniso/iso)\n";
    }
    if (result.truncated) {
        std::cerr << "warning: budget exceeded, CSV truncated\n";
        return kExitTruncated;
    }
    return 0;
}

struct RenderArgs {
    std::string scene;
    std::string camera;
    std::string out = "render.png";
    std::vector<double> background{0.0, 0.0, 0.0};
    int threads = default_threads();
    bool oracle = false;
};

// Naive all-splats-all-pixels compositor used by --oracle.
template <class S>
ImageGrid brute_force_render(const std::vector<S>& splats, const Camera& cam,
                             const RenderOptions& options) {
    struct Entry {
        double depth;
        std::size_t index;
    };
    std::vector<Entry> order;
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const double z = cam.to_camera(splats[i].mu)[2];
        if (z > kNearPlane) order.push_back({z, i});
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const Entry& a, const Entry& b) { return a.depth < b.depth; });
    ImageGrid out(cam.width, cam.height, 3, 0.0);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Eigen::Vector2d px(pixel_center(x), pixel_center(y));
            Eigen::Vector3d color{0, 0, 0};
            double transmittance = 1.0;
            for (const auto& e : order) {
                const auto& s = splats[e.index];
                double g = 0.0;
                bool inside = false;
                if constexpr (std::is_same_v<S, IsoSplat3D>) {
                    const auto p = project_iso(s, cam);
                    const double r2 = (px - p->mu2d).squaredNorm();
                    inside = r2 <= 9.0 * p->sigma2d * p->sigma2d;
                    if (inside) g = std::exp(-r2 / (p->sigma2d * p->sigma2d));
                } else {
                    const auto p = project_aniso(s, cam);
                    const Eigen::Vector2d d = px - p->mu2d;
                    const double q = d.dot(p->cov2d.inverse() * d);
                    inside = q <= 9.0;
                    if (inside) g = std::exp(-q);
                }
                if (!inside) continue;
                const double alpha = s.opacity * g;
                color += transmittance * alpha * s.color;
                transmittance *= 1.0 - alpha;
            }
            color += transmittance * options.background;
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = color[c];
        }
    }
    return out;
}

int run_render3d(const RenderArgs& args) {
    ParticleSet scene;
    Camera cam;
    try {
        scene = load_particles(args.scene);
        cam = load_camera(args.camera);
        if (scene.dimension != 3) {
            throw std::runtime_error("scene file must hold 3D splats (dimension=3)");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    RenderOptions options;
    options.background = {args.background[0], args.background[1], args.background[2]};
    options.threads = args.threads;

    ImageGrid img;
    try {
        if (scene.kind == KernelKind::iso) {
            img = render(std::span<const IsoSplat3D>(scene.iso3d), cam, options);
        } else {
            img = render(std::span<const AnisoSplat3D>(scene.aniso3d), cam, options);
        }
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    write_png(args.out, img);
    if (args.oracle) {
        const ImageGrid ref = scene.kind == KernelKind::iso
                                  ? brute_force_render(scene.iso3d, cam, options)
                                  : brute_force_render(scene.aniso3d, cam, options);
        double dev = 0.0;
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            dev = std::max(dev, std::abs(img.data[i] - ref.data[i]));
        }
        std::cout << "oracle max deviation: " << dev << "\n";
    }
    std::cout << "rendered " << scene.count() << " splats to " << args.out << "\n";
    return 0;
}

struct InspectArgs {
    std::string input;
    std::string out;
    int tree_depth = 7;
    double var_threshold = 1e-3;
    int min_cell = 1;
};

bool has_png_magic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8] = {0};
    in.read(reinterpret_cast<char*>(sig), 8);
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return in.gcount() == 8 && std::equal(sig, sig + 8, png_sig);
}

int run_inspect(const InspectArgs& args) {
    nlohmann::json report;
    try {
        if (has_png_magic(args.input)) {
            const ImageGrid img = read_png(args.input);
            InitParams params;
            params.max_depth = args.tree_depth;
            params.variance_threshold = args.var_threshold;
            params.min_cell_px = args.min_cell;
            params.validate();
            const QuadTreeNode tree = build_quadtree(img, params);
            report["kind"] = "image";
            report["width"] = img.width;
            report["height"] = img.height;
            report["channels"] = img.channels;
            report["leaf_count"] = leaf_count(tree);
            report["tree"] = tree_to_json(tree, img.channels);
        } else {
            const ParticleSet set = load_particles(args.input);
            report["kind"] = "particle_set";
            report["kernel_kind"] = to_string(set.kind);
            report["dimension"] = set.dimension;
            report["channels"] = set.channels;
            report["count"] = set.count();
            report["geometric_dof_per_particle"] = set.dof_per_particle();
            report["geometric_dof_total"] =
                static_cast<long long>(set.count()) * set.dof_per_particle();
            report["metadata"] = set.metadata;

            std::vector<double> sigmas;
            for (const auto& p : set.iso2d) sigmas.push_back(p.sigma);
            for (const auto& p : set.aniso2d) sigmas.push_back(std::sqrt(p.s1 * p.s2));
            for (const auto& p : set.iso3d) sigmas.push_back(p.sigma);
            for (const auto& p : set.aniso3d) sigmas.push_back(std::cbrt(p.s1 * p.s2 * p.s3));
            nlohmann::json hist = nlohmann::json::array();
            if (!sigmas.empty()) {
                const auto [lo_it, hi_it] = std::minmax_element(sigmas.begin(), sigmas.end());
                const double lo = *lo_it, hi = *hi_it;
                constexpr int kBins = 10;
                const double step = hi > lo ? (hi - lo) / kBins : 1.0;
                std::array<int, kBins> bins{};
                for (const double s : sigmas) {
                    int b = static_cast<int>((s - lo) / step);
                    bins[std::clamp(b, 0, kBins - 1)]++;
                }
                for (int b = 0; b < kBins; ++b) {
                    hist.push_back({{"lo", lo + b * step}, {"hi", lo + (b + 1) * step},
                                    {"count", bins[b]}});
                }
            }
            report["sigma_histogram"] = std::move(hist);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    if (args.out.empty()) {
        std::cout << report.dump(2) << "\n";
    } else {
        std::ofstream(args.out) << report.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale-adaptive Gaussian particle toolkit"};
    app.require_subcommand(1);

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "Fit an image with Gaussian particles");
    fit_cmd->add_option("image", fit_args.image, "Input PNG (8-bit, gray or RGB)")->required();
    fit_cmd->add_option("--out", fit_args.out_dir, "Output directory");
    fit_cmd->add_option("--kernel", fit_args.kernel, "Kernel kind")
        ->check(CLI::IsMember({"iso", "aniso"}));
    fit_cmd->add_option("--init", fit_args.init, "Initialization scheme")
        ->check(CLI::IsMember({"tree", "random"}));
    fit_cmd->add_option("--tree-depth", fit_args.tree_depth, "Quadtree max depth (s)");
    fit_cmd->add_option("--var-threshold", fit_args.var_threshold, "Quadtree split threshold");
    fit_cmd->add_option("--min-cell", fit_args.min_cell, "Minimum quadtree cell size in px");
    fit_cmd->add_option("--k", fit_args.k, "Particle budget K");
    fit_cmd->add_option("--d", fit_args.d, "Support radius D in px");
    fit_cmd->add_option("--lambda", fit_args.lambda, "SSIM mix weight");
    fit_cmd->add_option("--epochs", fit_args.epochs, "Optimization epochs");
    fit_cmd->add_option("--seed", fit_args.seed, "RNG seed");
    fit_cmd->add_option("--threads", fit_args.threads, "Worker threads (1 = deterministic mode)");
    fit_cmd->add_option("--adapt", fit_args.adapt, "Adaptive particle control")
        ->check(CLI::IsMember({"on", "off"}));
    fit_cmd->add_option("--adapt-every", fit_args.adapt_every, "Epochs between control passes");
    fit_cmd->add_option("--lr-mu", fit_args.lr_mu, "Learning rate for centers");
    fit_cmd->add_option("--lr-shape", fit_args.lr_shape, "Learning rate for sigma/scales");
    fit_cmd->add_option("--lr-amp", fit_args.lr_amp, "Learning rate for amplitudes");
    fit_cmd->add_flag("--momentum", fit_args.momentum, "Enable 0.9 momentum");
    fit_cmd->add_option("--sigma-lo", fit_args.sigma_lo, "Random init: min sigma");
    fit_cmd->add_option("--sigma-hi", fit_args.sigma_hi, "Random init: max sigma");
    fit_cmd->add_option("--prune-eps", fit_args.prune_eps, "Prune threshold epsilon_A");
    fit_cmd->add_option("--merge-gamma", fit_args.merge_gamma, "Merge distance factor");
    fit_cmd->add_option("--merge-color-tol", fit_args.merge_color_tol, "Merge color tolerance");
    fit_cmd->add_option("--split-sigma-max", fit_args.split_sigma_max,
                        "Split trigger sigma (0 = D/2)");
    fit_cmd->add_option("--max-particles", fit_args.max_particles,
                        "Particle cap under control (0 = 2x init)");
    fit_cmd->add_flag("--json", fit_args.save_json, "Save particles as JSON instead of binary");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Run the iso vs aniso benchmark grid");
    bench_cmd->add_option("--image", bench_args.image, "Benchmark target PNG");
    bench_cmd->add_option("--out", bench_args.out, "Output CSV path");
    bench_cmd->add_option("--size", bench_args.size, "Box-downscale target to size x size");
    bench_cmd->add_option("--epochs", bench_args.epochs, "Epochs per cell");
    bench_cmd->add_option("--reps", bench_args.reps, "Repetitions per cell (median reported)");
    bench_cmd->add_option("--lambda", bench_args.lambda, "SSIM mix weight");
    bench_cmd->add_option("--seed", bench_args.seed, "RNG seed");
    bench_cmd->add_option("--threads", bench_args.threads, "Worker threads");
    bench_cmd->add_option("--d-grid", bench_args.d_grid, "Support radii to sweep");
    bench_cmd->add_option("--k-grid", bench_args.k_grid, "Particle counts to sweep");
    bench_cmd->add_option("--budget-s", bench_args.budget_s, "Wall-clock budget in seconds");

    RenderArgs render_args;
    auto* render_cmd = app.add_subcommand("render3d", "Composite a 3D splat scene");
    render_cmd->add_option("scene", render_args.scene, "Scene particle file (dimension=3)")
        ->required();
    render_cmd->add_option("--camera", render_args.camera, "Camera JSON")->required();
    render_cmd->add_option("--out", render_args.out, "Output PNG");
    render_cmd->add_option("--background", render_args.background, "Background RGB")
        ->expected(3);
    render_cmd->add_option("--threads", render_args.threads, "Worker threads");
    render_cmd->add_flag("--oracle", render_args.oracle,
                         "Also run the brute-force renderer and report max deviation");

    InspectArgs inspect_args;
    auto* inspect_cmd = app.add_subcommand("inspect", "Report on a particle file or image");
    inspect_cmd->add_option("input", inspect_args.input, "Particle file or PNG")->required();
    inspect_cmd->add_option("--out", inspect_args.out, "Write the JSON report here");
    inspect_cmd->add_option("--tree-depth", inspect_args.tree_depth, "Quadtree max depth");
    inspect_cmd->add_option("--var-threshold", inspect_args.var_threshold,
                            "Quadtree split threshold");
    inspect_cmd->add_option("--min-cell", inspect_args.min_cell, "Minimum cell size in px");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit_cmd->parsed()) return run_fit(fit_args);
        if (bench_cmd->parsed()) return run_bench(bench_args);
        if (render_cmd->parsed()) return run_render3d(render_args);
        if (inspect_cmd->parsed()) return run_inspect(inspect_args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid config: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
