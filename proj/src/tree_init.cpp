#include "isosplat/tree_init.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace isosplat {

void InitParams::validate() const {
    if (max_depth < 0 || max_depth > 16) throw std::invalid_argument("max_depth: must be in [0,16]");
    if (!(variance_threshold >= 0.0)) throw std::invalid_argument("variance_threshold: must be >= 0");
    if (min_cell_px < 1) throw std::invalid_argument("min_cell_px: must be >= 1");
}

namespace {

// Per-channel prefix sums of values and squared values; O(1) cell statistics.
struct CellStats {
    int width, height, channels;
    std::vector<double> sum, sum2;  // (width+1)*(height+1) per channel

    explicit CellStats(const ImageGrid& img)
        : width(img.width), height(img.height), channels(img.channels) {
        const std::size_t stride = static_cast<std::size_t>(width + 1) * (height + 1);
        sum.assign(stride * channels, 0.0);
        sum2.assign(stride * channels, 0.0);
        for (int c = 0; c < channels; ++c) {
            double* s = &sum[stride * c];
            double* s2 = &sum2[stride * c];
            for (int y = 0; y < height; ++y) {
                double row = 0.0, row2 = 0.0;
                for (int x = 0; x < width; ++x) {
                    const double v = img.at(x, y, c);
                    row += v;
                    row2 += v * v;
                    const std::size_t i = static_cast<std::size_t>(y + 1) * (width + 1) + (x + 1);
                    s[i] = s[i - (width + 1)] + row;
                    s2[i] = s2[i - (width + 1)] + row2;
                }
            }
        }
    }

    void cell(int x0, int y0, int x1, int y1, std::array<double, 3>& mean,
              std::array<double, 3>& var) const {
        const double area = static_cast<double>(x1 - x0) * (y1 - y0);
        const std::size_t stride = static_cast<std::size_t>(width + 1) * (height + 1);
        for (int c = 0; c < channels; ++c) {
            const double* s = &sum[stride * c];
            const double* s2 = &sum2[stride * c];
            auto rect = [&](const double* t) {
                return t[static_cast<std::size_t>(y1) * (width + 1) + x1] -
                       t[static_cast<std::size_t>(y0) * (width + 1) + x1] -
                       t[static_cast<std::size_t>(y1) * (width + 1) + x0] +
                       t[static_cast<std::size_t>(y0) * (width + 1) + x0];
            };
            const double m = rect(s) / area;
            mean[c] = m;
            var[c] = std::max(0.0, rect(s2) / area - m * m);
        }
    }
};

bool may_split(const QuadTreeNode& n, const InitParams& params) {
    return n.depth < params.max_depth && n.width() > params.min_cell_px &&
           n.height() > params.min_cell_px;
}

double max_variance(const std::array<double, 3>& var, int channels) {
    double v = var[0];
    for (int c = 1; c < channels; ++c) v = std::max(v, var[c]);
    return v;
}

void build_node(QuadTreeNode& n, const CellStats& stats, const InitParams& params,
                double threshold) {
    stats.cell(n.x0, n.y0, n.x1, n.y1, n.mean, n.variance);
    if (!may_split(n, params)) return;
    if (!(max_variance(n.variance, stats.channels) > threshold)) return;
    const int xm = n.x0 + n.width() / 2;
    const int ym = n.y0 + n.height() / 2;
    const std::array<std::array<int, 4>, 4> rects = {{{n.x0, n.y0, xm, ym},
                                                      {xm, n.y0, n.x1, ym},
                                                      {n.x0, ym, xm, n.y1},
                                                      {xm, ym, n.x1, n.y1}}};
    for (int i = 0; i < 4; ++i) {
        auto child = std::make_unique<QuadTreeNode>();
        child->x0 = rects[i][0];
        child->y0 = rects[i][1];
        child->x1 = rects[i][2];
        child->y1 = rects[i][3];
        child->depth = n.depth + 1;
        build_node(*child, stats, params, threshold);
        n.children[i] = std::move(child);
    }
}

int count_leaves(const CellStats& stats, const InitParams& params, double threshold, int x0,
                 int y0, int x1, int y1, int depth) {
    QuadTreeNode probe;
    probe.x0 = x0;
    probe.y0 = y0;
    probe.x1 = x1;
    probe.y1 = y1;
    probe.depth = depth;
    stats.cell(x0, y0, x1, y1, probe.mean, probe.variance);
    if (!may_split(probe, params) ||
        !(max_variance(probe.variance, stats.channels) > threshold)) {
        return 1;
    }
    const int xm = x0 + (x1 - x0) / 2;
    const int ym = y0 + (y1 - y0) / 2;
    return count_leaves(stats, params, threshold, x0, y0, xm, ym, depth + 1) +
           count_leaves(stats, params, threshold, xm, y0, x1, ym, depth + 1) +
           count_leaves(stats, params, threshold, x0, ym, xm, y1, depth + 1) +
           count_leaves(stats, params, threshold, xm, ym, x1, y1, depth + 1);
}

void collect_split_variances(const CellStats& stats, const InitParams& params, int x0, int y0,
                             int x1, int y1, int depth, std::vector<double>& out) {
    QuadTreeNode probe;
    probe.x0 = x0;
    probe.y0 = y0;
    probe.x1 = x1;
    probe.y1 = y1;
    probe.depth = depth;
    if (!may_split(probe, params)) return;
    stats.cell(x0, y0, x1, y1, probe.mean, probe.variance);
    out.push_back(max_variance(probe.variance, stats.channels));
    const int xm = x0 + (x1 - x0) / 2;
    const int ym = y0 + (y1 - y0) / 2;
    collect_split_variances(stats, params, x0, y0, xm, ym, depth + 1, out);
    collect_split_variances(stats, params, xm, y0, x1, ym, depth + 1, out);
    collect_split_variances(stats, params, x0, ym, xm, y1, depth + 1, out);
    collect_split_variances(stats, params, xm, ym, x1, y1, depth + 1, out);
}

void check_image(const ImageGrid& image) {
    if (image.width <= 0 || image.height <= 0 || image.data.empty()) {
        throw std::domain_error("build_quadtree: empty image");
    }
}

}  // namespace

QuadTreeNode build_quadtree(const ImageGrid& image, const InitParams& params) {
    check_image(image);
    params.validate();
    const CellStats stats(image);
    QuadTreeNode root;
    root.x1 = image.width;
    root.y1 = image.height;
    build_node(root, stats, params, params.variance_threshold);
    return root;
}

QuadTreeNode build_quadtree_with_budget(const ImageGrid& image, const InitParams& params,
                                        int budget, double* chosen_threshold) {
    check_image(image);
    params.validate();
    if (budget < 1) throw std::invalid_argument("particle_budget: must be >= 1");
    const CellStats stats(image);
    double threshold = params.variance_threshold;
    const int w = image.width, h = image.height;
    if (count_leaves(stats, params, threshold, 0, 0, w, h, 0) > budget) {
        // Leaf count is a non-increasing step function of the threshold with
        // breakpoints at the candidate cell variances; pick the smallest
        // candidate that fits the budget.
        std::vector<double> candidates;
        collect_split_variances(stats, params, 0, 0, w, h, 0, candidates);
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        std::size_t lo = 0, hi = candidates.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (count_leaves(stats, params, candidates[mid], 0, 0, w, h, 0) <= budget) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        threshold = candidates[lo];
    }
    if (chosen_threshold != nullptr) *chosen_threshold = threshold;
    QuadTreeNode root;
    root.x1 = w;
    root.y1 = h;
    build_node(root, stats, params, threshold);
    return root;
}

int leaf_count(const QuadTreeNode& node) {
    if (node.is_leaf()) return 1;
    int n = 0;
    for (const auto& c : node.children) n += leaf_count(*c);
    return n;
}

namespace {

void collect_particles(const QuadTreeNode& n, int channels, std::vector<IsoParticle2D>& out) {
    if (!n.is_leaf()) {
        for (const auto& c : n.children) collect_particles(*c, channels, out);
        return;
    }
    IsoParticle2D p;
    p.mu = Eigen::Vector2d((n.x0 + n.x1) / 2.0, (n.y0 + n.y1) / 2.0);
    p.sigma = std::max(n.width(), n.height()) / 2.0;
    for (int c = 0; c < channels; ++c) p.amplitude[c] = n.mean[c];
    out.push_back(p);
}

}  // namespace

std::vector<IsoParticle2D> init_particles_from_tree(const QuadTreeNode& tree, int channels) {
    std::vector<IsoParticle2D> out;
    collect_particles(tree, channels, out);
    return out;
}

nlohmann::json tree_to_json(const QuadTreeNode& n, int channels) {
    nlohmann::json j;
    j["bounds"] = {n.x0, n.y0, n.x1, n.y1};
    j["depth"] = n.depth;
    j["mean"] = std::vector<double>(n.mean.begin(), n.mean.begin() + channels);
    j["variance"] = std::vector<double>(n.variance.begin(), n.variance.begin() + channels);
    if (!n.is_leaf()) {
        nlohmann::json kids = nlohmann::json::array();
        for (const auto& c : n.children) kids.push_back(tree_to_json(*c, channels));
        j["children"] = std::move(kids);
    }
    return j;
}

namespace {

void check_random_args(int k, int width, int height, double sigma_lo, double sigma_hi) {
    if (k < 1) throw std::domain_error("random_init: K must be >= 1");
    if (width <= 0 || height <= 0) throw std::domain_error("random_init: bad grid shape");
    if (!(sigma_lo > 0.0) || !(sigma_hi >= sigma_lo)) {
        throw std::domain_error("random_init: empty sigma range");
    }
}

}  // namespace

std::vector<IsoParticle2D> random_init_iso(int k, int width, int height, int channels,
                                           double sigma_lo, double sigma_hi, std::uint64_t seed) {
    check_random_args(k, width, height, sigma_lo, sigma_hi);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height);
    std::uniform_real_distribution<double> us(sigma_lo, sigma_hi), ua(0.0, 1.0);
    std::vector<IsoParticle2D> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        IsoParticle2D p;
        p.mu = Eigen::Vector2d(ux(rng), uy(rng));
        p.sigma = us(rng);
        for (int c = 0; c < channels; ++c) p.amplitude[c] = ua(rng);
        out.push_back(p);
    }
    return out;
}

std::vector<AnisoParticle2D> random_init_aniso(int k, int width, int height, int channels,
                                               double sigma_lo, double sigma_hi,
                                               std::uint64_t seed) {
    check_random_args(k, width, height, sigma_lo, sigma_hi);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height);
    std::uniform_real_distribution<double> uth(0.0, M_PI);
    std::uniform_real_distribution<double> us(sigma_lo, sigma_hi), ua(0.0, 1.0);
    std::vector<AnisoParticle2D> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        AnisoParticle2D p;
        p.mu = Eigen::Vector2d(ux(rng), uy(rng));
        p.theta_rot = uth(rng);
        p.s1 = us(rng);
        p.s2 = us(rng);
        for (int c = 0; c < channels; ++c) p.amplitude[c] = ua(rng);
        out.push_back(p);
    }
    return out;
}

VoxelGrid::VoxelGrid(int x, int y, int z, int c, double fill) : nx(x), ny(y), nz(z), channels(c) {
    if (x <= 0 || y <= 0 || z <= 0 || (c != 1 && c != 3)) {
        throw std::domain_error("VoxelGrid: bad shape");
    }
    data.assign(static_cast<std::size_t>(x) * y * z * c, fill);
}

namespace {

void octree_cell_stats(const VoxelGrid& v, int x0, int y0, int z0, int x1, int y1, int z1,
                       std::array<double, 3>& mean, std::array<double, 3>& var) {
    const double n = static_cast<double>(x1 - x0) * (y1 - y0) * (z1 - z0);
    for (int c = 0; c < v.channels; ++c) {
        double s = 0.0, s2 = 0.0;
        for (int z = z0; z < z1; ++z) {
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const double val = v.at(x, y, z, c);
                    s += val;
                    s2 += val * val;
                }
            }
        }
        mean[c] = s / n;
        var[c] = std::max(0.0, s2 / n - mean[c] * mean[c]);
    }
}

void build_octree_node(OctreeNode& n, const VoxelGrid& v, const InitParams& params) {
    octree_cell_stats(v, n.x0, n.y0, n.z0, n.x1, n.y1, n.z1, n.mean, n.variance);
    const bool may = n.depth < params.max_depth && (n.x1 - n.x0) > params.min_cell_px &&
                     (n.y1 - n.y0) > params.min_cell_px && (n.z1 - n.z0) > params.min_cell_px;
    if (!may || !(max_variance(n.variance, v.channels) > params.variance_threshold)) return;
    const int xm = n.x0 + (n.x1 - n.x0) / 2;
    const int ym = n.y0 + (n.y1 - n.y0) / 2;
    const int zm = n.z0 + (n.z1 - n.z0) / 2;
    int i = 0;
    for (int z = 0; z < 2; ++z) {
        for (int y = 0; y < 2; ++y) {
            for (int x = 0; x < 2; ++x, ++i) {
                auto child = std::make_unique<OctreeNode>();
                child->x0 = x == 0 ? n.x0 : xm;
                child->x1 = x == 0 ? xm : n.x1;
                child->y0 = y == 0 ? n.y0 : ym;
                child->y1 = y == 0 ? ym : n.y1;
                child->z0 = z == 0 ? n.z0 : zm;
                child->z1 = z == 0 ? zm : n.z1;
                child->depth = n.depth + 1;
                build_octree_node(*child, v, params);
                n.children[i] = std::move(child);
            }
        }
    }
}

}  // namespace

OctreeNode build_octree(const VoxelGrid& volume, const InitParams& params) {
    if (volume.data.empty()) throw std::domain_error("build_octree: empty volume");
    params.validate();
    OctreeNode root;
    root.x1 = volume.nx;
    root.y1 = volume.ny;
    root.z1 = volume.nz;
    build_octree_node(root, volume, params);
    return root;
}

int leaf_count(const OctreeNode& node) {
    if (node.is_leaf()) return 1;
    int n = 0;
    for (const auto& c : node.children) n += leaf_count(*c);
    return n;
}

}  // namespace isosplat
