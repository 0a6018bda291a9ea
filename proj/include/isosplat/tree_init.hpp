#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <json.hpp>

#include "isosplat/image.hpp"
#include "isosplat/particles.hpp"

namespace isosplat {

struct InitParams {
    int max_depth = 7;                 // s
    double variance_threshold = 1e-3;  // split when max per-channel variance exceeds this
    int min_cell_px = 1;               // cells this small or smaller are never split

    void validate() const;
};

/// Axis-aligned pixel cell [x0,x1) x [y0,y1). Children, when present,
/// partition the cell exactly (floor/ceil halves for odd sizes).
struct QuadTreeNode {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int depth = 0;
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> variance{0.0, 0.0, 0.0};
    std::array<std::unique_ptr<QuadTreeNode>, 4> children;

    bool is_leaf() const { return children[0] == nullptr; }
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};

QuadTreeNode build_quadtree(const ImageGrid& image, const InitParams& params);

/// Same split rule, but when the leaf count at params.variance_threshold
/// exceeds budget, the threshold is raised to the smallest cell variance
/// that brings the count within budget.
QuadTreeNode build_quadtree_with_budget(const ImageGrid& image, const InitParams& params,
                                        int budget, double* chosen_threshold = nullptr);

int leaf_count(const QuadTreeNode& node);

/// One particle per leaf: mu = cell center, sigma = half the larger cell
/// side, amplitude = leaf mean color.
std::vector<IsoParticle2D> init_particles_from_tree(const QuadTreeNode& tree, int channels);

nlohmann::json tree_to_json(const QuadTreeNode& node, int channels);

std::vector<IsoParticle2D> random_init_iso(int k, int width, int height, int channels,
                                           double sigma_lo, double sigma_hi, std::uint64_t seed);
std::vector<AnisoParticle2D> random_init_aniso(int k, int width, int height, int channels,
                                               double sigma_lo, double sigma_hi,
                                               std::uint64_t seed);

/// Dense voxel grid, row-major z, y, x. Only used to exercise the octree.
struct VoxelGrid {
    int nx = 0, ny = 0, nz = 0, channels = 1;
    std::vector<double> data;

    VoxelGrid() = default;
    VoxelGrid(int x, int y, int z, int c, double fill = 0.0);
    double& at(int x, int y, int z, int c) {
        return data[((static_cast<std::size_t>(z) * ny + y) * nx + x) * channels + c];
    }
    double at(int x, int y, int z, int c) const {
        return data[((static_cast<std::size_t>(z) * ny + y) * nx + x) * channels + c];
    }
};

struct OctreeNode {
    int x0 = 0, y0 = 0, z0 = 0, x1 = 0, y1 = 0, z1 = 0;
    int depth = 0;
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> variance{0.0, 0.0, 0.0};
    std::array<std::unique_ptr<OctreeNode>, 8> children;

    bool is_leaf() const { return children[0] == nullptr; }
};

OctreeNode build_octree(const VoxelGrid& volume, const InitParams& params);
int leaf_count(const OctreeNode& node);

}  // namespace isosplat
