#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "isosplat/particles.hpp"
#include "isosplat/splat3d.hpp"

namespace isosplat {

enum class KernelKind { iso, aniso };

const char* to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& s);

/// A homogeneous particle set plus its format metadata. Exactly one of the
/// four vectors (matching kind/dimension) is populated.
struct ParticleSet {
    int format_version = 1;
    KernelKind kind = KernelKind::iso;
    int dimension = 2;
    int channels = 3;  // amplitude arity for 2D sets; 3D sets carry RGB + opacity
    std::vector<IsoParticle2D> iso2d;
    std::vector<AnisoParticle2D> aniso2d;
    std::vector<IsoSplat3D> iso3d;
    std::vector<AnisoSplat3D> aniso3d;
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t count() const;
    int dof_per_particle() const;
    int values_per_record() const;
};

/// Binary layout: magic "ISPL", uint32 little-endian header length, a JSON
/// header {version, kernel_kind, dimension, channels, count, metadata},
/// then count records of little-endian doubles:
///   iso 2d:   mu.x mu.y sigma A[channels]
///   aniso 2d: mu.x mu.y theta s1 s2 A[channels]
///   iso 3d:   mu.xyz sigma color.rgb opacity
///   aniso 3d: mu.xyz quat.wxyz s1 s2 s3 color.rgb opacity
/// The JSON variant stores the same records as arrays of numbers; both
/// round-trip doubles exactly.
void save_particles(const std::string& path, const ParticleSet& set, bool as_json = false);
ParticleSet load_particles(const std::string& path);

/// {"rotation": 3x3 rows | "quaternion": [w,x,y,z], "translation": [x,y,z],
///  "focal": f, "principal_point": [cx,cy], "image_size": [w,h]}
Camera camera_from_json(const nlohmann::json& j);
Camera load_camera(const std::string& path);

void write_loss_csv(const std::string& path, double initial_loss, int initial_count,
                    const std::vector<double>& loss_history,
                    const std::vector<int>& count_history);

}  // namespace isosplat
