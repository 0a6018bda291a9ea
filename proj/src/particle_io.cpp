#include "isosplat/particle_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace isosplat {

const char* to_string(KernelKind kind) { return kind == KernelKind::iso ? "iso" : "aniso"; }

KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "iso") return KernelKind::iso;
    if (s == "aniso") return KernelKind::aniso;
    throw std::runtime_error("unknown kernel_kind: " + s);
}

std::size_t ParticleSet::count() const {
    if (dimension == 2) return kind == KernelKind::iso ? iso2d.size() : aniso2d.size();
    return kind == KernelKind::iso ? iso3d.size() : aniso3d.size();
}

int ParticleSet::dof_per_particle() const {
    if (dimension == 2) {
        return kind == KernelKind::iso ? IsoParticle2D::geometric_dof
                                       : AnisoParticle2D::geometric_dof;
    }
    return kind == KernelKind::iso ? IsoSplat3D::geometric_dof : AnisoSplat3D::geometric_dof;
}

int ParticleSet::values_per_record() const {
    if (dimension == 2) return kind == KernelKind::iso ? 3 + channels : 5 + channels;
    return kind == KernelKind::iso ? 8 : 14;
}

namespace {

constexpr char kMagic[4] = {'I', 'S', 'P', 'L'};

void flatten(const ParticleSet& set, std::vector<double>& out) {
    out.clear();
    out.reserve(set.count() * set.values_per_record());
    auto amp = [&](const std::array<double, 3>& a) {
        for (int c = 0; c < set.channels; ++c) out.push_back(a[c]);
    };
    if (set.dimension == 2 && set.kind == KernelKind::iso) {
        for (const auto& p : set.iso2d) {
            out.insert(out.end(), {p.mu[0], p.mu[1], p.sigma});
            amp(p.amplitude);
        }
    } else if (set.dimension == 2) {
        for (const auto& p : set.aniso2d) {
            out.insert(out.end(), {p.mu[0], p.mu[1], p.theta_rot, p.s1, p.s2});
            amp(p.amplitude);
        }
    } else if (set.kind == KernelKind::iso) {
        for (const auto& p : set.iso3d) {
            out.insert(out.end(), {p.mu[0], p.mu[1], p.mu[2], p.sigma, p.color[0], p.color[1],
                                   p.color[2], p.opacity});
        }
    } else {
        for (const auto& p : set.aniso3d) {
            out.insert(out.end(),
                       {p.mu[0], p.mu[1], p.mu[2], p.rotation.w(), p.rotation.x(), p.rotation.y(),
                        p.rotation.z(), p.s1, p.s2, p.s3, p.color[0], p.color[1], p.color[2],
                        p.opacity});
        }
    }
}

void unflatten(ParticleSet& set, const std::vector<double>& v, std::size_t count) {
    const std::size_t arity = set.values_per_record();
    if (v.size() != count * arity) {
        throw std::runtime_error("particle file: record payload size mismatch");
    }
    const double* p = v.data();
    if (set.dimension == 2 && set.kind == KernelKind::iso) {
        set.iso2d.resize(count);
        for (auto& q : set.iso2d) {
            q.mu = {p[0], p[1]};
            q.sigma = p[2];
            for (int c = 0; c < set.channels; ++c) q.amplitude[c] = p[3 + c];
            p += arity;
        }
    } else if (set.dimension == 2) {
        set.aniso2d.resize(count);
        for (auto& q : set.aniso2d) {
            q.mu = {p[0], p[1]};
            q.theta_rot = p[2];
            q.s1 = p[3];
            q.s2 = p[4];
            for (int c = 0; c < set.channels; ++c) q.amplitude[c] = p[5 + c];
            p += arity;
        }
    } else if (set.kind == KernelKind::iso) {
        set.iso3d.resize(count);
        for (auto& q : set.iso3d) {
            q.mu = {p[0], p[1], p[2]};
            q.sigma = p[3];
            q.color = {p[4], p[5], p[6]};
            q.opacity = p[7];
            p += arity;
        }
    } else {
        set.aniso3d.resize(count);
        for (auto& q : set.aniso3d) {
            q.mu = {p[0], p[1], p[2]};
            q.rotation = Eigen::Quaterniond(p[3], p[4], p[5], p[6]);
            q.s1 = p[7];
            q.s2 = p[8];
            q.s3 = p[9];
            q.color = {p[10], p[11], p[12]};
            q.opacity = p[13];
            p += arity;
        }
    }
}

nlohmann::json header_json(const ParticleSet& set) {
    return {{"version", set.format_version},
            {"kernel_kind", to_string(set.kind)},
            {"dimension", set.dimension},
            {"channels", set.channels},
            {"count", set.count()},
            {"metadata", set.metadata}};
}

ParticleSet set_from_header(const nlohmann::json& h, std::size_t* count) {
    ParticleSet set;
    set.format_version = h.at("version").get<int>();
    if (set.format_version != 1) {
        throw std::runtime_error("unknown particle file version " +
                                 std::to_string(set.format_version));
    }
    set.kind = kernel_kind_from_string(h.at("kernel_kind").get<std::string>());
    set.dimension = h.at("dimension").get<int>();
    if (set.dimension != 2 && set.dimension != 3) {
        throw std::runtime_error("particle file: dimension must be 2 or 3");
    }
    set.channels = h.at("channels").get<int>();
    if (set.channels != 1 && set.channels != 3) {
        throw std::runtime_error("particle file: channels must be 1 or 3");
    }
    set.metadata = h.value("metadata", nlohmann::json::object());
    *count = h.at("count").get<std::size_t>();
    return set;
}

}  // namespace

void save_particles(const std::string& path, const ParticleSet& set, bool as_json) {
    std::vector<double> values;
    flatten(set, values);
    if (as_json) {
        nlohmann::json j = header_json(set);
        j["format"] = "ISPL-json";
        nlohmann::json records = nlohmann::json::array();
        const std::size_t arity = set.values_per_record();
        for (std::size_t i = 0; i < set.count(); ++i) {
            nlohmann::json rec = nlohmann::json::array();
            for (std::size_t k = 0; k < arity; ++k) rec.push_back(values[i * arity + k]);
            records.push_back(std::move(rec));
        }
        j["particles"] = std::move(records);
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write particle file: " + path);
        out << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write particle file: " + path);
    const std::string header = header_json(set).dump();
    const std::uint32_t len = static_cast<std::uint32_t>(header.size());
    out.write(kMagic, 4);
    char lenbuf[4];
    std::memcpy(lenbuf, &len, 4);  // little endian host assumed; documented format
    out.write(lenbuf, 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write: " + path);
}

ParticleSet load_particles(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open particle file: " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) {
        char lenbuf[4];
        in.read(lenbuf, 4);
        if (in.gcount() != 4) throw std::runtime_error("truncated particle file: " + path);
        std::uint32_t len = 0;
        std::memcpy(&len, lenbuf, 4);
        std::string header(len, '\0');
        in.read(header.data(), len);
        if (in.gcount() != static_cast<std::streamsize>(len)) {
            throw std::runtime_error("truncated particle file: " + path);
        }
        std::size_t count = 0;
        ParticleSet set = set_from_header(nlohmann::json::parse(header), &count);
        std::vector<double> values(count * set.values_per_record());
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double))) {
            throw std::runtime_error("truncated particle file: " + path);
        }
        unflatten(set, values, count);
        return set;
    }
    // JSON variant
    in.seekg(0);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("unrecognized particle file format: " + path);
    }
    if (j.value("format", "") != "ISPL-json") {
        throw std::runtime_error("unrecognized particle file format: " + path);
    }
    std::size_t count = 0;
    ParticleSet set = set_from_header(j, &count);
    const auto& records = j.at("particles");
    if (records.size() != count) throw std::runtime_error("particle file: count mismatch");
    std::vector<double> values;
    values.reserve(count * set.values_per_record());
    for (const auto& rec : records) {
        if (static_cast<int>(rec.size()) != set.values_per_record()) {
            throw std::runtime_error("particle file: bad record arity");
        }
        for (const auto& v : rec) values.push_back(v.get<double>());
    }
    unflatten(set, values, count);
    return set;
}

Camera camera_from_json(const nlohmann::json& j) {
    Camera cam;
    if (j.contains("rotation")) {
        const auto& r = j.at("rotation");
        if (r.size() != 3) throw std::runtime_error("camera: rotation must be 3 rows");
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 3; ++k) cam.rotation(i, k) = r.at(i).at(k).get<double>();
        }
    } else if (j.contains("quaternion")) {
        const auto& q = j.at("quaternion");
        if (q.size() != 4) throw std::runtime_error("camera: quaternion must be [w,x,y,z]");
        Eigen::Quaterniond quat(q.at(0).get<double>(), q.at(1).get<double>(),
                                q.at(2).get<double>(), q.at(3).get<double>());
        if (std::abs(quat.norm() - 1.0) > 1e-9) {
            throw std::runtime_error("camera: quaternion norm must be 1 within 1e-9");
        }
        cam.rotation = quat.toRotationMatrix();
    } else {
        throw std::runtime_error("camera: missing rotation or quaternion");
    }
    const auto& t = j.at("translation");
    for (int i = 0; i < 3; ++i) cam.translation[i] = t.at(i).get<double>();
    cam.focal = j.at("focal").get<double>();
    const auto& pp = j.at("principal_point");
    cam.principal_point = {pp.at(0).get<double>(), pp.at(1).get<double>()};
    const auto& size = j.at("image_size");
    cam.width = size.at(0).get<int>();
    cam.height = size.at(1).get<int>();
    cam.validate();
    return cam;
}

Camera load_camera(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open camera file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("camera JSON parse error in " + path + ": " + e.what());
    }
    try {
        return camera_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("camera JSON field error in " + path + ": " + e.what());
    }
}

void write_loss_csv(const std::string& path, double initial_loss, int initial_count,
                    const std::vector<double>& loss_history,
                    const std::vector<int>& count_history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write csv: " + path);
    out << "epoch,loss,particles\n";
    out.precision(17);
    out << 0 << "," << initial_loss << "," << initial_count << "\n";
    for (std::size_t i = 0; i < loss_history.size(); ++i) {
        out << (i + 1) << "," << loss_history[i] << ","
            << (i < count_history.size() ? count_history[i] : initial_count) << "\n";
    }
}

}  // namespace isosplat
