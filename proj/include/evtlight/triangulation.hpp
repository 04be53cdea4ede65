#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evtlight/errors.hpp"
#include "evtlight/events.hpp"
#include "evtlight/geometry.hpp"
#include "evtlight/io_util.hpp"

namespace evtlight {

struct Intrinsics {
    double fx = 1, fy = 1;
    double cx = 0, cy = 0;
    int width = 304, height = 240;

    Vec2 project(const Vec3& p) const { return {fx * p.x / p.z + cx, fy * p.y / p.z + cy}; }

    // Unit direction of the viewing ray through a pixel, in the local frame.
    Vec3 unproject(const Vec2& px) const {
        return normalized({(px.x - cx) / fx, (px.y - cy) / fy, 1.0});
    }

    bool contains(const Vec2& px) const {
        return px.x >= 0 && px.x < width && px.y >= 0 && px.y < height;
    }
};

// Camera frame is the world frame. The projector pose maps projector-frame
// points into it: X_world = R * X_proj + t.
struct RigCalibration {
    Intrinsics camera;
    Intrinsics projector;
    Mat3 rotation;
    Vec3 translation;

    void validate() const {
        if (camera.fx == 0 || camera.fy == 0 || projector.fx == 0 || projector.fy == 0)
            throw ConfigError("calibration: zero focal length");
        if (orthonormality_error(rotation) > 1e-9)
            throw ConfigError("calibration: rotation not orthonormal");
        if (rotation.det() < 0) throw ConfigError("calibration: rotation has negative determinant");
        if (norm(translation) <= 0) throw ConfigError("calibration: zero baseline");
    }

    Ray camera_ray(const Vec2& px) const { return {{0, 0, 0}, camera.unproject(px)}; }

    Ray projector_ray(const Vec2& px) const {
        return {translation, rotation * projector.unproject(px)};
    }
};

enum class TriangulationFailure { None, NearParallel, NegativeDepth };

struct TriangulatedPoint {
    Vec3 point;       // midpoint of the common perpendicular, world frame
    double ray_gap;   // length of the common perpendicular segment, meters
    TriangulationFailure failure = TriangulationFailure::None;
    bool ok() const { return failure == TriangulationFailure::None; }
};

// Midpoint method: closed-form least squares between two rays. The gap
// doubles as a match-quality metric since correspondences are decoded,
// not searched.
inline TriangulatedPoint triangulate_rays(const Ray& a, const Ray& b) {
    TriangulatedPoint out;
    const Vec3 w = a.origin - b.origin;
    const double d11 = dot(a.dir, a.dir);
    const double d12 = dot(a.dir, b.dir);
    const double d22 = dot(b.dir, b.dir);
    const double denom = d11 * d22 - d12 * d12;  // sin^2(angle) for unit rays
    if (denom < 1e-12) {
        out.failure = TriangulationFailure::NearParallel;
        return out;
    }
    const double e1 = dot(a.dir, w);
    const double e2 = dot(b.dir, w);
    const double s = (d12 * e2 - d22 * e1) / denom;
    const double u = (d11 * e2 - d12 * e1) / denom;
    const Vec3 p1 = a.origin + a.dir * s;
    const Vec3 p2 = b.origin + b.dir * u;
    out.point = (p1 + p2) * 0.5;
    out.ray_gap = norm(p1 - p2);
    if (out.point.z <= 0) out.failure = TriangulationFailure::NegativeDepth;
    return out;
}

// Camera ray against the projector plane of one projector column. Used by the
// phase method, where only the projector x coordinate is decoded.
inline TriangulatedPoint triangulate_ray_plane(const Ray& cam_ray, double projector_x,
                                               const RigCalibration& rig) {
    TriangulatedPoint out;
    const double a = (projector_x - rig.projector.cx) / rig.projector.fx;
    const Vec3 normal_world = rig.rotation * normalized(Vec3{1.0, 0.0, -a});
    const double denom = dot(normal_world, cam_ray.dir);
    if (std::abs(denom) < 1e-9) {
        out.failure = TriangulationFailure::NearParallel;
        return out;
    }
    const double s = dot(normal_world, rig.translation - cam_ray.origin) / denom;
    out.point = cam_ray.origin + cam_ray.dir * s;
    out.ray_gap = 0.0;
    if (s <= 0 || out.point.z <= 0) out.failure = TriangulationFailure::NegativeDepth;
    return out;
}

struct CloudPoint {
    Vec3 position;
    double ray_gap = 0;
    int grid_row = -1;  // correspondence provenance; -1 when not grid based
    int grid_col = -1;
    int source_index = -1;  // index into the correspondence list the cloud was built from
};

struct CloudStats {
    size_t input = 0;
    size_t accepted = 0;
    size_t rejected_gap = 0;
    size_t rejected_parallel = 0;
    size_t rejected_depth = 0;
    double depth_min = 0, depth_max = 0, depth_mean = 0;
};

struct PointCloud {
    std::vector<CloudPoint> points;
    CloudStats stats;
};

inline std::string serialize_ply(const PointCloud& cloud) {
    std::string out;
    out += "ply\nformat ascii 1.0\n";
    out += "element vertex " + std::to_string(cloud.points.size()) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    out += "end_header\n";
    char buf[96];
    for (const CloudPoint& p : cloud.points) {
        std::snprintf(buf, sizeof buf, "%g %g %g\n", p.position.x, p.position.y, p.position.z);
        out += buf;
    }
    return out;
}

inline size_t export_ply(const PointCloud& cloud, const std::string& path) {
    return write_file_atomic(path, serialize_ply(cloud));
}

// Camera at the origin looking down +z, projector offset along +x and toed in
// so both optical axes cross at the given distance.
inline RigCalibration make_convergent_rig(double baseline_m, double convergence_m,
                                          const Intrinsics& camera, const Intrinsics& projector) {
    RigCalibration rig;
    rig.camera = camera;
    rig.projector = projector;
    rig.translation = {baseline_m, 0, 0};
    rig.rotation = Mat3::rotation_y(-std::atan2(baseline_m, convergence_m));
    rig.validate();
    return rig;
}

// ---------------------------------------------------------------------------
// Calibration file

inline nlohmann::ordered_json intrinsics_to_json(const Intrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
            {"width", k.width}, {"height", k.height}};
}

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
    Intrinsics k;
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.value("width", kDefaultSensorWidth);
    k.height = j.value("height", kDefaultSensorHeight);
    return k;
}

inline std::string serialize_calibration(const RigCalibration& rig) {
    nlohmann::ordered_json j;
    j["camera"] = intrinsics_to_json(rig.camera);
    auto p = intrinsics_to_json(rig.projector);
    p["rotation"] = rig.rotation.m;
    p["translation"] = {rig.translation.x, rig.translation.y, rig.translation.z};
    j["projector"] = p;
    // Reserved so the format stays stable once distortion models land.
    j["distortion"] = {{"camera", {0, 0, 0, 0, 0}}, {"projector", {0, 0, 0, 0, 0}}};
    return j.dump(2) + "\n";
}

inline RigCalibration parse_calibration(const std::string& text, const std::string& origin = "<calib>") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    RigCalibration rig;
    try {
        rig.camera = intrinsics_from_json(j.at("camera"));
        rig.projector = intrinsics_from_json(j.at("projector"));
        const auto& rot = j.at("projector").at("rotation");
        for (int i = 0; i < 9; ++i) rig.rotation.m[i] = rot.at(i).get<double>();
        const auto& t = j.at("projector").at("translation");
        rig.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
        if (j.contains("distortion"))
            for (const auto& [name, coeffs] : j.at("distortion").items())
                for (const auto& c : coeffs)
                    if (c.get<double>() != 0.0)
                        throw ConfigError(origin + ": nonzero " + name + " distortion unsupported");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    rig.validate();
    return rig;
}

inline RigCalibration read_calibration(const std::string& path) {
    return parse_calibration(read_file(path), path);
}

inline void write_calibration(const RigCalibration& rig, const std::string& path) {
    write_file_atomic(path, serialize_calibration(rig));
}

}  // namespace evtlight
