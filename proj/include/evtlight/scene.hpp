#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "evtlight/errors.hpp"
#include "evtlight/geometry.hpp"
#include "evtlight/io_util.hpp"

namespace evtlight {

// Scene primitives live in the camera (= world) frame, units in meters.

struct PlanePrimitive {
    Vec3 normal{0, 0, 1};
    double distance = 1.0;  // points X with dot(normal, X) = distance
};

struct SpherePrimitive {
    Vec3 center;
    double radius = 0.1;
};

struct BoxPrimitive {
    Vec3 center;
    Vec3 half_extents{0.05, 0.05, 0.05};
    Mat3 rotation;  // box-to-world
};

using ScenePrimitive = std::variant<PlanePrimitive, SpherePrimitive, BoxPrimitive>;

struct Scene {
    std::vector<ScenePrimitive> primitives;
    double background_depth = 10.0;  // hits beyond this z are treated as misses
};

namespace detail {

inline constexpr double kRayEps = 1e-9;

inline std::optional<double> intersect(const PlanePrimitive& p, const Ray& ray) {
    const double denom = dot(p.normal, ray.dir);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = (p.distance - dot(p.normal, ray.origin)) / denom;
    if (t <= kRayEps) return std::nullopt;
    return t;
}

inline std::optional<double> intersect(const SpherePrimitive& s, const Ray& ray) {
    const Vec3 oc = ray.origin - s.center;
    const double b = dot(oc, ray.dir);
    const double c = dot(oc, oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= kRayEps) t = -b + sq;
    if (t <= kRayEps) return std::nullopt;
    return t;
}

inline std::optional<double> intersect(const BoxPrimitive& box, const Ray& ray) {
    // Slab test in the box frame.
    const Mat3 w2b = box.rotation.transposed();
    const Vec3 o = w2b * (ray.origin - box.center);
    const Vec3 d = w2b * ray.dir;
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    const double od[3] = {o.x, o.y, o.z};
    const double dd[3] = {d.x, d.y, d.z};
    const double he[3] = {box.half_extents.x, box.half_extents.y, box.half_extents.z};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(dd[i]) < 1e-15) {
            if (std::abs(od[i]) > he[i]) return std::nullopt;
            continue;
        }
        double t1 = (-he[i] - od[i]) / dd[i];
        double t2 = (he[i] - od[i]) / dd[i];
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return std::nullopt;
    }
    const double t = tmin > kRayEps ? tmin : tmax;
    if (t <= kRayEps) return std::nullopt;
    return t;
}

}  // namespace detail

struct SceneHit {
    double t;    // ray parameter, meters for unit direction
    Vec3 point;
};

inline std::optional<SceneHit> first_hit(const Scene& scene, const Ray& ray) {
    std::optional<double> best;
    for (const ScenePrimitive& prim : scene.primitives) {
        const auto t = std::visit([&](const auto& p) { return detail::intersect(p, ray); }, prim);
        if (t && (!best || *t < *best)) best = t;
    }
    if (!best) return std::nullopt;
    const Vec3 p = ray.origin + ray.dir * *best;
    if (p.z > scene.background_depth) return std::nullopt;
    return SceneHit{*best, p};
}

// ---------------------------------------------------------------------------
// Scene file

inline std::string serialize_scene(const Scene& scene) {
    nlohmann::ordered_json j;
    j["background_depth"] = scene.background_depth;
    auto prims = nlohmann::ordered_json::array();
    for (const ScenePrimitive& prim : scene.primitives) {
        nlohmann::ordered_json p;
        if (const auto* plane = std::get_if<PlanePrimitive>(&prim)) {
            p["type"] = "plane";
            p["normal"] = {plane->normal.x, plane->normal.y, plane->normal.z};
            p["distance"] = plane->distance;
        } else if (const auto* sphere = std::get_if<SpherePrimitive>(&prim)) {
            p["type"] = "sphere";
            p["center"] = {sphere->center.x, sphere->center.y, sphere->center.z};
            p["radius"] = sphere->radius;
        } else if (const auto* box = std::get_if<BoxPrimitive>(&prim)) {
            p["type"] = "box";
            p["center"] = {box->center.x, box->center.y, box->center.z};
            p["half_extents"] = {box->half_extents.x, box->half_extents.y, box->half_extents.z};
            p["rotation"] = box->rotation.m;
        }
        prims.push_back(p);
    }
    j["primitives"] = prims;
    return j.dump(2) + "\n";
}

inline Vec3 vec3_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline Scene parse_scene(const std::string& text, const std::string& origin = "<scene>") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    Scene scene;
    try {
        scene.background_depth = j.value("background_depth", 10.0);
        for (const auto& p : j.at("primitives")) {
            const std::string type = p.at("type").get<std::string>();
            if (type == "plane") {
                PlanePrimitive plane;
                plane.normal = normalized(vec3_from_json(p.at("normal")));
                plane.distance = p.at("distance").get<double>();
                scene.primitives.push_back(plane);
            } else if (type == "sphere") {
                SpherePrimitive sphere;
                sphere.center = vec3_from_json(p.at("center"));
                sphere.radius = p.at("radius").get<double>();
                if (sphere.radius <= 0) throw ParseError(origin + ": sphere radius must be positive");
                scene.primitives.push_back(sphere);
            } else if (type == "box") {
                BoxPrimitive box;
                box.center = vec3_from_json(p.at("center"));
                box.half_extents = vec3_from_json(p.at("half_extents"));
                if (p.contains("rotation"))
                    for (int i = 0; i < 9; ++i) box.rotation.m[i] = p.at("rotation").at(i).get<double>();
                scene.primitives.push_back(box);
            } else {
                throw ParseError(origin + ": unknown primitive type '" + type + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    return scene;
}

inline Scene read_scene(const std::string& path) { return parse_scene(read_file(path), path); }

inline void write_scene(const Scene& scene, const std::string& path) {
    write_file_atomic(path, serialize_scene(scene));
}

}  // namespace evtlight
