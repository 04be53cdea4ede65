#include <doctest.h>

#include "evtlight/cloud.hpp"
#include "evtlight/rng.hpp"
#include "evtlight/triangulation.hpp"
#include "test_util.hpp"

using namespace evtlight;

namespace {

RigCalibration rectified_rig(double baseline = 0.2, double f = 600.0) {
    RigCalibration rig;
    rig.camera = {f, f, 152, 120, 304, 240};
    rig.projector = {f, f, 152, 120, 304, 240};
    rig.translation = {baseline, 0, 0};
    return rig;
}

Vec2 project_into_projector(const RigCalibration& rig, const Vec3& p_world) {
    const Vec3 p_proj = rig.rotation.transposed() * (p_world - rig.translation);
    return rig.projector.project(p_proj);
}

}  // namespace

TEST_CASE("back_project: principal point gives the optical axis") {
    Intrinsics k{600, 600, 152, 120, 304, 240};
    const Vec3 d = k.unproject({152, 120});
    CHECK(d.x == doctest::Approx(0.0));
    CHECK(d.y == doctest::Approx(0.0));
    CHECK(d.z == doctest::Approx(1.0));
}

TEST_CASE("back_project: unit focal, one pixel right of center") {
    Intrinsics k{1, 1, 0, 0, 304, 240};
    const Vec3 d = k.unproject({1, 0});
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(d.x == doctest::Approx(inv_sqrt2));
    CHECK(d.y == doctest::Approx(0.0));
    CHECK(d.z == doctest::Approx(inv_sqrt2));
}

TEST_CASE("project then back_project: the ray passes through the point") {
    const RigCalibration rig =
        make_convergent_rig(0.2, 1.0, {600, 600, 152, 120, 304, 240}, {800, 800, 120, 80, 304, 240});
    Rng rng(15);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 p{rng.uniform(-0.2, 0.3), rng.uniform(-0.2, 0.2), rng.uniform(0.5, 2.0)};
        const Ray cam = rig.camera_ray(rig.camera.project(p));
        const Ray proj = rig.projector_ray(project_into_projector(rig, p));
        // distance from point to each ray
        for (const Ray& ray : {cam, proj}) {
            const Vec3 v = p - ray.origin;
            const double along = dot(v, ray.dir);
            const double dist = norm(v - ray.dir * along);
            CHECK(dist < 1e-9);
        }
    }
}

TEST_CASE("triangulate: exact rays for a point at (0,0,1) recover it") {
    const RigCalibration rig = rectified_rig();
    const Vec3 p{0, 0, 1};
    const auto tp = triangulate_rays(rig.camera_ray(rig.camera.project(p)),
                                     rig.projector_ray(project_into_projector(rig, p)));
    REQUIRE(tp.ok());
    CHECK(norm(tp.point - p) < 1e-9);
    CHECK(tp.ray_gap < 1e-12);
}

TEST_CASE("triangulate: rectified rig depth follows Z = f*b/d") {
    // unit focal, baseline 0.2: disparity 0.2 -> Z = 1, disparity 0.1 -> Z = 2
    RigCalibration rig;
    rig.camera = {1, 1, 0, 0, 304, 240};
    rig.projector = {1, 1, 0, 0, 304, 240};
    rig.translation = {0.2, 0, 0};
    for (const double depth : {1.0, 2.0}) {
        const Vec3 p{0, 0, depth};
        const Vec2 cam_px = rig.camera.project(p);
        const Vec2 proj_px = project_into_projector(rig, p);
        const double disparity = cam_px.x - proj_px.x;
        CHECK(disparity == doctest::Approx(0.2 / depth));
        const auto tp = triangulate_rays(rig.camera_ray(cam_px), rig.projector_ray(proj_px));
        REQUIRE(tp.ok());
        CHECK(tp.point.z == doctest::Approx(depth));
    }
}

TEST_CASE("triangulate rejects near-parallel rays and negative depth") {
    const Ray a{{0, 0, 0}, {0, 0, 1}};
    const Ray b{{0.2, 0, 0}, {0, 0, 1}};
    CHECK(triangulate_rays(a, b).failure == TriangulationFailure::NearParallel);

    const Ray c{{0, 0, 0}, {0, 0, -1}};
    const Ray d{{0.2, 0, 0}, normalized(Vec3{-0.1, 0, -1})};
    CHECK(triangulate_rays(c, d).failure == TriangulationFailure::NegativeDepth);
}

TEST_CASE("triangulation is symmetric under swapping the two views") {
    const RigCalibration rig =
        make_convergent_rig(0.2, 1.0, {600, 600, 152, 120, 304, 240}, {800, 800, 120, 80, 304, 240});
    // Swapped rig: world frame moves to the projector.
    RigCalibration swapped;
    swapped.camera = rig.projector;
    swapped.projector = rig.camera;
    swapped.rotation = rig.rotation.transposed();
    swapped.translation = rig.rotation.transposed() * (Vec3{0, 0, 0} - rig.translation);

    Rng rng(33);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p{rng.uniform(-0.1, 0.25), rng.uniform(-0.1, 0.1), rng.uniform(0.7, 1.5)};
        const Vec2 cam_px = rig.camera.project(p);
        const Vec2 proj_px = project_into_projector(rig, p);
        const auto forward = triangulate_rays(rig.camera_ray(cam_px), rig.projector_ray(proj_px));
        const auto reversed =
            triangulate_rays(swapped.camera_ray(proj_px), swapped.projector_ray(cam_px));
        REQUIRE(forward.ok());
        REQUIRE(reversed.ok());
        // Map the reversed point back into the original world frame.
        const Vec3 back = rig.rotation * reversed.point + rig.translation;
        CHECK(norm(back - forward.point) < 1e-9);
    }
}

TEST_CASE("scaling the baseline scales triangulated depth (rectified, fixed disparity)") {
    for (const double scale : {1.0, 2.0, 3.5}) {
        RigCalibration rig;
        rig.camera = {1, 1, 0, 0, 304, 240};
        rig.projector = {1, 1, 0, 0, 304, 240};
        rig.translation = {0.2 * scale, 0, 0};
        const Vec2 cam_px{0.1, 0};
        const Vec2 proj_px{cam_px.x - 0.2, 0};  // fixed disparity 0.2
        const auto tp = triangulate_rays(rig.camera_ray(cam_px), rig.projector_ray(proj_px));
        REQUIRE(tp.ok());
        CHECK(tp.point.z == doctest::Approx(1.0 * scale));
    }
}

TEST_CASE("noise propagation matches the first-order depth error model") {
    // sigma_Z ~= Z^2 sigma_d / (f b) for a rectified pair
    const double f = 600.0, b = 0.2, depth = 1.0, sigma_px = 0.5;
    RigCalibration rig = rectified_rig(b, f);
    Rng rng(77);
    std::vector<double> errors;
    for (int i = 0; i < 5000; ++i) {
        const Vec3 p{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), depth};
        Vec2 cam_px = rig.camera.project(p);
        const Vec2 proj_px = project_into_projector(rig, p);
        cam_px.x += rng.normal(0.0, sigma_px);
        const auto tp = triangulate_rays(rig.camera_ray(cam_px), rig.projector_ray(proj_px));
        REQUIRE(tp.ok());
        errors.push_back(tp.point.z - depth);
    }
    const double rms = std::sqrt(testutil::variance(errors) +
                                 testutil::mean(errors) * testutil::mean(errors));
    const double predicted = depth * depth * sigma_px / (f * b);
    CHECK(rms < predicted * 1.5);
    CHECK(rms > predicted / 1.5);
}

TEST_CASE("build_cloud: empty input gives an empty cloud") {
    const PointCloud cloud = build_cloud({}, rectified_rig());
    CHECK(cloud.points.empty());
    CHECK(cloud.stats.input == 0);
    CHECK(cloud.stats.accepted == 0);
}

TEST_CASE("build_cloud: noise-free plane correspondences stay on the plane") {
    const RigCalibration rig =
        make_convergent_rig(0.2, 1.0, {600, 600, 152, 120, 304, 240}, {800, 800, 120, 80, 304, 240});
    std::vector<Correspondence> cs;
    for (int gx = -5; gx <= 5; ++gx) {
        for (int gy = -4; gy <= 4; ++gy) {
            const Vec3 p{gx * 0.02, gy * 0.02, 1.0};
            Correspondence c;
            c.camera = rig.camera.project(p);
            c.projector = project_into_projector(rig, p);
            cs.push_back(c);
        }
    }
    const PointCloud cloud = build_cloud(cs, rig, 1e-9);
    CHECK(cloud.stats.accepted == cs.size());
    for (const CloudPoint& p : cloud.points) CHECK(std::abs(p.position.z - 1.0) < 1e-6);
}

TEST_CASE("export_ply: empty cloud still writes a valid header") {
    testutil::TempDir dir;
    const auto path = dir.file("empty.ply");
    export_ply(PointCloud{}, path);
    const std::string text = read_file(path);
    CHECK(text.find("element vertex 0\n") != std::string::npos);
    CHECK(text.find("end_header\n") != std::string::npos);
}

TEST_CASE("export_ply: single point serializes as '0 0 1'") {
    PointCloud cloud;
    cloud.points.push_back({{0, 0, 1}, 0, 0, 0});
    const std::string text = serialize_ply(cloud);
    CHECK(text.find("element vertex 1\n") != std::string::npos);
    CHECK(text.find("\n0 0 1\n") != std::string::npos);
}

TEST_CASE("export_ply: header count matches body line count") {
    PointCloud cloud;
    Rng rng(5);
    for (int i = 0; i < 600; ++i)
        cloud.points.push_back({{rng.uniform(), rng.uniform(), 1 + rng.uniform()}, 0, 0, 0});
    const std::string text = serialize_ply(cloud);
    const size_t header_end = text.find("end_header\n") + 11;
    size_t lines = 0;
    for (size_t i = header_end; i < text.size(); ++i) lines += text[i] == '\n';
    CHECK(lines == 600);
}

TEST_CASE("calibration file round trips and validates") {
    testutil::TempDir dir;
    const RigCalibration rig =
        make_convergent_rig(0.2, 1.0, {600, 600, 152, 120, 304, 240}, {800, 800, 120, 80, 304, 240});
    const auto path = dir.file("rig.cal");
    write_calibration(rig, path);
    const RigCalibration back = read_calibration(path);
    CHECK(back.camera.fx == rig.camera.fx);
    CHECK(back.projector.cx == rig.projector.cx);
    CHECK(norm(back.translation - rig.translation) < 1e-15);
    for (int i = 0; i < 9; ++i) CHECK(back.rotation.m[i] == doctest::Approx(rig.rotation.m[i]));
}

TEST_CASE("calibration validation rejects bad rigs") {
    RigCalibration rig = rectified_rig();
    rig.rotation.m[0] = 2.0;
    CHECK_THROWS_AS(rig.validate(), ConfigError);

    RigCalibration zero_baseline = rectified_rig();
    zero_baseline.translation = {0, 0, 0};
    CHECK_THROWS_AS(zero_baseline.validate(), ConfigError);
}

TEST_CASE("calibration file with nonzero distortion is rejected") {
    const std::string text = R"({
      "camera": {"fx": 600, "fy": 600, "cx": 152, "cy": 120},
      "projector": {"fx": 800, "fy": 800, "cx": 120, "cy": 80,
                     "rotation": [1,0,0,0,1,0,0,0,1], "translation": [0.2,0,0]},
      "distortion": {"camera": [0.1,0,0,0,0], "projector": [0,0,0,0,0]}
    })";
    CHECK_THROWS(parse_calibration(text));
}
