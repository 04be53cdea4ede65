#pragma once

#include <string>
#include <vector>

#include "evtlight/correspondence.hpp"
#include "evtlight/triangulation.hpp"

namespace evtlight {

// Triangulates every correspondence, keeps points with positive depth and a
// ray gap within tolerance, and summarizes the depth distribution.
inline PointCloud build_cloud(const std::vector<Correspondence>& correspondences,
                              const RigCalibration& rig, double max_gap_m = 0.01) {
    PointCloud cloud;
    cloud.stats.input = correspondences.size();
    double depth_sum = 0;
    for (size_t i = 0; i < correspondences.size(); ++i) {
        const Correspondence& c = correspondences[i];
        const TriangulatedPoint tp =
            triangulate_rays(rig.camera_ray(c.camera), rig.projector_ray(c.projector));
        if (tp.failure == TriangulationFailure::NearParallel) {
            ++cloud.stats.rejected_parallel;
            continue;
        }
        if (tp.failure == TriangulationFailure::NegativeDepth) {
            ++cloud.stats.rejected_depth;
            continue;
        }
        if (tp.ray_gap > max_gap_m) {
            ++cloud.stats.rejected_gap;
            continue;
        }
        cloud.points.push_back({tp.point, tp.ray_gap, c.grid_row, c.grid_col, static_cast<int>(i)});
        depth_sum += tp.point.z;
        if (cloud.points.size() == 1) {
            cloud.stats.depth_min = cloud.stats.depth_max = tp.point.z;
        } else {
            cloud.stats.depth_min = std::min(cloud.stats.depth_min, tp.point.z);
            cloud.stats.depth_max = std::max(cloud.stats.depth_max, tp.point.z);
        }
    }
    cloud.stats.accepted = cloud.points.size();
    if (!cloud.points.empty()) cloud.stats.depth_mean = depth_sum / static_cast<double>(cloud.points.size());
    return cloud;
}

// Recompute the depth summary from the points; for clouds assembled outside
// build_cloud.
inline void refresh_depth_stats(PointCloud& cloud) {
    cloud.stats.accepted = cloud.points.size();
    if (cloud.points.empty()) return;
    double sum = 0;
    cloud.stats.depth_min = cloud.stats.depth_max = cloud.points.front().position.z;
    for (const CloudPoint& p : cloud.points) {
        sum += p.position.z;
        cloud.stats.depth_min = std::min(cloud.stats.depth_min, p.position.z);
        cloud.stats.depth_max = std::max(cloud.stats.depth_max, p.position.z);
    }
    cloud.stats.depth_mean = sum / static_cast<double>(cloud.points.size());
}

inline std::string serialize_depth_stats_csv(const CloudStats& s) {
    std::string out = "key,value\n";
    out += "input," + std::to_string(s.input) + "\n";
    out += "accepted," + std::to_string(s.accepted) + "\n";
    out += "rejected_gap," + std::to_string(s.rejected_gap) + "\n";
    out += "rejected_parallel," + std::to_string(s.rejected_parallel) + "\n";
    out += "rejected_depth," + std::to_string(s.rejected_depth) + "\n";
    out += "depth_min," + format_double(s.depth_min) + "\n";
    out += "depth_max," + format_double(s.depth_max) + "\n";
    out += "depth_mean," + format_double(s.depth_mean) + "\n";
    return out;
}

}  // namespace evtlight
