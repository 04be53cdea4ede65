#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <string>
#include <vector>

#include "evtlight/events.hpp"
#include "evtlight/pattern.hpp"
#include "evtlight/rng.hpp"
#include "evtlight/scene.hpp"
#include "evtlight/triangulation.hpp"

namespace evtlight {

// Change-detector model of the ATIS front end. Illumination is binary per
// pixel, so emission is purely edge triggered: each signal edge produces a
// burst of same-polarity events.
struct SensorParams {
    double latency_us = 100;        // mean edge-to-first-event delay
    double jitter_sigma_us = 10;    // gaussian timestamp jitter per event
    double refractory_us = 0;       // per-pixel dead time, 0 disables
    double burst_mean = 2;          // geometric burst length mean
    int burst_cap = 10;
    double burst_spacing_us = 15;   // nominal gap between burst events
    double noise_rate_hz = 0;       // background noise, events/pixel/second
    double bandwidth_eps = kAtisBandwidthEps;

    void validate() const {
        if (latency_us < 0 || jitter_sigma_us < 0 || refractory_us < 0 || burst_spacing_us < 0 ||
            noise_rate_hz < 0)
            throw ConfigError("sensor: negative parameter");
        if (burst_mean < 1 || burst_cap < 1) throw ConfigError("sensor: burst length must be >= 1");
        if (bandwidth_eps <= 0) throw ConfigError("sensor: bandwidth cap must be positive");
    }
};

// Ground truth for one projected dot, kept for evaluation.
struct DotTrace {
    int row = 0, col = 0;
    bool visible = false;
    Vec2 proj_px;   // dot center in projector image coordinates
    Vec2 cam_px;    // sub-pixel position in the camera image
    double depth_m = 0;
    std::vector<std::pair<uint16_t, uint16_t>> footprint;  // camera pixels lit by the dot
};

struct DotSchedule {
    int row = 0, col = 0;
    std::vector<SignalEdge> edges;  // quantized to the DMD step grid, time order
};

// Square-wave schedules quantized to the projector step grid. Edge pairs that
// collapse onto the same step (pulse shorter than the grid) cancel out.
inline std::vector<DotSchedule> render_timeline(const PatternSpec& pattern, uint64_t duration_us,
                                                uint64_t step_us = kDmdStepUs,
                                                bool allow_fast_step = false) {
    if (step_us == 0) throw ConfigError("render_timeline: zero step");
    if (step_us < kDmdStepUs && !allow_fast_step)
        throw ConfigError("render_timeline: step below the " + std::to_string(kDmdStepUs) +
                          "us DMD resolution (pass allow_fast_step to override)");
    for (const SignalSpec& s : pattern.alphabet)
        if (static_cast<double>(duration_us) < s.period_us())
            throw ConfigError("render_timeline: duration shorter than the slowest signal period (" +
                              std::to_string(s.period_us()) + "us)");
    std::vector<DotSchedule> schedules;
    schedules.reserve(pattern.grid.cell_count());
    for (int r = 0; r < pattern.grid.rows; ++r) {
        for (int c = 0; c < pattern.grid.cols; ++c) {
            DotSchedule sched{r, c, {}};
            const SignalSpec sig = pattern.dot_signal(r, c);
            for (const SignalEdge& e : signal_edges(sig, 0.0, static_cast<double>(duration_us))) {
                const double q =
                    std::round(e.t_us / static_cast<double>(step_us)) * static_cast<double>(step_us);
                if (q < 0 || q >= static_cast<double>(duration_us)) continue;
                if (!sched.edges.empty() && sched.edges.back().t_us == q &&
                    sched.edges.back().rising != e.rising) {
                    sched.edges.pop_back();  // zero-width pulse on the step grid
                    continue;
                }
                sched.edges.push_back({q, e.rising});
            }
            schedules.push_back(std::move(sched));
        }
    }
    return schedules;
}

// Forward model: projector ray through each dot center, first scene hit,
// reprojection into the camera. Dots occluded from either view, outside the
// image, or beyond the background depth are marked absent.
inline std::vector<DotTrace> project_dots(const PatternSpec& pattern, const Scene& scene,
                                          const RigCalibration& rig) {
    rig.validate();
    std::vector<DotTrace> traces;
    traces.reserve(pattern.grid.cell_count());
    for (int r = 0; r < pattern.grid.rows; ++r) {
        for (int c = 0; c < pattern.grid.cols; ++c) {
            DotTrace trace;
            trace.row = r;
            trace.col = c;
            trace.proj_px = dot_center_px(pattern, r, c);
            traces.push_back(trace);
            DotTrace& out = traces.back();

            const auto hit = first_hit(scene, rig.projector_ray(trace.proj_px));
            if (!hit || hit->point.z <= 0) continue;
            const Vec3 p = hit->point;
            const Vec2 cam = rig.camera.project(p);
            if (!rig.camera.contains(cam)) continue;

            // Camera-side occlusion: the surface point must be the first hit
            // along its own viewing ray.
            const double dist = norm(p);
            const auto cam_hit = first_hit(scene, Ray{{0, 0, 0}, p / dist});
            if (cam_hit && cam_hit->t < dist * (1.0 - 1e-7)) continue;

            // First pixel of the s-wide block whose center tracks the
            // sub-pixel dot position: x0 = round(cam - (s-1)/2).
            const int x0 = static_cast<int>(std::floor(cam.x - pattern.dot_size / 2.0 + 1.0));
            const int y0 = static_cast<int>(std::floor(cam.y - pattern.dot_size / 2.0 + 1.0));
            for (int dy = 0; dy < pattern.dot_size; ++dy)
                for (int dx = 0; dx < pattern.dot_size; ++dx)
                    if (rig.camera.contains({static_cast<double>(x0 + dx), static_cast<double>(y0 + dy)}))
                        out.footprint.emplace_back(static_cast<uint16_t>(x0 + dx),
                                                   static_cast<uint16_t>(y0 + dy));
            if (out.footprint.empty()) continue;
            out.visible = true;
            out.cam_px = cam;
            out.depth_m = p.z;
        }
    }
    return traces;
}

struct GenerationReport {
    size_t emitted = 0;
    size_t dropped_bandwidth = 0;
};

namespace detail {

// Events of one dot, pixel by pixel; per-(dot, pixel) RNG substreams make the
// result independent of processing order.
inline std::vector<Event> dot_events(const DotSchedule& sched, const DotTrace& trace,
                                     const SensorParams& params, uint64_t seed, size_t dot_index,
                                     uint64_t duration_us) {
    std::vector<Event> out;
    std::vector<Event> pixel_events;
    for (size_t fp = 0; fp < trace.footprint.size(); ++fp) {
        const auto [px, py] = trace.footprint[fp];
        Rng rng = Rng::substream(seed, (static_cast<uint64_t>(dot_index) << 24) | fp);
        pixel_events.clear();
        for (const SignalEdge& edge : sched.edges) {
            const int burst = rng.geometric(params.burst_mean, params.burst_cap);
            for (int j = 0; j < burst; ++j) {
                const double t = edge.t_us + params.latency_us + j * params.burst_spacing_us +
                                 rng.normal(0.0, params.jitter_sigma_us);
                if (t < 0 || t >= static_cast<double>(duration_us)) continue;
                pixel_events.push_back({static_cast<uint64_t>(t + 0.5), px, py,
                                        static_cast<int8_t>(edge.rising ? 1 : -1)});
            }
        }
        std::stable_sort(pixel_events.begin(), pixel_events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
        if (params.refractory_us > 0) {
            uint64_t last_kept = 0;
            bool any = false;
            for (const Event& e : pixel_events) {
                if (any && static_cast<double>(e.t - last_kept) < params.refractory_us) continue;
                out.push_back(e);
                last_kept = e.t;
                any = true;
            }
        } else {
            out.insert(out.end(), pixel_events.begin(), pixel_events.end());
        }
    }
    return out;
}

}  // namespace detail

// Event synthesis: every footprint pixel answers every schedule edge with a
// burst of >= 1 events; timestamps get latency plus jitter; a per-pixel
// refractory period and the global bandwidth cap thin the result. Dots are
// independent, so they can be generated on several threads; the merge below
// is the only synchronization point and keeps output deterministic.
inline EventStream generate_events(const std::vector<DotSchedule>& schedules,
                                   const std::vector<DotTrace>& traces, const SensorParams& params,
                                   uint64_t seed, uint64_t duration_us, Geometry geometry,
                                   GenerationReport* report = nullptr, int threads = 1) {
    params.validate();
    if (schedules.size() != traces.size())
        throw ContractViolation("generate_events: schedules and traces are inconsistent");
    for (size_t d = 0; d < schedules.size(); ++d)
        if (schedules[d].row != traces[d].row || schedules[d].col != traces[d].col)
            throw ContractViolation("generate_events: schedule/trace dot mismatch");

    EventStream out;
    out.geometry = geometry;
    if (threads <= 1 || schedules.size() < 2) {
        for (size_t d = 0; d < schedules.size(); ++d) {
            if (!traces[d].visible) continue;
            const auto events = detail::dot_events(schedules[d], traces[d], params, seed, d, duration_us);
            out.events.insert(out.events.end(), events.begin(), events.end());
        }
    } else {
        const size_t n = schedules.size();
        const size_t chunk = (n + static_cast<size_t>(threads) - 1) / static_cast<size_t>(threads);
        std::vector<std::future<std::vector<Event>>> futures;
        for (size_t begin = 0; begin < n; begin += chunk) {
            const size_t end = std::min(begin + chunk, n);
            futures.push_back(std::async(std::launch::async, [&, begin, end] {
                std::vector<Event> part;
                for (size_t d = begin; d < end; ++d) {
                    if (!traces[d].visible) continue;
                    const auto events =
                        detail::dot_events(schedules[d], traces[d], params, seed, d, duration_us);
                    part.insert(part.end(), events.begin(), events.end());
                }
                return part;
            }));
        }
        for (auto& f : futures) {
            const auto part = f.get();
            out.events.insert(out.events.end(), part.begin(), part.end());
        }
    }

    if (params.noise_rate_hz > 0) {
        for (int y = 0; y < geometry.height; ++y) {
            for (int x = 0; x < geometry.width; ++x) {
                Rng rng = Rng::substream(seed, 0xB06'0000'0000ULL + static_cast<uint64_t>(y) * geometry.width + x);
                double t = rng.exponential(params.noise_rate_hz / 1e6);
                while (t < static_cast<double>(duration_us)) {
                    out.events.push_back({static_cast<uint64_t>(t), static_cast<uint16_t>(x),
                                          static_cast<uint16_t>(y),
                                          static_cast<int8_t>(rng.uniform() < 0.5 ? -1 : 1)});
                    t += rng.exponential(params.noise_rate_hz / 1e6);
                }
            }
        }
    }

    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });

    // Bandwidth cap as a sliding 1 ms window; overflow events are dropped.
    GenerationReport rep;
    const size_t window_cap = static_cast<size_t>(params.bandwidth_eps * 1e-3);
    std::deque<uint64_t> window;
    std::vector<Event> kept;
    kept.reserve(out.events.size());
    for (const Event& e : out.events) {
        while (!window.empty() && window.front() + 1000 <= e.t) window.pop_front();
        if (window.size() >= window_cap) {
            ++rep.dropped_bandwidth;
            continue;
        }
        window.push_back(e.t);
        kept.push_back(e);
    }
    out.events = std::move(kept);
    rep.emitted = out.events.size();
    if (report) *report = rep;
    return out;
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar

inline std::string serialize_traces_csv(const std::vector<DotTrace>& traces) {
    std::string out = "grid_row,grid_col,visible,proj_x,proj_y,cam_x,cam_y,depth_m\n";
    char buf[192];
    for (const DotTrace& t : traces) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.9f\n", t.row, t.col,
                      t.visible ? 1 : 0, t.proj_px.x, t.proj_px.y, t.cam_px.x, t.cam_px.y, t.depth_m);
        out += buf;
    }
    return out;
}

inline std::vector<DotTrace> parse_traces_csv(const std::string& text,
                                              const std::string& origin = "<sidecar>") {
    std::vector<DotTrace> traces;
    size_t lineno = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (lineno == 1 || line.empty()) continue;
        DotTrace t;
        int visible = 0;
        if (std::sscanf(line.c_str(), "%d,%d,%d,%lf,%lf,%lf,%lf,%lf", &t.row, &t.col, &visible,
                        &t.proj_px.x, &t.proj_px.y, &t.cam_px.x, &t.cam_px.y, &t.depth_m) != 8)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": malformed sidecar record");
        t.visible = visible != 0;
        traces.push_back(t);
    }
    return traces;
}

}  // namespace evtlight
