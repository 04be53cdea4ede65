#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "evtlight/events.hpp"

namespace evtlight {

// Running frequency / half-period estimate for one pixel (or one merged
// neighborhood). Consumes strictly alternating filtered events.
struct EstimatorState {
    double lambda = 0.1;  // smoothing parameter for the half-period updates

    int64_t last_on = -1;   // us, -1 before the first event of that polarity
    int64_t last_off = -1;
    double t_on_hat = 0;    // smoothed ON half-period, us
    double t_off_hat = 0;   // smoothed OFF half-period, us
    bool t_on_init = false;
    bool t_off_init = false;
    double f_hat_on = 0;    // Hz, from successive ON events
    double f_hat_off = 0;
    size_t periods_on = 0;  // count of measured same-polarity intervals
    size_t periods_off = 0;
    int8_t last_polarity = 0;

    void expect_alternating(const Event& e) const {
        if (last_polarity != 0 && e.p == last_polarity)
            throw ContractViolation("estimator: repeated polarity, input is not burst-filtered");
    }
};

// f = 1 / (t_k^p - t_{k-1}^p), updated after each event of the same polarity.
inline void update_frequency(EstimatorState& st, const Event& e) {
    st.expect_alternating(e);
    const int64_t prev = e.p > 0 ? st.last_on : st.last_off;
    if (prev >= 0) {
        const double gap_us = static_cast<double>(e.t) - static_cast<double>(prev);
        if (gap_us > 0) {
            const double f = 1e6 / gap_us;
            if (e.p > 0) {
                st.f_hat_on = f;
                ++st.periods_on;
            } else {
                st.f_hat_off = f;
                ++st.periods_off;
            }
        }
    }
}

// Smoothed half-periods from the alternation of the two polarities. The first
// observation initializes the accumulator directly instead of smoothing a
// zero.
inline void update_half_periods(EstimatorState& st, const Event& e) {
    st.expect_alternating(e);
    if (e.p < 0 && st.last_on >= 0) {
        const double obs = static_cast<double>(e.t) - static_cast<double>(st.last_on);
        st.t_on_hat = st.t_on_init ? (1.0 - st.lambda) * st.t_on_hat + st.lambda * obs : obs;
        st.t_on_init = true;
    } else if (e.p > 0 && st.last_off >= 0) {
        const double obs = static_cast<double>(e.t) - static_cast<double>(st.last_off);
        st.t_off_hat = st.t_off_init ? (1.0 - st.lambda) * st.t_off_hat + st.lambda * obs : obs;
        st.t_off_init = true;
    }
}

inline void advance(EstimatorState& st, const Event& e) {
    update_frequency(st, e);
    update_half_periods(st, e);
    if (e.p > 0)
        st.last_on = static_cast<int64_t>(e.t);
    else
        st.last_off = static_cast<int64_t>(e.t);
    st.last_polarity = e.p;
}

// alpha = T_on / (T_on + T_off); absent until both half-periods are seen.
inline std::optional<double> dutycycle(const EstimatorState& st) {
    if (!st.t_on_init || !st.t_off_init) return std::nullopt;
    const double total = st.t_on_hat + st.t_off_hat;
    if (total <= 0) return std::nullopt;
    return st.t_on_hat / total;
}

inline std::optional<double> frequency(const EstimatorState& st) {
    if (st.periods_on > 0) return st.f_hat_on;
    if (st.periods_off > 0) return st.f_hat_off;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Neighborhood views

// Events of the (2N+1)^2 neighborhood around a center pixel, clipped at the
// borders, in stream order.
inline std::vector<Event> neighborhood_events(const EventStream& s, int cx, int cy, int radius) {
    std::vector<Event> out;
    for (const Event& e : s.events)
        if (std::abs(static_cast<int>(e.x) - cx) <= radius &&
            std::abs(static_cast<int>(e.y) - cy) <= radius)
            out.push_back(e);
    return out;
}

struct PolaritySplit {
    std::vector<Event> on;
    std::vector<Event> off;
};

// The paper's "set of two streams, one for each polarity" from a local pixel
// neighborhood.
inline PolaritySplit merge_neighborhood(const EventStream& s, int cx, int cy, int radius) {
    PolaritySplit split;
    for (const Event& e : neighborhood_events(s, cx, cy, radius))
        (e.p > 0 ? split.on : split.off).push_back(e);
    return split;
}

// Feed an estimator with a merged stream in which each edge may carry one
// event per contributing pixel: only polarity transitions count, and the
// earliest event of each same-polarity run supplies the timestamp.
struct EdgeCollapser {
    EstimatorState state;

    void consume(const Event& e) {
        if (state.last_polarity != 0 && e.p == state.last_polarity) return;
        advance(state, e);
    }
};

// ---------------------------------------------------------------------------
// Duty-cycle image

struct DutyCycleImage {
    Geometry geometry;
    std::vector<double> alpha;      // NaN where absent
    std::vector<uint32_t> periods;  // confidence: full periods observed

    double at(int x, int y) const { return alpha[static_cast<size_t>(y) * geometry.width + x]; }
    bool present(int x, int y) const { return !std::isnan(at(x, y)); }
    size_t present_count() const {
        size_t n = 0;
        for (double a : alpha) n += !std::isnan(a);
        return n;
    }
};

// Per-pixel duty cycle over a neighborhood-merged, burst-filtered stream.
// Pixels that saw fewer than min_periods full periods stay absent.
inline DutyCycleImage build_dutycycle_image(const EventStream& filtered, int radius, double lambda,
                                            uint32_t min_periods = 2) {
    DutyCycleImage img;
    img.geometry = filtered.geometry;
    const size_t n = static_cast<size_t>(img.geometry.width) * img.geometry.height;
    img.alpha.assign(n, std::numeric_limits<double>::quiet_NaN());
    img.periods.assign(n, 0);

    // Events indexed per pixel once; each active pixel then merges the lists
    // of its neighborhood by timestamp.
    std::vector<std::vector<uint32_t>> per_pixel(n);
    for (uint32_t i = 0; i < filtered.events.size(); ++i) {
        const Event& e = filtered.events[i];
        per_pixel[static_cast<size_t>(e.y) * img.geometry.width + e.x].push_back(i);
    }

    std::vector<uint32_t> merged;
    for (int y = 0; y < img.geometry.height; ++y) {
        for (int x = 0; x < img.geometry.width; ++x) {
            bool active = false;
            for (int dy = -radius; dy <= radius && !active; ++dy)
                for (int dx = -radius; dx <= radius && !active; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (img.geometry.contains(nx, ny) &&
                        !per_pixel[static_cast<size_t>(ny) * img.geometry.width + nx].empty())
                        active = true;
                }
            if (!active) continue;

            merged.clear();
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (!img.geometry.contains(nx, ny)) continue;
                    const auto& list = per_pixel[static_cast<size_t>(ny) * img.geometry.width + nx];
                    merged.insert(merged.end(), list.begin(), list.end());
                }
            std::sort(merged.begin(), merged.end());  // indices restore stream (time, tie) order

            EdgeCollapser collapser;
            collapser.state.lambda = lambda;
            for (uint32_t idx : merged) collapser.consume(filtered.events[idx]);

            const auto alpha = dutycycle(collapser.state);
            const auto full_periods =
                static_cast<uint32_t>(std::min(collapser.state.periods_on, collapser.state.periods_off));
            const size_t at = static_cast<size_t>(y) * img.geometry.width + x;
            img.periods[at] = full_periods;
            if (alpha && full_periods >= min_periods) img.alpha[at] = *alpha;
        }
    }
    return img;
}

// CSV grid, one row per pixel row, NaN token for absent pixels.
inline std::string serialize_dutycycle_csv(const DutyCycleImage& img) {
    std::string out;
    char buf[48];
    for (int y = 0; y < img.geometry.height; ++y) {
        for (int x = 0; x < img.geometry.width; ++x) {
            if (x) out += ',';
            if (img.present(x, y)) {
                std::snprintf(buf, sizeof buf, "%.6g", img.at(x, y));
                out += buf;
            } else {
                out += "NaN";
            }
        }
        out += '\n';
    }
    return out;
}

// x y alpha triplets with blank lines between rows; plottable directly with
// gnuplot's splot.
inline std::string serialize_dutycycle_gnuplot(const DutyCycleImage& img) {
    std::string out;
    char buf[64];
    for (int y = 0; y < img.geometry.height; ++y) {
        for (int x = 0; x < img.geometry.width; ++x) {
            std::snprintf(buf, sizeof buf, "%d %d %.6g\n", x, y,
                          img.present(x, y) ? img.at(x, y) : std::nan(""));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace evtlight
