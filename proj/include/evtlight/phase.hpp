#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evtlight/events.hpp"

namespace evtlight {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// mod into [0, m)
inline double positive_mod(double v, double m) {
    double r = std::fmod(v, m);
    if (r < 0) r += m;
    if (r >= m) r = 0;
    return r;
}

// mod into [-m/2, m/2)
inline double centered_mod(double v, double m) { return positive_mod(v + m / 2.0, m) - m / 2.0; }

// Per-pixel time shift of the first ON event of each period against a
// reference pixel on the same line. NaN where a pixel produced no usable
// events. The per-period shifts are reduced with a circular median so pixels
// sitting at the wrap boundary do not split between 0 and P.
inline std::vector<double> measure_time_shift(const EventStream& filtered, int row, int ref_x,
                                              double period_us) {
    if (period_us <= 0) throw ContractViolation("measure_time_shift: period must be positive");
    const int width = filtered.geometry.width;
    std::vector<std::vector<double>> on_times(static_cast<size_t>(width));
    for (const Event& e : filtered.events)
        if (e.y == row && e.p > 0) on_times[e.x].push_back(static_cast<double>(e.t));

    std::vector<double> shifts(static_cast<size_t>(width), std::numeric_limits<double>::quiet_NaN());
    if (ref_x < 0 || ref_x >= width || on_times[static_cast<size_t>(ref_x)].empty())
        throw ContractViolation("measure_time_shift: reference pixel has no ON events");
    const std::vector<double>& anchors = on_times[static_cast<size_t>(ref_x)];

    std::vector<double> deltas;
    for (int x = 0; x < width; ++x) {
        const auto& times = on_times[static_cast<size_t>(x)];
        if (times.empty()) continue;
        deltas.clear();
        size_t ti = 0;
        for (const double a : anchors) {
            while (ti < times.size() && times[ti] < a) ++ti;
            if (ti >= times.size()) break;
            if (times[ti] < a + period_us) deltas.push_back(times[ti] - a);
        }
        if (deltas.empty()) continue;
        const double pivot = deltas.front();
        std::vector<double> centered;
        centered.reserve(deltas.size());
        for (const double d : deltas) centered.push_back(positive_mod(d - pivot + period_us / 2.0, period_us));
        std::nth_element(centered.begin(), centered.begin() + centered.size() / 2, centered.end());
        const double med = centered[centered.size() / 2];
        shifts[static_cast<size_t>(x)] = positive_mod(pivot - period_us / 2.0 + med, period_us);
    }
    return shifts;
}

// phi = 2*pi/P * mod(dt, P), in [0, 2*pi)
inline double wrap_phase(double dt_us, double period_us) {
    if (period_us <= 0) throw ContractViolation("wrap_phase: period must be positive");
    return kTwoPi / period_us * positive_mod(dt_us, period_us);
}

// Line-wise recursive unwrapping: Phi_x = Phi_{x-1} + lambda_u * mod(phi_{x-1}
// - Phi_{x-1}, 2*pi), seeded with Phi_0 = phi_0. The positive modulus follows
// the printed recursion and can only accumulate forward; signed_mod switches
// to a centered modulus that can also step backward.
inline std::vector<double> unwrap_line(std::span<const double> phi, double lambda_u = 1.0,
                                       bool signed_mod = false) {
    std::vector<double> out(phi.size());
    if (phi.empty()) return out;
    out[0] = phi[0];
    for (size_t x = 1; x < phi.size(); ++x) {
        const double residual = signed_mod ? centered_mod(phi[x - 1] - out[x - 1], kTwoPi)
                                           : positive_mod(phi[x - 1] - out[x - 1], kTwoPi);
        out[x] = out[x - 1] + lambda_u * residual;
    }
    return out;
}

// Projector x coordinate per pixel: one full phase turn spans one stripe
// period.
inline std::vector<double> phase_to_correspondence(std::span<const double> unwrapped,
                                                   double stripe_period_px) {
    std::vector<double> out(unwrapped.size());
    for (size_t i = 0; i < unwrapped.size(); ++i) out[i] = unwrapped[i] / kTwoPi * stripe_period_px;
    return out;
}

// Leftmost pixel of the line with enough ON events to anchor the periods.
inline std::optional<int> choose_reference(const EventStream& filtered, int row, int min_periods = 3) {
    std::vector<int> counts(filtered.geometry.width, 0);
    for (const Event& e : filtered.events)
        if (e.y == row && e.p > 0) ++counts[e.x];
    for (int x = 0; x < filtered.geometry.width; ++x)
        if (counts[x] >= min_periods + 1) return x;
    return std::nullopt;
}

enum class PhasePixel : uint8_t { HeldEdge = 0, Measured = 1, Interpolated = 2 };

struct PhaseLine {
    int row = 0;
    int ref_x = -1;
    double period_us = 0;
    std::vector<double> wrapped;       // phi, NaN-free after interpolation
    std::vector<double> unwrapped;     // Phi
    std::vector<PhasePixel> source;    // how each pixel's phi was obtained
    double absent_fraction = 1.0;
    bool rejected = true;
};

// Fill interior gaps by circular-linear interpolation between the bounding
// present pixels (assuming less than one full wrap per gap); leading and
// trailing gaps hold the nearest present value. A flat fill would make the
// forward-only unwrap recursion insert a spurious 2*pi catch-up at the gap
// exit.
inline void interpolate_phase_gaps(std::vector<double>& phi) {
    const size_t n = phi.size();
    size_t first = n, last = n;
    for (size_t x = 0; x < n; ++x)
        if (!std::isnan(phi[x])) {
            if (first == n) first = x;
            last = x;
        }
    if (first == n) return;
    for (size_t x = 0; x < first; ++x) phi[x] = phi[first];
    for (size_t x = last + 1; x < n; ++x) phi[x] = phi[last];
    size_t a = first;
    for (size_t x = first + 1; x <= last; ++x) {
        if (std::isnan(phi[x])) continue;
        if (x > a + 1) {
            const double step = positive_mod(phi[x] - phi[a], kTwoPi) / static_cast<double>(x - a);
            for (size_t g = a + 1; g < x; ++g)
                phi[g] = positive_mod(phi[a] + step * static_cast<double>(g - a), kTwoPi);
        }
        a = x;
    }
}

// Full per-line chain: reference choice, time shifts, wrap, gap fill,
// unwrap. Lines with more than max_absent of their pixels missing are
// rejected.
inline PhaseLine build_phase_line(const EventStream& filtered, int row, double period_us,
                                  double lambda_u = 1.0, bool signed_mod = false,
                                  double max_absent = 0.2) {
    PhaseLine line;
    line.row = row;
    line.period_us = period_us;
    const auto ref = choose_reference(filtered, row);
    if (!ref) return line;
    line.ref_x = *ref;

    const std::vector<double> shifts = measure_time_shift(filtered, row, line.ref_x, period_us);
    size_t absent = 0;
    line.wrapped.assign(shifts.size(), 0.0);
    line.source.assign(shifts.size(), PhasePixel::Measured);
    for (size_t x = 0; x < shifts.size(); ++x) {
        if (std::isnan(shifts[x])) {
            ++absent;
            line.wrapped[x] = std::numeric_limits<double>::quiet_NaN();
        } else {
            line.wrapped[x] = wrap_phase(shifts[x], period_us);
        }
    }
    line.absent_fraction = static_cast<double>(absent) / static_cast<double>(shifts.size());
    if (line.absent_fraction > max_absent) return line;

    size_t first = shifts.size(), last = 0;
    for (size_t x = 0; x < shifts.size(); ++x)
        if (!std::isnan(shifts[x])) {
            if (first == shifts.size()) first = x;
            last = x;
        }
    for (size_t x = 0; x < shifts.size(); ++x)
        if (std::isnan(shifts[x]))
            line.source[x] = (x < first || x > last) ? PhasePixel::HeldEdge : PhasePixel::Interpolated;

    interpolate_phase_gaps(line.wrapped);
    line.unwrapped = unwrap_line(line.wrapped, lambda_u, signed_mod);
    line.rejected = false;
    return line;
}

// CSV grid of one value per pixel, NaN token where absent; shared by the
// wrapped and unwrapped phase maps.
inline std::string serialize_phase_csv(const std::vector<std::vector<double>>& rows) {
    std::string out;
    char buf[48];
    for (const auto& row : rows) {
        for (size_t x = 0; x < row.size(); ++x) {
            if (x) out += ',';
            if (std::isnan(row[x])) {
                out += "NaN";
            } else {
                std::snprintf(buf, sizeof buf, "%.6g", row[x]);
                out += buf;
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace evtlight
