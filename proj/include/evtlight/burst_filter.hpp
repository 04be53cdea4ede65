#pragma once

#include <cmath>
#include <optional>
#include <unordered_map>
#include <vector>

#include "evtlight/events.hpp"

namespace evtlight {

struct FilterParams {
    double tau_us = 0;        // decay time constant, set from the stimulus period
    double thresh_up = 0.5;   // AP level that switches the output to ON
    double thresh_down = 0.5; // |AP| level that switches the output to OFF

    // tau = T/10 keeps the edge-terminating gap increment (hold/tau >= 2 for
    // dutycycles in [0.2, 0.8]) safely above threshold while single stray
    // events of the opposite polarity stay below it.
    static FilterParams for_period(double period_us) {
        return {period_us / 10.0, 0.5, 0.5};
    }

    static FilterParams for_frequency(double frequency_hz) {
        return for_period(1e6 / frequency_hz);
    }

    void validate() const {
        if (tau_us <= 0) throw ConfigError("filter: tau must be positive");
        if (thresh_up <= 0 || thresh_down <= 0) throw ConfigError("filter: thresholds must be positive");
    }
};

enum class OutputState : int8_t { Unknown = 0, On = 1, Off = -1 };

// Two integrate-and-fire neurons folded into one action potential behind a
// hysteresis comparator. Between events the AP decays exponentially; each
// event adds its tau-normalized inter-event delay, signed by polarity. The
// output toggles when the AP crosses the threshold of the opposite polarity,
// so a whole burst collapses to the single event that ends the inter-edge
// gap.
struct FilterState {
    double ap = 0;
    OutputState s_out = OutputState::Unknown;
    uint64_t t_last = 0;
    bool seen_any = false;
};

inline std::optional<Event> filter_step(FilterState& state, const Event& e, const FilterParams& params) {
    if (state.seen_any && e.t < state.t_last)
        throw ContractViolation("filter_step: out-of-order event (t=" + std::to_string(e.t) +
                                " after t=" + std::to_string(state.t_last) + ")");
    if (!state.seen_any) {
        state.seen_any = true;
        state.t_last = e.t;
        return std::nullopt;
    }
    const double dt = static_cast<double>(e.t - state.t_last) / params.tau_us;
    state.ap = state.ap * std::exp(-dt) + dt * static_cast<double>(e.p);
    state.t_last = e.t;

    if (state.s_out != OutputState::On && state.ap >= params.thresh_up) {
        state.s_out = OutputState::On;
        return Event{e.t, e.x, e.y, +1};
    }
    if (state.s_out != OutputState::Off && state.ap <= -params.thresh_down) {
        state.s_out = OutputState::Off;
        return Event{e.t, e.x, e.y, -1};
    }
    return std::nullopt;
}

struct FilteredStream {
    EventStream stream;
    size_t input_events = 0;
};

// One filter per pixel; outputs inherit input timestamps, so processing in
// stream order already yields a sorted stream with input tie order preserved.
inline EventStream filter_stream(const EventStream& input, const FilterParams& params) {
    params.validate();
    std::unordered_map<uint32_t, FilterState> states;
    states.reserve(1024);
    EventStream out;
    out.geometry = input.geometry;
    for (const Event& e : input.events) {
        const uint32_t key = (static_cast<uint32_t>(e.y) << 16) | e.x;
        if (auto fired = filter_step(states[key], e, params)) out.events.push_back(*fired);
    }
    return out;
}

}  // namespace evtlight
