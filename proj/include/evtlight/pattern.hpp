#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "evtlight/errors.hpp"
#include "evtlight/events.hpp"
#include "evtlight/geometry.hpp"
#include "evtlight/io_util.hpp"
#include "evtlight/rng.hpp"

namespace evtlight {

// DLP lightcrafter limits: binary frames at 0.7 ms, at most 5000 mirrors
// updated per step through the asynchronous driver.
inline constexpr int kDmdMirrorBudget = 5000;
inline constexpr uint64_t kDmdStepUs = 700;
inline constexpr double kAtisBandwidthEps = 8e6;  // max event flow, events/s

// Square-wave drive of one projected dot. Phase is a fraction of the period.
struct SignalSpec {
    double frequency_hz = 0;
    double dutycycle = 0.5;
    double phase = 0;

    double period_us() const { return 1e6 / frequency_hz; }

    void validate() const {
        if (frequency_hz <= 0) throw ConfigError("signal frequency must be positive");
        if (dutycycle <= 0 || dutycycle >= 1) throw ConfigError("dutycycle must be inside (0,1)");
        if (phase < 0 || phase >= 1) throw ConfigError("phase must be in [0,1)");
    }
};

struct SignalEdge {
    double t_us;
    bool rising;
};

// All edges of the square wave with t in [t0, t1).
inline std::vector<SignalEdge> signal_edges(const SignalSpec& s, double t0_us, double t1_us) {
    std::vector<SignalEdge> edges;
    const double T = s.period_us();
    const long long j0 = static_cast<long long>(std::floor(t0_us / T - s.phase)) - 1;
    for (long long j = j0;; ++j) {
        const double rise = (static_cast<double>(j) + s.phase) * T;
        const double fall = rise + s.dutycycle * T;
        if (rise >= t1_us) break;
        if (rise >= t0_us) edges.push_back({rise, true});
        if (fall >= t0_us && fall < t1_us) edges.push_back({fall, false});
    }
    return edges;
}

// ---------------------------------------------------------------------------
// Symbol grids and Perfect SubMaps

struct SymbolGrid {
    int rows = 0, cols = 0;
    int k = 0;                       // alphabet size
    int window_rows = 3, window_cols = 3;
    std::vector<int> symbols;        // row-major, values in [0, k)

    int at(int r, int c) const { return symbols[static_cast<size_t>(r) * cols + c]; }
    int& at(int r, int c) { return symbols[static_cast<size_t>(r) * cols + c]; }
    size_t cell_count() const { return static_cast<size_t>(rows) * cols; }
};

struct PsmParams {
    int rows = 20, cols = 30;
    int k = 4;
    int window_rows = 3, window_cols = 3;
    int hmin = 2;
    uint64_t seed = 0;
    // On a dead end, recently added codes are reshuffled; after this many
    // reshuffles the whole pattern is canceled and generation starts over.
    int max_shuffles = 1000;
    int max_restarts = 100;
};

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// Codeword as integer: the window symbols are the coefficients in base k.
struct CodewordSpace {
    int k = 0;
    int length = 0;
    std::vector<uint64_t> pow_k;

    CodewordSpace(int k_, int length_) : k(k_), length(length_), pow_k(length_ + 1) {
        pow_k[0] = 1;
        for (int i = 1; i <= length; ++i) {
            if (pow_k[i - 1] > (uint64_t{1} << 26) / static_cast<uint64_t>(k))
                throw ConfigError("codeword space k^(m*n) too large for the flag array");
            pow_k[i] = pow_k[i - 1] * static_cast<uint64_t>(k);
        }
    }

    uint64_t size() const { return pow_k[length]; }

    int digit(uint64_t code, int pos) const {
        return static_cast<int>((code / pow_k[pos]) % static_cast<uint64_t>(k));
    }
};

// True if any codeword within Hamming distance `rem` of `code` (altering only
// positions >= from) has its flag set.
inline bool ball_flagged(const std::vector<uint8_t>& flags, const CodewordSpace& cs, uint64_t code,
                         int from, int rem) {
    if (flags[code]) return true;
    if (rem == 0) return false;
    for (int pos = from; pos < cs.length; ++pos) {
        const int d0 = cs.digit(code, pos);
        const uint64_t base = code - static_cast<uint64_t>(d0) * cs.pow_k[pos];
        for (int d = 0; d < cs.k; ++d) {
            if (d == d0) continue;
            if (ball_flagged(flags, cs, base + static_cast<uint64_t>(d) * cs.pow_k[pos], pos + 1, rem - 1))
                return true;
        }
    }
    return false;
}

}  // namespace detail

inline uint64_t pack_window(const SymbolGrid& g, int top, int left, const detail::CodewordSpace& cs) {
    uint64_t code = 0;
    int pos = 0;
    for (int r = 0; r < g.window_rows; ++r)
        for (int c = 0; c < g.window_cols; ++c, ++pos)
            code += static_cast<uint64_t>(g.at(top + r, left + c)) * cs.pow_k[pos];
    return code;
}

// Brute-force PSM generation: symbols are appended row by row from the top
// left corner; each placement that completes a window is Hamming-tested
// against the flag array before being committed.
inline SymbolGrid generate_psm(const PsmParams& p) {
    if (p.k < 2) throw ConfigError("psm: alphabet size must be >= 2");
    if (p.hmin < 1) throw ConfigError("psm: hmin must be >= 1");
    if (p.window_rows > p.rows || p.window_cols > p.cols)
        throw ConfigError("psm: window does not fit in grid");

    const int wlen = p.window_rows * p.window_cols;
    detail::CodewordSpace cs(p.k, wlen);
    const uint64_t window_count =
        static_cast<uint64_t>(p.rows - p.window_rows + 1) * (p.cols - p.window_cols + 1);
    if (window_count > cs.size())
        throw ConfigError("psm: more windows than codewords, parameters unsatisfiable");

    SymbolGrid grid;
    grid.rows = p.rows;
    grid.cols = p.cols;
    grid.k = p.k;
    grid.window_rows = p.window_rows;
    grid.window_cols = p.window_cols;

    Rng rng(p.seed);
    std::vector<uint8_t> flags(cs.size());
    std::vector<int64_t> code_at(grid.cell_count());  // codeword a cell completed, or -1
    std::vector<int> candidates(p.k);

    int total_shuffles = 0;
    for (int restart = 0; restart <= p.max_restarts; ++restart) {
        grid.symbols.assign(grid.cell_count(), -1);
        std::fill(flags.begin(), flags.end(), 0);
        std::fill(code_at.begin(), code_at.end(), -1);
        int shuffles = 0;
        size_t pos = 0;
        bool dead = false;
        while (pos < grid.cell_count()) {
            const int i = static_cast<int>(pos) / p.cols;
            const int j = static_cast<int>(pos) % p.cols;
            std::iota(candidates.begin(), candidates.end(), 0);
            rng.shuffle(candidates.begin(), candidates.end());
            bool placed = false;
            for (int s : candidates) {
                grid.symbols[pos] = s;
                if (i >= p.window_rows - 1 && j >= p.window_cols - 1) {
                    const uint64_t code = pack_window(grid, i - p.window_rows + 1, j - p.window_cols + 1, cs);
                    if (!detail::ball_flagged(flags, cs, code, 0, p.hmin - 1)) {
                        flags[code] = 1;
                        code_at[pos] = static_cast<int64_t>(code);
                        placed = true;
                        break;
                    }
                } else {
                    placed = true;
                    break;
                }
            }
            if (placed) {
                ++pos;
                continue;
            }
            grid.symbols[pos] = -1;
            ++shuffles;
            ++total_shuffles;
            if (shuffles > p.max_shuffles) {
                dead = true;
                break;
            }
            // Shuffle recently added codes: retract a handful of cells so the
            // affected windows get re-drawn with fresh symbols.
            const size_t back =
                static_cast<size_t>(p.window_cols) + rng.uniform_u64(static_cast<uint64_t>(p.window_cols) + 1);
            for (size_t b = 0; b < back && pos > 0; ++b) {
                --pos;
                if (code_at[pos] >= 0) {
                    flags[static_cast<size_t>(code_at[pos])] = 0;
                    code_at[pos] = -1;
                }
                grid.symbols[pos] = -1;
            }
        }
        if (!dead) return grid;
    }
    throw GenerationError("psm generation failed: " + std::to_string(p.max_restarts) + " restarts, " +
                          std::to_string(total_shuffles) + " shuffles exhausted");
}

struct PsmViolation {
    int row_a, col_a;
    int row_b, col_b;
    int distance;
};

struct PsmReport {
    bool unique = true;
    int min_hamming = -1;  // -1 when fewer than two windows exist
    size_t window_count = 0;
    size_t violation_count = 0;              // pairs below hmin
    std::vector<PsmViolation> violations;    // capped sample of those pairs

    bool passes(int hmin) const { return unique && (min_hamming < 0 || min_hamming >= hmin); }
};

// Exhaustive scan; the verifier is the oracle for the generator.
inline PsmReport verify_psm(const SymbolGrid& g, int hmin, size_t max_recorded = 256) {
    if (g.window_rows > g.rows || g.window_cols > g.cols)
        throw ContractViolation("verify_psm: window does not fit in grid");
    const int nr = g.rows - g.window_rows + 1;
    const int nc = g.cols - g.window_cols + 1;
    const int wlen = g.window_rows * g.window_cols;

    std::vector<std::vector<int>> words;
    words.reserve(static_cast<size_t>(nr) * nc);
    for (int r = 0; r < nr; ++r)
        for (int c = 0; c < nc; ++c) {
            std::vector<int> w(wlen);
            int pos = 0;
            for (int wr = 0; wr < g.window_rows; ++wr)
                for (int wc = 0; wc < g.window_cols; ++wc) w[pos++] = g.at(r + wr, c + wc);
            words.push_back(std::move(w));
        }

    PsmReport report;
    report.window_count = words.size();
    if (words.size() < 2) return report;

    int min_h = wlen + 1;
    for (size_t a = 0; a < words.size(); ++a) {
        for (size_t b = a + 1; b < words.size(); ++b) {
            int dist = 0;
            for (int i = 0; i < wlen; ++i) dist += words[a][i] != words[b][i];
            if (dist < min_h) min_h = dist;
            if (dist == 0) report.unique = false;
            if (dist < hmin) {
                ++report.violation_count;
                if (report.violations.size() < max_recorded)
                    report.violations.push_back({static_cast<int>(a) / nc, static_cast<int>(a) % nc,
                                                 static_cast<int>(b) / nc, static_cast<int>(b) % nc, dist});
            }
        }
    }
    report.min_hamming = min_h;
    return report;
}

// De Bruijn sequence over k symbols, order n, by Lyndon word concatenation.
inline std::vector<int> generate_debruijn(int k, int n, uint64_t cap = uint64_t{1} << 20) {
    if (k < 2 || n < 1) throw ConfigError("debruijn: need k >= 2 and n >= 1");
    double size = std::pow(static_cast<double>(k), n);
    if (size > static_cast<double>(cap))
        throw ConfigError("debruijn: k^n = " + std::to_string(size) + " exceeds cap " + std::to_string(cap));
    std::vector<int> a(static_cast<size_t>(k) * n + 1, 0);
    std::vector<int> seq;
    seq.reserve(static_cast<size_t>(size));
    auto rec = [&](auto&& self, int t, int p) -> void {
        if (t > n) {
            if (n % p == 0)
                for (int i = 1; i <= p; ++i) seq.push_back(a[i]);
            return;
        }
        a[t] = a[t - p];
        self(self, t + 1, p);
        for (int j = a[t - p] + 1; j < k; ++j) {
            a[t] = j;
            self(self, t + 1, t);
        }
    };
    rec(rec, 1, 1);
    return seq;
}

// ---------------------------------------------------------------------------
// Pattern = grid + per-dot signals

struct PatternSpec {
    SymbolGrid grid;
    int dot_pitch = 8;  // projector pixels per symbol cell
    int dot_size = 2;   // projector pixels per dot side
    std::vector<SignalSpec> alphabet;  // indexed by symbol
    std::vector<double> phases;        // row-major per-dot phase offsets in [0,1)
    int hmin = 2;                      // provenance of the generation run
    uint64_t seed = 0;

    SignalSpec dot_signal(int r, int c) const {
        SignalSpec s = alphabet[static_cast<size_t>(grid.at(r, c))];
        s.phase = phases[static_cast<size_t>(r) * grid.cols + c];
        return s;
    }

    void validate() const {
        if (dot_pitch < 1 || dot_size < 1 || dot_size > dot_pitch)
            throw ConfigError("pattern: need 1 <= dot_size <= dot_pitch");
        if (static_cast<int>(alphabet.size()) < grid.k)
            throw ConfigError("pattern: alphabet does not cover all symbols");
        if (phases.size() != grid.cell_count()) throw ConfigError("pattern: phases size mismatch");
        for (const auto& s : alphabet) s.validate();
    }
};

// Center of a dot in projector pixel coordinates.
inline Vec2 dot_center_px(const PatternSpec& p, int row, int col) {
    return {col * static_cast<double>(p.dot_pitch) + p.dot_size / 2.0,
            row * static_cast<double>(p.dot_pitch) + p.dot_size / 2.0};
}

// k duty cycles spread evenly inside (0,1) at one shared frequency;
// k = 4 gives {0.2, 0.4, 0.6, 0.8}.
inline std::vector<SignalSpec> default_alphabet(int k, double frequency_hz) {
    std::vector<SignalSpec> a;
    a.reserve(static_cast<size_t>(k));
    for (int s = 0; s < k; ++s)
        a.push_back({frequency_hz, static_cast<double>(s + 1) / (k + 1), 0.0});
    return a;
}

// Every dot gets its symbol's signal plus an independent uniform phase shift,
// so the set of mirror changes spreads over the period instead of landing on
// one synchronous step.
inline PatternSpec assign_signals(const SymbolGrid& grid, const std::vector<SignalSpec>& alphabet,
                                  uint64_t shift_seed, int dot_pitch = 8, int dot_size = 2) {
    if (static_cast<int>(alphabet.size()) < grid.k)
        throw ConfigError("assign_signals: alphabet has " + std::to_string(alphabet.size()) +
                          " entries for " + std::to_string(grid.k) + " symbols");
    PatternSpec p;
    p.grid = grid;
    p.dot_pitch = dot_pitch;
    p.dot_size = dot_size;
    p.alphabet = alphabet;
    p.seed = shift_seed;
    Rng rng(shift_seed);
    p.phases.resize(grid.cell_count());
    for (auto& ph : p.phases) ph = rng.uniform();
    return p;
}

// Single dot blinking at one frequency; the unit fixture for estimator tests.
inline PatternSpec make_single_dot_pattern(double frequency_hz, double dutycycle, int dot_size = 3,
                                           int dot_pitch = 8) {
    PatternSpec p;
    p.grid = {1, 1, 1, 1, 1, {0}};
    p.dot_pitch = dot_pitch;
    p.dot_size = dot_size;
    p.alphabet = {{frequency_hz, dutycycle, 0.0}};
    p.phases = {0.0};
    return p;
}

// Vertical stripes moving along the column axis: one 1px dot per projector
// pixel, phase ramping by column. stripe_period_px is the spatial period.
inline PatternSpec make_stripe_pattern(int cols, int rows, double frequency_hz,
                                       double stripe_period_px) {
    if (stripe_period_px <= 0) throw ConfigError("stripe pattern: period must be positive");
    PatternSpec p;
    p.grid.rows = rows;
    p.grid.cols = cols;
    p.grid.k = 1;
    p.grid.window_rows = 1;
    p.grid.window_cols = 1;
    p.grid.symbols.assign(static_cast<size_t>(rows) * cols, 0);
    p.dot_pitch = 1;
    p.dot_size = 1;
    p.alphabet = {{frequency_hz, 0.5, 0.0}};
    p.phases.resize(p.grid.cell_count());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            p.phases[static_cast<size_t>(r) * cols + c] = std::fmod(c / stripe_period_px, 1.0);
    return p;
}

// ---------------------------------------------------------------------------
// Predicted event load under random phase shifting

struct LoadStats {
    double mu = 0;        // expected change events per window
    double sigma2 = 0;    // variance of that count
    double window_us = 0;
};

// p(X) = 2*dt/T per signal; the class counts follow a binomial sum with
// mu = sum n_k p_k and sigma^2 = sum n_k p_k (1 - p_k).
inline LoadStats load_statistics(const PatternSpec& p, double window_us) {
    if (window_us < 0) throw ConfigError("load_statistics: negative window");
    LoadStats out;
    out.window_us = window_us;
    std::vector<size_t> class_count(p.alphabet.size(), 0);
    for (int sym : p.grid.symbols) ++class_count[static_cast<size_t>(sym)];
    for (size_t s = 0; s < p.alphabet.size(); ++s) {
        if (class_count[s] == 0) continue;
        const double T = p.alphabet[s].period_us();
        const double prob = 2.0 * window_us / T;
        if (prob > 1.0)
            throw ConfigError("load_statistics: window " + std::to_string(window_us) +
                              "us too large for period " + std::to_string(T) + "us (p > 1)");
        out.mu += static_cast<double>(class_count[s]) * prob;
        out.sigma2 += static_cast<double>(class_count[s]) * prob * (1.0 - prob);
    }
    return out;
}

struct DmdStepLoad {
    uint64_t step_index;
    int mirror_changes;
};

struct DmdReport {
    uint64_t step_us = kDmdStepUs;
    int max_mirror_changes = 0;
    uint64_t max_step_index = 0;
    bool mirrors_feasible = true;
    double mean_event_rate = 0;  // events/s, one event per footprint pixel per edge
    bool bandwidth_feasible = true;
    int extent_px_x = 0, extent_px_y = 0;
    bool fits_dmd = true;
    std::vector<DmdStepLoad> offenders;  // steps above the mirror budget
};

// Feasibility of rendering the pattern on the lightcrafter: per-step mirror
// change counts against the 5000-mirror budget, plus predicted sensor load
// against the 8 Meps cap.
inline DmdReport check_dmd_budget(const PatternSpec& p, uint64_t step_us = kDmdStepUs) {
    if (step_us < kDmdStepUs)
        throw ContractViolation("check_dmd_budget: step below the " + std::to_string(kDmdStepUs) +
                                "us DMD resolution");
    DmdReport report;
    report.step_us = step_us;
    report.extent_px_x = p.grid.cols > 0 ? (p.grid.cols - 1) * p.dot_pitch + p.dot_size : 0;
    report.extent_px_y = p.grid.rows > 0 ? (p.grid.rows - 1) * p.dot_pitch + p.dot_size : 0;
    report.fits_dmd =
        report.extent_px_x <= kDefaultSensorWidth && report.extent_px_y <= kDefaultSensorHeight;

    double max_period = 0;
    for (const auto& s : p.alphabet) max_period = std::max(max_period, s.period_us());
    if (p.grid.cell_count() == 0 || max_period == 0) return report;

    // Two slowest periods cover the schedule's repetition for the common
    // single-frequency case and catch synchronized worst cases otherwise.
    const double horizon_us = 2.0 * max_period;
    const auto bins = static_cast<size_t>(horizon_us / static_cast<double>(step_us)) + 2;
    std::vector<int> changes(bins, 0);
    const int mirrors_per_dot = p.dot_size * p.dot_size;

    double event_rate = 0;
    for (int r = 0; r < p.grid.rows; ++r)
        for (int c = 0; c < p.grid.cols; ++c) {
            const SignalSpec s = p.dot_signal(r, c);
            event_rate += 2.0 * s.frequency_hz * mirrors_per_dot;
            for (const SignalEdge& e : signal_edges(s, 0.0, horizon_us)) {
                const auto bin = static_cast<size_t>(e.t_us / static_cast<double>(step_us) + 0.5);
                if (bin < bins) changes[bin] += mirrors_per_dot;
            }
        }

    for (size_t b = 0; b < bins; ++b) {
        if (changes[b] > report.max_mirror_changes) {
            report.max_mirror_changes = changes[b];
            report.max_step_index = b;
        }
        if (changes[b] > kDmdMirrorBudget)
            report.offenders.push_back({b, changes[b]});
    }
    report.mirrors_feasible = report.max_mirror_changes <= kDmdMirrorBudget;
    report.mean_event_rate = event_rate;
    report.bandwidth_feasible = event_rate <= kAtisBandwidthEps;
    return report;
}

// ---------------------------------------------------------------------------
// Pattern file

inline std::string serialize_pattern(const PatternSpec& p) {
    nlohmann::ordered_json j;
    j["rows"] = p.grid.rows;
    j["cols"] = p.grid.cols;
    j["k"] = p.grid.k;
    j["window"] = {p.grid.window_rows, p.grid.window_cols};
    j["hmin"] = p.hmin;
    j["seed"] = p.seed;
    j["dot_pitch"] = p.dot_pitch;
    j["dot_size"] = p.dot_size;
    auto alphabet = nlohmann::ordered_json::array();
    for (size_t s = 0; s < p.alphabet.size(); ++s)
        alphabet.push_back({{"symbol", s},
                            {"frequency_hz", p.alphabet[s].frequency_hz},
                            {"dutycycle", p.alphabet[s].dutycycle}});
    j["alphabet"] = alphabet;
    j["symbols"] = p.grid.symbols;
    j["phases"] = p.phases;
    return j.dump(2) + "\n";
}

inline PatternSpec parse_pattern(const std::string& text, const std::string& origin = "<pattern>") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    PatternSpec p;
    try {
        p.grid.rows = j.at("rows").get<int>();
        p.grid.cols = j.at("cols").get<int>();
        p.grid.k = j.at("k").get<int>();
        p.grid.window_rows = j.at("window").at(0).get<int>();
        p.grid.window_cols = j.at("window").at(1).get<int>();
        p.hmin = j.at("hmin").get<int>();
        p.seed = j.at("seed").get<uint64_t>();
        p.dot_pitch = j.at("dot_pitch").get<int>();
        p.dot_size = j.at("dot_size").get<int>();
        p.alphabet.resize(j.at("alphabet").size());
        for (const auto& entry : j.at("alphabet")) {
            const auto sym = entry.at("symbol").get<size_t>();
            if (sym >= p.alphabet.size()) throw ParseError(origin + ": alphabet symbol out of range");
            p.alphabet[sym] = {entry.at("frequency_hz").get<double>(),
                               entry.at("dutycycle").get<double>(), 0.0};
        }
        p.grid.symbols = j.at("symbols").get<std::vector<int>>();
        p.phases = j.at("phases").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (p.grid.symbols.size() != p.grid.cell_count())
        throw ParseError(origin + ": symbols size does not match rows*cols");
    for (int sym : p.grid.symbols)
        if (sym < 0 || sym >= p.grid.k) throw ParseError(origin + ": symbol out of range");
    p.validate();
    return p;
}

inline PatternSpec read_pattern(const std::string& path) {
    return parse_pattern(read_file(path), path);
}

inline void write_pattern(const PatternSpec& p, const std::string& path) {
    write_file_atomic(path, serialize_pattern(p));
}

}  // namespace evtlight
