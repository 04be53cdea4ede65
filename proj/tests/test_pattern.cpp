#include <doctest.h>

#include <set>

#include "evtlight/pattern.hpp"
#include "test_util.hpp"

using namespace evtlight;

namespace {

// Exhaustive window-scan oracle: every length-n word over [0,k) occurs
// exactly once in the cyclic sequence.
bool debruijn_cycle_ok(const std::vector<int>& seq, int k, int n) {
    const size_t expected = static_cast<size_t>(std::pow(k, n));
    if (seq.size() != expected) return false;
    std::set<std::vector<int>> words;
    for (size_t i = 0; i < seq.size(); ++i) {
        std::vector<int> w(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            const int sym = seq[(i + static_cast<size_t>(j)) % seq.size()];
            if (sym < 0 || sym >= k) return false;
            w[static_cast<size_t>(j)] = sym;
        }
        words.insert(w);
    }
    return words.size() == expected;
}

// Independent pairwise window comparison, deliberately not using verify_psm.
std::vector<std::vector<int>> collect_windows(const SymbolGrid& g) {
    std::vector<std::vector<int>> words;
    for (int r = 0; r + g.window_rows <= g.rows; ++r)
        for (int c = 0; c + g.window_cols <= g.cols; ++c) {
            std::vector<int> w;
            for (int wr = 0; wr < g.window_rows; ++wr)
                for (int wc = 0; wc < g.window_cols; ++wc) w.push_back(g.at(r + wr, c + wc));
            words.push_back(std::move(w));
        }
    return words;
}

int min_pairwise_hamming(const std::vector<std::vector<int>>& words) {
    int best = static_cast<int>(words.front().size()) + 1;
    for (size_t a = 0; a < words.size(); ++a)
        for (size_t b = a + 1; b < words.size(); ++b) {
            int d = 0;
            for (size_t i = 0; i < words[a].size(); ++i) d += words[a][i] != words[b][i];
            best = std::min(best, d);
        }
    return best;
}

// Monte Carlo oracle for the random-shift load model: draws uniform phases
// and counts signals with at least one edge inside the window.
struct McLoad {
    double mu, sigma2;
};

McLoad monte_carlo_load(const std::vector<std::pair<int, double>>& classes /* count, period_us */,
                        double window_us, int trials, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> counts;
    counts.reserve(static_cast<size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        int n = 0;
        for (const auto& [count, period] : classes) {
            for (int i = 0; i < count; ++i) {
                const double phase = rng.uniform();
                // Edges of a 50% square wave at (j+phase)*T and (j+phase+0.5)*T.
                bool edge = false;
                for (double offset : {phase * period, (phase + 0.5) * period}) {
                    const double first = offset - std::floor(offset / period) * period;
                    if (first < window_us) edge = true;
                }
                n += edge;
            }
        }
        counts.push_back(n);
    }
    return {testutil::mean(counts), testutil::variance(counts)};
}

}  // namespace

TEST_CASE("debruijn k=2 n=2 is a rotation of 0011") {
    const auto seq = generate_debruijn(2, 2);
    REQUIRE(seq.size() == 4);
    CHECK(debruijn_cycle_ok(seq, 2, 2));
    int ones = 0;
    for (int s : seq) ones += s == 1;
    CHECK(ones == 2);
}

TEST_CASE("debruijn cycles pass the exhaustive window oracle") {
    CHECK(debruijn_cycle_ok(generate_debruijn(2, 3), 2, 3));
    CHECK(debruijn_cycle_ok(generate_debruijn(4, 3), 4, 3));
    CHECK(debruijn_cycle_ok(generate_debruijn(3, 4), 3, 4));
    CHECK(debruijn_cycle_ok(generate_debruijn(2, 10), 2, 10));
}

TEST_CASE("debruijn rejects bad parameters and oversize requests") {
    CHECK_THROWS_AS(generate_debruijn(1, 3), ConfigError);
    CHECK_THROWS_AS(generate_debruijn(2, 0), ConfigError);
    CHECK_THROWS_AS(generate_debruijn(2, 30), ConfigError);  // 2^30 over the cap
}

TEST_CASE("psm: single-window grid passes trivially") {
    PsmParams p;
    p.rows = p.cols = 2;
    p.k = 2;
    p.window_rows = p.window_cols = 2;
    p.hmin = 1;
    const SymbolGrid g = generate_psm(p);
    CHECK(verify_psm(g, 1).passes(1));
    CHECK(verify_psm(g, 1).window_count == 1);
}

TEST_CASE("psm 4x4 binary: all nine 2x2 windows distinct (independent oracle)") {
    PsmParams p;
    p.rows = p.cols = 4;
    p.k = 2;
    p.window_rows = p.window_cols = 2;
    p.hmin = 1;
    p.seed = 7;
    const SymbolGrid g = generate_psm(p);
    const auto words = collect_windows(g);
    REQUIRE(words.size() == 9);
    std::set<std::vector<int>> distinct(words.begin(), words.end());
    CHECK(distinct.size() == 9);
}

TEST_CASE("psm 20x30 k=4 3x3 hmin=2: generator output passes the verifier") {
    PsmParams p;  // defaults are the experiment parameters
    p.seed = 42;
    const SymbolGrid g = generate_psm(p);
    const PsmReport report = verify_psm(g, 2);
    CHECK(report.unique);
    CHECK(report.min_hamming >= 2);
    CHECK(report.window_count == 18 * 28);
    // Cross-check with the independent pairwise scan.
    CHECK(min_pairwise_hamming(collect_windows(g)) == report.min_hamming);
}

TEST_CASE("psm generation is deterministic given the seed") {
    PsmParams p;
    p.seed = 99;
    const SymbolGrid a = generate_psm(p);
    const SymbolGrid b = generate_psm(p);
    CHECK(a.symbols == b.symbols);
    p.seed = 100;
    CHECK(generate_psm(p).symbols != a.symbols);
}

TEST_CASE("psm rejects unsatisfiable window counts up front") {
    PsmParams p;
    p.rows = p.cols = 10;
    p.k = 2;
    p.window_rows = p.window_cols = 2;  // 81 windows, 16 codewords
    CHECK_THROWS_AS(generate_psm(p), ConfigError);
}

TEST_CASE("psm reports generation failure when the retry budget runs out") {
    PsmParams p;
    p.rows = p.cols = 5;  // 16 windows; pairwise hmin=2 over 4-symbol binary words caps at 8
    p.k = 2;
    p.window_rows = p.window_cols = 2;
    p.hmin = 2;
    p.max_shuffles = 50;
    p.max_restarts = 5;
    CHECK_THROWS_AS(generate_psm(p), GenerationError);
}

TEST_CASE("verify_psm flags duplicate windows with both positions") {
    SymbolGrid g;
    g.rows = 2;
    g.cols = 4;
    g.k = 2;
    g.window_rows = g.window_cols = 2;
    g.symbols = {0, 1, 0, 1,
                 1, 0, 1, 0};  // windows at (0,0) and (0,2) identical
    const PsmReport report = verify_psm(g, 1);
    CHECK_FALSE(report.unique);
    CHECK(report.min_hamming == 0);
    REQUIRE_FALSE(report.violations.empty());
    const PsmViolation& v = report.violations.front();
    CHECK(v.distance == 0);
    CHECK(v.row_a == 0);
    CHECK(v.col_a == 0);
    CHECK(v.row_b == 0);
    CHECK(v.col_b == 2);
}

TEST_CASE("verify_psm with 1x1 windows catches any repeated symbol") {
    SymbolGrid g;
    g.rows = 1;
    g.cols = 3;
    g.k = 3;
    g.window_rows = g.window_cols = 1;
    g.symbols = {0, 1, 0};
    CHECK_FALSE(verify_psm(g, 1).unique);
}

TEST_CASE("assign_signals: single dot gets its symbol's signal and one phase draw") {
    SymbolGrid g{1, 1, 1, 1, 1, {0}};
    const auto pattern = assign_signals(g, {{20.0, 0.6, 0.0}}, 5);
    CHECK(pattern.dot_signal(0, 0).frequency_hz == 20.0);
    CHECK(pattern.dot_signal(0, 0).dutycycle == 0.6);
    CHECK(pattern.phases.size() == 1);
    CHECK(pattern.phases[0] >= 0.0);
    CHECK(pattern.phases[0] < 1.0);
}

TEST_CASE("assign_signals is deterministic and covers the alphabet check") {
    PsmParams params;
    params.seed = 3;
    const SymbolGrid g = generate_psm(params);
    const auto alphabet = default_alphabet(4, 20.0);
    const PatternSpec a = assign_signals(g, alphabet, 11);
    const PatternSpec b = assign_signals(g, alphabet, 11);
    CHECK(a.phases == b.phases);
    CHECK_THROWS_AS(assign_signals(g, {{20.0, 0.5, 0.0}}, 11), ConfigError);
}

TEST_CASE("assign_signals phases are uniform (KS at 1% over 600 samples)") {
    PsmParams params;
    params.seed = 21;
    const SymbolGrid g = generate_psm(params);
    const PatternSpec p = assign_signals(g, default_alphabet(4, 20.0), 1234);
    // critical value at alpha=0.01: 1.63 / sqrt(n)
    const double d = testutil::ks_uniform(p.phases);
    CHECK(d < 1.63 / std::sqrt(600.0));
}

TEST_CASE("default alphabet spreads k=4 dutycycles to 0.2..0.8") {
    const auto a = default_alphabet(4, 20.0);
    REQUIRE(a.size() == 4);
    CHECK(a[0].dutycycle == doctest::Approx(0.2));
    CHECK(a[1].dutycycle == doctest::Approx(0.4));
    CHECK(a[2].dutycycle == doctest::Approx(0.6));
    CHECK(a[3].dutycycle == doctest::Approx(0.8));
    for (const auto& s : a) CHECK(s.frequency_hz == 20.0);
}

TEST_CASE("load_statistics arithmetic: 900 dots at 20 Hz, 1 ms window") {
    SymbolGrid g;
    g.rows = 30;
    g.cols = 30;
    g.k = 1;
    g.symbols.assign(900, 0);
    PatternSpec p = assign_signals(g, {{20.0, 0.5, 0.0}}, 0);
    const LoadStats stats = load_statistics(p, 1000.0);
    CHECK(stats.mu == doctest::Approx(36.0));          // 900 * 2*1ms/50ms
    CHECK(stats.sigma2 == doctest::Approx(34.56));     // 900 * 0.04 * 0.96
    CHECK(stats.sigma2 <= stats.mu);
}

TEST_CASE("load_statistics: zero window gives zero load") {
    SymbolGrid g{1, 1, 1, 1, 1, {0}};
    const PatternSpec p = assign_signals(g, {{20.0, 0.5, 0.0}}, 0);
    const LoadStats stats = load_statistics(p, 0.0);
    CHECK(stats.mu == 0.0);
    CHECK(stats.sigma2 == 0.0);
}

TEST_CASE("load_statistics two classes: mu = 100*0.02 + 300*0.04 = 14") {
    SymbolGrid g;
    g.rows = 20;
    g.cols = 20;
    g.k = 2;
    g.symbols.assign(400, 1);
    for (int i = 0; i < 100; ++i) g.symbols[static_cast<size_t>(i)] = 0;
    const PatternSpec p = assign_signals(g, {{20.0, 0.5, 0.0}, {40.0, 0.5, 0.0}}, 0);
    const LoadStats stats = load_statistics(p, 500.0);
    CHECK(stats.mu == doctest::Approx(14.0));
    CHECK(stats.sigma2 == doctest::Approx(100 * 0.02 * 0.98 + 300 * 0.04 * 0.96));
}

TEST_CASE("load_statistics matches the Monte Carlo oracle") {
    SymbolGrid g;
    g.rows = 20;
    g.cols = 20;
    g.k = 2;
    g.symbols.assign(400, 1);
    for (int i = 0; i < 100; ++i) g.symbols[static_cast<size_t>(i)] = 0;
    const PatternSpec p = assign_signals(g, {{20.0, 0.5, 0.0}, {40.0, 0.5, 0.0}}, 0);
    const LoadStats stats = load_statistics(p, 500.0);
    const McLoad mc = monte_carlo_load({{100, 50000.0}, {300, 25000.0}}, 500.0, 4000, 77);
    CHECK(std::abs(mc.mu - stats.mu) / stats.mu < 0.03);
    CHECK(std::abs(mc.sigma2 - stats.sigma2) / stats.sigma2 < 0.10);
}

TEST_CASE("load_statistics rejects windows that push p over 1") {
    SymbolGrid g{1, 1, 1, 1, 1, {0}};
    const PatternSpec p = assign_signals(g, {{20.0, 0.5, 0.0}}, 0);
    CHECK_THROWS_AS(load_statistics(p, 30000.0), ConfigError);  // 2*30ms > 50ms
}

TEST_CASE("signal_edges: 20 Hz half-duty edges land at 0/25/50/75 ms") {
    const SignalSpec s{20.0, 0.5, 0.0};
    const auto edges = signal_edges(s, 0.0, 100000.0);
    REQUIRE(edges.size() == 4);
    CHECK(edges[0].t_us == doctest::Approx(0.0));
    CHECK(edges[0].rising);
    CHECK(edges[1].t_us == doctest::Approx(25000.0));
    CHECK_FALSE(edges[1].rising);
    CHECK(edges[2].t_us == doctest::Approx(50000.0));
    CHECK(edges[3].t_us == doctest::Approx(75000.0));
}

TEST_CASE("check_dmd_budget: empty pattern is feasible with zero changes") {
    PatternSpec p;
    p.alphabet = {{20.0, 0.5, 0.0}};
    const DmdReport report = check_dmd_budget(p);
    CHECK(report.max_mirror_changes == 0);
    CHECK(report.mirrors_feasible);
    CHECK(report.bandwidth_feasible);
}

TEST_CASE("check_dmd_budget: 600 synchronized dots of 4 mirrors peak at 2400") {
    SymbolGrid g;
    g.rows = 20;
    g.cols = 30;
    g.k = 1;
    g.symbols.assign(600, 0);
    PatternSpec p = assign_signals(g, {{20.0, 0.5, 0.0}}, 0, 8, 2);
    std::fill(p.phases.begin(), p.phases.end(), 0.0);  // fully in phase
    const DmdReport report = check_dmd_budget(p);
    CHECK(report.max_mirror_changes == 2400);
    CHECK(report.mirrors_feasible);
}

TEST_CASE("check_dmd_budget flags synchronized patterns over the mirror budget") {
    SymbolGrid g;
    g.rows = 30;
    g.cols = 50;  // 1500 dots * 4 mirrors = 6000 changes in one step
    g.k = 1;
    g.symbols.assign(1500, 0);
    PatternSpec p = assign_signals(g, {{20.0, 0.5, 0.0}}, 0, 4, 2);
    std::fill(p.phases.begin(), p.phases.end(), 0.0);
    const DmdReport report = check_dmd_budget(p);
    CHECK(report.max_mirror_changes == 6000);
    CHECK_FALSE(report.mirrors_feasible);
    CHECK_FALSE(report.offenders.empty());
}

TEST_CASE("random shifting spreads the per-step mirror load") {
    SymbolGrid g;
    g.rows = 30;
    g.cols = 50;
    g.k = 1;
    g.symbols.assign(1500, 0);
    const PatternSpec p = assign_signals(g, {{20.0, 0.5, 0.0}}, 123, 4, 2);
    const DmdReport report = check_dmd_budget(p);
    CHECK(report.mirrors_feasible);  // 6000 synchronized changes now spread over ~71 steps
}

TEST_CASE("pattern file round trips through JSON") {
    testutil::TempDir dir;
    PsmParams params;
    params.seed = 9;
    const SymbolGrid g = generate_psm(params);
    PatternSpec p = assign_signals(g, default_alphabet(4, 20.0), 77);
    p.hmin = params.hmin;
    const auto path = dir.file("p.pat");
    write_pattern(p, path);
    const PatternSpec back = read_pattern(path);
    CHECK(back.grid.symbols == p.grid.symbols);
    CHECK(back.phases == p.phases);
    CHECK(back.dot_pitch == p.dot_pitch);
    CHECK(back.alphabet.size() == p.alphabet.size());
    CHECK(back.alphabet[2].dutycycle == p.alphabet[2].dutycycle);
    // Stable key order: serializing twice gives identical bytes.
    CHECK(serialize_pattern(p) == serialize_pattern(back));
}

TEST_CASE("verify_psm demands a window that fits") {
    SymbolGrid g{2, 2, 2, 3, 3, {0, 1, 1, 0}};
    CHECK_THROWS_AS(verify_psm(g, 1), ContractViolation);
}
