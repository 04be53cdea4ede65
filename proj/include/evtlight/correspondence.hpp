#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evtlight/estimator.hpp"
#include "evtlight/geometry.hpp"
#include "evtlight/pattern.hpp"

namespace evtlight {

struct DetectedDot {
    Vec2 centroid;               // sub-pixel camera coordinates
    double alpha = 0;            // median duty cycle over the component
    int support = 0;             // pixel count
    std::optional<int> symbol;   // filled by classify_dots
};

// Connected components (4-connectivity) of present pixels; the dot position
// is the spatial average, the paper's sub-pixel step.
inline std::vector<DetectedDot> detect_dots(const DutyCycleImage& img, int min_support = 1) {
    const int w = img.geometry.width, h = img.geometry.height;
    std::vector<int32_t> label(static_cast<size_t>(w) * h, -1);
    std::vector<DetectedDot> dots;
    std::vector<std::pair<int, int>> stack;
    std::vector<double> alphas;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!img.present(x, y) || label[static_cast<size_t>(y) * w + x] >= 0) continue;
            stack.assign(1, {x, y});
            label[static_cast<size_t>(y) * w + x] = static_cast<int32_t>(dots.size());
            double sx = 0, sy = 0;
            alphas.clear();
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                sx += cx;
                sy += cy;
                alphas.push_back(img.at(cx, cy));
                constexpr int dx[4] = {1, -1, 0, 0};
                constexpr int dy[4] = {0, 0, 1, -1};
                for (int n = 0; n < 4; ++n) {
                    const int nx = cx + dx[n], ny = cy + dy[n];
                    if (!img.geometry.contains(nx, ny) || !img.present(nx, ny)) continue;
                    auto& l = label[static_cast<size_t>(ny) * w + nx];
                    if (l >= 0) continue;
                    l = static_cast<int32_t>(dots.size());
                    stack.push_back({nx, ny});
                }
            }
            DetectedDot dot;
            dot.support = static_cast<int>(alphas.size());
            dot.centroid = {sx / dot.support, sy / dot.support};
            std::nth_element(alphas.begin(), alphas.begin() + alphas.size() / 2, alphas.end());
            dot.alpha = alphas[alphas.size() / 2];
            dots.push_back(dot);
        }
    }
    if (min_support > 1)
        std::erase_if(dots, [&](const DetectedDot& d) { return d.support < min_support; });
    return dots;
}

// Nearest alphabet duty cycle within tolerance; equidistant values are
// rejected as ambiguous.
inline std::optional<int> classify_symbol(double alpha, const std::vector<SignalSpec>& alphabet,
                                          double tolerance = 0.07) {
    for (size_t a = 0; a < alphabet.size(); ++a)
        for (size_t b = a + 1; b < alphabet.size(); ++b)
            if (std::abs(alphabet[a].dutycycle - alphabet[b].dutycycle) <= 2 * tolerance)
                throw ConfigError("classify_symbol: alphabet duty cycles closer than 2x tolerance");
    int best = -1;
    double best_dist = tolerance;
    bool tie = false;
    for (size_t s = 0; s < alphabet.size(); ++s) {
        const double dist = std::abs(alpha - alphabet[s].dutycycle);
        if (dist < best_dist) {
            best = static_cast<int>(s);
            best_dist = dist;
            tie = false;
        } else if (dist == best_dist && best >= 0) {
            tie = true;
        }
    }
    if (best < 0 || tie) return std::nullopt;
    return best;
}

inline void classify_dots(std::vector<DetectedDot>& dots, const std::vector<SignalSpec>& alphabet,
                          double tolerance = 0.07) {
    for (DetectedDot& d : dots) d.symbol = classify_symbol(d.alpha, alphabet, tolerance);
}

// Median nearest-neighbor distance; the lattice pitch in camera pixels.
inline double estimate_grid_pitch(const std::vector<DetectedDot>& dots) {
    if (dots.size() < 2) throw ContractViolation("estimate_grid_pitch: need at least two dots");
    std::vector<double> nn(dots.size(), std::numeric_limits<double>::infinity());
    for (size_t a = 0; a < dots.size(); ++a)
        for (size_t b = 0; b < dots.size(); ++b) {
            if (a == b) continue;
            const double dx = dots[b].centroid.x - dots[a].centroid.x;
            const double dy = dots[b].centroid.y - dots[a].centroid.y;
            nn[a] = std::min(nn[a], std::sqrt(dx * dx + dy * dy));
        }
    std::nth_element(nn.begin(), nn.begin() + nn.size() / 2, nn.end());
    return nn[nn.size() / 2];
}

using Codeword = std::array<int, 9>;

// 3x3 codeword around each dot. Neighbors are found by binning nearby dots
// into 8 angular sectors and keeping the nearest of each sector at a
// plausible lattice distance; boundary dots (missing any neighbor) get no
// codeword.
inline std::vector<std::optional<Codeword>> extract_codewords(const std::vector<DetectedDot>& dots,
                                                              double pitch_px) {
    if (pitch_px <= 0) throw ContractViolation("extract_codewords: pitch must be positive");
    // sector -> (row offset, col offset): E SE S SW W NW N NE
    constexpr int kRowOff[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    constexpr int kColOff[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    constexpr double kSectorWidth = 0.78539816339744830962;  // pi/4
    const double limit = 1.9 * pitch_px;

    std::vector<std::optional<Codeword>> codewords(dots.size());
    for (size_t d = 0; d < dots.size(); ++d) {
        if (!dots[d].symbol) continue;
        int neighbor[8];
        double neighbor_dist[8];
        std::fill_n(neighbor, 8, -1);
        std::fill_n(neighbor_dist, 8, std::numeric_limits<double>::infinity());
        for (size_t o = 0; o < dots.size(); ++o) {
            if (o == d) continue;
            const double dx = dots[o].centroid.x - dots[d].centroid.x;
            const double dy = dots[o].centroid.y - dots[d].centroid.y;
            const double dist = std::sqrt(dx * dx + dy * dy);
            if (dist > limit) continue;
            const double angle = std::atan2(dy, dx);  // image y grows downward
            const int sector =
                (static_cast<int>(std::floor((angle + kSectorWidth / 2.0) / kSectorWidth)) % 8 + 8) % 8;
            const double expected = (kRowOff[sector] != 0 && kColOff[sector] != 0)
                                        ? pitch_px * 1.4142135623730951
                                        : pitch_px;
            if (dist < 0.5 * expected || dist > 1.5 * expected) continue;
            if (dist < neighbor_dist[sector]) {
                neighbor_dist[sector] = dist;
                neighbor[sector] = static_cast<int>(o);
            }
        }
        Codeword word{};
        bool complete = true;
        word[4] = *dots[d].symbol;
        for (int s = 0; s < 8 && complete; ++s) {
            if (neighbor[s] < 0 || !dots[static_cast<size_t>(neighbor[s])].symbol) {
                complete = false;
                break;
            }
            const int idx = (kRowOff[s] + 1) * 3 + (kColOff[s] + 1);
            word[static_cast<size_t>(idx)] = *dots[static_cast<size_t>(neighbor[s])].symbol;
        }
        if (complete) codewords[d] = word;
    }
    return codewords;
}

struct Correspondence {
    Vec2 camera;     // sub-pixel camera point (dot centroid)
    Vec2 projector;  // dot center in projector coordinates
    int grid_row = 0, grid_col = 0;  // center-dot position in the symbol grid
    int hamming = 0;
    Codeword codeword{};
};

struct MatchReport {
    size_t matched = 0;
    size_t no_codeword = 0;
    size_t dropped_distant = 0;
    size_t dropped_ambiguous = 0;
};

// Codeword lookup against the grid: exact hits through a hash of the window
// space, tolerant decoding by exhaustive Hamming scan. max_hamming must stay
// below hmin/2 or decoding would not be unique.
inline std::vector<Correspondence> match(const std::vector<DetectedDot>& dots,
                                         const std::vector<std::optional<Codeword>>& codewords,
                                         const PatternSpec& pattern, int max_hamming = 0,
                                         MatchReport* report = nullptr) {
    const SymbolGrid& grid = pattern.grid;
    if (grid.window_rows != 3 || grid.window_cols != 3)
        throw ContractViolation("match: grid window must be 3x3");
    if (2 * max_hamming >= pattern.hmin)
        throw ContractViolation("match: max_hamming must satisfy 2*max_hamming < hmin");
    if (dots.size() != codewords.size())
        throw ContractViolation("match: dots/codewords size mismatch");

    const int nr = grid.rows - 2, nc = grid.cols - 2;
    std::vector<Codeword> windows(static_cast<size_t>(nr) * nc);
    std::unordered_map<uint64_t, int> exact;
    exact.reserve(windows.size());
    for (int r = 0; r < nr; ++r)
        for (int c = 0; c < nc; ++c) {
            Codeword w{};
            int pos = 0;
            uint64_t packed = 0;
            for (int wr = 0; wr < 3; ++wr)
                for (int wc = 0; wc < 3; ++wc, ++pos) {
                    w[static_cast<size_t>(pos)] = grid.at(r + wr, c + wc);
                    packed = packed * static_cast<uint64_t>(grid.k) + static_cast<uint64_t>(w[static_cast<size_t>(pos)]);
                }
            windows[static_cast<size_t>(r) * nc + c] = w;
            exact.emplace(packed, r * nc + c);
        }

    MatchReport rep;
    std::vector<Correspondence> out;
    for (size_t d = 0; d < dots.size(); ++d) {
        if (!codewords[d]) {
            ++rep.no_codeword;
            continue;
        }
        const Codeword& word = *codewords[d];
        uint64_t packed = 0;
        for (int s : word) packed = packed * static_cast<uint64_t>(grid.k) + static_cast<uint64_t>(s);
        int found = -1;
        int found_dist = 0;
        if (auto it = exact.find(packed); it != exact.end()) {
            found = it->second;
        } else if (max_hamming > 0) {
            int hits = 0;
            for (size_t w = 0; w < windows.size(); ++w) {
                int dist = 0;
                for (int i = 0; i < 9; ++i) dist += windows[w][static_cast<size_t>(i)] != word[static_cast<size_t>(i)];
                if (dist <= max_hamming) {
                    ++hits;
                    found = static_cast<int>(w);
                    found_dist = dist;
                }
            }
            if (hits > 1) {
                ++rep.dropped_ambiguous;
                continue;
            }
            if (hits == 0) {
                ++rep.dropped_distant;
                continue;
            }
        } else {
            ++rep.dropped_distant;
            continue;
        }
        Correspondence c;
        c.camera = dots[d].centroid;
        c.grid_row = found / nc + 1;  // window top-left -> center dot
        c.grid_col = found % nc + 1;
        c.projector = dot_center_px(pattern, c.grid_row, c.grid_col);
        c.hamming = found_dist;
        c.codeword = word;
        out.push_back(c);
        ++rep.matched;
    }
    if (report) *report = rep;
    return out;
}

inline std::string serialize_correspondences_csv(const std::vector<Correspondence>& cs) {
    std::string out = "camera_x,camera_y,proj_x,proj_y,grid_row,grid_col,hamming\n";
    char buf[160];
    for (const Correspondence& c : cs) {
        std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f,%d,%d,%d\n", c.camera.x, c.camera.y,
                      c.projector.x, c.projector.y, c.grid_row, c.grid_col, c.hamming);
        out += buf;
    }
    return out;
}

}  // namespace evtlight
