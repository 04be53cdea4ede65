// evtlight: event-based structured-light toolkit.
// Subcommands: pattern-gen, verify, simulate, filter, estimate,
// reconstruct {dutycycle|phase}, eval, freq-sweep.

#include <cstdlib>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "evtlight/burst_filter.hpp"
#include "evtlight/cloud.hpp"
#include "evtlight/correspondence.hpp"
#include "evtlight/estimator.hpp"
#include "evtlight/events.hpp"
#include "evtlight/pattern.hpp"
#include "evtlight/phase.hpp"
#include "evtlight/scene.hpp"
#include "evtlight/simulator.hpp"
#include "evtlight/triangulation.hpp"

using namespace evtlight;

namespace {

std::string g_stage = "startup";

uint64_t resolve_seed(uint64_t cli_seed) {
    if (const char* env = std::getenv("EVTLIGHT_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("EVTLIGHT_SEED is not a number: " + std::string(env));
        }
    }
    return cli_seed;
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& what) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos < csv.size()) {
        size_t end = csv.find(',', pos);
        if (end == std::string::npos) end = csv.size();
        try {
            out.push_back(std::stod(csv.substr(pos, end - pos)));
        } catch (const std::exception&) {
            throw ConfigError("bad " + what + " list: '" + csv + "'");
        }
        pos = end + 1;
    }
    if (out.empty()) throw ConfigError(what + " list is empty");
    return out;
}

double max_frequency(const PatternSpec& p) {
    double f = 0;
    for (const auto& s : p.alphabet) f = std::max(f, s.frequency_hz);
    if (f <= 0) throw ConfigError("pattern has no positive frequency");
    return f;
}

// Spatial stripe period in projector pixels, recovered from the phase ramp.
double stripe_period_from_pattern(const PatternSpec& p) {
    std::vector<double> diffs;
    for (int c = 0; c + 1 < p.grid.cols; ++c) {
        const double d =
            positive_mod(p.phases[static_cast<size_t>(c + 1)] - p.phases[static_cast<size_t>(c)], 1.0);
        if (d > 1e-9 && d < 0.5) diffs.push_back(d);
    }
    if (diffs.empty()) throw ConfigError("pattern phases carry no stripe ramp; pass --stripe-period");
    std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2, diffs.end());
    return p.dot_pitch / diffs[diffs.size() / 2];
}

struct PatternGenOpts {
    int rows = 20, cols = 30, k = 4, window = 3, hmin = 2;
    int dot_pitch = 8, dot_size = 2;
    uint64_t seed = 0;
    double freq = 20.0;
    double stripe_period = 32.0;
    std::string dutycycles;
    std::string mode = "psm";
    std::string out;
};

void run_pattern_gen(const PatternGenOpts& opt) {
    const uint64_t seed = resolve_seed(opt.seed);
    std::cout << "config: pattern-gen mode=" << opt.mode << " rows=" << opt.rows << " cols="
              << opt.cols << " k=" << opt.k << " window=" << opt.window << " hmin=" << opt.hmin
              << " seed=" << seed << " dot_pitch=" << opt.dot_pitch << " dot_size=" << opt.dot_size
              << " freq=" << opt.freq << " dutycycles=" << (opt.dutycycles.empty() ? "<default>" : opt.dutycycles)
              << " stripe_period=" << opt.stripe_period << " out=" << opt.out << "\n";
    if (opt.mode == "stripes") {
        PatternSpec pattern = make_stripe_pattern(opt.cols, opt.rows, opt.freq, opt.stripe_period);
        pattern.seed = seed;
        write_pattern(pattern, opt.out);
        std::cout << "pattern-gen: stripes " << opt.rows << "x" << opt.cols << " period="
                  << opt.stripe_period << "px freq=" << opt.freq << " -> " << opt.out << "\n";
        return;
    }
    SymbolGrid grid;
    if (opt.mode == "psm") {
        PsmParams params;
        params.rows = opt.rows;
        params.cols = opt.cols;
        params.k = opt.k;
        params.window_rows = params.window_cols = opt.window;
        params.hmin = opt.hmin;
        params.seed = seed;
        grid = generate_psm(params);
    } else if (opt.mode == "debruijn") {
        const auto seq = generate_debruijn(opt.k, opt.window);
        grid.rows = opt.rows;
        grid.cols = opt.cols;
        grid.k = opt.k;
        grid.window_rows = 1;
        grid.window_cols = opt.window;
        grid.symbols.resize(static_cast<size_t>(opt.rows) * opt.cols);
        for (int r = 0; r < opt.rows; ++r)
            for (int c = 0; c < opt.cols; ++c)
                grid.symbols[static_cast<size_t>(r) * opt.cols + c] =
                    seq[static_cast<size_t>(c) % seq.size()];
    } else {
        throw ConfigError("unknown mode '" + opt.mode + "' (psm or debruijn)");
    }

    std::vector<SignalSpec> alphabet;
    if (opt.dutycycles.empty()) {
        alphabet = default_alphabet(opt.k, opt.freq);
    } else {
        for (const double a : parse_double_list(opt.dutycycles, "dutycycle"))
            alphabet.push_back({opt.freq, a, 0.0});
        if (static_cast<int>(alphabet.size()) != opt.k)
            throw ConfigError("need exactly k dutycycles");
    }

    PatternSpec pattern =
        assign_signals(grid, alphabet, seed ^ 0x5AFEC0DEULL, opt.dot_pitch, opt.dot_size);
    pattern.hmin = opt.hmin;
    pattern.seed = seed;
    write_pattern(pattern, opt.out);
    std::cout << "pattern-gen: " << opt.rows << "x" << opt.cols << " k=" << opt.k << " window="
              << opt.window << " hmin=" << opt.hmin << " seed=" << seed << " -> " << opt.out << "\n";
}

struct VerifyOpts {
    std::string pattern;
    std::string events;
    bool budget = false;
    uint64_t step_us = kDmdStepUs;
};

int run_verify(const VerifyOpts& opt) {
    std::cout << "config: verify pattern=" << (opt.pattern.empty() ? "<none>" : opt.pattern)
              << " events=" << (opt.events.empty() ? "<none>" : opt.events)
              << " budget=" << opt.budget << " step_us=" << opt.step_us << "\n";
    int rc = 0;
    if (!opt.pattern.empty()) {
        const PatternSpec p = read_pattern(opt.pattern);
        const PsmReport report = verify_psm(p.grid, p.hmin);
        std::cout << "pattern: windows=" << report.window_count << " unique="
                  << (report.unique ? "true" : "false") << " min_hamming=" << report.min_hamming
                  << " violations=" << report.violation_count << "\n";
        if (!report.passes(p.hmin)) {
            for (size_t i = 0; i < std::min<size_t>(report.violations.size(), 10); ++i) {
                const auto& v = report.violations[i];
                std::cout << "  windows (" << v.row_a << "," << v.col_a << ") and (" << v.row_b << ","
                          << v.col_b << ") at distance " << v.distance << "\n";
            }
            rc = 1;
        }
        if (opt.budget) {
            const DmdReport budget = check_dmd_budget(p, opt.step_us);
            std::cout << "budget: max_mirror_changes=" << budget.max_mirror_changes << "/"
                      << kDmdMirrorBudget << " at_step=" << budget.max_step_index
                      << " mean_event_rate=" << budget.mean_event_rate << "/s cap="
                      << kAtisBandwidthEps << " extent=" << budget.extent_px_x << "x"
                      << budget.extent_px_y << " fits_dmd=" << (budget.fits_dmd ? "true" : "false")
                      << "\n";
            if (!budget.mirrors_feasible || !budget.bandwidth_feasible) rc = 1;
        }
    }
    if (!opt.events.empty()) {
        const EventStream s = read_events(opt.events);
        const ValidationReport report = validate_stream(s);
        std::cout << "events: " << s.events.size() << " records, geometry " << s.geometry.width
                  << "x" << s.geometry.height << ", "
                  << (report.ok() ? "ok" : std::to_string(report.violations.size()) + " violations")
                  << "\n";
        for (size_t i = 0; i < std::min<size_t>(report.violations.size(), 10); ++i)
            std::cout << "  " << report.violations[i].message << "\n";
        if (!report.ok()) rc = 1;
    }
    if (opt.pattern.empty() && opt.events.empty())
        throw ConfigError("nothing to verify; pass --pattern and/or --events");
    return rc;
}

struct SimulateOpts {
    std::string pattern, scene, calib, out, sidecar;
    std::string duration = "5s";
    uint64_t step_us = kDmdStepUs;
    bool allow_fast_step = false;
    bool text = false;
    uint64_t seed = 0;
    int threads = 1;
    SensorParams sensor;
};

void run_simulate(const SimulateOpts& opt) {
    const PatternSpec pattern = read_pattern(opt.pattern);
    const Scene scene = read_scene(opt.scene);
    const RigCalibration rig = read_calibration(opt.calib);
    const uint64_t duration = parse_duration_us(opt.duration);
    const uint64_t seed = resolve_seed(opt.seed);
    std::cout << "config: simulate pattern=" << opt.pattern << " scene=" << opt.scene << " calib="
              << opt.calib << " duration_us=" << duration << " step_us=" << opt.step_us
              << " allow_fast_step=" << opt.allow_fast_step << " seed=" << seed << " threads="
              << opt.threads << " latency_us=" << opt.sensor.latency_us << " jitter_us="
              << opt.sensor.jitter_sigma_us << " refractory_us=" << opt.sensor.refractory_us
              << " burst_mean=" << opt.sensor.burst_mean << " burst_cap=" << opt.sensor.burst_cap
              << " burst_spacing_us=" << opt.sensor.burst_spacing_us << " noise_rate="
              << opt.sensor.noise_rate_hz << " bandwidth=" << opt.sensor.bandwidth_eps << " text="
              << opt.text << " out=" << opt.out
              << " sidecar=" << (opt.sidecar.empty() ? "<none>" : opt.sidecar) << "\n";

    const auto traces = project_dots(pattern, scene, rig);
    const auto schedules = render_timeline(pattern, duration, opt.step_us, opt.allow_fast_step);
    GenerationReport report;
    const EventStream stream = generate_events(
        schedules, traces, opt.sensor, seed, duration,
        {static_cast<uint16_t>(rig.camera.width), static_cast<uint16_t>(rig.camera.height)}, &report,
        opt.threads);
    write_events(stream, opt.out, opt.text ? EventFileFormat::Text : EventFileFormat::Binary);
    if (!opt.sidecar.empty()) write_file_atomic(opt.sidecar, serialize_traces_csv(traces));

    size_t visible = 0;
    for (const auto& t : traces) visible += t.visible;
    std::cout << "simulate: " << stream.events.size() << " events (" << report.dropped_bandwidth
              << " dropped), " << visible << "/" << traces.size() << " dots visible, seed=" << seed
              << " -> " << opt.out << "\n";
}

struct FilterOpts {
    std::string events, out;
    double freq = 0;
    double tau_us = 0;
    double thresh_up = 0.5, thresh_down = 0.5;
    bool text = false;
};

void run_filter(const FilterOpts& opt) {
    if (opt.freq <= 0 && opt.tau_us <= 0) throw ConfigError("pass --freq or --tau-us");
    FilterParams params = opt.tau_us > 0 ? FilterParams{opt.tau_us, opt.thresh_up, opt.thresh_down}
                                         : FilterParams::for_frequency(opt.freq);
    params.thresh_up = opt.thresh_up;
    params.thresh_down = opt.thresh_down;
    std::cout << "config: filter events=" << opt.events << " tau_us=" << params.tau_us
              << " thresh_up=" << params.thresh_up << " thresh_down=" << params.thresh_down
              << " text=" << opt.text << " out=" << opt.out << "\n";
    const EventStream input = read_events(opt.events);
    const EventStream output = filter_stream(input, params);
    write_events(output, opt.out, opt.text ? EventFileFormat::Text : EventFileFormat::Binary);
    std::cout << "filter: " << input.events.size() << " -> " << output.events.size()
              << " events, tau=" << params.tau_us << "us -> " << opt.out << "\n";
}

struct EstimateOpts {
    std::string events, out, gnuplot;
    int radius = 1;
    double lambda = 0.1;
    uint32_t min_periods = 2;
};

void run_estimate(const EstimateOpts& opt) {
    std::cout << "config: estimate events=" << opt.events << " radius=" << opt.radius
              << " lambda=" << opt.lambda << " min_periods=" << opt.min_periods << " out="
              << opt.out << " gnuplot=" << (opt.gnuplot.empty() ? "<none>" : opt.gnuplot) << "\n";
    const EventStream filtered = read_events(opt.events);
    const DutyCycleImage img = build_dutycycle_image(filtered, opt.radius, opt.lambda, opt.min_periods);
    write_file_atomic(opt.out, serialize_dutycycle_csv(img));
    if (!opt.gnuplot.empty()) write_file_atomic(opt.gnuplot, serialize_dutycycle_gnuplot(img));
    std::cout << "estimate: " << img.present_count() << " active pixels -> " << opt.out << "\n";
}

struct ReconstructOpts {
    std::string method = "dutycycle";
    std::string events, pattern, calib, out, report, stats, correspondences;
    std::string wrapped_csv, unwrapped_csv;
    int radius = 1;
    double lambda = 0.1;
    double tolerance = 0.07;
    int max_hamming = -1;  // -1: derive from the pattern's hmin
    double max_gap = 0.01;
    int min_support = 1;
    double pitch = 0;  // 0: estimate from detected dots
    // phase method
    double lambda_u = 1.0;
    bool signed_mod = false;
    double phase_origin_px = 0.0;
    double stripe_period = 0;  // 0: recover from the pattern phases
    double max_absent = 0.2;
};

std::string cloud_report_with_provenance(const PointCloud& cloud,
                                         const std::vector<Correspondence>& cs) {
    std::string out = "camera_x,camera_y,proj_x,proj_y,grid_row,grid_col,hamming,x,y,z,ray_gap\n";
    char buf[256];
    for (const CloudPoint& p : cloud.points) {
        const Correspondence& c = cs[static_cast<size_t>(p.source_index)];
        std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f,%d,%d,%d,%.9f,%.9f,%.9f,%.3e\n",
                      c.camera.x, c.camera.y, c.projector.x, c.projector.y, c.grid_row, c.grid_col,
                      c.hamming, p.position.x, p.position.y, p.position.z, p.ray_gap);
        out += buf;
    }
    return out;
}

void run_reconstruct_dutycycle(const ReconstructOpts& opt) {
    const PatternSpec pattern = read_pattern(opt.pattern);
    const RigCalibration rig = read_calibration(opt.calib);
    const EventStream raw = read_events(opt.events);
    std::cout << "config: reconstruct method=dutycycle events=" << opt.events << " pattern="
              << opt.pattern << " calib=" << opt.calib << " radius=" << opt.radius << " lambda="
              << opt.lambda << " tolerance=" << opt.tolerance << " max_hamming=" << opt.max_hamming
              << " max_gap=" << opt.max_gap << " min_support=" << opt.min_support << " pitch="
              << opt.pitch << " out=" << opt.out << "\n";

    const EventStream filtered =
        filter_stream(raw, FilterParams::for_frequency(max_frequency(pattern)));
    const DutyCycleImage img = build_dutycycle_image(filtered, opt.radius, opt.lambda);
    std::vector<DetectedDot> dots = detect_dots(img, opt.min_support);
    if (dots.size() < 2)
        throw ConfigError("too few dots detected (" + std::to_string(dots.size()) + ")");
    classify_dots(dots, pattern.alphabet, opt.tolerance);
    const double pitch = opt.pitch > 0 ? opt.pitch : estimate_grid_pitch(dots);
    const auto words = extract_codewords(dots, pitch);
    const int max_hamming = opt.max_hamming >= 0 ? opt.max_hamming : (pattern.hmin - 1) / 2;
    MatchReport match_report;
    const auto cs = match(dots, words, pattern, max_hamming, &match_report);
    const PointCloud cloud = build_cloud(cs, rig, opt.max_gap);

    export_ply(cloud, opt.out);
    if (!opt.report.empty()) write_file_atomic(opt.report, cloud_report_with_provenance(cloud, cs));
    if (!opt.stats.empty()) write_file_atomic(opt.stats, serialize_depth_stats_csv(cloud.stats));
    if (!opt.correspondences.empty())
        write_file_atomic(opt.correspondences, serialize_correspondences_csv(cs));
    std::cout << "reconstruct: " << dots.size() << " dots, " << match_report.matched << " matched, "
              << cloud.stats.accepted << " points (depth " << cloud.stats.depth_min << ".."
              << cloud.stats.depth_max << " m) -> " << opt.out << "\n";
}

void run_reconstruct_phase(const ReconstructOpts& opt) {
    const PatternSpec pattern = read_pattern(opt.pattern);
    const RigCalibration rig = read_calibration(opt.calib);
    const EventStream raw = read_events(opt.events);

    const double f = max_frequency(pattern);
    const double period_us = 1e6 / f;
    const double stripe_period =
        opt.stripe_period > 0 ? opt.stripe_period : stripe_period_from_pattern(pattern);
    std::cout << "config: reconstruct method=phase events=" << opt.events << " pattern="
              << opt.pattern << " calib=" << opt.calib << " lambda_u=" << opt.lambda_u
              << " signed_mod=" << opt.signed_mod << " phase_origin_px=" << opt.phase_origin_px
              << " stripe_period=" << stripe_period << " max_absent=" << opt.max_absent << " out="
              << opt.out << "\n";
    const EventStream filtered = filter_stream(raw, FilterParams::for_frequency(f));

    PointCloud cloud;
    std::vector<Correspondence> provenance;
    std::vector<std::vector<double>> wrapped_rows, unwrapped_rows;
    const std::vector<double> nan_row(static_cast<size_t>(rig.camera.width),
                                      std::numeric_limits<double>::quiet_NaN());
    size_t rows_used = 0;
    for (int y = 0; y < rig.camera.height; ++y) {
        const PhaseLine line =
            build_phase_line(filtered, y, period_us, opt.lambda_u, opt.signed_mod, opt.max_absent);
        if (line.rejected) {
            wrapped_rows.push_back(nan_row);
            unwrapped_rows.push_back(nan_row);
            continue;
        }
        wrapped_rows.push_back(line.wrapped);
        unwrapped_rows.push_back(line.unwrapped);
        ++rows_used;
        const auto proj_x = phase_to_correspondence(line.unwrapped, stripe_period);
        for (int x = 0; x < static_cast<int>(proj_x.size()); ++x) {
            if (line.source[static_cast<size_t>(x)] == PhasePixel::HeldEdge) continue;
            const double px = proj_x[static_cast<size_t>(x)] + opt.phase_origin_px;
            const auto tp = triangulate_ray_plane(
                rig.camera_ray({static_cast<double>(x), static_cast<double>(y)}), px, rig);
            if (!tp.ok()) continue;
            Correspondence c;
            c.camera = {static_cast<double>(x), static_cast<double>(y)};
            c.projector = {px, static_cast<double>(y)};
            c.grid_row = y;
            c.grid_col = x;
            provenance.push_back(c);
            cloud.points.push_back(
                {tp.point, tp.ray_gap, y, x, static_cast<int>(provenance.size()) - 1});
        }
    }
    refresh_depth_stats(cloud);
    cloud.stats.input = cloud.stats.accepted;
    export_ply(cloud, opt.out);
    if (!opt.report.empty())
        write_file_atomic(opt.report, cloud_report_with_provenance(cloud, provenance));
    if (!opt.stats.empty()) write_file_atomic(opt.stats, serialize_depth_stats_csv(cloud.stats));
    if (!opt.wrapped_csv.empty()) write_file_atomic(opt.wrapped_csv, serialize_phase_csv(wrapped_rows));
    if (!opt.unwrapped_csv.empty())
        write_file_atomic(opt.unwrapped_csv, serialize_phase_csv(unwrapped_rows));
    std::cout << "reconstruct: phase method, " << rows_used << " lines, " << cloud.points.size()
              << " points -> " << opt.out << "\n";
}

struct EvalOpts {
    std::string report, sidecar, out, hist;
    double hist_bin = 0.01;  // histogram bin width, meters
};

struct ReportRow {
    int grid_row, grid_col;
    double z;
};

std::vector<ReportRow> parse_report_csv(const std::string& text, const std::string& origin) {
    std::vector<ReportRow> rows;
    size_t pos = 0, lineno = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (lineno == 1 || line.empty()) continue;
        ReportRow row{};
        double cam_x, cam_y, proj_x, proj_y, x, y, gap;
        int hamming;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%d,%d,%d,%lf,%lf,%lf,%lf", &cam_x, &cam_y,
                        &proj_x, &proj_y, &row.grid_row, &row.grid_col, &hamming, &x, &y, &row.z,
                        &gap) != 11)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": malformed report record");
        rows.push_back(row);
    }
    return rows;
}

int run_eval(const EvalOpts& opt) {
    std::cout << "config: eval report=" << opt.report << " sidecar=" << opt.sidecar << " out="
              << (opt.out.empty() ? "<none>" : opt.out)
              << " hist=" << (opt.hist.empty() ? "<none>" : opt.hist) << " hist_bin="
              << opt.hist_bin << "\n";
    const auto rows = parse_report_csv(read_file(opt.report), opt.report);
    const auto traces = parse_traces_csv(read_file(opt.sidecar), opt.sidecar);

    std::map<std::pair<int, int>, const DotTrace*> truth;
    int grid_rows = 0, grid_cols = 0;
    for (const DotTrace& t : traces) {
        truth[{t.row, t.col}] = &t;
        grid_rows = std::max(grid_rows, t.row + 1);
        grid_cols = std::max(grid_cols, t.col + 1);
    }

    // A dot is matchable when its full 3x3 neighborhood is visible in the
    // ground truth and sits on one surface; codewords that straddle a depth
    // step are corrupted in camera space by the disparity jump, so occlusion
    // and silhouette casualties stay out of the match-rate denominator.
    std::set<std::pair<int, int>> matchable;
    for (const DotTrace& t : traces) {
        if (t.row < 1 || t.col < 1 || t.row >= grid_rows - 1 || t.col >= grid_cols - 1) continue;
        bool clean = true;
        double depth_min = t.depth_m, depth_max = t.depth_m;
        for (int dr = -1; dr <= 1 && clean; ++dr)
            for (int dc = -1; dc <= 1 && clean; ++dc) {
                const auto it = truth.find({t.row + dr, t.col + dc});
                clean = it != truth.end() && it->second->visible;
                if (clean) {
                    depth_min = std::min(depth_min, it->second->depth_m);
                    depth_max = std::max(depth_max, it->second->depth_m);
                }
            }
        if (clean && depth_max - depth_min <= 0.05 * t.depth_m) matchable.insert({t.row, t.col});
    }

    std::string per_dot = "grid_row,grid_col,depth_est,depth_true,error,rel_error\n";
    char buf[160];
    double sq_rel = 0;
    size_t joined = 0, matched_matchable = 0;
    std::map<int, size_t> hist;
    for (const ReportRow& r : rows) {
        const auto it = truth.find({r.grid_row, r.grid_col});
        if (it == truth.end() || !it->second->visible) continue;
        const double depth_true = it->second->depth_m;
        const double err = r.z - depth_true;
        sq_rel += (err / depth_true) * (err / depth_true);
        ++joined;
        matched_matchable += matchable.count({r.grid_row, r.grid_col}) > 0;
        std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.6f,%.6f\n", r.grid_row, r.grid_col, r.z,
                      depth_true, err, err / depth_true);
        per_dot += buf;
        ++hist[static_cast<int>(std::floor(r.z / opt.hist_bin))];
    }
    if (!opt.out.empty()) write_file_atomic(opt.out, per_dot);
    if (!opt.hist.empty()) {
        std::string h = "depth_m,count\n";
        for (const auto& [bin, count] : hist) {
            std::snprintf(buf, sizeof buf, "%.4f,%zu\n", (bin + 0.5) * opt.hist_bin, count);
            h += buf;
        }
        write_file_atomic(opt.hist, h);
    }

    const double rms_rel = joined ? std::sqrt(sq_rel / static_cast<double>(joined)) : 0.0;
    const double rate = matchable.empty() ? 0.0
                                          : static_cast<double>(matched_matchable) /
                                                static_cast<double>(matchable.size());
    std::cout << "eval: matched=" << joined << " matchable=" << matchable.size()
              << " match_rate=" << rate << " rms_rel_depth_error=" << rms_rel << "\n";
    return 0;
}

struct SweepOpts {
    std::string frequencies = "40,100,200,500,666,1000";
    int periods = 100;
    double alpha = 0.5;
    int footprint = 3;
    uint64_t seed = 0;
    int threads = 1;
    std::string out;
};

void run_freq_sweep(const SweepOpts& opt) {
    const uint64_t seed = resolve_seed(opt.seed);
    std::cout << "config: freq-sweep frequencies=" << opt.frequencies << " periods=" << opt.periods
              << " alpha=" << opt.alpha << " footprint=" << opt.footprint << " seed=" << seed
              << " threads=" << opt.threads << " out=" << opt.out << "\n";
    RigCalibration rig;
    rig.camera = {600, 600, 152, 120, 304, 240};
    rig.projector = {800, 800, 12, 12, 304, 240};
    rig.translation = {0.2, 0, 0};
    Scene scene;
    scene.primitives.push_back(PlanePrimitive{{0, 0, 1}, 1.0});

    std::string csv =
        "frequency_hz,periods,mean_f_on_hz,sigma_f_on_hz,mean_f_off_hz,sigma_f_off_hz,pct_on_events\n";
    char buf[192];
    for (const double f : parse_double_list(opt.frequencies, "frequency")) {
        const double period_us = 1e6 / f;
        const PatternSpec pattern = make_single_dot_pattern(f, opt.alpha, opt.footprint);
        const auto traces = project_dots(pattern, scene, rig);
        if (traces.empty() || !traces[0].visible) throw ConfigError("sweep dot not visible");
        const auto duration = static_cast<uint64_t>((opt.periods + 2) * period_us);
        const auto step = static_cast<uint64_t>(std::max(10.0, period_us / 200.0));
        const auto schedules = render_timeline(pattern, duration, step, true);
        SensorParams sensor;
        const EventStream raw =
            generate_events(schedules, traces, sensor, seed + static_cast<uint64_t>(f), duration,
                            {304, 240}, nullptr, opt.threads);
        const EventStream filtered = filter_stream(raw, FilterParams::for_frequency(f));

        // Collapse the merged footprint neighborhood to edges, then read the
        // per-period frequency off successive same-polarity edge times.
        const int cx = static_cast<int>(std::lround(traces[0].cam_px.x));
        const int cy = static_cast<int>(std::lround(traces[0].cam_px.y));
        // Estimates outside +-50% of the commanded frequency count as noise
        // hits and are discarded.
        std::vector<double> f_on, f_off;
        int8_t last_p = 0;
        int64_t last_on = -1, last_off = -1;
        auto keep = [f](std::vector<double>& dst, double estimate) {
            if (estimate > 0.5 * f && estimate < 1.5 * f) dst.push_back(estimate);
        };
        for (const Event& e : neighborhood_events(filtered, cx, cy, opt.footprint / 2)) {
            if (e.p == last_p) continue;
            last_p = e.p;
            if (e.p > 0) {
                if (last_on >= 0)
                    keep(f_on, 1e6 / (static_cast<double>(e.t) - static_cast<double>(last_on)));
                last_on = static_cast<int64_t>(e.t);
            } else {
                if (last_off >= 0)
                    keep(f_off, 1e6 / (static_cast<double>(e.t) - static_cast<double>(last_off)));
                last_off = static_cast<int64_t>(e.t);
            }
        }
        size_t on_events = 0;
        for (const Event& e : raw.events) on_events += e.p > 0;
        auto stats = [](const std::vector<double>& v) {
            double m = 0, s2 = 0;
            for (const double x : v) m += x;
            m /= v.empty() ? 1.0 : static_cast<double>(v.size());
            for (const double x : v) s2 += (x - m) * (x - m);
            s2 /= v.empty() ? 1.0 : static_cast<double>(v.size());
            return std::make_pair(m, std::sqrt(s2));
        };
        const auto [mean_on, sigma_on] = stats(f_on);
        const auto [mean_off, sigma_off] = stats(f_off);
        std::snprintf(buf, sizeof buf, "%.1f,%d,%.4f,%.4f,%.4f,%.4f,%.4f\n", f, opt.periods, mean_on,
                      sigma_on, mean_off, sigma_off,
                      raw.events.empty() ? 0.0
                                         : 100.0 * static_cast<double>(on_events) /
                                               static_cast<double>(raw.events.size()));
        csv += buf;
    }
    write_file_atomic(opt.out, csv);
    std::cout << "freq-sweep: " << opt.frequencies << " -> " << opt.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evtlight: event-based structured-light depth reconstruction"};
    app.require_subcommand(1);
    int exit_code = 0;

    PatternGenOpts pg;
    auto* pattern_gen = app.add_subcommand("pattern-gen", "Generate a coded pattern file");
    pattern_gen->add_option("--rows", pg.rows, "Grid rows");
    pattern_gen->add_option("--cols", pg.cols, "Grid columns");
    pattern_gen->add_option("--k", pg.k, "Alphabet size");
    pattern_gen->add_option("--window", pg.window, "Codeword window side");
    pattern_gen->add_option("--hmin", pg.hmin, "Minimum Hamming distance between windows");
    pattern_gen->add_option("--seed", pg.seed, "Generation seed");
    pattern_gen->add_option("--dot-pitch", pg.dot_pitch, "Projector pixels per grid cell");
    pattern_gen->add_option("--dot-size", pg.dot_size, "Dot side in projector pixels");
    pattern_gen->add_option("--freq", pg.freq, "Shared signal frequency, Hz");
    pattern_gen->add_option("--dutycycles", pg.dutycycles, "Comma list of k dutycycles");
    pattern_gen->add_option("--mode", pg.mode, "psm, debruijn or stripes");
    pattern_gen->add_option("--stripe-period", pg.stripe_period, "Stripe period for mode=stripes, px");
    pattern_gen->add_option("-o,--out", pg.out, "Output pattern file")->required();
    pattern_gen->callback([&] {
        g_stage = "pattern-gen";
        run_pattern_gen(pg);
    });

    VerifyOpts vo;
    auto* verify = app.add_subcommand("verify", "Verify a pattern file and/or an event file");
    verify->add_option("--pattern", vo.pattern, "Pattern file to verify");
    verify->add_option("--events", vo.events, "Event file to validate");
    verify->add_flag("--budget", vo.budget, "Also report the DMD/bandwidth budget");
    verify->add_option("--step-us", vo.step_us, "DMD step for the budget report");
    verify->callback([&] {
        g_stage = "verify";
        exit_code = run_verify(vo);
    });

    SimulateOpts so;
    auto* simulate = app.add_subcommand("simulate", "Render a pattern into an event stream");
    simulate->add_option("--pattern", so.pattern)->required();
    simulate->add_option("--scene", so.scene)->required();
    simulate->add_option("--calib", so.calib)->required();
    simulate->add_option("--duration", so.duration, "e.g. 5s, 250ms, 700us");
    simulate->add_option("--step-us", so.step_us, "DMD step, microseconds");
    simulate->add_flag("--allow-fast-step", so.allow_fast_step, "Permit steps under 700us");
    simulate->add_option("--seed", so.seed);
    simulate->add_option("--threads", so.threads, "Cap on worker threads");
    simulate->add_option("--latency-us", so.sensor.latency_us);
    simulate->add_option("--jitter-us", so.sensor.jitter_sigma_us);
    simulate->add_option("--refractory-us", so.sensor.refractory_us);
    simulate->add_option("--burst-mean", so.sensor.burst_mean);
    simulate->add_option("--burst-cap", so.sensor.burst_cap);
    simulate->add_option("--burst-spacing-us", so.sensor.burst_spacing_us);
    simulate->add_option("--noise-rate", so.sensor.noise_rate_hz, "Background noise, ev/px/s");
    simulate->add_option("--bandwidth", so.sensor.bandwidth_eps, "Sensor cap, ev/s");
    simulate->add_flag("--text", so.text, "Write the text event format");
    simulate->add_option("-o,--out", so.out)->required();
    simulate->add_option("--sidecar", so.sidecar, "Ground-truth sidecar CSV");
    simulate->callback([&] {
        g_stage = "simulate";
        run_simulate(so);
    });

    FilterOpts fo;
    auto* filter = app.add_subcommand("filter", "Burst-filter an event stream");
    filter->add_option("--events", fo.events)->required();
    filter->add_option("--freq", fo.freq, "Stimulus frequency, Hz (tau = T/10)");
    filter->add_option("--tau-us", fo.tau_us, "Decay constant, overrides --freq");
    filter->add_option("--thresh-up", fo.thresh_up);
    filter->add_option("--thresh-down", fo.thresh_down);
    filter->add_flag("--text", fo.text);
    filter->add_option("-o,--out", fo.out)->required();
    filter->callback([&] {
        g_stage = "filter";
        run_filter(fo);
    });

    EstimateOpts eo;
    auto* estimate =
        app.add_subcommand("estimate", "Build the duty-cycle image from filtered events");
    estimate->add_option("--events", eo.events, "Burst-filtered event file")->required();
    estimate->add_option("--radius,-N", eo.radius, "Neighborhood radius");
    estimate->add_option("--lambda", eo.lambda, "Half-period smoothing");
    estimate->add_option("--min-periods", eo.min_periods);
    estimate->add_option("-o,--out", eo.out, "CSV grid output")->required();
    estimate->add_option("--gnuplot", eo.gnuplot, "Heatmap data output");
    estimate->callback([&] {
        g_stage = "estimate";
        run_estimate(eo);
    });

    ReconstructOpts ro;
    auto* reconstruct = app.add_subcommand("reconstruct", "Events to point cloud");
    reconstruct->add_option("--method", ro.method, "dutycycle or phase");
    reconstruct->add_option("--events", ro.events)->required();
    reconstruct->add_option("--pattern", ro.pattern)->required();
    reconstruct->add_option("--calib", ro.calib)->required();
    reconstruct->add_option("-o,--out", ro.out, "PLY output")->required();
    reconstruct->add_option("--report", ro.report, "Depth report CSV");
    reconstruct->add_option("--stats", ro.stats, "Depth stats CSV");
    reconstruct->add_option("--correspondences", ro.correspondences, "Correspondence list CSV");
    reconstruct->add_option("--wrapped-csv", ro.wrapped_csv, "Wrapped phase map (phase method)");
    reconstruct->add_option("--unwrapped-csv", ro.unwrapped_csv, "Unwrapped phase map (phase method)");
    reconstruct->add_option("--radius,-N", ro.radius);
    reconstruct->add_option("--lambda", ro.lambda);
    reconstruct->add_option("--tolerance", ro.tolerance, "Dutycycle classification tolerance");
    reconstruct->add_option("--max-hamming", ro.max_hamming);
    reconstruct->add_option("--max-gap", ro.max_gap, "Ray gap acceptance, meters");
    reconstruct->add_option("--min-support", ro.min_support);
    reconstruct->add_option("--pitch", ro.pitch, "Camera-space lattice pitch, pixels");
    reconstruct->add_option("--lambda-u", ro.lambda_u, "Unwrapping step gain");
    reconstruct->add_flag("--signed-mod", ro.signed_mod, "Centered modulus in the unwrap recursion");
    reconstruct->add_option("--phase-origin-px", ro.phase_origin_px,
                            "Projector column of the reference pixel's zero phase");
    reconstruct->add_option("--stripe-period", ro.stripe_period, "Stripe period, projector px");
    reconstruct->add_option("--max-absent", ro.max_absent, "Line rejection threshold");
    reconstruct->callback([&] {
        g_stage = "reconstruct";
        if (ro.method == "dutycycle")
            run_reconstruct_dutycycle(ro);
        else if (ro.method == "phase")
            run_reconstruct_phase(ro);
        else
            throw ConfigError("unknown method '" + ro.method + "' (dutycycle or phase)");
    });

    EvalOpts ev;
    auto* eval = app.add_subcommand("eval", "Compare a depth report against a sidecar");
    eval->add_option("--report", ev.report)->required();
    eval->add_option("--sidecar", ev.sidecar)->required();
    eval->add_option("-o,--out", ev.out, "Per-dot error CSV");
    eval->add_option("--hist", ev.hist, "Depth histogram CSV");
    eval->add_option("--hist-bin", ev.hist_bin, "Histogram bin width, meters");
    eval->callback([&] {
        g_stage = "eval";
        exit_code = run_eval(ev);
    });

    SweepOpts sw;
    auto* sweep = app.add_subcommand("freq-sweep", "Frequency extraction accuracy table");
    sweep->add_option("--frequencies", sw.frequencies, "Comma list, Hz");
    sweep->add_option("--periods", sw.periods);
    sweep->add_option("--alpha", sw.alpha, "Dutycycle");
    sweep->add_option("--footprint", sw.footprint, "Dot side in camera pixels");
    sweep->add_option("--seed", sw.seed);
    sweep->add_option("--threads", sw.threads);
    sweep->add_option("-o,--out", sw.out)->required();
    sweep->callback([&] {
        g_stage = "freq-sweep";
        run_freq_sweep(sw);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << g_stage << ": " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
