#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "adstm/flow.hpp"
#include "adstm/fusion.hpp"
#include "adstm/galerkin.hpp"
#include "adstm/grid.hpp"
#include "adstm/io_util.hpp"
#include "adstm/simulator.hpp"
#include "adstm/spectral.hpp"
#include "adstm/statespace.hpp"

namespace fs = std::filesystem;
using namespace adstm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitEmptyData = 5;

struct SimulateOptions {
    std::string preset;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int frames = -1;
    int n1 = -1, n2 = -1;
    double speed = -1.0, direction = std::numeric_limits<double>::quiet_NaN();
    double noise_sd = -1.0, diffusivity = -1.0;
    int substeps = -1, advection_order = -1;
    double bump_sigma = -1.0, bump_amplitude = -1.0;
};

struct FitOptions {
    std::string data_dir, out_dir;
    int k1 = 6, k2 = 6;
    std::string model = "physics";
    std::vector<double> flow_polar;  // speed, direction
    int iters = 500, burn = 200;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<int> downsample;
    double w_scale = 0.01, a = 0.01, b = 0.01, nu_extra = 1.0, c0 = 10.0;
    int train = 0;  // 0 = every tick
    double bound_lo = -0.05, bound_hi = 5.0;
    bool strict_bounds = false;
    double cadence = 300.0;
    double of_smoothness = 100.0;
    int of_iters = 200;
};

void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// --- simulate -------------------------------------------------------------

int cmd_simulate(const SimulateOptions& opt) {
    if (!opt.seed_set) {
        std::cerr << "simulate: --seed is required\n";
        return kExitConfig;
    }
    if (opt.out_dir.empty()) {
        std::cerr << "simulate: --out is required\n";
        return kExitConfig;
    }

    SimConfig cfg = SimConfig::table1_benchmark(opt.seed);
    if (opt.preset == "table1" || opt.preset.empty()) {
        // defaults above
    } else if (opt.preset == "two-source") {
        cfg.initial.centers = {{0.7, 0.7}, {0.7, 0.8}, {0.8, 0.7}, {0.8, 0.8}};
        cfg.initial.amplitude = 0.32;
        cfg.speed = 0.010;
        cfg.direction_deg = 225.0;  // northeast toward southwest
        RectSpec ne{0.55, 1.0, 0.55, 1.0};
        cfg.sources = {{"sourceA", 0.0, 0.10, std::nullopt}, {"sourceB", 0.0, 0.25, ne}};
    } else {
        std::cerr << "simulate: unknown preset '" << opt.preset << "'\n";
        return kExitConfig;
    }

    if (opt.frames > 0) cfg.frames = opt.frames;
    if (opt.n1 > 0) cfg.grid.n1 = opt.n1;
    if (opt.n2 > 0) cfg.grid.n2 = opt.n2;
    if (opt.speed >= 0.0) cfg.speed = opt.speed;
    if (!std::isnan(opt.direction)) cfg.direction_deg = opt.direction;
    if (opt.noise_sd >= 0.0) cfg.noise_sd = opt.noise_sd;
    if (opt.diffusivity >= 0.0) cfg.diffusivity = opt.diffusivity;
    if (opt.substeps > 0) cfg.substeps = opt.substeps;
    if (opt.advection_order > 0) cfg.advection_order = opt.advection_order;
    if (opt.bump_sigma > 0.0) cfg.initial.sigma = opt.bump_sigma;
    if (opt.bump_amplitude >= 0.0) cfg.initial.amplitude = opt.bump_amplitude;

    const SyntheticDataset data = generate_streams(cfg);
    write_dataset(data, cfg, opt.out_dir);
    std::cout << "manifest: " << (fs::path(opt.out_dir) / "manifest.txt").string() << "\n";
    std::cout << "frames: " << cfg.frames << "\n";
    std::cout << "grid: " << cfg.grid.n1 << "x" << cfg.grid.n2 << "\n";
    return 0;
}

// --- shared fit machinery ---------------------------------------------------

struct LoadedData {
    std::vector<SourceStream> streams;  // truth excluded
    std::vector<SourceStream> truth;    // empty or singleton
    GridSpec grid;
    std::vector<std::int64_t> ticks;
};

LoadedData load_data(const FitOptions& opt) {
    ValueBounds bounds{opt.bound_lo, opt.bound_hi, opt.strict_bounds};
    LoadedData d;
    std::vector<SourceStream> all = load_streams(opt.data_dir, bounds, opt.cadence);
    for (SourceStream& s : all) {
        if (s.source_id == "truth")
            d.truth.push_back(std::move(s));
        else
            d.streams.push_back(std::move(s));
    }
    if (d.streams.empty() || d.streams.front().frames.empty())
        throw std::runtime_error("empty data: no observation frames found");
    d.grid = d.streams.front().frames.front().grid;
    std::vector<std::string> rejected;
    d.ticks = cadence_ticks(d.streams, opt.cadence, 30.0, &rejected);
    for (const std::string& r : rejected)
        std::cerr << "warning: frame off cadence, ignored: " << r << "\n";
    if (d.ticks.empty()) throw std::runtime_error("empty data: no cadence ticks");
    return d;
}

struct FitArtifacts {
    GridSpec grid;
    int k1 = 0, k2 = 0, q = 0;
    bool bias_augmented = true;
    std::string model;
    Eigen::MatrixXd transition;
    Eigen::VectorXd theta_hat;
    Eigen::VectorXd sigma2;
    std::vector<std::string> source_ids;
    std::int64_t last_time = 0;
    double cadence = 300.0;
    int t_train = 0;
};

void save_state(const std::string& path, const FitArtifacts& art) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "#ADSTM-STATE v1\n";
    out << "model: " << art.model << "\n";
    out << "n1: " << art.grid.n1 << "\nn2: " << art.grid.n2 << "\n";
    out << "origin: " << fmt(art.grid.origin_lat) << " " << fmt(art.grid.origin_lon) << "\n";
    out << "step: " << fmt(art.grid.step_lat) << " " << fmt(art.grid.step_lon) << "\n";
    out << "truncation: " << art.k1 << " " << art.k2 << "\n";
    out << "bias_augmented: " << (art.bias_augmented ? 1 : 0) << "\n";
    out << "t_train: " << art.t_train << "\n";
    out << "last_time: " << format_rfc3339(art.last_time) << "\n";
    out << "cadence: " << fmt(art.cadence) << "\n";
    out << "sources:";
    for (const std::string& s : art.source_ids) out << " " << s;
    out << "\n";
    out << "sigma2:";
    for (long i = 0; i < art.sigma2.size(); ++i) out << " " << fmt(art.sigma2(i));
    out << "\n";
    out << "theta:";
    for (long i = 0; i < art.theta_hat.size(); ++i) out << " " << fmt(art.theta_hat(i));
    out << "\n";
    out << "g_rows: " << art.transition.rows() << "\n";
    for (long i = 0; i < art.transition.rows(); ++i) {
        for (long j = 0; j < art.transition.cols(); ++j)
            out << (j ? " " : "") << fmt(art.transition(i, j));
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

FitArtifacts load_state(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open state " + path);
    std::string line;
    auto expect = [&](const char* key) {
        if (!std::getline(in, line)) throw std::runtime_error("state truncated at " + std::string(key));
        const std::string prefix = std::string(key) + ":";
        if (line.rfind(prefix, 0) != 0)
            throw std::runtime_error("state: expected '" + std::string(key) + ":', got '" + line + "'");
        return line.substr(prefix.size());
    };
    if (!std::getline(in, line) || line != "#ADSTM-STATE v1")
        throw std::runtime_error("state: bad magic");
    FitArtifacts art;
    {
        std::istringstream v(expect("model"));
        v >> art.model;
    }
    art.grid.n1 = std::stoi(expect("n1"));
    art.grid.n2 = std::stoi(expect("n2"));
    {
        std::istringstream v(expect("origin"));
        v >> art.grid.origin_lat >> art.grid.origin_lon;
    }
    {
        std::istringstream v(expect("step"));
        v >> art.grid.step_lat >> art.grid.step_lon;
    }
    {
        std::istringstream v(expect("truncation"));
        v >> art.k1 >> art.k2;
    }
    art.bias_augmented = std::stoi(expect("bias_augmented")) != 0;
    art.t_train = std::stoi(expect("t_train"));
    {
        std::string ts = expect("last_time");
        const std::size_t b = ts.find_first_not_of(' ');
        art.last_time = parse_rfc3339(ts.substr(b));
    }
    art.cadence = std::stod(expect("cadence"));
    {
        std::istringstream v(expect("sources"));
        std::string id;
        while (v >> id) art.source_ids.push_back(id);
    }
    {
        std::istringstream v(expect("sigma2"));
        std::vector<double> vals;
        double x;
        while (v >> x) vals.push_back(x);
        art.sigma2 = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
    }
    {
        std::istringstream v(expect("theta"));
        std::vector<double> vals;
        double x;
        while (v >> x) vals.push_back(x);
        art.theta_hat = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
    }
    const int rows = std::stoi(expect("g_rows"));
    art.transition.resize(rows, rows);
    for (int i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("state: truncated G matrix");
        std::istringstream v(line);
        for (int j = 0; j < rows; ++j)
            if (!(v >> art.transition(i, j))) throw std::runtime_error("state: short G row");
    }
    art.q = art.k1 * art.k2;
    return art;
}

Field coeff_field(const Eigen::MatrixXd& basis, const Eigen::VectorXd& coeffs,
                  const GridSpec& grid) {
    const Eigen::VectorXd flat = basis * coeffs;
    Eigen::MatrixXd vals(grid.n1, grid.n2);
    for (int i = 0; i < grid.n1; ++i)
        for (int j = 0; j < grid.n2; ++j) vals(i, j) = flat(grid.flat(i, j));
    return Field::from_values(std::move(vals));
}

int cmd_fit(const FitOptions& opt) {
    if (!opt.seed_set) {
        std::cerr << "fit: --seed is required\n";
        return kExitConfig;
    }
    if (opt.data_dir.empty() || opt.out_dir.empty()) {
        std::cerr << "fit: --data and --out are required\n";
        return kExitConfig;
    }
    if (opt.model != "physics" && opt.model != "data-driven") {
        std::cerr << "fit: --model must be physics or data-driven\n";
        return kExitConfig;
    }
    if (!opt.flow_polar.empty() && opt.flow_polar.size() != 2) {
        std::cerr << "fit: --flow takes SPEED DIRECTION_DEG\n";
        return kExitConfig;
    }

    const auto t_start = std::chrono::steady_clock::now();
    LoadedData data = load_data(opt);
    const GridSpec grid = data.grid;

    int t_train = static_cast<int>(data.ticks.size());
    if (opt.train > 0) t_train = std::min(t_train, opt.train);
    std::vector<std::int64_t> train_ticks(data.ticks.begin(), data.ticks.begin() + t_train);

    std::optional<DownsampleMask> mask;
    if (!opt.downsample.empty()) {
        if (opt.downsample.size() != 2) {
            std::cerr << "fit: --downsample takes G1 G2\n";
            return kExitConfig;
        }
        mask = build_downsample_mask(grid, opt.downsample[0], opt.downsample[1]);
    }

    // Flow: supplied constant field or Horn-Schunck estimate from the first
    // source's training frames.
    FlowFields flow;
    std::string flow_origin;
    if (opt.flow_polar.size() == 2) {
        flow = FlowFields::from_speed_direction(grid.n1, grid.n2, opt.flow_polar[0],
                                                opt.flow_polar[1]);
        flow.diffusivity = derive_diffusivity(flow, 1.0 / grid.n1, 1.0 / grid.n2).values();
        flow_origin = "specified";
    } else {
        std::vector<Field> frames;
        for (int t = 0; t < t_train && t < static_cast<int>(data.streams.front().frames.size()); ++t)
            frames.push_back(data.streams.front().frames[t].values);
        if (frames.size() < 2) throw std::runtime_error("empty data: need >= 2 frames for flow");
        OpticalFlowParams ofp;
        ofp.smoothness = opt.of_smoothness;
        ofp.iterations = opt.of_iters;
        flow = estimate_optical_flow(frames, ofp);
        flow.diffusivity = derive_diffusivity(flow, 1.0 / grid.n1, 1.0 / grid.n2).values();
        flow_origin = "optical-flow";
    }
    // grid-fraction/step -> km/h, using the geographic cell size and cadence.
    const double km_per_frac =
        0.5 * (std::abs(grid.step_lat) * grid.n1 + std::abs(grid.step_lon) * grid.n2) * 111.32;
    const double per_hour = 3600.0 / opt.cadence;
    std::cerr << "flow (" << flow_origin << "): max speed " << flow.max_speed()
              << " fraction/step = " << flow.max_speed() * km_per_frac * per_hour << " km/h\n";

    SsmModel model;
    model.q = opt.k1 * opt.k2;
    model.basis = basis_matrix(grid.n1, grid.n2, opt.k1, opt.k2);
    model.bias_augmented = opt.model == "physics";
    for (const SourceStream& s : data.streams) model.source_ids.push_back(s.source_id);
    std::sort(model.source_ids.begin(), model.source_ids.end());
    for (std::int64_t t : train_ticks)
        model.observations.push_back(fuse(data.streams, t, mask ? &*mask : nullptr));
    bool any_obs = false;
    for (const FusedObservation& o : model.observations) any_obs |= o.total_rows() > 0;
    if (!any_obs) throw std::runtime_error("empty data: no observations on training ticks");

    GibbsConfig gc;
    gc.iterations = opt.iters;
    gc.burn_in = opt.burn;
    gc.seed = opt.seed;
    gc.prior = PriorConfig{opt.w_scale, opt.nu_extra, opt.a, opt.b};
    gc.init_c0 = opt.c0;

    model.init_m0 = Eigen::VectorXd();  // set after model assembly below

    TransitionMatrix trans;
    if (model.bias_augmented) {
        trans = galerkin_transition(flow, opt.k1, opt.k2, grid);
        model.transition = build_G(trans.exp_p);
    } else {
        model.transition = Eigen::MatrixXd::Identity(model.state_dim(), model.state_dim());
    }
    model.init_m0 = initial_state_mean(model, grid, opt.k1, opt.k2);

    std::cout << "state_dimension: " << model.state_dim() << "\n";

    PosteriorDraws draws;
    if (opt.model == "physics")
        draws = run_gibbs(model, gc);
    else
        draws = run_gibbs_data_driven(model, gc);
    if (draws.rank_warning)
        std::cerr << "warning: data-driven trajectory matrix is rank-deficient (T-1 < K); "
                     "minimum-norm estimate used\n";

    fs::create_directories(opt.out_dir);
    fs::create_directories(fs::path(opt.out_dir) / "filtered");
    fs::create_directories(fs::path(opt.out_dir) / "bias");

    // Filtered and bias fields from the posterior-mean trajectory.
    std::vector<std::vector<double>> diag_rows;
    char name[64];
    for (int t = 1; t <= t_train; ++t) {
        const Eigen::VectorXd& theta = draws.theta_mean[t];
        Eigen::VectorXd total = theta.head(model.q);
        if (model.bias_augmented) total += theta.tail(model.q);
        Field filt = coeff_field(model.basis, total, grid);
        Field bias = model.bias_augmented
                         ? coeff_field(model.basis, theta.tail(model.q).eval(), grid)
                         : Field(grid.n1, grid.n2, 0.0);

        ObservationFrame fr;
        fr.grid = grid;
        fr.timestamp = train_ticks[t - 1];
        fr.source_id = "filtered";
        fr.values = filt;
        std::snprintf(name, sizeof(name), "frame_%04d.fgrid", t);
        write_fgrid_file((fs::path(opt.out_dir) / "filtered" / name).string(), fr);
        fr.source_id = "bias";
        fr.values = bias;
        write_fgrid_file((fs::path(opt.out_dir) / "bias" / name).string(), fr);

        double sse = 0.0;
        long n = 0;
        for (const SourceBlock& b : model.observations[t - 1].blocks) {
            for (std::size_t r = 0; r < b.cells.size(); ++r) {
                const int c = b.cells[r];
                const double d = filt.values()(c / grid.n2, c % grid.n2) - b.y(static_cast<long>(r));
                sse += d * d;
                ++n;
            }
        }
        diag_rows.push_back({static_cast<double>(t), static_cast<double>(train_ticks[t - 1]),
                             static_cast<double>(n), n ? sse / n : 0.0});
    }
    write_csv_table((fs::path(opt.out_dir) / "diagnostics.csv").string(),
                    {"tick", "time", "n_obs", "filtered_mse_vs_obs"}, diag_rows);

    FitArtifacts art;
    art.grid = grid;
    art.k1 = opt.k1;
    art.k2 = opt.k2;
    art.q = model.q;
    art.bias_augmented = model.bias_augmented;
    art.model = opt.model;
    art.transition = opt.model == "physics" ? model.transition : draws.g_mean;
    art.theta_hat = draws.theta_mean.back();
    art.sigma2 = draws.sigma2_mean;
    art.source_ids = model.source_ids;
    art.last_time = train_ticks.back();
    art.cadence = opt.cadence;
    art.t_train = t_train;
    save_state((fs::path(opt.out_dir) / "model_state.txt").string(), art);

    // Posterior summaries.
    {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < draws.sigma2_draws.size(); ++i) {
            std::vector<double> row{static_cast<double>(i)};
            for (long m = 0; m < draws.sigma2_draws[i].size(); ++m)
                row.push_back(draws.sigma2_draws[i](m));
            row.push_back(draws.w_trace_draws[i]);
            rows.push_back(std::move(row));
        }
        std::vector<std::string> header{"draw"};
        for (const std::string& s : model.source_ids) header.push_back("sigma2_" + s);
        header.push_back("trace_w");
        write_csv_table((fs::path(opt.out_dir) / "posterior_draws.csv").string(), header, rows);
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    std::cerr << "fit wall time: " << wall << " s; jitter events: " << draws.jitter_events
              << "\n";

    std::vector<std::pair<std::string, std::string>> man{
        {"command", "fit"},
        {"data", opt.data_dir},
        {"out", opt.out_dir},
        {"model", opt.model},
        {"truncation_k1", std::to_string(opt.k1)},
        {"truncation_k2", std::to_string(opt.k2)},
        {"state_dimension", std::to_string(model.state_dim())},
        {"iters", std::to_string(opt.iters)},
        {"burn_in", std::to_string(opt.burn)},
        {"seed", std::to_string(opt.seed)},
        {"train_ticks", std::to_string(t_train)},
        {"w_prior_scale", fmt(opt.w_scale)},
        {"nu_extra", fmt(opt.nu_extra)},
        {"ig_a", fmt(opt.a)},
        {"ig_b", fmt(opt.b)},
        {"init_c0", fmt(opt.c0)},
        {"cadence_seconds", fmt(opt.cadence)},
        {"bounds_lo", fmt(opt.bound_lo)},
        {"bounds_hi", fmt(opt.bound_hi)},
        {"strict_bounds", opt.strict_bounds ? "1" : "0"},
        {"flow_origin", flow_origin},
        {"of_smoothness", fmt(opt.of_smoothness)},
        {"of_iterations", std::to_string(opt.of_iters)},
    };
    if (opt.flow_polar.size() == 2) {
        man.push_back({"flow_speed", fmt(opt.flow_polar[0])});
        man.push_back({"flow_direction_deg", fmt(opt.flow_polar[1])});
    }
    if (mask) {
        man.push_back({"downsample_g1", std::to_string(mask->g1)});
        man.push_back({"downsample_g2", std::to_string(mask->g2)});
    }
    write_manifest((fs::path(opt.out_dir) / "manifest.txt").string(), man);

    std::cout << "state: " << (fs::path(opt.out_dir) / "model_state.txt").string() << "\n";
    std::cout << "manifest: " << (fs::path(opt.out_dir) / "manifest.txt").string() << "\n";
    return 0;
}

// --- flow -------------------------------------------------------------------

int cmd_flow(const FitOptions& opt) {
    if (opt.data_dir.empty() || opt.out_dir.empty()) {
        std::cerr << "flow: --data and --out are required\n";
        return kExitConfig;
    }
    LoadedData data = load_data(opt);
    std::vector<Field> frames;
    const int limit = opt.train > 0 ? opt.train : static_cast<int>(data.streams.front().frames.size());
    for (int t = 0; t < limit && t < static_cast<int>(data.streams.front().frames.size()); ++t)
        frames.push_back(data.streams.front().frames[t].values);
    if (frames.size() < 2) throw std::runtime_error("empty data: need >= 2 frames for flow");

    OpticalFlowParams ofp;
    ofp.smoothness = opt.of_smoothness;
    ofp.iterations = opt.of_iters;
    FlowFields flow = estimate_optical_flow(frames, ofp);
    Field diff = derive_diffusivity(flow, 1.0 / data.grid.n1, 1.0 / data.grid.n2);

    fs::create_directories(opt.out_dir);
    write_csv_matrix((fs::path(opt.out_dir) / "vx.csv").string(), flow.vx);
    write_csv_matrix((fs::path(opt.out_dir) / "vy.csv").string(), flow.vy);
    write_csv_matrix((fs::path(opt.out_dir) / "diffusivity.csv").string(), diff.values());

    const double km_per_frac = 0.5 *
                               (std::abs(data.grid.step_lat) * data.grid.n1 +
                                std::abs(data.grid.step_lon) * data.grid.n2) *
                               111.32;
    const double per_hour = 3600.0 / opt.cadence;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int i = 0; i < data.grid.n1; ++i)
        for (int j = 0; j < data.grid.n2; ++j) {
            const double sp = std::hypot(flow.vx(i, j), flow.vy(i, j));
            lo = std::min(lo, sp);
            hi = std::max(hi, sp);
        }
    std::cout << "speed_min_kmh: " << lo * km_per_frac * per_hour << "\n";
    std::cout << "speed_max_kmh: " << hi * km_per_frac * per_hour << "\n";
    std::cout << "out: " << opt.out_dir << "\n";
    return 0;
}

// --- predict / eval ---------------------------------------------------------

struct PredictOptions {
    std::string fit_dir, out_dir, data_dir, reference;
    int horizon = 0;
    std::vector<int> horizons;  // eval: first last
};

int cmd_predict(const PredictOptions& opt) {
    if (opt.fit_dir.empty() || opt.out_dir.empty()) {
        std::cerr << "predict: --fit and --out are required\n";
        return kExitConfig;
    }
    if (opt.horizon < 0) {
        std::cerr << "predict: --horizon must be >= 0\n";
        return kExitConfig;
    }
    const FitArtifacts art = load_state((fs::path(opt.fit_dir) / "model_state.txt").string());
    const Eigen::MatrixXd basis = basis_matrix(art.grid.n1, art.grid.n2, art.k1, art.k2);

    fs::create_directories(opt.out_dir);
    std::vector<Prediction> preds =
        predict(art.theta_hat, [&](int) { return art.transition; }, opt.horizon, basis, art.grid,
                art.bias_augmented);

    char name[64];
    for (std::size_t j = 0; j < preds.size(); ++j) {
        ObservationFrame fr;
        fr.grid = art.grid;
        fr.timestamp = art.last_time + static_cast<std::int64_t>((j + 1) * art.cadence);
        fr.source_id = "predicted";
        fr.values = Field::from_values(preds[j].mean.values() + preds[j].bias.values());
        std::snprintf(name, sizeof(name), "pred_%04zu.fgrid", j + 1);
        write_fgrid_file((fs::path(opt.out_dir) / name).string(), fr);
        fr.source_id = "bias";
        fr.values = preds[j].bias;
        std::snprintf(name, sizeof(name), "bias_%04zu.fgrid", j + 1);
        write_fgrid_file((fs::path(opt.out_dir) / name).string(), fr);
    }
    if (opt.horizon == 0) {
        // k = 0: emit the fitted state itself.
        ObservationFrame fr;
        fr.grid = art.grid;
        fr.timestamp = art.last_time;
        fr.source_id = "predicted";
        Eigen::VectorXd total = art.theta_hat.head(art.q);
        if (art.bias_augmented) total += art.theta_hat.tail(art.q);
        fr.values = coeff_field(basis, total, art.grid);
        write_fgrid_file((fs::path(opt.out_dir) / "pred_0000.fgrid").string(), fr);
    }
    std::cout << "out: " << opt.out_dir << "\n";
    return 0;
}

int cmd_eval(const PredictOptions& opt) {
    if (opt.fit_dir.empty() || opt.out_dir.empty() || opt.data_dir.empty()) {
        std::cerr << "eval: --fit, --data and --out are required\n";
        return kExitConfig;
    }
    if (opt.horizons.size() != 2 || opt.horizons[0] > opt.horizons[1]) {
        std::cerr << "eval: --horizons takes FIRST LAST (ticks, 1-based)\n";
        return kExitConfig;
    }
    const FitArtifacts art = load_state((fs::path(opt.fit_dir) / "model_state.txt").string());
    if (opt.horizons[0] <= art.t_train) {
        std::cerr << "eval: horizons must lie beyond the " << art.t_train
                  << " training ticks\n";
        return kExitConfig;
    }

    std::vector<SourceStream> streams = load_streams(opt.data_dir);
    std::string ref_id = opt.reference;
    if (ref_id.empty()) {
        std::vector<std::string> candidates;
        for (const SourceStream& s : streams)
            if (s.source_id != "truth") candidates.push_back(s.source_id);
        if (candidates.size() != 1) {
            std::cerr << "eval: --reference required when several sources are present\n";
            return kExitConfig;
        }
        ref_id = candidates.front();
    }
    const SourceStream* ref = nullptr;
    for (const SourceStream& s : streams)
        if (s.source_id == ref_id) ref = &s;
    if (!ref) throw std::runtime_error("reference stream not found: " + ref_id);

    const Eigen::MatrixXd basis = basis_matrix(art.grid.n1, art.grid.n2, art.k1, art.k2);
    const int k = opt.horizons[1] - art.t_train;
    std::vector<Prediction> preds =
        predict(art.theta_hat, [&](int) { return art.transition; }, k, basis, art.grid,
                art.bias_augmented);

    fs::create_directories(opt.out_dir);
    std::vector<std::vector<double>> rows;
    char name[64];
    for (int h = opt.horizons[0]; h <= opt.horizons[1]; ++h) {
        const int j = h - art.t_train;  // forward steps
        const std::int64_t t = art.last_time + static_cast<std::int64_t>(j * art.cadence);
        const ObservationFrame* frame = nullptr;
        for (const ObservationFrame& f : ref->frames)
            if (std::llabs(f.timestamp - t) <= 30) frame = &f;
        if (!frame) throw std::runtime_error("eval: no reference frame at horizon " +
                                             std::to_string(h));
        const Field pred =
            Field::from_values(preds[j - 1].mean.values() + preds[j - 1].bias.values());
        const double mse = compute_mse(pred, frame->values);
        rows.push_back({static_cast<double>(h), mse});

        std::snprintf(name, sizeof(name), "pred_h%02d.pgm", h);
        write_pgm((fs::path(opt.out_dir) / name).string(), pred);
        std::snprintf(name, sizeof(name), "ref_h%02d.pgm", h);
        write_pgm((fs::path(opt.out_dir) / name).string(), frame->values);
        std::cout << "h" << h << " mse " << mse << "\n";
    }
    write_csv_table((fs::path(opt.out_dir) / "eval.csv").string(), {"horizon", "mse_vs_" + ref_id},
                    rows);
    std::cout << "csv: " << (fs::path(opt.out_dir) / "eval.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adstm: advection-diffusion spatio-temporal modeling of gridded data streams"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; flags override");

    SimulateOptions sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    c_sim->add_option("--preset", sim.preset, "table1 | two-source");
    c_sim->add_option("--out", sim.out_dir, "output directory");
    c_sim->add_option("--seed", sim.seed)->each([&](const std::string&) { sim.seed_set = true; });
    c_sim->add_option("--frames", sim.frames);
    c_sim->add_option("--n1", sim.n1);
    c_sim->add_option("--n2", sim.n2);
    c_sim->add_option("--speed", sim.speed, "flow speed, grid fraction per step");
    c_sim->add_option("--direction", sim.direction, "flow direction, degrees");
    c_sim->add_option("--noise-sd", sim.noise_sd);
    c_sim->add_option("--diffusivity", sim.diffusivity);
    c_sim->add_option("--substeps", sim.substeps);
    c_sim->add_option("--advection-order", sim.advection_order, "1 or 3");
    c_sim->add_option("--bump-sigma", sim.bump_sigma);
    c_sim->add_option("--bump-amplitude", sim.bump_amplitude);

    FitOptions fit;
    CLI::App* c_fit = app.add_subcommand("fit", "estimate the model from data streams");
    c_fit->add_option("--data", fit.data_dir);
    c_fit->add_option("--out", fit.out_dir);
    c_fit->add_option("--truncation", [&fit](const std::vector<std::string>& v) {
        if (v.size() != 2) return false;
        fit.k1 = std::stoi(v[0]);
        fit.k2 = std::stoi(v[1]);
        return true;
    }, "kappa1 kappa2")->expected(2);
    c_fit->add_option("--model", fit.model, "physics | data-driven");
    c_fit->add_option("--flow", fit.flow_polar, "SPEED DIRECTION_DEG (skip optical flow)")
        ->expected(2);
    c_fit->add_option("--iters", fit.iters);
    c_fit->add_option("--burn-in", fit.burn);
    c_fit->add_option("--seed", fit.seed)->each([&](const std::string&) { fit.seed_set = true; });
    c_fit->add_option("--downsample", fit.downsample, "G1 G2 uniform sub-grid")->expected(2);
    c_fit->add_option("--w-prior-scale", fit.w_scale);
    c_fit->add_option("--ig-a", fit.a);
    c_fit->add_option("--ig-b", fit.b);
    c_fit->add_option("--nu-extra", fit.nu_extra);
    c_fit->add_option("--c0", fit.c0);
    c_fit->add_option("--train", fit.train, "fit on the first N ticks only");
    c_fit->add_option("--bound-lo", fit.bound_lo);
    c_fit->add_option("--bound-hi", fit.bound_hi);
    c_fit->add_flag("--strict-bounds", fit.strict_bounds);
    c_fit->add_option("--cadence", fit.cadence);
    c_fit->add_option("--of-smoothness", fit.of_smoothness);
    c_fit->add_option("--of-iterations", fit.of_iters);

    FitOptions flw;
    CLI::App* c_flow = app.add_subcommand("flow", "estimate the velocity/diffusivity fields");
    c_flow->add_option("--data", flw.data_dir);
    c_flow->add_option("--out", flw.out_dir);
    c_flow->add_option("--train", flw.train, "use the first N frames");
    c_flow->add_option("--cadence", flw.cadence);
    c_flow->add_option("--of-smoothness", flw.of_smoothness);
    c_flow->add_option("--of-iterations", flw.of_iters);

    PredictOptions pred;
    CLI::App* c_pred = app.add_subcommand("predict", "k-step prediction from a saved fit");
    c_pred->add_option("--fit", pred.fit_dir);
    c_pred->add_option("--out", pred.out_dir);
    c_pred->add_option("--horizon", pred.horizon);

    PredictOptions ev;
    CLI::App* c_eval = app.add_subcommand("eval", "per-horizon prediction MSE table");
    c_eval->add_option("--fit", ev.fit_dir);
    c_eval->add_option("--data", ev.data_dir);
    c_eval->add_option("--out", ev.out_dir);
    c_eval->add_option("--horizons", ev.horizons, "FIRST LAST (1-based ticks)")->expected(2);
    c_eval->add_option("--reference", ev.reference, "reference stream id (or 'truth')");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (c_sim->parsed()) return cmd_simulate(sim);
        if (c_fit->parsed()) return cmd_fit(fit);
        if (c_flow->parsed()) return cmd_flow(flw);
        if (c_pred->parsed()) return cmd_predict(pred);
        if (c_eval->parsed()) return cmd_eval(ev);
    } catch (const FilterDivergence& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        if (what.rfind("empty data", 0) == 0) {
            std::cerr << what << "\n";
            return kExitEmptyData;
        }
        std::cerr << "io/runtime error: " << what << "\n";
        return kExitIo;
    }
    return 0;
}
