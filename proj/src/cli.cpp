#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "capanneal/baselines.hpp"
#include "capanneal/io.hpp"
#include "capanneal/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace capanneal {

namespace {

std::uint64_t default_seed() {
    if (const char* env = std::getenv("CAP_ANNEAL_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return v;
    }
    return 1;
}

struct AnnealFlags {
    std::string beta_init = "auto";
    double beta_growth = 1.05;
    std::string beta_max = "auto";
    double tol = 1e-10;
    int inner_max_iters = 1000;
    double perturb_eps = 0.01;
    double sigma = 1.0;
    std::uint64_t seed = default_seed();
    std::string typed_assoc = "restricted";
};

void add_anneal_flags(CLI::App* cmd, AnnealFlags& f) {
    cmd->add_option("--beta-init", f.beta_init, "initial beta, or 'auto'");
    cmd->add_option("--beta-growth", f.beta_growth, "geometric schedule factor (> 1)");
    cmd->add_option("--beta-max", f.beta_max, "final beta, or 'auto' (stop when hard)");
    cmd->add_option("--tol", f.tol, "inner fixed-point tolerance");
    cmd->add_option("--inner-max-iters", f.inner_max_iters, "inner iteration cap");
    cmd->add_option("--perturb-eps", f.perturb_eps, "perturbation size relative to diameter");
    cmd->add_option("--sigma", f.sigma, "spatial scaling factor");
    cmd->add_option("--seed", f.seed, "rng seed (env CAP_ANNEAL_SEED is the fallback)");
    cmd->add_option("--typed-assoc", f.typed_assoc, "typed association form")
        ->check(CLI::IsMember({"restricted", "pooled"}));
}

std::optional<double> parse_auto(const std::string& s, const char* flag) {
    if (s == "auto") return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (!end || *end != '\0')
        throw ParseError(std::string(flag) + ": expected a number or 'auto', got '" + s + "'");
    return v;
}

AnnealConfig to_config(const AnnealFlags& f) {
    AnnealConfig cfg;
    cfg.beta_init = parse_auto(f.beta_init, "--beta-init");
    cfg.beta_growth = f.beta_growth;
    cfg.beta_max = parse_auto(f.beta_max, "--beta-max");
    cfg.inner_tol = f.tol;
    cfg.inner_max_iters = f.inner_max_iters;
    cfg.perturb_eps = f.perturb_eps;
    cfg.sigma = f.sigma;
    cfg.rng_seed = f.seed;
    cfg.typed_assoc = f.typed_assoc == "pooled" ? TypedAssoc::pooled : TypedAssoc::restricted;
    cfg.check();
    return cfg;
}

void print_summary(const SolveReport& rep, const CapacitySpec& cap) {
    std::cout << std::setprecision(10);
    std::cout << rep.algorithm << ": k=" << rep.final_state.k()
              << " beta_final=" << rep.final_state.beta << " distortion=" << rep.distortion
              << " outer_steps=" << rep.trajectory.size() << "\n";
    if (cap.mode != CapacityMode::none)
        std::cout << "capacity residual: " << rep.residual << "\n";
    std::cout << "hard counts:";
    for (int c : rep.hard_counts) std::cout << " " << c;
    std::cout << "\n";
    if (!rep.converged) std::cout << "warning: " << rep.message << "\n";
}

void print_typed_masses(const SolveReport& rep, const CapacitySpec& cap) {
    const Matrix& lam = cap.lambda_matrix;
    const Matrix& got = rep.cluster_masses.per_type;
    std::cout << "per-type masses (target -> achieved):\n";
    std::cout << std::setprecision(6) << std::fixed;
    for (std::size_t j = 0; j < lam.rows; ++j) {
        std::cout << "  vehicle " << j << ":";
        for (std::size_t t = 0; t < lam.cols; ++t)
            std::cout << "  " << lam(j, t) << "->" << got(j, t);
        std::cout << "\n";
    }
    std::cout.unsetf(std::ios::fixed);
}

int exit_code(const SolveReport& rep) { return rep.converged ? 0 : 2; }

// ---- cluster ----------------------------------------------------------

struct ClusterOpts {
    std::string instance;
    std::string format;
    std::size_t k = 0;
    std::string mode = "auto";
    std::string capacities;
    std::string out;
    AnnealFlags flags;
};

int cmd_cluster(const ClusterOpts& o) {
    Instance inst = o.format.empty()
                        ? load_instance(o.instance)
                        : load_instance(o.instance, o.format == "csv" ? InstanceFormat::csv
                                                                      : InstanceFormat::json);
    CapacitySpec cap = inst.capacities;
    if (!o.capacities.empty()) cap = parse_capacities(o.capacities);

    if (o.mode == "none") {
        cap = CapacitySpec::unconstrained();
    } else if (o.mode == "sized" && cap.mode != CapacityMode::per_cluster) {
        throw ParseError("--mode sized requires a capacity vector (--capacities a,b,c)");
    } else if (o.mode == "typed" && cap.mode != CapacityMode::per_cluster_per_type) {
        throw ParseError("--mode typed requires a capacity matrix (--capacities a,b;c,d)");
    }

    std::size_t k = o.k;
    if (cap.mode != CapacityMode::none) {
        if (k != 0 && k != cap.cluster_count())
            throw ParseError("--k conflicts with the capacity spec size");
        k = cap.cluster_count();
    } else if (k == 0) {
        throw ParseError("--k is required without capacities");
    }

    SolveReport rep = anneal(inst.dataset, k, cap, to_config(o.flags));
    print_summary(rep, cap);
    if (cap.mode == CapacityMode::per_cluster_per_type) print_typed_masses(rep, cap);
    if (!o.out.empty()) write_report(rep, o.out, inst.dataset.size() <= 10000);
    return exit_code(rep);
}

// ---- segment ----------------------------------------------------------

struct SegmentOpts {
    std::string image;
    std::size_t k = 8;
    std::string pixelate;
    std::string out = ".";
    AnnealFlags flags;
};

int cmd_segment(const SegmentOpts& o) {
    RgbImage img = read_ppm(o.image);
    std::optional<PixelateSpec> pix;
    if (!o.pixelate.empty()) {
        auto at = o.pixelate.find('x');
        if (at == std::string::npos) throw ParseError("--pixelate expects WIDTHxHEIGHT");
        PixelateSpec spec;
        spec.width = static_cast<int>(std::strtol(o.pixelate.substr(0, at).c_str(), nullptr, 10));
        spec.height = static_cast<int>(std::strtol(o.pixelate.substr(at + 1).c_str(), nullptr, 10));
        if (spec.width < 1 || spec.height < 1) throw ParseError("--pixelate expects WIDTHxHEIGHT");
        pix = spec;
    }

    SegmentResult res = segment_image(img, o.k, to_config(o.flags), pix);
    fs::create_directories(o.out);
    write_ppm(res.segmented, (fs::path(o.out) / "segmented.ppm").string());
    if (res.pixelated) write_ppm(*res.pixelated, (fs::path(o.out) / "pixelated.ppm").string());

    json pal;
    pal["palette"] = json::array();
    for (const auto& c : res.palette) pal["palette"].push_back({c.r, c.g, c.b});
    pal["pixel_count"] = res.pixel_count;
    pal["distinct_colors"] = res.distinct_colors;
    pal["distortion"] = res.report.distortion;
    pal["compression_factor_palette"] = res.compression_factor_palette;
    pal["compression_factor_indexed"] = res.compression_factor_indexed;
    {
        std::ofstream out(fs::path(o.out) / "palette.json");
        out << pal.dump(2) << "\n";
    }
    write_report(res.report, o.out, res.distinct_colors <= 4096);

    std::cout << std::setprecision(10) << "segment: " << res.pixel_count << " pixels, "
              << res.distinct_colors << " distinct colors, palette " << res.palette.size()
              << ", distortion " << res.report.distortion << ", compression x"
              << res.compression_factor_palette << " (palette accounting)\n";
    return exit_code(res.report);
}

// ---- pickup -----------------------------------------------------------

struct PickupOpts {
    std::string instance;
    bool generate = false;
    std::vector<int> type_counts = {34, 36, 30};
    std::size_t vehicles = 10;
    double horizon = 24.0;
    std::string capacities;
    std::string out;
    AnnealFlags flags;
};

PickupInstance load_pickup_file(const PickupOpts& o) {
    PickupInstance pi;
    if (detect_format(o.instance) == InstanceFormat::json) {
        std::ifstream in(o.instance);
        if (!in) throw ParseError(o.instance + ": cannot open file");
        json j;
        try {
            j = json::parse(in);
            if (!j.contains("windows") || !j.contains("types"))
                throw ParseError(o.instance + ": pickup instances need 'windows' and 'types'");
            for (const auto& w : j["windows"])
                pi.windows.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
            std::vector<int> types;
            for (const auto& t : j["types"]) types.push_back(t.get<int>() - 1);
            Matrix mid(pi.windows.size(), 1);
            for (std::size_t i = 0; i < pi.windows.size(); ++i)
                mid(i, 0) = 0.5 * (pi.windows[i].first + pi.windows[i].second);
            pi.dataset = validate_dataset(std::move(mid), {}, std::move(types));
            if (j.contains("capacities")) {
                const json& cap = j["capacities"];
                if (!cap.is_array() || cap.empty() || !cap.front().is_array())
                    throw ParseError(o.instance + ": pickup capacities must be a matrix");
                Matrix lambda(cap.size(), cap.front().size());
                for (std::size_t jj = 0; jj < cap.size(); ++jj)
                    for (std::size_t t = 0; t < lambda.cols; ++t)
                        lambda(jj, t) = cap[jj].at(t).get<double>();
                pi.capacities = CapacitySpec::typed(std::move(lambda));
            }
        } catch (const json::exception& e) {
            throw ParseError(o.instance + ": " + e.what());
        }
    } else {
        // CSV pickup schema: t_start,t_end,type
        std::ifstream in(o.instance);
        if (!in) throw ParseError(o.instance + ": cannot open file");
        std::string line;
        if (!std::getline(in, line) || line.find("t_start") == std::string::npos)
            throw ParseError(o.instance + ":1: expected header t_start,t_end,type");
        int lineno = 1;
        std::vector<int> types;
        std::vector<double> mids;
        while (std::getline(in, line)) {
            lineno++;
            if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            std::istringstream row(line);
            std::string a, b, c;
            if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c))
                throw ParseError(o.instance + ":" + std::to_string(lineno) + ": expected 3 fields");
            double s = std::strtod(a.c_str(), nullptr);
            double e = std::strtod(b.c_str(), nullptr);
            pi.windows.emplace_back(s, e);
            mids.push_back(0.5 * (s + e));
            types.push_back(static_cast<int>(std::strtol(c.c_str(), nullptr, 10)) - 1);
        }
        Matrix mid(mids.size(), 1);
        mid.data = std::move(mids);
        pi.dataset = validate_dataset(std::move(mid), {}, std::move(types));
    }
    return pi;
}

int cmd_pickup(const PickupOpts& o) {
    PickupInstance pi;
    if (o.generate || o.instance.empty()) {
        std::size_t n = 0;
        for (int c : o.type_counts) n += static_cast<std::size_t>(c);
        std::cout << "generating " << n << " shipments of " << o.type_counts.size()
                  << " types for " << o.vehicles << " vehicles (seed " << o.flags.seed << ")\n";
        pi = generate_pickup(o.type_counts, o.vehicles, o.flags.seed, o.horizon);
    } else {
        pi = load_pickup_file(o);
    }
    if (!o.capacities.empty()) pi.capacities = parse_capacities(o.capacities);
    if (pi.capacities.mode != CapacityMode::per_cluster_per_type)
        throw ParseError("pickup requires a typed capacity matrix");

    AnnealConfig cfg = to_config(o.flags);
    if (!cfg.beta_max) {
        // fractional capacities keep boundary shipments split, so the entropy
        // stop never fires; bound the schedule a few decades past the start
        double b0 = cfg.beta_init ? *cfg.beta_init : auto_beta_init(pi.dataset);
        cfg.beta_max = 1000.0 * b0;
    }
    SolveReport rep = anneal(pi.dataset, pi.capacities.cluster_count(), pi.capacities, cfg);
    print_summary(rep, pi.capacities);
    print_typed_masses(rep, pi.capacities);

    if (!o.out.empty()) {
        write_report(rep, o.out, pi.dataset.size() <= 10000);
        std::ofstream wout(fs::path(o.out) / "windows.csv");
        wout << "shipment,t_start,t_end,type,midpoint,cluster\n";
        wout << std::setprecision(17);
        for (std::size_t i = 0; i < pi.windows.size(); ++i)
            wout << i << "," << pi.windows[i].first << "," << pi.windows[i].second << ","
                 << pi.dataset.types[i] + 1 << "," << pi.dataset.points(i, 0) << ","
                 << rep.partition[i] << "\n";
    }
    return exit_code(rep);
}

// ---- bench ------------------------------------------------------------

struct BenchOpts {
    std::vector<std::string> instances;
    std::size_t n = 8;
    std::size_t k = 2;
    int count = 5;
    int lloyd_restarts = 10;
    AnnealFlags flags;
};

Dataset random_uniform_points(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix pts(n, d);
    for (double& v : pts.data) v = unit(rng);
    return validate_dataset(std::move(pts));
}

double lloyd_median(const Dataset& ds, std::size_t k, int restarts, std::mt19937_64& rng) {
    std::vector<double> costs;
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int r = 0; r < restarts; ++r) {
        std::shuffle(idx.begin(), idx.end(), rng);
        Matrix init(k, ds.dim());
        for (std::size_t j = 0; j < k; ++j)
            std::copy(ds.point(idx[j]), ds.point(idx[j]) + ds.dim(), init.row(j));
        costs.push_back(lloyd(ds, k, init).distortion);
    }
    std::sort(costs.begin(), costs.end());
    std::size_t m = costs.size();
    return m % 2 ? costs[m / 2] : 0.5 * (costs[m / 2 - 1] + costs[m / 2]);
}

void bench_one(const std::string& name, const Dataset& ds, const CapacitySpec& cap,
               std::size_t k, const BenchOpts& o, std::uint64_t seed) {
    AnnealFlags f = o.flags;
    f.seed = seed;
    AnnealConfig cfg = to_config(f);

    SolveReport da = anneal(ds, k, CapacitySpec::unconstrained(), cfg);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    double lmed = lloyd_median(ds, k, o.lloyd_restarts, rng);

    double bf = std::numeric_limits<double>::quiet_NaN();
    double combos = std::pow(static_cast<double>(k), static_cast<double>(ds.size()));
    if (combos <= 1e7) bf = brute_force_unconstrained(ds, k).best_cost;

    double da_resid = std::numeric_limits<double>::quiet_NaN();
    double fixed_resid = std::numeric_limits<double>::quiet_NaN();
    if (cap.mode == CapacityMode::per_cluster) {
        da_resid = anneal(ds, k, cap, cfg).residual;
        fixed_resid = fixed_eta_da(ds, cap, cfg).residual;
    }

    std::cout << std::left << std::setw(16) << name << std::right << std::setw(5) << ds.size()
              << std::setw(4) << k << std::setprecision(6) << std::setw(13) << da.distortion
              << std::setw(13) << lmed << std::setw(13) << bf << std::setw(13) << da_resid
              << std::setw(13) << fixed_resid << "\n";
}

int cmd_bench(const BenchOpts& o) {
    std::cout << std::left << std::setw(16) << "instance" << std::right << std::setw(5) << "N"
              << std::setw(4) << "K" << std::setw(13) << "DA" << std::setw(13) << "lloyd_med"
              << std::setw(13) << "brute" << std::setw(13) << "DA_resid" << std::setw(13)
              << "fixed_resid" << "\n";
    if (o.instances.empty()) {
        for (int i = 0; i < o.count; ++i) {
            std::uint64_t seed = o.flags.seed + static_cast<std::uint64_t>(i);
            std::mt19937_64 rng(seed);
            Dataset ds = random_uniform_points(o.n, 2, rng);
            // random positive capacity shares so the residual columns mean something
            std::uniform_real_distribution<double> share(0.5, 1.5);
            std::vector<double> lam(o.k);
            for (double& v : lam) v = share(rng);
            CapacitySpec cap = CapacitySpec::sized(lam);
            bench_one("gen-" + std::to_string(i), ds, cap, o.k, o, seed);
        }
    } else {
        for (const auto& path : o.instances) {
            Instance inst = load_instance(path);
            std::size_t k = inst.capacities.mode != CapacityMode::none
                                ? inst.capacities.cluster_count()
                                : o.k;
            bench_one(fs::path(path).filename().string(), inst.dataset, inst.capacities, k, o,
                      o.flags.seed);
        }
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"capacity-constrained deterministic annealing"};
    app.require_subcommand(1);

    ClusterOpts cl;
    CLI::App* cluster_cmd = app.add_subcommand("cluster", "solve a clustering instance");
    cluster_cmd->add_option("instance", cl.instance, "instance file (.csv or .json)")->required();
    cluster_cmd->add_option("--format", cl.format)->check(CLI::IsMember({"csv", "json"}));
    cluster_cmd->add_option("--k", cl.k, "cluster count (implied by capacities)");
    cluster_cmd->add_option("--mode", cl.mode, "constraint mode")
        ->check(CLI::IsMember({"auto", "none", "sized", "typed"}));
    cluster_cmd->add_option("--capacities", cl.capacities, "inline list/matrix or JSON file");
    cluster_cmd->add_option("--out", cl.out, "report directory");
    add_anneal_flags(cluster_cmd, cl.flags);

    SegmentOpts seg;
    CLI::App* segment_cmd = app.add_subcommand("segment", "cluster an image's colors");
    segment_cmd->add_option("image", seg.image, "input .ppm (P3 or P6)")->required();
    segment_cmd->add_option("--k", seg.k, "palette size");
    segment_cmd->add_option("--pixelate", seg.pixelate, "also emit a WxH pixel-art image");
    segment_cmd->add_option("--out", seg.out, "output directory");
    add_anneal_flags(segment_cmd, seg.flags);

    PickupOpts pu;
    CLI::App* pickup_cmd = app.add_subcommand("pickup", "typed vehicle-to-shipment allocation");
    pickup_cmd->add_option("instance", pu.instance, "pickup instance (.csv or .json)");
    pickup_cmd->add_flag("--generate", pu.generate, "generate a random instance");
    pickup_cmd->add_option("--type-counts", pu.type_counts, "shipments per type")->delimiter(',');
    pickup_cmd->add_option("--vehicles", pu.vehicles, "vehicle count");
    pickup_cmd->add_option("--horizon", pu.horizon, "day length for generated windows");
    pickup_cmd->add_option("--capacities", pu.capacities, "typed capacity matrix");
    pickup_cmd->add_option("--out", pu.out, "report directory");
    add_anneal_flags(pickup_cmd, pu.flags);

    BenchOpts be;
    CLI::App* bench_cmd = app.add_subcommand("bench", "compare DA, Lloyd, fixed-eta and oracles");
    bench_cmd->add_option("instances", be.instances, "instance files (generated if omitted)");
    bench_cmd->add_option("--n", be.n, "points per generated instance");
    bench_cmd->add_option("--k", be.k, "clusters");
    bench_cmd->add_option("--instances-count", be.count, "number of generated instances");
    bench_cmd->add_option("--lloyd-restarts", be.lloyd_restarts, "Lloyd restarts per instance");
    add_anneal_flags(bench_cmd, be.flags);

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("capanneal");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*cluster_cmd) return cmd_cluster(cl);
        if (*segment_cmd) return cmd_segment(seg);
        if (*pickup_cmd) return cmd_pickup(pu);
        if (*bench_cmd) return cmd_bench(be);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace capanneal
