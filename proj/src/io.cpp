#include "capanneal/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace capanneal {

namespace {

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& raw, const std::string& where) {
    std::string s = trim(raw);
    if (s.empty()) throw ParseError(where + ": empty numeric field");
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw ParseError(where + ": bad number '" + s + "'");
    return v;
}

long parse_long(const std::string& raw, const std::string& where) {
    std::string s = trim(raw);
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size())
        throw ParseError(where + ": bad integer '" + s + "'");
    return v;
}

Instance load_instance_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::vector<std::string> header = split(trim(line), ',');
    for (auto& h : header) h = trim(h);

    std::size_t d = 0;
    while (d < header.size() && header[d] == "x" + std::to_string(d + 1)) d++;
    if (d == 0) throw ParseError(path + ":1: header must start with x1..xd");
    std::size_t col = d;
    bool has_w = col < header.size() && header[col] == "w";
    if (has_w) col++;
    bool has_type = col < header.size() && header[col] == "type";
    if (has_type) col++;
    if (col != header.size())
        throw ParseError(path + ":1: unexpected column '" + header[col] + "'");

    std::vector<double> coords, weights;
    std::vector<int> types;
    std::size_t n = 0;
    int lineno = 1;
    while (std::getline(in, line)) {
        lineno++;
        if (trim(line).empty()) continue;
        std::vector<std::string> f = split(line, ',');
        if (f.size() != header.size())
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(f.size()));
        std::string where = path + ":" + std::to_string(lineno);
        for (std::size_t c = 0; c < d; ++c) coords.push_back(parse_double(f[c], where));
        std::size_t at = d;
        if (has_w) weights.push_back(parse_double(f[at++], where));
        if (has_type) {
            long t = parse_long(f[at], where);
            if (t < 1) throw ParseError(where + ": type labels are 1-based");
            types.push_back(static_cast<int>(t - 1));
        }
        n++;
    }
    if (n == 0) throw ParseError(path + ": no data rows");

    Matrix points(n, d);
    points.data = std::move(coords);
    Instance inst;
    try {
        inst.dataset = validate_dataset(std::move(points), std::move(weights), std::move(types));
    } catch (const std::invalid_argument& e) {
        throw ParseError(path + ": " + e.what());
    }
    return inst;
}

CapacitySpec capacities_from_json(const json& cap, const std::string& where) {
    if (!cap.is_array() || cap.empty()) throw ParseError(where + ": capacities must be an array");
    if (cap.front().is_array()) {
        std::size_t k = cap.size();
        std::size_t p = cap.front().size();
        Matrix lambda(k, p);
        for (std::size_t j = 0; j < k; ++j) {
            if (!cap[j].is_array() || cap[j].size() != p)
                throw ParseError(where + ": ragged capacity matrix");
            for (std::size_t t = 0; t < p; ++t) lambda(j, t) = cap[j][t].get<double>();
        }
        return CapacitySpec::typed(std::move(lambda));
    }
    return CapacitySpec::sized(cap.get<std::vector<double>>());
}

Instance load_instance_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        if (!j.contains("points")) throw ParseError(path + ": missing 'points'");
        const json& pts = j["points"];
        if (!pts.is_array() || pts.empty()) throw ParseError(path + ": 'points' must be nonempty");
        std::size_t n = pts.size();
        std::size_t d = pts.front().is_array() ? pts.front().size() : 1;
        Matrix points(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            if (pts[i].is_array()) {
                if (pts[i].size() != d) throw ParseError(path + ": ragged 'points'");
                for (std::size_t c = 0; c < d; ++c) points(i, c) = pts[i][c].get<double>();
            } else {
                if (d != 1) throw ParseError(path + ": ragged 'points'");
                points(i, 0) = pts[i].get<double>();
            }
        }
        std::vector<double> weights;
        if (j.contains("weights")) weights = j["weights"].get<std::vector<double>>();
        std::vector<int> types;
        if (j.contains("types")) {
            for (const auto& t : j["types"]) {
                long label = t.get<long>();
                if (label < 1) throw ParseError(path + ": type labels are 1-based");
                types.push_back(static_cast<int>(label - 1));
            }
        }
        Instance inst;
        inst.dataset = validate_dataset(std::move(points), std::move(weights), std::move(types));
        if (j.contains("capacities")) inst.capacities = capacities_from_json(j["capacities"], path);
        return inst;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(path + ": " + e.what());
    }
}

json capacities_to_json(const CapacitySpec& cap) {
    if (cap.mode == CapacityMode::per_cluster) return json(cap.lambda);
    json rows = json::array();
    for (std::size_t j = 0; j < cap.lambda_matrix.rows; ++j) {
        json row = json::array();
        for (std::size_t t = 0; t < cap.lambda_matrix.cols; ++t)
            row.push_back(cap.lambda_matrix(j, t));
        rows.push_back(std::move(row));
    }
    return rows;
}

// PPM token reader: whitespace separated, '#' starts a comment to end of line.
std::string next_ppm_token(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF) throw ParseError(path + ": truncated header");
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
        tok += static_cast<char>(c);
        c = in.get();
    }
    return tok;
}

int ppm_int(std::istream& in, const std::string& path) {
    std::string tok = next_ppm_token(in, path);
    return static_cast<int>(parse_long(tok, path));
}

}  // namespace

InstanceFormat detect_format(const std::string& path) {
    auto ext = fs::path(path).extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext == ".csv") return InstanceFormat::csv;
    if (ext == ".json") return InstanceFormat::json;
    throw ParseError(path + ": cannot infer format from extension (use .csv or .json)");
}

Instance load_instance(const std::string& path, InstanceFormat format) {
    return format == InstanceFormat::csv ? load_instance_csv(path) : load_instance_json(path);
}

Instance load_instance(const std::string& path) {
    return load_instance(path, detect_format(path));
}

void write_instance_csv(const Instance& inst, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError(path + ": cannot open for writing");
    const Dataset& ds = inst.dataset;
    for (std::size_t c = 0; c < ds.dim(); ++c) out << (c ? "," : "") << "x" << c + 1;
    out << ",w";
    if (ds.typed()) out << ",type";
    out << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t c = 0; c < ds.dim(); ++c) out << (c ? "," : "") << fmt_g17(ds.points(i, c));
        out << "," << fmt_g17(ds.weights[i]);
        if (ds.typed()) out << "," << ds.types[i] + 1;
        out << "\n";
    }
}

void write_instance_json(const Instance& inst, const std::string& path) {
    const Dataset& ds = inst.dataset;
    json j;
    json pts = json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        json row = json::array();
        for (std::size_t c = 0; c < ds.dim(); ++c) row.push_back(ds.points(i, c));
        pts.push_back(std::move(row));
    }
    j["points"] = std::move(pts);
    j["weights"] = ds.weights;
    if (ds.typed()) {
        json t = json::array();
        for (int label : ds.types) t.push_back(label + 1);
        j["types"] = std::move(t);
    }
    if (inst.capacities.mode != CapacityMode::none)
        j["capacities"] = capacities_to_json(inst.capacities);
    std::ofstream out(path);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << j.dump(2) << "\n";
}

CapacitySpec parse_capacities(const std::string& inline_or_path) {
    if (fs::exists(inline_or_path)) {
        std::ifstream in(inline_or_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ParseError(inline_or_path + ": " + e.what());
        }
        return capacities_from_json(j, inline_or_path);
    }
    try {
        std::vector<std::string> rows = split(inline_or_path, ';');
        if (rows.size() == 1) {
            std::vector<double> lambda;
            for (const auto& f : split(rows[0], ','))
                lambda.push_back(parse_double(f, "capacities"));
            return CapacitySpec::sized(std::move(lambda));
        }
        std::size_t p = split(rows[0], ',').size();
        Matrix lambda(rows.size(), p);
        for (std::size_t j = 0; j < rows.size(); ++j) {
            std::vector<std::string> f = split(rows[j], ',');
            if (f.size() != p) throw ParseError("capacities: ragged matrix rows");
            for (std::size_t t = 0; t < p; ++t) lambda(j, t) = parse_double(f[t], "capacities");
        }
        return CapacitySpec::typed(std::move(lambda));
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("capacities: ") + e.what());
    }
}

RgbImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string magic = next_ppm_token(in, path);
    if (magic != "P3" && magic != "P6")
        throw ParseError(path + ": unsupported format '" + magic + "' (need P3 or P6)");
    int w = ppm_int(in, path);
    int h = ppm_int(in, path);
    int maxval = ppm_int(in, path);
    if (w < 1 || h < 1) throw ParseError(path + ": bad dimensions");
    if (maxval != 255) throw ParseError(path + ": unsupported maxval " + std::to_string(maxval));

    RgbImage img;
    img.width = w;
    img.height = h;
    std::size_t count = static_cast<std::size_t>(w) * h * 3;
    img.pixels.resize(count);
    if (magic == "P6") {
        // exactly one whitespace byte separates the header from the raster
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count)
            throw ParseError(path + ": truncated pixel data");
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            int v = ppm_int(in, path);
            if (v < 0 || v > 255) throw ParseError(path + ": sample out of range");
            img.pixels[i] = static_cast<std::uint8_t>(v);
        }
    }
    return img;
}

void write_ppm(const RgbImage& img, const std::string& path) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw std::invalid_argument("malformed image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

SegmentResult segment_image(const RgbImage& img, std::size_t k, const AnnealConfig& cfg,
                            std::optional<PixelateSpec> pixelate) {
    if (img.width < 1 || img.height < 1) throw std::invalid_argument("empty image");
    if (k == 0) throw std::invalid_argument("k must be positive");
    const std::size_t n_pixels = static_cast<std::size_t>(img.width) * img.height;

    // Aggregate duplicate colors into weighted demand points; the packed-key
    // map fixes a deterministic color order.
    std::map<std::uint32_t, double> color_count;
    for (std::size_t i = 0; i < n_pixels; ++i) {
        const std::uint8_t* px = img.pixels.data() + 3 * i;
        std::uint32_t packed = (static_cast<std::uint32_t>(px[0]) << 16) |
                               (static_cast<std::uint32_t>(px[1]) << 8) | px[2];
        color_count[packed] += 1.0;
    }
    const std::size_t distinct = color_count.size();
    if (k > distinct)
        throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the " +
                                    std::to_string(distinct) + " distinct colors");

    Matrix points(distinct, 3);
    std::vector<double> weights(distinct);
    std::map<std::uint32_t, std::size_t> row_of;
    std::size_t row = 0;
    for (const auto& [packed, count] : color_count) {
        points(row, 0) = static_cast<double>((packed >> 16) & 0xff) / 255.0;
        points(row, 1) = static_cast<double>((packed >> 8) & 0xff) / 255.0;
        points(row, 2) = static_cast<double>(packed & 0xff) / 255.0;
        weights[row] = count;
        row_of[packed] = row++;
    }
    Dataset ds = validate_dataset(std::move(points), std::move(weights));

    AnnealConfig run_cfg = cfg;
    // Hard stop for color data: knife-edge colors between two superpixels can
    // keep the auto entropy criterion from firing.
    if (!run_cfg.beta_max) run_cfg.beta_max = 1e6;

    SegmentResult res;
    res.report = anneal(ds, k, CapacitySpec::unconstrained(), run_cfg);
    res.pixel_count = n_pixels;
    res.distinct_colors = distinct;

    auto to_byte = [](double v) {
        long b = std::lround(v * 255.0);
        return static_cast<std::uint8_t>(std::clamp(b, 0L, 255L));
    };
    std::vector<RgbTriple> cluster_color(k);
    for (std::size_t j = 0; j < k; ++j) {
        cluster_color[j] = {to_byte(res.report.final_state.locations(j, 0)),
                            to_byte(res.report.final_state.locations(j, 1)),
                            to_byte(res.report.final_state.locations(j, 2))};
    }
    // Coincident clusters can round to the same color; keep the palette distinct.
    std::vector<std::size_t> palette_of(k);
    for (std::size_t j = 0; j < k; ++j) {
        const RgbTriple& c = cluster_color[j];
        std::size_t at = res.palette.size();
        for (std::size_t q = 0; q < res.palette.size(); ++q)
            if (res.palette[q].r == c.r && res.palette[q].g == c.g && res.palette[q].b == c.b) {
                at = q;
                break;
            }
        if (at == res.palette.size()) res.palette.push_back(c);
        palette_of[j] = at;
    }

    res.segmented.width = img.width;
    res.segmented.height = img.height;
    res.segmented.pixels.resize(img.pixels.size());
    for (std::size_t i = 0; i < n_pixels; ++i) {
        const std::uint8_t* px = img.pixels.data() + 3 * i;
        std::uint32_t packed = (static_cast<std::uint32_t>(px[0]) << 16) |
                               (static_cast<std::uint32_t>(px[1]) << 8) | px[2];
        auto cluster = static_cast<std::size_t>(res.report.partition[row_of[packed]]);
        const RgbTriple& c = res.palette[palette_of[cluster]];
        std::uint8_t* q = res.segmented.pixels.data() + 3 * i;
        q[0] = c.r;
        q[1] = c.g;
        q[2] = c.b;
    }

    if (pixelate) {
        if (pixelate->width < 1 || pixelate->height < 1)
            throw std::invalid_argument("pixelate dimensions must be positive");
        RgbImage small;
        small.width = pixelate->width;
        small.height = pixelate->height;
        small.pixels.resize(static_cast<std::size_t>(small.width) * small.height * 3);
        for (int by = 0; by < small.height; ++by) {
            int y0 = by * img.height / small.height;
            int y1 = std::max((by + 1) * img.height / small.height, y0 + 1);
            for (int bx = 0; bx < small.width; ++bx) {
                int x0 = bx * img.width / small.width;
                int x1 = std::max((bx + 1) * img.width / small.width, x0 + 1);
                double acc[3] = {0, 0, 0};
                int cnt = 0;
                for (int y = y0; y < std::min(y1, img.height); ++y)
                    for (int x = x0; x < std::min(x1, img.width); ++x) {
                        const std::uint8_t* px = img.pixel(x, y);
                        acc[0] += px[0];
                        acc[1] += px[1];
                        acc[2] += px[2];
                        cnt++;
                    }
                for (double& a : acc) a /= cnt;
                // snap the block average to the nearest palette color
                std::size_t best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t q = 0; q < res.palette.size(); ++q) {
                    double dr = acc[0] - res.palette[q].r;
                    double dg = acc[1] - res.palette[q].g;
                    double db = acc[2] - res.palette[q].b;
                    double dist = dr * dr + dg * dg + db * db;
                    if (dist < best_d) {
                        best_d = dist;
                        best = q;
                    }
                }
                std::uint8_t* out = small.pixel(bx, by);
                out[0] = res.palette[best].r;
                out[1] = res.palette[best].g;
                out[2] = res.palette[best].b;
            }
        }
        res.pixelated = std::move(small);
    }

    double n = static_cast<double>(n_pixels);
    double kk = static_cast<double>(k);
    res.compression_factor_palette = n / kk;
    double index_bits = k > 1 ? std::ceil(std::log2(kk)) : 0.0;
    res.compression_factor_indexed = 3.0 * n / (3.0 * kk + n * index_bits / 8.0);
    return res;
}

void write_report(const SolveReport& report, const std::string& dir, bool include_assoc) {
    fs::create_directories(dir);
    const std::size_t k = report.final_state.k();

    json j;
    j["algorithm"] = report.algorithm;
    j["beta_final"] = report.final_state.beta;
    j["cluster_count"] = k;
    j["converged"] = report.converged;
    j["distortion"] = report.distortion;
    j["message"] = report.message;
    j["seed"] = report.seed;
    j["residual"] = std::isnan(report.residual) ? json() : json(report.residual);

    switch (report.final_state.eta_mode) {
        case CapacityMode::none: j["mode"] = "none"; break;
        case CapacityMode::per_cluster: j["mode"] = "sized"; break;
        case CapacityMode::per_cluster_per_type: j["mode"] = "typed"; break;
    }

    json locs = json::array();
    for (std::size_t jj = 0; jj < k; ++jj) {
        json row = json::array();
        for (std::size_t c = 0; c < report.final_state.dim(); ++c)
            row.push_back(report.final_state.locations(jj, c));
        locs.push_back(std::move(row));
    }
    j["locations"] = std::move(locs);

    if (report.final_state.eta_mode == CapacityMode::none) {
        j["eta"] = json();
    } else {
        const Matrix& le = report.final_state.log_eta;
        if (le.cols == 1) {
            json eta = json::array();
            for (std::size_t jj = 0; jj < k; ++jj) eta.push_back(std::exp(le(jj, 0)));
            j["eta"] = std::move(eta);
        } else {
            json eta = json::array();
            for (std::size_t jj = 0; jj < k; ++jj) {
                json row = json::array();
                for (std::size_t t = 0; t < le.cols; ++t) row.push_back(std::exp(le(jj, t)));
                eta.push_back(std::move(row));
            }
            j["eta"] = std::move(eta);
        }
    }

    j["masses"]["per_cluster"] = report.cluster_masses.per_cluster;
    if (report.cluster_masses.per_type.empty()) {
        j["masses"]["per_type"] = json();
    } else {
        json rows = json::array();
        for (std::size_t jj = 0; jj < report.cluster_masses.per_type.rows; ++jj) {
            json row = json::array();
            for (std::size_t t = 0; t < report.cluster_masses.per_type.cols; ++t)
                row.push_back(report.cluster_masses.per_type(jj, t));
            rows.push_back(std::move(row));
        }
        j["masses"]["per_type"] = std::move(rows);
    }
    j["hard_counts"] = report.hard_counts;

    const AnnealConfig& cfg = report.config;
    j["config"]["beta_init"] = cfg.beta_init ? json(*cfg.beta_init) : json("auto");
    j["config"]["beta_growth"] = cfg.beta_growth;
    j["config"]["beta_max"] = cfg.beta_max ? json(*cfg.beta_max) : json("auto");
    j["config"]["inner_tol"] = cfg.inner_tol;
    j["config"]["inner_max_iters"] = cfg.inner_max_iters;
    j["config"]["perturb_eps"] = cfg.perturb_eps;
    j["config"]["sigma"] = cfg.sigma;
    j["config"]["rng_seed"] = cfg.rng_seed;
    j["config"]["max_outer_iters"] = cfg.max_outer_iters;
    j["config"]["typed_assoc"] =
        cfg.typed_assoc == TypedAssoc::restricted ? "restricted" : "pooled";

    {
        std::ofstream out(fs::path(dir) / "solution.json");
        if (!out) throw ParseError(dir + ": cannot write solution.json");
        out << j.dump(2) << "\n";
    }

    {
        std::ofstream out(fs::path(dir) / "assignments.csv");
        if (!out) throw ParseError(dir + ": cannot write assignments.csv");
        out << "point,cluster";
        if (include_assoc)
            for (std::size_t jj = 0; jj < k; ++jj) out << ",p" << jj;
        out << "\n";
        for (std::size_t i = 0; i < report.partition.size(); ++i) {
            out << i << "," << report.partition[i];
            if (include_assoc)
                for (std::size_t jj = 0; jj < k; ++jj)
                    out << "," << fmt_g17(report.final_assoc(i, jj));
            out << "\n";
        }
    }

    {
        std::ofstream out(fs::path(dir) / "trajectory.csv");
        if (!out) throw ParseError(dir + ": cannot write trajectory.csv");
        out << "beta,free_energy,distortion,entropy,residual,inner_iters\n";
        for (const auto& rec : report.trajectory) {
            out << fmt_g17(rec.beta) << "," << fmt_g17(rec.free_energy) << ","
                << fmt_g17(rec.distortion) << "," << fmt_g17(rec.entropy) << ","
                << fmt_g17(rec.residual) << "," << rec.inner_iters << "\n";
        }
    }
}

}  // namespace capanneal
