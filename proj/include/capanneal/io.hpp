#ifndef CAPANNEAL_IO_HPP
#define CAPANNEAL_IO_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capanneal/core.hpp"
#include "capanneal/solver.hpp"

namespace capanneal {

/// Parse/format failure with file location where available.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct Instance {
    Dataset dataset;
    CapacitySpec capacities;  // mode none when the file carries no capacities
};

enum class InstanceFormat { csv, json };

// Infers csv/json from the file extension; throws ParseError otherwise.
InstanceFormat detect_format(const std::string& path);

// CSV: header x1..xd plus optional w and type columns (types are 1-based in
// files). JSON: object with "points" and optional "weights", "types",
// "capacities" (vector or K x p matrix, normalized on load).
Instance load_instance(const std::string& path, InstanceFormat format);
Instance load_instance(const std::string& path);

void write_instance_csv(const Instance& inst, const std::string& path);
void write_instance_json(const Instance& inst, const std::string& path);

// "a,b,c" -> sized spec; "a,b;c,d" -> typed K-row matrix; a path to a JSON
// file with an array or array of arrays is also accepted.
CapacitySpec parse_capacities(const std::string& inline_or_path);

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGB triples

    std::uint8_t* pixel(int x, int y) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
    const std::uint8_t* pixel(int x, int y) const {
        return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }
};

// P3 (ASCII) or P6 (binary) portable pixmaps with maxval 255.
RgbImage read_ppm(const std::string& path);
// Always emits P6; write then read is the identity.
void write_ppm(const RgbImage& img, const std::string& path);

struct RgbTriple {
    std::uint8_t r = 0, g = 0, b = 0;
};

struct SegmentResult {
    RgbImage segmented;
    std::optional<RgbImage> pixelated;
    std::vector<RgbTriple> palette;  // distinct colors, at most k
    SolveReport report;              // solve over the aggregated color dataset
    std::size_t pixel_count = 0;
    std::size_t distinct_colors = 0;
    double compression_factor_palette = 0.0;  // 3N / 3K accounting
    double compression_factor_indexed = 0.0;  // includes the index map
};

struct PixelateSpec {
    int width = 0;
    int height = 0;
};

// Clusters pixel colors (scaled to [0,1]^3, duplicates aggregated by weight)
// with the unconstrained solver, then recolors the image from the palette.
// Optional pixelation box-averages the image down to the given dimensions and
// snaps each block to the nearest palette color.
SegmentResult segment_image(const RgbImage& img, std::size_t k, const AnnealConfig& cfg,
                            std::optional<PixelateSpec> pixelate = std::nullopt);

// Emits solution.json, assignments.csv and trajectory.csv under dir.
// Association columns are included when include_assoc is true. Output is a
// deterministic function of the report.
void write_report(const SolveReport& report, const std::string& dir, bool include_assoc = true);

// Entry point behind the capanneal binary; returns the process exit code
// (0 ok, 1 parse/infeasible, 2 non-convergence).
int run_cli(const std::vector<std::string>& args);

}  // namespace capanneal

#endif  // CAPANNEAL_IO_HPP
