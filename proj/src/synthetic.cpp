#include "capanneal/synthetic.hpp"

#include <random>
#include <stdexcept>

namespace capanneal {

Dataset generate_blobs(const std::vector<BlobSpec>& blobs, std::uint64_t seed) {
    if (blobs.empty()) throw std::invalid_argument("no blobs given");
    const std::size_t d = blobs.front().center.size();
    std::size_t n = 0;
    for (const auto& b : blobs) {
        if (b.count <= 0) throw std::invalid_argument("blob count must be positive");
        if (b.center.size() != d) throw std::invalid_argument("blob dimension mismatch");
        n += static_cast<std::size_t>(b.count);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Matrix points(n, d);
    std::size_t row = 0;
    for (const auto& b : blobs) {
        for (int i = 0; i < b.count; ++i, ++row)
            for (std::size_t c = 0; c < d; ++c)
                points(row, c) = b.center[c] + b.spread * unit(rng);
    }
    return validate_dataset(std::move(points));
}

PickupInstance generate_pickup(const std::vector<int>& type_counts, std::size_t vehicles,
                               std::uint64_t seed, double horizon) {
    if (type_counts.empty()) throw std::invalid_argument("no shipment types given");
    if (vehicles == 0) throw std::invalid_argument("need at least one vehicle");
    if (horizon <= 0.0) throw std::invalid_argument("horizon must be positive");
    std::size_t n = 0;
    for (int c : type_counts) {
        if (c <= 0) throw std::invalid_argument("type counts must be positive");
        n += static_cast<std::size_t>(c);
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> start_dist(0.0, 0.8 * horizon);
    std::uniform_real_distribution<double> len_dist(0.05 * horizon, 0.2 * horizon);

    PickupInstance out;
    out.windows.reserve(n);
    Matrix points(n, 1);
    std::vector<int> types;
    types.reserve(n);
    std::size_t row = 0;
    for (std::size_t t = 0; t < type_counts.size(); ++t) {
        for (int i = 0; i < type_counts[t]; ++i, ++row) {
            double s = start_dist(rng);
            double e = std::min(s + len_dist(rng), horizon);
            out.windows.emplace_back(s, e);
            points(row, 0) = 0.5 * (s + e);  // shipments sit at the window midpoint
            types.push_back(static_cast<int>(t));
        }
    }
    out.dataset = validate_dataset(std::move(points), {}, std::move(types));

    // Random capacities: per type, vehicle shares drawn positive and scaled
    // so the column sums to that type's total weight (feasibility).
    std::uniform_real_distribution<double> share(0.2, 1.0);
    const std::vector<double> tw = out.dataset.type_weights();
    Matrix lambda(vehicles, type_counts.size());
    for (std::size_t t = 0; t < type_counts.size(); ++t) {
        double sum = 0.0;
        for (std::size_t j = 0; j < vehicles; ++j) {
            lambda(j, t) = share(rng);
            sum += lambda(j, t);
        }
        for (std::size_t j = 0; j < vehicles; ++j) lambda(j, t) *= tw[t] / sum;
    }
    out.capacities = CapacitySpec::typed(std::move(lambda));
    return out;
}

}  // namespace capanneal
