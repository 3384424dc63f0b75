#ifndef CAPANNEAL_SYNTHETIC_HPP
#define CAPANNEAL_SYNTHETIC_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "capanneal/core.hpp"

namespace capanneal {

struct BlobSpec {
    int count = 0;
    std::vector<double> center;
    double spread = 0.1;  // half-width of the uniform box around the center
};

// Uniform-weight planar-or-higher blob mixture; point order follows the blob
// order, coordinates drawn uniformly in center +- spread.
Dataset generate_blobs(const std::vector<BlobSpec>& blobs, std::uint64_t seed);

struct PickupInstance {
    Dataset dataset;                               // 1-D window midpoints
    CapacitySpec capacities;                       // typed K x p spec
    std::vector<std::pair<double, double>> windows;  // (t_start, t_end) per shipment
};

// Shipments with random time windows on a [0, horizon] day, block-labeled by
// type_counts, and a random feasible lambda_{jk}: for each type the vehicle
// shares are drawn positive and normalized to that type's total weight.
PickupInstance generate_pickup(const std::vector<int>& type_counts, std::size_t vehicles,
                               std::uint64_t seed, double horizon = 24.0);

}  // namespace capanneal

#endif  // CAPANNEAL_SYNTHETIC_HPP
