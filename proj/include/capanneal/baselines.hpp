#ifndef CAPANNEAL_BASELINES_HPP
#define CAPANNEAL_BASELINES_HPP

#include <cstdint>
#include <vector>

#include "capanneal/core.hpp"
#include "capanneal/solver.hpp"

namespace capanneal {

struct OracleResult {
    Partition best_partition;   // canonical first-occurrence labeling
    Matrix best_locations;      // K x d, cluster weighted means
    double best_cost = 0.0;
    std::uint64_t evaluated_count = 0;
};

// Classic alternation of nearest assignment and weighted centroid steps.
// Empty clusters are re-seeded at the point farthest from its current
// centroid. Stops when assignments stabilize or after max_iters.
SolveReport lloyd(const Dataset& ds, std::size_t k, const Matrix& init_locations,
                  int max_iters = 200);

// The earlier fixed-weight heuristic: identical annealing loop but eta is
// pinned to lambda and never updated, so the constraint residual generally
// stays large on non-uniform data.
SolveReport fixed_eta_da(const Dataset& ds, const CapacitySpec& cap, const AnnealConfig& cfg);

// Exhaustive search over partitions of N points into at most k clusters
// (canonicalized by first-occurrence labeling), each cluster's resource at
// its weighted mean. Guarded to k^N <= 10^7.
OracleResult brute_force_unconstrained(const Dataset& ds, std::size_t k);

// Exhaustive search restricted to partitions with exact per-cluster point
// counts. Requires uniform weights and sum(counts) = N.
OracleResult brute_force_capacitated(const Dataset& ds, std::size_t k,
                                     const std::vector<int>& counts);

// Eq-style partition cost: each point against its own cluster's weighted mean.
double partition_cost(const Dataset& ds, const Partition& assign, std::size_t k);

}  // namespace capanneal

#endif  // CAPANNEAL_BASELINES_HPP
