#ifndef CAPANNEAL_GIBBS_HPP
#define CAPANNEAL_GIBBS_HPP

#include <cstddef>
#include <vector>

#include "capanneal/core.hpp"

namespace capanneal {

// How typed cluster weights enter the association softmax.
//  restricted: a point of type k sees only the eta_{j,k} column (enforces
//              per-type masses).
//  pooled:     a point sees sum_k eta_{jk}, which collapses to a per-cluster
//              weight and cannot hold per-type masses; kept for comparison.
enum class TypedAssoc { restricted, pooled };

/// Resource locations, cluster weights (log domain), and annealing parameter.
struct ClusterState {
    Matrix locations;  // K x d
    // K x 1 (per_cluster) or K x p (per_cluster_per_type); empty when mode none.
    // Kept as log eta; normalized so sum(eta) = 1 after every update.
    Matrix log_eta;
    CapacityMode eta_mode = CapacityMode::none;
    double beta = 0.0;

    std::size_t k() const { return locations.rows; }
    std::size_t dim() const { return locations.cols; }

    // Shifts log_eta so the etas sum to 1. Associations are invariant to
    // this common scale; normalizing pins a canonical representative.
    void normalize_eta();
    std::vector<double> eta_flat() const;
};

// Uniform-weight state (eta mode none) at the given locations and beta.
ClusterState make_state(Matrix locations, double beta);
// State with eta initialized from the capacity spec (eta = lambda).
ClusterState make_state(Matrix locations, double beta, const CapacitySpec& cap);

struct FreeEnergyValue {
    double value = 0.0;
    // log sum_j w_j exp(-beta d(x_i, y_j)) per demand point (diagnostic).
    std::vector<double> per_point_logsumexp;
};

/// Soft cluster masses p(y_j), plus per-type masses p(y_j|k) when typed.
struct Masses {
    std::vector<double> per_cluster;  // K, sums to 1
    Matrix per_type;                  // K x p; column k sums to the type-k weight
};

// Gibbs association probabilities p(y_j|x_i) = w_j exp(-beta d_ij) / Z_i,
// computed row-wise in the log domain with max subtraction.
// Weights: mode none -> uniform (plain Gibbs); per_cluster -> eta_j;
// per_cluster_per_type -> eta_{j,k_i} (restricted) or sum_k eta_{jk} (pooled).
AssocMatrix associations(const Dataset& ds, const ClusterState& state,
                         TypedAssoc typed = TypedAssoc::restricted);

Masses masses(const Dataset& ds, const AssocMatrix& assoc);

// F = -(1/beta) sum_i p(x_i) log sum_j w_j exp(-beta d(x_i,y_j)).
// Mode none uses w_j = 1 (the unweighted free energy); weighted modes use
// the stored eta. Requires beta > 0.
FreeEnergyValue free_energy(const Dataset& ds, const ClusterState& state,
                            TypedAssoc typed = TypedAssoc::restricted);

// Analytic gradient dF/dY, K x d:
//   grad_j = 2 sum_i p(x_i) p(y_j|x_i) (y_j - x_i) = 2 p(y_j) (y_j - g_j(Y)).
Matrix free_energy_gradient(const Dataset& ds, const ClusterState& state,
                            TypedAssoc typed = TypedAssoc::restricted);

// log sum_i exp(v_i) with max subtraction; -inf for an empty or all -inf input.
double log_sum_exp(const double* v, std::size_t n);
double log_sum_exp(const std::vector<double>& v);

}  // namespace capanneal

#endif  // CAPANNEAL_GIBBS_HPP
