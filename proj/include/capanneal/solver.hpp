#ifndef CAPANNEAL_SOLVER_HPP
#define CAPANNEAL_SOLVER_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "capanneal/core.hpp"
#include "capanneal/gibbs.hpp"

namespace capanneal {

/// Raised when a cluster's soft mass vanishes and its centroid is undefined.
struct StarvedClusterError : std::runtime_error {
    std::size_t cluster;
    explicit StarvedClusterError(std::size_t j)
        : std::runtime_error("starved cluster " + std::to_string(j)), cluster(j) {}
};

/// Raised when a positive capacity is unreachable at the current beta.
struct InfeasibleAtBetaError : std::runtime_error {
    explicit InfeasibleAtBetaError(const std::string& what) : std::runtime_error(what) {}
};

struct AnnealConfig {
    // nullopt = auto: 0.5 / (largest eigenvalue of the weighted covariance),
    // just below the first critical beta so the first split is observed.
    std::optional<double> beta_init;
    double beta_growth = 1.05;  // gamma > 1
    // nullopt = auto: anneal until every association row is effectively hard
    // (max row entropy < 1e-3) or max_outer_iters is hit.
    std::optional<double> beta_max;
    double inner_tol = 1e-10;   // on displacement / diameter and on |d log eta|
    int inner_max_iters = 1000;
    // Scaling passes per inner iteration; the eta update runs to its own
    // (bounded) fixed point before each centroid move, which keeps the
    // alternation stable through phase transitions.
    int eta_max_passes = 50;
    double perturb_eps = 0.01;  // noise amplitude relative to data diameter
    double sigma = 1.0;         // spatial scaling factor for descent_step
    std::uint64_t rng_seed = 1;
    int max_outer_iters = 2000;
    TypedAssoc typed_assoc = TypedAssoc::restricted;

    void check() const;
};

struct TrajectoryRecord {
    double beta = 0.0;
    double free_energy = 0.0;
    double distortion = 0.0;
    double entropy = 0.0;
    std::vector<double> cluster_masses;
    // max_j |p(y_j) - lambda_j| or max_{jk} |p(y_j|k) - lambda_{jk}|;
    // NaN when unconstrained.
    double residual = 0.0;
    int inner_iters = 0;
};

struct SolveReport {
    ClusterState final_state;
    Partition partition;
    Masses cluster_masses;
    double distortion = 0.0;
    std::vector<TrajectoryRecord> trajectory;
    AssocMatrix final_assoc;
    std::vector<int> hard_counts;  // points per cluster after hardening
    double residual = 0.0;
    bool converged = true;
    std::string message;
    std::uint64_t seed = 0;
    std::string algorithm = "anneal";  // anneal | fixed_eta | lloyd
    AnnealConfig config;               // echo for report files
};

struct InnerResult {
    ClusterState state;
    int iterations = 0;
    bool converged = false;
    double displacement = 0.0;  // last max location displacement
    double eta_change = 0.0;    // last max |delta log eta|
    // Free-energy monotonicity across centroid steps (tracked when
    // unconstrained and beta > 0).
    bool free_energy_monotone = true;
    double worst_free_energy_increase = 0.0;
};

// y_j = sum_i p(x_i) p(y_j|x_i) x_i / p(y_j). Throws StarvedClusterError
// when some p(y_j) vanishes.
Matrix centroid_update(const Dataset& ds, const AssocMatrix& assoc);

// One application of eta_j <- lambda_j / sum_i p(x_i) e^{-beta d_ij} / Z_i,
// evaluated fully in the log domain, then renormalized. The typed form runs
// per (j,k) with the sums restricted to type-k points.
Matrix eta_update(const Dataset& ds, const ClusterState& state, const CapacitySpec& cap,
                  TypedAssoc typed = TypedAssoc::restricted);

// Fixed-beta alternation until convergence. Unconstrained: associations then
// centroid step. Constrained: associations, eta step, associations, centroid
// step, which keeps masses near lambda while locations move.
InnerResult inner_solve(const Dataset& ds, ClusterState state, const CapacitySpec& cap,
                        const AnnealConfig& cfg);

// Full annealing loop: geometric beta schedule, perturbation before each
// inner solve, trajectory recording, final hardening.
SolveReport anneal(const Dataset& ds, std::size_t k, const CapacitySpec& cap,
                   const AnnealConfig& cfg);

// Adds uniform noise in [-eps, eps]^d scaled by `diameter` to every location.
void perturb_resources(Matrix& locations, double eps, double diameter, std::mt19937_64& rng);

struct DescentStep {
    Matrix next_locations;  // Y - (sigma^2/2) P^{-1} grad F
    Matrix direction;       // -P^{-1} grad F
    double dot = 0.0;       // direction . grad F (flattened); <= 0 always
};

// One diagnostic descent-method step; sigma = 1 reproduces centroid_update
// exactly.
DescentStep descent_step(const Dataset& ds, const ClusterState& state, double sigma);

struct ScaledInstance {
    Dataset dataset;     // points divided by sigma
    double beta_factor;  // sigma^2: run the scaled instance at beta * beta_factor
};

// Spatial scaling: the problem at (X/sigma, beta sigma^2) is the original
// problem with locations divided by sigma.
ScaledInstance scale_instance(const Dataset& ds, double sigma);

// Row argmax; ties go to the lowest index.
Partition harden(const AssocMatrix& assoc);

// 0.5 / (largest eigenvalue of the weighted data covariance).
double auto_beta_init(const Dataset& ds);

// max_j |p(y_j) - lambda_j| (per-cluster) or max_{jk} |p(y_j|k) - lambda_{jk}|
// (typed); NaN for an unconstrained spec.
double capacity_residual(const Masses& m, const CapacitySpec& cap);

namespace detail {
// Shared annealing loop; update_eta = false pins eta to lambda (the prior
// fixed-weight heuristic exposed through baselines::fixed_eta_da).
SolveReport anneal_engine(const Dataset& ds, std::size_t k, const CapacitySpec& cap,
                          const AnnealConfig& cfg, bool update_eta);
InnerResult inner_solve_impl(const Dataset& ds, ClusterState state, const CapacitySpec& cap,
                             const AnnealConfig& cfg, bool update_eta);
}  // namespace detail

}  // namespace capanneal

#endif  // CAPANNEAL_SOLVER_HPP
