#include "capanneal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace capanneal {

namespace {

// Weighted means of the clusters named by `assign`; empty clusters land on
// the global weighted mean.
Matrix partition_means(const Dataset& ds, const Partition& assign, std::size_t k) {
    const std::size_t d = ds.dim();
    Matrix means(k, d, 0.0);
    std::vector<double> mass(k, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto j = static_cast<std::size_t>(assign[i]);
        mass[j] += ds.weights[i];
        const double* x = ds.point(i);
        for (std::size_t c = 0; c < d; ++c) means(j, c) += ds.weights[i] * x[c];
    }
    std::vector<double> global;
    for (std::size_t j = 0; j < k; ++j) {
        if (mass[j] > 0.0) {
            for (std::size_t c = 0; c < d; ++c) means(j, c) /= mass[j];
        } else {
            if (global.empty()) global = ds.weighted_mean();
            std::copy(global.begin(), global.end(), means.row(j));
        }
    }
    return means;
}

void check_enumeration_size(std::size_t n, std::size_t k) {
    double combos = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        combos *= static_cast<double>(k);
        if (combos > 1e7)
            throw std::invalid_argument("instance too large to enumerate (k^N > 1e7)");
    }
}

struct EnumBest {
    double cost = std::numeric_limits<double>::infinity();
    Partition assign;
    std::uint64_t evaluated = 0;
};

void enumerate_rgs(const Dataset& ds, std::size_t k, std::size_t i, int max_used,
                   Partition& assign, EnumBest& best) {
    if (i == ds.size()) {
        best.evaluated++;
        double cost = partition_cost(ds, assign, k);
        if (cost < best.cost) {
            best.cost = cost;
            best.assign = assign;
        }
        return;
    }
    int limit = std::min<int>(max_used + 1, static_cast<int>(k) - 1);
    for (int j = 0; j <= limit; ++j) {
        assign[i] = j;
        enumerate_rgs(ds, k, i + 1, std::max(max_used, j), assign, best);
    }
}

void enumerate_counted(const Dataset& ds, std::size_t k, const std::vector<int>& counts,
                       std::size_t i, std::vector<int>& remaining, Partition& assign,
                       EnumBest& best) {
    if (i == ds.size()) {
        best.evaluated++;
        double cost = partition_cost(ds, assign, k);
        if (cost < best.cost) {
            best.cost = cost;
            best.assign = assign;
        }
        return;
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (remaining[j] == 0) continue;
        if (remaining[j] == counts[j]) {
            // opening an empty cluster: skip if an earlier same-size cluster
            // is still empty (relabeling symmetry)
            bool duplicate = false;
            for (std::size_t j2 = 0; j2 < j; ++j2)
                if (counts[j2] == counts[j] && remaining[j2] == counts[j2]) {
                    duplicate = true;
                    break;
                }
            if (duplicate) continue;
        }
        remaining[j]--;
        assign[i] = static_cast<int>(j);
        enumerate_counted(ds, k, counts, i + 1, remaining, assign, best);
        remaining[j]++;
    }
}

}  // namespace

double partition_cost(const Dataset& ds, const Partition& assign, std::size_t k) {
    Matrix means = partition_means(ds, assign, k);
    double cost = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto j = static_cast<std::size_t>(assign[i]);
        cost += ds.weights[i] * squared_distance(ds.point(i), means.row(j), ds.dim());
    }
    return cost;
}

SolveReport lloyd(const Dataset& ds, std::size_t k, const Matrix& init_locations, int max_iters) {
    if (k == 0 || k > ds.size()) throw std::invalid_argument("cluster count out of range");
    if (init_locations.rows != k || init_locations.cols != ds.dim())
        throw std::invalid_argument("initial locations shape mismatch");

    const std::size_t n = ds.size();
    const std::size_t d = ds.dim();
    Matrix y = init_locations;
    Partition assign(n, 0), prev;
    SolveReport rep;
    rep.algorithm = "lloyd";
    rep.converged = false;

    for (int it = 1; it <= max_iters; ++it) {
        std::vector<double> nearest(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = squared_distance(ds.point(i), y.row(0), d);
            for (std::size_t j = 1; j < k; ++j) {
                double dist = squared_distance(ds.point(i), y.row(j), d);
                if (dist < best_d) {
                    best_d = dist;
                    best = j;
                }
            }
            assign[i] = static_cast<int>(best);
            nearest[i] = best_d;
        }

        // Re-seed empty clusters at the point currently farthest from its
        // centroid; each point is stolen at most once per iteration.
        std::vector<char> counts_seen(k, 0);
        for (int a : assign) counts_seen[a] = 1;
        std::vector<char> stolen(n, 0);
        for (std::size_t j = 0; j < k; ++j) {
            if (counts_seen[j]) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (stolen[i]) continue;
                if (nearest[i] > far_d) {
                    far_d = nearest[i];
                    far = i;
                }
            }
            if (far == n || far_d <= 0.0) continue;  // nothing useful to steal
            std::copy(ds.point(far), ds.point(far) + d, y.row(j));
            assign[far] = static_cast<int>(j);
            stolen[far] = 1;
        }

        std::vector<double> mass(k, 0.0);
        Matrix sums(k, d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto j = static_cast<std::size_t>(assign[i]);
            mass[j] += ds.weights[i];
            const double* x = ds.point(i);
            for (std::size_t c = 0; c < d; ++c) sums(j, c) += ds.weights[i] * x[c];
        }
        for (std::size_t j = 0; j < k; ++j)
            if (mass[j] > 0.0)
                for (std::size_t c = 0; c < d; ++c) y(j, c) = sums(j, c) / mass[j];

        double cost = partition_cost(ds, assign, k);
        TrajectoryRecord rec;
        rec.beta = static_cast<double>(it);  // iteration index; Lloyd has no temperature
        rec.free_energy = cost;
        rec.distortion = cost;
        rec.entropy = 0.0;
        rec.cluster_masses = mass;
        rec.residual = std::numeric_limits<double>::quiet_NaN();
        rec.inner_iters = 1;
        rep.trajectory.push_back(std::move(rec));

        if (assign == prev) {
            rep.converged = true;
            break;
        }
        prev = assign;
    }

    rep.final_state = make_state(std::move(y), 0.0);
    rep.partition = assign;
    AssocMatrix hard(n, k, 0.0);
    for (std::size_t i = 0; i < n; ++i) hard(i, static_cast<std::size_t>(assign[i])) = 1.0;
    rep.final_assoc = std::move(hard);
    rep.cluster_masses = masses(ds, rep.final_assoc);
    rep.distortion = distortion(ds, rep.final_state.locations);
    rep.residual = std::numeric_limits<double>::quiet_NaN();
    rep.hard_counts.assign(k, 0);
    for (int a : assign) rep.hard_counts[a]++;
    return rep;
}

SolveReport fixed_eta_da(const Dataset& ds, const CapacitySpec& cap, const AnnealConfig& cfg) {
    if (cap.mode != CapacityMode::per_cluster)
        throw std::invalid_argument("fixed_eta_da requires per-cluster capacities");
    return detail::anneal_engine(ds, cap.lambda.size(), cap, cfg, false);
}

OracleResult brute_force_unconstrained(const Dataset& ds, std::size_t k) {
    if (k == 0 || k > ds.size()) throw std::invalid_argument("cluster count out of range");
    check_enumeration_size(ds.size(), k);
    EnumBest best;
    Partition assign(ds.size(), 0);
    enumerate_rgs(ds, k, 1, 0, assign, best);  // point 0 is pinned to cluster 0
    OracleResult out;
    out.best_partition = best.assign;
    out.best_locations = partition_means(ds, best.assign, k);
    out.best_cost = best.cost;
    out.evaluated_count = best.evaluated;
    return out;
}

OracleResult brute_force_capacitated(const Dataset& ds, std::size_t k,
                                     const std::vector<int>& counts) {
    if (k == 0) throw std::invalid_argument("cluster count out of range");
    if (counts.size() != k) throw std::invalid_argument("counts size does not match k");
    long long total = 0;
    for (int c : counts) {
        if (c < 0) throw std::invalid_argument("negative cluster count");
        total += c;
    }
    if (total != static_cast<long long>(ds.size()))
        throw std::invalid_argument("counts must sum to the number of points");
    const double uniform = 1.0 / static_cast<double>(ds.size());
    for (double w : ds.weights)
        if (std::abs(w - uniform) > 1e-12)
            throw std::invalid_argument("capacitated enumeration requires uniform weights");
    check_enumeration_size(ds.size(), k);

    EnumBest best;
    Partition assign(ds.size(), 0);
    std::vector<int> remaining = counts;
    enumerate_counted(ds, k, counts, 0, remaining, assign, best);
    if (best.evaluated == 0) throw std::invalid_argument("counts admit no partition");

    OracleResult out;
    out.best_partition = best.assign;
    out.best_locations = partition_means(ds, best.assign, k);
    out.best_cost = best.cost;
    out.evaluated_count = best.evaluated;
    return out;
}

}  // namespace capanneal
