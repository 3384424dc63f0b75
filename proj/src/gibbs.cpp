#include "capanneal/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace capanneal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Per-point log cluster weights for the association softmax.
void fill_log_weights(const ClusterState& state, TypedAssoc typed, int point_type,
                      const std::vector<double>& pooled, std::vector<double>& logw) {
    const std::size_t k = state.k();
    switch (state.eta_mode) {
        case CapacityMode::none:
            std::fill(logw.begin(), logw.end(), 0.0);  // uniform; constant cancels
            break;
        case CapacityMode::per_cluster:
            for (std::size_t j = 0; j < k; ++j) logw[j] = state.log_eta(j, 0);
            break;
        case CapacityMode::per_cluster_per_type:
            if (typed == TypedAssoc::pooled) {
                logw = pooled;
            } else {
                for (std::size_t j = 0; j < k; ++j)
                    logw[j] = state.log_eta(j, static_cast<std::size_t>(point_type));
            }
            break;
    }
}

std::vector<double> pooled_log_weights(const Matrix& log_eta) {
    std::vector<double> out(log_eta.rows, 0.0);
    for (std::size_t j = 0; j < log_eta.rows; ++j)
        out[j] = log_sum_exp(log_eta.row(j), log_eta.cols);
    return out;
}

void check_state(const Dataset& ds, const ClusterState& state) {
    if (state.k() == 0) throw std::invalid_argument("state has no clusters");
    if (state.dim() != ds.dim()) throw std::invalid_argument("dimension mismatch");
    if (state.beta < 0.0) throw std::invalid_argument("beta must be nonnegative");
    if (state.eta_mode == CapacityMode::per_cluster) {
        if (state.log_eta.rows != state.k() || state.log_eta.cols != 1)
            throw std::invalid_argument("eta shape mismatch");
    } else if (state.eta_mode == CapacityMode::per_cluster_per_type) {
        if (!ds.typed()) throw std::invalid_argument("typed eta requires a typed dataset");
        if (state.log_eta.rows != state.k() ||
            state.log_eta.cols != static_cast<std::size_t>(ds.num_types))
            throw std::invalid_argument("eta shape mismatch");
    }
}

}  // namespace

double log_sum_exp(const double* v, std::size_t n) {
    double m = kNegInf;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (m == kNegInf) return kNegInf;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(v[i] - m);
    return m + std::log(sum);
}

double log_sum_exp(const std::vector<double>& v) { return log_sum_exp(v.data(), v.size()); }

void ClusterState::normalize_eta() {
    if (eta_mode == CapacityMode::none) return;
    double total = log_sum_exp(log_eta.data.data(), log_eta.data.size());
    if (total == kNegInf || !std::isfinite(total))
        throw std::invalid_argument("eta has no positive entries");
    for (double& v : log_eta.data) v -= total;
}

std::vector<double> ClusterState::eta_flat() const {
    std::vector<double> out(log_eta.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_eta.data[i]);
    return out;
}

ClusterState make_state(Matrix locations, double beta) {
    ClusterState s;
    s.locations = std::move(locations);
    s.beta = beta;
    return s;
}

ClusterState make_state(Matrix locations, double beta, const CapacitySpec& cap) {
    if (cap.mode == CapacityMode::none) return make_state(std::move(locations), beta);
    ClusterState s;
    s.beta = beta;
    s.eta_mode = cap.mode;
    if (cap.mode == CapacityMode::per_cluster) {
        if (cap.lambda.size() != locations.rows)
            throw std::invalid_argument("capacity count does not match cluster count");
        s.log_eta = Matrix(locations.rows, 1);
        for (std::size_t j = 0; j < locations.rows; ++j) s.log_eta(j, 0) = std::log(cap.lambda[j]);
    } else {
        if (cap.lambda_matrix.rows != locations.rows)
            throw std::invalid_argument("capacity rows do not match cluster count");
        s.log_eta = cap.lambda_matrix;
        for (double& v : s.log_eta.data) v = v > 0.0 ? std::log(v) : kNegInf;
    }
    s.locations = std::move(locations);
    s.normalize_eta();
    return s;
}

AssocMatrix associations(const Dataset& ds, const ClusterState& state, TypedAssoc typed) {
    check_state(ds, state);
    const std::size_t n = ds.size();
    const std::size_t k = state.k();
    const std::size_t d = ds.dim();

    std::vector<double> pooled;
    if (state.eta_mode == CapacityMode::per_cluster_per_type && typed == TypedAssoc::pooled)
        pooled = pooled_log_weights(state.log_eta);

    AssocMatrix p(n, k);
    std::vector<double> logw(k), score(k);
    for (std::size_t i = 0; i < n; ++i) {
        int ti = ds.typed() ? ds.types[i] : 0;
        fill_log_weights(state, typed, ti, pooled, logw);
        const double* x = ds.point(i);
        double m = kNegInf;
        for (std::size_t j = 0; j < k; ++j) {
            score[j] = logw[j] - state.beta * squared_distance(x, state.locations.row(j), d);
            m = std::max(m, score[j]);
        }
        if (m == kNegInf)
            throw std::invalid_argument("association row " + std::to_string(i) +
                                        " has no positive weight");
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            score[j] = std::exp(score[j] - m);
            z += score[j];
        }
        for (std::size_t j = 0; j < k; ++j) p(i, j) = score[j] / z;
    }
    return p;
}

Masses masses(const Dataset& ds, const AssocMatrix& assoc) {
    if (assoc.rows != ds.size()) throw std::invalid_argument("association matrix shape mismatch");
    Masses m;
    m.per_cluster.assign(assoc.cols, 0.0);
    for (std::size_t i = 0; i < assoc.rows; ++i)
        for (std::size_t j = 0; j < assoc.cols; ++j)
            m.per_cluster[j] += ds.weights[i] * assoc(i, j);
    if (ds.typed()) {
        m.per_type = Matrix(assoc.cols, static_cast<std::size_t>(ds.num_types));
        for (std::size_t i = 0; i < assoc.rows; ++i) {
            auto t = static_cast<std::size_t>(ds.types[i]);
            for (std::size_t j = 0; j < assoc.cols; ++j)
                m.per_type(j, t) += ds.weights[i] * assoc(i, j);
        }
    }
    return m;
}

FreeEnergyValue free_energy(const Dataset& ds, const ClusterState& state, TypedAssoc typed) {
    check_state(ds, state);
    if (state.beta <= 0.0) throw std::invalid_argument("free energy requires beta > 0");
    const std::size_t n = ds.size();
    const std::size_t k = state.k();
    const std::size_t d = ds.dim();

    std::vector<double> pooled;
    if (state.eta_mode == CapacityMode::per_cluster_per_type && typed == TypedAssoc::pooled)
        pooled = pooled_log_weights(state.log_eta);

    FreeEnergyValue fe;
    fe.per_point_logsumexp.resize(n);
    std::vector<double> logw(k), score(k);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int ti = ds.typed() ? ds.types[i] : 0;
        fill_log_weights(state, typed, ti, pooled, logw);
        const double* x = ds.point(i);
        for (std::size_t j = 0; j < k; ++j)
            score[j] = logw[j] - state.beta * squared_distance(x, state.locations.row(j), d);
        double lse = log_sum_exp(score);
        fe.per_point_logsumexp[i] = lse;
        acc += ds.weights[i] * lse;
    }
    fe.value = -acc / state.beta;
    return fe;
}

Matrix free_energy_gradient(const Dataset& ds, const ClusterState& state, TypedAssoc typed) {
    if (state.beta <= 0.0) throw std::invalid_argument("gradient requires beta > 0");
    AssocMatrix p = associations(ds, state, typed);
    const std::size_t k = state.k();
    const std::size_t d = ds.dim();
    Matrix grad(k, d, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* x = ds.point(i);
        for (std::size_t j = 0; j < k; ++j) {
            double coeff = ds.weights[i] * p(i, j);
            const double* y = state.locations.row(j);
            double* g = grad.row(j);
            for (std::size_t c = 0; c < d; ++c) g[c] += coeff * (y[c] - x[c]);
        }
    }
    for (double& v : grad.data) v *= 2.0;
    return grad;
}

}  // namespace capanneal
