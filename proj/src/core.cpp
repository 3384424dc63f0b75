#include "capanneal/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace capanneal {

bool is_row_stochastic(const Matrix& p, double tol) {
    for (std::size_t i = 0; i < p.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < p.cols; ++j) {
            double v = p(i, j);
            if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) return false;
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

std::vector<double> Dataset::weighted_mean() const {
    std::vector<double> mean(dim(), 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
        const double* x = point(i);
        for (std::size_t c = 0; c < dim(); ++c) mean[c] += weights[i] * x[c];
    }
    return mean;
}

double Dataset::diameter() const {
    double sq = 0.0;
    for (std::size_t c = 0; c < dim(); ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < size(); ++i) {
            lo = std::min(lo, points(i, c));
            hi = std::max(hi, points(i, c));
        }
        sq += (hi - lo) * (hi - lo);
    }
    return std::sqrt(sq);
}

std::vector<double> Dataset::type_weights() const {
    std::vector<double> w(static_cast<std::size_t>(num_types), 0.0);
    for (std::size_t i = 0; i < types.size(); ++i) w[types[i]] += weights[i];
    return w;
}

Dataset validate_dataset(Matrix points, std::vector<double> weights, std::vector<int> types) {
    const std::size_t n = points.rows;
    const std::size_t d = points.cols;
    if (n == 0 || d == 0) throw std::invalid_argument("dataset must contain at least one point");
    for (double v : points.data)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite point coordinate");

    if (weights.empty()) {
        weights.assign(n, 1.0 / static_cast<double>(n));
    } else {
        if (weights.size() != n) throw std::invalid_argument("weight count does not match point count");
        double sum = 0.0;
        for (double w : weights) {
            if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("weights must be nonnegative");
            sum += w;
        }
        if (sum <= 0.0) throw std::invalid_argument("weights must have positive total");
        for (double& w : weights) w /= sum;
    }

    int num_types = 0;
    if (!types.empty()) {
        if (types.size() != n) throw std::invalid_argument("type count does not match point count");
        int max_label = *std::max_element(types.begin(), types.end());
        int min_label = *std::min_element(types.begin(), types.end());
        if (min_label < 0) throw std::invalid_argument("type label out of range");
        num_types = max_label + 1;
        std::vector<char> seen(static_cast<std::size_t>(num_types), 0);
        for (int t : types) seen[t] = 1;
        for (int t = 0; t < num_types; ++t)
            if (!seen[t])
                throw std::invalid_argument("type " + std::to_string(t) + " has no points");
    }

    Dataset ds;
    ds.points = std::move(points);
    ds.weights = std::move(weights);
    ds.types = std::move(types);
    ds.num_types = num_types;
    return ds;
}

CapacitySpec CapacitySpec::unconstrained() { return CapacitySpec{}; }

CapacitySpec CapacitySpec::sized(std::vector<double> lambda) {
    if (lambda.empty()) throw std::invalid_argument("empty capacity vector");
    double sum = 0.0;
    for (double v : lambda) {
        if (!std::isfinite(v) || v <= 0.0)
            throw std::invalid_argument("per-cluster capacities must be positive");
        sum += v;
    }
    for (double& v : lambda) v /= sum;
    CapacitySpec spec;
    spec.mode = CapacityMode::per_cluster;
    spec.lambda = std::move(lambda);
    return spec;
}

CapacitySpec CapacitySpec::typed(Matrix lambda_jk) {
    if (lambda_jk.rows == 0 || lambda_jk.cols == 0)
        throw std::invalid_argument("empty capacity matrix");
    double sum = 0.0;
    for (double v : lambda_jk.data) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("typed capacities must be nonnegative");
        sum += v;
    }
    if (sum <= 0.0) throw std::invalid_argument("typed capacities must have positive total");
    for (double& v : lambda_jk.data) v /= sum;
    CapacitySpec spec;
    spec.mode = CapacityMode::per_cluster_per_type;
    spec.lambda_matrix = std::move(lambda_jk);
    return spec;
}

std::size_t CapacitySpec::cluster_count() const {
    switch (mode) {
        case CapacityMode::per_cluster: return lambda.size();
        case CapacityMode::per_cluster_per_type: return lambda_matrix.rows;
        default: return 0;
    }
}

void CapacitySpec::check_compatible(const Dataset& ds) const {
    if (mode != CapacityMode::per_cluster_per_type) return;
    if (!ds.typed()) throw std::invalid_argument("typed capacities require a typed dataset");
    if (lambda_matrix.cols != static_cast<std::size_t>(ds.num_types))
        throw std::invalid_argument("capacity matrix has " + std::to_string(lambda_matrix.cols) +
                                    " type columns, dataset has " + std::to_string(ds.num_types));
    std::vector<double> tw = ds.type_weights();
    for (std::size_t t = 0; t < tw.size(); ++t) {
        double col = 0.0;
        for (std::size_t j = 0; j < lambda_matrix.rows; ++j) col += lambda_matrix(j, t);
        if (std::abs(col - tw[t]) > 1e-9)
            throw std::invalid_argument("infeasible typed capacities: type " + std::to_string(t) +
                                        " column sums to " + std::to_string(col) +
                                        " but the type weight is " + std::to_string(tw[t]));
    }
}

double squared_distance(const double* x, const double* y, std::size_t d) {
    double sum = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        double diff = x[c] - y[c];
        sum += diff * diff;
    }
    return sum;
}

double squared_distance(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("dimension mismatch");
    return squared_distance(x.data(), y.data(), x.size());
}

double distortion(const Dataset& ds, const Matrix& locations) {
    if (locations.cols != ds.dim()) throw std::invalid_argument("dimension mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* x = ds.point(i);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < locations.rows; ++j)
            best = std::min(best, squared_distance(x, locations.row(j), ds.dim()));
        total += ds.weights[i] * best;
    }
    return total;
}

double modified_distortion(const Dataset& ds, const Matrix& locations, const AssocMatrix& assoc) {
    if (locations.cols != ds.dim()) throw std::invalid_argument("dimension mismatch");
    if (assoc.rows != ds.size() || assoc.cols != locations.rows)
        throw std::invalid_argument("association matrix shape mismatch");
    if (!is_row_stochastic(assoc)) throw std::invalid_argument("associations are not row-stochastic");
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* x = ds.point(i);
        double row = 0.0;
        for (std::size_t j = 0; j < locations.rows; ++j)
            row += assoc(i, j) * squared_distance(x, locations.row(j), ds.dim());
        total += ds.weights[i] * row;
    }
    return total;
}

double conditional_entropy(const Dataset& ds, const AssocMatrix& assoc) {
    if (assoc.rows != ds.size()) throw std::invalid_argument("association matrix shape mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < assoc.cols; ++j) {
            double p = assoc(i, j);
            if (p > 0.0) row -= p * std::log(p);
        }
        total += ds.weights[i] * row;
    }
    return total;
}

}  // namespace capanneal
