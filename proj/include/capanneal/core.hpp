#ifndef CAPANNEAL_CORE_HPP
#define CAPANNEAL_CORE_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace capanneal {

// Dense row-major matrix of doubles. Small helper, not a linear-algebra type.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool empty() const { return data.empty(); }
};

// N x K association matrix p(y_j | x_i); rows sum to 1.
using AssocMatrix = Matrix;

// Hard assignment: one 0-based cluster index per demand point.
using Partition = std::vector<int>;

bool is_row_stochastic(const Matrix& p, double tol = 1e-8);

/// Demand points with probability weights and optional type labels.
/// Immutable after construction; build through validate_dataset().
struct Dataset {
    Matrix points;                // N x d
    std::vector<double> weights;  // N, nonnegative, sums to 1
    std::vector<int> types;       // N, 0-based labels in [0, num_types); empty if untyped
    int num_types = 0;            // 0 when untyped

    std::size_t size() const { return points.rows; }
    std::size_t dim() const { return points.cols; }
    bool typed() const { return num_types > 0; }

    const double* point(std::size_t i) const { return points.row(i); }

    std::vector<double> weighted_mean() const;
    // Bounding-box diagonal, used as the data diameter for relative tolerances.
    double diameter() const;
    // Total probability weight per type label; empty when untyped.
    std::vector<double> type_weights() const;
};

/// Validates and normalizes raw instance data.
/// Missing weights default to uniform; positive weights are rescaled to sum 1.
/// Types, when present, must cover every label 0..max contiguously.
Dataset validate_dataset(Matrix points,
                         std::vector<double> weights = {},
                         std::vector<int> types = {});

enum class CapacityMode { none, per_cluster, per_cluster_per_type };

/// Target relative cluster masses: vector lambda_j or matrix lambda_{jk}.
struct CapacitySpec {
    CapacityMode mode = CapacityMode::none;
    std::vector<double> lambda;  // K entries, per_cluster mode
    Matrix lambda_matrix;        // K x p, per_cluster_per_type mode

    static CapacitySpec unconstrained();
    // Normalizes to sum 1; rejects nonpositive entries.
    static CapacitySpec sized(std::vector<double> lambda);
    // Normalizes the total to 1; rejects negative entries.
    static CapacitySpec typed(Matrix lambda_jk);

    std::size_t cluster_count() const;

    // Typed specs must have per-type column sums matching the dataset's
    // type weights, otherwise no partition can meet them.
    void check_compatible(const Dataset& ds) const;
};

double squared_distance(const double* x, const double* y, std::size_t d);
double squared_distance(const std::vector<double>& x, const std::vector<double>& y);

// D = sum_i p(x_i) min_j ||x_i - y_j||^2
double distortion(const Dataset& ds, const Matrix& locations);

// D-bar = sum_i p(x_i) sum_j p(y_j|x_i) d(x_i, y_j); always >= D.
double modified_distortion(const Dataset& ds, const Matrix& locations, const AssocMatrix& assoc);

// H(Y|X) = -sum_i p(x_i) sum_j p(y_j|x_i) log p(y_j|x_i), with 0 log 0 = 0.
double conditional_entropy(const Dataset& ds, const AssocMatrix& assoc);

}  // namespace capanneal

#endif  // CAPANNEAL_CORE_HPP
