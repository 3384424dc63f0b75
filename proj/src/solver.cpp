#include "capanneal/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace capanneal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kStarvedMass = 1e-300;
// Auto beta_max stop: anneal until every association row has entropy below
// this, i.e. assignments are effectively hard.
constexpr double kHardRowEntropy = 1e-3;

double max_row_entropy(const AssocMatrix& p) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < p.cols; ++j) {
            double v = p(i, j);
            if (v > 0.0) h -= v * std::log(v);
        }
        worst = std::max(worst, h);
    }
    return worst;
}

double max_abs_log_eta_change(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double u = a.data[i], v = b.data[i];
        if (u == kNegInf && v == kNegInf) continue;
        worst = std::max(worst, std::abs(u - v));
    }
    return worst;
}

double max_row_displacement(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t j = 0; j < a.rows; ++j)
        worst = std::max(worst, std::sqrt(squared_distance(a.row(j), b.row(j), a.cols)));
    return worst;
}

int argmax_mass(const std::vector<double>& m) {
    return static_cast<int>(std::max_element(m.begin(), m.end()) - m.begin());
}

}  // namespace

void AnnealConfig::check() const {
    if (beta_growth <= 1.0) throw std::invalid_argument("beta_growth must exceed 1");
    if (inner_tol <= 0.0) throw std::invalid_argument("inner_tol must be positive");
    if (inner_max_iters < 1) throw std::invalid_argument("inner_max_iters must be positive");
    if (eta_max_passes < 1) throw std::invalid_argument("eta_max_passes must be positive");
    if (max_outer_iters < 1) throw std::invalid_argument("max_outer_iters must be positive");
    if (perturb_eps < 0.0) throw std::invalid_argument("perturb_eps must be nonnegative");
    if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
    if (beta_init && !(*beta_init > 0.0)) throw std::invalid_argument("beta_init must be positive");
    if (beta_max) {
        if (!(*beta_max > 0.0)) throw std::invalid_argument("beta_max must be positive");
        if (beta_init && *beta_max <= *beta_init)
            throw std::invalid_argument("beta_max must exceed beta_init");
    }
}

Matrix centroid_update(const Dataset& ds, const AssocMatrix& assoc) {
    if (assoc.rows != ds.size()) throw std::invalid_argument("association matrix shape mismatch");
    const std::size_t k = assoc.cols;
    const std::size_t d = ds.dim();
    std::vector<double> mass(k, 0.0);
    Matrix num(k, d, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* x = ds.point(i);
        for (std::size_t j = 0; j < k; ++j) {
            double w = ds.weights[i] * assoc(i, j);
            mass[j] += w;
            double* row = num.row(j);
            for (std::size_t c = 0; c < d; ++c) row[c] += w * x[c];
        }
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (mass[j] <= kStarvedMass) throw StarvedClusterError(j);
        double* row = num.row(j);
        for (std::size_t c = 0; c < d; ++c) row[c] /= mass[j];
    }
    return num;
}

namespace {

// -beta d_ij and log p(x_i), reused across scaling passes at fixed locations.
struct EtaKernel {
    Matrix scores;  // n x k
    std::vector<double> log_weight;
    double beta = 0.0;
};

EtaKernel build_eta_kernel(const Dataset& ds, const ClusterState& state) {
    EtaKernel kern;
    kern.beta = state.beta;
    kern.scores = Matrix(ds.size(), state.k());
    kern.log_weight.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* x = ds.point(i);
        for (std::size_t j = 0; j < state.k(); ++j)
            kern.scores(i, j) =
                -state.beta * squared_distance(x, state.locations.row(j), ds.dim());
        kern.log_weight[i] = ds.weights[i] > 0.0 ? std::log(ds.weights[i]) : kNegInf;
    }
    return kern;
}

// One scaling pass of eta; returns max |delta log eta| over positive entries.
double eta_pass(const Dataset& ds, const EtaKernel& kern, const CapacitySpec& cap,
                TypedAssoc typed, Matrix& log_eta) {
    const std::size_t n = ds.size();
    const std::size_t k = log_eta.rows;
    const bool per_type =
        cap.mode == CapacityMode::per_cluster_per_type && typed == TypedAssoc::restricted;

    std::vector<double> pooled;
    if (cap.mode == CapacityMode::per_cluster_per_type && typed == TypedAssoc::pooled) {
        pooled.resize(k);
        for (std::size_t j = 0; j < k; ++j) pooled[j] = log_sum_exp(log_eta.row(j), log_eta.cols);
    }

    // terms(i, j) = log p(x_i) - beta d_ij - log Z_i; per target
    // log eta_new = log lambda - logsumexp_i terms(., j).
    Matrix terms(n, k);
    std::vector<double> score(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double lw;
            if (cap.mode == CapacityMode::per_cluster)
                lw = log_eta(j, 0);
            else if (per_type)
                lw = log_eta(j, static_cast<std::size_t>(ds.types[i]));
            else
                lw = pooled[j];
            score[j] = lw + kern.scores(i, j);
        }
        double lse = log_sum_exp(score);
        for (std::size_t j = 0; j < k; ++j)
            terms(i, j) = kern.log_weight[i] + kern.scores(i, j) - lse;
    }

    const std::size_t groups = per_type ? static_cast<std::size_t>(ds.num_types) : 1;
    Matrix log_eta_new(k, log_eta.cols, kNegInf);
    std::vector<double> buf;
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t g = 0; g < groups; ++g) {
            buf.clear();
            for (std::size_t i = 0; i < n; ++i) {
                if (per_type && static_cast<std::size_t>(ds.types[i]) != g) continue;
                buf.push_back(terms(i, j));
            }
            double s = log_sum_exp(buf);
            if (cap.mode == CapacityMode::per_cluster) {
                if (s == kNegInf)
                    throw InfeasibleAtBetaError("cluster " + std::to_string(j) +
                                                " receives no mass at beta " +
                                                std::to_string(kern.beta));
                log_eta_new(j, 0) = std::log(cap.lambda[j]) - s;
            } else if (per_type) {
                double lambda = cap.lambda_matrix(j, g);
                if (lambda <= 0.0) continue;  // zero capacity keeps eta at zero
                if (s == kNegInf)
                    throw InfeasibleAtBetaError("cluster " + std::to_string(j) +
                                                " receives no type-" + std::to_string(g) +
                                                " mass at beta " + std::to_string(kern.beta));
                log_eta_new(j, g) = std::log(lambda) - s;
            } else {
                // pooled: one shared denominator per cluster, applied columnwise
                for (std::size_t t = 0; t < log_eta.cols; ++t) {
                    double lambda = cap.lambda_matrix(j, t);
                    if (lambda <= 0.0) continue;
                    if (s == kNegInf)
                        throw InfeasibleAtBetaError("cluster " + std::to_string(j) +
                                                    " receives no mass at beta " +
                                                    std::to_string(kern.beta));
                    log_eta_new(j, t) = std::log(lambda) - s;
                }
            }
        }
    }

    double total = log_sum_exp(log_eta_new.data.data(), log_eta_new.data.size());
    if (!std::isfinite(total)) throw InfeasibleAtBetaError("eta update produced no positive weight");
    for (double& v : log_eta_new.data) v -= total;

    double delta = 0.0;
    for (std::size_t i = 0; i < log_eta.data.size(); ++i) {
        double u = log_eta.data[i], v = log_eta_new.data[i];
        if (u == kNegInf && v == kNegInf) continue;
        delta = std::max(delta, std::abs(u - v));
    }
    log_eta = std::move(log_eta_new);
    return delta;
}

void check_eta_args(const ClusterState& state, const CapacitySpec& cap) {
    if (cap.mode == CapacityMode::none)
        throw std::invalid_argument("eta_update requires a capacity spec");
    if (state.eta_mode != cap.mode)
        throw std::invalid_argument("state eta mode does not match capacity spec");
}

}  // namespace

Matrix eta_update(const Dataset& ds, const ClusterState& state, const CapacitySpec& cap,
                  TypedAssoc typed) {
    check_eta_args(state, cap);
    EtaKernel kern = build_eta_kernel(ds, state);
    Matrix log_eta = state.log_eta;
    eta_pass(ds, kern, cap, typed, log_eta);
    return log_eta;
}

namespace detail {

InnerResult inner_solve_impl(const Dataset& ds, ClusterState state, const CapacitySpec& cap,
                             const AnnealConfig& cfg, bool update_eta) {
    const double diam = ds.diameter();
    const double len_tol = cfg.inner_tol * std::max(diam, 1e-12);
    const bool track_fe = cap.mode == CapacityMode::none && state.beta > 0.0;

    InnerResult res;
    double prev_fe = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= cfg.inner_max_iters; ++it) {
        res.iterations = it;
        double eta_delta = 0.0;
        if (cap.mode != CapacityMode::none && update_eta) {
            Matrix log_eta_new = eta_update(ds, state, cap, cfg.typed_assoc);
            eta_delta = max_abs_log_eta_change(log_eta_new, state.log_eta);
            state.log_eta = std::move(log_eta_new);
        }
        AssocMatrix p = associations(ds, state, cfg.typed_assoc);
        Matrix y_new = centroid_update(ds, p);
        double disp = max_row_displacement(y_new, state.locations);
        state.locations = std::move(y_new);

        if (track_fe) {
            double fe = free_energy(ds, state).value;
            double slack = 1e-9 * std::max(1.0, std::abs(prev_fe));
            if (fe > prev_fe + slack) {
                res.free_energy_monotone = false;
                res.worst_free_energy_increase =
                    std::max(res.worst_free_energy_increase, fe - prev_fe);
            }
            prev_fe = fe;
        }

        res.displacement = disp;
        res.eta_change = eta_delta;
        if (disp < len_tol && eta_delta < cfg.inner_tol) {
            res.converged = true;
            break;
        }
    }
    res.state = std::move(state);
    return res;
}

SolveReport anneal_engine(const Dataset& ds, std::size_t k, const CapacitySpec& cap,
                          const AnnealConfig& cfg, bool update_eta) {
    cfg.check();
    if (k == 0) throw std::invalid_argument("cluster count must be positive");
    if (k > ds.size()) throw std::invalid_argument("more clusters than demand points");
    if (cap.mode != CapacityMode::none && cap.cluster_count() != k)
        throw std::invalid_argument("capacity spec covers " + std::to_string(cap.cluster_count()) +
                                    " clusters, expected " + std::to_string(k));
    cap.check_compatible(ds);

    const double diam = ds.diameter();
    const std::vector<double> mean = ds.weighted_mean();
    Matrix y0(k, ds.dim());
    for (std::size_t j = 0; j < k; ++j)
        std::copy(mean.begin(), mean.end(), y0.row(j));

    double beta = cfg.beta_init ? *cfg.beta_init : auto_beta_init(ds);
    ClusterState state = make_state(std::move(y0), beta, cap);
    std::mt19937_64 rng(cfg.rng_seed);

    SolveReport rep;
    rep.seed = cfg.rng_seed;
    rep.config = cfg;
    rep.algorithm = update_eta ? "anneal" : "fixed_eta";
    bool reached_stop = false;
    InnerResult inner;
    for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
        state.beta = beta;
        perturb_resources(state.locations, cfg.perturb_eps, diam, rng);

        bool solved = false;
        int attempts = cap.mode == CapacityMode::none ? static_cast<int>(k) + 1 : 2;
        for (int attempt = 0; attempt < attempts && !solved; ++attempt) {
            try {
                inner = inner_solve_impl(ds, state, cap, cfg, update_eta);
                solved = true;
            } catch (const StarvedClusterError& e) {
                if (cap.mode == CapacityMode::none) {
                    // Re-seed the starved resource on the heaviest cluster; the
                    // next perturbation separates the pair again.
                    Masses m = masses(ds, associations(ds, state, cfg.typed_assoc));
                    int host = argmax_mass(m.per_cluster);
                    std::copy(state.locations.row(host), state.locations.row(host) + ds.dim(),
                              state.locations.row(e.cluster));
                } else if (attempt == 0) {
                    perturb_resources(state.locations, std::max(cfg.perturb_eps, 1e-3), diam, rng);
                } else {
                    rep.converged = false;
                    rep.message = std::string(e.what()) + " at beta " + std::to_string(beta);
                }
            } catch (const InfeasibleAtBetaError& e) {
                if (attempt == 0) {
                    perturb_resources(state.locations, std::max(cfg.perturb_eps, 1e-3), diam, rng);
                } else {
                    rep.converged = false;
                    rep.message = e.what();
                }
            }
        }
        if (!solved) break;
        state = inner.state;

        AssocMatrix p = associations(ds, state, cfg.typed_assoc);
        Masses m = masses(ds, p);
        TrajectoryRecord rec;
        rec.beta = beta;
        rec.free_energy = free_energy(ds, state, cfg.typed_assoc).value;
        rec.distortion = distortion(ds, state.locations);
        rec.entropy = conditional_entropy(ds, p);
        rec.cluster_masses = m.per_cluster;
        rec.residual = capacity_residual(m, cap);
        rec.inner_iters = inner.iterations;
        rep.trajectory.push_back(std::move(rec));

        if (cfg.beta_max) {
            if (beta >= *cfg.beta_max * (1.0 - 1e-12)) {
                reached_stop = true;
                break;
            }
        } else if (max_row_entropy(p) < kHardRowEntropy) {
            reached_stop = true;
            break;
        }
        beta *= cfg.beta_growth;
    }

    if (!reached_stop && rep.message.empty()) {
        rep.converged = false;
        rep.message = "annealing stopped after " + std::to_string(cfg.max_outer_iters) +
                      " outer iterations before reaching the stop condition";
    }
    if (!inner.converged && rep.message.empty()) {
        rep.converged = false;
        rep.message = "final inner solve did not converge (displacement " +
                      std::to_string(inner.displacement) + ", eta change " +
                      std::to_string(inner.eta_change) + ")";
    }

    rep.final_state = state;
    rep.final_assoc = associations(ds, state, cfg.typed_assoc);
    rep.partition = harden(rep.final_assoc);
    rep.cluster_masses = masses(ds, rep.final_assoc);
    rep.distortion = distortion(ds, state.locations);
    rep.residual = capacity_residual(rep.cluster_masses, cap);
    rep.hard_counts.assign(k, 0);
    for (int a : rep.partition) rep.hard_counts[a]++;
    return rep;
}

}  // namespace detail

InnerResult inner_solve(const Dataset& ds, ClusterState state, const CapacitySpec& cap,
                        const AnnealConfig& cfg) {
    return detail::inner_solve_impl(ds, std::move(state), cap, cfg, true);
}

SolveReport anneal(const Dataset& ds, std::size_t k, const CapacitySpec& cap,
                   const AnnealConfig& cfg) {
    return detail::anneal_engine(ds, k, cap, cfg, true);
}

void perturb_resources(Matrix& locations, double eps, double diameter, std::mt19937_64& rng) {
    if (eps < 0.0) throw std::invalid_argument("perturbation magnitude must be nonnegative");
    std::uniform_real_distribution<double> noise(-eps, eps);
    for (double& v : locations.data) v += diameter * noise(rng);
}

DescentStep descent_step(const Dataset& ds, const ClusterState& state, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
    if (state.beta <= 0.0) throw std::invalid_argument("descent step requires beta > 0");
    AssocMatrix p = associations(ds, state);
    Masses m = masses(ds, p);
    Matrix g = centroid_update(ds, p);  // throws on starved clusters

    const std::size_t k = state.k();
    const std::size_t d = state.dim();
    DescentStep step;
    step.direction = Matrix(k, d);
    step.next_locations = sigma == 1.0 ? g : Matrix(k, d);
    for (std::size_t j = 0; j < k; ++j) {
        double gap2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double gap = state.locations(j, c) - g(j, c);
            gap2 += gap * gap;
            step.direction(j, c) = -2.0 * gap;
            if (sigma != 1.0)
                step.next_locations(j, c) = state.locations(j, c) - sigma * sigma * gap;
        }
        // direction . grad with grad_j = 2 p_j (y_j - g_j)
        step.dot -= 4.0 * m.per_cluster[j] * gap2;
    }
    return step;
}

ScaledInstance scale_instance(const Dataset& ds, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    ScaledInstance out;
    out.dataset = ds;
    for (double& v : out.dataset.points.data) v /= sigma;
    out.beta_factor = sigma * sigma;
    return out;
}

Partition harden(const AssocMatrix& assoc) {
    Partition assign(assoc.rows, 0);
    for (std::size_t i = 0; i < assoc.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < assoc.cols; ++j)
            if (assoc(i, j) > assoc(i, best)) best = j;
        assign[i] = static_cast<int>(best);
    }
    return assign;
}

double auto_beta_init(const Dataset& ds) {
    const std::size_t d = ds.dim();
    const std::vector<double> mu = ds.weighted_mean();
    Matrix cov(d, d, 0.0);
    std::vector<double> delta(d);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* x = ds.point(i);
        for (std::size_t c = 0; c < d; ++c) delta[c] = x[c] - mu[c];
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov(a, b) += ds.weights[i] * delta[a] * delta[b];
    }

    // Power iteration; the start vector is tilted so it is never orthogonal
    // to the leading eigenvector by symmetry.
    std::vector<double> v(d), cv(d);
    for (std::size_t c = 0; c < d; ++c) v[c] = 1.0 + 1e-3 * static_cast<double>(c);
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
        for (std::size_t a = 0; a < d; ++a) {
            cv[a] = 0.0;
            for (std::size_t b = 0; b < d; ++b) cv[a] += cov(a, b) * v[b];
        }
        double norm = 0.0;
        for (double x : cv) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-300) return 1.0;  // degenerate data, schedule start is moot
        for (std::size_t a = 0; a < d; ++a) v[a] = cv[a] / norm;
        lambda = norm;
    }
    if (lambda < 1e-300) return 1.0;
    return 0.5 / lambda;
}

double capacity_residual(const Masses& m, const CapacitySpec& cap) {
    switch (cap.mode) {
        case CapacityMode::per_cluster: {
            double worst = 0.0;
            for (std::size_t j = 0; j < cap.lambda.size(); ++j)
                worst = std::max(worst, std::abs(m.per_cluster[j] - cap.lambda[j]));
            return worst;
        }
        case CapacityMode::per_cluster_per_type: {
            double worst = 0.0;
            for (std::size_t j = 0; j < cap.lambda_matrix.rows; ++j)
                for (std::size_t t = 0; t < cap.lambda_matrix.cols; ++t)
                    worst = std::max(worst, std::abs(m.per_type(j, t) - cap.lambda_matrix(j, t)));
            return worst;
        }
        default:
            return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace capanneal
