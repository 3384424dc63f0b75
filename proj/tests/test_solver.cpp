#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "capanneal/baselines.hpp"
#include "capanneal/solver.hpp"
#include "test_util.hpp"

using namespace capanneal;
using testutil::dataset_1d;
using testutil::locations_1d;

TEST_CASE("centroid_update hard and uniform limits") {
    Matrix pts(4, 1);
    pts.data = {0, 1, 10, 11};
    Dataset ds = validate_dataset(pts);

    AssocMatrix hard(4, 2, 0.0);
    hard(0, 0) = hard(1, 0) = 1.0;
    hard(2, 1) = hard(3, 1) = 1.0;
    Matrix y = centroid_update(ds, hard);
    CHECK(y(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y(1, 0) == doctest::Approx(10.5).epsilon(1e-15));

    AssocMatrix uniform(4, 3, 1.0 / 3);
    Matrix yu = centroid_update(ds, uniform);
    for (std::size_t j = 0; j < 3; ++j) CHECK(yu(j, 0) == doctest::Approx(5.5).epsilon(1e-13));
}

TEST_CASE("centroid_update matches the quotient formula") {
    std::mt19937_64 rng(61);
    Dataset ds = testutil::random_dataset(rng, 6, 2, true);
    AssocMatrix p = testutil::random_assoc(rng, 6, 2);
    Matrix y = centroid_update(ds, p);
    for (std::size_t j = 0; j < 2; ++j) {
        double mass = 0.0;
        double num[2] = {0, 0};
        for (std::size_t i = 0; i < 6; ++i) {
            mass += ds.weights[i] * p(i, j);
            for (std::size_t c = 0; c < 2; ++c)
                num[c] += ds.weights[i] * p(i, j) * ds.points(i, c);
        }
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(y(j, c) == doctest::Approx(num[c] / mass).epsilon(1e-14));
    }
}

TEST_CASE("centroid_update flags the starved cluster") {
    Dataset ds = dataset_1d({0.0, 1.0});
    AssocMatrix p(2, 3, 0.0);
    p(0, 0) = 1.0;
    p(1, 2) = 1.0;  // cluster 1 gets nothing
    try {
        centroid_update(ds, p);
        FAIL("expected StarvedClusterError");
    } catch (const StarvedClusterError& e) {
        CHECK(e.cluster == 1);
    }
}

TEST_CASE("eta_update at beta 0 recovers lambda in one step") {
    std::mt19937_64 rng(67);
    Dataset ds = testutil::random_dataset(rng, 7, 1, true);
    CapacitySpec cap = CapacitySpec::sized({0.25, 0.45, 0.3});
    ClusterState s = make_state(testutil::random_points(rng, 3, 1), 0.0, cap);
    // start from a wrong eta so the update has to do the work
    s.log_eta(0, 0) = std::log(0.6);
    s.log_eta(1, 0) = std::log(0.2);
    s.log_eta(2, 0) = std::log(0.2);

    s.log_eta = eta_update(ds, s, cap);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::exp(s.log_eta(j, 0)) == doctest::Approx(cap.lambda[j]).epsilon(1e-13));
    Masses m = masses(ds, associations(ds, s));
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(m.per_cluster[j] == doctest::Approx(cap.lambda[j]).epsilon(1e-13));
}

TEST_CASE("eta_update fixed point is stationary") {
    std::mt19937_64 rng(71);
    Dataset ds = testutil::random_dataset(rng, 10, 1);
    CapacitySpec cap = CapacitySpec::sized({0.3, 0.7});
    ClusterState s = make_state(locations_1d({0.2, 0.7}), 1.0, cap);
    for (int it = 0; it < 3000; ++it) s.log_eta = eta_update(ds, s, cap);

    Masses m = masses(ds, associations(ds, s));
    CHECK(std::abs(m.per_cluster[0] - 0.3) < 1e-8);
    CHECK(std::abs(m.per_cluster[1] - 0.7) < 1e-8);

    Matrix next = eta_update(ds, s, cap);
    CHECK(testutil::max_abs_diff(next, s.log_eta) < 1e-8);
}

TEST_CASE("typed eta_update hits the capacity matrix") {
    Matrix pts(6, 1);
    pts.data = {0.0, 0.1, 0.2, 0.8, 0.9, 1.0};
    Dataset ds = validate_dataset(pts, {}, {0, 0, 1, 1, 0, 1});
    std::vector<double> tw = ds.type_weights();

    Matrix lambda(2, 2);
    lambda(0, 0) = 0.6 * tw[0];
    lambda(1, 0) = 0.4 * tw[0];
    lambda(0, 1) = 0.3 * tw[1];
    lambda(1, 1) = 0.7 * tw[1];
    CapacitySpec cap = CapacitySpec::typed(lambda);
    cap.check_compatible(ds);

    ClusterState s = make_state(locations_1d({0.1, 0.9}), 2.0, cap);
    for (int it = 0; it < 4000; ++it) s.log_eta = eta_update(ds, s, cap);
    Masses m = masses(ds, associations(ds, s));
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t t = 0; t < 2; ++t)
            CHECK(std::abs(m.per_type(j, t) - cap.lambda_matrix(j, t)) < 1e-8);
}

TEST_CASE("eta_update rejects an unconstrained spec") {
    Dataset ds = dataset_1d({0.0, 1.0});
    ClusterState s = make_state(locations_1d({0.5}), 1.0);
    CHECK_THROWS_AS(eta_update(ds, s, CapacitySpec::unconstrained()), std::invalid_argument);
}

TEST_CASE("inner_solve with one cluster lands on the weighted mean") {
    std::mt19937_64 rng(73);
    Dataset ds = testutil::random_dataset(rng, 9, 2, true);
    AnnealConfig cfg;
    InnerResult res =
        inner_solve(ds, make_state(testutil::random_points(rng, 1, 2), 5.0),
                    CapacitySpec::unconstrained(), cfg);
    CHECK(res.converged);
    std::vector<double> mean = ds.weighted_mean();
    for (std::size_t c = 0; c < 2; ++c)
        CHECK(res.state.locations(0, c) == doctest::Approx(mean[c]).epsilon(1e-12));
}

TEST_CASE("symmetric pair: no split below the critical beta, split above") {
    Dataset ds = dataset_1d({-1.0, 1.0});
    AnnealConfig cfg;

    InnerResult cold = inner_solve(ds, make_state(locations_1d({-0.1, 0.1}), 0.3),
                                   CapacitySpec::unconstrained(), cfg);
    CHECK(cold.converged);
    CHECK(std::abs(cold.state.locations(0, 0)) < 1e-6);
    CHECK(std::abs(cold.state.locations(1, 0)) < 1e-6);

    InnerResult hot = inner_solve(ds, make_state(locations_1d({-0.1, 0.1}), 10.0),
                                  CapacitySpec::unconstrained(), cfg);
    CHECK(hot.converged);
    CHECK(hot.state.locations(0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(hot.state.locations(1, 0) == doctest::Approx(1.0).epsilon(1e-6));
    Masses m = masses(ds, associations(ds, hot.state));
    CHECK(m.per_cluster[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(hot.free_energy_monotone);

    // matches the exhaustive optimum {-1},{+1}
    OracleResult oracle = brute_force_unconstrained(ds, 2);
    CHECK(distortion(ds, hot.state.locations) == doctest::Approx(oracle.best_cost).epsilon(1e-9));
}

TEST_CASE("a converged state barely moves under one more centroid step") {
    std::mt19937_64 rng(79);
    Dataset ds = testutil::random_dataset(rng, 12, 2);
    AnnealConfig cfg;
    InnerResult res = inner_solve(ds, make_state(testutil::random_points(rng, 3, 2), 8.0),
                                  CapacitySpec::unconstrained(), cfg);
    REQUIRE(res.converged);
    Matrix next = centroid_update(ds, associations(ds, res.state));
    double disp = 0.0;
    for (std::size_t j = 0; j < 3; ++j)
        disp = std::max(disp, std::sqrt(squared_distance(next.row(j), res.state.locations.row(j), 2)));
    CHECK(disp < cfg.inner_tol * ds.diameter());
}

TEST_CASE("anneal with K = N drives distortion to zero") {
    std::mt19937_64 rng(83);
    Dataset ds = testutil::random_dataset(rng, 6, 2);
    AnnealConfig cfg;
    SolveReport rep = anneal(ds, 6, CapacitySpec::unconstrained(), cfg);
    CHECK(rep.distortion < 1e-8);
}

TEST_CASE("anneal matches the exhaustive oracle on small planar instances") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        std::mt19937_64 rng(seed);
        Dataset ds = testutil::random_dataset(rng, 8, 2);
        AnnealConfig cfg;
        cfg.rng_seed = seed;
        SolveReport rep = anneal(ds, 2, CapacitySpec::unconstrained(), cfg);
        OracleResult oracle = brute_force_unconstrained(ds, 2);
        CHECK(rep.distortion <= oracle.best_cost + 1e-6);
        CHECK(rep.distortion >= oracle.best_cost - 1e-12);
    }
}

TEST_CASE("anneal trajectory is well formed") {
    std::mt19937_64 rng(89);
    Dataset ds = testutil::random_dataset(rng, 10, 2);
    AnnealConfig cfg;
    SolveReport rep = anneal(ds, 2, CapacitySpec::unconstrained(), cfg);
    REQUIRE(!rep.trajectory.empty());
    double prev = 0.0;
    for (const auto& rec : rep.trajectory) {
        CHECK(rec.beta > prev);
        CHECK(std::isfinite(rec.free_energy));
        prev = rec.beta;
    }
    CHECK(rep.converged);
}

TEST_CASE("per-cluster constraints are met at convergence") {
    std::mt19937_64 rng(97);
    Dataset ds = testutil::random_dataset(rng, 20, 2);
    CapacitySpec cap = CapacitySpec::sized({0.3, 0.7});
    AnnealConfig cfg;
    cfg.beta_max = 200.0;
    SolveReport rep = anneal(ds, 2, cap, cfg);
    CHECK(rep.residual <= 1e-6);
    double sum = 0.0;
    for (double m : rep.cluster_masses.per_cluster) sum += m;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("typed constraints are met at convergence") {
    std::mt19937_64 rng(101);
    Matrix pts = testutil::random_points(rng, 12, 1);
    std::vector<int> types = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 0};
    Dataset ds = validate_dataset(pts, {}, types);
    std::vector<double> tw = ds.type_weights();

    Matrix lambda(2, 2);
    lambda(0, 0) = 0.55 * tw[0];
    lambda(1, 0) = 0.45 * tw[0];
    lambda(0, 1) = 0.35 * tw[1];
    lambda(1, 1) = 0.65 * tw[1];
    CapacitySpec cap = CapacitySpec::typed(lambda);

    AnnealConfig cfg;
    cfg.beta_max = 100.0;
    SolveReport rep = anneal(ds, 2, cap, cfg);
    CHECK(rep.residual <= 1e-6);
}

TEST_CASE("translation equivariance") {
    std::mt19937_64 rng(103);
    Dataset ds = testutil::random_dataset(rng, 10, 2);
    Dataset shifted = ds;
    const double t[2] = {3.7, -1.2};
    for (std::size_t i = 0; i < shifted.size(); ++i)
        for (std::size_t c = 0; c < 2; ++c) shifted.points(i, c) += t[c];

    AnnealConfig cfg;
    cfg.rng_seed = 5;
    SolveReport a = anneal(ds, 2, CapacitySpec::unconstrained(), cfg);
    SolveReport b = anneal(shifted, 2, CapacitySpec::unconstrained(), cfg);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(b.final_state.locations(j, c) - a.final_state.locations(j, c) ==
                  doctest::Approx(t[c]).epsilon(1e-8));
}

TEST_CASE("scaling equivariance through scale_instance") {
    std::mt19937_64 rng(107);
    Dataset ds = testutil::random_dataset(rng, 10, 2);
    const double sigma = 2.0;
    ScaledInstance scaled = scale_instance(ds, sigma);

    AnnealConfig cfg;
    cfg.rng_seed = 9;
    cfg.beta_init = 0.5;
    cfg.beta_max = 5000.0;
    AnnealConfig cfg_scaled = cfg;
    cfg_scaled.beta_init = *cfg.beta_init * scaled.beta_factor;
    cfg_scaled.beta_max = *cfg.beta_max * scaled.beta_factor;

    SolveReport a = anneal(ds, 2, CapacitySpec::unconstrained(), cfg);
    SolveReport b = anneal(scaled.dataset, 2, CapacitySpec::unconstrained(), cfg_scaled);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(b.final_state.locations(j, c) ==
                  doctest::Approx(a.final_state.locations(j, c) / sigma).epsilon(1e-8));
}

TEST_CASE("perturb_resources contract") {
    Matrix y(2, 2, 1.0);
    std::mt19937_64 rng(1);
    Matrix before = y;
    perturb_resources(y, 0.0, 10.0, rng);
    CHECK(testutil::max_abs_diff(y, before) == 0.0);

    std::mt19937_64 r1(7), r2(7);
    Matrix a = before, b = before;
    perturb_resources(a, 0.01, 10.0, r1);
    perturb_resources(b, 0.01, 10.0, r2);
    CHECK(testutil::max_abs_diff(a, b) == 0.0);
    // coincident rows become distinct
    CHECK(squared_distance(a.row(0), a.row(1), 2) > 0.0);

    CHECK_THROWS_AS(perturb_resources(y, -1.0, 1.0, r1), std::invalid_argument);
}

TEST_CASE("descent_step reproduces the centroid map at sigma 1") {
    std::mt19937_64 rng(109);
    Dataset ds = testutil::random_dataset(rng, 8, 2, true);
    ClusterState s = make_state(testutil::random_points(rng, 3, 2), 3.0);
    DescentStep step = descent_step(ds, s, 1.0);
    Matrix g = centroid_update(ds, associations(ds, s));
    CHECK(testutil::max_abs_diff(step.next_locations, g) == 0.0);  // same bits
    CHECK(step.dot < 0.0);

    // sigma != 1 interpolates along the same direction
    DescentStep half = descent_step(ds, s, 0.5);
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(half.next_locations(j, c) ==
                  doctest::Approx(s.locations(j, c) - 0.25 * (s.locations(j, c) - g(j, c)))
                      .epsilon(1e-15));
}

TEST_CASE("descent_step is stationary at the fixed point") {
    std::mt19937_64 rng(113);
    Dataset ds = testutil::random_dataset(rng, 7, 2);
    ClusterState s = make_state(testutil::random_points(rng, 2, 2), 4.0);
    for (int it = 0; it < 6000; ++it) s.locations = centroid_update(ds, associations(ds, s));
    DescentStep step = descent_step(ds, s, 1.0);
    CHECK(std::abs(step.dot) <= 1e-12);
    CHECK(testutil::max_abs_diff(step.next_locations, s.locations) < 1e-10);
}

TEST_CASE("scale_instance basics and association equivalence") {
    Dataset ds = dataset_1d({0.0, 2.0});
    ScaledInstance id = scale_instance(ds, 1.0);
    CHECK(id.beta_factor == 1.0);
    CHECK(id.dataset.points(1, 0) == 2.0);

    ScaledInstance half = scale_instance(ds, 2.0);
    CHECK(half.dataset.points(1, 0) == 1.0);
    CHECK(half.beta_factor == 4.0);
    CHECK_THROWS_AS(scale_instance(ds, 0.0), std::invalid_argument);

    std::mt19937_64 rng(127);
    Dataset rds = testutil::random_dataset(rng, 9, 2, true);
    Matrix y = testutil::random_points(rng, 3, 2);
    const double beta = 1.7, sigma = 2.0;
    AssocMatrix base = associations(rds, make_state(y, beta));

    ScaledInstance sc = scale_instance(rds, sigma);
    Matrix ys = y;
    for (double& v : ys.data) v /= sigma;
    AssocMatrix scaled = associations(sc.dataset, make_state(ys, beta * sc.beta_factor));
    CHECK(testutil::max_abs_diff(base, scaled) < 1e-12);
}

TEST_CASE("harden takes the argmax with ties to the lowest index") {
    AssocMatrix p(3, 2, 0.0);
    p(0, 0) = 1.0;
    p(1, 1) = 1.0;
    p(2, 0) = 0.5;
    p(2, 1) = 0.5;
    Partition part = harden(p);
    CHECK(part[0] == 0);
    CHECK(part[1] == 1);
    CHECK(part[2] == 0);
}

TEST_CASE("harden at large beta equals the nearest-resource rule") {
    std::mt19937_64 rng(131);
    Dataset ds = testutil::random_dataset(rng, 15, 2);
    Matrix y = testutil::random_points(rng, 4, 2);
    Partition part = harden(associations(ds, make_state(y, 1e6)));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        double best_d = squared_distance(ds.point(i), y.row(0), 2);
        for (std::size_t j = 1; j < 4; ++j) {
            double d = squared_distance(ds.point(i), y.row(j), 2);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        CHECK(part[i] == static_cast<int>(best));
    }
}

TEST_CASE("auto_beta_init is half the inverse top covariance eigenvalue") {
    Dataset ds = dataset_1d({0.0, 1.0});
    // variance of {0,1} with uniform weights is 1/4
    CHECK(auto_beta_init(ds) == doctest::Approx(2.0).epsilon(1e-9));
    std::mt19937_64 rng(137);
    Dataset rds = testutil::random_dataset(rng, 20, 3, true);
    double b = auto_beta_init(rds);
    CHECK(b > 0.0);
    CHECK(std::isfinite(b));
}

TEST_CASE("anneal rejects bad inputs and reports schedule exhaustion") {
    Dataset ds = dataset_1d({0.0, 1.0});
    AnnealConfig cfg;
    CHECK_THROWS_AS(anneal(ds, 3, CapacitySpec::unconstrained(), cfg), std::invalid_argument);
    CHECK_THROWS_AS(anneal(ds, 1, CapacitySpec::sized({0.5, 0.5}), cfg), std::invalid_argument);

    AnnealConfig tiny;
    tiny.max_outer_iters = 2;
    tiny.beta_init = 1e-6;  // far below any hardening
    std::mt19937_64 rng(139);
    Dataset rds = testutil::random_dataset(rng, 6, 2);
    SolveReport rep = anneal(rds, 2, CapacitySpec::unconstrained(), tiny);
    CHECK(!rep.converged);
    CHECK(!rep.message.empty());
}
