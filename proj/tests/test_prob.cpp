#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "poolrate/instance.hpp"
#include "poolrate/prob.hpp"

using namespace poolrate;

namespace {

// deterministic small random joint for property tests
JointTable random_joint(std::mt19937& rng, std::vector<JointTable::Axis> axes) {
    std::size_t total = 1;
    for (const auto& a : axes) total *= a.size;
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> mass(total);
    double sum = 0.0;
    for (double& v : mass) {
        v = u(rng);
        sum += v;
    }
    for (double& v : mass) v /= sum;
    return JointTable(std::move(axes), std::move(mass));
}

} // namespace

TEST_CASE("FiniteDist validation and renormalization") {
    CHECK_THROWS_AS(FiniteDist({0.5, -0.1, 0.6}), ValidationError);
    CHECK_THROWS_AS(FiniteDist(std::vector<double>{}), ValidationError);
    // deviation above renorm threshold rejected
    CHECK_THROWS_AS(FiniteDist({0.5, 0.4}), ValidationError);
    // tiny float noise renormalized
    FiniteDist d({0.5 + 2e-10, 0.5});
    double sum = d[0] + d[1];
    CHECK(std::abs(sum - 1.0) <= 1e-15);
    // exact sums preserved
    FiniteDist e({0.25, 0.75});
    CHECK(e[0] == 0.25);
    CHECK(e[1] == 0.75);
}

TEST_CASE("StochKernel rows are distributions") {
    CHECK_THROWS_AS(StochKernel({{0.5, 0.2}}), ValidationError);
    StochKernel k({{0.3, 0.7}, {1.0, 0.0}});
    CHECK(k.num_rows() == 2);
    CHECK(k(0, 1) == 0.7);
}

TEST_CASE("kl_divergence basics") {
    FiniteDist u({0.5, 0.5});
    CHECK(kl_divergence(u, u) == 0.0);
    FiniteDist point({1.0, 0.0});
    CHECK(kl_divergence(point, u) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    // support violation
    CHECK(std::isinf(kl_divergence(u, point)));
    CHECK_THROWS_AS(kl_divergence(u, FiniteDist({1.0})), ValidationError);

    // term-by-term scalar oracle
    FiniteDist p({0.8, 0.2}), q({0.2, 0.8});
    double oracle = 0.8 * std::log(0.8 / 0.2) + 0.2 * std::log(0.2 / 0.8);
    CHECK(kl_divergence(p, q) == doctest::Approx(oracle).epsilon(1e-15));
}

TEST_CASE("mutual_information on product and identity couplings") {
    JointTable prod({{"A", 2}, {"B", 2}}, {0.35 * 0.6, 0.35 * 0.4, 0.65 * 0.6, 0.65 * 0.4});
    CHECK(mutual_information(prod, "A", "B") == doctest::Approx(0.0).epsilon(1e-14));

    JointTable ident({{"A", 2}, {"B", 2}}, {0.5, 0.0, 0.0, 0.5});
    CHECK(mutual_information(ident, "A", "B") == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    CHECK_THROWS_AS(mutual_information(ident, "A", "Z"), ValidationError);
}

TEST_CASE("mutual_information matches atom-walk oracle on the T1 pool joint") {
    // fixed selection: always keep the first sample of the pool
    Setup s = build_setup(make_t1());
    std::size_t nu = s.num_pools(), nh = s.nh();
    std::vector<double> mass(nu * nh, 0.0);
    for (std::size_t u = 0; u < nu; ++u) {
        std::size_t t = static_cast<std::size_t>(s.feasible[u].front());
        for (std::size_t h = 0; h < nh; ++h) mass[u * nh + h] = s.pools.p_u[u] * s.algo(t, h);
    }
    JointTable joint({{"U", nu}, {"H", nh}}, mass);
    double mi = mutual_information(joint, "U", "H");

    // independent double loop over atoms
    std::vector<double> pu(nu, 0.0), ph(nh, 0.0);
    for (std::size_t u = 0; u < nu; ++u)
        for (std::size_t h = 0; h < nh; ++h) {
            pu[u] += joint.at({u, h});
            ph[h] += joint.at({u, h});
        }
    double oracle = 0.0;
    for (std::size_t u = 0; u < nu; ++u)
        for (std::size_t h = 0; h < nh; ++h) {
            double p = joint.at({u, h});
            if (p > 0.0) oracle += p * std::log(p / (pu[u] * ph[h]));
        }
    CHECK(mi == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("conditional_mutual_information degenerate cases") {
    // independent given each c
    std::vector<double> mass;
    std::vector<std::vector<double>> pa{{0.3, 0.7}, {0.6, 0.4}}, pb{{0.5, 0.5}, {0.2, 0.8}};
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) mass.push_back(0.5 * pa[c][a] * pb[c][b]);
    JointTable j({{"C", 2}, {"A", 2}, {"B", 2}}, mass);
    CHECK(conditional_mutual_information(j, "A", "B", "C") == doctest::Approx(0.0).epsilon(1e-14));

    // constant C equals unconditional MI
    JointTable j2({{"C", 1}, {"A", 2}, {"B", 2}}, {0.4, 0.1, 0.1, 0.4});
    CHECK(conditional_mutual_information(j2, "A", "B", "C") ==
          doctest::Approx(mutual_information(j2, "A", "B")).epsilon(1e-14));
}

TEST_CASE("Markov chain U->T->H has zero I(U;H|T)") {
    Setup s = build_setup(make_t1());
    std::size_t nu = s.num_pools(), nt = s.num_datasets(), nh = s.nh();
    // uniform selection over feasible datasets
    std::vector<double> mass(nu * nt * nh, 0.0);
    for (std::size_t u = 0; u < nu; ++u) {
        const auto& feas = s.feasible[u];
        for (int ti : feas) {
            std::size_t t = static_cast<std::size_t>(ti);
            for (std::size_t h = 0; h < nh; ++h)
                mass[(u * nt + t) * nh + h] +=
                    s.pools.p_u[u] * (1.0 / static_cast<double>(feas.size())) * s.algo(t, h);
        }
    }
    JointTable j({{"U", nu}, {"T", nt}, {"H", nh}}, mass);
    CHECK(conditional_mutual_information(j, "U", "H", "T") == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("information_density") {
    JointTable prod({{"A", 2}, {"B", 2}}, {0.25, 0.25, 0.25, 0.25});
    CHECK(information_density(prod, "A", "B", 0, 0) == doctest::Approx(0.0).epsilon(1e-14));

    JointTable ident({{"A", 2}, {"B", 2}}, {0.5, 0.0, 0.0, 0.5});
    CHECK(information_density(ident, "A", "B", 0, 0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(information_density(ident, "A", "B", 0, 1), RangeError);

    // expectation over support equals mutual information
    std::mt19937 rng(7);
    JointTable j = random_joint(rng, {{"A", 3}, {"B", 4}});
    double acc = 0.0;
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            acc += j.at({a, b}) * information_density(j, "A", "B", a, b);
    CHECK(acc == doctest::Approx(mutual_information(j, "A", "B")).epsilon(1e-10));
}

TEST_CASE("chain rule I(A;B,C) = I(A;B) + I(A;C|B) on random joints") {
    std::mt19937 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        JointTable j = random_joint(rng, {{"A", 2}, {"B", 3}, {"C", 2}});
        // I(A;BC) from a combined axis
        std::size_t na = 2, nb = 3, nc = 2;
        std::vector<double> mass(na * nb * nc);
        for (std::size_t a = 0; a < na; ++a)
            for (std::size_t b = 0; b < nb; ++b)
                for (std::size_t c = 0; c < nc; ++c)
                    mass[a * nb * nc + b * nc + c] = j.at({a, b, c});
        JointTable grouped({{"A", na}, {"BC", nb * nc}}, mass);
        double lhs = mutual_information(grouped, "A", "BC");
        double rhs = mutual_information(j, "A", "B") +
                     conditional_mutual_information(j, "A", "C", "B");
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("posterior_kernel") {
    // disjoint u-supports per w give point-mass posteriors
    StochKernel like({{0.4, 0.6, 0.0, 0.0}, {0.0, 0.0, 0.9, 0.1}});
    FiniteDist prior({0.3, 0.7});
    auto post = posterior_kernel(like, prior);
    CHECK(post.u_support.size() == 4);
    for (std::size_t r = 0; r < post.kernel.num_rows(); ++r) {
        double mx = std::max(post.kernel(r, 0), post.kernel(r, 1));
        CHECK(mx == doctest::Approx(1.0).epsilon(1e-14));
    }

    // symmetric likelihood with uniform prior gives symmetric posterior
    StochKernel sym({{0.8, 0.2}, {0.2, 0.8}});
    auto post2 = posterior_kernel(sym, FiniteDist({0.5, 0.5}));
    CHECK(post2.kernel(0, 0) == doctest::Approx(post2.kernel(1, 1)).epsilon(1e-14));

    // remixing with p_u reproduces the joint
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<std::vector<double>> rows(3, std::vector<double>(4));
    for (auto& row : rows) {
        double sum = 0.0;
        for (double& v : row) {
            v = u(rng);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
    StochKernel lk(rows);
    FiniteDist pw({0.2, 0.5, 0.3});
    auto p3 = posterior_kernel(lk, pw);
    for (std::size_t j = 0; j < p3.u_support.size(); ++j) {
        std::size_t uidx = p3.u_support[j];
        for (std::size_t w = 0; w < 3; ++w) {
            double joint_orig = pw[w] * lk(w, uidx);
            double joint_remix = p3.p_u[uidx] * p3.kernel(j, w);
            CHECK(joint_orig == doctest::Approx(joint_remix).epsilon(1e-12));
        }
    }

    CHECK_THROWS_AS(posterior_kernel(lk, FiniteDist({0.5, 0.5})), ValidationError);
}

TEST_CASE("T1 pool likelihood posterior matches a direct Bayes loop") {
    ProblemInstance inst = make_t1();
    PoolSpace ps = enumerate_pool_space(inst);
    StochKernel like(ps.p_u_given_w);
    auto post = posterior_kernel(like, inst.p_w);
    for (std::size_t j = 0; j < post.u_support.size(); ++j) {
        std::size_t u = post.u_support[j];
        double pu = 0.0;
        for (std::size_t w = 0; w < inst.nw(); ++w) pu += inst.p_w[w] * ps.p_u_given_w[w][u];
        for (std::size_t w = 0; w < inst.nw(); ++w) {
            double bayes = inst.p_w[w] * ps.p_u_given_w[w][u] / pu;
            CHECK(post.kernel(j, w) == doctest::Approx(bayes).epsilon(1e-12));
            CHECK(ps.p_w_given_u[u][w] == doctest::Approx(bayes).epsilon(1e-12));
        }
    }
}

TEST_CASE("JointTable marginals are valid distributions") {
    std::mt19937 rng(19);
    JointTable j = random_joint(rng, {{"A", 2}, {"B", 2}, {"C", 3}});
    for (const std::string& ax : {"A", "B", "C"}) {
        JointTable m = j.marginal({ax});
        double sum = 0.0;
        for (double v : m.mass()) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}
