#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "poolrate/dispersion.hpp"
#include "poolrate/instance.hpp"
#include "poolrate/rd_solver.hpp"

using namespace poolrate;

namespace {

struct Solved {
    Setup setup;
    RDCurve curve;
    LagrangianPoint point;
    InducedJoint joint;
    TiltedTable tilted;
    DispersionReport report;
};

Solved solve_mid(const ProblemInstance& inst, double frac = 0.5) {
    Solved sv;
    sv.setup = build_setup(inst);
    sv.curve = sweep_lambda(sv.setup, default_lambda_grid());
    double d = sv.curve.d_min + frac * (sv.curve.d_max - sv.curve.d_min);
    sv.point = solve_to_target_d(sv.setup, d);
    sv.joint = induced_joint(sv.setup, sv.point.selection);
    sv.tilted = tilted_information(sv.joint, sv.curve, d);
    sv.report = dispersion_report(sv.joint, sv.tilted, sv.point.selection);
    return sv;
}

ProblemInstance random_tiny(std::mt19937& rng) {
    std::uniform_int_distribution<int> wsize(1, 3), hsize(2, 4), msize(1, 2);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    ProblemInstance inst;
    int nw = wsize(rng), nh = hsize(rng), m = msize(rng);
    for (int i = 0; i < nw; ++i) inst.w_alphabet.push_back(std::to_string(i));
    inst.x_alphabet = {"0", "1"};
    inst.y_alphabet = {"0", "1"};
    std::vector<double> pw(static_cast<std::size_t>(nw));
    double sum = 0.0;
    for (double& v : pw) {
        v = u(rng);
        sum += v;
    }
    for (double& v : pw) v /= sum;
    inst.p_w = FiniteDist(pw);
    std::vector<std::vector<double>> pxw, pyx;
    for (int w = 0; w < nw; ++w) {
        double a = u(rng);
        pxw.push_back({a / (a + u(rng)), 0.0});
        pxw.back()[1] = 1.0 - pxw.back()[0];
    }
    for (int x = 0; x < 2; ++x) {
        double a = u(rng);
        pyx.push_back({a / (a + u(rng)), 0.0});
        pyx.back()[1] = 1.0 - pyx.back()[0];
    }
    inst.p_x_given_w = StochKernel(pxw);
    inst.p_y_given_x = StochKernel(pyx);
    std::uniform_int_distribution<int> ybit(0, 1);
    for (int h = 0; h < nh; ++h) {
        inst.h_alphabet.push_back("h" + std::to_string(h));
        inst.hypotheses.push_back(
            HypothesisSpec{std::nullopt, std::vector<int>{ybit(rng), ybit(rng)}});
    }
    inst.algorithm.kind = rng() % 2 == 0 ? AlgoKind::Erm : AlgoKind::Gibbs;
    inst.algorithm.beta = 1.0;
    inst.m = m;
    inst.n = 1;
    inst.b = 2.0;
    return inst;
}

} // namespace

TEST_CASE("induced joint: mass one, marginal consistency, rate check") {
    Solved sv = solve_mid(make_t1_asymmetric());
    double total = 0.0;
    for (const auto& a : sv.joint.atoms) total += a.p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sv.joint.mutual_information_uh() == doctest::Approx(sv.point.rate).epsilon(1e-8));
    CHECK(sv.joint.expected_distortion_wh() ==
          doctest::Approx(sv.point.avg_distortion).epsilon(1e-10));
    double hsum = 0.0;
    for (double v : sv.joint.p_h) hsum += v;
    CHECK(hsum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tilted information: mean identity and range errors") {
    Solved sv = solve_mid(make_t1_asymmetric());
    // E[jtilde] = I(U;H) + lambda*(E[d] - d_target), exactly by construction
    double expect = sv.report.R_check +
                    sv.tilted.lambda_star * (sv.report.d_achieved - sv.tilted.d);
    CHECK(sv.report.mean_tilted == doctest::Approx(expect).epsilon(1e-12));
    // near the attained d, E[jtilde] approximates the rate-distortion value
    double rw = rate_at_distortion(sv.curve, sv.tilted.d);
    if (rw > 1e-6) CHECK(std::abs(sv.report.mean_tilted - rw) / rw < 2e-2);
    // any NaN (off-support) entry must throw on access
    for (std::size_t i = 0; i < sv.tilted.values.size(); ++i) {
        if (!std::isnan(sv.tilted.values[i])) continue;
        std::size_t h = i % sv.tilted.nh;
        std::size_t u = (i / sv.tilted.nh) % sv.tilted.nu;
        std::size_t w = i / (sv.tilted.nh * sv.tilted.nu);
        CHECK_THROWS_AS(sv.tilted.at(w, u, h), RangeError);
        break;
    }
}

TEST_CASE("variance decomposition identities on T1 variants") {
    for (const ProblemInstance& inst : {make_t1(), make_t1_asymmetric()}) {
        Solved sv = solve_mid(inst);
        const DispersionReport& r = sv.report;
        CHECK(std::abs(r.V - (r.V_in + r.V_bet)) < 1e-9);
        CHECK(std::abs(r.V_in - r.v_in_reconstructed()) < 1e-9);
        CHECK(std::abs(r.V_bet - r.v_bet_reconstructed()) < 1e-9);
        CHECK(r.V >= -1e-15);
        CHECK(r.V_in >= -1e-12);
        CHECK(r.V_bet >= -1e-12);
        CHECK(r.third_abs_moment >= 0.0);
    }
}

TEST_CASE("variance decomposition identities on randomized tiny instances") {
    std::mt19937 rng(123);
    int done = 0;
    while (done < 20) {
        ProblemInstance inst = random_tiny(rng);
        Setup s;
        try {
            s = build_setup(inst);
        } catch (const ValidationError&) {
            continue;
        }
        RDCurve curve = sweep_lambda(s, default_lambda_grid());
        if (curve.d_max - curve.d_min < 1e-6) continue;  // degenerate instance
        double d = 0.5 * (curve.d_min + curve.d_max);
        LagrangianPoint pt = solve_to_target_d(s, d);
        InducedJoint joint = induced_joint(s, pt.selection);
        TiltedTable tt = tilted_information(joint, curve, d);
        DispersionReport r = dispersion_report(joint, tt, pt.selection);
        CHECK(std::abs(r.V - (r.V_in + r.V_bet)) < 1e-9);
        CHECK(std::abs(r.V_in - r.v_in_reconstructed()) < 1e-9);
        CHECK(std::abs(r.V_bet - r.v_bet_reconstructed()) < 1e-9);
        ++done;
    }
}

TEST_CASE("between-sub-distribution terms vanish on the symmetric instance") {
    // T1 is symmetric under swapping w, so conditional means are equal
    Solved sv = solve_mid(make_t1());
    CHECK(sv.report.V_bet == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("mutual information identities on the induced joint") {
    Solved sv = solve_mid(make_t1_asymmetric());
    JointTable table = sv.joint.to_table();
    MiIdentityResiduals res = mi_identity_check(table);
    CHECK(res.residual_ut < 1e-9);
    CHECK(res.residual_th < 1e-9);
}

TEST_CASE("mutual information identities on random Markov-chain joints") {
    // joints of the form P(u) S(t|u) A(h|t): the identities hold for any such chain
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> uni(0.05, 1.0);
    auto random_rows = [&](std::size_t r, std::size_t c) {
        std::vector<std::vector<double>> rows(r, std::vector<double>(c));
        for (auto& row : rows) {
            double sum = 0.0;
            for (double& v : row) {
                v = uni(rng);
                sum += v;
            }
            for (double& v : row) v /= sum;
        }
        return rows;
    };
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t nu = 2 + rng() % 3, nt = 2 + rng() % 3, nh = 2 + rng() % 3;
        auto pu_rows = random_rows(1, nu);
        auto srows = random_rows(nu, nt);
        auto arows = random_rows(nt, nh);
        std::vector<double> mass(nu * nt * nh);
        for (std::size_t u = 0; u < nu; ++u)
            for (std::size_t t = 0; t < nt; ++t)
                for (std::size_t h = 0; h < nh; ++h)
                    mass[(u * nt + t) * nh + h] = pu_rows[0][u] * srows[u][t] * arows[t][h];
        JointTable j({{"U", nu}, {"T", nt}, {"H", nh}}, mass);
        double iuh = mutual_information(j, "U", "H");
        double lhs1 = mutual_information(j, "U", "T") -
                      conditional_mutual_information(j, "U", "T", "H");
        double lhs2 = mutual_information(j, "T", "H") -
                      conditional_mutual_information(j, "T", "H", "U");
        CHECK(std::abs(iuh - lhs1) < 1e-9);
        CHECK(std::abs(iuh - lhs2) < 1e-9);
    }
}

TEST_CASE("information-density split telescopes exactly") {
    Solved sv = solve_mid(make_t1_asymmetric());
    CHECK(iota_split_check(sv.joint) < 1e-9);
}

TEST_CASE("iid counterpart report") {
    ProblemInstance inst = make_t1_marginal();
    IidCounterpartReport rep = iid_counterpart_report(inst, 2);
    CHECK(rep.mi_th >= 0.0);
    CHECK(rep.var_iota_th >= 0.0);
    CHECK(std::abs(rep.mi_wk_h_given_t) < 1e-12);
    CHECK_THROWS_AS(iid_counterpart_report(inst, 0), ValidationError);
}
