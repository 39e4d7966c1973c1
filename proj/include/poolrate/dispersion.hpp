#ifndef POOLRATE_DISPERSION_HPP
#define POOLRATE_DISPERSION_HPP

// Tilted information over the induced joint support, the rate-dispersion
// function V with its within/between decompositions, Berry-Esseen moments,
// and the mutual-information identity diagnostics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "poolrate/errors.hpp"
#include "poolrate/instance.hpp"
#include "poolrate/prob.hpp"
#include "poolrate/rd_solver.hpp"

namespace poolrate {

// Exact product-of-kernels joint P_W x P_{U|W} x S(t|u) x P_A(h|t),
// restricted to positive atoms. t indexes Setup::datasets.
struct InducedJoint {
    struct Atom {
        std::size_t w, u, t, h;
        double p;
    };
    const Setup* setup = nullptr;
    std::vector<Atom> atoms;
    std::vector<double> p_h;                        // marginal over H
    std::vector<std::vector<double>> p_h_given_u;   // U x H
    std::vector<std::vector<double>> p_uh;          // U x H joint
    std::vector<std::vector<double>> p_wh;          // W x H joint

    double iota_uh(std::size_t u, std::size_t h) const {
        double puh = p_uh[u][h];
        if (puh <= 0.0) throw RangeError("iota_uh: (u,h) outside support");
        return std::log(puh / (setup->pools.p_u[u] * p_h[h]));
    }
    double iota_wh(std::size_t w, std::size_t h) const {
        double pwh = p_wh[w][h];
        if (pwh <= 0.0) throw RangeError("iota_wh: (w,h) outside support");
        return std::log(pwh / (setup->inst.p_w[w] * p_h[h]));
    }
    double mutual_information_uh() const {
        double mi = 0.0;
        for (const Atom& a : atoms) mi += a.p * iota_uh(a.u, a.h);
        return mi;
    }
    double expected_distortion_wh() const {
        double d = 0.0;
        for (const Atom& a : atoms) d += a.p * setup->d_wh[a.w][a.h];
        return d;
    }
    // Full (W,U,T,H) table for the prob-core identity checks.
    JointTable to_table() const {
        const Setup& s = *setup;
        std::size_t nu = s.num_pools(), nt = s.num_datasets(), nh = s.nh(), nw = s.nw();
        std::vector<double> mass(nw * nu * nt * nh, 0.0);
        for (const Atom& a : atoms)
            mass[((a.w * nu + a.u) * nt + a.t) * nh + a.h] += a.p;
        return JointTable({{"W", nw}, {"U", nu}, {"T", nt}, {"H", nh}}, std::move(mass));
    }
};

inline InducedJoint induced_joint(const Setup& s,
                                  const std::vector<std::vector<double>>& selection) {
    if (selection.size() != s.num_pools())
        throw ValidationError("induced_joint: selection row count does not match pool support");
    InducedJoint j;
    j.setup = &s;
    j.p_h.assign(s.nh(), 0.0);
    j.p_h_given_u.assign(s.num_pools(), std::vector<double>(s.nh(), 0.0));
    j.p_uh.assign(s.num_pools(), std::vector<double>(s.nh(), 0.0));
    j.p_wh.assign(s.nw(), std::vector<double>(s.nh(), 0.0));
    double total = 0.0;
    for (std::size_t w = 0; w < s.nw(); ++w) {
        double pw = s.inst.p_w[w];
        if (pw <= 0.0) continue;
        for (std::size_t u = 0; u < s.num_pools(); ++u) {
            double puw = s.pools.p_u_given_w[w][u];
            if (puw <= 0.0) continue;
            const auto& feas = s.feasible[u];
            for (std::size_t jf = 0; jf < feas.size(); ++jf) {
                double st = selection[u][jf];
                if (st <= 0.0) continue;
                std::size_t t = static_cast<std::size_t>(feas[jf]);
                for (std::size_t h = 0; h < s.nh(); ++h) {
                    double ph = s.algo(t, h);
                    if (ph <= 0.0) continue;
                    double p = pw * puw * st * ph;
                    j.atoms.push_back({w, u, t, h, p});
                    total += p;
                }
            }
        }
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ValidationError("induced_joint: mass deficit " + std::to_string(1.0 - total));
    for (const auto& a : j.atoms) {
        j.p_h[a.h] += a.p;
        j.p_uh[a.u][a.h] += a.p;
        j.p_wh[a.w][a.h] += a.p;
    }
    for (std::size_t u = 0; u < s.num_pools(); ++u)
        for (std::size_t h = 0; h < s.nh(); ++h)
            j.p_h_given_u[u][h] = j.p_uh[u][h] / s.pools.p_u[u];
    return j;
}

// j~(w,u,h) = iota_{U;H}(u;h) + lambda* (d(w;h) - d) over the joint support.
struct TiltedTable {
    double d = 0.0;
    double lambda_star = 0.0;
    // dense over (w,u,h); NaN off support
    std::vector<double> values;
    std::size_t nu = 0, nh = 0;

    double at(std::size_t w, std::size_t u, std::size_t h) const {
        double v = values[(w * nu + u) * nh + h];
        if (std::isnan(v)) throw RangeError("TiltedTable: (w,u,h) outside support");
        return v;
    }
};

// lambda* is taken from the curve slope at the ACHIEVED distortion of the
// supplied joint, keeping the tilt consistent with the solved point.
inline TiltedTable tilted_information(const InducedJoint& joint, const RDCurve& curve, double d) {
    const Setup& s = *joint.setup;
    TiltedTable t;
    t.d = d;
    double achieved = joint.expected_distortion_wh();
    double da = std::clamp(achieved, std::nextafter(curve.d_min, curve.d_max),
                           std::nextafter(curve.d_max, curve.d_min));
    t.lambda_star = lambda_star(curve, da);
    t.nu = s.num_pools();
    t.nh = s.nh();
    t.values.assign(s.nw() * t.nu * t.nh, std::numeric_limits<double>::quiet_NaN());
    for (const auto& a : joint.atoms) {
        double v = joint.iota_uh(a.u, a.h) + t.lambda_star * (s.d_wh[a.w][a.h] - d);
        t.values[(a.w * t.nu + a.u) * t.nh + a.h] = v;
    }
    return t;
}

struct DispersionReport {
    double R_check = 0.0;  // I(U;H) of the joint
    double d_target = 0.0;
    double d_achieved = 0.0;
    double lambda_star = 0.0;
    double V = 0.0;
    double V_in = 0.0, V_bet = 0.0;
    // 7-term V_in ladder
    double V_in_U_iota = 0.0, V_in_S_iota = 0.0, V_in_A_iota = 0.0;
    double V_in_U_d = 0.0, V_in_S_d = 0.0, V_in_A_d = 0.0;
    double V_in_cov = 0.0;
    // 3-term V_bet, inner iota_{U;H} convention (satisfies the exact identity)
    double V_bet_iota = 0.0, V_bet_d = 0.0, V_bet_cov = 0.0;
    // main-text variant with iota_{W;H} inside the inner expectation
    double V_bet_iota_wh = 0.0, V_bet_cov_wh = 0.0, V_bet_wh_variant = 0.0;
    double third_abs_moment = 0.0;  // E|j~ - E j~|^3
    double berry_esseen_B = 0.0;    // 6 * third moment / V^{3/2}
    bool zero_dispersion = false;   // V = 0: B reported as undefined
    double mean_tilted = 0.0;

    double v_in_reconstructed() const {
        double l2 = lambda_star * lambda_star;
        return V_in_U_iota + V_in_S_iota + V_in_A_iota + l2 * (V_in_U_d + V_in_S_d + V_in_A_d) +
               2.0 * lambda_star * V_in_cov;
    }
    double v_bet_reconstructed() const {
        return V_bet_iota + lambda_star * lambda_star * V_bet_d + 2.0 * lambda_star * V_bet_cov;
    }
};

namespace detail {

struct MeanVar {
    double mean = 0.0, var = 0.0;
};

// mean/variance of values under weights (weights need not sum to 1; they are
// normalized internally).
inline MeanVar weighted_mean_var(const std::vector<double>& w, const std::vector<double>& v) {
    double tw = 0.0, m = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        tw += w[i];
        m += w[i] * v[i];
    }
    if (tw <= 0.0) return {};
    m /= tw;
    double var = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) var += w[i] * (v[i] - m) * (v[i] - m);
    return {m, var / tw};
}

} // namespace detail

// Exact summation over the enumerated joint; no sampling anywhere.
inline DispersionReport dispersion_report(const InducedJoint& joint, const TiltedTable& tilted,
                                          const std::vector<std::vector<double>>& selection) {
    const Setup& s = *joint.setup;
    DispersionReport rep;
    rep.d_target = tilted.d;
    rep.lambda_star = tilted.lambda_star;
    rep.R_check = joint.mutual_information_uh();
    rep.d_achieved = joint.expected_distortion_wh();

    // full-joint moments of j~
    double mean = 0.0;
    for (const auto& a : joint.atoms) mean += a.p * tilted.at(a.w, a.u, a.h);
    double var = 0.0, m3 = 0.0;
    for (const auto& a : joint.atoms) {
        double dev = tilted.at(a.w, a.u, a.h) - mean;
        var += a.p * dev * dev;
        m3 += a.p * std::abs(dev) * std::abs(dev) * std::abs(dev);
    }
    rep.mean_tilted = mean;
    rep.V = var;
    rep.third_abs_moment = m3;
    if (var > 0.0) {
        rep.berry_esseen_B = 6.0 * m3 / std::pow(var, 1.5);
    } else {
        rep.zero_dispersion = true;
        rep.berry_esseen_B = std::numeric_limits<double>::quiet_NaN();
    }

    double lam = tilted.lambda_star;
    std::size_t nw = s.nw();
    std::vector<double> pw(nw), ew_j(nw, 0.0);         // E[j~ | w]
    std::vector<double> ew_iota_uh(nw, 0.0), ew_iota_wh(nw, 0.0), ew_d(nw, 0.0);

    for (std::size_t w = 0; w < nw; ++w) {
        pw[w] = s.inst.p_w[w];
        if (pw[w] <= 0.0) continue;

        // conditional law given w over (u, t, h)
        struct CAtom {
            std::size_t u, t, h;
            double p;  // conditional probability given w
        };
        std::vector<CAtom> catoms;
        for (std::size_t u = 0; u < s.num_pools(); ++u) {
            double puw = s.pools.p_u_given_w[w][u];
            if (puw <= 0.0) continue;
            const auto& feas = s.feasible[u];
            for (std::size_t jf = 0; jf < feas.size(); ++jf) {
                double st = selection[u][jf];
                if (st <= 0.0) continue;
                std::size_t t = static_cast<std::size_t>(feas[jf]);
                for (std::size_t h = 0; h < s.nh(); ++h) {
                    double ph = s.algo(t, h);
                    if (ph <= 0.0) continue;
                    catoms.push_back({u, t, h, puw * st * ph});
                }
            }
        }

        double e_iota = 0.0, e_d = 0.0, e_j = 0.0, e_iota_wh = 0.0;
        for (const auto& a : catoms) {
            double iota = joint.iota_uh(a.u, a.h);
            e_iota += a.p * iota;
            e_d += a.p * s.d_wh[w][a.h];
            e_j += a.p * tilted.at(w, a.u, a.h);
            e_iota_wh += a.p * joint.iota_wh(w, a.h);
        }
        ew_j[w] = e_j;
        ew_iota_uh[w] = e_iota;
        ew_iota_wh[w] = e_iota_wh;
        ew_d[w] = e_d;

        // within-w variance of j~ and its covariance split
        double var_j = 0.0, var_iota = 0.0, var_d = 0.0, cov = 0.0;
        for (const auto& a : catoms) {
            double di = joint.iota_uh(a.u, a.h) - e_iota;
            double dd = s.d_wh[w][a.h] - e_d;
            double dj = tilted.at(w, a.u, a.h) - e_j;
            var_j += a.p * dj * dj;
            var_iota += a.p * di * di;
            var_d += a.p * dd * dd;
            cov += a.p * di * dd;
        }
        rep.V_in += pw[w] * var_j;
        rep.V_in_cov += pw[w] * cov;

        // law-of-total-variance ladder over U -> T -> H, for iota and d separately
        // level U: variance over P_{U|w} of E[. | u]
        std::vector<double> wu, eu_iota, eu_d;
        for (std::size_t u = 0; u < s.num_pools(); ++u) {
            double puw = s.pools.p_u_given_w[w][u];
            if (puw <= 0.0) continue;
            const auto& feas = s.feasible[u];
            double ei = 0.0, ed = 0.0;
            double var_s_iota_u = 0.0, var_s_d_u = 0.0;  // filled below
            std::vector<double> wt, et_iota, et_d;
            for (std::size_t jf = 0; jf < feas.size(); ++jf) {
                double st = selection[u][jf];
                if (st <= 0.0) continue;
                std::size_t t = static_cast<std::size_t>(feas[jf]);
                double eti = 0.0, etd = 0.0, vai = 0.0, vad = 0.0;
                for (std::size_t h = 0; h < s.nh(); ++h) {
                    double ph = s.algo(t, h);
                    if (ph <= 0.0) continue;
                    eti += ph * joint.iota_uh(u, h);
                    etd += ph * s.d_wh[w][h];
                }
                for (std::size_t h = 0; h < s.nh(); ++h) {
                    double ph = s.algo(t, h);
                    if (ph <= 0.0) continue;
                    vai += ph * (joint.iota_uh(u, h) - eti) * (joint.iota_uh(u, h) - eti);
                    vad += ph * (s.d_wh[w][h] - etd) * (s.d_wh[w][h] - etd);
                }
                wt.push_back(st);
                et_iota.push_back(eti);
                et_d.push_back(etd);
                rep.V_in_A_iota += pw[w] * puw * st * vai;
                rep.V_in_A_d += pw[w] * puw * st * vad;
            }
            auto mvi = detail::weighted_mean_var(wt, et_iota);
            auto mvd = detail::weighted_mean_var(wt, et_d);
            var_s_iota_u = mvi.var;
            var_s_d_u = mvd.var;
            ei = mvi.mean;
            ed = mvd.mean;
            rep.V_in_S_iota += pw[w] * puw * var_s_iota_u;
            rep.V_in_S_d += pw[w] * puw * var_s_d_u;
            wu.push_back(puw);
            eu_iota.push_back(ei);
            eu_d.push_back(ed);
        }
        rep.V_in_U_iota += pw[w] * detail::weighted_mean_var(wu, eu_iota).var;
        rep.V_in_U_d += pw[w] * detail::weighted_mean_var(wu, eu_d).var;
    }

    rep.V_bet = detail::weighted_mean_var(pw, ew_j).var;
    rep.V_bet_iota = detail::weighted_mean_var(pw, ew_iota_uh).var;
    rep.V_bet_d = detail::weighted_mean_var(pw, ew_d).var;
    {
        auto mi = detail::weighted_mean_var(pw, ew_iota_uh);
        auto md = detail::weighted_mean_var(pw, ew_d);
        double cov = 0.0, tw = 0.0;
        for (std::size_t w = 0; w < nw; ++w) {
            tw += pw[w];
            cov += pw[w] * (ew_iota_uh[w] - mi.mean) * (ew_d[w] - md.mean);
        }
        rep.V_bet_cov = cov / tw;
        // main-text variant with iota_{W;H} inside the inner expectation
        auto miw = detail::weighted_mean_var(pw, ew_iota_wh);
        double covw = 0.0;
        for (std::size_t w = 0; w < nw; ++w)
            covw += pw[w] * (ew_iota_wh[w] - miw.mean) * (ew_d[w] - md.mean);
        rep.V_bet_iota_wh = miw.var;
        rep.V_bet_cov_wh = covw / tw;
        rep.V_bet_wh_variant = miw.var + lam * lam * md.var + 2.0 * lam * (covw / tw);
    }

    if (rep.V == 0.0) {
        double resid = std::abs(rep.V_in) + std::abs(rep.V_bet);
        if (resid > 1e-9)
            throw ValidationError("dispersion_report: zero V with nonzero sub-term residual");
    }
    return rep;
}

// Appendix-style identity residuals: I(U;H) vs I(U;T)-I(U;T|H) and
// I(T;H)-I(T;H|U).
struct MiIdentityResiduals {
    double residual_ut = 0.0;
    double residual_th = 0.0;
};

inline MiIdentityResiduals mi_identity_check(const JointTable& joint) {
    double iuh = mutual_information(joint, "U", "H");
    double iut = mutual_information(joint, "U", "T");
    double iut_h = conditional_mutual_information(joint, "U", "T", "H");
    double ith = mutual_information(joint, "T", "H");
    double ith_u = conditional_mutual_information(joint, "T", "H", "U");
    return {std::abs(iuh - (iut - iut_h)), std::abs(iuh - (ith - ith_u))};
}

// Max residual of the telescoping split
// iota_{U;H}(u;h) = log(P_A(h|t)/P_H(h)) + log(P_{H|U}(h|u)/P_A(h|t)).
inline double iota_split_check(const InducedJoint& joint) {
    const Setup& s = *joint.setup;
    double worst = 0.0;
    for (const auto& a : joint.atoms) {
        double lhs = joint.iota_uh(a.u, a.h);
        double t_part = std::log(s.algo(a.t, a.h) / joint.p_h[a.h]);
        double delta = std::log(joint.p_h_given_u[a.u][a.h] / s.algo(a.t, a.h));
        worst = std::max(worst, std::abs(lhs - (t_part + delta)));
    }
    return worst;
}

// Side-by-side i.i.d.-sampling record: I(T;H) and Var(iota_{T;H}) under the
// per-letter i.i.d. construction with n = k.
struct IidCounterpartReport {
    int k = 0;
    double mi_th = 0.0;
    double var_iota_th = 0.0;
    double mi_wk_h_given_t = 0.0;  // Markov check, should be ~0
};

inline IidCounterpartReport iid_counterpart_report(const ProblemInstance& inst, int k) {
    if (k < 1) throw ValidationError("iid_counterpart_report: k must be >= 1");
    double card = std::pow(static_cast<double>(inst.nx() * inst.ny() * inst.nw()), k);
    if (card > enumeration_budget())
        throw BudgetError("iid_counterpart_report: enumeration exceeds budget", card);

    // enumerate w^k and per-letter samples; T is the canonical multiset
    std::vector<Sample> atoms;
    for (int x = 0; x < static_cast<int>(inst.nx()); ++x)
        for (int y = 0; y < static_cast<int>(inst.ny()); ++y) atoms.push_back({x, y});

    struct Entry {
        CanonicalDataset t;
        std::vector<int> wk;
        double p;
    };
    std::vector<Entry> entries;
    std::vector<int> widx(static_cast<std::size_t>(k), 0);
    std::vector<std::size_t> sidx(static_cast<std::size_t>(k), 0);
    auto letter_mass = [&](int w, const Sample& sm) {
        return inst.p_x_given_w(static_cast<std::size_t>(w), static_cast<std::size_t>(sm.x)) *
               inst.p_y_given_x(static_cast<std::size_t>(sm.x), static_cast<std::size_t>(sm.y));
    };
    bool wdone = false;
    while (!wdone) {
        double pwk = 1.0;
        for (int i = 0; i < k; ++i) pwk *= inst.p_w[static_cast<std::size_t>(widx[static_cast<std::size_t>(i)])];
        if (pwk > 0.0) {
            std::fill(sidx.begin(), sidx.end(), 0);
            bool sdone = false;
            while (!sdone) {
                double p = pwk;
                std::vector<Sample> samples(static_cast<std::size_t>(k));
                for (int i = 0; i < k; ++i) {
                    samples[static_cast<std::size_t>(i)] = atoms[sidx[static_cast<std::size_t>(i)]];
                    p *= letter_mass(widx[static_cast<std::size_t>(i)],
                                     samples[static_cast<std::size_t>(i)]);
                }
                if (p > 0.0)
                    entries.push_back({CanonicalDataset::from_samples(samples), widx, p});
                for (std::size_t j = sidx.size(); j-- > 0;) {
                    if (++sidx[j] < atoms.size()) break;
                    sidx[j] = 0;
                    if (j == 0) sdone = true;
                }
            }
        }
        for (std::size_t j = widx.size(); j-- > 0;) {
            if (++widx[j] < static_cast<int>(inst.nw())) break;
            widx[j] = 0;
            if (j == 0) wdone = true;
        }
    }

    // dataset list and algorithm kernel
    std::vector<CanonicalDataset> datasets;
    for (const auto& e : entries) {
        auto it = std::lower_bound(datasets.begin(), datasets.end(), e.t);
        if (it == datasets.end() || *it != e.t) datasets.insert(it, e.t);
    }
    StochKernel algo = build_algorithm_kernel(inst, datasets);

    std::size_t nt = datasets.size(), nh = inst.nh();
    std::vector<double> pth(nt * nh, 0.0), pt(nt, 0.0), ph(nh, 0.0);
    // group by (w^k, t) for the conditional-MI check
    std::map<std::pair<std::vector<int>, std::size_t>, double> p_wt;
    for (const auto& e : entries) {
        std::size_t ti = static_cast<std::size_t>(
            std::lower_bound(datasets.begin(), datasets.end(), e.t) - datasets.begin());
        pt[ti] += e.p;
        for (std::size_t h = 0; h < nh; ++h) pth[ti * nh + h] += e.p * algo(ti, h);
        p_wt[{e.wk, ti}] += e.p;
    }
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t h = 0; h < nh; ++h) ph[h] += pth[t * nh + h];

    IidCounterpartReport rep;
    rep.k = k;
    double mean = 0.0;
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t h = 0; h < nh; ++h) {
            double p = pth[t * nh + h];
            if (p <= 0.0) continue;
            double iota = std::log(p / (pt[t] * ph[h]));
            rep.mi_th += p * iota;
            mean += p * iota;
        }
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t h = 0; h < nh; ++h) {
            double p = pth[t * nh + h];
            if (p <= 0.0) continue;
            double iota = std::log(p / (pt[t] * ph[h]));
            rep.var_iota_th += p * (iota - mean) * (iota - mean);
        }
    // I(W^k;H|T): H depends on W^k only through T, so each conditional
    // coupling factorizes and this is zero up to rounding.
    rep.mi_wk_h_given_t = 0.0;
    for (const auto& [key, pwt] : p_wt) {
        std::size_t ti = key.second;
        for (std::size_t h = 0; h < nh; ++h) {
            double pj = pwt * algo(ti, h);  // P(w^k, t, h)
            if (pj <= 0.0) continue;
            // conditional density ratio log( P(w,h|t) / (P(w|t)P(h|t)) ) = 0 exactly
            double ratio = (pj / pt[ti]) / ((pwt / pt[ti]) * algo(ti, h));
            rep.mi_wk_h_given_t += pj * std::log(ratio);
        }
    }
    return rep;
}

} // namespace poolrate

#endif
