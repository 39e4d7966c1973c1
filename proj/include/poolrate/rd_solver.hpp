#ifndef POOLRATE_RD_SOLVER_HPP
#define POOLRATE_RD_SOLVER_HPP

// Constrained mutual-information minimization over selection kernels:
// minimize I(U;H) + lambda * E[dbar(U;H)] by alternating between the exact
// marginal update and per-pool Frank-Wolfe steps over the simplex of
// feasible canonical datasets.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "poolrate/errors.hpp"
#include "poolrate/instance.hpp"

namespace poolrate {

struct SolverConfig {
    double tol_outer = 1e-10;  // outer objective delta, nats
    double tol_inner = 1e-9;   // Frank-Wolfe duality gap
    int max_outer = 10000;
    int max_inner = 5000;
};

struct LagrangianPoint {
    double lambda = 0.0;
    double rate = 0.0;            // I(U;H), nats
    double avg_distortion = 0.0;  // E[dbar(U;H)]
    // per pool, a distribution over Setup::feasible[u]
    std::vector<std::vector<double>> selection;
    std::vector<double> h_marginal;
    int outer_iters = 0;
    double final_objective_delta = 0.0;
    double inner_gap = 0.0;
};

namespace detail {

inline double safe_log(double x) { return std::log(std::max(x, 1e-300)); }

// P(h|u) induced by a selection row.
inline std::vector<double> induced_h_row(const Setup& s, std::size_t u,
                                         const std::vector<double>& sel) {
    std::vector<double> ph(s.nh(), 0.0);
    const auto& feas = s.feasible[u];
    for (std::size_t j = 0; j < feas.size(); ++j) {
        std::size_t t = static_cast<std::size_t>(feas[j]);
        for (std::size_t h = 0; h < s.nh(); ++h) ph[h] += sel[j] * s.algo(t, h);
    }
    return ph;
}

inline std::vector<double> induced_h_marginal(const Setup& s,
                                              const std::vector<std::vector<double>>& sel) {
    std::vector<double> q(s.nh(), 0.0);
    for (std::size_t u = 0; u < s.num_pools(); ++u) {
        auto ph = induced_h_row(s, u, sel[u]);
        for (std::size_t h = 0; h < s.nh(); ++h) q[h] += s.pools.p_u[u] * ph[h];
    }
    return q;
}

// Exact (rate, avg distortion) of a selection kernel.
inline std::pair<double, double> evaluate_kernel(const Setup& s,
                                                 const std::vector<std::vector<double>>& sel) {
    auto q = induced_h_marginal(s, sel);
    double rate = 0.0, dist = 0.0;
    for (std::size_t u = 0; u < s.num_pools(); ++u) {
        auto ph = induced_h_row(s, u, sel[u]);
        for (std::size_t h = 0; h < s.nh(); ++h)
            rate += s.pools.p_u[u] * xlogx_over(ph[h], q[h]);
        const auto& feas = s.feasible[u];
        for (std::size_t j = 0; j < feas.size(); ++j)
            dist += s.pools.p_u[u] * sel[u][j] * s.cost_ut[u][static_cast<std::size_t>(feas[j])];
    }
    return {std::max(rate, 0.0), dist};
}

// Per-pool objective: KL(M s || q) + lambda * c . s
struct RowProblem {
    const Setup& s;
    std::size_t u;
    const std::vector<double>& q;
    double lambda;

    double value(const std::vector<double>& sel) const {
        auto ph = induced_h_row(s, u, sel);
        double v = 0.0;
        for (std::size_t h = 0; h < s.nh(); ++h) v += xlogx_over(ph[h], q[h]);
        const auto& feas = s.feasible[u];
        for (std::size_t j = 0; j < feas.size(); ++j)
            v += lambda * sel[j] * s.cost_ut[u][static_cast<std::size_t>(feas[j])];
        return v;
    }

    std::vector<double> gradient(const std::vector<double>& sel) const {
        auto ph = induced_h_row(s, u, sel);
        const auto& feas = s.feasible[u];
        std::vector<double> g(feas.size());
        for (std::size_t j = 0; j < feas.size(); ++j) {
            std::size_t t = static_cast<std::size_t>(feas[j]);
            double acc = 0.0;
            for (std::size_t h = 0; h < s.nh(); ++h) {
                double a = s.algo(t, h);
                if (a > 0.0) acc += a * (safe_log(ph[h]) - safe_log(q[h]) + 1.0);
            }
            g[j] = acc + lambda * s.cost_ut[u][t];
        }
        return g;
    }
};

// Golden-section minimization of a convex 1-D function on [0,1].
template <typename F>
double golden_section(F&& f, double tol = 1e-12) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0, b = 1.0;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d; d = c; fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    double mid = (a + b) / 2.0;
    // endpoints may win at the boundary of the segment
    double f0 = f(0.0), f1 = f(1.0), fm = f(mid);
    if (f0 <= fm && f0 <= f1) return 0.0;
    if (f1 <= fm) return 1.0;
    return mid;
}

// Frank-Wolfe over the simplex; returns the final duality gap.
// Two-dataset rows reduce to a 1-D convex problem and are solved exactly.
inline double frank_wolfe_row(const RowProblem& prob, std::vector<double>& sel,
                              const SolverConfig& cfg) {
    if (sel.size() <= 1) return 0.0;
    if (sel.size() == 2) {
        double alpha = golden_section([&](double a) {
            std::vector<double> x{1.0 - a, a};
            return prob.value(x);
        });
        sel = {1.0 - alpha, alpha};
        auto g = prob.gradient(sel);
        double dot = g[0] * sel[0] + g[1] * sel[1];
        return std::max(dot - std::min(g[0], g[1]), 0.0);
    }
    double gap = 0.0;
    for (int it = 0; it < cfg.max_inner; ++it) {
        auto g = prob.gradient(sel);
        std::size_t jstar = 0;
        for (std::size_t j = 1; j < g.size(); ++j)
            if (g[j] < g[jstar]) jstar = j;
        double dot = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) dot += g[j] * sel[j];
        gap = dot - g[jstar];
        if (gap < cfg.tol_inner) return gap;
        std::vector<double> base = sel;
        auto line = [&](double alpha) {
            std::vector<double> x(base.size());
            for (std::size_t j = 0; j < base.size(); ++j)
                x[j] = (1.0 - alpha) * base[j] + (j == jstar ? alpha : 0.0);
            return prob.value(x);
        };
        double alpha = golden_section(line);
        for (std::size_t j = 0; j < sel.size(); ++j)
            sel[j] = (1.0 - alpha) * base[j] + (j == jstar ? alpha : 0.0);
    }
    return gap;
}

} // namespace detail

inline LagrangianPoint solve_lagrangian(const Setup& s, double lambda,
                                        const SolverConfig& cfg = {},
                                        const std::vector<std::vector<double>>* warm = nullptr) {
    if (lambda < 0.0) throw RangeError("solve_lagrangian: lambda must be >= 0");
    LagrangianPoint pt;
    pt.lambda = lambda;
    if (warm && warm->size() == s.num_pools()) {
        pt.selection = *warm;
    } else {
        pt.selection.resize(s.num_pools());
        for (std::size_t u = 0; u < s.num_pools(); ++u) {
            std::size_t f = s.feasible[u].size();
            pt.selection[u].assign(f, 1.0 / static_cast<double>(f));
        }
    }

    double prev_obj = std::numeric_limits<double>::infinity();
    double worst_gap = 0.0;
    bool converged = false;
    for (int outer = 0; outer < cfg.max_outer; ++outer) {
        auto q = detail::induced_h_marginal(s, pt.selection);
        worst_gap = 0.0;
        for (std::size_t u = 0; u < s.num_pools(); ++u) {
            detail::RowProblem prob{s, u, q, lambda};
            double gap = detail::frank_wolfe_row(prob, pt.selection[u], cfg);
            worst_gap = std::max(worst_gap, gap);
        }
        auto [rate, dist] = detail::evaluate_kernel(s, pt.selection);
        double obj = rate + lambda * dist;
        pt.outer_iters = outer + 1;
        pt.final_objective_delta = prev_obj - obj;
        if (prev_obj - obj < cfg.tol_outer) {
            converged = true;
            break;
        }
        prev_obj = obj;
    }
    if (!converged)
        throw ConvergenceError("solve_lagrangian: outer loop did not converge at lambda=" +
                                   std::to_string(lambda),
                               worst_gap);
    pt.inner_gap = worst_gap;
    auto [rate, dist] = detail::evaluate_kernel(s, pt.selection);
    pt.rate = rate;
    pt.avg_distortion = dist;
    pt.h_marginal = detail::induced_h_marginal(s, pt.selection);
    return pt;
}

struct RDCurve {
    std::vector<LagrangianPoint> points;           // sorted by avg_distortion ascending
    std::vector<std::pair<double, double>> knots;  // lower convex envelope (d, rate)
    double d_min = 0.0;
    double d_max = 0.0;
};

namespace detail {

// Lower convex envelope of (d, rate) points with rate non-increasing in d.
inline std::vector<std::pair<double, double>> lower_envelope(
    std::vector<std::pair<double, double>> pts) {
    std::sort(pts.begin(), pts.end());
    // dedup by distortion, keep the smaller rate
    std::vector<std::pair<double, double>> uniq;
    for (const auto& p : pts) {
        if (!uniq.empty() && std::abs(p.first - uniq.back().first) < 1e-12) {
            uniq.back().second = std::min(uniq.back().second, p.second);
        } else {
            uniq.push_back(p);
        }
    }
    // monotone chain keeping only points on the lower hull
    std::vector<std::pair<double, double>> hull;
    for (const auto& p : uniq) {
        while (hull.size() >= 2) {
            auto& a = hull[hull.size() - 2];
            auto& b = hull.back();
            double cross = (b.first - a.first) * (p.second - a.second) -
                           (p.first - a.first) * (b.second - a.second);
            if (cross <= 0.0)
                hull.pop_back();
            else
                break;
        }
        // drop points above the running minimum rate (monotonicity)
        if (!hull.empty() && p.second > hull.back().second + 1e-12) continue;
        hull.push_back(p);
    }
    return hull;
}

} // namespace detail

inline std::vector<double> default_lambda_grid(int count = 40) {
    std::vector<double> grid{0.0};
    double lo = std::log(1e-3), hi = std::log(1e4);
    for (int i = 0; i < count; ++i)
        grid.push_back(std::exp(lo + (hi - lo) * static_cast<double>(i) / (count - 1)));
    return grid;
}

inline RDCurve sweep_lambda(const Setup& s, const std::vector<double>& lambda_grid,
                            const SolverConfig& cfg = {}) {
    if (lambda_grid.empty()) throw ValidationError("sweep_lambda: empty lambda grid");
    RDCurve curve;
    curve.d_min = s.d_bounds.d_min;
    std::vector<std::vector<double>> warm;
    for (double lam : lambda_grid) {
        curve.points.push_back(
            solve_lagrangian(s, lam, cfg, warm.empty() ? nullptr : &warm));
        warm = curve.points.back().selection;
    }
    // the achievable upper end of the distortion range is the distortion of
    // the least-constrained solve; the constant-mixture preview can undershoot
    curve.d_max = curve.d_min;
    for (const auto& p : curve.points) curve.d_max = std::max(curve.d_max, p.avg_distortion);
    std::sort(curve.points.begin(), curve.points.end(),
              [](const LagrangianPoint& a, const LagrangianPoint& b) {
                  return a.avg_distortion < b.avg_distortion;
              });
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curve.points) pts.emplace_back(p.avg_distortion, p.rate);
    // pin the endpoints: the smallest computed rate at d_max (zero when the
    // least-constrained solve is unconstrained, e.g. with an empty dataset
    // available) and the largest computed rate at d_min
    double rmax = 0.0, rmin = std::numeric_limits<double>::infinity();
    for (const auto& p : curve.points) {
        rmax = std::max(rmax, p.rate);
        rmin = std::min(rmin, p.rate);
    }
    if (rmin <= 1e-7) rmin = 0.0;
    pts.emplace_back(curve.d_max, rmin);
    pts.emplace_back(curve.d_min, rmax);
    curve.knots = detail::lower_envelope(std::move(pts));
    return curve;
}

inline double rate_at_distortion(const RDCurve& curve, double d) {
    if (d < curve.d_min - 1e-12 || d > curve.d_max + 1e-12)
        throw RangeError("rate_at_distortion: d outside [d_min, d_max]");
    if (curve.knots.empty()) throw ValidationError("rate_at_distortion: empty curve");
    if (d >= curve.knots.back().first) return curve.knots.back().second;
    if (d <= curve.knots.front().first) return curve.knots.front().second;
    for (std::size_t i = 1; i < curve.knots.size(); ++i) {
        if (d <= curve.knots[i].first) {
            auto [d0, r0] = curve.knots[i - 1];
            auto [d1, r1] = curve.knots[i];
            double t = (d - d0) / (d1 - d0);
            return r0 + t * (r1 - r0);
        }
    }
    return curve.knots.back().second;
}

// Negative slope of the convex envelope at d, by central difference with a
// spacing-aware step; strictly positive inside the open interval.
inline double lambda_star(const RDCurve& curve, double d) {
    if (d <= curve.d_min || d >= curve.d_max)
        throw RangeError("lambda_star: d must be strictly inside (d_min, d_max)");
    double h = 1e-4 * (curve.d_max - curve.d_min);
    double lo = std::max(d - h, curve.d_min), hi = std::min(d + h, curve.d_max);
    double slope = (rate_at_distortion(curve, hi) - rate_at_distortion(curve, lo)) / (hi - lo);
    return std::max(-slope, 0.0);
}

struct Inversion {
    double D = 0.0;
    double D_prime = 0.0;  // dD/dR < 0
    bool kinked = false;   // envelope not differentiable at D; slope is a segment mean
};

inline double max_rate(const RDCurve& curve) {
    double r = 0.0;
    for (const auto& k : curve.knots) r = std::max(r, k.second);
    return r;
}

inline Inversion invert_to_distortion(const RDCurve& curve, double R) {
    double rmax = max_rate(curve);
    if (R < -1e-12 || R > rmax + 1e-12)
        throw RangeError("invert_to_distortion: R outside [0, max rate]");
    R = std::clamp(R, 0.0, rmax);
    Inversion inv;
    if (R <= curve.knots.back().second) {
        // budget at or below the rate of the flat end: d_max is the floor
        inv.D = curve.d_max;
    } else {
        // knots have rate non-increasing in d; invert piecewise linearly
        inv.D = curve.knots.front().first;
        for (std::size_t i = 1; i < curve.knots.size(); ++i) {
            double r0 = curve.knots[i - 1].second, r1 = curve.knots[i].second;
            if (R <= r0 + 1e-15 && R >= r1 - 1e-15) {
                double d0 = curve.knots[i - 1].first, d1 = curve.knots[i].first;
                inv.D = (r0 == r1) ? d0 : d0 + (R - r0) / (r1 - r0) * (d1 - d0);
                break;
            }
        }
    }
    double dd = std::clamp(inv.D, std::nextafter(curve.d_min, curve.d_max),
                           std::nextafter(curve.d_max, curve.d_min));
    double lam = lambda_star(curve, dd);
    inv.D_prime = lam > 0.0 ? -1.0 / lam : -std::numeric_limits<double>::infinity();
    return inv;
}

// Bisection on lambda until the achieved distortion matches the target. At a
// kink of the polygonal curve no single lambda attains the target, so the two
// bracketing solutions are blended: distortion is linear in the selection,
// which lands the blend exactly on the target along the envelope chord.
inline LagrangianPoint solve_to_target_d(const Setup& s, double d, const SolverConfig& cfg = {},
                                         double rel_tol = 1e-6) {
    double dmin = s.d_bounds.d_min;
    LagrangianPoint at_lo = solve_lagrangian(s, 0.0, cfg);
    double dmax = std::max(at_lo.avg_distortion, dmin);
    if (d <= dmin - 1e-12 || d >= dmax + 1e-12)
        throw RangeError("solve_to_target_d: d outside (d_min, d_max)");
    double span = std::max(dmax - dmin, 1e-30);
    double tol = rel_tol * span;
    if (std::abs(at_lo.avg_distortion - d) <= tol) return at_lo;

    double lo = 0.0, hi = 1e6;
    LagrangianPoint at_hi = solve_lagrangian(s, hi, cfg, &at_lo.selection);
    if (std::abs(at_hi.avg_distortion - d) <= tol) return at_hi;
    for (int it = 0; it < 80 && hi - lo > 1e-12 * (1.0 + lo); ++it) {
        double mid = (lo + hi) / 2.0;
        LagrangianPoint pt = solve_lagrangian(s, mid, cfg, &at_lo.selection);
        if (std::abs(pt.avg_distortion - d) <= tol) return pt;
        if (pt.avg_distortion > d) {
            lo = mid;  // need more pressure on distortion
            at_lo = std::move(pt);
        } else {
            hi = mid;
            at_hi = std::move(pt);
        }
    }
    // blend the bracket endpoints to hit d exactly
    double dl = at_lo.avg_distortion, dh = at_hi.avg_distortion;
    double theta = dl - dh > 1e-30 ? (d - dh) / (dl - dh) : 0.5;
    theta = std::clamp(theta, 0.0, 1.0);
    LagrangianPoint out;
    out.lambda = (at_lo.lambda + at_hi.lambda) / 2.0;
    out.selection.resize(s.num_pools());
    for (std::size_t u = 0; u < s.num_pools(); ++u) {
        out.selection[u].resize(s.feasible[u].size());
        for (std::size_t j = 0; j < out.selection[u].size(); ++j)
            out.selection[u][j] =
                theta * at_lo.selection[u][j] + (1.0 - theta) * at_hi.selection[u][j];
    }
    auto [rate, dist] = detail::evaluate_kernel(s, out.selection);
    out.rate = rate;
    out.avg_distortion = dist;
    out.h_marginal = detail::induced_h_marginal(s, out.selection);
    out.outer_iters = at_lo.outer_iters + at_hi.outer_iters;
    out.inner_gap = std::max(at_lo.inner_gap, at_hi.inner_gap);
    return out;
}

} // namespace poolrate

#endif
