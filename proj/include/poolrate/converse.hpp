#ifndef POOLRATE_CONVERSE_HPP
#define POOLRATE_CONVERSE_HPP

// Finite-blocklength converse bounds: excess-distortion probability,
// minimum label-complexity rate, and the distortion floor at a fixed budget.
// All rates in nats unless a field name says bits.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "poolrate/dispersion.hpp"
#include "poolrate/errors.hpp"
#include "poolrate/instance.hpp"
#include "poolrate/rd_solver.hpp"

namespace poolrate {

// Gaussian tail Q(x) = P[N(0,1) > x].
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Inverse of Q by Newton iterations on a bisection-bracketed start.
inline double q_inverse(double p) {
    if (!(p > 0.0 && p < 1.0)) throw RangeError("q_inverse: p must lie in (0,1)");
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 80; ++i) {
        double mid = (lo + hi) / 2.0;
        if (q_function(mid) > p)
            lo = mid;
        else
            hi = mid;
    }
    double x = (lo + hi) / 2.0;
    for (int i = 0; i < 60; ++i) {
        double f = q_function(x) - p;
        double fp = -std::exp(-x * x / 2.0) / std::sqrt(2.0 * M_PI);
        double step = f / fp;
        if (!std::isfinite(step)) break;
        x -= step;
        if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    return x;
}

// Single-shot excess-probability converse:
//   eps >= sup_{gamma >= 0} { P[jtilde >= n b ln2 + gamma] - exp(-gamma) }.
// The supremum over the step-function objective is attained at a jump, so it
// is evaluated exactly over the candidate set {max(0, v - n b ln2)} plus 0.
struct EpsilonBound {
    double bound = 0.0;       // clamped to [0, 1]
    double raw = 0.0;         // before clamping
    double gamma_star = 0.0;
    double budget_nats = 0.0; // n * b * ln 2
    bool vacuous = false;     // raw <= 0
};

inline EpsilonBound theorem1_epsilon_bound(const InducedJoint& joint, const TiltedTable& tilted,
                                           int n, double bits_per_sample) {
    if (n < 0) throw ValidationError("theorem1_epsilon_bound: n must be >= 0");
    if (!(bits_per_sample > 0.0))
        throw ValidationError("theorem1_epsilon_bound: bits per sample must be positive");
    EpsilonBound out;
    out.budget_nats = static_cast<double>(n) * bits_per_sample * std::log(2.0);

    std::vector<std::pair<double, double>> vals;  // (jtilde value, mass)
    for (const auto& a : joint.atoms) vals.emplace_back(tilted.at(a.w, a.u, a.h), a.p);
    std::sort(vals.begin(), vals.end());

    std::vector<double> candidates{0.0};
    for (const auto& [v, p] : vals) {
        double g = v - out.budget_nats;
        if (g > 0.0) candidates.push_back(g);
    }
    out.raw = -std::numeric_limits<double>::infinity();
    for (double g : candidates) {
        double tail = 0.0;
        double thr = out.budget_nats + g;
        for (const auto& [v, p] : vals)
            if (v >= thr - 1e-15) tail += p;
        double obj = tail - std::exp(-g);
        if (obj > out.raw) {
            out.raw = obj;
            out.gamma_star = g;
        }
    }
    out.vacuous = out.raw <= 0.0;
    out.bound = std::clamp(out.raw, 0.0, 1.0);
    return out;
}

// Minimum-rate converse at blocklength k and excess probability eps.
struct RateBound {
    int k = 0;
    double eps = 0.0;
    double R = 0.0;  // first-order term, nats per letter
    double V = 0.0;
    // asymptotic form: R + sqrt(V/k) Qinv(eps) - log(k)/(2k)
    double asymptotic_nats = 0.0;
    // explicit form with the Berry-Esseen correction folded into eps
    double explicit_nats = 0.0;
    double explicit_eps_k = 0.0;   // adjusted eps used in the explicit form
    bool explicit_valid = true;    // false when eps_k leaves (0,1)
    double gamma = 0.0;            // slack log-term, nats
    bool zero_dispersion = false;  // V = 0 branch: R - log(1/(1-eps))/k
    // label counts implied by n >= k * rate / (b ln 2)
    double n_lower_asymptotic = 0.0;
    double n_lower_explicit = 0.0;
    long long n_ceil_asymptotic = 0;
    long long n_ceil_explicit = 0;
};

inline RateBound theorem2_rate_bound(double R, double V, double third_abs_moment, int k,
                                     double eps, double bits_per_sample) {
    if (k < 1) throw ValidationError("theorem2_rate_bound: k must be >= 1");
    if (!(eps > 0.0 && eps < 1.0))
        throw RangeError("theorem2_rate_bound: eps must lie in (0,1)");
    if (V < 0.0) throw ValidationError("theorem2_rate_bound: negative dispersion");
    RateBound out;
    out.k = k;
    out.eps = eps;
    out.R = R;
    out.V = V;
    double kk = static_cast<double>(k);
    double bln2 = bits_per_sample * std::log(2.0);

    if (V == 0.0) {
        out.zero_dispersion = true;
        out.gamma = std::log(1.0 / (1.0 - eps));
        out.asymptotic_nats = R - out.gamma / kk;
        out.explicit_nats = out.asymptotic_nats;
        out.explicit_eps_k = eps;
    } else {
        out.asymptotic_nats = R + std::sqrt(V / kk) * q_inverse(eps) - std::log(kk) / (2.0 * kk);
        out.gamma = 0.5 * std::log(kk);
        double B = 6.0 * third_abs_moment / std::pow(V, 1.5);
        double eps_k = eps + std::exp(-out.gamma) + B / std::sqrt(kk);
        out.explicit_eps_k = eps_k;
        if (eps_k >= 1.0) {
            out.explicit_valid = false;
            out.explicit_nats = -std::numeric_limits<double>::infinity();
        } else {
            out.explicit_nats =
                (kk * R + std::sqrt(kk * V) * q_inverse(eps_k) - out.gamma) / kk;
        }
    }
    out.n_lower_asymptotic = kk * out.asymptotic_nats / bln2;
    out.n_lower_explicit = out.explicit_valid ? kk * out.explicit_nats / bln2
                                              : -std::numeric_limits<double>::infinity();
    auto ceil_count = [](double x) {
        if (!std::isfinite(x) || x <= 0.0) return 0LL;
        return static_cast<long long>(std::ceil(x - 1e-12));
    };
    out.n_ceil_asymptotic = ceil_count(out.n_lower_asymptotic);
    out.n_ceil_explicit = ceil_count(out.n_lower_explicit);
    return out;
}

// Distortion converse at a fixed per-sample rate budget:
//   D_k >= D + sqrt(Vd/k) Qinv(eps) - c log(k)/k, Vd = (D')^2 V(D),
//   c = |D'| / 2. The statement-level additive D' term is reproduced behind a
// flag for comparison; the default follows the proof.
struct DistortionBound {
    int k = 0;
    double eps = 0.0;
    double R_budget_nats = 0.0;
    double D = 0.0;        // rate-distortion inverse at the budget
    double D_prime = 0.0;  // slope dD/dR, <= 0
    double V_at_D = 0.0;   // rate-dispersion at d = D
    double Vd = 0.0;       // distortion-dispersion (D')^2 V
    double c = 0.0;
    double bound = 0.0;
    bool include_slope_term = false;  // adds D' to the bound when set
    bool kinked = false;              // envelope kink at D, slope is one-sided
    bool clamped_rate = false;        // budget exceeded max rate, D = d_min used
};

inline DistortionBound theorem3_distortion_bound(const RDCurve& curve, double V_at_D,
                                                 double R_budget_nats, int k, double eps,
                                                 bool include_slope_term = false) {
    if (k < 1) throw ValidationError("theorem3_distortion_bound: k must be >= 1");
    if (!(eps > 0.0 && eps < 1.0))
        throw RangeError("theorem3_distortion_bound: eps must lie in (0,1)");
    DistortionBound out;
    out.k = k;
    out.eps = eps;
    out.R_budget_nats = R_budget_nats;
    out.include_slope_term = include_slope_term;

    double rmax = max_rate(curve);
    double R = R_budget_nats;
    if (R > rmax) {
        R = rmax;
        out.clamped_rate = true;
    }
    Inversion inv = invert_to_distortion(curve, R);
    out.D = inv.D;
    out.D_prime = inv.D_prime;
    out.kinked = inv.kinked;
    out.V_at_D = V_at_D;
    double dp = std::isfinite(inv.D_prime) ? inv.D_prime : 0.0;
    out.Vd = dp * dp * V_at_D;
    out.c = std::abs(dp) / 2.0;

    double kk = static_cast<double>(k);
    out.bound = out.D + std::sqrt(out.Vd / kk) * q_inverse(eps) - out.c * std::log(kk) / kk;
    if (include_slope_term) out.bound += dp;
    return out;
}

// Flattened row of the converse report CSV:
// theorem,variant,k,m,n,d,eps,R_nats,V,lambda_star,bound_value,flags
struct ConverseRow {
    int theorem = 0;
    std::string variant;
    int k = 0, m = 0, n = 0;
    double d = std::numeric_limits<double>::quiet_NaN();
    double eps = std::numeric_limits<double>::quiet_NaN();
    double R_nats = std::numeric_limits<double>::quiet_NaN();
    double V = std::numeric_limits<double>::quiet_NaN();
    double lambda_star = std::numeric_limits<double>::quiet_NaN();
    double bound_value = std::numeric_limits<double>::quiet_NaN();
    std::string flags;
};

inline ConverseRow to_row(const EpsilonBound& b, const TiltedTable& t, int m, int n, int k) {
    ConverseRow r;
    r.theorem = 1;
    r.variant = "excess-probability";
    r.k = k;
    r.m = m;
    r.n = n;
    r.d = t.d;
    r.lambda_star = t.lambda_star;
    r.bound_value = b.bound;
    if (b.vacuous) r.flags = "vacuous";
    return r;
}

inline std::vector<ConverseRow> to_rows(const RateBound& b, const TiltedTable& t, int m) {
    std::vector<ConverseRow> rows;
    ConverseRow base;
    base.theorem = 2;
    base.k = b.k;
    base.m = m;
    base.d = t.d;
    base.eps = b.eps;
    base.R_nats = b.R;
    base.V = b.V;
    base.lambda_star = t.lambda_star;

    ConverseRow a = base;
    a.variant = "rate-asymptotic";
    a.bound_value = b.asymptotic_nats;
    a.n = static_cast<int>(b.n_ceil_asymptotic);
    if (b.zero_dispersion) a.flags = "zero-dispersion";
    rows.push_back(a);

    ConverseRow e = base;
    e.variant = "rate-explicit";
    e.bound_value = b.explicit_nats;
    e.n = static_cast<int>(b.n_ceil_explicit);
    if (b.zero_dispersion)
        e.flags = "zero-dispersion";
    else if (!b.explicit_valid)
        e.flags = "eps-adjustment-vacuous";
    rows.push_back(e);
    return rows;
}

inline ConverseRow to_row(const DistortionBound& b, int m, int n) {
    ConverseRow r;
    r.theorem = 3;
    r.variant = b.include_slope_term ? "distortion-with-slope-term" : "distortion";
    r.k = b.k;
    r.m = m;
    r.n = n;
    r.d = b.D;
    r.eps = b.eps;
    r.R_nats = b.R_budget_nats;
    r.V = b.Vd;
    r.lambda_star = std::isfinite(b.D_prime) && b.D_prime != 0.0 ? -1.0 / b.D_prime
                                                                 : std::numeric_limits<double>::quiet_NaN();
    r.bound_value = b.bound;
    std::string flags;
    if (b.kinked) flags += "kinked";
    if (b.clamped_rate) flags += flags.empty() ? "clamped-rate" : ";clamped-rate";
    r.flags = flags;
    return r;
}

} // namespace poolrate

#endif
