#ifndef POOLRATE_ORACLE_HPP
#define POOLRATE_ORACLE_HPP

// Brute-force and Monte Carlo counterparts to the analytic machinery:
// exact excess-distortion probabilities by product enumeration, exhaustive
// deterministic selection strategies with the label-budget staircase,
// seeded block simulation, and an Efron-Stein concentration check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "poolrate/errors.hpp"
#include "poolrate/instance.hpp"
#include "poolrate/rd_solver.hpp"

namespace poolrate {

namespace detail {

// One support atom of the per-letter joint under a fixed selection kernel.
struct LetterAtom {
    double p;
    double d;  // d(w; h) for the letter
};

inline std::vector<LetterAtom> letter_atoms(const Setup& s,
                                            const std::vector<std::vector<double>>& selection) {
    if (selection.size() != s.num_pools())
        throw ValidationError("letter_atoms: selection row count does not match pool support");
    std::vector<LetterAtom> atoms;
    for (std::size_t w = 0; w < s.nw(); ++w) {
        double pw = s.inst.p_w[w];
        if (pw <= 0.0) continue;
        for (std::size_t u = 0; u < s.num_pools(); ++u) {
            double puw = s.pools.p_u_given_w[w][u];
            if (puw <= 0.0) continue;
            const auto& feas = s.feasible[u];
            for (std::size_t j = 0; j < feas.size(); ++j) {
                double st = selection[u][j];
                if (st <= 0.0) continue;
                std::size_t t = static_cast<std::size_t>(feas[j]);
                for (std::size_t h = 0; h < s.nh(); ++h) {
                    double ph = s.algo(t, h);
                    if (ph <= 0.0) continue;
                    atoms.push_back({pw * puw * st * ph, s.d_wh[w][h]});
                }
            }
        }
    }
    return atoms;
}

} // namespace detail

// P[(1/k) sum_i d(W_i;H_i) > d] by exact k-fold product enumeration.
// Strict inequality; ties at the threshold do not count as excess.
inline double exact_excess_probability(const Setup& s,
                                       const std::vector<std::vector<double>>& selection, int k,
                                       double d) {
    if (k < 1) throw ValidationError("exact_excess_probability: k must be >= 1");
    auto atoms = detail::letter_atoms(s, selection);
    double card = std::pow(static_cast<double>(atoms.size()), k);
    if (card > enumeration_budget())
        throw BudgetError("exact_excess_probability: product enumeration exceeds budget", card);

    double threshold = d * static_cast<double>(k);
    double prob = 0.0;
    std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
    while (true) {
        double p = 1.0, total = 0.0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            p *= atoms[idx[i]].p;
            total += atoms[idx[i]].d;
        }
        if (total > threshold + 1e-12) prob += p;
        std::size_t j = idx.size();
        while (j-- > 0) {
            if (++idx[j] < atoms.size()) break;
            idx[j] = 0;
            if (j == 0) return prob;
        }
    }
}

// One deterministic per-pool selection strategy: dataset choice per pool,
// with its expected distortion and the rate of the induced point-mass kernel.
struct DeterministicStrategy {
    std::vector<int> choice;  // per pool: index into Setup::feasible[u]
    double expected_distortion = 0.0;
    double rate = 0.0;  // I(U;H), nats
};

// Exhaustive enumeration over deterministic maps pool -> feasible dataset,
// sorted by expected distortion. Budget-checked.
inline std::vector<DeterministicStrategy> enumerate_selections(const Setup& s) {
    double card = 1.0;
    for (std::size_t u = 0; u < s.num_pools(); ++u)
        card *= static_cast<double>(s.feasible[u].size());
    if (card > enumeration_budget())
        throw BudgetError("enumerate_selections: strategy count exceeds budget", card);

    std::vector<DeterministicStrategy> out;
    std::vector<int> choice(s.num_pools(), 0);
    while (true) {
        std::vector<std::vector<double>> sel(s.num_pools());
        for (std::size_t u = 0; u < s.num_pools(); ++u) {
            sel[u].assign(s.feasible[u].size(), 0.0);
            sel[u][static_cast<std::size_t>(choice[u])] = 1.0;
        }
        auto [rate, dist] = detail::evaluate_kernel(s, sel);
        out.push_back({choice, dist, rate});
        std::size_t j = s.num_pools();
        bool done = true;
        while (j-- > 0) {
            if (++choice[j] < static_cast<int>(s.feasible[j].size())) {
                done = false;
                break;
            }
            choice[j] = 0;
        }
        if (done) break;
    }
    std::sort(out.begin(), out.end(),
              [](const DeterministicStrategy& a, const DeterministicStrategy& b) {
                  return a.expected_distortion < b.expected_distortion;
              });
    return out;
}

// Minimum achievable expected distortion with label budget n per pool.
inline double min_distortion_at_n(const ProblemInstance& inst, int n) {
    Setup s = build_setup(inst, n);
    return s.d_bounds.d_min;
}

// Staircase n*(d): the least per-pool label budget whose best selection meets
// the target distortion, or nullopt when even n = m falls short.
struct LabelStaircase {
    std::vector<double> d_min_at_n;  // indexed by n-1, n = 1..m
    std::optional<int> n_star;
};

inline LabelStaircase label_staircase(const ProblemInstance& inst, double d) {
    if (inst.selection_mode != SelectionMode::FixedN)
        throw ValidationError("label_staircase: defined for fixed-n selection");
    LabelStaircase out;
    for (int n = 1; n <= inst.m; ++n) {
        double dm = min_distortion_at_n(inst, n);
        out.d_min_at_n.push_back(dm);
        if (!out.n_star && dm <= d + 1e-12) out.n_star = n;
    }
    return out;
}

// splitmix64; per-trial streams are derived from (seed, trial) so results are
// independent of trial ordering and platform.
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t s) : state(s) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

enum class SimStrategy { PerLetterOptimal, GreedyMinDistortion, RandomFeasible, LabelAll };

inline const char* sim_strategy_name(SimStrategy s) {
    switch (s) {
        case SimStrategy::PerLetterOptimal: return "per-letter-optimal";
        case SimStrategy::GreedyMinDistortion: return "greedy-min-distortion";
        case SimStrategy::RandomFeasible: return "random-feasible";
        case SimStrategy::LabelAll: return "label-all";
    }
    return "?";
}

struct SimulationResult {
    SimStrategy strategy = SimStrategy::PerLetterOptimal;
    int k = 0;
    long long trials = 0;
    long long excess_count = 0;
    double excess_rate = 0.0;
    double wilson_lo = 0.0, wilson_hi = 0.0;  // 95% interval
    double mean_distortion = 0.0;
    double mean_labels_per_letter = 0.0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::size_t sample_index(SplitMix64& rng, const std::vector<double>& weights) {
    double r = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (r < acc) return i;
    }
    return weights.size() - 1;
}

inline std::pair<double, double> wilson_interval(long long hits, long long n) {
    if (n <= 0) return {0.0, 1.0};
    double z = 1.959963984540054;  // 97.5% normal quantile
    double phat = static_cast<double>(hits) / static_cast<double>(n);
    double denom = 1.0 + z * z / static_cast<double>(n);
    double center = phat + z * z / (2.0 * static_cast<double>(n));
    double half = z * std::sqrt(phat * (1.0 - phat) / static_cast<double>(n) +
                                z * z / (4.0 * static_cast<double>(n) * static_cast<double>(n)));
    return {std::max(0.0, (center - half) / denom), std::min(1.0, (center + half) / denom)};
}

} // namespace detail

// Monte Carlo block simulation of the excess-distortion event under a
// per-letter labeling strategy. `selection` is required for PerLetterOptimal
// and ignored otherwise.
inline SimulationResult simulate_block(const Setup& s,
                                       const std::vector<std::vector<double>>* selection, int k,
                                       double d, long long trials, std::uint64_t seed,
                                       SimStrategy strategy) {
    if (k < 1) throw ValidationError("simulate_block: k must be >= 1");
    if (trials < 1) throw ValidationError("simulate_block: trials must be >= 1");
    if (strategy == SimStrategy::PerLetterOptimal && !selection)
        throw ValidationError("simulate_block: per-letter-optimal strategy needs a selection kernel");
    if (selection && selection->size() != s.num_pools())
        throw ValidationError("simulate_block: selection row count does not match pool support");

    // per-pool static choices for the non-randomized strategies
    std::vector<int> greedy_choice(s.num_pools(), 0), all_choice(s.num_pools(), -1);
    for (std::size_t u = 0; u < s.num_pools(); ++u) {
        const auto& feas = s.feasible[u];
        for (std::size_t j = 1; j < feas.size(); ++j)
            if (s.cost_ut[u][static_cast<std::size_t>(feas[j])] <
                s.cost_ut[u][static_cast<std::size_t>(feas[greedy_choice[u]])])
                greedy_choice[u] = static_cast<int>(j);
        if (strategy == SimStrategy::LabelAll) {
            CanonicalDataset full = CanonicalDataset::from_samples(s.pools.pools[u]);
            for (std::size_t j = 0; j < feas.size(); ++j)
                if (s.datasets[static_cast<std::size_t>(feas[j])] == full) {
                    all_choice[u] = static_cast<int>(j);
                    break;
                }
            if (all_choice[u] < 0)
                throw ValidationError(
                    "simulate_block: label-all needs the full pool to be a feasible selection");
        }
    }

    SimulationResult res;
    res.strategy = strategy;
    res.k = k;
    res.trials = trials;
    res.seed = seed;

    double sum_d = 0.0, sum_labels = 0.0;
    for (long long trial = 0; trial < trials; ++trial) {
        SplitMix64 rng(seed ^ (0xA0761D6478BD642FULL * static_cast<std::uint64_t>(trial + 1)));
        double block_d = 0.0;
        for (int i = 0; i < k; ++i) {
            std::size_t w = detail::sample_index(rng, s.inst.p_w.weights());
            std::size_t u = detail::sample_index(rng, s.pools.p_u_given_w[w]);
            const auto& feas = s.feasible[u];
            std::size_t j;
            switch (strategy) {
                case SimStrategy::PerLetterOptimal:
                    j = detail::sample_index(rng, (*selection)[u]);
                    break;
                case SimStrategy::GreedyMinDistortion:
                    j = static_cast<std::size_t>(greedy_choice[u]);
                    break;
                case SimStrategy::RandomFeasible:
                    j = static_cast<std::size_t>(rng.next() % feas.size());
                    break;
                case SimStrategy::LabelAll:
                    j = static_cast<std::size_t>(all_choice[u]);
                    break;
                default:
                    throw ValidationError("simulate_block: unknown strategy");
            }
            std::size_t t = static_cast<std::size_t>(feas[j]);
            std::size_t h = detail::sample_index(rng, s.algo.row(t));
            block_d += s.d_wh[w][h];
            sum_labels += static_cast<double>(s.datasets[t].size());
        }
        block_d /= static_cast<double>(k);
        sum_d += block_d;
        if (block_d > d + 1e-12) ++res.excess_count;
    }
    res.excess_rate = static_cast<double>(res.excess_count) / static_cast<double>(trials);
    auto [lo, hi] = detail::wilson_interval(res.excess_count, trials);
    res.wilson_lo = lo;
    res.wilson_hi = hi;
    res.mean_distortion = sum_d / static_cast<double>(trials);
    res.mean_labels_per_letter = sum_labels / (static_cast<double>(trials) * static_cast<double>(k));
    return res;
}

// Exact Efron-Stein check for f(U) = achieved posterior distortion of a
// selection kernel, conditioned on each w (samples are i.i.d. given w):
//   Var f(U) <= (1/2) sum_i E[(f(U) - f(U with sample i resampled))^2].
struct EfronSteinReport {
    std::vector<double> lhs_by_w;
    std::vector<double> rhs_by_w;
    bool holds = true;
};

inline EfronSteinReport efron_stein_check(const Setup& s,
                                          const std::vector<std::vector<double>>& selection) {
    if (selection.size() != s.num_pools())
        throw ValidationError("efron_stein_check: selection row count does not match pool support");
    const ProblemInstance& inst = s.inst;
    double card = std::pow(static_cast<double>(inst.nx() * inst.ny()),
                           static_cast<double>(inst.m + 1));
    if (card * static_cast<double>(inst.nw()) > enumeration_budget())
        throw BudgetError("efron_stein_check: resample enumeration exceeds budget", card);

    // f(u) = sum_j S(t_j|u) dbar(u; A(t_j)) via cost_ut
    auto f = [&](const Pool& u) {
        std::size_t ui = s.pools.pool_index(u);
        const auto& feas = s.feasible[ui];
        double v = 0.0;
        for (std::size_t j = 0; j < feas.size(); ++j)
            v += selection[ui][j] * s.cost_ut[ui][static_cast<std::size_t>(feas[j])];
        return v;
    };

    std::vector<Sample> atoms;
    for (int x = 0; x < static_cast<int>(inst.nx()); ++x)
        for (int y = 0; y < static_cast<int>(inst.ny()); ++y) atoms.push_back({x, y});
    auto letter_mass = [&](std::size_t w, const Sample& sm) {
        return inst.p_x_given_w(w, static_cast<std::size_t>(sm.x)) *
               inst.p_y_given_x(static_cast<std::size_t>(sm.x), static_cast<std::size_t>(sm.y));
    };

    EfronSteinReport rep;
    for (std::size_t w = 0; w < inst.nw(); ++w) {
        double mean = 0.0, second = 0.0, rhs = 0.0;
        std::vector<std::size_t> idx(static_cast<std::size_t>(inst.m), 0);
        Pool u(static_cast<std::size_t>(inst.m));
        bool done = false;
        while (!done) {
            double p = 1.0;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                u[i] = atoms[idx[i]];
                p *= letter_mass(w, u[i]);
            }
            if (p > 0.0) {
                double fu = f(u);
                mean += p * fu;
                second += p * fu * fu;
                // resample each coordinate independently
                for (std::size_t i = 0; i < u.size(); ++i) {
                    Sample orig = u[i];
                    for (const Sample& rep_s : atoms) {
                        double pr = letter_mass(w, rep_s);
                        if (pr <= 0.0) continue;
                        u[i] = rep_s;
                        double diff = fu - f(u);
                        rhs += p * pr * diff * diff;
                    }
                    u[i] = orig;
                }
            }
            for (std::size_t j = idx.size(); j-- > 0;) {
                if (++idx[j] < atoms.size()) break;
                idx[j] = 0;
                if (j == 0) done = true;
            }
        }
        double lhs = second - mean * mean;
        rhs *= 0.5;
        rep.lhs_by_w.push_back(lhs);
        rep.rhs_by_w.push_back(rhs);
        if (lhs > rhs + 1e-9) rep.holds = false;
    }
    return rep;
}

} // namespace poolrate

#endif
