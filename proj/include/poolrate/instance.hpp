#ifndef POOLRATE_INSTANCE_HPP
#define POOLRATE_INSTANCE_HPP

// Pool-based active-learning problem instances over finite alphabets:
// true distributions, hypothesis set, learning-algorithm kernel, exact pool
// enumeration, distortion measures, feasible selections and the distortion
// range (d_min, d_max).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "poolrate/errors.hpp"
#include "poolrate/prob.hpp"

namespace poolrate {

// (x,y) sample as alphabet indices.
struct Sample {
    int x = 0;
    int y = 0;
    friend auto operator<=>(const Sample&, const Sample&) = default;
};

using Pool = std::vector<Sample>;  // ordered m-tuple

// Sorted multiset of samples; the learning algorithm sees data only.
struct CanonicalDataset {
    std::vector<Sample> samples;  // sorted lexicographically, multiplicities kept

    static CanonicalDataset from_samples(std::vector<Sample> s) {
        std::sort(s.begin(), s.end());
        return CanonicalDataset{std::move(s)};
    }
    std::size_t size() const { return samples.size(); }
    friend auto operator<=>(const CanonicalDataset&, const CanonicalDataset&) = default;
};

struct HypothesisSpec {
    std::optional<StochKernel> table;  // X -> Y conditional
    std::optional<std::vector<int>> map;  // deterministic X -> Y, total over X

    bool deterministic() const { return map.has_value(); }
};

enum class AlgoKind { Explicit, Erm, Gibbs };

struct AlgorithmSpec {
    AlgoKind kind = AlgoKind::Erm;
    double beta = 0.0;  // Gibbs inverse temperature, > 0 required for gibbs
    // explicit tables keyed by canonical dataset string (see dataset_key)
    std::map<std::string, std::vector<double>> explicit_table;
};

struct LossSpec {
    bool zero_one = true;
    std::vector<std::vector<double>> table;  // l(y_true, y_pred) when not zero-one

    double operator()(int y_true, int y_pred) const {
        if (zero_one) return y_true == y_pred ? 0.0 : 1.0;
        return table[static_cast<std::size_t>(y_true)][static_cast<std::size_t>(y_pred)];
    }
};

enum class DistortionMode { ExpectedLoss, Kl };
enum class SelectionMode { FixedN, AnySubset };

struct ProblemInstance {
    std::vector<std::string> x_alphabet, y_alphabet, w_alphabet, h_alphabet;
    FiniteDist p_w;            // over W
    StochKernel p_x_given_w;   // W -> X
    StochKernel p_y_given_x;   // X -> Y
    std::vector<HypothesisSpec> hypotheses;  // indexed by h
    AlgorithmSpec algorithm;
    LossSpec loss;
    DistortionMode distortion_mode = DistortionMode::ExpectedLoss;
    int m = 1;                 // pool size per sampling opportunity
    double b = 0.0;            // bits per sample; 0 means "use default log2(|X||Y|)"
    std::optional<int> n;      // selection budget (fixed-n mode)
    SelectionMode selection_mode = SelectionMode::FixedN;

    std::size_t nx() const { return x_alphabet.size(); }
    std::size_t ny() const { return y_alphabet.size(); }
    std::size_t nw() const { return w_alphabet.size(); }
    std::size_t nh() const { return h_alphabet.size(); }

    double bits_per_sample() const {
        if (b > 0.0) return b;
        return std::log2(static_cast<double>(nx() * ny()));
    }

    // Probability the hypothesis assigns to y given x.
    double h_prob(int h, int x, int y) const {
        const HypothesisSpec& hs = hypotheses[static_cast<std::size_t>(h)];
        if (hs.deterministic())
            return (*hs.map)[static_cast<std::size_t>(x)] == y ? 1.0 : 0.0;
        return (*hs.table)(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    }

    // Per-sample training loss: loss table for deterministic hypotheses,
    // negative log-likelihood for probabilistic ones.
    double sample_loss(int h, const Sample& s) const {
        const HypothesisSpec& hs = hypotheses[static_cast<std::size_t>(h)];
        if (hs.deterministic()) return loss(s.y, (*hs.map)[static_cast<std::size_t>(s.x)]);
        double p = h_prob(h, s.x, s.y);
        if (p <= 0.0) return 1e30;  // impossible label under the hypothesis
        return -std::log(p);
    }
};

inline std::string dataset_key(const CanonicalDataset& t, const ProblemInstance& inst) {
    std::ostringstream os;
    for (std::size_t i = 0; i < t.samples.size(); ++i) {
        if (i) os << ';';
        os << inst.x_alphabet[static_cast<std::size_t>(t.samples[i].x)] << ','
           << inst.y_alphabet[static_cast<std::size_t>(t.samples[i].y)];
    }
    return os.str();
}

// Enumeration budget; POOLRATE_BUDGET overrides the default.
inline double enumeration_budget() {
    if (const char* env = std::getenv("POOLRATE_BUDGET")) {
        double v = std::atof(env);
        if (v > 0) return v;
    }
    return 1e6;
}

// Single-letter distortion d(w;h).
inline double distortion(const ProblemInstance& inst, int w, int h) {
    double acc = 0.0;
    for (std::size_t x = 0; x < inst.nx(); ++x) {
        double px = inst.p_x_given_w(static_cast<std::size_t>(w), x);
        if (px <= 0.0) continue;
        if (inst.distortion_mode == DistortionMode::Kl) {
            double kl = 0.0;
            for (std::size_t y = 0; y < inst.ny(); ++y) {
                double term = xlogx_over(inst.p_y_given_x(x, y),
                                         inst.h_prob(h, static_cast<int>(x), static_cast<int>(y)));
                if (std::isinf(term))
                    throw ValidationError("distortion: infinite KL at x=" + inst.x_alphabet[x] +
                                          ", hypothesis " + inst.h_alphabet[static_cast<std::size_t>(h)] +
                                          " violates the support assumption");
                kl += term;
            }
            acc += px * kl;
        } else {
            for (std::size_t y = 0; y < inst.ny(); ++y) {
                double py = inst.p_y_given_x(x, y);
                if (py <= 0.0) continue;
                double e = 0.0;
                for (std::size_t yp = 0; yp < inst.ny(); ++yp)
                    e += inst.h_prob(h, static_cast<int>(x), static_cast<int>(yp)) *
                         inst.loss(static_cast<int>(y), static_cast<int>(yp));
                acc += px * py * e;
            }
        }
    }
    return acc;
}

// (1/k) sum of per-letter distortions.
inline double block_distortion(const ProblemInstance& inst, const std::vector<int>& w_tuple,
                               const std::vector<int>& h_tuple) {
    if (w_tuple.size() != h_tuple.size() || w_tuple.empty())
        throw ValidationError("block_distortion: tuple length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < w_tuple.size(); ++i)
        acc += distortion(inst, w_tuple[i], h_tuple[i]);
    return acc / static_cast<double>(w_tuple.size());
}

struct PoolSpace {
    std::vector<Pool> pools;                     // canonical lexicographic order, zero-mass omitted
    std::vector<std::vector<double>> p_u_given_w;  // W x |pools|, exact product masses
    std::vector<double> p_u;                     // marginal over pools
    std::vector<std::vector<double>> p_w_given_u;  // |pools| x W, Bayes posterior

    std::size_t pool_index(const Pool& u) const {
        auto it = std::lower_bound(pools.begin(), pools.end(), u);
        if (it == pools.end() || *it != u)
            throw RangeError("PoolSpace: pool outside support");
        return static_cast<std::size_t>(it - pools.begin());
    }
};

// Exact product mass of one ordered pool under sub-distribution w.
inline double pool_mass_given_w(const ProblemInstance& inst, const Pool& u, int w) {
    double p = 1.0;
    for (const Sample& s : u) {
        p *= inst.p_x_given_w(static_cast<std::size_t>(w), static_cast<std::size_t>(s.x)) *
             inst.p_y_given_x(static_cast<std::size_t>(s.x), static_cast<std::size_t>(s.y));
        if (p == 0.0) return 0.0;
    }
    return p;
}

inline PoolSpace enumerate_pool_space(const ProblemInstance& inst) {
    double card = std::pow(static_cast<double>(inst.nx() * inst.ny()), inst.m);
    double budget = enumeration_budget();
    if (card > budget)
        throw BudgetError("enumerate_pool_space: (|X||Y|)^m = " + std::to_string(card) +
                          " exceeds budget " + std::to_string(budget), card);

    std::vector<Sample> atoms;
    for (int x = 0; x < static_cast<int>(inst.nx()); ++x)
        for (int y = 0; y < static_cast<int>(inst.ny()); ++y) atoms.push_back({x, y});

    PoolSpace ps;
    Pool current(static_cast<std::size_t>(inst.m));
    std::vector<double> mass_w(inst.nw());
    // ordered tuples in lexicographic order
    std::vector<std::size_t> idx(static_cast<std::size_t>(inst.m), 0);
    bool done = false;
    while (!done) {
        for (std::size_t j = 0; j < idx.size(); ++j) current[j] = atoms[idx[j]];
        double total = 0.0;
        for (std::size_t w = 0; w < inst.nw(); ++w) {
            mass_w[w] = pool_mass_given_w(inst, current, static_cast<int>(w));
            total += mass_w[w] * inst.p_w[w];
        }
        if (total > 0.0) {
            ps.pools.push_back(current);
            if (ps.p_u_given_w.empty()) ps.p_u_given_w.resize(inst.nw());
            for (std::size_t w = 0; w < inst.nw(); ++w) ps.p_u_given_w[w].push_back(mass_w[w]);
            ps.p_u.push_back(total);
        }
        // advance
        for (std::size_t j = idx.size(); j-- > 0;) {
            if (++idx[j] < atoms.size()) break;
            idx[j] = 0;
            if (j == 0) done = true;
        }
        if (inst.m == 0) break;
    }
    ps.p_w_given_u.assign(ps.pools.size(), std::vector<double>(inst.nw(), 0.0));
    for (std::size_t u = 0; u < ps.pools.size(); ++u)
        for (std::size_t w = 0; w < inst.nw(); ++w)
            ps.p_w_given_u[u][w] = ps.p_u_given_w[w][u] * inst.p_w[w] / ps.p_u[u];
    return ps;
}

// Posterior-expected distortion d_bar(u;h) = E[d(W;h) | U=u].
inline double posterior_distortion(const ProblemInstance& inst, const PoolSpace& ps,
                                   std::size_t u, int h) {
    if (u >= ps.pools.size()) throw RangeError("posterior_distortion: pool index outside support");
    double acc = 0.0;
    for (std::size_t w = 0; w < inst.nw(); ++w)
        acc += ps.p_w_given_u[u][w] * distortion(inst, static_cast<int>(w), h);
    return acc;
}

struct FeasibleSelections {
    std::vector<std::vector<int>> index_subsets;   // index-level list (counting argument)
    std::vector<int> subset_dataset;               // per index subset: canonical dataset id
    std::vector<CanonicalDataset> datasets;        // deduplicated canonical datasets
    std::vector<int> multiplicity;                 // index subsets per canonical dataset
};

// All feasible selections from one pool: C(km,n) index subsets in fixed-n
// mode, 2^{km} in any-subset mode, each mapped to its canonical dataset.
inline FeasibleSelections feasible_selections(const ProblemInstance& inst, const Pool& u,
                                              std::optional<int> n_override = std::nullopt) {
    std::size_t km = u.size();
    FeasibleSelections out;
    std::optional<int> n = n_override ? n_override : inst.n;
    double budget = enumeration_budget();

    auto add_subset = [&](const std::vector<int>& subset) {
        std::vector<Sample> samples;
        samples.reserve(subset.size());
        for (int i : subset) samples.push_back(u[static_cast<std::size_t>(i)]);
        CanonicalDataset t = CanonicalDataset::from_samples(std::move(samples));
        auto it = std::lower_bound(out.datasets.begin(), out.datasets.end(), t);
        int id;
        if (it != out.datasets.end() && *it == t) {
            id = static_cast<int>(it - out.datasets.begin());
            out.multiplicity[static_cast<std::size_t>(id)]++;
        } else {
            id = static_cast<int>(it - out.datasets.begin());
            out.datasets.insert(it, t);
            out.multiplicity.insert(out.multiplicity.begin() + id, 1);
            for (int& sd : out.subset_dataset)
                if (sd >= id) ++sd;
        }
        out.index_subsets.push_back(subset);
        out.subset_dataset.push_back(id);
    };

    if (inst.selection_mode == SelectionMode::FixedN) {
        if (!n) throw ValidationError("feasible_selections: fixed-n mode requires n");
        if (*n < 1 || static_cast<std::size_t>(*n) > km)
            throw ValidationError("feasible_selections: n=" + std::to_string(*n) +
                                  " infeasible for pool of size " + std::to_string(km));
        // C(km, n) check against budget
        double count = 1.0;
        for (int i = 0; i < *n; ++i)
            count = count * static_cast<double>(km - static_cast<std::size_t>(i)) / (i + 1);
        if (count > budget)
            throw BudgetError("feasible_selections: C(km,n) exceeds budget", count);
        std::vector<int> subset(static_cast<std::size_t>(*n));
        for (int i = 0; i < *n; ++i) subset[static_cast<std::size_t>(i)] = i;
        while (true) {
            add_subset(subset);
            int j = *n - 1;
            while (j >= 0 && subset[static_cast<std::size_t>(j)] ==
                                 static_cast<int>(km) - *n + j)
                --j;
            if (j < 0) break;
            ++subset[static_cast<std::size_t>(j)];
            for (int i = j + 1; i < *n; ++i)
                subset[static_cast<std::size_t>(i)] = subset[static_cast<std::size_t>(i - 1)] + 1;
        }
    } else {
        double count = std::pow(2.0, static_cast<double>(km));
        if (count > budget)
            throw BudgetError("feasible_selections: 2^{km} exceeds budget", count);
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << km); ++mask) {
            std::vector<int> subset;
            for (std::size_t i = 0; i < km; ++i)
                if (mask & (std::uint64_t{1} << i)) subset.push_back(static_cast<int>(i));
            add_subset(subset);
        }
    }
    return out;
}

// Learning-algorithm kernel over the reachable canonical datasets.
inline StochKernel build_algorithm_kernel(const ProblemInstance& inst,
                                          const std::vector<CanonicalDataset>& reachable) {
    std::size_t nh = inst.nh();
    std::vector<std::vector<double>> rows;
    rows.reserve(reachable.size());
    for (const CanonicalDataset& t : reachable) {
        std::vector<double> row(nh, 0.0);
        switch (inst.algorithm.kind) {
            case AlgoKind::Explicit: {
                auto it = inst.algorithm.explicit_table.find(dataset_key(t, inst));
                if (it == inst.algorithm.explicit_table.end())
                    throw ValidationError("build_algorithm_kernel: explicit table missing dataset '" +
                                          dataset_key(t, inst) + "'");
                if (it->second.size() != nh)
                    throw ValidationError("build_algorithm_kernel: explicit row size mismatch");
                row = it->second;
                break;
            }
            case AlgoKind::Erm: {
                std::vector<double> risk(nh, 0.0);
                for (std::size_t h = 0; h < nh; ++h)
                    for (const Sample& s : t.samples)
                        risk[h] += inst.sample_loss(static_cast<int>(h), s);
                double best = *std::min_element(risk.begin(), risk.end());
                std::size_t ties = 0;
                for (double r : risk)
                    if (r <= best + 1e-12) ++ties;
                for (std::size_t h = 0; h < nh; ++h)
                    if (risk[h] <= best + 1e-12) row[h] = 1.0 / static_cast<double>(ties);
                break;
            }
            case AlgoKind::Gibbs: {
                if (inst.algorithm.beta < 0.0)
                    throw ValidationError("build_algorithm_kernel: gibbs requires beta >= 0");
                std::vector<double> energy(nh, 0.0);
                for (std::size_t h = 0; h < nh; ++h)
                    for (const Sample& s : t.samples)
                        energy[h] += inst.sample_loss(static_cast<int>(h), s);
                double emin = *std::min_element(energy.begin(), energy.end());
                double z = 0.0;
                for (std::size_t h = 0; h < nh; ++h) {
                    row[h] = std::exp(-inst.algorithm.beta * (energy[h] - emin));
                    z += row[h];
                }
                for (double& v : row) v /= z;
                break;
            }
        }
        rows.push_back(std::move(row));
    }
    return StochKernel(std::move(rows));
}

struct DBounds {
    double d_min = 0.0;
    // effective upper end of the distortion range used by the solver; starts
    // at max(d_max_constant, d_min) and is raised to the distortion of the
    // unconstrained minimum-rate kernel once a curve is computed
    double d_max = 0.0;
    double d_max_constant = 0.0;      // best constant mixture of algorithm rows
    double d_max_unrestricted = 0.0;  // min over hypotheses, ignoring reachability
};

struct ValidationReport {
    bool valid = true;
    std::vector<std::string> issues;
    double pool_cardinality = 0.0;  // (|X||Y|)^m per w
    std::optional<DBounds> d_bounds;
};

// Bundled exact enumeration of everything downstream modules need.
struct Setup {
    ProblemInstance inst;
    PoolSpace pools;
    std::vector<CanonicalDataset> datasets;        // global reachable set, deduplicated, sorted
    std::vector<std::vector<int>> feasible;        // per pool: indices into datasets
    std::vector<std::vector<int>> feasible_mult;   // per pool: index-subset multiplicity
    std::vector<double> index_subset_count;        // per pool: total index subsets
    StochKernel algo;                              // rows per global dataset
    std::vector<std::vector<double>> d_wh;         // W x H single-letter distortion
    std::vector<std::vector<double>> dbar_uh;      // U x H posterior distortion
    std::vector<std::vector<double>> cost_ut;      // U x |datasets| expected posterior distortion
    DBounds d_bounds;

    std::size_t num_pools() const { return pools.pools.size(); }
    std::size_t num_datasets() const { return datasets.size(); }
    std::size_t nh() const { return inst.nh(); }
    std::size_t nw() const { return inst.nw(); }
};

inline DBounds compute_d_bounds(const Setup& s);

inline Setup build_setup(const ProblemInstance& inst, std::optional<int> n_override = std::nullopt) {
    Setup s;
    s.inst = inst;
    if (n_override) s.inst.n = n_override;
    s.pools = enumerate_pool_space(s.inst);

    // global deduplicated dataset list
    std::vector<FeasibleSelections> per_pool;
    per_pool.reserve(s.pools.pools.size());
    for (const Pool& u : s.pools.pools) per_pool.push_back(feasible_selections(s.inst, u));
    for (const auto& fs : per_pool)
        for (const CanonicalDataset& t : fs.datasets) {
            auto it = std::lower_bound(s.datasets.begin(), s.datasets.end(), t);
            if (it == s.datasets.end() || *it != t) s.datasets.insert(it, t);
        }
    for (const auto& fs : per_pool) {
        std::vector<int> ids, mult;
        for (std::size_t j = 0; j < fs.datasets.size(); ++j) {
            auto it = std::lower_bound(s.datasets.begin(), s.datasets.end(), fs.datasets[j]);
            ids.push_back(static_cast<int>(it - s.datasets.begin()));
            mult.push_back(fs.multiplicity[j]);
        }
        s.feasible.push_back(std::move(ids));
        s.feasible_mult.push_back(std::move(mult));
        s.index_subset_count.push_back(static_cast<double>(fs.index_subsets.size()));
    }

    s.algo = build_algorithm_kernel(s.inst, s.datasets);

    s.d_wh.assign(s.nw(), std::vector<double>(s.nh(), 0.0));
    for (std::size_t w = 0; w < s.nw(); ++w)
        for (std::size_t h = 0; h < s.nh(); ++h)
            s.d_wh[w][h] = distortion(s.inst, static_cast<int>(w), static_cast<int>(h));

    s.dbar_uh.assign(s.num_pools(), std::vector<double>(s.nh(), 0.0));
    for (std::size_t u = 0; u < s.num_pools(); ++u)
        for (std::size_t h = 0; h < s.nh(); ++h)
            for (std::size_t w = 0; w < s.nw(); ++w)
                s.dbar_uh[u][h] += s.pools.p_w_given_u[u][w] * s.d_wh[w][h];

    s.cost_ut.assign(s.num_pools(), std::vector<double>(s.num_datasets(), 0.0));
    for (std::size_t u = 0; u < s.num_pools(); ++u)
        for (std::size_t t = 0; t < s.num_datasets(); ++t)
            for (std::size_t h = 0; h < s.nh(); ++h)
                s.cost_ut[u][t] += s.algo(t, h) * s.dbar_uh[u][h];

    s.d_bounds = compute_d_bounds(s);
    return s;
}

// d_min: best per-pool selection. d_max: best dataset-independent mixture of
// algorithm rows; the linear objective attains its minimum at a single row.
inline DBounds compute_d_bounds(const Setup& s) {
    DBounds b;
    b.d_min = 0.0;
    for (std::size_t u = 0; u < s.num_pools(); ++u) {
        double best = std::numeric_limits<double>::infinity();
        for (int t : s.feasible[u]) best = std::min(best, s.cost_ut[u][static_cast<std::size_t>(t)]);
        b.d_min += s.pools.p_u[u] * best;
    }
    b.d_max_constant = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < s.num_datasets(); ++t) {
        double e = 0.0;
        for (std::size_t u = 0; u < s.num_pools(); ++u) e += s.pools.p_u[u] * s.cost_ut[u][t];
        b.d_max_constant = std::min(b.d_max_constant, e);
    }
    // the constant mixture may be infeasible pool-by-pool, so it can fall
    // below d_min; the achievable endpoint is refined by the solver
    b.d_max = std::max(b.d_max_constant, b.d_min);
    b.d_max_unrestricted = std::numeric_limits<double>::infinity();
    for (std::size_t h = 0; h < s.nh(); ++h) {
        double e = 0.0;
        for (std::size_t u = 0; u < s.num_pools(); ++u) e += s.pools.p_u[u] * s.dbar_uh[u][h];
        b.d_max_unrestricted = std::min(b.d_max_unrestricted, e);
    }
    return b;
}

inline ValidationReport validate_instance(const ProblemInstance& inst) {
    ValidationReport rep;
    auto fail = [&](const std::string& msg) {
        rep.valid = false;
        rep.issues.push_back(msg);
    };
    if (inst.m < 1) fail("m must be >= 1");
    if (inst.n && (*inst.n < 1 || *inst.n > inst.m)) fail("n must satisfy 1 <= n <= m");
    if (inst.p_w.size() != inst.nw()) fail("p_w size does not match w_alphabet");
    if (inst.p_x_given_w.num_rows() != inst.nw() || inst.p_x_given_w.num_cols() != inst.nx())
        fail("p_x_given_w shape does not match alphabets");
    if (inst.p_y_given_x.num_rows() != inst.nx() || inst.p_y_given_x.num_cols() != inst.ny())
        fail("p_y_given_x shape does not match alphabets");
    if (inst.hypotheses.size() != inst.nh()) fail("hypotheses count does not match h_alphabet");
    for (std::size_t h = 0; h < inst.hypotheses.size(); ++h) {
        const auto& hs = inst.hypotheses[h];
        if (hs.deterministic()) {
            if (hs.map->size() != inst.nx())
                fail("hypothesis " + inst.h_alphabet[h] + ": deterministic map not total over X");
            else
                for (int y : *hs.map)
                    if (y < 0 || static_cast<std::size_t>(y) >= inst.ny())
                        fail("hypothesis " + inst.h_alphabet[h] + ": map target outside Y");
        } else if (hs.table) {
            if (hs.table->num_rows() != inst.nx() || hs.table->num_cols() != inst.ny())
                fail("hypothesis " + inst.h_alphabet[h] + ": table shape mismatch");
        } else {
            fail("hypothesis " + inst.h_alphabet[h] + ": neither table nor map given");
        }
    }
    if (inst.algorithm.kind == AlgoKind::Gibbs && inst.algorithm.beta < 0.0)
        fail("gibbs algorithm requires beta >= 0");
    if (!inst.loss.zero_one) {
        if (inst.loss.table.size() != inst.ny()) fail("loss table row count != |Y|");
        for (const auto& r : inst.loss.table)
            if (r.size() != inst.ny()) fail("loss table column count != |Y|");
    }
    // Assumption (I): every d(w;h) finite; in KL mode this needs support
    // containment at every x reachable under some w.
    if (rep.valid && inst.distortion_mode == DistortionMode::Kl) {
        for (std::size_t w = 0; w < inst.nw(); ++w)
            for (std::size_t x = 0; x < inst.nx(); ++x) {
                if (inst.p_x_given_w(w, x) <= 0.0) continue;
                for (std::size_t h = 0; h < inst.nh(); ++h)
                    for (std::size_t y = 0; y < inst.ny(); ++y)
                        if (inst.p_y_given_x(x, y) > 0.0 &&
                            inst.h_prob(static_cast<int>(h), static_cast<int>(x),
                                        static_cast<int>(y)) <= 0.0)
                            fail("Assumption (I) violated: hypothesis " + inst.h_alphabet[h] +
                                 " has zero mass on supported label y=" + inst.y_alphabet[y] +
                                 " at x=" + inst.x_alphabet[x]);
            }
    }
    rep.pool_cardinality = std::pow(static_cast<double>(inst.nx() * inst.ny()), inst.m);
    if (rep.valid && rep.pool_cardinality <= enumeration_budget()) {
        Setup s = build_setup(inst);
        rep.d_bounds = s.d_bounds;
    }
    return rep;
}

// Canonical tiny instance used throughout the tests: uniform binary W,
// x = w deterministically, binary symmetric label noise with crossover 0.2,
// identity/flip hypothesis pair, 0-1 loss, ERM, m=2, b=2, fixed-n.
inline ProblemInstance make_t1() {
    ProblemInstance inst;
    inst.w_alphabet = {"0", "1"};
    inst.x_alphabet = {"0", "1"};
    inst.y_alphabet = {"0", "1"};
    inst.h_alphabet = {"h_id", "h_flip"};
    inst.p_w = FiniteDist({0.5, 0.5});
    inst.p_x_given_w = StochKernel({{1.0, 0.0}, {0.0, 1.0}});
    inst.p_y_given_x = StochKernel({{0.8, 0.2}, {0.2, 0.8}});
    inst.hypotheses = {HypothesisSpec{std::nullopt, std::vector<int>{0, 1}},
                       HypothesisSpec{std::nullopt, std::vector<int>{1, 0}}};
    inst.algorithm.kind = AlgoKind::Erm;
    inst.loss.zero_one = true;
    inst.distortion_mode = DistortionMode::ExpectedLoss;
    inst.m = 2;
    inst.b = 2.0;
    inst.n = 1;
    inst.selection_mode = SelectionMode::FixedN;
    return inst;
}

// T1 with asymmetric label noise; makes the posterior, the RD curve and the
// between-sub-distribution dispersion terms nondegenerate.
inline ProblemInstance make_t1_asymmetric() {
    ProblemInstance inst = make_t1();
    inst.p_y_given_x = StochKernel({{0.6, 0.4}, {0.1, 0.9}});
    inst.p_w = FiniteDist({0.35, 0.65});
    inst.p_x_given_w = StochKernel({{0.9, 0.1}, {0.2, 0.8}});
    return inst;
}

// Single-w instance with the T1 marginal input law; m=1 so pools are single
// samples and n=k labeling reproduces i.i.d. sampling.
inline ProblemInstance make_t1_marginal() {
    ProblemInstance inst = make_t1();
    inst.w_alphabet = {"0"};
    inst.p_w = FiniteDist({1.0});
    inst.p_x_given_w = StochKernel({{0.5, 0.5}});
    inst.m = 1;
    inst.n = 1;
    return inst;
}

} // namespace poolrate

#endif
