#ifndef POOLRATE_PROB_HPP
#define POOLRATE_PROB_HPP

// Exact finite-probability toolkit: distributions, row-stochastic kernels,
// multi-axis joint tables, divergences, mutual information, information
// densities and Bayes posteriors. All information quantities are in nats;
// conversion to bits happens only at reporting boundaries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "poolrate/errors.hpp"

namespace poolrate {

inline constexpr double kMassTol = 1e-12;    // accepted deviation of a probability sum from 1
inline constexpr double kRenormTol = 1e-9;   // deviation below this is renormalized, above rejected

// x*log(x/y) with the 0*log 0 := 0 convention, in nats.
inline double xlogx_over(double x, double y) {
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return std::numeric_limits<double>::infinity();
    return x * std::log(x / y);
}

class FiniteDist {
  public:
    FiniteDist() = default;

    explicit FiniteDist(std::vector<double> weights,
                        std::optional<std::vector<std::string>> labels = std::nullopt)
        : weights_(std::move(weights)), labels_(std::move(labels)) {
        if (weights_.empty())
            throw ValidationError("FiniteDist: empty weight vector");
        if (labels_ && labels_->size() != weights_.size())
            throw ValidationError("FiniteDist: label count does not match weight count");
        double sum = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            if (!(weights_[i] >= 0.0))
                throw ValidationError("FiniteDist: negative weight at index " + std::to_string(i));
            sum += weights_[i];
        }
        double dev = std::abs(sum - 1.0);
        if (dev > kMassTol) {
            if (dev < kRenormTol) {
                for (double& w : weights_) w /= sum;
            } else {
                throw ValidationError("FiniteDist: weights sum to " + std::to_string(sum) +
                                      ", outside tolerance");
            }
        }
    }

    std::size_t size() const { return weights_.size(); }
    double operator[](std::size_t i) const { return weights_[i]; }
    const std::vector<double>& weights() const { return weights_; }
    const std::optional<std::vector<std::string>>& labels() const { return labels_; }

  private:
    std::vector<double> weights_;
    std::optional<std::vector<std::string>> labels_;
};

class StochKernel {
  public:
    StochKernel() = default;

    explicit StochKernel(std::vector<std::vector<double>> rows,
                         std::vector<std::string> row_labels = {},
                         std::vector<std::string> col_labels = {})
        : row_labels_(std::move(row_labels)), col_labels_(std::move(col_labels)) {
        if (rows.empty()) throw ValidationError("StochKernel: no rows");
        std::size_t cols = rows.front().size();
        rows_.reserve(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != cols)
                throw ValidationError("StochKernel: ragged row " + std::to_string(r));
            // validate through FiniteDist, keep the (possibly renormalized) weights
            FiniteDist d(std::move(rows[r]));
            rows_.push_back(d.weights());
        }
        cols_ = cols;
    }

    std::size_t num_rows() const { return rows_.size(); }
    std::size_t num_cols() const { return cols_; }
    double operator()(std::size_t r, std::size_t c) const { return rows_[r][c]; }
    const std::vector<double>& row(std::size_t r) const { return rows_[r]; }
    const std::vector<std::string>& row_labels() const { return row_labels_; }
    const std::vector<std::string>& col_labels() const { return col_labels_; }

  private:
    std::vector<std::vector<double>> rows_;
    std::size_t cols_ = 0;
    std::vector<std::string> row_labels_;
    std::vector<std::string> col_labels_;
};

// KL divergence D(p||q) in nats; +infinity when supp(p) is not within supp(q).
inline double kl_divergence(const FiniteDist& p, const FiniteDist& q) {
    if (p.size() != q.size())
        throw ValidationError("kl_divergence: alphabet size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double term = xlogx_over(p[i], q[i]);
        if (std::isinf(term)) return std::numeric_limits<double>::infinity();
        acc += term;
    }
    return std::max(acc, 0.0);
}

// A named multi-dimensional probability table. Axis order is fixed at
// construction; mass is stored row-major with the last axis fastest.
class JointTable {
  public:
    struct Axis {
        std::string name;
        std::size_t size;
    };

    JointTable(std::vector<Axis> axes, std::vector<double> mass)
        : axes_(std::move(axes)), mass_(std::move(mass)) {
        std::size_t total = 1;
        for (const auto& a : axes_) {
            if (a.size == 0) throw ValidationError("JointTable: zero-size axis " + a.name);
            total *= a.size;
        }
        if (mass_.size() != total)
            throw ValidationError("JointTable: mass size does not match axis product");
        double sum = 0.0;
        for (double v : mass_) {
            if (!(v >= 0.0)) throw ValidationError("JointTable: negative mass entry");
            sum += v;
        }
        double dev = std::abs(sum - 1.0);
        if (dev > kMassTol) {
            if (dev < kRenormTol) {
                for (double& v : mass_) v /= sum;
            } else {
                throw ValidationError("JointTable: total mass " + std::to_string(sum) +
                                      " outside tolerance");
            }
        }
        strides_.assign(axes_.size(), 1);
        for (std::size_t i = axes_.size(); i-- > 1;)
            strides_[i - 1] = strides_[i] * axes_[i].size;
    }

    const std::vector<Axis>& axes() const { return axes_; }
    const std::vector<double>& mass() const { return mass_; }

    std::size_t axis_index(const std::string& name) const {
        for (std::size_t i = 0; i < axes_.size(); ++i)
            if (axes_[i].name == name) return i;
        throw ValidationError("JointTable: unknown axis '" + name + "'");
    }

    double at(const std::vector<std::size_t>& idx) const {
        std::size_t flat = 0;
        for (std::size_t i = 0; i < axes_.size(); ++i) flat += idx[i] * strides_[i];
        return mass_[flat];
    }

    // Marginal over the named axes, in the order given.
    JointTable marginal(const std::vector<std::string>& names) const {
        std::vector<std::size_t> keep;
        keep.reserve(names.size());
        for (const auto& n : names) keep.push_back(axis_index(n));
        std::vector<Axis> out_axes;
        std::size_t out_total = 1;
        for (std::size_t k : keep) {
            out_axes.push_back(axes_[k]);
            out_total *= axes_[k].size;
        }
        std::vector<std::size_t> out_strides(keep.size(), 1);
        for (std::size_t i = keep.size(); i-- > 1;)
            out_strides[i - 1] = out_strides[i] * out_axes[i].size;
        std::vector<double> out(out_total, 0.0);
        std::vector<std::size_t> idx(axes_.size(), 0);
        for (std::size_t flat = 0; flat < mass_.size(); ++flat) {
            std::size_t rem = flat;
            for (std::size_t i = 0; i < axes_.size(); ++i) {
                idx[i] = rem / strides_[i];
                rem %= strides_[i];
            }
            std::size_t oflat = 0;
            for (std::size_t i = 0; i < keep.size(); ++i) oflat += idx[keep[i]] * out_strides[i];
            out[oflat] += mass_[flat];
        }
        return JointTable(std::move(out_axes), std::move(out));
    }

  private:
    std::vector<Axis> axes_;
    std::vector<double> mass_;
    std::vector<std::size_t> strides_;
};

namespace detail {

// 2-D helper: I(A;B) from a flattened |A|x|B| table.
inline double mi_from_pair_table(const std::vector<double>& pab, std::size_t na, std::size_t nb) {
    std::vector<double> pa(na, 0.0), pb(nb, 0.0);
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t b = 0; b < nb; ++b) {
            pa[a] += pab[a * nb + b];
            pb[b] += pab[a * nb + b];
        }
    double mi = 0.0;
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t b = 0; b < nb; ++b)
            mi += xlogx_over(pab[a * nb + b], pa[a] * pb[b]);
    return std::max(mi, 0.0);
}

} // namespace detail

inline double mutual_information(const JointTable& joint, const std::string& axis_a,
                                 const std::string& axis_b) {
    JointTable pair = joint.marginal({axis_a, axis_b});
    std::size_t na = pair.axes()[0].size, nb = pair.axes()[1].size;
    return detail::mi_from_pair_table(pair.mass(), na, nb);
}

inline double conditional_mutual_information(const JointTable& joint, const std::string& axis_a,
                                             const std::string& axis_b,
                                             const std::string& given_axis) {
    JointTable tri = joint.marginal({given_axis, axis_a, axis_b});
    std::size_t nc = tri.axes()[0].size, na = tri.axes()[1].size, nb = tri.axes()[2].size;
    const auto& m = tri.mass();
    double cmi = 0.0;
    std::vector<double> slice(na * nb);
    for (std::size_t c = 0; c < nc; ++c) {
        double pc = 0.0;
        for (std::size_t i = 0; i < na * nb; ++i) {
            slice[i] = m[c * na * nb + i];
            pc += slice[i];
        }
        if (pc <= 0.0) continue;
        for (double& v : slice) v /= pc;
        cmi += pc * detail::mi_from_pair_table(slice, na, nb);
    }
    return std::max(cmi, 0.0);
}

// log p(a,b)/(p(a)p(b)) in nats at one support atom of the (A,B) marginal.
inline double information_density(const JointTable& joint, const std::string& axis_a,
                                  const std::string& axis_b, std::size_t a, std::size_t b) {
    JointTable pair = joint.marginal({axis_a, axis_b});
    std::size_t nb = pair.axes()[1].size;
    const auto& m = pair.mass();
    double pab = m[a * nb + b];
    if (pab <= 0.0)
        throw RangeError("information_density: atom (" + std::to_string(a) + "," +
                         std::to_string(b) + ") outside support");
    double pa = 0.0, pb = 0.0;
    for (std::size_t j = 0; j < nb; ++j) pa += m[a * nb + j];
    for (std::size_t i = 0; i < pair.axes()[0].size; ++i) pb += m[i * nb + b];
    return std::log(pab / (pa * pb));
}

struct PosteriorResult {
    StochKernel kernel;                  // rows indexed by the support outputs, in order
    std::vector<std::size_t> u_support;  // output indices with positive marginal mass
    std::vector<double> p_u;             // marginal over all outputs (unnormalized rows excluded)
};

// Bayes inversion of a likelihood kernel (W -> U) against a prior on W.
// Zero-mass outputs are excluded from the returned rows.
inline PosteriorResult posterior_kernel(const StochKernel& likelihood, const FiniteDist& prior) {
    if (prior.size() != likelihood.num_rows())
        throw ValidationError("posterior_kernel: prior size does not match kernel input alphabet");
    std::size_t nw = likelihood.num_rows(), nu = likelihood.num_cols();
    std::vector<double> pu(nu, 0.0);
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t u = 0; u < nu; ++u) pu[u] += prior[w] * likelihood(w, u);
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> support;
    for (std::size_t u = 0; u < nu; ++u) {
        if (pu[u] <= 0.0) continue;
        std::vector<double> row(nw);
        for (std::size_t w = 0; w < nw; ++w) row[w] = prior[w] * likelihood(w, u) / pu[u];
        rows.push_back(std::move(row));
        support.push_back(u);
    }
    if (rows.empty())
        throw RangeError("posterior_kernel: likelihood has no support under the prior");
    return PosteriorResult{StochKernel(std::move(rows)), std::move(support), std::move(pu)};
}

} // namespace poolrate

#endif
