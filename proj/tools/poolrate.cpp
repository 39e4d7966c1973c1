// poolrate: compute constrained rate-distortion curves, tilted-information
// dispersion reports and finite-blocklength converse bounds for pool-based
// active-learning instances, with brute-force and Monte Carlo cross checks.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poolrate/converse.hpp"
#include "poolrate/dispersion.hpp"
#include "poolrate/errors.hpp"
#include "poolrate/instance.hpp"
#include "poolrate/io.hpp"
#include "poolrate/oracle.hpp"
#include "poolrate/prob.hpp"
#include "poolrate/rd_solver.hpp"

namespace fs = std::filesystem;
using namespace poolrate;

namespace {

std::string utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct OutputSink {
    fs::path dir;
    RunManifest manifest;

    explicit OutputSink(const std::string& out_dir) : dir(out_dir) {
        fs::create_directories(dir);
        manifest.started = utc_now();
    }
    void write(const std::string& name, const std::string& content) {
        write_file((dir / name).string(), content);
        manifest.outputs.push_back(name);
    }
    void finish() {
        manifest.finished = utc_now();
        write_file((dir / "manifest.json").string(), manifest.to_json().dump(2) + "\n");
    }
};

std::string config_hash(const nlohmann::json& config) {
    return sha256_hex(config.dump()).substr(0, 12);
}

CsvTable rd_curve_csv(const RDCurve& curve) {
    CsvTable t;
    t.header = {"lambda", "distortion", "rate_nats", "rate_bits"};
    for (const auto& p : curve.points)
        t.rows.push_back({fmt_double(p.lambda), fmt_double(p.avg_distortion),
                          fmt_double(p.rate), fmt_double(p.rate / std::log(2.0))});
    return t;
}

CsvTable selection_kernel_csv(const Setup& s, const LagrangianPoint& pt) {
    CsvTable t;
    t.header = {"pool_index", "dataset_index", "dataset_key", "probability"};
    for (std::size_t u = 0; u < s.num_pools(); ++u) {
        const auto& feas = s.feasible[u];
        for (std::size_t j = 0; j < feas.size(); ++j)
            t.rows.push_back(
                {std::to_string(u), std::to_string(feas[j]),
                 dataset_key(s.datasets[static_cast<std::size_t>(feas[j])], s.inst),
                 fmt_double(pt.selection[u][j])});
    }
    return t;
}

// inverse of selection_kernel_csv; validates against the current setup
std::vector<std::vector<double>> load_selection_kernel(const fs::path& path, const Setup& s) {
    std::string text = read_file(path.string());
    std::vector<std::vector<double>> sel(s.num_pools());
    for (std::size_t u = 0; u < s.num_pools(); ++u) sel[u].assign(s.feasible[u].size(), 0.0);
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f;
        std::vector<std::string> fields;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() < 4) throw ValidationError("selection kernel: malformed row '" + line + "'");
        std::size_t u = std::stoul(fields[0]);
        int dsid = std::stoi(fields[1]);
        // the dataset key itself contains commas, so the probability is the last field
        double p = std::stod(fields.back());
        if (u >= s.num_pools()) throw ValidationError("selection kernel: pool index out of range");
        const auto& feas = s.feasible[u];
        auto it = std::find(feas.begin(), feas.end(), dsid);
        if (it == feas.end())
            throw ValidationError("selection kernel: dataset not feasible for pool " +
                                  std::to_string(u));
        sel[u][static_cast<std::size_t>(it - feas.begin())] = p;
    }
    for (std::size_t u = 0; u < s.num_pools(); ++u) {
        double sum = 0.0;
        for (double v : sel[u]) sum += v;
        if (std::abs(sum - 1.0) > 1e-6)
            throw ValidationError("selection kernel: row " + std::to_string(u) +
                                  " sums to " + fmt_double(sum));
        for (double& v : sel[u]) v /= sum;
    }
    return sel;
}

CsvTable dispersion_csv(const DispersionReport& r) {
    CsvTable t;
    t.header = {"d_target",      "d_achieved",    "R_nats",        "lambda_star",
                "V",             "V_in",          "V_bet",         "V_in_U_iota",
                "V_in_S_iota",   "V_in_A_iota",   "V_in_U_d",      "V_in_S_d",
                "V_in_A_d",      "V_in_cov",      "V_bet_iota",    "V_bet_d",
                "V_bet_cov",     "V_bet_wh_variant", "third_abs_moment", "berry_esseen_B",
                "mean_tilted",   "zero_dispersion"};
    t.rows.push_back({fmt_double(r.d_target), fmt_double(r.d_achieved), fmt_double(r.R_check),
                      fmt_double(r.lambda_star), fmt_double(r.V), fmt_double(r.V_in),
                      fmt_double(r.V_bet), fmt_double(r.V_in_U_iota), fmt_double(r.V_in_S_iota),
                      fmt_double(r.V_in_A_iota), fmt_double(r.V_in_U_d), fmt_double(r.V_in_S_d),
                      fmt_double(r.V_in_A_d), fmt_double(r.V_in_cov), fmt_double(r.V_bet_iota),
                      fmt_double(r.V_bet_d), fmt_double(r.V_bet_cov),
                      fmt_double(r.V_bet_wh_variant), fmt_double(r.third_abs_moment),
                      fmt_double(r.berry_esseen_B), fmt_double(r.mean_tilted),
                      r.zero_dispersion ? "1" : "0"});
    return t;
}

nlohmann::json dispersion_json(const DispersionReport& r) {
    nlohmann::json j;
    j["d_target"] = r.d_target;
    j["d_achieved"] = r.d_achieved;
    j["rate_nats"] = r.R_check;
    j["lambda_star"] = r.lambda_star;
    j["V"] = r.V;
    j["V_in"] = r.V_in;
    j["V_bet"] = r.V_bet;
    j["V_in_terms"] = {{"U_iota", r.V_in_U_iota}, {"S_iota", r.V_in_S_iota},
                       {"A_iota", r.V_in_A_iota}, {"U_d", r.V_in_U_d},
                       {"S_d", r.V_in_S_d},       {"A_d", r.V_in_A_d},
                       {"cov", r.V_in_cov}};
    j["V_bet_terms"] = {{"iota", r.V_bet_iota}, {"d", r.V_bet_d}, {"cov", r.V_bet_cov}};
    j["V_bet_wh_variant"] = r.V_bet_wh_variant;
    j["third_abs_moment"] = r.third_abs_moment;
    j["berry_esseen_B"] = r.zero_dispersion ? nlohmann::json() : nlohmann::json(r.berry_esseen_B);
    j["mean_tilted"] = r.mean_tilted;
    return j;
}

CsvTable converse_csv(const std::vector<ConverseRow>& rows) {
    CsvTable t;
    t.header = {"theorem", "variant", "k", "m", "n", "d", "eps", "R_nats", "V", "lambda_star",
                "bound_value", "flags"};
    for (const auto& r : rows)
        t.rows.push_back({std::to_string(r.theorem), r.variant, std::to_string(r.k),
                          std::to_string(r.m), std::to_string(r.n), fmt_double(r.d),
                          fmt_double(r.eps), fmt_double(r.R_nats), fmt_double(r.V),
                          fmt_double(r.lambda_star), fmt_double(r.bound_value), r.flags});
    return t;
}

struct SolvedPoint {
    Setup setup;
    LagrangianPoint point;
    RDCurve curve;
    InducedJoint joint;
    TiltedTable tilted;
    DispersionReport report;
};

SolvedPoint solve_at(const ProblemInstance& inst, double d) {
    SolvedPoint sp;
    sp.setup = build_setup(inst);
    sp.curve = sweep_lambda(sp.setup, default_lambda_grid());
    sp.point = solve_to_target_d(sp.setup, d);
    sp.joint = induced_joint(sp.setup, sp.point.selection);
    sp.tilted = tilted_information(sp.joint, sp.curve, d);
    sp.report = dispersion_report(sp.joint, sp.tilted, sp.point.selection);
    return sp;
}

int cmd_validate(const std::string& path) {
    ProblemInstance inst = load_instance(path);
    ValidationReport rep = validate_instance(inst);
    std::printf("field                     value\n");
    std::printf("instance                  %s\n", path.c_str());
    std::printf("|W| |X| |Y| |H|           %zu %zu %zu %zu\n", inst.nw(), inst.nx(), inst.ny(),
                inst.nh());
    std::printf("m                         %d\n", inst.m);
    std::printf("n                         %s\n", inst.n ? std::to_string(*inst.n).c_str() : "-");
    std::printf("bits per sample           %s\n", fmt_double(inst.bits_per_sample()).c_str());
    std::printf("pool cardinality          %s\n", fmt_double(rep.pool_cardinality).c_str());
    if (rep.d_bounds) {
        std::printf("d_min                     %s\n", fmt_double(rep.d_bounds->d_min).c_str());
        std::printf("d_max                     %s\n", fmt_double(rep.d_bounds->d_max).c_str());
        std::printf("d_max (unrestricted)      %s\n",
                    fmt_double(rep.d_bounds->d_max_unrestricted).c_str());
    }
    std::printf("valid                     %s\n", rep.valid ? "yes" : "no");
    for (const auto& issue : rep.issues) std::fprintf(stderr, "issue: %s\n", issue.c_str());
    if (!rep.valid) throw ValidationError("instance failed validation");
    return 0;
}

void emit_rd_sweep(OutputSink& sink, const Setup& s, const RDCurve& curve) {
    sink.write("rd_curve.csv", rd_curve_csv(curve).serialize());
    SvgSeries series;
    series.label = "R(d) bits";
    for (const auto& [d, r] : curve.knots) series.points.emplace_back(d, r / std::log(2.0));
    sink.write("rd_curve.svg",
               svg_line_chart("rate-distortion curve", "distortion d", "rate (bits)", {series}));
    CsvTable bounds;
    bounds.header = {"d_min", "d_max", "d_max_constant", "d_max_unrestricted", "max_rate_nats"};
    bounds.rows.push_back({fmt_double(curve.d_min), fmt_double(curve.d_max),
                           fmt_double(s.d_bounds.d_max_constant),
                           fmt_double(s.d_bounds.d_max_unrestricted),
                           fmt_double(max_rate(curve))});
    sink.write("rd_bounds.csv", bounds.serialize());
}

CsvTable tilted_csv(const InducedJoint& joint, const TiltedTable& tt) {
    CsvTable t;
    t.header = {"w", "u", "t", "h", "probability", "iota_uh", "distortion", "jtilde"};
    const Setup& s = *joint.setup;
    for (const auto& a : joint.atoms)
        t.rows.push_back({std::to_string(a.w), std::to_string(a.u), std::to_string(a.t),
                          std::to_string(a.h), fmt_double(a.p),
                          fmt_double(joint.iota_uh(a.u, a.h)), fmt_double(s.d_wh[a.w][a.h]),
                          fmt_double(tt.at(a.w, a.u, a.h))});
    return t;
}

CsvTable enumeration_csv(const ProblemInstance& inst, double d, double eps, int k,
                         const std::string& cfg_hash) {
    // per-n minima over deterministic maps plus the n* staircase entry
    CsvTable t;
    t.header = {"n", "min_avg_distortion", "min_excess_prob", "strategies", "n_star_for_d",
                "config_hash"};
    LabelStaircase st = label_staircase(inst, d);
    for (int n = 1; n <= inst.m; ++n) {
        Setup s = build_setup(inst, n);
        auto strategies = enumerate_selections(s);
        double best_eps = 1.0;
        for (const auto& strat : strategies) {
            std::vector<std::vector<double>> sel(s.num_pools());
            for (std::size_t u = 0; u < s.num_pools(); ++u) {
                sel[u].assign(s.feasible[u].size(), 0.0);
                sel[u][static_cast<std::size_t>(strat.choice[u])] = 1.0;
            }
            best_eps = std::min(best_eps, exact_excess_probability(s, sel, k, d));
        }
        (void)eps;
        t.rows.push_back({std::to_string(n),
                          fmt_double(st.d_min_at_n[static_cast<std::size_t>(n - 1)]),
                          fmt_double(best_eps), std::to_string(strategies.size()),
                          st.n_star ? std::to_string(*st.n_star) : "-", cfg_hash});
    }
    return t;
}

CsvTable sim_csv(const SimulationResult& r, double d, const std::string& cfg_hash) {
    CsvTable t;
    t.header = {"strategy",   "k",         "trials",    "seed",        "d",
                "excess_count", "excess_rate", "wilson_lo", "wilson_hi", "mean_distortion",
                "mean_labels_per_letter", "config_hash"};
    t.rows.push_back({sim_strategy_name(r.strategy), std::to_string(r.k),
                      std::to_string(r.trials), std::to_string(r.seed), fmt_double(d),
                      std::to_string(r.excess_count), fmt_double(r.excess_rate),
                      fmt_double(r.wilson_lo), fmt_double(r.wilson_hi),
                      fmt_double(r.mean_distortion), fmt_double(r.mean_labels_per_letter),
                      cfg_hash});
    return t;
}

int run(int argc, char** argv) {
    CLI::App app{"rate-distortion laboratory for pool-based active learning"};
    app.require_subcommand(1);

    std::string instance_path, out_dir = "out";
    double d = 0.0, eps = 0.1, rate_bits = -1.0, target_d = 0.0;
    int theorem = 2, k = 100, n = 1;
    long long trials = 10000;
    std::uint64_t seed = 1;
    std::string strategy = "per-letter-optimal", k_grid = "50,100,200";
    bool slope_term = false;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("instance", instance_path, "instance JSON file")->required();
        if (needs_out) sub->add_option("--out", out_dir, "output directory");
    };

    CLI::App* validate = app.add_subcommand("validate", "validate an instance file");
    add_common(validate, false);

    CLI::App* sweep = app.add_subcommand("rd-sweep", "sweep the rate-distortion curve");
    add_common(sweep, true);

    CLI::App* solve = app.add_subcommand("rd-solve", "solve to a target distortion");
    add_common(solve, true);
    solve->add_option("--target-d", target_d, "target distortion")->required();

    CLI::App* tilted = app.add_subcommand("tilted", "tilted information table at d");
    add_common(tilted, true);
    tilted->add_option("--d", d, "distortion target")->required();

    CLI::App* disp = app.add_subcommand("dispersion", "dispersion report at d");
    add_common(disp, true);
    disp->add_option("--d", d, "distortion target")->required();

    CLI::App* conv = app.add_subcommand("converse", "evaluate a converse bound");
    add_common(conv, true);
    conv->add_option("--theorem", theorem, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
    conv->add_option("--d", d, "distortion target");
    conv->add_option("--k", k, "blocklength");
    conv->add_option("--n", n, "label budget (theorem 1)");
    conv->add_option("--eps", eps, "excess probability");
    conv->add_option("--rate", rate_bits, "rate budget in bits per letter (theorem 3)");
    conv->add_flag("--with-slope-term", slope_term, "add the extra slope term (theorem 3)");

    CLI::App* oracle = app.add_subcommand("oracle", "exhaustive selection enumeration");
    add_common(oracle, true);
    oracle->add_option("--n", n, "label budget")->required();
    oracle->add_option("--k", k, "blocklength for exact excess probability");
    oracle->add_option("--d", d, "distortion target")->required();
    oracle->add_option("--eps", eps, "epsilon for the staircase");

    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo block simulation");
    add_common(sim, true);
    sim->add_option("--k", k, "blocklength")->required();
    sim->add_option("--trials", trials, "trial count")->required();
    sim->add_option("--seed", seed, "root seed")->required();
    sim->add_option("--strategy", strategy,
                    "per-letter-optimal | greedy-min-distortion | random-feasible | label-all")
        ->required();
    sim->add_option("--d", d, "distortion target")->required();
    sim->add_option("--n", n, "label budget");

    CLI::App* report = app.add_subcommand("report", "full report bundle");
    add_common(report, true);
    report->add_option("--d", d, "distortion target")->required();
    report->add_option("--eps", eps, "excess probability")->required();
    report->add_option("--k-grid", k_grid, "comma-separated blocklengths");

    CLI11_PARSE(app, argc, argv);

    if (validate->parsed()) return cmd_validate(instance_path);

    ProblemInstance inst = load_instance(instance_path);
    std::string inst_bytes = read_file(instance_path);
    nlohmann::json config = {{"command", app.get_subcommands().front()->get_name()},
                             {"instance", instance_path},
                             {"d", d},
                             {"eps", eps},
                             {"k", k},
                             {"n", n},
                             {"seed", seed},
                             {"strategy", strategy},
                             {"budget", enumeration_budget()}};
    std::string cfg_hash = config_hash(config);

    OutputSink sink(out_dir);
    sink.manifest.instance_hash = sha256_hex(inst_bytes);
    sink.manifest.config = config;
    sink.manifest.root_seed = seed;

    if (sweep->parsed()) {
        Setup s = build_setup(inst);
        RDCurve curve = sweep_lambda(s, default_lambda_grid());
        emit_rd_sweep(sink, s, curve);
    } else if (solve->parsed()) {
        Setup s = build_setup(inst);
        LagrangianPoint pt = solve_to_target_d(s, target_d);
        sink.write("selection_kernel.csv", selection_kernel_csv(s, pt).serialize());
        CsvTable point;
        point.header = {"lambda", "distortion", "rate_nats", "rate_bits", "outer_iters",
                        "inner_gap"};
        point.rows.push_back({fmt_double(pt.lambda), fmt_double(pt.avg_distortion),
                              fmt_double(pt.rate), fmt_double(pt.rate / std::log(2.0)),
                              std::to_string(pt.outer_iters), fmt_double(pt.inner_gap)});
        sink.write("rd_point.csv", point.serialize());
    } else if (tilted->parsed()) {
        SolvedPoint sp = solve_at(inst, d);
        sink.write("tilted.csv", tilted_csv(sp.joint, sp.tilted).serialize());
    } else if (disp->parsed()) {
        SolvedPoint sp = solve_at(inst, d);
        sink.write("dispersion.csv", dispersion_csv(sp.report).serialize());
        sink.write("dispersion.json", dispersion_json(sp.report).dump(2) + "\n");
    } else if (conv->parsed()) {
        SolvedPoint sp = solve_at(inst, d);
        std::vector<ConverseRow> rows;
        if (theorem == 1) {
            EpsilonBound b =
                theorem1_epsilon_bound(sp.joint, sp.tilted, n, inst.bits_per_sample());
            rows.push_back(to_row(b, sp.tilted, inst.m, n, 1));
        } else if (theorem == 2) {
            RateBound b = theorem2_rate_bound(sp.report.R_check, sp.report.V,
                                              sp.report.third_abs_moment, k, eps,
                                              inst.bits_per_sample());
            for (auto& r : to_rows(b, sp.tilted, inst.m)) rows.push_back(r);
        } else {
            double R_nats = rate_bits >= 0.0 ? rate_bits * std::log(2.0)
                                             : rate_at_distortion(sp.curve, d);
            DistortionBound b =
                theorem3_distortion_bound(sp.curve, sp.report.V, R_nats, k, eps, slope_term);
            rows.push_back(to_row(b, inst.m, n));
        }
        sink.write("converse.csv", converse_csv(rows).serialize());
    } else if (oracle->parsed()) {
        ProblemInstance oi = inst;
        oi.n = n;
        sink.write("enumeration.csv", enumeration_csv(oi, d, eps, k, cfg_hash).serialize());
    } else if (sim->parsed()) {
        ProblemInstance si = inst;
        if (sim->count("--n")) si.n = n;
        Setup s = build_setup(si);
        SimStrategy strat;
        if (strategy == "per-letter-optimal")
            strat = SimStrategy::PerLetterOptimal;
        else if (strategy == "greedy-min-distortion")
            strat = SimStrategy::GreedyMinDistortion;
        else if (strategy == "random-feasible")
            strat = SimStrategy::RandomFeasible;
        else if (strategy == "label-all")
            strat = SimStrategy::LabelAll;
        else
            throw ValidationError("unknown strategy '" + strategy + "'");
        std::vector<std::vector<double>> sel;
        const std::vector<std::vector<double>>* selp = nullptr;
        if (strat == SimStrategy::PerLetterOptimal) {
            fs::path kernel = fs::path(out_dir) / "selection_kernel.csv";
            if (!fs::exists(kernel))
                throw ConvergenceError(
                    "simulate: per-letter-optimal needs selection_kernel.csv from a prior "
                    "rd-solve in the output directory",
                    0.0);
            sel = load_selection_kernel(kernel, s);
            selp = &sel;
        }
        SimulationResult r = simulate_block(s, selp, k, d, trials, seed, strat);
        sink.write("sim.csv", sim_csv(r, d, cfg_hash).serialize());
    } else if (report->parsed()) {
        SolvedPoint sp = solve_at(inst, d);
        emit_rd_sweep(sink, sp.setup, sp.curve);
        sink.write("dispersion.csv", dispersion_csv(sp.report).serialize());

        std::vector<int> ks;
        {
            std::istringstream is(k_grid);
            std::string tok;
            while (std::getline(is, tok, ',')) ks.push_back(std::stoi(tok));
        }
        std::vector<ConverseRow> rows;
        SvgSeries bound_series;
        bound_series.label = "rate bound (bits)";
        for (int kk : ks) {
            RateBound b = theorem2_rate_bound(sp.report.R_check, sp.report.V,
                                              sp.report.third_abs_moment, kk, eps,
                                              inst.bits_per_sample());
            for (auto& r : to_rows(b, sp.tilted, inst.m)) rows.push_back(r);
            bound_series.points.emplace_back(kk, b.asymptotic_nats / std::log(2.0));
        }
        sink.write("converse.csv", converse_csv(rows).serialize());
        sink.write("converse_vs_k.svg",
                   svg_line_chart("rate bound vs blocklength", "k", "rate (bits)",
                                  {bound_series}));

        SvgSeries eps_series;
        eps_series.label = "theorem-1 bound";
        eps_series.color = "#d1242f";
        int n_hi = inst.selection_mode == SelectionMode::FixedN ? inst.m : inst.m;
        for (int nn = 0; nn <= n_hi; ++nn) {
            EpsilonBound b =
                theorem1_epsilon_bound(sp.joint, sp.tilted, nn, inst.bits_per_sample());
            eps_series.points.emplace_back(nn, b.bound);
        }
        sink.write("eps_bound_vs_n.svg",
                   svg_line_chart("excess-probability bound vs label budget", "n", "bound",
                                  {eps_series}));
    }

    sink.finish();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConvergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const BudgetError& e) {
        std::fprintf(stderr, "error: %s (required budget %g)\n", e.what(), e.required_budget);
        return 4;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const RangeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
