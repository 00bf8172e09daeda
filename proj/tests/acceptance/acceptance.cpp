// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Tolerances and time limits are fixed here.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixtures.hpp"
#include "gridstab/cli.hpp"

namespace gs = gridstab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Invocation {
    int code = -1;
    std::string out;
    std::string err;
};

Invocation invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "gridstab");
    std::vector<char const*> argv;
    for (auto const& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Invocation r;
    r.code = gs::cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch_dir() {
    static fs::path const dir = [] {
        auto d = fs::temp_directory_path() / "gridstab_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string write_scratch(std::string const& name, std::string const& text) {
    auto const path = scratch_dir() / name;
    std::ofstream(path, std::ios::binary) << text;
    return path.string();
}

std::string header_value(std::string const& doc, std::string const& key) {
    auto const tag = "# " + key + ": ";
    auto const at = doc.find(tag);
    if (at == std::string::npos) return {};
    auto const start = at + tag.size();
    return doc.substr(start, doc.find('\n', start) - start);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<gs::Link> two_links() { return {gs::Link(0, 1), gs::Link(1, 2)}; }

// 1. Assembled Jacobian against central differences of the nonlinear rhs.
Verdict jacobian_matches_finite_differences() {
    constexpr double tolerance = 1e-6;
    double worst = 0.0;
    for (auto const* name : {"three_machine_ring.json", "new_england_39.json"}) {
        auto const model = gs::testing::bundled_model(name);
        for (auto const& links : {std::vector<gs::Link>{}, two_links()}) {
            auto const ctl = gs::ControlConfig::uniform(links, -1.0, model.op.delta_s);
            auto const j = gs::linearize(model, ctl).assembled;
            auto const fd = gs::testing::fd_jacobian(model, ctl, gs::MachineState::at_equilibrium(model.op));
            worst = std::max(worst, gs::testing::max_relative_error(fd, j, 0.0));
        }
    }
    return {worst <= tolerance, "max relative error " + fmt(worst) + " (limit " + fmt(tolerance) + ")"};
}

// 2. Reduced network reproduces retained-node voltages of the full augmented network.
Verdict kron_terminal_equivalence() {
    constexpr double tolerance = 1e-9;
    auto const pc = gs::testing::bundled_case("new_england_39.json");
    auto const aug = gs::internal_nodes(pc, gs::solve_powerflow(pc));
    auto const retained = aug.internal_nodes();
    auto const reduced = gs::kron_reduce(aug.y, retained);
    auto const full_lu = aug.y.partialPivLu();
    auto const reduced_lu = reduced.partialPivLu();
    auto const r = static_cast<Eigen::Index>(retained.size());

    std::mt19937_64 rng(20261016);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXcd injection = Eigen::VectorXcd::Zero(aug.y.rows());
        Eigen::VectorXcd reduced_injection(r);
        for (Eigen::Index k = 0; k < r; ++k) {
            reduced_injection[k] = {unit(rng), unit(rng)};
            injection[static_cast<Eigen::Index>(retained[static_cast<std::size_t>(k)])] = reduced_injection[k];
        }
        Eigen::VectorXcd const v_full = full_lu.solve(injection);
        Eigen::VectorXcd const v_red = reduced_lu.solve(reduced_injection);
        for (Eigen::Index k = 0; k < r; ++k) {
            auto const full = v_full[static_cast<Eigen::Index>(retained[static_cast<std::size_t>(k)])];
            worst = std::max(worst, std::abs(full - v_red[k]) / std::abs(full));
        }
    }
    return {worst <= tolerance, "100 injections, max relative error " + fmt(worst) + " (limit " + fmt(tolerance) + ")"};
}

nlohmann::json plan_39_structured() {
    static nlohmann::json const doc = [] {
        auto const r = invoke({"plan", "--case", gs::testing::case_path("new_england_39.json"), "--budget", "15",
                               "--gain", "-1", "--format", "structured"});
        if (r.code != 0) throw std::runtime_error("plan failed: " + r.err);
        return nlohmann::json::parse(r.out);
    }();
    return doc;
}

// 3. Alpha strictly decreases and early links are worth far more than late ones.
Verdict monotone_stabilization() {
    auto const doc = plan_39_structured();
    auto const& its = doc["iterations"];
    if (its.empty()) return {false, "no iterations completed"};
    double previous = doc["baseline_alpha"].get<double>();
    for (auto const& it : its) {
        double const a = it["alpha_max"].get<double>();
        if (!(a < previous)) {
            return {false, "alpha_max did not decrease at iteration " + std::to_string(it["iteration"].get<int>())};
        }
        previous = a;
    }
    double const first = its.front()["marginal_gain"].get<double>();
    double const last = its.back()["marginal_gain"].get<double>();
    double const ratio = first / last;
    return {ratio >= 10.0 && its.size() == 15,
            std::to_string(its.size()) + " iterations strictly decreasing, first/last gain ratio " + fmt(ratio) +
                " (need >= 10)"};
}

// 4. The plan report states a strictly positive improvement over the baseline.
Verdict improvement_reported() {
    auto const r = invoke({"plan", "--case", gs::testing::case_path("new_england_39.json"), "--budget", "15",
                           "--gain", "-1"});
    if (r.code != 0) return {false, "plan exited " + std::to_string(r.code)};
    auto const reported = header_value(r.out, "improvement");
    if (reported.empty()) return {false, "no improvement line in the report header"};
    double const improvement = std::stod(reported);
    auto const doc = plan_39_structured();
    double const baseline = doc["baseline_alpha"].get<double>();
    double const final_alpha = doc["final_alpha"].get<double>();
    return {improvement > 0.0 && final_alpha < baseline,
            "baseline " + fmt(baseline) + ", after 15 links " + fmt(final_alpha) + ", header improvement " + reported};
}

// 5. Greedy first pick equals the exhaustive optimum; exhaustive never loses at budget 2.
Verdict greedy_first_pick() {
    auto const model = gs::testing::bundled_model("four_generator_toy.json");
    gs::PlanOptions one;
    one.budget = 1;
    auto const greedy1 = gs::greedy_plan(model, one);
    auto const exhaustive1 = gs::exhaustive_plan(model, 1, -1.0);
    gs::PlanOptions two;
    two.budget = 2;
    auto const greedy2 = gs::greedy_plan(model, two);
    auto const exhaustive2 = gs::exhaustive_plan(model, 2, -1.0);
    bool const same_first = !greedy1.iterations.empty() && !exhaustive1.iterations.empty() &&
                            greedy1.iterations[0].link == exhaustive1.iterations[0].link;
    bool const not_worse = exhaustive2.final_alpha() <= greedy2.final_alpha();
    return {same_first && not_worse, std::string("first pick ") + (same_first ? "matches" : "differs") +
                                         "; budget 2 exhaustive " + fmt(exhaustive2.final_alpha()) + " vs greedy " +
                                         fmt(greedy2.final_alpha())};
}

// 6. Simulated decay rate agrees with the spectral abscissa.
Verdict decay_rate_consistency() {
    auto const links = write_scratch("one_link.json", R"({"links": [[1, 2]]})");
    auto const r = invoke({"simulate", "--case", gs::testing::case_path("three_machine_ring.json"), "--links", links,
                           "--gain", "-1", "--perturb", "gen=1,ddelta=0.01"});
    if (r.code != 0) return {false, "simulate exited " + std::to_string(r.code) + ": " + r.err};
    auto const rate_text = header_value(r.out.substr(r.out.find("# summary")), "decay_rate");
    if (rate_text.empty() || rate_text.starts_with("n/a")) return {false, "no fitted rate: " + rate_text};
    double const rate = std::stod(rate_text);

    auto const model = gs::testing::bundled_model("three_machine_ring.json");
    std::vector<gs::Link> const one_link{gs::Link(0, 1)};
    double const alpha = gs::alpha_for_links(model, one_link, -1.0);
    double const rel = std::abs(rate - alpha) / std::abs(alpha);
    return {alpha < 0.0 && rel <= 0.15,
            "fitted " + fmt(rate) + " vs alpha_max " + fmt(alpha) + ", relative gap " + fmt(rel) + " (limit 0.15)"};
}

// 7. RK4 global error falls by about 2^4 when the step halves.
Verdict integrator_order() {
    auto const model = gs::testing::two_machine_model(1.0, 0.1, 0.05);
    auto const start = gs::MachineState::at_equilibrium(model.op);
    auto const kick = gs::DisturbanceSpec::state_offset(0, 0.3, 0.0);
    auto terminal = [&](double dt) {
        gs::SimulationOptions opts;
        opts.t_max = 5.0;
        opts.dt = dt;
        auto const s = gs::simulate(start, model, {}, kick, opts).states.back();
        Eigen::VectorXd x(4);
        x << s.delta, s.omega;
        return x;
    };
    double const dt = 0.02;
    Eigen::VectorXd const reference = terminal(dt / 8.0);
    double const ratio = (terminal(dt) - reference).norm() / (terminal(dt / 2.0) - reference).norm();
    return {ratio >= 12.0 && ratio <= 20.0, "error ratio " + fmt(ratio) + " (need [12, 20])"};
}

// 8. Each bundled case has exactly one deflated zero mode along the uniform angle shift.
Verdict structural_zero_mode() {
    std::string detail;
    bool pass = true;
    for (auto const* name : {"three_machine_ring.json", "four_generator_toy.json", "new_england_39.json"}) {
        auto const model = gs::testing::bundled_model(name);
        auto const j = gs::linearize(model, gs::ControlConfig{}).assembled;
        auto const n = static_cast<Eigen::Index>(model.size());

        Eigen::EigenSolver<Eigen::MatrixXd> solver(j);
        Eigen::Index smallest = 0;
        for (Eigen::Index i = 1; i < j.rows(); ++i) {
            if (std::abs(solver.eigenvalues()[i]) < std::abs(solver.eigenvalues()[smallest])) smallest = i;
        }
        double const magnitude = std::abs(solver.eigenvalues()[smallest]);
        Eigen::VectorXcd const v = solver.eigenvectors().col(smallest);
        Eigen::VectorXcd shift = Eigen::VectorXcd::Zero(2 * n);
        shift.head(n).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
        double const cosine = std::abs(shift.dot(v)) / v.norm();

        auto const report = gs::analyze_spectrum(j);
        // Deflation must set aside exactly the one zero eigenvalue and nothing else.
        double expected_alpha = -std::numeric_limits<double>::infinity();
        std::size_t near_zero = 0;
        for (std::size_t i = 0; i < report.eigenvalues.size(); ++i) {
            if (std::abs(report.eigenvalues[i]) <= 1e-8 * j.norm()) ++near_zero;
            if (report.deflated_index && i == *report.deflated_index) continue;
            expected_alpha = std::max(expected_alpha, report.eigenvalues[i].real());
        }
        bool const ok = magnitude <= 1e-10 * j.norm() && cosine >= 0.99 && report.deflated_zero &&
                        report.deflated_index.has_value() && near_zero == 1 &&
                        report.eigenvalues.size() == static_cast<std::size_t>(2 * n) &&
                        report.alpha_max == expected_alpha;
        pass = pass && ok;
        detail += std::string(detail.empty() ? "" : "; ") + name + " |lambda|/|J| " + fmt(magnitude / j.norm()) +
                  " cos " + fmt(cosine) + (ok ? "" : " FAIL");
    }
    return {pass, detail};
}

// 9. Planner throughput on a 35-generator reduced network.
Verdict planner_scalability() {
    auto const model = gs::testing::random_reduced_model(35, 35);
    std::ostringstream doc;
    gs::write_reduced_structured(doc, gs::Provenance{"reduce", "", {}}, model);
    auto const path = write_scratch("random35.json", doc.str());

    auto const start = std::chrono::steady_clock::now();
    auto const r = invoke({"plan", "--case", path, "--budget", "15", "--threads", "1", "--format", "structured"});
    double const seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (r.code != 0) return {false, "plan exited " + std::to_string(r.code) + ": " + r.err};
    auto const j = nlohmann::json::parse(r.out);
    auto const& its = j["iterations"];
    bool counts = its.size() == 15;
    for (std::size_t k = 0; counts && k < its.size(); ++k) {
        counts = its[k]["candidates_evaluated"].get<std::size_t>() == 595 - k;
    }
    std::string const first = its.empty() ? "-" : its.front()["candidates_evaluated"].dump();
    std::string const last = its.empty() ? "-" : its.back()["candidates_evaluated"].dump();
    return {counts && seconds < 60.0, std::to_string(its.size()) + " iterations, candidates " + first + " -> " + last +
                                          ", " + fmt(seconds) + " s single-threaded (limit 60 s)"};
}

// 10. Repeated plans, serial and parallel, are byte-identical.
Verdict determinism() {
    auto const path = gs::testing::case_path("new_england_39.json");
    bool same = true;
    for (auto const* format : {"table", "structured"}) {
        auto const base = invoke({"plan", "--case", path, "--format", format, "--threads", "1"});
        if (base.code != 0) return {false, "plan exited " + std::to_string(base.code)};
        for (auto const* threads : {"1", "4", "4"}) {
            auto const again = invoke({"plan", "--case", path, "--format", format, "--threads", threads});
            same = same && again.code == 0 && again.out == base.out;
        }
    }
    return {same, same ? "8 runs (table and structured, 1 and 4 threads) byte-identical" : "outputs differ"};
}

struct Criterion {
    int number;
    std::string name;
    double time_limit;  // s; 0 means none
    std::function<Verdict()> check;
};

}  // namespace

int main() {
    std::vector<Criterion> const criteria{
        {1, "jacobian vs finite differences", 5.0, jacobian_matches_finite_differences},
        {2, "kron terminal equivalence", 5.0, kron_terminal_equivalence},
        {3, "monotone stabilization", 30.0, monotone_stabilization},
        {4, "baseline vs controlled improvement", 0.0, improvement_reported},
        {5, "greedy first pick vs exhaustive", 10.0, greedy_first_pick},
        {6, "decay rate vs alpha_max", 10.0, decay_rate_consistency},
        {7, "rk4 order", 0.0, integrator_order},
        {8, "structural zero mode", 0.0, structural_zero_mode},
        {9, "planner scalability n=35", 60.0, planner_scalability},
        {10, "determinism", 0.0, determinism},
    };

    int failures = 0;
    for (auto const& c : criteria) {
        auto const start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.check();
        } catch (std::exception const& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        double const seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.time_limit > 0.0 && seconds >= c.time_limit) {
            v.pass = false;
            v.detail += "; exceeded " + fmt(c.time_limit) + " s";
        }
        if (!v.pass) ++failures;
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c.number << " (" << c.name << "): " << v.detail
                  << " [" << fmt(seconds) << " s]" << std::endl;
    }
    fs::remove_all(scratch_dir());
    std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
              << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
