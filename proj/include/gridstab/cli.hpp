#pragma once

// Command-line front end. `main_entry` parses arguments; `run` executes one
// subcommand and maps errors to exit codes:
//   0 success, 1 computation failure, 2 input or configuration failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridstab/case_model.hpp"
#include "gridstab/dynamics.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/format.hpp"
#include "gridstab/linearization.hpp"
#include "gridstab/planner.hpp"
#include "gridstab/powerflow.hpp"
#include "gridstab/reduction.hpp"
#include "gridstab/report.hpp"

namespace gridstab::cli {

enum class Subcommand { analyze, plan, simulate, reduce };
enum class Format { table, structured };

inline std::string_view to_string(Subcommand s) {
    switch (s) {
        case Subcommand::analyze: return "analyze";
        case Subcommand::plan: return "plan";
        case Subcommand::simulate: return "simulate";
        case Subcommand::reduce: return "reduce";
    }
    return "?";
}

struct RunConfig {
    Subcommand subcommand = Subcommand::analyze;
    std::string case_path;
    std::string output_path = "-";
    std::string links_path;
    double gain = -1.0;
    long long budget = 15;
    double dt = 1e-3;
    double t_max = 20.0;
    std::optional<double> fit_start;  // default t_max / 4
    bool deflate = true;
    bool allow_nonpositive = false;
    bool literal_control = false;
    unsigned threads = 1;
    std::vector<std::string> perturb;
    std::optional<Format> format;  // default depends on the subcommand

    Format effective_format() const {
        if (format) return *format;
        return subcommand == Subcommand::plan || subcommand == Subcommand::simulate
                   ? Format::table
                   : Format::structured;
    }
};

inline std::string read_text_file(std::string const& path, std::string_view what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + std::string(what) + " '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parses `gen=I,ddelta=X,domega=Y[,at=T]` or `pm-step gen=I,dpm=Z,at=T`.
/// Generator indices are 1-based; tokens may be split across arguments.
inline DisturbanceSpec parse_perturb(std::vector<std::string> const& tokens, std::size_t n) {
    std::string joined;
    for (auto const& t : tokens) joined += (joined.empty() ? "" : ",") + t;
    for (auto& ch : joined) {
        if (ch == ' ') ch = ',';
    }
    std::vector<std::string> parts;
    std::stringstream ss(joined);
    for (std::string part; std::getline(ss, part, ',');) {
        if (!part.empty()) parts.push_back(part);
    }
    if (parts.empty()) throw InputError("--perturb: empty disturbance");

    bool const step = parts.front() == "pm-step";
    if (step) parts.erase(parts.begin());

    std::optional<long long> gen;
    double d_delta = 0.0, d_omega = 0.0, d_pm = 0.0, at = 0.0;
    bool have_dpm = false;
    for (auto const& p : parts) {
        auto const eq = p.find('=');
        if (eq == std::string::npos) throw InputError("--perturb: expected key=value, got '" + p + "'");
        std::string const key = p.substr(0, eq);
        std::string const value = p.substr(eq + 1);
        double number = 0.0;
        try {
            std::size_t used = 0;
            number = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (std::exception const&) {
            throw InputError("--perturb: '" + key + "' needs a number, got '" + value + "'");
        }
        if (key == "gen") {
            if (number != std::floor(number)) throw InputError("--perturb: gen must be an integer");
            gen = static_cast<long long>(number);
        } else if (key == "ddelta" && !step) {
            d_delta = number;
        } else if (key == "domega" && !step) {
            d_omega = number;
        } else if (key == "dpm" && step) {
            d_pm = number;
            have_dpm = true;
        } else if (key == "at") {
            at = number;
        } else {
            throw InputError("--perturb: unexpected key '" + key + "'");
        }
    }
    if (!gen) throw InputError("--perturb: gen=I is required");
    if (*gen < 1 || static_cast<std::size_t>(*gen) > n) {
        throw InputError("--perturb: generator " + std::to_string(*gen) + " out of range 1.." +
                         std::to_string(n));
    }
    if (step && !have_dpm) throw InputError("--perturb: pm-step needs dpm=Z");
    if (!(at >= 0.0)) throw InputError("--perturb: at must be nonnegative");
    auto const target = static_cast<std::size_t>(*gen - 1);
    return step ? DisturbanceSpec::mechanical_step(target, d_pm, at)
                : DisturbanceSpec::state_offset(target, d_delta, d_omega, at);
}

/// Reads `{"links": [[i, k], ...]}` with 1-based generator indices.
inline std::vector<Link> parse_links_document(std::string_view text, std::size_t n) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (nlohmann::json::parse_error const& e) {
        auto [line, column] = detail::line_column(text, e.byte);
        throw ParseError(e.what(), line, column);
    }
    if (!j.is_object() || !j.contains("links") || !j["links"].is_array()) {
        throw SchemaError("/links", "expected an array of generator pairs");
    }
    std::vector<Link> links;
    std::set<Link> seen;
    for (std::size_t idx = 0; idx < j["links"].size(); ++idx) {
        auto const& pair = j["links"][idx];
        std::string const where = "/links/" + std::to_string(idx);
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
            !pair[1].is_number_integer()) {
            throw SchemaError(where, "expected [i, k] with integer generator indices");
        }
        auto const a = pair[0].get<long long>();
        auto const b = pair[1].get<long long>();
        if (a < 1 || b < 1 || static_cast<std::size_t>(a) > n || static_cast<std::size_t>(b) > n) {
            throw SchemaError(where, "generator index out of range 1.." + std::to_string(n));
        }
        if (a == b) throw SchemaError(where, "self-link");
        Link const l(static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1));
        if (!seen.insert(l).second) throw SchemaError(where, "duplicate link");
        links.push_back(l);
    }
    return links;
}

/// A grid case runs the full pipeline; a reduced-network document is used as is.
inline SystemModel load_model(std::string const& text) {
    bool reduced = false;
    try {
        auto const j = nlohmann::json::parse(text);
        reduced = j.is_object() && j.contains("y_g");
    } catch (nlohmann::json::parse_error const&) {
        // parse_case reports the position
    }
    if (reduced) return parse_reduced_document(text);
    return build_system_model(parse_case(text));
}

namespace detail {

inline Provenance provenance(RunConfig const& cfg, std::string const& case_text) {
    Provenance p;
    p.command = std::string(to_string(cfg.subcommand));
    p.case_sha256 = sha256_hex(case_text);
    p.config.emplace_back("gain", format_double(cfg.gain));
    if (cfg.subcommand == Subcommand::plan) {
        p.config.emplace_back("budget", std::to_string(cfg.budget));
        p.config.emplace_back("allow_nonpositive", cfg.allow_nonpositive ? "true" : "false");
    }
    p.config.emplace_back("deflation", cfg.deflate ? "true" : "false");
    if (cfg.subcommand == Subcommand::simulate) {
        p.config.emplace_back("dt", format_double(cfg.dt));
        p.config.emplace_back("t_max", format_double(cfg.t_max));
        std::string joined;
        for (auto const& t : cfg.perturb) joined += (joined.empty() ? "" : " ") + t;
        p.config.emplace_back("perturb", joined.empty() ? "none" : joined);
    }
    if (cfg.subcommand == Subcommand::analyze || cfg.subcommand == Subcommand::simulate) {
        p.config.emplace_back("control", cfg.literal_control ? "literal" : "deviation");
    }
    return p;
}

inline std::vector<Link> installed_links(RunConfig const& cfg, std::size_t n) {
    if (cfg.links_path.empty()) return {};
    return parse_links_document(read_text_file(cfg.links_path, "links file"), n);
}

inline void check_gain(RunConfig const& cfg, bool have_links, std::ostream& err) {
    if (!std::isfinite(cfg.gain)) throw InputError("--gain must be finite");
    if (cfg.gain < 0.0) return;
    if (cfg.subcommand == Subcommand::plan) throw InputError("--gain must be strictly negative for plan");
    if (have_links) err << "gridstab: warning: non-negative gain " << format_double(cfg.gain)
                        << " is a diagnostic setting\n";
}

inline void run_analyze(RunConfig const& cfg, std::string const& text, SystemModel const& model,
                        std::ostream& out, std::ostream& err) {
    auto const links = installed_links(cfg, model.size());
    check_gain(cfg, !links.empty(), err);
    auto ctl = ControlConfig::uniform(links, cfg.gain, model.op.delta_s);
    ctl.mode = cfg.literal_control ? ControlMode::literal : ControlMode::deviation;
    SpectrumOptions opts;
    opts.deflate = cfg.deflate;
    auto const report = analyze_spectrum(linearize(model, ctl).assembled, opts);
    auto const prov = provenance(cfg, text);
    if (cfg.effective_format() == Format::table) {
        write_spectrum_table(out, prov, report);
    } else {
        write_spectrum_structured(out, prov, report, links);
    }
}

inline void run_plan(RunConfig const& cfg, std::string const& text, SystemModel const& model,
                     std::ostream& out, std::ostream& err) {
    check_gain(cfg, true, err);
    if (cfg.budget < 0) throw InputError("--budget must be nonnegative");
    if (!cfg.links_path.empty()) throw InputError("--links is not used by plan");
    PlanOptions opts;
    opts.budget = static_cast<std::size_t>(cfg.budget);
    opts.gain = cfg.gain;
    opts.allow_nonpositive = cfg.allow_nonpositive;
    opts.threads = cfg.threads;
    opts.spectrum.deflate = cfg.deflate;
    auto const plan = greedy_plan(model, opts);
    for (auto const& w : plan.warnings) err << "gridstab: warning: " << w << '\n';
    auto const prov = provenance(cfg, text);
    if (cfg.effective_format() == Format::table) {
        write_plan_table(out, prov, plan);
    } else {
        write_plan_structured(out, prov, plan);
    }
}

// RK4 round-off settles the deviation around 1e-13 of the state; the rate
// fit ignores samples this far below the peak disturbance.
inline constexpr double fit_relative_floor = 1e-9;

inline void run_simulate(RunConfig const& cfg, std::string const& text, SystemModel const& model,
                         std::ostream& out, std::ostream& err) {
    auto const links = installed_links(cfg, model.size());
    check_gain(cfg, !links.empty(), err);
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw InputError("--dt must be positive");
    if (!(cfg.t_max >= cfg.dt) || !std::isfinite(cfg.t_max)) throw InputError("--tmax must be at least --dt");
    double const fit_start = cfg.fit_start.value_or(cfg.t_max / 4.0);
    if (!(fit_start >= 0.0 && fit_start < cfg.t_max)) throw InputError("--fit-start must lie in [0, tmax)");

    std::optional<DisturbanceSpec> disturbance;
    if (!cfg.perturb.empty()) disturbance = parse_perturb(cfg.perturb, model.size());

    auto ctl = ControlConfig::uniform(links, cfg.gain, model.op.delta_s);
    ctl.mode = cfg.literal_control ? ControlMode::literal : ControlMode::deviation;
    SimulationOptions sim;
    sim.dt = cfg.dt;
    sim.t_max = cfg.t_max;
    auto const traj = simulate(MachineState::at_equilibrium(model.op), model, ctl, disturbance, sim);

    SpectrumOptions sopts;
    sopts.deflate = cfg.deflate;
    double const alpha = analyze_spectrum(linearize(model, ctl).assembled, sopts).alpha_max;
    std::optional<double> rate;
    std::string rate_note;
    try {
        rate = decay_rate(traj, model.op, fit_start, fit_relative_floor);
    } catch (ComputationError const& e) {
        rate_note = e.what();
    }

    auto const prov = provenance(cfg, text);
    if (cfg.effective_format() == Format::table) {
        prov.write_comment_header(out);
        write_trajectory_csv(out, traj);
        out << "# summary\n";
        out << "# fit_start: " << format_double(fit_start) << '\n';
        out << "# decay_rate: " << (rate ? format_double(*rate) : "n/a (" + rate_note + ")") << '\n';
        out << "# alpha_max: " << format_double(alpha) << '\n';
        return;
    }
    nlohmann::ordered_json j;
    j["provenance"] = prov.to_json();
    j["times"] = traj.times;
    auto deltas = nlohmann::ordered_json::array();
    auto omegas = nlohmann::ordered_json::array();
    for (auto const& s : traj.states) {
        deltas.push_back(gridstab::detail::vector_json(s.delta));
        omegas.push_back(gridstab::detail::vector_json(s.omega));
    }
    j["delta"] = std::move(deltas);
    j["omega"] = std::move(omegas);
    nlohmann::ordered_json summary;
    summary["fit_start"] = fit_start;
    summary["decay_rate"] = rate ? nlohmann::ordered_json(*rate) : nlohmann::ordered_json(nullptr);
    if (!rate) summary["decay_rate_note"] = rate_note;
    summary["alpha_max"] = alpha;
    j["summary"] = std::move(summary);
    out << j.dump(1) << '\n';
}

inline void run_reduce(RunConfig const& cfg, std::string const& text, SystemModel const& model,
                       std::ostream& out) {
    auto const prov = provenance(cfg, text);
    if (cfg.effective_format() == Format::table) {
        write_reduced_table(out, prov, model);
    } else {
        write_reduced_structured(out, prov, model);
    }
}

}  // namespace detail

/// Runs one subcommand. The output file is written only on success.
inline int run(RunConfig const& cfg, std::ostream& stdout_stream, std::ostream& err) {
    try {
        if (cfg.case_path.empty()) throw InputError("--case is required");
        if (cfg.output_path.empty()) throw InputError("--out must not be empty");
        auto const text = read_text_file(cfg.case_path, "case file");
        auto const model = load_model(text);

        std::ostringstream doc;
        switch (cfg.subcommand) {
            case Subcommand::analyze: detail::run_analyze(cfg, text, model, doc, err); break;
            case Subcommand::plan: detail::run_plan(cfg, text, model, doc, err); break;
            case Subcommand::simulate: detail::run_simulate(cfg, text, model, doc, err); break;
            case Subcommand::reduce: detail::run_reduce(cfg, text, model, doc); break;
        }

        if (cfg.output_path == "-") {
            stdout_stream << doc.str();
            stdout_stream.flush();
        } else {
            std::ofstream file(cfg.output_path, std::ios::binary | std::ios::trunc);
            if (!file) throw InputError("cannot write output file '" + cfg.output_path + "'");
            file << doc.str();
            if (!file.flush()) throw InputError("failed writing output file '" + cfg.output_path + "'");
        }
        return 0;
    } catch (InputError const& e) {
        err << "gridstab: error: " << e.what() << '\n';
        return 2;
    } catch (std::invalid_argument const& e) {
        err << "gridstab: error: " << e.what() << '\n';
        return 2;
    } catch (std::exception const& e) {
        err << "gridstab: error: " << e.what() << '\n';
        return 1;
    }
}

/// Parses argv into a RunConfig and runs it.
inline int main_entry(int argc, char const* const* argv, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
    CLI::App app{"Small-signal stability analysis and communication-link planning for power grids",
                 "gridstab"};
    app.set_version_flag("--version", std::string(tool_version));
    app.require_subcommand(1);

    RunConfig cfg;
    std::string format;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--case", cfg.case_path, "Grid case or reduced-network document")->required();
        sub->add_option("--out", cfg.output_path, "Output file, '-' for standard output");
        sub->add_option("--gain", cfg.gain, "Common link gain h (negative)");
        sub->add_flag("--no-deflate", [&](std::int64_t) { cfg.deflate = false; },
                      "Keep the structural zero eigenvalue");
        sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"table", "structured"}));
    };
    auto add_links = [&](CLI::App* sub) {
        sub->add_option("--links", cfg.links_path, "JSON file {\"links\": [[i, k], ...]}, 1-based");
        sub->add_flag("--literal-control", cfg.literal_control,
                      "Feed back raw angle differences instead of deviations");
    };

    auto* analyze = app.add_subcommand("analyze", "Spectrum of the controlled system");
    add_common(analyze);
    add_links(analyze);

    auto* plan = app.add_subcommand("plan", "Greedy link placement");
    add_common(plan);
    plan->add_option("--links", cfg.links_path, "Not used by plan");
    plan->add_option("--budget", cfg.budget, "Number of links to install");
    plan->add_flag("--allow-nonpositive", cfg.allow_nonpositive,
                   "Keep installing links when the best gain is not positive");
    plan->add_option("--threads", cfg.threads, "Candidate sweep workers")->check(CLI::Range(1u, 1024u));

    auto* simulate = app.add_subcommand("simulate", "RK4 time-domain simulation");
    add_common(simulate);
    add_links(simulate);
    simulate->add_option("--dt", cfg.dt, "Step size in s");
    simulate->add_option("--tmax", cfg.t_max, "End time in s");
    simulate->add_option("--fit-start", cfg.fit_start, "Start of the decay-rate fit window in s");
    simulate->add_option("--perturb", cfg.perturb,
                         "gen=I,ddelta=X,domega=Y or pm-step gen=I,dpm=Z,at=T")
        ->expected(1, 2);

    auto* reduce = app.add_subcommand("reduce", "Reduced network and operating point");
    add_common(reduce);

    try {
        app.parse(argc, argv);
    } catch (CLI::Success const& e) {
        return app.exit(e, out, err);
    } catch (CLI::ParseError const& e) {
        app.exit(e, out, err);
        return 2;
    }

    if (analyze->parsed()) cfg.subcommand = Subcommand::analyze;
    if (plan->parsed()) cfg.subcommand = Subcommand::plan;
    if (simulate->parsed()) cfg.subcommand = Subcommand::simulate;
    if (reduce->parsed()) cfg.subcommand = Subcommand::reduce;
    if (!format.empty()) cfg.format = format == "table" ? Format::table : Format::structured;
    return run(cfg, out, err);
}

}  // namespace gridstab::cli
