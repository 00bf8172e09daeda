#pragma once

// Power-system case description: bus, branch and generator records, the JSON
// case document, validation and the bus admittance matrix.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridstab/errors.hpp"

namespace gridstab {

using Complex = std::complex<double>;
using AdmittanceMatrix = Eigen::MatrixXcd;

enum class BusKind { slack, pv, pq };

inline std::string_view to_string(BusKind kind) {
    switch (kind) {
        case BusKind::slack: return "slack";
        case BusKind::pv: return "pv";
        case BusKind::pq: return "pq";
    }
    return "pq";
}

struct BusRecord {
    int id = 0;
    BusKind kind = BusKind::pq;
    double p_load = 0.0;  // pu
    double q_load = 0.0;  // pu
    std::optional<double> v_set;
    double shunt_g = 0.0;
    double shunt_b = 0.0;

    bool operator==(BusRecord const&) const = default;
};

struct BranchRecord {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;  // total, split half to each end
    double tap = 1.0;         // off-nominal ratio on the from side

    bool operator==(BranchRecord const&) const = default;
};

struct GeneratorRecord {
    int bus = 0;
    double p_gen = 0.0;
    double inertia_h = 0.0;  // s, system base
    double damping_d = 0.0;  // pu power per rad/s
    double xd_prime = 0.0;   // pu

    bool operator==(GeneratorRecord const&) const = default;
};

/// Defaults applied when a generator record omits its dynamic data.
namespace defaults {
inline constexpr double damping_d = 0.05;
inline constexpr double xd_prime = 0.1;
inline constexpr double inertia_h_per_pu = 4.0;

/// H proportional to scheduled output, 4 s per pu; 4 s when p_gen is not positive.
inline double inertia_h(double p_gen) {
    return p_gen > 0.0 ? inertia_h_per_pu * p_gen : inertia_h_per_pu;
}
}  // namespace defaults

struct PowerCase {
    double base_mva = 100.0;
    double f0 = 60.0;
    std::vector<BusRecord> buses;
    std::vector<BranchRecord> branches;
    std::vector<GeneratorRecord> generators;

    bool operator==(PowerCase const&) const = default;

    std::size_t bus_count() const { return buses.size(); }
    std::size_t generator_count() const { return generators.size(); }

    /// Synchronous speed in rad/s.
    double omega_s() const { return 2.0 * std::numbers::pi * f0; }

    /// Position of bus `id` in `buses`; throws InputError for unknown ids.
    std::size_t bus_index(int id) const {
        auto it = std::find_if(buses.begin(), buses.end(),
                               [id](BusRecord const& b) { return b.id == id; });
        if (it == buses.end()) {
            throw InputError("unknown bus id " + std::to_string(id));
        }
        return static_cast<std::size_t>(it - buses.begin());
    }
};

/// Per-machine constants of the swing equation, in system per-unit.
struct MachineConstants {
    Eigen::VectorXd m;        // M_i = 2 H_i / omega_s
    Eigen::VectorXd damping;  // D_i

    std::size_t size() const { return static_cast<std::size_t>(m.size()); }
};

inline MachineConstants machine_constants(PowerCase const& pc) {
    auto const n = static_cast<Eigen::Index>(pc.generators.size());
    MachineConstants mc{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    double const ws = pc.omega_s();
    for (Eigen::Index i = 0; i < n; ++i) {
        auto const& g = pc.generators[static_cast<std::size_t>(i)];
        mc.m[i] = 2.0 * g.inertia_h / ws;
        mc.damping[i] = g.damping_d;
    }
    return mc;
}

// ---------------------------------------------------------------------------
// Case document

namespace detail {

using nlohmann::json;

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t column = 1;
    std::size_t const end = std::min(byte > 0 ? byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

class ObjectReader {
  public:
    ObjectReader(json const& obj, std::string path, std::set<std::string> allowed)
        : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw SchemaError(path_, "expected an object");
        }
        for (auto const& [key, value] : obj_.items()) {
            if (!allowed.contains(key)) {
                throw SchemaError(path_ + "/" + key, "unknown field");
            }
        }
    }

    double number(std::string const& key) const {
        auto const& v = at(key);
        if (!v.is_number()) {
            throw SchemaError(path_ + "/" + key, "expected a number");
        }
        return v.get<double>();
    }

    std::optional<double> optional_number(std::string const& key) const {
        if (!obj_.contains(key)) return std::nullopt;
        return number(key);
    }

    int integer(std::string const& key) const {
        auto const& v = at(key);
        if (!v.is_number_integer()) {
            throw SchemaError(path_ + "/" + key, "expected an integer");
        }
        return v.get<int>();
    }

    std::string string(std::string const& key) const {
        auto const& v = at(key);
        if (!v.is_string()) {
            throw SchemaError(path_ + "/" + key, "expected a string");
        }
        return v.get<std::string>();
    }

    json const& array(std::string const& key) const {
        auto const& v = at(key);
        if (!v.is_array()) {
            throw SchemaError(path_ + "/" + key, "expected an array");
        }
        return v;
    }

    std::string const& path() const { return path_; }

  private:
    json const& at(std::string const& key) const {
        if (!obj_.contains(key)) {
            throw SchemaError(path_ + "/" + key, "missing required field");
        }
        return obj_.at(key);
    }

    json const& obj_;
    std::string path_;
};

inline BusKind parse_kind(std::string const& s, std::string const& path) {
    if (s == "slack") return BusKind::slack;
    if (s == "pv") return BusKind::pv;
    if (s == "pq") return BusKind::pq;
    throw SchemaError(path, "kind must be one of slack, pv, pq (got \"" + s + "\")");
}

}  // namespace detail

/// Parses a case document. Optional fields take the documented defaults.
inline PowerCase parse_case(std::string_view text) {
    using detail::json;
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (json::parse_error const& e) {
        auto [line, column] = detail::line_column(text, e.byte);
        std::string what = e.what();
        // drop the library's "[json.exception.parse_error.101] " prefix
        if (auto pos = what.find("] "); pos != std::string::npos) what = what.substr(pos + 2);
        throw ParseError(what, line, column);
    }

    detail::ObjectReader top(doc, "", {"base_mva", "f0", "buses", "branches", "generators"});
    PowerCase pc;
    pc.base_mva = top.number("base_mva");
    pc.f0 = top.number("f0");

    auto const& buses = top.array("buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        std::string const path = "/buses/" + std::to_string(i);
        detail::ObjectReader r(buses[i], path,
                               {"id", "kind", "p_load", "q_load", "v_set", "shunt_g", "shunt_b"});
        BusRecord b;
        b.id = r.integer("id");
        b.kind = detail::parse_kind(r.string("kind"), path + "/kind");
        b.p_load = r.number("p_load");
        b.q_load = r.number("q_load");
        b.v_set = r.optional_number("v_set");
        b.shunt_g = r.optional_number("shunt_g").value_or(0.0);
        b.shunt_b = r.optional_number("shunt_b").value_or(0.0);
        pc.buses.push_back(b);
    }

    auto const& branches = top.array("branches");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        detail::ObjectReader r(branches[i], "/branches/" + std::to_string(i),
                               {"from", "to", "r", "x", "b", "tap"});
        BranchRecord br;
        br.from_bus = r.integer("from");
        br.to_bus = r.integer("to");
        br.r = r.number("r");
        br.x = r.number("x");
        br.b_charging = r.optional_number("b").value_or(0.0);
        br.tap = r.optional_number("tap").value_or(1.0);
        pc.branches.push_back(br);
    }

    auto const& gens = top.array("generators");
    for (std::size_t i = 0; i < gens.size(); ++i) {
        detail::ObjectReader r(gens[i], "/generators/" + std::to_string(i),
                               {"bus", "p_gen", "h", "d", "xd_prime"});
        GeneratorRecord g;
        g.bus = r.integer("bus");
        g.p_gen = r.number("p_gen");
        g.inertia_h = r.optional_number("h").value_or(defaults::inertia_h(g.p_gen));
        g.damping_d = r.optional_number("d").value_or(defaults::damping_d);
        g.xd_prime = r.optional_number("xd_prime").value_or(defaults::xd_prime);
        pc.generators.push_back(g);
    }

    if (std::none_of(pc.buses.begin(), pc.buses.end(),
                     [](BusRecord const& b) { return b.kind == BusKind::slack; })) {
        throw SchemaError("/buses", "no slack bus");
    }
    return pc;
}

inline PowerCase read_case_file(std::string const& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot read case file '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_case(ss.str());
}

/// Writes every field explicitly, so parse_case(serialize_case(c)) == c.
inline std::string serialize_case(PowerCase const& pc) {
    using detail::json;
    json doc;
    doc["base_mva"] = pc.base_mva;
    doc["f0"] = pc.f0;
    doc["buses"] = json::array();
    for (auto const& b : pc.buses) {
        json e{{"id", b.id},
               {"kind", std::string(to_string(b.kind))},
               {"p_load", b.p_load},
               {"q_load", b.q_load},
               {"shunt_g", b.shunt_g},
               {"shunt_b", b.shunt_b}};
        if (b.v_set) e["v_set"] = *b.v_set;
        doc["buses"].push_back(std::move(e));
    }
    doc["branches"] = json::array();
    for (auto const& br : pc.branches) {
        doc["branches"].push_back({{"from", br.from_bus},
                                   {"to", br.to_bus},
                                   {"r", br.r},
                                   {"x", br.x},
                                   {"b", br.b_charging},
                                   {"tap", br.tap}});
    }
    doc["generators"] = json::array();
    for (auto const& g : pc.generators) {
        doc["generators"].push_back({{"bus", g.bus},
                                     {"p_gen", g.p_gen},
                                     {"h", g.inertia_h},
                                     {"d", g.damping_d},
                                     {"xd_prime", g.xd_prime}});
    }
    return doc.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationIssue {
    std::string location;
    std::string message;
};

using ValidationReport = std::vector<ValidationIssue>;

/// Checks every record invariant. Violations are returned, never thrown.
inline ValidationReport validate(PowerCase const& pc) {
    ValidationReport report;
    auto add = [&report](std::string loc, std::string msg) {
        report.push_back({std::move(loc), std::move(msg)});
    };
    auto finite = [](double v) { return std::isfinite(v); };

    if (!(pc.base_mva > 0.0) || !finite(pc.base_mva)) add("/base_mva", "base_mva must be positive");
    if (!(pc.f0 > 0.0) || !finite(pc.f0)) add("/f0", "f0 must be positive");

    std::set<int> ids;
    std::size_t slack_count = 0;
    for (std::size_t i = 0; i < pc.buses.size(); ++i) {
        auto const& b = pc.buses[i];
        std::string const loc = "/buses/" + std::to_string(i);
        if (!ids.insert(b.id).second) add(loc + "/id", "duplicate bus id " + std::to_string(b.id));
        if (b.kind == BusKind::slack) ++slack_count;
        if (b.v_set && !(*b.v_set > 0.0)) add(loc + "/v_set", "v_set must be positive");
        if (!b.v_set && b.kind != BusKind::pq) {
            add(loc + "/v_set", "v_set is required for slack and pv buses");
        }
        if (!finite(b.p_load) || !finite(b.q_load) || !finite(b.shunt_g) || !finite(b.shunt_b)) {
            add(loc, "non-finite bus data");
        }
    }
    if (slack_count != 1) {
        add("/buses", "exactly one slack bus required (found " + std::to_string(slack_count) + ")");
    }

    for (std::size_t i = 0; i < pc.branches.size(); ++i) {
        auto const& br = pc.branches[i];
        std::string const loc = "/branches/" + std::to_string(i);
        if (br.r == 0.0 && br.x == 0.0) add(loc, "series impedance must be nonzero");
        if (br.from_bus == br.to_bus) add(loc, "branch connects bus to itself");
        if (!ids.contains(br.from_bus)) {
            add(loc + "/from", "dangling reference to bus " + std::to_string(br.from_bus));
        }
        if (!ids.contains(br.to_bus)) {
            add(loc + "/to", "dangling reference to bus " + std::to_string(br.to_bus));
        }
        if (!(br.tap > 0.0)) add(loc + "/tap", "tap must be positive");
        if (!finite(br.r) || !finite(br.x) || !finite(br.b_charging)) add(loc, "non-finite branch data");
    }

    if (pc.generators.empty()) add("/generators", "at least one generator required");
    std::set<int> generator_buses;
    for (std::size_t i = 0; i < pc.generators.size(); ++i) {
        auto const& g = pc.generators[i];
        std::string const loc = "/generators/" + std::to_string(i);
        if (!(g.inertia_h > 0.0)) add(loc + "/h", "inertia_h must be positive");
        if (!(g.damping_d >= 0.0)) add(loc + "/d", "damping_d must be nonnegative");
        if (!(g.xd_prime > 0.0)) add(loc + "/xd_prime", "xd_prime must be positive");
        if (!finite(g.p_gen)) add(loc + "/p_gen", "non-finite p_gen");
        auto it = std::find_if(pc.buses.begin(), pc.buses.end(),
                               [&g](BusRecord const& b) { return b.id == g.bus; });
        if (it == pc.buses.end()) {
            add(loc + "/bus", "dangling reference to bus " + std::to_string(g.bus));
        } else if (it->kind == BusKind::pq) {
            add(loc + "/bus", "generator bus " + std::to_string(g.bus) + " must be slack or pv");
        }
        generator_buses.insert(g.bus);
    }
    for (std::size_t i = 0; i < pc.buses.size(); ++i) {
        auto const& b = pc.buses[i];
        if (b.kind != BusKind::pq && !generator_buses.contains(b.id)) {
            add("/buses/" + std::to_string(i), "slack/pv bus " + std::to_string(b.id) +
                                                   " has no generator");
        }
    }
    return report;
}

/// Throws InputError carrying every violation when the case is invalid.
inline void ensure_valid(PowerCase const& pc) {
    auto const report = validate(pc);
    if (report.empty()) return;
    std::string msg = "invalid case:";
    for (auto const& issue : report) msg += " [" + issue.location + "] " + issue.message + ";";
    msg.pop_back();
    throw InputError(msg);
}

/// Dense bus admittance matrix (pi branch model, tap on the from side).
inline AdmittanceMatrix build_ybus(PowerCase const& pc) {
    auto const n = static_cast<Eigen::Index>(pc.buses.size());
    AdmittanceMatrix y = AdmittanceMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto const& b = pc.buses[static_cast<std::size_t>(i)];
        y(i, i) += Complex(b.shunt_g, b.shunt_b);
    }
    for (auto const& br : pc.branches) {
        auto const f = static_cast<Eigen::Index>(pc.bus_index(br.from_bus));
        auto const t = static_cast<Eigen::Index>(pc.bus_index(br.to_bus));
        Complex const ys = 1.0 / Complex(br.r, br.x);
        Complex const half_charging(0.0, 0.5 * br.b_charging);
        y(f, f) += ys / (br.tap * br.tap) + half_charging;
        y(t, t) += ys + half_charging;
        y(f, t) -= ys / br.tap;
        y(t, f) -= ys / br.tap;
    }
    return y;
}

}  // namespace gridstab
