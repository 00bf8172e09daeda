#pragma once

// Report documents. Structured documents are JSON with full round-trip
// precision; table documents are comma-separated with '#' header lines and
// values rounded to 4 significant digits. Both carry a provenance header.

#include <array>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "gridstab/dynamics.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/format.hpp"
#include "gridstab/linearization.hpp"
#include "gridstab/planner.hpp"
#include "gridstab/reduced_network.hpp"

namespace gridstab {

inline constexpr std::string_view tool_name = "gridstab";
inline constexpr std::string_view tool_version = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    std::string hex;
    hex.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        std::array<char, 3> byte{};
        std::snprintf(byte.data(), byte.size(), "%02x", digest[i]);
        hex += byte.data();
    }
    return hex;
}

struct Provenance {
    std::string command;
    std::string case_sha256;
    std::vector<std::pair<std::string, std::string>> config;  // echoed in order

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["tool"] = tool_name;
        j["version"] = tool_version;
        j["command"] = command;
        j["case_sha256"] = case_sha256;
        nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
        for (auto const& [k, v] : config) cfg[k] = v;
        j["config"] = std::move(cfg);
        return j;
    }

    void write_comment_header(std::ostream& out) const {
        out << "# " << tool_name << ' ' << tool_version << ' ' << command << '\n';
        out << "# case_sha256: " << case_sha256 << '\n';
        for (auto const& [k, v] : config) out << "# " << k << ": " << v << '\n';
    }
};

namespace detail {

inline nlohmann::ordered_json links_json(std::span<Link const> links) {
    auto arr = nlohmann::ordered_json::array();
    for (auto const& l : links) arr.push_back({l.first + 1, l.second + 1});
    return arr;
}

inline nlohmann::ordered_json real_matrix_json(Eigen::MatrixXd const& m) {
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::ordered_json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::ordered_json vector_json(Eigen::VectorXd const& v) {
    auto arr = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spectrum

inline void write_spectrum_structured(std::ostream& out, Provenance const& prov,
                                      SpectrumReport const& report, std::span<Link const> links) {
    nlohmann::ordered_json j;
    j["provenance"] = prov.to_json();
    j["links"] = detail::links_json(links);
    j["alpha_max"] = report.alpha_max;
    j["deflated_zero"] = report.deflated_zero;
    j["deflated_magnitude"] = report.deflated_magnitude;
    j["deflated_index"] = report.deflated_index ? nlohmann::ordered_json(*report.deflated_index)
                                                : nlohmann::ordered_json(nullptr);
    j["note"] = report.note;
    auto values = nlohmann::ordered_json::array();
    for (auto const& ev : report.eigenvalues) values.push_back({ev.real(), ev.imag()});
    j["eigenvalues"] = std::move(values);
    out << j.dump(1) << '\n';
}

inline void write_spectrum_table(std::ostream& out, Provenance const& prov,
                                 SpectrumReport const& report) {
    prov.write_comment_header(out);
    out << "# alpha_max: " << format_significant(report.alpha_max) << '\n';
    out << "# deflated_zero: " << (report.deflated_zero ? "true" : "false") << '\n';
    if (!report.note.empty()) out << "# note: " << report.note << '\n';
    out << "index,real,imag,deflated\n";
    for (std::size_t i = 0; i < report.eigenvalues.size(); ++i) {
        bool const removed = report.deflated_index && *report.deflated_index == i;
        out << i + 1 << ',' << format_significant(report.eigenvalues[i].real()) << ','
            << format_significant(report.eigenvalues[i].imag()) << ',' << (removed ? 1 : 0) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Plan

inline void write_plan_table(std::ostream& out, Provenance const& prov, PlanResult const& plan) {
    prov.write_comment_header(out);
    out << "# baseline_alpha: " << format_significant(plan.baseline_alpha) << '\n';
    out << "# final_alpha: " << format_significant(plan.final_alpha()) << '\n';
    out << "# improvement: " << format_significant(plan.baseline_alpha - plan.final_alpha()) << '\n';
    out << "# stopped_early: " << (plan.stopped_early ? "true" : "false") << '\n';
    if (plan.stopped_early) out << "# stop_reason: " << plan.stop_reason << '\n';
    for (auto const& w : plan.warnings) out << "# warning: " << w << '\n';
    out << "iteration,gen_i,gen_k,alpha_max,marginal_gain\n";
    out << "0,,," << format_significant(plan.baseline_alpha) << ",0\n";
    for (auto const& it : plan.iterations) {
        out << it.index << ',' << it.link.first + 1 << ',' << it.link.second + 1 << ','
            << format_significant(it.alpha_max_after) << ',' << format_significant(it.marginal_gain)
            << '\n';
    }
}

inline void write_plan_structured(std::ostream& out, Provenance const& prov, PlanResult const& plan) {
    nlohmann::ordered_json j;
    j["provenance"] = prov.to_json();
    j["baseline_alpha"] = plan.baseline_alpha;
    j["final_alpha"] = plan.final_alpha();
    j["improvement"] = plan.baseline_alpha - plan.final_alpha();
    j["stopped_early"] = plan.stopped_early;
    j["stop_reason"] = plan.stop_reason;
    j["warnings"] = plan.warnings;
    auto rows = nlohmann::ordered_json::array();
    for (auto const& it : plan.iterations) {
        nlohmann::ordered_json row;
        row["iteration"] = it.index;
        row["gen_i"] = it.link.first + 1;
        row["gen_k"] = it.link.second + 1;
        row["alpha_max"] = it.alpha_max_after;
        row["marginal_gain"] = it.marginal_gain;
        row["candidates_evaluated"] = it.candidates_evaluated;
        rows.push_back(std::move(row));
    }
    j["iterations"] = std::move(rows);
    out << j.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Reduced network

inline void write_reduced_structured(std::ostream& out, Provenance const& prov,
                                     SystemModel const& model) {
    nlohmann::ordered_json j;
    j["provenance"] = prov.to_json();
    j["n"] = model.size();
    auto yg = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < model.net.y_g.rows(); ++i) {
        auto row = nlohmann::ordered_json::array();
        for (Eigen::Index k = 0; k < model.net.y_g.cols(); ++k) {
            row.push_back({model.net.y_g(i, k).real(), model.net.y_g(i, k).imag()});
        }
        yg.push_back(std::move(row));
    }
    j["y_g"] = std::move(yg);
    j["e_mag"] = detail::vector_json(model.net.e_mag);
    j["c"] = detail::real_matrix_json(model.net.c);
    j["d"] = detail::real_matrix_json(model.net.d);
    j["delta_s"] = detail::vector_json(model.op.delta_s);
    j["omega_s"] = model.op.omega_s;
    j["p_m_const"] = detail::vector_json(model.op.p_m_const);
    j["m"] = detail::vector_json(model.constants.m);
    j["damping"] = detail::vector_json(model.constants.damping);
    out << j.dump(1) << '\n';
}

inline void write_reduced_table(std::ostream& out, Provenance const& prov, SystemModel const& model) {
    prov.write_comment_header(out);
    out << "gen,e_mag,delta_s,p_m_const,m,damping\n";
    for (std::size_t i = 0; i < model.size(); ++i) {
        auto const k = static_cast<Eigen::Index>(i);
        out << i + 1 << ',' << format_significant(model.net.e_mag[k]) << ','
            << format_significant(model.op.delta_s[k]) << ','
            << format_significant(model.op.p_m_const[k]) << ','
            << format_significant(model.constants.m[k]) << ','
            << format_significant(model.constants.damping[k]) << '\n';
    }
    out << '\n' << "gen_i,gen_k,g,b\n";
    for (Eigen::Index i = 0; i < model.net.y_g.rows(); ++i) {
        for (Eigen::Index k = 0; k < model.net.y_g.cols(); ++k) {
            out << i + 1 << ',' << k + 1 << ',' << format_significant(model.net.y_g(i, k).real()) << ','
                << format_significant(model.net.y_g(i, k).imag()) << '\n';
        }
    }
}

/// Reads a structured reduce document back into a SystemModel.
inline SystemModel parse_reduced_document(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (nlohmann::json::parse_error const& e) {
        auto [line, column] = detail::line_column(text, e.byte);
        throw ParseError(e.what(), line, column);
    }
    try {
        auto const n = j.at("n").get<Eigen::Index>();
        auto vec = [&](char const* key) {
            auto const& a = j.at(key);
            if (static_cast<Eigen::Index>(a.size()) != n) throw SchemaError(std::string("/") + key, "wrong length");
            Eigen::VectorXd v(n);
            for (Eigen::Index i = 0; i < n; ++i) v[i] = a.at(static_cast<std::size_t>(i)).get<double>();
            return v;
        };
        auto mat = [&](char const* key) {
            auto const& a = j.at(key);
            Eigen::MatrixXd m(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index k = 0; k < n; ++k) {
                    m(i, k) = a.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
                }
            }
            return m;
        };
        SystemModel model;
        model.net.y_g.resize(n, n);
        auto const& yg = j.at("y_g");
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < n; ++k) {
                auto const& e = yg.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k));
                model.net.y_g(i, k) = Complex(e.at(0).get<double>(), e.at(1).get<double>());
            }
        }
        model.net.e_mag = vec("e_mag");
        model.net.c = mat("c");
        model.net.d = mat("d");
        model.op.delta_s = vec("delta_s");
        model.op.omega_s = j.at("omega_s").get<double>();
        model.op.p_m_const = vec("p_m_const");
        model.constants.m = vec("m");
        model.constants.damping = vec("damping");
        return model;
    } catch (nlohmann::json::exception const& e) {
        throw SchemaError("", std::string("malformed reduced-network document: ") + e.what());
    }
}

}  // namespace gridstab
