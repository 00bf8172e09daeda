#pragma once

// Controlled classical swing dynamics on the reduced network:
//
//   d(delta_i)/dt = omega_i - omega_s
//   M_i d(omega_i)/dt = P_m,i(delta) - D_i (omega_i - omega_s) - P_e,i(delta)
//
// with P_m,i = P_m,i^const + sum_{k~i} h_ik [(delta_i - ref_i) - (delta_k - ref_k)].

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridstab/case_model.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/format.hpp"
#include "gridstab/reduced_network.hpp"

namespace gridstab {

/// Unordered generator pair, stored with first < second (0-based indices).
struct Link {
    std::size_t first = 0;
    std::size_t second = 1;

    Link() = default;
    Link(std::size_t a, std::size_t b) : first(std::min(a, b)), second(std::max(a, b)) {
        if (a == b) throw std::invalid_argument("a link must join two distinct generators");
    }

    auto operator<=>(Link const&) const = default;
};

enum class ControlMode {
    deviation,  // acts on deviations from the reference angles (default)
    literal,    // acts on raw angle differences; shifts the equilibrium
};

struct ControlConfig {
    std::map<Link, double> gains;  // h_ik per installed link
    Eigen::VectorXd reference_angles;
    ControlMode mode = ControlMode::deviation;

    std::vector<Link> links() const {
        std::vector<Link> out;
        out.reserve(gains.size());
        for (auto const& [link, h] : gains) out.push_back(link);
        return out;
    }

    bool empty() const { return gains.empty(); }

    /// Every link gets the same gain. Duplicate links are rejected.
    static ControlConfig uniform(std::span<Link const> links, double gain,
                                 Eigen::VectorXd reference_angles) {
        ControlConfig ctl;
        ctl.reference_angles = std::move(reference_angles);
        for (auto const& l : links) {
            if (!ctl.gains.emplace(l, gain).second) {
                throw std::invalid_argument("duplicate link " + std::to_string(l.first + 1) + "-" +
                                            std::to_string(l.second + 1));
            }
        }
        return ctl;
    }
};

/// Checks link indices and gain signs. Non-negative gains are only accepted
/// for diagnostics (`allow_diagnostic_gains`).
inline ValidationReport validate_control(ControlConfig const& ctl, std::size_t n,
                                         bool allow_diagnostic_gains = false) {
    ValidationReport report;
    for (auto const& [l, h] : ctl.gains) {
        std::string const name = std::to_string(l.first + 1) + "-" + std::to_string(l.second + 1);
        if (l.second >= n) report.push_back({"link " + name, "generator index out of range"});
        if (l.first == l.second) report.push_back({"link " + name, "self-link"});
        if (!std::isfinite(h)) report.push_back({"link " + name, "non-finite gain"});
        if (!allow_diagnostic_gains && !(h < 0.0)) {
            report.push_back({"link " + name, "gain must be strictly negative"});
        }
    }
    if (!ctl.gains.empty() && ctl.mode == ControlMode::deviation &&
        static_cast<std::size_t>(ctl.reference_angles.size()) != n) {
        report.push_back({"reference_angles", "need one reference angle per generator"});
    }
    return report;
}

struct MachineState {
    Eigen::VectorXd delta;  // rad
    Eigen::VectorXd omega;  // rad/s

    static MachineState at_equilibrium(OperatingPoint const& op) {
        return {op.delta_s, Eigen::VectorXd::Constant(op.delta_s.size(), op.omega_s)};
    }
};

struct StateDerivative {
    Eigen::VectorXd d_delta;
    Eigen::VectorXd d_omega;
};

inline Eigen::VectorXd mechanical_power(Eigen::VectorXd const& delta, OperatingPoint const& op,
                                        ControlConfig const& ctl) {
    Eigen::VectorXd pm = op.p_m_const;
    if (ctl.gains.empty()) return pm;
    Eigen::VectorXd const offset =
        ctl.mode == ControlMode::deviation ? Eigen::VectorXd(delta - ctl.reference_angles) : delta;
    for (auto const& [l, h] : ctl.gains) {
        auto const i = static_cast<Eigen::Index>(l.first);
        auto const k = static_cast<Eigen::Index>(l.second);
        double const diff = offset[i] - offset[k];
        pm[i] += h * diff;
        pm[k] -= h * diff;
    }
    return pm;
}

namespace detail {

inline void rhs_into(Eigen::VectorXd const& delta, Eigen::VectorXd const& omega,
                     ReducedNetwork const& net, OperatingPoint const& op, ControlConfig const& ctl,
                     MachineConstants const& mc, Eigen::VectorXd const* pm_extra,
                     Eigen::VectorXd& d_delta, Eigen::VectorXd& d_omega) {
    Eigen::VectorXd pm = mechanical_power(delta, op, ctl);
    if (pm_extra) pm += *pm_extra;
    Eigen::VectorXd const pe = electrical_power(delta, net);
    Eigen::VectorXd const slip = omega.array() - op.omega_s;
    d_delta = slip;
    d_omega = ((pm - pe).array() - mc.damping.array() * slip.array()) / mc.m.array();
}

}  // namespace detail

inline StateDerivative rhs(MachineState const& state, ReducedNetwork const& net,
                           OperatingPoint const& op, ControlConfig const& ctl,
                           MachineConstants const& mc) {
    auto const n = static_cast<Eigen::Index>(net.size());
    if (state.delta.size() != n || state.omega.size() != n || static_cast<Eigen::Index>(mc.size()) != n) {
        throw std::invalid_argument("state or machine constants do not match the network size");
    }
    StateDerivative out;
    detail::rhs_into(state.delta, state.omega, net, op, ctl, mc, nullptr, out.d_delta, out.d_omega);
    return out;
}

struct DisturbanceSpec {
    enum class Kind { state_offset, mechanical_step };

    Kind kind = Kind::state_offset;
    std::size_t target = 0;
    double d_delta = 0.0;  // rad
    double d_omega = 0.0;  // rad/s
    double d_pm = 0.0;     // pu
    double t_apply = 0.0;  // s

    static DisturbanceSpec state_offset(std::size_t target, double d_delta, double d_omega,
                                        double t_apply = 0.0) {
        return {Kind::state_offset, target, d_delta, d_omega, 0.0, t_apply};
    }
    static DisturbanceSpec mechanical_step(std::size_t target, double d_pm, double t_apply) {
        return {Kind::mechanical_step, target, 0.0, 0.0, d_pm, t_apply};
    }
};

inline ValidationReport validate_disturbance(DisturbanceSpec const& d, std::size_t n) {
    ValidationReport report;
    if (d.target >= n) report.push_back({"disturbance", "target generator out of range"});
    if (!(d.t_apply >= 0.0)) report.push_back({"disturbance", "t_apply must be nonnegative"});
    if (d.kind == DisturbanceSpec::Kind::state_offset && d.d_pm != 0.0) {
        report.push_back({"disturbance", "state offset must not set d_pm"});
    }
    if (d.kind == DisturbanceSpec::Kind::mechanical_step && (d.d_delta != 0.0 || d.d_omega != 0.0)) {
        report.push_back({"disturbance", "mechanical step must not set d_delta or d_omega"});
    }
    return report;
}

struct Trajectory {
    std::vector<double> times;
    std::vector<MachineState> states;
    double dt = 0.0;
};

struct SimulationOptions {
    double t_max = 20.0;  // s
    double dt = 1e-3;     // s
    // |delta - delta_s| or |omega - omega_s| beyond this counts as blow-up.
    double divergence_bound = 1e6;
};

/// Classical fixed-step RK4. Throws BlowUpError when the state leaves the
/// divergence bound or becomes non-finite.
inline Trajectory simulate(MachineState const& initial, SystemModel const& model,
                           ControlConfig const& ctl,
                           std::optional<DisturbanceSpec> const& disturbance,
                           SimulationOptions const& opts = {}) {
    auto const n = static_cast<Eigen::Index>(model.size());
    if (!(opts.dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(opts.t_max >= opts.dt)) throw std::invalid_argument("t_max must be at least dt");
    if (initial.delta.size() != n || initial.omega.size() != n) {
        throw std::invalid_argument("initial state does not match the network size");
    }
    if (disturbance) {
        auto const report = validate_disturbance(*disturbance, model.size());
        if (!report.empty()) throw std::invalid_argument(report.front().message);
    }

    auto const steps = static_cast<std::size_t>(std::floor(opts.t_max / opts.dt + 1e-9));
    Trajectory traj;
    traj.dt = opts.dt;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);

    Eigen::VectorXd delta = initial.delta;
    Eigen::VectorXd omega = initial.omega;
    Eigen::VectorXd pm_extra = Eigen::VectorXd::Zero(n);
    bool offset_applied = false;
    bool step_applied = false;
    double const t_eps = 1e-9 * opts.dt;

    auto const& net = model.net;
    auto const& op = model.op;
    auto const& mc = model.constants;
    Eigen::VectorXd k1d, k1w, k2d, k2w, k3d, k3w, k4d, k4w;

    for (std::size_t k = 0;; ++k) {
        double const t = static_cast<double>(k) * opts.dt;
        if (disturbance && t + t_eps >= disturbance->t_apply) {
            auto const target = static_cast<Eigen::Index>(disturbance->target);
            if (disturbance->kind == DisturbanceSpec::Kind::state_offset && !offset_applied) {
                delta[target] += disturbance->d_delta;
                omega[target] += disturbance->d_omega;
                offset_applied = true;
            } else if (disturbance->kind == DisturbanceSpec::Kind::mechanical_step && !step_applied) {
                pm_extra[target] += disturbance->d_pm;
                step_applied = true;
            }
        }
        traj.times.push_back(t);
        traj.states.push_back({delta, omega});
        if (k == steps) break;

        double const h = opts.dt;
        detail::rhs_into(delta, omega, net, op, ctl, mc, &pm_extra, k1d, k1w);
        detail::rhs_into(delta + 0.5 * h * k1d, omega + 0.5 * h * k1w, net, op, ctl, mc, &pm_extra,
                         k2d, k2w);
        detail::rhs_into(delta + 0.5 * h * k2d, omega + 0.5 * h * k2w, net, op, ctl, mc, &pm_extra,
                         k3d, k3w);
        detail::rhs_into(delta + h * k3d, omega + h * k3w, net, op, ctl, mc, &pm_extra, k4d, k4w);
        delta += (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
        omega += (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);

        bool const finite = delta.allFinite() && omega.allFinite();
        if (!finite || (delta - op.delta_s).cwiseAbs().maxCoeff() > opts.divergence_bound ||
            (omega.array() - op.omega_s).abs().maxCoeff() > opts.divergence_bound) {
            throw BlowUpError(static_cast<double>(k + 1) * opts.dt);
        }
    }
    return traj;
}

/// Deviation from equilibrium with the uniform angle shift removed: angles are
/// taken relative to the last machine, speeds relative to omega_s.
inline Eigen::VectorXd deviation_vector(MachineState const& s, OperatingPoint const& op) {
    auto const n = s.delta.size();
    Eigen::VectorXd x(2 * n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        x[i] = (s.delta[i] - s.delta[n - 1]) - (op.delta_s[i] - op.delta_s[n - 1]);
    }
    x.tail(n) = s.omega.array() - op.omega_s;
    return x;
}

/// Least-squares slope of log|x(t)| over [t_start, end], in 1/s.
/// Samples below 1e-13, or below relative_floor times the largest deviation
/// on the trajectory, are round-off and do not enter the fit.
inline double decay_rate(Trajectory const& traj, OperatingPoint const& op, double t_start,
                         double relative_floor = 0.0) {
    if (traj.times.empty() || t_start > traj.times.back()) {
        throw std::invalid_argument("fit start lies beyond the trajectory");
    }
    if (!(relative_floor >= 0.0 && relative_floor < 1.0)) {
        throw std::invalid_argument("relative floor must lie in [0, 1)");
    }
    constexpr double underflow = 1e-13;
    std::vector<double> norms(traj.times.size());
    double peak = 0.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        norms[k] = deviation_vector(traj.states[k], op).norm();
        peak = std::max(peak, norms[k]);
    }
    double const floor = std::max(underflow, relative_floor * peak);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        double const t = traj.times[k];
        if (t < t_start) continue;
        if (!(norms[k] >= floor)) continue;
        double const y = std::log(norms[k]);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        ++count;
    }
    if (count < 2) throw ComputationError("deviation underflow: nothing to fit");
    double const c = static_cast<double>(count);
    double const denom = c * sxx - sx * sx;
    if (!(denom > 0.0)) throw ComputationError("degenerate fit window");
    return (c * sxy - sx * sy) / denom;
}

/// Comma-separated table: time, delta_1..delta_n, omega_1..omega_n.
inline void write_trajectory_csv(std::ostream& out, Trajectory const& traj) {
    auto const n = traj.states.empty() ? 0 : traj.states.front().delta.size();
    out << "time";
    for (Eigen::Index i = 1; i <= n; ++i) out << ",delta_" << i;
    for (Eigen::Index i = 1; i <= n; ++i) out << ",omega_" << i;
    out << '\n';
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        out << format_double(traj.times[k]);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(traj.states[k].delta[i]);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(traj.states[k].omega[i]);
        out << '\n';
    }
}

}  // namespace gridstab
