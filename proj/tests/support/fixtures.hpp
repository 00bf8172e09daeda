#pragma once

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "gridstab/gridstab.hpp"

#ifndef GRIDSTAB_CASES_DIR
#error "GRIDSTAB_CASES_DIR must point at the bundled cases"
#endif

namespace gridstab::testing {

inline std::string case_path(std::string const& name) {
    return std::string(GRIDSTAB_CASES_DIR) + "/" + name;
}

inline PowerCase bundled_case(std::string const& name) { return read_case_file(case_path(name)); }

inline SystemModel bundled_model(std::string const& name) {
    return build_system_model(bundled_case(name));
}

/// Slack bus 1 at 1.0 pu feeding a pq load at bus 2 over r = 0, x = 0.1.
inline PowerCase two_bus_case(double p_load, double q_load = 0.0) {
    PowerCase pc;
    pc.buses.push_back({1, BusKind::slack, 0.0, 0.0, 1.0, 0.0, 0.0});
    pc.buses.push_back({2, BusKind::pq, p_load, q_load, std::nullopt, 0.0, 0.0});
    pc.branches.push_back({1, 2, 0.0, 0.1, 0.0, 1.0});
    pc.generators.push_back({1, p_load, 4.0, 0.05, 0.1});
    return pc;
}

/// Lossless two-machine system coupled by c12 with equal inertia m and damping.
inline SystemModel two_machine_model(double c12, double m, double damping, double delta_hat = 0.0) {
    SystemModel model;
    model.net.y_g = AdmittanceMatrix::Zero(2, 2);
    model.net.y_g(0, 1) = model.net.y_g(1, 0) = Complex(0.0, c12);
    model.net.y_g(0, 0) = model.net.y_g(1, 1) = Complex(0.0, -c12);
    model.net.e_mag = Eigen::VectorXd::Ones(2);
    auto cd = coupling_coefficients(model.net.y_g, model.net.e_mag);
    model.net.c = cd.c;
    model.net.d = cd.d;
    model.op.delta_s = Eigen::Vector2d(delta_hat, 0.0);
    model.op.omega_s = 2.0 * std::numbers::pi * 60.0;
    model.op.p_m_const = electrical_power(model.op.delta_s, model.net);
    model.constants.m = Eigen::VectorXd::Constant(2, m);
    model.constants.damping = Eigen::VectorXd::Constant(2, damping);
    return model;
}

/// Random reduced network with inductive couplings, small transfer
/// conductances and a loaded operating point. Deterministic for a given seed.
inline SystemModel random_reduced_model(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    auto const nn = static_cast<Eigen::Index>(n);
    SystemModel model;
    model.net.y_g = AdmittanceMatrix::Zero(nn, nn);
    for (Eigen::Index i = 0; i < nn; ++i) {
        for (Eigen::Index k = i + 1; k < nn; ++k) {
            Complex const y(uniform(-0.02, 0.05), uniform(0.2, 2.0));
            model.net.y_g(i, k) = model.net.y_g(k, i) = y;
        }
    }
    for (Eigen::Index i = 0; i < nn; ++i) {
        Complex row = 0.0;
        for (Eigen::Index k = 0; k < nn; ++k) {
            if (k != i) row += model.net.y_g(i, k);
        }
        model.net.y_g(i, i) = Complex(uniform(0.5, 1.5), -row.imag() - uniform(0.5, 2.0));
    }
    model.net.e_mag.resize(nn);
    model.op.delta_s.resize(nn);
    model.constants.m.resize(nn);
    model.constants.damping.resize(nn);
    double const omega_s = 2.0 * std::numbers::pi * 60.0;
    for (Eigen::Index i = 0; i < nn; ++i) {
        model.net.e_mag[i] = uniform(1.0, 1.1);
        model.op.delta_s[i] = uniform(-0.3, 0.3);
        model.constants.m[i] = 2.0 * uniform(2.0, 10.0) / omega_s;
        model.constants.damping[i] = uniform(0.02, 0.2);
    }
    auto cd = coupling_coefficients(model.net.y_g, model.net.e_mag);
    model.net.c = cd.c;
    model.net.d = cd.d;
    model.op.omega_s = omega_s;
    model.op.p_m_const = electrical_power(model.op.delta_s, model.net);
    return model;
}

/// Central finite differences of the swing right-hand side in (delta, omega) ordering.
inline Eigen::MatrixXd fd_jacobian(SystemModel const& model, ControlConfig const& ctl,
                                   MachineState const& at, double step = 1e-6) {
    auto const n = static_cast<Eigen::Index>(model.size());
    Eigen::MatrixXd j(2 * n, 2 * n);
    auto eval = [&](MachineState const& s) {
        auto d = rhs(s, model.net, model.op, ctl, model.constants);
        Eigen::VectorXd f(2 * n);
        f << d.d_delta, d.d_omega;
        return f;
    };
    for (Eigen::Index col = 0; col < 2 * n; ++col) {
        MachineState plus = at;
        MachineState minus = at;
        auto& p = col < n ? plus.delta[col] : plus.omega[col - n];
        auto& m = col < n ? minus.delta[col] : minus.omega[col - n];
        p += step;
        m -= step;
        j.col(col) = (eval(plus) - eval(minus)) / (2.0 * step);
    }
    return j;
}

/// Largest entrywise |a - b| / max(|b|, floor), with the floor set relative to
/// the largest entry of b so structurally zero entries are compared absolutely.
inline double max_relative_error(Eigen::MatrixXd const& a, Eigen::MatrixXd const& b,
                                 double floor_fraction = 1e-6) {
    double const floor = floor_fraction * b.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
            double const scale = std::max(std::abs(b(i, k)), floor);
            if (scale == 0.0) {
                worst = std::max(worst, std::abs(a(i, k)));
                continue;
            }
            worst = std::max(worst, std::abs(a(i, k) - b(i, k)) / scale);
        }
    }
    return worst;
}

}  // namespace gridstab::testing
