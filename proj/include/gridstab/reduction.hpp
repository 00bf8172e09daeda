#pragma once

// Classical-model network reduction: generators become constant EMFs behind
// their transient reactance, loads become constant admittances at their
// power-flow voltage, and every terminal bus is eliminated.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridstab/case_model.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/powerflow.hpp"
#include "gridstab/reduced_network.hpp"

namespace gridstab {

/// Bus network plus one internal node per generator.
/// Nodes 0..N-1 are the case buses, node N+i is generator i's EMF node.
struct AugmentedNetwork {
    AdmittanceMatrix y;
    std::size_t bus_count = 0;
    Eigen::VectorXcd emf;
    Eigen::VectorXd e_mag;
    Eigen::VectorXd delta_s;

    std::vector<std::size_t> internal_nodes() const {
        std::vector<std::size_t> nodes(static_cast<std::size_t>(emf.size()));
        for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = bus_count + i;
        return nodes;
    }
};

/// Builds the augmented admittance matrix and the generator internal EMFs.
///
/// Generator output is the realized power-flow injection at its bus plus the
/// bus load. When several generators share a bus the output is split in
/// proportion to their scheduled p_gen (equally if none is positive).
inline AugmentedNetwork internal_nodes(PowerCase const& pc, PowerFlowSolution const& pf) {
    auto const nb = static_cast<Eigen::Index>(pc.bus_count());
    auto const ng = static_cast<Eigen::Index>(pc.generator_count());
    if (pf.v_mag.size() != nb || pf.v_ang.size() != nb || pf.p_inj.size() != nb ||
        pf.q_inj.size() != nb) {
        throw InputError("power-flow solution does not match the case (missing realized injections)");
    }

    AugmentedNetwork aug;
    aug.bus_count = static_cast<std::size_t>(nb);
    aug.y = AdmittanceMatrix::Zero(nb + ng, nb + ng);
    aug.y.topLeftCorner(nb, nb) = build_ybus(pc);

    for (Eigen::Index i = 0; i < nb; ++i) {
        auto const& b = pc.buses[static_cast<std::size_t>(i)];
        double const vm = pf.v_mag[i];
        if (!(vm > 0.0)) throw ComputationError("zero terminal voltage at bus " + std::to_string(b.id));
        aug.y(i, i) += Complex(b.p_load, -b.q_load) / (vm * vm);
    }

    std::map<std::size_t, std::vector<Eigen::Index>> by_bus;
    for (Eigen::Index g = 0; g < ng; ++g) {
        by_bus[pc.bus_index(pc.generators[static_cast<std::size_t>(g)].bus)].push_back(g);
    }

    aug.emf.resize(ng);
    for (auto const& [bus, gens] : by_bus) {
        auto const i = static_cast<Eigen::Index>(bus);
        auto const& b = pc.buses[bus];
        Complex const v = std::polar(pf.v_mag[i], pf.v_ang[i]);
        Complex const bus_output(pf.p_inj[i] + b.p_load, pf.q_inj[i] + b.q_load);
        double scheduled = 0.0;
        for (auto g : gens) scheduled += pc.generators[static_cast<std::size_t>(g)].p_gen;
        for (auto g : gens) {
            auto const& gen = pc.generators[static_cast<std::size_t>(g)];
            double const share = scheduled > 0.0 ? gen.p_gen / scheduled
                                                 : 1.0 / static_cast<double>(gens.size());
            Complex const current = std::conj(share * bus_output / v);
            aug.emf[g] = v + Complex(0.0, gen.xd_prime) * current;
        }
    }

    for (Eigen::Index g = 0; g < ng; ++g) {
        auto const& gen = pc.generators[static_cast<std::size_t>(g)];
        auto const t = static_cast<Eigen::Index>(pc.bus_index(gen.bus));
        auto const e = nb + g;
        Complex const y = 1.0 / Complex(0.0, gen.xd_prime);
        aug.y(t, t) += y;
        aug.y(e, e) += y;
        aug.y(t, e) -= y;
        aug.y(e, t) -= y;
    }

    aug.e_mag = aug.emf.cwiseAbs();
    aug.delta_s.resize(ng);
    for (Eigen::Index g = 0; g < ng; ++g) aug.delta_s[g] = std::arg(aug.emf[g]);
    return aug;
}

/// Schur complement Y_rr - Y_re Y_ee^-1 Y_er onto the `retained` nodes, in the given order.
inline AdmittanceMatrix kron_reduce(AdmittanceMatrix const& y, std::span<std::size_t const> retained) {
    auto const n = static_cast<std::size_t>(y.rows());
    if (y.rows() != y.cols()) throw std::invalid_argument("admittance matrix must be square");
    std::vector<bool> keep(n, false);
    for (auto r : retained) {
        if (r >= n) throw std::invalid_argument("retained node out of range");
        if (keep[r]) throw std::invalid_argument("retained node listed twice");
        keep[r] = true;
    }
    std::vector<Eigen::Index> kept(retained.begin(), retained.end());
    std::vector<Eigen::Index> eliminated;
    for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) eliminated.push_back(static_cast<Eigen::Index>(i));
    }

    AdmittanceMatrix const y_rr = y(kept, kept);
    if (eliminated.empty()) return y_rr;

    AdmittanceMatrix const y_ee = y(eliminated, eliminated);
    Eigen::PartialPivLU<AdmittanceMatrix> lu(y_ee);
    if (!(lu.rcond() > 1e-13)) {
        throw SingularMatrixError(
            "Kron reduction: eliminated block is singular (isolated or degenerate subnetwork)");
    }
    AdmittanceMatrix const y_er = y(eliminated, kept);
    AdmittanceMatrix const y_re = y(kept, eliminated);
    return y_rr - y_re * lu.solve(y_er);
}

struct CouplingCoefficients {
    Eigen::MatrixXd c;
    Eigen::MatrixXd d;
};

inline CouplingCoefficients coupling_coefficients(AdmittanceMatrix const& y_g,
                                                  Eigen::VectorXd const& e_mag) {
    if (y_g.rows() != e_mag.size() || y_g.cols() != e_mag.size()) {
        throw std::invalid_argument("EMF vector does not match reduced matrix");
    }
    Eigen::MatrixXd const scale = e_mag * e_mag.transpose();
    return {scale.cwiseProduct(y_g.imag()), scale.cwiseProduct(y_g.real())};
}

inline ReducedNetwork reduce_network(AugmentedNetwork const& aug) {
    ReducedNetwork net;
    auto const retained = aug.internal_nodes();
    net.y_g = kron_reduce(aug.y, retained);
    net.e_mag = aug.e_mag;
    auto cd = coupling_coefficients(net.y_g, net.e_mag);
    net.c = std::move(cd.c);
    net.d = std::move(cd.d);
    return net;
}

/// Constant mechanical power equal to P_e(delta_s), making (delta_s, omega_s) a fixed point.
inline OperatingPoint equilibrium(PowerCase const& pc, Eigen::VectorXd const& delta_s,
                                  ReducedNetwork const& net) {
    OperatingPoint op;
    op.delta_s = delta_s;
    op.omega_s = pc.omega_s();
    op.p_m_const = electrical_power(delta_s, net);
    return op;
}

inline SystemModel build_system_model(PowerCase const& pc, PowerFlowSolution const& pf) {
    auto const aug = internal_nodes(pc, pf);
    SystemModel model;
    model.net = reduce_network(aug);
    model.op = equilibrium(pc, aug.delta_s, model.net);
    model.constants = machine_constants(pc);
    return model;
}

/// Validates the case, solves the power flow and reduces.
inline SystemModel build_system_model(PowerCase const& pc, PowerFlowOptions const& opts = {}) {
    ensure_valid(pc);
    return build_system_model(pc, solve_powerflow(pc, opts));
}

}  // namespace gridstab
