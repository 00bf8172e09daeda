#pragma once

#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "gridstab/case_model.hpp"

namespace gridstab {

/// Generator-only network left after Kron reduction, in internal-EMF coordinates.
struct ReducedNetwork {
    AdmittanceMatrix y_g;   // n x n
    Eigen::VectorXd e_mag;  // |E_i|
    Eigen::MatrixXd c;      // |E_i||E_k| B_ik
    Eigen::MatrixXd d;      // |E_i||E_k| G_ik

    std::size_t size() const { return static_cast<std::size_t>(e_mag.size()); }
};

/// Equilibrium around which the swing dynamics are linearized.
struct OperatingPoint {
    Eigen::VectorXd delta_s;  // rad
    double omega_s = 0.0;     // rad/s
    Eigen::VectorXd p_m_const;
};

/// Everything the stability analysis needs about one system.
struct SystemModel {
    ReducedNetwork net;
    OperatingPoint op;
    MachineConstants constants;

    std::size_t size() const { return net.size(); }
};

/// P_e,i = |E_i|^2 G_ii + sum_{k != i} (D_ik cos d_ik + C_ik sin d_ik).
inline Eigen::VectorXd electrical_power(Eigen::VectorXd const& delta, ReducedNetwork const& net) {
    auto const n = net.e_mag.size();
    if (delta.size() != n) throw std::invalid_argument("angle vector size does not match network");
    Eigen::VectorXd pe(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = net.e_mag[i] * net.e_mag[i] * net.y_g(i, i).real();
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            double const dik = delta[i] - delta[k];
            acc += net.d(i, k) * std::cos(dik) + net.c(i, k) * std::sin(dik);
        }
        pe[i] = acc;
    }
    return pe;
}

}  // namespace gridstab
