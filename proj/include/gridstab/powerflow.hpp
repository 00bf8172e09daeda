#pragma once

// Full-Newton AC power flow in polar coordinates from a flat start.
//
// Unknowns and residuals share one ordering: angles of every non-slack bus in
// case order, then magnitudes of every pq bus in case order. The residual is
// specified injection minus computed injection (active rows for non-slack
// buses, reactive rows for pq buses).

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridstab/case_model.hpp"
#include "gridstab/errors.hpp"

namespace gridstab {

struct PowerFlowOptions {
    double tolerance = 1e-8;  // pu, infinity norm of the residual
    int max_iterations = 20;
};

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
    Eigen::VectorXd p_inj;  // realized net injection, pu
    Eigen::VectorXd q_inj;
    int iterations = 0;
    double max_mismatch = 0.0;

    Eigen::VectorXcd voltages() const {
        Eigen::VectorXcd v(v_mag.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::polar(v_mag[i], v_ang[i]);
        return v;
    }
};

namespace detail {

class PowerFlowProblem {
  public:
    explicit PowerFlowProblem(PowerCase const& pc) : ybus_(build_ybus(pc)) {
        auto const n = static_cast<Eigen::Index>(pc.buses.size());
        p_spec_ = Eigen::VectorXd::Zero(n);
        q_spec_ = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto const& b = pc.buses[static_cast<std::size_t>(i)];
            p_spec_[i] = -b.p_load;
            q_spec_[i] = -b.q_load;
            if (b.kind != BusKind::slack) angle_buses_.push_back(i);
            if (b.kind == BusKind::pq) magnitude_buses_.push_back(i);
        }
        for (auto const& g : pc.generators) {
            p_spec_[static_cast<Eigen::Index>(pc.bus_index(g.bus))] += g.p_gen;
        }
    }

    Eigen::Index bus_count() const { return ybus_.rows(); }
    Eigen::Index unknown_count() const {
        return static_cast<Eigen::Index>(angle_buses_.size() + magnitude_buses_.size());
    }

    /// Computed complex injections S = V conj(Y V).
    Eigen::VectorXcd injections(Eigen::VectorXd const& vm, Eigen::VectorXd const& va) const {
        Eigen::VectorXcd v(vm.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::polar(vm[i], va[i]);
        Eigen::VectorXcd const current = ybus_ * v;
        return v.cwiseProduct(current.conjugate());
    }

    Eigen::VectorXd residual(Eigen::VectorXd const& vm, Eigen::VectorXd const& va) const {
        Eigen::VectorXcd const s = injections(vm, va);
        Eigen::VectorXd r(unknown_count());
        Eigen::Index row = 0;
        for (auto i : angle_buses_) r[row++] = p_spec_[i] - s[i].real();
        for (auto i : magnitude_buses_) r[row++] = q_spec_[i] - s[i].imag();
        return r;
    }

    /// Derivative of the computed injections with respect to the unknowns.
    Eigen::MatrixXd jacobian(Eigen::VectorXd const& vm, Eigen::VectorXd const& va) const {
        auto const n = bus_count();
        Eigen::VectorXcd const s = injections(vm, va);
        // Full 2n x 2n blocks over all buses, then sliced.
        Eigen::MatrixXd dp_da(n, n), dp_dv(n, n), dq_da(n, n), dq_dv(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < n; ++k) {
                if (i == k) continue;
                double const g = ybus_(i, k).real();
                double const b = ybus_(i, k).imag();
                double const th = va[i] - va[k];
                double const c = std::cos(th);
                double const sn = std::sin(th);
                dp_da(i, k) = vm[i] * vm[k] * (g * sn - b * c);
                dp_dv(i, k) = vm[i] * (g * c + b * sn);
                dq_da(i, k) = -vm[i] * vm[k] * (g * c + b * sn);
                dq_dv(i, k) = vm[i] * (g * sn - b * c);
            }
            double const gii = ybus_(i, i).real();
            double const bii = ybus_(i, i).imag();
            double const p = s[i].real();
            double const q = s[i].imag();
            dp_da(i, i) = -q - bii * vm[i] * vm[i];
            dp_dv(i, i) = p / vm[i] + gii * vm[i];
            dq_da(i, i) = p - gii * vm[i] * vm[i];
            dq_dv(i, i) = q / vm[i] - bii * vm[i];
        }
        auto const na = static_cast<Eigen::Index>(angle_buses_.size());
        auto const nv = static_cast<Eigen::Index>(magnitude_buses_.size());
        Eigen::MatrixXd j(na + nv, na + nv);
        for (Eigen::Index r = 0; r < na; ++r) {
            auto const i = angle_buses_[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < na; ++c) j(r, c) = dp_da(i, angle_buses_[c]);
            for (Eigen::Index c = 0; c < nv; ++c) j(r, na + c) = dp_dv(i, magnitude_buses_[c]);
        }
        for (Eigen::Index r = 0; r < nv; ++r) {
            auto const i = magnitude_buses_[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < na; ++c) j(na + r, c) = dq_da(i, angle_buses_[c]);
            for (Eigen::Index c = 0; c < nv; ++c) j(na + r, na + c) = dq_dv(i, magnitude_buses_[c]);
        }
        return j;
    }

    void apply_update(Eigen::VectorXd const& dx, Eigen::VectorXd& vm, Eigen::VectorXd& va) const {
        Eigen::Index row = 0;
        for (auto i : angle_buses_) va[i] += dx[row++];
        for (auto i : magnitude_buses_) vm[i] += dx[row++];
    }

  private:
    AdmittanceMatrix ybus_;
    Eigen::VectorXd p_spec_;
    Eigen::VectorXd q_spec_;
    std::vector<Eigen::Index> angle_buses_;
    std::vector<Eigen::Index> magnitude_buses_;
};

inline void check_dimensions(PowerCase const& pc, Eigen::VectorXd const& vm,
                             Eigen::VectorXd const& va) {
    auto const n = static_cast<Eigen::Index>(pc.bus_count());
    if (vm.size() != n || va.size() != n) {
        throw std::invalid_argument("voltage vectors must have one entry per bus (" +
                                    std::to_string(n) + ")");
    }
}

}  // namespace detail

/// Power-flow residual in the documented unknown ordering (see file comment).
inline Eigen::VectorXd mismatch(PowerCase const& pc, Eigen::VectorXd const& v_mag,
                                Eigen::VectorXd const& v_ang) {
    detail::check_dimensions(pc, v_mag, v_ang);
    return detail::PowerFlowProblem(pc).residual(v_mag, v_ang);
}

/// d(computed injections)/d(unknowns); the residual Jacobian is its negation.
inline Eigen::MatrixXd powerflow_jacobian(PowerCase const& pc, Eigen::VectorXd const& v_mag,
                                          Eigen::VectorXd const& v_ang) {
    detail::check_dimensions(pc, v_mag, v_ang);
    return detail::PowerFlowProblem(pc).jacobian(v_mag, v_ang);
}

inline PowerFlowSolution solve_powerflow(PowerCase const& pc, PowerFlowOptions const& opts = {}) {
    if (!(opts.tolerance > 0.0)) throw std::invalid_argument("power flow tolerance must be positive");
    detail::PowerFlowProblem const problem(pc);
    auto const n = problem.bus_count();

    PowerFlowSolution sol;
    sol.v_mag = Eigen::VectorXd::Ones(n);
    sol.v_ang = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto const& b = pc.buses[static_cast<std::size_t>(i)];
        if (b.kind != BusKind::pq && b.v_set) sol.v_mag[i] = *b.v_set;
    }

    for (int iter = 0;; ++iter) {
        Eigen::VectorXd const r = problem.residual(sol.v_mag, sol.v_ang);
        double const worst = r.size() > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
        if (!std::isfinite(worst)) {
            throw PowerFlowError("mismatch became non-finite after " + std::to_string(iter) +
                                 " iterations");
        }
        if (worst <= opts.tolerance) {
            sol.iterations = iter;
            sol.max_mismatch = worst;
            break;
        }
        if (iter >= opts.max_iterations) {
            throw PowerFlowError("mismatch " + std::to_string(worst) + " pu after " +
                                 std::to_string(iter) + " iterations");
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(problem.jacobian(sol.v_mag, sol.v_ang));
        if (!(lu.rcond() > 1e-14)) {
            throw PowerFlowError("singular Jacobian at iteration " + std::to_string(iter + 1));
        }
        problem.apply_update(lu.solve(r), sol.v_mag, sol.v_ang);
        if ((sol.v_mag.array() <= 0.0).any()) {
            throw PowerFlowError("voltage collapse at iteration " + std::to_string(iter + 1));
        }
    }

    Eigen::VectorXcd const s = problem.injections(sol.v_mag, sol.v_ang);
    sol.p_inj = s.real();
    sol.q_inj = s.imag();
    return sol;
}

}  // namespace gridstab
