#pragma once

// Small-signal model at the operating point. In (d_delta, d_omega) ordering
// the Jacobian is [[0, I], [T + K, P]], where T and K are the exact angle
// derivatives of the network and control terms of the swing right-hand side
// and P = diag(-D_i / M_i).

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <set>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gridstab/dynamics.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/reduced_network.hpp"

namespace gridstab {

/// t[i][k] = (C_ik cos d_ik - D_ik sin d_ik) / M_i off the diagonal; rows sum to zero.
inline Eigen::MatrixXd build_t(ReducedNetwork const& net, Eigen::VectorXd const& delta_s,
                               Eigen::VectorXd const& m) {
    auto const n = static_cast<Eigen::Index>(net.size());
    if (delta_s.size() != n || m.size() != n) {
        throw std::invalid_argument("build_t: dimension mismatch");
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double row = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            double const dik = delta_s[i] - delta_s[k];
            t(i, k) = (net.c(i, k) * std::cos(dik) - net.d(i, k) * std::sin(dik)) / m[i];
            row += t(i, k);
        }
        t(i, i) = -row;
    }
    return t;
}

/// Weighted Laplacian of the control links, scaled by 1/M_i.
inline Eigen::MatrixXd build_k(ControlConfig const& ctl, Eigen::VectorXd const& m) {
    auto const n = m.size();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (auto const& [l, h] : ctl.gains) {
        auto const i = static_cast<Eigen::Index>(l.first);
        auto const j = static_cast<Eigen::Index>(l.second);
        if (j >= n) throw std::invalid_argument("build_k: link index out of range");
        k(i, i) += h / m[i];
        k(i, j) -= h / m[i];
        k(j, j) += h / m[j];
        k(j, i) -= h / m[j];
    }
    return k;
}

inline Eigen::MatrixXd build_p(Eigen::VectorXd const& damping, Eigen::VectorXd const& m) {
    return Eigen::VectorXd(-damping.array() / m.array()).asDiagonal();
}

inline Eigen::MatrixXd assemble_jacobian(Eigen::MatrixXd const& t, Eigen::MatrixXd const& k,
                                         Eigen::MatrixXd const& p) {
    auto const n = t.rows();
    if (t.cols() != n || k.rows() != n || k.cols() != n || p.rows() != n || p.cols() != n) {
        throw std::invalid_argument("assemble_jacobian: blocks are not conformable");
    }
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    j.topRightCorner(n, n).setIdentity();
    j.bottomLeftCorner(n, n) = t + k;
    j.bottomRightCorner(n, n) = p;
    return j;
}

struct JacobianBlocks {
    Eigen::MatrixXd t;
    Eigen::MatrixXd k;
    Eigen::MatrixXd p;
    Eigen::MatrixXd assembled;
};

inline JacobianBlocks linearize(SystemModel const& model, ControlConfig const& ctl) {
    JacobianBlocks b;
    b.t = build_t(model.net, model.op.delta_s, model.constants.m);
    b.k = build_k(ctl, model.constants.m);
    b.p = build_p(model.constants.damping, model.constants.m);
    b.assembled = assemble_jacobian(b.t, b.k, b.p);
    return b;
}

struct SpectrumOptions {
    bool deflate = true;
    std::optional<double> zero_tol;  // default 1e-8 * ||J||_F
    double min_alignment = 0.99;     // cosine against [1_n; 0_n]
};

struct SpectrumReport {
    std::vector<std::complex<double>> eigenvalues;  // sorted by real part, descending
    double alpha_max = 0.0;
    bool deflated_zero = false;
    std::optional<std::size_t> deflated_index;  // into `eigenvalues`
    double deflated_magnitude = 0.0;
    std::string note;
};

namespace detail {

inline bool spectrum_order(std::complex<double> const& a, std::complex<double> const& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
}

}  // namespace detail

/// Full spectrum of a real nonsymmetric Jacobian and its spectral abscissa.
///
/// With deflation on, the eigenvalue of smallest magnitude is set aside when it
/// is below `zero_tol` and its eigenvector is the uniform angle shift; alpha_max
/// then covers the remaining eigenvalues.
inline SpectrumReport analyze_spectrum(Eigen::MatrixXd const& j, SpectrumOptions const& opts = {}) {
    if (j.rows() != j.cols() || j.rows() == 0) throw std::invalid_argument("Jacobian must be square");
    if (!j.allFinite()) throw EigenSolverError("Jacobian has non-finite entries");

    Eigen::EigenSolver<Eigen::MatrixXd> solver(j, opts.deflate);
    if (solver.info() != Eigen::Success) throw EigenSolverError("eigensolver did not converge");

    Eigen::VectorXcd const values = solver.eigenvalues();
    auto const size = values.size();

    std::optional<Eigen::Index> removed;
    double removed_magnitude = 0.0;
    std::string note;
    if (opts.deflate) {
        Eigen::Index smallest = 0;
        for (Eigen::Index i = 1; i < size; ++i) {
            if (std::abs(values[i]) < std::abs(values[smallest])) smallest = i;
        }
        double const tol = opts.zero_tol.value_or(1e-8 * j.norm());
        double const magnitude = std::abs(values[smallest]);
        if (magnitude <= tol && size % 2 == 0) {
            auto const n = size / 2;
            Eigen::VectorXcd const v = solver.eigenvectors().col(smallest);
            std::complex<double> dot = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) dot += std::conj(v[i]);
            double const cosine = std::abs(dot) / (std::sqrt(static_cast<double>(n)) * v.norm());
            if (cosine >= opts.min_alignment) {
                removed = smallest;
                removed_magnitude = magnitude;
            } else {
                note = "near-zero eigenvalue is not the uniform angle shift; nothing deflated";
            }
        } else {
            note = "no eigenvalue within the zero tolerance; nothing deflated";
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(size));
    for (Eigen::Index i = 0; i < size; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&values](Eigen::Index a, Eigen::Index b) {
        return detail::spectrum_order(values[a], values[b]);
    });

    SpectrumReport report;
    report.note = std::move(note);
    report.alpha_max = -std::numeric_limits<double>::infinity();
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        auto const idx = order[pos];
        report.eigenvalues.push_back(values[idx]);
        if (removed && idx == *removed) {
            report.deflated_zero = true;
            report.deflated_index = pos;
            report.deflated_magnitude = removed_magnitude;
            continue;
        }
        report.alpha_max = std::max(report.alpha_max, values[idx].real());
    }
    return report;
}

/// Reuses the link-independent blocks across many link sets.
class JacobianBuilder {
  public:
    explicit JacobianBuilder(SystemModel const& model)
        : m_(model.constants.m),
          base_(assemble_jacobian(build_t(model.net, model.op.delta_s, model.constants.m),
                                  Eigen::MatrixXd::Zero(m_.size(), m_.size()),
                                  build_p(model.constants.damping, model.constants.m))) {}

    Eigen::MatrixXd jacobian(std::span<Link const> links, double gain) const {
        auto const n = m_.size();
        Eigen::MatrixXd j = base_;
        for (auto const& l : links) {
            auto const a = static_cast<Eigen::Index>(l.first);
            auto const b = static_cast<Eigen::Index>(l.second);
            if (b >= n) throw std::invalid_argument("link index out of range");
            j(n + a, a) += gain / m_[a];
            j(n + a, b) -= gain / m_[a];
            j(n + b, b) += gain / m_[b];
            j(n + b, a) -= gain / m_[b];
        }
        return j;
    }

    std::size_t size() const { return static_cast<std::size_t>(m_.size()); }

  private:
    Eigen::VectorXd m_;
    Eigen::MatrixXd base_;
};

/// alpha_max of the system with `links` installed at a common gain.
inline double alpha_for_links(SystemModel const& model, std::span<Link const> links, double gain,
                              SpectrumOptions const& opts = {}) {
    if (std::set<Link>(links.begin(), links.end()).size() != links.size()) {
        throw std::invalid_argument("link set contains duplicates");
    }
    return analyze_spectrum(JacobianBuilder(model).jacobian(links, gain), opts).alpha_max;
}

}  // namespace gridstab
