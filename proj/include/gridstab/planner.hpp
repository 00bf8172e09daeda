#pragma once

// Budgeted placement of communication links. Each greedy iteration installs
// the candidate link with the largest marginal gain
//
//   g_l(A) = alpha_max(A) - alpha_max(A + l),
//
// so that positive gains mean a more stable system.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "gridstab/dynamics.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/format.hpp"
#include "gridstab/linearization.hpp"

namespace gridstab {

struct PlanOptions {
    std::size_t budget = 15;
    double gain = -1.0;  // common h_ik for every installed link
    bool allow_nonpositive = false;
    unsigned threads = 1;  // candidate sweep workers; results do not depend on it
    // Gains closer than this (1/s) are a tie, resolved by the smaller link.
    double tie_tolerance = 1e-10;
    SpectrumOptions spectrum{};
};

struct PlanIteration {
    std::size_t index = 0;  // 1-based
    Link link;
    double alpha_max_after = 0.0;
    double marginal_gain = 0.0;
    std::size_t candidates_evaluated = 0;
};

struct PlanResult {
    double baseline_alpha = 0.0;
    std::vector<PlanIteration> iterations;
    bool stopped_early = false;
    std::string stop_reason;
    std::vector<std::string> warnings;
    std::size_t effective_budget = 0;

    double final_alpha() const {
        return iterations.empty() ? baseline_alpha : iterations.back().alpha_max_after;
    }

    std::vector<Link> links() const {
        std::vector<Link> out;
        for (auto const& it : iterations) out.push_back(it.link);
        return out;
    }
};

/// Every unordered generator pair not yet installed, in lexicographic order.
inline std::vector<Link> candidate_links(std::size_t n, std::span<Link const> installed) {
    if (n < 2) throw std::invalid_argument("candidate links need at least two generators");
    std::set<Link> const taken(installed.begin(), installed.end());
    std::vector<Link> out;
    out.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = i + 1; k < n; ++k) {
            Link const l(i, k);
            if (!taken.contains(l)) out.push_back(l);
        }
    }
    return out;
}

inline double marginal_gain(Link const& link, std::span<Link const> installed,
                            SystemModel const& model, double gain,
                            SpectrumOptions const& spectrum = {}) {
    if (!(gain < 0.0)) throw std::invalid_argument("link gain must be strictly negative");
    if (std::find(installed.begin(), installed.end(), link) != installed.end()) {
        throw std::invalid_argument("link is already installed");
    }
    JacobianBuilder const builder(model);
    std::vector<Link> with(installed.begin(), installed.end());
    double const before = analyze_spectrum(builder.jacobian(with, gain), spectrum).alpha_max;
    with.push_back(link);
    double const after = analyze_spectrum(builder.jacobian(with, gain), spectrum).alpha_max;
    return before - after;
}

namespace detail {

/// alpha_max for installed + each candidate. Workers take a fixed stride of
/// candidates, so the output is independent of the thread count.
inline std::vector<double> sweep_candidates(JacobianBuilder const& builder,
                                            std::vector<Link> const& installed,
                                            std::vector<Link> const& candidates, double gain,
                                            SpectrumOptions const& spectrum, unsigned threads) {
    std::vector<double> alphas(candidates.size());
    std::vector<std::exception_ptr> errors(candidates.size());
    auto work = [&](std::size_t start, std::size_t stride) {
        std::vector<Link> links = installed;
        links.push_back(Link{});
        for (std::size_t c = start; c < candidates.size(); c += stride) {
            links.back() = candidates[c];
            try {
                alphas[c] = analyze_spectrum(builder.jacobian(links, gain), spectrum).alpha_max;
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    unsigned const workers =
        std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(candidates.size())));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    }
    for (auto const& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return alphas;
}

inline std::size_t clamp_budget(std::size_t budget, std::size_t n, std::vector<std::string>& warnings) {
    std::size_t const possible = n >= 2 ? n * (n - 1) / 2 : 0;
    if (budget > possible) {
        warnings.push_back("budget " + std::to_string(budget) + " exceeds the " +
                           std::to_string(possible) + " possible links; clamped to " +
                           std::to_string(possible));
        return possible;
    }
    return budget;
}

}  // namespace detail

inline PlanResult greedy_plan(SystemModel const& model, PlanOptions const& opts = {}) {
    if (!(opts.gain < 0.0)) throw std::invalid_argument("link gain must be strictly negative");
    auto const n = model.size();
    JacobianBuilder const builder(model);

    PlanResult result;
    result.effective_budget = detail::clamp_budget(opts.budget, n, result.warnings);
    result.baseline_alpha = analyze_spectrum(builder.jacobian({}, opts.gain), opts.spectrum).alpha_max;

    std::vector<Link> installed;
    double current = result.baseline_alpha;
    for (std::size_t it = 1; it <= result.effective_budget; ++it) {
        auto const candidates = candidate_links(n, installed);
        auto const alphas = detail::sweep_candidates(builder, installed, candidates, opts.gain,
                                                     opts.spectrum, opts.threads);
        std::size_t best = 0;
        for (std::size_t c = 1; c < candidates.size(); ++c) {
            if (current - alphas[c] > current - alphas[best] + opts.tie_tolerance) best = c;
        }
        double const gain = current - alphas[best];
        // A gain inside the tie tolerance is indistinguishable from zero.
        if (!opts.allow_nonpositive && !(gain > opts.tie_tolerance)) {
            result.stopped_early = true;
            result.stop_reason = "best marginal gain " + format_double(gain) +
                                 " is not positive at iteration " + std::to_string(it);
            break;
        }
        installed.push_back(candidates[best]);
        result.iterations.push_back({it, candidates[best], alphas[best], gain, candidates.size()});
        current = alphas[best];
    }
    return result;
}

/// Global optimum over every budget-sized link subset. Small instances only.
inline PlanResult exhaustive_plan(SystemModel const& model, std::size_t budget, double gain,
                                  PlanOptions const& opts = {}) {
    constexpr double guard = 1e6;
    if (!(gain < 0.0)) throw std::invalid_argument("link gain must be strictly negative");
    auto const n = model.size();
    JacobianBuilder const builder(model);

    PlanResult result;
    budget = detail::clamp_budget(budget, n, result.warnings);
    result.effective_budget = budget;
    result.baseline_alpha = analyze_spectrum(builder.jacobian({}, gain), opts.spectrum).alpha_max;
    if (budget == 0) return result;

    auto const all = candidate_links(n, {});
    double subsets = 1.0;
    for (std::size_t i = 0; i < budget; ++i) {
        subsets = subsets * static_cast<double>(all.size() - i) / static_cast<double>(i + 1);
    }
    if (subsets > guard) {
        throw InputError("exhaustive search over " + format_double(subsets) +
                         " subsets exceeds the guard of 1e6");
    }

    // Lexicographic enumeration; replacing only on a strict improvement keeps
    // the smallest subset among ties.
    std::vector<std::size_t> pick(budget);
    for (std::size_t i = 0; i < budget; ++i) pick[i] = i;
    std::vector<Link> links(budget);
    std::vector<Link> best_links;
    double best_alpha = 0.0;
    while (true) {
        for (std::size_t i = 0; i < budget; ++i) links[i] = all[pick[i]];
        double const a = analyze_spectrum(builder.jacobian(links, gain), opts.spectrum).alpha_max;
        if (best_links.empty() || a < best_alpha - opts.tie_tolerance) {
            best_alpha = a;
            best_links = links;
        }
        std::size_t i = budget;
        while (i > 0 && pick[i - 1] == all.size() - budget + i - 1) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t k = i; k < budget; ++k) pick[k] = pick[k - 1] + 1;
    }

    double current = result.baseline_alpha;
    std::vector<Link> prefix;
    for (std::size_t i = 0; i < best_links.size(); ++i) {
        prefix.push_back(best_links[i]);
        double const a = i + 1 == best_links.size()
                             ? best_alpha
                             : analyze_spectrum(builder.jacobian(prefix, gain), opts.spectrum).alpha_max;
        result.iterations.push_back({i + 1, best_links[i], a, current - a, 0});
        current = a;
    }
    return result;
}

}  // namespace gridstab
