#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "stabilis/conditions.hpp"
#include "stabilis/solver.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// Empirical well-posedness probes: perturb the KKT system, re-solve, and
// compare the observed Lipschitz moduli and solution multiplicity against
// what the certificate predicts. Probes never upgrade to "holds": finite
// sampling can only report consistency, a concrete violation, or neither.
// ---------------------------------------------------------------------------

enum class ProbeKind { aubin, isolated_calmness, strong_regularity, tilt };
enum class ProbeVerdict { consistent, violated, inconclusive };

inline std::string to_string(ProbeKind k) {
    switch (k) {
        case ProbeKind::aubin: return "aubin";
        case ProbeKind::isolated_calmness: return "isolated_calmness";
        case ProbeKind::strong_regularity: return "strong_regularity";
        case ProbeKind::tilt: return "tilt";
    }
    return "?";
}

inline std::string to_string(ProbeVerdict v) {
    switch (v) {
        case ProbeVerdict::consistent: return "consistent";
        case ProbeVerdict::violated: return "violated";
        case ProbeVerdict::inconclusive: return "inconclusive";
    }
    return "?";
}

struct ProbeConfig {
    double radius = -1.0;  ///< perturbation radius; negative = 1e-4 * (1 + ||xbar||)
    int n_samples = 200;
    int n_starts = 8;
    std::uint64_t seed = 0;
    int shrink_levels = 5;
    double shrink_factor = 0.25;

    double effective_radius(const Vec& xbar) const {
        return radius >= 0 ? radius : 1e-4 * (1.0 + xbar.norm());
    }
};

struct ProbeResult {
    ProbeKind kind = ProbeKind::aubin;
    double modulus_estimate = 0.0;
    int uniqueness_violations = 0;
    int samples_used = 0;
    ProbeVerdict verdict = ProbeVerdict::inconclusive;
    std::string diagnostics;
    std::vector<double> level_moduli;  ///< per shrink level where applicable
};

namespace detail {

struct PerturbedSolves {
    std::vector<PrimalDualPair> solutions;  ///< deduped, inside the localization ball
    bool lost = false;                      ///< no solution found near the reference
};

inline PerturbedSolves solve_perturbed(const ProblemSpec& spec, const Vec& xbar,
                                       const Vec& ubar, const Perturbation& pert, int n_starts,
                                       Rng& rng, const Vec* warm = nullptr) {
    PerturbedSolves out;
    SolverParams params;
    params.max_iter = 60;
    const double ref_scale = 1.0 + xbar.norm() + ubar.norm();
    const double r_loc = 0.5 * ref_scale;
    auto push = [&](const PrimalDualPair& sol) {
        Vec d(spec.n + spec.m);
        d << sol.x - xbar, sol.u - ubar;
        if (d.norm() > r_loc) return;
        for (const auto& s : out.solutions) {
            Vec dd(spec.n + spec.m);
            dd << sol.x - s.x, sol.u - s.u;
            if (dd.norm() <= 1e-6 * ref_scale) return;
        }
        out.solutions.push_back(sol);
    };
    for (int s = 0; s < n_starts; ++s) {
        PrimalDualPair start;
        if (s == 0) {
            start.x = xbar;
            start.u = ubar;
        } else if (s == 1 && warm) {
            start.x = warm->head(spec.n);
            start.u = warm->tail(spec.m);
        } else {
            const double c = (s % 3 == 0) ? 1e-3 : (s % 3 == 1 ? 1e-2 : 1e-1);
            start.x = xbar + c * ref_scale * rng.gaussian_vec(spec.n);
            start.u = ubar + c * ref_scale * rng.gaussian_vec(spec.m);
        }
        try {
            auto [sol, trace] = solve_kkt(spec, start, params, &pert);
            if (trace.converged) push(sol);
        } catch (const LinearSolveFailure&) {
            // counted through the lost flag below
        }
    }
    out.lost = out.solutions.empty();
    return out;
}

inline Perturbation ball_sample(int n, int m, double radius, Rng& rng) {
    Vec d = rng.gaussian_vec(n + m);
    const double nn = d.norm();
    if (nn > 0) d *= radius * std::pow(rng.uniform(), 1.0 / (n + m)) / nn;
    Perturbation p;
    p.a = d.head(n);
    p.b = d.tail(m);
    return p;
}

inline bool cert_predicts_strong(const Certificate& cert) {
    return cert.soqc.status == Status::holds && cert.ssosc.status == Status::holds;
}

}  // namespace detail

/// Strong metric regularity probe: perturbed systems must keep a unique
/// solution near the reference, with a bounded distance-to-perturbation
/// ratio.
inline ProbeResult probe_strong_regularity(const ProblemSpec& spec, const Vec& xbar,
                                           const Vec& ubar, const ProbeConfig& cfg,
                                           const Certificate& cert) {
    ProbeResult res;
    res.kind = ProbeKind::strong_regularity;
    const double eps = cfg.effective_radius(xbar);
    if (eps <= 0.0 || cfg.n_samples < 2) {
        res.verdict = ProbeVerdict::inconclusive;
        res.diagnostics = "degenerate configuration: no perturbation";
        return res;
    }
    Rng rng(Rng::derive(cfg.seed, 0x57702eULL));
    int lost = 0;
    double modulus = 0.0;
    for (int s = 0; s < cfg.n_samples; ++s) {
        // sample 0 is the unperturbed system: solution-set multiplicity at the
        // reference parameter itself counts against single-valuedness
        Perturbation pert = s == 0 ? Perturbation::zero(spec.n, spec.m)
                                   : detail::ball_sample(spec.n, spec.m, eps, rng);
        auto solves = detail::solve_perturbed(spec, xbar, ubar, pert, cfg.n_starts, rng);
        ++res.samples_used;
        if (solves.lost) {
            ++lost;
            continue;
        }
        if (solves.solutions.size() > 1) ++res.uniqueness_violations;
        if (s == 0) continue;  // no ratio at zero perturbation
        const double pn = std::max(pert.norm(), 1e-300);
        for (const auto& sol : solves.solutions) {
            Vec d(spec.n + spec.m);
            d << sol.x - xbar, sol.u - ubar;
            modulus = std::max(modulus, d.norm() / pn);
        }
    }
    res.modulus_estimate = modulus;
    std::ostringstream os;
    os << "lost=" << lost << " unique-violations=" << res.uniqueness_violations
       << " modulus=" << modulus;
    res.diagnostics = os.str();
    const bool predicted = detail::cert_predicts_strong(cert);
    if (res.uniqueness_violations > 0 || (lost > 0 && !predicted)) {
        res.verdict = ProbeVerdict::violated;
        return res;
    }
    if (lost > cfg.n_samples / 5) {
        if (predicted)
            throw SolveFailuresExceeded("strong regularity probe: over 20% of samples unsolved");
        res.verdict = ProbeVerdict::inconclusive;
        return res;
    }
    res.verdict = predicted ? ProbeVerdict::consistent : ProbeVerdict::inconclusive;
    if (!predicted) res.diagnostics += "; no witness, certificate does not predict stability";
    return res;
}

/// Lipschitz-like probe: solutions at nearby parameter pairs must track each
/// other at a bounded ratio across shrinking radii; losing the solution set
/// under a small parameter move is a violation witness.
inline ProbeResult probe_aubin(const ProblemSpec& spec, const Vec& xbar, const Vec& ubar,
                               const ProbeConfig& cfg, const Certificate& cert) {
    ProbeResult res;
    res.kind = ProbeKind::aubin;
    const double eps = cfg.effective_radius(xbar);
    const int per_level = std::max(2, cfg.n_samples / std::max(1, cfg.shrink_levels));
    if (eps <= 0.0 || cfg.n_samples < 2) {
        res.verdict = ProbeVerdict::inconclusive;
        res.diagnostics = "degenerate configuration";
        return res;
    }
    Rng rng(Rng::derive(cfg.seed, 0xaab1aULL));
    int lost_pairs = 0;
    for (int level = 0; level < cfg.shrink_levels; ++level) {
        const double r = eps * std::pow(cfg.shrink_factor, level);
        double level_mod = 0.0;
        bool level_any = false;
        for (int s = 0; s < per_level; ++s) {
            Perturbation w1 = detail::ball_sample(spec.n, spec.m, r, rng);
            Perturbation w2 = detail::ball_sample(spec.n, spec.m, r, rng);
            auto s1 = detail::solve_perturbed(spec, xbar, ubar, w1, cfg.n_starts, rng);
            ++res.samples_used;
            if (s1.lost) continue;
            // warm-start the second solve from the first solution found
            Vec warm(spec.n + spec.m);
            warm << s1.solutions.front().x, s1.solutions.front().u;
            auto s2 = detail::solve_perturbed(spec, xbar, ubar, w2, cfg.n_starts, rng, &warm);
            if (s2.lost) {
                ++lost_pairs;
                continue;
            }
            const double wdist = std::max(
                std::sqrt((w1.a - w2.a).squaredNorm() + (w1.b - w2.b).squaredNorm()), 1e-300);
            for (const auto& sol : s1.solutions) {
                double nearest = kInf;
                for (const auto& tol : s2.solutions) {
                    Vec d(spec.n + spec.m);
                    d << sol.x - tol.x, sol.u - tol.u;
                    nearest = std::min(nearest, d.norm());
                }
                level_mod = std::max(level_mod, nearest / wdist);
                level_any = true;
            }
        }
        res.level_moduli.push_back(level_any ? level_mod : -1.0);
    }
    double modulus = 0.0;
    for (double lm : res.level_moduli) modulus = std::max(modulus, lm);
    res.modulus_estimate = modulus;
    // growth across levels
    double growth = 0.0;
    for (size_t l = 1; l < res.level_moduli.size(); ++l)
        if (res.level_moduli[l] > 0 && res.level_moduli[l - 1] > 0)
            growth = std::max(growth, res.level_moduli[l] / res.level_moduli[l - 1]);
    std::ostringstream os;
    os << "lost-pairs=" << lost_pairs << " modulus=" << modulus << " max-growth=" << growth;
    res.diagnostics = os.str();
    const bool predicted = detail::cert_predicts_strong(cert);
    if (lost_pairs > 0 || growth > 10.0) {
        res.verdict = ProbeVerdict::violated;
        return res;
    }
    int informative = 0;
    for (double lm : res.level_moduli)
        if (lm >= 0) ++informative;
    if (informative < 2) {
        res.verdict = ProbeVerdict::inconclusive;
        res.diagnostics += "; insufficient spread";
        return res;
    }
    res.verdict = predicted ? ProbeVerdict::consistent : ProbeVerdict::inconclusive;
    return res;
}

/// Isolated calmness probe: along fixed directions with geometrically
/// shrinking magnitude, all solutions near the reference must stay within a
/// bounded multiple of the perturbation size.
inline ProbeResult probe_isolated_calmness(const ProblemSpec& spec, const Vec& xbar,
                                           const Vec& ubar, const ProbeConfig& cfg,
                                           const Certificate& cert) {
    ProbeResult res;
    res.kind = ProbeKind::isolated_calmness;
    const double eps = cfg.effective_radius(xbar);
    if (eps <= 0.0) {
        res.verdict = ProbeVerdict::inconclusive;
        res.diagnostics = "degenerate configuration";
        return res;
    }
    Rng rng(Rng::derive(cfg.seed, 0xca1ca1ULL));
    const int n_dirs = std::max(1, std::min(16, cfg.n_samples / std::max(1, cfg.shrink_levels)));
    std::vector<Vec> dirs;
    for (int k = 0; k < n_dirs; ++k) {
        Vec d = rng.gaussian_vec(spec.n + spec.m);
        dirs.push_back(d / std::max(d.norm(), 1e-300));
    }
    int lost = 0;
    for (int level = 0; level < cfg.shrink_levels; ++level) {
        const double r = eps * std::pow(cfg.shrink_factor, level);
        double level_mod = -1.0;
        for (const Vec& d : dirs) {
            Perturbation pert{r * d.head(spec.n), r * d.tail(spec.m)};
            auto solves = detail::solve_perturbed(spec, xbar, ubar, pert, cfg.n_starts, rng);
            ++res.samples_used;
            if (solves.lost) {
                ++lost;
                continue;
            }
            for (const auto& sol : solves.solutions) {
                Vec dd(spec.n + spec.m);
                dd << sol.x - xbar, sol.u - ubar;
                level_mod = std::max(level_mod, dd.norm() / r);
            }
        }
        res.level_moduli.push_back(level_mod);
    }
    double modulus = 0.0;
    for (double lm : res.level_moduli) modulus = std::max(modulus, lm);
    res.modulus_estimate = modulus;
    double growth = 0.0;
    for (size_t l = 1; l < res.level_moduli.size(); ++l)
        if (res.level_moduli[l] > 0 && res.level_moduli[l - 1] > 0)
            growth = std::max(growth, res.level_moduli[l] / res.level_moduli[l - 1]);
    const bool cert_ic = cert.srcq.status == Status::holds && cert.sosc.status == Status::holds;
    std::ostringstream os;
    os << "directions=" << n_dirs << " lost=" << lost << " modulus=" << modulus
       << " max-growth=" << growth;
    if (n_dirs < 2) os << "; low-coverage";
    res.diagnostics = os.str();
    if (growth > 10.0) {
        res.verdict = ProbeVerdict::violated;
        return res;
    }
    res.verdict = cert_ic ? ProbeVerdict::consistent : ProbeVerdict::inconclusive;
    if (!cert_ic) res.diagnostics += "; bounded but SRCQ+SOSC not certified";
    return res;
}

/// Tilt stability probe: linear tilts of the objective must move the local
/// minimizer single-valuedly and Lipschitz-continuously inside a localization
/// ball around the reference.
inline ProbeResult probe_tilt(const ProblemSpec& spec, const Vec& xbar, const ProbeConfig& cfg,
                              const Certificate& cert) {
    ProbeResult res;
    res.kind = ProbeKind::tilt;
    const double eps = cfg.effective_radius(xbar);
    if (eps <= 0.0 || cfg.n_samples < 2) {
        res.verdict = ProbeVerdict::inconclusive;
        res.diagnostics = "degenerate configuration";
        return res;
    }
    Rng rng(Rng::derive(cfg.seed, 0x7117ULL));
    const double gamma_ball = 0.5 * (1.0 + xbar.norm());
    Vec ubar;
    try {
        ubar = recover_multiplier(spec, xbar);
    } catch (const NoMultiplierFound&) {
        res.verdict = ProbeVerdict::inconclusive;
        res.diagnostics = "no multiplier at the reference";
        return res;
    }
    int lost = 0;
    double modulus = 0.0;
    bool have_prev = false;
    Vec prev_tilt, prev_x;
    for (int s = 0; s < cfg.n_samples; ++s) {
        Vec v = rng.gaussian_vec(spec.n);
        v *= eps * std::pow(rng.uniform(), 1.0 / spec.n) / std::max(v.norm(), 1e-300);
        Perturbation pert{v, Vec::Zero(spec.m)};
        auto solves = detail::solve_perturbed(spec, xbar, ubar, pert, cfg.n_starts, rng);
        ++res.samples_used;
        // ball projection safeguard: ignore solutions leaving the gamma ball
        std::vector<Vec> xs;
        for (const auto& sol : solves.solutions) {
            if ((sol.x - xbar).norm() <= gamma_ball) {
                bool fresh = true;
                for (const Vec& xx : xs)
                    if ((xx - sol.x).norm() <= 1e-6 * (1.0 + xbar.norm())) fresh = false;
                if (fresh) xs.push_back(sol.x);
            }
        }
        if (xs.empty()) {
            ++lost;
            continue;
        }
        if (xs.size() > 1) ++res.uniqueness_violations;
        if (have_prev) {
            const double vd = std::max((v - prev_tilt).norm(), 1e-300);
            modulus = std::max(modulus, (xs.front() - prev_x).norm() / vd);
        }
        prev_tilt = v;
        prev_x = xs.front();
        have_prev = true;
    }
    res.modulus_estimate = modulus;
    std::ostringstream os;
    os << "lost=" << lost << " unique-violations=" << res.uniqueness_violations
       << " modulus=" << modulus;
    res.diagnostics = os.str();
    const bool predicted = detail::cert_predicts_strong(cert);
    if (res.uniqueness_violations > 0 || (lost > 0 && !predicted)) {
        res.verdict = ProbeVerdict::violated;
        return res;
    }
    if (lost > cfg.n_samples / 5) {
        if (predicted) throw SolveFailuresExceeded("tilt probe: over 20% of samples unsolved");
        res.verdict = ProbeVerdict::inconclusive;
        return res;
    }
    res.verdict = predicted ? ProbeVerdict::consistent : ProbeVerdict::inconclusive;
    return res;
}

inline ProbeResult run_probe(ProbeKind kind, const ProblemSpec& spec, const Vec& xbar,
                             const Vec& ubar, const ProbeConfig& cfg, const Certificate& cert) {
    switch (kind) {
        case ProbeKind::aubin: return probe_aubin(spec, xbar, ubar, cfg, cert);
        case ProbeKind::isolated_calmness:
            return probe_isolated_calmness(spec, xbar, ubar, cfg, cert);
        case ProbeKind::strong_regularity:
            return probe_strong_regularity(spec, xbar, ubar, cfg, cert);
        case ProbeKind::tilt: return probe_tilt(spec, xbar, cfg, cert);
    }
    throw Error("unknown probe kind");
}

}  // namespace stabilis
