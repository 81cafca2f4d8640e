// Command-line front end: solve / certify / probe / demo-spectral / oracle.
// Reports are emitted as JSON on stdout (or --out), human summaries on
// stderr. Exit codes: 0 success, 1 usage, 2 solve failure, 3 internal
// inconsistency detected.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "stabilis/instances.hpp"
#include "stabilis/report.hpp"
#include "stabilis/spectral_analysis.hpp"

using namespace stabilis;

namespace {

Vec parse_csv_vector(const std::string& s) {
    std::vector<double> vals;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        vals.push_back(std::stod(tok));
    }
    Vec v(static_cast<int>(vals.size()));
    for (size_t i = 0; i < vals.size(); ++i) v[static_cast<int>(i)] = vals[i];
    return v;
}

void emit(const json& report, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << report.dump(2) << std::endl;
    } else {
        std::ofstream out(out_path);
        out << report.dump(2) << std::endl;
    }
}

struct CommonOpts {
    std::string out;
    std::uint64_t seed = 0;
    int samples = 200;
    double radius = -1.0;
    double band = 1e-7;
};

int run_solve_like(const std::string& file, const CommonOpts& opts, const std::string& xcsv,
                   const std::string& ucsv, bool do_certify, const std::string& probe_kind) {
    ProblemSpec spec = parse_problem_file(file);
    RunReport report;
    report.problem_digest = problem_digest(spec);
    report.seed = opts.seed;
    report.band = opts.band;

    PrimalDualPair pair;
    if (!xcsv.empty()) {
        pair.x = parse_csv_vector(xcsv);
        pair.u = ucsv.empty() ? Vec::Zero(spec.m) : parse_csv_vector(ucsv);
        if (pair.x.size() != spec.n || pair.u.size() != spec.m) {
            std::cerr << "error: --x/--u dimensions do not match the problem\n";
            return 1;
        }
        pair.residual_norm = residual_Z(spec, pair.x, pair.u).norm();
    } else {
        PrimalDualPair start{Vec::Zero(spec.n), Vec::Zero(spec.m), 0.0};
        auto [sol, trace] = solve_kkt(spec, start);
        if (!trace.converged) {
            // one retry from a recovered multiplier if the primal settled
            try {
                Vec u = recover_multiplier(spec, sol.x);
                start = {sol.x, u, 0.0};
                std::tie(sol, trace) = solve_kkt(spec, start);
            } catch (const Error&) {
            }
        }
        report.solve = trace;
        pair = sol;
        if (!trace.converged) {
            report.solution = pair;
            emit(report.to_json(), opts.out);
            std::cerr << "solve failed: residual " << pair.residual_norm << "\n";
            return 2;
        }
    }
    report.solution = pair;

    if (do_certify || !probe_kind.empty()) {
        CheckOptions copt;
        copt.band = opts.band;
        copt.seed = opts.seed;
        Certificate cert;
        try {
            cert = certify(spec, pair.x, pair.u, copt);
        } catch (const NotKKT& e) {
            emit(report.to_json(), opts.out);
            std::cerr << "certify failed: " << e.what() << "\n";
            return 2;
        }
        report.certificate = cert;

        if (!probe_kind.empty()) {
            ProbeConfig cfg;
            cfg.seed = opts.seed;
            cfg.n_samples = opts.samples;
            cfg.radius = opts.radius;
            auto add = [&](ProbeKind k) {
                report.probes.push_back(run_probe(k, spec, pair.x, pair.u, cfg, cert));
            };
            if (probe_kind == "aubin") add(ProbeKind::aubin);
            else if (probe_kind == "calm") add(ProbeKind::isolated_calmness);
            else if (probe_kind == "strong") add(ProbeKind::strong_regularity);
            else if (probe_kind == "tilt") add(ProbeKind::tilt);
            else {
                add(ProbeKind::aubin);
                add(ProbeKind::isolated_calmness);
                add(ProbeKind::strong_regularity);
                add(ProbeKind::tilt);
            }
        }

        emit(report.to_json(), opts.out);
        std::cerr << "certificate:";
        for (const auto& [name, v] :
             std::initializer_list<std::pair<const char*, const ConditionVerdict*>>{
                 {"rcq", &cert.rcq},
                 {"srcq", &cert.srcq},
                 {"nondegeneracy", &cert.nondegeneracy},
                 {"soqc", &cert.soqc},
                 {"sosc", &cert.sosc},
                 {"ssosc", &cert.ssosc},
                 {"jz", &cert.jz_nonsingular}})
            std::cerr << " " << name << "=" << to_string(v->status);
        std::cerr << "\n";
        for (const auto& p : report.probes)
            std::cerr << "probe " << to_string(p.kind) << ": " << to_string(p.verdict) << " ("
                      << p.diagnostics << ")\n";
        if (consistency_violated(cert)) {
            std::cerr << "internal inconsistency detected in the consistency matrix\n";
            return 3;
        }
        return 0;
    }

    emit(report.to_json(), opts.out);
    std::cerr << "solved: residual " << pair.residual_norm << "\n";
    return 0;
}

int run_demo_spectral(const CommonOpts& opts) {
    json cases = json::array();
    bool all_ok = true;
    for (int regime = 0; regime < 3; ++regime) {
        Instance inst = spectral_instance(regime, opts.seed);
        const Vec y = inst.spec.F_value(inst.xbar);
        Mat Z = vec_mat(y + inst.ubar, inst.spec.g.p, inst.spec.g.q);
        json jc;
        jc["name"] = inst.name;
        SpectralCase cls = spectral_case_classify(Z);
        jc["regime"] = cls == SpectralCase::inside    ? "nuclear norm below one"
                       : cls == SpectralCase::boundary ? "nuclear norm at one"
                                                       : "nuclear norm above one";
        CheckOptions copt;
        copt.band = opts.band;
        copt.seed = opts.seed;
        Certificate cert = certify(inst.spec, inst.xbar, inst.ubar, copt);
        jc["certificate"] = certificate_json(cert);
        CriticalCone cone = critical_cone(inst.spec, inst.xbar, inst.ubar);
        jc["critical_subspace_dim"] = static_cast<int>(cone.basis.cols());
        if (cls == SpectralCase::inside) {
            jc["check"] = cone.basis.cols() == 0 ? "empty critical cone confirmed"
                                                 : "expected empty critical cone";
            all_ok = all_ok && cone.basis.cols() == 0;
        } else if (cls == SpectralCase::boundary) {
            // the second-order variational term vanishes on its whole domain
            Rng rng(opts.seed);
            double worst = 0.0;
            for (int t = 0; t < 16; ++t) {
                Vec v = sample_critical_direction(inst.spec.g, y, inst.ubar, rng);
                GammaValue gv = gamma(inst.spec.g, y, inst.ubar, v);
                if (gv.in_domain) worst = std::max(worst, std::abs(gv.value));
            }
            jc["gamma_sup_on_domain"] = worst;
            jc["check"] = worst <= 1e-8 ? "gamma vanishes on its domain"
                                        : "gamma does not vanish";
            all_ok = all_ok && worst <= 1e-8;
        } else {
            detail::SvdFactor f = detail::full_svd(Z);
            SpectralThresholds th = spectral_thresholds(f.sigma);
            jc["k1"] = th.k1;
            jc["k2"] = th.k2;
            jc["l1_ball_projection"] = detail::vector_json(th.p);
            // explicit quadratic form against the generic reduced matrix
            auto [B, Hr] = reduced_ssosc_matrix(inst.spec, inst.xbar, inst.ubar);
            const int k = static_cast<int>(B.cols());
            double maxrel = 0.0;
            Mat J = inst.spec.F_jacobian(inst.xbar);
            Mat H = lagrangian_hessian(inst.spec, inst.xbar, inst.ubar);
            if (k > 0) {
                auto qform = [&](const Vec& d) {
                    Mat Y = vec_mat(Vec(J * d), inst.spec.g.p, inst.spec.g.q);
                    return d.dot(H * d) + spectral_ssosc_quadratic(Z, Y);
                };
                Mat Hs(k, k);
                for (int i = 0; i < k; ++i)
                    for (int jcol = i; jcol < k; ++jcol) {
                        const double qpp = qform(B.col(i) + B.col(jcol));
                        const double qmm = qform(B.col(i) - B.col(jcol));
                        Hs(i, jcol) = Hs(jcol, i) = 0.25 * (qpp - qmm);
                    }
                maxrel = (Hs - Hr).norm() / (1.0 + Hr.norm());
            }
            jc["specialized_vs_generic_rel_error"] = maxrel;
            jc["check"] = maxrel <= 1e-8 ? "explicit quadratic form matches"
                                         : "explicit quadratic form mismatch";
            all_ok = all_ok && maxrel <= 1e-8;
        }
        cases.push_back(jc);
    }
    json report;
    report["schema"] = kReportSchema;
    report["versions"]["tool"] = kToolVersion;
    report["seed"] = opts.seed;
    report["demo_spectral"] = cases;
    emit(report, opts.out);
    std::cerr << (all_ok ? "all three regimes reproduce the expected degenerations\n"
                         : "regime checks disagree\n");
    return all_ok ? 0 : 3;
}

int run_oracle(const std::string& file, const CommonOpts& opts, const std::string& xcsv,
               const std::string& ucsv, const std::string& vcsv) {
    ProblemSpec spec = parse_problem_file(file);
    if (xcsv.empty() || ucsv.empty() || vcsv.empty()) {
        std::cerr << "oracle requires --x (point), --u (subgradient), --v (direction)\n";
        return 1;
    }
    Vec x = parse_csv_vector(xcsv), mu = parse_csv_vector(ucsv), v = parse_csv_vector(vcsv);
    if (x.size() != spec.m || mu.size() != spec.m || v.size() != spec.m) {
        std::cerr << "oracle vectors live in the image space (dimension " << spec.m << ")\n";
        return 1;
    }
    json report;
    report["schema"] = kReportSchema;
    report["versions"]["tool"] = kToolVersion;
    report["seed"] = opts.seed;
    report["tau_schedule"] = TauSchedule{}.taus;
    try {
        GammaValue gv = gamma(spec.g, x, mu, v);
        report["gamma"] = gv.in_domain ? json(gv.value) : json("inf");
        report["in_domain"] = gv.in_domain;
        const double bf = gamma_bruteforce_oracle(spec.g, x, mu, v, opts.samples, opts.seed);
        report["bruteforce"] = bf == kInf ? json("inf") : json(bf);
        TauSchedule sched;
        sched.seed = opts.seed;
        const double d2 = second_subderivative_oracle(spec.g, x, mu, v, sched);
        report["difference_quotient"] = d2 == kInf ? json("inf") : json(d2);
    } catch (const NotASubgradient& e) {
        std::cerr << "oracle: " << e.what() << "\n";
        return 2;
    }
    emit(report, opts.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"well-posedness certification for composite KKT systems"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string file, xcsv, ucsv, vcsv, kind;

    auto add_common = [&](CLI::App* cmd, bool needs_file = true) {
        if (needs_file) cmd->add_option("file", file, "problem JSON file")->required();
        cmd->add_option("--out", opts.out, "write the JSON report to this path");
        cmd->add_option("--seed", opts.seed, "seed for every stochastic component");
        cmd->add_option("--samples", opts.samples, "sample count for probes and oracles");
        cmd->add_option("--radius", opts.radius, "perturbation radius (default scale-aware)");
        cmd->add_option("--band", opts.band, "inconclusive margin band");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve the KKT system by semismooth Newton");
    add_common(solve);
    solve->add_option("--x", xcsv, "comma-separated start x");
    solve->add_option("--u", ucsv, "comma-separated start u");

    CLI::App* certify_cmd = app.add_subcommand("certify", "solve then certify all conditions");
    add_common(certify_cmd);
    certify_cmd->add_option("--x", xcsv, "certify this x instead of solving");
    certify_cmd->add_option("--u", ucsv, "certify this u instead of solving");

    CLI::App* probe_cmd = app.add_subcommand("probe", "empirical well-posedness probes");
    add_common(probe_cmd);
    probe_cmd->add_option("--kind", kind, "aubin|calm|strong|tilt|all")
        ->default_val("all")
        ->check(CLI::IsMember({"aubin", "calm", "strong", "tilt", "all"}));
    probe_cmd->add_option("--x", xcsv, "probe around this x instead of solving");
    probe_cmd->add_option("--u", ucsv, "probe around this u instead of solving");

    CLI::App* demo = app.add_subcommand("demo-spectral",
                                        "three spectral-norm regimes on built-in instances");
    add_common(demo, false);

    CLI::App* oracle_cmd =
        app.add_subcommand("oracle", "evaluate gamma against both oracles at (x, mu, v)");
    add_common(oracle_cmd);
    oracle_cmd->add_option("--x", xcsv, "image-space point");
    oracle_cmd->add_option("--u", ucsv, "subgradient at the point");
    oracle_cmd->add_option("--v", vcsv, "direction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (solve->parsed()) return run_solve_like(file, opts, xcsv, ucsv, false, "");
        if (certify_cmd->parsed()) return run_solve_like(file, opts, xcsv, ucsv, true, "");
        if (probe_cmd->parsed()) return run_solve_like(file, opts, xcsv, ucsv, true, kind);
        if (demo->parsed()) return run_demo_spectral(opts);
        if (oracle_cmd->parsed()) return run_oracle(file, opts, xcsv, ucsv, vcsv);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
