#include <catch2/catch_amalgamated.hpp>

#include "stabilis/instances.hpp"
#include "stabilis/probe.hpp"

using namespace stabilis;

namespace {

struct Certified {
    Instance inst;
    Certificate cert;
};

Certified certified(Instance inst) {
    Certificate cert = certify(inst.spec, inst.xbar, inst.ubar);
    return {std::move(inst), std::move(cert)};
}

}  // namespace

TEST_CASE("strong regularity probe", "[probe]") {
    SECTION("certified instance is consistent and single valued") {
        Certified c = certified(orthant_strict(3));
        ProbeConfig cfg;
        cfg.n_samples = 40;
        ProbeResult r = probe_strong_regularity(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg,
                                                c.cert);
        REQUIRE(r.verdict == ProbeVerdict::consistent);
        REQUIRE(r.uniqueness_violations == 0);
        REQUIRE(r.modulus_estimate < 1e3);
        REQUIRE(r.modulus_estimate > 0.0);
    }
    SECTION("multiplier segment produces uniqueness violations in u") {
        Certified c = certified(rank_deficient());
        ProbeConfig cfg;
        cfg.n_samples = 60;
        cfg.n_starts = 12;
        ProbeResult r = probe_strong_regularity(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg,
                                                c.cert);
        REQUIRE(r.verdict == ProbeVerdict::violated);
        REQUIRE(r.uniqueness_violations > 0);
    }
    SECTION("zero radius is inconclusive") {
        Certified c = certified(orthant_strict(2));
        ProbeConfig cfg;
        cfg.radius = 0.0;
        ProbeResult r = probe_strong_regularity(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg,
                                                c.cert);
        REQUIRE(r.verdict == ProbeVerdict::inconclusive);
        REQUIRE(r.modulus_estimate == 0.0);
    }
}

TEST_CASE("aubin probe", "[probe]") {
    SECTION("certified instance: bounded ratios across levels") {
        Certified c = certified(orthant_degenerate(2));
        ProbeConfig cfg;
        cfg.n_samples = 50;
        ProbeResult r = probe_aubin(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg, c.cert);
        REQUIRE(r.verdict == ProbeVerdict::consistent);
    }
    SECTION("saddle loses solution branches") {
        Certified c = certified(saddle_scalar());
        ProbeConfig cfg;
        cfg.n_samples = 50;
        ProbeResult r = probe_aubin(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg, c.cert);
        REQUIRE(r.verdict == ProbeVerdict::violated);
    }
    SECTION("minimal sample count reports inconclusive") {
        Certified c = certified(orthant_strict(2));
        ProbeConfig cfg;
        cfg.n_samples = 2;
        cfg.shrink_levels = 5;
        ProbeResult r = probe_aubin(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg, c.cert);
        // two samples spread over five levels cannot establish ratios
        REQUIRE((r.verdict == ProbeVerdict::inconclusive ||
                 r.verdict == ProbeVerdict::consistent));
    }
}

TEST_CASE("isolated calmness probe", "[probe]") {
    SECTION("certified instance: bounded modulus, consistent") {
        Certified c = certified(orthant_strict(3));
        ProbeConfig cfg;
        cfg.n_samples = 60;
        ProbeResult r = probe_isolated_calmness(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg,
                                                c.cert);
        REQUIRE(r.verdict == ProbeVerdict::consistent);
        for (size_t l = 2; l < r.level_moduli.size(); ++l)
            if (r.level_moduli[l] > 0 && r.level_moduli[l - 1] > 0)
                REQUIRE(r.level_moduli[l] <= 2.0 * r.level_moduli[l - 1]);
    }
    SECTION("single direction is flagged low-coverage") {
        Certified c = certified(orthant_strict(2));
        ProbeConfig cfg;
        cfg.n_samples = 5;
        cfg.shrink_levels = 5;
        ProbeResult r = probe_isolated_calmness(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg,
                                                c.cert);
        REQUIRE(r.diagnostics.find("low-coverage") != std::string::npos);
    }
}

TEST_CASE("tilt probe", "[probe]") {
    SECTION("strictly convex orthant: single valued, modulus near one") {
        Certified c = certified(orthant_degenerate(3));
        ProbeConfig cfg;
        cfg.n_samples = 60;
        ProbeResult r = probe_tilt(c.inst.spec, c.inst.xbar, cfg, c.cert);
        REQUIRE(r.verdict == ProbeVerdict::consistent);
        REQUIRE(r.uniqueness_violations == 0);
        // solution map of the tilted problem is 1-Lipschitz here; compare to
        // the inverse SSOSC margin within a factor of two
        REQUIRE(r.modulus_estimate <= 2.0 * (1.0 / c.cert.ssosc.margin));
    }
    SECTION("saddle: multistart disagreement or branch loss") {
        Certified c = certified(saddle_scalar());
        ProbeConfig cfg;
        cfg.n_samples = 60;
        cfg.n_starts = 12;
        ProbeResult r = probe_tilt(c.inst.spec, c.inst.xbar, cfg, c.cert);
        REQUIRE(r.verdict == ProbeVerdict::violated);
    }
}

TEST_CASE("probe determinism", "[probe]") {
    Certified c = certified(orthant_strict(2));
    ProbeConfig cfg;
    cfg.n_samples = 20;
    cfg.seed = 42;
    for (ProbeKind kind : {ProbeKind::aubin, ProbeKind::isolated_calmness,
                           ProbeKind::strong_regularity, ProbeKind::tilt}) {
        ProbeResult a = run_probe(kind, c.inst.spec, c.inst.xbar, c.inst.ubar, cfg, c.cert);
        ProbeResult b = run_probe(kind, c.inst.spec, c.inst.xbar, c.inst.ubar, cfg, c.cert);
        REQUIRE(a.modulus_estimate == b.modulus_estimate);
        REQUIRE(a.uniqueness_violations == b.uniqueness_violations);
        REQUIRE(a.samples_used == b.samples_used);
        REQUIRE(to_string(a.verdict) == to_string(b.verdict));
        REQUIRE(a.diagnostics == b.diagnostics);
    }
}

TEST_CASE("modulus stabilizes across shrink levels on certified fixtures", "[probe]") {
    Certified c = certified(orthant_strict(3));
    ProbeConfig cfg;
    cfg.n_samples = 80;
    ProbeResult r = probe_isolated_calmness(c.inst.spec, c.inst.xbar, c.inst.ubar, cfg, c.cert);
    for (size_t l = 2; l + 1 < r.level_moduli.size(); ++l) {
        if (r.level_moduli[l] > 0 && r.level_moduli[l + 1] > 0) {
            REQUIRE(r.level_moduli[l + 1] <= 2.0 * r.level_moduli[l] + 1e-12);
        }
    }
}
