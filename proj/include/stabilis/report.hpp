#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "stabilis/conditions.hpp"
#include "stabilis/probe.hpp"
#include "stabilis/problem.hpp"
#include "stabilis/solver.hpp"

namespace stabilis {

// ---------------------------------------------------------------------------
// Problem files, canonicalization, digests, and the run report.
// ---------------------------------------------------------------------------

using json = nlohmann::json;

inline constexpr const char* kReportSchema = "stabilis-report/1";
inline constexpr const char* kToolVersion = "0.1.0";

namespace detail {

inline Mat parse_matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty())
        throw ValidationError(path + ": expected a nonempty array of rows");
    const int rows = static_cast<int>(j.size());
    if (!j[0].is_array()) throw ValidationError(path + ": rows must be arrays");
    const int cols = static_cast<int>(j[0].size());
    Mat M(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols)
            throw ParseError(path + ": ragged rows");
        for (int k = 0; k < cols; ++k) {
            if (!j[i][k].is_number()) throw ValidationError(path + ": entries must be numbers");
            M(i, k) = j[i][k].get<double>();
        }
    }
    return M;
}

inline Vec parse_vector(const json& j, const std::string& path) {
    if (!j.is_array()) throw ValidationError(path + ": expected an array");
    Vec v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) {
        if (!j[i].is_number()) throw ValidationError(path + ": entries must be numbers");
        v[i] = j[i].get<double>();
    }
    return v;
}

inline json matrix_json(const Mat& M) {
    json rows = json::array();
    for (int i = 0; i < M.rows(); ++i) {
        json r = json::array();
        for (int k = 0; k < M.cols(); ++k) r.push_back(M(i, k));
        rows.push_back(r);
    }
    return rows;
}

inline json vector_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

inline CatalogFunction parse_catalog(const json& jg) {
    if (!jg.contains("kind")) throw ValidationError("g.kind: missing");
    CatalogFunction g;
    g.kind = catalog_kind_from_string(jg.at("kind").get<std::string>());
    g.sigma = jg.value("sigma", 1.0);
    if (!jg.contains("shape")) throw ValidationError("g.shape: missing");
    const json& sh = jg.at("shape");
    if (sh.is_number_integer()) {
        g.p = sh.get<int>();
    } else if (sh.is_array() && sh.size() == 1) {
        g.p = sh[0].get<int>();
    } else if (sh.is_array() && sh.size() == 2) {
        g.p = sh[0].get<int>();
        g.q = sh[1].get<int>();
    } else {
        throw ValidationError("g.shape: expected dim, [p] or [p,q]");
    }
    if (g.matrix_valued() && g.kind != CatalogKind::psd && g.q == 0)
        throw ValidationError("g.shape: matrix norms need [p,q]");
    g.validate();
    return g;
}

inline ProblemSpec parse_problem_json(const json& j) {
    ProblemSpecInput in;
    if (!j.contains("n")) throw ValidationError("n: missing");
    in.n = j.at("n").get<int>();
    if (!j.contains("h") || !j.at("h").is_object()) throw ValidationError("h: missing object");
    in.h.Q = detail::parse_matrix(j.at("h").at("Q"), "h.Q");
    in.h.c = detail::parse_vector(j.at("h").at("c"), "h.c");
    if (!j.contains("F") || !j.at("F").is_object()) throw ValidationError("F: missing object");
    in.F.A = detail::parse_matrix(j.at("F").at("A"), "F.A");
    in.F.f0 = detail::parse_vector(j.at("F").at("f0"), "F.f0");
    if (j.at("F").contains("P")) {
        for (const auto& p : j.at("F").at("P"))
            in.F.P.push_back(detail::parse_matrix(p, "F.P[]"));
    }
    if (!j.contains("g") || !j.at("g").is_object()) throw ValidationError("g: missing object");
    in.g = parse_catalog(j.at("g"));
    return assemble_problem(in);
}

inline json problem_json(const ProblemSpec& spec) {
    json j;
    j["n"] = spec.n;
    j["h"]["Q"] = detail::matrix_json(spec.h.Q);
    j["h"]["c"] = detail::vector_json(spec.h.c);
    j["F"]["A"] = detail::matrix_json(spec.F.A);
    j["F"]["f0"] = detail::vector_json(spec.F.f0);
    if (!spec.F.P.empty()) {
        json ps = json::array();
        for (const auto& P : spec.F.P) ps.push_back(detail::matrix_json(P));
        j["F"]["P"] = ps;
    }
    j["g"]["kind"] = to_string(spec.g.kind);
    if (spec.g.matrix_valued() && spec.g.kind != CatalogKind::psd)
        j["g"]["shape"] = {spec.g.p, spec.g.q};
    else
        j["g"]["shape"] = {spec.g.p};
    j["g"]["sigma"] = spec.g.sigma;
    return j;
}

/// Canonical form: rebuilt from the parsed spec so key order and number
/// formatting never affect the digest.
inline std::string canonical_problem_string(const ProblemSpec& spec) {
    return problem_json(spec).dump();
}

inline std::string problem_digest(const ProblemSpec& spec) {
    std::ostringstream os;
    os << std::hex << detail::fnv1a(canonical_problem_string(spec));
    return os.str();
}

inline ProblemSpec parse_problem_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open problem file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("json parse error: ") + e.what());
    }
    return parse_problem_json(j);
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline json verdict_json(const ConditionVerdict& v) {
    json j;
    j["status"] = to_string(v.status);
    j["margin"] = v.margin;
    j["detail"] = v.detail;
    return j;
}

inline json certificate_json(const Certificate& cert) {
    json j;
    j["rcq"] = verdict_json(cert.rcq);
    j["srcq"] = verdict_json(cert.srcq);
    j["nondegeneracy"] = verdict_json(cert.nondegeneracy);
    j["soqc"] = verdict_json(cert.soqc);
    j["sosc"] = verdict_json(cert.sosc);
    j["ssosc"] = verdict_json(cert.ssosc);
    j["jz_nonsingular"] = verdict_json(cert.jz_nonsingular);
    j["consistency"] = cert.consistency;
    j["multiplier_unique"] = cert.multiplier_unique;
    return j;
}

inline json trace_json(const SolveTrace& trace) {
    json j;
    j["converged"] = trace.converged;
    j["iterations"] = trace.iterates.size() - 1;
    json res = json::array();
    for (const auto& [r, a] : trace.iterates) {
        json e;
        e["residual"] = r;
        e["step"] = a;
        res.push_back(e);
    }
    j["iterates"] = res;
    j["superlinear_ratio"] = trace.superlinear_ratio;
    j["singular_jacobian_seen"] = trace.singular_jacobian_seen;
    return j;
}

inline json probe_json(const ProbeResult& p) {
    json j;
    j["kind"] = to_string(p.kind);
    j["modulus_estimate"] = p.modulus_estimate;
    j["uniqueness_violations"] = p.uniqueness_violations;
    j["samples_used"] = p.samples_used;
    j["verdict"] = to_string(p.verdict);
    j["diagnostics"] = p.diagnostics;
    if (!p.level_moduli.empty()) j["level_moduli"] = p.level_moduli;
    return j;
}

struct RunReport {
    std::string problem_digest;
    std::uint64_t seed = 0;
    double band = 1e-7;
    std::vector<double> tau_schedule = TauSchedule{}.taus;
    std::optional<SolveTrace> solve;
    std::optional<PrimalDualPair> solution;
    std::optional<Certificate> certificate;
    std::vector<ProbeResult> probes;

    json to_json() const {
        json j;
        j["schema"] = kReportSchema;
        j["versions"]["tool"] = kToolVersion;
        j["versions"]["format"] = kReportSchema;
        j["problem_digest"] = problem_digest;
        j["seed"] = seed;
        j["band"] = band;
        j["tau_schedule"] = tau_schedule;
        if (solve) j["solve"] = trace_json(*solve);
        if (solution) {
            j["solution"]["x"] = detail::vector_json(solution->x);
            j["solution"]["u"] = detail::vector_json(solution->u);
            j["solution"]["residual_norm"] = solution->residual_norm;
        }
        if (certificate) j["certificate"] = certificate_json(*certificate);
        if (!probes.empty()) {
            json ps = json::array();
            for (const auto& p : probes) ps.push_back(probe_json(p));
            j["probes"] = ps;
        }
        return j;
    }
};

}  // namespace stabilis
