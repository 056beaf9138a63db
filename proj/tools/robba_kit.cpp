// Command-line surface over the series rings and solvers. Reads JSON payloads
// from a flag value, a file, or stdin, writes a single JSON document to
// stdout, and keeps human-readable progress on stderr. Exit codes: 0 success,
// 1 selftest failure, 2 parse error, 3 precondition or verification failure,
// 4 contraction hypothesis rejected.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "robba/frobenius_solve.hpp"
#include "robba/io.hpp"
#include "robba/quillen_suslin.hpp"

namespace {

using namespace robba;

struct Flags {
    long prime = 5;
    unsigned ram = 1;
    unsigned power = 1;
    unsigned precision = 12;
    unsigned cap = 64;
    unsigned jmax = 16;
    unsigned kmax = 8;
    bool kmax_given = false;
    unsigned long seed = 7;
    std::vector<std::string> radius;
    std::string payload;
    std::string nval;
    long var = -1;
    unsigned jshift = 0;
    bool tj_invert = false;
    std::string mode = "field";
    bool qs_selftest = false;
};

int exit_rc = 0;

void emit(const Json& j) { std::cout << j.dump() << "\n"; }

Rat parse_rat(const std::string& s) {
    Rat r;
    if (s.empty() || mpq_set_str(r.get_mpq_t(), s.c_str(), 10) != 0)
        fail(errc::parse_error, "bad rational literal: " + s);
    if (r.get_den() == 0) fail(errc::parse_error, "rational with zero denominator");
    r.canonicalize();
    return r;
}

unsigned guard_digits() {
    const char* s = std::getenv("ROBBA_KIT_GUARD_DIGITS");
    if (!s || !*s) return 2;
    char* end = nullptr;
    unsigned long g = std::strtoul(s, &end, 10);
    if (!end || *end != '\0' || g > 64)
        fail(errc::parse_error, "ROBBA_KIT_GUARD_DIGITS must be a small nonnegative integer");
    return unsigned(g);
}

ConfigPtr build_config(const Flags& fl) {
    Int p(fl.prime);
    if (fl.prime < 2 || mpz_probab_prime_p(p.get_mpz_t(), 40) == 0)
        fail(errc::bad_calibration, "--prime must be a prime number");
    if (fl.precision < 1) fail(errc::bad_calibration, "--precision must be at least 1");
    if (fl.ram < 1 || fl.power < 1)
        fail(errc::bad_calibration, "--ram and --power must be at least 1");
    return make_config(fl.prime, fl.power, fl.ram, fl.precision, guard_digits());
}

std::vector<Rat> parse_radii(const Flags& fl) {
    std::vector<Rat> out;
    for (const auto& s : fl.radius) out.push_back(parse_rat(s));
    return out;
}

std::string slurp(std::istream& in) {
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Json read_payload_json(const std::string& arg) {
    std::string text;
    if (arg.empty() || arg == "-") {
        text = slurp(std::cin);
    } else {
        size_t k = arg.find_first_not_of(" \t\r\n");
        if (k != std::string::npos && (arg[k] == '{' || arg[k] == '[')) {
            text = arg;
        } else {
            std::string path = (!arg.empty() && arg[0] == '@') ? arg.substr(1) : arg;
            std::ifstream f(path);
            if (!f) fail(errc::parse_error, "cannot open input file: " + path);
            text = slurp(f);
        }
    }
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(errc::parse_error, e.what());
    }
}

// Series payloads are either a bare series object or {"x": series,
// "sigma": series} when a nonstandard substitution matters.
struct SeriesInput {
    LaurentSeries x;
    SigmaAction act;
    std::optional<Json> sigma_echo;
};

SigmaAction sigma_from(const ConfigPtr& cfg, const Json& j, const LaurentDefaults& d) {
    return SigmaAction::from_image(laurent_from_json(cfg, j, d));
}

SeriesInput read_series_payload(const ConfigPtr& cfg, const Json& j, const LaurentDefaults& d) {
    if (j.is_object() && j.contains("x")) {
        SeriesInput in{laurent_from_json(cfg, j.at("x"), d), SigmaAction::standard(cfg), {}};
        if (j.contains("sigma") && !j.at("sigma").is_null()) {
            in.act = sigma_from(cfg, j.at("sigma"), d);
            in.sigma_echo = laurent_json(in.act.image(in.x.prec()));
        }
        return in;
    }
    return {laurent_from_json(cfg, j, d), SigmaAction::standard(cfg), {}};
}

UnimodularTuple read_tuple(const ConfigPtr& cfg, const Json& j, const TateDefaults& d) {
    if (j.is_array()) return {tate_vector_from_json(cfg, j, d), {}};
    UnimodularTuple t;
    t.entries = tate_vector_from_json(cfg, require_field(j, "f"), d);
    if (j.contains("witness") && !j.at("witness").is_null())
        t.witness = tate_vector_from_json(cfg, j.at("witness"), d);
    return t;
}

size_t resolve_var(const TateSeries& f, long var) {
    if (f.nvars() == 0) fail(errc::bad_calibration, "operation needs at least one variable");
    long v = var < 0 ? long(f.nvars()) - 1 : var;
    if (v >= long(f.nvars())) fail(errc::bad_calibration, "--var out of range");
    return size_t(v);
}

// ---- eval ----

void cmd_eval_wr(const Flags& fl) {
    auto cfg = build_config(fl);
    auto radii = parse_radii(fl);
    LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
    auto in = read_series_payload(cfg, read_payload_json(fl.payload), d);
    Rat r = radii.empty() ? in.x.r_param() : radii[0];
    emit(Json{{"w_r", rat_json(wr(in.x, r))}});
}

void cmd_eval_vn(const Flags& fl) {
    auto cfg = build_config(fl);
    auto radii = parse_radii(fl);
    LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
    auto in = read_series_payload(cfg, read_payload_json(fl.payload), d);
    if (fl.nval.empty()) fail(errc::parse_error, "vn needs --n a/b");
    auto v = vn_naive(in.x, parse_rat(fl.nval));
    emit(Json{{"v_n", v ? Json(*v) : Json(nullptr)}});
}

void cmd_eval_derive(const Flags& fl) {
    auto cfg = build_config(fl);
    auto radii = parse_radii(fl);
    LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
    auto in = read_series_payload(cfg, read_payload_json(fl.payload), d);
    emit(laurent_json(derive(in.x)));
}

void cmd_eval_sigma(const Flags& fl) {
    auto cfg = build_config(fl);
    auto radii = parse_radii(fl);
    LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
    auto in = read_series_payload(cfg, read_payload_json(fl.payload), d);
    emit(laurent_json(sigma_apply(in.x, in.act)));
}

void cmd_eval_gauss(const Flags& fl) {
    auto cfg = build_config(fl);
    TateDefaults d{parse_radii(fl), fl.precision, fl.cap};
    TateSeries f = tate_from_json(cfg, read_payload_json(fl.payload), d);
    emit(Json{{"v", rat_json(gauss_valuation(f))}});
}

void cmd_eval_leading(const Flags& fl) {
    auto cfg = build_config(fl);
    TateDefaults d{parse_radii(fl), fl.precision, fl.cap};
    TateSeries f = tate_from_json(cfg, read_payload_json(fl.payload), d);
    size_t var = resolve_var(f, fl.var);
    auto [j, slice] = leading_term(f, var);
    emit(Json{{"j", j}, {"slice", tate_json(slice)}});
}

// ---- slopes ----

void cmd_slopes(const Flags& fl) {
    auto cfg = build_config(fl);
    auto radii = parse_radii(fl);
    LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
    Json j = read_payload_json(fl.payload);
    SigmaAction act = SigmaAction::standard(cfg);
    const Json* jm = &j;
    if (j.is_object()) {
        jm = &require_field(j, "frobenius");
        if (j.contains("sigma") && !j.at("sigma").is_null()) act = sigma_from(cfg, j.at("sigma"), d);
    }
    SigmaModule m = make_sigma_module(lmatrix_from_json(cfg, *jm, d), act);
    emit(newton_json(newton_slopes(m, fl.kmax)));
}

// ---- solve ----

void cmd_solve_twisted(const Flags& fl) {
    auto cfg = build_config(fl);
    auto radii = parse_radii(fl);
    LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
    Json j = read_payload_json(fl.payload);
    if (!j.is_object()) fail(errc::parse_error, "twisted input must be {\"lambda\", \"x\", ...}");
    LaurentSeries x = laurent_from_json(cfg, require_field(j, "x"), d);
    const Json& jl = require_field(j, "lambda");
    if (!jl.is_string()) fail(errc::parse_error, "lambda must be a coefficient string");
    OElem lam = OElem::from_string(cfg, jl.get<std::string>(), x.prec());
    SigmaAction act = SigmaAction::standard(cfg);
    std::optional<Json> sigma_echo;
    if (j.contains("sigma") && !j.at("sigma").is_null()) {
        act = sigma_from(cfg, j.at("sigma"), d);
        sigma_echo = laurent_json(act.image(x.prec()));
    }
    long nt = int_field(j, "target", x.eff_prec());

    LaurentSeries y = solve_twisted(lam, x, act, nt);
    LaurentSeries resid = sigma_apply(y, act).scaled(lam) - y - x;

    Json out{{"lambda", lam.str()},
             {"x", laurent_json(x)},
             {"y", laurent_json(y)},
             {"n_target", nt},
             {"residual_val", resid.min_valuation().v},
             {"r_prime", rat_json(y.r_param())}};
    try {
        out["w_r_prime"] = rat_json(wr(y, y.r_param()));
    } catch (const error&) {
        out["w_r_prime"] = nullptr;
    }
    if (sigma_echo) out["sigma"] = *sigma_echo;
    emit(out);
}

void cmd_solve_split(const Flags& fl) {
    auto cfg = build_config(fl);
    auto radii = parse_radii(fl);
    LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
    Json j = read_payload_json(fl.payload);
    if (!j.is_object()) fail(errc::parse_error, "split input must be {\"A\", \"B\", \"D\", ...}");
    LMatrix a = lmatrix_from_json(cfg, require_field(j, "A"), d);
    LMatrix b = lmatrix_from_json(cfg, require_field(j, "B"), d);
    LMatrix dd = lmatrix_from_json(cfg, require_field(j, "D"), d);
    SigmaAction act = SigmaAction::standard(cfg);
    std::optional<Json> sigma_echo;
    if (j.contains("sigma") && !j.at("sigma").is_null()) {
        act = sigma_from(cfg, j.at("sigma"), d);
        sigma_echo = laurent_json(act.image(fl.precision));
    }
    long nt = int_field(j, "N", long(fl.precision));

    SplitCertificate cert = split_extension(a, b, dd, act, nt, 16,
                                            fl.kmax_given ? fl.kmax : 0);
    Json out{{"X", lmatrix_json(cert.x)},
             {"residual_val", cert.residual_val},
             {"iterations", cert.iterations},
             {"conjugation_ok", cert.conjugation_ok},
             {"max_denom", cert.max_denom},
             {"A", lmatrix_json(a)},
             {"B", lmatrix_json(b)},
             {"D", lmatrix_json(dd)},
             {"N", nt}};
    if (sigma_echo) out["sigma"] = *sigma_echo;
    emit(out);
}

// ---- qs ----

void cmd_qs_prepare(const Flags& fl) {
    auto cfg = build_config(fl);
    TateDefaults d{parse_radii(fl), fl.precision, fl.cap};
    TateSeries f = tate_from_json(cfg, read_payload_json(fl.payload), d);
    size_t var = resolve_var(f, fl.var);
    PrepResult pr = weierstrass_prepare(f, var);
    emit(Json{{"unit", tate_json(pr.unit)},
              {"unit_inv", tate_json(pr.unit_inv)},
              {"P", tate_json(pr.P)},
              {"residual_pival", pr.residual_pival},
              {"iterations", pr.iterations}});
}

void cmd_qs_tj(const Flags& fl) {
    auto cfg = build_config(fl);
    TateDefaults d{parse_radii(fl), fl.precision, fl.cap};
    TateSeries f = tate_from_json(cfg, read_payload_json(fl.payload), d);
    TjMode mode;
    if (fl.mode == "field")
        mode = TjMode::field;
    else if (fl.mode == "ring")
        mode = TjMode::ring;
    else
        fail(errc::parse_error, "--mode must be field or ring");
    TateSeries out = fl.tj_invert ? tj_inverse(f, fl.jshift, mode)
                                  : tj_transform(f, fl.jshift, mode);
    emit(tate_json(out));
}

void cmd_qs_reduce(const Flags& fl) {
    auto cfg = build_config(fl);
    TateDefaults d{parse_radii(fl), fl.precision, fl.cap};
    UnimodularTuple t = read_tuple(cfg, read_payload_json(fl.payload), d);
    ReductionCertificate cert = unimodular_reduce(t, fl.jmax);
    emit(qs_certificate_json(t, cert));
}

void cmd_qs_complete(const Flags& fl) {
    auto cfg = build_config(fl);
    TateDefaults d{parse_radii(fl), fl.precision, fl.cap};
    UnimodularTuple t = read_tuple(cfg, read_payload_json(fl.payload), d);
    Matrix<TateSeries> m = complete_to_square(t, fl.jmax);
    emit(Json{{"completion", tate_matrix_json(m)}, {"verified", true}});
}

void cmd_qs_kernel(const Flags& fl) {
    auto cfg = build_config(fl);
    TateDefaults d{parse_radii(fl), fl.precision, fl.cap};
    UnimodularTuple t = read_tuple(cfg, read_payload_json(fl.payload), d);
    auto basis = kernel_free_basis(t, fl.jmax);
    Json jb = Json::array();
    for (const auto& v : basis) jb.push_back(tate_vector_json(v));
    emit(Json{{"basis", std::move(jb)}});
}

// ---- verify ----

void cmd_verify(const Flags& fl) {
    auto cfg = build_config(fl);
    Json j = read_payload_json(fl.payload);
    if (!j.is_object()) fail(errc::parse_error, "verify expects a certificate object");
    bool ok = false;
    std::string kind;

    if (j.contains("M") && j.contains("f")) {
        kind = "qs";
        TateDefaults d{parse_radii(fl), fl.precision, fl.cap};
        auto f = tate_vector_from_json(cfg, j.at("f"), d);
        std::vector<TateSeries> g;
        if (j.contains("witness") && !j.at("witness").is_null())
            g = tate_vector_from_json(cfg, j.at("witness"), d);
        auto m = tate_matrix_from_json(cfg, require_field(j, "M"), d);
        auto mi = tate_matrix_from_json(cfg, require_field(j, "M_inv"), d);
        try {
            long floor = qs_detail::working_floor(f, g.empty() ? f : g);
            qs_detail::verify_certificate(m, mi, f, qs_detail::unit_vector_like(f), floor);
            ok = g.empty() || verify_unimodular(f, g);
        } catch (const error&) {
            ok = false;
        } catch (const std::logic_error&) {
            ok = false;
        }
    } else if (j.contains("X") && j.contains("A")) {
        kind = "split";
        auto radii = parse_radii(fl);
        LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
        LMatrix a = lmatrix_from_json(cfg, j.at("A"), d);
        LMatrix b = lmatrix_from_json(cfg, require_field(j, "B"), d);
        LMatrix dd = lmatrix_from_json(cfg, require_field(j, "D"), d);
        LMatrix x = lmatrix_from_json(cfg, j.at("X"), d);
        SigmaAction act = j.contains("sigma") && !j.at("sigma").is_null()
                              ? sigma_from(cfg, j.at("sigma"), d)
                              : SigmaAction::standard(cfg);
        long nt = int_field(j, "N", long(fl.precision));
        // -X + A X^sigma D^{-1} = B, cleared of the inverse:
        // A X^sigma must equal (X + B) D.
        LMatrix diff = a * sigma_matrix(x, act) - (x + b) * dd;
        ok = matrix_min_pival(diff).v >= nt - long(cfg->guard);
    } else if (j.contains("y") && j.contains("lambda")) {
        kind = "twisted";
        auto radii = parse_radii(fl);
        LaurentDefaults d{RingTag::gamma_con, radii.empty() ? Rat(1) : radii[0], fl.precision};
        LaurentSeries x = laurent_from_json(cfg, require_field(j, "x"), d);
        LaurentSeries y = laurent_from_json(cfg, j.at("y"), d);
        OElem lam = OElem::from_string(cfg, j.at("lambda").get<std::string>(), x.prec());
        SigmaAction act = j.contains("sigma") && !j.at("sigma").is_null()
                              ? sigma_from(cfg, j.at("sigma"), d)
                              : SigmaAction::standard(cfg);
        long nt = int_field(j, "n_target", x.eff_prec());
        LaurentSeries resid = sigma_apply(y, act).scaled(lam) - y - x;
        ok = resid.min_valuation().v >= nt;
    } else {
        fail(errc::parse_error, "certificate kind not recognized (expected qs, split, or twisted fields)");
    }

    emit(Json{{"kind", kind}, {"verified", ok}});
    if (!ok) exit_rc = 3;
}

// ---- selftest ----

using Rng = std::mt19937_64;

long pick(Rng& g, long lo, long hi) {
    return lo + long(g() % (unsigned long)(hi - lo + 1));
}

long pow_l(long b, unsigned k) {
    long r = 1;
    while (k--) r *= b;
    return r;
}

OElem rand_coeff(Rng& g, const ConfigPtr& cfg, unsigned n, unsigned vmax) {
    long pm1 = std::min<long>(9, cfg->p.get_si() - 1);
    long u = 1 + pick(g, 0, pm1 - 1 < 0 ? 0 : pm1 - 1);
    unsigned v = unsigned(pick(g, 0, long(vmax)));
    return OElem::from_int(cfg, u * pow_l(cfg->p.get_si(), v), n);
}

LaurentSeries rand_series(Rng& g, const ConfigPtr& cfg, const Rat& r, unsigned n, long wlo,
                          long whi, unsigned vmax) {
    std::vector<std::pair<long, OElem>> ts;
    int k = int(pick(g, 1, 4));
    for (int i = 0; i < k; ++i) ts.emplace_back(pick(g, wlo, whi), rand_coeff(g, cfg, n, vmax));
    return LaurentSeries::from_terms(cfg, RingTag::gamma_con, r, n, ts);
}

struct SuiteResult {
    std::string name;
    unsigned cases = 0;
    unsigned passed = 0;
};

SuiteResult suite_wr_laws(Rng& g, const ConfigPtr& cfg, unsigned n) {
    SuiteResult s{"wr_laws", 0, 0};
    const Rat rs[3] = {make_rat(1, 4), make_rat(1, 2), Rat(1)};
    for (int i = 0; i < 50; ++i) {
        const Rat& r = rs[i % 3];
        LaurentSeries x = rand_series(g, cfg, r, n, -20, 20, 2);
        LaurentSeries y = rand_series(g, cfg, r, n, -20, 20, 2);
        ++s.cases;
        bool ok = true;
        if (!x.is_zero_at_prec() && !y.is_zero_at_prec()) {
            Rat wx = wr(x, r), wy = wr(y, r);
            ok = wr(x * y, r) == wx + wy;
            LaurentSeries z = x + y;
            if (ok && !z.is_zero_at_prec()) ok = wr(z, r) >= std::min(wx, wy);
        }
        if (ok) ++s.passed;
    }
    return s;
}

SuiteResult suite_twisted(Rng& g, const ConfigPtr& cfg, unsigned n) {
    SuiteResult s{"twisted", 0, 0};
    SigmaAction act = SigmaAction::standard(cfg);
    for (int i = 0; i < 20; ++i) {
        long pm1 = std::min<long>(9, cfg->p.get_si() - 1);
        long u = 1 + pick(g, 0, pm1 > 1 ? pm1 - 1 : 0);
        unsigned vp = unsigned(1 + i % 2);
        OElem lam = OElem::from_int(cfg, u * pow_l(cfg->p.get_si(), vp), n);
        LaurentSeries x = rand_series(g, cfg, Rat(1), n, -5, 5, 1);
        if (x.is_zero_at_prec()) continue;
        ++s.cases;
        LaurentSeries y = solve_twisted(lam, x, act, long(n));
        LaurentSeries resid = sigma_apply(y, act).scaled(lam) - y - x;
        if (resid.min_valuation().v >= long(n)) ++s.passed;
    }
    return s;
}

SuiteResult suite_split(Rng& g, const ConfigPtr& cfg, unsigned n) {
    SuiteResult s{"split", 0, 0};
    SigmaAction act = SigmaAction::standard(cfg);
    long p = cfg->p.get_si();
    LaurentSeries zero(cfg, RingTag::gamma_con, Rat(1), n);
    auto cst = [&](long v) {
        return LaurentSeries::constant(cfg, RingTag::gamma_con, Rat(1), n,
                                       OElem::from_int(cfg, v, n));
    };
    for (int i = 0; i < 10; ++i) {
        ++s.cases;
        LMatrix a(2, 2, zero), dd(2, 2, zero), b(2, 2, zero);
        a.at(0, 0) = cst(p * (1 + pick(g, 0, 2)));
        a.at(1, 1) = cst(p * (1 + pick(g, 0, 2)));
        a.at(1, 0) = cst(p * pick(g, 0, 2));
        dd.at(0, 0) = cst(1 + pick(g, 0, std::min(p - 2, 2L)));
        dd.at(1, 1) = cst(1 + pick(g, 0, std::min(p - 2, 2L)));
        dd.at(0, 1) = rand_series(g, cfg, Rat(1), n, -2, 2, 1);
        for (size_t r = 0; r < 2; ++r)
            for (size_t c = 0; c < 2; ++c) b.at(r, c) = rand_series(g, cfg, Rat(1), n, -3, 3, 0);
        SplitCertificate cert = split_extension(a, b, dd, act, long(n));
        if (cert.residual_val >= long(n) - 2 && cert.conjugation_ok) ++s.passed;
    }
    return s;
}

SuiteResult suite_newton(const ConfigPtr& cfg, unsigned n) {
    SuiteResult s{"newton", 3, 0};
    SigmaAction act = SigmaAction::standard(cfg);
    LaurentSeries zero(cfg, RingTag::gamma_con, Rat(1), n);
    auto cst = [&](long v) {
        return LaurentSeries::constant(cfg, RingTag::gamma_con, Rat(1), n,
                                       OElem::from_int(cfg, v, n));
    };
    long p = cfg->p.get_si();
    auto slopes_of = [&](const LMatrix& m) {
        auto est = newton_slopes(make_sigma_module(m, act), 8);
        auto v = est.slopes();
        std::sort(v.begin(), v.end());
        return v;
    };

    LMatrix m1(2, 2, zero);
    m1.at(0, 0) = cst(1);
    m1.at(1, 1) = cst(p);
    if (slopes_of(m1) == std::vector<Rat>{Rat(0), Rat(1)}) ++s.passed;

    LMatrix m2(2, 2, zero);
    m2.at(0, 1) = cst(p);
    m2.at(1, 0) = cst(1);
    if (slopes_of(m2) == std::vector<Rat>{make_rat(1, 2), make_rat(1, 2)}) ++s.passed;

    LMatrix m3(2, 2, zero);
    m3.at(0, 0) = cst(p * p);
    m3.at(1, 1) = cst(p);
    if (slopes_of(m3) == std::vector<Rat>{Rat(1), Rat(2)}) ++s.passed;
    return s;
}

SuiteResult suite_weierstrass(Rng& g, const ConfigPtr& cfg, unsigned n, unsigned cap) {
    SuiteResult s{"weierstrass", 0, 0};
    const Rat es[3] = {Rat(0), make_rat(1, 2), make_rat(-1, 2)};
    long p = cfg->p.get_si();
    for (int i = 0; i < 30; ++i) {
        const Rat& e = es[i % 3];
        PolyRadius rad{{e}};
        long deg = pick(g, 1, 6);
        std::vector<std::pair<TateSeries::Exp, KElem>> ts;
        long pm1 = std::min<long>(9, p - 1);
        for (long k = 0; k <= deg; ++k) {
            if (k < deg && pick(g, 0, 2) == 0) continue;
            long u = 1 + pick(g, 0, pm1 > 1 ? pm1 - 1 : 0);
            // Keep the top term Gauss-dominant: v_p(b_k) >= (deg - k) * e.
            Rat need = Rat(deg - k) * e;
            long v = k == deg ? 0 : std::max(0L, rat_ceil(need)) + pick(g, 0, 1);
            ts.emplace_back(TateSeries::Exp{unsigned(k)},
                            KElem(OElem::from_int(cfg, u * pow_l(p, unsigned(v)), n)));
        }
        TateSeries f = TateSeries::from_terms(cfg, rad, n, cap, ts);
        ++s.cases;
        try {
            PrepResult pr = weierstrass_prepare(f, 0);
            bool ok = pr.P.deg_in(0) == deg && pr.residual_pival >= long(n) - 2;
            TateSeries diff = f - pr.unit * pr.P;
            ok = ok && qs_detail::zero_mod(diff, long(n) - 2);
            if (ok) ++s.passed;
        } catch (const error&) {
        }
    }
    return s;
}

TateSeries rand_poly(Rng& g, const ConfigPtr& cfg, const PolyRadius& rad, unsigned n,
                     unsigned cap) {
    std::vector<std::pair<TateSeries::Exp, KElem>> ts;
    int k = int(pick(g, 1, 3));
    for (int i = 0; i < k; ++i) {
        TateSeries::Exp I(rad.size(), 0);
        for (auto& ev : I) ev = unsigned(pick(g, 0, 2));
        long c = pick(g, -4, 4);
        if (c == 0) c = cfg->p.get_si();
        ts.emplace_back(std::move(I), KElem(OElem::from_int(cfg, c, n)));
    }
    return TateSeries::from_terms(cfg, rad, n, cap, ts);
}

SuiteResult suite_qs(Rng& g, const ConfigPtr& cfg, unsigned n, unsigned jmax) {
    SuiteResult s{"qs_roundtrip", 0, 0};
    const unsigned cap = 128;
    for (unsigned nvars = 1; nvars <= 2; ++nvars) {
        PolyRadius rad{std::vector<Rat>(nvars, Rat(0))};
        for (int i = 0; i < 10; ++i) {
            const size_t m = 3;
            TateSeries zero(cfg, rad, n, cap);
            TateSeries one = TateSeries::one(cfg, rad, n, cap);
            std::vector<TateSeries> f(m, zero), w(m, zero);
            f[0] = one;
            w[0] = one;
            int ops = int(pick(g, 2, 3));
            for (int k = 0; k < ops; ++k) {
                size_t src = size_t(pick(g, 0, long(m) - 1));
                size_t dst = size_t(pick(g, 0, long(m) - 2));
                if (dst >= src) ++dst;
                TateSeries h = rand_poly(g, cfg, rad, n, cap);
                f[dst] = f[dst] + h * f[src];
                w[src] = w[src] - h * w[dst];
            }
            UnimodularTuple t{f, w};
            ++s.cases;
            try {
                ReductionCertificate cert = unimodular_reduce(t, jmax);
                long floor = qs_detail::working_floor(f, w);
                qs_detail::verify_certificate(cert.m, cert.m_inv, f,
                                              qs_detail::unit_vector_like(f), floor);
                if (cert.verified) ++s.passed;
            } catch (const error&) {
            } catch (const std::logic_error&) {
            }
        }
    }
    return s;
}

void run_selftest(const Flags& fl, bool qs_only) {
    auto cfg = build_config(fl);
    unsigned n = fl.precision;
    Json suites = Json::array();
    bool all = true;
    auto log = [&](const SuiteResult& r) {
        std::cerr << "selftest " << r.name << ": " << r.passed << "/" << r.cases << "\n";
        suites.push_back(Json{{"name", r.name}, {"cases", r.cases}, {"passed", r.passed}});
        if (r.passed != r.cases) all = false;
    };

    Rng root(fl.seed);
    if (!qs_only) {
        Rng g1(root()), g2(root()), g3(root());
        log(suite_wr_laws(g1, cfg, n));
        log(suite_twisted(g2, cfg, n));
        log(suite_split(g3, cfg, n));
        log(suite_newton(cfg, n));
        Rng g4(root());
        log(suite_weierstrass(g4, cfg, n, fl.cap));
    }
    Rng g5(root());
    log(suite_qs(g5, cfg, n, fl.jmax));

    emit(Json{{"seed", fl.seed}, {"suites", std::move(suites)}, {"all_pass", all}});
    if (!all) exit_rc = 1;
}

}  // namespace

int main(int argc, char** argv) {
    Flags fl;
    CLI::App app{"exact truncated p-adic Laurent and Tate series toolkit"};
    app.require_subcommand(1);

    app.add_option("--prime", fl.prime, "residue characteristic p");
    app.add_option("--ram", fl.ram, "ramification index e (pi^e = p)");
    app.add_option("--power", fl.power, "Frobenius power f (q = p^f)");
    app.add_option("--precision", fl.precision, "working precision N in pi digits");
    app.add_option("--radius,--r", fl.radius, "log-radius a/b (repeatable)");
    app.add_option("--cap", fl.cap, "per-variable degree cap for Tate series");
    app.add_option("--seed", fl.seed, "seed for randomized suites");
    app.add_option("--jmax", fl.jmax, "largest shear exponent tried");
    auto* kopt = app.add_option("--kmax", fl.kmax, "iteration depth (slopes, split probes)");

    auto leaf = [&](CLI::App* parent, const char* name, const char* desc) {
        CLI::App* s = parent->add_subcommand(name, desc);
        s->fallthrough();
        return s;
    };
    auto payload_opt = [&](CLI::App* s) {
        s->add_option("--series,--input", fl.payload, "JSON text, a file path, or - for stdin");
    };

    CLI::App* eval = leaf(&app, "eval", "pointwise series operations");
    eval->require_subcommand(1);
    struct EvalDef {
        const char* name;
        const char* desc;
        void (*fn)(const Flags&);
    };
    const EvalDef evals[] = {
        {"wr", "partial valuation w_r", cmd_eval_wr},
        {"vn", "naive partial valuation v_n (needs --n)", cmd_eval_vn},
        {"derive", "u d/du", cmd_eval_derive},
        {"sigma", "apply the Frobenius substitution", cmd_eval_sigma},
        {"gauss", "Gauss valuation of a Tate series", cmd_eval_gauss},
        {"leading", "leading T_j slice in one variable", cmd_eval_leading},
    };
    for (const auto& e : evals) {
        CLI::App* s = leaf(eval, e.name, e.desc);
        payload_opt(s);
        if (std::string(e.name) == "vn") s->add_option("--n", fl.nval, "slope a/b");
        if (std::string(e.name) == "leading")
            s->add_option("--var", fl.var, "variable index (default: last)");
        auto fn = e.fn;
        s->callback([&fl, fn] { fn(fl); });
    }

    CLI::App* slopes = leaf(&app, "slopes", "Newton slope estimates of a sigma-module");
    payload_opt(slopes);
    slopes->callback([&fl] { cmd_slopes(fl); });

    CLI::App* solve = leaf(&app, "solve", "twisted and splitting solvers");
    solve->require_subcommand(1);
    CLI::App* twisted = leaf(solve, "twisted", "solve lambda y^sigma - y = x");
    payload_opt(twisted);
    twisted->callback([&fl] { cmd_solve_twisted(fl); });
    CLI::App* split = leaf(solve, "split", "solve -X + A X^sigma D^{-1} = B");
    payload_opt(split);
    split->callback([&fl, kopt] {
        fl.kmax_given = kopt->count() > 0;
        cmd_solve_split(fl);
    });

    CLI::App* qs = leaf(&app, "qs", "Weierstrass preparation and unimodular reduction");
    qs->require_subcommand(0, 1);
    qs->add_flag("--selftest", fl.qs_selftest, "run the reduction round-trip suite");
    CLI::App* prep = leaf(qs, "prepare", "Weierstrass preparation in one variable");
    payload_opt(prep);
    prep->add_option("--var", fl.var, "variable index (default: last)");
    prep->callback([&fl] { cmd_qs_prepare(fl); });
    CLI::App* tj = leaf(qs, "tj", "T_j substitution");
    payload_opt(tj);
    tj->add_option("--j", fl.jshift, "shear exponent");
    tj->add_flag("--invert", fl.tj_invert, "apply the inverse substitution");
    tj->callback([&fl] { cmd_qs_tj(fl); });
    CLI::App* reduce = leaf(qs, "reduce", "reduce a unimodular tuple to e1");
    payload_opt(reduce);
    reduce->callback([&fl] { cmd_qs_reduce(fl); });
    CLI::App* complete = leaf(qs, "complete", "complete a tuple to a square invertible matrix");
    payload_opt(complete);
    complete->callback([&fl] { cmd_qs_complete(fl); });
    CLI::App* kernel = leaf(qs, "kernel", "free basis of the kernel of pairing against a tuple");
    payload_opt(kernel);
    kernel->callback([&fl] { cmd_qs_kernel(fl); });
    qs->callback([&fl, qs] {
        if (!qs->get_subcommands().empty()) return;
        if (!fl.qs_selftest)
            fail(errc::parse_error, "qs needs a subcommand or --selftest");
        run_selftest(fl, true);
    });

    CLI::App* verify = leaf(&app, "verify", "re-verify an emitted certificate");
    payload_opt(verify);
    verify->callback([&fl] { cmd_verify(fl); });

    CLI::App* selftest = leaf(&app, "selftest", "run all randomized suites at desk scale");
    selftest->callback([&fl] { run_selftest(fl, false); });

    try {
        app.parse(argc, argv);
        return exit_rc;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit(Json{{"error", "ParseError"}, {"detail", e.what()}});
        return 2;
    } catch (const error& e) {
        emit(Json{{"error", errc_name(e.code())}, {"detail", e.what()}});
        if (e.code() == errc::parse_error) return 2;
        if (e.code() == errc::no_contraction) return 4;
        return 3;
    } catch (const nlohmann::json::exception& e) {
        emit(Json{{"error", "ParseError"}, {"detail", e.what()}});
        return 2;
    } catch (const std::logic_error& e) {
        emit(Json{{"error", "Precondition"}, {"detail", e.what()}});
        return 3;
    } catch (const std::exception& e) {
        emit(Json{{"error", "Internal"}, {"detail", e.what()}});
        return 3;
    }
}
