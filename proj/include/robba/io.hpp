#pragma once

// JSON forms for everything the command line reads and writes. Emission uses
// insertion-ordered objects and fixed key sets, so identical values always
// serialize to identical bytes. Readers take a defaults bundle: a field
// present in the JSON wins, an absent one falls back to the bundle (which the
// CLI fills from its flags).

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

#include "robba/config.hpp"
#include "robba/errors.hpp"
#include "robba/laurent.hpp"
#include "robba/matrix.hpp"
#include "robba/quillen_suslin.hpp"
#include "robba/sigma_module.hpp"
#include "robba/tate.hpp"

namespace robba {

using Json = nlohmann::ordered_json;

inline Json rat_json(const Rat& r) {
    Rat c = r;
    c.canonicalize();
    return Json::array({c.get_num().get_si(), c.get_den().get_si()});
}

// "a/b", "a", a bare integer, or the [num, den] pair form.
inline Rat rat_from_json(const Json& j) {
    if (j.is_number_integer()) return Rat(j.get<long>());
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        Rat r;
        if (mpq_set_str(r.get_mpq_t(), s.c_str(), 10) != 0)
            fail(errc::parse_error, "bad rational literal: " + s);
        r.canonicalize();
        return r;
    }
    if (j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer()) {
        long den = j[1].get<long>();
        if (den == 0) fail(errc::parse_error, "rational with zero denominator");
        return make_rat(j[0].get<long>(), den);
    }
    fail(errc::parse_error, "expected a rational as \"a/b\" or [num, den]");
}

inline const Json& require_field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key))
        fail(errc::parse_error, std::string("missing field \"") + key + "\"");
    return j.at(key);
}

inline long int_field(const Json& j, const char* key, long fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    const Json& v = j.at(key);
    if (!v.is_number_integer()) fail(errc::parse_error, std::string(key) + " must be an integer");
    return v.get<long>();
}

// ---- Laurent series ----

struct LaurentDefaults {
    RingTag tag = RingTag::gamma_con;
    Rat r = Rat(1);
    unsigned prec = 12;
};

inline Json laurent_json(const LaurentSeries& x) {
    Json terms = Json::array();
    for (const auto& [i, c] : x.terms()) terms.push_back(Json::array({i, c.str()}));
    Json window = Json::array({x.lo(), x.entire() ? Json(nullptr) : Json(x.hi())});
    return Json{{"tag", ring_tag_name(x.tag())}, {"r", rat_json(x.r_param())},
                {"N", x.prec()},                 {"denom", x.denom()},
                {"window", std::move(window)},   {"terms", std::move(terms)}};
}

inline RingTag ring_tag_from_name(const std::string& s) {
    if (s == "Gamma") return RingTag::gamma;
    if (s == "GammaCon") return RingTag::gamma_con;
    if (s == "Robba") return RingTag::robba;
    fail(errc::parse_error, "unknown ring tag: " + s);
}

inline LaurentSeries laurent_from_json(const ConfigPtr& cfg, const Json& j,
                                       const LaurentDefaults& d) {
    if (!j.is_object()) fail(errc::parse_error, "series must be a JSON object");
    RingTag tag = j.contains("tag") ? ring_tag_from_name(j.at("tag").get<std::string>()) : d.tag;
    Rat r = j.contains("r") ? rat_from_json(j.at("r")) : d.r;
    long prec = int_field(j, "N", long(d.prec));
    if (prec < 1) fail(errc::parse_error, "precision must be at least 1");
    long denom = int_field(j, "denom", 0);
    if (denom < 0) fail(errc::parse_error, "denominator power must be nonnegative");

    const Json& jt = require_field(j, "terms");
    if (!jt.is_array()) fail(errc::parse_error, "terms must be an array of [i, \"coeff\"]");
    std::vector<std::pair<long, OElem>> ts;
    for (const Json& e : jt) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_string())
            fail(errc::parse_error, "each term must be [exponent, \"coeff\"]");
        ts.emplace_back(e[0].get<long>(),
                        OElem::from_string(cfg, e[1].get<std::string>(), unsigned(prec)));
    }
    LaurentSeries x = LaurentSeries::from_terms(cfg, tag, r, unsigned(prec), ts, unsigned(denom));

    long lo = x.lo(), hi = x.hi();
    if (j.contains("window")) {
        const Json& w = j.at("window");
        if (!w.is_array() || w.size() != 2)
            fail(errc::parse_error, "window must be [lo, hi] (hi null for entire)");
        if (w[0].is_number_integer()) lo = std::max(lo, w[0].get<long>());
        if (w[1].is_number_integer()) hi = std::min(hi, w[1].get<long>());
    }
    if (j.contains("lo") && j.at("lo").is_number_integer())
        lo = std::max(lo, j.at("lo").get<long>());
    if (j.contains("hi") && j.at("hi").is_number_integer())
        hi = std::min(hi, j.at("hi").get<long>());
    if (lo != x.lo() || hi != x.hi()) x = x.restricted(lo, hi);
    return x;
}

// ---- Matrices of Laurent series ----

inline Json lmatrix_json(const LMatrix& m) {
    Json rows = Json::array();
    for (size_t i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (size_t k = 0; k < m.cols(); ++k) row.push_back(laurent_json(m.at(i, k)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline LMatrix lmatrix_from_json(const ConfigPtr& cfg, const Json& j, const LaurentDefaults& d) {
    if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty())
        fail(errc::parse_error, "matrix must be a nonempty array of nonempty rows");
    size_t rows = j.size(), cols = j[0].size();
    LaurentSeries zero(cfg, d.tag, d.r, d.prec);
    LMatrix m(rows, cols, zero);
    for (size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            fail(errc::parse_error, "matrix rows must all have the same length");
        for (size_t k = 0; k < cols; ++k) m.at(i, k) = laurent_from_json(cfg, j[i][k], d);
    }
    return m;
}

// ---- Tate series ----

struct TateDefaults {
    std::vector<Rat> radius;  // log-radii, one per variable
    unsigned prec = 12;
    unsigned cap = 64;
};

inline Json tate_json(const TateSeries& f) {
    Json radius = Json::array();
    for (const auto& e : f.radius().e) radius.push_back(rat_json(e));
    Json terms = Json::array();
    for (const auto& [I, c] : f.terms()) {
        Json exps = Json::array();
        for (unsigned v : I) exps.push_back(v);
        terms.push_back(Json::array({std::move(exps), c.num().str(), std::to_string(c.den())}));
    }
    return Json{{"n", f.nvars()},   {"radius", std::move(radius)}, {"N", f.prec()},
                {"cap", f.cap()},   {"terms", std::move(terms)}};
}

inline TateSeries tate_from_json(const ConfigPtr& cfg, const Json& j, const TateDefaults& d) {
    if (!j.is_object()) fail(errc::parse_error, "series must be a JSON object");
    std::vector<Rat> radii = d.radius;
    if (j.contains("radius")) {
        radii.clear();
        for (const Json& e : j.at("radius")) radii.push_back(rat_from_json(e));
    }
    long n = int_field(j, "n", long(radii.size()));
    if (n < 0) fail(errc::parse_error, "variable count must be nonnegative");
    if (radii.size() < size_t(n)) radii.resize(size_t(n), Rat(0));
    if (radii.size() != size_t(n))
        fail(errc::parse_error, "radius list does not match the variable count");
    long prec = int_field(j, "N", long(d.prec));
    if (prec < 1) fail(errc::parse_error, "precision must be at least 1");
    long cap = int_field(j, "cap", long(d.cap));
    if (cap < 1) fail(errc::parse_error, "degree cap must be at least 1");

    const Json& jt = require_field(j, "terms");
    if (!jt.is_array()) fail(errc::parse_error, "terms must be an array");
    std::vector<std::pair<TateSeries::Exp, KElem>> ts;
    for (const Json& e : jt) {
        if (!e.is_array() || e.size() < 2 || e.size() > 3 || !e[0].is_array() ||
            !e[1].is_string())
            fail(errc::parse_error, "each term must be [[exponents], \"num\", den]");
        TateSeries::Exp I;
        for (const Json& v : e[0]) {
            if (!v.is_number_integer() || v.get<long>() < 0)
                fail(errc::parse_error, "exponents must be nonnegative integers");
            I.push_back(unsigned(v.get<long>()));
        }
        if (I.size() != size_t(n)) fail(errc::parse_error, "exponent arity mismatch");
        long den = 0;
        if (e.size() == 3) {
            if (e[2].is_number_integer())
                den = e[2].get<long>();
            else if (e[2].is_string()) {
                try {
                    den = std::stol(e[2].get<std::string>());
                } catch (const std::exception&) {
                    fail(errc::parse_error, "bad denominator power literal");
                }
            } else
                fail(errc::parse_error, "denominator power must be an integer");
        }
        if (den < 0) fail(errc::parse_error, "denominator power must be nonnegative");
        OElem num = OElem::from_string(cfg, e[1].get<std::string>(),
                                       unsigned(prec) + unsigned(den));
        ts.emplace_back(std::move(I), KElem(std::move(num), unsigned(den)));
    }
    return TateSeries::from_terms(cfg, PolyRadius{std::move(radii)}, unsigned(prec),
                                  unsigned(cap), ts);
}

inline Json tate_vector_json(const std::vector<TateSeries>& v) {
    Json a = Json::array();
    for (const auto& x : v) a.push_back(tate_json(x));
    return a;
}

inline std::vector<TateSeries> tate_vector_from_json(const ConfigPtr& cfg, const Json& j,
                                                     const TateDefaults& d) {
    if (!j.is_array()) fail(errc::parse_error, "expected an array of series");
    std::vector<TateSeries> v;
    for (const Json& e : j) v.push_back(tate_from_json(cfg, e, d));
    return v;
}

inline Json tate_matrix_json(const Matrix<TateSeries>& m) {
    Json rows = Json::array();
    for (size_t i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (size_t k = 0; k < m.cols(); ++k) row.push_back(tate_json(m.at(i, k)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix<TateSeries> tate_matrix_from_json(const ConfigPtr& cfg, const Json& j,
                                                const TateDefaults& d) {
    if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty())
        fail(errc::parse_error, "matrix must be a nonempty array of nonempty rows");
    size_t rows = j.size(), cols = j[0].size();
    Matrix<TateSeries> m(rows, cols, TateSeries(cfg, PolyRadius{d.radius}, d.prec, d.cap));
    for (size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            fail(errc::parse_error, "matrix rows must all have the same length");
        for (size_t k = 0; k < cols; ++k) m.at(i, k) = tate_from_json(cfg, j[i][k], d);
    }
    return m;
}

// ---- Certificates ----

inline Json newton_json(const NewtonEstimate& e) {
    Json ps = Json::array();
    long k = 1;
    for (const auto& v : e.partial_sums) {
        Rat c = v;
        c.canonicalize();
        ps.push_back(Json::array({k++, c.get_num().get_si(), c.get_den().get_si()}));
    }
    return Json{{"partial_sums", std::move(ps)}, {"exact", e.exact}, {"depth", e.depth}};
}

inline Json split_json(const SplitCertificate& c) {
    return Json{{"X", lmatrix_json(c.x)},
                {"residual_val", c.residual_val},
                {"iterations", c.iterations},
                {"conjugation_ok", c.conjugation_ok},
                {"max_denom", c.max_denom}};
}

inline Json move_json(const Move& m) {
    return Json{{"kind", move_kind_name(m.kind)},
                {"op", m.op},
                {"row", m.row},
                {"other", m.other},
                {"j", m.j}};
}

inline Json qs_certificate_json(const UnimodularTuple& t, const ReductionCertificate& c) {
    Json moves = Json::array();
    for (const auto& m : c.moves) moves.push_back(move_json(m));
    return Json{{"f", tate_vector_json(t.entries)},
                {"witness", tate_vector_json(t.witness)},
                {"M", tate_matrix_json(c.m)},
                {"M_inv", tate_matrix_json(c.m_inv)},
                {"moves", std::move(moves)},
                {"verified", c.verified}};
}

}  // namespace robba
