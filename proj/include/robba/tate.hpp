#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "robba/oelem.hpp"

namespace robba {

// Element of K = Frac(O): numerator over a pi-power denominator. The
// numerator's claimed precision always exceeds the denominator, so the value
// is known to absolute precision abs_prec() = num.prec() - den.
class KElem {
public:
    KElem() = default;

    explicit KElem(OElem num, unsigned den = 0) : num_(std::move(num)), den_(den) { reduce(); }

    static KElem zero(const ConfigPtr& cfg, unsigned abs) { return KElem(OElem(cfg, abs)); }

    static KElem from_int(const ConfigPtr& cfg, const Int& v, unsigned abs) {
        return KElem(OElem::from_int(cfg, v, abs));
    }

    // pi^w as an exact element carried at absolute precision abs.
    static KElem pi_power(const ConfigPtr& cfg, long w, unsigned abs) {
        if (w >= 0) {
            OElem n = OElem::from_int(cfg, 1, abs).mul_pi_raised(unsigned(w), abs + unsigned(w));
            return KElem(std::move(n));
        }
        return KElem(OElem::from_int(cfg, 1, abs + unsigned(-w)), unsigned(-w));
    }

    const OElem& num() const { return num_; }
    unsigned den() const { return den_; }
    const ConfigPtr& config() const { return num_.config(); }
    long abs_prec() const { return long(num_.prec()) - long(den_); }
    bool is_zero_at_prec() const { return num_.is_zero_at_prec(); }

    PiVal pival() const {
        auto pv = num_.pival();
        return {pv.v - long(den_), pv.exact};
    }

    // p-adic valuation as an exact rational (pival / e).
    Val vp() const {
        auto pv = pival();
        return {make_rat(pv.v, long(config()->e)), pv.exact};
    }

    friend KElem operator+(const KElem& a, const KElem& b) { return addsub(a, b, false); }
    friend KElem operator-(const KElem& a, const KElem& b) { return addsub(a, b, true); }

    KElem operator-() const {
        KElem r = *this;
        r.num_ = -r.num_;
        return r;
    }

    friend KElem operator*(const KElem& a, const KElem& b) {
        return KElem(a.num_ * b.num_, a.den_ + b.den_);
    }

    KElem inv() const {
        auto pv = pival();
        if (!pv.exact) {
            if (is_zero_at_prec())
                fail(errc::precision_exhausted, "inverse of a value that is zero at precision");
            fail(errc::not_a_unit, "pi-adic valuation not determined at this precision");
        }
        long s = pv.v;                 // valuation of the element
        long v = s + long(den_);       // pi content of the numerator
        OElem w = num_.mul_pi(-v);     // unit part
        OElem winv = w.inv();
        if (s <= 0) {
            unsigned k = unsigned(-s);
            return KElem(winv.mul_pi_raised(k, winv.prec() + k));
        }
        return KElem(std::move(winv), unsigned(s));
    }

    KElem at_abs(long abs) const {
        if (abs <= 0) fail(errc::precision_exhausted, "no absolute precision left");
        KElem r = *this;
        unsigned want = unsigned(abs) + r.den_;
        if (r.num_.prec() > want) r.num_.reduce_prec(want);
        r.reduce();
        return r;
    }

    KElem scaled_pi(long k) const {
        if (k >= 0) {
            KElem r(num_.mul_pi_raised(unsigned(k), num_.prec() + unsigned(k)), den_);
            return r;
        }
        return KElem(num_, den_ + unsigned(-k));
    }

    KElem scale_int(const Int& k) const { return KElem(num_.scale_int(k), den_); }

private:
    static KElem addsub(const KElem& a, const KElem& b, bool neg) {
        long abs = std::min(a.abs_prec(), b.abs_prec());
        if (abs <= 0) fail(errc::precision_exhausted, "no absolute precision left");
        unsigned d = std::max(a.den_, b.den_);
        unsigned np = unsigned(abs) + d;
        OElem an = a.num_.mul_pi_raised(d - a.den_, np);
        OElem bn = b.num_.mul_pi_raised(d - b.den_, np);
        return KElem(neg ? an - bn : an + bn, d);
    }

    void reduce() {
        if (den_ == 0) return;
        auto pv = num_.pival();
        long c = std::min<long>(long(den_), pv.exact ? pv.v : long(num_.prec()));
        if (c > 0) {
            num_ = num_.mul_pi(-c);
            den_ -= unsigned(c);
        }
    }

    OElem num_;
    unsigned den_ = 0;
};

// rho_k = p^{-e_k}: log-radii as exact rationals. Negative entries mean
// radii above 1.
struct PolyRadius {
    std::vector<Rat> e;

    size_t size() const { return e.size(); }
    bool operator==(const PolyRadius& o) const { return e == o.e; }
};

inline long rat_ceil(const Rat& r) {
    Int q;
    mpz_cdiv_q(q.get_mpz_t(), r.get_num().get_mpz_t(), r.get_den().get_mpz_t());
    return long(q.get_si());
}

inline long rat_floor(const Rat& r) {
    Int q;
    mpz_fdiv_q(q.get_mpz_t(), r.get_num().get_mpz_t(), r.get_den().get_mpz_t());
    return long(q.get_si());
}

// Truncated power series on the closed polydisc |t_k| <= p^{-e_k}. Exponents
// are boxed: every stored exponent is at most `cap` in each variable, and
// every in-box coefficient is exact mod pi^prec. `entire` marks honest
// polynomials (nothing beyond the stored terms); non-entire elements carry a
// truncated tail that the convergence model declares negligible. Because
// exponents only ever add, out-of-box terms never feed back into the box, so
// in-box coefficients of sums and products stay exact either way.
class TateSeries {
public:
    using Exp = std::vector<unsigned>;

    static constexpr size_t max_terms() { return 1u << 20; }

    TateSeries() = default;

    TateSeries(ConfigPtr cfg, PolyRadius rad, unsigned prec, unsigned cap = 64)
        : cfg_(std::move(cfg)), rad_(std::move(rad)), prec_(prec), cap_(cap), entire_(true) {}

    static TateSeries from_terms(ConfigPtr cfg, PolyRadius rad, unsigned prec, unsigned cap,
                                 const std::vector<std::pair<Exp, KElem>>& terms,
                                 bool entire = true) {
        TateSeries x(std::move(cfg), std::move(rad), prec, cap);
        x.entire_ = entire;
        for (const auto& [I, c] : terms) {
            x.check_exp(I);
            auto it = x.terms_.find(I);
            if (it == x.terms_.end())
                x.terms_.emplace(I, c);
            else
                it->second = it->second + c;
        }
        x.prune();
        return x;
    }

    static TateSeries constant(ConfigPtr cfg, PolyRadius rad, unsigned prec, unsigned cap,
                               const KElem& c) {
        Exp zero(rad.size(), 0);
        return from_terms(std::move(cfg), std::move(rad), prec, cap, {{zero, c}});
    }

    static TateSeries one(ConfigPtr cfg, PolyRadius rad, unsigned prec, unsigned cap) {
        auto c = KElem::from_int(cfg, 1, prec);
        return constant(std::move(cfg), std::move(rad), prec, cap, c);
    }

    static TateSeries variable(ConfigPtr cfg, PolyRadius rad, unsigned prec, unsigned cap,
                               size_t k) {
        Exp I(rad.size(), 0);
        I.at(k) = 1;
        auto c = KElem::from_int(cfg, 1, prec);
        return from_terms(std::move(cfg), std::move(rad), prec, cap, {{I, c}});
    }

    const ConfigPtr& config() const { return cfg_; }
    size_t nvars() const { return rad_.size(); }
    const PolyRadius& radius() const { return rad_; }
    unsigned prec() const { return prec_; }
    unsigned cap() const { return cap_; }
    bool entire() const { return entire_; }
    const std::map<Exp, KElem>& terms() const { return terms_; }
    bool is_zero_at_prec() const { return terms_.empty(); }

    KElem coeff(const Exp& I) const {
        auto it = terms_.find(I);
        if (it != terms_.end()) return it->second;
        return KElem::zero(cfg_, prec_);
    }

    friend TateSeries operator+(const TateSeries& a, const TateSeries& b) {
        return addsub(a, b, false);
    }
    friend TateSeries operator-(const TateSeries& a, const TateSeries& b) {
        return addsub(a, b, true);
    }

    TateSeries operator-() const {
        TateSeries r = *this;
        for (auto& [I, c] : r.terms_) c = -c;
        return r;
    }

    // Strict product: a term pushed past the box must be negligible (zero at
    // the result precision) or the claim of exactness breaks; that is a loud
    // WindowOverflow, never a silent drop.
    friend TateSeries operator*(const TateSeries& a, const TateSeries& b) {
        return mul_impl(a, b, true);
    }

    // Box-truncating product for convergent iterations: out-of-box terms are
    // dropped and the result is marked non-entire. In-box coefficients are
    // still exact; only the tail model weakens.
    static TateSeries mul_boxed(const TateSeries& a, const TateSeries& b) {
        return mul_impl(a, b, false);
    }

    TateSeries scaled(const KElem& c) const {
        TateSeries r = *this;
        long vc = c.pival().exact ? c.pival().v : c.abs_prec();
        long np = std::min(long(prec_) + vc, c.abs_prec() + num_content());
        if (np <= 0) fail(errc::precision_exhausted, "no absolute precision left in scaling");
        r.prec_ = unsigned(np);
        for (auto& [I, t] : r.terms_) t = t * c;
        r.prune();
        return r;
    }

    TateSeries scaled_pi(long k) const {
        TateSeries r = *this;
        long np = long(prec_) + k;
        if (np <= 0) fail(errc::precision_exhausted, "no absolute precision left in scaling");
        r.prec_ = unsigned(np);
        for (auto& [I, t] : r.terms_) t = t.scaled_pi(k);
        r.prune();
        return r;
    }

    // Same element, viewed as carrying an unknown negligible tail.
    TateSeries as_truncated() const {
        TateSeries r = *this;
        r.entire_ = false;
        return r;
    }

    TateSeries at_prec(unsigned np) const {
        if (np > prec_) throw std::logic_error("cannot raise series precision");
        TateSeries r = *this;
        r.prec_ = np;
        r.prune();
        return r;
    }

    // Same terms viewed on a smaller polydisc (every new radius at most the
    // old one): convergence is inherited, weights change.
    TateSeries with_radius(PolyRadius nr) const {
        if (nr.size() != rad_.size()) throw std::logic_error("radius arity mismatch");
        for (size_t k = 0; k < nr.size(); ++k)
            if (nr.e[k] < rad_.e[k])
                fail(errc::bad_calibration, "cannot enlarge a polydisc after truncation");
        TateSeries r = *this;
        r.rad_ = std::move(nr);
        return r;
    }

    long deg_in(size_t var) const {
        long d = -1;
        for (const auto& [I, c] : terms_) d = std::max(d, long(I.at(var)));
        return d;
    }

    // Terms with exponent d in `var`, with that exponent zeroed: the
    // var-degree-d coefficient viewed inside the same ring.
    TateSeries coeff_slice(size_t var, unsigned d) const {
        TateSeries r(cfg_, rad_, prec_, cap_);
        r.entire_ = entire_;
        for (const auto& [I, c] : terms_) {
            if (I.at(var) != d) continue;
            Exp J = I;
            J[var] = 0;
            r.terms_.emplace(std::move(J), c);
        }
        return r;
    }

    TateSeries truncate_var(size_t var, unsigned maxdeg) const {
        TateSeries r = *this;
        std::erase_if(r.terms_, [&](const auto& kv) { return kv.first.at(var) > maxdeg; });
        r.entire_ = true;  // an explicit polynomial truncation carries no tail
        return r;
    }

    // Multiply by t_var^k (exact; overflowing the box is an error).
    TateSeries var_shifted(size_t var, unsigned k) const {
        TateSeries r(cfg_, rad_, prec_, cap_);
        r.entire_ = entire_;
        for (const auto& [I, c] : terms_) {
            Exp J = I;
            J[var] += k;
            if (J[var] > cap_) fail(errc::window_overflow, "monomial shift leaves the box");
            r.terms_.emplace(std::move(J), c);
        }
        return r;
    }

    // Drop variable `var` (every stored exponent there must be zero),
    // reducing arity by one.
    TateSeries drop_var(size_t var) const {
        PolyRadius nr;
        for (size_t k = 0; k < rad_.size(); ++k)
            if (k != var) nr.e.push_back(rad_.e[k]);
        TateSeries r(cfg_, std::move(nr), prec_, cap_);
        r.entire_ = entire_;
        for (const auto& [I, c] : terms_) {
            if (I.at(var) != 0) throw std::logic_error("drop_var: variable still present");
            Exp J;
            for (size_t k = 0; k < I.size(); ++k)
                if (k != var) J.push_back(I[k]);
            r.terms_.emplace(std::move(J), c);
        }
        return r;
    }

    // Inverse of drop_var: reinsert a variable at position `var` with radius
    // e_var and degree d on every term.
    TateSeries lift_var(size_t var, unsigned d, const Rat& e_var) const {
        PolyRadius nr;
        for (size_t k = 0; k <= rad_.size(); ++k) {
            if (k == var) nr.e.push_back(e_var);
            if (k < rad_.size()) nr.e.push_back(rad_.e[k]);
        }
        TateSeries r(cfg_, std::move(nr), prec_, cap_);
        r.entire_ = entire_;
        if (d > cap_) fail(errc::window_overflow, "lift degree leaves the box");
        for (const auto& [I, c] : terms_) {
            Exp J;
            for (size_t k = 0; k < I.size(); ++k) {
                if (k == var) J.push_back(d);
                J.push_back(I[k]);
            }
            if (var == I.size()) J.push_back(d);
            r.terms_.emplace(std::move(J), c);
        }
        return r;
    }

    unsigned max_den() const {
        unsigned d = 0;
        for (const auto& [I, c] : terms_) d = std::max(d, c.den());
        return d;
    }

    // Least pi-valuation among stored coefficients; the banked content a
    // product's precision gains, exactly as in the Laurent layer. Stored
    // coefficients are nonzero at precision, so their valuations are exact.
    long num_content() const {
        long m = long(prec_);
        bool first = true;
        for (const auto& [I, c] : terms_) {
            long v = c.pival().v;
            if (first || v < m) m = v;
            first = false;
        }
        return m;
    }

    // Weighted valuation of one term: v_p(c) + sum I_k e_k.
    Rat term_weight(const Exp& I, const KElem& c) const {
        Rat w = c.vp().v;
        for (size_t k = 0; k < I.size(); ++k) w += Rat(long(I[k])) * rad_.e[k];
        return w;
    }

private:
    static TateSeries addsub(const TateSeries& a, const TateSeries& b, bool neg) {
        a.require_same_shape(b);
        TateSeries r(a.cfg_, a.rad_, std::min(a.prec_, b.prec_), std::min(a.cap_, b.cap_));
        r.entire_ = a.entire_ && b.entire_;
        r.terms_ = a.terms_;
        for (const auto& [I, c] : b.terms_) {
            auto it = r.terms_.find(I);
            if (it == r.terms_.end())
                r.terms_.emplace(I, neg ? -c : c);
            else
                it->second = neg ? (it->second - c) : (it->second + c);
        }
        r.prune();
        return r;
    }

    static TateSeries mul_impl(const TateSeries& a, const TateSeries& b, bool strict) {
        a.require_same_shape(b);
        long np = std::min(long(a.prec_) + b.num_content(), long(b.prec_) + a.num_content());
        if (np <= 0) fail(errc::precision_exhausted, "denominators ate the working precision");
        unsigned cap = std::min(a.cap_, b.cap_);
        TateSeries r(a.cfg_, a.rad_, unsigned(np), cap);
        r.entire_ = a.entire_ && b.entire_;
        if (a.terms_.size() * b.terms_.size() > max_terms())
            fail(errc::window_overflow, "product term budget exceeded");
        size_t n = a.nvars();
        for (const auto& [I, c] : a.terms_) {
            for (const auto& [J, d] : b.terms_) {
                Exp K(n);
                bool inbox = true;
                for (size_t k = 0; k < n; ++k) {
                    K[k] = I[k] + J[k];
                    if (K[k] > cap) inbox = false;
                }
                KElem prod = c * d;
                if (!inbox) {
                    if (prod.at_abs(np).is_zero_at_prec()) continue;  // negligible, droppable
                    if (strict)
                        fail(errc::window_overflow,
                             "product term leaves the degree box with a nonzero coefficient");
                    r.entire_ = false;
                    continue;
                }
                auto it = r.terms_.find(K);
                if (it == r.terms_.end())
                    it = r.terms_.emplace(K, KElem::zero(a.cfg_, unsigned(np))).first;
                it->second = it->second + prod;
            }
        }
        r.prune();
        return r;
    }

    void check_exp(const Exp& I) const {
        if (I.size() != rad_.size()) throw std::logic_error("exponent arity mismatch");
        for (unsigned v : I)
            if (v > cap_) fail(errc::window_overflow, "exponent beyond the degree box");
    }

    void prune() {
        long np = long(prec_);
        for (auto it = terms_.begin(); it != terms_.end();) {
            KElem c = it->second.at_abs(np);
            if (c.is_zero_at_prec()) {
                it = terms_.erase(it);
            } else {
                it->second = std::move(c);
                ++it;
            }
        }
        if (terms_.size() > max_terms()) fail(errc::window_overflow, "series term budget exceeded");
    }

    void require_same_shape(const TateSeries& o) const {
        require_same_ring(*cfg_, *o.cfg_);
        if (!(rad_ == o.rad_)) fail(errc::bad_calibration, "mixed polydisc radii");
    }

    ConfigPtr cfg_;
    PolyRadius rad_;
    unsigned prec_ = 0;
    unsigned cap_ = 64;
    bool entire_ = true;
    std::map<Exp, KElem> terms_;
};

// Gauss valuation: min over terms of v_p(c_I) + sum I_k e_k; the norm of the
// element is p^{-value}. For non-entire elements the convergence model
// asserts the truncated tail does not undercut the stored minimum.
inline Rat gauss_valuation(const TateSeries& f) {
    if (f.is_zero_at_prec())
        fail(errc::zero_at_precision, "gauss valuation of a series that vanishes at precision");
    bool have = false;
    Rat best;
    for (const auto& [I, c] : f.terms()) {
        Rat w = f.term_weight(I, c);
        if (!have || w < best) {
            best = w;
            have = true;
        }
    }
    return best;
}

// Largest degree in `var` whose slice attains the Gauss minimum, and that
// slice with the variable removed. Ties go to the largest degree by the
// definition of deg.
inline std::pair<long, TateSeries> leading_term(const TateSeries& f, size_t var) {
    if (f.is_zero_at_prec())
        fail(errc::zero_at_precision, "leading term of a series that vanishes at precision");
    Rat best;
    bool have = false;
    long j = -1;
    for (const auto& [I, c] : f.terms()) {
        Rat w = f.term_weight(I, c);
        long d = long(I.at(var));
        if (!have || w < best || (w == best && d > j)) {
            if (!have || w < best) {
                best = w;
                j = d;
            } else {
                j = std::max(j, d);
            }
            have = true;
        }
    }
    // j is the largest var-degree owning *a* minimal term; the coefficient is
    // the whole degree-j slice.
    return {j, f.coeff_slice(var, unsigned(j)).drop_var(var)};
}

// Unit of the Tate algebra over K: the Gauss minimum is attained by the
// constant term and by nothing else.
inline bool is_unit(const TateSeries& f) {
    if (f.is_zero_at_prec()) return false;
    TateSeries::Exp zero(f.nvars(), 0);
    auto it = f.terms().find(zero);
    if (it == f.terms().end()) return false;
    Rat w0 = f.term_weight(zero, it->second);
    for (const auto& [I, c] : f.terms()) {
        if (I == zero) continue;
        if (!(f.term_weight(I, c) > w0)) return false;
    }
    return true;
}

// Geometric-series inverse of a unit. The dominance gap of the nonconstant
// part gives an explicit iteration bound; stalling past it means the unit
// test was lied to, reported loudly.
inline TateSeries invert_unit(const TateSeries& f) {
    if (f.is_zero_at_prec())
        fail(errc::zero_at_precision, "inverse of a series that vanishes at precision");
    if (!is_unit(f)) fail(errc::not_a_unit, "gauss minimum not strictly at the constant term");
    TateSeries::Exp zero(f.nvars(), 0);
    KElem c0 = f.coeff(zero);
    KElem c0inv = c0.inv();
    TateSeries one = TateSeries::one(f.config(), f.radius(), f.prec(), f.cap());
    TateSeries z = f.scaled(c0inv) - one;
    TateSeries acc = TateSeries::one(f.config(), f.radius(), z.prec(), f.cap());
    if (!z.is_zero_at_prec()) {
        // A term of z^k at exponent I has v_p >= k*delta - sum I_k e_k, and
        // inside the box the subtracted part is at most cap * (positive e_k).
        Rat delta = gauss_valuation(z);  // > 0 by the unit test
        Rat slack = 0;
        for (const auto& ek : f.radius().e)
            if (ek > 0) slack += Rat(long(f.cap())) * ek;
        long e = long(f.config()->e);
        long kmax = rat_ceil((make_rat(long(f.prec()), e) + slack) / delta) + 2;
        TateSeries zpow = acc;
        Rat prev_nu = 0;
        for (long k = 1; k <= kmax; ++k) {
            zpow = TateSeries::mul_boxed(zpow, z);
            if (zpow.is_zero_at_prec()) break;
            Rat nu = gauss_valuation(zpow);
            if (!(nu > prev_nu))
                fail(errc::no_contraction, "unit inversion stopped contracting");
            prev_nu = nu;
            acc = (k % 2 ? acc - zpow : acc + zpow);
            if (k == kmax)
                fail(errc::no_contraction, "unit inversion exceeded its iteration bound");
        }
    }
    return acc.scaled(c0inv);
}

// Division with remainder by a polynomial in `var` whose literal top
// coefficient is a unit of the base: f = Q*P + S with deg_var S < deg_var P.
inline std::pair<TateSeries, TateSeries> weierstrass_divide(const TateSeries& f,
                                                            const TateSeries& P, size_t var) {
    long j = P.deg_in(var);
    if (j < 0) fail(errc::zero_at_precision, "division by a series that vanishes at precision");
    TateSeries bj = P.coeff_slice(var, unsigned(j));
    if (!is_unit(bj))
        fail(errc::leading_coeff_not_unit, "divisor's top coefficient is not a unit");
    TateSeries binv = invert_unit(bj);
    TateSeries Q(f.config(), f.radius(), f.prec(), f.cap());
    TateSeries R = f;
    long d;
    while ((d = R.deg_in(var)) >= j && !R.is_zero_at_prec()) {
        TateSeries cd = R.coeff_slice(var, unsigned(d));
        TateSeries q = TateSeries::mul_boxed(cd, binv).var_shifted(var, unsigned(d - j));
        Q = Q + q;
        R = R - TateSeries::mul_boxed(q, P);
        if (R.deg_in(var) >= d)
            fail(errc::no_contraction, "division failed to lower the degree");
    }
    return {Q, R};
}

struct PrepResult {
    TateSeries unit;      // u with f == u * P to the reported residual
    TateSeries unit_inv;  // u^{-1}, same precision
    TateSeries P;         // polynomial in the distinguished variable
    long residual_pival;  // pi-valuation floor of f - u*P (series precision if clean)
    unsigned iterations;
};

// Weierstrass preparation in `var` by successive approximate factorization:
// start from the degree-<= j truncation (j the leading degree), divide, fold
// the remainder back into P, and stop once the remainder sinks below the
// guard. Each step must strictly raise the remainder's valuation; the gap
// between the leading and trailing parts guarantees it when the leading
// coefficient really is a unit.
inline PrepResult weierstrass_prepare(const TateSeries& f, size_t var) {
    auto [j, bj] = leading_term(f, var);
    if (!is_unit(bj))
        fail(errc::leading_coeff_not_unit, "leading coefficient is not a unit of the base");
    unsigned g = f.config()->guard;
    long target = long(f.prec()) - long(g);
    TateSeries P = f.truncate_var(var, unsigned(j));
    long prev = std::numeric_limits<long>::min();
    unsigned max_it = f.prec() + g + 8;
    for (unsigned it = 0; it <= max_it; ++it) {
        auto [Q, S] = weierstrass_divide(f, P, var);
        long resid = long(S.prec());
        if (!S.is_zero_at_prec()) {
            resid = std::numeric_limits<long>::max();
            for (const auto& [I, c] : S.terms()) {
                auto pv = c.pival();
                resid = std::min(resid, pv.v);
            }
        }
        if (S.is_zero_at_prec() || resid >= target) {
            // Unit conditions: every lower coefficient weighs at least the top.
            Rat top = gauss_valuation(P.coeff_slice(var, unsigned(j))) +
                      Rat(j) * P.radius().e[var];
            for (long i = 0; i < j; ++i) {
                TateSeries bi = P.coeff_slice(var, unsigned(i));
                if (bi.is_zero_at_prec()) continue;
                if (gauss_valuation(bi) + Rat(i) * P.radius().e[var] < top)
                    fail(errc::no_contraction, "prepared polynomial violates the unit condition");
            }
            TateSeries uinv;
            try {
                uinv = invert_unit(Q);
            } catch (const error&) {
                fail(errc::no_contraction, "cofactor is not a unit; contraction assumption broken");
            }
            return {Q, uinv, P, resid, it};
        }
        if (resid <= prev)
            fail(errc::no_contraction, "remainder valuation stopped increasing");
        prev = resid;
        P = P + S;
    }
    fail(errc::no_contraction, "preparation exceeded its iteration bound");
}

// Substitute t_k = p^m * s_k (m >= 0): coefficients pick up p^{m i_k} and the
// log-radius drops to e_k - m, so the Gauss valuation is unchanged. With
// m = ceil(e_k) this brings a radius below 1 up into [1, p), the normal form
// the shear substitutions expect.
inline TateSeries rescale_variable(const TateSeries& f, size_t var, long m) {
    if (m < 0) throw std::logic_error("rescale_variable expects m >= 0");
    if (m == 0) return f;
    PolyRadius nr = f.radius();
    nr.e.at(var) -= Rat(m);
    std::vector<std::pair<TateSeries::Exp, KElem>> nt;
    for (const auto& [I, c] : f.terms()) {
        Int mult;
        mpz_pow_ui(mult.get_mpz_t(), f.config()->p.get_mpz_t(), unsigned(m) * I[var]);
        nt.emplace_back(I, c.scale_int(mult));
    }
    return TateSeries::from_terms(f.config(), std::move(nr), f.prec(), f.cap(), nt, f.entire());
}

enum class TjMode { field, ring };

struct TjSpec {
    long m;    // step exponent on t_n
    long u_w;  // pi-power of the calibrated scalar u (field mode; 0 in ring mode)
};

// Calibrate the shear substitution. Field mode solves |u| * rho_n^m = 1 with
// u a pi power: v_pi(u) = -m e_n e, m minimal making that integral. Ring mode
// needs every radius above 1 and picks the least m with rho_n^m >= rho_i.
inline TjSpec tj_calibrate(const TateSeries& f, TjMode mode) {
    size_t n = f.nvars();
    const auto& e = f.radius().e;
    if (mode == TjMode::field) {
        for (size_t i = 0; i + 1 < n; ++i)
            if (e[i] > 0)
                fail(errc::bad_calibration,
                     "shear needs radii at least 1 in the passive variables; rescale first");
        Rat w = e[n - 1] * Rat(long(f.config()->e));
        long m = long(w.get_den().get_si());  // least positive m with m*w integral
        Rat uw = -Rat(m) * w;
        return {m, long(uw.get_num().get_si())};
    }
    for (size_t i = 0; i < n; ++i)
        if (!(e[i] < 0))
            fail(errc::bad_calibration, "ring-mode shear needs every radius above 1");
    long m = 1;
    for (size_t i = 0; i + 1 < n; ++i) {
        // rho_n^m >= rho_i  <=>  m e_n <= e_i  <=>  m >= e_i / e_n (negatives)
        m = std::max(m, rat_ceil(e[i] / e[n - 1]));
    }
    return {m, 0};
}

// The shear T_j: t_i +-> t_i + (u t_n^m)^{j^{n-i}} for i < n, t_n fixed.
// j = 0 is the identity by convention. `invert` applies the inverse shear
// (same formula with a minus sign), an exact two-sided inverse because the
// added pieces depend on t_n alone.
inline TateSeries tj_apply(const TateSeries& f, unsigned j, TjMode mode, bool invert) {
    size_t n = f.nvars();
    if (j == 0 || n < 2) return f;
    TjSpec spec = tj_calibrate(f, mode);
    const auto& cfg = f.config();
    unsigned prec = f.prec();

    // g_i = (u t_n^m)^{j^{n-1-i}} for 0-based i < n-1.
    std::vector<TateSeries> shift;
    std::vector<TateSeries> vars;
    for (size_t i = 0; i + 1 < n; ++i) {
        Int jp;
        mpz_ui_pow_ui(jp.get_mpz_t(), j, unsigned(n - 1 - i));
        if (!jp.fits_slong_p()) fail(errc::window_overflow, "shear exponent overflows");
        long J = jp.get_si();
        Int step = Int(spec.m) * J;
        if (!step.fits_ulong_p() || step.get_ui() > f.cap())
            fail(errc::window_overflow, "shear step leaves the degree box");
        TateSeries g = TateSeries::variable(cfg, f.radius(), prec, f.cap(), n - 1)
                           .var_shifted(n - 1, unsigned(step.get_ui() - 1))
                           .scaled_pi(spec.u_w * J);
        if (invert) g = -g;
        shift.push_back(std::move(g));
        vars.push_back(TateSeries::variable(cfg, f.radius(), prec, f.cap(), i));
    }

    TateSeries out(cfg, f.radius(), prec, f.cap());
    for (const auto& [I, c] : f.terms()) {
        TateSeries term = TateSeries::constant(cfg, f.radius(), prec, f.cap(), c)
                              .var_shifted(n - 1, I[n - 1]);
        for (size_t i = 0; i + 1 < n; ++i) {
            if (I[i] == 0) continue;
            TateSeries base = vars[i] + shift[i];
            for (unsigned t = 0; t < I[i]; ++t) term = term * base;
        }
        out = out + term;
    }
    return f.entire() ? out : out.as_truncated();
}

inline TateSeries tj_transform(const TateSeries& f, unsigned j, TjMode mode) {
    return tj_apply(f, j, mode, false);
}

inline TateSeries tj_inverse(const TateSeries& f, unsigned j, TjMode mode) {
    return tj_apply(f, j, mode, true);
}

struct TjFindResult {
    unsigned j = 0;
    TateSeries g;
    Rat lambda = 1;  // ring-mode radius rescale actually used
};

// Unit test for the leading coefficient in ring mode: integral unit constant
// term plus strict Gauss domination.
inline bool tj_ring_unit(const TateSeries& c) {
    if (!is_unit(c)) return false;
    TateSeries::Exp zero(c.nvars(), 0);
    auto pv = c.coeff(zero).pival();
    return pv.exact && pv.v == 0;
}

// Search the smallest shear exponent making the leading coefficient in t_n a
// unit. Ring mode additionally searches the largest dyadic radius shrink
// lambda = 1/2^k (k <= 10), reported in the result.
inline TjFindResult tj_find(const TateSeries& f, TjMode mode = TjMode::field,
                            unsigned jmax = 16) {
    if (f.is_zero_at_prec())
        fail(errc::zero_at_precision, "shear search on a series that vanishes at precision");
    size_t var = f.nvars() - 1;
    for (unsigned j = 0; j <= jmax; ++j) {
        TateSeries g = tj_apply(f, j, mode, false);
        if (mode == TjMode::field) {
            auto [d, c] = leading_term(g, var);
            (void)d;
            if (is_unit(c)) return {j, g, Rat(1)};
            continue;
        }
        Rat lambda(1);
        for (unsigned k = 0; k <= 10; ++k, lambda /= 2) {
            PolyRadius nr = g.radius();
            for (auto& ek : nr.e) ek = ek * lambda;
            TateSeries gl = g.with_radius(nr);
            auto [d, c] = leading_term(gl, var);
            (void)d;
            if (tj_ring_unit(c)) {
                TjFindResult r{j, gl, lambda};
                return r;
            }
        }
    }
    fail(errc::jmax_exceeded, "no shear exponent within the cap made the leading coefficient a unit");
}

}  // namespace robba
