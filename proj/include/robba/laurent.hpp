#pragma once

#include <cstdlib>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "robba/oelem.hpp"

namespace robba {

// Which completion of O((u)) an element is tagged as living in. gamma is the
// full p-adic completion; gamma_con carries an overconvergence parameter r
// (coefficients decay like v_p(x_i) >= r * (-i) for i << 0); robba is the
// union over shrinking annuli, represented like gamma_con plus a global
// pi-power denominator.
enum class RingTag { gamma, gamma_con, robba };

inline const char* ring_tag_name(RingTag t) {
    switch (t) {
        case RingTag::gamma: return "Gamma";
        case RingTag::gamma_con: return "GammaCon";
        case RingTag::robba: return "Robba";
    }
    return "?";
}

// Truncated bidirectional Laurent series x = pi^{-denom} * sum_i x_i u^i.
//
// The certified window [lo, hi] is the soundness contract:
//   * i < lo: the numerator coefficient is congruent to 0 mod pi^prec
//     (the truncation shadow of the defining decay condition);
//   * lo <= i <= hi: the coefficient equals the stored value mod pi^prec;
//   * i > hi: nothing is claimed. hi == entire_hi() means the element is a
//     Laurent polynomial known everywhere (no uncertified tail).
//
// Operations derive the widest window they can certify and silently drop
// stored terms that fall outside it; queries that would need uncertified
// coefficients throw UncertifiedWindow instead of guessing.
class LaurentSeries {
public:
    static constexpr long entire_hi() { return std::numeric_limits<long>::max() / 4; }
    static constexpr size_t max_terms() { return 1u << 20; }

    LaurentSeries() = default;

    LaurentSeries(ConfigPtr cfg, RingTag tag, Rat r, unsigned prec)
        : cfg_(std::move(cfg)), tag_(tag), r_(std::move(r)), prec_(prec), lo_(0), hi_(entire_hi()) {
        check_tag();
    }

    // Entire element from explicit terms: a Laurent polynomial, certified
    // everywhere at the stated precision.
    static LaurentSeries from_terms(ConfigPtr cfg, RingTag tag, Rat r, unsigned prec,
                                    const std::vector<std::pair<long, OElem>>& terms,
                                    unsigned denom = 0) {
        LaurentSeries x(std::move(cfg), tag, std::move(r), prec);
        x.denom_ = denom;
        for (const auto& [i, c] : terms) {
            OElem cc = c;
            if (cc.prec() < prec) throw std::logic_error("coefficient precision below series precision");
            cc.reduce_prec(prec);
            auto it = x.terms_.find(i);
            if (it == x.terms_.end())
                x.terms_.emplace(i, std::move(cc));
            else
                it->second = it->second + cc;
        }
        x.prune();
        x.lo_ = x.terms_.empty() ? 0 : x.terms_.begin()->first;
        x.hi_ = entire_hi();
        return x;
    }

    static LaurentSeries monomial(ConfigPtr cfg, RingTag tag, Rat r, unsigned prec, long i,
                                  const OElem& c) {
        return from_terms(std::move(cfg), tag, std::move(r), prec, {{i, c}});
    }

    static LaurentSeries constant(ConfigPtr cfg, RingTag tag, Rat r, unsigned prec, const OElem& c) {
        return monomial(std::move(cfg), tag, std::move(r), prec, 0, c);
    }

    const ConfigPtr& config() const { return cfg_; }
    RingTag tag() const { return tag_; }
    const Rat& r_param() const { return r_; }
    unsigned prec() const { return prec_; }
    unsigned denom() const { return denom_; }
    long lo() const { return lo_; }
    long hi() const { return hi_; }
    bool entire() const { return hi_ == entire_hi(); }
    const std::map<long, OElem>& terms() const { return terms_; }

    // Effective pi-adic precision of the represented element.
    long eff_prec() const { return long(prec_) - long(denom_); }

    bool is_zero_at_prec() const { return terms_.empty(); }

    // Numerator coefficient at exponent i; only certified exponents may be
    // asked for.
    OElem coeff_num(long i) const {
        if (i > hi_) fail(errc::uncertified_window, "coefficient beyond certified window");
        auto it = terms_.find(i);
        if (it != terms_.end()) return it->second;
        return OElem(cfg_, prec_);
    }

    // Shrink the certified window. Dropping right-edge knowledge is always
    // sound. Raising lo claims vanishing below the new edge, so it is only
    // allowed when no surviving coefficient sits in the discarded range
    // (stored terms are nonzero at precision by invariant).
    LaurentSeries restricted(long new_lo, long new_hi) const {
        if (new_hi > hi_) fail(errc::uncertified_window, "cannot extend certified window");
        if (new_lo > new_hi) fail(errc::window_empty, "window bounds crossed");
        if (new_lo > lo_) {
            auto it = terms_.begin();
            if (it != terms_.end() && it->first < new_lo)
                fail(errc::uncertified_window,
                     "window restriction would claim a nonzero coefficient vanishes");
        }
        LaurentSeries x = *this;
        x.lo_ = new_lo;
        x.hi_ = new_hi;
        std::erase_if(x.terms_, [&](const auto& kv) { return kv.first > new_hi; });
        return x;
    }

    // Minimum pi-adic valuation of the represented element over the certified
    // window (denominator included). Lower bound when every certified
    // coefficient vanishes at precision.
    PiVal min_valuation() const {
        PiVal best{eff_prec(), false};
        for (const auto& [i, c] : terms_) {
            PiVal pv = c.pival();
            long v = pv.v - long(denom_);
            if (!pv.exact) continue;  // pruned away normally, defensive
            if (!best.exact || v < best.v) best = {v, true};
        }
        return best;
    }

    // Least valuation among stored numerator coefficients, or the numerator
    // precision when none survive. Stored terms are nonzero at precision by
    // invariant, so their pivals are exact.
    long num_content() const {
        long c = long(prec_);
        for (const auto& [i, t] : terms_) c = std::min(c, t.pival().v);
        return c;
    }

    LaurentSeries operator-() const {
        LaurentSeries x = *this;
        for (auto& [i, c] : x.terms_) c = -c;
        return x;
    }

    friend LaurentSeries operator+(const LaurentSeries& a, const LaurentSeries& b) {
        return addsub(a, b, false);
    }
    friend LaurentSeries operator-(const LaurentSeries& a, const LaurentSeries& b) {
        return addsub(a, b, true);
    }

    friend LaurentSeries operator*(const LaurentSeries& a, const LaurentSeries& b) {
        require_same_ring(*a.cfg_, *b.cfg_);
        // Each factor's numerator content adds certified digits to the other
        // factor's claim: x known mod pi^Na times content-w y is determined
        // mod pi^{Na+w}. Without this, elements that vanish at precision
        // erode one digit per denominator they meet.
        long ca = a.num_content();
        long cb = b.num_content();
        unsigned np = unsigned(std::min(long(a.prec_) + cb, long(b.prec_) + ca));
        LaurentSeries r(a.cfg_, join_tag(a, b), join_r(a, b), np);
        r.denom_ = a.denom_ + b.denom_;
        r.lo_ = sat_add(a.lo_, b.lo_);
        r.hi_ = std::min(sat_add(a.hi_, b.lo_), sat_add(a.lo_, b.hi_));
        if (a.terms_.size() * b.terms_.size() > max_terms())
            fail(errc::window_overflow, "product term budget exceeded");
        for (const auto& [i, c] : a.terms_) {
            for (const auto& [j, d] : b.terms_) {
                long k = i + j;
                if (k > r.hi_) continue;
                OElem prod = mul_at(c, d, np);
                auto it = r.terms_.find(k);
                if (it == r.terms_.end())
                    r.terms_.emplace(k, std::move(prod));
                else
                    it->second = it->second + prod;
            }
        }
        r.prune();
        return r;
    }

    LaurentSeries scaled(const OElem& c) const {
        unsigned np = unsigned(std::min(long(prec_) + c.pival().v,
                                        long(c.prec()) + num_content()));
        LaurentSeries x(cfg_, tag_, r_, np);
        x.denom_ = denom_;
        x.lo_ = lo_;
        x.hi_ = hi_;
        for (const auto& [i, t] : terms_) x.terms_.emplace(i, mul_at(t, c, np));
        x.prune();
        return x;
    }

    LaurentSeries scaled_int(const Int& k) const {
        LaurentSeries x = *this;
        for (auto& [i, t] : x.terms_) t = t.scale_int(k);
        x.prune();
        return x;
    }

    // Multiply by pi^k. Positive k first cancels the denominator (an exact
    // operation), then shifts the numerator, gaining claimed digits; negative
    // k deepens the denominator and costs effective precision.
    LaurentSeries scaled_pi(long k) const {
        LaurentSeries x = *this;
        if (k < 0) {
            x.denom_ += unsigned(-k);
            return x;
        }
        unsigned cancel = std::min<unsigned>(unsigned(k), x.denom_);
        x.denom_ -= cancel;
        unsigned rest = unsigned(k) - cancel;
        if (rest > 0) {
            unsigned np = x.prec_ + rest;
            std::map<long, OElem> nt;
            for (auto& [i, t] : x.terms_) nt.emplace(i, t.mul_pi_raised(rest, np));
            x.terms_ = std::move(nt);
            x.prec_ = np;
        }
        return x;
    }

    // Shift exponents: u^k * x.
    LaurentSeries shifted(long k) const {
        LaurentSeries x(cfg_, tag_, r_, prec_);
        x.denom_ = denom_;
        x.lo_ = sat_add(lo_, k);
        x.hi_ = entire() ? entire_hi() : hi_ + k;
        for (const auto& [i, c] : terms_) x.terms_.emplace(i + k, c);
        return x;
    }

    LaurentSeries with_tag(RingTag t, Rat r) const {
        LaurentSeries x = *this;
        x.tag_ = t;
        x.r_ = std::move(r);
        x.check_tag();
        return x;
    }

    // Reduce the claimed numerator precision (and implicitly re-prune).
    LaurentSeries at_prec(unsigned np) const {
        if (np > prec_) throw std::logic_error("cannot raise series precision");
        LaurentSeries x = *this;
        x.set_prec(np);
        x.prune();
        return x;
    }

    // Cancel common pi powers between numerator and denominator.
    LaurentSeries reduce_denom() const {
        if (denom_ == 0) return *this;
        if (terms_.empty()) {
            // A zero at precision owes nothing: trade the denominator for a
            // plain precision drop so later products do not stack it.
            if (eff_prec() <= 0) return *this;
            LaurentSeries x(cfg_, tag_, r_, unsigned(eff_prec()));
            x.lo_ = lo_;
            x.hi_ = hi_;
            return x;
        }
        long k = long(denom_);
        for (const auto& [i, c] : terms_) {
            PiVal pv = c.pival();
            k = std::min(k, pv.exact ? pv.v : long(prec_));
            if (k == 0) return *this;
        }
        LaurentSeries x(cfg_, tag_, r_, prec_ - unsigned(k));
        x.denom_ = denom_ - unsigned(k);
        x.lo_ = lo_;
        x.hi_ = hi_;
        for (const auto& [i, c] : terms_) x.terms_.emplace(i, c.mul_pi(-k));
        x.prune();
        return x;
    }

private:
    static long sat_add(long a, long b) {
        if (a >= entire_hi() || b >= entire_hi()) return entire_hi();
        if (a <= -entire_hi() || b <= -entire_hi()) return -entire_hi();
        return a + b;
    }

    static RingTag join_tag(const LaurentSeries& a, const LaurentSeries& b) {
        if (a.tag_ == RingTag::robba || b.tag_ == RingTag::robba) return RingTag::robba;
        if (a.tag_ == RingTag::gamma || b.tag_ == RingTag::gamma) return RingTag::gamma;
        return RingTag::gamma_con;
    }

    static Rat join_r(const LaurentSeries& a, const LaurentSeries& b) {
        if (a.tag_ == RingTag::gamma) return b.r_;
        if (b.tag_ == RingTag::gamma) return a.r_;
        return std::min(a.r_, b.r_);
    }

    static LaurentSeries addsub(const LaurentSeries& a, const LaurentSeries& b, bool neg) {
        require_same_ring(*a.cfg_, *b.cfg_);
        unsigned d = std::max(a.denom_, b.denom_);
        long neff = std::min(a.eff_prec(), b.eff_prec());
        if (neff <= 0) fail(errc::precision_exhausted, "no effective precision left");
        unsigned np = unsigned(neff + long(d));
        LaurentSeries r(a.cfg_, join_tag(a, b), join_r(a, b), np);
        r.denom_ = d;
        r.lo_ = std::min(a.lo_, b.lo_);
        r.hi_ = std::min(a.hi_, b.hi_);
        auto push = [&](const LaurentSeries& s, bool flip) {
            unsigned raise = d - s.denom_;
            for (const auto& [i, c] : s.terms_) {
                if (i > r.hi_) continue;
                OElem cc = c.mul_pi_raised(raise, np);
                if (flip) cc = -cc;
                auto it = r.terms_.find(i);
                if (it == r.terms_.end())
                    r.terms_.emplace(i, std::move(cc));
                else
                    it->second = it->second + cc;
            }
        };
        push(a, false);
        push(b, neg);
        r.prune();
        return r;
    }

    void set_prec(unsigned np) {
        prec_ = np;
        for (auto& [i, c] : terms_)
            if (c.prec() > np) c.reduce_prec(np);
    }

    void prune() {
        std::erase_if(terms_, [&](const auto& kv) {
            return kv.first > hi_ || kv.second.is_zero_at_prec();
        });
        for (auto& [i, c] : terms_)
            if (c.prec() != prec_) c.reduce_prec(prec_);
        if (terms_.size() > max_terms()) fail(errc::window_overflow, "series term budget exceeded");
    }

    void check_tag() const {
        if (tag_ != RingTag::gamma && !(r_ > 0))
            fail(errc::bad_calibration, "overconvergent tags need r > 0");
    }

    ConfigPtr cfg_;
    RingTag tag_ = RingTag::gamma;
    Rat r_ = 0;
    unsigned prec_ = 0;
    unsigned denom_ = 0;
    long lo_ = 0;
    long hi_ = 0;
    std::map<long, OElem> terms_;
};

inline bool congruent_at(const LaurentSeries& a, const LaurentSeries& b, long m) {
    PiVal v = (a - b).min_valuation();
    return v.v >= m;
}

// Naive partial valuation: the least exponent whose coefficient has
// v_p <= n. Returns nullopt for "+infinity" (no such exponent anywhere the
// element is certified, and the element is certified everywhere relevant).
inline std::optional<long> vn_naive(const LaurentSeries& x, const Rat& n) {
    const auto& cfg = *x.config();
    Rat neff_vp = make_rat(x.eff_prec(), long(cfg.e));
    if (n >= neff_vp)
        fail(errc::uncertified_window,
             "partial valuation threshold at or beyond precision: hidden coefficients could qualify");
    Rat dshift = make_rat(long(x.denom()), long(cfg.e));
    for (const auto& [i, c] : x.terms()) {
        Val v = c.valuation();
        if (!v.exact) continue;
        if (v.v - dshift <= n) return i;
    }
    if (x.entire()) return std::nullopt;
    fail(errc::uncertified_window, "no qualifying exponent in window; one could exist beyond it");
}

// Gauss valuation on the annulus |u| = p^{-r}: min over certified terms of
// r*i + v_p(x_i). This is the truncated form of min over the partial
// valuation grid of r*v_n(x) + n, and it is exact for the stored
// representative. Errors rather than reporting an uncertifiable minimum.
inline Rat wr(const LaurentSeries& x, const Rat& r) {
    if (!(r > 0)) fail(errc::bad_calibration, "gauss valuation needs r > 0");
    const auto& cfg = *x.config();
    if (x.is_zero_at_prec())
        fail(errc::zero_at_precision, "gauss valuation of a series that vanishes at precision");
    Rat dshift = make_rat(long(x.denom()), long(cfg.e));
    bool have = false;
    Rat best;
    for (const auto& [i, c] : x.terms()) {
        Val v = c.valuation();
        if (!v.exact) continue;
        Rat cand = r * Rat(i) + v.v - dshift;
        if (!have || cand < best) {
            best = cand;
            have = true;
        }
    }
    if (!have)
        fail(errc::zero_at_precision, "gauss valuation of a series that vanishes at precision");
    if (!x.entire()) {
        Rat tail_floor = r * Rat(x.hi() + 1) - dshift;
        if (best > tail_floor)
            fail(errc::uncertified_window, "uncertified tail could attain the gauss valuation");
    }
    return best;
}

// Frobenius lift on series: u maps to a declared image congruent to u^q
// mod pi, coefficients pass through sigma_0 (the identity here). The default
// image is exactly u^q. Custom images must be entire and supported in
// positive exponents so that substitution has a certifiable window.
class SigmaAction {
public:
    static SigmaAction standard(ConfigPtr cfg) {
        SigmaAction a;
        a.cfg_ = std::move(cfg);
        a.standard_ = true;
        return a;
    }

    static SigmaAction from_image(LaurentSeries img) {
        SigmaAction a;
        a.cfg_ = img.config();
        a.standard_ = false;
        validate_image(img);
        a.image_ = std::move(img);
        return a;
    }

    const ConfigPtr& config() const { return cfg_; }
    bool is_standard() const { return standard_; }

    LaurentSeries image(unsigned prec) const {
        if (!standard_) {
            if (image_.prec() < prec)
                fail(errc::precision_exhausted, "sigma image carries too little precision");
            return image_.at_prec(prec);
        }
        auto one = OElem::from_int(cfg_, 1, prec);
        return LaurentSeries::monomial(cfg_, RingTag::gamma_con, Rat(1), prec, cfg_->q_long(), one);
    }

    // Largest precision the image can serve; the standard lift is exact, so
    // any request is fine there.
    unsigned image_prec(unsigned fallback) const { return standard_ ? fallback : image_.prec(); }

private:
    static void validate_image(const LaurentSeries& img) {
        const auto& cfg = *img.config();
        if (!img.entire() || img.denom() != 0)
            fail(errc::bad_calibration, "sigma image must be an entire integral series");
        if (img.terms().empty() || img.terms().begin()->first < 1)
            fail(errc::bad_calibration, "sigma image must be supported in positive exponents");
        long q = cfg.q_long();
        bool saw_q = false;
        auto one = OElem::from_int(img.config(), 1, img.prec());
        for (const auto& [i, c] : img.terms()) {
            PiVal pv = (i == q ? (c - one) : c).pival();
            if (pv.exact && pv.v < 1)
                fail(errc::bad_calibration, "sigma image must reduce to u^q mod pi");
            if (i == q) saw_q = true;
        }
        if (!saw_q) fail(errc::bad_calibration, "sigma image must reduce to u^q mod pi");
    }

    ConfigPtr cfg_;
    bool standard_ = true;
    LaurentSeries image_;
};

// Unit inversion in the truncated series ring. The result is certified on
// [*, horizon]: y with x*y == 1 to the surviving effective precision there.
// The element must have a visible unit coefficient after factoring out its
// minimum pi power; inverting pi^s costs |s| extra digits on reattachment.
inline LaurentSeries invert_laurent(const LaurentSeries& x, long horizon) {
    if (x.is_zero_at_prec())
        fail(errc::not_invertible_at_precision, "inverse of a series that vanishes at precision");
    PiVal mv = x.min_valuation();
    if (!mv.exact)
        fail(errc::not_invertible_at_precision, "inverse of a series that vanishes at precision");
    long s = mv.v;
    // Factor x = pi^s * w with w a unit-content numerator series.
    LaurentSeries w = x.scaled_pi(-s).reduce_denom();
    if (w.denom() != 0) fail(errc::not_invertible_at_precision, "pi content did not clear");
    if (w.eff_prec() < 1)
        fail(errc::precision_exhausted, "no effective precision left to locate a unit");
    long m;
    {
        auto mm = vn_naive(w, Rat(0));
        if (!mm) fail(errc::not_invertible_at_precision, "no unit coefficient visible");
        m = *mm;
    }
    OElem c = w.coeff_num(m);
    OElem cinv = c.inv();
    long internal_hi = horizon + std::abs(m) + 1;
    LaurentSeries one = LaurentSeries::constant(w.config(), w.tag(), w.r_param(), w.prec(),
                                                OElem::from_int(w.config(), 1, w.prec()));
    LaurentSeries z = w.shifted(-m).scaled(cinv) - one;
    if (!z.is_zero_at_prec()) {
        // Tighten the window floor to the stored support (sound: the gap is
        // certified zero), then reject shapes whose powers lose their whole
        // certified window: a right-truncated series with nonpositive support
        // cannot certify any coefficient of its inverse.
        long support_lo = z.terms().begin()->first;
        if (support_lo > z.lo()) z = z.restricted(support_lo, z.hi());
        if (!z.entire() && z.lo() < 1)
            fail(errc::uncertified_window,
                 "inverse of a right-truncated series with nonpositive support is uncertifiable");
    }
    LaurentSeries acc = one;
    bool exact_inverse = false;
    if (z.is_zero_at_prec()) {
        // w is exactly c*u^m within its window. With an entire window the
        // inverse is the exact monomial, certified on the whole line; no
        // horizon truncation applies. Beyond a finite window the hidden tail
        // sits at exponents > z.hi(); its powers stay above
        // min(internal_hi, z.hi()) provided that edge is nonnegative.
        if (z.entire()) {
            exact_inverse = true;
        } else {
            if (z.hi() < 0)
                fail(errc::uncertified_window,
                     "inverse not certifiable: monomial window ends below exponent zero");
            acc = acc.restricted(std::min(0L, z.hi()), std::min(internal_hi, z.hi()));
        }
    } else {
        // Geometric series sum_k (-z)^k. Every surviving monomial of z^k uses
        // at most prec-1 factors from the pi-divisible nonpositive-exponent
        // part of z, so its exponent is at least k - (prec-1)*(1+max(0,-zmin));
        // beyond kmax the tail is certified zero at or below internal_hi.
        long zmin = z.terms().begin()->first;
        long spread = 1 + std::max(0L, -zmin);
        long kmax = internal_hi + long(w.prec()) * spread + 2;
        LaurentSeries zpow = one;
        for (long k = 1; k <= kmax; ++k) {
            zpow = zpow * z;
            if (zpow.is_zero_at_prec() && (zpow.entire() || zpow.lo() > internal_hi)) break;
            if (zmin >= 1 && !zpow.terms().empty() && zpow.terms().begin()->first > internal_hi &&
                zpow.lo() > internal_hi)
                break;
            acc = (k % 2 ? acc - zpow : acc + zpow);
        }
    }
    if (!exact_inverse && acc.hi() > internal_hi)
        acc = acc.restricted(std::min(acc.lo(), internal_hi), internal_hi);
    LaurentSeries y = acc.scaled(cinv).shifted(-m).scaled_pi(-s).reduce_denom();
    if (exact_inverse) return y;
    if (y.hi() < horizon)
        fail(errc::uncertified_window, "inverse not certifiable out to the requested horizon");
    return y.restricted(std::min(y.lo(), horizon), horizon);
}

// Overconvergence radius transforms as r -> r/q under the Frobenius lift.
inline Rat sigma_r_param(const LaurentSeries& x) {
    if (x.tag() == RingTag::gamma) return x.r_param();
    return x.r_param() / Rat(x.config()->q_long());
}

namespace detail {

// Map a window edge through i -> q^k * i, saturating claims instead of
// overflowing: a floor pushed below the representable range claims less
// (sound); a ceiling pushed above it is clamped to a finite edge (sound).
inline long sigma_window_floor(long lo, const Int& qk) {
    Int v = Int(lo) * qk;
    if (v < -Int(LaurentSeries::entire_hi())) return -LaurentSeries::entire_hi();
    return long(v.get_si());
}

inline long sigma_window_ceil(long hi, const Int& qk) {
    Int v = (Int(hi) + 1) * qk - 1;
    if (v >= Int(LaurentSeries::entire_hi())) return LaurentSeries::entire_hi() - 1;
    if (v < -Int(LaurentSeries::entire_hi())) return -LaurentSeries::entire_hi();
    return long(v.get_si());
}

// sigma^k on exponents for the standard lift u -> u^q: terms move to q^k * i,
// the window floor moves with them and the ceiling extends to q^k*(hi+1)-1
// because no integral exponent lands in the gap.
inline LaurentSeries sigma_standard_pow(const LaurentSeries& x, unsigned k) {
    const auto& cfg = x.config();
    Int qk = 1;
    for (unsigned t = 0; t < k; ++t) qk *= cfg->q();
    Rat nr = x.r_param();
    if (x.tag() != RingTag::gamma) nr = nr / Rat(qk);
    std::vector<std::pair<long, OElem>> nt;
    nt.reserve(x.terms().size());
    for (const auto& [i, c] : x.terms()) {
        Int e = Int(i) * qk;
        if (e >= Int(LaurentSeries::entire_hi()) || e <= -Int(LaurentSeries::entire_hi()))
            fail(errc::window_overflow, "sigma pushed an exponent out of range");
        nt.emplace_back(long(e.get_si()), c);
    }
    LaurentSeries out =
        LaurentSeries::from_terms(cfg, x.tag(), nr, x.prec(), nt, x.denom());
    long nlo = sigma_window_floor(x.lo(), qk);
    long nhi = x.entire() ? LaurentSeries::entire_hi() : sigma_window_ceil(x.hi(), qk);
    return out.restricted(std::min(out.lo(), nlo), nhi);
}

}  // namespace detail

// Apply the Frobenius lift. Coefficients pass through unchanged (the residue
// field is prime-inertia-trivial here, so sigma_0 is the identity); exponents
// substitute u -> image. For a custom image and an argument with negative
// exponents the result is certified out to an automatically chosen edge;
// pass `horizon` to demand a specific one.
inline LaurentSeries sigma_apply(const LaurentSeries& x, const SigmaAction& act,
                                 std::optional<long> horizon = std::nullopt) {
    require_same_ring(*x.config(), *act.config());
    if (act.is_standard()) return detail::sigma_standard_pow(x, 1);

    const auto cfg = x.config();
    long q = cfg->q_long();
    Rat nr = sigma_r_param(x);
    // The result cannot outrun the image's own precision; content in the
    // argument's coefficients still raises claims through the products below.
    unsigned wp = std::min(x.prec(), act.image_prec(x.prec()));
    LaurentSeries img = act.image(wp);
    long a = img.terms().begin()->first;  // validated: entire, min support >= 1

    long maxpos = 0, maxneg = 0;
    for (const auto& [i, c] : x.terms()) {
        maxpos = std::max(maxpos, i);
        maxneg = std::max(maxneg, -i);
    }
    long target = horizon ? *horizon
                          : q * (maxpos + maxneg +
                                 (x.entire() ? 0 : std::abs(x.hi()) + 1) +
                                 long(x.prec()) + 4);

    LaurentSeries acc(cfg, x.tag(), nr, wp);
    LaurentSeries one = LaurentSeries::constant(cfg, x.tag(), nr, wp,
                                                OElem::from_int(cfg, 1, wp));
    // Nonnegative exponents: ascending powers of the image.
    {
        LaurentSeries pow = one;
        long j = 0;
        for (auto it = x.terms().lower_bound(0); it != x.terms().end(); ++it) {
            while (j < it->first) {
                pow = pow * img;
                ++j;
            }
            acc = acc + pow.scaled(it->second);
        }
    }
    // Negative exponents: descending powers of the inverted image. Each extra
    // inverse factor retreats the certified right edge by q, so start far
    // enough out that every contribution still covers the target.
    if (!x.terms().empty() && x.terms().begin()->first < 0) {
        long sinv_hor = target + q * (maxneg + 1);
        LaurentSeries sinv = invert_laurent(img, sinv_hor);
        LaurentSeries npow = sinv;
        long j = 1;
        for (auto it = std::make_reverse_iterator(x.terms().lower_bound(0));
             it != x.terms().rend(); ++it) {
            long need = -it->first;
            while (j < need) {
                npow = npow * sinv;
                ++j;
            }
            acc = acc + npow.scaled(it->second);
        }
    }
    LaurentSeries out = acc.scaled_pi(-long(x.denom())).with_tag(x.tag(), nr);
    if (!x.entire()) {
        // Hidden coefficients beyond x's window feed in at exponents at least
        // a*(hi+1) when hi+1 >= 0; for a negative edge the inverse powers can
        // dip below q*(hi+1) by at most the pi budget times the image spread.
        long hidden_floor = (x.hi() + 1 >= 0)
                                ? a * (x.hi() + 1) - 1
                                : q * (x.hi() + 1) + long(x.prec()) * (a - q) - 1;
        long nhi = std::min(out.hi(), hidden_floor);
        out = out.restricted(std::min(out.lo(), nhi), nhi);
    }
    return out;
}

// sigma^k. The standard lift is applied in one pass; custom images iterate.
inline LaurentSeries sigma_apply_iter(const LaurentSeries& x, const SigmaAction& act,
                                      unsigned k) {
    if (act.is_standard()) return detail::sigma_standard_pow(x, k);
    LaurentSeries y = x;
    for (unsigned t = 0; t < k; ++t) y = sigma_apply(y, act);
    return y;
}

// Formal derivative coefficient series: d(sum x_i u^i) = (sum i x_i u^{i-1}) du.
inline LaurentSeries derive(const LaurentSeries& x) {
    LaurentSeries r(x.config(), x.tag(), x.r_param(), x.prec());
    std::vector<std::pair<long, OElem>> nt;
    nt.reserve(x.terms().size());
    for (const auto& [i, c] : x.terms()) {
        if (i == 0) continue;
        nt.emplace_back(i - 1, c.scale_int(Int(i)));
    }
    LaurentSeries out = LaurentSeries::from_terms(x.config(), x.tag(), x.r_param(), x.prec(), nt,
                                                  x.denom());
    if (!x.entire()) out = out.restricted(std::min(out.lo(), x.lo() - 1), x.hi() - 1);
    return out;
}

}  // namespace robba
