#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "robba/config.hpp"

namespace robba {

// Element of O tracked modulo pi^N. Internally a vector of e coordinates
// a_0..a_{e-1} (the pi-adic expansion x = sum a_k pi^k with a_k in Z_p), each
// reduced modulo p^M where M = ceil(N/e). The claimed precision N is carried
// separately and is never larger than e*M.
//
// Precision discipline: add/sub/mul propagate min(N_x, N_y); mul_at lets a
// caller bank the factors' pi content for a higher claim; inversion of a
// unit preserves N. An element whose residue vanishes is "zero at precision",
// a distinct state from exact zero; valuation() reports it as a lower bound.
class OElem {
public:
    OElem() = default;

    OElem(ConfigPtr cfg, unsigned prec) : cfg_(std::move(cfg)), prec_(prec) {
        coeffs_.assign(cfg_->e, Int(0));
    }

    static OElem from_int(ConfigPtr cfg, const Int& value, unsigned prec) {
        OElem x(cfg, prec);
        x.coeffs_[0] = value;
        x.normalize();
        return x;
    }

    static OElem from_int(ConfigPtr cfg, long value, unsigned prec) {
        return from_int(std::move(cfg), Int(value), prec);
    }

    // Coordinates in the basis 1, pi, ..., pi^{e-1}.
    static OElem from_coords(ConfigPtr cfg, std::vector<Int> coords, unsigned prec) {
        OElem x(std::move(cfg), prec);
        if (coords.size() != x.coeffs_.size())
            throw std::logic_error("coordinate count != ramification index");
        x.coeffs_ = std::move(coords);
        x.normalize();
        return x;
    }

    const ConfigPtr& config() const { return cfg_; }
    unsigned prec() const { return prec_; }
    const std::vector<Int>& coords() const { return coeffs_; }

    bool is_zero_at_prec() const {
        for (const auto& c : coeffs_)
            if (c != 0) return false;
        return true;
    }

    // pi-adic valuation. Exact when strictly below the claimed precision,
    // otherwise a lower bound of N.
    PiVal pival() const {
        long best = long(prec_);
        bool exact = false;
        for (unsigned k = 0; k < coeffs_.size(); ++k) {
            if (coeffs_[k] == 0) continue;
            long v = long(cfg_->e) * vp_int(coeffs_[k]) + long(k);
            if (v < best) {
                best = v;
                exact = true;
            }
        }
        if (!exact || best >= long(prec_)) return {long(prec_), false};
        return {best, true};
    }

    // v_p valuation as a rational; sentinel "at least N/e" when the element
    // is indistinguishable from zero.
    Val valuation() const {
        PiVal pv = pival();
        return {make_rat(pv.v, long(cfg_->e)), pv.exact};
    }

    OElem& reduce_prec(unsigned new_prec) {
        if (new_prec > prec_) throw std::logic_error("cannot raise precision");
        prec_ = new_prec;
        normalize();
        return *this;
    }

    friend OElem operator+(const OElem& a, const OElem& b) {
        OElem r = a.binop_shell(b);
        for (unsigned k = 0; k < r.coeffs_.size(); ++k) r.coeffs_[k] = a.coeffs_[k] + b.coeffs_[k];
        r.normalize();
        return r;
    }

    friend OElem operator-(const OElem& a, const OElem& b) {
        OElem r = a.binop_shell(b);
        for (unsigned k = 0; k < r.coeffs_.size(); ++k) r.coeffs_[k] = a.coeffs_[k] - b.coeffs_[k];
        r.normalize();
        return r;
    }

    OElem operator-() const {
        OElem r = *this;
        for (auto& c : r.coeffs_) c = -c;
        r.normalize();
        return r;
    }

    friend OElem operator*(const OElem& a, const OElem& b) {
        return mul_at(a, b, std::min(a.prec_, b.prec_));
    }

    // Product at a raised claimed precision. x known mod pi^Na times y with
    // v(y) >= w is determined mod pi^{Na+w}: the convolution of canonical
    // representatives is correct through every digit the factors' content
    // supports. Callers may claim up to min(Na + v(b), Nb + v(a)).
    friend OElem mul_at(const OElem& a, const OElem& b, unsigned new_prec) {
        require_same_ring(*a.cfg_, *b.cfg_);
        if (long(new_prec) > std::min(long(a.prec_) + b.pival().v, long(b.prec_) + a.pival().v))
            throw std::logic_error("mul_at: precision overclaim");
        OElem r(a.cfg_, new_prec);
        unsigned e = r.cfg_->e;
        std::vector<Int> conv(2 * e - 1, Int(0));
        for (unsigned i = 0; i < e; ++i) {
            if (a.coeffs_[i] == 0) continue;
            for (unsigned j = 0; j < e; ++j) {
                if (b.coeffs_[j] == 0) continue;
                conv[i + j] += a.coeffs_[i] * b.coeffs_[j];
            }
        }
        // Fold pi^e = p.
        for (unsigned k = 2 * e - 2; k >= e && k < conv.size(); --k)
            conv[k - e] += r.cfg_->p * conv[k];
        conv.resize(e);
        r.coeffs_ = std::move(conv);
        r.normalize();
        return r;
    }

    OElem pow(unsigned long n) const {
        OElem acc = from_int(cfg_, 1, prec_);
        OElem base = *this;
        while (n) {
            if (n & 1) acc = acc * base;
            base = base * base;
            n >>= 1;
        }
        return acc;
    }

    // Inverse of a unit, to the same precision. Newton iteration doubles the
    // pi-adic accuracy each round starting from the residue inverse mod p.
    OElem inv() const {
        PiVal v = pival();
        if (!v.exact || v.v != 0) {
            if (is_zero_at_prec())
                fail(errc::precision_exhausted, "inverse of an element that is zero at precision");
            fail(errc::not_a_unit, "inverse requires pi-adic valuation 0");
        }
        Int a0 = coeffs_[0] % cfg_->p;
        Int y0;
        if (mpz_invert(y0.get_mpz_t(), a0.get_mpz_t(), cfg_->p.get_mpz_t()) == 0)
            fail(errc::not_a_unit, "residue not invertible");
        OElem y = from_int(cfg_, y0, prec_);
        OElem two = from_int(cfg_, 2, prec_);
        unsigned digits = cfg_->e * cfg_->coeff_digits(prec_);
        for (unsigned have = 1; have < digits; have *= 2) y = y * (two - *this * y);
        return y;
    }

    // Multiply by pi^k (k may be negative; then pi^{-k} must divide exactly,
    // which costs k digits of claimed precision when dividing).
    OElem mul_pi(long k) const {
        OElem r = *this;
        for (; k > 0; --k) r = r.shift_up();
        for (; k < 0; ++k) r = r.shift_down();
        return r;
    }

    // pi^k * x carries k more certified digits than x; new_prec may claim up
    // to prec + k. Used when series denominators are aligned.
    OElem mul_pi_raised(unsigned k, unsigned new_prec) const {
        if (new_prec > prec_ + k) throw std::logic_error("mul_pi_raised: precision overclaim");
        std::vector<Int> c = coeffs_;
        for (unsigned i = 0; i < k; ++i) {
            Int top = c.back();
            for (size_t j = c.size(); j-- > 1;) c[j] = c[j - 1];
            c[0] = cfg_->p * top;
        }
        return from_coords(cfg_, std::move(c), new_prec);
    }

    OElem scale_int(const Int& k) const {
        OElem r = *this;
        for (auto& c : r.coeffs_) c *= k;
        r.normalize();
        return r;
    }

    // sigma_0 hook: the Frobenius lift fixes O pointwise because the residue
    // field is F_p and pi maps to itself.
    OElem sigma0() const { return *this; }

    // Congruence x == y mod pi^m over the common precision.
    friend bool congruent(const OElem& a, const OElem& b, long m) {
        PiVal d = (a - b).pival();
        return d.v >= m;
    }

    // Packed integer form: sum a_k * (p^M)^k in [0, p^{M*e}), M = ceil(N/e).
    Int packed() const {
        Int base = cfg_->p_pow(cfg_->coeff_digits(prec_));
        Int acc = 0;
        for (unsigned k = coeffs_.size(); k-- > 0;) acc = acc * base + coeffs_[k];
        return acc;
    }

    std::string str() const { return packed().get_str(); }

    static OElem from_packed(ConfigPtr cfg, const Int& packed, unsigned prec) {
        OElem x(cfg, prec);
        Int base = cfg->p_pow(cfg->coeff_digits(prec));
        Int rest = packed;
        for (unsigned k = 0; k < x.coeffs_.size(); ++k) {
            x.coeffs_[k] = rest % base;
            rest /= base;
        }
        x.normalize();
        return x;
    }

    static OElem from_string(ConfigPtr cfg, const std::string& s, unsigned prec) {
        Int v;
        if (mpz_set_str(v.get_mpz_t(), s.c_str(), 10) != 0)
            fail(errc::parse_error, "bad integer literal: " + s);
        return from_packed(std::move(cfg), v, prec);
    }

private:
    OElem binop_shell(const OElem& b) const {
        require_same_ring(*cfg_, *b.cfg_);
        return OElem(cfg_, std::min(prec_, b.prec_));
    }

    // p-adic valuation of a nonzero integer.
    long vp_int(const Int& x) const {
        Int r = x, q;
        long v = 0;
        while (mpz_divisible_p(r.get_mpz_t(), cfg_->p.get_mpz_t())) {
            mpz_divexact(q.get_mpz_t(), r.get_mpz_t(), cfg_->p.get_mpz_t());
            r = q;
            ++v;
        }
        return v;
    }

    OElem shift_up() const {
        // x * pi: rotate coordinates, top one picks up a factor p.
        OElem r(cfg_, prec_);
        unsigned e = cfg_->e;
        for (unsigned k = 1; k < e; ++k) r.coeffs_[k] = coeffs_[k - 1];
        r.coeffs_[0] = cfg_->p * coeffs_[e - 1];
        r.normalize();
        return r;
    }

    OElem shift_down() const {
        // x / pi, requiring pi | x. Costs one digit of claimed precision.
        if (prec_ == 0) fail(errc::precision_exhausted, "no precision left for pi-division");
        unsigned e = cfg_->e;
        OElem r(cfg_, prec_ - 1);
        if (coeffs_[0] % cfg_->p != 0)
            fail(errc::not_a_unit, "element not divisible by pi");
        for (unsigned k = 0; k + 1 < e; ++k) r.coeffs_[k] = coeffs_[k + 1];
        r.coeffs_[e - 1] = coeffs_[0] / cfg_->p;
        r.normalize();
        return r;
    }

    void normalize() {
        Int mod = cfg_->p_pow(cfg_->coeff_digits(prec_));
        for (auto& c : coeffs_) {
            c %= mod;
            if (c < 0) c += mod;
        }
    }

    ConfigPtr cfg_;
    unsigned prec_ = 0;
    std::vector<Int> coeffs_;
};

inline OElem sigma0_coeff(const OElem& x) { return x.sigma0(); }

// Teichmueller lift: the unique root of unity (or zero) congruent to a mod p,
// computed as the limit of the p-power map. Unramified coefficients only;
// each iteration gains one digit, so at most N rounds are needed.
inline OElem teichmuller(const ConfigPtr& cfg, const Int& a, unsigned prec) {
    if (cfg->e != 1)
        fail(errc::bad_calibration, "teichmuller lift is defined for e = 1 only");
    if (!cfg->p.fits_ulong_p())
        fail(errc::parse_error, "prime too large for teichmuller exponentiation");
    unsigned long p = cfg->p.get_ui();
    OElem x = OElem::from_int(cfg, a, prec);
    for (unsigned i = 0; i <= prec + 1; ++i) {
        OElem nx = x.pow(p);
        if (congruent(nx, x, long(prec))) return nx;
        x = nx;
    }
    throw std::logic_error("teichmuller iteration failed to stabilize");
}

}  // namespace robba
