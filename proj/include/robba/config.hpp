#pragma once

#include <gmpxx.h>

#include <memory>
#include <string>

#include "robba/errors.hpp"

namespace robba {

using Int = mpz_class;
using Rat = mpq_class;

inline Rat make_rat(long num, long den) {
    Rat r(num, den);
    r.canonicalize();
    return r;
}

// Parameters of the coefficient ring O: a complete discrete valuation ring
// with uniformizer pi and residue field F_p. We fix the Eisenstein relation
// pi^e = p, so elements of O are polynomials in pi of degree < e with Z_p
// coefficients. Valuations are normalized by v_p(p) = 1, hence v_p(pi) = 1/e.
//
// q = p^f is the power used by the Frobenius lift on series (u -> u^q by
// default); the residue field itself stays F_p and sigma acts trivially on
// coefficients.
struct RingConfig {
    Int p = 2;
    unsigned f = 1;
    unsigned e = 1;
    unsigned n_default = 12;
    unsigned guard = 2;

    // Number of base-p digits each pi-coordinate carries at precision N.
    unsigned coeff_digits(unsigned N) const { return (N + e - 1) / e; }

    Int p_pow(unsigned k) const {
        Int r;
        mpz_pow_ui(r.get_mpz_t(), p.get_mpz_t(), k);
        return r;
    }

    Int q() const { return p_pow(f); }

    // Frobenius exponent as a plain integer, for use in u-exponent
    // bookkeeping. Desk-scale guard: series exponents live in long.
    long q_long() const {
        Int v = q();
        if (!v.fits_slong_p())
            fail(errc::window_overflow, "q = p^f too large for series exponents");
        return v.get_si();
    }
};

using ConfigPtr = std::shared_ptr<const RingConfig>;

inline ConfigPtr make_config(long p, unsigned f = 1, unsigned e = 1, unsigned n_default = 12,
                             unsigned guard = 2) {
    auto c = std::make_shared<RingConfig>();
    c->p = p;
    c->f = f;
    c->e = e;
    c->n_default = n_default;
    c->guard = guard;
    return c;
}

inline bool same_ring(const RingConfig& a, const RingConfig& b) {
    return a.p == b.p && a.f == b.f && a.e == b.e;
}

inline void require_same_ring(const RingConfig& a, const RingConfig& b) {
    if (!same_ring(a, b)) throw std::logic_error("mixed ring configurations");
}

// Valuation of a truncated quantity in pi-adic units. exact == false means
// the element is indistinguishable from zero at the working precision and the
// true valuation is only known to be >= v.
struct PiVal {
    long v = 0;
    bool exact = true;

    friend bool operator==(const PiVal&, const PiVal&) = default;
};

// Same, but in v_p units (rational since v_p(pi) = 1/e).
struct Val {
    Rat v;
    bool exact = true;
};

}  // namespace robba
