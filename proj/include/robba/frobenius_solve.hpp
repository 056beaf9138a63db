#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "robba/laurent.hpp"
#include "robba/matrix.hpp"
#include "robba/sigma_module.hpp"

namespace robba {

// Solve lambda * y^sigma - y = x by the convergent series
// y = -sum_{k>=0} lambda^(k) x^{sigma^k}, where lambda^(k) collapses to
// lambda^k because sigma fixes the coefficient ring here. Each summand gains
// v(lambda), so ceil(N / v(lambda)) terms reach the target; the dropped tail
// is below pi^N. A second solution would differ by z with lambda z^sigma = z,
// whose valuation the same bound pushes past N, so y is unique at precision.
inline LaurentSeries solve_twisted(const OElem& lambda, const LaurentSeries& x,
                                   const SigmaAction& act, long n_target) {
    require_same_ring(*lambda.config(), *x.config());
    if (n_target <= 0 || n_target > x.eff_prec())
        throw std::logic_error("target precision must fit inside the input's precision");
    PiVal lv = lambda.pival();
    // An inexact pival means lambda vanishes at its own precision; its claimed
    // digits still lower-bound the contraction.
    long vl = lv.exact ? lv.v : long(lambda.prec());
    if (vl <= 0) fail(errc::lambda_is_unit, "twisted solve needs v(lambda) > 0");
    long terms = (n_target + vl - 1) / vl;
    LaurentSeries acc = x;
    LaurentSeries xs = x;
    OElem lpow = OElem::from_int(lambda.config(), 1, lambda.prec());
    for (long k = 1; k < terms; ++k) {
        xs = sigma_apply(xs, act);
        lpow = lpow * lambda;
        acc = acc + xs.scaled(lpow);
    }
    return -acc;
}

// Splitting datum for -X + A X^sigma D^{-1} = B. The input B is the equation's
// right-hand side; the block conjugation
//   [[I,-X],[0,I]] * [[A, -B*D],[0, D]] * [[I, X^sigma],[0, I]] = [[A,0],[0,D]]
// then holds on the nose (the displayed corner is A X^sigma + corner - X D, so
// the corner block the solution diagonalizes is -B*D).
struct SplitCertificate {
    LMatrix x;
    long residual_val = 0;
    unsigned iterations = 0;
    bool conjugation_ok = false;
    unsigned max_denom = 0;
};

namespace detail {

inline LMatrix block2(const LMatrix& tl, const LMatrix& tr, const LMatrix& bl,
                      const LMatrix& br, const LaurentSeries& zero) {
    size_t n1 = tl.rows(), n2 = br.rows();
    LMatrix m(n1 + n2, n1 + n2, zero);
    for (size_t i = 0; i < n1; ++i)
        for (size_t j = 0; j < n1; ++j) m.at(i, j) = tl.at(i, j);
    for (size_t i = 0; i < n1; ++i)
        for (size_t j = 0; j < n2; ++j) m.at(i, n1 + j) = tr.at(i, j);
    for (size_t i = 0; i < n2; ++i)
        for (size_t j = 0; j < n1; ++j) m.at(n1 + i, j) = bl.at(i, j);
    for (size_t i = 0; i < n2; ++i)
        for (size_t j = 0; j < n2; ++j) m.at(n1 + i, n1 + j) = br.at(i, j);
    return m;
}

}  // namespace detail

// Solve -X + A X^sigma D^{-1} = B by X = -sum_{k>=0} T^k(B) with
// T(Y) = A Y^sigma D^{-1}. The slope hypothesis (generic slopes of the A-block
// all above those of the D-block) is operationalized as a contraction probe:
// every matrix unit must gain at least one pi digit within k_max applications
// of T, measured before any summing starts. Differences of solutions satisfy
// Z = T(Z), which the same contraction forces to zero, so X is unique at
// precision.
inline SplitCertificate split_extension(const LMatrix& a, const LMatrix& b, const LMatrix& d,
                                        const SigmaAction& act, long n_target,
                                        long horizon = 16, unsigned k_max = 0) {
    size_t n1 = a.rows(), n2 = d.rows();
    if (a.cols() != n1 || d.cols() != n2 || b.rows() != n1 || b.cols() != n2 || n1 == 0 || n2 == 0)
        throw std::logic_error("split blocks must be square A, square D, and n1 x n2 B");
    const auto& cfg = *b.at(0, 0).config();
    if (n_target <= 0) throw std::logic_error("positive target precision required");
    if (k_max == 0) k_max = 8 * unsigned(n1 * n2);

    LMatrix dinv = [&] {
        try {
            return d.inverse([&](const LaurentSeries& s) { return invert_laurent(s, horizon); })
                .map([](const LaurentSeries& s) { return s.reduce_denom(); });
        } catch (const error& e) {
            fail(errc::not_invertible_at_precision, e.what());
        }
    }();
    auto op = [&](const LMatrix& y) {
        return (a * sigma_matrix(y, act) * dinv)
            .map([](const LaurentSeries& s) { return s.reduce_denom(); });
    };

    LaurentSeries zero(b.at(0, 0).config(), b.at(0, 0).tag(), b.at(0, 0).r_param(),
                       b.at(0, 0).prec());
    LaurentSeries one = LaurentSeries::constant(b.at(0, 0).config(), b.at(0, 0).tag(),
                                                b.at(0, 0).r_param(), b.at(0, 0).prec(),
                                                OElem::from_int(b.at(0, 0).config(), 1,
                                                                b.at(0, 0).prec()));
    unsigned k_block = 1;
    for (size_t r = 0; r < n1; ++r)
        for (size_t c = 0; c < n2; ++c) {
            LMatrix probe(n1, n2, zero);
            probe.at(r, c) = one;
            bool gained = false;
            for (unsigned k = 1; k <= k_max; ++k) {
                probe = op(probe);
                if (matrix_min_pival(probe).v >= 1) {
                    gained = true;
                    k_block = std::max(k_block, k);
                    break;
                }
            }
            if (!gained)
                fail(errc::no_contraction,
                     "operator failed to gain a pi digit within the probe budget: "
                     "slope ordering of the blocks looks violated");
        }

    SplitCertificate cert{LMatrix(n1, n2, zero), 0, 0, false, 0};
    LMatrix sum = b;
    LMatrix term = b;
    unsigned limit = k_block * unsigned(n_target) + k_max;
    for (;;) {
        term = op(term);
        ++cert.iterations;
        if (matrix_min_pival(term).v >= n_target) break;
        sum = sum + term;
        if (cert.iterations > limit)
            fail(errc::no_contraction, "splitting sum failed to converge within its budget");
    }
    cert.x = -sum;

    LMatrix residual = op(cert.x) - cert.x - b;
    cert.residual_val = matrix_min_pival(residual).v;
    for (size_t i = 0; i < n1; ++i)
        for (size_t j = 0; j < n2; ++j)
            cert.max_denom = std::max(cert.max_denom, cert.x.at(i, j).denom());

    // Conjugation certificate, re-multiplied from scratch.
    LMatrix zb12(n1, n2, zero), zb21(n2, n1, zero);
    LMatrix id1 = LMatrix::identity(n1, zero, one), id2 = LMatrix::identity(n2, zero, one);
    LMatrix mext = detail::block2(a, -(b * d), zb21, d, zero);
    LMatrix u1 = detail::block2(id1, -cert.x, zb21, id2, zero);
    LMatrix u2 = detail::block2(id1, sigma_matrix(cert.x, act), zb21, id2, zero);
    LMatrix diff = u1 * mext * u2 - detail::block2(a, zb12, zb21, d, zero);
    long target = n_target - long(cfg.guard);
    cert.conjugation_ok = matrix_min_pival(diff).v >= target;
    return cert;
}

}  // namespace robba
