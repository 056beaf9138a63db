#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "robba/laurent.hpp"
#include "robba/matrix.hpp"

namespace robba {

using LMatrix = Matrix<LaurentSeries>;

inline LMatrix sigma_matrix(const LMatrix& m, const SigmaAction& act) {
    return m.map([&](const LaurentSeries& x) { return sigma_apply(x, act); });
}

// Valuation of a matrix: min over entries. Exact only when some entry's
// certified minimum undercuts every zero-at-precision lower bound; otherwise
// a hidden coefficient could own the minimum and the result is just a floor.
inline PiVal matrix_min_pival(const LMatrix& m) {
    bool have = false;
    long best = 0;
    long floor = std::numeric_limits<long>::max();
    for (size_t i = 0; i < m.rows(); ++i)
        for (size_t j = 0; j < m.cols(); ++j) {
            PiVal pv = m.at(i, j).min_valuation();
            if (pv.exact) {
                best = have ? std::min(best, pv.v) : pv.v;
                have = true;
            } else {
                floor = std::min(floor, pv.v);
            }
        }
    if (have && best <= floor) return {best, true};
    return {std::min(floor, have ? best : floor), false};
}

// Finite free module with a sigma-semilinear map F: v -> A * sigma(v).
// The optional connection matrix G is relative to du: nabla(e_j) =
// sum_i G_ij e_i (x) du.
struct SigmaModule {
    size_t rank = 0;
    LMatrix frobenius;
    SigmaAction sigma;
    std::optional<LMatrix> connection;
};

inline long module_prec(const SigmaModule& m) {
    long p = std::numeric_limits<long>::max();
    for (size_t i = 0; i < m.rank; ++i)
        for (size_t j = 0; j < m.rank; ++j) p = std::min(p, m.frobenius.at(i, j).eff_prec());
    return p;
}

inline SigmaModule make_sigma_module(LMatrix frobenius, SigmaAction sigma,
                                     std::optional<LMatrix> connection = std::nullopt) {
    if (frobenius.rows() != frobenius.cols() || frobenius.rows() == 0)
        throw std::logic_error("frobenius matrix must be square and nonempty");
    if (connection && (connection->rows() != frobenius.rows() || connection->cols() != frobenius.cols()))
        throw std::logic_error("connection matrix shape mismatch");
    // Invertible after inverting p: the determinant must own a finite pi-adic
    // valuation at this precision.
    LaurentSeries d = frobenius.det();
    if (!d.min_valuation().exact)
        fail(errc::not_invertible_at_precision,
             "frobenius determinant vanishes at the working precision");
    return {frobenius.rows(), std::move(frobenius), std::move(sigma), std::move(connection)};
}

// Same module with F multiplied by q^l; every slope shifts by l*f because
// v_p(q) = f. Negative twists introduce pi denominators.
inline SigmaModule tate_twist(const SigmaModule& m, long l) {
    const auto& cfg = *m.frobenius.at(0, 0).config();
    long piw = l * long(cfg.e) * long(cfg.f);
    SigmaModule r = m;
    r.frobenius = m.frobenius.map([&](const LaurentSeries& x) { return x.scaled_pi(piw); });
    return r;
}

// Hom(M1, M2) on the matrix-unit basis E_{ab} ordered lexicographically:
// the Frobenius operator X -> A2 X^sigma A1^{-1} has matrix entries
// H[(i,j),(a,b)] = (A2)_{ia} (A1^{-1})_{bj}. The caller Tate-twists M1 first
// if the inverse would otherwise sink below the working precision.
inline SigmaModule hom_module(const SigmaModule& m1, const SigmaModule& m2, long horizon = 8) {
    LMatrix a1inv;
    try {
        a1inv = m1.frobenius.inverse(
            [&](const LaurentSeries& x) { return invert_laurent(x, horizon); });
    } catch (const error& e) {
        fail(errc::not_invertible_at_precision, e.what());
    }
    // The adjugate route leaves every entry carrying the determinant's full
    // pi content as a denominator; cancel it so compounds of the Hom matrix
    // do not burn precision they never owed.
    a1inv = a1inv.map([](const LaurentSeries& x) { return x.reduce_denom(); });
    size_t n1 = m1.rank, n2 = m2.rank;
    LaurentSeries zero = m2.frobenius.at(0, 0) - m2.frobenius.at(0, 0);
    LMatrix h(n1 * n2, n1 * n2, zero);
    for (size_t i = 0; i < n2; ++i)
        for (size_t j = 0; j < n1; ++j)
            for (size_t a = 0; a < n2; ++a)
                for (size_t b = 0; b < n1; ++b)
                    h.at(i * n1 + j, a * n1 + b) =
                        (m2.frobenius.at(i, a) * a1inv.at(b, j)).reduce_denom();
    return make_sigma_module(std::move(h), m1.sigma);
}

// Column vector of an n2 x n1 matrix in the E_{ab} ordering used by
// hom_module, and its inverse. Lets callers cross-check the Hom operator
// against the direct evaluation A2 X^sigma A1^{-1}.
inline LMatrix vec_matrix(const LMatrix& x) {
    LMatrix v(x.rows() * x.cols(), 1, x.at(0, 0) - x.at(0, 0));
    for (size_t a = 0; a < x.rows(); ++a)
        for (size_t b = 0; b < x.cols(); ++b) v.at(a * x.cols() + b, 0) = x.at(a, b);
    return v;
}

inline LMatrix unvec_matrix(const LMatrix& v, size_t rows, size_t cols) {
    LMatrix x(rows, cols, v.at(0, 0) - v.at(0, 0));
    for (size_t a = 0; a < rows; ++a)
        for (size_t b = 0; b < cols; ++b) x.at(a, b) = v.at(a * cols + b, 0);
    return x;
}

// Fv computed as A * sigma(v), compared against lambda * v through the guard.
inline bool eigenvector_check(const SigmaModule& m, const std::vector<LaurentSeries>& v,
                              const OElem& lambda) {
    if (v.size() != m.rank) throw std::logic_error("eigenvector arity mismatch");
    const auto& cfg = *lambda.config();
    std::vector<LaurentSeries> fv;
    for (size_t i = 0; i < m.rank; ++i) {
        LaurentSeries acc = m.frobenius.at(i, 0) * sigma_apply(v[0], m.sigma);
        for (size_t j = 1; j < m.rank; ++j)
            acc = acc + m.frobenius.at(i, j) * sigma_apply(v[j], m.sigma);
        fv.push_back(std::move(acc));
    }
    long target = std::numeric_limits<long>::max();
    std::vector<LaurentSeries> lv;
    for (size_t i = 0; i < m.rank; ++i) {
        lv.push_back(v[i].scaled(lambda));
        target = std::min({target, fv[i].eff_prec(), lv[i].eff_prec()});
    }
    target -= long(cfg.guard);
    for (size_t i = 0; i < m.rank; ++i)
        if (!congruent_at(fv[i], lv[i], target)) return false;
    return true;
}

// Partial sums of the smallest generic slopes, v_p-normalized. `exact` marks
// the triangular tier, where the diagonal valuations are the slopes
// themselves; otherwise the sums are compound-matrix estimates at the
// reported depth and `history` logs every depth for monotonicity inspection.
struct NewtonEstimate {
    std::vector<Rat> partial_sums;
    bool exact = false;
    unsigned depth = 0;
    std::vector<std::vector<Rat>> history;

    std::vector<Rat> slopes() const {
        std::vector<Rat> s;
        Rat prev = 0;
        for (const auto& v : partial_sums) {
            s.push_back(v - prev);
            prev = v;
        }
        return s;
    }
};

namespace detail {

inline bool constant_series(const LaurentSeries& x) {
    if (x.denom() != 0 || !x.entire()) return false;
    for (const auto& [i, c] : x.terms())
        if (i != 0) return false;
    return true;
}

// Triangular with constant diagonal: the shadow of the descending slope
// filtration is exact, and the slopes are the diagonal valuations.
inline std::optional<std::vector<Rat>> triangular_slopes(const LMatrix& a) {
    size_t n = a.rows();
    bool upper = true, lower = true;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            if (i > j && !a.at(i, j).is_zero_at_prec()) upper = false;
            if (i < j && !a.at(i, j).is_zero_at_prec()) lower = false;
        }
    if (!upper && !lower) return std::nullopt;
    std::vector<Rat> diag;
    for (size_t i = 0; i < n; ++i) {
        const LaurentSeries& d = a.at(i, i);
        if (!constant_series(d)) return std::nullopt;
        PiVal pv = d.min_valuation();
        if (!pv.exact) return std::nullopt;
        diag.push_back(make_rat(pv.v, long(d.config()->e)));
    }
    std::sort(diag.begin(), diag.end());
    return diag;
}

}  // namespace detail

// Generic-slope estimation. Exact tier: triangular Frobenius with constant
// diagonal. Estimate tier: s_k(n) = v_pi(k-th compound of A sigma(A) ...
// sigma^{n-1}(A)) / (n e), reported with the full depth history. The top sum
// s_rank is exact at every depth because determinants telescope.
inline NewtonEstimate newton_slopes(const SigmaModule& m, unsigned n_iter,
                                    bool force_estimate = false) {
    if (n_iter == 0) throw std::logic_error("slope estimation needs at least one iteration");
    if (m.rank > 6) throw std::logic_error("compound-matrix slopes support rank <= 6");
    if (!force_estimate) {
        if (auto diag = detail::triangular_slopes(m.frobenius)) {
            NewtonEstimate r;
            r.exact = true;
            r.depth = n_iter;
            Rat acc = 0;
            for (const Rat& s : *diag) {
                acc += s;
                r.partial_sums.push_back(acc);
            }
            return r;
        }
    }
    const auto& cfg = *m.frobenius.at(0, 0).config();
    NewtonEstimate r;
    r.exact = false;
    LMatrix p = m.frobenius;
    for (unsigned depth = 1; depth <= n_iter; ++depth) {
        if (depth > 1)
            p = (m.frobenius * sigma_matrix(p, m.sigma))
                    .map([](const LaurentSeries& x) { return x.reduce_denom(); });
        std::vector<Rat> sums;
        for (unsigned k = 1; k <= m.rank; ++k) {
            PiVal pv = matrix_min_pival(p.compound(k));
            if (!pv.exact)
                fail(errc::precision_exhausted,
                     "compound valuations climbed past the working precision");
            sums.push_back(make_rat(pv.v, long(depth) * long(cfg.e)));
        }
        r.history.push_back(sums);
        r.partial_sums = std::move(sums);
        r.depth = depth;
    }
    return r;
}

// Compatibility of F with the connection, entrywise:
// A' + G A == (d sigma(u)/du) A sigma(G) through the guard.
inline bool check_nabla_compat(const SigmaModule& m) {
    if (!m.connection) throw std::logic_error("module carries no connection");
    const LMatrix& a = m.frobenius;
    const LMatrix& g = *m.connection;
    const auto& cfg = *a.at(0, 0).config();
    unsigned prec = std::min(a.at(0, 0).prec(), m.sigma.image_prec(a.at(0, 0).prec()));
    LaurentSeries dimg = derive(m.sigma.image(prec));
    LMatrix lhs = a.map([](const LaurentSeries& x) { return derive(x); }) + g * a;
    LMatrix rhs = (a * sigma_matrix(g, m.sigma)).map([&](const LaurentSeries& x) { return x * dimg; });
    long target = std::numeric_limits<long>::max();
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = 0; j < a.cols(); ++j)
            target = std::min({target, lhs.at(i, j).eff_prec(), rhs.at(i, j).eff_prec()});
    target -= long(cfg.guard);
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = 0; j < a.cols(); ++j)
            if (!congruent_at(lhs.at(i, j), rhs.at(i, j), target)) return false;
    return true;
}

// Basis of {v : Av = v} for a constant Frobenius matrix over O, by a
// Smith-style reduction of A - I at the working precision: column operations
// are tracked so that the kernel of the diagonalized matrix pulls back.
inline std::vector<std::vector<OElem>> fixed_vectors_constant(const SigmaModule& m) {
    size_t n = m.rank;
    const auto& cfg = m.frobenius.at(0, 0).config();
    unsigned prec = m.frobenius.at(0, 0).prec();
    OElem zero(cfg, prec), one = OElem::from_int(cfg, 1, prec);
    Matrix<OElem> b(n, n, zero);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            const LaurentSeries& x = m.frobenius.at(i, j);
            if (!detail::constant_series(x))
                fail(errc::bad_calibration, "fixed vectors need a constant frobenius matrix");
            b.at(i, j) = x.coeff_num(0) - (i == j ? one : zero);
        }
    Matrix<OElem> w = Matrix<OElem>::identity(n, zero, one);

    size_t t = 0;
    for (; t < n; ++t) {
        // Pivot: entry of smallest exact valuation in the remaining block.
        bool found = false;
        size_t pi = t, pj = t;
        long best = 0;
        for (size_t i = t; i < n; ++i)
            for (size_t j = t; j < n; ++j) {
                PiVal pv = b.at(i, j).pival();
                if (pv.exact && (!found || pv.v < best)) {
                    found = true;
                    best = pv.v;
                    pi = i;
                    pj = j;
                }
            }
        if (!found) break;  // the rest vanishes at precision
        for (size_t j = 0; j < n; ++j) std::swap(b.at(t, j), b.at(pi, j));
        for (size_t i = 0; i < n; ++i) {
            std::swap(b.at(i, t), b.at(i, pj));
            std::swap(w.at(i, t), w.at(i, pj));
        }
        OElem unit_inv = b.at(t, t).mul_pi(-best).inv();
        for (size_t i = t + 1; i < n; ++i) {
            if (b.at(i, t).is_zero_at_prec()) continue;
            OElem f = b.at(i, t).mul_pi(-best) * unit_inv;
            for (size_t j = t; j < n; ++j) b.at(i, j) = b.at(i, j) - f * b.at(t, j);
        }
        for (size_t j = t + 1; j < n; ++j) {
            if (b.at(t, j).is_zero_at_prec()) continue;
            OElem f = b.at(t, j).mul_pi(-best) * unit_inv;
            for (size_t i = t; i < n; ++i) b.at(i, j) = b.at(i, j) - f * b.at(i, t);
            for (size_t i = 0; i < n; ++i) w.at(i, j) = w.at(i, j) - f * w.at(i, t);
        }
    }
    std::vector<std::vector<OElem>> basis;
    for (size_t k = t; k < n; ++k) {
        std::vector<OElem> v;
        for (size_t i = 0; i < n; ++i) v.push_back(w.at(i, k));
        basis.push_back(std::move(v));
    }
    return basis;
}

}  // namespace robba
