#pragma once

// Constructive reduction of unimodular tuples over K<t_1..t_n>_rho to
// (1,0,...,0). A stage shears the last variable until every entry carries a
// unit leading coefficient, then runs a division descent over B[t_n] whose
// pivot degree strictly drops; when no remainder qualifies as the next pivot,
// the unimodularity witness manufactures one. Every step is an invertible row
// operation, recorded in a certificate with an explicit inverse, and every
// certificate is re-verified by plain multiplication before it is returned.

#include <algorithm>
#include <climits>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "robba/errors.hpp"
#include "robba/matrix.hpp"
#include "robba/tate.hpp"

namespace robba {

// A tuple whose entries generate the unit ideal, together with the witness
// that proves it: sum g_i f_i == 1 at working precision. The witness may be
// left empty over zero or one variable, where the reduction derives its own;
// over two or more variables it is a required input.
struct UnimodularTuple {
    std::vector<TateSeries> entries;
    std::vector<TateSeries> witness;
};

enum class MoveKind { elem, tj, weier };

// One recorded step of a reduction. `op` refines the kind: elem moves are
// "swap" (rows row/other), "scale" (row multiplied by a unit), and "axpy"
// (row += c * other); tj moves are "shear"/"unshear" with exponent j; weier
// moves are "rescale" (row scaled by the inverse of a Gauss unit).
struct Move {
    MoveKind kind;
    std::string op;
    std::size_t row = 0;
    std::size_t other = 0;
    unsigned j = 0;
};

inline const char* move_kind_name(MoveKind k) {
    switch (k) {
        case MoveKind::elem: return "elem";
        case MoveKind::tj: return "tj";
        case MoveKind::weier: return "weier";
    }
    return "?";
}

// M f == e_1 with the explicit inverse and the move trace that produced it.
// `verified` reports the independent re-multiplication pass; a certificate
// that fails that pass is never returned, construction throws instead.
struct ReductionCertificate {
    Matrix<TateSeries> m;
    Matrix<TateSeries> m_inv;
    std::vector<Move> moves;
    bool verified = false;
};

// Output of one polynomial stage: the certificate transforms the input tuple
// into `tuple`, which is free of the stage variable.
struct StageReduction {
    ReductionCertificate cert;
    UnimodularTuple tuple;
};

namespace qs_detail {

inline bool coeffs_at_least(const TateSeries& x, long floor) {
    for (const auto& [exp, c] : x.terms()) {
        (void)exp;
        if (c.pival().v < floor) return false;
    }
    return true;
}

inline bool zero_mod(const TateSeries& x, long floor) {
    return long(x.prec()) >= floor && coeffs_at_least(x, floor);
}

inline bool one_mod(const TateSeries& x, long floor) {
    return zero_mod(x - TateSeries::one(x.config(), x.radius(), x.prec(), x.cap()), floor);
}

// Exactly the stored constant 1: the shape division and clearing moves rely
// on for exact cancellation.
inline bool literal_one(const TateSeries& x) {
    if (x.terms().size() != 1) return false;
    TateSeries::Exp z(x.nvars(), 0);
    auto it = x.terms().begin();
    if (it->first != z) return false;
    long ap = it->second.abs_prec();
    if (ap <= 0) return false;
    KElem d = it->second - KElem::from_int(x.config(), 1, unsigned(ap));
    return d.is_zero_at_prec();
}

struct Lead {
    long deg = -1;
    bool unit = false;
};

// Literal top degree in `var` and whether that slice is a unit of the base.
// This is the exact qualification weierstrass_divide needs of a divisor.
inline Lead literal_lead(const TateSeries& x, std::size_t var) {
    long d = x.deg_in(var);
    if (d < 0) return {};
    return {d, is_unit(x.coeff_slice(var, unsigned(d)))};
}

inline void require_compatible(const std::vector<TateSeries>& xs) {
    const TateSeries& a = xs.front();
    for (const auto& x : xs) {
        if (x.nvars() != a.nvars() || !(x.radius() == a.radius()))
            throw std::logic_error("tuple entries live on different polydiscs");
        const auto& c1 = *a.config();
        const auto& c2 = *x.config();
        if (c1.p != c2.p || c1.f != c2.f || c1.e != c2.e)
            throw std::logic_error("tuple entries use different coefficient rings");
    }
}

// Row-operation engine: applies moves to the tuple, accumulates M and its
// inverse, transports the witness, and re-checks the witness after every
// mutation. All moves are exact; control decisions read the mutated state.
class Engine {
public:
    Engine(std::vector<TateSeries> f, std::vector<TateSeries> g, long floor)
        : f_(std::move(f)), g_(std::move(g)), floor_(floor) {
        const TateSeries& s = f_.front();
        TateSeries zero(s.config(), s.radius(), s.prec(), s.cap());
        TateSeries one = TateSeries::one(s.config(), s.radius(), s.prec(), s.cap());
        m_ = Matrix<TateSeries>::identity(f_.size(), zero, one);
        minv_ = m_;
    }

    const std::vector<TateSeries>& entries() const { return f_; }
    const std::vector<TateSeries>& witness() const { return g_; }
    const Matrix<TateSeries>& m() const { return m_; }
    const Matrix<TateSeries>& m_inv() const { return minv_; }
    std::vector<Move> take_moves() { return std::move(moves_); }
    bool with_witness() const { return !g_.empty(); }

    // Gauss-unit fast exit: normalize a unit entry to the literal constant 1,
    // clear every other entry against it, and bring it to the front. Returns
    // false when no entry is a unit of the whole algebra.
    bool unit_round() {
        for (std::size_t i = 0; i < f_.size(); ++i) {
            if (f_[i].is_zero_at_prec() || !is_unit(f_[i])) continue;
            if (!literal_one(f_[i])) {
                TateSeries u = f_[i];
                scale_row(i, invert_unit(u), u, MoveKind::weier, "rescale");
                if (!literal_one(f_[i]))
                    fail(errc::precision_exhausted,
                         "unit normalization left residue; retry at doubled precision (N' = 2N)");
            }
            for (std::size_t k = 0; k < f_.size(); ++k) {
                if (k == i || f_[k].is_zero_at_prec()) continue;
                axpy(k, i, -f_[k]);
                if (!f_[k].is_zero_at_prec())
                    fail(errc::precision_exhausted,
                         "clearing against a unit left residue; retry at doubled precision (N' = 2N)");
            }
            swap_rows(0, i);
            return true;
        }
        return false;
    }

    // Division descent in `var`. Each round divides everything by the pivot
    // of least qualifying degree; the pivot degree strictly drops until some
    // entry becomes a unit and the fast exit finishes with the tuple at e_1.
    void descend(std::size_t var) {
        long budget = 4;
        for (const auto& e : f_) {
            long d = e.deg_in(var);
            budget += (d > 0 ? d : 0) + 1;
        }
        for (long round = 0; round <= budget; ++round) {
            if (unit_round()) return;
            std::optional<std::size_t> piv;
            long dbest = 0;
            for (std::size_t i = 0; i < f_.size(); ++i) {
                if (f_[i].is_zero_at_prec()) continue;
                Lead l = literal_lead(f_[i], var);
                if (!l.unit) continue;
                if (!piv || l.deg < dbest) {
                    piv = i;
                    dbest = l.deg;
                }
            }
            if (!piv)
                fail(errc::no_unit_leading_entry,
                     "no entry has a unit leading coefficient in the stage variable");
            // A qualifying degree-0 entry is a unit of the whole algebra and
            // would have taken the fast exit, so dbest >= 1 here.
            for (std::size_t i = 0; i < f_.size(); ++i) {
                if (i == *piv || f_[i].is_zero_at_prec()) continue;
                if (f_[i].deg_in(var) >= dbest) reduce_entry(i, *piv, var);
            }
            if (best_below(var, dbest)) continue;
            if (suslin_round(*piv, dbest, var)) continue;
            fail(errc::degree_stuck,
                 "division no longer lowers the pivot degree; retry at doubled precision (N' = 2N)");
        }
        fail(errc::degree_stuck,
             "descent exceeded its round budget; retry at doubled precision (N' = 2N)");
    }

private:
    bool best_below(std::size_t var, long d) const {
        for (const auto& e : f_) {
            if (e.is_zero_at_prec()) continue;
            Lead l = literal_lead(e, var);
            if (l.unit && l.deg < d) return true;
        }
        return false;
    }

    // With pivot P monic-like of degree d and the other entries r_i, the
    // witness identity reduced mod P gives t^{d-1} = sum_i chat_i r_i mod P
    // with explicit coefficients. Adding every i != w term into slot w and
    // reducing mod P leaves t^{d-1} + ((1 - chat_w) r_w mod P) there: for a
    // zero victim that is exactly t^{d-1}, otherwise the polluted top may or
    // may not be a unit, so each victim is tried in turn.
    bool suslin_round(std::size_t piv, long d, std::size_t var) {
        if (!with_witness() || f_.size() < 3) return false;
        std::vector<std::size_t> victims;
        for (std::size_t i = 0; i < f_.size(); ++i)
            if (i != piv && f_[i].is_zero_at_prec()) victims.push_back(i);
        for (std::size_t i = 0; i < f_.size(); ++i)
            if (i != piv && !f_[i].is_zero_at_prec()) victims.push_back(i);
        for (std::size_t w : victims) {
            for (std::size_t i = 0; i < f_.size(); ++i) {
                if (i == piv || i == w) continue;
                if (f_[i].is_zero_at_prec() || g_[i].is_zero_at_prec()) continue;
                auto [qg, ci] = weierstrass_divide(g_[i], f_[piv], var);
                (void)qg;
                if (ci.is_zero_at_prec()) continue;
                TateSeries shifted = ci.var_shifted(var, unsigned(d - 1));
                auto [qc, chat] = weierstrass_divide(shifted, f_[piv], var);
                (void)qc;
                if (chat.is_zero_at_prec()) continue;
                axpy(w, i, chat);
            }
            if (!f_[w].is_zero_at_prec() && f_[w].deg_in(var) >= d) reduce_entry(w, piv, var);
            if (best_below(var, d)) return true;
        }
        return false;
    }

    // f_dst <- f_dst mod f_piv, realized as the row operation subtracting the
    // Weierstrass quotient times the pivot row.
    void reduce_entry(std::size_t dst, std::size_t piv, std::size_t var) {
        auto [q, r] = weierstrass_divide(f_[dst], f_[piv], var);
        (void)r;
        if (q.is_zero_at_prec()) return;
        axpy(dst, piv, -q);
    }

    void axpy(std::size_t dst, std::size_t src, const TateSeries& c) {
        if (c.is_zero_at_prec() || f_[src].is_zero_at_prec()) return;
        f_[dst] = f_[dst] + c * f_[src];
        for (std::size_t k = 0; k < f_.size(); ++k)
            m_.at(dst, k) = m_.at(dst, k) + c * m_.at(src, k);
        for (std::size_t k = 0; k < f_.size(); ++k)
            minv_.at(k, src) = minv_.at(k, src) - minv_.at(k, dst) * c;
        if (with_witness()) g_[src] = g_[src] - c * g_[dst];
        moves_.push_back({MoveKind::elem, "axpy", dst, src, 0});
        check_witness();
    }

    void swap_rows(std::size_t a, std::size_t b) {
        if (a == b) return;
        std::swap(f_[a], f_[b]);
        for (std::size_t k = 0; k < f_.size(); ++k) std::swap(m_.at(a, k), m_.at(b, k));
        for (std::size_t k = 0; k < f_.size(); ++k) std::swap(minv_.at(k, a), minv_.at(k, b));
        if (with_witness()) std::swap(g_[a], g_[b]);
        moves_.push_back({MoveKind::elem, "swap", a, b, 0});
    }

    // f_row *= s, with s_inv the explicit inverse for the M^{-1} column.
    void scale_row(std::size_t row, const TateSeries& s, const TateSeries& s_inv, MoveKind kind,
                   const char* op) {
        f_[row] = f_[row] * s;
        for (std::size_t k = 0; k < f_.size(); ++k) m_.at(row, k) = m_.at(row, k) * s;
        for (std::size_t k = 0; k < f_.size(); ++k)
            minv_.at(k, row) = minv_.at(k, row) * s_inv;
        if (with_witness()) g_[row] = g_[row] * s_inv;
        moves_.push_back({kind, op, row, row, 0});
        check_witness();
    }

    void check_witness() {
        if (!with_witness()) return;
        TateSeries s = g_[0] * f_[0];
        for (std::size_t i = 1; i < f_.size(); ++i) s = s + g_[i] * f_[i];
        if (!one_mod(s, floor_))
            fail(errc::precision_exhausted,
                 "witness transport lost certification; retry at doubled precision (N' = 2N)");
    }

    std::vector<TateSeries> f_;
    std::vector<TateSeries> g_;
    long floor_;
    Matrix<TateSeries> m_;
    Matrix<TateSeries> minv_;
    std::vector<Move> moves_;
};

struct RawCert {
    Matrix<TateSeries> m;
    Matrix<TateSeries> m_inv;
    std::vector<Move> moves;
};

inline std::vector<TateSeries> apply_rows(const Matrix<TateSeries>& m,
                                          const std::vector<TateSeries>& f) {
    std::vector<TateSeries> out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        TateSeries acc = m.at(i, 0) * f[0];
        for (std::size_t k = 1; k < f.size(); ++k) acc = acc + m.at(i, k) * f[k];
        out.push_back(std::move(acc));
    }
    return out;
}

inline std::vector<TateSeries> unit_vector_like(const std::vector<TateSeries>& f) {
    const TateSeries& s = f.front();
    std::vector<TateSeries> e;
    e.push_back(TateSeries::one(s.config(), s.radius(), s.prec(), s.cap()));
    for (std::size_t i = 1; i < f.size(); ++i)
        e.push_back(TateSeries(s.config(), s.radius(), s.prec(), s.cap()));
    return e;
}

// Independent pass: M f must match the target tuple and M M^{-1} must match
// the identity, both mod pi^floor. Anything else is a precision failure.
inline void verify_certificate(const Matrix<TateSeries>& m, const Matrix<TateSeries>& m_inv,
                               const std::vector<TateSeries>& f,
                               const std::vector<TateSeries>& target, long floor) {
    auto mf = apply_rows(m, f);
    for (std::size_t i = 0; i < mf.size(); ++i)
        if (!zero_mod(mf[i] - target[i], floor))
            fail(errc::precision_exhausted,
                 "certificate failed re-verification; retry at doubled precision (N' = 2N)");
    Matrix<TateSeries> prod = m * m_inv;
    for (std::size_t i = 0; i < prod.rows(); ++i)
        for (std::size_t k = 0; k < prod.cols(); ++k) {
            bool ok = (i == k) ? one_mod(prod.at(i, k), floor) : zero_mod(prod.at(i, k), floor);
            if (!ok)
                fail(errc::precision_exhausted,
                     "certificate inverse failed re-verification; retry at doubled precision (N' = 2N)");
        }
}

inline long working_floor(const std::vector<TateSeries>& f, const std::vector<TateSeries>& g) {
    long p = LONG_MAX;
    for (const auto& e : f) p = std::min(p, long(e.prec()));
    for (const auto& e : g) p = std::min(p, long(e.prec()));
    long floor = p - long(f.front().config()->guard);
    if (floor <= 0) fail(errc::precision_exhausted, "no working precision after the guard");
    return floor;
}

// Induction on the variable count. Each level shears the last variable so
// that every entry is unit-leading, descends to e_1 in the sheared frame,
// recurses on the dropped tuple, and conjugates the composed moves back
// through the inverse shear.
inline RawCert reduce_rec(const std::vector<TateSeries>& f, const std::vector<TateSeries>& g,
                          unsigned jmax, long floor) {
    std::size_t n = f.front().nvars();
    if (n == 0) {
        Engine eng(f, g, floor);
        if (!eng.unit_round())
            fail(errc::no_unit_leading_entry, "no invertible entry at this precision");
        return {eng.m(), eng.m_inv(), eng.take_moves()};
    }
    std::size_t var = n - 1;

    std::optional<unsigned> jfound;
    std::vector<TateSeries> fs;
    for (unsigned j = 0; j <= jmax && !jfound; ++j) {
        std::vector<TateSeries> cand;
        bool ok = true;
        try {
            for (const auto& e : f) cand.push_back(tj_transform(e, j, TjMode::field));
        } catch (const error&) {
            continue;
        }
        for (const auto& e : cand) {
            if (e.is_zero_at_prec()) continue;
            Lead l = literal_lead(e, var);
            if (!(l.unit || is_unit(e))) {
                ok = false;
                break;
            }
        }
        if (ok) {
            jfound = j;
            fs = std::move(cand);
        }
    }
    if (!jfound)
        fail(errc::jmax_exceeded, "no shear exponent within the cap made every entry unit-leading");
    unsigned j = *jfound;
    std::vector<TateSeries> gs;
    gs.reserve(g.size());
    for (const auto& e : g) gs.push_back(j ? tj_transform(e, j, TjMode::field) : e);

    Engine eng(fs, gs, floor);
    eng.descend(var);

    // The tuple is e_1 in the sheared frame; recurse over one variable fewer
    // to mirror the induction (trivially, but the certificate follows it).
    const Rat evar = f.front().radius().e.at(var);
    std::vector<TateSeries> fd;
    for (const auto& e : eng.entries()) {
        if (e.deg_in(var) > 0)
            fail(errc::degree_stuck, "stage left a variable-dependent entry behind");
        fd.push_back(e.coeff_slice(var, 0).drop_var(var));
    }
    std::vector<TateSeries> gd = unit_vector_like(fd);

    RawCert sub = reduce_rec(fd, gd, jmax, floor);

    auto lift = [&](const TateSeries& x) { return x.lift_var(var, 0, evar); };
    Matrix<TateSeries> m = sub.m.map(lift) * eng.m();
    Matrix<TateSeries> m_inv = eng.m_inv() * sub.m_inv.map(lift);

    std::vector<Move> moves;
    if (j) moves.push_back({MoveKind::tj, "shear", 0, 0, j});
    auto em = eng.take_moves();
    moves.insert(moves.end(), em.begin(), em.end());
    moves.insert(moves.end(), sub.moves.begin(), sub.moves.end());
    if (j) {
        auto unshear = [&](const TateSeries& x) { return tj_inverse(x, j, TjMode::field); };
        m = m.map(unshear);
        m_inv = m_inv.map(unshear);
        moves.push_back({MoveKind::tj, "unshear", 0, 0, j});
    }
    return {std::move(m), std::move(m_inv), std::move(moves)};
}

}  // namespace qs_detail

// True iff sum g_i f_i == 1 mod pi^{N-g} can be certified from the stored
// data. Structural mismatches and precision shortfalls report false, never
// throw.
inline bool verify_unimodular(const std::vector<TateSeries>& f,
                              const std::vector<TateSeries>& g) {
    if (f.empty() || f.size() != g.size()) return false;
    try {
        std::vector<TateSeries> all = f;
        all.insert(all.end(), g.begin(), g.end());
        qs_detail::require_compatible(all);
        long floor = qs_detail::working_floor(f, g);
        TateSeries s = g[0] * f[0];
        for (std::size_t i = 1; i < f.size(); ++i) s = s + g[i] * f[i];
        return qs_detail::one_mod(s, floor);
    } catch (const error&) {
        return false;
    } catch (const std::logic_error&) {
        return false;
    }
}

inline bool verify_unimodular(const UnimodularTuple& t) {
    return verify_unimodular(t.entries, t.witness);
}

// One polynomial stage over B[t_var]: elementary moves driving the tuple free
// of the stage variable, pivot degrees strictly dropping, witness transported
// through every move. Requires a valid witness and at least one entry with a
// unit leading coefficient in the variable.
inline StageReduction poly_reduce(const UnimodularTuple& t, std::size_t var) {
    if (t.entries.empty()) throw std::logic_error("poly_reduce: empty tuple");
    qs_detail::require_compatible(t.entries);
    if (var >= t.entries.front().nvars())
        throw std::logic_error("poly_reduce: variable index out of range");
    if (t.witness.size() != t.entries.size())
        throw std::logic_error("poly_reduce: witness required");
    if (!verify_unimodular(t.entries, t.witness))
        fail(errc::bad_calibration, "witness does not certify unimodularity at this precision");
    bool anylead = false;
    for (const auto& e : t.entries) {
        if (e.is_zero_at_prec()) continue;
        auto l = qs_detail::literal_lead(e, var);
        if (l.unit || is_unit(e)) {
            anylead = true;
            break;
        }
    }
    if (!anylead)
        fail(errc::no_unit_leading_entry,
             "no entry has a unit leading coefficient in the stage variable");
    long floor = qs_detail::working_floor(t.entries, t.witness);
    qs_detail::Engine eng(t.entries, t.witness, floor);
    eng.descend(var);
    qs_detail::verify_certificate(eng.m(), eng.m_inv(), t.entries, eng.entries(), floor);
    UnimodularTuple out{eng.entries(), eng.witness()};
    Matrix<TateSeries> m = eng.m();
    Matrix<TateSeries> m_inv = eng.m_inv();
    return {{std::move(m), std::move(m_inv), eng.take_moves(), true}, std::move(out)};
}

// Full reduction to (1,0,...,0) by induction on the variable count. Desk
// scale: at most 5 entries over at most 3 variables. The witness is required
// over 2 or more variables; over K and K<t> the first row of M supplies one,
// which is checked before the certificate is released.
inline ReductionCertificate unimodular_reduce(const UnimodularTuple& t, unsigned jmax = 16) {
    if (t.entries.empty()) throw std::logic_error("unimodular_reduce: empty tuple");
    if (t.entries.size() > 5) throw std::logic_error("unimodular_reduce: at most 5 entries");
    qs_detail::require_compatible(t.entries);
    std::size_t n = t.entries.front().nvars();
    if (n > 3) throw std::logic_error("unimodular_reduce: at most 3 variables");
    const std::vector<TateSeries>& g = t.witness;
    if (g.empty()) {
        if (n >= 2)
            throw std::logic_error(
                "unimodular_reduce: a witness is required over two or more variables");
    } else {
        if (g.size() != t.entries.size())
            throw std::logic_error("unimodular_reduce: witness size mismatch");
        if (!verify_unimodular(t.entries, g))
            fail(errc::bad_calibration, "witness does not certify unimodularity at this precision");
    }
    long floor = qs_detail::working_floor(t.entries, g);
    auto raw = qs_detail::reduce_rec(t.entries, g, jmax, floor);
    qs_detail::verify_certificate(raw.m, raw.m_inv, t.entries,
                                  qs_detail::unit_vector_like(t.entries), floor);
    if (g.empty()) {
        std::vector<TateSeries> derived;
        for (std::size_t k = 0; k < t.entries.size(); ++k) derived.push_back(raw.m.at(0, k));
        if (!verify_unimodular(t.entries, derived))
            fail(errc::bad_calibration,
                 "derived witness failed; the tuple is not unimodular at this precision");
    }
    return {std::move(raw.m), std::move(raw.m_inv), std::move(raw.moves), true};
}

// Invertible matrix whose first column is f: read off M^{-1} from the
// reduction, since M f = e_1 makes f the first column of its inverse.
inline Matrix<TateSeries> complete_to_square(const UnimodularTuple& t, unsigned jmax = 16) {
    return unimodular_reduce(t, jmax).m_inv;
}

// Free basis of the kernel of a unimodular row u: reduce the transposed data
// so u M^T = e_1^T; rows 2..m of M are then a basis of ker(u), and M^T columns
// complete it to an invertible matrix.
inline std::vector<std::vector<TateSeries>> kernel_free_basis(const UnimodularTuple& row,
                                                              unsigned jmax = 16) {
    auto cert = unimodular_reduce(row, jmax);
    std::vector<std::vector<TateSeries>> basis;
    for (std::size_t k = 1; k < row.entries.size(); ++k) {
        std::vector<TateSeries> v;
        for (std::size_t c = 0; c < row.entries.size(); ++c) v.push_back(cert.m.at(k, c));
        basis.push_back(std::move(v));
    }
    return basis;
}

}  // namespace robba
