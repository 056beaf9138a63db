#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <utility>
#include <vector>

#include "robba/tate.hpp"
#include "test_util.hpp"

using namespace robba;
using testutil::error_code_is;
using testutil::random_int_below;
using testutil::random_oelem_pival;
using testutil::random_unit;
using testutil::Rng;

namespace {

using Exp = TateSeries::Exp;

KElem kint(const ConfigPtr& cfg, long v, unsigned abs) { return KElem::from_int(cfg, v, abs); }

// Exact rational with a pure p-power denominator, as a K coefficient.
KElem from_rat(const ConfigPtr& cfg, const Rat& r, unsigned abs) {
    Int den = r.get_den();
    unsigned k = 0;
    while (den % cfg->p == 0) {
        den /= cfg->p;
        ++k;
    }
    REQUIRE(den == 1);
    unsigned pk = k * cfg->e;  // pi-power of the denominator
    return KElem(OElem::from_int(cfg, Int(r.get_num()), abs + pk), pk);
}

bool same(const TateSeries& a, const TateSeries& b) { return (a - b).is_zero_at_prec(); }

bool ksame(const KElem& a, const KElem& b) { return (a - b).is_zero_at_prec(); }

TateSeries random_tate(Rng& rng, const ConfigPtr& cfg, const PolyRadius& rad, unsigned N,
                       unsigned cap, unsigned maxdeg, size_t nterms, long maxpi,
                       unsigned maxden = 0) {
    for (;;) {
        std::vector<std::pair<Exp, KElem>> ts;
        for (size_t t = 0; t < nterms; ++t) {
            Exp I(rad.size());
            for (auto& v : I) v = unsigned(rng() % (maxdeg + 1));
            long pv = long(rng() % unsigned(maxpi + 1));
            unsigned den = maxden ? unsigned(rng() % (maxden + 1)) : 0;
            KElem c(random_oelem_pival(rng, cfg, N + den, pv), den);
            ts.emplace_back(std::move(I), std::move(c));
        }
        TateSeries f = TateSeries::from_terms(cfg, rad, N, cap, ts);
        if (!f.is_zero_at_prec()) return f;
    }
}

// Univariate with a designated leading degree: unit coefficient at t^j,
// everything else strictly heavier.
TateSeries random_unit_leading(Rng& rng, const ConfigPtr& cfg, unsigned N, unsigned cap,
                               unsigned j, unsigned maxdeg) {
    PolyRadius rad{{Rat(0)}};
    std::vector<std::pair<Exp, KElem>> ts;
    ts.push_back({Exp{j}, KElem(random_unit(rng, cfg, N))});
    for (unsigned d = 0; d <= maxdeg; ++d) {
        if (d == j || rng() % 2) continue;
        long pv = 1 + long(rng() % 3);
        ts.push_back({Exp{d}, KElem(random_oelem_pival(rng, cfg, N, pv))});
    }
    return TateSeries::from_terms(cfg, rad, N, cap, ts);
}

// Dense integral oracle for products: exponent map with plain residues.
using OracleMap = std::map<Exp, Int>;

OracleMap oracle_of(const TateSeries& f) {
    OracleMap m;
    for (const auto& [I, c] : f.terms()) {
        REQUIRE(c.den() == 0);
        m[I] = c.num().packed();
    }
    return m;
}

OracleMap oracle_mul(const OracleMap& a, const OracleMap& b, unsigned cap, const Int& mod) {
    OracleMap c;
    for (const auto& [I, x] : a) {
        for (const auto& [J, y] : b) {
            Exp K(I.size());
            bool inbox = true;
            for (size_t k = 0; k < I.size(); ++k) {
                K[k] = I[k] + J[k];
                if (K[k] > cap) inbox = false;
            }
            if (!inbox) continue;
            c[K] = (c[K] + x * y) % mod;
        }
    }
    for (auto it = c.begin(); it != c.end();)
        it = (it->second % mod == 0) ? c.erase(it) : std::next(it);
    return c;
}

TateSeries from_oracle(const ConfigPtr& cfg, const PolyRadius& rad, unsigned N, unsigned cap,
                       const OracleMap& m) {
    std::vector<std::pair<Exp, KElem>> ts;
    for (const auto& [I, v] : m) ts.push_back({I, KElem(OElem::from_int(cfg, v, N))});
    return TateSeries::from_terms(cfg, rad, N, cap, ts);
}

}  // namespace

TEST_CASE("K coefficients: pi-power denominators behave like exact fractions", "[tate]") {
    auto cfg = make_config(5, 1, 2);  // pi^2 = 5
    const unsigned N = 14;

    SECTION("pi powers and reduction") {
        KElem u = KElem::pi_power(cfg, -3, N);
        CHECK(u.den() == 3);
        CHECK(u.abs_prec() == long(N));
        CHECK(u.pival().v == -3);
        KElem v = KElem::pi_power(cfg, 3, N);
        KElem prod = u * v;
        CHECK(prod.den() == 0);
        CHECK(ksame(prod, kint(cfg, 1, N)));
        // A numerator divisible by pi cancels against the denominator.
        KElem w = KElem(OElem::from_int(cfg, 5, N + 2), 2);  // 5 / pi^2 = 1 exactly
        CHECK(w.den() == 0);
        CHECK(w.pival().v == 0);
    }

    SECTION("exact-fraction oracle for ring operations") {
        auto cfg1 = make_config(7);
        Rng rng(411);
        for (int trial = 0; trial < 200; ++trial) {
            long a = long(rng() % 4000) - 2000;
            long b = long(rng() % 4000) - 2000;
            unsigned da = unsigned(rng() % 4), db = unsigned(rng() % 4);
            Rat ra = Rat(a) / Rat(cfg1->p_pow(da));
            Rat rb = Rat(b) / Rat(cfg1->p_pow(db));
            KElem xa = from_rat(cfg1, ra, 12);
            KElem xb = from_rat(cfg1, rb, 12);
            CHECK(ksame(xa + xb, from_rat(cfg1, ra + rb, 12)));
            CHECK(ksame(xa - xb, from_rat(cfg1, ra - rb, 12)));
            CHECK(ksame(xa * xb, from_rat(cfg1, ra * rb, 10)));
        }
    }

    SECTION("inverse round trips at every sign of valuation") {
        Rng rng(412);
        for (int trial = 0; trial < 150; ++trial) {
            long pv = long(rng() % 7);
            unsigned den = unsigned(rng() % 4);
            KElem x(random_oelem_pival(rng, cfg, N + den, pv), den);
            KElem xi = x.inv();
            KElem prod = x * xi;
            long abs = std::min(prod.abs_prec(), 4L);
            CHECK((prod - kint(cfg, 1, N)).at_abs(abs).is_zero_at_prec());
            // Valuations negate exactly.
            CHECK(xi.pival().v == -x.pival().v);
        }
    }

    SECTION("failure modes") {
        KElem z = KElem::zero(cfg, N);
        CHECK_THROWS_MATCHES(z.inv(), error, error_code_is(errc::precision_exhausted));
        KElem deep = KElem::pi_power(cfg, -2, 2);
        CHECK_THROWS_MATCHES(deep + KElem(OElem::from_int(cfg, 1, 1), 1), error,
                             error_code_is(errc::precision_exhausted));
    }
}

TEST_CASE("series products match a dense integral oracle", "[tate]") {
    auto cfg = make_config(5);
    PolyRadius rad{{Rat(0), Rat(0)}};
    const unsigned N = 10, cap = 9;
    Int mod = cfg->p_pow(N);
    Rng rng(611);

    SECTION("integral convolution, boxed") {
        for (int trial = 0; trial < 120; ++trial) {
            TateSeries f = random_tate(rng, cfg, rad, N, cap, 4, 6, 3);
            TateSeries g = random_tate(rng, cfg, rad, N, cap, 4, 6, 3);
            TateSeries h = TateSeries::mul_boxed(f, g);
            TateSeries want = from_oracle(cfg, rad, N, cap, oracle_mul(oracle_of(f), oracle_of(g), cap, mod));
            CHECK(same(h, want));
            // Degrees stayed inside the box here, so strict agrees.
            if (f.deg_in(0) + g.deg_in(0) <= long(cap) && f.deg_in(1) + g.deg_in(1) <= long(cap))
                CHECK(same(f * g, want));
        }
    }

    SECTION("pi-denominator scaling is multiplicative") {
        for (int trial = 0; trial < 40; ++trial) {
            TateSeries f = random_tate(rng, cfg, rad, N, cap, 3, 5, 2);
            TateSeries g = random_tate(rng, cfg, rad, N, cap, 3, 5, 2);
            long a = 1 + long(rng() % 3), b = 1 + long(rng() % 3);
            TateSeries lhs = TateSeries::mul_boxed(f.scaled_pi(-a), g.scaled_pi(-b));
            TateSeries rhs = TateSeries::mul_boxed(f, g).scaled_pi(-a - b);
            CHECK(same(lhs, rhs));
        }
    }

    SECTION("addition is the coefficientwise sum") {
        for (int trial = 0; trial < 60; ++trial) {
            TateSeries f = random_tate(rng, cfg, rad, N, cap, 4, 6, 3);
            TateSeries g = random_tate(rng, cfg, rad, N, cap, 4, 6, 3);
            TateSeries s = f + g;
            for (const auto& [I, c] : s.terms()) CHECK(ksame(c, f.coeff(I) + g.coeff(I)));
            CHECK(same(s - g, f));
        }
    }
}

TEST_CASE("gauss valuation: worked values and exact multiplicativity", "[tate]") {
    auto cfg = make_config(5);
    const unsigned N = 30;

    SECTION("worked values") {
        PolyRadius unitdisc{{Rat(0)}};
        TateSeries one = TateSeries::one(cfg, unitdisc, N, 8);
        CHECK(gauss_valuation(one) == Rat(0));

        PolyRadius small{{make_rat(1, 2)}};  // |t| <= p^{-1/2}
        TateSeries f = TateSeries::from_terms(cfg, small, N, 8,
                                              {{Exp{0}, kint(cfg, 5, N)}, {Exp{1}, kint(cfg, 1, N)}});
        CHECK(gauss_valuation(f) == make_rat(1, 2));

        PolyRadius big{{make_rat(-1, 2)}};  // |t| <= p^{1/2}
        TateSeries g = TateSeries::from_terms(cfg, big, N, 8, {{Exp{2}, kint(cfg, 5, N)}});
        CHECK(gauss_valuation(g) == Rat(0));

        TateSeries z(cfg, small, N, 8);
        CHECK_THROWS_MATCHES(gauss_valuation(z), error, error_code_is(errc::zero_at_precision));
    }

    SECTION("multiplicative over products, ultrametric over sums") {
        Rng rng(711);
        PolyRadius rad{{make_rat(1, 3), make_rat(-1, 2)}};
        for (int trial = 0; trial < 200; ++trial) {
            TateSeries f = random_tate(rng, cfg, rad, N, 24, 4, 5, 3);
            TateSeries g = random_tate(rng, cfg, rad, N, 24, 4, 5, 3);
            CHECK(gauss_valuation(f * g) == gauss_valuation(f) + gauss_valuation(g));
            TateSeries s = f + g;
            if (!s.is_zero_at_prec()) {
                Rat lo = std::min(gauss_valuation(f), gauss_valuation(g));
                CHECK(gauss_valuation(s) >= lo);
            }
        }
    }

    SECTION("invariant under integral variable rescaling") {
        Rng rng(712);
        auto cfg2 = make_config(5, 1, 2);
        PolyRadius rad{{make_rat(3, 2), Rat(1)}};
        for (int trial = 0; trial < 50; ++trial) {
            TateSeries f = random_tate(rng, cfg2, rad, 20, 10, 3, 5, 2);
            TateSeries r = rescale_variable(f, 0, 2);
            CHECK(r.radius().e[0] == make_rat(-1, 2));
            CHECK(gauss_valuation(r) == gauss_valuation(f));
            CHECK(gauss_valuation(rescale_variable(f, 1, 1)) == gauss_valuation(f));
        }
    }
}

TEST_CASE("leading term: largest minimal degree, degree additivity", "[tate]") {
    auto cfg = make_config(5);
    const unsigned N = 24;

    SECTION("ties resolve to the largest degree") {
        PolyRadius rad{{Rat(0), Rat(0)}};
        TateSeries f = TateSeries::from_terms(cfg, rad, N, 8,
                                              {{Exp{1, 0}, kint(cfg, 1, N)}, {Exp{0, 1}, kint(cfg, 1, N)}});
        auto [j, c] = leading_term(f, 1);
        CHECK(j == 1);
        CHECK(c.nvars() == 1);
        CHECK(ksame(c.coeff(Exp{0}), kint(cfg, 1, N)));
    }

    SECTION("radius moves the leading degree") {
        PolyRadius small{{make_rat(1, 2)}};
        TateSeries f = TateSeries::from_terms(cfg, small, N, 8,
                                              {{Exp{0}, kint(cfg, 5, N)}, {Exp{1}, kint(cfg, 1, N)}});
        auto [j1, c1] = leading_term(f, 0);
        CHECK(j1 == 1);
        CHECK(gauss_valuation(c1) == Rat(0));

        PolyRadius tiny{{Rat(3)}};
        TateSeries g = TateSeries::from_terms(cfg, tiny, N, 8,
                                              {{Exp{0}, kint(cfg, 5, N)}, {Exp{1}, kint(cfg, 1, N)}});
        auto [j0, c0] = leading_term(g, 0);
        CHECK(j0 == 0);
        CHECK(gauss_valuation(c0) == Rat(1));
    }

    SECTION("leading degree is additive and leading coefficients multiply to first order") {
        Rng rng(811);
        for (int trial = 0; trial < 100; ++trial) {
            unsigned jf = unsigned(rng() % 4), jg = unsigned(rng() % 4);
            TateSeries f = random_unit_leading(rng, cfg, N, 16, jf, 5);
            TateSeries g = random_unit_leading(rng, cfg, N, 16, jg, 5);
            TateSeries h = f * g;
            auto [jh, ch] = leading_term(h, 0);
            REQUIRE(jh == long(jf + jg));
            auto [a, cf] = leading_term(f, 0);
            auto [b, cg] = leading_term(g, 0);
            REQUIRE(a == long(jf));
            REQUIRE(b == long(jg));
            TateSeries d = ch - cf * cg;
            if (!d.is_zero_at_prec()) CHECK(gauss_valuation(d) > gauss_valuation(ch));
        }
    }
}

TEST_CASE("units invert by a certified geometric series", "[tate]") {
    auto cfg = make_config(5);
    const unsigned N = 16;

    SECTION("unit recognition") {
        PolyRadius rad{{Rat(0)}};
        auto mk = [&](std::vector<std::pair<Exp, KElem>> ts) {
            return TateSeries::from_terms(cfg, rad, N, 20, ts);
        };
        CHECK(is_unit(mk({{Exp{0}, kint(cfg, 1, N)}, {Exp{1}, kint(cfg, 5, N)}})));
        CHECK_FALSE(is_unit(mk({{Exp{1}, kint(cfg, 1, N)}})));
        CHECK_FALSE(is_unit(mk({{Exp{0}, kint(cfg, 1, N)}, {Exp{1}, kint(cfg, 1, N)}})));  // tie
        PolyRadius small{{make_rat(1, 2)}};
        TateSeries f = TateSeries::from_terms(cfg, small, N, 20,
                                              {{Exp{0}, kint(cfg, 5, N)}, {Exp{1}, kint(cfg, 1, N)}});
        CHECK_FALSE(is_unit(f));  // the t term drags the minimum below the constant
    }

    SECTION("known geometric inverse") {
        PolyRadius rad{{Rat(0)}};
        TateSeries f = TateSeries::from_terms(cfg, rad, N, 40,
                                              {{Exp{0}, kint(cfg, 1, N)}, {Exp{1}, kint(cfg, -5, N)}});
        TateSeries fi = invert_unit(f);  // 1/(1-5t) = sum 5^k t^k
        for (unsigned k = 0; k < 5; ++k) {
            Int want;
            mpz_pow_ui(want.get_mpz_t(), Int(5).get_mpz_t(), k);
            CHECK(ksame(fi.coeff(Exp{k}), KElem(OElem::from_int(cfg, want, fi.prec()))));
        }
        CHECK(same(TateSeries::mul_boxed(f, fi), TateSeries::one(cfg, rad, fi.prec(), 40)));
        // Nothing left the box, so the inverse is an honest polynomial at
        // this precision: the infinite tail is below pi^N.
        CHECK(fi.entire());
    }

    SECTION("random units over mixed radii") {
        Rng rng(911);
        auto cfg2 = make_config(3, 1, 2);
        const unsigned M = 18;
        PolyRadius rad{{make_rat(1, 4), make_rat(-1, 2)}};
        for (int trial = 0; trial < 60; ++trial) {
            std::vector<std::pair<Exp, KElem>> ts;
            ts.push_back({Exp{0, 0}, KElem(random_unit(rng, cfg2, M))});
            for (int t = 0; t < 4; ++t) {
                Exp I{unsigned(rng() % 3), unsigned(rng() % 3)};
                if (I == Exp{0, 0}) continue;
                // weight(I) = pv/2 + i0/4 - i1/2 must exceed 0: solve for pv
                long pv = 1 + long(I[1]) * 1 + long(rng() % 3);
                ts.push_back({I, KElem(random_oelem_pival(rng, cfg2, M, pv))});
            }
            TateSeries u = TateSeries::from_terms(cfg2, rad, M, 12, ts);
            REQUIRE(is_unit(u));
            TateSeries ui = invert_unit(u);
            TateSeries prod = TateSeries::mul_boxed(u, ui);
            CHECK(same(prod, TateSeries::one(cfg2, rad, prod.prec(), 12)));
        }
    }

    SECTION("rejections") {
        PolyRadius rad{{Rat(0)}};
        TateSeries t = TateSeries::variable(cfg, rad, N, 8, 0);
        CHECK_THROWS_MATCHES(invert_unit(t), error, error_code_is(errc::not_a_unit));
        TateSeries z(cfg, rad, N, 8);
        CHECK_THROWS_MATCHES(invert_unit(z), error, error_code_is(errc::zero_at_precision));
    }
}

TEST_CASE("degree box: strict products fail loudly, boxed products truncate", "[tate]") {
    auto cfg = make_config(5);
    const unsigned N = 8;
    PolyRadius rad{{Rat(0)}};

    SECTION("strict overflow") {
        TateSeries a = TateSeries::variable(cfg, rad, N, 4, 0).var_shifted(0, 1);  // t^2
        TateSeries b = TateSeries::variable(cfg, rad, N, 4, 0).var_shifted(0, 2);  // t^3
        CHECK_THROWS_MATCHES(a * b, error, error_code_is(errc::window_overflow));
        TateSeries c = TateSeries::mul_boxed(a, b);
        CHECK(c.is_zero_at_prec());
        CHECK_FALSE(c.entire());
    }

    SECTION("negligible out-of-box terms may be dropped silently") {
        TateSeries a = TateSeries::from_terms(cfg, rad, N, 4, {{Exp{2}, kint(cfg, 5, N)}});
        Int big = cfg->p_pow(N - 1);
        TateSeries b = TateSeries::from_terms(
            cfg, rad, N, 4,
            {{Exp{0}, kint(cfg, 1, N)}, {Exp{3}, KElem(OElem::from_int(cfg, big, N))}});
        TateSeries prod = a * b;  // t^5 coefficient = 5 * 5^7 = 0 at precision
        CHECK(prod.entire());
        CHECK(ksame(prod.coeff(Exp{2}), kint(cfg, 5, N)));
    }

    SECTION("in-box coefficients of a boxed product are exact") {
        Rng rng(1011);
        Int mod = cfg->p_pow(N);
        for (int trial = 0; trial < 60; ++trial) {
            TateSeries f = random_tate(rng, cfg, rad, N, 6, 5, 5, 2);
            TateSeries g = random_tate(rng, cfg, rad, N, 6, 5, 5, 2);
            TateSeries h = TateSeries::mul_boxed(f, g);
            OracleMap want = oracle_mul(oracle_of(f), oracle_of(g), 6, mod);
            CHECK(same(h, from_oracle(cfg, rad, N, 6, want)));
        }
    }

    SECTION("shape guards") {
        PolyRadius other{{Rat(1)}};
        TateSeries a = TateSeries::one(cfg, rad, N, 8);
        TateSeries b = TateSeries::one(cfg, other, N, 8);
        CHECK_THROWS_MATCHES(a + b, error, error_code_is(errc::bad_calibration));
        CHECK_THROWS_MATCHES(a.with_radius(PolyRadius{{Rat(-1)}}), error,
                             error_code_is(errc::bad_calibration));
        CHECK_THROWS_MATCHES(
            TateSeries::from_terms(cfg, rad, N, 4, {{Exp{5}, kint(cfg, 1, N)}}), error,
            error_code_is(errc::window_overflow));
        TateSeries deep = a.scaled_pi(-3);
        CHECK_THROWS_MATCHES(TateSeries::mul_boxed(deep.at_prec(3), deep.at_prec(3)), error,
                             error_code_is(errc::precision_exhausted));
    }
}

TEST_CASE("weierstrass division: euclidean contract against direct evaluation", "[tate]") {
    auto cfg = make_config(5);
    const unsigned N = 20;
    PolyRadius rad{{Rat(0)}};

    SECTION("remainder of a cubic by t - p is evaluation at p") {
        TateSeries f = TateSeries::from_terms(cfg, rad, N, 16,
                                              {{Exp{3}, kint(cfg, 1, N)},
                                               {Exp{1}, kint(cfg, 5, N)},
                                               {Exp{0}, kint(cfg, 1, N)}});
        TateSeries P = TateSeries::from_terms(cfg, rad, N, 16,
                                              {{Exp{1}, kint(cfg, 1, N)}, {Exp{0}, kint(cfg, -5, N)}});
        auto [Q, S] = weierstrass_divide(f, P, 0);
        CHECK(S.deg_in(0) == 0);
        CHECK(ksame(S.coeff(Exp{0}), kint(cfg, 151, N)));  // p^3 + p^2 + 1
        CHECK(same(f, Q * P + S));
    }

    SECTION("random division in two variables") {
        Rng rng(1111);
        PolyRadius rad2{{Rat(0), Rat(0)}};
        for (int trial = 0; trial < 60; ++trial) {
            // Divisor: unit top slice in t2 plus junk below.
            unsigned j = 1 + unsigned(rng() % 3);
            std::vector<std::pair<Exp, KElem>> pts;
            pts.push_back({Exp{0, j}, KElem(random_unit(rng, cfg, N))});
            if (rng() % 2) pts.push_back({Exp{1, j}, KElem(random_oelem_pival(rng, cfg, N, 1))});
            for (unsigned d = 0; d < j; ++d)
                if (rng() % 2)
                    pts.push_back({Exp{unsigned(rng() % 2), d},
                                   KElem(random_oelem_pival(rng, cfg, N, long(rng() % 3)))});
            TateSeries P = TateSeries::from_terms(cfg, rad2, N, 24, pts);
            TateSeries f = random_tate(rng, cfg, rad2, N, 24, 5, 7, 3);
            auto [Q, S] = weierstrass_divide(f, P, 1);
            CHECK(S.deg_in(1) < long(j));
            TateSeries recon = TateSeries::mul_boxed(Q, P) + S;
            CHECK(same(recon, f.at_prec(recon.prec())));
        }
    }

    SECTION("a scalar top coefficient is always a unit over K") {
        // 5t + 1 divides fine: the top coefficient inverts to 1/5 and the
        // quotient picks up pi denominators, costing precision but not
        // correctness.
        TateSeries P = TateSeries::from_terms(cfg, rad, N, 16,
                                              {{Exp{1}, kint(cfg, 5, N)}, {Exp{0}, kint(cfg, 1, N)}});
        TateSeries f = TateSeries::from_terms(cfg, rad, N, 16, {{Exp{2}, kint(cfg, 1, N)}});
        auto [Q, S] = weierstrass_divide(f, P, 0);
        CHECK(S.deg_in(0) <= 0);
        TateSeries recon = TateSeries::mul_boxed(Q, P) + S;
        CHECK(same(recon, f.at_prec(recon.prec())));
    }

    SECTION("a genuinely non-unit top coefficient is rejected") {
        PolyRadius rad2{{Rat(0), Rat(0)}};
        TateSeries P = TateSeries::from_terms(cfg, rad2, N, 16,
                                              {{Exp{1, 1}, kint(cfg, 1, N)},
                                               {Exp{0, 0}, kint(cfg, 1, N)}});
        TateSeries f = TateSeries::one(cfg, rad2, N, 16);
        CHECK_THROWS_MATCHES(weierstrass_divide(f, P, 1), error,
                             error_code_is(errc::leading_coeff_not_unit));
    }
}

TEST_CASE("weierstrass preparation: factor, unit, residual", "[tate]") {
    auto cfg = make_config(5);
    PolyRadius rad{{Rat(0)}};

    SECTION("monomial times unit splits immediately") {
        const unsigned N = 16;
        TateSeries f = TateSeries::from_terms(cfg, rad, N, 16,
                                              {{Exp{1}, kint(cfg, 1, N)}, {Exp{2}, kint(cfg, 5, N)}});
        PrepResult r = weierstrass_prepare(f, 0);
        CHECK(r.P.deg_in(0) == 1);
        CHECK(same(r.P, TateSeries::variable(cfg, rad, N, 16, 0)));
        CHECK(r.residual_pival >= long(N) - long(cfg->guard));
        CHECK(same(TateSeries::mul_boxed(r.unit, r.unit_inv),
                   TateSeries::one(cfg, rad, r.unit_inv.prec(), 16)));
    }

    SECTION("p + t + p t^2 needs genuine iteration") {
        const unsigned N = 16;
        TateSeries f = TateSeries::from_terms(cfg, rad, N, 24,
                                              {{Exp{0}, kint(cfg, 5, N)},
                                               {Exp{1}, kint(cfg, 1, N)},
                                               {Exp{2}, kint(cfg, 5, N)}});
        PrepResult r = weierstrass_prepare(f, 0);
        CHECK(r.P.deg_in(0) == 1);
        CHECK(r.iterations >= 2);
        long target = long(N) - long(cfg->guard);
        CHECK(r.residual_pival >= target);
        TateSeries resid = f - TateSeries::mul_boxed(r.unit, r.P);
        for (const auto& [I, c] : resid.terms()) CHECK(c.pival().v >= target);
        // The linear factor vanishes at the actual root of f near -p.
        CHECK(is_unit(r.unit));
    }

    SECTION("fractional radius: p + t prepares to degree one") {
        auto cfg2 = make_config(5, 1, 2);
        const unsigned N = 20;
        PolyRadius half{{make_rat(1, 2)}};
        TateSeries f = TateSeries::from_terms(cfg2, half, N, 16,
                                              {{Exp{0}, kint(cfg2, 5, N)}, {Exp{1}, kint(cfg2, 1, N)}});
        PrepResult r = weierstrass_prepare(f, 0);
        CHECK(r.P.deg_in(0) == 1);
        CHECK(same(r.P, f));
        CHECK(same(r.unit, TateSeries::one(cfg2, half, N, 16)));
    }

    SECTION("reconstructs a planted factorization") {
        Rng rng(1211);
        const unsigned N = 24;
        for (int trial = 0; trial < 40; ++trial) {
            unsigned j = 1 + unsigned(rng() % 4);
            // Monic planted factor with strictly heavier lower coefficients.
            std::vector<std::pair<Exp, KElem>> pts{{Exp{j}, kint(cfg, 1, N)}};
            for (unsigned d = 0; d < j; ++d)
                if (rng() % 2) pts.push_back({Exp{d}, KElem(random_oelem_pival(rng, cfg, N, 1 + long(rng() % 3)))});
            TateSeries Ptrue = TateSeries::from_terms(cfg, rad, N, 16, pts);
            std::vector<std::pair<Exp, KElem>> uts{{Exp{0}, KElem(random_unit(rng, cfg, N))}};
            for (unsigned d = 1; d <= 2; ++d)
                if (rng() % 2) uts.push_back({Exp{d}, KElem(random_oelem_pival(rng, cfg, N, 1 + long(rng() % 2)))});
            TateSeries utrue = TateSeries::from_terms(cfg, rad, N, 16, uts);
            TateSeries f = utrue * Ptrue;

            PrepResult r = weierstrass_prepare(f, 0);
            REQUIRE(r.P.deg_in(0) == long(j));
            long target = long(N) - long(cfg->guard);
            CHECK(r.residual_pival >= target);
            // Normalize to a monic polynomial and compare with the plant.
            KElem top = r.P.coeff(Exp{j});
            TateSeries monic = r.P.scaled(top.inv());
            TateSeries diff = monic - Ptrue;
            for (const auto& [I, c] : diff.terms()) CHECK(c.pival().v >= target - 4);
        }
    }

    SECTION("rejections") {
        const unsigned N = 12;
        // Leading slice t1 is not a unit of the base ring.
        PolyRadius rad2{{Rat(0), Rat(0)}};
        TateSeries f = TateSeries::from_terms(cfg, rad2, N, 8,
                                              {{Exp{1, 1}, kint(cfg, 1, N)},
                                               {Exp{0, 2}, kint(cfg, 5, N)},
                                               {Exp{0, 0}, kint(cfg, 5, N)}});
        CHECK_THROWS_MATCHES(weierstrass_prepare(f, 1), error,
                             error_code_is(errc::leading_coeff_not_unit));
        TateSeries z(cfg, rad, N, 8);
        CHECK_THROWS_MATCHES(weierstrass_prepare(z, 0), error,
                             error_code_is(errc::zero_at_precision));
    }
}

TEST_CASE("shear substitution: calibration, homomorphism, exact inverse", "[tate]") {
    auto cfg = make_config(5);
    const unsigned N = 40;  // shears spend precision on pi denominators
    PolyRadius rad{{Rat(0), Rat(1)}};  // rho = (1, p^{-1})

    SECTION("calibrated image of the first variable") {
        TateSeries t1 = TateSeries::variable(cfg, rad, N, 30, 0);
        for (unsigned j = 1; j <= 3; ++j) {
            TateSeries g = tj_transform(t1, j, TjMode::field);
            // T_j(t1) = t1 + p^{-j} t2^j and the added term sits at weight 0
            CHECK(ksame(g.coeff(Exp{1, 0}), kint(cfg, 1, g.prec())));
            KElem c = g.coeff(Exp{0, j});
            CHECK(c.pival().v == -long(j));
            CHECK(g.term_weight(Exp{0, j}, c) == Rat(0));
            CHECK(g.terms().size() == 2);
        }
        CHECK(same(tj_transform(t1, 0, TjMode::field), t1));
    }

    SECTION("round trips and the ring homomorphism law") {
        Rng rng(1311);
        for (unsigned j = 1; j <= 3; ++j) {
            for (int trial = 0; trial < 20; ++trial) {
                TateSeries f = random_tate(rng, cfg, rad, N, 30, 3, 5, 2);
                TateSeries back = tj_inverse(tj_transform(f, j, TjMode::field), j, TjMode::field);
                CHECK(same(back, f.at_prec(back.prec())));
            }
        }
        for (int trial = 0; trial < 40; ++trial) {
            unsigned j = 1 + unsigned(rng() % 2);
            TateSeries f = random_tate(rng, cfg, rad, N, 60, 3, 4, 2, 0);
            TateSeries g = random_tate(rng, cfg, rad, N, 60, 3, 4, 2, 0);
            TateSeries lhs = tj_transform(TateSeries::mul_boxed(f, g), j, TjMode::field);
            TateSeries rhs = TateSeries::mul_boxed(tj_transform(f, j, TjMode::field),
                                                   tj_transform(g, j, TjMode::field));
            CHECK(same(lhs, rhs.at_prec(lhs.prec())));
        }
    }

    SECTION("three variables: nested exponents j^2, j") {
        PolyRadius rad3{{Rat(0), Rat(0), Rat(1)}};
        TateSeries t1 = TateSeries::variable(cfg, rad3, N, 40, 0);
        TateSeries g = tj_transform(t1, 2, TjMode::field);
        CHECK(ksame(g.coeff(Exp{1, 0, 0}), kint(cfg, 1, g.prec())));
        KElem c = g.coeff(Exp{0, 0, 4});  // j^2 = 4
        CHECK(c.pival().v == -4);
        TateSeries back = tj_inverse(g, 2, TjMode::field);
        CHECK(same(back, t1.at_prec(back.prec())));
    }

    SECTION("shear search finds the smallest working exponent") {
        TateSeries t1 = TateSeries::variable(cfg, rad, N, 30, 0);
        TjFindResult r = tj_find(t1, TjMode::field);
        CHECK(r.j == 1);
        auto [d, c] = leading_term(r.g, 1);
        CHECK(d == 1);
        CHECK(is_unit(c));

        TateSeries easy = TateSeries::from_terms(cfg, rad, N, 30,
                                                 {{Exp{0, 0}, kint(cfg, 1, N)},
                                                  {Exp{1, 0}, kint(cfg, 5, N)}});
        CHECK(tj_find(easy, TjMode::field).j == 0);

        CHECK_THROWS_MATCHES(tj_find(t1, TjMode::field, 0), error,
                             error_code_is(errc::jmax_exceeded));
    }

    SECTION("calibration guards") {
        PolyRadius bad{{Rat(1), Rat(1)}};  // passive radius below 1
        TateSeries f = TateSeries::variable(cfg, bad, N, 30, 0);
        CHECK_THROWS_MATCHES(tj_transform(f, 1, TjMode::field), error,
                             error_code_is(errc::bad_calibration));
        PolyRadius notbig{{Rat(0), Rat(-1)}};
        TateSeries g = TateSeries::variable(cfg, notbig, N, 30, 0);
        CHECK_THROWS_MATCHES(tj_transform(g, 1, TjMode::ring), error,
                             error_code_is(errc::bad_calibration));
    }

    SECTION("ring mode: integral shear and the dyadic radius search") {
        PolyRadius big{{Rat(-1), Rat(-1)}};
        TateSeries t1 = TateSeries::variable(cfg, big, N, 30, 0);
        TjFindResult r = tj_find(t1, TjMode::ring);
        CHECK(r.j == 1);
        CHECK(r.lambda == Rat(1));
        CHECK(ksame(r.g.coeff(Exp{0, 1}), kint(cfg, 1, r.g.prec())));

        // Leading coefficient 1 + p t1 ties at lambda = 1 and splits at 1/2.
        TateSeries f = TateSeries::from_terms(cfg, big, N, 30,
                                              {{Exp{0, 1}, kint(cfg, 1, N)},
                                               {Exp{1, 1}, kint(cfg, 5, N)}});
        TjFindResult s = tj_find(f, TjMode::ring);
        CHECK(s.j == 0);
        CHECK(s.lambda == make_rat(1, 2));
        CHECK(s.g.radius().e[0] == make_rat(-1, 2));
    }
}
