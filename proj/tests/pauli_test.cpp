#include "pbc/pauli.hpp"

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "test_util.hpp"

using pbc::commutes;
using pbc::ContractError;
using pbc::decompose_dependence;
using pbc::DependenceTracker;
using pbc::multiply;
using pbc::multiply_commuting;
using pbc::ParseError;
using pbc::PauliOperator;
using test_util::i_pow;
using test_util::to_mat;

TEST(pauli, parse_str_round_trip) {
    EXPECT_EQ(PauliOperator::parse("XZIY").str(), "XZIY");
    EXPECT_EQ(PauliOperator::parse("-ZIXY").str(), "-ZIXY");
    EXPECT_EQ(PauliOperator::parse("+XY").str(), "XY");
    EXPECT_EQ(PauliOperator::parse("").str(), "");
    EXPECT_EQ(PauliOperator::parse("-").str(), "-");
    EXPECT_EQ(PauliOperator::parse("-").num_qubits(), 0u);

    test_util::Rng rng(0x41u);
    for (int rep = 0; rep < 200; rep++) {
        PauliOperator p = test_util::random_pauli(rng, 1 + rng() % 90);
        EXPECT_EQ(PauliOperator::parse(p.str()), p);
    }
}

TEST(pauli, parse_rejects_garbage) {
    EXPECT_THROW(PauliOperator::parse("AB"), ParseError);
    EXPECT_THROW(PauliOperator::parse("X Z"), ParseError);
    EXPECT_THROW(PauliOperator::parse("xz"), ParseError);
    EXPECT_THROW(PauliOperator::parse("--X"), ParseError);
}

TEST(pauli, accessors_and_weight) {
    PauliOperator p = PauliOperator::parse("-XYIZ");
    EXPECT_EQ(p.num_qubits(), 4u);
    EXPECT_EQ(p.sign(), -1);
    EXPECT_TRUE(p.x(0) && !p.z(0));
    EXPECT_TRUE(p.x(1) && p.z(1));
    EXPECT_TRUE(!p.x(2) && !p.z(2));
    EXPECT_TRUE(!p.x(3) && p.z(3));
    EXPECT_EQ(p.weight(), 3u);
    EXPECT_FALSE(p.is_identity_bits());
    EXPECT_TRUE(PauliOperator::parse("-II").is_identity_bits());
    EXPECT_EQ(PauliOperator::single_x(3, 1).str(), "IXI");
    EXPECT_EQ(PauliOperator::single_y(3, 0).str(), "YII");
    EXPECT_EQ(PauliOperator::single_z(3, 2).str(), "IIZ");
    EXPECT_THROW(p.set_sign(0), ContractError);
}

// Frozen against the dense oracle: a * b = i^e * c for single qubits.
TEST(pauli, single_qubit_product_table) {
    struct Row {
        const char *a, *b;
        int e;
        const char *c;
    };
    const Row table[] = {
        {"I", "I", 0, "I"}, {"I", "X", 0, "X"}, {"I", "Y", 0, "Y"}, {"I", "Z", 0, "Z"},
        {"X", "I", 0, "X"}, {"X", "X", 0, "I"}, {"X", "Y", 1, "Z"}, {"X", "Z", 3, "Y"},
        {"Y", "I", 0, "Y"}, {"Y", "X", 3, "Z"}, {"Y", "Y", 0, "I"}, {"Y", "Z", 1, "X"},
        {"Z", "I", 0, "Z"}, {"Z", "X", 1, "Y"}, {"Z", "Y", 3, "X"}, {"Z", "Z", 0, "I"},
    };
    for (const Row &row : table) {
        pbc::PauliProduct prod = multiply(PauliOperator::parse(row.a), PauliOperator::parse(row.b));
        EXPECT_EQ(prod.phase_exponent, row.e) << row.a << " * " << row.b;
        EXPECT_EQ(prod.op.str(), row.c) << row.a << " * " << row.b;
        EXPECT_EQ(prod.op.sign(), +1);
    }
}

TEST(pauli, multiply_matches_dense) {
    test_util::Rng rng(0x42u);
    for (int rep = 0; rep < 400; rep++) {
        size_t n = 1 + rng() % 5;
        PauliOperator a = test_util::random_pauli(rng, n);
        PauliOperator b = test_util::random_pauli(rng, n);
        pbc::PauliProduct prod = multiply(a, b);
        ASSERT_EQ(prod.op.sign(), +1);
        oracle::Mat lhs = oracle::mul(to_mat(a), to_mat(b));
        oracle::Mat rhs = oracle::scal(i_pow(prod.phase_exponent), to_mat(prod.op));
        EXPECT_LT(oracle::max_abs_diff(lhs, rhs), 1e-12);
    }
}

TEST(pauli, multiply_phase_is_associative) {
    test_util::Rng rng(0x47u);
    for (int rep = 0; rep < 300; rep++) {
        size_t n = 1 + rng() % 4;
        PauliOperator a = test_util::random_pauli(rng, n);
        PauliOperator b = test_util::random_pauli(rng, n);
        PauliOperator c = test_util::random_pauli(rng, n);
        pbc::PauliProduct bc = multiply(b, c);
        pbc::PauliProduct a_bc = multiply(a, bc.op);
        pbc::PauliProduct ab = multiply(a, b);
        pbc::PauliProduct ab_c = multiply(ab.op, c);
        EXPECT_EQ((bc.phase_exponent + a_bc.phase_exponent) % 4,
                  (ab.phase_exponent + ab_c.phase_exponent) % 4);
        EXPECT_EQ(a_bc.op, ab_c.op);
    }
}

TEST(pauli, multiply_requires_equal_sizes) {
    EXPECT_THROW(multiply(PauliOperator::parse("X"), PauliOperator::parse("XX")), ContractError);
    EXPECT_THROW(commutes(PauliOperator::parse("X"), PauliOperator::parse("XX")), ContractError);
}

TEST(pauli, commutes_matches_dense) {
    test_util::Rng rng(0x43u);
    for (int rep = 0; rep < 300; rep++) {
        size_t n = 1 + rng() % 4;
        PauliOperator a = test_util::random_pauli(rng, n);
        PauliOperator b = test_util::random_pauli(rng, n);
        oracle::Mat ab = oracle::mul(to_mat(a), to_mat(b));
        oracle::Mat ba = oracle::mul(to_mat(b), to_mat(a));
        bool dense_commutes = oracle::max_abs_diff(ab, ba) < 1e-12;
        EXPECT_EQ(commutes(a, b), dense_commutes) << a.str() << " vs " << b.str();
    }
}

TEST(pauli, multiply_commuting_products) {
    std::vector<PauliOperator> hist = {PauliOperator::parse("ZI"), PauliOperator::parse("-IZ")};
    EXPECT_EQ(multiply_commuting(hist, 2), PauliOperator::parse("-ZZ"));
    EXPECT_EQ(multiply_commuting({}, 3), PauliOperator(3));

    test_util::Rng rng(0x44u);
    for (int rep = 0; rep < 150; rep++) {
        size_t n = 1 + rng() % 4;
        auto list = test_util::random_commuting_list(rng, n, 1 + rng() % 4);
        PauliOperator got = multiply_commuting(list, n);
        oracle::Mat want = oracle::eye(size_t{1} << n);
        for (const auto &f : list) {
            want = oracle::mul(want, to_mat(f));
        }
        EXPECT_LT(oracle::max_abs_diff(to_mat(got), want), 1e-12);
    }
}

TEST(pauli, multiply_commuting_rejects_imaginary_phase) {
    std::vector<PauliOperator> bad = {PauliOperator::parse("X"), PauliOperator::parse("Z")};
    EXPECT_THROW(multiply_commuting(bad, 1), ContractError);
}

TEST(pauli, restrict_drops_z_prefix) {
    EXPECT_EQ(pbc::restrict(PauliOperator::parse("-ZIXY"), 2), PauliOperator::parse("-XY"));
    EXPECT_EQ(pbc::restrict(PauliOperator::parse("ZZZ"), 3), PauliOperator::parse(""));
    EXPECT_EQ(pbc::restrict(PauliOperator::parse("XY"), 0), PauliOperator::parse("XY"));
    EXPECT_THROW(pbc::restrict(PauliOperator::parse("XZZ"), 1), ContractError);
    EXPECT_THROW(pbc::restrict(PauliOperator::parse("YZZ"), 1), ContractError);
    EXPECT_THROW(pbc::restrict(PauliOperator::parse("Z"), 2), ContractError);
}

TEST(pauli, embedded_places_factors) {
    EXPECT_EQ(PauliOperator::parse("-XY").embedded(4, 1).str(), "-IXYI");
    EXPECT_EQ(PauliOperator::parse("Z").embedded(3, 2).str(), "IIZ");
    EXPECT_THROW(PauliOperator::parse("XX").embedded(3, 2), ContractError);
}

// Frozen against the dense oracle: conjugation by V = (lp*P + lq*Q)/sqrt(2).
TEST(pauli, conjugate_by_v_frozen_cases) {
    struct Row {
        const char *p, *q;
        int lp, lq;
        const char *r;
        const char *want;
    };
    const Row table[] = {
        {"X", "Z", +1, +1, "Y", "-Y"},
        {"X", "Z", +1, +1, "X", "Z"},
        {"X", "Z", +1, +1, "Z", "X"},
        {"X", "Z", -1, +1, "X", "-Z"},
        {"X", "Z", +1, -1, "Z", "-X"},
        {"X", "Z", -1, -1, "Y", "-Y"},
        {"XX", "ZI", +1, +1, "IX", "IX"},
        {"XX", "ZI", +1, -1, "XZ", "-XZ"},
        {"XX", "ZI", -1, +1, "ZZ", "ZZ"},
        {"XY", "ZI", +1, +1, "YI", "-YI"},
        {"XY", "IZ", -1, -1, "IY", "XZ"},
    };
    for (const Row &row : table) {
        PauliOperator got =
            pbc::conjugate_by_v(PauliOperator::parse(row.r), PauliOperator::parse(row.p), row.lp,
                                PauliOperator::parse(row.q), row.lq);
        EXPECT_EQ(got, PauliOperator::parse(row.want))
            << "P=" << row.p << " Q=" << row.q << " lp=" << row.lp << " lq=" << row.lq
            << " R=" << row.r;
    }
}

TEST(pauli, conjugate_by_v_matches_dense) {
    test_util::Rng rng(0x45u);
    int done = 0;
    while (done < 300) {
        size_t n = 1 + rng() % 3;
        PauliOperator p = test_util::random_nonidentity_pauli(rng, n);
        PauliOperator q = test_util::random_nonidentity_pauli(rng, n);
        if (commutes(p, q)) {
            continue;
        }
        PauliOperator r = test_util::random_pauli(rng, n);
        int lp = rng() % 2 ? +1 : -1;
        int lq = rng() % 2 ? +1 : -1;
        PauliOperator got = pbc::conjugate_by_v(r, p, lp, q, lq);

        oracle::Mat v = oracle::scal(1.0 / std::sqrt(2.0),
                                     oracle::add(oracle::scal(lp, to_mat(p)),
                                                 oracle::scal(lq, to_mat(q))));
        ASSERT_LT(oracle::max_abs_diff(oracle::mul(v, v), oracle::eye(size_t{1} << n)), 1e-12)
            << "V should be an involution";
        oracle::Mat want = oracle::mul(v, oracle::mul(to_mat(r), v));
        EXPECT_LT(oracle::max_abs_diff(to_mat(got), want), 1e-12)
            << "P=" << p.str() << " Q=" << q.str() << " R=" << r.str();
        done++;
    }
}

TEST(pauli, conjugate_by_v_rejects_bad_inputs) {
    PauliOperator x = PauliOperator::parse("X");
    PauliOperator z = PauliOperator::parse("Z");
    EXPECT_THROW(pbc::conjugate_by_v(x, x, +1, x, +1), ContractError);
    EXPECT_THROW(pbc::conjugate_by_v(x, x, +2, z, +1), ContractError);
}

TEST(pauli, dependence_tracker_flags_independence) {
    DependenceTracker tracker(2);
    EXPECT_TRUE(tracker.add(PauliOperator::parse("ZI")));
    EXPECT_TRUE(tracker.add(PauliOperator::parse("IZ")));
    EXPECT_FALSE(tracker.add(PauliOperator::parse("-ZZ")));
    EXPECT_EQ(tracker.history_size(), 3u);

    auto dep = tracker.dependence(PauliOperator::parse("ZZ"));
    ASSERT_TRUE(dep.has_value());
    EXPECT_EQ(*dep, (std::vector<size_t>{0, 1}));
    EXPECT_FALSE(tracker.dependence(PauliOperator::parse("XI")).has_value());
    EXPECT_TRUE(tracker.in_span(PauliOperator::parse("II")));
    EXPECT_THROW(tracker.add(PauliOperator::parse("Z")), ContractError);
}

TEST(pauli, decompose_dependence_signs) {
    std::vector<PauliOperator> hist = {PauliOperator::parse("ZI"), PauliOperator::parse("-IZ")};
    auto dep = decompose_dependence(PauliOperator::parse("-ZZ"), hist);
    ASSERT_TRUE(dep.has_value());
    EXPECT_EQ(dep->sign, +1);
    EXPECT_EQ(dep->indices, (std::vector<size_t>{0, 1}));

    dep = decompose_dependence(PauliOperator::parse("ZZ"), hist);
    ASSERT_TRUE(dep.has_value());
    EXPECT_EQ(dep->sign, -1);

    EXPECT_FALSE(decompose_dependence(PauliOperator::parse("XX"), hist).has_value());

    dep = decompose_dependence(PauliOperator::parse("-II"), hist);
    ASSERT_TRUE(dep.has_value());
    EXPECT_EQ(dep->sign, -1);
    EXPECT_TRUE(dep->indices.empty());

    EXPECT_FALSE(decompose_dependence(PauliOperator::parse("X"), {}).has_value());
}

TEST(pauli, decompose_dependence_matches_dense) {
    test_util::Rng rng(0x46u);
    int checked = 0;
    for (int rep = 0; rep < 400 && checked < 150; rep++) {
        size_t n = 1 + rng() % 4;
        auto hist = test_util::random_commuting_list(rng, n, 2 + rng() % 4);
        if (hist.empty()) {
            continue;
        }
        // Build a target from a random subset, with a random extra sign.
        std::vector<PauliOperator> subset;
        for (const auto &h : hist) {
            if (rng() % 2) {
                subset.push_back(h);
            }
        }
        PauliOperator target = multiply_commuting(subset, n);
        if (rng() % 2) {
            target.negate();
        }
        auto dep = decompose_dependence(target, hist);
        ASSERT_TRUE(dep.has_value());
        oracle::Mat prod = oracle::eye(size_t{1} << n);
        for (size_t i : dep->indices) {
            prod = oracle::mul(prod, to_mat(hist[i]));
        }
        prod = oracle::scal(dep->sign, prod);
        EXPECT_LT(oracle::max_abs_diff(prod, to_mat(target)), 1e-12);
        checked++;
    }
    EXPECT_GE(checked, 100);
}

TEST(pauli, decompose_dependence_rejects_noncommuting_subset) {
    std::vector<PauliOperator> hist = {PauliOperator::parse("X"), PauliOperator::parse("Z")};
    EXPECT_THROW(decompose_dependence(PauliOperator::parse("Y"), hist), ContractError);
}

TEST(pauli, measurement_kind_names) {
    EXPECT_STREQ(pbc::measurement_kind_name(pbc::MeasurementKind::kDummy), "dummy");
    EXPECT_STREQ(pbc::measurement_kind_name(pbc::MeasurementKind::kClassical), "classical");
    EXPECT_STREQ(pbc::measurement_kind_name(pbc::MeasurementKind::kRandomLambda), "random");
    EXPECT_STREQ(pbc::measurement_kind_name(pbc::MeasurementKind::kQuantum), "quantum");
}
