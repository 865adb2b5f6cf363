#include "pbc/compile.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pbc/circuit.hpp"
#include "pbc/dense.hpp"
#include "pbc/errors.hpp"
#include "pbc/gadgets.hpp"
#include "pbc/pauli.hpp"
#include "pbc/rng.hpp"
#include "pbc/tableau.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace pbc;

namespace {

// ------------------------------------------------------------ generators ---

using test_util::random_clifford_circuit;

// --------------------------------------------------------- replay oracle ---

// Independent evaluation of a StaticProgram: dense enumeration of the
// measurement outcomes on |A>^t (oracle matrices only), times explicit coin
// enumeration, constraints, and classical reconstruction.
struct StaticReplayOracle {
    const StaticProgram &prog;

    std::map<std::string, double> probs;
    double preselection = 0.0;

    explicit StaticReplayOracle(const StaticProgram &p) : prog(p) { run(); }

    static int entry_value(const ReconstructionEntry &e, const std::vector<int> &q,
                           const std::vector<int> &coins) {
        int v = e.base;
        for (const ReconstructionRef &r : e.refs) {
            v *= r.is_coin ? coins[r.index] : q[r.index];
        }
        return v;
    }

    void run() {
        oracle::Vec state = {1.0};
        for (size_t k = 0; k < prog.t; k++) {
            state = oracle::kron(state, oracle::ket_magic());
        }
        std::vector<int> outcomes;
        enumerate_measurements(state, 0, outcomes);
        if (preselection > 0) {
            for (auto &[key, p] : probs) {
                p /= preselection;
            }
        }
    }

    void enumerate_measurements(const oracle::Vec &state, size_t k, std::vector<int> &outcomes) {
        if (k == prog.measurements.size()) {
            enumerate_coins(outcomes, oracle::norm2(state));
            return;
        }
        oracle::Mat obs = test_util::to_mat(prog.measurements[k]);
        for (int v : {+1, -1}) {
            if (prog.postselect[k].has_value() && v != *prog.postselect[k]) {
                continue;
            }
            auto [p, proj] = oracle::measure(state, obs, v);
            if (p < 1e-15) {
                continue;
            }
            outcomes.push_back(v);
            enumerate_measurements(proj, k + 1, outcomes);
            outcomes.pop_back();
        }
    }

    void enumerate_coins(const std::vector<int> &q, double weight) {
        const size_t n = prog.num_coins;
        const double forced = std::pow(0.5, static_cast<double>(prog.forced_coins));
        for (size_t mask = 0; mask < (size_t{1} << n); mask++) {
            std::vector<int> coins(n);
            for (size_t j = 0; j < n; j++) {
                coins[j] = (mask >> j) & 1 ? -1 : +1;
            }
            double w = weight * forced / static_cast<double>(size_t{1} << n);
            bool ok = true;
            for (const ParityConstraint &cons : prog.constraints) {
                int v = cons.required;
                for (const ReconstructionRef &r : cons.refs) {
                    v *= r.is_coin ? coins[r.index] : q[r.index];
                }
                if (v != +1) {
                    ok = false;
                    break;
                }
            }
            if (!ok) {
                continue;
            }
            std::string key;
            for (const auto &[is_line, name] : prog.key) {
                int v = 0;
                if (is_line) {
                    for (const auto &[line, entry] : prog.line_records) {
                        if (line == name) {
                            v = entry_value(entry, q, coins);
                        }
                    }
                } else {
                    for (const auto &[id, entry] : prog.records) {
                        if (id == name) {
                            v = entry_value(entry, q, coins);
                        }
                    }
                }
                EXPECT_NE(v, 0) << "key element not found";
                key.push_back(v == -1 ? '1' : '0');
            }
            probs[key] += w;
            preselection += w;
        }
    }
};

using test_util::expect_same_distribution;

// -------------------------------------------------- hybrid vs dense oracle --

TEST(compile, hybrid_matches_dense_on_random_adaptive_circuits) {
    test_util::Rng rng(0xc0417e1);
    int compared = 0, zero_agreements = 0, adaptive_seen = 0;
    for (int rep = 0; rep < 200; rep++) {
        Circuit c = random_clifford_circuit(rng, true, true);
        adaptive_seen += classify(c).adaptivity == Adaptivity::kAdaptive;
        Distribution want;
        bool zero = false;
        try {
            want = exact_distribution(c);
        } catch (const ProbabilityZeroError &) {
            zero = true;
        }
        if (zero) {
            EXPECT_THROW(exact_distribution_hybrid(c), ProbabilityZeroError) << serialize(c);
            zero_agreements++;
            continue;
        }
        Distribution got = exact_distribution_hybrid(c);
        expect_same_distribution(got, want, serialize(c));
        compared++;
    }
    EXPECT_GE(compared, 150);
    EXPECT_GE(adaptive_seen, 40);
    EXPECT_GE(zero_agreements, 1);
}

TEST(compile, hybrid_matches_dense_on_nonadaptive_circuits) {
    test_util::Rng rng(0x90aad);
    for (int rep = 0; rep < 100; rep++) {
        Circuit c = random_clifford_circuit(rng, false, false);
        Distribution want = exact_distribution(c);
        Distribution got = exact_distribution_hybrid(c);
        expect_same_distribution(got, want, serialize(c));
    }
}

// ------------------------------------------------ static program vs dense --

TEST(compile, static_replay_matches_dense_on_random_circuits) {
    test_util::Rng rng(0x57a71c);
    Rng compile_rng(1);
    int compared = 0, with_coins = 0, with_constraints = 0;
    for (int rep = 0; rep < 150; rep++) {
        Circuit c = random_clifford_circuit(rng, true, false);
        Distribution want;
        try {
            want = exact_distribution(c);
        } catch (const ProbabilityZeroError &) {
            EXPECT_THROW(compile_nonadaptive(c, compile_rng), ProbabilityZeroError)
                << serialize(c);
            continue;
        }
        StaticProgram prog = compile_nonadaptive(c, compile_rng);
        EXPECT_LE(prog.s(), prog.t) << serialize(c);
        with_coins += prog.num_coins > 0;
        with_constraints += !prog.constraints.empty();
        StaticReplayOracle replay(prog);
        if (replay.preselection < 1e-12) {
            ADD_FAILURE() << "replay lost all mass but dense did not\n" << serialize(c);
            continue;
        }
        ASSERT_EQ(replay.probs.size(), want.probs.size()) << serialize(c) << "\n" << prog.dump();
        for (const auto &[key, p] : want.probs) {
            ASSERT_TRUE(replay.probs.count(key)) << serialize(c) << "\n" << prog.dump();
            EXPECT_NEAR(replay.probs.at(key), p, 1e-9)
                << serialize(c) << "\n" << prog.dump() << "\nkey " << key;
        }
        EXPECT_NEAR(replay.preselection, want.preselection_weight, 1e-9)
            << serialize(c) << "\n" << prog.dump();
        compared++;
    }
    EXPECT_GE(compared, 100);
    EXPECT_GE(with_coins, 10);
}

// ------------------------------------------------------- action protocol ---

Circuit one_line_magic(std::vector<Step> steps) {
    Circuit c;
    c.num_lines = 1;
    c.input = {InputKind::kMagicA};
    c.steps = std::move(steps);
    validate(c);
    return c;
}

TEST(compile, repeating_a_measurement_is_classical_with_equal_outcome) {
    Circuit c = one_line_magic({Measure{0, 0, {}}, Measure{0, 1, {}}});
    for (int first : {+1, -1}) {
        CompiledProgram prog = compile(c);
        auto a0 = prog.next();
        ASSERT_TRUE(std::holds_alternative<CompiledProgram::MeasurePauli>(a0));
        EXPECT_EQ(std::get<CompiledProgram::MeasurePauli>(a0).op.str(), "Z");
        prog.supply(first);
        auto a1 = prog.next();
        ASSERT_TRUE(std::holds_alternative<CompiledProgram::EmitClassical>(a1));
        EXPECT_EQ(std::get<CompiledProgram::EmitClassical>(a1).record_id, 1u);
        EXPECT_EQ(std::get<CompiledProgram::EmitClassical>(a1).outcome, first);
        ASSERT_TRUE(std::holds_alternative<CompiledProgram::Done>(prog.next()));
        EXPECT_EQ(prog.outcomes().at(0), first);
        EXPECT_EQ(prog.outcomes().at(1), first);
        EXPECT_EQ(prog.quantum_count(), 1u);
    }
}

TEST(compile, measurement_anticommuting_with_a_record_draws_a_coin) {
    Circuit c = one_line_magic(
        {Measure{0, 0, {}}, Gate{GateKind::kH, 0, 0, {}}, Measure{0, 1, {}}});
    CompiledProgram prog = compile(c);
    auto a0 = prog.next();
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::MeasurePauli>(a0));
    prog.supply(+1);
    auto a1 = prog.next();
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::DrawRandom>(a1));
    EXPECT_EQ(std::get<CompiledProgram::DrawRandom>(a1).record_id, 1u);
    prog.supply(-1);
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::Done>(prog.next()));
    EXPECT_EQ(prog.outcomes().at(1), -1);
    EXPECT_EQ(prog.quantum_count(), 1u);
    EXPECT_EQ(prog.coin_count(), 1u);
}

TEST(compile, postselected_quantum_measurement_has_flag_and_supply_enforces_it) {
    Circuit c = one_line_magic({Measure{0, 0, -1}});
    {
        CompiledProgram prog = compile(c);
        auto a = prog.next();
        ASSERT_TRUE(std::holds_alternative<CompiledProgram::MeasurePauli>(a));
        ASSERT_TRUE(std::get<CompiledProgram::MeasurePauli>(a).postselect.has_value());
        EXPECT_EQ(*std::get<CompiledProgram::MeasurePauli>(a).postselect, -1);
        EXPECT_THROW(prog.supply(+1), PostselectionMissError);
        prog.supply(-1);  // the engine is unchanged by the failed supply
        ASSERT_TRUE(std::holds_alternative<CompiledProgram::Done>(prog.next()));
    }
}

TEST(compile, dependent_record_against_its_postselection_is_a_miss) {
    Circuit c = one_line_magic({Measure{0, 0, {}}, Measure{0, 1, +1}});
    CompiledProgram good = compile(c);
    good.next();
    good.supply(+1);
    auto consistent = good.next();
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::EmitClassical>(consistent));
    EXPECT_EQ(std::get<CompiledProgram::EmitClassical>(consistent).outcome, +1);
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::Done>(good.next()));
    EXPECT_NEAR(good.preselection_factor(), 1.0, 0);

    CompiledProgram bad = compile(c);
    bad.next();
    bad.supply(-1);
    EXPECT_THROW(bad.next(), PostselectionMissError);
}

TEST(compile, impossible_postselection_raises_probability_zero) {
    // Z on a fresh |0> line is +1 with certainty; requiring -1 cannot happen.
    Circuit c;
    c.num_lines = 2;
    c.input = {InputKind::kZero, InputKind::kMagicA};
    c.steps = {Measure{0, 0, -1}, Measure{1, 1, {}}};
    validate(c);
    CompiledProgram prog = compile(c);
    EXPECT_THROW(prog.next(), ProbabilityZeroError);
    EXPECT_THROW(exact_distribution_hybrid(c), ProbabilityZeroError);
    Rng rng(7);
    EXPECT_THROW(compile_nonadaptive(c, rng), ProbabilityZeroError);
}

TEST(compile, forced_coin_contributes_preselection_one_half) {
    Circuit c = one_line_magic(
        {Measure{0, 0, {}}, Gate{GateKind::kH, 0, 0, {}}, Measure{0, 1, +1}});
    CompiledProgram prog = compile(c);
    prog.next();
    prog.supply(+1);
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::Done>(prog.next()));
    EXPECT_NEAR(prog.preselection_factor(), 0.5, 0);
    EXPECT_EQ(prog.outcomes().at(1), +1);

    Distribution dense = exact_distribution(c);
    Distribution hybrid = exact_distribution_hybrid(c);
    EXPECT_NEAR(dense.preselection_weight, 0.5, 1e-12);
    EXPECT_NEAR(hybrid.preselection_weight, 0.5, 1e-12);
}

// ------------------------------------------------------------ invariants ---

TEST(compile, emitted_measurements_commute_and_stay_independent) {
    test_util::Rng rng(0x1a2b3c);
    Rng coin_rng(3);
    size_t t_zero_runs = 0;
    for (int rep = 0; rep < 200; rep++) {
        Circuit c = random_clifford_circuit(rng, false, true);
        CompiledProgram prog = compile(c);
        // Canonical drive: every free outcome +1.
        for (;;) {
            auto a = prog.next();
            if (std::holds_alternative<CompiledProgram::Done>(a)) {
                break;
            }
            if (auto *m = std::get_if<CompiledProgram::MeasurePauli>(&a)) {
                prog.supply(m->postselect.value_or(+1));
            } else if (std::holds_alternative<CompiledProgram::DrawRandom>(a)) {
                prog.supply(+1);
            }
        }
        const auto &emitted = prog.engine().emitted();
        EXPECT_LE(emitted.size(), prog.t()) << serialize(c);
        DependenceTracker tracker(prog.t());
        for (size_t i = 0; i < emitted.size(); i++) {
            EXPECT_EQ(emitted[i].sign(), +1) << serialize(c);
            EXPECT_TRUE(tracker.add(emitted[i])) << serialize(c);
            for (size_t j = i + 1; j < emitted.size(); j++) {
                EXPECT_TRUE(commutes(emitted[i], emitted[j])) << serialize(c);
            }
        }
        if (prog.t() == 0) {
            EXPECT_EQ(emitted.size(), 0u);
            t_zero_runs++;
        }
    }
    EXPECT_GE(t_zero_runs, 10u);
}

TEST(compile, circuits_without_magic_compile_to_zero_measurements) {
    test_util::Rng rng(0x600d);
    Rng coin_rng(5);
    for (int rep = 0; rep < 60; rep++) {
        Circuit c = random_clifford_circuit(rng, false, true, 8);
        for (auto &k : c.input) {
            k = InputKind::kZero;
        }
        c.stabilizer_block.clear();
        validate(c);
        CompiledProgram prog = compile(c);
        for (;;) {
            auto a = prog.next();
            if (std::holds_alternative<CompiledProgram::Done>(a)) {
                break;
            }
            ASSERT_FALSE(std::holds_alternative<CompiledProgram::MeasurePauli>(a))
                << serialize(c);
            if (std::holds_alternative<CompiledProgram::DrawRandom>(a)) {
                prog.supply(coin_pm1(coin_rng));
            }
        }
        EXPECT_EQ(prog.quantum_count(), 0u) << serialize(c);
        EXPECT_EQ(prog.t(), 0u);
        EXPECT_EQ(prog.prefix_size(), c.num_lines);
    }
}

TEST(compile, dummy_generators_report_the_declared_block) {
    Circuit c;
    c.num_lines = 3;
    c.input = {InputKind::kZero, InputKind::kZero, InputKind::kMagicA};
    c.stabilizer_block = {PauliOperator::parse("XX"), PauliOperator::parse("-ZZ")};
    c.steps = {Measure{0, 0, {}}};
    validate(c);
    CompiledProgram prog = compile(c);
    ASSERT_EQ(prog.dummy_gens().size(), 2u);
    EXPECT_EQ(prog.dummy_gens()[0].str(), "XXI");
    EXPECT_EQ(prog.dummy_gens()[1].str(), "-ZZI");
    EXPECT_EQ(prog.t(), 1u);
    EXPECT_EQ(prog.prefix_size(), 2u);

    Circuit plain;
    plain.num_lines = 2;
    plain.input = {InputKind::kMagicA, InputKind::kZero};
    plain.steps = {Measure{0, 0, {}}};
    validate(plain);
    CompiledProgram pp = compile(plain);
    ASSERT_EQ(pp.dummy_gens().size(), 1u);
    EXPECT_EQ(pp.dummy_gens()[0].str(), "IZ");
}

TEST(compile, declared_blocks_match_dense_distributions) {
    test_util::Rng rng(0xb10c2);
    int with_block = 0;
    for (int rep = 0; rep < 80; rep++) {
        Circuit c = random_clifford_circuit(rng, false, false);
        if (c.stabilizer_block.empty()) {
            continue;
        }
        with_block++;
        Distribution want = exact_distribution(c);
        Distribution got = exact_distribution_hybrid(c);
        expect_same_distribution(got, want, serialize(c));
    }
    EXPECT_GE(with_block, 15);
}

TEST(compile, partially_covering_stabilizer_block_is_rejected) {
    Circuit c;
    c.num_lines = 3;
    c.input = {InputKind::kZero, InputKind::kZero, InputKind::kMagicA};
    c.stabilizer_block = {PauliOperator::parse("X")};  // covers line 0 only
    c.steps = {Measure{2, 0, {}}};
    // line 1 is |0> but outside the block
    c.input[1] = InputKind::kZero;
    validate(c);
    EXPECT_THROW(compile(c), ContractError);
}

TEST(compile, non_clifford_gates_are_rejected_with_gadget_hint) {
    Circuit c = one_line_magic({Gate{GateKind::kT, 0, 0, {}}, Measure{0, 0, {}}});
    try {
        compile(c);
        FAIL() << "expected ContractError";
    } catch (const ContractError &e) {
        EXPECT_NE(std::string(e.what()).find("gadgetize"), std::string::npos);
    }
}

TEST(compile, static_compiler_rejects_adaptive_circuits) {
    Circuit c = one_line_magic({Measure{0, 0, {}},
                                Gate{GateKind::kX, 0, 0, ParityControl{{0}, false}},
                                Measure{0, 1, {}}});
    Rng rng(11);
    EXPECT_THROW(compile_nonadaptive(c, rng), ContractError);
    // The interactive compiler handles the same circuit.
    Distribution got = exact_distribution_hybrid(c);
    Distribution want = exact_distribution(c);
    expect_same_distribution(got, want, serialize(c));
}

// ------------------------------------------------------------- dump form ---

TEST(compile, static_dump_golden_forms) {
    Rng rng(2);
    {
        Circuit c = one_line_magic({Gate{GateKind::kH, 0, 0, {}}, Measure{0, 0, {}}});
        EXPECT_EQ(compile_nonadaptive(c, rng).dump(),
                  "pbc t=1 s=1\n"
                  "X\n"
                  "coins 0 forced 0\n"
                  "m0 quantum 0\n"
                  "key m0\n");
    }
    {
        Circuit c = one_line_magic({Measure{0, 0, {}}, Measure{0, 1, {}}});
        EXPECT_EQ(compile_nonadaptive(c, rng).dump(),
                  "pbc t=1 s=1\n"
                  "Z\n"
                  "coins 0 forced 0\n"
                  "m0 quantum 0\n"
                  "m1 quantum 0\n"
                  "key m0 m1\n");
    }
    {
        // X on |0> anticommutes with the dummy Z: a pure coin, no quantum op.
        Circuit c;
        c.num_lines = 1;
        c.input = {InputKind::kZero};
        c.steps = {Gate{GateKind::kH, 0, 0, {}}, Measure{0, 0, {}}};
        validate(c);
        EXPECT_EQ(compile_nonadaptive(c, rng).dump(),
                  "pbc t=0 s=0\n"
                  "coins 1 forced 0\n"
                  "m0 random 0\n"
                  "key m0\n");
    }
    {
        // Postselected magic-line measurement: flagged, key excludes it.
        Circuit c;
        c.num_lines = 2;
        c.input = {InputKind::kMagicA, InputKind::kMagicA};
        c.steps = {Measure{0, 0, -1}};
        c.output_lines = {1};
        validate(c);
        EXPECT_EQ(compile_nonadaptive(c, rng).dump(),
                  "pbc t=2 s=2\n"
                  "ZI post -1\n"
                  "IZ\n"
                  "coins 0 forced 0\n"
                  "m0 classical -1\n"
                  "line1 quantum 1\n"
                  "key line1\n");
    }
}

TEST(compile, static_dump_roundtrip_is_bit_exact) {
    test_util::Rng rng(0xd09f00d);
    Rng compile_rng(17);
    int nontrivial = 0;
    for (int rep = 0; rep < 120; rep++) {
        Circuit c = random_clifford_circuit(rng, true, false);
        StaticProgram prog;
        try {
            prog = compile_nonadaptive(c, compile_rng);
        } catch (const ProbabilityZeroError &) {
            continue;
        }
        std::string text = prog.dump();
        StaticProgram back = StaticProgram::parse(text);
        EXPECT_EQ(back.dump(), text) << serialize(c);
        nontrivial += prog.s() > 0 && prog.num_coins > 0;
    }
    EXPECT_GE(nontrivial, 10);
}

TEST(compile, static_parse_rejects_malformed_dumps) {
    EXPECT_THROW(StaticProgram::parse(""), ParseError);
    EXPECT_THROW(StaticProgram::parse("pbc t=1\nZ\n"), ParseError);
    EXPECT_THROW(StaticProgram::parse("pbc t=1 s=1\n"), ParseError);
    EXPECT_THROW(StaticProgram::parse("pbc t=1 s=1\nXX\ncoins 0 forced 0\nkey\n"), ParseError);
    EXPECT_THROW(StaticProgram::parse("pbc t=1 s=1\nZ\ncoins 0 forced 0\n"), ParseError);
    EXPECT_THROW(
        StaticProgram::parse("pbc t=1 s=1\nZ\ncoins 0 forced 0\nm0 quantum 3\nkey m0\n"),
        ParseError);
    EXPECT_THROW(
        StaticProgram::parse("pbc t=1 s=1\nZ post 0\ncoins 0 forced 0\nkey\n"), ParseError);
}

// ---------------------------------------------------------------- run_with --

// Honest dense backend over the t magic lines: samples each requested
// measurement from the true state, ignoring the postselection hint.
struct DenseOracleBackend {
    StateVector state;
    Rng *rng;

    explicit DenseOracleBackend(size_t t, Rng *r) : rng(r) {
        state = StateVector(size_t{1} << t);
        oracle::Vec v = {1.0};
        for (size_t k = 0; k < t; k++) {
            v = oracle::kron(v, oracle::ket_magic());
        }
        for (size_t i = 0; i < v.size(); i++) {
            state[i] = v[i];
        }
    }

    int operator()(const PauliOperator &op, std::optional<int>) {
        StateVector moved = apply_pauli(op, state);
        StateVector plus(state.size());
        for (size_t b = 0; b < state.size(); b++) {
            plus[b] = (state[b] + moved[b]) / 2.0;
        }
        double p_plus = state_norm2(plus);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        int v = u(*rng) < p_plus ? +1 : -1;
        double p = v == +1 ? p_plus : 1.0 - p_plus;
        for (size_t b = 0; b < state.size(); b++) {
            state[b] = (state[b] + double(v) * moved[b]) / (2.0 * std::sqrt(p));
        }
        return v;
    }
};

TEST(compile, run_with_calls_backend_at_most_t_times) {
    test_util::Rng rng(0xbac6e4d);
    Rng run_rng(23);
    for (int rep = 0; rep < 60; rep++) {
        Circuit c = random_clifford_circuit(rng, false, true);
        CompiledProgram prog = compile(c);
        DenseOracleBackend backend(prog.t(), &run_rng);
        RunSample sample = run_with(prog, backend, run_rng);
        EXPECT_LE(sample.backend_calls, prog.t()) << serialize(c);
        EXPECT_EQ(sample.key.size(), output_layout(c).record_ids.size() + c.output_lines.size())
            << serialize(c);
    }
}

TEST(compile, run_with_sampling_frequency_matches_exact_distribution) {
    // One magic line, X measurement: P(+1) = cos^2(pi/8) ~ 0.8536.
    Circuit c = one_line_magic({Gate{GateKind::kH, 0, 0, {}}, Measure{0, 0, {}}});
    Distribution want = exact_distribution(c);
    ASSERT_NEAR(want.probs.at("0"), std::pow(std::cos(std::numbers::pi / 8), 2), 1e-12);

    CompiledProgram prog = compile(c);
    Rng rng(20260816);
    int plus = 0;
    const int shots = 4000;
    for (int s = 0; s < shots; s++) {
        DenseOracleBackend backend(prog.t(), &rng);
        RunSample sample = run_with(prog, backend, rng);
        plus += sample.key == "0";
    }
    double freq = double(plus) / shots;
    // 4 sigma window around cos^2(pi/8): sigma ~ 0.0056 at 4000 shots.
    EXPECT_NEAR(freq, 0.8536, 0.023);
}

TEST(compile, run_with_postselection_miss_propagates) {
    Circuit c = one_line_magic({Measure{0, 0, -1}});
    Rng rng(99);
    int misses = 0, hits = 0;
    for (int s = 0; s < 200; s++) {
        CompiledProgram prog = compile(c);
        DenseOracleBackend backend(prog.t(), &rng);
        try {
            RunSample sample = run_with(prog, backend, rng);
            (void)sample;
            hits++;
        } catch (const PostselectionMissError &) {
            misses++;
        }
    }
    // Z on |A> is a fair coin: both outcomes must occur.
    EXPECT_GT(misses, 50);
    EXPECT_GT(hits, 50);
}

// -------------------------------------------------------------- accessors --

TEST(compile, history_lists_dummies_then_processed_records) {
    Circuit c;
    c.num_lines = 2;
    c.input = {InputKind::kZero, InputKind::kMagicA};
    c.steps = {Measure{0, 0, {}}, Measure{1, 1, {}}};
    validate(c);
    CompiledProgram prog = compile(c);
    auto a0 = prog.next();  // record 0 is Z on |0>: classical +1
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::EmitClassical>(a0));
    EXPECT_EQ(std::get<CompiledProgram::EmitClassical>(a0).outcome, +1);
    auto h = prog.history();
    ASSERT_EQ(h.size(), 2u);  // dummy + the classical record; the pending quantum one is absent
    EXPECT_EQ(h[0].kind, MeasurementKind::kDummy);
    EXPECT_EQ(h[0].op.str(), "ZI");
    EXPECT_EQ(h[0].outcome, +1);
    EXPECT_EQ(h[1].kind, MeasurementKind::kClassical);
    EXPECT_EQ(h[1].outcome, +1);

    auto a1 = prog.next();
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::MeasurePauli>(a1));
    EXPECT_THROW(prog.sample_key(), ContractError);  // not done yet
    prog.supply(-1);
    ASSERT_TRUE(std::holds_alternative<CompiledProgram::Done>(prog.next()));
    h = prog.history();
    ASSERT_EQ(h.size(), 3u);
    EXPECT_EQ(h[2].kind, MeasurementKind::kQuantum);
    EXPECT_EQ(h[2].outcome, -1);
    EXPECT_EQ(h[2].op.str(), "IZ");
    EXPECT_EQ(prog.sample_key(), "01");
}

TEST(compile, output_bits_filter_the_key) {
    Circuit c;
    c.num_lines = 1;
    c.input = {InputKind::kMagicA};
    c.steps = {Measure{0, 0, {}}, Gate{GateKind::kH, 0, 0, {}}, Measure{0, 1, {}}};
    c.output_bits = {1};
    validate(c);
    Distribution want = exact_distribution(c);
    Distribution got = exact_distribution_hybrid(c);
    expect_same_distribution(got, want, serialize(c));
    for (const auto &[key, p] : got.probs) {
        EXPECT_EQ(key.size(), 1u);
    }
}

TEST(compile, supply_without_pending_action_is_rejected) {
    Circuit c = one_line_magic({Measure{0, 0, {}}});
    CompiledProgram prog = compile(c);
    EXPECT_THROW(prog.supply(+1), ContractError);
    prog.next();
    EXPECT_THROW(prog.supply(2), ContractError);
    prog.supply(+1);
    EXPECT_THROW(prog.supply(-1), ContractError);
}

// ------------------------------------------------------- gadget pipeline ---

TEST(compile, gadgetized_circuits_compile_and_match_dense) {
    test_util::Rng rng(0x6ad6e7);
    int compared = 0;
    for (int rep = 0; rep < 60; rep++) {
        Circuit c;
        c.num_lines = 1 + rng() % 2;
        c.input.assign(c.num_lines, InputKind::kZero);
        static const GateKind kinds[] = {GateKind::kH, GateKind::kS,  GateKind::kCx,
                                         GateKind::kT, GateKind::kTdg, GateKind::kCz};
        size_t steps = 1 + rng() % 6;
        for (size_t i = 0; i < steps; i++) {
            Gate g;
            g.kind = kinds[rng() % 6];
            g.q0 = rng() % c.num_lines;
            if (gate_arity(g.kind) == 2) {
                if (c.num_lines < 2) {
                    g.kind = GateKind::kT;
                } else {
                    do {
                        g.q1 = rng() % c.num_lines;
                    } while (g.q1 == g.q0);
                }
            }
            c.steps.push_back(g);
        }
        for (uint32_t q = 0; q < c.num_lines; q++) {
            c.output_lines.push_back(q);
        }
        validate(c);
        if (classify(c).t_count == 0 || classify(c).t_count > 3) {
            continue;
        }
        Circuit g = gadgetize(c);
        Distribution want = exact_distribution(g);
        Distribution got = exact_distribution_hybrid(g);
        expect_same_distribution(got, want, serialize(g));
        compared++;
    }
    EXPECT_GE(compared, 25);
}

}  // namespace
