#include "pbc/dense.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "oracle.hpp"
#include "pbc/circuit.hpp"
#include "test_util.hpp"

namespace {

using namespace pbc;

oracle::Mat ref_gate_mat(GateKind kind, uint32_t q0, uint32_t q1, size_t n) {
    switch (kind) {
        case GateKind::kH:
            return oracle::embed1(oracle::gate1("H"), q0, n);
        case GateKind::kS:
            return oracle::embed1(oracle::gate1("S"), q0, n);
        case GateKind::kSdg:
            return oracle::embed1(oracle::gate1("SDG"), q0, n);
        case GateKind::kX:
            return oracle::embed1(oracle::gate1("X"), q0, n);
        case GateKind::kY:
            return oracle::embed1(oracle::gate1("Y"), q0, n);
        case GateKind::kZ:
            return oracle::embed1(oracle::gate1("Z"), q0, n);
        case GateKind::kT:
            return oracle::embed1(oracle::gate1("T"), q0, n);
        case GateKind::kTdg:
            return oracle::embed1(oracle::gate1("TDG"), q0, n);
        case GateKind::kSqrtX:
            return oracle::embed1(oracle::gate1("SX"), q0, n);
        case GateKind::kSqrtXdg:
            return oracle::embed1(oracle::gate1("SXDG"), q0, n);
        case GateKind::kSqrtY:
            return oracle::embed1(oracle::gate1("SY"), q0, n);
        case GateKind::kSqrtYdg:
            return oracle::embed1(oracle::gate1("SYDG"), q0, n);
        case GateKind::kCx:
            return oracle::embed2(oracle::gate2("CX"), q0, q1, n);
        case GateKind::kCz:
            return oracle::embed2(oracle::gate2("CZ"), q0, q1, n);
        case GateKind::kCs:
            return oracle::embed2(oracle::gate2("CS"), q0, q1, n);
        case GateKind::kCsdg:
            return oracle::embed2(oracle::gate2("CSDG"), q0, q1, n);
    }
    throw std::runtime_error("ref_gate_mat: bad kind");
}

// Independent reference: full-matrix simulation driven by oracle primitives.
// Returns the normalized outcome map, or an empty map when every branch is
// postselected away.
struct RefResult {
    std::map<std::string, double> probs;
    double preselection_weight = 0;
};

struct RefSim {
    const Circuit &c;
    size_t n;
    OutputLayout layout;
    std::map<std::string, double> probs;
    double total = 0;
    std::vector<std::pair<uint32_t, int>> bits;

    explicit RefSim(const Circuit &circuit)
        : c(circuit), n(circuit.num_lines), layout(output_layout(circuit)) {}

    oracle::Vec initial_state() const {
        oracle::Vec v{1.0};
        size_t start = 0;
        if (!c.stabilizer_block.empty()) {
            size_t r = c.stabilizer_block.size();
            size_t dim = size_t{1} << r;
            oracle::Mat proj = oracle::eye(dim);
            for (const auto &g : c.stabilizer_block) {
                oracle::Mat p = oracle::pauli_string(g.str());
                oracle::Mat half = oracle::scal(0.5, oracle::add(oracle::eye(dim), p));
                proj = oracle::mul(half, proj);
            }
            double best = -1;
            oracle::Vec best_col;
            for (size_t j = 0; j < dim; j++) {
                oracle::Vec e(dim, 0.0);
                e[j] = 1.0;
                oracle::Vec col = oracle::mul(proj, e);
                if (oracle::norm2(col) > best) {
                    best = oracle::norm2(col);
                    best_col = col;
                }
            }
            v = oracle::normalized(best_col);
            start = r;
        }
        for (size_t q = start; q < n; q++) {
            v = oracle::kron(v, c.input[q] == InputKind::kZero ? oracle::ket0()
                                                               : oracle::ket_magic());
        }
        return v;
    }

    bool fires(const ParityControl &pc) const {
        int parity = pc.invert ? 1 : 0;
        for (uint32_t id : pc.records) {
            for (const auto &[rec, bit] : bits) {
                if (rec == id) {
                    parity ^= bit;
                }
            }
        }
        return parity == 1;
    }

    void go(oracle::Vec v, size_t step, double w) {
        if (step == c.steps.size()) {
            std::string line_bits;
            outputs(v, 0, w, line_bits);
            return;
        }
        if (is_gate(c.steps[step])) {
            const Gate &g = as_gate(c.steps[step]);
            if (!g.control.has_value() || fires(*g.control)) {
                v = oracle::mul(ref_gate_mat(g.kind, g.q0, g.q1, n), v);
            }
            go(std::move(v), step + 1, w);
            return;
        }
        const Measure &m = as_measure(c.steps[step]);
        oracle::Mat obs = oracle::embed1(oracle::pauli('Z'), m.line, n);
        for (int outcome : {+1, -1}) {
            if (m.postselect.has_value() && *m.postselect != outcome) {
                continue;
            }
            auto [p, proj] = oracle::measure(v, obs, outcome);
            if (p < 1e-13) {
                continue;
            }
            bits.emplace_back(m.record_id, outcome == +1 ? 0 : 1);
            go(oracle::normalized(proj), step + 1, w * p);
            bits.pop_back();
        }
    }

    void outputs(const oracle::Vec &v, size_t k, double w, std::string &line_bits) {
        if (k == layout.lines.size()) {
            std::string key;
            for (uint32_t id : layout.record_ids) {
                for (const auto &[rec, bit] : bits) {
                    if (rec == id) {
                        key.push_back(static_cast<char>('0' + bit));
                    }
                }
            }
            key += line_bits;
            probs[key] += w;
            total += w;
            return;
        }
        oracle::Mat obs = oracle::embed1(oracle::pauli('Z'), layout.lines[k], n);
        for (int outcome : {+1, -1}) {
            auto [p, proj] = oracle::measure(v, obs, outcome);
            if (p < 1e-13) {
                continue;
            }
            line_bits.push_back(outcome == +1 ? '0' : '1');
            outputs(oracle::normalized(proj), k + 1, w * p, line_bits);
            line_bits.pop_back();
        }
    }

    RefResult run() {
        go(initial_state(), 0, 1.0);
        RefResult res;
        res.preselection_weight = total;
        if (total > 1e-200) {
            for (auto &[key, p] : probs) {
                res.probs[key] = p / total;
            }
        }
        return res;
    }
};

void expect_same_distribution(const Distribution &got, const std::map<std::string, double> &want,
                              double tol = 1e-10) {
    ASSERT_EQ(got.probs.size(), want.size());
    for (const auto &[key, p] : want) {
        auto it = got.probs.find(key);
        ASSERT_NE(it, got.probs.end()) << "missing outcome " << key;
        EXPECT_NEAR(it->second, p, tol) << "outcome " << key;
    }
}

TEST(dense, magic_state_measured_in_z_is_uniform) {
    Distribution d = exact_distribution(parse("qubits 1\ninput A\nmeasure 0 -> m0\n"));
    expect_same_distribution(d, {{"0", 0.5}, {"1", 0.5}}, 1e-14);
    EXPECT_NEAR(d.total(), 1.0, 1e-12);
}

TEST(dense, hadamard_gives_uniform) {
    Distribution d = exact_distribution(parse("qubits 1\ngate H 0\nmeasure 0 -> m0\n"));
    expect_same_distribution(d, {{"0", 0.5}, {"1", 0.5}}, 1e-14);
}

TEST(dense, ghz_three_lines) {
    Distribution d = exact_distribution(
        parse("qubits 3\ngate H 0\ngate CX 0 1\ngate CX 0 2\noutput 0 1 2\n"));
    expect_same_distribution(d, {{"000", 0.5}, {"111", 0.5}}, 1e-14);
    EXPECT_EQ(d.dump(), "000 0.5\n111 0.5\n");
}

TEST(dense, dump_uses_fifteen_significant_digits) {
    Distribution d;
    d.probs["0"] = std::cos(M_PI / 8) * std::cos(M_PI / 8);
    d.probs["1"] = 1.0 - d.probs["0"];
    EXPECT_EQ(d.dump(), "0 0.853553390593274\n1 0.146446609406726\n");
}

TEST(dense, postselection_conditions_and_renormalizes) {
    Distribution d = exact_distribution(parse(
        "qubits 1\ngate H 0\nmeasure 0 -> m0 post -1\ngate H 0\nmeasure 0 -> m1\n"));
    expect_same_distribution(d, {{"0", 0.5}, {"1", 0.5}}, 1e-14);
    EXPECT_NEAR(d.preselection_weight, 0.5, 1e-12);
}

TEST(dense, impossible_postselection_signals_probability_zero) {
    EXPECT_THROW(exact_distribution(parse("qubits 1\nmeasure 0 -> m0 post -1\n")),
                 ProbabilityZeroError);
    EXPECT_THROW(
        exact_distribution(parse("qubits 1\ngate X 0\nmeasure 0 -> m0 post +1\n")),
        ProbabilityZeroError);
    EXPECT_THROW(exact_distribution(parse(
                     "qubits 2\ngate H 0\ngate CX 0 1\nmeasure 0 -> m0 post +1\n"
                     "measure 1 -> m1 post -1\n")),
                 ProbabilityZeroError);
}

TEST(dense, budget_errors) {
    std::string wide = "qubits 15\n";
    EXPECT_THROW(exact_distribution(parse(wide)), BudgetError);

    std::string chain = "qubits 1\n";
    for (int k = 0; k < 4; k++) {
        chain += "gate H 0\nmeasure 0 -> m" + std::to_string(k) + "\n";
    }
    DenseBudget tight;
    tight.max_branches = 8;
    EXPECT_THROW(exact_distribution(parse(chain), tight), BudgetError);
    EXPECT_NO_THROW(exact_distribution(parse(chain)));
}

TEST(dense, parity_controls_frozen) {
    Distribution d = exact_distribution(parse(
        "qubits 2\ngate H 0\nmeasure 0 -> m0\ngate X 1 if m0\nmeasure 1 -> m1\n"));
    expect_same_distribution(d, {{"00", 0.5}, {"11", 0.5}}, 1e-14);

    Distribution inv = exact_distribution(parse(
        "qubits 2\ngate H 0\nmeasure 0 -> m0\ngate X 1 if m0^1\nmeasure 1 -> m1\n"));
    expect_same_distribution(inv, {{"01", 0.5}, {"10", 0.5}}, 1e-14);

    // m0 ^ m1 ^ 1 is always 1 here, so line 2 always flips.
    Distribution multi = exact_distribution(parse(
        "qubits 3\ngate H 0\nmeasure 0 -> m0\ngate X 1 if m0\nmeasure 1 -> m1\n"
        "gate X 2 if m0^m1^1\noutput 2\n"));
    expect_same_distribution(multi, {{"001", 0.5}, {"111", 0.5}}, 1e-14);
}

TEST(dense, stabilizer_block_frozen_states) {
    expect_same_distribution(
        exact_distribution(parse(
            "qubits 2\ninput-stab \"XX\" \"ZZ\"\nmeasure 0 -> m0\nmeasure 1 -> m1\n")),
        {{"00", 0.5}, {"11", 0.5}}, 1e-14);
    expect_same_distribution(
        exact_distribution(parse(
            "qubits 2\ninput-stab \"XX\" \"-ZZ\"\nmeasure 0 -> m0\nmeasure 1 -> m1\n")),
        {{"01", 0.5}, {"10", 0.5}}, 1e-14);
    expect_same_distribution(
        exact_distribution(parse("qubits 1\ninput-stab \"-Z\"\nmeasure 0 -> m0\n")),
        {{"1", 1.0}}, 1e-14);
    expect_same_distribution(
        exact_distribution(parse(
            "qubits 2\ninput-stab \"X\"\nmeasure 0 -> m0\nmeasure 1 -> m1\n")),
        {{"00", 0.5}, {"10", 0.5}}, 1e-14);
}

TEST(dense, output_bits_marginalize) {
    Distribution d = exact_distribution(parse(
        "qubits 2\ngate H 0\ngate CX 0 1\nmeasure 0 -> m0\nmeasure 1 -> m1\n"
        "output-bits m0\n"));
    expect_same_distribution(d, {{"0", 0.5}, {"1", 0.5}}, 1e-14);
}

Circuit random_dense_circuit(test_util::Rng &rng, bool allow_postselect) {
    Circuit c;
    c.num_lines = 1 + rng() % 4;
    c.input.resize(c.num_lines);
    for (auto &k : c.input) {
        k = rng() % 2 ? InputKind::kMagicA : InputKind::kZero;
    }
    static const GateKind kinds[] = {GateKind::kH,    GateKind::kS,      GateKind::kSdg,
                                     GateKind::kX,    GateKind::kY,      GateKind::kZ,
                                     GateKind::kCx,   GateKind::kCz,     GateKind::kT,
                                     GateKind::kTdg,  GateKind::kSqrtX,  GateKind::kSqrtXdg,
                                     GateKind::kSqrtY, GateKind::kSqrtYdg, GateKind::kCs,
                                     GateKind::kCsdg};
    uint32_t next_record = 0;
    std::vector<uint32_t> records;
    std::vector<uint32_t> postselected_lines;
    size_t num_steps = 1 + rng() % 9;
    for (size_t i = 0; i < num_steps; i++) {
        if (rng() % 4 == 0) {
            Measure m;
            m.line = rng() % c.num_lines;
            m.record_id = next_record++;
            if (allow_postselect && rng() % 5 == 0) {
                m.postselect = rng() % 2 ? +1 : -1;
                postselected_lines.push_back(m.line);
            }
            records.push_back(m.record_id);
            c.steps.push_back(m);
        } else {
            Gate g;
            g.kind = kinds[rng() % 16];
            g.q0 = rng() % c.num_lines;
            if (gate_arity(g.kind) == 2) {
                if (c.num_lines < 2) {
                    g.kind = GateKind::kH;
                } else {
                    do {
                        g.q1 = rng() % c.num_lines;
                    } while (g.q1 == g.q0);
                }
            }
            if (!records.empty() && rng() % 5 == 0) {
                ParityControl pc;
                pc.records.push_back(records[rng() % records.size()]);
                pc.invert = rng() % 2;
                g.control = pc;
            }
            c.steps.push_back(g);
        }
    }
    for (uint32_t line = 0; line < c.num_lines; line++) {
        bool posted = std::find(postselected_lines.begin(), postselected_lines.end(), line) !=
                      postselected_lines.end();
        if (!posted && rng() % 2 == 0) {
            c.output_lines.push_back(line);
        }
    }
    validate(c);
    return c;
}

// The oracle cross-check: branch enumeration against an independent
// full-matrix simulation, including parity controls and postselection.
TEST(dense, matches_reference_simulation_on_random_circuits) {
    test_util::Rng rng(0xd45e01);
    int compared = 0, zero_agreements = 0;
    for (int rep = 0; rep < 120; rep++) {
        Circuit c = random_dense_circuit(rng, true);
        RefResult ref = RefSim(c).run();
        if (ref.preselection_weight < 1e-200) {
            EXPECT_THROW(exact_distribution(c), ProbabilityZeroError) << serialize(c);
            zero_agreements++;
            continue;
        }
        Distribution got = exact_distribution(c);
        EXPECT_NEAR(got.total(), 1.0, 1e-10);
        EXPECT_NEAR(got.preselection_weight, ref.preselection_weight, 1e-9) << serialize(c);
        ASSERT_EQ(got.probs.size(), ref.probs.size()) << serialize(c);
        for (const auto &[key, p] : ref.probs) {
            auto it = got.probs.find(key);
            ASSERT_NE(it, got.probs.end()) << serialize(c) << "\nmissing " << key;
            EXPECT_NEAR(it->second, p, 1e-9) << serialize(c);
        }
        compared++;
    }
    EXPECT_GE(compared, 80);
    EXPECT_GE(zero_agreements, 1);
}

TEST(dense, magic_inputs_match_reference_with_stabilizer_blocks) {
    test_util::Rng rng(0xb10cc);
    for (int rep = 0; rep < 40; rep++) {
        uint32_t r = 1 + rng() % 3;
        CliffordTableau tab(r);
        for (int g = 0; g < 12; g++) {
            switch (rng() % 3) {
                case 0:
                    tab.apply_h(rng() % r);
                    break;
                case 1:
                    tab.apply_s(rng() % r);
                    break;
                default:
                    if (r >= 2) {
                        uint32_t a = rng() % r, b;
                        do {
                            b = rng() % r;
                        } while (b == a);
                        tab.apply_cx(a, b);
                    } else {
                        tab.apply_h(0);
                    }
            }
        }
        Circuit c;
        c.num_lines = r + rng() % 2;
        c.input.assign(c.num_lines, InputKind::kZero);
        for (uint32_t k = 0; k < r; k++) {
            PauliOperator gen = tab.z_image(k);
            if (rng() % 2) {
                gen.negate();
            }
            c.stabilizer_block.push_back(gen);
        }
        for (uint32_t line = 0; line < c.num_lines; line++) {
            c.add_measure(line, line);
        }
        validate(c);
        RefResult ref = RefSim(c).run();
        Distribution got = exact_distribution(c);
        ASSERT_EQ(got.probs.size(), ref.probs.size()) << serialize(c);
        for (const auto &[key, p] : ref.probs) {
            ASSERT_TRUE(got.probs.count(key)) << serialize(c);
            EXPECT_NEAR(got.probs.at(key), p, 1e-9) << serialize(c);
        }
    }
}

// Deferring measurements to the end never changes the distribution, after
// aligning the record-bit order of the two layouts.
TEST(dense, invariant_under_deferring_measurements) {
    test_util::Rng rng(0xdefe44a1);
    int moved = 0;
    for (int rep = 0; rep < 150; rep++) {
        Circuit c = random_dense_circuit(rng, false);
        Circuit n = normalize_measurements_to_end(c);
        if (n == c) {
            continue;
        }
        moved++;
        Distribution dc = exact_distribution(c);
        Distribution dn = exact_distribution(n);
        OutputLayout lc = output_layout(c);
        OutputLayout ln = output_layout(n);
        ASSERT_EQ(lc.record_ids.size(), ln.record_ids.size());
        // Remap normalized-circuit keys into the original key order.
        std::map<std::string, double> remapped;
        for (const auto &[key, p] : dn.probs) {
            std::string out;
            for (uint32_t id : lc.record_ids) {
                size_t pos = std::find(ln.record_ids.begin(), ln.record_ids.end(), id) -
                             ln.record_ids.begin();
                out.push_back(key[pos]);
            }
            out += key.substr(ln.record_ids.size());
            remapped[out] += p;
        }
        ASSERT_EQ(remapped.size(), dc.probs.size()) << serialize(c);
        for (const auto &[key, p] : dc.probs) {
            ASSERT_TRUE(remapped.count(key)) << serialize(c);
            EXPECT_NEAR(remapped.at(key), p, 1e-10) << serialize(c);
        }
    }
    EXPECT_GE(moved, 10);
}

TEST(dense, norm_preserved_by_long_gate_sequences) {
    test_util::Rng rng(0x4011);
    Circuit shell;
    shell.num_lines = 3;
    shell.input = {InputKind::kMagicA, InputKind::kZero, InputKind::kMagicA};
    StateVector v = dense_input_state(shell);
    static const GateKind kinds[] = {GateKind::kH,    GateKind::kS,      GateKind::kSdg,
                                     GateKind::kX,    GateKind::kY,      GateKind::kZ,
                                     GateKind::kCx,   GateKind::kCz,     GateKind::kT,
                                     GateKind::kTdg,  GateKind::kSqrtX,  GateKind::kSqrtXdg,
                                     GateKind::kSqrtY, GateKind::kSqrtYdg, GateKind::kCs,
                                     GateKind::kCsdg};
    for (int g = 0; g < 100; g++) {
        GateKind k = kinds[rng() % 16];
        uint32_t q0 = rng() % 3, q1 = (q0 + 1 + rng() % 2) % 3;
        apply_gate(v, 3, k, q0, q1);
    }
    EXPECT_LT(std::abs(state_norm2(v) - 1.0), 1e-12);
}

TEST(dense, distance_frozen_cases) {
    Distribution p, q;
    p.probs = {{"0", 0.5}, {"1", 0.5}};
    q.probs = {{"0", 0.5}, {"1", 0.5}};
    DistanceReport same = distance(p, q, DistanceMetric::kAdditive);
    EXPECT_EQ(same.additive, 0.0);
    EXPECT_EQ(same.multiplicative, 0.0);
    EXPECT_FALSE(same.multiplicative_infinite);

    Distribution point;
    point.probs = {{"0", 1.0}};
    DistanceReport d = distance(p, point, DistanceMetric::kAdditive);
    EXPECT_NEAR(d.additive, 1.0, 1e-15);
    EXPECT_NEAR(d.tvd, 0.5, 1e-15);
    EXPECT_EQ(d.value, d.additive);

    // q has mass where p has none: multiplicative blows up.
    DistanceReport inf = distance(point, p, DistanceMetric::kMultiplicative);
    EXPECT_TRUE(inf.multiplicative_infinite);
    EXPECT_TRUE(std::isinf(inf.value));

    Distribution wide;
    wide.probs = {{"00", 1.0}};
    EXPECT_THROW(distance(p, wide, DistanceMetric::kAdditive), ContractError);
}

TEST(dense, multiplicative_bounds_additive) {
    test_util::Rng rng(0x3ab);
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    for (int rep = 0; rep < 200; rep++) {
        size_t support = 2 + rng() % 6;
        Distribution p, q;
        double pt = 0, qt = 0;
        for (size_t i = 0; i < support; i++) {
            std::string key(3, '0');
            key[0] = static_cast<char>('0' + (i & 1));
            key[1] = static_cast<char>('0' + ((i >> 1) & 1));
            key[2] = static_cast<char>('0' + ((i >> 2) & 1));
            double base = unit(rng);
            p.probs[key] = base;
            q.probs[key] = base * (1.0 + 0.2 * (unit(rng) - 0.5));
            pt += p.probs[key];
            qt += q.probs[key];
        }
        for (auto &[key, v] : p.probs) {
            v /= pt;
        }
        for (auto &[key, v] : q.probs) {
            v /= qt;
        }
        DistanceReport rep_out = distance(p, q, DistanceMetric::kMultiplicative);
        ASSERT_FALSE(rep_out.multiplicative_infinite);
        EXPECT_LE(rep_out.additive, rep_out.multiplicative + 1e-12);
    }
}

TEST(dense, unitary_equality_frozen_cases) {
    Circuit base = parse("qubits 1\ngate H 0\n");
    EXPECT_TRUE(unitary_equal_up_to_phase(base, base));

    // Z X Z X = -I: pure global phase.
    Circuit phased = parse("qubits 1\ngate H 0\ngate Z 0\ngate X 0\ngate Z 0\ngate X 0\n");
    EXPECT_TRUE(unitary_equal_up_to_phase(base, phased));

    Circuit hsh = parse("qubits 1\ngate H 0\ngate S 0\ngate H 0\n");
    Circuit sx = parse("qubits 1\ngate SqrtX 0\n");
    EXPECT_TRUE(unitary_equal_up_to_phase(hsh, sx));
    EXPECT_NEAR(unitary_distance_up_to_phase(hsh, sx), 0.0, 1e-12);

    Circuit x = parse("qubits 1\ngate X 0\n");
    EXPECT_FALSE(unitary_equal_up_to_phase(base, x));
    EXPECT_NEAR(unitary_distance_up_to_phase(base, x),
                std::sqrt(4.0 - 2.0 * std::sqrt(2.0)), 1e-12);

    EXPECT_THROW(unitary_equal_up_to_phase(base, parse("qubits 2\ngate H 0\n")), ContractError);
    EXPECT_THROW(
        unitary_equal_up_to_phase(base, parse("qubits 1\nmeasure 0 -> m0\n")),
        ContractError);
    DenseBudget tiny;
    tiny.max_unitary_lines = 1;
    EXPECT_THROW(unitary_equal_up_to_phase(parse("qubits 2\ngate H 0\n"),
                                           parse("qubits 2\ngate H 0\n"), tiny),
                 BudgetError);
}

TEST(dense, circuit_unitary_matches_reference) {
    test_util::Rng rng(0x0ce4);
    static const GateKind kinds[] = {GateKind::kH,    GateKind::kS,      GateKind::kSdg,
                                     GateKind::kX,    GateKind::kY,      GateKind::kZ,
                                     GateKind::kCx,   GateKind::kCz,     GateKind::kT,
                                     GateKind::kTdg,  GateKind::kSqrtX,  GateKind::kSqrtXdg,
                                     GateKind::kSqrtY, GateKind::kSqrtYdg, GateKind::kCs,
                                     GateKind::kCsdg};
    for (int rep = 0; rep < 60; rep++) {
        Circuit c;
        c.num_lines = 1 + rng() % 3;
        c.input.assign(c.num_lines, InputKind::kZero);
        oracle::Mat want = oracle::eye(size_t{1} << c.num_lines);
        for (int g = 0; g < 8; g++) {
            GateKind k = kinds[rng() % 16];
            uint32_t q0 = rng() % c.num_lines, q1 = 0;
            if (gate_arity(k) == 2) {
                if (c.num_lines < 2) {
                    k = GateKind::kS;
                } else {
                    do {
                        q1 = rng() % c.num_lines;
                    } while (q1 == q0);
                }
            }
            if (gate_arity(k) == 2) {
                c.add_gate(k, q0, q1);
            } else {
                c.add_gate(k, q0);
            }
            want = oracle::mul(ref_gate_mat(k, q0, q1, c.num_lines), want);
        }
        auto cols = circuit_unitary(c);
        double max_diff = 0;
        for (size_t j = 0; j < cols.size(); j++) {
            for (size_t i = 0; i < cols.size(); i++) {
                max_diff = std::max(max_diff, std::abs(cols[j][i] - want[i][j]));
            }
        }
        EXPECT_LT(max_diff, 1e-12);
    }
}

}  // namespace
