#pragma once

// Parameterized circuit families over the Clifford+T gate set, the expansion
// that reassigns every T/Tdg gate in all combinations, closure and
// consistency checks for that expansion, and anticoncentration estimation.
//
// Every family is a pure function of (class id, parameter record); the
// generators draw the parameter record from the family's distribution and the
// builders turn a record back into the exact same circuit, so instances are
// reproducible from their manifests alone.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pbc/circuit.hpp"
#include "pbc/dense.hpp"
#include "pbc/errors.hpp"
#include "pbc/gadgets.hpp"
#include "pbc/pipeline.hpp"
#include "pbc/rng.hpp"

namespace pbc {

// ------------------------------------------------------------ families -----

enum class CircuitClass : uint8_t { kIqpIsing, kSparseIqp, kRcs, kConjugatedClifford };

inline const char *class_name(CircuitClass c) {
    switch (c) {
        case CircuitClass::kIqpIsing:
            return "iqp-ising";
        case CircuitClass::kSparseIqp:
            return "sparse-iqp";
        case CircuitClass::kRcs:
            return "rcs";
        case CircuitClass::kConjugatedClifford:
            return "conjugated-clifford";
    }
    throw ContractError("class_name: bad value");
}

inline std::optional<CircuitClass> parse_class_name(const std::string &name) {
    if (name == "iqp-ising") {
        return CircuitClass::kIqpIsing;
    }
    if (name == "sparse-iqp") {
        return CircuitClass::kSparseIqp;
    }
    if (name == "rcs") {
        return CircuitClass::kRcs;
    }
    if (name == "conjugated-clifford" || name == "conjugated") {
        return CircuitClass::kConjugatedClifford;
    }
    return {};
}

// ----------------------------------------------------- parameter records ---

// Diagonal-phase family: H on every line, per-line phase T^{v_i}, per-pair
// phase CS^{w_ij}, H on every line, all lines measured.  The same record
// shape serves both the dense and the sparse two-qubit laws; `p` stores the
// sparsity the record was drawn with (1.0 for the dense law) and does not
// affect the built circuit.
struct IqpTheta {
    std::vector<int> v;  // one per line, 0..7
    std::vector<int> w;  // one per pair (i<j) in lexicographic order, 0..3
    double p = 1.0;

    bool operator==(const IqpTheta &) const = default;
};

// Brickwork family: layer k pairs adjacent lines starting at offset k % 2 and
// applies one draw from the seven-element layer set to each pair.
struct RcsChoice {
    GateKind kind;  // kCz, kSqrtX, kSqrtXdg, kSqrtY, kSqrtYdg, kT, or kTdg
    int slot = 0;   // 1-qubit kinds: 0 = first line of the pair, 1 = second

    bool operator==(const RcsChoice &) const = default;
};

struct RcsTheta {
    std::vector<std::vector<RcsChoice>> layers;

    bool operator==(const RcsTheta &) const = default;
};

// Conjugated-Clifford family: a fixed 1-qubit word V applied to every line, a
// random Clifford body U, then V undone on every line (reversed, inverted
// word), all lines measured.
struct ConjugatedTheta {
    std::vector<GateKind> v_word;  // explicit 1-qubit gate word, applied in order
    std::vector<Gate> u_gates;     // Clifford body, no parity controls

    bool operator==(const ConjugatedTheta &) const = default;
};

using ClassTheta = std::variant<IqpTheta, RcsTheta, ConjugatedTheta>;

struct ClassInstance {
    CircuitClass class_id = CircuitClass::kIqpIsing;
    uint32_t n = 0;
    uint64_t seed = 0;
    ClassTheta theta;
    Circuit circuit;      // fixed lowered form: only H,S,Sdg,X,Y,Z,CX,CZ,T,Tdg
    size_t t_count = 0;   // T and Tdg gates in `circuit`
};

// ------------------------------------------------------------- builders ----

inline size_t iqp_pair_count(uint32_t n) { return size_t{n} * (n - 1) / 2; }

// Rewrites controlled-S powers and square-root-of-Pauli gates into their
// fixed basic-gate words so only H,S,Sdg,X,Y,Z,CX,CZ,T,Tdg remain.
inline Circuit expand_to_clifford_t(const Circuit &input) {
    Circuit mid = expand_cs(input);
    Circuit out = mid;
    out.steps.clear();
    for (const Step &s : mid.steps) {
        if (is_gate(s)) {
            const Gate &g = as_gate(s);
            switch (g.kind) {
                case GateKind::kSqrtX:
                case GateKind::kSqrtXdg:
                case GateKind::kSqrtY:
                case GateKind::kSqrtYdg:
                    for (const LoweredGate &lg : lower_gate(g.kind, g.q0, g.q1)) {
                        Gate word_gate = to_gate(lg);
                        word_gate.control = g.control;
                        out.steps.push_back(word_gate);
                    }
                    continue;
                default:
                    break;
            }
        }
        out.steps.push_back(s);
    }
    validate(out);
    return out;
}

namespace detail {

inline void check_iqp_shape(uint32_t n, const IqpTheta &theta) {
    if (n < 1) {
        throw ContractError("iqp: need at least one line");
    }
    if (theta.v.size() != n || theta.w.size() != iqp_pair_count(n)) {
        throw ContractError("iqp: parameter record has the wrong shape");
    }
    for (int v : theta.v) {
        if (v < 0 || v > 7) {
            throw ContractError("iqp: line power out of range");
        }
    }
    for (int w : theta.w) {
        if (w < 0 || w > 3) {
            throw ContractError("iqp: pair power out of range");
        }
    }
    if (!(theta.p >= 0.0 && theta.p <= 1.0)) {
        throw ContractError("iqp: sparsity out of range");
    }
}

inline void append_measures_of_all_lines(Circuit &c) {
    for (uint32_t line = 0; line < c.num_lines; line++) {
        c.steps.push_back(Measure{line, line, {}});
    }
}

}  // namespace detail

inline Circuit build_iqp_circuit(uint32_t n, const IqpTheta &theta) {
    detail::check_iqp_shape(n, theta);
    Circuit c;
    c.num_lines = n;
    c.input.assign(n, InputKind::kZero);
    for (uint32_t line = 0; line < n; line++) {
        c.steps.push_back(Gate{GateKind::kH, line, 0, {}});
    }
    for (uint32_t line = 0; line < n; line++) {
        // T^v as the bit decomposition v = 4z + 2s + t, e.g. T^3 = S then T.
        int v = theta.v[line];
        if (v & 4) {
            c.steps.push_back(Gate{GateKind::kZ, line, 0, {}});
        }
        if (v & 2) {
            c.steps.push_back(Gate{GateKind::kS, line, 0, {}});
        }
        if (v & 1) {
            c.steps.push_back(Gate{GateKind::kT, line, 0, {}});
        }
    }
    size_t pair = 0;
    for (uint32_t i = 0; i < n; i++) {
        for (uint32_t j = i + 1; j < n; j++) {
            for (const Gate &g : cs_power_gates(theta.w[pair++], i, j)) {
                c.steps.push_back(g);
            }
        }
    }
    for (uint32_t line = 0; line < n; line++) {
        c.steps.push_back(Gate{GateKind::kH, line, 0, {}});
    }
    detail::append_measures_of_all_lines(c);
    return expand_to_clifford_t(c);
}

inline const std::array<GateKind, 7> &rcs_gate_set() {
    static const std::array<GateKind, 7> kSet = {
        GateKind::kCz,     GateKind::kSqrtX, GateKind::kSqrtXdg, GateKind::kSqrtY,
        GateKind::kSqrtYdg, GateKind::kT,    GateKind::kTdg};
    return kSet;
}

inline std::vector<std::pair<uint32_t, uint32_t>> rcs_layer_pairs(uint32_t n, size_t layer) {
    std::vector<std::pair<uint32_t, uint32_t>> pairs;
    for (uint32_t a = layer % 2; a + 1 < n; a += 2) {
        pairs.emplace_back(a, a + 1);
    }
    return pairs;
}

inline Circuit build_rcs_circuit(uint32_t n, const RcsTheta &theta) {
    if (n < 2) {
        throw ContractError("rcs: need at least two lines");
    }
    if (theta.layers.empty()) {
        throw ContractError("rcs: need at least one layer");
    }
    Circuit c;
    c.num_lines = n;
    c.input.assign(n, InputKind::kZero);
    for (size_t layer = 0; layer < theta.layers.size(); layer++) {
        auto pairs = rcs_layer_pairs(n, layer);
        if (theta.layers[layer].size() != pairs.size()) {
            throw ContractError("rcs: layer record has the wrong shape");
        }
        for (size_t k = 0; k < pairs.size(); k++) {
            const RcsChoice &choice = theta.layers[layer][k];
            const auto &set = rcs_gate_set();
            if (std::find(set.begin(), set.end(), choice.kind) == set.end()) {
                throw ContractError("rcs: choice is not in the layer gate set");
            }
            if (choice.kind == GateKind::kCz) {
                if (choice.slot != 0) {
                    throw ContractError("rcs: a two-qubit choice has no slot");
                }
                c.steps.push_back(Gate{GateKind::kCz, pairs[k].first, pairs[k].second, {}});
                continue;
            }
            if (choice.slot != 0 && choice.slot != 1) {
                throw ContractError("rcs: slot must be 0 or 1");
            }
            uint32_t line = choice.slot == 0 ? pairs[k].first : pairs[k].second;
            c.steps.push_back(Gate{choice.kind, line, 0, {}});
        }
    }
    detail::append_measures_of_all_lines(c);
    return expand_to_clifford_t(c);
}

inline Circuit build_conjugated_circuit(uint32_t n, const ConjugatedTheta &theta) {
    if (n < 1) {
        throw ContractError("conjugated: need at least one line");
    }
    for (GateKind k : theta.v_word) {
        if (gate_arity(k) != 1) {
            throw ContractError("conjugated: the template word must be 1-qubit gates");
        }
    }
    for (const Gate &g : theta.u_gates) {
        if (!gate_is_clifford(g.kind)) {
            throw ContractError("conjugated: the body must be Clifford gates");
        }
        if (g.control.has_value()) {
            throw ContractError("conjugated: the body must not have parity controls");
        }
        if (g.q0 >= n || (gate_arity(g.kind) == 2 && (g.q1 >= n || g.q1 == g.q0))) {
            throw ContractError("conjugated: body gate lines out of range");
        }
    }
    Circuit c;
    c.num_lines = n;
    c.input.assign(n, InputKind::kZero);
    for (uint32_t line = 0; line < n; line++) {
        for (GateKind k : theta.v_word) {
            c.steps.push_back(Gate{k, line, 0, {}});
        }
    }
    for (const Gate &g : theta.u_gates) {
        c.steps.push_back(g);
    }
    for (uint32_t line = 0; line < n; line++) {
        for (auto it = theta.v_word.rbegin(); it != theta.v_word.rend(); ++it) {
            c.steps.push_back(Gate{gate_inverse(*it), line, 0, {}});
        }
    }
    detail::append_measures_of_all_lines(c);
    return expand_to_clifford_t(c);
}

inline Circuit build_circuit(CircuitClass cls, uint32_t n, const ClassTheta &theta) {
    switch (cls) {
        case CircuitClass::kIqpIsing:
        case CircuitClass::kSparseIqp:
            if (!std::holds_alternative<IqpTheta>(theta)) {
                throw ContractError("build_circuit: parameter record does not match the class");
            }
            return build_iqp_circuit(n, std::get<IqpTheta>(theta));
        case CircuitClass::kRcs:
            if (!std::holds_alternative<RcsTheta>(theta)) {
                throw ContractError("build_circuit: parameter record does not match the class");
            }
            return build_rcs_circuit(n, std::get<RcsTheta>(theta));
        case CircuitClass::kConjugatedClifford:
            if (!std::holds_alternative<ConjugatedTheta>(theta)) {
                throw ContractError("build_circuit: parameter record does not match the class");
            }
            return build_conjugated_circuit(n, std::get<ConjugatedTheta>(theta));
    }
    throw ContractError("build_circuit: bad class");
}

// ------------------------------------------------------------ generators ---

namespace detail {

inline ClassInstance finish_instance(CircuitClass cls, uint32_t n, ClassTheta theta) {
    ClassInstance inst;
    inst.class_id = cls;
    inst.n = n;
    inst.theta = std::move(theta);
    inst.circuit = build_circuit(cls, n, inst.theta);
    inst.t_count = classify(inst.circuit).t_count;
    return inst;
}

}  // namespace detail

inline ClassInstance gen_iqp_ising(uint32_t n, Rng &rng) {
    if (n < 1) {
        throw ContractError("gen_iqp_ising: need at least one line");
    }
    IqpTheta theta;
    theta.p = 1.0;
    for (uint32_t i = 0; i < n; i++) {
        theta.v.push_back(static_cast<int>(uniform_below(rng, 8)));
    }
    for (size_t k = 0; k < iqp_pair_count(n); k++) {
        theta.w.push_back(static_cast<int>(uniform_below(rng, 4)));
    }
    return detail::finish_instance(CircuitClass::kIqpIsing, n, std::move(theta));
}

// Same record shape as the dense law, but each pair power is zeroed unless a
// keep-coin with probability p lands: the pair law becomes
// Pr[w=0] = 1/4 + 3(1-p)/4 and Pr[w=k] = p/4 for k in {1,2,3}.
inline ClassInstance gen_sparse_iqp(uint32_t n, double p, Rng &rng) {
    if (n < 1) {
        throw ContractError("gen_sparse_iqp: need at least one line");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ContractError("gen_sparse_iqp: p must lie in [0, 1]");
    }
    IqpTheta theta;
    theta.p = p;
    for (uint32_t i = 0; i < n; i++) {
        theta.v.push_back(static_cast<int>(uniform_below(rng, 8)));
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (size_t k = 0; k < iqp_pair_count(n); k++) {
        int w = static_cast<int>(uniform_below(rng, 4));
        theta.w.push_back(unit(rng) < p ? w : 0);
    }
    return detail::finish_instance(CircuitClass::kSparseIqp, n, std::move(theta));
}

inline ClassInstance gen_rcs(uint32_t n, uint32_t depth, Rng &rng) {
    if (n < 2) {
        throw ContractError("gen_rcs: need at least two lines");
    }
    if (depth < 1) {
        throw ContractError("gen_rcs: need at least one layer");
    }
    RcsTheta theta;
    theta.layers.resize(depth);
    for (uint32_t layer = 0; layer < depth; layer++) {
        for (size_t k = 0; k < rcs_layer_pairs(n, layer).size(); k++) {
            RcsChoice choice;
            choice.kind = rcs_gate_set()[uniform_below(rng, rcs_gate_set().size())];
            choice.slot =
                choice.kind == GateKind::kCz ? 0 : static_cast<int>(uniform_below(rng, 2));
            theta.layers[layer].push_back(choice);
        }
    }
    return detail::finish_instance(CircuitClass::kRcs, n, std::move(theta));
}

// The body is a uniform random gate word of the given length (0 = the default
// 8n+4, enough mixing for the desk-scale sizes this library targets).
inline ClassInstance gen_conjugated_clifford(uint32_t n, const std::vector<GateKind> &v_word,
                                             Rng &rng, size_t u_length = 0) {
    if (n < 1) {
        throw ContractError("gen_conjugated_clifford: need at least one line");
    }
    if (u_length == 0) {
        u_length = 8 * size_t{n} + 4;
    }
    ConjugatedTheta theta;
    theta.v_word = v_word;
    static const std::array<GateKind, 8> kPool = {GateKind::kH,  GateKind::kS, GateKind::kSdg,
                                                  GateKind::kX,  GateKind::kY, GateKind::kZ,
                                                  GateKind::kCx, GateKind::kCz};
    size_t pool_size = n >= 2 ? kPool.size() : 6;  // 1-line bodies use 1-qubit kinds only
    for (size_t k = 0; k < u_length; k++) {
        Gate g;
        g.kind = kPool[uniform_below(rng, pool_size)];
        g.q0 = static_cast<uint32_t>(uniform_below(rng, n));
        if (gate_arity(g.kind) == 2) {
            do {
                g.q1 = static_cast<uint32_t>(uniform_below(rng, n));
            } while (g.q1 == g.q0);
        }
        theta.u_gates.push_back(g);
    }
    return detail::finish_instance(CircuitClass::kConjugatedClifford, n, std::move(theta));
}

// Knobs for the classes whose generators need more than (n, rng).
struct GenParams {
    double p = 1.0;                                  // sparse-iqp keep probability
    uint32_t depth = 4;                              // rcs layer count
    std::vector<GateKind> v_word = {GateKind::kT};   // conjugated template word
    size_t u_length = 0;                             // conjugated body length (0 = default)
};

inline ClassInstance gen_class_instance(CircuitClass cls, uint32_t n, const GenParams &params,
                                        Rng &rng) {
    switch (cls) {
        case CircuitClass::kIqpIsing:
            return gen_iqp_ising(n, rng);
        case CircuitClass::kSparseIqp:
            return gen_sparse_iqp(n, params.p, rng);
        case CircuitClass::kRcs:
            return gen_rcs(n, params.depth, rng);
        case CircuitClass::kConjugatedClifford:
            return gen_conjugated_clifford(n, params.v_word, rng, params.u_length);
    }
    throw ContractError("gen_class_instance: bad class");
}

// Seed-stamped generation: a fresh engine per instance, so each instance is
// reproducible from its manifest line alone.
inline ClassInstance gen_instance_seeded(CircuitClass cls, uint32_t n, uint64_t seed,
                                         const GenParams &params = {}) {
    Rng rng(seed);
    ClassInstance inst = gen_class_instance(cls, n, params, rng);
    inst.seed = seed;
    return inst;
}

// ------------------------------------------------- T/Tdg reassignment ------

struct TauAssignment {
    std::vector<int> bits;  // one per T/Tdg gate in program order; 1 swaps it
};

inline TauAssignment tau_from_mask(size_t t, uint64_t mask) {
    TauAssignment tau;
    for (size_t i = 0; i < t; i++) {
        tau.bits.push_back(static_cast<int>((mask >> i) & 1));
    }
    return tau;
}

namespace detail {

inline void check_tau(const ClassInstance &inst, const TauAssignment &tau) {
    if (tau.bits.size() != inst.t_count) {
        throw ContractError("reassignment length differs from the circuit's T count");
    }
    for (int b : tau.bits) {
        if (b != 0 && b != 1) {
            throw ContractError("reassignment bits must be 0 or 1");
        }
    }
}

}  // namespace detail

// Swaps the i-th T/Tdg gate (program order) to its inverse wherever the
// assignment bit is 1.  An involution under the same assignment.
inline Circuit expand_ct(const ClassInstance &inst, const TauAssignment &tau) {
    detail::check_tau(inst, tau);
    Circuit out = inst.circuit;
    size_t i = 0;
    for (Step &s : out.steps) {
        if (!is_gate(s)) {
            continue;
        }
        Gate &g = std::get<Gate>(s);
        if (g.kind != GateKind::kT && g.kind != GateKind::kTdg) {
            continue;
        }
        if (tau.bits[i] != 0) {
            g.kind = gate_inverse(g.kind);
        }
        i++;
    }
    return out;
}

// The magic-gadget measurement outcomes realizing a given swap assignment:
// the gadget branch with outcome +1 (key character '0') always applies T, so
// a kept T reads '0' and a kept Tdg reads '1'.
inline std::vector<int> gadget_outcome_bits(const ClassInstance &inst, const TauAssignment &tau) {
    detail::check_tau(inst, tau);
    std::vector<int> bits;
    size_t i = 0;
    for (const Step &s : inst.circuit.steps) {
        if (!is_gate(s)) {
            continue;
        }
        const Gate &g = as_gate(s);
        if (g.kind != GateKind::kT && g.kind != GateKind::kTdg) {
            continue;
        }
        bits.push_back(tau.bits[i] ^ (g.kind == GateKind::kTdg ? 1 : 0));
        i++;
    }
    return bits;
}

// -------------------------------------------- reassignment consistency -----

struct ExpansionConsistencyReport {
    size_t t = 0;
    size_t assignments = 0;  // 2^t swap assignments checked
    size_t compared = 0;     // (assignment, outcome) probability comparisons
    double max_abs_err = 0.0;
};

// The gadgetized circuit with its adaptive corrections stripped measures the
// joint law of (gadget outcomes b, output x).  Every outcome branch occurs
// with probability exactly 2^-t and realizes one reassignment, so the law of
// the reassigned circuit is the conditional: p_tau(x) = u(b(tau), x) * 2^t.
// This checks that identity exhaustively over all assignments.
inline ExpansionConsistencyReport expansion_consistency_check(const ClassInstance &inst,
                                                              const DenseBudget &budget = {}) {
    ExpansionConsistencyReport rep;
    rep.t = inst.t_count;
    if (rep.t > 20) {
        throw BudgetError("expansion consistency: more than 2^20 assignments");
    }
    Circuit stripped = strip_corrections(gadgetize(inst.circuit));
    Distribution u = exact_distribution(stripped, budget);
    double scale = std::ldexp(1.0, static_cast<int>(rep.t));
    uint32_t n = inst.n;
    for (uint64_t mask = 0; mask < (uint64_t{1} << rep.t); mask++) {
        TauAssignment tau = tau_from_mask(rep.t, mask);
        Distribution p = exact_distribution(expand_ct(inst, tau), budget);
        std::string prefix;
        for (int b : gadget_outcome_bits(inst, tau)) {
            prefix.push_back(b ? '1' : '0');
        }
        for (uint64_t x = 0; x < (uint64_t{1} << n); x++) {
            std::string xs;
            for (uint32_t k = 0; k < n; k++) {
                xs.push_back((x >> (n - 1 - k)) & 1 ? '1' : '0');
            }
            auto pit = p.probs.find(xs);
            auto uit = u.probs.find(prefix + xs);
            double pv = pit == p.probs.end() ? 0.0 : pit->second;
            double uv = uit == u.probs.end() ? 0.0 : uit->second;
            rep.max_abs_err = std::max(rep.max_abs_err, std::abs(pv - uv * scale));
            rep.compared++;
        }
        rep.assignments++;
    }
    return rep;
}

// ----------------------------------------------------- closure (iqp) -------

namespace detail {

inline int mod8(int x) { return ((x % 8) + 8) % 8; }

}  // namespace detail

// Arithmetic reassignment map on the diagonal-phase parameters, derived from
// the concrete pair word [T a, T b, CX, Tdg b, CX] (exponents negated for the
// inverse pair gate):
//   - a swapped line gate (always T) shifts that line's power by -2;
//   - a swapped pair-word end gate shifts that line's power by -2 (+2 in the
//     inverse word);
//   - the middle gate acts on the line parity a^b, so swapping it shifts both
//     line powers the opposite way and the pair power by 2 (mod 4).
inline IqpTheta swapped_iqp_theta(uint32_t n, const IqpTheta &theta, const TauAssignment &tau) {
    detail::check_iqp_shape(n, theta);
    IqpTheta out = theta;
    size_t idx = 0;
    auto take = [&]() {
        if (idx >= tau.bits.size()) {
            throw ContractError("swapped_iqp_theta: assignment shorter than the T count");
        }
        int b = tau.bits[idx++];
        if (b != 0 && b != 1) {
            throw ContractError("swapped_iqp_theta: bits must be 0 or 1");
        }
        return b == 1;
    };
    for (uint32_t i = 0; i < n; i++) {
        if (theta.v[i] % 2 == 1 && take()) {
            out.v[i] = detail::mod8(out.v[i] - 2);
        }
    }
    size_t pair = 0;
    for (uint32_t i = 0; i < n; i++) {
        for (uint32_t j = i + 1; j < n; j++, pair++) {
            int w = theta.w[pair];
            if (w % 2 == 0) {
                continue;  // no T gates in this pair's word
            }
            int end_shift = w == 1 ? -2 : +2;
            if (take()) {
                out.v[i] = detail::mod8(out.v[i] + end_shift);
            }
            if (take()) {
                out.v[j] = detail::mod8(out.v[j] + end_shift);
            }
            if (take()) {
                out.v[i] = detail::mod8(out.v[i] - end_shift);
                out.v[j] = detail::mod8(out.v[j] - end_shift);
                out.w[pair] = (out.w[pair] + 2) % 4;
            }
        }
    }
    if (idx != tau.bits.size()) {
        throw ContractError("swapped_iqp_theta: assignment longer than the T count");
    }
    return out;
}

// Gate-only copy for unitary-level comparison: measurements and output
// declarations removed.
inline Circuit unitary_part(const Circuit &c) {
    Circuit out = c;
    out.steps.clear();
    for (const Step &s : c.steps) {
        if (is_gate(s)) {
            out.steps.push_back(s);
        }
    }
    out.output_lines.clear();
    out.output_bits.clear();
    return out;
}

// Recovers the parameter record whose circuit equals the reassigned circuit
// (up to global phase), verifying the arithmetic map against the dense
// unitaries.  Empty on verification failure (which would mean the family is
// not closed under reassignment for this instance).
inline std::optional<IqpTheta> closure_check(const ClassInstance &inst, const TauAssignment &tau,
                                             const DenseBudget &budget = {}) {
    if (inst.class_id != CircuitClass::kIqpIsing && inst.class_id != CircuitClass::kSparseIqp) {
        throw ContractError("closure_check: only the diagonal-phase families close this way");
    }
    detail::check_tau(inst, tau);
    IqpTheta candidate = swapped_iqp_theta(inst.n, std::get<IqpTheta>(inst.theta), tau);
    Circuit want = unitary_part(expand_ct(inst, tau));
    Circuit got = unitary_part(build_iqp_circuit(inst.n, candidate));
    if (!unitary_equal_up_to_phase(got, want, budget)) {
        return {};
    }
    return candidate;
}

// ------------------------------------------------- anticoncentration -------

// Outcome probabilities |<x|C|input>|^2 over the full register, for circuits
// whose measurements are all final and unconditional: index bit of line k is
// 1 << (n-1-k), matching the key order of the all-lines measurement layout.
inline std::vector<double> output_probabilities(const Circuit &c, const DenseBudget &budget = {}) {
    validate(c);
    if (c.num_lines > budget.max_lines) {
        throw BudgetError("output_probabilities: budget allows " +
                          std::to_string(budget.max_lines) + " lines");
    }
    if (classify(c).adaptivity != Adaptivity::kUnitary) {
        throw ContractError("output_probabilities: circuit is not purely unitary");
    }
    for (const Measure &m : c.measurements()) {
        if (m.postselect.has_value()) {
            throw ContractError("output_probabilities: circuit has postselections");
        }
    }
    StateVector state = dense_input_state(c);
    for (const Step &s : c.steps) {
        if (!is_gate(s)) {
            continue;
        }
        const Gate &g = as_gate(s);
        apply_gate(state, c.num_lines, g.kind, g.q0, g.q1);
    }
    std::vector<double> probs(state.size());
    for (size_t i = 0; i < state.size(); i++) {
        probs[i] = std::norm(state[i]);
    }
    return probs;
}

// Exact fraction of the 2^n outcomes whose probability meets the alpha/2^n
// threshold for one fixed circuit (the sampled estimator below converges to
// the family average of this).
inline double anticoncentration_fraction_exact(const Circuit &c, double alpha,
                                               const DenseBudget &budget = {}) {
    std::vector<double> probs = output_probabilities(c, budget);
    double threshold = alpha * std::ldexp(1.0, -static_cast<int>(c.num_lines));
    size_t hits = 0;
    for (double p : probs) {
        if (p >= threshold) {
            hits++;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(probs.size());
}

struct AnticoncentrationReport {
    CircuitClass class_id = CircuitClass::kIqpIsing;
    uint32_t n = 0;
    double alpha = 0.0;
    double threshold = 0.0;  // alpha / 2^n
    size_t samples = 0;
    size_t hits = 0;
    double fraction = 0.0;
    double ci_low = 0.0;   // 95% score interval
    double ci_high = 0.0;
};

namespace detail {

// Wilson score interval at 95% coverage.
inline std::pair<double, double> wilson_interval(size_t hits, size_t samples) {
    if (samples == 0) {
        return {0.0, 1.0};
    }
    double z = 1.959963984540054;
    double m = static_cast<double>(samples);
    double phat = static_cast<double>(hits) / m;
    double denom = 1.0 + z * z / m;
    double center = (phat + z * z / (2 * m)) / denom;
    double half = z * std::sqrt(phat * (1 - phat) / m + z * z / (4 * m * m)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

}  // namespace detail

// Draws (instance, outcome) pairs -- the instance from the family law, the
// outcome uniformly -- and reports the empirical fraction whose exact outcome
// probability meets the alpha/2^n threshold, with a binomial interval.  A
// recorded metric: the property it estimates is asymptotic, so no threshold
// is asserted here.
inline AnticoncentrationReport anticoncentration_estimate(CircuitClass cls, uint32_t n,
                                                          size_t num_instances, double alpha,
                                                          Rng &rng, const GenParams &params = {},
                                                          const DenseBudget &budget = {}) {
    if (n == 0 || n > budget.max_lines) {
        throw BudgetError("anticoncentration_estimate: line count outside the dense budget");
    }
    AnticoncentrationReport rep;
    rep.class_id = cls;
    rep.n = n;
    rep.alpha = alpha;
    rep.threshold = alpha * std::ldexp(1.0, -static_cast<int>(n));
    rep.samples = num_instances;
    for (size_t k = 0; k < num_instances; k++) {
        ClassInstance inst = gen_class_instance(cls, n, params, rng);
        std::vector<double> probs = output_probabilities(inst.circuit, budget);
        uint64_t x = uniform_below(rng, uint64_t{1} << n);
        if (probs[x] >= rep.threshold) {
            rep.hits++;
        }
    }
    rep.fraction =
        num_instances == 0 ? 0.0 : static_cast<double>(rep.hits) / static_cast<double>(num_instances);
    auto [lo, hi] = detail::wilson_interval(rep.hits, rep.samples);
    rep.ci_low = lo;
    rep.ci_high = hi;
    return rep;
}

// ------------------------------------------- reassignment sampling law -----

struct ThetaSamplingReport {
    bool exhaustive = false;
    size_t theta_count = 0;  // parameter records enumerated or drawn
    size_t pair_count = 0;   // (record, assignment) pairs accounted
    double distance = 0.0;   // total variation between the recovered law and the drawing law
    // When exhaustive, both equal `distance`.  Otherwise the 95% band of the
    // same plug-in statistic under exact draws from the family law: a
    // distance inside the band is consistent with exact equality, since the
    // plug-in estimate never reaches zero at finite sample sizes.
    double ci_low = 0.0;
    double ci_high = 0.0;
};

namespace detail {

inline std::string iqp_theta_key(const IqpTheta &theta) {
    std::string key;
    for (int v : theta.v) {
        key.push_back(static_cast<char>('0' + v));
    }
    key.push_back('|');
    for (int w : theta.w) {
        key.push_back(static_cast<char>('0' + w));
    }
    return key;
}

inline double iqp_theta_weight(const IqpTheta &theta, double p) {
    double weight = 1.0;
    for (size_t i = 0; i < theta.v.size(); i++) {
        weight /= 8.0;
    }
    double zero_w = 0.25 + 0.75 * (1.0 - p);
    for (int w : theta.w) {
        weight *= (w == 0) ? zero_w : p / 4.0;
    }
    return weight;
}

inline size_t iqp_t_count(const IqpTheta &theta) {
    size_t t = 0;
    for (int v : theta.v) {
        t += static_cast<size_t>(v % 2);
    }
    for (int w : theta.w) {
        t += (w % 2 == 1) ? 3 : 0;
    }
    return t;
}

// Odometer over all parameter records (line powers base 8, pair powers base 4).
inline bool next_iqp_theta(IqpTheta &theta) {
    for (int &v : theta.v) {
        if (++v < 8) {
            return true;
        }
        v = 0;
    }
    for (int &w : theta.w) {
        if (++w < 4) {
            return true;
        }
        w = 0;
    }
    return false;
}

}  // namespace detail

// Compares the law of the recovered parameter record (record drawn from the
// family law, swap assignment uniform) against the family law itself.  For
// one or two lines the full joint domain is enumerated and the distance is
// exact.  For more lines the joint domain outgrows any desk-scale sample, so
// `samples` draws are scored on the exact marginal of the first pair's
// coordinates (v_0, v_1, w_01) -- the coordinates every swap-rule class acts
// on -- and the plug-in distance is reported next to its null band (the 95%
// range of the same statistic under exact sampling of that marginal).
inline ThetaSamplingReport theta_sampling_check(CircuitClass cls, uint32_t n, size_t samples,
                                                Rng &rng, double p = 1.0) {
    if (cls != CircuitClass::kIqpIsing && cls != CircuitClass::kSparseIqp) {
        throw ContractError("theta_sampling_check: only the diagonal-phase families apply");
    }
    if (n < 1) {
        throw ContractError("theta_sampling_check: need at least one line");
    }
    if (cls == CircuitClass::kIqpIsing) {
        p = 1.0;
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ContractError("theta_sampling_check: p must lie in [0, 1]");
    }
    ThetaSamplingReport rep;
    if (n <= 2) {
        rep.exhaustive = true;
        std::map<std::string, double> law;
        IqpTheta theta;
        theta.v.assign(n, 0);
        theta.w.assign(iqp_pair_count(n), 0);
        theta.p = p;
        do {
            rep.theta_count++;
            double weight = detail::iqp_theta_weight(theta, p);
            size_t t = detail::iqp_t_count(theta);
            double each = weight * std::ldexp(1.0, -static_cast<int>(t));
            for (uint64_t mask = 0; mask < (uint64_t{1} << t); mask++) {
                IqpTheta image = swapped_iqp_theta(n, theta, tau_from_mask(t, mask));
                law[detail::iqp_theta_key(image)] += each;
                rep.pair_count++;
            }
        } while (detail::next_iqp_theta(theta));
        theta.v.assign(n, 0);
        theta.w.assign(iqp_pair_count(n), 0);
        double tv = 0.0;
        do {
            auto it = law.find(detail::iqp_theta_key(theta));
            double got = it == law.end() ? 0.0 : it->second;
            tv += std::abs(got - detail::iqp_theta_weight(theta, p));
        } while (detail::next_iqp_theta(theta));
        rep.distance = tv / 2;
        rep.ci_low = rep.distance;
        rep.ci_high = rep.distance;
        return rep;
    }
    if (samples == 0) {
        throw ContractError("theta_sampling_check: need at least one sample");
    }
    // Marginal atom index: (8 * v_0 + v_1) * 4 + w_01.
    std::vector<size_t> histogram(8 * 8 * 4, 0);
    for (size_t k = 0; k < samples; k++) {
        IqpTheta theta;
        theta.p = p;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (uint32_t i = 0; i < n; i++) {
            theta.v.push_back(static_cast<int>(uniform_below(rng, 8)));
        }
        for (size_t q = 0; q < iqp_pair_count(n); q++) {
            int w = static_cast<int>(uniform_below(rng, 4));
            theta.w.push_back(unit(rng) < p ? w : 0);
        }
        size_t t = detail::iqp_t_count(theta);
        if (t > 62) {
            throw BudgetError("theta_sampling_check: too many swap positions");
        }
        uint64_t mask = uniform_below(rng, uint64_t{1} << t);
        IqpTheta image = swapped_iqp_theta(n, theta, tau_from_mask(t, mask));
        size_t atom = (8 * static_cast<size_t>(image.v[0]) + static_cast<size_t>(image.v[1])) * 4 +
                      static_cast<size_t>(image.w[0]);
        histogram[atom]++;
        rep.pair_count++;
    }
    rep.theta_count = samples;
    double zero_w = 0.25 + 0.75 * (1.0 - p);
    auto atom_weight = [&](size_t atom) {
        return (atom % 4 == 0 ? zero_w : p / 4.0) / 64.0;
    };
    auto tv_of = [&](const std::vector<size_t> &hist, size_t m) {
        double tv = 0.0;
        for (size_t atom = 0; atom < hist.size(); atom++) {
            tv += std::abs(static_cast<double>(hist[atom]) / static_cast<double>(m) -
                           atom_weight(atom));
        }
        return tv / 2;
    };
    rep.distance = tv_of(histogram, samples);
    // Null band: the same statistic on direct draws from the marginal law.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> null_stats;
    for (int b = 0; b < 200; b++) {
        std::vector<size_t> replica(histogram.size(), 0);
        for (size_t k = 0; k < samples; k++) {
            size_t v0 = uniform_below(rng, 8);
            size_t v1 = uniform_below(rng, 8);
            size_t w = uniform_below(rng, 4);
            if (unit(rng) >= p) {
                w = 0;
            }
            replica[(8 * v0 + v1) * 4 + w]++;
        }
        null_stats.push_back(tv_of(replica, samples));
    }
    std::sort(null_stats.begin(), null_stats.end());
    rep.ci_low = null_stats[static_cast<size_t>(0.025 * null_stats.size())];
    rep.ci_high = null_stats[static_cast<size_t>(0.975 * (null_stats.size() - 1))];
    return rep;
}

// ------------------------------------------------------------ manifests ----

inline std::string manifest(const ClassInstance &inst) {
    std::ostringstream out;
    out << "pbc-class-manifest v1\n";
    out << "class " << class_name(inst.class_id) << "\n";
    out << "n " << inst.n << "\n";
    out << "seed " << inst.seed << "\n";
    out << "t-count " << inst.t_count << "\n";
    switch (inst.class_id) {
        case CircuitClass::kIqpIsing:
        case CircuitClass::kSparseIqp: {
            const auto &theta = std::get<IqpTheta>(inst.theta);
            if (inst.class_id == CircuitClass::kSparseIqp) {
                out << "p " << std::setprecision(17) << theta.p << "\n";
            }
            out << "v";
            for (int v : theta.v) {
                out << ' ' << v;
            }
            out << "\nw";
            for (int w : theta.w) {
                out << ' ' << w;
            }
            out << "\n";
            break;
        }
        case CircuitClass::kRcs: {
            const auto &theta = std::get<RcsTheta>(inst.theta);
            out << "depth " << theta.layers.size() << "\n";
            for (const auto &layer : theta.layers) {
                out << "layer";
                for (const RcsChoice &choice : layer) {
                    out << ' ' << gate_name(choice.kind) << ':' << choice.slot;
                }
                out << "\n";
            }
            break;
        }
        case CircuitClass::kConjugatedClifford: {
            const auto &theta = std::get<ConjugatedTheta>(inst.theta);
            out << "v-word";
            for (GateKind k : theta.v_word) {
                out << ' ' << gate_name(k);
            }
            out << "\n";
            for (const Gate &g : theta.u_gates) {
                out << "u-gate " << gate_name(g.kind) << ' ' << g.q0;
                if (gate_arity(g.kind) == 2) {
                    out << ' ' << g.q1;
                }
                out << "\n";
            }
            break;
        }
    }
    return out.str();
}

namespace detail {

inline std::vector<std::string> manifest_tokens(const std::string &line) {
    std::vector<std::string> tokens;
    std::istringstream in(line);
    std::string token;
    while (in >> token) {
        tokens.push_back(token);
    }
    return tokens;
}

inline int manifest_int(const std::string &token, int lo, int hi, const char *what) {
    size_t used = 0;
    int value = 0;
    try {
        value = std::stoi(token, &used);
    } catch (const std::exception &) {
        throw ParseError(std::string("manifest: bad ") + what + " '" + token + "'");
    }
    if (used != token.size() || value < lo || value > hi) {
        throw ParseError(std::string("manifest: bad ") + what + " '" + token + "'");
    }
    return value;
}

}  // namespace detail

inline ClassInstance parse_manifest(const std::string &text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "pbc-class-manifest v1") {
        throw ParseError("manifest: missing 'pbc-class-manifest v1' header");
    }
    std::optional<CircuitClass> cls;
    std::optional<uint32_t> n;
    uint64_t seed = 0;
    std::optional<size_t> declared_t;
    IqpTheta iqp;
    bool saw_v = false, saw_w = false, saw_p = false;
    std::optional<size_t> depth;
    RcsTheta rcs;
    ConjugatedTheta conj;
    bool saw_v_word = false;
    while (std::getline(in, line)) {
        auto tokens = detail::manifest_tokens(line);
        if (tokens.empty()) {
            continue;
        }
        const std::string &key = tokens[0];
        if (key == "class") {
            if (tokens.size() != 2 || !(cls = parse_class_name(tokens[1]))) {
                throw ParseError("manifest: bad class line");
            }
        } else if (key == "n") {
            if (tokens.size() != 2) {
                throw ParseError("manifest: bad n line");
            }
            n = static_cast<uint32_t>(detail::manifest_int(tokens[1], 1, 1 << 20, "line count"));
        } else if (key == "seed") {
            if (tokens.size() != 2) {
                throw ParseError("manifest: bad seed line");
            }
            try {
                seed = std::stoull(tokens[1]);
            } catch (const std::exception &) {
                throw ParseError("manifest: bad seed '" + tokens[1] + "'");
            }
        } else if (key == "t-count") {
            if (tokens.size() != 2) {
                throw ParseError("manifest: bad t-count line");
            }
            declared_t = static_cast<size_t>(detail::manifest_int(tokens[1], 0, 1 << 20, "T count"));
        } else if (key == "p") {
            if (tokens.size() != 2) {
                throw ParseError("manifest: bad p line");
            }
            try {
                iqp.p = std::stod(tokens[1]);
            } catch (const std::exception &) {
                throw ParseError("manifest: bad p '" + tokens[1] + "'");
            }
            saw_p = true;
        } else if (key == "v") {
            for (size_t i = 1; i < tokens.size(); i++) {
                iqp.v.push_back(detail::manifest_int(tokens[i], 0, 7, "line power"));
            }
            saw_v = true;
        } else if (key == "w") {
            for (size_t i = 1; i < tokens.size(); i++) {
                iqp.w.push_back(detail::manifest_int(tokens[i], 0, 3, "pair power"));
            }
            saw_w = true;
        } else if (key == "depth") {
            if (tokens.size() != 2) {
                throw ParseError("manifest: bad depth line");
            }
            depth = static_cast<size_t>(detail::manifest_int(tokens[1], 1, 1 << 20, "depth"));
        } else if (key == "layer") {
            std::vector<RcsChoice> layer;
            for (size_t i = 1; i < tokens.size(); i++) {
                size_t colon = tokens[i].find(':');
                if (colon == std::string::npos) {
                    throw ParseError("manifest: layer choice '" + tokens[i] + "' lacks a slot");
                }
                auto kind = parse_gate_name(tokens[i].substr(0, colon));
                if (!kind) {
                    throw ParseError("manifest: bad layer gate '" + tokens[i] + "'");
                }
                RcsChoice choice;
                choice.kind = *kind;
                choice.slot = detail::manifest_int(tokens[i].substr(colon + 1), 0, 1, "slot");
                layer.push_back(choice);
            }
            rcs.layers.push_back(std::move(layer));
        } else if (key == "v-word") {
            for (size_t i = 1; i < tokens.size(); i++) {
                auto kind = parse_gate_name(tokens[i]);
                if (!kind) {
                    throw ParseError("manifest: bad template gate '" + tokens[i] + "'");
                }
                conj.v_word.push_back(*kind);
            }
            saw_v_word = true;
        } else if (key == "u-gate") {
            if (tokens.size() < 3) {
                throw ParseError("manifest: bad u-gate line");
            }
            auto kind = parse_gate_name(tokens[1]);
            if (!kind) {
                throw ParseError("manifest: bad body gate '" + tokens[1] + "'");
            }
            Gate g;
            g.kind = *kind;
            g.q0 = static_cast<uint32_t>(detail::manifest_int(tokens[2], 0, 1 << 20, "line"));
            if (gate_arity(g.kind) == 2) {
                if (tokens.size() != 4) {
                    throw ParseError("manifest: bad u-gate line");
                }
                g.q1 = static_cast<uint32_t>(detail::manifest_int(tokens[3], 0, 1 << 20, "line"));
            } else if (tokens.size() != 3) {
                throw ParseError("manifest: bad u-gate line");
            }
            conj.u_gates.push_back(g);
        } else {
            throw ParseError("manifest: unknown key '" + key + "'");
        }
    }
    if (!cls || !n || !declared_t) {
        throw ParseError("manifest: class, n, and t-count are required");
    }
    ClassTheta theta;
    switch (*cls) {
        case CircuitClass::kIqpIsing:
        case CircuitClass::kSparseIqp:
            if (!saw_v || !saw_w) {
                throw ParseError("manifest: the diagonal-phase classes need v and w lines");
            }
            if (*cls == CircuitClass::kSparseIqp && !saw_p) {
                throw ParseError("manifest: sparse-iqp needs a p line");
            }
            theta = std::move(iqp);
            break;
        case CircuitClass::kRcs:
            if (!depth || rcs.layers.size() != *depth) {
                throw ParseError("manifest: layer lines do not match the declared depth");
            }
            theta = std::move(rcs);
            break;
        case CircuitClass::kConjugatedClifford:
            if (!saw_v_word) {
                throw ParseError("manifest: conjugated-clifford needs a v-word line");
            }
            theta = std::move(conj);
            break;
    }
    ClassInstance inst;
    try {
        inst = detail::finish_instance(*cls, *n, std::move(theta));
    } catch (const ContractError &e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    inst.seed = seed;
    if (inst.t_count != *declared_t) {
        throw ParseError("manifest: declared t-count " + std::to_string(*declared_t) +
                         " but the circuit has " + std::to_string(inst.t_count));
    }
    return inst;
}

}  // namespace pbc
