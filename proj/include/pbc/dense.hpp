#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pbc/circuit.hpp"
#include "pbc/errors.hpp"
#include "pbc/pauli.hpp"

namespace pbc {

using Amplitude = std::complex<double>;
using StateVector = std::vector<Amplitude>;

// Brute-force branch enumeration is meant for desk-scale verification only;
// these limits keep a runaway circuit from eating the machine.
struct DenseBudget {
    uint32_t max_lines = 14;
    uint64_t max_branches = uint64_t{1} << 20;
    uint32_t max_unitary_lines = 10;
    double prune_threshold = 1e-14;
};

struct Distribution {
    std::map<std::string, double> probs;
    double pruned_mass = 0.0;
    // Total surviving weight before postselection renormalization.
    double preselection_weight = 1.0;

    double total() const {
        double t = 0;
        for (const auto &[key, p] : probs) {
            t += p;
        }
        return t;
    }

    std::string dump() const {
        std::ostringstream out;
        out << std::setprecision(15);
        for (const auto &[key, p] : probs) {
            out << key << ' ' << p << '\n';
        }
        return out.str();
    }
};

enum class DistanceMetric { kAdditive, kMultiplicative };

struct DistanceReport {
    double value = 0;
    double additive = 0;
    double tvd = 0;
    double multiplicative = 0;
    bool multiplicative_infinite = false;
};

inline DistanceReport distance(const Distribution &p, const Distribution &q,
                               DistanceMetric metric) {
    size_t width = SIZE_MAX;
    for (const auto *d : {&p, &q}) {
        for (const auto &[key, prob] : d->probs) {
            if (width == SIZE_MAX) {
                width = key.size();
            } else if (key.size() != width) {
                throw ContractError("distance: outcome spaces differ in width");
            }
        }
    }
    DistanceReport rep;
    auto it_p = p.probs.begin();
    auto it_q = q.probs.begin();
    auto account = [&](double pp, double qq) {
        rep.additive += std::abs(pp - qq);
        if (pp > 0) {
            rep.multiplicative = std::max(rep.multiplicative, std::abs(pp - qq) / pp);
        } else if (qq > 0) {
            rep.multiplicative_infinite = true;
        }
    };
    while (it_p != p.probs.end() || it_q != q.probs.end()) {
        if (it_q == q.probs.end() || (it_p != p.probs.end() && it_p->first < it_q->first)) {
            account(it_p->second, 0.0);
            ++it_p;
        } else if (it_p == p.probs.end() || it_q->first < it_p->first) {
            account(0.0, it_q->second);
            ++it_q;
        } else {
            account(it_p->second, it_q->second);
            ++it_p;
            ++it_q;
        }
    }
    rep.tvd = rep.additive / 2;
    if (rep.multiplicative_infinite) {
        rep.multiplicative = std::numeric_limits<double>::infinity();
    }
    rep.value = metric == DistanceMetric::kAdditive ? rep.additive : rep.multiplicative;
    return rep;
}

// For each output position of `to`, the position holding the same record id
// (or same output line) under `from`.  Keys are laid out as the record
// columns in declaration order followed by the output-line columns, so the
// returned indices project a key of `from` onto the outcome space of `to`.
inline std::vector<size_t> layout_projection(const OutputLayout &from, const OutputLayout &to) {
    std::vector<size_t> idx;
    idx.reserve(to.width());
    for (uint32_t id : to.record_ids) {
        auto it = std::find(from.record_ids.begin(), from.record_ids.end(), id);
        if (it == from.record_ids.end()) {
            throw ContractError("layout_projection: record " + std::to_string(id) +
                                " is absent from the source layout");
        }
        idx.push_back(static_cast<size_t>(it - from.record_ids.begin()));
    }
    for (uint32_t line : to.lines) {
        auto it = std::find(from.lines.begin(), from.lines.end(), line);
        if (it == from.lines.end()) {
            throw ContractError("layout_projection: line " + std::to_string(line) +
                                " is absent from the source layout");
        }
        idx.push_back(from.record_ids.size() + static_cast<size_t>(it - from.lines.begin()));
    }
    return idx;
}

// Sums a distribution over the key positions not listed, producing the
// marginal whose j-th key character is position `positions[j]` of the source
// key.  Pruned mass and the preselection weight carry over unchanged.
inline Distribution marginalize(const Distribution &d, const std::vector<size_t> &positions) {
    Distribution out;
    out.pruned_mass = d.pruned_mass;
    out.preselection_weight = d.preselection_weight;
    for (const auto &[key, p] : d.probs) {
        std::string sub(positions.size(), '0');
        for (size_t j = 0; j < positions.size(); j++) {
            if (positions[j] >= key.size()) {
                throw ContractError("marginalize: projection index exceeds the key width");
            }
            sub[j] = key[positions[j]];
        }
        out.probs[sub] += p;
    }
    return out;
}

// ------------------------------------------------- statevector kernels -----

namespace detail {

// Qubit q occupies index bit (n-1-q): line 0 is the most significant bit,
// matching the leftmost-first Pauli string convention.
inline size_t qubit_bit(size_t n, uint32_t q) { return size_t{1} << (n - 1 - q); }

struct Gate1x1 {
    Amplitude m[2][2];
};
struct Gate4x4 {
    Amplitude m[4][4];
};

inline Gate1x1 gate_matrix_1q(GateKind k) {
    const double h = 1.0 / std::sqrt(2.0);
    const Amplitude i(0, 1);
    const Amplitude t(h, h);     // e^{i pi/4}
    const Amplitude tdg(h, -h);  // e^{-i pi/4}
    switch (k) {
        case GateKind::kH:
            return {{{h, h}, {h, -h}}};
        case GateKind::kS:
            return {{{1, 0}, {0, i}}};
        case GateKind::kSdg:
            return {{{1, 0}, {0, -i}}};
        case GateKind::kX:
            return {{{0, 1}, {1, 0}}};
        case GateKind::kY:
            return {{{0, -i}, {i, 0}}};
        case GateKind::kZ:
            return {{{1, 0}, {0, -1}}};
        case GateKind::kT:
            return {{{1, 0}, {0, t}}};
        case GateKind::kTdg:
            return {{{1, 0}, {0, tdg}}};
        case GateKind::kSqrtX:
            return {{{0.5 * Amplitude(1, 1), 0.5 * Amplitude(1, -1)},
                     {0.5 * Amplitude(1, -1), 0.5 * Amplitude(1, 1)}}};
        case GateKind::kSqrtXdg:
            return {{{0.5 * Amplitude(1, -1), 0.5 * Amplitude(1, 1)},
                     {0.5 * Amplitude(1, 1), 0.5 * Amplitude(1, -1)}}};
        case GateKind::kSqrtY:
            return {{{0.5 * Amplitude(1, 1), 0.5 * Amplitude(-1, -1)},
                     {0.5 * Amplitude(1, 1), 0.5 * Amplitude(1, 1)}}};
        case GateKind::kSqrtYdg:
            return {{{0.5 * Amplitude(1, -1), 0.5 * Amplitude(1, -1)},
                     {0.5 * Amplitude(-1, 1), 0.5 * Amplitude(1, -1)}}};
        default:
            throw ContractError("gate_matrix_1q: not a one-qubit gate");
    }
}

inline Gate4x4 gate_matrix_2q(GateKind k) {
    Gate4x4 g{};
    const Amplitude i(0, 1);
    switch (k) {
        case GateKind::kCx:
            g.m[0][0] = g.m[1][1] = g.m[2][3] = g.m[3][2] = 1;
            return g;
        case GateKind::kCz:
            g.m[0][0] = g.m[1][1] = g.m[2][2] = 1;
            g.m[3][3] = -1;
            return g;
        case GateKind::kCs:
            g.m[0][0] = g.m[1][1] = g.m[2][2] = 1;
            g.m[3][3] = i;
            return g;
        case GateKind::kCsdg:
            g.m[0][0] = g.m[1][1] = g.m[2][2] = 1;
            g.m[3][3] = -i;
            return g;
        default:
            throw ContractError("gate_matrix_2q: not a two-qubit gate");
    }
}

}  // namespace detail

inline void apply_gate(StateVector &v, size_t n, GateKind kind, uint32_t q0, uint32_t q1 = 0) {
    if (gate_arity(kind) == 1) {
        detail::Gate1x1 g = detail::gate_matrix_1q(kind);
        size_t bit = detail::qubit_bit(n, q0);
        for (size_t i = 0; i < v.size(); i++) {
            if (i & bit) {
                continue;
            }
            Amplitude a = v[i], b = v[i | bit];
            v[i] = g.m[0][0] * a + g.m[0][1] * b;
            v[i | bit] = g.m[1][0] * a + g.m[1][1] * b;
        }
    } else {
        detail::Gate4x4 g = detail::gate_matrix_2q(kind);
        size_t b0 = detail::qubit_bit(n, q0);
        size_t b1 = detail::qubit_bit(n, q1);
        for (size_t i = 0; i < v.size(); i++) {
            if ((i & b0) || (i & b1)) {
                continue;
            }
            size_t idx[4] = {i, i | b1, i | b0, i | b0 | b1};
            Amplitude in[4] = {v[idx[0]], v[idx[1]], v[idx[2]], v[idx[3]]};
            for (int row = 0; row < 4; row++) {
                Amplitude acc = 0;
                for (int col = 0; col < 4; col++) {
                    acc += g.m[row][col] * in[col];
                }
                v[idx[row]] = acc;
            }
        }
    }
}

// Applies a full-width Pauli operator (sign included) to a statevector.
inline StateVector apply_pauli(const PauliOperator &p, const StateVector &v) {
    size_t n = p.num_qubits();
    if (v.size() != (size_t{1} << n)) {
        throw ContractError("apply_pauli: dimension mismatch");
    }
    size_t xmask = 0, zmask = 0;
    int y_count = 0;
    for (size_t q = 0; q < n; q++) {
        if (p.x(q)) {
            xmask |= detail::qubit_bit(n, static_cast<uint32_t>(q));
        }
        if (p.z(q)) {
            zmask |= detail::qubit_bit(n, static_cast<uint32_t>(q));
        }
        y_count += p.x(q) && p.z(q);
    }
    static const Amplitude kIPow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    Amplitude front = kIPow[y_count % 4] * static_cast<double>(p.sign());
    StateVector out(v.size());
    for (size_t b = 0; b < v.size(); b++) {
        double z_sign = __builtin_popcountll(b & zmask) % 2 ? -1.0 : 1.0;
        out[b ^ xmask] = front * z_sign * v[b];
    }
    return out;
}

inline double state_norm2(const StateVector &v) {
    double t = 0;
    for (const Amplitude &a : v) {
        t += std::norm(a);
    }
    return t;
}

// The unique (rank-1 projector) state fixed by r independent commuting
// generators on r qubits: apply prod_k (I+S_k)/2 to basis states until one
// survives.  The survivor is the stabilizer state regardless of which basis
// state seeded it.
inline StateVector stabilizer_block_state(const std::vector<PauliOperator> &gens) {
    size_t r = gens.empty() ? 0 : gens[0].num_qubits();
    if (r == 0) {
        throw ContractError("stabilizer_block_state: empty generator list");
    }
    size_t dim = size_t{1} << r;
    double best_norm = -1;
    StateVector best;
    for (size_t j = 0; j < dim; j++) {
        StateVector v(dim, Amplitude(0));
        v[j] = 1;
        for (const PauliOperator &g : gens) {
            StateVector gv = apply_pauli(g, v);
            for (size_t i = 0; i < dim; i++) {
                v[i] = 0.5 * (v[i] + gv[i]);
            }
        }
        double nn = state_norm2(v);
        if (nn > best_norm) {
            best_norm = nn;
            best = std::move(v);
        }
        if (best_norm >= (1.0 - 1e-6) / static_cast<double>(dim)) {
            break;
        }
    }
    if (best_norm < 1e-12) {
        throw ContractError("stabilizer_block_state: generators fix no state");
    }
    double scale = 1.0 / std::sqrt(best_norm);
    for (Amplitude &a : best) {
        a *= scale;
    }
    return best;
}

// Initial product state: stabilizer block (if any) on the leading lines,
// then |0> or the T-magic state (|0> + e^{i pi/4}|1>)/sqrt(2) per line.
inline StateVector dense_input_state(const Circuit &c) {
    const double h = 1.0 / std::sqrt(2.0);
    StateVector state{Amplitude(1)};
    size_t start = 0;
    if (!c.stabilizer_block.empty()) {
        state = stabilizer_block_state(c.stabilizer_block);
        start = c.stabilizer_block.size();
    }
    for (size_t q = start; q < c.num_lines; q++) {
        StateVector line = c.input[q] == InputKind::kZero
                               ? StateVector{Amplitude(1), Amplitude(0)}
                               : StateVector{Amplitude(h), Amplitude(h * h, h * h)};
        StateVector next(state.size() * 2);
        for (size_t i = 0; i < state.size(); i++) {
            next[i * 2] = state[i] * line[0];
            next[i * 2 + 1] = state[i] * line[1];
        }
        state = std::move(next);
    }
    return state;
}

// ------------------------------------------------- branch enumeration ------

namespace detail {

struct DenseRun {
    const Circuit &c;
    const DenseBudget &budget;
    size_t n;
    OutputLayout layout;
    std::map<std::string, double> probs;
    double pruned_mass = 0;
    uint64_t branches = 1;
    std::vector<std::pair<uint32_t, int>> record_bits;

    DenseRun(const Circuit &circuit, const DenseBudget &b)
        : c(circuit), budget(b), n(circuit.num_lines), layout(output_layout(circuit)) {}

    bool control_fires(const ParityControl &pc) const {
        int parity = pc.invert ? 1 : 0;
        for (uint32_t id : pc.records) {
            for (const auto &[rec, bit] : record_bits) {
                if (rec == id) {
                    parity ^= bit;
                    break;
                }
            }
        }
        return parity == 1;
    }

    struct MeasureSplit {
        double prob[2];
        StateVector state[2];  // normalized; empty when prob ~ 0
    };

    MeasureSplit measure_line(const StateVector &v, uint32_t line) const {
        size_t bit = qubit_bit(n, line);
        MeasureSplit split;
        split.prob[0] = split.prob[1] = 0;
        for (size_t i = 0; i < v.size(); i++) {
            split.prob[(i & bit) ? 1 : 0] += std::norm(v[i]);
        }
        if (std::abs(split.prob[0] + split.prob[1] - 1.0) > 1e-9) {
            throw ContractError("dense: branch probabilities drifted from 1");
        }
        for (int out = 0; out < 2; out++) {
            if (split.prob[out] <= 0) {
                continue;
            }
            double scale = 1.0 / std::sqrt(split.prob[out]);
            StateVector &proj = split.state[out];
            proj.assign(v.size(), Amplitude(0));
            for (size_t i = 0; i < v.size(); i++) {
                if (((i & bit) ? 1 : 0) == out) {
                    proj[i] = v[i] * scale;
                }
            }
        }
        return split;
    }

    void count_branch() {
        if (++branches > budget.max_branches) {
            throw BudgetError("dense: branch budget exceeded");
        }
    }

    void run_steps(StateVector v, size_t step, double weight) {
        while (step < c.steps.size() && is_gate(c.steps[step])) {
            const Gate &g = as_gate(c.steps[step]);
            if (!g.control.has_value() || control_fires(*g.control)) {
                apply_gate(v, n, g.kind, g.q0, g.q1);
            }
            step++;
        }
        if (step == c.steps.size()) {
            std::string line_bits;
            run_outputs(v, 0, weight, line_bits);
            return;
        }
        const Measure &m = as_measure(c.steps[step]);
        MeasureSplit split = measure_line(v, m.line);
        v.clear();
        if (m.postselect.has_value()) {
            int want = *m.postselect > 0 ? 0 : 1;
            if (split.prob[want] < budget.prune_threshold) {
                return;  // conditioned away; contributes nothing
            }
            record_bits.emplace_back(m.record_id, want);
            run_steps(std::move(split.state[want]), step + 1, weight * split.prob[want]);
            record_bits.pop_back();
            return;
        }
        for (int out = 0; out < 2; out++) {
            double p = split.prob[out];
            if (p < budget.prune_threshold) {
                pruned_mass += weight * p;
                continue;
            }
            if (out == 1) {
                count_branch();
            }
            record_bits.emplace_back(m.record_id, out);
            run_steps(std::move(split.state[out]), step + 1, weight * p);
            record_bits.pop_back();
        }
    }

    void run_outputs(StateVector &v, size_t k, double weight, std::string &line_bits) {
        if (k == layout.lines.size()) {
            emit(weight, line_bits);
            return;
        }
        MeasureSplit split = measure_line(v, layout.lines[k]);
        for (int out = 0; out < 2; out++) {
            double p = split.prob[out];
            if (p < budget.prune_threshold) {
                pruned_mass += weight * p;
                continue;
            }
            if (out == 1) {
                count_branch();
            }
            line_bits.push_back(static_cast<char>('0' + out));
            run_outputs(split.state[out], k + 1, weight * p, line_bits);
            line_bits.pop_back();
        }
    }

    void emit(double weight, const std::string &line_bits) {
        std::string key;
        key.reserve(layout.width());
        for (uint32_t id : layout.record_ids) {
            for (const auto &[rec, bit] : record_bits) {
                if (rec == id) {
                    key.push_back(static_cast<char>('0' + bit));
                    break;
                }
            }
        }
        if (key.size() != layout.record_ids.size()) {
            throw ContractError("dense: missing record bit at leaf");
        }
        key += line_bits;
        probs[key] += weight;
    }
};

}  // namespace detail

inline Distribution exact_distribution(const Circuit &c, const DenseBudget &budget = {}) {
    validate(c);
    if (c.num_lines > budget.max_lines) {
        throw BudgetError("dense: circuit has " + std::to_string(c.num_lines) +
                          " lines, budget allows " + std::to_string(budget.max_lines));
    }
    detail::DenseRun run(c, budget);
    run.run_steps(dense_input_state(c), 0, 1.0);
    Distribution dist;
    dist.probs = std::move(run.probs);
    dist.pruned_mass = run.pruned_mass;
    double total = dist.total();
    if (dist.probs.empty() || total < 1e-300) {
        throw ProbabilityZeroError("dense: every branch was postselected away");
    }
    dist.preselection_weight = total;
    for (auto &[key, p] : dist.probs) {
        p /= total;
    }
    return dist;
}

// ------------------------------------------------- unitary comparison ------

// Columns of the circuit's unitary.  Only gate steps are allowed.
inline std::vector<StateVector> circuit_unitary(const Circuit &c,
                                                const DenseBudget &budget = {}) {
    validate(c);
    if (c.num_lines > budget.max_unitary_lines) {
        throw BudgetError("dense: unitary budget allows " +
                          std::to_string(budget.max_unitary_lines) + " lines");
    }
    for (const Step &s : c.steps) {
        if (!is_gate(s) || as_gate(s).control.has_value()) {
            throw ContractError("circuit_unitary: circuit is not purely unitary");
        }
    }
    size_t dim = size_t{1} << c.num_lines;
    std::vector<StateVector> cols(dim);
    for (size_t j = 0; j < dim; j++) {
        StateVector v(dim, Amplitude(0));
        v[j] = 1;
        for (const Step &s : c.steps) {
            const Gate &g = as_gate(s);
            apply_gate(v, c.num_lines, g.kind, g.q0, g.q1);
        }
        cols[j] = std::move(v);
    }
    return cols;
}

// Frobenius distance min over global phase, computed elementwise so the
// result stays accurate near zero.
inline double unitary_distance_up_to_phase(const Circuit &c1, const Circuit &c2,
                                           const DenseBudget &budget = {}) {
    if (c1.num_lines != c2.num_lines) {
        throw ContractError("unitary comparison: line counts differ");
    }
    auto u1 = circuit_unitary(c1, budget);
    auto u2 = circuit_unitary(c2, budget);
    Amplitude trace = 0;
    for (size_t j = 0; j < u1.size(); j++) {
        for (size_t i = 0; i < u1.size(); i++) {
            trace += std::conj(u1[j][i]) * u2[j][i];
        }
    }
    Amplitude phase = std::abs(trace) > 1e-12 ? trace / std::abs(trace) : Amplitude(1);
    double d2 = 0;
    for (size_t j = 0; j < u1.size(); j++) {
        for (size_t i = 0; i < u1.size(); i++) {
            d2 += std::norm(u1[j][i] - phase * u2[j][i]);
        }
    }
    return std::sqrt(std::max(0.0, d2));
}

inline bool unitary_equal_up_to_phase(const Circuit &c1, const Circuit &c2,
                                      const DenseBudget &budget = {}) {
    return unitary_distance_up_to_phase(c1, c2, budget) <= 1e-9;
}

}  // namespace pbc
