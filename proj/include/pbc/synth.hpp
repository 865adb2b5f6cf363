#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pbc/errors.hpp"
#include "pbc/pauli.hpp"
#include "pbc/tableau.hpp"

namespace pbc {

// Frozen worst-case gate count for synthesize() on n qubits.  The sweep below
// uses O(n) gates per tableau column; the constant was measured over the
// randomized synthesis suite and frozen with headroom.  synthesize() asserts
// against this bound on every call.
inline size_t synthesis_gate_bound(size_t n) { return 8 * n * n + 24; }

// The gate word for U^dagger given the word for U (reverse order, each gate
// inverted).
inline std::vector<LoweredGate> inverted_gate_word(const std::vector<LoweredGate> &gates) {
    std::vector<LoweredGate> out;
    out.reserve(gates.size());
    for (size_t i = gates.size(); i-- > 0;) {
        LoweredGate lg = gates[i];
        lg.g = clifford_gate_inverse(lg.g);
        out.push_back(lg);
    }
    return out;
}

namespace detail {

// Gate recorder for the synthesis sweep: applies each gate to the working
// tableau rows and appends it to the output word.
struct SynthSweep {
    StabilizerTableau rows;
    std::vector<LoweredGate> word;

    void emit(CliffordGate g, size_t q0, size_t q1 = 0) {
        LoweredGate lg{g, static_cast<uint32_t>(q0), static_cast<uint32_t>(q1)};
        rows.apply_gate(lg);
        word.push_back(lg);
    }

    void h(size_t q) { emit(CliffordGate::kH, q); }
    void s(size_t q) { emit(CliffordGate::kS, q); }
    void cx(size_t c, size_t t) { emit(CliffordGate::kCx, c, t); }

    void swap(size_t a, size_t b) {
        cx(a, b);
        cx(b, a);
        cx(a, b);
    }

    // CZ, X and Z as {H, S, CX} words.
    void cz(size_t a, size_t b) {
        h(b);
        cx(a, b);
        h(b);
    }

    void pauli_x(size_t q) {
        h(q);
        s(q);
        s(q);
        h(q);
    }

    void pauli_z(size_t q) {
        s(q);
        s(q);
    }

    // Rewrites stab row k to exactly +Z_k.  All support of the unfinished
    // rows sits on qubits >= k (they commute with the finished Z_i/X_i
    // pairs), so only those qubits are touched.
    void finish_stab_row(size_t k) {
        const size_t n = rows.num_qubits();
        auto row = [&]() -> const PauliOperator & { return rows.stab_rows[k]; };

        bool any_x = false;
        for (size_t q = k; q < n; q++) {
            any_x |= row().x(q);
        }
        if (any_x) {
            // Make every supported qubit pure X, fold onto a pivot, move the
            // pivot to column k, then rotate X_k into Z_k.
            for (size_t q = k; q < n; q++) {
                if (row().x(q) && row().z(q)) {
                    s(q);
                } else if (!row().x(q) && row().z(q)) {
                    h(q);
                }
            }
            size_t pivot = SIZE_MAX;
            for (size_t q = k; q < n; q++) {
                if (row().x(q)) {
                    if (pivot == SIZE_MAX) {
                        pivot = q;
                    } else {
                        cx(pivot, q);
                    }
                }
            }
            if (pivot != k) {
                swap(pivot, k);
            }
            h(k);
        } else {
            // Pure-Z row: pick the pivot, fold the other Z factors onto it.
            if (!row().z(k)) {
                size_t pivot = SIZE_MAX;
                for (size_t q = k; q < n; q++) {
                    if (row().z(q)) {
                        pivot = q;
                        break;
                    }
                }
                if (pivot == SIZE_MAX) {
                    throw ContractError("synthesize: empty stab row (internal invariant)");
                }
                swap(pivot, k);
            }
            for (size_t q = k + 1; q < n; q++) {
                if (row().z(q)) {
                    cx(q, k);
                }
            }
        }
        if (row().sign() < 0) {
            pauli_x(k);
        }
        if (row() != PauliOperator::single_z(n, k)) {
            throw ContractError("synthesize: stab sweep failed (internal invariant)");
        }
    }

    // Rewrites destab row k to exactly +X_k using gates that fix Z_k, which
    // keeps the just-finished stab row intact.
    void finish_destab_row(size_t k) {
        const size_t n = rows.num_qubits();
        auto row = [&]() -> const PauliOperator & { return rows.destab_rows[k]; };

        if (!row().x(k)) {
            throw ContractError("synthesize: destab row lost anticommutation (internal)");
        }
        if (row().z(k)) {
            s(k);
        }
        for (size_t q = k + 1; q < n; q++) {
            if (row().x(q) && row().z(q)) {
                s(q);
            }
        }
        for (size_t q = k + 1; q < n; q++) {
            if (row().x(q)) {
                cx(k, q);
            }
        }
        for (size_t q = k + 1; q < n; q++) {
            if (row().z(q)) {
                cz(k, q);
            }
        }
        if (row().sign() < 0) {
            pauli_z(k);
        }
        if (row() != PauliOperator::single_x(n, k)) {
            throw ContractError("synthesize: destab sweep failed (internal invariant)");
        }
    }
};

}  // namespace detail

// Builds a Clifford gate word U (over H, S, Sdg, CX; gates[0] applies first)
// with U^dagger Z_k U = targets[k] for every k, so running U and then
// measuring Z on lines 0..m-1 measures exactly the given Pauli list.
//
// Requires the targets to live on n qubits, be pairwise commuting and
// independent, with m <= n.  The returned word is re-verified against the
// targets through a fresh tableau on every call, and its length is checked
// against synthesis_gate_bound(n).
inline std::vector<LoweredGate> synthesize(const std::vector<PauliOperator> &targets, size_t n) {
    const size_t m = targets.size();
    if (m > n) {
        throw ContractError("synthesize: " + std::to_string(m) + " targets exceed " +
                            std::to_string(n) + " qubits");
    }
    for (size_t i = 0; i < m; i++) {
        if (targets[i].num_qubits() != n) {
            throw ContractError("synthesize: target " + std::to_string(i) + " acts on " +
                                std::to_string(targets[i].num_qubits()) + " qubits, expected " +
                                std::to_string(n));
        }
    }
    for (size_t i = 0; i < m; i++) {
        for (size_t j = i + 1; j < m; j++) {
            if (!commutes(targets[i], targets[j])) {
                throw ContractError("synthesize: targets " + std::to_string(i) + " and " +
                                    std::to_string(j) + " anticommute");
            }
        }
    }
    {
        DependenceTracker tracker(n);
        for (size_t i = 0; i < m; i++) {
            if (!tracker.add(targets[i])) {
                throw ContractError("synthesize: target " + std::to_string(i) +
                                    " is dependent on earlier targets");
            }
        }
    }

    detail::SynthSweep sweep;
    sweep.rows = extend_to_full_set(targets, n);
    for (size_t k = 0; k < n; k++) {
        sweep.finish_stab_row(k);
        sweep.finish_destab_row(k);
    }

    // The sweep mapped every row of the extended tableau to the identity
    // tableau, i.e. word * S_k * word^dagger = Z_k, hence for U = word we get
    // U^dagger Z_k U = S_k.  Verify exactly before handing the word out.
    CliffordTableau check(n);
    for (const LoweredGate &lg : sweep.word) {
        check.apply(lg.g, lg.q0, lg.g == CliffordGate::kCx ? lg.q1 : SIZE_MAX);
    }
    for (size_t k = 0; k < m; k++) {
        if (check.conjugate_pauli(PauliOperator::single_z(n, k), false) != targets[k]) {
            throw ContractError("synthesize: verification failed at target " + std::to_string(k) +
                                " (internal invariant)");
        }
    }
    if (sweep.word.size() > synthesis_gate_bound(n)) {
        throw ContractError("synthesize: gate count " + std::to_string(sweep.word.size()) +
                            " exceeds frozen bound " + std::to_string(synthesis_gate_bound(n)));
    }
    return sweep.word;
}

}  // namespace pbc
