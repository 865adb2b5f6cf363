#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pbc/errors.hpp"
#include "pbc/pauli.hpp"

namespace pbc {

// The internal Clifford gate set.  Everything else (CZ, SX, SY, X, Y, Z, ...)
// is lowered to words over {H, S, CX} before reaching the tableau; kSdg exists
// because inverting a gate stream needs it directly.
enum class CliffordGate : uint8_t { kH, kS, kSdg, kCx };

// Conjugates p by a single gate g: returns g p g^dagger.
// q1 is only used for kCx (q0 = control, q1 = target).
inline PauliOperator conjugate_by_gate(PauliOperator p, CliffordGate g, size_t q0,
                                       size_t q1 = SIZE_MAX) {
    const size_t n = p.num_qubits();
    if (q0 >= n) {
        throw ContractError("conjugate_by_gate: qubit out of range");
    }
    switch (g) {
        case CliffordGate::kH: {
            bool x = p.x(q0), z = p.z(q0);
            p.set_x(q0, z);
            p.set_z(q0, x);
            if (x && z) {
                p.negate();
            }
            return p;
        }
        case CliffordGate::kS: {
            bool x = p.x(q0), z = p.z(q0);
            p.set_z(q0, z ^ x);
            if (x && z) {
                p.negate();
            }
            return p;
        }
        case CliffordGate::kSdg: {
            bool x = p.x(q0), z = p.z(q0);
            p.set_z(q0, z ^ x);
            if (x && !z) {
                p.negate();
            }
            return p;
        }
        case CliffordGate::kCx: {
            if (q1 >= n || q1 == q0) {
                throw ContractError("conjugate_by_gate: bad CX qubits");
            }
            bool xc = p.x(q0), zc = p.z(q0), xt = p.x(q1), zt = p.z(q1);
            if (xc && zt && !(xt ^ zc)) {
                p.negate();
            }
            p.set_x(q1, xt ^ xc);
            p.set_z(q0, zc ^ zt);
            return p;
        }
    }
    throw ContractError("conjugate_by_gate: bad gate");
}

inline CliffordGate clifford_gate_inverse(CliffordGate g) {
    switch (g) {
        case CliffordGate::kS:
            return CliffordGate::kSdg;
        case CliffordGate::kSdg:
            return CliffordGate::kS;
        default:
            return g;  // H and CX are involutions
    }
}

// One gate of a lowered Clifford word.  q1 is meaningful only for kCx
// (q0 = control, q1 = target).
struct LoweredGate {
    CliffordGate g;
    uint32_t q0 = 0;
    uint32_t q1 = 0;

    bool operator==(const LoweredGate &other) const {
        return g == other.g && q0 == other.q0 && (g != CliffordGate::kCx || q1 == other.q1);
    }
};

inline PauliOperator conjugate_by_gate(PauliOperator p, const LoweredGate &lg) {
    return conjugate_by_gate(std::move(p), lg.g, lg.q0,
                             lg.g == CliffordGate::kCx ? lg.q1 : SIZE_MAX);
}

// For the composite G of `gates` in application order (gates[0] acts first):
// forward returns G p G^dagger, reverse returns G^dagger p G.
inline PauliOperator conjugate_pauli(const std::vector<LoweredGate> &gates, PauliOperator p,
                                     bool forward) {
    if (forward) {
        for (const LoweredGate &lg : gates) {
            p = conjugate_by_gate(std::move(p), lg);
        }
    } else {
        for (size_t i = gates.size(); i-- > 0;) {
            LoweredGate inv = gates[i];
            inv.g = clifford_gate_inverse(inv.g);
            p = conjugate_by_gate(std::move(p), inv);
        }
    }
    return p;
}

// Tracks the Clifford unitary U built from a stream of {H, S, CX} gates, as
// the images U X_q U^dagger and U Z_q U^dagger together with the images under
// U^dagger, so arbitrary Paulis can be pushed through in either direction
// without replaying the gate stream.
class CliffordTableau {
  public:
    explicit CliffordTableau(size_t num_qubits) : num_qubits_(num_qubits) {
        x_img_.reserve(num_qubits);
        z_img_.reserve(num_qubits);
        inv_x_img_.reserve(num_qubits);
        inv_z_img_.reserve(num_qubits);
        for (size_t q = 0; q < num_qubits; q++) {
            x_img_.push_back(PauliOperator::single_x(num_qubits, q));
            z_img_.push_back(PauliOperator::single_z(num_qubits, q));
            inv_x_img_.push_back(PauliOperator::single_x(num_qubits, q));
            inv_z_img_.push_back(PauliOperator::single_z(num_qubits, q));
        }
    }

    size_t num_qubits() const { return num_qubits_; }

    void apply(CliffordGate g, size_t q0, size_t q1 = SIZE_MAX) {
        // Forward images: U' P U'^dag = g (U P U^dag) g^dag.
        for (size_t q = 0; q < num_qubits_; q++) {
            x_img_[q] = conjugate_by_gate(std::move(x_img_[q]), g, q0, q1);
            z_img_[q] = conjugate_by_gate(std::move(z_img_[q]), g, q0, q1);
        }
        // Inverse images: U'^dag X_q U' = U^dag (g^dag X_q g) U, where the
        // inner conjugation is local and the outer one uses the old inverse
        // images.  Only qubits touched by g change.
        CliffordGate ginv = clifford_gate_inverse(g);
        auto update = [&](size_t q) {
            PauliOperator x_local =
                conjugate_by_gate(PauliOperator::single_x(num_qubits_, q), ginv, q0, q1);
            PauliOperator z_local =
                conjugate_by_gate(PauliOperator::single_z(num_qubits_, q), ginv, q0, q1);
            return std::pair{map_through(x_local, inv_x_img_, inv_z_img_),
                             map_through(z_local, inv_x_img_, inv_z_img_)};
        };
        auto [nx0, nz0] = update(q0);
        if (g == CliffordGate::kCx) {
            auto [nx1, nz1] = update(q1);
            inv_x_img_[q1] = std::move(nx1);
            inv_z_img_[q1] = std::move(nz1);
        }
        inv_x_img_[q0] = std::move(nx0);
        inv_z_img_[q0] = std::move(nz0);
    }

    void apply_h(size_t q) { apply(CliffordGate::kH, q); }
    void apply_s(size_t q) { apply(CliffordGate::kS, q); }
    void apply_sdg(size_t q) { apply(CliffordGate::kSdg, q); }
    void apply_cx(size_t control, size_t target) { apply(CliffordGate::kCx, control, target); }

    // U p U^dagger when forward, U^dagger p U otherwise.
    PauliOperator conjugate_pauli(const PauliOperator &p, bool forward) const {
        if (p.num_qubits() != num_qubits_) {
            throw ContractError("conjugate_pauli: size mismatch");
        }
        return forward ? map_through(p, x_img_, z_img_) : map_through(p, inv_x_img_, inv_z_img_);
    }

    const PauliOperator &x_image(size_t q) const { return x_img_[q]; }
    const PauliOperator &z_image(size_t q) const { return z_img_[q]; }

    bool is_identity() const {
        for (size_t q = 0; q < num_qubits_; q++) {
            if (x_img_[q] != PauliOperator::single_x(num_qubits_, q) ||
                z_img_[q] != PauliOperator::single_z(num_qubits_, q)) {
                return false;
            }
        }
        return true;
    }

    // Checks the symplectic structure of the stored images: images of
    // commuting generators commute, X_q's image anticommutes with Z_q's, and
    // forward followed by reverse conjugation is the identity map.
    void check_invariants() const {
        for (size_t a = 0; a < num_qubits_; a++) {
            if (commutes(x_img_[a], z_img_[a])) {
                throw ContractError("tableau invariant broken: [X_q, Z_q] image commutes");
            }
            for (size_t b = a + 1; b < num_qubits_; b++) {
                if (!commutes(x_img_[a], x_img_[b]) || !commutes(z_img_[a], z_img_[b]) ||
                    !commutes(x_img_[a], z_img_[b]) || !commutes(z_img_[a], x_img_[b])) {
                    throw ContractError("tableau invariant broken: image commutation");
                }
            }
            PauliOperator back = conjugate_pauli(x_img_[a], false);
            if (back != PauliOperator::single_x(num_qubits_, a)) {
                throw ContractError("tableau invariant broken: inverse images stale");
            }
        }
    }

  private:
    // p expressed through images: for p = sign * prod_q i^(x z) X^x Z^z, the
    // image is sign * prod_q i^(x z) img_x[q]^x img_z[q]^z.  Factors on
    // distinct qubits have commuting images, so qubit order is irrelevant;
    // within a qubit X comes before Z by the encoding convention.
    static PauliOperator map_through(const PauliOperator &p,
                                     const std::vector<PauliOperator> &img_x,
                                     const std::vector<PauliOperator> &img_z) {
        const size_t n = p.num_qubits();
        int e = p.sign() < 0 ? 2 : 0;
        PauliOperator acc(n);
        for (size_t q = 0; q < n; q++) {
            if (p.x(q)) {
                PauliProduct prod = multiply(acc, img_x[q]);
                e = (e + prod.phase_exponent) % 4;
                acc = std::move(prod.op);
            }
            if (p.z(q)) {
                PauliProduct prod = multiply(acc, img_z[q]);
                e = (e + prod.phase_exponent) % 4;
                acc = std::move(prod.op);
                if (p.x(q)) {
                    e = (e + 1) % 4;
                }
            }
        }
        if (e % 2 != 0) {
            throw ContractError("tableau map_through: non-Hermitian image (internal invariant)");
        }
        if (e == 2) {
            acc.negate();
        }
        return acc;
    }

    size_t num_qubits_;
    std::vector<PauliOperator> x_img_, z_img_;
    std::vector<PauliOperator> inv_x_img_, inv_z_img_;
};

// A full stabilizer/destabilizer generator tableau: n pairwise-commuting
// independent stab rows, n destab rows with destab[i] anticommuting with
// stab[i] and commuting with every other row.
struct StabilizerTableau {
    std::vector<PauliOperator> stab_rows;
    std::vector<PauliOperator> destab_rows;

    size_t num_qubits() const { return stab_rows.size(); }

    // Identity tableau: stab rows Z_q, destab rows X_q.
    static StabilizerTableau identity(size_t n) {
        StabilizerTableau tab;
        for (size_t q = 0; q < n; q++) {
            tab.stab_rows.push_back(PauliOperator::single_z(n, q));
            tab.destab_rows.push_back(PauliOperator::single_x(n, q));
        }
        return tab;
    }

    void apply_gate(const LoweredGate &lg) {
        for (auto &row : stab_rows) {
            row = conjugate_by_gate(std::move(row), lg);
        }
        for (auto &row : destab_rows) {
            row = conjugate_by_gate(std::move(row), lg);
        }
    }

    void check_invariants() const {
        const size_t n = stab_rows.size();
        if (destab_rows.size() != n) {
            throw ContractError("tableau rows: row count mismatch");
        }
        DependenceTracker stab_span(n), destab_span(n);
        for (size_t i = 0; i < n; i++) {
            if (!stab_span.add(stab_rows[i]) || !destab_span.add(destab_rows[i])) {
                throw ContractError("tableau rows not independent at row " + std::to_string(i));
            }
            if (commutes(destab_rows[i], stab_rows[i])) {
                throw ContractError("destab[" + std::to_string(i) +
                                    "] must anticommute with stab[" + std::to_string(i) + "]");
            }
            for (size_t j = 0; j < n; j++) {
                if (j != i && (!commutes(stab_rows[i], stab_rows[j]) ||
                               !commutes(destab_rows[i], stab_rows[j]) ||
                               !commutes(destab_rows[i], destab_rows[j]))) {
                    throw ContractError("tableau commutation pattern broken at (" +
                                        std::to_string(i) + "," + std::to_string(j) + ")");
                }
            }
        }
    }
};

namespace detail {

// GF(2) row reduction of `rows` (width w), also transforming `rhs` columns.
// Returns pivot columns in elimination order.
inline std::vector<size_t> gf2_eliminate(std::vector<std::vector<uint8_t>> &rows, size_t width,
                                         std::vector<std::vector<uint8_t>> *rhs) {
    std::vector<size_t> pivot_cols;
    size_t rank = 0;
    for (size_t c = 0; c < width && rank < rows.size(); c++) {
        size_t pivot = SIZE_MAX;
        for (size_t r = rank; r < rows.size(); r++) {
            if (rows[r][c]) {
                pivot = r;
                break;
            }
        }
        if (pivot == SIZE_MAX) {
            continue;
        }
        std::swap(rows[rank], rows[pivot]);
        if (rhs != nullptr) {
            std::swap((*rhs)[rank], (*rhs)[pivot]);
        }
        for (size_t r = 0; r < rows.size(); r++) {
            if (r != rank && rows[r][c]) {
                for (size_t k = 0; k < width; k++) {
                    rows[r][k] ^= rows[rank][k];
                }
                if (rhs != nullptr) {
                    for (size_t k = 0; k < (*rhs)[r].size(); k++) {
                        (*rhs)[r][k] ^= (*rhs)[rank][k];
                    }
                }
            }
        }
        pivot_cols.push_back(c);
        rank++;
    }
    return pivot_cols;
}

inline std::vector<uint8_t> symplectic_bits(const PauliOperator &p) {
    const size_t n = p.num_qubits();
    std::vector<uint8_t> v(2 * n);
    for (size_t q = 0; q < n; q++) {
        v[q] = p.x(q);
        v[n + q] = p.z(q);
    }
    return v;
}

inline PauliOperator from_symplectic_bits(const std::vector<uint8_t> &v, size_t n) {
    PauliOperator p(n);
    for (size_t q = 0; q < n; q++) {
        p.set_x(q, v[q]);
        p.set_z(q, v[n + q]);
    }
    return p;
}

// Row of the linear functional w |-> <p, w> under the symplectic form
// (1 iff p and w anticommute).
inline std::vector<uint8_t> symplectic_functional(const PauliOperator &p) {
    const size_t n = p.num_qubits();
    std::vector<uint8_t> bits = symplectic_bits(p);
    std::vector<uint8_t> row(2 * n);
    for (size_t c = 0; c < n; c++) {
        row[c] = bits[n + c];  // p's z part pairs with candidate x part
        row[n + c] = bits[c];  // p's x part pairs with candidate z part
    }
    return row;
}

}  // namespace detail

// Extends a pairwise-commuting, GF(2)-independent list of Paulis on n qubits
// to a full stabilizer tableau whose first gens.size() stab rows are the
// inputs themselves (signs included); all other rows carry sign +1.  The
// completion is not unique; any row set satisfying the tableau invariants is
// produced.
inline StabilizerTableau extend_to_full_set(const std::vector<PauliOperator> &gens,
                                            size_t num_qubits) {
    const size_t n = num_qubits;
    if (gens.size() > n) {
        throw ContractError("extend_to_full_set: more generators than qubits");
    }
    DependenceTracker tracker(n);
    for (size_t i = 0; i < gens.size(); i++) {
        if (gens[i].num_qubits() != n) {
            throw ContractError("extend_to_full_set: generator size mismatch at index " +
                                std::to_string(i));
        }
        for (size_t j = i + 1; j < gens.size(); j++) {
            if (!commutes(gens[i], gens[j])) {
                throw ContractError("extend_to_full_set: generators " + std::to_string(i) +
                                    " and " + std::to_string(j) + " anticommute");
            }
        }
        if (!tracker.add(gens[i])) {
            throw ContractError("extend_to_full_set: generator " + std::to_string(i) +
                                " depends on earlier ones");
        }
    }
    StabilizerTableau tab;
    tab.stab_rows = gens;

    // Complete the stabilizer rows: find vectors in the kernel of the current
    // rows' symplectic functionals (i.e. commuting with all of them) that are
    // independent of the span so far.  The kernel always has dimension
    // 2n - |rows| > |rows| while |rows| < n, so a fresh vector exists.
    while (tab.stab_rows.size() < n) {
        // Prefer canonical Z rows: any valid completion works, and this keeps
        // already-diagonal inputs diagonal (so downstream gate synthesis has
        // nothing to do for them).
        bool canonical = false;
        for (size_t q = 0; q < n && !canonical; q++) {
            PauliOperator cand = PauliOperator::single_z(n, q);
            bool ok = true;
            for (const auto &g : tab.stab_rows) {
                if (!commutes(cand, g)) {
                    ok = false;
                    break;
                }
            }
            if (ok && tracker.add(cand)) {
                tab.stab_rows.push_back(cand);
                canonical = true;
            }
        }
        if (canonical) {
            continue;
        }
        std::vector<std::vector<uint8_t>> rows;
        rows.reserve(tab.stab_rows.size());
        for (const auto &g : tab.stab_rows) {
            rows.push_back(detail::symplectic_functional(g));
        }
        std::vector<size_t> pivot_cols = detail::gf2_eliminate(rows, 2 * n, nullptr);
        bool found = false;
        for (size_t free_col = 0; free_col < 2 * n && !found; free_col++) {
            bool is_pivot = false;
            for (size_t pc : pivot_cols) {
                if (pc == free_col) {
                    is_pivot = true;
                    break;
                }
            }
            if (is_pivot) {
                continue;
            }
            std::vector<uint8_t> v(2 * n, 0);
            v[free_col] = 1;
            for (size_t r = 0; r < pivot_cols.size(); r++) {
                if (rows[r][free_col]) {
                    v[pivot_cols[r]] = 1;
                }
            }
            PauliOperator cand = detail::from_symplectic_bits(v, n);
            if (tracker.add(cand)) {
                tab.stab_rows.push_back(cand);
                found = true;
            }
        }
        if (!found) {
            throw ContractError("extend_to_full_set: no completion found (internal invariant)");
        }
    }

    // Destabilizers: solve <x_i, stab_j> = delta_ij for each i, then fix the
    // pairwise destab commutation sequentially (multiplying x_i by stab_j
    // flips <x_i, x_j> without disturbing any <x_i, stab_k>).
    std::vector<std::vector<uint8_t>> a_rows;
    std::vector<std::vector<uint8_t>> rhs;
    for (size_t j = 0; j < n; j++) {
        a_rows.push_back(detail::symplectic_functional(tab.stab_rows[j]));
        std::vector<uint8_t> e(n, 0);
        e[j] = 1;
        rhs.push_back(std::move(e));
    }
    std::vector<size_t> pivot_cols = detail::gf2_eliminate(a_rows, 2 * n, &rhs);
    if (pivot_cols.size() != n) {
        throw ContractError("extend_to_full_set: stab functionals degenerate (internal)");
    }
    for (size_t i = 0; i < n; i++) {
        std::vector<uint8_t> x(2 * n, 0);
        for (size_t r = 0; r < n; r++) {
            if (rhs[r][i]) {
                x[pivot_cols[r]] = 1;
            }
        }
        PauliOperator d = detail::from_symplectic_bits(x, n);
        for (size_t j = 0; j < tab.destab_rows.size(); j++) {
            if (!commutes(d, tab.destab_rows[j])) {
                PauliProduct prod = multiply(d, tab.stab_rows[j]);
                d = prod.op;  // sign irrelevant; destab rows are kept at +1
            }
        }
        tab.destab_rows.push_back(std::move(d));
    }
    tab.check_invariants();
    return tab;
}

}  // namespace pbc
