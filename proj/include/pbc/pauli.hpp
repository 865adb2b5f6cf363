#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbc/errors.hpp"

namespace pbc {

// A signed n-qubit Pauli operator, bit-packed as an X word-vector and a Z
// word-vector plus an overall sign in {+1, -1}.
//
// Per qubit the (x, z) bit pair encodes i^(x*z) X^x Z^z, i.e.
//   (0,0) = I, (1,0) = X, (1,1) = Y, (0,1) = Z,
// so stored operators are always Hermitian.  Phases that arise during
// multiplication are never folded silently into the sign; `multiply` returns
// the power of i explicitly and callers decide what to do with it.
class PauliOperator {
  public:
    PauliOperator() : PauliOperator(0) {}

    explicit PauliOperator(size_t num_qubits)
        : num_qubits_(num_qubits),
          x_((num_qubits + 63) / 64, 0),
          z_((num_qubits + 63) / 64, 0),
          sign_(+1) {}

    static PauliOperator single_x(size_t num_qubits, size_t q) {
        PauliOperator p(num_qubits);
        p.set_x(q, true);
        return p;
    }

    static PauliOperator single_z(size_t num_qubits, size_t q) {
        PauliOperator p(num_qubits);
        p.set_z(q, true);
        return p;
    }

    static PauliOperator single_y(size_t num_qubits, size_t q) {
        PauliOperator p(num_qubits);
        p.set_x(q, true);
        p.set_z(q, true);
        return p;
    }

    // Parses "XZI", "-ZIXY", "+II", ...  One uppercase letter per qubit,
    // optional leading sign.  The empty string is the zero-qubit identity.
    static PauliOperator parse(const std::string &text) {
        size_t pos = 0;
        int sign = +1;
        if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
            sign = text[pos] == '-' ? -1 : +1;
            pos++;
        }
        PauliOperator p(text.size() - pos);
        for (size_t q = 0; pos < text.size(); q++, pos++) {
            switch (text[pos]) {
                case 'I':
                    break;
                case 'X':
                    p.set_x(q, true);
                    break;
                case 'Y':
                    p.set_x(q, true);
                    p.set_z(q, true);
                    break;
                case 'Z':
                    p.set_z(q, true);
                    break;
                default:
                    throw ParseError("invalid Pauli character '" + std::string(1, text[pos]) +
                                     "' in \"" + text + "\"");
            }
        }
        p.sign_ = static_cast<int8_t>(sign);
        return p;
    }

    size_t num_qubits() const { return num_qubits_; }

    int sign() const { return sign_; }

    void set_sign(int sign) {
        if (sign != +1 && sign != -1) {
            throw ContractError("Pauli sign must be +1 or -1");
        }
        sign_ = static_cast<int8_t>(sign);
    }

    void negate() { sign_ = static_cast<int8_t>(-sign_); }

    bool x(size_t q) const { return (x_[q / 64] >> (q % 64)) & 1; }

    bool z(size_t q) const { return (z_[q / 64] >> (q % 64)) & 1; }

    void set_x(size_t q, bool v) { set_bit(x_, q, v); }

    void set_z(size_t q, bool v) { set_bit(z_, q, v); }

    // True when every qubit carries I (the sign is not considered).
    bool is_identity_bits() const {
        for (size_t w = 0; w < x_.size(); w++) {
            if (x_[w] | z_[w]) {
                return false;
            }
        }
        return true;
    }

    // Number of qubits carrying a non-identity factor.
    size_t weight() const {
        size_t total = 0;
        for (size_t w = 0; w < x_.size(); w++) {
            total += std::popcount(x_[w] | z_[w]);
        }
        return total;
    }

    // This operator placed at qubit offset `offset` inside a larger register
    // of `new_num_qubits` qubits, identity elsewhere.
    PauliOperator embedded(size_t new_num_qubits, size_t offset) const {
        if (offset + num_qubits_ > new_num_qubits) {
            throw ContractError("embedded: operator does not fit in target register");
        }
        PauliOperator out(new_num_qubits);
        for (size_t q = 0; q < num_qubits_; q++) {
            out.set_x(offset + q, x(q));
            out.set_z(offset + q, z(q));
        }
        out.sign_ = sign_;
        return out;
    }

    std::string str() const {
        std::string out;
        out.reserve(num_qubits_ + 1);
        if (sign_ < 0) {
            out.push_back('-');
        }
        for (size_t q = 0; q < num_qubits_; q++) {
            out.push_back("IXZY"[static_cast<int>(x(q)) + 2 * static_cast<int>(z(q))]);
        }
        return out;
    }

    bool operator==(const PauliOperator &other) const {
        return num_qubits_ == other.num_qubits_ && sign_ == other.sign_ && x_ == other.x_ &&
               z_ == other.z_;
    }

    bool operator!=(const PauliOperator &other) const { return !(*this == other); }

    const std::vector<uint64_t> &x_words() const { return x_; }

    const std::vector<uint64_t> &z_words() const { return z_; }

  private:
    static void set_bit(std::vector<uint64_t> &words, size_t q, bool v) {
        if (v) {
            words[q / 64] |= uint64_t{1} << (q % 64);
        } else {
            words[q / 64] &= ~(uint64_t{1} << (q % 64));
        }
    }

    size_t num_qubits_;
    std::vector<uint64_t> x_;
    std::vector<uint64_t> z_;
    int8_t sign_;
};

// Result of a Pauli product: i^phase_exponent times an operator whose stored
// sign is +1.  phase_exponent is in {0, 1, 2, 3}.
struct PauliProduct {
    int phase_exponent;
    PauliOperator op;
};

// True when a and b commute (signs are irrelevant to commutation).
inline bool commutes(const PauliOperator &a, const PauliOperator &b) {
    if (a.num_qubits() != b.num_qubits()) {
        throw ContractError("commutes: operand sizes differ");
    }
    const auto &ax = a.x_words(), &az = a.z_words();
    const auto &bx = b.x_words(), &bz = b.z_words();
    size_t anti = 0;
    for (size_t w = 0; w < ax.size(); w++) {
        anti += std::popcount(ax[w] & bz[w]) + std::popcount(az[w] & bx[w]);
    }
    return anti % 2 == 0;
}

// Computes a * b = i^e * c with c.sign() == +1, returning e explicitly.
// Input signs contribute i^2 each; no phase information is lost or folded.
inline PauliProduct multiply(const PauliOperator &a, const PauliOperator &b) {
    if (a.num_qubits() != b.num_qubits()) {
        throw ContractError("multiply: operand sizes differ");
    }
    const auto &ax = a.x_words(), &az = a.z_words();
    const auto &bx = b.x_words(), &bz = b.z_words();
    PauliOperator c(a.num_qubits());
    // Per qubit:  i^(x1 z1) X^x1 Z^z1 * i^(x2 z2) X^x2 Z^z2
    //           = i^(x1 z1 + x2 z2 + 2 z1 x2 - x' z') * i^(x' z') X^x' Z^z'
    // with x' = x1^x2, z' = z1^z2.  Summing the exponent over qubits mod 4:
    size_t e = 0;
    std::vector<uint64_t> cx(ax.size()), cz(az.size());
    for (size_t w = 0; w < ax.size(); w++) {
        cx[w] = ax[w] ^ bx[w];
        cz[w] = az[w] ^ bz[w];
        e += std::popcount(ax[w] & az[w]);
        e += std::popcount(bx[w] & bz[w]);
        e += 2 * static_cast<size_t>(std::popcount(az[w] & bx[w]));
        e += 3 * static_cast<size_t>(std::popcount(cx[w] & cz[w]));  // 3 == -1 (mod 4)
    }
    if (a.sign() < 0) {
        e += 2;
    }
    if (b.sign() < 0) {
        e += 2;
    }
    for (size_t q = 0; q < a.num_qubits(); q++) {
        c.set_x(q, (cx[q / 64] >> (q % 64)) & 1);
        c.set_z(q, (cz[q / 64] >> (q % 64)) & 1);
    }
    return PauliProduct{static_cast<int>(e % 4), c};
}

// Multiplies a list of pairwise commuting Paulis into a single signed
// operator.  The accumulated phase must come out real; odd powers of i would
// mean the factors were not simultaneously measurable.
inline PauliOperator multiply_commuting(const std::vector<PauliOperator> &factors,
                                        size_t num_qubits) {
    PauliOperator acc(num_qubits);
    int e = 0;
    for (const auto &f : factors) {
        PauliProduct prod = multiply(acc, f);
        e = (e + prod.phase_exponent) % 4;
        acc = prod.op;
    }
    if (e % 2 != 0) {
        throw ContractError("multiply_commuting: product has imaginary phase");
    }
    if (e == 2) {
        acc.negate();
    }
    return acc;
}

// Drops the first prefix_len qubits of p, which must all carry I or Z, and
// keeps the sign.  Used when the dropped qubits are known to sit in |0>, where
// a Z factor acts as +1.
inline PauliOperator restrict(const PauliOperator &p, size_t prefix_len) {
    if (prefix_len > p.num_qubits()) {
        throw ContractError("restrict: prefix longer than operator");
    }
    for (size_t q = 0; q < prefix_len; q++) {
        if (p.x(q)) {
            throw ContractError("restrict: prefix qubit " + std::to_string(q) +
                                " carries X or Y");
        }
    }
    PauliOperator out(p.num_qubits() - prefix_len);
    for (size_t q = prefix_len; q < p.num_qubits(); q++) {
        out.set_x(q - prefix_len, p.x(q));
        out.set_z(q - prefix_len, p.z(q));
    }
    out.set_sign(p.sign());
    return out;
}

// Conjugation by the Hermitian unitary V = (lambda_p * p + lambda_q * q) / sqrt(2),
// where p and q anticommute and lambda_p, lambda_q are in {+1, -1}.
// Returns V r V (V is an involution, so this equals V r V^dagger).
//
// Case analysis (r's commutation with p / with q):
//   commutes / commutes       ->  r
//   anticommutes/anticommutes -> -r
//   commutes / anticommutes   ->  lambda_p lambda_q r p q
//   anticommutes / commutes   -> -lambda_p lambda_q r p q
inline PauliOperator conjugate_by_v(const PauliOperator &r, const PauliOperator &p, int lambda_p,
                                    const PauliOperator &q, int lambda_q) {
    if (commutes(p, q)) {
        throw ContractError("conjugate_by_v: p and q must anticommute");
    }
    if ((lambda_p != 1 && lambda_p != -1) || (lambda_q != 1 && lambda_q != -1)) {
        throw ContractError("conjugate_by_v: lambdas must be +1 or -1");
    }
    const bool cp = commutes(r, p);
    const bool cq = commutes(r, q);
    if (cp && cq) {
        return r;
    }
    if (!cp && !cq) {
        PauliOperator out = r;
        out.negate();
        return out;
    }
    PauliProduct rp = multiply(r, p);
    PauliProduct rpq = multiply(rp.op, q);
    int e = (rp.phase_exponent + rpq.phase_exponent) % 4;
    if (e % 2 != 0) {
        throw ContractError("conjugate_by_v: non-Hermitian product (internal invariant)");
    }
    int sign = (e == 2 ? -1 : 1) * lambda_p * lambda_q * (cp ? 1 : -1);
    PauliOperator out = rpq.op;
    out.set_sign(sign);
    return out;
}

// Measurement record kinds, ordered by how the outcome was obtained:
//   kDummy            - declared-stabilizer bookkeeping entry, outcome fixed +1
//   kClassicalDummy   - alias kind for generator entries is not needed; see compile
//   kClassical        - outcome forced by earlier records (no quantum step)
//   kRandomLambda     - outcome is a fresh fair coin
//   kQuantum          - outcome must come from a genuine quantum measurement
enum class MeasurementKind : uint8_t {
    kDummy,
    kClassical,
    kRandomLambda,
    kQuantum,
};

inline const char *measurement_kind_name(MeasurementKind k) {
    switch (k) {
        case MeasurementKind::kDummy:
            return "dummy";
        case MeasurementKind::kClassical:
            return "classical";
        case MeasurementKind::kRandomLambda:
            return "random";
        case MeasurementKind::kQuantum:
            return "quantum";
    }
    throw ContractError("measurement_kind_name: bad kind");
}

// One processed measurement: which Pauli was (notionally) measured, the
// outcome in {+1, -1}, and how the outcome came about.
struct RecordedMeasurement {
    PauliOperator op;
    int outcome = +1;
    MeasurementKind kind = MeasurementKind::kDummy;
};

// Incremental GF(2) dependence tracking for the bit parts (sign ignored) of a
// growing list of Paulis.  Each accepted operator contributes one basis row;
// dependent operators can be decomposed into an index subset of the accepted
// history.
class DependenceTracker {
  public:
    explicit DependenceTracker(size_t num_qubits) : num_qubits_(num_qubits) {}

    size_t history_size() const { return history_.size(); }

    const PauliOperator &history(size_t i) const { return history_[i]; }

    // Appends op to the history.  Returns true if op's bit part was
    // independent of everything before it.
    bool add(const PauliOperator &op) {
        check_size(op);
        Row row = reduce(bits_of(op), combo_mask(history_.size()));
        history_.push_back(op);
        if (row.bits_empty()) {
            return false;
        }
        basis_.push_back(std::move(row));
        return true;
    }

    // If op's bit part lies in the span of the history, returns the sorted
    // indices of a history subset whose bitwise product equals it.
    std::optional<std::vector<size_t>> dependence(const PauliOperator &op) const {
        check_size(op);
        Row row = reduce(bits_of(op), std::vector<uint64_t>((history_.size() + 63) / 64, 0));
        if (!row.bits_empty()) {
            return std::nullopt;
        }
        std::vector<size_t> indices;
        for (size_t i = 0; i < history_.size(); i++) {
            if (i / 64 < row.combo.size() && ((row.combo[i / 64] >> (i % 64)) & 1)) {
                indices.push_back(i);
            }
        }
        return indices;
    }

    bool in_span(const PauliOperator &op) const { return dependence(op).has_value(); }

  private:
    struct Row {
        std::vector<uint64_t> bits;   // concatenated x|z words
        std::vector<uint64_t> combo;  // which history entries XOR to bits
        bool bits_empty() const {
            for (uint64_t w : bits) {
                if (w) {
                    return false;
                }
            }
            return true;
        }
    };

    void check_size(const PauliOperator &op) const {
        if (op.num_qubits() != num_qubits_) {
            throw ContractError("DependenceTracker: operator size mismatch");
        }
    }

    std::vector<uint64_t> bits_of(const PauliOperator &op) const {
        std::vector<uint64_t> bits = op.x_words();
        bits.insert(bits.end(), op.z_words().begin(), op.z_words().end());
        return bits;
    }

    std::vector<uint64_t> combo_mask(size_t index) const {
        std::vector<uint64_t> mask((history_.size() + 64) / 64 + 1, 0);
        mask[index / 64] |= uint64_t{1} << (index % 64);
        return mask;
    }

    static size_t leading_bit(const std::vector<uint64_t> &bits) {
        for (size_t w = bits.size(); w-- > 0;) {
            if (bits[w]) {
                return w * 64 + (63 - static_cast<size_t>(std::countl_zero(bits[w])));
            }
        }
        throw ContractError("leading_bit of zero vector");
    }

    static void xor_into(std::vector<uint64_t> &dst, const std::vector<uint64_t> &src) {
        if (dst.size() < src.size()) {
            dst.resize(src.size(), 0);
        }
        for (size_t w = 0; w < src.size(); w++) {
            dst[w] ^= src[w];
        }
    }

    Row reduce(std::vector<uint64_t> bits, std::vector<uint64_t> combo) const {
        Row row{std::move(bits), std::move(combo)};
        while (!row.bits_empty()) {
            size_t lead = leading_bit(row.bits);
            const Row *hit = nullptr;
            for (const Row &b : basis_) {
                if (leading_bit(b.bits) == lead) {
                    hit = &b;
                    break;
                }
            }
            if (hit == nullptr) {
                break;
            }
            xor_into(row.bits, hit->bits);
            xor_into(row.combo, hit->combo);
        }
        return row;
    }

    size_t num_qubits_;
    std::vector<PauliOperator> history_;
    std::vector<Row> basis_;
};

// Decomposition of a Pauli over a measurement history: p equals
// sign * product of history[indices...] as operators.
struct Dependence {
    int sign;
    std::vector<size_t> indices;
};

// If p's bit part is a GF(2) combination of the history's bit parts, returns
// the subset and the sign making the operator identity exact.  The referenced
// history subset must consist of pairwise commuting operators for the product
// (and hence the sign) to be well defined; violations throw.
inline std::optional<Dependence> decompose_dependence(const PauliOperator &p,
                                                      const std::vector<PauliOperator> &history) {
    if (history.empty()) {
        if (p.is_identity_bits()) {
            return Dependence{p.sign(), {}};
        }
        return std::nullopt;
    }
    DependenceTracker tracker(history[0].num_qubits());
    for (const auto &h : history) {
        tracker.add(h);
    }
    auto indices = tracker.dependence(p);
    if (!indices.has_value()) {
        return std::nullopt;
    }
    std::vector<PauliOperator> factors;
    factors.reserve(indices->size());
    for (size_t i : *indices) {
        factors.push_back(history[i]);
    }
    for (size_t i = 0; i < factors.size(); i++) {
        for (size_t j = i + 1; j < factors.size(); j++) {
            if (!commutes(factors[i], factors[j])) {
                throw ContractError("decompose_dependence: referenced history subset does not "
                                    "commute pairwise");
            }
        }
    }
    PauliOperator prod = multiply_commuting(factors, p.num_qubits());
    // p = sign * prod, and bit parts already match, so sign = p.sign/prod.sign.
    return Dependence{p.sign() * prod.sign(), std::move(*indices)};
}

}  // namespace pbc
