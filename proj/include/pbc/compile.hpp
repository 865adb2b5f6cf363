#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pbc/circuit.hpp"
#include "pbc/dense.hpp"
#include "pbc/errors.hpp"
#include "pbc/pauli.hpp"
#include "pbc/rng.hpp"
#include "pbc/synth.hpp"
#include "pbc/tableau.hpp"

namespace pbc {

// ---------------------------------------------------------- sign algebra ---

// A +/-1 value written as base * prod(quantum outcomes) * prod(coin flips),
// referencing outcome variables by index.  Because every variable squares to
// one, reference lists are XOR-multisets kept sorted and duplicate-free.
struct SignExpr {
    int base = +1;
    std::vector<uint32_t> quanta;  // emitted-measurement slots
    std::vector<uint32_t> coins;   // free-coin indices

    bool concrete() const { return quanta.empty() && coins.empty(); }

    static void toggle(std::vector<uint32_t> &v, uint32_t x) {
        auto it = std::lower_bound(v.begin(), v.end(), x);
        if (it != v.end() && *it == x) {
            v.erase(it);
        } else {
            v.insert(it, x);
        }
    }

    void mul_quantum(uint32_t k) { toggle(quanta, k); }
    void mul_coin(uint32_t k) { toggle(coins, k); }

    void mul(const SignExpr &o) {
        base *= o.base;
        for (uint32_t k : o.quanta) {
            toggle(quanta, k);
        }
        for (uint32_t k : o.coins) {
            toggle(coins, k);
        }
    }

    bool operator==(const SignExpr &) const = default;
};

// Drops the non-magic lines of a full-width Pauli.  Non-magic lines may carry
// only I or Z (they sit in |0>, where Z acts as +1); the sign is kept.
inline PauliOperator restrict_to_magic(const PauliOperator &p,
                                       const std::vector<uint32_t> &magic_lines) {
    PauliOperator out(magic_lines.size());
    size_t next = 0;
    for (uint32_t q = 0; q < p.num_qubits(); q++) {
        if (next < magic_lines.size() && magic_lines[next] == q) {
            out.set_x(next, p.x(q));
            out.set_z(next, p.z(q));
            next++;
        } else if (p.x(q)) {
            throw ContractError("restrict_to_magic: non-magic line " + std::to_string(q) +
                                " carries X or Y");
        }
    }
    out.set_sign(p.sign());
    return out;
}

// ---------------------------------------------------------- preprocessing --

namespace detail {

struct PreGate {
    LoweredGate lg;
    std::optional<ParityControl> control;
};

struct PreMeasure {
    uint32_t line = 0;
    uint32_t record_id = 0;
    std::optional<int> postselect;
    bool is_line_record = false;  // synthetic terminal measurement of an output line
};

using PreStep = std::variant<PreGate, PreMeasure>;

// The compile-ready form of a circuit: gates lowered to {H,S,Sdg,CX}, a
// declared stabilizer block replaced by its preparation word on |0..0>, and
// output lines turned into synthetic terminal measurements.
struct Preprocessed {
    uint32_t num_lines = 0;
    size_t t = 0;
    std::vector<uint32_t> magic_lines;  // ascending
    std::vector<PreStep> steps;
    std::vector<PauliOperator> reported_dummies;  // declared generators + plain Z lines
    std::vector<uint32_t> key_records;            // record ids forming the sample key, in order
    std::vector<uint32_t> original_records;       // original record ids, declaration order
    std::vector<std::pair<uint32_t, uint32_t>> line_records;  // (synthetic id, line)
};

inline Preprocessed preprocess(const Circuit &c) {
    validate(c);
    for (const Step &s : c.steps) {
        if (is_gate(s) && !gate_is_clifford(as_gate(s).kind)) {
            throw ContractError(std::string("compile: non-Clifford gate ") +
                                gate_name(as_gate(s).kind) +
                                "; rewrite magic gates with gadgetize first");
        }
    }

    Preprocessed pre;
    pre.num_lines = c.num_lines;
    for (uint32_t q = 0; q < c.num_lines; q++) {
        if (c.input[q] == InputKind::kMagicA) {
            pre.magic_lines.push_back(q);
        }
    }
    pre.t = pre.magic_lines.size();

    const size_t r = c.stabilizer_block.size();
    if (r > 0) {
        for (uint32_t q = static_cast<uint32_t>(r); q < c.num_lines; q++) {
            if (c.input[q] != InputKind::kMagicA) {
                throw ContractError("compile: a declared stabilizer block must cover every |0> "
                                    "line; partially covered inputs are not supported");
            }
        }
        // Prepare the declared state from |0..0>: for U with U^dag Z_k U = S_k
        // the state U^dag|0..0> is stabilized by exactly the S_k, so prepend
        // the word of U^dag and compile against plain |0> inputs.
        std::vector<LoweredGate> word = inverted_gate_word(synthesize(c.stabilizer_block, r));
        for (const LoweredGate &lg : word) {
            pre.steps.push_back(PreGate{lg, {}});
        }
        for (size_t k = 0; k < r; k++) {
            pre.reported_dummies.push_back(c.stabilizer_block[k].embedded(c.num_lines, 0));
        }
    } else {
        for (uint32_t q = 0; q < c.num_lines; q++) {
            if (c.input[q] == InputKind::kZero) {
                pre.reported_dummies.push_back(PauliOperator::single_z(c.num_lines, q));
            }
        }
    }

    uint32_t next_synthetic = 0;
    for (const Measure &m : c.measurements()) {
        next_synthetic = std::max(next_synthetic, m.record_id + 1);
        pre.original_records.push_back(m.record_id);
    }
    for (const Step &s : c.steps) {
        if (is_gate(s)) {
            const Gate &g = as_gate(s);
            for (const LoweredGate &lg : lower_gate(g.kind, g.q0, g.q1)) {
                pre.steps.push_back(PreGate{lg, g.control});
            }
        } else {
            const Measure &m = as_measure(s);
            pre.steps.push_back(PreMeasure{m.line, m.record_id, m.postselect, false});
        }
    }

    OutputLayout layout = output_layout(c);
    pre.key_records = layout.record_ids;
    for (uint32_t line : layout.lines) {
        uint32_t id = next_synthetic++;
        pre.steps.push_back(PreMeasure{line, id, {}, true});
        pre.line_records.emplace_back(id, line);
        pre.key_records.push_back(id);
    }
    return pre;
}

// ---------------------------------------------------------------- engine ---

// One substitution event: a later operator R is rewritten through
// V = (v_N * N + v_P * P)/sqrt(2) with N, P stored unsigned and the product
// v_N * v_P kept as a symbolic sign.
struct SubEvent {
    PauliOperator n_bits;
    PauliOperator p_bits;
    SignExpr factor;
};

struct EngineRecord {
    uint32_t record_id = 0;
    MeasurementKind kind = MeasurementKind::kClassical;
    PauliOperator op;     // unsigned full-width operator after substitutions
    SignExpr sigma;       // actual measured operator = sigma * op
    SignExpr value;       // the record's +/-1 value over free outcome variables
    std::optional<int> postselect;
    size_t slot = SIZE_MAX;  // quantum: emitted index; free coin: coin index
    bool is_line_record = false;
};

// Shared rewriting engine behind compile() and compile_nonadaptive().  It
// walks the lowered step list once, pushing each measured line operator
// through the gate tableau and the substitution chain, then classifying it
// against the basis of dummy generators and previously emitted measurements:
// anticommuting -> coin flip plus substitution, dependent -> classically
// determined outcome, otherwise -> a genuine measurement on the magic
// register.  Interactive mode pauses for quantum outcomes and coin flips;
// static mode keeps signs symbolic in the outcome variables instead.
class Engine {
  public:
    Engine() = default;

    Engine(std::shared_ptr<const Preprocessed> pre, bool static_mode)
        : pre_(std::move(pre)),
          static_mode_(static_mode),
          tab_(pre_->num_lines),
          emitted_tracker_(pre_->t),
          basis_tracker_(pre_->num_lines) {
        for (uint32_t q = 0; q < pre_->num_lines; q++) {
            if (std::find(pre_->magic_lines.begin(), pre_->magic_lines.end(), q) ==
                pre_->magic_lines.end()) {
                PauliOperator z = PauliOperator::single_z(pre_->num_lines, q);
                basis_ops_.push_back(z);
                basis_slot_.push_back(SIZE_MAX);
                basis_tracker_.add(z);
            }
        }
    }

    const Preprocessed &pre() const { return *pre_; }
    size_t t() const { return pre_->t; }
    size_t quantum_count() const { return emitted_.size(); }
    size_t coin_count() const { return num_coins_; }
    size_t forced_coin_count() const { return forced_coins_; }
    const std::vector<PauliOperator> &emitted() const { return emitted_; }
    const std::vector<std::optional<int>> &emitted_postselect() const { return emitted_post_; }
    const std::vector<EngineRecord> &records() const { return records_; }
    bool done() const { return pos_ >= pre_->steps.size() && wait_ == Wait::kNone; }

    struct Constraint {
        int required = +1;   // product of the referenced variables must equal this
        SignExpr refs;       // base is always +1 here
    };
    const std::vector<Constraint> &constraints() const { return constraints_; }

    enum class Surface { kNone, kClassical, kNeedQuantum, kNeedCoin, kDone };

    // Advances until something surfaces.  After kNeedQuantum / kNeedCoin the
    // engine waits; call supply().  kClassical reports the record that was
    // just resolved (already recorded; no acknowledgement needed).
    Surface advance() {
        if (wait_ == Wait::kQuantum) {
            return Surface::kNeedQuantum;
        }
        if (wait_ == Wait::kCoin) {
            return Surface::kNeedCoin;
        }
        while (pos_ < pre_->steps.size()) {
            const PreStep &step = pre_->steps[pos_];
            if (std::holds_alternative<PreGate>(step)) {
                const PreGate &g = std::get<PreGate>(step);
                if (control_fires(g.control)) {
                    tab_.apply(g.lg.g, g.lg.q0,
                               g.lg.g == CliffordGate::kCx ? g.lg.q1 : SIZE_MAX);
                }
                pos_++;
                continue;
            }
            const PreMeasure m = std::get<PreMeasure>(step);
            pos_++;
            Surface s = process_measure(m);
            if (s != Surface::kNone) {
                return s;
            }
        }
        return Surface::kDone;
    }

    void supply(int v) {
        if (v != +1 && v != -1) {
            throw ContractError("supply: outcome must be +1 or -1");
        }
        if (wait_ == Wait::kQuantum) {
            size_t slot = records_.back().slot;
            if (emitted_post_[slot].has_value() && v != *emitted_post_[slot]) {
                throw PostselectionMissError(
                    "measurement " + std::to_string(slot) + " returned " + std::to_string(v) +
                    " but is postselected to " + std::to_string(*emitted_post_[slot]));
            }
            quantum_supplied_[slot] = v;
        } else if (wait_ == Wait::kCoin) {
            coin_supplied_[records_.back().slot] = v;
        } else {
            throw ContractError("supply: no pending action");
        }
        wait_ = Wait::kNone;
    }

    // Evaluates a sign expression against supplied/forced outcomes.
    int eval(const SignExpr &e) const {
        int v = e.base;
        for (uint32_t k : e.quanta) {
            std::optional<int> q = quantum_supplied_[k].has_value() ? quantum_supplied_[k]
                                                                    : quantum_forced_[k];
            if (!q.has_value()) {
                throw ContractError("eval: quantum outcome " + std::to_string(k) +
                                    " not yet available (internal invariant)");
            }
            v *= *q;
        }
        for (uint32_t k : e.coins) {
            if (!coin_supplied_[k].has_value()) {
                throw ContractError("eval: coin " + std::to_string(k) +
                                    " not yet available (internal invariant)");
            }
            v *= *coin_supplied_[k];
        }
        return v;
    }

    double preselection_factor() const { return std::pow(0.5, static_cast<double>(forced_coins_)); }

    const EngineRecord &record_of(uint32_t record_id) const {
        auto it = record_index_.find(record_id);
        if (it == record_index_.end()) {
            throw ContractError("record " + std::to_string(record_id) + " not processed yet");
        }
        return records_[it->second];
    }

    bool has_record(uint32_t record_id) const { return record_index_.count(record_id) > 0; }

  private:
    enum class Wait { kNone, kQuantum, kCoin };

    bool control_fires(const std::optional<ParityControl> &control) const {
        if (!control.has_value()) {
            return true;
        }
        if (static_mode_) {
            throw ContractError("compile_nonadaptive: parity-controlled gate (internal)");
        }
        bool bit = control->invert;
        for (uint32_t id : control->records) {
            bit ^= eval(record_of(id).value) == -1;
        }
        return bit;
    }

    // Folds the variables whose values are pinned by postselection.  The
    // result is the statically-determined part of the expression.
    SignExpr resolve_forced(SignExpr e) const {
        std::vector<uint32_t> keep;
        for (uint32_t k : e.quanta) {
            if (quantum_forced_[k].has_value()) {
                e.base *= *quantum_forced_[k];
            } else {
                keep.push_back(k);
            }
        }
        e.quanta = std::move(keep);
        return e;
    }

    Surface process_measure(const PreMeasure &m) {
        // Heisenberg operator of measuring Z on m.line after the gates so
        // far, rewritten through the substitution chain.
        PauliOperator op = tab_.conjugate_pauli(
            PauliOperator::single_z(pre_->num_lines, m.line), /*forward=*/false);
        SignExpr sigma;
        for (const SubEvent &e : subs_) {
            const bool cn = commutes(op, e.n_bits);
            const bool cp = commutes(op, e.p_bits);
            if (cn && cp) {
                continue;
            }
            if (!cn && !cp) {
                op.negate();
                continue;
            }
            op = conjugate_by_v(op, e.n_bits, +1, e.p_bits, +1);
            sigma.mul(e.factor);
        }
        sigma.base *= op.sign();
        op.set_sign(+1);
        sigma = resolve_forced(sigma);

        size_t n_idx = SIZE_MAX;
        for (size_t i = 0; i < basis_ops_.size(); i++) {
            if (!commutes(op, basis_ops_[i])) {
                n_idx = i;  // dummies precede emitted ops, so the earliest
                break;      // anticommuting dummy wins automatically
            }
        }
        if (n_idx != SIZE_MAX) {
            return process_anticommuting(m, std::move(op), std::move(sigma), n_idx);
        }
        auto dep = decompose_dependence(op, basis_ops_);
        if (dep.has_value()) {
            return process_dependent(m, std::move(op), std::move(sigma), *dep);
        }
        return process_independent(m, std::move(op), std::move(sigma));
    }

    Surface process_anticommuting(const PreMeasure &m, PauliOperator op, SignExpr sigma,
                                  size_t n_idx) {
        SignExpr v_n;
        if (basis_slot_[n_idx] != SIZE_MAX) {
            v_n.mul_quantum(static_cast<uint32_t>(basis_slot_[n_idx]));
            v_n = resolve_forced(v_n);
        }
        EngineRecord rec;
        rec.record_id = m.record_id;
        rec.kind = MeasurementKind::kRandomLambda;
        rec.op = op;
        rec.sigma = sigma;
        rec.postselect = m.postselect;
        rec.is_line_record = m.is_line_record;
        if (m.postselect.has_value()) {
            // Postselection pins the coin: the record's value is the target,
            // and the outcome variable of the unsigned operator is
            // v_P = target * sigma.
            SignExpr v_p = sigma;
            v_p.base *= *m.postselect;
            SignExpr factor = v_n;
            factor.mul(v_p);
            subs_.push_back(SubEvent{basis_ops_[n_idx], op, std::move(factor)});
            rec.value = SignExpr{*m.postselect, {}, {}};
            forced_coins_++;
            push_record(std::move(rec));
            return Surface::kNone;
        }
        uint32_t coin = static_cast<uint32_t>(num_coins_++);
        coin_supplied_.push_back(std::nullopt);
        SignExpr factor = v_n;
        factor.mul_coin(coin);
        subs_.push_back(SubEvent{basis_ops_[n_idx], op, std::move(factor)});
        rec.slot = coin;
        rec.value = sigma;
        rec.value.mul_coin(coin);
        push_record(std::move(rec));
        if (!static_mode_) {
            wait_ = Wait::kCoin;
            return Surface::kNeedCoin;
        }
        return Surface::kNone;
    }

    Surface process_dependent(const PreMeasure &m, PauliOperator op, SignExpr sigma,
                              const Dependence &dep) {
        SignExpr value = sigma;
        value.base *= dep.sign;
        for (size_t i : dep.indices) {
            if (basis_slot_[i] != SIZE_MAX) {
                value.mul_quantum(static_cast<uint32_t>(basis_slot_[i]));
            }
        }
        value = resolve_forced(value);

        EngineRecord rec;
        rec.record_id = m.record_id;
        rec.kind = MeasurementKind::kClassical;
        rec.op = std::move(op);
        rec.sigma = std::move(sigma);
        rec.value = value;
        rec.postselect = m.postselect;
        rec.is_line_record = m.is_line_record;

        if (m.postselect.has_value()) {
            const int target = *m.postselect;
            if (value.concrete()) {
                if (value.base != target) {
                    throw ProbabilityZeroError(
                        "record " + std::to_string(m.record_id) + " is determined to be " +
                        std::to_string(value.base) + " but postselected to " +
                        std::to_string(target) + "; the requirement has probability zero");
                }
            } else if (static_mode_) {
                Constraint cons;
                cons.required = target * value.base;
                cons.refs = value;
                cons.refs.base = +1;
                constraints_.push_back(std::move(cons));
            } else if (eval(value) != target) {
                // A non-concrete value always references a freely drawn
                // outcome, so this is a conditioned-away branch, not a
                // probability-zero requirement.
                throw PostselectionMissError("record " + std::to_string(m.record_id) +
                                             " resolved against its postselection");
            }
            rec.value = SignExpr{target, {}, {}};
        }
        push_record(std::move(rec));
        return Surface::kClassical;
    }

    Surface process_independent(const PreMeasure &m, PauliOperator op, SignExpr sigma) {
        PauliOperator restricted = restrict_to_magic(op, pre_->magic_lines);
        const size_t slot = emitted_.size();
        if (slot + 1 > pre_->t) {
            throw ContractError("compile: more independent measurements than magic lines "
                                "(internal invariant)");
        }
        for (const PauliOperator &prev : emitted_) {
            if (!commutes(prev, restricted)) {
                throw ContractError("compile: emitted measurements anticommute (internal)");
            }
        }
        if (!emitted_tracker_.add(restricted)) {
            throw ContractError("compile: emitted measurements dependent (internal)");
        }

        std::optional<int> flag;
        bool constrain = false;
        if (m.postselect.has_value()) {
            if (static_mode_ && !sigma.concrete()) {
                // The required outcome of the unsigned measurement depends on
                // earlier free outcomes, so it cannot be a fixed flag; emit
                // the measurement unflagged and postselect through a parity
                // constraint over {this outcome} * sigma instead.
                constrain = true;
            } else {
                flag = *m.postselect * (static_mode_ ? sigma.base : eval(sigma));
            }
        }
        emitted_.push_back(restricted);
        emitted_post_.push_back(flag);
        quantum_supplied_.push_back(std::nullopt);
        quantum_forced_.push_back(flag);
        basis_ops_.push_back(op);
        basis_slot_.push_back(slot);
        if (!basis_tracker_.add(op)) {
            throw ContractError("compile: basis grew dependent (internal invariant)");
        }
        if (constrain) {
            Constraint cons;
            cons.required = *m.postselect * sigma.base;
            cons.refs = sigma;
            cons.refs.base = +1;
            cons.refs.mul_quantum(static_cast<uint32_t>(slot));
            constraints_.push_back(std::move(cons));
        }

        EngineRecord rec;
        rec.record_id = m.record_id;
        rec.kind = MeasurementKind::kQuantum;
        rec.op = std::move(op);
        rec.sigma = sigma;
        if (m.postselect.has_value()) {
            // Surviving branches have exactly the target value.
            rec.value = SignExpr{*m.postselect, {}, {}};
        } else {
            rec.value = sigma;
            rec.value.mul_quantum(static_cast<uint32_t>(slot));
            rec.value = resolve_forced(rec.value);
        }
        rec.postselect = m.postselect;
        rec.slot = slot;
        rec.is_line_record = m.is_line_record;
        push_record(std::move(rec));
        if (!static_mode_) {
            wait_ = Wait::kQuantum;
            return Surface::kNeedQuantum;
        }
        return Surface::kNone;
    }

    void push_record(EngineRecord rec) {
        record_index_[rec.record_id] = records_.size();
        records_.push_back(std::move(rec));
    }

    std::shared_ptr<const Preprocessed> pre_;
    bool static_mode_ = false;

    CliffordTableau tab_{0};
    size_t pos_ = 0;
    Wait wait_ = Wait::kNone;

    std::vector<PauliOperator> basis_ops_;  // dummies first, then emitted full-width ops
    std::vector<size_t> basis_slot_;        // SIZE_MAX for dummies
    DependenceTracker emitted_tracker_{0};
    DependenceTracker basis_tracker_{0};
    std::vector<SubEvent> subs_;

    std::vector<PauliOperator> emitted_;
    std::vector<std::optional<int>> emitted_post_;
    std::vector<std::optional<int>> quantum_supplied_;
    std::vector<std::optional<int>> quantum_forced_;

    size_t num_coins_ = 0;
    std::vector<std::optional<int>> coin_supplied_;
    size_t forced_coins_ = 0;

    std::vector<EngineRecord> records_;
    std::map<uint32_t, size_t> record_index_;
    std::vector<Constraint> constraints_;
};

}  // namespace detail

// ----------------------------------------------------- interactive form ----

// The interactive compiled program: a resumable state machine over the
// rewritten measurement list.  next() yields the next action; MeasurePauli
// and DrawRandom wait for supply(), EmitClassical reports an outcome that is
// already determined, Done carries nothing.  Copies are independent, which
// makes branch enumeration cheap.
class CompiledProgram {
  public:
    struct MeasurePauli {
        uint32_t record_id = 0;
        PauliOperator op;  // unsigned, on the t magic lines
        std::optional<int> postselect;
    };
    struct EmitClassical {
        uint32_t record_id = 0;
        int outcome = +1;
    };
    struct DrawRandom {
        uint32_t record_id = 0;
    };
    struct Done {};
    using NextAction = std::variant<MeasurePauli, EmitClassical, DrawRandom, Done>;

    explicit CompiledProgram(std::shared_ptr<const detail::Preprocessed> pre)
        : engine_(std::move(pre), /*static_mode=*/false) {}

    size_t t() const { return engine_.t(); }
    size_t prefix_size() const { return engine_.pre().num_lines - engine_.t(); }
    const std::vector<PauliOperator> &dummy_gens() const {
        return engine_.pre().reported_dummies;
    }
    size_t quantum_count() const { return engine_.quantum_count(); }
    size_t coin_count() const { return engine_.coin_count(); }
    size_t forced_coin_count() const { return engine_.forced_coin_count(); }
    double preselection_factor() const { return engine_.preselection_factor(); }
    bool done() const { return engine_.done(); }

    NextAction next() {
        detail::Engine::Surface s = engine_.advance();
        switch (s) {
            case detail::Engine::Surface::kDone:
                return Done{};
            case detail::Engine::Surface::kClassical: {
                const detail::EngineRecord &rec = engine_.records().back();
                return EmitClassical{rec.record_id, engine_.eval(rec.value)};
            }
            case detail::Engine::Surface::kNeedQuantum: {
                const detail::EngineRecord &rec = engine_.records().back();
                return MeasurePauli{rec.record_id, engine_.emitted()[rec.slot],
                                    engine_.emitted_postselect()[rec.slot]};
            }
            case detail::Engine::Surface::kNeedCoin:
                return DrawRandom{engine_.records().back().record_id};
            case detail::Engine::Surface::kNone:
                break;
        }
        throw ContractError("next: bad engine surface (internal)");
    }

    void supply(int outcome) { engine_.supply(outcome); }

    // Processed measurements, dummies first.  Entries still waiting for an
    // outcome are omitted.
    std::vector<RecordedMeasurement> history() const {
        std::vector<RecordedMeasurement> out;
        for (const PauliOperator &d : engine_.pre().reported_dummies) {
            out.push_back(RecordedMeasurement{d, +1, MeasurementKind::kDummy});
        }
        for (const detail::EngineRecord &rec : engine_.records()) {
            int outcome, sign;
            try {
                outcome = engine_.eval(rec.value);
                sign = engine_.eval(rec.sigma);
            } catch (const ContractError &) {
                continue;  // the record the engine is currently waiting on
            }
            PauliOperator op = rec.op;
            op.set_sign(sign);
            out.push_back(RecordedMeasurement{std::move(op), outcome, rec.kind});
        }
        return out;
    }

    int outcome_of(uint32_t record_id) const {
        return engine_.eval(engine_.record_of(record_id).value);
    }

    std::map<uint32_t, int> outcomes() const {
        require_done();
        std::map<uint32_t, int> out;
        for (uint32_t id : engine_.pre().original_records) {
            out[id] = outcome_of(id);
        }
        return out;
    }

    // Sample key in the circuit's output layout: record bits then output-line
    // bits, +1 -> '0', -1 -> '1'.
    std::string sample_key() const {
        require_done();
        std::string key;
        for (uint32_t id : engine_.pre().key_records) {
            key.push_back(outcome_of(id) == -1 ? '1' : '0');
        }
        return key;
    }

    const detail::Engine &engine() const { return engine_; }

  private:
    void require_done() const {
        if (!done()) {
            throw ContractError("compiled program still has pending actions");
        }
    }

    detail::Engine engine_;
};

// Compiles a Clifford circuit over stabilizer + magic inputs into the
// interactive measurement program.  Adaptive circuits are fine; non-Clifford
// gates are not (gadgetize first).
inline CompiledProgram compile(const Circuit &c) {
    return CompiledProgram(std::make_shared<const detail::Preprocessed>(detail::preprocess(c)));
}

// Same machine for circuits carrying postselected measurements: targets force
// the coin of an anticommuting measurement, become outcome requirements on
// emitted measurements, and raise ProbabilityZeroError when a determined
// outcome contradicts them.
inline CompiledProgram compile_postselected(const Circuit &c) { return compile(c); }

// ---------------------------------------------------------- static form ----

// One +/-1 value of a static program, as base times a product of measurement
// outcomes (q refs) and coin flips (c refs).
struct ReconstructionRef {
    bool is_coin = false;
    uint32_t index = 0;

    bool operator==(const ReconstructionRef &) const = default;
};

struct ReconstructionEntry {
    int base = +1;
    std::vector<ReconstructionRef> refs;

    bool operator==(const ReconstructionEntry &) const = default;
};

// Product of the referenced variables must equal `required`; branches that
// violate a constraint have probability zero under the postselection.
struct ParityConstraint {
    int required = +1;
    std::vector<ReconstructionRef> refs;

    bool operator==(const ParityConstraint &) const = default;
};

// A compiled non-adaptive program: a fixed list of unsigned commuting
// independent Pauli measurements on the t magic lines, plus the classical
// reconstruction of every original record from those outcomes and fresh coin
// flips.  Postselection survives as outcome flags on measurements, fixed
// record values, and parity constraints.
struct StaticProgram {
    size_t t = 0;
    std::vector<PauliOperator> measurements;
    std::vector<std::optional<int>> postselect;
    size_t num_coins = 0;
    size_t forced_coins = 0;
    std::vector<int> sampled_coins;  // drawn once at compile time, not part of the dump
    std::vector<std::pair<uint32_t, ReconstructionEntry>> records;       // declaration order
    std::vector<std::pair<uint32_t, ReconstructionEntry>> line_records;  // output statement order
    std::vector<std::pair<bool, uint32_t>> key;  // (is_line, record id or line)
    std::vector<ParityConstraint> constraints;
    std::vector<PauliOperator> dummy_gens;

    size_t s() const { return measurements.size(); }

    std::string dump() const;
    static StaticProgram parse(const std::string &text);
};

namespace detail {

inline ReconstructionEntry entry_of(const SignExpr &e) {
    ReconstructionEntry out;
    out.base = e.base;
    for (uint32_t k : e.quanta) {
        out.refs.push_back(ReconstructionRef{false, k});
    }
    for (uint32_t k : e.coins) {
        out.refs.push_back(ReconstructionRef{true, k});
    }
    return out;
}

}  // namespace detail

// Compiles a unitary or non-adaptive Clifford circuit into its static
// program.  All coin flips are also sampled up front from the injected RNG
// (sampled_coins), so a fixed seed reproduces the run exactly.
inline StaticProgram compile_nonadaptive(const Circuit &c, Rng &rng) {
    validate(c);
    Classification cls = classify(c);
    if (cls.adaptivity == Adaptivity::kAdaptive) {
        throw ContractError(
            "compile_nonadaptive: circuit is adaptive (parity-controlled gates); use compile()");
    }
    if (!cls.clifford_only) {
        throw ContractError("compile_nonadaptive: non-Clifford gate; rewrite with gadgetize "
                            "first");
    }
    auto pre = std::make_shared<const detail::Preprocessed>(detail::preprocess(c));
    detail::Engine engine(pre, /*static_mode=*/true);
    for (;;) {
        detail::Engine::Surface s = engine.advance();
        if (s == detail::Engine::Surface::kDone) {
            break;
        }
        if (s != detail::Engine::Surface::kClassical) {
            throw ContractError("compile_nonadaptive: engine paused (internal invariant)");
        }
    }

    StaticProgram prog;
    prog.t = pre->t;
    prog.measurements = engine.emitted();
    prog.postselect = engine.emitted_postselect();
    prog.num_coins = engine.coin_count();
    prog.forced_coins = engine.forced_coin_count();
    prog.dummy_gens = pre->reported_dummies;
    for (const detail::EngineRecord &rec : engine.records()) {
        auto entry = detail::entry_of(rec.value);
        if (rec.is_line_record) {
            uint32_t line = 0;
            for (const auto &[id, l] : pre->line_records) {
                if (id == rec.record_id) {
                    line = l;
                }
            }
            prog.line_records.emplace_back(line, std::move(entry));
        } else {
            prog.records.emplace_back(rec.record_id, std::move(entry));
        }
    }
    for (uint32_t id : pre->key_records) {
        bool is_line = false;
        uint32_t name = id;
        for (const auto &[syn, line] : pre->line_records) {
            if (syn == id) {
                is_line = true;
                name = line;
            }
        }
        prog.key.emplace_back(is_line, name);
    }
    for (const auto &cons : engine.constraints()) {
        ParityConstraint pc;
        pc.required = cons.required;
        pc.refs = detail::entry_of(cons.refs).refs;
        prog.constraints.push_back(std::move(pc));
    }
    for (size_t k = 0; k < prog.num_coins; k++) {
        prog.sampled_coins.push_back(coin_pm1(rng));
    }
    return prog;
}

// --------------------------------------------------------------- dumping ---

namespace detail {

inline std::string refs_str(const std::vector<ReconstructionRef> &refs) {
    std::string out;
    for (const ReconstructionRef &r : refs) {
        out += r.is_coin ? " c" : " q";
        out += std::to_string(r.index);
    }
    return out;
}

inline std::string entry_str(const ReconstructionEntry &e) {
    if (e.base == +1 && e.refs.size() == 1) {
        const ReconstructionRef &r = e.refs[0];
        return (r.is_coin ? std::string("random ") : std::string("quantum ")) +
               std::to_string(r.index);
    }
    return std::string("classical ") + (e.base < 0 ? "-1" : "+1") + refs_str(e.refs);
}

}  // namespace detail

inline std::string StaticProgram::dump() const {
    std::ostringstream out;
    out << "pbc t=" << t << " s=" << s() << "\n";
    for (size_t k = 0; k < measurements.size(); k++) {
        if (measurements[k].sign() != +1) {
            throw ContractError("dump: measurement " + std::to_string(k) +
                                " carries a sign (internal invariant)");
        }
        out << measurements[k].str();
        if (postselect[k].has_value()) {
            out << " post " << (*postselect[k] < 0 ? "-1" : "+1");
        }
        out << "\n";
    }
    out << "coins " << num_coins << " forced " << forced_coins << "\n";
    for (const auto &[id, entry] : records) {
        out << "m" << id << " " << detail::entry_str(entry) << "\n";
    }
    for (const auto &[line, entry] : line_records) {
        out << "line" << line << " " << detail::entry_str(entry) << "\n";
    }
    out << "key";
    for (const auto &[is_line, name] : key) {
        out << (is_line ? " line" : " m") << name;
    }
    out << "\n";
    for (const ParityConstraint &cons : constraints) {
        out << "constraint " << (cons.required < 0 ? "-1" : "+1") << detail::refs_str(cons.refs)
            << "\n";
    }
    return out.str();
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string &line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) {
        out.push_back(tok);
    }
    return out;
}

inline uint32_t parse_index(const std::string &tok, const std::string &what) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError("bad " + what + " '" + tok + "' in program dump");
    }
    return static_cast<uint32_t>(std::stoul(tok));
}

inline int parse_sign_token(const std::string &tok) {
    if (tok == "+1") {
        return +1;
    }
    if (tok == "-1") {
        return -1;
    }
    throw ParseError("bad sign token '" + tok + "' in program dump");
}

inline std::vector<ReconstructionRef> parse_refs(const std::vector<std::string> &tok,
                                                 size_t start) {
    std::vector<ReconstructionRef> refs;
    for (size_t i = start; i < tok.size(); i++) {
        if (tok[i].size() < 2 || (tok[i][0] != 'q' && tok[i][0] != 'c')) {
            throw ParseError("bad reference '" + tok[i] + "' in program dump");
        }
        refs.push_back(
            ReconstructionRef{tok[i][0] == 'c', parse_index(tok[i].substr(1), "reference")});
    }
    return refs;
}

inline ReconstructionEntry parse_entry(const std::vector<std::string> &tok, size_t start) {
    if (start >= tok.size()) {
        throw ParseError("truncated reconstruction entry in program dump");
    }
    ReconstructionEntry entry;
    if (tok[start] == "quantum" || tok[start] == "random") {
        if (tok.size() != start + 2) {
            throw ParseError("malformed reconstruction entry in program dump");
        }
        entry.refs.push_back(ReconstructionRef{tok[start] == "random",
                                               parse_index(tok[start + 1], "reference")});
        return entry;
    }
    if (tok[start] != "classical") {
        throw ParseError("bad reconstruction kind '" + tok[start] + "' in program dump");
    }
    if (tok.size() < start + 2) {
        throw ParseError("truncated classical entry in program dump");
    }
    entry.base = parse_sign_token(tok[start + 1]);
    entry.refs = parse_refs(tok, start + 2);
    return entry;
}

}  // namespace detail

inline StaticProgram StaticProgram::parse(const std::string &text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty program dump");
    }
    auto head = detail::split_ws(line);
    if (head.size() != 3 || head[0] != "pbc" || head[1].rfind("t=", 0) != 0 ||
        head[2].rfind("s=", 0) != 0) {
        throw ParseError("bad program dump header '" + line + "'");
    }
    StaticProgram prog;
    prog.t = detail::parse_index(head[1].substr(2), "t");
    const size_t s = detail::parse_index(head[2].substr(2), "s");

    for (size_t k = 0; k < s; k++) {
        if (!std::getline(in, line)) {
            throw ParseError("program dump ends inside the measurement list");
        }
        auto tok = detail::split_ws(line);
        if (tok.empty() || (tok.size() != 1 && tok.size() != 3)) {
            throw ParseError("bad measurement line '" + line + "'");
        }
        PauliOperator p = PauliOperator::parse(tok[0]);
        if (p.num_qubits() != prog.t || p.sign() != +1) {
            throw ParseError("measurement '" + tok[0] + "' does not fit t=" +
                             std::to_string(prog.t));
        }
        prog.measurements.push_back(std::move(p));
        if (tok.size() == 3) {
            if (tok[1] != "post") {
                throw ParseError("bad measurement suffix in '" + line + "'");
            }
            prog.postselect.emplace_back(detail::parse_sign_token(tok[2]));
        } else {
            prog.postselect.emplace_back(std::nullopt);
        }
    }

    if (!std::getline(in, line)) {
        throw ParseError("program dump missing coins line");
    }
    auto coins = detail::split_ws(line);
    if (coins.size() != 4 || coins[0] != "coins" || coins[2] != "forced") {
        throw ParseError("bad coins line '" + line + "'");
    }
    prog.num_coins = detail::parse_index(coins[1], "coin count");
    prog.forced_coins = detail::parse_index(coins[3], "forced coin count");

    bool saw_key = false;
    while (std::getline(in, line)) {
        auto tok = detail::split_ws(line);
        if (tok.empty()) {
            continue;
        }
        if (tok[0] == "key") {
            for (size_t i = 1; i < tok.size(); i++) {
                if (tok[i].rfind("line", 0) == 0) {
                    prog.key.emplace_back(true, detail::parse_index(tok[i].substr(4), "key line"));
                } else if (tok[i][0] == 'm') {
                    prog.key.emplace_back(false,
                                          detail::parse_index(tok[i].substr(1), "key record"));
                } else {
                    throw ParseError("bad key token '" + tok[i] + "'");
                }
            }
            saw_key = true;
        } else if (tok[0] == "constraint") {
            if (tok.size() < 2) {
                throw ParseError("truncated constraint line '" + line + "'");
            }
            ParityConstraint cons;
            cons.required = detail::parse_sign_token(tok[1]);
            cons.refs = detail::parse_refs(tok, 2);
            prog.constraints.push_back(std::move(cons));
        } else if (tok[0].rfind("line", 0) == 0) {
            prog.line_records.emplace_back(detail::parse_index(tok[0].substr(4), "line"),
                                           detail::parse_entry(tok, 1));
        } else if (tok[0][0] == 'm') {
            prog.records.emplace_back(detail::parse_index(tok[0].substr(1), "record id"),
                                      detail::parse_entry(tok, 1));
        } else {
            throw ParseError("bad program dump line '" + line + "'");
        }
    }
    if (!saw_key) {
        throw ParseError("program dump missing key line");
    }
    auto check_refs = [&](const std::vector<ReconstructionRef> &refs) {
        for (const ReconstructionRef &r : refs) {
            if (r.index >= (r.is_coin ? prog.num_coins : prog.measurements.size())) {
                throw ParseError("reconstruction reference out of range in program dump");
            }
        }
    };
    for (const auto &[id, entry] : prog.records) {
        check_refs(entry.refs);
    }
    for (const auto &[line, entry] : prog.line_records) {
        check_refs(entry.refs);
    }
    for (const ParityConstraint &cons : prog.constraints) {
        check_refs(cons.refs);
    }
    return prog;
}

// -------------------------------------------------------------- run_with ---

struct RunSample {
    std::string key;
    std::map<uint32_t, int> outcomes;
    size_t backend_calls = 0;
};

// Drives a compiled program against a measurement backend.  The backend is
// called at most t times, once per genuine Pauli measurement, and must return
// +/-1; coin flips come from the injected RNG.  A backend outcome violating a
// postselection flag raises PostselectionMissError (the caller may re-run).
template <typename Backend>
RunSample run_with(CompiledProgram prog, Backend &&backend, Rng &rng) {
    RunSample sample;
    for (;;) {
        CompiledProgram::NextAction action = prog.next();
        if (std::holds_alternative<CompiledProgram::Done>(action)) {
            break;
        }
        if (auto *m = std::get_if<CompiledProgram::MeasurePauli>(&action)) {
            sample.backend_calls++;
            if (sample.backend_calls > prog.t()) {
                throw ContractError("run_with: backend called more than t times (internal)");
            }
            prog.supply(backend(m->op, m->postselect));
        } else if (std::holds_alternative<CompiledProgram::DrawRandom>(action)) {
            prog.supply(coin_pm1(rng));
        }
        // EmitClassical needs no acknowledgement.
    }
    sample.key = prog.sample_key();
    sample.outcomes = prog.outcomes();
    return sample;
}

// ------------------------------------------------- hybrid exact evaluator --

namespace detail {

// |A>^t on the magic register, most-significant bit = magic line 0.
inline StateVector magic_register_state(size_t t) {
    StateVector v(size_t{1} << t);
    const double amp = std::pow(0.5, static_cast<double>(t) / 2.0);
    const Amplitude phase = std::polar(1.0, std::numbers::pi_v<double> / 4.0);
    for (size_t b = 0; b < v.size(); b++) {
        Amplitude a = amp;
        for (int k = std::popcount(b); k-- > 0;) {
            a *= phase;
        }
        v[b] = a;
    }
    return v;
}

struct HybridRun {
    const DenseBudget &budget;
    std::map<std::string, double> probs;
    double pruned_mass = 0.0;
    uint64_t branches = 0;

    void count_branch() {
        if (++branches > budget.max_branches) {
            throw BudgetError("hybrid evaluation exceeds branch budget");
        }
    }

    void go(CompiledProgram prog, StateVector state, double weight) {
        for (;;) {
            CompiledProgram::NextAction action;
            try {
                action = prog.next();
            } catch (const PostselectionMissError &) {
                return;  // conditioned away; weight is lost mass
            }
            if (std::holds_alternative<CompiledProgram::Done>(action)) {
                probs[prog.sample_key()] += weight * prog.preselection_factor();
                return;
            }
            if (std::holds_alternative<CompiledProgram::DrawRandom>(action)) {
                count_branch();
                CompiledProgram other = prog;
                other.supply(+1);
                go(std::move(other), state, weight / 2);
                prog.supply(-1);
                weight /= 2;
                continue;
            }
            if (auto *m = std::get_if<CompiledProgram::MeasurePauli>(&action)) {
                count_branch();
                StateVector moved = apply_pauli(m->op, state);
                StateVector plus(state.size()), minus(state.size());
                for (size_t b = 0; b < state.size(); b++) {
                    plus[b] = (state[b] + moved[b]) / 2.0;
                    minus[b] = (state[b] - moved[b]) / 2.0;
                }
                const double p_plus = state_norm2(plus);
                const double p_minus = state_norm2(minus);
                auto descend = [&](int v, StateVector branch, double p, bool reuse) {
                    if (m->postselect.has_value() && v != *m->postselect) {
                        return;  // conditioned away
                    }
                    if (p < budget.prune_threshold) {
                        pruned_mass += weight * p;
                        return;
                    }
                    const double scale = 1.0 / std::sqrt(p);
                    for (Amplitude &a : branch) {
                        a *= scale;
                    }
                    if (reuse) {
                        prog.supply(v);
                        state = std::move(branch);
                        weight *= p;
                    } else {
                        CompiledProgram other = prog;
                        other.supply(v);
                        go(std::move(other), std::move(branch), weight * p);
                    }
                };
                // The +1 branch recurses on a copy; the -1 branch reuses this
                // frame.  Skipped branches end the frame.
                bool minus_taken = !m->postselect.has_value() || *m->postselect == -1;
                bool plus_taken = !m->postselect.has_value() || *m->postselect == +1;
                bool plus_viable = plus_taken && p_plus >= budget.prune_threshold;
                bool minus_viable = minus_taken && p_minus >= budget.prune_threshold;
                if (plus_viable && minus_viable) {
                    descend(+1, plus, p_plus, false);
                    descend(-1, std::move(minus), p_minus, true);
                    continue;
                }
                if (plus_viable) {
                    descend(+1, std::move(plus), p_plus, true);
                    continue;
                }
                if (minus_viable) {
                    descend(-1, std::move(minus), p_minus, true);
                    continue;
                }
                if (plus_taken) {
                    pruned_mass += weight * p_plus;
                }
                if (minus_taken) {
                    pruned_mass += weight * p_minus;
                }
                return;
            }
            // EmitClassical: keep going.
        }
    }
};

}  // namespace detail

// Exact output distribution of a Clifford circuit computed the compiled way:
// classical rewriting for everything on the stabilizer register, dense branch
// enumeration only on the t magic lines plus explicit coin flips.  Matches
// exact_distribution() on the same circuit.
inline Distribution exact_distribution_hybrid(const Circuit &c, const DenseBudget &budget = {}) {
    CompiledProgram prog = compile(c);
    if (prog.t() > budget.max_lines) {
        throw BudgetError("hybrid evaluation needs " + std::to_string(prog.t()) +
                          " magic lines, budget allows " + std::to_string(budget.max_lines));
    }
    detail::HybridRun run{budget, {}, 0.0, 0};
    run.go(prog, detail::magic_register_state(prog.t()), 1.0);
    Distribution out;
    out.pruned_mass = run.pruned_mass;
    double total = 0;
    for (const auto &[key, p] : run.probs) {
        total += p;
    }
    if (run.probs.empty() || total < 1e-300) {
        throw ProbabilityZeroError("all branches are conditioned away; the postselection has "
                                   "probability zero");
    }
    out.preselection_weight = total;
    for (const auto &[key, p] : run.probs) {
        out.probs[key] = p / total;
    }
    return out;
}

}  // namespace pbc
