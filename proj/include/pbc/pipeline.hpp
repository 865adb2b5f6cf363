#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pbc/circuit.hpp"
#include "pbc/compile.hpp"
#include "pbc/dense.hpp"
#include "pbc/errors.hpp"
#include "pbc/gadgets.hpp"
#include "pbc/pauli.hpp"
#include "pbc/rng.hpp"
#include "pbc/synth.hpp"

namespace pbc {

// ------------------------------------------------- gate word conversion ----

inline GateKind to_gate_kind(CliffordGate g) {
    switch (g) {
        case CliffordGate::kH:
            return GateKind::kH;
        case CliffordGate::kS:
            return GateKind::kS;
        case CliffordGate::kSdg:
            return GateKind::kSdg;
        case CliffordGate::kCx:
            return GateKind::kCx;
    }
    throw ContractError("to_gate_kind: bad gate");
}

inline Gate to_gate(const LoweredGate &lg) {
    return Gate{to_gate_kind(lg.g), lg.q0, lg.g == CliffordGate::kCx ? lg.q1 : 0, {}};
}

inline std::vector<Gate> to_gates(const std::vector<LoweredGate> &word) {
    std::vector<Gate> out;
    out.reserve(word.size());
    for (const LoweredGate &lg : word) {
        out.push_back(to_gate(lg));
    }
    return out;
}

// ------------------------------------------------------------- emit_cm -----

// Re-emits a non-adaptive compiled program as a Clifford-plus-magic circuit:
// t lines all fed |A>, one unitary Clifford gate word, then a terminal Z
// measurement on line k for measurement slot k (record id = slot index),
// postselection flags preserved.  The circuit's exact output distribution
// over the non-flagged records equals the program's joint Pauli-measurement
// distribution on the magic register; replay_distribution() below turns that
// into the original circuit's record/line distribution.
inline Circuit emit_cm(const StaticProgram &prog) {
    Circuit c;
    c.num_lines = static_cast<uint32_t>(prog.t);
    c.input.assign(prog.t, InputKind::kMagicA);
    if (!prog.measurements.empty()) {
        for (const LoweredGate &lg : synthesize(prog.measurements, prog.t)) {
            c.steps.push_back(to_gate(lg));
        }
        for (size_t k = 0; k < prog.measurements.size(); k++) {
            c.steps.push_back(Measure{static_cast<uint32_t>(k), static_cast<uint32_t>(k),
                                      prog.postselect[k]});
        }
    }
    validate(c);
    return c;
}

// -------------------------------------------------- replay_distribution ----

// Lifts a distribution over the program's quantum measurement outcomes (keyed
// by the non-flagged slots in slot order, exactly the key layout of
// exact_distribution(emit_cm(prog))) back to the original circuit's
// distribution over record and output-line bits: flagged slots take their
// forced value, coins are enumerated uniformly, parity constraints filter
// branches, and every key entry is reconstructed as base * product of
// referenced outcomes.  The result is normalized; its preselection weight is
// quantum.preselection_weight times the kept branch fraction times the (1/2)
// factor per postselection-forced coin.
inline Distribution replay_distribution(const StaticProgram &prog, const Distribution &quantum) {
    if (prog.num_coins > 20) {
        throw BudgetError("replay: " + std::to_string(prog.num_coins) +
                          " coins exceed the enumeration budget (20)");
    }
    std::vector<size_t> free_slots;
    for (size_t k = 0; k < prog.measurements.size(); k++) {
        if (!prog.postselect[k].has_value()) {
            free_slots.push_back(k);
        }
    }
    std::map<uint32_t, const ReconstructionEntry *> record_entry, line_entry;
    for (const auto &[id, entry] : prog.records) {
        record_entry[id] = &entry;
    }
    for (const auto &[line, entry] : prog.line_records) {
        line_entry[line] = &entry;
    }
    for (const auto &[is_line, id] : prog.key) {
        const auto &table = is_line ? line_entry : record_entry;
        if (table.find(id) == table.end()) {
            throw ContractError("replay: key entry has no reconstruction");
        }
    }

    std::vector<int> slot(prog.measurements.size(), +1);
    std::vector<int> coin(prog.num_coins, +1);
    const auto ref_value = [&](const ReconstructionRef &r) {
        return r.is_coin ? coin.at(r.index) : slot.at(r.index);
    };
    const auto entry_value = [&](const ReconstructionEntry &e) {
        int v = e.base;
        for (const ReconstructionRef &r : e.refs) {
            v *= ref_value(r);
        }
        return v;
    };

    Distribution out;
    out.pruned_mass = quantum.pruned_mass;
    const double coin_weight = std::pow(0.5, static_cast<double>(prog.num_coins));
    double kept = 0.0;
    std::string key(prog.key.size(), '0');
    for (const auto &[qkey, p] : quantum.probs) {
        if (qkey.size() != free_slots.size()) {
            throw ContractError("replay: quantum key width " + std::to_string(qkey.size()) +
                                " does not match the " + std::to_string(free_slots.size()) +
                                " non-flagged measurements");
        }
        for (size_t k = 0; k < prog.measurements.size(); k++) {
            slot[k] = prog.postselect[k].value_or(+1);
        }
        for (size_t i = 0; i < free_slots.size(); i++) {
            slot[free_slots[i]] = qkey[i] == '0' ? +1 : -1;
        }
        const uint32_t coin_patterns = uint32_t{1} << prog.num_coins;
        for (uint32_t mask = 0; mask < coin_patterns; mask++) {
            for (size_t k = 0; k < prog.num_coins; k++) {
                coin[k] = (mask >> k) & 1 ? -1 : +1;
            }
            bool ok = true;
            for (const ParityConstraint &cons : prog.constraints) {
                int v = +1;
                for (const ReconstructionRef &r : cons.refs) {
                    v *= ref_value(r);
                }
                if (v != cons.required) {
                    ok = false;
                    break;
                }
            }
            if (!ok) {
                continue;
            }
            for (size_t i = 0; i < prog.key.size(); i++) {
                const auto &[is_line, id] = prog.key[i];
                const ReconstructionEntry &e = is_line ? *line_entry[id] : *record_entry[id];
                key[i] = entry_value(e) > 0 ? '0' : '1';
            }
            const double w = p * coin_weight;
            kept += w;
            out.probs[key] += w;
        }
    }
    if (kept < 1e-300) {
        throw ProbabilityZeroError("replay: every branch violates a parity constraint");
    }
    for (auto &[k, v] : out.probs) {
        v /= kept;
    }
    out.preselection_weight = quantum.preselection_weight * kept *
                              std::pow(0.5, static_cast<double>(prog.forced_coins));
    return out;
}

// ------------------------------------------------------- adaptive driver ---

// Realizes a compiled program as an adaptive Clifford circuit on the t magic
// lines: every pending Pauli measurement P is handed out as a Block of
// Clifford gates followed by a Z measurement on the fixed line 0.  Block i
// carries W_i where W_1 = U_1 and W_{i+1} = U_i^dagger then U_{i+1}
// (synthesize gives U_i with U_i^dagger Z_0 U_i = P_i), so the cumulative
// gate word after i blocks is always U_i and measuring line 0 there measures
// exactly P_i on the register state.  Coin draws surface as Flip actions so
// callers can either randomize or enumerate branches exactly; classical
// records surface as Emit.  Copies are independent.
class AdaptiveDriver {
  public:
    struct Block {
        std::vector<Gate> gates;  // apply in order, then measure Z on line 0
        uint32_t record_id = 0;
        PauliOperator op;  // the Pauli this block realizes (unsigned, width t)
        std::optional<int> postselect;
    };
    struct Emit {
        uint32_t record_id = 0;
        int outcome = +1;
    };
    struct Flip {
        uint32_t record_id = 0;
    };
    struct Done {};
    using Action = std::variant<Block, Emit, Flip, Done>;

    explicit AdaptiveDriver(CompiledProgram prog) : prog_(std::move(prog)) {}

    size_t t() const { return prog_.t(); }
    bool done() const { return prog_.done(); }
    const CompiledProgram &program() const { return prog_; }
    size_t blocks_emitted() const { return blocks_; }

    // Blocks and Flips are sticky until supply(); Emit advances immediately.
    Action next() {
        if (pending_.has_value()) {
            return *pending_;
        }
        CompiledProgram::NextAction a = prog_.next();
        if (std::holds_alternative<CompiledProgram::Done>(a)) {
            return Done{};
        }
        if (const auto *e = std::get_if<CompiledProgram::EmitClassical>(&a)) {
            return Emit{e->record_id, e->outcome};
        }
        if (const auto *r = std::get_if<CompiledProgram::DrawRandom>(&a)) {
            pending_ = Flip{r->record_id};
            return *pending_;
        }
        const auto &m = std::get<CompiledProgram::MeasurePauli>(a);
        std::vector<LoweredGate> word = synthesize({m.op}, prog_.t());
        std::vector<LoweredGate> full = inverted_gate_word(prev_word_);
        full.insert(full.end(), word.begin(), word.end());
        prev_word_ = std::move(word);
        blocks_++;
        pending_ = Block{to_gates(full), m.record_id, m.op, m.postselect};
        return *pending_;
    }

    // Outcome for the pending Block or Flip.  A flag-violating outcome throws
    // PostselectionMissError and leaves the driver unchanged.
    void supply(int outcome) {
        if (!pending_.has_value()) {
            throw ContractError("supply: no pending action");
        }
        prog_.supply(outcome);
        pending_.reset();
    }

  private:
    CompiledProgram prog_;
    std::vector<LoweredGate> prev_word_;  // word of U_i after block i was handed out
    std::optional<Action> pending_;
    size_t blocks_ = 0;
};

inline AdaptiveDriver emit_adaptive(CompiledProgram prog) {
    return AdaptiveDriver(std::move(prog));
}

// ----------------------------------------------------- compress pipeline ---

enum class CompressMode : uint8_t {
    kPlain,                 // magic gadgets with adaptive corrections; interactive program
    kPostselected,          // postselected gadgets; |0> lines stay classical prefix
    kPostselectedAllMagic,  // postselected gadgets; |0> lines re-fed |A> via conversion gadgets
};

inline const char *compress_mode_name(CompressMode m) {
    switch (m) {
        case CompressMode::kPlain:
            return "plain";
        case CompressMode::kPostselected:
            return "postselected";
        case CompressMode::kPostselectedAllMagic:
            return "postselected-all-magic";
    }
    throw ContractError("compress_mode_name: bad mode");
}

struct CompressReport {
    CompressMode mode = CompressMode::kPlain;
    uint32_t original_lines = 0;
    size_t original_gate_count = 0;
    size_t gadget_count = 0;  // magic inputs added when rewriting non-Clifford gates
    size_t t = 0;             // compressed register size (magic inputs after rewriting)
    size_t s = 0;             // measurement count (plain mode: on the reference branch)
    size_t compressed_gate_count = 0;  // plain: gates over the reference branch's blocks
    size_t coin_count = 0;             // classically forwarded record count
    size_t forced_coin_count = 0;      // coins pinned by postselection

    std::optional<CompiledProgram> interactive;  // plain mode
    std::optional<StaticProgram> program;        // postselected modes
    std::optional<Circuit> cm_circuit;           // postselected modes
};

namespace detail {

// Depth-first search for one consistent outcome assignment of an interactive
// program, preferring +1 (and always the flag value on flagged measurements).
// Returns the supplied values in order, or nullopt when every assignment in
// this subtree violates a postselection.
inline std::optional<std::vector<int>> consistent_branch(CompiledProgram prog,
                                                         std::vector<int> vals, size_t &budget) {
    for (;;) {
        CompiledProgram::NextAction a = CompiledProgram::Done{};
        try {
            a = prog.next();
        } catch (const PostselectionMissError &) {
            return std::nullopt;
        }
        if (std::holds_alternative<CompiledProgram::Done>(a)) {
            return vals;
        }
        if (std::holds_alternative<CompiledProgram::EmitClassical>(a)) {
            continue;
        }
        std::optional<int> flag;
        if (const auto *m = std::get_if<CompiledProgram::MeasurePauli>(&a)) {
            flag = m->postselect;
        }
        std::vector<int> tries = flag.has_value() ? std::vector<int>{*flag}
                                                  : std::vector<int>{+1, -1};
        for (int v : tries) {
            if (budget == 0) {
                throw BudgetError("compress: branch search budget exhausted");
            }
            budget--;
            CompiledProgram child = prog;
            child.supply(v);
            std::vector<int> child_vals = vals;
            child_vals.push_back(v);
            if (auto r = consistent_branch(std::move(child), std::move(child_vals), budget)) {
                return r;
            }
        }
        return std::nullopt;
    }
}

}  // namespace detail

// Rewrites a Clifford+T circuit into magic-gadget form and compresses it onto
// the magic register.  kPlain keeps the adaptive Pauli corrections and
// reports the interactive compiled program (s and the compressed gate count
// are measured over one consistent reference branch of the adaptive driver,
// preferring +1 outcomes).  The postselected modes force every gadget
// measurement, compile to a fixed measurement list, and report both the
// static program and its re-emitted circuit: kPostselected keeps |0> lines
// as classical preprocessing, so the circuit has one line per magic input,
// while kPostselectedAllMagic first converts every |0> line to a conditional
// |0> prepared from |A>, producing a postselected circuit on original + magic
// + conversion lines, all fed |A>.
inline CompressReport compress_pipeline(const Circuit &c, CompressMode mode, Rng &rng) {
    validate(c);
    CompressReport report;
    report.mode = mode;
    report.original_lines = c.num_lines;
    for (const Step &s : c.steps) {
        report.original_gate_count += is_gate(s);
    }

    if (mode == CompressMode::kPlain) {
        Circuit g = gadgetize(c);
        report.gadget_count = g.magic_count() - c.magic_count();
        CompiledProgram prog = compile(g);
        report.t = prog.t();
        report.coin_count = prog.coin_count();
        report.forced_coin_count = prog.forced_coin_count();
        report.interactive = prog;

        size_t budget = 1 << 14;
        std::optional<std::vector<int>> vals =
            detail::consistent_branch(prog, {}, budget);
        if (!vals.has_value()) {
            throw ProbabilityZeroError("compress: every branch violates a postselection");
        }
        AdaptiveDriver driver = emit_adaptive(std::move(prog));
        size_t supplied = 0;
        for (;;) {
            AdaptiveDriver::Action a = driver.next();
            if (std::holds_alternative<AdaptiveDriver::Done>(a)) {
                break;
            }
            if (std::holds_alternative<AdaptiveDriver::Emit>(a)) {
                continue;
            }
            if (const auto *b = std::get_if<AdaptiveDriver::Block>(&a)) {
                report.compressed_gate_count += b->gates.size();
            }
            driver.supply(vals->at(supplied++));
        }
        report.s = driver.blocks_emitted();
        return report;
    }

    Circuit g = gadgetize_postselected(c);
    report.gadget_count = g.magic_count() - c.magic_count();
    if (mode == CompressMode::kPostselectedAllMagic) {
        // Replace the stabilizer-block declaration with an explicit
        // preparation word before the |0> lines stop being |0> inputs.
        if (!g.stabilizer_block.empty()) {
            std::vector<Gate> prep =
                to_gates(inverted_gate_word(synthesize(g.stabilizer_block,
                                                       g.stabilizer_block.size())));
            g.steps.insert(g.steps.begin(), prep.begin(), prep.end());
            g.stabilizer_block.clear();
        }
        std::vector<uint32_t> zeros;
        for (uint32_t q = 0; q < g.num_lines; q++) {
            if (g.input[q] == InputKind::kZero) {
                zeros.push_back(q);
                g.input[q] = InputKind::kMagicA;
            }
        }
        g = a_to_zero_prefix(g, zeros);
    }
    StaticProgram prog = compile_nonadaptive(g, rng);
    report.t = prog.t;
    report.s = prog.s();
    report.coin_count = prog.num_coins;
    report.forced_coin_count = prog.forced_coins;
    Circuit cm = emit_cm(prog);
    for (const Step &s : cm.steps) {
        report.compressed_gate_count += is_gate(s);
    }
    report.program = std::move(prog);
    report.cm_circuit = std::move(cm);
    return report;
}

}  // namespace pbc
