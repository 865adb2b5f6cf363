#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "pbc/circuit.hpp"
#include "pbc/errors.hpp"

namespace pbc {

inline uint32_t next_record_id(const Circuit &c) {
    uint32_t next = 0;
    for (const Measure &m : c.measurements()) {
        next = std::max(next, m.record_id + 1);
    }
    return next;
}

// CS^w up to the obvious identifications: CS^2 = CZ, CS^3 = CS†.
inline std::vector<Gate> cs_power_gates(int w, uint32_t a, uint32_t b) {
    switch (((w % 4) + 4) % 4) {
        case 0:
            return {};
        case 1:
            return {Gate{GateKind::kCs, a, b, {}}};
        case 2:
            return {Gate{GateKind::kCz, a, b, {}}};
        default:
            return {Gate{GateKind::kCsdg, a, b, {}}};
    }
}

// Replaces each CS with the word [T a, T b, CX a b, Tdg b, CX a b] (and CS†
// with the exponent-negated word).  Both words reproduce diag(1,1,1,+/-i)
// with no leftover global phase; tests pin this against the dense matrix.
inline Circuit expand_cs(const Circuit &c) {
    Circuit out = c;
    out.steps.clear();
    for (const Step &s : c.steps) {
        if (!is_gate(s) ||
            (as_gate(s).kind != GateKind::kCs && as_gate(s).kind != GateKind::kCsdg)) {
            out.steps.push_back(s);
            continue;
        }
        const Gate &g = as_gate(s);
        bool dagger = g.kind == GateKind::kCsdg;
        GateKind t = dagger ? GateKind::kTdg : GateKind::kT;
        GateKind tdg = dagger ? GateKind::kT : GateKind::kTdg;
        for (const Gate &w : {Gate{t, g.q0, 0, g.control}, Gate{t, g.q1, 0, g.control},
                              Gate{GateKind::kCx, g.q0, g.q1, g.control},
                              Gate{tdg, g.q1, 0, g.control},
                              Gate{GateKind::kCx, g.q0, g.q1, g.control}}) {
            out.steps.push_back(w);
        }
    }
    validate(out);
    return out;
}

namespace detail {

// Shared body of the plain and postselected gadgetizers.  Every T/Tdg turns
// into: fresh ancilla a prepared in |A>, CX(line, a), Z-measurement of a.
// The measurement branch with outcome +1 applies T to the line and the -1
// branch applies Tdg, so the plain form corrects the wrong branch (S fixes
// Tdg into T since S*Tdg = T up to phase; Z*S = S^3 fixes T into Tdg) and
// the postselected form forces the branch that needs no correction.
inline Circuit gadgetize_impl(const Circuit &input, bool postselected) {
    Circuit c = expand_cs(input);
    size_t t_count = 0;
    for (const Step &s : c.steps) {
        if (is_gate(s) &&
            (as_gate(s).kind == GateKind::kT || as_gate(s).kind == GateKind::kTdg)) {
            t_count++;
        }
    }
    Circuit out = c;
    out.steps.clear();
    out.num_lines = c.num_lines + static_cast<uint32_t>(t_count);
    out.input.resize(out.num_lines, InputKind::kMagicA);
    uint32_t next_line = c.num_lines;
    uint32_t next_rec = next_record_id(c);
    for (const Step &s : c.steps) {
        if (!is_gate(s) ||
            (as_gate(s).kind != GateKind::kT && as_gate(s).kind != GateKind::kTdg)) {
            out.steps.push_back(s);
            continue;
        }
        const Gate &g = as_gate(s);
        if (g.control.has_value()) {
            throw ContractError("gadgetize: a parity-controlled T gate has no gadget form");
        }
        bool dagger = g.kind == GateKind::kTdg;
        uint32_t ancilla = next_line++;
        uint32_t rec = next_rec++;
        out.steps.push_back(Gate{GateKind::kCx, g.q0, ancilla, {}});
        if (postselected) {
            out.steps.push_back(Measure{ancilla, rec, dagger ? -1 : +1});
            continue;
        }
        out.steps.push_back(Measure{ancilla, rec, {}});
        if (dagger) {
            // S^3 = Z*S, applied when the outcome was +1.
            out.steps.push_back(Gate{GateKind::kZ, g.q0, 0, ParityControl{{rec}, true}});
            out.steps.push_back(Gate{GateKind::kS, g.q0, 0, ParityControl{{rec}, true}});
        } else {
            out.steps.push_back(Gate{GateKind::kS, g.q0, 0, ParityControl{{rec}, false}});
        }
    }
    validate(out);
    return out;
}

}  // namespace detail

inline Circuit gadgetize(const Circuit &c) { return detail::gadgetize_impl(c, false); }

inline Circuit gadgetize_postselected(const Circuit &c) {
    return detail::gadgetize_impl(c, true);
}

// Removes the adaptive gadget corrections and promotes the gadget records to
// declared output bits (the correction string), after the ordinary output
// records.  Only correction-shaped controls (a single-record control on an S
// or Z gate) are accepted.
inline Circuit strip_corrections(const Circuit &c) {
    Circuit out = c;
    out.steps.clear();
    std::vector<uint32_t> correction_records;
    for (const Step &s : c.steps) {
        if (is_gate(s) && as_gate(s).control.has_value()) {
            const Gate &g = as_gate(s);
            if ((g.kind != GateKind::kS && g.kind != GateKind::kZ) ||
                g.control->records.size() != 1) {
                throw ContractError("strip_corrections: control is not a gadget correction");
            }
            correction_records.push_back(g.control->records[0]);
            continue;
        }
        out.steps.push_back(s);
    }
    std::vector<uint32_t> tau;
    std::vector<uint32_t> plain;
    for (const Measure &m : out.measurements()) {
        bool referenced = std::find(correction_records.begin(), correction_records.end(),
                                    m.record_id) != correction_records.end();
        if (referenced) {
            tau.push_back(m.record_id);
        } else if (!m.postselect.has_value()) {
            plain.push_back(m.record_id);
        }
    }
    std::vector<uint32_t> bits = c.output_bits.empty() ? plain : c.output_bits;
    for (uint32_t id : tau) {
        if (std::find(bits.begin(), bits.end(), id) == bits.end()) {
            bits.push_back(id);
        }
    }
    out.output_bits = std::move(bits);
    validate(out);
    return out;
}

// Converts |A> lines into conditional |0> lines by prepending, per line, a
// T-gadget postselected to -1 (a Tdg, taking |A> to |+>) followed by H.
inline Circuit a_to_zero_prefix(const Circuit &c, const std::vector<uint32_t> &lines) {
    for (size_t i = 0; i < lines.size(); i++) {
        if (lines[i] >= c.num_lines) {
            throw ContractError("a_to_zero_prefix: line out of range");
        }
        if (c.input[lines[i]] != InputKind::kMagicA) {
            throw ContractError("a_to_zero_prefix: line " + std::to_string(lines[i]) +
                                " does not have a magic input");
        }
        if (std::count(lines.begin(), lines.end(), lines[i]) > 1) {
            throw ContractError("a_to_zero_prefix: duplicate line");
        }
    }
    Circuit out = c;
    out.steps.clear();
    out.num_lines = c.num_lines + static_cast<uint32_t>(lines.size());
    out.input.resize(out.num_lines, InputKind::kMagicA);
    uint32_t next_line = c.num_lines;
    uint32_t next_rec = next_record_id(c);
    for (uint32_t line : lines) {
        uint32_t ancilla = next_line++;
        out.steps.push_back(Gate{GateKind::kCx, line, ancilla, {}});
        out.steps.push_back(Measure{ancilla, next_rec++, -1});
        out.steps.push_back(Gate{GateKind::kH, line, 0, {}});
    }
    out.steps.insert(out.steps.end(), c.steps.begin(), c.steps.end());
    validate(out);
    return out;
}

}  // namespace pbc
