#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pbc/errors.hpp"
#include "pbc/pauli.hpp"
#include "pbc/tableau.hpp"

namespace pbc {

// ------------------------------------------------------------- gates -------

enum class GateKind : uint8_t {
    kH,
    kS,
    kSdg,
    kX,
    kY,
    kZ,
    kCx,
    kCz,
    kT,
    kTdg,
    kSqrtX,
    kSqrtXdg,
    kSqrtY,
    kSqrtYdg,
    kCs,
    kCsdg,
};

inline const char *gate_name(GateKind k) {
    switch (k) {
        case GateKind::kH:
            return "H";
        case GateKind::kS:
            return "S";
        case GateKind::kSdg:
            return "Sdg";
        case GateKind::kX:
            return "X";
        case GateKind::kY:
            return "Y";
        case GateKind::kZ:
            return "Z";
        case GateKind::kCx:
            return "CX";
        case GateKind::kCz:
            return "CZ";
        case GateKind::kT:
            return "T";
        case GateKind::kTdg:
            return "Tdg";
        case GateKind::kSqrtX:
            return "SqrtX";
        case GateKind::kSqrtXdg:
            return "SqrtXdg";
        case GateKind::kSqrtY:
            return "SqrtY";
        case GateKind::kSqrtYdg:
            return "SqrtYdg";
        case GateKind::kCs:
            return "CS";
        case GateKind::kCsdg:
            return "CSdg";
    }
    throw ContractError("gate_name: bad kind");
}

inline std::optional<GateKind> parse_gate_name(const std::string &name) {
    static const GateKind all[] = {
        GateKind::kH,     GateKind::kS,        GateKind::kSdg,   GateKind::kX,
        GateKind::kY,     GateKind::kZ,        GateKind::kCx,    GateKind::kCz,
        GateKind::kT,     GateKind::kTdg,      GateKind::kSqrtX, GateKind::kSqrtXdg,
        GateKind::kSqrtY, GateKind::kSqrtYdg,  GateKind::kCs,    GateKind::kCsdg,
    };
    for (GateKind k : all) {
        if (name == gate_name(k)) {
            return k;
        }
    }
    return std::nullopt;
}

inline int gate_arity(GateKind k) {
    switch (k) {
        case GateKind::kCx:
        case GateKind::kCz:
        case GateKind::kCs:
        case GateKind::kCsdg:
            return 2;
        default:
            return 1;
    }
}

inline bool gate_is_clifford(GateKind k) {
    switch (k) {
        case GateKind::kT:
        case GateKind::kTdg:
        case GateKind::kCs:
        case GateKind::kCsdg:
            return false;
        default:
            return true;
    }
}

inline GateKind gate_inverse(GateKind k) {
    switch (k) {
        case GateKind::kS:
            return GateKind::kSdg;
        case GateKind::kSdg:
            return GateKind::kS;
        case GateKind::kT:
            return GateKind::kTdg;
        case GateKind::kTdg:
            return GateKind::kT;
        case GateKind::kSqrtX:
            return GateKind::kSqrtXdg;
        case GateKind::kSqrtXdg:
            return GateKind::kSqrtX;
        case GateKind::kSqrtY:
            return GateKind::kSqrtYdg;
        case GateKind::kSqrtYdg:
            return GateKind::kSqrtY;
        case GateKind::kCs:
            return GateKind::kCsdg;
        case GateKind::kCsdg:
            return GateKind::kCs;
        default:
            return k;  // H, X, Y, Z, CX, CZ are involutions
    }
}

// -------------------------------------------------------------- steps ------

// Gate fires iff XOR of the referenced outcome bits (+1 -> 0, -1 -> 1),
// XORed with `invert`, equals 1.
struct ParityControl {
    std::vector<uint32_t> records;
    bool invert = false;

    bool operator==(const ParityControl &) const = default;
};

struct Gate {
    GateKind kind;
    uint32_t q0 = 0;
    uint32_t q1 = 0;
    std::optional<ParityControl> control;

    bool operator==(const Gate &other) const {
        return kind == other.kind && q0 == other.q0 &&
               (gate_arity(kind) == 1 || q1 == other.q1) && control == other.control;
    }
};

struct Measure {
    uint32_t line = 0;
    uint32_t record_id = 0;
    std::optional<int> postselect;  // +1 or -1

    bool operator==(const Measure &) const = default;
};

using Step = std::variant<Gate, Measure>;

inline bool is_gate(const Step &s) { return std::holds_alternative<Gate>(s); }
inline bool is_measure(const Step &s) { return std::holds_alternative<Measure>(s); }
inline const Gate &as_gate(const Step &s) { return std::get<Gate>(s); }
inline const Measure &as_measure(const Step &s) { return std::get<Measure>(s); }

// ------------------------------------------------------------ circuit ------

enum class InputKind : uint8_t { kZero, kMagicA };

struct Circuit {
    uint32_t num_lines = 0;
    std::vector<InputKind> input;                 // one kind per line
    std::vector<PauliOperator> stabilizer_block;  // optional; r generators on the first r lines
    std::vector<Step> steps;
    std::vector<uint32_t> output_lines;  // quantum output register, measured Z at the end
    std::vector<uint32_t> output_bits;   // declared classical output records (optional)

    bool operator==(const Circuit &) const = default;

    size_t magic_count() const {
        size_t t = 0;
        for (InputKind k : input) {
            t += k == InputKind::kMagicA;
        }
        return t;
    }

    std::vector<Measure> measurements() const {
        std::vector<Measure> out;
        for (const Step &s : steps) {
            if (is_measure(s)) {
                out.push_back(as_measure(s));
            }
        }
        return out;
    }

    void add_gate(GateKind kind, uint32_t q0) { steps.push_back(Gate{kind, q0, 0, {}}); }
    void add_gate(GateKind kind, uint32_t q0, uint32_t q1) {
        steps.push_back(Gate{kind, q0, q1, {}});
    }
    void add_measure(uint32_t line, uint32_t record_id, std::optional<int> postselect = {}) {
        steps.push_back(Measure{line, record_id, postselect});
    }
};

// --------------------------------------------------------- validation ------

inline void validate(const Circuit &c) {
    if (c.input.size() != c.num_lines) {
        throw ContractError("input kind list must cover every line");
    }
    const size_t r = c.stabilizer_block.size();
    if (r > 0) {
        if (r > c.num_lines) {
            throw ContractError("stabilizer block larger than circuit");
        }
        DependenceTracker tracker(r);
        for (size_t i = 0; i < r; i++) {
            if (c.stabilizer_block[i].num_qubits() != r) {
                throw ContractError("stabilizer generator " + std::to_string(i) +
                                    " must act on exactly the block's " + std::to_string(r) +
                                    " lines");
            }
            if (c.input[i] != InputKind::kZero) {
                throw ContractError("stabilizer block must cover Z0 input lines");
            }
            for (size_t j = i + 1; j < r; j++) {
                if (!commutes(c.stabilizer_block[i], c.stabilizer_block[j])) {
                    throw ContractError("stabilizer generators " + std::to_string(i) + " and " +
                                        std::to_string(j) + " anticommute");
                }
            }
            if (!tracker.add(c.stabilizer_block[i])) {
                throw ContractError("stabilizer generator " + std::to_string(i) +
                                    " depends on earlier ones");
            }
        }
    }
    std::vector<uint32_t> seen_records;
    std::vector<uint32_t> postselected_lines;
    std::vector<uint32_t> postselected_records;
    for (size_t i = 0; i < c.steps.size(); i++) {
        const Step &s = c.steps[i];
        if (is_gate(s)) {
            const Gate &g = as_gate(s);
            if (g.q0 >= c.num_lines || (gate_arity(g.kind) == 2 &&
                                        (g.q1 >= c.num_lines || g.q1 == g.q0))) {
                throw ContractError("gate target out of range at step " + std::to_string(i));
            }
            if (g.control.has_value()) {
                if (g.control->records.empty()) {
                    throw ContractError("empty parity control at step " + std::to_string(i));
                }
                for (uint32_t id : g.control->records) {
                    if (std::find(seen_records.begin(), seen_records.end(), id) ==
                        seen_records.end()) {
                        throw ContractError("control references record m" + std::to_string(id) +
                                            " before its measurement (step " + std::to_string(i) +
                                            ")");
                    }
                }
            }
        } else {
            const Measure &m = as_measure(s);
            if (m.line >= c.num_lines) {
                throw ContractError("measured line out of range at step " + std::to_string(i));
            }
            if (std::find(seen_records.begin(), seen_records.end(), m.record_id) !=
                seen_records.end()) {
                throw ContractError("duplicate record id m" + std::to_string(m.record_id));
            }
            if (m.postselect.has_value() && *m.postselect != 1 && *m.postselect != -1) {
                throw ContractError("postselect target must be +1 or -1");
            }
            seen_records.push_back(m.record_id);
            if (m.postselect.has_value()) {
                postselected_lines.push_back(m.line);
                postselected_records.push_back(m.record_id);
            }
        }
    }
    for (size_t i = 0; i < c.output_lines.size(); i++) {
        uint32_t line = c.output_lines[i];
        if (line >= c.num_lines) {
            throw ContractError("output line out of range");
        }
        if (std::count(c.output_lines.begin(), c.output_lines.end(), line) > 1) {
            throw ContractError("duplicate output line " + std::to_string(line));
        }
        if (std::find(postselected_lines.begin(), postselected_lines.end(), line) !=
            postselected_lines.end()) {
            throw ContractError("line " + std::to_string(line) +
                                " is both postselected and an output line");
        }
    }
    for (uint32_t id : c.output_bits) {
        if (std::find(seen_records.begin(), seen_records.end(), id) == seen_records.end()) {
            throw ContractError("output-bits references unknown record m" + std::to_string(id));
        }
        if (std::count(c.output_bits.begin(), c.output_bits.end(), id) > 1) {
            throw ContractError("duplicate output-bits record m" + std::to_string(id));
        }
        if (std::find(postselected_records.begin(), postselected_records.end(), id) !=
            postselected_records.end()) {
            throw ContractError("output-bits record m" + std::to_string(id) +
                                " is postselected");
        }
    }
}

// ------------------------------------------------------------ parsing ------

namespace detail {

inline std::vector<std::string> tokenize_line(const std::string &line) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : line) {
        if (ch == '#') {
            break;
        }
        if (ch == ' ' || ch == '\t' || ch == '\r') {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) {
        tokens.push_back(cur);
    }
    return tokens;
}

inline uint32_t parse_uint(const std::string &tok, size_t line_no, const char *what) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError("line " + std::to_string(line_no) + ": expected " + what + ", got '" +
                         tok + "'");
    }
    unsigned long v = std::stoul(tok);
    if (v > 0xffffffffUL) {
        throw ParseError("line " + std::to_string(line_no) + ": " + what + " out of range");
    }
    return static_cast<uint32_t>(v);
}

inline uint32_t parse_record_ref(const std::string &tok, size_t line_no) {
    if (tok.size() < 2 || tok[0] != 'm') {
        throw ParseError("line " + std::to_string(line_no) + ": expected record id like m3, got '" +
                         tok + "'");
    }
    return parse_uint(tok.substr(1), line_no, "record id");
}

inline ParityControl parse_control(const std::string &tok, size_t line_no) {
    ParityControl pc;
    size_t start = 0;
    std::vector<std::string> parts;
    while (start <= tok.size()) {
        size_t caret = tok.find('^', start);
        if (caret == std::string::npos) {
            parts.push_back(tok.substr(start));
            break;
        }
        parts.push_back(tok.substr(start, caret - start));
        start = caret + 1;
    }
    for (size_t i = 0; i < parts.size(); i++) {
        if (parts[i] == "1" && i + 1 == parts.size() && i > 0) {
            pc.invert = true;
        } else {
            pc.records.push_back(parse_record_ref(parts[i], line_no));
        }
    }
    if (pc.records.empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": empty parity control");
    }
    return pc;
}

}  // namespace detail

inline Circuit parse(const std::string &text) {
    Circuit c;
    bool saw_qubits = false, saw_input = false, saw_stab = false;
    bool saw_output = false, saw_output_bits = false;
    std::istringstream in(text);
    std::string raw;
    size_t line_no = 0;
    while (std::getline(in, raw)) {
        line_no++;
        std::vector<std::string> tok = detail::tokenize_line(raw);
        if (tok.empty()) {
            continue;
        }
        const std::string &kw = tok[0];
        if (kw == "qubits") {
            if (saw_qubits) {
                throw ParseError("line " + std::to_string(line_no) + ": duplicate qubits");
            }
            if (tok.size() != 2) {
                throw ParseError("line " + std::to_string(line_no) + ": usage: qubits N");
            }
            c.num_lines = detail::parse_uint(tok[1], line_no, "line count");
            c.input.assign(c.num_lines, InputKind::kZero);
            saw_qubits = true;
            continue;
        }
        if (!saw_qubits) {
            throw ParseError("line " + std::to_string(line_no) + ": qubits must come first");
        }
        if (kw == "input") {
            if (saw_input || !c.steps.empty()) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": input must appear once, before any step");
            }
            if (tok.size() != c.num_lines + 1) {
                throw ParseError("line " + std::to_string(line_no) + ": input needs " +
                                 std::to_string(c.num_lines) + " kinds");
            }
            for (size_t q = 0; q < c.num_lines; q++) {
                if (tok[q + 1] == "Z0") {
                    c.input[q] = InputKind::kZero;
                } else if (tok[q + 1] == "A") {
                    c.input[q] = InputKind::kMagicA;
                } else {
                    throw ParseError("line " + std::to_string(line_no) + ": input kind '" +
                                     tok[q + 1] + "' (want Z0 or A)");
                }
            }
            saw_input = true;
        } else if (kw == "input-stab") {
            if (saw_stab || !c.steps.empty()) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": input-stab must appear once, before any step");
            }
            for (size_t i = 1; i < tok.size(); i++) {
                const std::string &q = tok[i];
                if (q.size() < 2 || q.front() != '"' || q.back() != '"') {
                    throw ParseError("line " + std::to_string(line_no) +
                                     ": input-stab generators must be quoted Pauli strings");
                }
                try {
                    c.stabilizer_block.push_back(PauliOperator::parse(q.substr(1, q.size() - 2)));
                } catch (const ParseError &e) {
                    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
                }
            }
            if (c.stabilizer_block.empty()) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": input-stab needs at least one generator");
            }
            saw_stab = true;
        } else if (kw == "gate") {
            if (tok.size() < 3) {
                throw ParseError("line " + std::to_string(line_no) + ": usage: gate NAME targets");
            }
            auto kind = parse_gate_name(tok[1]);
            if (!kind.has_value()) {
                throw ParseError("line " + std::to_string(line_no) + ": unknown gate '" + tok[1] +
                                 "'");
            }
            Gate g;
            g.kind = *kind;
            size_t pos = 2;
            g.q0 = detail::parse_uint(tok[pos++], line_no, "gate target");
            if (gate_arity(*kind) == 2) {
                if (pos >= tok.size()) {
                    throw ParseError("line " + std::to_string(line_no) + ": gate " + tok[1] +
                                     " needs two targets");
                }
                g.q1 = detail::parse_uint(tok[pos++], line_no, "gate target");
            }
            if (pos < tok.size()) {
                if (tok[pos] != "if" || pos + 2 != tok.size()) {
                    throw ParseError("line " + std::to_string(line_no) +
                                     ": trailing tokens (expected: if m1^m2[^1])");
                }
                g.control = detail::parse_control(tok[pos + 1], line_no);
            }
            c.steps.push_back(g);
        } else if (kw == "measure") {
            if (tok.size() != 4 && tok.size() != 6) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": usage: measure LINE -> mID [post +1|-1]");
            }
            if (tok[2] != "->") {
                throw ParseError("line " + std::to_string(line_no) + ": expected '->'");
            }
            Measure m;
            m.line = detail::parse_uint(tok[1], line_no, "measured line");
            m.record_id = detail::parse_record_ref(tok[3], line_no);
            if (tok.size() == 6) {
                if (tok[4] != "post" || (tok[5] != "+1" && tok[5] != "-1")) {
                    throw ParseError("line " + std::to_string(line_no) +
                                     ": expected 'post +1' or 'post -1'");
                }
                m.postselect = tok[5] == "+1" ? +1 : -1;
            }
            c.steps.push_back(m);
        } else if (kw == "output") {
            if (saw_output) {
                throw ParseError("line " + std::to_string(line_no) + ": duplicate output");
            }
            for (size_t i = 1; i < tok.size(); i++) {
                c.output_lines.push_back(detail::parse_uint(tok[i], line_no, "output line"));
            }
            saw_output = true;
        } else if (kw == "output-bits") {
            if (saw_output_bits) {
                throw ParseError("line " + std::to_string(line_no) + ": duplicate output-bits");
            }
            for (size_t i = 1; i < tok.size(); i++) {
                c.output_bits.push_back(detail::parse_record_ref(tok[i], line_no));
            }
            saw_output_bits = true;
        } else {
            throw ParseError("line " + std::to_string(line_no) + ": unknown statement '" + kw +
                             "'");
        }
    }
    if (!saw_qubits) {
        throw ParseError("missing qubits statement");
    }
    try {
        validate(c);
    } catch (const ContractError &e) {
        throw ParseError(std::string("semantic error: ") + e.what());
    }
    return c;
}

inline std::string serialize(const Circuit &c) {
    std::ostringstream out;
    out << "qubits " << c.num_lines << "\n";
    out << "input";
    for (InputKind k : c.input) {
        out << ' ' << (k == InputKind::kZero ? "Z0" : "A");
    }
    out << "\n";
    if (!c.stabilizer_block.empty()) {
        out << "input-stab";
        for (const auto &g : c.stabilizer_block) {
            out << " \"" << g.str() << '"';
        }
        out << "\n";
    }
    for (const Step &s : c.steps) {
        if (is_gate(s)) {
            const Gate &g = as_gate(s);
            out << "gate " << gate_name(g.kind) << ' ' << g.q0;
            if (gate_arity(g.kind) == 2) {
                out << ' ' << g.q1;
            }
            if (g.control.has_value()) {
                out << " if ";
                for (size_t i = 0; i < g.control->records.size(); i++) {
                    out << (i ? "^" : "") << 'm' << g.control->records[i];
                }
                if (g.control->invert) {
                    out << "^1";
                }
            }
            out << "\n";
        } else {
            const Measure &m = as_measure(s);
            out << "measure " << m.line << " -> m" << m.record_id;
            if (m.postselect.has_value()) {
                out << " post " << (*m.postselect > 0 ? "+1" : "-1");
            }
            out << "\n";
        }
    }
    if (!c.output_lines.empty()) {
        out << "output";
        for (uint32_t line : c.output_lines) {
            out << ' ' << line;
        }
        out << "\n";
    }
    if (!c.output_bits.empty()) {
        out << "output-bits";
        for (uint32_t id : c.output_bits) {
            out << " m" << id;
        }
        out << "\n";
    }
    return out.str();
}

// ----------------------------------------------------- classification ------

enum class Adaptivity : uint8_t { kUnitary, kNonAdaptive, kAdaptive };

inline const char *adaptivity_name(Adaptivity a) {
    switch (a) {
        case Adaptivity::kUnitary:
            return "unitary";
        case Adaptivity::kNonAdaptive:
            return "non-adaptive";
        case Adaptivity::kAdaptive:
            return "adaptive";
    }
    throw ContractError("adaptivity_name: bad value");
}

struct Classification {
    Adaptivity adaptivity;
    bool clifford_only;
    size_t t_count;  // T and Tdg gates only; CS counts after expansion
};

// A measurement is "final" when its line is never touched by a later step.
inline bool measurement_is_final(const Circuit &c, size_t step_index) {
    const Measure &m = as_measure(c.steps[step_index]);
    for (size_t j = step_index + 1; j < c.steps.size(); j++) {
        const Step &s = c.steps[j];
        if (is_gate(s)) {
            const Gate &g = as_gate(s);
            if (g.q0 == m.line || (gate_arity(g.kind) == 2 && g.q1 == m.line)) {
                return false;
            }
        } else if (as_measure(s).line == m.line) {
            return false;
        }
    }
    return true;
}

inline Classification classify(const Circuit &c) {
    Classification out{Adaptivity::kUnitary, true, 0};
    bool any_control = false, any_intermediate = false;
    for (size_t i = 0; i < c.steps.size(); i++) {
        const Step &s = c.steps[i];
        if (is_gate(s)) {
            const Gate &g = as_gate(s);
            if (!gate_is_clifford(g.kind)) {
                out.clifford_only = false;
            }
            if (g.kind == GateKind::kT || g.kind == GateKind::kTdg) {
                out.t_count++;
            }
            if (g.control.has_value()) {
                any_control = true;
            }
        } else if (!measurement_is_final(c, i)) {
            any_intermediate = true;
        }
    }
    out.adaptivity = any_control         ? Adaptivity::kAdaptive
                     : any_intermediate  ? Adaptivity::kNonAdaptive
                                         : Adaptivity::kUnitary;
    return out;
}

// Moves every measurement to the end of the step list when legal: the line
// must not be touched later and the record must not feed a later control.
// Illegal-to-move measurements stay in place.  Relative order within the
// moved group and within the kept steps is preserved.
inline Circuit normalize_measurements_to_end(const Circuit &c) {
    std::vector<bool> movable(c.steps.size(), false);
    for (size_t i = 0; i < c.steps.size(); i++) {
        if (!is_measure(c.steps[i])) {
            continue;
        }
        const Measure &m = as_measure(c.steps[i]);
        bool ok = measurement_is_final(c, i);
        for (size_t j = i + 1; j < c.steps.size() && ok; j++) {
            if (is_gate(c.steps[j]) && as_gate(c.steps[j]).control.has_value()) {
                const auto &refs = as_gate(c.steps[j]).control->records;
                if (std::find(refs.begin(), refs.end(), m.record_id) != refs.end()) {
                    ok = false;
                }
            }
        }
        movable[i] = ok;
    }
    Circuit out = c;
    out.steps.clear();
    for (size_t i = 0; i < c.steps.size(); i++) {
        if (!movable[i]) {
            out.steps.push_back(c.steps[i]);
        }
    }
    for (size_t i = 0; i < c.steps.size(); i++) {
        if (movable[i]) {
            out.steps.push_back(c.steps[i]);
        }
    }
    return out;
}

// ------------------------------------------------------ gate lowering ------

// Clifford gates as words over {H, S, Sdg, CX}, in application order.  The
// words are verified against dense matrices (up to global phase) in tests.
inline std::vector<LoweredGate> lower_gate(GateKind kind, uint32_t q0, uint32_t q1 = 0) {
    using G = CliffordGate;
    switch (kind) {
        case GateKind::kH:
            return {{G::kH, q0, 0}};
        case GateKind::kS:
            return {{G::kS, q0, 0}};
        case GateKind::kSdg:
            return {{G::kSdg, q0, 0}};
        case GateKind::kX:
            return {{G::kH, q0, 0}, {G::kS, q0, 0}, {G::kS, q0, 0}, {G::kH, q0, 0}};
        case GateKind::kY:
            // Y = X * Z up to phase: apply Z's word, then X's word.
            return {{G::kS, q0, 0}, {G::kS, q0, 0},
                    {G::kH, q0, 0}, {G::kS, q0, 0}, {G::kS, q0, 0}, {G::kH, q0, 0}};
        case GateKind::kZ:
            return {{G::kS, q0, 0}, {G::kS, q0, 0}};
        case GateKind::kCx:
            return {{G::kCx, q0, q1}};
        case GateKind::kCz:
            return {{G::kH, q1, 0}, {G::kCx, q0, q1}, {G::kH, q1, 0}};
        case GateKind::kSqrtX:
            return {{G::kH, q0, 0}, {G::kS, q0, 0}, {G::kH, q0, 0}};
        case GateKind::kSqrtXdg:
            return {{G::kH, q0, 0}, {G::kSdg, q0, 0}, {G::kH, q0, 0}};
        case GateKind::kSqrtY:
            return {{G::kSdg, q0, 0}, {G::kH, q0, 0}, {G::kS, q0, 0}, {G::kH, q0, 0},
                    {G::kS, q0, 0}};
        case GateKind::kSqrtYdg:
            return {{G::kSdg, q0, 0}, {G::kH, q0, 0}, {G::kSdg, q0, 0}, {G::kH, q0, 0},
                    {G::kS, q0, 0}};
        default:
            throw ContractError(std::string("lower_gate: ") + gate_name(kind) +
                                " is not Clifford");
    }
}

inline std::vector<LoweredGate> lower_gate(const Gate &g) {
    return lower_gate(g.kind, g.q0, g.q1);
}

// ------------------------------------------------------ output layout ------

// Canonical distribution key: bits of non-postselected measurement records in
// declaration order (filtered to output_bits when declared), then output-line
// bits in statement order.
struct OutputLayout {
    std::vector<uint32_t> record_ids;
    std::vector<uint32_t> lines;

    size_t width() const { return record_ids.size() + lines.size(); }

    bool operator==(const OutputLayout &) const = default;
};

inline OutputLayout output_layout(const Circuit &c) {
    OutputLayout layout;
    for (const Measure &m : c.measurements()) {
        if (m.postselect.has_value()) {
            continue;
        }
        if (!c.output_bits.empty() &&
            std::find(c.output_bits.begin(), c.output_bits.end(), m.record_id) ==
                c.output_bits.end()) {
            continue;
        }
        layout.record_ids.push_back(m.record_id);
    }
    layout.lines = c.output_lines;
    return layout;
}

}  // namespace pbc
