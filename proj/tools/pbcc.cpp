// pbcc — command-line front end for the Pauli-based-computation toolkit.
//
// Subcommands:
//   compile  rewrite a circuit into magic-gadget form, compress it onto the
//            magic register, write the emitted circuit/program, and print a
//            key=value report
//   verify   compare a circuit's exact output distribution against its own
//            compilation, itself, or another circuit file
//   gen      draw seeded random instances of the built-in circuit families
//            and write circuit + manifest files
//   stats    anticoncentration estimate for a family, plus its reassignment
//            self-consistency checks
//
// Exit codes: 0 success; 1 verify distance above tolerance; 2 bad usage or
// malformed input; 3 contract violation; 4 probability-zero postselection;
// 5 size budget exceeded; 70 unexpected internal failure.  Reports go to
// standard output, diagnostics to standard error.

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "pbc/classes.hpp"

namespace {

constexpr int kExitTolerance = 1;
constexpr int kExitUsage = 2;
constexpr int kExitContract = 3;
constexpr int kExitProbabilityZero = 4;
constexpr int kExitBudget = 5;
constexpr int kExitInternal = 70;

uint64_t entropy_seed() {
    std::random_device rd;
    return (static_cast<uint64_t>(rd()) << 32) ^ static_cast<uint64_t>(rd());
}

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw pbc::ParseError("cannot open " + path);
    }
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

void write_file(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw pbc::ContractError("cannot write " + path);
    }
}

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

// Line-oriented key=value report, printed to standard output and optionally
// mirrored to a file.
struct Report {
    std::string text;

    void row(const std::string &key, const std::string &value) {
        text += key;
        text += '=';
        text += value;
        text += '\n';
    }
    void row(const std::string &key, const char *value) { row(key, std::string(value)); }
    template <std::integral T>
    void row(const std::string &key, T value) {
        row(key, std::to_string(value));
    }
    void row(const std::string &key, double value) { row(key, fmt(value)); }

    void emit(const std::string &mirror_path) const {
        std::cout << text;
        if (!mirror_path.empty()) {
            write_file(mirror_path, text);
        }
    }
};

// ----------------------------------------------------------- compile -------

struct CompileArgs {
    std::string in;
    std::string mode = "plain";
    std::string emit = "cm";
    uint64_t seed = 0;
    std::string out;
    std::string report_path;
};

int run_compile(const CompileArgs &a) {
    pbc::Circuit c = pbc::parse(read_file(a.in));
    pbc::CompressMode mode = a.mode == "plain" ? pbc::CompressMode::kPlain
                                               : pbc::CompressMode::kPostselected;
    pbc::Rng rng(a.seed);
    pbc::CompressReport rep = pbc::compress_pipeline(c, mode, rng);

    Report r;
    r.row("command", "compile");
    r.row("in", a.in);
    r.row("mode", pbc::compress_mode_name(mode));
    r.row("emit", a.emit);
    r.row("seed", a.seed);
    r.row("n", rep.original_lines);
    r.row("original-gates", rep.original_gate_count);
    r.row("gadgets", rep.gadget_count);
    r.row("t", rep.t);
    r.row("s", rep.s);
    r.row("compressed-gates", rep.compressed_gate_count);
    r.row("coins", rep.coin_count);
    r.row("forced-coins", rep.forced_coin_count);

    if (!a.out.empty()) {
        std::string artifact;
        if (mode == pbc::CompressMode::kPlain) {
            pbc::Circuit g = pbc::gadgetize(c);
            if (a.emit == "cm") {
                // The magic-gadget rewrite: a Clifford circuit with magic
                // inputs (adaptive when any corrections remain).
                artifact = pbc::serialize(g);
            } else {
                // A static measurement program exists only without adaptive
                // corrections; otherwise the compressed object is the
                // interactive driver, which has no file form.
                if (pbc::classify(g).adaptivity == pbc::Adaptivity::kAdaptive) {
                    throw pbc::ContractError(
                        "compile: the adaptive program has no static file form; use "
                        "--mode postselected, or --emit cm for the gadget rewrite");
                }
                artifact = pbc::compile_nonadaptive(g, rng).dump();
            }
        } else {
            artifact = a.emit == "cm" ? pbc::serialize(*rep.cm_circuit) : rep.program->dump();
        }
        write_file(a.out, artifact);
        r.row("out", a.out);
    }
    r.emit(a.report_path);
    return 0;
}

// ------------------------------------------------------------ verify -------

struct VerifyArgs {
    std::string in;
    std::string against = "compiled";
    uint32_t budget_lines = 14;
    double tol = 1e-9;
};

int run_verify(const VerifyArgs &a) {
    pbc::Circuit c = pbc::parse(read_file(a.in));
    pbc::DenseBudget budget;
    budget.max_lines = a.budget_lines;
    pbc::Distribution p = pbc::exact_distribution(c, budget);

    pbc::Distribution q;
    if (a.against == "self") {
        q = pbc::exact_distribution(c, budget);
    } else if (a.against == "compiled") {
        pbc::Circuit g = pbc::gadgetize(c);
        pbc::Distribution full = pbc::exact_distribution_hybrid(g, budget);
        q = pbc::marginalize(
            full, pbc::layout_projection(pbc::output_layout(g), pbc::output_layout(c)));
    } else {
        // Any other value names a reference circuit file whose output layout
        // must cover the input's records and lines.
        pbc::Circuit d = pbc::parse(read_file(a.against));
        pbc::Distribution full = pbc::exact_distribution(d, budget);
        q = pbc::marginalize(
            full, pbc::layout_projection(pbc::output_layout(d), pbc::output_layout(c)));
    }

    pbc::DistanceReport dist = pbc::distance(p, q, pbc::DistanceMetric::kAdditive);
    Report r;
    r.row("command", "verify");
    r.row("in", a.in);
    r.row("against", a.against);
    r.row("budget-lines", a.budget_lines);
    r.row("tol", a.tol);
    r.row("additive", dist.additive);
    r.row("tvd", dist.tvd);
    bool ok = dist.additive <= a.tol;
    r.row("result", ok ? "pass" : "fail");
    r.emit("");
    return ok ? 0 : kExitTolerance;
}

// --------------------------------------------------------------- gen -------

struct GenArgs {
    std::string cls = "iqp-ising";
    uint32_t n = 2;
    double p = 0.5;
    uint32_t depth = 4;
    uint32_t count = 1;
    uint64_t seed = 0;
    std::string outdir = ".";
};

int run_gen(const GenArgs &a) {
    pbc::CircuitClass cls = *pbc::parse_class_name(a.cls);
    if (cls == pbc::CircuitClass::kRcs && a.n < 2) {
        std::cerr << "gen: the brickwork family needs at least two lines\n";
        return kExitUsage;
    }
    pbc::GenParams params;
    params.p = a.p;
    params.depth = a.depth;
    std::filesystem::create_directories(a.outdir);

    Report r;
    r.row("command", "gen");
    r.row("class", pbc::class_name(cls));
    r.row("n", a.n);
    r.row("count", a.count);
    r.row("seed", a.seed);
    if (cls == pbc::CircuitClass::kSparseIqp) {
        r.row("p", a.p);
    }
    if (cls == pbc::CircuitClass::kRcs) {
        r.row("depth", a.depth);
    }
    r.row("outdir", a.outdir);

    for (uint32_t i = 0; i < a.count; i++) {
        uint64_t seed_i = a.seed + i;
        pbc::ClassInstance inst = pbc::gen_instance_seeded(cls, a.n, seed_i, params);
        std::string base = std::string(pbc::class_name(cls)) + "-n" + std::to_string(a.n) +
                           "-s" + std::to_string(seed_i);
        std::filesystem::path circuit_path = std::filesystem::path(a.outdir) / (base + ".circuit");
        std::filesystem::path manifest_path =
            std::filesystem::path(a.outdir) / (base + ".manifest");
        write_file(circuit_path.string(), pbc::serialize(inst.circuit));
        write_file(manifest_path.string(), pbc::manifest(inst));
        std::string tag = std::to_string(i);
        r.row("file-" + tag, circuit_path.string());
        r.row("manifest-" + tag, manifest_path.string());
        r.row("t-count-" + tag, inst.t_count);
    }
    r.emit("");
    return 0;
}

// ------------------------------------------------------------- stats -------

struct StatsArgs {
    std::string cls = "iqp-ising";
    uint32_t n = 6;
    double alpha = 0.5;
    uint64_t samples = 2000;
    double p = 0.5;
    uint32_t depth = 4;
    uint64_t seed = 0;
};

int run_stats(const StatsArgs &a) {
    pbc::CircuitClass cls = *pbc::parse_class_name(a.cls);
    if (cls == pbc::CircuitClass::kRcs && a.n < 2) {
        std::cerr << "stats: the brickwork family needs at least two lines\n";
        return kExitUsage;
    }
    pbc::GenParams params;
    params.p = a.p;
    params.depth = a.depth;
    pbc::Rng rng(a.seed);

    pbc::AnticoncentrationReport anti =
        pbc::anticoncentration_estimate(cls, a.n, a.samples, a.alpha, rng, params);

    Report r;
    r.row("command", "stats");
    r.row("class", pbc::class_name(cls));
    r.row("n", a.n);
    r.row("alpha", a.alpha);
    r.row("seed", a.seed);
    r.row("anticoncentration-threshold", anti.threshold);
    r.row("anticoncentration-samples", anti.samples);
    r.row("anticoncentration-hits", anti.hits);
    r.row("anticoncentration-fraction", anti.fraction);
    r.row("anticoncentration-ci-low", anti.ci_low);
    r.row("anticoncentration-ci-high", anti.ci_high);

    // Exhaustive gadget-outcome reassignment check on small family members:
    // the reassigned circuit's law must equal the conditional branch law.
    constexpr size_t kExpansionInstances = 3;
    size_t assignments = 0;
    size_t comparisons = 0;
    double max_err = 0;
    for (size_t k = 0; k < kExpansionInstances; k++) {
        pbc::ClassInstance inst = pbc::gen_instance_seeded(cls, 2, a.seed + 1 + k, params);
        pbc::ExpansionConsistencyReport ec = pbc::expansion_consistency_check(inst);
        assignments += ec.assignments;
        comparisons += ec.compared;
        max_err = std::max(max_err, ec.max_abs_err);
    }
    r.row("expansion-instances", kExpansionInstances);
    r.row("expansion-assignments", assignments);
    r.row("expansion-comparisons", comparisons);
    r.row("expansion-max-err", max_err);
    r.row("expansion-pass", max_err <= 1e-10 ? "pass" : "fail");

    // Reassignment closure: the law of the reassigned parameters must equal
    // the drawing law.  Exact for the diagonal-phase families; the other
    // families do not admit the parameter-space reassignment.
    if (cls == pbc::CircuitClass::kIqpIsing || cls == pbc::CircuitClass::kSparseIqp) {
        pbc::ThetaSamplingReport ex = pbc::theta_sampling_check(cls, 2, 0, rng, a.p);
        r.row("law-exhaustive-n", 2);
        r.row("law-exhaustive-theta-count", ex.theta_count);
        r.row("law-exhaustive-distance", ex.distance);
        r.row("law-exhaustive-pass", ex.distance <= 1e-9 ? "pass" : "fail");
        if (a.n >= 3) {
            pbc::ThetaSamplingReport sm = pbc::theta_sampling_check(cls, a.n, a.samples, rng, a.p);
            r.row("law-sampled-n", a.n);
            r.row("law-sampled-theta-count", sm.theta_count);
            r.row("law-sampled-distance", sm.distance);
            r.row("law-sampled-band-low", sm.ci_low);
            r.row("law-sampled-band-high", sm.ci_high);
            bool inside = sm.ci_low <= sm.distance && sm.distance <= sm.ci_high;
            r.row("law-sampled-consistent", inside ? "pass" : "fail");
        }
    } else {
        r.row("law-check", "not-applicable");
    }
    r.emit("");
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Clifford+T to Pauli-based-computation compiler and verifier"};
    app.require_subcommand(1);

    const std::vector<std::string> kClasses = {"iqp-ising", "sparse-iqp", "rcs", "conjugated",
                                               "conjugated-clifford"};

    CompileArgs ca;
    CLI::App *compile_cmd =
        app.add_subcommand("compile", "Compress a circuit onto its magic register");
    compile_cmd->add_option("--in", ca.in, "Input circuit file")->required();
    compile_cmd->add_option("--mode", ca.mode, "Gadget mode")
        ->check(CLI::IsMember({"plain", "postselected"}));
    compile_cmd->add_option("--emit", ca.emit, "Artifact kind for --out")
        ->check(CLI::IsMember({"cm", "pbc"}));
    CLI::Option *compile_seed = compile_cmd->add_option("--seed", ca.seed, "Deterministic seed");
    compile_cmd->add_option("--out", ca.out, "Artifact output file");
    compile_cmd->add_option("--report", ca.report_path, "Mirror the report to this file");

    VerifyArgs va;
    CLI::App *verify_cmd =
        app.add_subcommand("verify", "Compare exact output distributions");
    verify_cmd->add_option("--in", va.in, "Input circuit file")->required();
    verify_cmd->add_option("--against", va.against,
                           "compiled, self, or a reference circuit file");
    verify_cmd->add_option("--budget", va.budget_lines, "Dense line budget");
    verify_cmd->add_option("--tol", va.tol, "Additive-distance tolerance")
        ->check(CLI::NonNegativeNumber);

    GenArgs ga;
    CLI::App *gen_cmd = app.add_subcommand("gen", "Generate seeded family instances");
    gen_cmd->add_option("--class", ga.cls, "Circuit family")
        ->required()
        ->check(CLI::IsMember(kClasses));
    gen_cmd->add_option("--n", ga.n, "Line count")->required()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--p", ga.p, "Pair keep probability (sparse family)")
        ->check(CLI::Range(0.0, 1.0));
    gen_cmd->add_option("--depth", ga.depth, "Layer count (brickwork family)")
        ->check(CLI::PositiveNumber);
    gen_cmd->add_option("--count", ga.count, "Instances to generate")
        ->check(CLI::PositiveNumber);
    CLI::Option *gen_seed = gen_cmd->add_option("--seed", ga.seed, "Base seed");
    gen_cmd->add_option("--outdir", ga.outdir, "Output directory");

    StatsArgs sa;
    CLI::App *stats_cmd =
        app.add_subcommand("stats", "Anticoncentration and self-consistency reports");
    stats_cmd->add_option("--class", sa.cls, "Circuit family")->check(CLI::IsMember(kClasses));
    stats_cmd->add_option("--n", sa.n, "Line count")->check(CLI::PositiveNumber);
    stats_cmd->add_option("--alpha", sa.alpha, "Anticoncentration level")
        ->check(CLI::Range(0.0, 1.0));
    stats_cmd->add_option("--samples", sa.samples, "Sample count")->check(CLI::PositiveNumber);
    stats_cmd->add_option("--p", sa.p, "Pair keep probability (sparse family)")
        ->check(CLI::Range(0.0, 1.0));
    stats_cmd->add_option("--depth", sa.depth, "Layer count (brickwork family)")
        ->check(CLI::PositiveNumber);
    CLI::Option *stats_seed = stats_cmd->add_option("--seed", sa.seed, "Deterministic seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (compile_cmd->parsed()) {
            if (!compile_seed->count()) {
                ca.seed = entropy_seed();
            }
            return run_compile(ca);
        }
        if (verify_cmd->parsed()) {
            return run_verify(va);
        }
        if (gen_cmd->parsed()) {
            if (!gen_seed->count()) {
                ga.seed = entropy_seed();
            }
            return run_gen(ga);
        }
        if (stats_cmd->parsed()) {
            if (!stats_seed->count()) {
                sa.seed = entropy_seed();
            }
            return run_stats(sa);
        }
        std::cerr << "error: no subcommand\n";
        return kExitUsage;
    } catch (const pbc::ParseError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const pbc::ProbabilityZeroError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitProbabilityZero;
    } catch (const pbc::PostselectionMissError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitProbabilityZero;
    } catch (const pbc::BudgetError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitBudget;
    } catch (const pbc::ContractError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitContract;
    } catch (const std::exception &e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}
