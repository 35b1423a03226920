// mool - usage-typed mini object-oriented language
//
// subcommands: check | run | explore | fmt

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mool/parser.hpp"
#include "mool/runtime.hpp"
#include "mool/typecheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDiagnostics = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitUsage = 64;
constexpr int kExitNoInput = 66;

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Options {
    std::string input;
    std::uint64_t seed = 0;
    long long max_steps = 1'000'000;
    long long max_states = 200000;
    int max_depth = 100000;
    bool strict_core = false;
    bool trace = false;
    bool json = false;
    bool unsafe = false;
    std::string variant_subtyping = "verbatim";
};

mool::CheckOptions check_options(const Options& o) {
    mool::CheckOptions c;
    c.strict_core = o.strict_core;
    c.subtype_mode = o.variant_subtyping == "conventional" ? mool::SubtypeMode::Conventional
                                                           : mool::SubtypeMode::Verbatim;
    return c;
}

void emit_diags(const mool::DiagnosticBag& diags, bool json) {
    if (json) {
        std::cout << diags.to_json() << "\n";
    } else {
        diags.print(std::cerr);
    }
}

// parse + resolve; returns nullopt (after printing diagnostics) on failure
std::optional<mool::Program> load(const Options& o, mool::DiagnosticBag& diags) {
    auto source = read_file(o.input);
    if (!source) {
        std::cerr << "mool: cannot read '" << o.input << "'\n";
        return std::nullopt;
    }
    return mool::parse_program(*source, o.input, diags);
}

int cmd_check(const Options& o) {
    mool::DiagnosticBag diags;
    auto prog = load(o, diags);
    if (!prog && !diags.has_errors()) return kExitNoInput;
    if (prog && !diags.has_errors()) {
        diags.append(mool::check_program(*prog, check_options(o)));
    }
    emit_diags(diags, o.json);
    return diags.has_errors() ? kExitDiagnostics : kExitOk;
}

int cmd_run(const Options& o) {
    mool::DiagnosticBag diags;
    auto prog = load(o, diags);
    if (!prog && !diags.has_errors()) return kExitNoInput;
    if (prog && !diags.has_errors() && !o.unsafe) {
        diags.append(mool::check_program(*prog, check_options(o)));
    }
    if (diags.has_errors() || !prog) {
        emit_diags(diags, o.json);
        return kExitDiagnostics;
    }
    mool::RunOptions ropts;
    ropts.seed = o.seed;
    ropts.max_steps = o.max_steps;
    ropts.out = &std::cout;
    if (o.trace) ropts.trace_out = &std::cerr;
    mool::RunReport report = mool::run_program(*prog, ropts);
    if (report.outcome != mool::RunOutcome::Finished) {
        std::cerr << "mool: " << report.fault_code << ": " << report.detail << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_explore(const Options& o) {
    mool::DiagnosticBag diags;
    auto prog = load(o, diags);
    if (!prog && !diags.has_errors()) return kExitNoInput;
    if (prog && !diags.has_errors() && !o.unsafe) {
        diags.append(mool::check_program(*prog, check_options(o)));
    }
    if (diags.has_errors() || !prog) {
        emit_diags(diags, o.json);
        return kExitDiagnostics;
    }
    mool::ExploreOptions eopts;
    eopts.max_states = o.max_states;
    eopts.max_depth = o.max_depth;
    mool::ExploreReport report = mool::explore(*prog, eopts);
    std::cout << "states:     " << report.states_visited << "\n"
              << "transitions:" << report.transitions << "\n"
              << "finals:     " << report.final_states.size() << "\n"
              << "deadlocks:  " << report.deadlock_states << "\n";
    for (const auto& v : report.violations) {
        std::cout << "violation[" << v.kind << "]: " << v.detail << "\n";
    }
    if (report.blowup) {
        std::cerr << "mool: E-EXPLORE-BLOWUP: state budget exceeded\n";
        return kExitRuntime;
    }
    return report.violations.empty() ? kExitOk : kExitRuntime;
}

int cmd_fmt(const Options& o) {
    mool::DiagnosticBag diags;
    auto prog = load(o, diags);
    if (!prog && !diags.has_errors()) return kExitNoInput;
    if (!prog || diags.has_errors()) {
        emit_diags(diags, o.json);
        return kExitDiagnostics;
    }
    std::cout << mool::pretty_print(*prog);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mool - usage-typed mini object-oriented language"};
    app.require_subcommand(1);

    Options o;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("input", o.input, "input .mool file")->required();
        cmd->add_flag("--strict-core", o.strict_core,
                      "reject extensions (int/string, n-ary methods, locals)");
        cmd->add_option("--variant-subtyping", o.variant_subtyping,
                        "variant subtyping rule: verbatim|conventional")
            ->check(CLI::IsMember({"verbatim", "conventional"}));
        cmd->add_flag("--json", o.json, "machine-readable diagnostics");
    };

    CLI::App* check = app.add_subcommand("check", "parse and type-check");
    add_common(check);

    CLI::App* run = app.add_subcommand("run", "type-check and interpret");
    add_common(run);
    run->add_option("--seed", o.seed, "scheduler seed (default 0)");
    run->add_option("--max-steps", o.max_steps, "step budget (default 1000000)");
    run->add_flag("--trace", o.trace, "print one line per reduction to stderr");
    run->add_flag("--unsafe", o.unsafe, "skip the type check");

    CLI::App* explore = app.add_subcommand("explore", "exhaustively explore interleavings");
    add_common(explore);
    explore->add_option("--max-states", o.max_states, "state budget (default 200000)");
    explore->add_option("--max-depth", o.max_depth, "depth budget (default 100000)");
    explore->add_flag("--unsafe", o.unsafe, "skip the type check");

    CLI::App* fmt = app.add_subcommand("fmt", "parse and pretty-print");
    add_common(fmt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    if (check->parsed()) return cmd_check(o);
    if (run->parsed()) return cmd_run(o);
    if (explore->parsed()) return cmd_explore(o);
    if (fmt->parsed()) return cmd_fmt(o);
    return kExitUsage;
}
