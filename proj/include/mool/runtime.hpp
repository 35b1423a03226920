#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mool/ast.hpp"
#include "mool/diag.hpp"

namespace mool {

// type default values: unit, false, 0, "", and bottom for object fields
Value init_value(const Type& t);

struct ObjectRecord {
    std::string class_name;
    UsagePtr usage;  // current protocol state; advances on protocol calls
    int lock = 0;    // 0 unlocked, 1 locked
    std::map<std::string, Value> fields;
};

struct Thread {
    int id = 0;
    ExprPtr expr;
};

enum class ThreadStatus { Runnable, Blocked, Finished };

struct TraceEvent {
    long long step = 0;
    int thread = 0;
    std::string rule;
    std::string detail;

    std::string render() const;
};

struct MachineState {
    std::map<int, ObjectRecord> heap;
    std::vector<Thread> threads;
    int next_oid = 0;

    // canonical snapshot; equal strings <=> same state
    std::string snapshot() const;
};

enum class StepKind { Stepped, Blocked, Finished, Fault };

struct StepResult {
    StepKind kind = StepKind::Stepped;
    std::string rule;
    std::string detail;
    std::string fault_code;  // E-RT-*
};

// One-hole evaluation context decomposition (left-to-right, innermost first).
// Returns the redex and the path of child indices from the root to it.
struct Decomposition {
    ExprPtr redex;
    std::vector<int> path;
};
std::optional<Decomposition> decompose(const ExprPtr& e);

class Machine {
public:
    Machine(const Program& prog, std::ostream* out);

    MachineState state;

    // applies exactly one reduction rule to thread tid
    StepResult step_thread(int tid);

    ThreadStatus status(int tid) const;

    const Program& program() const { return prog_; }

    // allocates the Main instance and thread 0 running main()
    void bootstrap();

    std::ostream* out;  // print target; null discards

private:
    const Program& prog_;

    friend struct Stepper;
};

struct RunOptions {
    std::uint64_t seed = 0;
    long long max_steps = 1'000'000;
    bool collect_trace = false;
    std::ostream* trace_out = nullptr;  // live trace, if set
    std::ostream* out = nullptr;        // program output ('print'); null discards
};

enum class RunOutcome { Finished, Deadlock, StepLimit, Fault };

struct RunReport {
    RunOutcome outcome = RunOutcome::Finished;
    std::string fault_code;
    std::string detail;
    long long steps = 0;
    std::vector<TraceEvent> trace;

    std::string trace_text() const;
};

RunReport run_program(const Program& prog, const RunOptions& opts);

// ---- exhaustive interleaving exploration -------------------------------------

struct ExploreOptions {
    long long max_states = 200000;
    int max_depth = 100000;
};

struct ExploreViolation {
    std::string kind;    // lock-overlap | unavailable | uninit | linear-alias | fault
    std::string detail;
};

struct ExploreReport {
    long long states_visited = 0;
    long long transitions = 0;
    long long deadlock_states = 0;
    bool blowup = false;
    bool single_trace = true;  // no state had more than one enabled thread
    std::set<std::string> final_states;  // canonical snapshots of terminal states
    std::vector<ExploreViolation> violations;

    bool ok() const { return violations.empty() && !blowup; }
};

ExploreReport explore(const Program& prog, const ExploreOptions& opts);

}  // namespace mool
