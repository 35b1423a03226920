#include <functional>
#include <unordered_set>

#include "mool/runtime.hpp"

namespace mool {

namespace {

// occurrences of a reference in positions that denote an alias; receiver slots
// coming from `this` substitution are excluded
long long countable_refs(const ExprPtr& e, int oid) {
    if (const auto* x = e->as<LitE>()) {
        const auto* o = x->value.as_obj();
        return o && o->oid == oid ? 1 : 0;
    }
    if (e->as<IdentE>() || e->as<ThisE>() || e->as<NewE>()) return 0;
    if (const auto* x = e->as<FieldAccessE>()) {
        (void)x;
        return 0;  // receiver is `this`-substituted
    }
    if (const auto* x = e->as<SeqE>()) {
        return countable_refs(x->first, oid) + countable_refs(x->second, oid);
    }
    if (const auto* x = e->as<AssignE>()) {
        return countable_refs(x->value, oid);
    }
    if (const auto* x = e->as<LetE>()) {
        return countable_refs(x->init, oid) + countable_refs(x->body, oid);
    }
    if (const auto* x = e->as<CallE>()) {
        long long n = 0;
        if (x->kind == CallKind::Protocol && x->recv->as<LitE>()) {
            n += countable_refs(x->recv, oid);  // a real reference held by the caller
        }
        for (const auto& a : x->args) n += countable_refs(a, oid);
        return n;
    }
    if (const auto* x = e->as<IfE>()) {
        return countable_refs(x->cond, oid) + countable_refs(x->then_e, oid) +
               countable_refs(x->else_e, oid);
    }
    if (const auto* x = e->as<WhileE>()) {
        return countable_refs(x->cond, oid) + countable_refs(x->body, oid);
    }
    if (const auto* x = e->as<SpawnE>()) return countable_refs(x->body, oid);
    if (const auto* x = e->as<PrintE>()) return countable_refs(x->arg, oid);
    if (const auto* x = e->as<BinOpE>()) {
        return countable_refs(x->lhs, oid) + countable_refs(x->rhs, oid);
    }
    if (const auto* x = e->as<InSyncE>()) return countable_refs(x->body, oid);
    if (const auto* x = e->as<VariantResE>()) return countable_refs(x->body, oid);
    return 0;
}

long long insync_frames(const ExprPtr& e, int oid) {
    long long n = 0;
    std::function<void(const ExprPtr&)> go = [&](const ExprPtr& cur) {
        if (const auto* x = cur->as<InSyncE>()) {
            if (x->oid == oid) n++;
            go(x->body);
            return;
        }
        if (const auto* x = cur->as<SeqE>()) { go(x->first); go(x->second); return; }
        if (const auto* x = cur->as<LetE>()) { go(x->init); go(x->body); return; }
        if (const auto* x = cur->as<AssignE>()) { go(x->value); return; }
        if (const auto* x = cur->as<CallE>()) {
            for (const auto& a : x->args) go(a);
            return;
        }
        if (const auto* x = cur->as<IfE>()) { go(x->cond); go(x->then_e); go(x->else_e); return; }
        if (const auto* x = cur->as<WhileE>()) { go(x->cond); go(x->body); return; }
        if (const auto* x = cur->as<SpawnE>()) { go(x->body); return; }
        if (const auto* x = cur->as<PrintE>()) { go(x->arg); return; }
        if (const auto* x = cur->as<BinOpE>()) { go(x->lhs); go(x->rhs); return; }
        if (const auto* x = cur->as<VariantResE>()) { go(x->body); return; }
    };
    go(e);
    return n;
}

struct ViolationLog {
    std::set<std::string> seen;
    std::vector<ExploreViolation>& out;

    void add(std::string kind, std::string detail) {
        if (seen.insert(kind + "|" + detail).second) {
            out.push_back(ExploreViolation{std::move(kind), std::move(detail)});
        }
    }
};

void check_invariants(const MachineState& state, ViolationLog& log) {
    for (const auto& [oid, rec] : state.heap) {
        // lock discipline: frames holding o across all threads must match the flag
        long long frames = 0;
        long long threads_holding = 0;
        for (const auto& t : state.threads) {
            long long n = insync_frames(t.expr, oid);
            frames += n;
            if (n > 0) threads_holding++;
        }
        if (threads_holding > 1 || frames != rec.lock) {
            log.add("lock-overlap",
                    "object o" + std::to_string(oid) + " (" + rec.class_name + "): " +
                        std::to_string(frames) + " insync frame(s) across " +
                        std::to_string(threads_holding) + " thread(s), lock flag " +
                        std::to_string(rec.lock));
        }
        // linear uniqueness: at most one sink holds a linear reference
        if (qualifier_of(rec.usage) == Qualifier::Lin) {
            long long sinks = 0;
            for (const auto& [other_oid, other] : state.heap) {
                (void)other_oid;
                for (const auto& [fname, fval] : other.fields) {
                    (void)fname;
                    const auto* o = fval.as_obj();
                    if (o && o->oid == oid) sinks++;
                }
            }
            for (const auto& t : state.threads) {
                if (countable_refs(t.expr, oid) > 0) sinks++;
            }
            if (sinks > 1) {
                log.add("linear-alias",
                        "linear object o" + std::to_string(oid) + " (" + rec.class_name +
                            ") is referenced by " + std::to_string(sinks) + " sinks");
            }
        }
    }
}

}  // namespace

ExploreReport explore(const Program& prog, const ExploreOptions& opts) {
    ExploreReport report;
    Machine machine(prog, nullptr);
    machine.bootstrap();

    ViolationLog log{{}, report.violations};

    struct Node {
        MachineState state;
        int depth;
    };
    std::vector<Node> stack;
    std::unordered_set<std::string> visited;

    MachineState initial = machine.state;
    visited.insert(initial.snapshot());
    stack.push_back(Node{std::move(initial), 0});

    while (!stack.empty()) {
        if (static_cast<long long>(visited.size()) > opts.max_states) {
            report.blowup = true;
            break;
        }
        Node node = std::move(stack.back());
        stack.pop_back();
        report.states_visited++;

        check_invariants(node.state, log);

        std::vector<int> runnable;
        bool any_blocked = false;
        machine.state = node.state;
        for (const auto& t : machine.state.threads) {
            switch (machine.status(t.id)) {
                case ThreadStatus::Runnable: runnable.push_back(t.id); break;
                case ThreadStatus::Blocked: any_blocked = true; break;
                case ThreadStatus::Finished: break;
            }
        }
        if (runnable.empty()) {
            if (any_blocked) {
                report.deadlock_states++;
            } else {
                report.final_states.insert(node.state.snapshot());
            }
            continue;
        }
        if (runnable.size() > 1) report.single_trace = false;
        if (node.depth >= opts.max_depth) {
            report.blowup = true;
            continue;
        }
        for (int tid : runnable) {
            machine.state = node.state;
            StepResult res = machine.step_thread(tid);
            report.transitions++;
            if (res.kind == StepKind::Fault) {
                std::string kind = res.fault_code == "E-RT-UNAVAILABLE" ? "unavailable"
                                   : res.fault_code == "E-RT-UNINIT"    ? "uninit"
                                                                        : "fault";
                log.add(kind, res.fault_code + ": " + res.detail);
                continue;
            }
            if (res.kind != StepKind::Stepped) continue;
            std::string snap = machine.state.snapshot();
            if (visited.insert(snap).second) {
                stack.push_back(Node{machine.state, node.depth + 1});
            }
        }
    }
    return report;
}

}  // namespace mool
