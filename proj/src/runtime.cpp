#include "mool/runtime.hpp"

#include <sstream>
#include <stdexcept>

namespace mool {

Value init_value(const Type& t) {
    switch (t.kind) {
        case Type::Kind::Unit: return Value::unit();
        case Type::Kind::Boolean: return Value::boolean(false);
        case Type::Kind::Int: return Value::integer(0);
        case Type::Kind::Str: return Value::str("");
        case Type::Kind::Object: return Value::uninit();
    }
    return Value::unit();
}

std::string TraceEvent::render() const {
    std::string s = "#" + std::to_string(step) + " T" + std::to_string(thread) + " " + rule;
    if (!detail.empty()) s += " " + detail;
    return s;
}

std::string MachineState::snapshot() const {
    std::ostringstream os;
    os << "H|";
    for (const auto& [oid, rec] : heap) {
        os << "o" << oid << "=" << rec.class_name << "[" << canon_key(rec.usage) << "]l"
           << rec.lock << "{";
        for (const auto& [name, value] : rec.fields) {
            os << name << "=" << value.debug() << ",";
        }
        os << "};";
    }
    os << "T|";
    for (const auto& t : threads) {
        os << "t" << t.id << ":" << pretty_print(t.expr) << ";";
    }
    return os.str();
}

std::string RunReport::trace_text() const {
    std::string s;
    for (const auto& ev : trace) {
        s += ev.render();
        s += "\n";
    }
    return s;
}

// ---- decomposition ------------------------------------------------------------

namespace {

bool is_val(const ExprPtr& e) {
    return e->as<LitE>() != nullptr;
}

}  // namespace

std::optional<Decomposition> decompose(const ExprPtr& e) {
    if (is_val(e)) return std::nullopt;
    if (const auto* x = e->as<SeqE>()) {
        if (!is_val(x->first)) {
            auto d = decompose(x->first);
            if (d) {
                d->path.insert(d->path.begin(), 0);
                return d;
            }
        }
        return Decomposition{e, {}};
    }
    if (const auto* x = e->as<LetE>()) {
        if (!is_val(x->init)) {
            auto d = decompose(x->init);
            if (d) {
                d->path.insert(d->path.begin(), 0);
                return d;
            }
        }
        return Decomposition{e, {}};
    }
    if (const auto* x = e->as<AssignE>()) {
        if (!is_val(x->value)) {
            auto d = decompose(x->value);
            if (d) {
                d->path.insert(d->path.begin(), 0);
                return d;
            }
        }
        return Decomposition{e, {}};
    }
    if (const auto* x = e->as<CallE>()) {
        // receivers are not evaluation positions: calls go through a field or
        // through an already-substituted reference
        for (size_t i = 0; i < x->args.size(); ++i) {
            if (!is_val(x->args[i])) {
                auto d = decompose(x->args[i]);
                if (d) {
                    d->path.insert(d->path.begin(), static_cast<int>(i));
                    return d;
                }
            }
        }
        return Decomposition{e, {}};
    }
    if (const auto* x = e->as<IfE>()) {
        if (!is_val(x->cond)) {
            auto d = decompose(x->cond);
            if (d) {
                d->path.insert(d->path.begin(), 0);
                return d;
            }
        }
        return Decomposition{e, {}};
    }
    if (const auto* x = e->as<PrintE>()) {
        if (!is_val(x->arg)) {
            auto d = decompose(x->arg);
            if (d) {
                d->path.insert(d->path.begin(), 0);
                return d;
            }
        }
        return Decomposition{e, {}};
    }
    if (const auto* x = e->as<BinOpE>()) {
        if (!is_val(x->lhs)) {
            auto d = decompose(x->lhs);
            if (d) {
                d->path.insert(d->path.begin(), 0);
                return d;
            }
        }
        if (!is_val(x->rhs)) {
            auto d = decompose(x->rhs);
            if (d) {
                d->path.insert(d->path.begin(), 1);
                return d;
            }
        }
        return Decomposition{e, {}};
    }
    if (const auto* x = e->as<InSyncE>()) {
        if (!is_val(x->body)) {
            auto d = decompose(x->body);
            if (d) {
                d->path.insert(d->path.begin(), 0);
                return d;
            }
        }
        return Decomposition{e, {}};
    }
    if (const auto* x = e->as<VariantResE>()) {
        if (!is_val(x->body)) {
            auto d = decompose(x->body);
            if (d) {
                d->path.insert(d->path.begin(), 0);
                return d;
            }
        }
        return Decomposition{e, {}};
    }
    // FieldAccess, New, While, Spawn, Ident, This: the node itself is the redex
    return Decomposition{e, {}};
}

namespace {

ExprPtr plug(const ExprPtr& root, const std::vector<int>& path, size_t at, ExprPtr repl) {
    if (at == path.size()) return repl;
    int idx = path[at];
    if (const auto* x = root->as<SeqE>()) {
        return make_expr(SeqE{plug(x->first, path, at + 1, std::move(repl)), x->second},
                         root->span);
    }
    if (const auto* x = root->as<LetE>()) {
        return make_expr(LetE{x->name, x->declared, plug(x->init, path, at + 1, std::move(repl)),
                              x->body},
                         root->span);
    }
    if (const auto* x = root->as<AssignE>()) {
        return make_expr(AssignE{x->recv, x->field, plug(x->value, path, at + 1, std::move(repl))},
                         root->span);
    }
    if (const auto* x = root->as<CallE>()) {
        std::vector<ExprPtr> args = x->args;
        args[idx] = plug(args[idx], path, at + 1, std::move(repl));
        return make_expr(CallE{x->kind, x->recv, x->method, std::move(args)}, root->span);
    }
    if (const auto* x = root->as<IfE>()) {
        return make_expr(IfE{plug(x->cond, path, at + 1, std::move(repl)), x->then_e, x->else_e},
                         root->span);
    }
    if (const auto* x = root->as<PrintE>()) {
        return make_expr(PrintE{plug(x->arg, path, at + 1, std::move(repl))}, root->span);
    }
    if (const auto* x = root->as<BinOpE>()) {
        if (idx == 0) {
            return make_expr(BinOpE{x->op, plug(x->lhs, path, at + 1, std::move(repl)), x->rhs},
                             root->span);
        }
        return make_expr(BinOpE{x->op, x->lhs, plug(x->rhs, path, at + 1, std::move(repl))},
                         root->span);
    }
    if (const auto* x = root->as<InSyncE>()) {
        return make_expr(InSyncE{x->oid, plug(x->body, path, at + 1, std::move(repl))},
                         root->span);
    }
    if (const auto* x = root->as<VariantResE>()) {
        return make_expr(VariantResE{x->oid, plug(x->body, path, at + 1, std::move(repl))},
                         root->span);
    }
    throw std::logic_error("plug: path into a leaf");
}

}  // namespace

// ---- stepping -----------------------------------------------------------------

Machine::Machine(const Program& prog, std::ostream* o) : out(o), prog_(prog) {}

void Machine::bootstrap() {
    const ClassDecl* main_cls = prog_.find_class("Main");
    if (!main_cls) throw std::logic_error("bootstrap: no Main class");
    int oid = state.next_oid++;
    ObjectRecord rec;
    rec.class_name = main_cls->name;
    rec.usage = main_cls->usage;
    for (const auto& f : main_cls->fields) rec.fields[f.name] = init_value(f.type);
    state.heap.emplace(oid, std::move(rec));
    ExprPtr call = make_expr(CallE{CallKind::Self, make_expr(LitE{Value::object(oid)}), "main", {}});
    state.threads.push_back(Thread{0, std::move(call)});
}

namespace {

struct Applied {
    StepKind kind = StepKind::Stepped;
    ExprPtr replacement;
    std::string rule;
    std::string detail;
    std::string fault_code;

    static Applied fault(std::string code, std::string detail) {
        Applied a;
        a.kind = StepKind::Fault;
        a.fault_code = std::move(code);
        a.detail = std::move(detail);
        return a;
    }
    static Applied blocked() {
        Applied a;
        a.kind = StepKind::Blocked;
        return a;
    }
    static Applied ok(ExprPtr e, std::string rule, std::string detail = "") {
        Applied a;
        a.replacement = std::move(e);
        a.rule = std::move(rule);
        a.detail = std::move(detail);
        return a;
    }
};

struct Stepper {
    Machine& m;

    const ClassDecl* class_of(const std::string& name) { return m.program().find_class(name); }

    // resolves the receiver object of a call with value receiver/arguments;
    // reads through a field without consuming it
    std::optional<int> call_target(const CallE& call, Applied& fault_out) {
        const ExprPtr& recv = call.recv;
        if (const auto* lit = recv->as<LitE>()) {
            if (const auto* o = lit->value.as_obj()) return o->oid;
            fault_out = Applied::fault("E-RT-UNINIT",
                                       "method call through an uninitialized reference");
            return std::nullopt;
        }
        if (const auto* fa = recv->as<FieldAccessE>()) {
            const auto* base = fa->recv->as<LitE>();
            if (!base || !base->value.as_obj()) {
                fault_out = Applied::fault("E-RT-UNINIT",
                                           "field call through an uninitialized reference");
                return std::nullopt;
            }
            const ObjectRecord& rec = m.state.heap.at(base->value.as_obj()->oid);
            auto it = rec.fields.find(fa->field);
            if (it == rec.fields.end()) {
                fault_out = Applied::fault("E-RT-STUCK", "unknown field '" + fa->field + "'");
                return std::nullopt;
            }
            if (const auto* o = it->second.as_obj()) return o->oid;
            fault_out = Applied::fault(
                "E-RT-UNINIT", "call on field '" + fa->field + "' holding no object reference");
            return std::nullopt;
        }
        fault_out = Applied::fault("E-RT-STUCK", "unresolved call receiver");
        return std::nullopt;
    }

    ExprPtr bind_body(const MethodDecl& sig, const CallE& call, int oid) {
        std::map<std::string, Value> env;
        for (size_t i = 0; i < sig.params.size() && i < call.args.size(); ++i) {
            env[sig.params[i].name] = call.args[i]->as<LitE>()->value;
        }
        return substitute(sig.body, env, Value::object(oid));
    }

    Applied apply(const ExprPtr& e) {
        if (const auto* x = e->as<SeqE>()) {
            return Applied::ok(x->second, "R-Seq");
        }
        if (const auto* x = e->as<LetE>()) {
            std::map<std::string, Value> env{{x->name, x->init->as<LitE>()->value}};
            return Applied::ok(substitute(x->body, env, std::nullopt), "R-Let",
                               x->name + " := " + x->init->as<LitE>()->value.debug());
        }
        if (const auto* x = e->as<FieldAccessE>()) {
            const auto* base = x->recv->as<LitE>();
            if (!base || !base->value.as_obj()) {
                return Applied::fault("E-RT-UNINIT",
                                      "field read through an uninitialized reference");
            }
            int oid = base->value.as_obj()->oid;
            ObjectRecord& rec = m.state.heap.at(oid);
            auto it = rec.fields.find(x->field);
            if (it == rec.fields.end()) {
                return Applied::fault("E-RT-STUCK", "unknown field '" + x->field + "'");
            }
            Value v = it->second;
            bool linear = false;
            if (const auto* o = v.as_obj()) {
                linear = qualifier_of(m.state.heap.at(o->oid).usage) == Qualifier::Lin;
            }
            std::string detail = "o" + std::to_string(oid) + "." + x->field;
            if (linear) {
                it->second = Value::unit();  // a linear field yields its value exactly once
                return Applied::ok(make_expr(LitE{v}, e->span), "R-LinField", detail);
            }
            return Applied::ok(make_expr(LitE{v}, e->span), "R-UnField", detail);
        }
        if (const auto* x = e->as<AssignE>()) {
            const auto* base = x->recv->as<LitE>();
            if (!base || !base->value.as_obj()) {
                return Applied::fault("E-RT-UNINIT",
                                      "assignment through an uninitialized reference");
            }
            int oid = base->value.as_obj()->oid;
            ObjectRecord& rec = m.state.heap.at(oid);
            Value v = x->value->as<LitE>()->value;
            rec.fields[x->field] = v;
            return Applied::ok(unit_lit(e->span), "R-Assign",
                               "o" + std::to_string(oid) + "." + x->field + " := " + v.debug());
        }
        if (const auto* x = e->as<NewE>()) {
            const ClassDecl* cls = class_of(x->class_name);
            if (!cls) return Applied::fault("E-RT-STUCK", "unknown class '" + x->class_name + "'");
            int oid = m.state.next_oid++;
            ObjectRecord rec;
            rec.class_name = cls->name;
            rec.usage = cls->usage;
            rec.lock = 0;
            for (const auto& f : cls->fields) rec.fields[f.name] = init_value(f.type);
            m.state.heap.emplace(oid, std::move(rec));
            return Applied::ok(make_expr(LitE{Value::object(oid)}, e->span), "R-New",
                               "o" + std::to_string(oid) + " : " + cls->name);
        }
        if (const auto* x = e->as<CallE>()) {
            Applied fault_out;
            std::optional<int> target = call_target(*x, fault_out);
            if (!target) return fault_out;
            int oid = *target;
            ObjectRecord& rec = m.state.heap.at(oid);
            const ClassDecl* cls = class_of(rec.class_name);
            if (!cls) return Applied::fault("E-RT-STUCK", "unknown class '" + rec.class_name + "'");
            const MethodDecl* sig = cls->find_method(x->method);
            if (!sig) {
                return Applied::fault("E-RT-UNAVAILABLE",
                                      "class '" + rec.class_name + "' has no method '" +
                                          x->method + "'");
            }
            std::string target_str = "o" + std::to_string(oid) + "." + x->method;
            if (x->kind == CallKind::Self) {
                return Applied::ok(bind_body(*sig, *x, oid), "R-SelfCall", target_str);
            }
            UsagePtr head = unfold(rec.usage);
            const UsageBranch* branch = head->as_branch();
            const UsagePtr* cont = branch ? branch->find(x->method) : nullptr;
            if (!cont) {
                return Applied::fault("E-RT-UNAVAILABLE",
                                      "method '" + x->method + "' is not available for o" +
                                          std::to_string(oid) + " at usage " +
                                          usage_to_string(rec.usage));
            }
            if (sig->sync && rec.lock == 1) return Applied::blocked();
            rec.usage = *cont;  // the protocol advances with the call
            ExprPtr body = bind_body(*sig, *x, oid);
            if (unfold(*cont)->as_variant()) {
                body = make_expr(VariantResE{oid, std::move(body)}, e->span);
            }
            if (sig->sync) {
                rec.lock = 1;
                return Applied::ok(make_expr(InSyncE{oid, std::move(body)}, e->span), "R-SCall",
                                   target_str + " lock");
            }
            return Applied::ok(std::move(body), "R-Call", target_str);
        }
        if (const auto* x = e->as<IfE>()) {
            const auto* lit = x->cond->as<LitE>();
            const auto* b = lit ? lit->value.as_bool() : nullptr;
            if (!b) return Applied::fault("E-RT-STUCK", "if condition is not a boolean");
            std::string detail;
            if (b->variant_of >= 0) {
                ObjectRecord& rec = m.state.heap.at(b->variant_of);
                const UsageVariant* variant = unfold(rec.usage)->as_variant();
                if (!variant) {
                    return Applied::fault("E-RT-UNAVAILABLE",
                                          "variant resolution on o" +
                                              std::to_string(b->variant_of) +
                                              ", whose usage is not a variant");
                }
                rec.usage = b->v ? variant->on_true : variant->on_false;
                detail = "resolve o" + std::to_string(b->variant_of);
            }
            return Applied::ok(b->v ? x->then_e : x->else_e, b->v ? "R-IfTrue" : "R-IfFalse",
                               detail);
        }
        if (const auto* x = e->as<WhileE>()) {
            ExprPtr again = make_expr(WhileE{x->cond, x->body}, e->span);
            ExprPtr unrolled = make_expr(
                IfE{x->cond, make_expr(SeqE{x->body, std::move(again)}, e->span), unit_lit(e->span)},
                e->span);
            return Applied::ok(std::move(unrolled), "R-While");
        }
        if (const auto* x = e->as<SpawnE>()) {
            int tid = static_cast<int>(m.state.threads.size());
            m.state.threads.push_back(Thread{tid, x->body});
            return Applied::ok(unit_lit(e->span), "R-Spawn", "T" + std::to_string(tid));
        }
        if (const auto* x = e->as<PrintE>()) {
            if (m.out) (*m.out) << x->arg->as<LitE>()->value.display() << "\n";
            return Applied::ok(unit_lit(e->span), "R-Print");
        }
        if (const auto* x = e->as<BinOpE>()) {
            const Value& a = x->lhs->as<LitE>()->value;
            const Value& b = x->rhs->as<LitE>()->value;
            Value out;
            switch (x->op) {
                case BinOpKind::Add:
                    if (a.as_int() && b.as_int()) {
                        out = Value::integer(a.as_int()->v + b.as_int()->v);
                    } else if (a.as_str() || b.as_str()) {
                        out = Value::str(a.display() + b.display());
                    } else {
                        return Applied::fault("E-RT-STUCK", "bad operands for '+'");
                    }
                    break;
                case BinOpKind::Sub:
                    if (!a.as_int() || !b.as_int()) {
                        return Applied::fault("E-RT-STUCK", "bad operands for '-'");
                    }
                    out = Value::integer(a.as_int()->v - b.as_int()->v);
                    break;
                case BinOpKind::Le:
                case BinOpKind::Ge: {
                    if (!a.as_int() || !b.as_int()) {
                        return Applied::fault("E-RT-STUCK", "bad operands for comparison");
                    }
                    bool r = x->op == BinOpKind::Le ? a.as_int()->v <= b.as_int()->v
                                                    : a.as_int()->v >= b.as_int()->v;
                    out = Value::boolean(r);
                    break;
                }
                case BinOpKind::Eq: {
                    bool r;
                    if (a.as_int() && b.as_int()) {
                        r = a.as_int()->v == b.as_int()->v;
                    } else if (a.as_str() && b.as_str()) {
                        r = a.as_str()->v == b.as_str()->v;
                    } else if (a.as_bool() && b.as_bool()) {
                        r = a.as_bool()->v == b.as_bool()->v;
                    } else {
                        return Applied::fault("E-RT-STUCK", "bad operands for '=='");
                    }
                    out = Value::boolean(r);
                    break;
                }
            }
            return Applied::ok(make_expr(LitE{out}, e->span), "R-BinOp");
        }
        if (const auto* x = e->as<InSyncE>()) {
            m.state.heap.at(x->oid).lock = 0;
            return Applied::ok(x->body, "R-InSync", "o" + std::to_string(x->oid) + " unlock");
        }
        if (const auto* x = e->as<VariantResE>()) {
            const auto* b = x->body->as<LitE>()->value.as_bool();
            if (!b) return Applied::fault("E-RT-STUCK", "variant result is not a boolean");
            return Applied::ok(make_expr(LitE{Value::boolean(b->v, x->oid)}, e->span), "R-Variant",
                               "o" + std::to_string(x->oid));
        }
        return Applied::fault("E-RT-STUCK", "no rule applies (unsubstituted identifier?)");
    }
};

}  // namespace

StepResult Machine::step_thread(int tid) {
    ExprPtr root = state.threads.at(tid).expr;
    auto d = decompose(root);
    if (!d) return StepResult{StepKind::Finished, "", "", ""};
    Stepper stepper{*this};
    // R-Spawn may grow the thread vector, so hold no references across apply
    Applied a = stepper.apply(d->redex);
    if (a.kind == StepKind::Fault) return StepResult{StepKind::Fault, "", a.detail, a.fault_code};
    if (a.kind == StepKind::Blocked) return StepResult{StepKind::Blocked, "", "", ""};
    state.threads.at(tid).expr = plug(root, d->path, 0, a.replacement);
    return StepResult{StepKind::Stepped, a.rule, a.detail, ""};
}

ThreadStatus Machine::status(int tid) const {
    const Thread& thread = state.threads.at(tid);
    auto d = decompose(thread.expr);
    if (!d) return ThreadStatus::Finished;
    const auto* call = d->redex->as<CallE>();
    if (!call || call->kind != CallKind::Protocol) return ThreadStatus::Runnable;
    // a sync call on a locked object blocks; everything else can step (or fault)
    Applied scratch;
    Stepper stepper{*const_cast<Machine*>(this)};
    std::optional<int> target = stepper.call_target(*call, scratch);
    if (!target) return ThreadStatus::Runnable;
    const ObjectRecord& rec = state.heap.at(*target);
    const ClassDecl* cls = prog_.find_class(rec.class_name);
    const MethodDecl* sig = cls ? cls->find_method(call->method) : nullptr;
    if (!sig || !sig->sync) return ThreadStatus::Runnable;
    const UsageBranch* branch = unfold(rec.usage)->as_branch();
    if (!branch || !branch->find(call->method)) return ThreadStatus::Runnable;  // will fault
    return rec.lock == 1 ? ThreadStatus::Blocked : ThreadStatus::Runnable;
}

RunReport run_program(const Program& prog, const RunOptions& opts) {
    Machine machine(prog, opts.out);
    machine.bootstrap();
    std::mt19937_64 rng(opts.seed);
    RunReport report;

    while (true) {
        std::vector<int> runnable;
        bool any_blocked = false;
        for (const auto& t : machine.state.threads) {
            switch (machine.status(t.id)) {
                case ThreadStatus::Runnable: runnable.push_back(t.id); break;
                case ThreadStatus::Blocked: any_blocked = true; break;
                case ThreadStatus::Finished: break;
            }
        }
        if (runnable.empty()) {
            if (any_blocked) {
                report.outcome = RunOutcome::Deadlock;
                report.fault_code = "E-RT-DEADLOCK";
                report.detail = "all unfinished threads are blocked on locks";
            } else {
                report.outcome = RunOutcome::Finished;
            }
            return report;
        }
        if (report.steps >= opts.max_steps) {
            report.outcome = RunOutcome::StepLimit;
            report.fault_code = "E-RT-STEP-LIMIT";
            report.detail = "exceeded " + std::to_string(opts.max_steps) + " steps";
            return report;
        }
        int tid = runnable[static_cast<size_t>(rng() % runnable.size())];
        StepResult res = machine.step_thread(tid);
        if (res.kind == StepKind::Fault) {
            report.outcome = RunOutcome::Fault;
            report.fault_code = res.fault_code;
            report.detail = res.detail;
            return report;
        }
        if (res.kind != StepKind::Stepped) continue;
        report.steps++;
        if (opts.collect_trace || opts.trace_out) {
            TraceEvent ev{report.steps, tid, res.rule, res.detail};
            if (opts.trace_out) (*opts.trace_out) << ev.render() << "\n";
            if (opts.collect_trace) report.trace.push_back(std::move(ev));
        }
    }
}

}  // namespace mool
