#include "mool/typecheck.hpp"

#include <algorithm>
#include <sstream>

namespace mool {

Checker::Checker(const Program& prog, CheckOptions opts, DiagnosticBag& diags)
    : prog_(prog), opts_(opts), diags_(diags) {}

bool Checker::type_sub(const Type& a, const Type& b) const {
    return subtype(a, b, opts_.subtype_mode);
}

bool Checker::type_equiv(const Type& a, const Type& b) const {
    return type_sub(a, b) && type_sub(b, a);
}

std::optional<Type> Checker::join_types(const Type& a, const Type& b) const {
    if (type_sub(a, b)) return b;
    if (type_sub(b, a)) return a;
    return std::nullopt;
}

std::optional<Env> Checker::merge_env(const Env& a, const Env& b) const {
    if (a.any) return b;
    if (b.any) return a;
    if (a.entries.size() != b.entries.size()) return std::nullopt;
    Env out;
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    for (; ia != a.entries.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return std::nullopt;
        const EnvEntry& ea = ia->second;
        const EnvEntry& eb = ib->second;
        if (ea.assigned != eb.assigned) {
            // one path wrote the field, the other left it unset; reconcilable
            // only when nothing linear would be lost
            const EnvEntry& live = ea.assigned ? ea : eb;
            if (is_linear(live.type)) return std::nullopt;
            out.entries[ia->first] = EnvEntry{live.type, false};
            continue;
        }
        std::optional<Type> j = join_types(ea.type, eb.type);
        if (!j) return std::nullopt;
        out.entries[ia->first] = EnvEntry{*j, ea.assigned};
    }
    return out;
}

std::optional<TypeEnv> Checker::merge_typeenv(const TypeEnv& a, const TypeEnv& b) const {
    if (!a.is_pair && a.flat.any) return b;
    if (!b.is_pair && b.flat.any) return a;
    if (a.is_pair != b.is_pair) return std::nullopt;
    if (a.is_pair) {
        auto l = merge_env(a.left, b.left);
        auto r = merge_env(a.right, b.right);
        if (!l || !r) return std::nullopt;
        return TypeEnv::pair(std::move(*l), std::move(*r));
    }
    auto m = merge_env(a.flat, b.flat);
    if (!m) return std::nullopt;
    return TypeEnv::of(std::move(*m));
}

bool Checker::env_equiv(const Env& a, const Env& b) const {
    if (a.any || b.any) return true;
    if (a.entries.size() != b.entries.size()) return false;
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    for (; ia != a.entries.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (ia->second.assigned != ib->second.assigned) return false;
        if (!type_equiv(ia->second.type, ib->second.type)) return false;
    }
    return true;
}

bool Checker::typeenv_equiv(const TypeEnv& a, const TypeEnv& b) const {
    if (!a.is_pair && a.flat.any) return true;
    if (!b.is_pair && b.flat.any) return true;
    if (a.is_pair != b.is_pair) return false;
    if (a.is_pair) return env_equiv(a.left, b.left) && env_equiv(a.right, b.right);
    return env_equiv(a.flat, b.flat);
}

bool Checker::sub_env(const Env& a, const Env& b) const {
    if (a.any || b.any) return true;
    if (a.entries.size() != b.entries.size()) return false;
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    for (; ia != a.entries.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (!ia->second.assigned && ib->second.assigned) return false;
        if (!type_sub(ia->second.type, ib->second.type)) return false;
    }
    return true;
}

Env Checker::consume(ExprResult& r, const SourceSpan& span, const char* how) {
    if (!r.pending_variant.empty()) {
        diags_.error("E-VARIANT-OUTSIDE-CONDITION",
                     std::string("the result of this variant-typed call ") + how +
                         "; it must be tested directly by an if or while condition",
                     span);
        r.pending_variant.clear();
        if (!r.flat && r.split) return r.split->first;
    }
    if (r.flat) return *r.flat;
    if (r.split) {
        diags_.error("E-BRANCH-ENV-MISMATCH",
                     "the true and false paths of this boolean lead to incompatible states",
                     span);
        return r.split->first;
    }
    return Env{};
}

void Checker::strict_core_violation(const char* what, const SourceSpan& span) {
    if (opts_.strict_core) {
        diags_.error("E-STRICT-CORE", std::string(what) + " is not part of the core language",
                     span);
    }
}

// ---- expressions ------------------------------------------------------------

namespace {

ExprResult result_of(Type t, Env env) {
    ExprResult r;
    r.type = std::move(t);
    if (r.type.kind == Type::Kind::Boolean) r.split = std::make_pair(env, env);
    r.flat = std::move(env);
    return r;
}

const char* key_describe(const std::string& key) {
    return key.rfind("this.", 0) == 0 ? "field" : "identifier";
}

}  // namespace

ExprResult Checker::check_expr(Env env, const ExprPtr& e, const ClassDecl& cls) {
    if (const auto* x = e->as<LitE>()) {
        const Value& v = x->value;
        if (v.is_unit()) return result_of(Type::unit(), std::move(env));
        if (const auto* b = v.as_bool()) {
            ExprResult r;
            r.type = Type::boolean();
            if (b->v) {
                r.split = std::make_pair(env, Env::anything());
            } else {
                r.split = std::make_pair(Env::anything(), env);
            }
            r.flat = std::move(env);
            return r;
        }
        if (v.as_int()) {
            strict_core_violation("an integer literal", e->span);
            return result_of(Type::integer(), std::move(env));
        }
        if (v.as_str()) {
            strict_core_violation("a string literal", e->span);
            return result_of(Type::str(), std::move(env));
        }
        diags_.error("E-PARSE", "runtime-only value in source program", e->span);
        return result_of(Type::unit(), std::move(env));
    }

    if (const auto* x = e->as<IdentE>()) {
        auto it = env.entries.find(x->name);
        if (it == env.entries.end()) {
            diags_.error("E-LINEAR-REUSE",
                         "'" + x->name + "' is no longer available (its linear value was "
                         "already used)",
                         e->span);
            return result_of(Type::unit(), std::move(env));
        }
        Type t = it->second.type;
        if (is_linear(t)) env.entries.erase(it);
        return result_of(std::move(t), std::move(env));
    }

    if (e->as<ThisE>()) {
        diags_.error("E-THIS-VALUE", "'this' can only be used as a receiver", e->span);
        return result_of(Type::unit(), std::move(env));
    }

    if (const auto* x = e->as<FieldAccessE>()) {
        if (!x->recv->as<ThisE>()) {
            diags_.error("E-BAD-FIELD-ACCESS", "fields can only be read through 'this'", e->span);
            return result_of(Type::unit(), std::move(env));
        }
        std::string key = "this." + x->field;
        auto it = env.entries.find(key);
        if (it == env.entries.end()) {
            diags_.error("E-LINEAR-REUSE",
                         "field '" + x->field + "' is no longer available (its linear value "
                         "was already used); assign it before reading again",
                         e->span);
            return result_of(Type::unit(), std::move(env));
        }
        if (!it->second.assigned) {
            diags_.error("E-READ-UNASSIGNED",
                         "field '" + x->field + "' may be read before its first assignment",
                         e->span);
        }
        Type t = it->second.type;
        if (is_linear(t)) env.entries.erase(it);
        return result_of(std::move(t), std::move(env));
    }

    if (const auto* x = e->as<SeqE>()) {
        ExprResult first = check_expr(std::move(env), x->first, cls);
        Env mid = consume(first, x->first->span, "is discarded");
        return check_expr(std::move(mid), x->second, cls);
    }

    if (const auto* x = e->as<LetE>()) {
        strict_core_violation("a local variable declaration", e->span);
        ExprResult init = check_expr(std::move(env), x->init, cls);
        Env mid = consume(init, x->init->span, "is stored in a local");
        if (!type_sub(init.type, x->declared)) {
            diags_.error("E-TYPE-MISMATCH",
                         "cannot initialize '" + x->name + "' of type " +
                             type_to_string(x->declared) + " with a value of type " +
                             type_to_string(init.type),
                         e->span);
        }
        mid.entries[x->name] = EnvEntry{x->declared, true};
        ExprResult body = check_expr(std::move(mid), x->body, cls);
        // report a leaked linear local once, then drop the binding everywhere
        if (body.flat) {
            check_param_exit(*body.flat, x->name, "local", e->span);
            if (body.split) {
                body.split->first.entries.erase(x->name);
                body.split->second.entries.erase(x->name);
            }
        } else if (body.split) {
            check_param_exit(body.split->first, x->name, "local", e->span);
            body.split->second.entries.erase(x->name);
        }
        if (body.pending_variant == x->name) body.pending_variant.clear();
        return body;
    }

    if (const auto* x = e->as<AssignE>()) {
        ExprResult rhs = check_expr(std::move(env), x->value, cls);
        Env out = consume(rhs, x->value->span, "is stored in a field");
        const FieldDecl* field = cls.find_field(x->field);
        if (field && !type_sub(rhs.type, field->type)) {
            diags_.error("E-TYPE-MISMATCH",
                         "cannot assign a value of type " + type_to_string(rhs.type) +
                             " to field '" + x->field + "' of type " +
                             type_to_string(field->type),
                         e->span);
        }
        std::string key = "this." + x->field;
        auto it = out.entries.find(key);
        if (it != out.entries.end() && it->second.assigned && is_linear(it->second.type)) {
            diags_.error("E-ASSIGN-OVER-LINEAR",
                         "field '" + x->field + "' still holds a linear object; it cannot be "
                         "overwritten",
                         e->span);
        }
        out.entries[key] = EnvEntry{rhs.type, true};
        return result_of(Type::unit(), std::move(out));
    }

    if (const auto* x = e->as<NewE>()) {
        const ClassDecl* target = prog_.find_class(x->class_name);
        if (!target) {
            diags_.error("E-UNKNOWN-CLASS", "unknown class '" + x->class_name + "'", e->span);
            return result_of(Type::unit(), std::move(env));
        }
        return result_of(Type::object(target->name, target->usage), std::move(env));
    }

    if (const auto* x = e->as<SpawnE>()) {
        ExprResult body = check_expr(std::move(env), x->body, cls);
        Env out = consume(body, x->body->span, "escapes to a spawned thread");
        if (is_linear(body.type)) {
            diags_.error("E-SPAWN-LINEAR",
                         "a spawned expression must not produce a linear value (it would "
                         "never be consumed)",
                         e->span);
        }
        return result_of(Type::unit(), std::move(out));
    }

    if (const auto* x = e->as<PrintE>()) {
        strict_core_violation("'print'", e->span);
        ExprResult arg = check_expr(std::move(env), x->arg, cls);
        Env out = consume(arg, x->arg->span, "is printed");
        if (is_linear(arg.type)) {
            diags_.error("E-TYPE-MISMATCH", "'print' requires an unrestricted value", e->span);
        }
        return result_of(Type::unit(), std::move(out));
    }

    if (const auto* x = e->as<BinOpE>()) {
        strict_core_violation("an arithmetic or comparison operator", e->span);
        ExprResult lhs = check_expr(std::move(env), x->lhs, cls);
        Env mid = consume(lhs, x->lhs->span, "is used as an operand");
        ExprResult rhs = check_expr(std::move(mid), x->rhs, cls);
        Env out = consume(rhs, x->rhs->span, "is used as an operand");
        auto mismatch = [&](const char* op) {
            diags_.error("E-TYPE-MISMATCH",
                         std::string("operator '") + op + "' cannot combine " +
                             type_to_string(lhs.type) + " and " + type_to_string(rhs.type),
                         e->span);
        };
        using K = Type::Kind;
        switch (x->op) {
            case BinOpKind::Add:
                if (lhs.type.kind == K::Int && rhs.type.kind == K::Int) {
                    return result_of(Type::integer(), std::move(out));
                }
                if ((lhs.type.kind == K::Str && (rhs.type.kind == K::Str || rhs.type.kind == K::Int)) ||
                    (lhs.type.kind == K::Int && rhs.type.kind == K::Str)) {
                    return result_of(Type::str(), std::move(out));
                }
                mismatch("+");
                return result_of(Type::integer(), std::move(out));
            case BinOpKind::Sub:
                if (lhs.type.kind != K::Int || rhs.type.kind != K::Int) mismatch("-");
                return result_of(Type::integer(), std::move(out));
            case BinOpKind::Le:
            case BinOpKind::Ge:
                if (lhs.type.kind != K::Int || rhs.type.kind != K::Int) {
                    mismatch(x->op == BinOpKind::Le ? "<=" : ">=");
                }
                return result_of(Type::boolean(), std::move(out));
            case BinOpKind::Eq:
                if (lhs.type.kind != rhs.type.kind ||
                    (lhs.type.kind != K::Int && lhs.type.kind != K::Str &&
                     lhs.type.kind != K::Boolean)) {
                    mismatch("==");
                }
                return result_of(Type::boolean(), std::move(out));
        }
        return result_of(Type::unit(), std::move(out));
    }

    if (const auto* x = e->as<CallE>()) {
        if (x->kind == CallKind::Self) {
            const MethodDecl* sig = cls.find_method(x->method);
            if (!sig) {
                diags_.error("E-UNDECLARED-METHOD",
                             "class '" + cls.name + "' has no method '" + x->method + "'",
                             e->span);
                return result_of(Type::unit(), std::move(env));
            }
            Env cur = std::move(env);
            if (x->args.size() != sig->params.size()) {
                diags_.error("E-ARITY",
                             "method '" + x->method + "' expects " +
                                 std::to_string(sig->params.size()) + " argument(s), got " +
                                 std::to_string(x->args.size()),
                             e->span);
            }
            for (size_t i = 0; i < x->args.size(); ++i) {
                ExprResult arg = check_expr(std::move(cur), x->args[i], cls);
                cur = consume(arg, x->args[i]->span, "is passed as an argument");
                if (i < sig->params.size() && !type_sub(arg.type, sig->params[i].type)) {
                    diags_.error("E-TYPE-MISMATCH",
                                 "argument " + std::to_string(i + 1) + " of '" + x->method +
                                     "' has type " + type_to_string(arg.type) + ", expected " +
                                     type_to_string(sig->params[i].type),
                                 x->args[i]->span);
                }
            }
            return result_of(sig->return_type, std::move(cur));
        }

        // protocol call through a field or local
        std::string key;
        SourceSpan recv_span = x->recv->span;
        if (const auto* fa = x->recv->as<FieldAccessE>()) {
            key = "this." + fa->field;
        } else if (const auto* id = x->recv->as<IdentE>()) {
            strict_core_violation("a method call on a local or parameter", e->span);
            key = id->name;
        } else {
            diags_.error("E-BAD-RECEIVER",
                         "method calls are only allowed on this, fields, and locals", e->span);
            return result_of(Type::unit(), std::move(env));
        }

        Env cur = std::move(env);
        // arguments evaluate before the call applies
        std::vector<Type> arg_types;
        for (const auto& a : x->args) {
            ExprResult arg = check_expr(std::move(cur), a, cls);
            cur = consume(arg, a->span, "is passed as an argument");
            arg_types.push_back(arg.type);
        }

        auto it = cur.entries.find(key);
        if (it == cur.entries.end()) {
            diags_.error("E-LINEAR-REUSE",
                         std::string(key_describe(key)) + " '" + key +
                             "' is no longer available (its linear value was already used)",
                         recv_span);
            return result_of(Type::unit(), std::move(cur));
        }
        if (!it->second.assigned) {
            diags_.error("E-READ-UNASSIGNED",
                         "field may be used before its first assignment", recv_span);
        }
        if (it->second.type.kind != Type::Kind::Object) {
            diags_.error("E-TYPE-MISMATCH",
                         "cannot call a method on a value of type " +
                             type_to_string(it->second.type),
                         e->span);
            return result_of(Type::unit(), std::move(cur));
        }
        const std::string class_name = it->second.type.class_name;
        const ClassDecl* target = prog_.find_class(class_name);
        if (!target) {
            diags_.error("E-UNKNOWN-CLASS", "unknown class '" + class_name + "'", e->span);
            return result_of(Type::unit(), std::move(cur));
        }
        UsagePtr head = unfold(it->second.type.usage);
        const UsageBranch* branch = head->as_branch();
        if (!branch) {
            diags_.error("E-UNAVAILABLE-METHOD",
                         "the receiver's variant usage has not been resolved by a test; no "
                         "method is available",
                         e->span);
            return result_of(Type::unit(), std::move(cur));
        }
        const UsagePtr* cont = branch->find(x->method);
        if (!cont) {
            std::ostringstream avail;
            for (size_t i = 0; i < branch->entries.size(); ++i) {
                if (i) avail << ", ";
                avail << branch->entries[i].first;
            }
            diags_.error("E-UNAVAILABLE-METHOD",
                         "method '" + x->method + "' is not available at this point of the "
                         "protocol of class '" + class_name + "' (available: {" + avail.str() +
                             "})",
                         e->span);
            return result_of(Type::unit(), std::move(cur));
        }
        const MethodDecl* sig = target->find_method(x->method);
        if (!sig) {
            // the usage mentioned an undeclared method; already reported
            return result_of(Type::unit(), std::move(cur));
        }
        if (x->args.size() != sig->params.size()) {
            diags_.error("E-ARITY",
                         "method '" + x->method + "' expects " +
                             std::to_string(sig->params.size()) + " argument(s), got " +
                             std::to_string(x->args.size()),
                         e->span);
        }
        for (size_t i = 0; i < std::min(arg_types.size(), sig->params.size()); ++i) {
            if (!type_sub(arg_types[i], sig->params[i].type)) {
                diags_.error("E-TYPE-MISMATCH",
                             "argument " + std::to_string(i + 1) + " of '" + x->method +
                                 "' has type " + type_to_string(arg_types[i]) + ", expected " +
                                 type_to_string(sig->params[i].type),
                             x->args[i]->span);
            }
        }
        // the receiver advances to the continuation
        UsagePtr cont_head = unfold(*cont);
        if (const auto* variant = cont_head->as_variant()) {
            Env on_true = cur;
            Env on_false = cur;
            on_true.entries[key] = EnvEntry{Type::object(class_name, variant->on_true), true};
            on_false.entries[key] = EnvEntry{Type::object(class_name, variant->on_false), true};
            ExprResult r;
            r.type = sig->return_type;
            r.split = std::make_pair(std::move(on_true), std::move(on_false));
            r.pending_variant = key;
            return r;
        }
        cur.entries[key] = EnvEntry{Type::object(class_name, *cont), true};
        return result_of(sig->return_type, std::move(cur));
    }

    if (const auto* x = e->as<IfE>()) {
        ExprResult cond = check_expr(std::move(env), x->cond, cls);
        if (cond.type.kind != Type::Kind::Boolean) {
            diags_.error("E-TYPE-MISMATCH",
                         "if condition has type " + type_to_string(cond.type) +
                             ", expected boolean",
                         x->cond->span);
        }
        Env on_true = cond.split ? cond.split->first
                                 : (cond.flat ? *cond.flat : Env{});
        Env on_false = cond.split ? cond.split->second
                                  : (cond.flat ? *cond.flat : Env{});
        ExprResult rt = check_expr(std::move(on_true), x->then_e, cls);
        ExprResult rf = check_expr(std::move(on_false), x->else_e, cls);
        for (ExprResult* r : {&rt, &rf}) {
            if (!r->pending_variant.empty()) {
                diags_.error("E-VARIANT-OUTSIDE-CONDITION",
                             "the result of this variant-typed call flows out of an if "
                             "branch; it must be tested directly by an if or while condition",
                             e->span);
                r->pending_variant.clear();
            }
        }
        std::optional<Type> joined = join_types(rt.type, rf.type);
        if (!joined) {
            diags_.error("E-TYPE-MISMATCH",
                         "the branches of this if have incompatible types: " +
                             type_to_string(rt.type) + " vs " + type_to_string(rf.type),
                         e->span);
            joined = rt.type;
        }
        ExprResult out;
        out.type = *joined;
        if (joined->kind == Type::Kind::Boolean && rt.split && rf.split) {
            auto st = merge_env(rt.split->first, rf.split->first);
            auto sf = merge_env(rt.split->second, rf.split->second);
            if (!st || !sf) {
                diags_.error("E-BRANCH-ENV-MISMATCH",
                             "the branches of this if lead to incompatible states", e->span);
                Env fallback = rt.flat ? *rt.flat : rt.split->first;
                return result_of(*joined, std::move(fallback));
            }
            out.split = std::make_pair(*st, *sf);
            auto flat = merge_env(*st, *sf);
            if (flat) out.flat = std::move(*flat);
            return out;
        }
        Env ft = consume(rt, x->then_e->span, "flows out of an if branch");
        Env ff = consume(rf, x->else_e->span, "flows out of an if branch");
        auto merged = merge_env(ft, ff);
        if (!merged) {
            diags_.error("E-BRANCH-ENV-MISMATCH",
                         "the branches of this if lead to incompatible states (a linear "
                         "value is consumed on one side only, or a field diverges)",
                         e->span);
            merged = std::move(ft);
        }
        return result_of(*joined, std::move(*merged));
    }

    if (const auto* x = e->as<WhileE>()) {
        Env entry = env;
        ExprResult cond = check_expr(std::move(env), x->cond, cls);
        if (cond.type.kind != Type::Kind::Boolean) {
            diags_.error("E-TYPE-MISMATCH",
                         "while condition has type " + type_to_string(cond.type) +
                             ", expected boolean",
                         x->cond->span);
        }
        Env on_true = cond.split ? cond.split->first : (cond.flat ? *cond.flat : Env{});
        Env on_false = cond.split ? cond.split->second : (cond.flat ? *cond.flat : Env{});
        ExprResult body = check_expr(std::move(on_true), x->body, cls);
        Env after_body = consume(body, x->body->span, "flows out of a loop body");
        if (!sub_env(after_body, entry)) {
            diags_.error("E-BRANCH-ENV-MISMATCH",
                         "the loop body must restore the state the condition was checked "
                         "in",
                         e->span);
        }
        return result_of(Type::unit(), std::move(on_false));
    }

    if (e->as<InSyncE>() || e->as<VariantResE>()) {
        diags_.error("E-PARSE", "runtime-only expression in source program", e->span);
        return result_of(Type::unit(), std::move(env));
    }

    diags_.error("E-PARSE", "unsupported expression", e->span);
    return result_of(Type::unit(), std::move(env));
}

// ---- usages -------------------------------------------------------------------

void Checker::check_param_exit(Env& env, const std::string& name, const char* what,
                               const SourceSpan& span) {
    if (env.any) return;
    auto it = env.entries.find(name);
    if (it == env.entries.end()) return;  // consumed entirely
    if (it->second.assigned && is_linear(it->second.type)) {
        diags_.error("E-PARAM-NOT-CONSUMED",
                     std::string(what) + " '" + name + "' still holds a linear object of type " +
                         type_to_string(it->second.type) + " at the end of its scope",
                     span);
    }
    env.entries.erase(it);
}

void Checker::check_method_in_branch(Theta& theta, const ClassDecl& cls, const MethodDecl& m,
                                     const UsagePtr& cont, Env sigma,
                                     std::vector<TypeEnv>& finals) {
    Env gamma = method_entry_env(std::move(sigma), m);
    ExprResult res = check_expr(std::move(gamma), m.body, cls);
    if (!type_sub(res.type, m.return_type)) {
        diags_.error("E-TYPE-MISMATCH",
                     "body of method '" + m.name + "' has type " + type_to_string(res.type) +
                         ", declared to return " + type_to_string(m.return_type),
                     m.span);
    }
    if (!res.pending_variant.empty()) {
        diags_.error("E-VARIANT-OUTSIDE-CONDITION",
                     "method '" + m.name + "' returns the untested result of a variant-typed "
                     "call; test it with if or while instead",
                     m.span);
        res.pending_variant.clear();
    }

    bool variant_cont = unfold(cont)->as_variant() != nullptr;
    if (variant_cont && m.return_type.kind == Type::Kind::Boolean && res.split) {
        Env on_true = res.split->first;
        Env on_false = res.split->second;
        for (const auto& p : m.params) {
            check_param_exit(on_true, p.name, "parameter", m.span);
            if (!on_false.any) on_false.entries.erase(p.name);
        }
        finals.push_back(check_usage(theta, TypeEnv::pair(std::move(on_true), std::move(on_false)),
                                     cls, cont));
        return;
    }
    Env flat = consume(res, m.span, "is returned from the method body");
    for (const auto& p : m.params) check_param_exit(flat, p.name, "parameter", m.span);
    finals.push_back(check_usage(theta, TypeEnv::of(std::move(flat)), cls, cont));
}

TypeEnv Checker::check_usage(Theta& theta, TypeEnv env, const ClassDecl& cls, const UsagePtr& u) {
    if (const auto* r = u->as_rec()) {
        std::string key = canon_key(u);
        auto it = theta.find(key);
        if (it != theta.end()) {
            if (!typeenv_equiv(it->second, env)) {
                diags_.error("E-REC-ENV-MISMATCH",
                             "recursive usage of class '" + cls.name +
                                 "' is re-entered with a different field state",
                             cls.span);
            }
            return TypeEnv::anything();
        }
        theta.emplace(key, env);
        return check_usage(theta, std::move(env), cls, substitute_usage(r->body, r->var, u));
    }

    if (const auto* x = u->as_var()) {
        // free usage variables are rejected at resolution; treat as unconstrained
        (void)x;
        return TypeEnv::anything();
    }

    if (const auto* v = u->as_variant()) {
        Env left, right;
        if (env.is_pair) {
            left = env.left;
            right = env.right;
        } else if (env.flat.any) {
            left = right = Env::anything();
        } else {
            left = right = env.flat;
        }
        TypeEnv rt = check_usage(theta, TypeEnv::of(std::move(left)), cls, v->on_true);
        TypeEnv rf = check_usage(theta, TypeEnv::of(std::move(right)), cls, v->on_false);
        auto merged = merge_typeenv(rt, rf);
        if (!merged) {
            diags_.error("E-VARIANT-ENV-MISMATCH",
                         "the two alternatives of a variant of class '" + cls.name +
                             "' end in different field states",
                         cls.span);
            return rt;
        }
        return *merged;
    }

    const auto* b = u->as_branch();
    if (!b) return TypeEnv::anything();

    Env sigma;
    if (env.is_pair) {
        auto merged = merge_env(env.left, env.right);
        if (!merged) {
            diags_.error("E-BRANCH-ENV-MISMATCH",
                         "a boolean method of class '" + cls.name +
                             "' leaves incompatible true/false states but its continuation "
                             "is not a variant",
                         cls.span);
            sigma = env.left;
        } else {
            sigma = std::move(*merged);
        }
    } else {
        sigma = env.flat;
    }
    if (sigma.any) return TypeEnv::anything();

    if (b->qual == Qualifier::Un && !b->entries.empty()) {
        for (const auto& [key, entry] : sigma.entries) {
            if (entry.assigned && is_linear(entry.type)) {
                diags_.error("E-UN-BRANCH-LIN-FIELD",
                             "class '" + cls.name + "' becomes shared while field '" + key +
                                 "' still holds a linear object (no linear fields are allowed "
                                 "in shared objects)",
                             cls.span);
            }
        }
    }

    if (b->entries.empty()) return TypeEnv::of(std::move(sigma));

    std::vector<TypeEnv> finals;
    for (const auto& [label, cont] : b->entries) {
        const MethodDecl* m = cls.find_method(label);
        if (!m) continue;  // flagged at resolution
        check_method_in_branch(theta, cls, *m, cont, sigma, finals);
    }
    if (finals.empty()) return TypeEnv::anything();
    TypeEnv acc = finals[0];
    for (size_t i = 1; i < finals.size(); ++i) {
        auto merged = merge_typeenv(acc, finals[i]);
        if (!merged) {
            diags_.error("E-BRANCH-ENV-MISMATCH",
                         "the alternatives of a usage branch of class '" + cls.name +
                             "' end in different field states",
                         cls.span);
            return acc;
        }
        acc = std::move(*merged);
    }
    return acc;
}

// ---- classes / programs ---------------------------------------------------------

Env Checker::initial_class_env(const ClassDecl& cls) const {
    Env sigma;
    for (const auto& f : cls.fields) {
        sigma.entries["this." + f.name] = EnvEntry{f.type, !f.type.is_object()};
    }
    return sigma;
}

Env Checker::method_entry_env(Env fields, const MethodDecl& m) const {
    for (const auto& p : m.params) {
        fields.entries[p.name] = EnvEntry{p.type, true};
    }
    return fields;
}

void Checker::check_non_usage_method(const ClassDecl& cls, const MethodDecl& m) {
    Env fields;
    for (const auto& f : cls.fields) {
        fields.entries["this." + f.name] = EnvEntry{f.type, true};
    }
    Env gamma = method_entry_env(fields, m);
    ExprResult res = check_expr(std::move(gamma), m.body, cls);
    if (!type_sub(res.type, m.return_type)) {
        diags_.error("E-TYPE-MISMATCH",
                     "body of method '" + m.name + "' has type " + type_to_string(res.type) +
                         ", declared to return " + type_to_string(m.return_type),
                     m.span);
    }
    Env flat = consume(res, m.span, "is returned from the method body");
    for (const auto& p : m.params) check_param_exit(flat, p.name, "parameter", m.span);
    if (!env_equiv(flat, fields)) {
        diags_.error("E-NONUSAGE-ENV-CHANGED",
                     "method '" + m.name + "' is not part of the usage of class '" + cls.name +
                         "' and therefore must leave every field at its declared type",
                     m.span);
    }
}

void Checker::check_class(const ClassDecl& cls) {
    if (opts_.strict_core) {
        for (const auto& m : cls.methods) {
            if (m.params.size() != 1) {
                strict_core_violation("a method with other than exactly one parameter", m.span);
            }
        }
        auto flag_type = [&](const Type& t, const SourceSpan& sp) {
            if (t.kind == Type::Kind::Int || t.kind == Type::Kind::Str) {
                strict_core_violation("the int/string type extension", sp);
            }
        };
        for (const auto& f : cls.fields) flag_type(f.type, f.span);
        for (const auto& m : cls.methods) {
            flag_type(m.return_type, m.span);
            for (const auto& p : m.params) flag_type(p.type, p.span);
        }
    }

    Theta theta;
    TypeEnv final_env = check_usage(theta, TypeEnv::of(initial_class_env(cls)), cls, cls.usage);

    Env flat;
    if (final_env.is_pair) {
        auto merged = merge_env(final_env.left, final_env.right);
        flat = merged ? *merged : final_env.left;
    } else {
        flat = final_env.flat;
    }
    if (!flat.any) {
        for (const auto& [key, entry] : flat.entries) {
            if (key.rfind("this.", 0) != 0) continue;
            if (entry.assigned && is_linear(entry.type)) {
                diags_.error("E-LIN-FIELD-AT-END",
                             "field '" + key.substr(5) + "' of class '" + cls.name +
                                 "' still holds a linear object of type " +
                                 type_to_string(entry.type) + " when the protocol ends",
                             cls.span);
            }
        }
    }

    std::set<std::string> in_usage = usage_labels(cls.usage);
    for (const auto& m : cls.methods) {
        if (!in_usage.count(m.name)) check_non_usage_method(cls, m);
    }
}

void Checker::check_program() {
    for (const auto& cls : prog_.classes) check_class(cls);
}

DiagnosticBag check_program(const Program& prog, CheckOptions opts) {
    DiagnosticBag diags;
    Checker checker(prog, opts, diags);
    checker.check_program();
    return diags;
}

}  // namespace mool
