#include "mool/ast.hpp"

#include <sstream>
#include <stdexcept>

namespace mool {

Qualifier qualifier_of(const Type& t) {
    if (t.kind == Type::Kind::Object) return qualifier_of(t.usage);
    return Qualifier::Un;
}

bool is_linear(const Type& t) {
    return qualifier_of(t) == Qualifier::Lin;
}

bool subtype(const Type& a, const Type& b, SubtypeMode mode) {
    if (a.kind != b.kind) return false;
    if (a.kind != Type::Kind::Object) return true;
    return a.class_name == b.class_name && subtype_usage(a.usage, b.usage, mode);
}

bool type_equal(const Type& a, const Type& b) {
    if (a.kind != b.kind) return false;
    if (a.kind != Type::Kind::Object) return true;
    return a.class_name == b.class_name && usage_structurally_equal(a.usage, b.usage);
}

std::string type_to_string(const Type& t) {
    switch (t.kind) {
        case Type::Kind::Unit: return "unit";
        case Type::Kind::Boolean: return "boolean";
        case Type::Kind::Int: return "int";
        case Type::Kind::Str: return "string";
        case Type::Kind::Object:
            return t.class_name + "[" + (t.usage ? usage_to_string(t.usage) : "?") + "]";
    }
    return "?";
}

// ---- values ----------------------------------------------------------------

std::string Value::display() const {
    if (std::holds_alternative<Unit>(v)) return "unit";
    if (const auto* b = as_bool()) return b->v ? "true" : "false";
    if (const auto* i = as_int()) return std::to_string(i->v);
    if (const auto* s = as_str()) return s->v;
    if (const auto* o = as_obj()) return "<obj" + std::to_string(o->oid) + ">";
    return "<uninit>";
}

std::string Value::debug() const {
    if (const auto* s = as_str()) {
        std::string out = "\"";
        for (char c : s->v) {
            if (c == '"' || c == '\\') out += '\\';
            out += c;
        }
        return out + "\"";
    }
    if (const auto* b = as_bool()) {
        std::string out = b->v ? "true" : "false";
        if (b->variant_of >= 0) out += "@o" + std::to_string(b->variant_of);
        return out;
    }
    return display();
}

bool Value::operator==(const Value& other) const {
    if (v.index() != other.v.index()) return false;
    if (const auto* b = as_bool()) {
        const auto* ob = other.as_bool();
        return b->v == ob->v && b->variant_of == ob->variant_of;
    }
    if (const auto* i = as_int()) return i->v == other.as_int()->v;
    if (const auto* s = as_str()) return s->v == other.as_str()->v;
    if (const auto* o = as_obj()) return o->oid == other.as_obj()->oid;
    return true;  // Unit, Uninit
}

// ---- expressions -----------------------------------------------------------

ExprPtr unit_lit(SourceSpan span) {
    return make_expr(LitE{Value::unit()}, std::move(span));
}

bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    if (a->node.index() != b->node.index()) return false;
    if (const auto* x = a->as<LitE>()) return x->value == b->as<LitE>()->value;
    if (const auto* x = a->as<IdentE>()) return x->name == b->as<IdentE>()->name;
    if (a->as<ThisE>()) return true;
    if (const auto* x = a->as<FieldAccessE>()) {
        const auto* y = b->as<FieldAccessE>();
        return x->field == y->field && expr_equal(x->recv, y->recv);
    }
    if (const auto* x = a->as<SeqE>()) {
        const auto* y = b->as<SeqE>();
        return expr_equal(x->first, y->first) && expr_equal(x->second, y->second);
    }
    if (const auto* x = a->as<AssignE>()) {
        const auto* y = b->as<AssignE>();
        return x->field == y->field && expr_equal(x->recv, y->recv) &&
               expr_equal(x->value, y->value);
    }
    if (const auto* x = a->as<LetE>()) {
        const auto* y = b->as<LetE>();
        return x->name == y->name && type_equal(x->declared, y->declared) &&
               expr_equal(x->init, y->init) && expr_equal(x->body, y->body);
    }
    if (const auto* x = a->as<NewE>()) return x->class_name == b->as<NewE>()->class_name;
    if (const auto* x = a->as<CallE>()) {
        const auto* y = b->as<CallE>();
        if (x->kind != y->kind || x->method != y->method || x->args.size() != y->args.size())
            return false;
        if (!expr_equal(x->recv, y->recv)) return false;
        for (size_t i = 0; i < x->args.size(); ++i) {
            if (!expr_equal(x->args[i], y->args[i])) return false;
        }
        return true;
    }
    if (const auto* x = a->as<IfE>()) {
        const auto* y = b->as<IfE>();
        return expr_equal(x->cond, y->cond) && expr_equal(x->then_e, y->then_e) &&
               expr_equal(x->else_e, y->else_e);
    }
    if (const auto* x = a->as<WhileE>()) {
        const auto* y = b->as<WhileE>();
        return expr_equal(x->cond, y->cond) && expr_equal(x->body, y->body);
    }
    if (const auto* x = a->as<SpawnE>()) return expr_equal(x->body, b->as<SpawnE>()->body);
    if (const auto* x = a->as<PrintE>()) return expr_equal(x->arg, b->as<PrintE>()->arg);
    if (const auto* x = a->as<BinOpE>()) {
        const auto* y = b->as<BinOpE>();
        return x->op == y->op && expr_equal(x->lhs, y->lhs) && expr_equal(x->rhs, y->rhs);
    }
    if (const auto* x = a->as<InSyncE>()) {
        const auto* y = b->as<InSyncE>();
        return x->oid == y->oid && expr_equal(x->body, y->body);
    }
    if (const auto* x = a->as<VariantResE>()) {
        const auto* y = b->as<VariantResE>();
        return x->oid == y->oid && expr_equal(x->body, y->body);
    }
    return false;
}

// ---- declarations ----------------------------------------------------------

const MethodDecl* ClassDecl::find_method(const std::string& n) const {
    for (const auto& m : methods) {
        if (m.name == n) return &m;
    }
    return nullptr;
}

const FieldDecl* ClassDecl::find_field(const std::string& n) const {
    for (const auto& f : fields) {
        if (f.name == n) return &f;
    }
    return nullptr;
}

const ClassDecl* Program::find_class(const std::string& name) const {
    for (const auto& c : classes) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

bool program_equal(const Program& a, const Program& b) {
    if (a.classes.size() != b.classes.size()) return false;
    for (size_t i = 0; i < a.classes.size(); ++i) {
        const auto& ca = a.classes[i];
        const auto& cb = b.classes[i];
        if (ca.name != cb.name) return false;
        if (!usage_structurally_equal(ca.usage, cb.usage)) return false;
        if (ca.fields.size() != cb.fields.size() || ca.methods.size() != cb.methods.size())
            return false;
        for (size_t j = 0; j < ca.fields.size(); ++j) {
            if (ca.fields[j].name != cb.fields[j].name) return false;
            if (!type_equal(ca.fields[j].type, cb.fields[j].type)) return false;
        }
        for (size_t j = 0; j < ca.methods.size(); ++j) {
            const auto& ma = ca.methods[j];
            const auto& mb = cb.methods[j];
            if (ma.name != mb.name || ma.sync != mb.sync) return false;
            if (!type_equal(ma.return_type, mb.return_type)) return false;
            if (ma.params.size() != mb.params.size()) return false;
            for (size_t k = 0; k < ma.params.size(); ++k) {
                if (ma.params[k].name != mb.params[k].name) return false;
                if (!type_equal(ma.params[k].type, mb.params[k].type)) return false;
            }
            if (!expr_equal(ma.body, mb.body)) return false;
        }
    }
    return true;
}

// ---- pretty printing ---------------------------------------------------------

namespace {

struct Printer {
    std::ostringstream os;
    int indent = 0;
    const Program* prog = nullptr;  // for shorthand type annotations

    void nl() {
        os << "\n";
        for (int i = 0; i < indent; ++i) os << "  ";
    }

    std::string type_str(const Type& t) {
        if (t.kind != Type::Kind::Object) return type_to_string(t);
        if (prog) {
            const ClassDecl* c = prog->find_class(t.class_name);
            if (c && c->usage && usage_structurally_equal(c->usage, t.usage)) {
                return t.class_name;  // shorthand: initial usage implied
            }
        }
        return t.class_name + "[" + usage_to_string(t.usage) + "]";
    }

    // precedence: 0 = equality, 1 = relational, 2 = additive, 3 = primary
    static int prec(BinOpKind op) {
        switch (op) {
            case BinOpKind::Eq: return 0;
            case BinOpKind::Le:
            case BinOpKind::Ge: return 1;
            case BinOpKind::Add:
            case BinOpKind::Sub: return 2;
        }
        return 3;
    }

    static const char* op_str(BinOpKind op) {
        switch (op) {
            case BinOpKind::Add: return "+";
            case BinOpKind::Sub: return "-";
            case BinOpKind::Le: return "<=";
            case BinOpKind::Ge: return ">=";
            case BinOpKind::Eq: return "==";
        }
        return "?";
    }

    void expr(const ExprPtr& e, int min_prec = 0) {
        if (const auto* x = e->as<LitE>()) {
            os << x->value.debug();
            return;
        }
        if (const auto* x = e->as<IdentE>()) {
            os << x->name;
            return;
        }
        if (e->as<ThisE>()) {
            os << "this";
            return;
        }
        if (const auto* x = e->as<FieldAccessE>()) {
            expr(x->recv);
            os << "." << x->field;
            return;
        }
        if (const auto* x = e->as<AssignE>()) {
            expr(x->recv);
            os << "." << x->field << " = ";
            expr(x->value);
            return;
        }
        if (const auto* x = e->as<NewE>()) {
            os << "new " << x->class_name << "()";
            return;
        }
        if (const auto* x = e->as<CallE>()) {
            if (x->kind == CallKind::Self && x->recv->as<ThisE>()) {
                os << x->method;
            } else {
                expr(x->recv);
                os << "." << x->method;
            }
            os << "(";
            for (size_t i = 0; i < x->args.size(); ++i) {
                if (i) os << ", ";
                expr(x->args[i]);
            }
            os << ")";
            return;
        }
        if (const auto* x = e->as<SpawnE>()) {
            os << "spawn ";
            expr(x->body);
            return;
        }
        if (const auto* x = e->as<PrintE>()) {
            os << "print(";
            expr(x->arg);
            os << ")";
            return;
        }
        if (const auto* x = e->as<BinOpE>()) {
            int p = prec(x->op);
            bool paren = p < min_prec;
            if (paren) os << "(";
            expr(x->lhs, p);
            os << " " << op_str(x->op) << " ";
            expr(x->rhs, p + 1);
            if (paren) os << ")";
            return;
        }
        if (const auto* x = e->as<IfE>()) {
            os << "if (";
            expr(x->cond);
            os << ") ";
            block(x->then_e);
            os << " else ";
            block(x->else_e);
            return;
        }
        if (const auto* x = e->as<WhileE>()) {
            os << "while (";
            expr(x->cond);
            os << ") ";
            block(x->body);
            return;
        }
        if (const auto* x = e->as<InSyncE>()) {
            os << "insync(o" << x->oid << ") ";
            block(x->body);
            return;
        }
        if (const auto* x = e->as<VariantResE>()) {
            os << "variantof(o" << x->oid << ") ";
            block(x->body);
            return;
        }
        // SeqE / LetE are statement forms; wrap them in a block
        block(e);
    }

    void stmts(const ExprPtr& e) {
        if (const auto* x = e->as<SeqE>()) {
            stmts(x->first);
            nl();
            stmts(x->second);
            return;
        }
        if (const auto* x = e->as<LetE>()) {
            os << type_str(x->declared) << " " << x->name << " = ";
            expr(x->init);
            os << ";";
            nl();
            stmts(x->body);
            return;
        }
        expr(e);
        // brace-shaped statements carry no semicolon
        if (!e->as<IfE>() && !e->as<WhileE>() && !e->as<InSyncE>() && !e->as<VariantResE>()) {
            os << ";";
        }
    }

    void block(const ExprPtr& e) {
        os << "{";
        indent++;
        nl();
        stmts(e);
        indent--;
        nl();
        os << "}";
    }

    void clazz(const ClassDecl& c) {
        os << "class " << c.name << " {";
        indent++;
        nl();
        os << "usage " << usage_to_string(c.usage) << ";";
        for (const auto& f : c.fields) {
            nl();
            os << type_str(f.type) << " " << f.name << ";";
        }
        for (const auto& m : c.methods) {
            nl();
            if (m.sync) os << "sync ";
            os << type_str(m.return_type) << " " << m.name << "(";
            for (size_t i = 0; i < m.params.size(); ++i) {
                if (i) os << ", ";
                os << type_str(m.params[i].type) << " " << m.params[i].name;
            }
            os << ") ";
            block(m.body);
        }
        indent--;
        nl();
        os << "}";
    }
};

}  // namespace

std::string pretty_print(const Program& p) {
    Printer pr;
    pr.prog = &p;
    for (size_t i = 0; i < p.classes.size(); ++i) {
        if (i) pr.os << "\n\n";
        pr.clazz(p.classes[i]);
    }
    pr.os << "\n";
    return pr.os.str();
}

std::string pretty_print(const ClassDecl& c) {
    Printer pr;
    pr.clazz(c);
    return pr.os.str();
}

std::string pretty_print(const ExprPtr& e) {
    Printer pr;
    pr.stmts(e);
    return pr.os.str();
}

// ---- substitution -----------------------------------------------------------

ExprPtr substitute(const ExprPtr& e, const std::map<std::string, Value>& env,
                   const std::optional<Value>& this_value) {
    if (e->as<LitE>()) return e;
    if (const auto* x = e->as<IdentE>()) {
        auto it = env.find(x->name);
        if (it != env.end()) return make_expr(LitE{it->second}, e->span);
        return e;
    }
    if (e->as<ThisE>()) {
        if (this_value) return make_expr(LitE{*this_value}, e->span);
        return e;
    }
    if (const auto* x = e->as<FieldAccessE>()) {
        return make_expr(FieldAccessE{substitute(x->recv, env, this_value), x->field}, e->span);
    }
    if (const auto* x = e->as<SeqE>()) {
        return make_expr(
            SeqE{substitute(x->first, env, this_value), substitute(x->second, env, this_value)},
            e->span);
    }
    if (const auto* x = e->as<AssignE>()) {
        return make_expr(AssignE{substitute(x->recv, env, this_value), x->field,
                                 substitute(x->value, env, this_value)},
                         e->span);
    }
    if (const auto* x = e->as<LetE>()) {
        ExprPtr init = substitute(x->init, env, this_value);
        if (env.count(x->name)) {
            auto inner = env;
            inner.erase(x->name);
            return make_expr(LetE{x->name, x->declared, init, substitute(x->body, inner, this_value)},
                             e->span);
        }
        return make_expr(LetE{x->name, x->declared, init, substitute(x->body, env, this_value)},
                         e->span);
    }
    if (e->as<NewE>()) return e;
    if (const auto* x = e->as<CallE>()) {
        std::vector<ExprPtr> args;
        args.reserve(x->args.size());
        for (const auto& a : x->args) args.push_back(substitute(a, env, this_value));
        return make_expr(CallE{x->kind, substitute(x->recv, env, this_value), x->method, std::move(args)},
                         e->span);
    }
    if (const auto* x = e->as<IfE>()) {
        return make_expr(IfE{substitute(x->cond, env, this_value),
                             substitute(x->then_e, env, this_value),
                             substitute(x->else_e, env, this_value)},
                         e->span);
    }
    if (const auto* x = e->as<WhileE>()) {
        return make_expr(
            WhileE{substitute(x->cond, env, this_value), substitute(x->body, env, this_value)},
            e->span);
    }
    if (const auto* x = e->as<SpawnE>()) {
        return make_expr(SpawnE{substitute(x->body, env, this_value)}, e->span);
    }
    if (const auto* x = e->as<PrintE>()) {
        return make_expr(PrintE{substitute(x->arg, env, this_value)}, e->span);
    }
    if (const auto* x = e->as<BinOpE>()) {
        return make_expr(
            BinOpE{x->op, substitute(x->lhs, env, this_value), substitute(x->rhs, env, this_value)},
            e->span);
    }
    if (const auto* x = e->as<InSyncE>()) {
        return make_expr(InSyncE{x->oid, substitute(x->body, env, this_value)}, e->span);
    }
    if (const auto* x = e->as<VariantResE>()) {
        return make_expr(VariantResE{x->oid, substitute(x->body, env, this_value)}, e->span);
    }
    throw std::logic_error("substitute: bad node");
}

}  // namespace mool
