#include "mool/parser.hpp"

#include <functional>
#include <map>
#include <set>
#include <stdexcept>

namespace mool {

namespace {

// ---- usage parsing ----------------------------------------------------------

struct ParseError {};  // thrown for local panic-mode recovery

struct Parser {
    std::vector<Token> toks;
    size_t pos = 0;
    DiagnosticBag& diags;
    std::string file;

    explicit Parser(std::vector<Token> t, DiagnosticBag& d, std::string f)
        : toks(std::move(t)), diags(d), file(std::move(f)) {}

    const Token& peek(size_t off = 0) const {
        size_t i = pos + off;
        if (i >= toks.size()) i = toks.size() - 1;
        return toks[i];
    }
    bool at(Tok k) const { return peek().kind == k; }
    const Token& advance() {
        const Token& t = toks[pos];
        if (pos + 1 < toks.size()) pos++;
        return t;
    }
    bool accept(Tok k) {
        if (at(k)) {
            advance();
            return true;
        }
        return false;
    }
    const Token& expect(Tok k, const char* what) {
        if (!at(k)) {
            diags.error("E-PARSE",
                        std::string("expected ") + tok_name(k) + " " + what + ", found " +
                            tok_name(peek().kind),
                        peek().span);
            throw ParseError{};
        }
        return advance();
    }

    // ---- usages ----

    bool usage_starts() const {
        switch (peek().kind) {
            case Tok::KwLin:
            case Tok::KwUn:
            case Tok::KwEnd:
            case Tok::KwMu:
            case Tok::Star:
            case Tok::VariantOpen:
            case Tok::Ident:
            case Tok::LParen:
                return true;
            default:
                return false;
        }
    }

    UsagePtr parse_usage() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::KwEnd:
                advance();
                return Usage::end();
            case Tok::KwLin:
            case Tok::KwUn: {
                Qualifier q = t.kind == Tok::KwLin ? Qualifier::Lin : Qualifier::Un;
                advance();
                return parse_qualified_tail(q);
            }
            case Tok::Star: {
                advance();
                expect(Tok::LBrace, "after '*'");
                std::vector<std::string> labels;
                if (!at(Tok::RBrace)) {
                    labels.push_back(expect(Tok::Ident, "method name in '*{...}'").text);
                    while (accept(Tok::Plus)) {
                        labels.push_back(expect(Tok::Ident, "method name in '*{...}'").text);
                    }
                }
                expect(Tok::RBrace, "to close '*{...}'");
                if (labels.empty()) return Usage::end();
                std::vector<std::pair<std::string, UsagePtr>> entries;
                for (auto& l : labels) entries.emplace_back(l, Usage::var("#self"));
                return Usage::rec("#self", Usage::branch(Qualifier::Un, std::move(entries)));
            }
            case Tok::VariantOpen: {
                advance();
                UsagePtr on_true = parse_variant_side();
                expect(Tok::Plus, "between variant alternatives");
                UsagePtr on_false = parse_variant_side();
                expect(Tok::VariantClose, "to close the variant");
                return Usage::variant(std::move(on_true), std::move(on_false));
            }
            case Tok::KwMu: {
                advance();
                std::string var = expect(Tok::Ident, "after 'mu'").text;
                expect(Tok::Dot, "after the recursion variable");
                UsagePtr body = parse_usage();
                return Usage::rec(std::move(var), std::move(body));
            }
            case Tok::Ident: {
                advance();
                return Usage::var(t.text);
            }
            case Tok::LParen: {
                advance();
                UsagePtr u = parse_usage();
                expect(Tok::RParen, "to close '('");
                return u;
            }
            default:
                diags.error("E-PARSE",
                            std::string("expected a usage, found ") + tok_name(t.kind), t.span);
                throw ParseError{};
        }
    }

    UsagePtr parse_qualified_tail(Qualifier q) {
        if (at(Tok::Ident)) {
            // q m; u
            std::string label = advance().text;
            expect(Tok::Semi, "after the method name in a usage");
            UsagePtr cont = parse_usage();
            return Usage::branch(q, {{label, std::move(cont)}});
        }
        expect(Tok::LBrace, "after the usage qualifier");
        if (accept(Tok::RBrace)) return Usage::branch(q, {});
        std::string first = expect(Tok::Ident, "method name in a usage branch").text;
        if (accept(Tok::Semi)) {
            // per-label continuations: q{m1; u1 + m2; u2}
            std::vector<std::pair<std::string, UsagePtr>> entries;
            entries.emplace_back(first, parse_usage());
            while (accept(Tok::Plus)) {
                std::string label = expect(Tok::Ident, "method name in a usage branch").text;
                expect(Tok::Semi, "after the method name in a usage branch");
                entries.emplace_back(label, parse_usage());
            }
            expect(Tok::RBrace, "to close the usage branch");
            return Usage::branch(q, std::move(entries));
        }
        // shared continuation: q{m1 + m2}; u
        std::vector<std::string> labels{first};
        while (accept(Tok::Plus)) {
            labels.push_back(expect(Tok::Ident, "method name in a usage branch").text);
        }
        expect(Tok::RBrace, "to close the usage branch");
        expect(Tok::Semi, "before the shared continuation of the branch");
        UsagePtr cont = parse_usage();
        std::vector<std::pair<std::string, UsagePtr>> entries;
        for (auto& l : labels) entries.emplace_back(l, cont);
        return Usage::branch(q, std::move(entries));
    }

    UsagePtr parse_variant_side() {
        // `m; u` inside a variant is sugar for lin{m. u}
        if (at(Tok::Ident) && peek(1).kind == Tok::Semi) {
            std::string label = advance().text;
            advance();  // ';'
            UsagePtr cont = parse_usage();
            return Usage::branch(Qualifier::Lin, {{label, std::move(cont)}});
        }
        return parse_usage();
    }

    // ---- types ----

    bool type_starts() const {
        switch (peek().kind) {
            case Tok::KwUnit:
            case Tok::KwBoolean:
            case Tok::KwInt:
            case Tok::KwString:
            case Tok::Ident:
                return true;
            default:
                return false;
        }
    }

    Type parse_type() {
        const Token& t = advance();
        switch (t.kind) {
            case Tok::KwUnit: return Type::unit();
            case Tok::KwBoolean: return Type::boolean();
            case Tok::KwInt: return Type::integer();
            case Tok::KwString: return Type::str();
            case Tok::Ident: {
                UsagePtr u = nullptr;  // shorthand: the class's initial usage
                if (accept(Tok::LBracket)) {
                    u = parse_usage();
                    expect(Tok::RBracket, "to close the usage annotation");
                }
                return Type::object(t.text, std::move(u));
            }
            default:
                diags.error("E-PARSE", std::string("expected a type, found ") + tok_name(t.kind),
                            t.span);
                throw ParseError{};
        }
    }

    // ---- expressions ----

    ExprPtr parse_block() {
        SourceSpan open = expect(Tok::LBrace, "to open a block").span;
        ExprPtr body = parse_stmts(open);
        expect(Tok::RBrace, "to close the block");
        return body;
    }

    // statements until '}', folded right into Seq/Let
    ExprPtr parse_stmts(const SourceSpan& open) {
        if (at(Tok::RBrace)) return unit_lit(open);
        // local declaration: `T x = e; rest`
        if (is_local_decl_start()) {
            SourceSpan sp = peek().span;
            Type t = parse_type();
            std::string name = expect(Tok::Ident, "local variable name").text;
            expect(Tok::Assign, "in the local declaration");
            ExprPtr init = parse_expr();
            expect(Tok::Semi, "after the local declaration");
            ExprPtr body = parse_stmts(open);
            return make_expr(LetE{std::move(name), std::move(t), std::move(init), std::move(body)},
                             sp);
        }
        ExprPtr first = parse_stmt_expr();
        if (at(Tok::RBrace)) return first;
        if (at(Tok::Eof)) {
            expect(Tok::RBrace, "to close the block");
        }
        ExprPtr rest = parse_stmts(open);
        SourceSpan sp = first->span;
        return make_expr(SeqE{std::move(first), std::move(rest)}, sp);
    }

    bool is_local_decl_start() const {
        switch (peek().kind) {
            case Tok::KwUnit:
            case Tok::KwBoolean:
            case Tok::KwInt:
            case Tok::KwString:
                return peek(1).kind == Tok::Ident && peek(2).kind == Tok::Assign;
            case Tok::Ident:
                if (peek(1).kind == Tok::Ident && peek(2).kind == Tok::Assign) return true;
                if (peek(1).kind == Tok::LBracket) {
                    // C[...] x = e  -- scan past the bracketed usage
                    size_t i = pos + 2;
                    int depth = 1;
                    while (i < toks.size() && depth > 0) {
                        if (toks[i].kind == Tok::LBracket) depth++;
                        if (toks[i].kind == Tok::RBracket) depth--;
                        i++;
                    }
                    return i + 1 < toks.size() && toks[i].kind == Tok::Ident &&
                           toks[i + 1].kind == Tok::Assign;
                }
                return false;
            default:
                return false;
        }
    }

    // one statement: if/while/block (';' optional) or expr/assignment (';')
    ExprPtr parse_stmt_expr() {
        if (at(Tok::KwIf)) {
            ExprPtr e = parse_if();
            accept(Tok::Semi);
            return e;
        }
        if (at(Tok::KwWhile)) {
            ExprPtr e = parse_while();
            accept(Tok::Semi);
            return e;
        }
        if (at(Tok::LBrace)) {
            ExprPtr b = parse_block();
            accept(Tok::Semi);
            return b;
        }
        ExprPtr e = parse_expr();
        if (at(Tok::Assign)) {
            SourceSpan sp = advance().span;
            ExprPtr rhs = parse_expr();
            e = make_assign(e, rhs, sp);
        }
        if (!at(Tok::RBrace)) expect(Tok::Semi, "after the expression");
        return e;
    }

    ExprPtr make_assign(const ExprPtr& lhs, ExprPtr rhs, const SourceSpan& sp) {
        if (const auto* id = lhs->as<IdentE>()) {
            // target resolved later: field -> this.f, local -> error
            return make_expr(AssignE{lhs, id->name, std::move(rhs)}, sp);
        }
        if (const auto* fa = lhs->as<FieldAccessE>()) {
            if (fa->recv->as<ThisE>()) {
                return make_expr(AssignE{fa->recv, fa->field, std::move(rhs)}, sp);
            }
        }
        diags.error("E-PARSE", "invalid assignment target (assignments are only on fields)",
                    lhs->span);
        throw ParseError{};
    }

    ExprPtr parse_if() {
        SourceSpan sp = expect(Tok::KwIf, "").span;
        expect(Tok::LParen, "after 'if'");
        ExprPtr cond = parse_expr();
        expect(Tok::RParen, "after the condition");
        ExprPtr then_e = parse_branch();
        ExprPtr else_e;
        if (accept(Tok::KwElse)) {
            else_e = parse_branch();
        } else {
            else_e = unit_lit(sp);
        }
        return make_expr(IfE{std::move(cond), std::move(then_e), std::move(else_e)}, sp);
    }

    ExprPtr parse_while() {
        SourceSpan sp = expect(Tok::KwWhile, "").span;
        expect(Tok::LParen, "after 'while'");
        ExprPtr cond = parse_expr();
        expect(Tok::RParen, "after the condition");
        ExprPtr body = parse_branch();
        return make_expr(WhileE{std::move(cond), std::move(body)}, sp);
    }

    // a branch of if/while: a block or a single statement
    ExprPtr parse_branch() {
        if (at(Tok::LBrace)) return parse_block();
        if (at(Tok::KwIf)) return parse_if();
        if (at(Tok::KwWhile)) return parse_while();
        ExprPtr e = parse_expr();
        if (at(Tok::Assign)) {
            SourceSpan sp = advance().span;
            ExprPtr rhs = parse_expr();
            e = make_assign(e, rhs, sp);
        }
        accept(Tok::Semi);
        return e;
    }

    ExprPtr parse_expr() { return parse_equality(); }

    ExprPtr parse_equality() {
        ExprPtr lhs = parse_relational();
        while (at(Tok::EqEq)) {
            SourceSpan sp = advance().span;
            ExprPtr rhs = parse_relational();
            lhs = make_expr(BinOpE{BinOpKind::Eq, std::move(lhs), std::move(rhs)}, sp);
        }
        return lhs;
    }

    ExprPtr parse_relational() {
        ExprPtr lhs = parse_additive();
        while (at(Tok::Le) || at(Tok::Ge)) {
            BinOpKind op = at(Tok::Le) ? BinOpKind::Le : BinOpKind::Ge;
            SourceSpan sp = advance().span;
            ExprPtr rhs = parse_additive();
            lhs = make_expr(BinOpE{op, std::move(lhs), std::move(rhs)}, sp);
        }
        return lhs;
    }

    ExprPtr parse_additive() {
        ExprPtr lhs = parse_primary();
        while (at(Tok::Plus) || at(Tok::Minus)) {
            BinOpKind op = at(Tok::Plus) ? BinOpKind::Add : BinOpKind::Sub;
            SourceSpan sp = advance().span;
            ExprPtr rhs = parse_primary();
            lhs = make_expr(BinOpE{op, std::move(lhs), std::move(rhs)}, sp);
        }
        return lhs;
    }

    std::vector<ExprPtr> parse_call_args() {
        expect(Tok::LParen, "to open the argument list");
        std::vector<ExprPtr> args;
        if (!at(Tok::RParen)) {
            args.push_back(parse_expr());
            while (accept(Tok::Comma)) args.push_back(parse_expr());
        }
        expect(Tok::RParen, "to close the argument list");
        return args;
    }

    // postfix chain over `this` or an identifier; shapes validated at resolution
    ExprPtr parse_postfix(ExprPtr base) {
        while (at(Tok::Dot)) {
            advance();
            const Token& name = expect(Tok::Ident, "after '.'");
            if (at(Tok::LParen)) {
                CallKind kind = base->as<ThisE>() ? CallKind::Self : CallKind::Protocol;
                std::vector<ExprPtr> args = parse_call_args();
                base = make_expr(CallE{kind, std::move(base), name.text, std::move(args)},
                                 name.span);
            } else {
                base = make_expr(FieldAccessE{std::move(base), name.text}, name.span);
            }
        }
        return base;
    }

    ExprPtr parse_primary() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::IntLit: {
                advance();
                return make_expr(LitE{Value::integer(t.int_value)}, t.span);
            }
            case Tok::StrLit: {
                advance();
                return make_expr(LitE{Value::str(t.text)}, t.span);
            }
            case Tok::KwTrue:
                advance();
                return make_expr(LitE{Value::boolean(true)}, t.span);
            case Tok::KwFalse:
                advance();
                return make_expr(LitE{Value::boolean(false)}, t.span);
            case Tok::KwUnit:
                advance();
                return make_expr(LitE{Value::unit()}, t.span);
            case Tok::LParen: {
                advance();
                ExprPtr e = parse_expr();
                expect(Tok::RParen, "to close '('");
                return parse_postfix(std::move(e));
            }
            case Tok::KwNew: {
                advance();
                const Token& cls = expect(Tok::Ident, "class name after 'new'");
                if (accept(Tok::LParen)) expect(Tok::RParen, "after 'new C('");
                return parse_postfix(make_expr(NewE{cls.text}, t.span));
            }
            case Tok::KwSpawn: {
                advance();
                ExprPtr body = parse_primary();
                return make_expr(SpawnE{std::move(body)}, t.span);
            }
            case Tok::KwPrint: {
                advance();
                expect(Tok::LParen, "after 'print'");
                ExprPtr arg = parse_expr();
                expect(Tok::RParen, "to close 'print('");
                return make_expr(PrintE{std::move(arg)}, t.span);
            }
            case Tok::KwThis: {
                advance();
                return parse_postfix(make_expr(ThisE{}, t.span));
            }
            case Tok::Ident: {
                advance();
                if (at(Tok::LParen)) {
                    // bare call: m(args) is this.m(args)
                    std::vector<ExprPtr> args = parse_call_args();
                    return parse_postfix(make_expr(
                        CallE{CallKind::Self, make_expr(ThisE{}, t.span), t.text, std::move(args)},
                        t.span));
                }
                return parse_postfix(make_expr(IdentE{t.text}, t.span));
            }
            default:
                diags.error("E-PARSE",
                            std::string("expected an expression, found ") + tok_name(t.kind),
                            t.span);
                throw ParseError{};
        }
    }

    // ---- declarations ----

    // where-name expansion: names may reference each other; self references
    // produce mu-types
    UsagePtr expand_names(const UsagePtr& u, const std::map<std::string, UsagePtr>& defs,
                          std::set<std::string>& visiting, std::set<std::string> bound) {
        if (const auto* b = u->as_branch()) {
            std::vector<std::pair<std::string, UsagePtr>> entries;
            for (const auto& [name, cont] : b->entries) {
                entries.emplace_back(name, expand_names(cont, defs, visiting, bound));
            }
            return Usage::branch(b->qual, std::move(entries));
        }
        if (const auto* v = u->as_variant()) {
            return Usage::variant(expand_names(v->on_true, defs, visiting, bound),
                                  expand_names(v->on_false, defs, visiting, bound));
        }
        if (const auto* r = u->as_rec()) {
            auto inner = bound;
            inner.insert(r->var);
            return Usage::rec(r->var, expand_names(r->body, defs, visiting, std::move(inner)));
        }
        if (const auto* x = u->as_var()) {
            if (bound.count(x->name)) return u;
            auto it = defs.find(x->name);
            if (it == defs.end()) return u;  // left free; may be an annotation name
            if (visiting.count(x->name)) return u;  // recursive: keep as variable, mu added below
            visiting.insert(x->name);
            UsagePtr body = expand_names(it->second, defs, visiting, bound);
            visiting.erase(x->name);
            if (free_usage_vars(body).count(x->name)) {
                body = Usage::rec(x->name, body);
            }
            return body;
        }
        throw std::logic_error("expand_names: bad node");
    }

    ClassDecl parse_class() {
        SourceSpan sp = expect(Tok::KwClass, "").span;
        ClassDecl c;
        c.span = sp;
        c.name = expect(Tok::Ident, "class name").text;
        expect(Tok::LBrace, "to open the class body");

        if (at(Tok::KwUsage)) {
            advance();
            UsagePtr raw = parse_usage();
            std::map<std::string, UsagePtr> defs;
            while (at(Tok::KwWhere) || at(Tok::Comma)) {
                advance();
                const Token& name = expect(Tok::Ident, "state name after 'where'");
                expect(Tok::Assign, "in the 'where' binding");
                UsagePtr def = parse_usage();
                if (defs.count(name.text)) {
                    diags.error("E-DUP-NAME", "duplicate 'where' name '" + name.text + "'",
                                name.span);
                }
                defs[name.text] = def;
            }
            expect(Tok::Semi, "after the usage clause");
            std::set<std::string> visiting;
            c.usage = expand_names(raw, defs, visiting, {});
            for (const auto& [name, def] : defs) {
                std::set<std::string> v{};
                UsagePtr closed = expand_names(Usage::var(name), defs, v, {});
                c.where_names[name] = closed;
            }
        }

        while (!at(Tok::RBrace) && !at(Tok::Eof)) {
            try {
                parse_member(c);
            } catch (const ParseError&) {
                // skip to the next member boundary
                int depth = 0;
                while (!at(Tok::Eof)) {
                    Tok k = peek().kind;
                    if (depth == 0 && (k == Tok::Semi || k == Tok::RBrace)) break;
                    if (k == Tok::LBrace) depth++;
                    if (k == Tok::RBrace) depth--;
                    advance();
                }
                accept(Tok::Semi);
            }
        }
        expect(Tok::RBrace, "to close the class body");
        return c;
    }

    void parse_member(ClassDecl& c) {
        bool sync = accept(Tok::KwSync);
        SourceSpan sp = peek().span;
        Type t = parse_type();
        const Token& name = expect(Tok::Ident, "member name");
        if (at(Tok::LParen)) {
            MethodDecl m;
            m.sync = sync;
            m.return_type = std::move(t);
            m.name = name.text;
            m.span = sp;
            advance();
            if (!at(Tok::RParen)) {
                do {
                    Param p;
                    p.span = peek().span;
                    p.type = parse_type();
                    p.name = expect(Tok::Ident, "parameter name").text;
                    m.params.push_back(std::move(p));
                } while (accept(Tok::Comma));
            }
            expect(Tok::RParen, "to close the parameter list");
            m.body = parse_block();
            c.methods.push_back(std::move(m));
            return;
        }
        if (sync) {
            diags.error("E-PARSE", "'sync' applies to methods only", sp);
        }
        expect(Tok::Semi, "after the field declaration");
        c.fields.push_back(FieldDecl{std::move(t), name.text, sp});
    }

    Program parse_program() {
        Program p;
        while (!at(Tok::Eof)) {
            if (at(Tok::KwClass)) {
                try {
                    p.classes.push_back(parse_class());
                } catch (const ParseError&) {
                    while (!at(Tok::Eof) && !at(Tok::KwClass)) advance();
                }
            } else {
                diags.error("E-PARSE",
                            std::string("expected 'class', found ") + tok_name(peek().kind),
                            peek().span);
                while (!at(Tok::Eof) && !at(Tok::KwClass)) advance();
            }
        }
        return p;
    }
};

// ---- resolution -------------------------------------------------------------

struct Resolver {
    Program& prog;
    DiagnosticBag& diags;

    void run() {
        check_duplicates();
        for (auto& c : prog.classes) c = insert_default_usage(std::move(c));
        resolve_annotations();
        for (auto& c : prog.classes) c = insert_this(std::move(c), diags);
        validate_usages();
        validate_new_targets();
        validate_entry();
    }

    void check_duplicates() {
        std::set<std::string> classes;
        for (const auto& c : prog.classes) {
            if (!classes.insert(c.name).second) {
                diags.error("E-DUP-CLASS", "duplicate class '" + c.name + "'", c.span);
            }
            std::set<std::string> fields;
            for (const auto& f : c.fields) {
                if (!fields.insert(f.name).second) {
                    diags.error("E-DUP-MEMBER", "duplicate field '" + f.name + "'", f.span);
                }
            }
            std::set<std::string> methods;
            for (const auto& m : c.methods) {
                if (!methods.insert(m.name).second) {
                    diags.error("E-DUP-MEMBER", "duplicate method '" + m.name + "'", m.span);
                }
                std::set<std::string> params;
                for (const auto& p : m.params) {
                    if (!params.insert(p.name).second) {
                        diags.error("E-DUP-MEMBER",
                                    "duplicate parameter '" + p.name + "' in method '" + m.name +
                                        "'",
                                    p.span);
                    }
                }
            }
        }
    }

    // object annotations: C -> initial usage, C[Name] -> where-name of C,
    // C[<usage>] -> as written
    void resolve_type(Type& t, const SourceSpan& sp) {
        if (t.kind != Type::Kind::Object) return;
        const ClassDecl* target = prog.find_class(t.class_name);
        if (!target) {
            diags.error("E-UNKNOWN-CLASS", "unknown class '" + t.class_name + "'", sp);
            t.usage = Usage::end();
            return;
        }
        if (!t.usage) {
            t.usage = target->usage;  // shorthand: full type implied by the class
            return;
        }
        t.usage = resolve_usage_names(t.usage, *target, sp);
    }

    UsagePtr resolve_usage_names(const UsagePtr& u, const ClassDecl& target,
                                 const SourceSpan& sp) {
        UsagePtr out = u;
        for (const auto& name : free_usage_vars(u)) {
            auto it = target.where_names.find(name);
            if (it != target.where_names.end()) {
                out = substitute_usage(out, name, it->second);
            } else {
                diags.error("E-UNBOUND-NAME",
                            "'" + name + "' is not a state of class '" + target.name + "'", sp);
                out = substitute_usage(out, name, Usage::end());
            }
        }
        return out;
    }

    void resolve_annotations() {
        for (auto& c : prog.classes) {
            for (auto& f : c.fields) resolve_type(f.type, f.span);
            for (auto& m : c.methods) {
                resolve_type(m.return_type, m.span);
                for (auto& p : m.params) resolve_type(p.type, p.span);
                m.body = resolve_expr_types(m.body);
            }
        }
    }

    ExprPtr resolve_expr_types(const ExprPtr& e) {
        if (const auto* x = e->as<LetE>()) {
            Type t = x->declared;
            resolve_type(t, e->span);
            return make_expr(LetE{x->name, std::move(t), resolve_expr_types(x->init),
                                  resolve_expr_types(x->body)},
                             e->span);
        }
        if (const auto* x = e->as<SeqE>()) {
            return make_expr(SeqE{resolve_expr_types(x->first), resolve_expr_types(x->second)},
                             e->span);
        }
        if (const auto* x = e->as<AssignE>()) {
            return make_expr(AssignE{x->recv, x->field, resolve_expr_types(x->value)}, e->span);
        }
        if (const auto* x = e->as<CallE>()) {
            std::vector<ExprPtr> args;
            for (const auto& a : x->args) args.push_back(resolve_expr_types(a));
            return make_expr(CallE{x->kind, x->recv, x->method, std::move(args)}, e->span);
        }
        if (const auto* x = e->as<IfE>()) {
            return make_expr(IfE{resolve_expr_types(x->cond), resolve_expr_types(x->then_e),
                                 resolve_expr_types(x->else_e)},
                             e->span);
        }
        if (const auto* x = e->as<WhileE>()) {
            return make_expr(WhileE{resolve_expr_types(x->cond), resolve_expr_types(x->body)},
                             e->span);
        }
        if (const auto* x = e->as<SpawnE>()) {
            return make_expr(SpawnE{resolve_expr_types(x->body)}, e->span);
        }
        if (const auto* x = e->as<PrintE>()) {
            return make_expr(PrintE{resolve_expr_types(x->arg)}, e->span);
        }
        if (const auto* x = e->as<BinOpE>()) {
            return make_expr(BinOpE{x->op, resolve_expr_types(x->lhs), resolve_expr_types(x->rhs)},
                             e->span);
        }
        return e;
    }

    // usage well-formedness, per class
    void validate_usages() {
        for (const auto& c : prog.classes) {
            if (!is_contractive(c.usage)) {
                diags.error("E-NOT-CONTRACTIVE",
                            "usage of class '" + c.name + "' is not contractive", c.span);
                continue;
            }
            auto free = free_usage_vars(c.usage);
            if (!free.empty()) {
                diags.error("E-UNBOUND-NAME",
                            "usage of class '" + c.name + "' mentions unknown state '" +
                                *free.begin() + "'",
                            c.span);
                continue;
            }
            for (const auto& label : usage_labels(c.usage)) {
                if (!c.find_method(label)) {
                    diags.error("E-UNDECLARED-METHOD",
                                "usage of class '" + c.name + "' mentions method '" + label +
                                    "', which is not declared",
                                c.span);
                }
            }
            UsagePtr head = unfold(c.usage);
            if (!head->as_branch()) {
                diags.error("E-INITIAL-USAGE-NOT-BRANCH",
                            "the initial usage of class '" + c.name + "' must be a branch",
                            c.span);
                continue;
            }
            walk_reachable(c);
        }
    }

    // walks every reachable head of the usage once, validating variant
    // placement and warning about non-recursive shared branches
    void walk_reachable(const ClassDecl& c) {
        std::set<std::string> visited;
        std::function<void(const UsagePtr&)> go = [&](const UsagePtr& u) {
            UsagePtr head = unfold(u);
            std::string key = canon_key(head);
            if (!visited.insert(key).second) return;
            if (const auto* b = head->as_branch()) {
                for (const auto& [label, cont] : b->entries) {
                    UsagePtr cont_head = unfold(cont);
                    if (cont_head->as_variant()) {
                        const MethodDecl* m = c.find_method(label);
                        if (m && m->return_type.kind != Type::Kind::Boolean) {
                            diags.error("E-VARIANT-NON-BOOLEAN",
                                        "method '" + label + "' of class '" + c.name +
                                            "' continues into a variant but does not return "
                                            "boolean",
                                        m->span);
                        }
                    }
                    if (b->qual == Qualifier::Un && !usage_equivalent(cont, u)) {
                        diags.warning("W-UN-BRANCH-EVOLVES",
                                      "shared branch of class '" + c.name +
                                          "' changes after calling '" + label +
                                          "'; aliases cannot track this",
                                      c.span);
                    }
                    go(cont);
                }
            } else if (const auto* v = head->as_variant()) {
                for (const UsagePtr& side : {v->on_true, v->on_false}) {
                    if (unfold(side)->as_variant()) {
                        diags.error("E-MALFORMED-USAGE",
                                    "variant alternative of class '" + c.name +
                                        "' is itself a variant; alternatives must offer methods",
                                    c.span);
                    } else {
                        go(side);
                    }
                }
            }
        };
        go(c.usage);
    }

    void validate_new_targets() {
        for (const auto& c : prog.classes) {
            for (const auto& m : c.methods) {
                std::function<void(const ExprPtr&)> go = [&](const ExprPtr& e) {
                    if (const auto* x = e->as<NewE>()) {
                        if (!prog.find_class(x->class_name)) {
                            diags.error("E-UNKNOWN-CLASS",
                                        "unknown class '" + x->class_name + "'", e->span);
                        }
                        return;
                    }
                    if (const auto* x = e->as<SeqE>()) { go(x->first); go(x->second); return; }
                    if (const auto* x = e->as<LetE>()) { go(x->init); go(x->body); return; }
                    if (const auto* x = e->as<AssignE>()) { go(x->value); return; }
                    if (const auto* x = e->as<CallE>()) {
                        go(x->recv);
                        for (const auto& a : x->args) go(a);
                        return;
                    }
                    if (const auto* x = e->as<FieldAccessE>()) { go(x->recv); return; }
                    if (const auto* x = e->as<IfE>()) { go(x->cond); go(x->then_e); go(x->else_e); return; }
                    if (const auto* x = e->as<WhileE>()) { go(x->cond); go(x->body); return; }
                    if (const auto* x = e->as<SpawnE>()) { go(x->body); return; }
                    if (const auto* x = e->as<PrintE>()) { go(x->arg); return; }
                    if (const auto* x = e->as<BinOpE>()) { go(x->lhs); go(x->rhs); return; }
                };
                go(m.body);
            }
        }
    }

    void validate_entry() {
        const ClassDecl* main_cls = prog.find_class("Main");
        if (!main_cls) {
            diags.error("E-NO-MAIN", "program has no class 'Main'");
            return;
        }
        const MethodDecl* main = main_cls->find_method("main");
        if (!main || !main->params.empty()) {
            diags.error("E-NO-MAIN", "class 'Main' must declare a zero-argument method 'main'",
                        main_cls->span);
        }
    }
};

}  // namespace

// ---- public entry points ------------------------------------------------------

ClassDecl insert_default_usage(ClassDecl c) {
    if (c.usage) return c;
    c.usage_defaulted = true;
    if (c.methods.empty()) {
        c.usage = Usage::end();
        return c;
    }
    std::vector<std::pair<std::string, UsagePtr>> entries;
    for (const auto& m : c.methods) entries.emplace_back(m.name, Usage::var("#self"));
    c.usage = Usage::rec("#self", Usage::branch(Qualifier::Un, std::move(entries)));
    return c;
}

namespace {

// scope-aware body rewriting for insert_this
struct BodyResolver {
    const ClassDecl& cls;
    DiagnosticBag& diags;
    std::vector<std::string> scope;  // params + live locals

    bool in_scope(const std::string& n) const {
        for (const auto& s : scope) {
            if (s == n) return true;
        }
        return false;
    }

    ExprPtr go(const ExprPtr& e) {
        if (e->as<LitE>() || e->as<ThisE>()) return e;
        if (const auto* x = e->as<IdentE>()) {
            if (in_scope(x->name)) return e;
            if (cls.find_field(x->name)) {
                return make_expr(FieldAccessE{make_expr(ThisE{}, e->span), x->name}, e->span);
            }
            diags.error("E-UNDECLARED-IDENT", "unknown identifier '" + x->name + "'", e->span);
            return e;
        }
        if (const auto* x = e->as<FieldAccessE>()) {
            ExprPtr recv = go(x->recv);
            if (recv->as<ThisE>()) {
                if (!cls.find_field(x->field)) {
                    diags.error("E-UNKNOWN-FIELD",
                                "class '" + cls.name + "' has no field '" + x->field + "'",
                                e->span);
                }
                return make_expr(FieldAccessE{recv, x->field}, e->span);
            }
            diags.error("E-BAD-FIELD-ACCESS",
                        "fields are private; only 'this." + x->field + "' is allowed", e->span);
            return make_expr(FieldAccessE{recv, x->field}, e->span);
        }
        if (const auto* x = e->as<SeqE>()) {
            ExprPtr first = go(x->first);
            ExprPtr second = go(x->second);
            return make_expr(SeqE{std::move(first), std::move(second)}, e->span);
        }
        if (const auto* x = e->as<AssignE>()) {
            ExprPtr value = go(x->value);
            if (x->recv->as<IdentE>()) {
                // unresolved `name = e`
                if (in_scope(x->field)) {
                    diags.error("E-ASSIGN-NON-FIELD",
                                "cannot assign to '" + x->field +
                                    "'; assignments are only on fields",
                                e->span);
                    return make_expr(AssignE{make_expr(ThisE{}, e->span), x->field, value},
                                     e->span);
                }
                if (!cls.find_field(x->field)) {
                    diags.error("E-UNKNOWN-FIELD",
                                "class '" + cls.name + "' has no field '" + x->field + "'",
                                e->span);
                }
                return make_expr(AssignE{make_expr(ThisE{}, e->span), x->field, value}, e->span);
            }
            if (!cls.find_field(x->field)) {
                diags.error("E-UNKNOWN-FIELD",
                            "class '" + cls.name + "' has no field '" + x->field + "'", e->span);
            }
            return make_expr(AssignE{x->recv, x->field, value}, e->span);
        }
        if (const auto* x = e->as<LetE>()) {
            ExprPtr init = go(x->init);
            scope.push_back(x->name);
            ExprPtr body = go(x->body);
            scope.pop_back();
            return make_expr(LetE{x->name, x->declared, std::move(init), std::move(body)},
                             e->span);
        }
        if (e->as<NewE>()) return e;
        if (const auto* x = e->as<CallE>()) {
            // resolve the receiver shape first
            ExprPtr recv = x->recv;
            CallKind kind = x->kind;
            if (const auto* id = recv->as<IdentE>()) {
                if (in_scope(id->name)) {
                    kind = CallKind::Protocol;
                } else if (cls.find_field(id->name)) {
                    recv = make_expr(FieldAccessE{make_expr(ThisE{}, recv->span), id->name},
                                     recv->span);
                    kind = CallKind::Protocol;
                } else {
                    diags.error("E-UNDECLARED-IDENT", "unknown identifier '" + id->name + "'",
                                recv->span);
                }
            } else if (const auto* fa = recv->as<FieldAccessE>()) {
                ExprPtr inner = go(fa->recv);
                if (!inner->as<ThisE>()) {
                    diags.error("E-BAD-RECEIVER",
                                "method calls are only allowed on this, fields, and locals",
                                e->span);
                }
                if (!cls.find_field(fa->field)) {
                    diags.error("E-UNKNOWN-FIELD",
                                "class '" + cls.name + "' has no field '" + fa->field + "'",
                                recv->span);
                }
                recv = make_expr(FieldAccessE{inner, fa->field}, recv->span);
                kind = CallKind::Protocol;
            } else if (recv->as<ThisE>()) {
                kind = CallKind::Self;
                if (!cls.find_method(x->method)) {
                    diags.error("E-UNDECLARED-METHOD",
                                "class '" + cls.name + "' has no method '" + x->method + "'",
                                e->span);
                }
            } else {
                diags.error("E-BAD-RECEIVER",
                            "method calls are only allowed on this, fields, and locals", e->span);
                recv = go(recv);
            }
            std::vector<ExprPtr> args;
            for (const auto& a : x->args) args.push_back(go(a));
            return make_expr(CallE{kind, std::move(recv), x->method, std::move(args)}, e->span);
        }
        if (const auto* x = e->as<IfE>()) {
            ExprPtr c0 = go(x->cond);
            ExprPtr t0 = go(x->then_e);
            ExprPtr e0 = go(x->else_e);
            return make_expr(IfE{std::move(c0), std::move(t0), std::move(e0)}, e->span);
        }
        if (const auto* x = e->as<WhileE>()) {
            ExprPtr c0 = go(x->cond);
            ExprPtr b0 = go(x->body);
            return make_expr(WhileE{std::move(c0), std::move(b0)}, e->span);
        }
        if (const auto* x = e->as<SpawnE>()) return make_expr(SpawnE{go(x->body)}, e->span);
        if (const auto* x = e->as<PrintE>()) return make_expr(PrintE{go(x->arg)}, e->span);
        if (const auto* x = e->as<BinOpE>()) {
            ExprPtr l = go(x->lhs);
            ExprPtr r = go(x->rhs);
            return make_expr(BinOpE{x->op, std::move(l), std::move(r)}, e->span);
        }
        diags.error("E-PARSE", "runtime-only expression in source program", e->span);
        return e;
    }
};

}  // namespace

ClassDecl insert_this(ClassDecl c, DiagnosticBag& diags) {
    for (auto& m : c.methods) {
        BodyResolver r{c, diags, {}};
        for (const auto& p : m.params) r.scope.push_back(p.name);
        m.body = r.go(m.body);
    }
    return c;
}

std::optional<Program> parse_program(const std::string& source, const std::string& file,
                                     DiagnosticBag& diags) {
    std::vector<Token> toks = tokenize(source, file, diags);
    Parser parser(std::move(toks), diags, file);
    Program p = parser.parse_program();
    if (p.classes.empty() && diags.has_errors()) return std::nullopt;
    Resolver{p, diags}.run();
    return p;
}

UsagePtr parse_usage_text(const std::string& text, DiagnosticBag& diags) {
    std::vector<Token> toks = tokenize(text, "<usage>", diags);
    Parser parser(std::move(toks), diags, "<usage>");
    try {
        UsagePtr u = parser.parse_usage();
        if (!parser.at(Tok::Eof)) {
            diags.error("E-PARSE", "trailing tokens after the usage", parser.peek().span);
        }
        if (u && !is_contractive(u)) {
            diags.error("E-NOT-CONTRACTIVE", "usage is not contractive");
        }
        return u;
    } catch (const ParseError&) {
        return nullptr;
    }
}

}  // namespace mool
