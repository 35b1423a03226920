#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mool/diag.hpp"
#include "mool/usage.hpp"

namespace mool {

// ---- types ----------------------------------------------------------------

struct Type {
    enum class Kind { Unit, Boolean, Int, Str, Object };

    Kind kind = Kind::Unit;
    std::string class_name;  // Object only
    UsagePtr usage;          // Object only; null until annotations are resolved

    static Type unit() { return Type{Kind::Unit, "", nullptr}; }
    static Type boolean() { return Type{Kind::Boolean, "", nullptr}; }
    static Type integer() { return Type{Kind::Int, "", nullptr}; }
    static Type str() { return Type{Kind::Str, "", nullptr}; }
    static Type object(std::string cls, UsagePtr u) {
        return Type{Kind::Object, std::move(cls), std::move(u)};
    }

    bool is_object() const { return kind == Kind::Object; }
};

Qualifier qualifier_of(const Type& t);
bool is_linear(const Type& t);
bool subtype(const Type& a, const Type& b, SubtypeMode mode = SubtypeMode::Verbatim);
bool type_equal(const Type& a, const Type& b);
std::string type_to_string(const Type& t);

// ---- values ---------------------------------------------------------------

struct Value {
    struct Unit {};
    struct Bool {
        bool v = false;
        // object whose variant usage this boolean resolves, or -1
        int variant_of = -1;
    };
    struct Int {
        long long v = 0;
    };
    struct Str {
        std::string v;
    };
    struct Obj {
        int oid = -1;
    };
    struct Uninit {};  // the bottom value object fields start with

    std::variant<Unit, Bool, Int, Str, Obj, Uninit> v;

    static Value unit() { return Value{Unit{}}; }
    static Value boolean(bool b, int variant_of = -1) { return Value{Bool{b, variant_of}}; }
    static Value integer(long long i) { return Value{Int{i}}; }
    static Value str(std::string s) { return Value{Str{std::move(s)}}; }
    static Value object(int oid) { return Value{Obj{oid}}; }
    static Value uninit() { return Value{Uninit{}}; }

    bool is_unit() const { return std::holds_alternative<Unit>(v); }
    bool is_uninit() const { return std::holds_alternative<Uninit>(v); }
    const Bool* as_bool() const { return std::get_if<Bool>(&v); }
    const Int* as_int() const { return std::get_if<Int>(&v); }
    const Str* as_str() const { return std::get_if<Str>(&v); }
    const Obj* as_obj() const { return std::get_if<Obj>(&v); }

    // what `print` emits
    std::string display() const;
    // unambiguous form, used in traces and state snapshots
    std::string debug() const;

    bool operator==(const Value& other) const;
};

// ---- expressions ----------------------------------------------------------

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct LitE {
    Value value;
};
struct IdentE {
    std::string name;  // parameter or local
};
struct ThisE {};
struct FieldAccessE {
    ExprPtr recv;  // ThisE in user programs; Lit(Obj) at runtime
    std::string field;
};
struct SeqE {
    ExprPtr first, second;
};
struct AssignE {
    ExprPtr recv;  // as in FieldAccessE
    std::string field;
    ExprPtr value;
};
// local declaration `T x = init; body` with x scoped to body
struct LetE {
    std::string name;
    Type declared;
    ExprPtr init;
    ExprPtr body;
};
struct NewE {
    std::string class_name;
};
enum class CallKind {
    Self,     // this.m(...) / bare m(...): checked against the signature only
    Protocol  // through a field or local: follows and advances the usage
};
struct CallE {
    CallKind kind = CallKind::Protocol;
    ExprPtr recv;
    std::string method;
    std::vector<ExprPtr> args;
};
struct IfE {
    ExprPtr cond, then_e, else_e;
};
struct WhileE {
    ExprPtr cond, body;
};
struct SpawnE {
    ExprPtr body;
};
struct PrintE {
    ExprPtr arg;
};
enum class BinOpKind { Add, Sub, Le, Ge, Eq };
struct BinOpE {
    BinOpKind op;
    ExprPtr lhs, rhs;
};
// runtime only: the thread holds the lock on `oid` while evaluating body
struct InSyncE {
    int oid = -1;
    ExprPtr body;
};
// runtime only: tags the boolean produced by body with the object whose
// variant usage it resolves
struct VariantResE {
    int oid = -1;
    ExprPtr body;
};

struct Expr {
    std::variant<LitE, IdentE, ThisE, FieldAccessE, SeqE, AssignE, LetE, NewE, CallE, IfE, WhileE,
                 SpawnE, PrintE, BinOpE, InSyncE, VariantResE>
        node;
    SourceSpan span;

    template <class T>
    const T* as() const {
        return std::get_if<T>(&node);
    }
    bool is_value() const { return as<LitE>() != nullptr; }
};

template <class T>
ExprPtr make_expr(T node, SourceSpan span = SourceSpan::none()) {
    auto e = std::make_shared<Expr>();
    e->node = std::move(node);
    e->span = std::move(span);
    return e;
}

ExprPtr unit_lit(SourceSpan span = SourceSpan::none());

bool expr_equal(const ExprPtr& a, const ExprPtr& b);

// ---- declarations ---------------------------------------------------------

struct FieldDecl {
    Type type;
    std::string name;
    SourceSpan span;
};

struct Param {
    Type type;
    std::string name;
    SourceSpan span;
};

struct MethodDecl {
    bool sync = false;
    Type return_type;
    std::string name;
    std::vector<Param> params;
    ExprPtr body;
    SourceSpan span;
};

struct ClassDecl {
    std::string name;
    UsagePtr usage;             // null until defaulting/resolution
    bool usage_defaulted = false;
    std::map<std::string, UsagePtr> where_names;  // resolved state names
    std::vector<FieldDecl> fields;
    std::vector<MethodDecl> methods;
    SourceSpan span;

    const MethodDecl* find_method(const std::string& name) const;
    const FieldDecl* find_field(const std::string& name) const;
};

struct Program {
    std::vector<ClassDecl> classes;

    const ClassDecl* find_class(const std::string& name) const;
};

bool program_equal(const Program& a, const Program& b);

// ---- pretty printing -------------------------------------------------------

std::string pretty_print(const Program& p);
std::string pretty_print(const ClassDecl& c);
std::string pretty_print(const ExprPtr& e);

// ---- runtime substitution ---------------------------------------------------

// Replaces `this` and the given identifiers by literal values. Let binders
// shadow their name.
ExprPtr substitute(const ExprPtr& e, const std::map<std::string, Value>& env,
                   const std::optional<Value>& this_value);

}  // namespace mool
