#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "mool/ast.hpp"
#include "mool/diag.hpp"

namespace mool {

struct CheckOptions {
    bool strict_core = false;  // reject the int/string/locals/n-ary extensions
    SubtypeMode subtype_mode = SubtypeMode::Verbatim;
};

// A flat typing environment: fields ("this.f") and identifiers ("x") mapped to
// their current types. A key that is absent has been consumed (linear read).
// `any` marks the unconstrained environment produced by usage recursion.
struct EnvEntry {
    Type type;
    bool assigned = true;  // object fields are unassigned until first write
};

struct Env {
    bool any = false;
    std::map<std::string, EnvEntry> entries;

    static Env anything() { return Env{true, {}}; }
};

// Γ ::= Σ | <Γ + Γ>. The pair form carries the environments selected by a
// boolean result: left for true, right for false.
struct TypeEnv {
    bool is_pair = false;
    Env flat;        // valid when !is_pair
    Env left, right; // valid when is_pair

    static TypeEnv of(Env e) { return TypeEnv{false, std::move(e), {}, {}}; }
    static TypeEnv pair(Env l, Env r) { return TypeEnv{true, {}, std::move(l), std::move(r)}; }
    static TypeEnv anything() { return TypeEnv::of(Env::anything()); }
};

// Result of checking one expression: its type, the merged final environment
// (absent when the true/false sides are irreconcilable), the split
// environments for boolean results, and the receiver key whose variant usage
// the boolean resolves (must be consumed by if/while).
struct ExprResult {
    Type type;
    std::optional<Env> flat;
    std::optional<std::pair<Env, Env>> split;
    std::string pending_variant;
};

class Checker {
public:
    Checker(const Program& prog, CheckOptions opts, DiagnosticBag& diags);

    void check_program();
    void check_class(const ClassDecl& cls);

    // Θ;Γ ⊢_C u ⊣ Γ′ — checks the class against the usage, branch by branch,
    // following the declared protocol order.
    using Theta = std::map<std::string, TypeEnv>;
    TypeEnv check_usage(Theta& theta, TypeEnv env, const ClassDecl& cls, const UsagePtr& u);

    // Γ ⊢ e : t ⊣ Γ′
    ExprResult check_expr(Env env, const ExprPtr& e, const ClassDecl& cls);

    // exposed for property tests
    Env initial_class_env(const ClassDecl& cls) const;
    Env method_entry_env(Env fields, const MethodDecl& m) const;

private:
    const Program& prog_;
    CheckOptions opts_;
    DiagnosticBag& diags_;

    bool type_sub(const Type& a, const Type& b) const;
    bool type_equiv(const Type& a, const Type& b) const;
    std::optional<Type> join_types(const Type& a, const Type& b) const;
    std::optional<Env> merge_env(const Env& a, const Env& b) const;
    std::optional<TypeEnv> merge_typeenv(const TypeEnv& a, const TypeEnv& b) const;
    bool env_equiv(const Env& a, const Env& b) const;
    bool typeenv_equiv(const TypeEnv& a, const TypeEnv& b) const;
    // a may weaken pointwise into b (same domain, each type a subtype)
    bool sub_env(const Env& a, const Env& b) const;

    // collapses a result into a flat environment; reports a variant-typed
    // result used outside an if/while condition, or irreconcilable sides
    Env consume(ExprResult& r, const SourceSpan& span, const char* how);
    void check_param_exit(Env& env, const std::string& name, const char* what,
                          const SourceSpan& span);
    void check_method_in_branch(Theta& theta, const ClassDecl& cls, const MethodDecl& m,
                                const UsagePtr& cont, Env sigma, std::vector<TypeEnv>& finals);
    void check_non_usage_method(const ClassDecl& cls, const MethodDecl& m);
    void strict_core_violation(const char* what, const SourceSpan& span);
};

// Convenience wrapper: parse results in, diagnostics out.
DiagnosticBag check_program(const Program& prog, CheckOptions opts = {});

}  // namespace mool
