#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mool {

// Usage types describe the protocol of a class: which methods are available,
// in which order, and whether the object is linear or shared at each point.
//
//   u ::= q{m1.u1, ..., mk.uk}   branch (available methods + continuations)
//       | <u + u>                variant (selected by a boolean method result)
//       | X                      usage variable
//       | mu X.u                 recursive usage (equi-recursive, contractive)

enum class Qualifier { Lin, Un };

const char* to_string(Qualifier q);

struct Usage;
using UsagePtr = std::shared_ptr<const Usage>;

// Entries keep source order for printing; all comparisons are order-insensitive.
struct UsageBranch {
    Qualifier qual = Qualifier::Un;
    std::vector<std::pair<std::string, UsagePtr>> entries;

    const UsagePtr* find(const std::string& label) const;
};

struct UsageVariant {
    UsagePtr on_true;
    UsagePtr on_false;
};

struct UsageVar {
    std::string name;
};

struct UsageRec {
    std::string var;
    UsagePtr body;
};

struct Usage {
    std::variant<UsageBranch, UsageVariant, UsageVar, UsageRec> node;

    static UsagePtr branch(Qualifier q, std::vector<std::pair<std::string, UsagePtr>> entries);
    static UsagePtr variant(UsagePtr on_true, UsagePtr on_false);
    static UsagePtr var(std::string name);
    static UsagePtr rec(std::string var, UsagePtr body);
    static UsagePtr end();  // un{}

    const UsageBranch* as_branch() const { return std::get_if<UsageBranch>(&node); }
    const UsageVariant* as_variant() const { return std::get_if<UsageVariant>(&node); }
    const UsageVar* as_var() const { return std::get_if<UsageVar>(&node); }
    const UsageRec* as_rec() const { return std::get_if<UsageRec>(&node); }
};

std::set<std::string> free_usage_vars(const UsagePtr& u);

// Capture-avoiding substitution of `repl` for free occurrences of `var`.
UsagePtr substitute_usage(const UsagePtr& u, const std::string& var, const UsagePtr& repl);

// No chain of mu-binders may reach a bound variable without passing through a
// branch or variant first.
bool is_contractive(const UsagePtr& u);

// Unrolls top-level mu binders until the head is a branch or a variant.
// Requires a closed, contractive usage.
UsagePtr unfold(const UsagePtr& u);

// Head qualifier: branches carry their own; variants are always linear.
Qualifier qualifier_of(const UsagePtr& u);

// Alpha-normalized, entry-order-insensitive key. Two usages have equal keys
// iff they are structurally equal up to renaming of bound variables.
std::string canon_key(const UsagePtr& u);

bool usage_structurally_equal(const UsagePtr& a, const UsagePtr& b);

// The variant rule of the subtype relation admits two readings; Verbatim keeps
// the inverted inner direction (u <: <a+b> when a <: u or b <: u), Conventional
// uses the ordinary one (u <: a or u <: b).
enum class SubtypeMode { Verbatim, Conventional };

bool subtype_usage(const UsagePtr& u1, const UsagePtr& u2,
                   SubtypeMode mode = SubtypeMode::Verbatim);

// Equi-recursive equivalence: mutual subtyping.
bool usage_equivalent(const UsagePtr& a, const UsagePtr& b,
                      SubtypeMode mode = SubtypeMode::Verbatim);

// Surface-syntax rendering with the usual sugar: un{} prints as "end",
// self-recursive un branches as "*{m1 + m2}", single-entry branches as
// "q m; u".
std::string usage_to_string(const UsagePtr& u);

// All method labels mentioned anywhere in the usage (without unfolding).
std::set<std::string> usage_labels(const UsagePtr& u);

}  // namespace mool
