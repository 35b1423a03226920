#include "mool/usage.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace mool {

const char* to_string(Qualifier q) {
    return q == Qualifier::Lin ? "lin" : "un";
}

const UsagePtr* UsageBranch::find(const std::string& label) const {
    for (const auto& [name, cont] : entries) {
        if (name == label) return &cont;
    }
    return nullptr;
}

UsagePtr Usage::branch(Qualifier q, std::vector<std::pair<std::string, UsagePtr>> entries) {
    return std::make_shared<Usage>(Usage{UsageBranch{q, std::move(entries)}});
}

UsagePtr Usage::variant(UsagePtr on_true, UsagePtr on_false) {
    return std::make_shared<Usage>(Usage{UsageVariant{std::move(on_true), std::move(on_false)}});
}

UsagePtr Usage::var(std::string name) {
    return std::make_shared<Usage>(Usage{UsageVar{std::move(name)}});
}

UsagePtr Usage::rec(std::string var, UsagePtr body) {
    return std::make_shared<Usage>(Usage{UsageRec{std::move(var), std::move(body)}});
}

UsagePtr Usage::end() {
    static const UsagePtr e = Usage::branch(Qualifier::Un, {});
    return e;
}

static void free_vars_rec(const UsagePtr& u, std::set<std::string>& bound,
                          std::set<std::string>& out) {
    if (const auto* b = u->as_branch()) {
        for (const auto& [_, cont] : b->entries) free_vars_rec(cont, bound, out);
    } else if (const auto* v = u->as_variant()) {
        free_vars_rec(v->on_true, bound, out);
        free_vars_rec(v->on_false, bound, out);
    } else if (const auto* x = u->as_var()) {
        if (!bound.count(x->name)) out.insert(x->name);
    } else if (const auto* r = u->as_rec()) {
        bool fresh = bound.insert(r->var).second;
        free_vars_rec(r->body, bound, out);
        if (fresh) bound.erase(r->var);
    }
}

std::set<std::string> free_usage_vars(const UsagePtr& u) {
    std::set<std::string> bound, out;
    free_vars_rec(u, bound, out);
    return out;
}

UsagePtr substitute_usage(const UsagePtr& u, const std::string& var, const UsagePtr& repl) {
    if (const auto* b = u->as_branch()) {
        std::vector<std::pair<std::string, UsagePtr>> entries;
        entries.reserve(b->entries.size());
        bool changed = false;
        for (const auto& [name, cont] : b->entries) {
            UsagePtr c = substitute_usage(cont, var, repl);
            changed = changed || c != cont;
            entries.emplace_back(name, std::move(c));
        }
        if (!changed) return u;
        return Usage::branch(b->qual, std::move(entries));
    }
    if (const auto* v = u->as_variant()) {
        UsagePtr t = substitute_usage(v->on_true, var, repl);
        UsagePtr f = substitute_usage(v->on_false, var, repl);
        if (t == v->on_true && f == v->on_false) return u;
        return Usage::variant(std::move(t), std::move(f));
    }
    if (const auto* x = u->as_var()) {
        return x->name == var ? repl : u;
    }
    if (const auto* r = u->as_rec()) {
        if (r->var == var) return u;  // shadowed
        if (free_usage_vars(repl).count(r->var)) {
            // rename the binder to avoid capture
            std::string fresh = r->var;
            auto fv = free_usage_vars(repl);
            auto fvb = free_usage_vars(r->body);
            do {
                fresh += "'";
            } while (fv.count(fresh) || fvb.count(fresh));
            UsagePtr renamed = substitute_usage(r->body, r->var, Usage::var(fresh));
            return Usage::rec(fresh, substitute_usage(renamed, var, repl));
        }
        UsagePtr body = substitute_usage(r->body, var, repl);
        if (body == r->body) return u;
        return Usage::rec(r->var, std::move(body));
    }
    throw std::logic_error("substitute_usage: bad node");
}

static bool contractive_rec(const UsagePtr& u, std::set<std::string>& pending) {
    if (const auto* b = u->as_branch()) {
        std::set<std::string> none;
        for (const auto& [_, cont] : b->entries) {
            if (!contractive_rec(cont, none)) return false;
        }
        return true;
    }
    if (const auto* v = u->as_variant()) {
        std::set<std::string> none;
        return contractive_rec(v->on_true, none) && contractive_rec(v->on_false, none);
    }
    if (const auto* x = u->as_var()) {
        // a variable still "pending" was reached through mu binders only
        return !pending.count(x->name);
    }
    if (const auto* r = u->as_rec()) {
        pending.insert(r->var);
        bool ok = contractive_rec(r->body, pending);
        pending.erase(r->var);
        return ok;
    }
    return false;
}

bool is_contractive(const UsagePtr& u) {
    std::set<std::string> pending;
    return contractive_rec(u, pending);
}

UsagePtr unfold(const UsagePtr& u) {
    UsagePtr cur = u;
    int guard = 0;
    while (const auto* r = cur->as_rec()) {
        cur = substitute_usage(r->body, r->var, cur);
        if (++guard > 1000) throw std::logic_error("unfold: non-contractive usage");
    }
    return cur;
}

Qualifier qualifier_of(const UsagePtr& u) {
    UsagePtr head = unfold(u);
    if (const auto* b = head->as_branch()) return b->qual;
    if (head->as_variant()) return Qualifier::Lin;
    throw std::logic_error("qualifier_of: open usage");
}

static void canon_rec(const UsagePtr& u, std::vector<std::string>& binders, std::string& out) {
    if (const auto* b = u->as_branch()) {
        out += b->qual == Qualifier::Lin ? "L{" : "U{";
        std::vector<std::pair<std::string, const UsagePtr*>> sorted;
        sorted.reserve(b->entries.size());
        for (const auto& [name, cont] : b->entries) sorted.emplace_back(name, &cont);
        std::sort(sorted.begin(), sorted.end(),
                  [](const auto& a, const auto& c) { return a.first < c.first; });
        for (const auto& [name, cont] : sorted) {
            out += name;
            out += ':';
            canon_rec(*cont, binders, out);
            out += ',';
        }
        out += '}';
    } else if (const auto* v = u->as_variant()) {
        out += "V(";
        canon_rec(v->on_true, binders, out);
        out += '+';
        canon_rec(v->on_false, binders, out);
        out += ')';
    } else if (const auto* x = u->as_var()) {
        // de Bruijn index; free variables keep their names
        for (size_t i = binders.size(); i-- > 0;) {
            if (binders[i] == x->name) {
                out += '#';
                out += std::to_string(binders.size() - 1 - i);
                return;
            }
        }
        out += '?';
        out += x->name;
    } else if (const auto* r = u->as_rec()) {
        out += "R.";
        binders.push_back(r->var);
        canon_rec(r->body, binders, out);
        binders.pop_back();
    }
}

std::string canon_key(const UsagePtr& u) {
    std::string out;
    std::vector<std::string> binders;
    canon_rec(u, binders, out);
    return out;
}

bool usage_structurally_equal(const UsagePtr& a, const UsagePtr& b) {
    if (a == b) return true;
    return canon_key(a) == canon_key(b);
}

namespace {

struct SubtypeCtx {
    SubtypeMode mode;
    // assumptions live only along the current derivation path; results from
    // failed alternatives must not leak into sibling subgoals
    std::set<std::pair<std::string, std::string>> assumed;
};

bool sub_cases(const UsagePtr& u1, const UsagePtr& u2, SubtypeCtx& ctx);

bool sub(const UsagePtr& u1, const UsagePtr& u2, SubtypeCtx& ctx) {
    auto key = std::make_pair(canon_key(u1), canon_key(u2));
    if (key.first == key.second) return true;
    if (ctx.assumed.count(key)) return true;
    ctx.assumed.insert(key);
    bool ok = sub_cases(u1, u2, ctx);
    ctx.assumed.erase(key);
    return ok;
}

bool sub_cases(const UsagePtr& u1, const UsagePtr& u2, SubtypeCtx& ctx) {
    UsagePtr h1 = unfold(u1);
    UsagePtr h2 = unfold(u2);

    const auto* v1 = h1->as_variant();
    const auto* v2 = h2->as_variant();
    if (v1 && v2) {
        return sub(v1->on_true, v2->on_true, ctx) && sub(v1->on_false, v2->on_false, ctx);
    }
    if (v2) {
        if (ctx.mode == SubtypeMode::Verbatim) {
            return sub(v2->on_true, h1, ctx) || sub(v2->on_false, h1, ctx);
        }
        return sub(h1, v2->on_true, ctx) || sub(h1, v2->on_false, ctx);
    }
    if (v1) return false;

    const auto* b1 = h1->as_branch();
    const auto* b2 = h2->as_branch();
    if (!b1 || !b2) return false;
    if (b1->qual != b2->qual) return false;
    // width: the supertype may offer fewer methods; depth: componentwise
    for (const auto& [label, cont2] : b2->entries) {
        const UsagePtr* cont1 = b1->find(label);
        if (!cont1) return false;
        if (!sub(*cont1, cont2, ctx)) return false;
    }
    return true;
}

}  // namespace

bool subtype_usage(const UsagePtr& u1, const UsagePtr& u2, SubtypeMode mode) {
    SubtypeCtx ctx{mode, {}};
    return sub(u1, u2, ctx);
}

bool usage_equivalent(const UsagePtr& a, const UsagePtr& b, SubtypeMode mode) {
    return subtype_usage(a, b, mode) && subtype_usage(b, a, mode);
}

// ---- printing -------------------------------------------------------------

static bool is_end(const UsagePtr& u) {
    const auto* b = u->as_branch();
    return b && b->qual == Qualifier::Un && b->entries.empty();
}

// matches mu X.un{m1.X, ..., mk.X} with k >= 1
static const UsageBranch* star_shape(const UsagePtr& u) {
    const auto* r = u->as_rec();
    if (!r) return nullptr;
    const auto* b = r->body->as_branch();
    if (!b || b->qual != Qualifier::Un || b->entries.empty()) return nullptr;
    for (const auto& [_, cont] : b->entries) {
        const auto* x = cont->as_var();
        if (!x || x->name != r->var) return nullptr;
    }
    return b;
}

// inside a variant, a lin single-entry branch prints without its qualifier
static void print_variant_side(const UsagePtr& u, std::ostream& os);

static void print_rec(const UsagePtr& u, std::ostream& os) {
    if (is_end(u)) {
        os << "end";
        return;
    }
    if (const auto* star = star_shape(u)) {
        os << "*{";
        for (size_t i = 0; i < star->entries.size(); ++i) {
            if (i) os << " + ";
            os << star->entries[i].first;
        }
        os << "}";
        return;
    }
    if (const auto* b = u->as_branch()) {
        if (b->entries.size() == 1) {
            os << to_string(b->qual) << " " << b->entries[0].first << "; ";
            print_rec(b->entries[0].second, os);
            return;
        }
        os << to_string(b->qual) << "{";
        for (size_t i = 0; i < b->entries.size(); ++i) {
            if (i) os << " + ";
            os << b->entries[i].first << "; ";
            print_rec(b->entries[i].second, os);
        }
        os << "}";
        return;
    }
    if (const auto* v = u->as_variant()) {
        os << "<";
        print_variant_side(v->on_true, os);
        os << " + ";
        print_variant_side(v->on_false, os);
        os << ">";
        return;
    }
    if (const auto* x = u->as_var()) {
        os << x->name;
        return;
    }
    if (const auto* r = u->as_rec()) {
        os << "mu " << r->var << ".";
        print_rec(r->body, os);
        return;
    }
}

static void print_variant_side(const UsagePtr& u, std::ostream& os) {
    if (const auto* b = u->as_branch()) {
        if (b->qual == Qualifier::Lin && b->entries.size() == 1) {
            os << b->entries[0].first << "; ";
            print_rec(b->entries[0].second, os);
            return;
        }
    }
    print_rec(u, os);
}

std::string usage_to_string(const UsagePtr& u) {
    std::ostringstream os;
    print_rec(u, os);
    return os.str();
}

static void labels_rec(const UsagePtr& u, std::set<std::string>& out) {
    if (const auto* b = u->as_branch()) {
        for (const auto& [name, cont] : b->entries) {
            out.insert(name);
            labels_rec(cont, out);
        }
    } else if (const auto* v = u->as_variant()) {
        labels_rec(v->on_true, out);
        labels_rec(v->on_false, out);
    } else if (const auto* r = u->as_rec()) {
        labels_rec(r->body, out);
    }
}

std::set<std::string> usage_labels(const UsagePtr& u) {
    std::set<std::string> out;
    labels_rec(u, out);
    return out;
}

}  // namespace mool
