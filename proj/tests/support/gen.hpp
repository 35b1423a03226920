#pragma once

#include <random>
#include <string>
#include <vector>

#include "mool/usage.hpp"

// random contractive usage generator for property tests
namespace testgen {

using mool::Qualifier;
using mool::Usage;
using mool::UsagePtr;

struct Gen {
    std::mt19937_64 rng;
    std::vector<std::string> labels{"a", "b", "c", "d"};

    explicit Gen(std::uint64_t seed) : rng(seed) {}

    int pick(int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); }

    Qualifier qual() { return pick(2) == 0 ? Qualifier::Lin : Qualifier::Un; }

    UsagePtr usage(int budget, std::vector<std::string> scope = {}, int rec_depth = 0) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            UsagePtr u = raw(budget, scope, rec_depth);
            if (mool::is_contractive(u) && mool::free_usage_vars(u).empty()) return u;
        }
        return Usage::end();
    }

    UsagePtr raw(int budget, const std::vector<std::string>& scope, int rec_depth) {
        if (budget <= 1) {
            if (!scope.empty() && pick(3) == 0) {
                return Usage::var(scope[static_cast<size_t>(pick(static_cast<int>(scope.size())))]);
            }
            return Usage::branch(qual(), {});
        }
        switch (pick(8)) {
            case 0:
            case 1:
            case 2:
            case 3: {  // branch with 1..3 entries
                int n = 1 + pick(3);
                std::vector<std::pair<std::string, UsagePtr>> entries;
                std::vector<std::string> pool = labels;
                int per = std::max(1, (budget - 1) / n);
                for (int i = 0; i < n && !pool.empty(); ++i) {
                    size_t li = static_cast<size_t>(pick(static_cast<int>(pool.size())));
                    std::string label = pool[li];
                    pool.erase(pool.begin() + static_cast<long>(li));
                    entries.emplace_back(label, raw(per, scope, rec_depth));
                }
                return Usage::branch(qual(), std::move(entries));
            }
            case 4: {  // variant
                int half = std::max(1, (budget - 1) / 2);
                return Usage::variant(raw(half, scope, rec_depth), raw(half, scope, rec_depth));
            }
            case 5:
            case 6: {  // recursion
                if (rec_depth >= 2) return raw(budget - 1, scope, rec_depth);
                std::string var = "X" + std::to_string(rec_depth);
                auto inner = scope;
                inner.push_back(var);
                return Usage::rec(var, raw(budget - 1, inner, rec_depth + 1));
            }
            default: {
                if (!scope.empty()) {
                    return Usage::var(
                        scope[static_cast<size_t>(pick(static_cast<int>(scope.size())))]);
                }
                return Usage::branch(qual(), {});
            }
        }
    }

    // derives a supertype: drops branch entries, weakens components, or
    // unfolds a recursion (equi-recursive identity)
    UsagePtr weaken(const UsagePtr& u, int depth = 0) {
        if (depth > 4) return u;
        if (const auto* b = u->as_branch()) {
            std::vector<std::pair<std::string, UsagePtr>> entries;
            for (const auto& [label, cont] : b->entries) {
                if (b->entries.size() > 1 && pick(4) == 0) continue;  // width
                entries.emplace_back(label, weaken(cont, depth + 1));  // depth
            }
            return Usage::branch(b->qual, std::move(entries));
        }
        if (const auto* v = u->as_variant()) {
            return Usage::variant(weaken(v->on_true, depth + 1), weaken(v->on_false, depth + 1));
        }
        if (u->as_rec()) {
            if (pick(2) == 0 && mool::free_usage_vars(u).empty()) return weaken(mool::unfold(u), depth + 1);
            return u;
        }
        return u;
    }
};

}  // namespace testgen
