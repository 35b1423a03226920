#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mool/parser.hpp"
#include "mool/usage.hpp"
#include "support/gen.hpp"
#include "support/oracle.hpp"

using namespace mool;

namespace {

UsagePtr U(const std::string& text) {
    DiagnosticBag diags;
    UsagePtr u = parse_usage_text(text, diags);
    REQUIRE(u != nullptr);
    REQUIRE(!diags.has_errors());
    return u;
}

}  // namespace

TEST_CASE("qualifiers print") {
    CHECK(std::string(to_string(Qualifier::Lin)) == "lin");
    CHECK(std::string(to_string(Qualifier::Un)) == "un");
}

TEST_CASE("free usage variables") {
    CHECK(free_usage_vars(Usage::rec("X", Usage::branch(Qualifier::Un, {{"m", Usage::var("X")}})))
              .empty());
    CHECK(free_usage_vars(Usage::var("X")) == std::set<std::string>{"X"});
    CHECK(free_usage_vars(Usage::rec("X", Usage::branch(Qualifier::Un, {{"m", Usage::var("Y")}}))) ==
          std::set<std::string>{"Y"});
}

TEST_CASE("contractivity") {
    CHECK_FALSE(is_contractive(Usage::rec("X", Usage::var("X"))));
    CHECK(is_contractive(U("mu X.un m; X")));
    CHECK_FALSE(is_contractive(Usage::rec("X", Usage::rec("Y", Usage::var("X")))));
    CHECK(is_contractive(Usage::rec("X", Usage::variant(Usage::var("X"), Usage::end()))));
}

TEST_CASE("unfold reaches a head form") {
    UsagePtr star = U("*{selling + bidding}");
    UsagePtr h = unfold(star);
    const auto* b = h->as_branch();
    REQUIRE(b != nullptr);
    CHECK(b->qual == Qualifier::Un);
    REQUIRE(b->entries.size() == 2);
    // each continuation is the recursive type itself
    for (const auto& [label, cont] : b->entries) {
        CHECK(usage_structurally_equal(cont, star));
    }

    CHECK(usage_structurally_equal(unfold(Usage::end()), Usage::end()));

    // mu X.mu Y.un{m.Y} unfolds (two substitution steps) to un{m. mu Y.un{m.Y}}
    UsagePtr inner = Usage::rec("Y", Usage::branch(Qualifier::Un, {{"m", Usage::var("Y")}}));
    UsagePtr nested = Usage::rec("X", inner);
    UsagePtr expect = Usage::branch(Qualifier::Un, {{"m", inner}});
    CHECK(usage_structurally_equal(unfold(nested), expect));
}

TEST_CASE("qualifier of a usage") {
    CHECK(qualifier_of(Usage::variant(Usage::end(), Usage::end())) == Qualifier::Lin);
    CHECK(qualifier_of(Usage::end()) == Qualifier::Un);
    CHECK(qualifier_of(U("mu X.un m; X")) == Qualifier::Un);
    CHECK(qualifier_of(U("lin m; end")) == Qualifier::Lin);
}

TEST_CASE("canonical keys ignore binder names and entry order") {
    UsagePtr a = U("mu X.un{m; X + n; X}");
    UsagePtr b = U("mu Z.un{n; Z + m; Z}");
    CHECK(canon_key(a) == canon_key(b));
    CHECK(usage_structurally_equal(a, b));
    CHECK(canon_key(U("lin m; end")) != canon_key(U("un m; end")));
}

TEST_CASE("usage printing uses the surface sugar") {
    CHECK(usage_to_string(U("lin init; end")) == "lin init; end");
    CHECK(usage_to_string(U("lin init; *{selling + bidding}")) ==
          "lin init; *{selling + bidding}");
    CHECK(usage_to_string(U("lin sold; <getPrice; end + end>")) ==
          "lin sold; <getPrice; end + end>");
    CHECK(usage_to_string(Usage::end()) == "end");
}

TEST_CASE("subtyping on branches: width and depth") {
    // a wider branch may be used where a narrower one is expected
    CHECK(subtype_usage(U("lin{a; end + b; end}"), U("lin a; end")));
    CHECK_FALSE(subtype_usage(U("lin a; end"), U("lin{a; end + b; end}")));
    // qualifiers must match
    CHECK_FALSE(subtype_usage(U("lin a; end"), U("un a; end")));
    // equi-recursion: a type and its unfolding are interchangeable
    UsagePtr rec = U("mu X.un m; X");
    CHECK(subtype_usage(rec, unfold(rec)));
    CHECK(subtype_usage(unfold(rec), rec));
}

TEST_CASE("subtyping on types") {
    CHECK(subtype(Type::boolean(), Type::boolean()));
    CHECK(subtype(Type::unit(), Type::unit()));
    CHECK_FALSE(subtype(Type::boolean(), Type::unit()));
    CHECK_FALSE(subtype(Type::object("C", Usage::end()), Type::object("D", Usage::end())));
    Type selling = Type::object("Selling", U("lin sold; <getPrice; end + end>"));
    CHECK(subtype(selling, selling));
}

TEST_CASE("variant subtyping, both readings") {
    UsagePtr u = U("lin a; end");
    UsagePtr wider = U("lin{a; end + b; end}");
    // verbatim: u <: <x + y> needs x <: u or y <: u
    CHECK(subtype_usage(u, Usage::variant(wider, Usage::end()), SubtypeMode::Verbatim));
    CHECK_FALSE(subtype_usage(u, Usage::variant(Usage::end(), Usage::end()), SubtypeMode::Verbatim));
    // conventional: u <: <x + y> needs u <: x or u <: y
    CHECK(subtype_usage(wider, Usage::variant(u, Usage::end()), SubtypeMode::Conventional));
    CHECK_FALSE(subtype_usage(Usage::end(), Usage::variant(u, wider), SubtypeMode::Conventional));
    // componentwise when both sides are variants (either mode)
    CHECK(subtype_usage(Usage::variant(wider, Usage::end()), Usage::variant(u, Usage::end()),
                        SubtypeMode::Verbatim));
}

// The verbatim reading of the variant rule is not transitive; this documents
// a concrete counterexample, and that the conventional reading handles it.
TEST_CASE("verbatim variant rule breaks transitivity on a known triple") {
    UsagePtr u1 = U("lin{a; end + b; end}");
    UsagePtr u2 = Usage::variant(u1, Usage::end());
    UsagePtr u3 = Usage::variant(U("lin a; end"), Usage::end());
    REQUIRE(subtype_usage(u1, u2, SubtypeMode::Verbatim));
    REQUIRE(subtype_usage(u2, u3, SubtypeMode::Verbatim));
    CHECK_FALSE(subtype_usage(u1, u3, SubtypeMode::Verbatim));

    // conventionally the chain collapses as expected
    CHECK(subtype_usage(u1, u2, SubtypeMode::Conventional));
    CHECK(subtype_usage(u2, u3, SubtypeMode::Conventional));
    CHECK(subtype_usage(u1, u3, SubtypeMode::Conventional));
}

TEST_CASE("property: reflexivity on random contractive usages") {
    testgen::Gen gen(0xA11CE);
    for (int i = 0; i < 2000; ++i) {
        UsagePtr u = gen.usage(6);
        CAPTURE(usage_to_string(u));
        CHECK(subtype_usage(u, u, SubtypeMode::Verbatim));
        CHECK(subtype_usage(u, u, SubtypeMode::Conventional));
    }
}

TEST_CASE("property: unfolding is invisible to subtyping") {
    testgen::Gen gen(0xBEE5);
    for (int i = 0; i < 500; ++i) {
        UsagePtr u = gen.usage(6);
        UsagePtr h = unfold(u);
        CHECK(subtype_usage(u, h));
        CHECK(subtype_usage(h, u));
    }
}

TEST_CASE("property: dropping a supertype branch entry preserves subtyping") {
    testgen::Gen gen(0xD00D);
    int seen = 0;
    for (int i = 0; i < 2000 && seen < 300; ++i) {
        UsagePtr u = gen.usage(6);
        UsagePtr h = unfold(u);
        const auto* b = h->as_branch();
        if (!b || b->entries.size() < 2) continue;
        seen++;
        for (size_t drop = 0; drop < b->entries.size(); ++drop) {
            std::vector<std::pair<std::string, UsagePtr>> entries;
            for (size_t j = 0; j < b->entries.size(); ++j) {
                if (j != drop) entries.push_back(b->entries[j]);
            }
            CHECK(subtype_usage(u, Usage::branch(b->qual, std::move(entries))));
        }
    }
    CHECK(seen > 0);
}

TEST_CASE("property: derived supertypes are accepted") {
    testgen::Gen gen(0xFADE);
    for (int i = 0; i < 1000; ++i) {
        UsagePtr u = gen.usage(6);
        UsagePtr w = gen.weaken(u);
        CAPTURE(usage_to_string(u));
        CAPTURE(usage_to_string(w));
        CHECK(subtype_usage(u, w, SubtypeMode::Conventional));
    }
}

TEST_CASE("property: agreement with the bounded-simulation oracle") {
    testgen::Gen gen(0x0DDB);
    for (mool::SubtypeMode mode : {SubtypeMode::Verbatim, SubtypeMode::Conventional}) {
        int disagreements = 0;
        for (int i = 0; i < 1000; ++i) {
            UsagePtr a = gen.usage(6);
            UsagePtr b = (i % 2 == 0) ? gen.usage(6) : gen.weaken(a);
            bool impl = subtype_usage(a, b, mode);
            bool oracle = testoracle::o_sub(a, b, 8, mode);
            if (impl != oracle) {
                disagreements++;
                CAPTURE(usage_to_string(a));
                CAPTURE(usage_to_string(b));
                CHECK(impl == oracle);
            }
        }
        CHECK(disagreements == 0);
    }
}
