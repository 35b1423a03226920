#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "mool/parser.hpp"
#include "mool/typecheck.hpp"
#include "support/corpus.hpp"
#include "support/gen.hpp"

using namespace mool;

namespace {

Program parse_ok(const std::string& src) {
    DiagnosticBag diags;
    auto p = parse_program(src, "<test>", diags);
    if (!p || diags.has_errors()) {
        std::ostringstream os;
        diags.print(os);
        FAIL("parse failed:\n" << os.str());
    }
    return *p;
}

DiagnosticBag check_source(const std::string& src, CheckOptions opts = {}) {
    DiagnosticBag diags;
    auto p = parse_program(src, "<test>", diags);
    REQUIRE(p.has_value());
    if (!diags.has_errors()) diags.append(check_program(*p, opts));
    return diags;
}

void expect_clean(const std::string& name) {
    Program p = testsupport::parse_corpus(name);
    DiagnosticBag diags = check_program(p);
    if (diags.has_errors()) {
        std::ostringstream os;
        diags.print(os);
        FAIL(name << " should type-check:\n" << os.str());
    }
}

}  // namespace

TEST_CASE("the whole corpus type-checks with zero diagnostics") {
    for (const auto& name : testsupport::runnable_corpus()) {
        CAPTURE(name);
        expect_clean(name);
    }
}

TEST_CASE("a minimal Main-only program is accepted") {
    DiagnosticBag d = check_source("class Main { unit main() { unit; } }");
    CHECK(!d.has_errors());
    CHECK(d.all().empty());
}

TEST_CASE("literals type as expected, environment untouched") {
    Program p = parse_ok("class Main { unit main() { unit; } }");
    DiagnosticBag diags;
    Checker checker(p, {}, diags);
    const ClassDecl& main_cls = *p.find_class("Main");
    Env env;
    env.entries["x"] = EnvEntry{Type::integer(), true};
    ExprResult r = checker.check_expr(env, make_expr(LitE{Value::boolean(true)}), main_cls);
    CHECK(r.type.kind == Type::Kind::Boolean);
    REQUIRE(r.flat.has_value());
    CHECK(r.flat->entries.count("x") == 1);
    CHECK(!diags.has_errors());
}

TEST_CASE("check_usage on an empty un branch returns the environment unchanged") {
    Program p = parse_ok("class Main { unit main() { unit; } }");
    DiagnosticBag diags;
    Checker checker(p, {}, diags);
    const ClassDecl& main_cls = *p.find_class("Main");
    Env env;
    env.entries["this.f"] = EnvEntry{Type::integer(), true};
    Checker::Theta theta;
    TypeEnv out = checker.check_usage(theta, TypeEnv::of(env), main_cls, Usage::end());
    REQUIRE(!out.is_pair);
    CHECK(out.flat.entries.count("this.f") == 1);
    CHECK(!diags.has_errors());
}

TEST_CASE("every mutant is rejected with its expected code") {
    for (const auto& name : testsupport::mutant_files()) {
        CAPTURE(name);
        std::string src = testsupport::read_corpus(name);
        std::string code = testsupport::expected_code(src);
        REQUIRE(!code.empty());
        DiagnosticBag diags;
        auto p = parse_program(src, name, diags);
        REQUIRE(p.has_value());
        if (!diags.has_errors()) diags.append(check_program(*p));
        CHECK(diags.has_errors());
        if (!diags.has_code(code)) {
            std::ostringstream os;
            diags.print(os);
            FAIL(name << " expected " << code << ", got:\n" << os.str());
        }
    }
}

TEST_CASE("variant branches see the resolved protocol state") {
    // then-branch may call getPrice, else-branch may not
    DiagnosticBag ok = check_source(
        "class S { usage lin sold; <getPrice; end + end>;"
        "  boolean sold() { true; } unit getPrice() { unit; } }"
        "class Main { unit main() {"
        "  S s = new S();"
        "  if (s.sold()) { s.getPrice(); } else { unit; }"
        "} }");
    CHECK(!ok.has_errors());

    DiagnosticBag bad = check_source(
        "class S { usage lin sold; <getPrice; end + end>;"
        "  boolean sold() { true; } unit getPrice() { unit; } }"
        "class Main { unit main() {"
        "  S s = new S();"
        "  if (s.sold()) { unit; } else { s.getPrice(); }"
        "} }");
    CHECK(bad.has_code("E-UNAVAILABLE-METHOD"));
}

TEST_CASE("variant-controlled loops restore the protocol") {
    DiagnosticBag ok = check_source(
        "class T { usage lin init; More where More = lin more; <next; More + end>;"
        "  int n;"
        "  unit init() { n = 2; }"
        "  boolean more() { n = n - 1; 0 <= n; }"
        "  unit next() { unit; } }"
        "class Main { unit main() {"
        "  T t = new T();"
        "  t.init();"
        "  while (t.more()) { t.next(); }"
        "} }");
    CHECK(!ok.has_errors());
}

TEST_CASE("a class whose protocol ends with an unrestricted field state is accepted") {
    DiagnosticBag d = check_source(
        "class NoFields { usage end; }"
        "class Main { unit main() { unit; } }");
    CHECK(!d.has_errors());
}

TEST_CASE("methods outside the usage must not change field types") {
    DiagnosticBag bad = check_source(
        "class Box { usage lin open; end; unit open() { unit; } }"
        "class H { usage lin init; end;"
        "  Box b;"
        "  unit init() { b = new Box(); helper(); this.b.open(); }"
        "  unit helper() { Box x = this.b; x.open(); }"
        "}"
        "class Main { unit main() { unit; } }");
    CHECK(bad.has_code("E-NONUSAGE-ENV-CHANGED"));

    // reading and writing unrestricted fields is fine
    DiagnosticBag ok = check_source(
        "class S { usage lin init; lin run; end;"
        "  int price;"
        "  unit init() { price = 100; }"
        "  unit run() { if (lowerPrice()) { unit; } else { unit; } }"
        "  boolean lowerPrice() { price = price - 10; 0 <= price; }"
        "}"
        "class Main { unit main() { S s = new S(); s.init(); s.run(); } }");
    CHECK(!ok.has_errors());
}

TEST_CASE("recursive usages re-entered with a changed state are rejected") {
    DiagnosticBag bad = check_source(
        "class Box { usage lin open; end; unit open() { unit; } }"
        "class R { usage lin init; Rep where Rep = lin take; Rep;"
        "  Box b;"
        "  unit init() { b = new Box(); }"
        "  unit take() { Box x = this.b; x.open(); }"
        "}"
        "class Main { unit main() { unit; } }");
    CHECK(bad.has_code("E-REC-ENV-MISMATCH"));
}

TEST_CASE("self-calls go through the signature, not the usage") {
    // recursion on a usage method is fine through a self-call
    DiagnosticBag d = check_source(
        "class S { usage lin init; lin run; end;"
        "  int n;"
        "  unit init() { n = 3; }"
        "  unit run() { n = n - 1; if (0 <= n) { run(); } else { unit; } }"
        "}"
        "class Main { unit main() { S s = new S(); s.init(); s.run(); } }");
    CHECK(!d.has_errors());
}

TEST_CASE("strict core mode rejects the extensions") {
    CheckOptions strict;
    strict.strict_core = true;
    DiagnosticBag d = check_source(
        "class C { usage *{m}; unit m(unit x) { print(1 + 2); } }"
        "class Main { unit main() { C c = new C(); unit; } }",
        strict);
    CHECK(d.has_code("E-STRICT-CORE"));

    // and the same program passes without the flag
    DiagnosticBag ok = check_source(
        "class C { usage *{m}; unit m(unit x) { print(1 + 2); } }"
        "class Main { unit main() { C c = new C(); unit; } }");
    CHECK(!ok.has_errors());
}

TEST_CASE("acceptance is independent of method declaration order") {
    for (const auto& name : testsupport::runnable_corpus()) {
        CAPTURE(name);
        Program p = testsupport::parse_corpus(name);
        for (auto& cls : p.classes) {
            std::reverse(cls.methods.begin(), cls.methods.end());
        }
        DiagnosticBag diags = check_program(p);
        CHECK(!diags.has_errors());
    }
}

TEST_CASE("diagnostics are deterministic across runs") {
    std::string src = testsupport::read_corpus("mutants/mut_sold_twice.mool");
    auto render = [&]() {
        DiagnosticBag diags;
        auto p = parse_program(src, "m", diags);
        REQUIRE(p.has_value());
        diags.append(check_program(*p));
        std::ostringstream os;
        diags.print(os);
        return os.str();
    };
    CHECK(render() == render());
}

TEST_CASE("consumption monotonicity over corpus method bodies") {
    // no key appears in a final environment that was not already tracked
    for (const auto& name : testsupport::runnable_corpus()) {
        Program p = testsupport::parse_corpus(name);
        DiagnosticBag diags;
        Checker checker(p, {}, diags);
        for (const auto& cls : p.classes) {
            for (const auto& m : cls.methods) {
                Env entry = checker.method_entry_env(checker.initial_class_env(cls), m);
                // treat all fields as assigned so every body checks standalone
                for (auto& [k, v] : entry.entries) v.assigned = true;
                ExprResult r = checker.check_expr(entry, m.body, cls);
                const Env* out = r.flat ? &*r.flat : (r.split ? &r.split->first : nullptr);
                REQUIRE(out != nullptr);
                if (out->any) continue;
                for (const auto& [key, unused] : out->entries) {
                    (void)unused;
                    CAPTURE(name);
                    CAPTURE(cls.name);
                    CAPTURE(m.name);
                    CAPTURE(key);
                    CHECK(entry.entries.count(key) == 1);
                }
            }
        }
    }
}

TEST_CASE("usage checking terminates on random contractive usages") {
    testgen::Gen gen(0x7E57);
    for (int i = 0; i < 400; ++i) {
        UsagePtr u = gen.usage(8);
        // a synthetic class offering every label as a boolean method
        Program p;
        ClassDecl cls;
        cls.name = "T";
        cls.usage = u;
        for (const auto& label : usage_labels(u)) {
            MethodDecl m;
            m.return_type = Type::boolean();
            m.name = label;
            m.body = make_expr(LitE{Value::boolean(true)});
            cls.methods.push_back(std::move(m));
        }
        p.classes.push_back(std::move(cls));
        DiagnosticBag diags;
        Checker checker(p, {}, diags);
        Checker::Theta theta;
        // must return; acceptance may legitimately fail for odd usages
        checker.check_usage(theta, TypeEnv::of(Env{}), p.classes[0], u);
    }
    CHECK(true);
}
