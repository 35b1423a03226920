#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "mool/parser.hpp"
#include "mool/runtime.hpp"
#include "mool/typecheck.hpp"
#include "support/corpus.hpp"

using namespace mool;

namespace {

Program load(const std::string& name) {
    Program p = testsupport::parse_corpus(name);
    DiagnosticBag d = check_program(p);
    if (d.has_errors()) {
        std::ostringstream os;
        d.print(os);
        FAIL(name << " should type-check:\n" << os.str());
    }
    return p;
}

Program parse_ok(const std::string& src) {
    DiagnosticBag diags;
    auto p = parse_program(src, "<test>", diags);
    REQUIRE(p.has_value());
    REQUIRE(!diags.has_errors());
    DiagnosticBag d = check_program(*p);
    REQUIRE(!d.has_errors());
    return *p;
}

bool has_violation(const ExploreReport& r, const std::string& kind) {
    for (const auto& v : r.violations) {
        if (v.kind == kind) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("a single-threaded program explores exactly one trace") {
    Program p = parse_ok("class Main { unit main() { print(1); print(2); } }");
    ExploreReport r = explore(p, {});
    CHECK(r.single_trace);
    CHECK(r.final_states.size() == 1);
    CHECK(r.violations.empty());
    CHECK(r.deadlock_states == 0);
}

TEST_CASE("synchronized increments never overlap and never lose updates") {
    Program p = load("counter_sync.mool");
    ExploreOptions opts;
    opts.max_states = 10000;
    ExploreReport r = explore(p, opts);
    CHECK(!r.blowup);
    CHECK(r.states_visited <= 10000);
    CHECK(r.violations.empty());
    CHECK(!r.single_trace);  // the two threads really interleave
    REQUIRE(!r.final_states.empty());
    for (const auto& snap : r.final_states) {
        CAPTURE(snap);
        CHECK(snap.find("count=2") != std::string::npos);
    }
}

TEST_CASE("removing sync exposes a lost update on the read-modify-write") {
    Program p = load("counter_broken.mool");
    ExploreOptions opts;
    opts.max_states = 10000;
    ExploreReport r = explore(p, opts);
    CHECK(!r.blowup);
    // the lock discipline itself is untouched (there are no locks left)...
    CHECK(!has_violation(r, "lock-overlap"));
    // ...but some interleaving of the unprotected counter loses an update
    bool lost_update = false;
    bool clean_run = false;
    for (const auto& snap : r.final_states) {
        if (snap.find("count=1") != std::string::npos) lost_update = true;
        if (snap.find("count=2") != std::string::npos) clean_run = true;
    }
    CHECK(lost_update);
    CHECK(clean_run);
}

TEST_CASE("the selling fragment preserves linear uniqueness in every state") {
    Program p = load("selling_fragment.mool");
    ExploreOptions opts;
    opts.max_states = 50000;
    ExploreReport r = explore(p, opts);
    CHECK(!r.blowup);
    CHECK(r.violations.empty());
    CHECK(!has_violation(r, "linear-alias"));
    CHECK(!has_violation(r, "unavailable"));
    CHECK(!has_violation(r, "uninit"));
    CHECK(r.deadlock_states == 0);
    CHECK(r.final_states.size() >= 1);
}

TEST_CASE("two bidders racing sync bids never violate mutual exclusion") {
    Program p = parse_ok(
        "class Auction {"
        "  usage lin init; Choose where Choose = *{bid + getFinalPrice};"
        "  int bidder; int finalPrice;"
        "  unit init() { bidder = 0; finalPrice = 0; }"
        "  sync unit bid(int pid, int price) {"
        "    if (finalPrice <= price) { bidder = pid; finalPrice = price; }"
        "  }"
        "  int getFinalPrice() { finalPrice; }"
        "}"
        "class Main { unit main() {"
        "  Auction a = new Auction();"
        "  a.init();"
        "  spawn a.bid(1, 100);"
        "  spawn a.bid(2, 120);"
        "} }");
    ExploreOptions opts;
    opts.max_states = 100000;
    ExploreReport r = explore(p, opts);
    CHECK(!r.blowup);
    CHECK(r.violations.empty());
    // the two bids commute up to the tie-break, and both land
    for (const auto& snap : r.final_states) {
        CAPTURE(snap);
        CHECK(snap.find("finalPrice=120") != std::string::npos);
    }
}

TEST_CASE("the explorer finds the classic lock-order deadlock") {
    Program p = parse_ok(
        "class Node {"
        "  usage lin init; Shared where Shared = *{go + poke};"
        "  unit init() { unit; }"
        "  sync unit go(Node[Shared] o) { o.poke(); }"
        "  sync unit poke() { unit; }"
        "}"
        "class Main { unit main() {"
        "  Node a = new Node(); a.init();"
        "  Node b = new Node(); b.init();"
        "  spawn a.go(b);"
        "  b.go(a);"
        "} }");
    ExploreReport r = explore(p, {});
    CHECK(!r.blowup);
    CHECK(r.deadlock_states > 0);
    CHECK(!has_violation(r, "lock-overlap"));
}

TEST_CASE("state budget blowup is reported") {
    Program p = load("counter_sync.mool");
    ExploreOptions opts;
    opts.max_states = 3;
    ExploreReport r = explore(p, opts);
    CHECK(r.blowup);
}
