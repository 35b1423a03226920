#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "mool/parser.hpp"
#include "mool/runtime.hpp"
#include "mool/typecheck.hpp"
#include "support/corpus.hpp"

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
    DiagnosticBag check = check_program(*p);
    if (check.has_errors()) {
        std::ostringstream os;
        check.print(os);
        FAIL("type check failed:\n" << os.str());
    }
    return *p;
}

// drives a single-threaded machine to completion
long long drive(Machine& m, int tid = 0, long long max_steps = 100000) {
    long long steps = 0;
    while (true) {
        StepResult r = m.step_thread(tid);
        if (r.kind == StepKind::Finished) return steps;
        REQUIRE(r.kind == StepKind::Stepped);
        steps++;
        REQUIRE(steps < max_steps);
    }
}

}  // namespace

TEST_CASE("init_value covers every type") {
    CHECK(init_value(Type::unit()).is_unit());
    CHECK(init_value(Type::boolean()).as_bool()->v == false);
    CHECK(init_value(Type::integer()).as_int()->v == 0);
    CHECK(init_value(Type::str()).as_str()->v == "");
    CHECK(init_value(Type::object("C", Usage::end())).is_uninit());
}

TEST_CASE("decomposition is left-to-right, innermost first") {
    // Seq(v, e2): the sequence itself is the redex
    ExprPtr seq = make_expr(SeqE{unit_lit(), unit_lit()});
    auto d = decompose(seq);
    REQUIRE(d.has_value());
    CHECK(d->redex == seq);
    CHECK(d->path.empty());

    // Assign(o.f, call): the call in value position is the redex
    ExprPtr recv = make_expr(LitE{Value::object(0)});
    ExprPtr call = make_expr(CallE{CallKind::Protocol, recv, "m", {}});
    ExprPtr assign = make_expr(AssignE{recv, "f", call});
    d = decompose(assign);
    REQUIRE(d.has_value());
    CHECK(d->redex == call);
    CHECK(d->path == std::vector<int>{0});

    // If(call, ..): the condition call is the redex
    ExprPtr iff = make_expr(IfE{call, unit_lit(), unit_lit()});
    d = decompose(iff);
    REQUIRE(d.has_value());
    CHECK(d->redex == call);

    // values do not decompose
    CHECK(!decompose(unit_lit()).has_value());
}

TEST_CASE("main(){unit} finishes in one step") {
    Program p = parse_ok("class Main { unit main() { unit; } }");
    RunOptions opts;
    RunReport r = run_program(p, opts);
    CHECK(r.outcome == RunOutcome::Finished);
    CHECK(r.steps == 1);  // the bootstrap self-call
}

TEST_CASE("R-New initializes fields to their defaults") {
    Program p = parse_ok(
        "class C { usage *{m}; boolean f; int n; string s; C o; unit m() { unit; } }"
        "class Main { unit main() { C c = new C(); unit; } }");
    Machine m(p, nullptr);
    m.bootstrap();
    drive(m);
    REQUIRE(m.state.heap.count(1) == 1);  // o0 is Main, o1 the new C
    const ObjectRecord& rec = m.state.heap.at(1);
    CHECK(rec.class_name == "C");
    CHECK(rec.lock == 0);
    CHECK(rec.fields.at("f").as_bool()->v == false);
    CHECK(rec.fields.at("n").as_int()->v == 0);
    CHECK(rec.fields.at("s").as_str()->v == "");
    CHECK(rec.fields.at("o").is_uninit());
}

TEST_CASE("reading a linear field is destructive; unrestricted reads are not") {
    Program p = parse_ok(
        "class Box { usage lin open; end; unit open() { unit; } }"
        "class H { usage lin init; lin use; end;"
        "  Box b; int n;"
        "  unit init() { b = new Box(); n = 7; }"
        "  unit use() { n; n; Box x = this.b; x.open(); }"
        "}"
        "class Main { unit main() { H h = new H(); h.init(); h.use(); } }");
    Machine m(p, nullptr);
    m.bootstrap();
    drive(m);
    // h is o1, the box o2; after use() the linear field was consumed
    const ObjectRecord& h = m.state.heap.at(1);
    CHECK(h.class_name == "H");
    CHECK(h.fields.at("b").is_unit());      // destructive read
    CHECK(h.fields.at("n").as_int()->v == 7);  // unrestricted reads leave the value
}

TEST_CASE("protocol calls advance the receiver record; self-calls do not consult it") {
    Program p = parse_ok(
        "class S { usage lin init; lin run; end;"
        "  int n;"
        "  unit init() { n = 2; }"
        "  unit run() { n = n - 1; if (0 <= n) { run(); } else { unit; } }"
        "}"
        "class Main { unit main() { S s = new S(); s.init(); s.run(); } }");
    Machine m(p, nullptr);
    m.bootstrap();
    drive(m);
    const ObjectRecord& s = m.state.heap.at(1);
    // the protocol ended even though run() recursed through self-calls
    CHECK(usage_to_string(s.usage) == "end");
    CHECK(s.fields.at("n").as_int()->v == -1);
}

TEST_CASE("sync calls block the second thread until the lock is released") {
    Program p = testsupport::parse_corpus("counter_sync.mool");
    {
        DiagnosticBag d = check_program(p);
        REQUIRE(!d.has_errors());
    }
    Machine m(p, nullptr);
    m.bootstrap();
    // run the main thread until the spawned thread exists and main holds the lock
    while (true) {
        StepResult r = m.step_thread(0);
        REQUIRE(r.kind == StepKind::Stepped);
        if (r.rule == "R-SCall") break;
    }
    REQUIRE(m.state.threads.size() == 2);
    // the other thread is now blocked on the same lock
    CHECK(m.status(1) == ThreadStatus::Blocked);
    StepResult blocked = m.step_thread(1);
    CHECK(blocked.kind == StepKind::Blocked);
    // finish main's critical section; the lock opens
    while (m.status(0) != ThreadStatus::Finished) {
        StepResult r = m.step_thread(0);
        REQUIRE(r.kind == StepKind::Stepped);
    }
    CHECK(m.status(1) == ThreadStatus::Runnable);
    while (m.status(1) != ThreadStatus::Finished) {
        StepResult r = m.step_thread(1);
        REQUIRE(r.kind == StepKind::Stepped);
    }
    CHECK(m.state.heap.at(1).fields.at("count").as_int()->v == 2);
    CHECK(m.state.heap.at(1).lock == 0);
}

TEST_CASE("print goes to the configured stream with a trailing newline") {
    Program p = parse_ok("class Main { unit main() { print(\"made \" + 100 + \" euros!\"); } }");
    std::ostringstream out;
    RunOptions opts;
    opts.out = &out;
    RunReport r = run_program(p, opts);
    CHECK(r.outcome == RunOutcome::Finished);
    CHECK(out.str() == "made 100 euros!\n");
}

TEST_CASE("the variant resolution happens when the boolean is consumed") {
    Program p = testsupport::parse_corpus("stream.mool");
    std::ostringstream out;
    RunOptions opts;
    opts.out = &out;
    RunReport r = run_program(p, opts);
    CHECK(r.outcome == RunOutcome::Finished);
    CHECK(out.str() == "2\n1\n0\n");
}

TEST_CASE("trace lines follow the documented format") {
    Program p = parse_ok("class Main { unit main() { print(\"x\"); } }");
    RunOptions opts;
    opts.collect_trace = true;
    std::ostringstream sink;
    opts.out = &sink;
    RunReport r = run_program(p, opts);
    REQUIRE(r.outcome == RunOutcome::Finished);
    REQUIRE(!r.trace.empty());
    CHECK(r.trace[0].render() == "#1 T0 R-SelfCall o0.main");
    CHECK(r.trace[1].render() == "#2 T0 R-Print");
}

TEST_CASE("identical program and seed give byte-identical traces and output") {
    Program p = testsupport::parse_corpus("auction.mool");
    auto once = [&](std::uint64_t seed) {
        RunOptions opts;
        opts.seed = seed;
        opts.collect_trace = true;
        std::ostringstream out;
        opts.out = &out;
        RunReport r = run_program(p, opts);
        REQUIRE(r.outcome == RunOutcome::Finished);
        return r.trace_text() + "\n===\n" + out.str();
    };
    CHECK(once(7) == once(7));
    // different seeds are allowed to differ; all must terminate
    once(8);
}

TEST_CASE("the whole runnable corpus terminates cleanly on several seeds") {
    for (const auto& name : testsupport::runnable_corpus()) {
        CAPTURE(name);
        Program p = testsupport::parse_corpus(name);
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            RunOptions opts;
            opts.seed = seed;
            RunReport r = run_program(p, opts);
            CAPTURE(seed);
            CAPTURE(r.fault_code);
            CAPTURE(r.detail);
            CHECK(r.outcome == RunOutcome::Finished);
        }
    }
}

TEST_CASE("object identifiers are fresh and records are never removed") {
    Program p = testsupport::parse_corpus("auction.mool");
    RunOptions opts;
    opts.seed = 3;
    Machine m(p, nullptr);
    m.bootstrap();
    std::mt19937_64 rng(3);
    size_t last_heap = m.state.heap.size();
    int last_oid = m.state.next_oid;
    for (int i = 0; i < 5000; ++i) {
        std::vector<int> runnable;
        for (const auto& t : m.state.threads) {
            if (m.status(t.id) == ThreadStatus::Runnable) runnable.push_back(t.id);
        }
        if (runnable.empty()) break;
        int tid = runnable[static_cast<size_t>(rng() % runnable.size())];
        StepResult r = m.step_thread(tid);
        REQUIRE(r.kind != StepKind::Fault);
        CHECK(m.state.heap.size() >= last_heap);
        CHECK(m.state.next_oid >= last_oid);
        last_heap = m.state.heap.size();
        last_oid = m.state.next_oid;
    }
    // ids are exactly 0..n-1: allocated in order, never reused
    int expect = 0;
    for (const auto& [oid, rec] : m.state.heap) {
        (void)rec;
        CHECK(oid == expect);
        expect++;
    }
}

TEST_CASE("step limit and deadlock are reported") {
    Program spin = parse_ok(
        "class Main { unit main() { while (true) { unit; } } }");
    RunOptions opts;
    opts.max_steps = 100;
    RunReport r = run_program(spin, opts);
    CHECK(r.outcome == RunOutcome::StepLimit);
    CHECK(r.fault_code == "E-RT-STEP-LIMIT");

    Program dead = parse_ok(
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
    bool saw_deadlock = false;
    for (std::uint64_t seed = 0; seed < 64 && !saw_deadlock; ++seed) {
        RunOptions o2;
        o2.seed = seed;
        RunReport r2 = run_program(dead, o2);
        if (r2.outcome == RunOutcome::Deadlock) {
            saw_deadlock = true;
            CHECK(r2.fault_code == "E-RT-DEADLOCK");
        } else {
            CHECK(r2.outcome == RunOutcome::Finished);
        }
    }
    CHECK(saw_deadlock);
}
