#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mool/ast.hpp"
#include "mool/diag.hpp"
#include "mool/lexer.hpp"

namespace mool {

// Parses a whole source file and runs the resolution pipeline:
// where-name expansion, default-usage insertion, annotation resolution,
// this-insertion, and name/usage validation. Diagnostics accumulate; a
// program is returned whenever anything parseable was found so downstream
// consumers can keep reporting.
std::optional<Program> parse_program(const std::string& source, const std::string& file,
                                     DiagnosticBag& diags);

// Parses a usage expression in isolation (tests and tooling). Free names are
// kept as usage variables.
UsagePtr parse_usage_text(const std::string& text, DiagnosticBag& diags);

// Classes without a usage clause get *{m1 + ... + mk}: every declared method
// stays available forever. No methods means un{} (no protocol). Idempotent.
ClassDecl insert_default_usage(ClassDecl c);

// Rewrites bare field names to this.f, classifies calls (self vs protocol),
// and resolves identifiers against parameters and locals.
ClassDecl insert_this(ClassDecl c, DiagnosticBag& diags);

}  // namespace mool
