#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace mool {

struct SourceSpan {
    std::string file;
    int start_line = 0;
    int start_col = 0;
    int end_line = 0;
    int end_col = 0;

    static SourceSpan none() { return SourceSpan{}; }
    bool valid() const { return start_line > 0; }
};

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string code;    // short identifier, e.g. E-UNAVAILABLE-METHOD
    std::string message;
    SourceSpan span;

    std::string render() const;
};

class DiagnosticBag {
public:
    void error(std::string code, std::string message, SourceSpan span = SourceSpan::none());
    void warning(std::string code, std::string message, SourceSpan span = SourceSpan::none());

    bool has_errors() const;
    bool has_code(const std::string& code) const;
    size_t error_count() const;

    const std::vector<Diagnostic>& all() const { return diags_; }
    void append(const DiagnosticBag& other);
    void print(std::ostream& os) const;
    std::string to_json() const;

private:
    std::vector<Diagnostic> diags_;
};

}  // namespace mool
