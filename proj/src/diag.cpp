#include "mool/diag.hpp"

#include <sstream>

#include "json.hpp"

namespace mool {

std::string Diagnostic::render() const {
    std::ostringstream os;
    if (span.valid()) {
        os << (span.file.empty() ? "<input>" : span.file) << ":" << span.start_line << ":"
           << span.start_col << ": ";
    }
    os << (severity == Severity::Error ? "error" : "warning") << "[" << code << "]: " << message;
    return os.str();
}

void DiagnosticBag::error(std::string code, std::string message, SourceSpan span) {
    diags_.push_back(Diagnostic{Severity::Error, std::move(code), std::move(message), std::move(span)});
}

void DiagnosticBag::warning(std::string code, std::string message, SourceSpan span) {
    diags_.push_back(Diagnostic{Severity::Warning, std::move(code), std::move(message), std::move(span)});
}

bool DiagnosticBag::has_errors() const {
    for (const auto& d : diags_) {
        if (d.severity == Severity::Error) return true;
    }
    return false;
}

bool DiagnosticBag::has_code(const std::string& code) const {
    for (const auto& d : diags_) {
        if (d.code == code) return true;
    }
    return false;
}

size_t DiagnosticBag::error_count() const {
    size_t n = 0;
    for (const auto& d : diags_) {
        if (d.severity == Severity::Error) n++;
    }
    return n;
}

void DiagnosticBag::append(const DiagnosticBag& other) {
    diags_.insert(diags_.end(), other.diags_.begin(), other.diags_.end());
}

void DiagnosticBag::print(std::ostream& os) const {
    for (const auto& d : diags_) {
        os << d.render() << "\n";
    }
}

std::string DiagnosticBag::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : diags_) {
        nlohmann::json j;
        j["severity"] = d.severity == Severity::Error ? "error" : "warning";
        j["code"] = d.code;
        j["message"] = d.message;
        if (d.span.valid()) {
            j["file"] = d.span.file;
            j["line"] = d.span.start_line;
            j["col"] = d.span.start_col;
            j["end_line"] = d.span.end_line;
            j["end_col"] = d.span.end_col;
        }
        arr.push_back(j);
    }
    return arr.dump(2);
}

}  // namespace mool
