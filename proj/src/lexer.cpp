#include "mool/lexer.hpp"

#include <cctype>
#include <map>

namespace mool {

const char* tok_name(Tok t) {
    switch (t) {
        case Tok::KwClass: return "'class'";
        case Tok::KwUsage: return "'usage'";
        case Tok::KwWhere: return "'where'";
        case Tok::KwLin: return "'lin'";
        case Tok::KwUn: return "'un'";
        case Tok::KwEnd: return "'end'";
        case Tok::KwSync: return "'sync'";
        case Tok::KwSpawn: return "'spawn'";
        case Tok::KwNew: return "'new'";
        case Tok::KwIf: return "'if'";
        case Tok::KwElse: return "'else'";
        case Tok::KwWhile: return "'while'";
        case Tok::KwTrue: return "'true'";
        case Tok::KwFalse: return "'false'";
        case Tok::KwUnit: return "'unit'";
        case Tok::KwPrint: return "'print'";
        case Tok::KwMu: return "'mu'";
        case Tok::KwThis: return "'this'";
        case Tok::KwBoolean: return "'boolean'";
        case Tok::KwInt: return "'int'";
        case Tok::KwString: return "'string'";
        case Tok::Ident: return "identifier";
        case Tok::IntLit: return "integer literal";
        case Tok::StrLit: return "string literal";
        case Tok::Semi: return "';'";
        case Tok::Plus: return "'+'";
        case Tok::Minus: return "'-'";
        case Tok::Star: return "'*'";
        case Tok::VariantOpen: return "'<'";
        case Tok::VariantClose: return "'>'";
        case Tok::LBrace: return "'{'";
        case Tok::RBrace: return "'}'";
        case Tok::LBracket: return "'['";
        case Tok::RBracket: return "']'";
        case Tok::Dot: return "'.'";
        case Tok::Assign: return "'='";
        case Tok::LParen: return "'('";
        case Tok::RParen: return "')'";
        case Tok::Comma: return "','";
        case Tok::Le: return "'<='";
        case Tok::Ge: return "'>='";
        case Tok::EqEq: return "'=='";
        case Tok::Eof: return "end of file";
    }
    return "?";
}

namespace {

const std::map<std::string, Tok>& keywords() {
    static const std::map<std::string, Tok> kw = {
        {"class", Tok::KwClass},   {"usage", Tok::KwUsage},   {"where", Tok::KwWhere},
        {"lin", Tok::KwLin},       {"un", Tok::KwUn},         {"end", Tok::KwEnd},
        {"sync", Tok::KwSync},     {"spawn", Tok::KwSpawn},   {"new", Tok::KwNew},
        {"if", Tok::KwIf},         {"else", Tok::KwElse},     {"while", Tok::KwWhile},
        {"true", Tok::KwTrue},     {"false", Tok::KwFalse},   {"unit", Tok::KwUnit},
        {"print", Tok::KwPrint},   {"mu", Tok::KwMu},         {"this", Tok::KwThis},
        {"boolean", Tok::KwBoolean}, {"int", Tok::KwInt},     {"string", Tok::KwString},
    };
    return kw;
}

struct Lexer {
    const std::string& src;
    const std::string& file;
    DiagnosticBag& diags;
    size_t pos = 0;
    int line = 1, col = 1;

    bool done() const { return pos >= src.size(); }
    char peek(size_t off = 0) const { return pos + off < src.size() ? src[pos + off] : '\0'; }

    char advance() {
        char c = src[pos++];
        if (c == '\n') {
            line++;
            col = 1;
        } else {
            col++;
        }
        return c;
    }

    SourceSpan here() const { return SourceSpan{file, line, col, line, col}; }

    SourceSpan span_from(const SourceSpan& start) const {
        SourceSpan s = start;
        s.end_line = line;
        s.end_col = col;
        return s;
    }
};

}  // namespace

std::vector<Token> tokenize(const std::string& source, const std::string& file,
                            DiagnosticBag& diags) {
    Lexer lx{source, file, diags};
    std::vector<Token> out;

    auto push = [&](Tok kind, const SourceSpan& start, std::string text = "") {
        out.push_back(Token{kind, std::move(text), 0, lx.span_from(start)});
    };

    while (!lx.done()) {
        char c = lx.peek();
        if (std::isspace(static_cast<unsigned char>(c))) {
            lx.advance();
            continue;
        }
        // comments
        if (c == '/' && lx.peek(1) == '/') {
            while (!lx.done() && lx.peek() != '\n') lx.advance();
            continue;
        }
        if (c == '/' && lx.peek(1) == '*') {
            SourceSpan start = lx.here();
            lx.advance();
            lx.advance();
            bool closed = false;
            while (!lx.done()) {
                if (lx.peek() == '*' && lx.peek(1) == '/') {
                    lx.advance();
                    lx.advance();
                    closed = true;
                    break;
                }
                lx.advance();
            }
            if (!closed) diags.error("E-LEX", "unterminated block comment", start);
            continue;
        }
        SourceSpan start = lx.here();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string word;
            while (!lx.done() && (std::isalnum(static_cast<unsigned char>(lx.peek())) ||
                                  lx.peek() == '_')) {
                word += lx.advance();
            }
            auto it = keywords().find(word);
            if (it != keywords().end()) {
                push(it->second, start, word);
            } else {
                push(Tok::Ident, start, word);
            }
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::string digits;
            while (!lx.done() && std::isdigit(static_cast<unsigned char>(lx.peek()))) {
                digits += lx.advance();
            }
            Token t{Tok::IntLit, digits, 0, lx.span_from(start)};
            try {
                t.int_value = std::stoll(digits);
            } catch (const std::exception&) {
                diags.error("E-LEX", "integer literal out of range", t.span);
            }
            out.push_back(std::move(t));
            continue;
        }
        if (c == '"') {
            lx.advance();
            std::string text;
            bool closed = false;
            while (!lx.done()) {
                char d = lx.advance();
                if (d == '"') {
                    closed = true;
                    break;
                }
                if (d == '\n') break;
                if (d == '\\' && !lx.done()) {
                    char esc = lx.advance();
                    switch (esc) {
                        case 'n': text += '\n'; break;
                        case 't': text += '\t'; break;
                        case '"': text += '"'; break;
                        case '\\': text += '\\'; break;
                        default:
                            diags.error("E-LEX", std::string("unknown escape '\\") + esc + "'",
                                        lx.here());
                            text += esc;
                    }
                    continue;
                }
                text += d;
            }
            if (!closed) {
                diags.error("E-LEX", "unterminated string literal", lx.span_from(start));
            }
            out.push_back(Token{Tok::StrLit, std::move(text), 0, lx.span_from(start)});
            continue;
        }
        // guillemets, UTF-8 encoded: « = C2 AB, » = C2 BB
        if (static_cast<unsigned char>(c) == 0xC2 &&
            (static_cast<unsigned char>(lx.peek(1)) == 0xAB ||
             static_cast<unsigned char>(lx.peek(1)) == 0xBB)) {
            bool open = static_cast<unsigned char>(lx.peek(1)) == 0xAB;
            lx.advance();
            lx.advance();
            push(open ? Tok::VariantOpen : Tok::VariantClose, start);
            continue;
        }
        lx.advance();
        switch (c) {
            case ';': push(Tok::Semi, start); break;
            case '+': push(Tok::Plus, start); break;
            case '-': push(Tok::Minus, start); break;
            case '*': push(Tok::Star, start); break;
            case '{': push(Tok::LBrace, start); break;
            case '}': push(Tok::RBrace, start); break;
            case '[': push(Tok::LBracket, start); break;
            case ']': push(Tok::RBracket, start); break;
            case '.': push(Tok::Dot, start); break;
            case '(': push(Tok::LParen, start); break;
            case ')': push(Tok::RParen, start); break;
            case ',': push(Tok::Comma, start); break;
            case '=':
                if (lx.peek() == '=') {
                    lx.advance();
                    push(Tok::EqEq, start);
                } else {
                    push(Tok::Assign, start);
                }
                break;
            case '<':
                if (lx.peek() == '=') {
                    lx.advance();
                    push(Tok::Le, start);
                } else {
                    push(Tok::VariantOpen, start);
                }
                break;
            case '>':
                if (lx.peek() == '=') {
                    lx.advance();
                    push(Tok::Ge, start);
                } else {
                    push(Tok::VariantClose, start);
                }
                break;
            default:
                diags.error("E-LEX", std::string("illegal character '") + c + "'", start);
        }
    }
    out.push_back(Token{Tok::Eof, "", 0, lx.here()});
    return out;
}

}  // namespace mool
