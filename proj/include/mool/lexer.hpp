#pragma once

#include <string>
#include <vector>

#include "mool/diag.hpp"

namespace mool {

enum class Tok {
    // keywords
    KwClass, KwUsage, KwWhere, KwLin, KwUn, KwEnd, KwSync, KwSpawn, KwNew,
    KwIf, KwElse, KwWhile, KwTrue, KwFalse, KwUnit, KwPrint, KwMu, KwThis,
    KwBoolean, KwInt, KwString,
    // literals / names
    Ident, IntLit, StrLit,
    // punctuation and operators
    Semi, Plus, Minus, Star, VariantOpen, VariantClose, LBrace, RBrace,
    LBracket, RBracket, Dot, Assign, LParen, RParen, Comma, Le, Ge, EqEq,
    Eof,
};

const char* tok_name(Tok t);

struct Token {
    Tok kind = Tok::Eof;
    std::string text;
    long long int_value = 0;
    SourceSpan span;
};

// Produces a token stream ending in Eof. Lex errors are reported with spans;
// the offending character is skipped and lexing continues.
std::vector<Token> tokenize(const std::string& source, const std::string& file,
                            DiagnosticBag& diags);

}  // namespace mool
