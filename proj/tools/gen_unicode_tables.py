#!/usr/bin/env python3
"""Regenerates include/deid/detail/unicode_tables.hpp.

Requires the third-party `regex` module for Unicode property classes.
Usage: python3 tools/gen_unicode_tables.py > include/deid/detail/unicode_tables.hpp
"""
import sys

import regex

MAX_CP = 0x110000


def is_surrogate(cp):
    return 0xD800 <= cp <= 0xDFFF


def ranges(pattern):
    rx = regex.compile(pattern)
    out, start = [], None
    for cp in range(MAX_CP):
        ok = not is_surrogate(cp) and rx.match(chr(cp)) is not None
        if ok and start is None:
            start = cp
        if not ok and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, MAX_CP - 1))
    return out


def lower_map():
    out = []
    for cp in range(MAX_CP):
        if is_surrogate(cp):
            continue
        c = chr(cp)
        low = c.lower()
        if low != c and ord(low[0]) != cp:
            out.append((cp, ord(low[0])))
    return out


def emit_array(name, ctype, pairs):
    s = f"inline constexpr {ctype} {name}[] = {{\n"
    line = "   "
    for a, b in pairs:
        item = f" {{0x{a:X}, 0x{b:X}}},"
        if len(line) + len(item) > 96:
            s += line + "\n"
            line = "   "
        line += item
    return s + line + "\n};\n\n"


def main():
    w = sys.stdout.write
    w("// Generated by tools/gen_unicode_tables.py. Do not edit.\n")
    w("#ifndef DEID_DETAIL_UNICODE_TABLES_HPP\n#define DEID_DETAIL_UNICODE_TABLES_HPP\n\n")
    w("#include <cstdint>\n\nnamespace deid::detail {\n\n")
    w("struct CodepointRange {\n    char32_t first;\n    char32_t last;\n};\n\n")
    w("struct CaseMapping {\n    char32_t from;\n    char32_t to;\n};\n\n")
    w("// Alphabetic | Nd | '_'\n")
    w(emit_array("kWordRanges", "CodepointRange", ranges(r"[\p{Alphabetic}\p{Nd}_]")))
    w("// White_Space\n")
    w(emit_array("kWhitespaceRanges", "CodepointRange", ranges(r"\p{White_Space}")))
    w("// Lu | Lt\n")
    w(emit_array("kUppercaseRanges", "CodepointRange", ranges(r"\p{Lu}|\p{Lt}")))
    w("// Lo (letters of caseless scripts)\n")
    w(emit_array("kCaselessLetterRanges", "CodepointRange", ranges(r"\p{Lo}")))
    w("// Simple (single code point) lowercase mappings.\n")
    w(emit_array("kLowercaseMap", "CaseMapping", lower_map()))
    w("}  // namespace deid::detail\n\n#endif  // DEID_DETAIL_UNICODE_TABLES_HPP\n")


if __name__ == "__main__":
    main()
