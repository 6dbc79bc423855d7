#!/usr/bin/env python3
"""Regenerate src/unicode_tables.inc from the `regex` module's Unicode data.

Extended_Pictographic is the union of the `regex` set and Perl's (Unicode
13) set: recent `regex` releases drop several hundred symbols that
emoji-data 12.0 through 14.0 list as pictographic.

Usage: python3 tools/gen_unicode_tables.py > src/unicode_tables.inc
"""
import subprocess
import sys

import regex

PROPERTIES = [
    ("kLetter", r"\p{L}"),
    ("kMark", r"\p{M}"),
    ("kNumber", r"\p{N}"),
    ("kDecimalDigit", r"\p{Nd}"),
    ("kConnectorPunct", r"\p{Pc}"),
    ("kWhiteSpace", r"\p{White_Space}"),
    ("kCurrencySymbol", r"\p{Sc}"),
    ("kExtendedPictographic", r"\p{Extended_Pictographic}"),
    ("kEmojiPresentation", r"\p{Emoji_Presentation}"),
    ("kEmojiModifier", r"\p{Emoji_Modifier}"),
    ("kGraphemeExtend", r"[\p{Grapheme_Cluster_Break=Extend}\p{Grapheme_Cluster_Break=SpacingMark}]"),
    ("kContinuousScript", r"[\p{Script=Han}\p{Script=Hiragana}\p{Script=Katakana}\p{Script=Thai}]"),
]


def perl_set(prop):
    script = ("for my $c (0..0x10FFFF) { next if $c >= 0xD800 && $c <= 0xDFFF; "
              "print \"$c\\n\" if chr($c) =~ /\\p{%s}/ }" % prop)
    return {int(x) for x in subprocess.run(["perl", "-e", script], capture_output=True, text=True,
                                          check=True).stdout.split()}


EXTRA = {r"\p{Extended_Pictographic}": lambda: perl_set("Extended_Pictographic")}


def ranges(pattern):
    rx = regex.compile(pattern)
    extra = EXTRA[pattern]() if pattern in EXTRA else set()
    out, start, prev = [], None, None
    for cp in range(0x110000):
        if 0xD800 <= cp <= 0xDFFF:
            continue
        if cp in extra or rx.match(chr(cp)):
            if start is None:
                start = cp
            elif cp != prev + 1:
                out.append((start, prev))
                start = cp
            prev = cp
    if start is not None:
        out.append((start, prev))
    return out


def main():
    w = sys.stdout.write
    w("// Generated by tools/gen_unicode_tables.py. Do not edit.\n")
    w(f"// Unicode data: regex {regex.__version__}; Extended_Pictographic also from Perl\n\n")
    for name, pattern in PROPERTIES:
        rs = ranges(pattern)
        w(f"// {pattern}\ninline constexpr CodepointRange {name}[] = {{\n")
        for i in range(0, len(rs), 4):
            w("    " + " ".join(f"{{0x{a:X}, 0x{b:X}}}," for a, b in rs[i:i + 4]) + "\n")
        w("};\n\n")
    pairs = []
    for cp in range(0x110000):
        if 0xD800 <= cp <= 0xDFFF:
            continue
        lo = chr(cp).lower()
        if len(lo) == 1 and ord(lo) != cp:
            pairs.append((cp, ord(lo)))
    w("// simple lowercase mapping\ninline constexpr CaseMapping kLowercase[] = {\n")
    for i in range(0, len(pairs), 4):
        w("    " + " ".join(f"{{0x{a:X}, 0x{b:X}}}," for a, b in pairs[i:i + 4]) + "\n")
    w("};\n")


if __name__ == "__main__":
    main()
