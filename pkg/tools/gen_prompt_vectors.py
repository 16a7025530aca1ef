"""Regenerate shared/prompt_grammar_vectors.json from the library's grammar.

The file pins the prompt grammar for every client that re-implements it
(the web studio asserts its own builder/splitter against these vectors, and
tests/test_prompt_vectors.py asserts the file matches this module's output).

Run from the repo root:

    python3 tools/gen_prompt_vectors.py
"""

import json
from pathlib import Path

from fashiontex import VOCABULARY
from fashiontex.mapper import PromptFormatError, split_text
from fashiontex.training import build_prompt

EXTRA_ATTRIBUTE_PAIRS = [
    ("ruffled wrap top", "high-waist culottes"),
    ("  padded  vest  ", "cargo pants"),
    ("top", "skirt"),
]

SPLIT_ONLY_PROMPTS = [
    "sleeveless top,short skirt",
    "sleeveless top ,  short skirt",
    "classic top, and pleated skirt",
    "shirt,\tand pants",
    "top, anders",
    "  boxy tee  ,  wide jeans  ",
]

INVALID_PROMPTS = [
    "",
    ",",
    "no comma here",
    "a, b, c",
    ", skirt",
    "top, ",
    "top, and",
    "top, and ",
    "   ,   ",
]

INVALID_ATTRIBUTE_PAIRS = [
    {"upper": "", "lower": "skirt"},
    {"upper": "top", "lower": "   "},
    {"upper": "a,b", "lower": "skirt"},
    {"upper": "top", "lower": "c,d"},
]


def vectors() -> dict:
    build = []
    for upper, lower in list(VOCABULARY) + EXTRA_ATTRIBUTE_PAIRS:
        prompt = build_prompt(upper, lower)
        up, low = split_text(prompt)
        build.append({"upper": upper, "lower": lower, "prompt": prompt,
                      "split_upper": up, "split_lower": low})

    split = []
    for prompt in SPLIT_ONLY_PROMPTS:
        up, low = split_text(prompt)
        split.append({"prompt": prompt, "upper": up, "lower": low})

    for prompt in INVALID_PROMPTS:
        try:
            split_text(prompt)
        except PromptFormatError:
            pass
        else:
            raise AssertionError(f"{prompt!r} unexpectedly parsed")

    for pair in INVALID_ATTRIBUTE_PAIRS:
        try:
            build_prompt(pair["upper"], pair["lower"])
        except ValueError:
            pass
        else:
            raise AssertionError(f"{pair!r} unexpectedly built")

    return {
        "build": build,
        "split": split,
        "invalid_prompts": INVALID_PROMPTS,
        "invalid_attribute_pairs": INVALID_ATTRIBUTE_PAIRS,
    }


def main():
    out = Path(__file__).resolve().parent.parent / "shared" / "prompt_grammar_vectors.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(vectors(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
