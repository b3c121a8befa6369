#!/usr/bin/env python3
"""Writes cc.jsonl: a synthetic stand-in for the Compositional Celebrities source.

117 invented countries with deterministic facts; 6,547 celebrities, each asked
exactly one of the 14 question types, every country present in every type.
"""
import json
import sys

TYPES = ["callingcode", "tld", "rounded_lng", "rounded_lat", "currency_short", "currency",
         "ccn3", "capital", "currency_symbol", "rus_common_name", "jpn_common_name",
         "urd_common_name", "spa_common_name", "est_common_name"]
FIRST = ["Ada", "Ben", "Cleo", "Dev", "Eli", "Fay", "Gus", "Hana", "Ivo", "Jade"]
LAST_ROOTS = ["Abbott", "Barros", "Castell", "Dunmore", "Eklund", "Fenwick", "Galloway",
              "Hartley", "Iversen", "Jansky"]
SYMBOLS = ["$", "€", "£", "¥", "₹", "₩", "₺", "₽", "R", "kr", "Fr", "zł"]


def country_facts(i):
    name = f"Country{i:03d}"
    letters = "abcdefghijklmnopqrstuvwxyz"
    return {
        "callingcode": f"+{1 + i % 9}{(i * 7) % 100}",
        "tld": "." + letters[i % 26] + letters[(i * 5 + 3) % 26],
        "rounded_lng": str((i * 37) % 360 - 180),
        "rounded_lat": str((i * 23) % 130 - 60),
        "currency_short": letters[i % 26].upper() + letters[(i * 3) % 26].upper() + "D",
        "currency": f"Unit{i:03d}",
        "ccn3": f"{(i * 11) % 900 + 4:03d}",
        "capital": f"Capital{i:03d}",
        "currency_symbol": SYMBOLS[i % len(SYMBOLS)],
        "rus_common_name": f"Страна{i:03d}",
        "jpn_common_name": f"国{i:03d}",
        "urd_common_name": f"ملک{i:03d}",
        "spa_common_name": f"País{i:03d}",
        "est_common_name": f"Riik{i:03d}",
    }, name


def main(path):
    facts = [country_facts(i) for i in range(117)]
    names = (f"{f} {l}{k}" for k in range(100) for l in LAST_ROOTS for f in FIRST)
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        for t, qtype in enumerate(TYPES):
            count = 467 if t < 5 else 468
            for k in range(count):
                f, country = facts[k % 117]
                row = {"name": next(names), "country": country, "answers": {qtype: f[qtype]}}
                out.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "cc.jsonl")
