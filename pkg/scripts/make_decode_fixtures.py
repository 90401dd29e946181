"""Regenerate the bundled decode fixtures under tests/fixtures/decode/.

The fixtures are committed; rerun this only when the fixture format changes.
Every sample is a bounded prefix tree (off-tree tokens carry -inf), so the
whole reachable space is covered and exhaustive enumeration stays cheap.
"""
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "decode"

# ids 0..1 special, 2..11 Bengali digits 0-9, 12 dash, 13 space
TOKENS = ["<bos>", "<eos>"] + list("০১২৩৪৫৬৭৮৯") + ["-", " "]
EOS = 1
D = {ch: i + 2 for i, ch in enumerate("০১২৩৪৫৬৭৮৯")}
DASH, SPACE = 12, 13


def norm_row(weights):
    row = np.full(len(TOKENS), -np.inf)
    total = sum(weights.values())
    for token, w in weights.items():
        row[token] = np.log(w / total)
    return row


def forced_sample(name, path, rows):
    """Probability 0.9 on the path token, 0.1 on EOS (so scores are nontrivial)."""
    prefix = (0,)
    for token in path:
        weights = {token: 0.9, EOS: 0.1} if token != EOS else {EOS: 1.0}
        rows.append((name, prefix, norm_row(weights)))
        prefix = prefix + (token,)


def tree_sample(name, live, depth, favored, rows):
    """Bounded branching tree: `live` tokens compete until `depth`, then EOS."""
    def walk(prefix):
        generated = len(prefix) - 1
        if generated >= depth:
            rows.append((name, prefix, norm_row({EOS: 1.0})))
            return
        weights = {t: (3.0 if t == favored[generated] else 1.0) for t in live}
        weights[EOS] = 0.5
        rows.append((name, prefix, norm_row(weights)))
        for t in live:
            walk(prefix + (t,))

    walk((0,))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "vocab.tsv").write_text(
        "".join(f"{i}\t{tok}\n" for i, tok in enumerate(TOKENS)), encoding="utf-8"
    )

    rows = []
    # golden sample 1: full plate serial with repeated digits, forced path
    path1 = [D["১"], D["১"], DASH, D["১"], D["১"], D["১"], D["১"], EOS]
    forced_sample("plate-serial", path1, rows)
    # golden sample 2: forced mixed digits
    path2 = [D["২"], D["৫"], DASH, D["৯"], D["০"], D["৩"], D["৮"], EOS]
    forced_sample("plate-mixed", path2, rows)
    # golden sample 3: branching tree over two digits, depth 3
    tree_sample("plate-tree", [D["৪"], D["৭"]], 3, [D["৪"], D["৭"], D["৪"]], rows)

    lines = []
    current = None
    for name, prefix, row in rows:
        if name != current:
            lines.append(f"sample\t{name}")
            current = name
        lines.append(",".join(map(str, prefix)) + "\t" + " ".join(repr(float(v)) for v in row))
    (OUT / "golden.logits").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # repetition-control fixture: the optimal sequence repeats the same digit
    # three times, so its bigram occurs twice and n-gram blocking breaks it
    rows = []
    ONE, TWO = D["১"], D["২"]

    def repeat_walk(prefix):
        generated = len(prefix) - 1
        if generated >= 4:
            rows.append(("repeat-digits", prefix, norm_row({EOS: 1.0})))
            return
        weights = {ONE: 0.70, TWO: 0.05, EOS: 0.25}
        if generated < 3:
            weights = {ONE: 0.80, TWO: 0.05, EOS: 0.15}
        rows.append(("repeat-digits", prefix, norm_row(weights)))
        for t in (ONE, TWO):
            repeat_walk(prefix + (t,))

    repeat_walk((0,))
    lines = []
    current = None
    for name, prefix, row in rows:
        if name != current:
            lines.append(f"sample\t{name}")
            current = name
        lines.append(",".join(map(str, prefix)) + "\t" + " ".join(repr(float(v)) for v in row))
    (OUT / "repeat.logits").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
