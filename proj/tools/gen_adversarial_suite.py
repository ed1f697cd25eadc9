#!/usr/bin/env python3
"""Generate the bundled mock-backend fixtures.

adversarial_{dataset,script}.jsonl: 20 arithmetic word problems. In twelve of
them one step comes out with high uncertainty (m around 1-2) and a wrong
intermediate value; left alone, the downstream steps carry the error into a
wrong final answer. Every scaling route (candidates, critique, thinking)
recovers the correct step. The other eight are clean; two of those contain a
mildly uncertain but correct step.

passk_{dataset,script}.jsonl: two items, four samples each; item p1 ends
correctly in samples 0 and 1 only.

Output is deterministic. Usage: gen_adversarial_suite.py [output_dir]
"""

import json
import random
import sys
from pathlib import Path

rng = random.Random(2025)

ALTERNATIVES = [
    ("Let me restate what the question is asking before going on.", 0.30),
    ("I should list the given quantities once more.", 0.25),
    ("Maybe there is a shortcut, but computing directly is safer.", 0.20),
]
CANDIDATES_PER_SET = 4


def logprobs_for(m, n_tokens):
    """n_tokens non-positive logprobs whose mean is -m (to rounding)."""
    weights = [1.0 + 0.6 * rng.uniform(-1.0, 1.0) for _ in range(n_tokens)]
    scale = m * n_tokens / sum(weights)
    return [round(-w * scale, 6) for w in weights]


def tokens_in(text):
    return max(3, int(len(text.split()) * 1.3) + 1)


def low_m():
    return rng.uniform(0.03, 0.09)


def problem(kind, r):
    """Returns (question, answer, correct steps, wrong_step_fn)."""
    if kind == "change":
        price, qty = r.randint(2, 9), r.randint(3, 12)
        bill = (price * qty // 10 + 2) * 10
        cost, change = price * qty, bill - price * qty
        q = (f"A pencil costs ${price}. Tom buys {qty} pencils and pays with a ${bill} bill. "
             "How much change does he receive?")
        good = [
            f"Tom buys {qty} pencils at ${price} each and pays ${bill}; we need his change.",
            f"The pencils cost {price} x {qty} = {cost} dollars.",
            f"The change is {bill} - {cost} = {change} dollars.",
            f"So the answer is {change}.",
        ]

        def wrong(k):
            bad_cost = price * (qty + 1)
            return {
                1: f"The pencils cost {price} x {qty + 1} = {bad_cost} dollars.",
                2: f"The change is {bill} - {bad_cost} = {bill - bad_cost} dollars.",
                3: f"So the answer is {bill - bad_cost}.",
            }, 1
        return q, str(change), good, wrong
    if kind == "rectangle":
        w, l = r.randint(3, 9), r.randint(10, 20)
        p = 2 * (w + l)
        q = f"A rectangle has perimeter {p} cm and length {l} cm. What is its area in square cm?"
        good = [
            f"The perimeter is {p} and the length is {l}; we need the width first.",
            f"Half the perimeter is {p // 2}, so the width is {p // 2} - {l} = {w}.",
            f"The area is {l} x {w} = {l * w}.",
            f"So the answer is {l * w}.",
        ]

        def wrong(k):
            bw = p - l
            return {
                1: f"Subtracting the length from the perimeter, the width is {p} - {l} = {bw}.",
                2: f"The area is {l} x {bw} = {l * bw}.",
                3: f"So the answer is {l * bw}.",
            }, 1
        return q, str(l * w), good, wrong
    if kind == "speed":
        s1, s2 = r.choice([(40, 60), (30, 60), (50, 75), (60, 90)])
        h1, h2 = 3, 2
        d1, d2 = s1 * h1, s2 * h2
        total_d, total_h = d1 + d2, h1 + h2
        avg = total_d / total_h
        avg_s = f"{avg:g}"
        q = (f"A car drives {d1} km in {h1} hours and then {d2} km in {h2} hours. "
             "What is its average speed in km per hour?")
        good = [
            f"The total distance is {d1} + {d2} = {total_d} km.",
            f"The total time is {h1} + {h2} = {total_h} hours.",
            f"The average speed is {total_d} / {total_h} = {avg_s} km per hour.",
            f"So the answer is {avg_s}.",
        ]

        def wrong(k):
            bad = (s1 + s2) / 2
            return {
                2: f"Averaging the two speeds {s1} and {s2} gives {bad:g} km per hour.",
                3: f"So the answer is {bad:g}.",
            }, 2
        return q, avg_s, good, wrong
    if kind == "discount":
        price = r.choice([80, 120, 160, 200, 240])
        off, tax = 25, 10
        after = price * (100 - off) // 100
        final = after * (100 + tax) / 100
        final_s = f"{final:g}"
        q = (f"A jacket costs ${price}. It is discounted by {off}% and then a {tax}% sales tax is added. "
             "What is the final price in dollars?")
        good = [
            f"The original price is ${price}, with a {off}% discount followed by {tax}% tax.",
            f"After the discount the price is {price} x 0.75 = {after} dollars.",
            f"Adding tax gives {after} x 1.1 = {final_s} dollars.",
            f"So the answer is {final_s}.",
        ]

        def wrong(k):
            bad = price * (100 - off + tax) / 100
            return {
                1: f"The net change is -{off}% + {tax}% = -{off - tax}%, so the price is {price} x 0.85 = {bad:g} dollars.",
                2: f"That already includes the tax, giving {bad:g} dollars.",
                3: f"So the answer is {bad:g}.",
            }, 1
        return q, final_s, good, wrong
    if kind == "odds":
        n = r.randint(6, 15)
        q = f"What is the sum of the first {n} positive odd numbers?"
        good = [
            f"The first {n} odd numbers are 1, 3, 5, ..., {2 * n - 1}.",
            f"The sum of the first n odd numbers is n squared.",
            f"With n = {n} the sum is {n} x {n} = {n * n}.",
            f"So the answer is {n * n}.",
        ]

        def wrong(k):
            bad = n * (n + 1)
            return {
                1: f"The sum of the first n odd numbers is n(n + 1).",
                2: f"With n = {n} the sum is {n} x {n + 1} = {bad}.",
                3: f"So the answer is {bad}.",
            }, 1
        return q, str(n * n), good, wrong
    raise ValueError(kind)


KINDS = ["change", "rectangle", "speed", "discount", "odds"]


class ScriptBuilder:
    def __init__(self):
        self.records = []
        self.scores = {}
        self.critiques = {}

    def score(self, text, value):
        if self.scores.setdefault(text, value) != value:
            raise SystemExit(f"conflicting scores for {text!r}")

    def critic(self, text, feedback, tokens):
        self.critiques.setdefault(text, (feedback, tokens))

    def step(self, key, text, m, after=None, sample=None):
        rec = {"kind": "step", "context_key": key, "text": text, "logprobs": logprobs_for(m, tokens_in(text))}
        if after is not None:
            rec["after"] = after
        if sample is not None:
            rec["sample"] = sample
        self.records.append(rec)

    def scaled_routes(self, key, best, best_score, slot, after=None, extra=None):
        """Candidates, refinement and thinking records that all recover `best`."""
        others = list(ALTERNATIVES)
        if extra is not None:
            others[0] = extra
        others = others[: CANDIDATES_PER_SET - 1]
        texts = [t for t, _ in others]
        texts.insert(slot % CANDIDATES_PER_SET, best)
        self.score(best, best_score)
        for t, s in others:
            self.score(t, s)
        cands = {"kind": "candidates", "context_key": key, "texts": texts,
                 "logprobs": [logprobs_for(low_m(), tokens_in(t)) for t in texts]}
        refine = {"kind": "refine", "context_key": key, "text": best,
                  "logprobs": logprobs_for(low_m(), tokens_in(best))}
        think = {"kind": "thinking", "context_key": key, "text": best,
                 "logprobs": logprobs_for(low_m(), tokens_in(best)),
                 "thinking_tokens": rng.randint(200, 600)}
        for rec in (cands, refine, think):
            if after is not None:
                rec["after"] = after
            self.records.append(rec)

    def write(self, path):
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        for text in sorted(self.scores):
            lines.append(json.dumps({"kind": "score", "step_text": text, "score": self.scores[text],
                                     "tokens_used": 40 + len(text) % 30}, sort_keys=True))
        for text in sorted(self.critiques):
            fb, tok = self.critiques[text]
            lines.append(json.dumps({"kind": "critic", "step_text": text, "feedback": fb, "tokens_used": tok},
                                    sort_keys=True))
        path.write_text("\n".join(lines) + "\n")


def adversarial_suite(out_dir):
    script = ScriptBuilder()
    items = []
    for i in range(20):
        item_id = f"adv{i:02d}" if i < 12 else f"clean{i:02d}"
        q, gold, good, wrong_fn = problem(KINDS[i % len(KINDS)], rng)
        items.append({"id": item_id, "question": q, "answer": gold})
        for text in good:
            script.critic(text, "The step is consistent with the question.", 35)

        if i < 12:
            wrong, k = wrong_fn(None)
            if i == 11:
                # Error on the very first step, where the momentum gate is exempt.
                wrong = {0: f"I will treat this as a trick question and guess.",
                         **{t: w for t, w in wrong.items() if t > k}}
                k = 0
            bad = wrong[k]
            script.critic(bad, "This step contradicts the given quantities; recompute it.", 120)
            for t, text in enumerate(good):
                key = f"{item_id}/{t + 1}"
                if t < k:
                    script.step(key, text, low_m())
                    script.scaled_routes(key, text, 0.9, t + i)
                elif t == k:
                    script.step(key, bad, rng.uniform(1.0, 2.0))
                    script.scaled_routes(key, text, 0.9, t + i, extra=(bad, 0.15))
                else:
                    # downstream of the corrected step
                    script.step(key, text, low_m(), after=good[k])
                    script.scaled_routes(key, text, 0.9, t + i, after=good[k])
                    # downstream of the uncorrected step; the error is locked in
                    w = wrong.get(t, text)
                    script.critic(w, "The step is consistent with the previous steps.", 35)
                    script.step(key, w, low_m(), after=bad)
                    script.scaled_routes(key, w, 0.6 if w != text else 0.9, t + i, after=bad)
        else:
            mild = 2 if i in (12, 13) else None
            for t, text in enumerate(good):
                key = f"{item_id}/{t + 1}"
                m = rng.uniform(0.25, 0.4) if t == mild else low_m()
                script.step(key, text, m)
                script.scaled_routes(key, text, 0.9, t + i)

    (out_dir / "adversarial_dataset.jsonl").write_text(
        "\n".join(json.dumps(it, sort_keys=True) for it in items) + "\n")
    script.write(out_dir / "adversarial_script.jsonl")


def passk_fixture(out_dir):
    script = ScriptBuilder()
    items = [
        {"id": "p1", "question": "What is 12 + 30?", "answer": "42"},
        {"id": "p2", "question": "What is 9 x 7?", "answer": "63"},
    ]
    script.step("p1/1", "Add the two numbers.", 0.05)
    for s in range(4):
        final = "So the answer is 42." if s < 2 else "So the answer is 41."
        script.step("p1/2", final, 0.06, sample=s)
    script.step("p2/1", "Multiply nine by seven.", 0.04)
    script.step("p2/2", "So the answer is 63.", 0.05)
    (out_dir / "passk_dataset.jsonl").write_text("\n".join(json.dumps(it, sort_keys=True) for it in items) + "\n")
    script.write(out_dir / "passk_script.jsonl")


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    adversarial_suite(out_dir)
    passk_fixture(out_dir)


if __name__ == "__main__":
    main()
