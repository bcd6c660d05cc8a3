"""Regenerates metric_fixtures.json from reference implementations.

BLEU comes from pycocoevalcap (the scorer nlg-eval wraps); ROUGE from
Google's rouge-score package; Wilcoxon p-values from scipy.

pycocoevalcap adds a 1e-15 epsilon to every n-gram precision, so a corpus
with no matches at some order scores about 0.005 instead of 0. Such groups
carry "zero_order": true. Both run on text pre-tokenized exactly as the Rust code
does (lowercase, whitespace split, punctuation detached).

    python3 gen_metric_fixtures.py > metric_fixtures.json
"""

import json
import random
import re

from pycocoevalcap.bleu.bleu import Bleu
from rouge_score import rouge_scorer
from scipy.stats import wilcoxon


def tokens(text):
    out = []
    for chunk in text.lower().split():
        out.extend(t for t in re.findall(r"[\w]+|[^\w]", chunk) if t)
    return out


class Whitespace:
    def tokenize(self, text):
        return text.split()


PAIRS = [
    ("the cat sat on the mat", "the cat is on the mat"),
    ("returns the balance of the owner", "returns the token balance of an owner"),
    ("transfers tokens to the given address", "transfer tokens to a specified address"),
    ("Throws if called by any account other than the owner.", "throws if called by any account other than the owner"),
    ("allows the owner to pause the contract", "called by the owner to pause, triggers stopped state"),
    ("gets the balance of the specified address", "gets the balance of the specified address"),
    ("burns a specific amount of tokens", "burns a specific amount of tokens from the target address"),
    ("", "returns the total supply"),
    ("", ""),
    ("adds two numbers and reverts on overflow", "adds two unsigned integers, reverts on overflow."),
    ("a b a b a", "b a b a b"),
    ("set the price", "sets the price of the token in wei for the sale"),
    ("withdraw all ether from the contract", "withdraws the collected ether to the owner wallet"),
    ("check if the sale is over", "checks whether the crowdsale period has ended"),
    ("mint new tokens", "function to mint tokens"),
    ("approve the passed address to spend tokens on behalf of msg.sender",
     "approve the passed address to spend the specified amount of tokens on behalf of msg.sender"),
    ("returns true if the goal was reached", "checks whether funding goal was reached"),
    ("vote for a proposal", "give your vote to proposal proposals[proposal].name"),
    ("the the the the", "the cat"),
    ("owner's balance_of value", "the owner's balance_of value!"),
    ("transfer ownership of the contract to a new owner",
     "allows the current owner to transfer control of the contract to a newOwner"),
    ("delegate your vote to the voter to", "delegate your vote to the voter to"),
    ("refund investors if the crowdsale fails", "investors can claim refunds here if crowdsale is unsuccessful"),
    ("computes the reward earned", "calculates rewards earned by an account"),
]


def main():
    scorer = rouge_scorer.RougeScorer(["rouge1", "rouge2", "rougeL"], tokenizer=Whitespace())
    pairs = []
    for cand, ref in PAIRS:
        c, r = " ".join(tokens(cand)), " ".join(tokens(ref))
        s = scorer.score(r, c)
        pairs.append({
            "candidate": cand,
            "reference": ref,
            "rouge1": 100 * s["rouge1"].fmeasure,
            "rouge2": 100 * s["rouge2"].fmeasure,
            "rougeL": 100 * s["rougeL"].fmeasure,
        })

    def bleu(idx):
        hyps = {j: [" ".join(tokens(PAIRS[i][0]))] for j, i in enumerate(idx)}
        refs = {j: [" ".join(tokens(PAIRS[i][1]))] for j, i in enumerate(idx)}
        score, _ = Bleu(4).compute_score(refs, hyps, verbose=0)
        return 100 * score[3]

    def zero_order(idx):
        for n in range(1, 5):
            matches = 0
            for i in idx:
                c, r = tokens(PAIRS[i][0]), tokens(PAIRS[i][1])
                rc = {}
                for g in zip(*[r[k:] for k in range(n)]):
                    rc[g] = rc.get(g, 0) + 1
                cc = {}
                for g in zip(*[c[k:] for k in range(n)]):
                    cc[g] = cc.get(g, 0) + 1
                matches += sum(min(v, rc.get(g, 0)) for g, v in cc.items())
            if matches == 0:
                return True
        return False

    groups = [list(range(len(PAIRS)))] + [list(range(i, min(i + 6, len(PAIRS)))) for i in range(0, len(PAIRS), 6)]
    groups += [[0], [1], [3], [5], [15], [1, 2, 3], [19]]
    corpus = [{"indices": g, "bleu4": bleu(g), "zero_order": zero_order(g)} for g in groups]

    rng = random.Random(7)
    tests = []
    # Exact null distribution: no ties, small m.
    for m in (6, 9, 14, 20, 25):
        a = [rng.uniform(0, 100) for _ in range(m)]
        b = [x + rng.choice([-1, 1]) * rng.uniform(0.1, 30) * (1 + i) / m for i, x in enumerate(a)]
        p = wilcoxon(a, b, zero_method="wilcox", method="exact").pvalue
        tests.append({"a": a, "b": b, "p_value": float(p), "method": "exact"})
    # Normal approximation: ties and zero differences, larger m.
    for m in (45, 60, 120):
        a = [float(rng.randint(0, 10)) for _ in range(m)]
        b = [float(rng.randint(0, 9)) for _ in range(m)]
        p = wilcoxon(a, b, zero_method="wilcox", correction=True, method="approx").pvalue
        tests.append({"a": a, "b": b, "p_value": float(p), "method": "normal"})
    print(json.dumps({"pairs": pairs, "corpus_bleu": corpus, "wilcoxon": tests}, indent=1))


if __name__ == "__main__":
    main()
