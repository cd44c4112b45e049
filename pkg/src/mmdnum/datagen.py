"""Deterministic generation of math question/answer corpora.

Three task families: two-operand arithmetic ("Calculate a + b."),
linear equations built backwards from an integer root ("Solve ... for
t."), and divisibility questions with True/False answers. Ground truth
is computed in exact decimal/integer arithmetic (never floats), and
every emitted number round-trips through float64 shortest-repr so the
canonical string form survives extraction and re-rendering.

Randomness comes from counter-based Philox streams keyed by the spec
seed, so the same GenSpec is byte-identical on every platform.
"""
from __future__ import annotations

import decimal
import json
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import seeding
from .encoding import extract_numbers, format_value

__all__ = [
    "AnswerKind",
    "Example",
    "GenSpec",
    "DataError",
    "gen_arithmetic",
    "gen_linear_solve",
    "gen_divisibility",
    "generate_corpus",
    "write_jsonl",
    "read_jsonl",
    "make_example",
]

ARITH_OPS = ("+", "-", "*", "/")


class DataError(ValueError):
    """A data file is missing, malformed, or inconsistent."""


class AnswerKind(str, Enum):
    NUMBER = "number"
    TEXT = "text"
    MIXED = "mixed"


@dataclass
class Example:
    """One question/answer record with pre-extracted number values."""

    question: str
    answer: str
    answer_kind: AnswerKind
    answer_values: list[float]


def make_example(question: str, answer: str) -> Example:
    """Build an Example, classifying the answer by its numeric content."""
    template, values = extract_numbers(answer)
    if values and all(t == "<num>" for t in template) and len(values) == 1:
        kind = AnswerKind.NUMBER
    elif not values:
        kind = AnswerKind.TEXT
    else:
        kind = AnswerKind.MIXED
    return Example(question=question, answer=answer, answer_kind=kind, answer_values=values)


@dataclass
class GenSpec:
    """Corpus recipe: seed, size, task mix, operand magnitudes."""

    seed: int = 0
    n_examples: int = 1000
    weight_arith: float = 1.0
    weight_solve: float = 0.0
    weight_div: float = 0.0
    mag_lo: float = 1e-3
    mag_hi: float = 1e8
    max_decimals: int = 3
    ops: tuple[str, ...] = ARITH_OPS

    def __post_init__(self):
        if self.mag_lo <= 0 or self.mag_hi < self.mag_lo:
            raise ValueError(f"need 0 < mag_lo <= mag_hi, got [{self.mag_lo}, {self.mag_hi}]")
        weights = (self.weight_arith, self.weight_solve, self.weight_div)
        if any(w < 0 for w in weights) or sum(weights) == 0:
            raise ValueError("task weights must be non-negative and not all zero")
        if self.n_examples < 0:
            raise ValueError("n_examples must be non-negative")
        if self.max_decimals < 0:
            raise ValueError("max_decimals must be non-negative")
        self.ops = tuple(self.ops)
        for op in self.ops:
            if op not in ARITH_OPS:
                raise ValueError(f"unknown arithmetic op {op!r}")
        if not self.ops:
            raise ValueError("ops must not be empty")


def _canon(d: Decimal) -> str:
    """Positional string for a Decimal, trailing zeros trimmed."""
    s = format(d, "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    if s in ("-0", ""):
        s = "0"
    return s


def _roundtrips(d: Decimal) -> bool:
    """True when the canonical string survives float64 shortest-repr."""
    s = _canon(d)
    try:
        return format_value(float(s)) == s and Decimal(s) == d
    except (ValueError, OverflowError):
        return False


def _draw_decimal(rng: np.random.Generator, lo: float, hi: float, max_dp: int,
                  signed: bool = True) -> Decimal:
    """Log-uniform magnitude in [lo, hi], quantized to <= max_dp decimals."""
    while True:
        mag = 10.0 ** rng.uniform(np.log10(lo), np.log10(hi))
        d = Decimal(f"{mag:.{max_dp}f}")
        if d == 0 or not (lo <= float(d) <= hi):
            continue
        if not _roundtrips(d):
            continue
        if signed and rng.random() < 0.5:
            d = -d
        return d


def _draw_int(rng: np.random.Generator, lo: float, hi: float) -> int:
    """Log-uniform integer magnitude within [max(lo, 1), hi]."""
    lo = max(lo, 1.0)
    while True:
        mag = 10.0 ** rng.uniform(np.log10(lo), np.log10(hi))
        n = int(round(mag))
        if lo <= n <= hi and n >= 1:
            return n


def _arith_example(rng: np.random.Generator, spec: GenSpec) -> Example:
    op = spec.ops[int(rng.integers(len(spec.ops)))]
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        while True:
            if op == "/":
                # quotient-first so the division is exact at max_decimals
                q = _draw_decimal(rng, spec.mag_lo, spec.mag_hi, spec.max_decimals)
                b = Decimal(_draw_int(rng, spec.mag_lo, spec.mag_hi))
                a = q * b
                if not (spec.mag_lo <= abs(float(a)) <= spec.mag_hi):
                    continue
                ans = q
            else:
                a = _draw_decimal(rng, spec.mag_lo, spec.mag_hi, spec.max_decimals)
                b = _draw_decimal(rng, spec.mag_lo, spec.mag_hi, spec.max_decimals)
                if op == "*":
                    # keep products within float64 shortest-repr reach
                    b = Decimal(_draw_int(rng, spec.mag_lo, min(spec.mag_hi, 1e4)))
                    if rng.random() < 0.5:
                        b = -b
                    ans = a * b
                elif op == "+":
                    ans = a + b
                else:
                    ans = a - b
            if not (_roundtrips(a) and _roundtrips(b) and _roundtrips(ans)):
                continue
            sep = "" if op == "*" else " "
            question = f"Calculate {_canon(a)}{sep}{op}{sep}{_canon(b)}."
            return make_example(question, _canon(ans))


def _solve_example(rng: np.random.Generator, spec: GenSpec) -> Example:
    while True:
        root = int(rng.integers(-999, 1000))
        c1 = int(rng.integers(-400, 401)) or 1
        n_terms = int(rng.integers(2, 4))
        rhs_coeffs = []
        for _ in range(n_terms):
            c = int(rng.integers(-400, 401)) or 1
            rhs_coeffs.append(c)
        total = sum(rhs_coeffs)
        if c1 == total:
            continue  # degenerate: no unique root
        c0 = (total - c1) * root
        lhs = f"{c1}*t" + (f" + {c0}" if c0 >= 0 else f" - {-c0}")
        rhs = f"{rhs_coeffs[0]}*t"
        for c in rhs_coeffs[1:]:
            rhs += f" + {c}*t" if c >= 0 else f" - {-c}*t"
        question = f"Solve {lhs} = {rhs} for t."
        return make_example(question, str(root))


def _div_example(rng: np.random.Generator, spec: GenSpec) -> Example:
    lo = max(spec.mag_lo, 2.0)
    hi = max(spec.mag_hi, lo)
    while True:
        d = _draw_int(rng, lo, min(hi, 1e6))
        if d < 2:
            continue
        m = _draw_int(rng, 1.0, max(hi / d, 1.0))
        n = d * m
        make_false = bool(rng.integers(2))
        if make_false:
            n += int(rng.integers(1, d))
        if not (spec.mag_lo <= n <= spec.mag_hi):
            continue
        answer = "False" if n % d else "True"
        return make_example(f"Does {d} divide {n}?", answer)


def gen_arithmetic(spec: GenSpec, n: int | None = None) -> list[Example]:
    """n (default spec.n_examples) two-operand arithmetic examples."""
    rng = seeding.stream(spec.seed, "arith")
    return [_arith_example(rng, spec) for _ in range(spec.n_examples if n is None else n)]


def gen_linear_solve(spec: GenSpec, n: int | None = None) -> list[Example]:
    """n linear equations with integer roots, built answer-first."""
    rng = seeding.stream(spec.seed, "solve")
    return [_solve_example(rng, spec) for _ in range(spec.n_examples if n is None else n)]


def gen_divisibility(spec: GenSpec, n: int | None = None) -> list[Example]:
    """n divisibility questions, True/False balanced by construction."""
    rng = seeding.stream(spec.seed, "div")
    return [_div_example(rng, spec) for _ in range(spec.n_examples if n is None else n)]


def generate_corpus(spec: GenSpec) -> list[Example]:
    """spec.n_examples examples drawn from the weighted task mix."""
    rng = seeding.stream(spec.seed, "corpus")
    weights = np.array([spec.weight_arith, spec.weight_solve, spec.weight_div], dtype=np.float64)
    cdf = np.cumsum(weights / weights.sum())
    makers = (_arith_example, _solve_example, _div_example)
    out = []
    for _ in range(spec.n_examples):
        task = int(np.searchsorted(cdf, rng.random(), side="right"))
        out.append(makers[min(task, 2)](rng, spec))
    return out


def write_jsonl(examples: Iterable[Example], path) -> None:
    """One {"question", "answer"} object per line, UTF-8."""
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps({"question": ex.question, "answer": ex.answer}, ensure_ascii=False))
            f.write("\n")


def read_jsonl(path) -> list[Example]:
    """Parse a JSONL corpus; answer kind/values are recomputed on read."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                question, answer = obj["question"], obj["answer"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{path}: line {lineno}: {e}") from e
            out.append(make_example(question, answer))
    return out
