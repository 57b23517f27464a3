"""Analytic cost and compression estimates for contractions and for
Tucker-decomposed convolutions.

Costs are multiply counts with proportionality constant 1.
"""

import warnings
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from math import prod

from .errors import SpecMismatch
from .tensor import ContractionSpec, _as_spec

# printed values from the worked compression/speedup examples (chi -> value)
PAPER_MEMORY_CR = {200: 7, 150: 9, 100: 14, 50: 28, 20: 69}
PAPER_SPEEDUP = {200: 1.4, 150: 2.0, 100: 3.0, 50: 6.7, 20: 17.3}
EXAMPLE_CHIS = (200, 150, 100, 50, 20)


class OrderAssumptionViolated(UserWarning):
    """Tucker cost formulas assume C_in > X >= Y."""


@dataclass(frozen=True)
class ConvShape:
    X: int
    Y: int
    c_in: int
    c_out: int
    h_out: int = 1
    w_out: int = 1
    ranks: tuple = (1, 1, 1, 1)  # (alpha on X, beta on Y, gamma on C_in, delta on C_out)

    def __post_init__(self):
        vals = (self.X, self.Y, self.c_in, self.c_out, self.h_out, self.w_out, *self.ranks)
        if len(self.ranks) != 4 or min(vals) < 1:
            raise ValueError(f"all ConvShape dims and ranks must be >= 1: {self}")


@dataclass(frozen=True)
class CostEstimate:
    dense_cost: int
    cost1: int
    cost2: int
    cost3: int
    tucker_cost: int
    speedup: float
    memory_cr: float


def round_half_up(x):
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def _sizes_for(spec, sizes):
    missing = set("".join(spec.inputs)) - set(sizes)
    if missing:
        raise SpecMismatch(f"no size given for symbols {sorted(missing)}")
    return {s: int(sizes[s]) for s in set("".join(spec.inputs))}


def contraction_cost(spec, sizes):
    """Product of the sizes of every distinct symbol in the network."""
    spec = _as_spec(spec)
    sizes = _sizes_for(spec, sizes)
    return prod(sizes.values())


def pairwise_costs(spec, sizes, order=None):
    """Per-step multiply counts of the engine's pairwise execution of ``spec``.

    Mirrors :func:`ktn.tensor.contract`: symbols private to one operand (and
    not in the output) are first summed against an all-ones vector, then
    operands are folded in ``order``; each fold costs the product of the
    distinct symbol sizes of the pair.
    """
    spec = _as_spec(spec)
    sizes = _sizes_for(spec, sizes)
    n = len(spec.inputs)
    order = list(range(n)) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise SpecMismatch(f"order {order} is not a permutation of the inputs")
    terms = [set(t) for t in spec.inputs]
    counts = {}
    for t in terms:
        for s in t:
            counts[s] = counts.get(s, 0) + 1
    out = set(spec.output)
    costs = []
    for i, t in enumerate(terms):
        private = {s for s in t if counts[s] == 1 and s not in out}
        if private:
            costs.append(prod(sizes[s] for s in t))
            terms[i] = t - private
    cur = terms[order[0]]
    for step, idx in enumerate(order[1:], start=1):
        nxt = terms[idx]
        needed = set(out)
        for later in order[step + 1:]:
            needed |= terms[later]
        costs.append(prod(sizes[s] for s in cur | nxt))
        cur = (cur | nxt) - ((cur & nxt) - needed)
    leftover = cur - out
    if leftover:
        costs.append(prod(sizes[s] for s in cur))
    return costs


def dense_params(s):
    return s.X * s.Y * s.c_in * s.c_out


def tucker_params(s):
    a, b, g, d = s.ranks
    return s.X * a + s.Y * b + s.c_in * g + s.c_out * d


def tucker_memory_cr(s):
    """Dense kernel size over the summed sizes of the four mode matrices."""
    return dense_params(s) / tucker_params(s)


def tucker_conv_costs(s):
    a, b, g, d = s.ranks
    hw = s.h_out * s.w_out
    if s.c_in <= s.X:
        warnings.warn(
            f"cost formulas assume C_in > X >= Y (got C_in={s.c_in}, X={s.X})",
            OrderAssumptionViolated,
            stacklevel=2,
        )
    dense = hw * s.X * s.Y * s.c_in * s.c_out
    cost1 = hw * (s.X * s.Y * s.c_in * g + s.X * s.Y * g * a + a * s.Y * g * b)
    cost2 = hw * a * b * g * d
    cost3 = hw * d * s.c_out
    total = cost1 + cost2 + cost3
    return CostEstimate(dense, cost1, cost2, cost3, total, dense / total, tucker_memory_cr(s))


def example_table(X=3, Y=3, c_in=256, c_out=384, h_out=50, w_out=50, alpha=3, beta=3, chis=EXAMPLE_CHIS):
    """Rows (chi, memory CR, speedup) with gamma = delta = chi."""
    rows = []
    for chi in chis:
        s = ConvShape(X, Y, c_in, c_out, h_out, w_out, (alpha, beta, chi, chi))
        est = tucker_conv_costs(s)
        rows.append((chi, est.memory_cr, est.speedup))
    return rows


__all__ = [
    "ContractionSpec",
    "ConvShape",
    "CostEstimate",
    "OrderAssumptionViolated",
    "contraction_cost",
    "example_table",
    "pairwise_costs",
    "round_half_up",
    "tucker_conv_costs",
    "tucker_memory_cr",
]
