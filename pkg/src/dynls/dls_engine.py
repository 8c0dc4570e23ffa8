"""Realizing a boolean function's level set through changing physical maps.

The logical object is a function f on {0,1}^w together with its level set
f^-1{1}, and that object never changes.  What changes from step to step is
the physical encoding: at step j a scheduler names a state, the state picks
an invertible map from a family on {0,1}^n, and the value bit f(point) is
embedded as coordinate n-1 of the map's input alongside n-1 fresh random
bits.  The first n-1 coordinates of the output are the observable part.

Two verification routes live here.  Invariance checks that decoding each
physical state with its step's map always lands the bit back on the correct
side of the level set.  Secrecy checks that the observable part carries no
information about the bit: exactly (integer histograms over the full random
space, compared by total variation in exact rational arithmetic) or sampled
(chi-square against uniform for large widths).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Protocol, Sequence

import numpy as np
from scipy import stats

from .bitcore import BitVec, BoolFn, InvertibleMap, XorFamily, random_affine_invertible


class Scheduler(Protocol):
    horizon: int | None

    def state_at(self, j: int) -> Any: ...


class PeriodicScheduler:
    """Cycles through a fixed state list forever."""

    horizon: int | None = None

    def __init__(self, states: Sequence[Any]) -> None:
        if not states:
            raise ValueError("scheduler needs at least one state")
        self._states = list(states)

    def state_at(self, j: int) -> Any:
        return self._states[j % len(self._states)]


class TraceScheduler:
    """Follows a recorded state trace, cycling past its end.

    ``horizon`` is the length of the meaningful prefix; callers that care
    about staying inside the recorded run should bound their steps by it.
    A trace from a machine that halted immediately is empty, leaving an
    effective horizon of 0 and no queryable states.
    """

    def __init__(self, trace: Sequence[Any]) -> None:
        self._trace = list(trace)
        self.horizon: int | None = len(self._trace)

    def state_at(self, j: int) -> Any:
        if not self._trace:
            raise ValueError("trace is empty; effective horizon is 0")
        return self._trace[j % len(self._trace)]


@dataclass(frozen=True)
class Realization:
    """One step's physical encoding of a logical bit."""

    step: int
    state: Any
    random_part: BitVec
    logical_bit: int
    physical: BitVec

    @property
    def observable(self) -> BitVec:
        """Everything but the hidden top coordinate."""
        w = self.physical.width
        return BitVec(w - 1, self.physical.value & ((1 << (w - 1)) - 1))


@dataclass
class DlsDecomposition:
    """Width-n physical layer: a map family, a schedule, and a bit source."""

    width: int
    family: Mapping[Any, InvertibleMap]
    scheduler: Scheduler
    source: Any  # anything with next_bits(k) -> BitVec
    _inverses: dict[Any, InvertibleMap] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        if self.width < 2:
            raise ValueError("width must be at least 2 (one observable bit)")
        if not self.family:
            raise ValueError("map family is empty")
        for state, m in self.family.items():
            if m.width != self.width:
                raise ValueError(
                    f"map for state {state!r} has width {m.width}, expected {self.width}"
                )

    def map_for(self, state: Any) -> InvertibleMap:
        try:
            return self.family[state]
        except KeyError:
            raise ValueError(f"no physical map for state {state!r}") from None

    def _inverse_for(self, state: Any) -> InvertibleMap:
        inv = self._inverses.get(state)
        if inv is None:
            inv = self.map_for(state).invert()
            self._inverses[state] = inv
        return inv

    def realize(self, j: int, logical_bit: int) -> Realization:
        """Encode one bit at step j, drawing the random part from the source."""
        return realize_step(self, j, self.source.next_bits(self.width - 1), logical_bit)

    def decode(self, physical: BitVec, state: Any) -> tuple[BitVec, int]:
        """Invert a physical state back to (random part, logical bit)."""
        pre = self._inverse_for(state).apply(physical)
        r, top = pre.split(self.width - 1)
        return r, top.value


def realize_step(
    dls: DlsDecomposition, j: int, r: BitVec, logical_bit: int
) -> Realization:
    """One step's encoding with an explicit random part."""
    if logical_bit not in (0, 1):
        raise ValueError(f"logical bit must be 0 or 1, got {logical_bit}")
    if r.width != dls.width - 1:
        raise ValueError(
            f"random part width {r.width} != {dls.width - 1}"
        )
    state = dls.scheduler.state_at(j)
    physical = dls.map_for(state).apply(r.concat(BitVec(1, logical_bit)))
    return Realization(j, state, r, logical_bit, physical)


def decode(dls: DlsDecomposition, state: Any, physical: BitVec) -> tuple[BitVec, int]:
    """Module-level decode; argument order (decomposition, state, pattern)."""
    return dls.decode(physical, state)


# ---------------------------------------------------------------------------
# invariance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepViolation:
    step: int
    state: Any
    expected_bit: int
    decoded_bit: int
    kind: str = "level_set"  # or "random_part" when auditing supplied runs


@dataclass(frozen=True)
class InvarianceReport:
    steps: int
    violations: tuple[StepViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_text(self) -> str:
        lines = [f"steps={self.steps} violations={len(self.violations)}"]
        for v in self.violations:
            lines.append(
                f"step={v.step} state={_fmt_state(v.state)} kind={v.kind} "
                f"expected={v.expected_bit} decoded={v.decoded_bit}"
            )
        return "\n".join(lines)


def _fmt_state(state: Any) -> str:
    """Compact single-token rendering so report lines stay splittable."""
    if isinstance(state, tuple):
        return "(" + ",".join(_fmt_state(part) for part in state) + ")"
    if isinstance(state, (int, np.integer)):
        return str(int(state))
    return repr(state)


def verify_invariance(
    dls: DlsDecomposition,
    f: BoolFn,
    points: Sequence[BitVec],
    steps: int | None = None,
    realizations: Sequence[Realization] | None = None,
) -> InvarianceReport:
    """Check that every step's physical state decodes onto the correct side
    of f's level set.  Point j of the run is ``points[j % len(points)]``.

    Pass ``realizations`` to audit an existing run (fault injection, replay)
    instead of generating a fresh one; its length then sets the step count.
    """
    if not points:
        raise ValueError("need at least one logical point")
    if realizations is not None:
        realizations = list(realizations)
        steps = len(realizations)
    if steps is None:
        raise ValueError("steps is required when realizations are generated")
    violations = []
    for j in range(steps):
        point = points[j % len(points)]
        expected = f(point)
        if realizations is not None:
            real = realizations[j]
        else:
            real = dls.realize(j, expected)
        decoded_r, decoded = dls.decode(real.physical, real.state)
        if decoded != expected or real.logical_bit != expected:
            violations.append(StepViolation(j, real.state, expected, decoded))
        elif realizations is not None and decoded_r != real.random_part:
            # the membership bit survived, but the pattern was tampered with
            violations.append(
                StepViolation(j, real.state, expected, decoded, kind="random_part")
            )
    return InvarianceReport(steps, tuple(violations))


# ---------------------------------------------------------------------------
# secrecy, exact route
# ---------------------------------------------------------------------------


MAX_EXACT_WIDTH = 20


def secrecy_distribution(m: InvertibleMap, b: int) -> np.ndarray:
    """Observable histogram over the full random space with the bit fixed.

    Entry v counts the random parts r for which encoding b lands the
    observable part on v.  Counts are exact integers.
    """
    if b not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {b}")
    if m.width > MAX_EXACT_WIDTH:
        raise ValueError(
            f"width {m.width} too large for exhaustive enumeration "
            f"(cap {MAX_EXACT_WIDTH}); use the sampled mode"
        )
    half = 1 << (m.width - 1)
    table = m.to_table_array()
    idx = np.arange(half, dtype=np.int64) | (b << (m.width - 1))
    obs = table[idx] & (half - 1)
    return np.bincount(obs, minlength=half).astype(np.int64)


@dataclass(frozen=True)
class SecrecyReport:
    width: int
    histograms: dict[tuple[Any, int], tuple[int, ...]]
    tvs: dict[tuple[Any, int], Fraction]
    max_tv: Fraction
    passed: bool

    def to_text(self) -> str:
        lines = []
        for (state, b), tv in self.tvs.items():
            lines.append(
                f"state={_fmt_state(state)} b={b} "
                f"tv_to_ref={tv.numerator}/{tv.denominator}"
            )
        verdict = "true" if self.passed else "false"
        lines.append(
            f"max_tv={self.max_tv.numerator}/{self.max_tv.denominator} pass={verdict}"
        )
        return "\n".join(lines)


def verify_perfect_secrecy(
    family: Mapping[Any, InvertibleMap] | DlsDecomposition,
) -> SecrecyReport:
    """Exact secrecy check: all (state, bit) observable histograms must be
    identical, measured by total variation against the first one."""
    if isinstance(family, DlsDecomposition):
        family = family.family
    if not family:
        raise ValueError("map family is empty")
    widths = {m.width for m in family.values()}
    if len(widths) != 1:
        raise ValueError(f"family mixes widths {sorted(widths)}")
    (width,) = widths
    half = 1 << (width - 1)
    histograms: dict[tuple[Any, int], tuple[int, ...]] = {}
    arrays: dict[tuple[Any, int], np.ndarray] = {}
    for state, m in family.items():
        for b in (0, 1):
            arr = secrecy_distribution(m, b)
            arrays[(state, b)] = arr
            histograms[(state, b)] = tuple(int(v) for v in arr)
    ref = next(iter(arrays.values()))
    tvs = {
        key: Fraction(int(np.abs(arr - ref).sum()), 2 * half)
        for key, arr in arrays.items()
    }
    max_tv = max(tvs.values())
    return SecrecyReport(width, histograms, tvs, max_tv, max_tv == 0)


# ---------------------------------------------------------------------------
# secrecy, sampled route
# ---------------------------------------------------------------------------


def sampled_observable_histogram(
    m: InvertibleMap, b: int, samples: int, seed
) -> np.ndarray:
    """Observable histogram under ``samples`` uniformly drawn random parts."""
    if b not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {b}")
    half = 1 << (m.width - 1)
    rng = np.random.default_rng(seed)
    r = rng.integers(0, half, size=samples, dtype=np.int64)
    table = m.to_table_array()
    obs = table[r | (b << (m.width - 1))] & (half - 1)
    return np.bincount(obs, minlength=half).astype(np.int64)


@dataclass(frozen=True)
class SampledSecrecyReport:
    samples: int
    alpha: float
    rows: tuple[tuple[Any, int, float, float], ...]  # (state, b, chi2, p)
    passed: bool

    def to_text(self) -> str:
        lines = [
            f"state={_fmt_state(state)} b={b} chi2={chi2:.2f} p={p:.6g}"
            for state, b, chi2, p in self.rows
        ]
        verdict = "true" if self.passed else "false"
        lines.append(f"samples={self.samples} alpha={self.alpha} pass={verdict}")
        return "\n".join(lines)


def sampled_secrecy_report(
    family: Mapping[Any, InvertibleMap],
    samples: int,
    seed: int,
    alpha: float = 0.001,
) -> SampledSecrecyReport:
    """Chi-square uniformity of each (state, bit) observable sample.

    The observable part of a secrecy-preserving map is uniform for either
    bit value, so every cell expects samples / 2^(n-1) hits; a p-value at
    or below ``alpha`` for any pair fails the whole family.
    """
    if not family:
        raise ValueError("map family is empty")
    children = iter(np.random.SeedSequence(seed).spawn(2 * len(family)))
    rows = []
    for state, m in family.items():
        for b in (0, 1):
            hist = sampled_observable_histogram(m, b, samples, next(children))
            res = stats.chisquare(hist)
            rows.append((state, b, float(res.statistic), float(res.pvalue)))
    passed = all(p > alpha for _, _, _, p in rows)
    return SampledSecrecyReport(samples, alpha, tuple(rows), passed)


# ---------------------------------------------------------------------------
# derived map families
# ---------------------------------------------------------------------------


def derived_xor_family(
    width: int, states: Sequence[Any], seed: int | str
) -> dict[Any, XorFamily]:
    """One mask-pair map per state, derived deterministically from the seed."""
    fam = {}
    for state in states:
        rnd = random.Random(f"xorfam:{seed}:{state!r}")
        fam[state] = XorFamily(
            width,
            rnd.getrandbits(width - 1),
            rnd.getrandbits(width - 1),
            rnd.getrandbits(1),
        )
    return fam


def derived_affine_family(
    width: int, states: Sequence[Any], seed: int | str
) -> dict[Any, Any]:
    """One invertible affine map per state, derived from the seed."""
    fam = {}
    for state in states:
        sub = random.Random(f"affine:{seed}:{state!r}").getrandbits(64)
        fam[state] = random_affine_invertible(width, sub)
    return fam
