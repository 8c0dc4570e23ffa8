"""Small Turing machines: at most 8 states and 4 tape symbols.

State fits in 3 bits and a symbol in 2, so an instruction pair (state,
read symbol) packs into a 5-bit index with the state in the high coordinates.
The six components of the transition function (next-state bits, written-symbol
bits, move direction) then become boolean functions on that 5-bit domain,
which is what the level-set machinery consumes.

Tapes are sparse dicts holding only nonblank cells; blank is symbol 0 and a
missing (state, symbol) entry means the machine halts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .bitcore import BoolFn

MAX_STATES = 8
MAX_SYMBOLS = 4

Move = str  # "L" or "R"
Rule = tuple[int, int, Move]


class MachineFormatError(ValueError):
    """A textual machine description could not be parsed."""


@dataclass
class TmProgram:
    num_states: int
    num_symbols: int
    transitions: dict[tuple[int, int], Rule]

    def __post_init__(self) -> None:
        if not 1 <= self.num_states <= MAX_STATES:
            raise ValueError(f"num_states must be 1..{MAX_STATES}, got {self.num_states}")
        if not 1 <= self.num_symbols <= MAX_SYMBOLS:
            raise ValueError(f"num_symbols must be 1..{MAX_SYMBOLS}, got {self.num_symbols}")
        for (q, a), (q2, a2, mv) in self.transitions.items():
            if not (0 <= q < self.num_states and 0 <= a < self.num_symbols):
                raise ValueError(f"instruction pair ({q},{a}) out of range")
            if not (0 <= q2 < self.num_states and 0 <= a2 < self.num_symbols):
                raise ValueError(f"rule target ({q2},{a2}) out of range")
            if mv not in ("L", "R"):
                raise ValueError(f"move must be L or R, got {mv!r}")


@dataclass
class TmConfig:
    """Machine configuration; the tape stores nonblank cells only."""

    tape: dict[int, int]
    head: int
    state: int

    def __post_init__(self) -> None:
        self.tape = {cell: sym for cell, sym in self.tape.items() if sym != 0}

    def read(self) -> int:
        return self.tape.get(self.head, 0)


@dataclass(frozen=True)
class RunResult:
    final: TmConfig
    trace: tuple[tuple[int, int], ...]
    halted: bool


def step(program: TmProgram, config: TmConfig) -> TmConfig | None:
    """One step, or None if no rule applies.  The input config is untouched."""
    key = (config.state, config.read())
    rule = program.transitions.get(key)
    if rule is None:
        return None
    q2, a2, mv = rule
    tape = dict(config.tape)
    if a2 == 0:
        tape.pop(config.head, None)
    else:
        tape[config.head] = a2
    return TmConfig(tape, config.head + (1 if mv == "R" else -1), q2)


def run(program: TmProgram, config: TmConfig, max_steps: int) -> RunResult:
    if not 0 <= config.state < program.num_states:
        raise ValueError(f"start state {config.state} out of range")
    if any(not 0 < sym < program.num_symbols for sym in config.tape.values()):
        raise ValueError("tape holds a symbol outside the alphabet")
    trace: list[tuple[int, int]] = []
    current = config
    for _ in range(max_steps):
        key = (current.state, current.read())
        nxt = step(program, current)
        if nxt is None:
            return RunResult(current, tuple(trace), True)
        trace.append(key)
        current = nxt
    return RunResult(current, tuple(trace), False)


def instruction_trace(
    program: TmProgram, config: TmConfig, max_steps: int
) -> tuple[tuple[int, int], ...]:
    """The (state, read symbol) pairs consumed over a bounded run."""
    return run(program, config, max_steps).trace


def instruction_scheduler(program: TmProgram, config: TmConfig, horizon: int):
    """Scheduler following the run's instruction pairs.

    Step j maps to the (state, scanned symbol) pair the machine consumed at
    step j.  A machine that halts at step t < horizon yields a scheduler
    whose effective horizon is t (0 for an empty transition table).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    from .dls_engine import TraceScheduler

    return TraceScheduler(instruction_trace(program, config, horizon))


# ---------------------------------------------------------------------------
# transition function as six boolean components on the 5-bit index
# ---------------------------------------------------------------------------


def instruction_index(q: int, a: int) -> int:
    """Pack a pair: state in coordinates 4..2, symbol in coordinates 1..0."""
    if not (0 <= q < MAX_STATES and 0 <= a < MAX_SYMBOLS):
        raise ValueError(f"pair ({q},{a}) outside the packed range")
    return (q << 2) | a


def transition_components(program: TmProgram) -> tuple[BoolFn, ...]:
    """Six functions on the packed index, in order:

    0..2  next-state bits, most significant first
    3..4  written-symbol bits, most significant first
    5     move direction, 1 for R

    Pairs without a rule (including pairs beyond the program's ranges)
    contribute 0 to every component.
    """
    tables = [[0] * 32 for _ in range(6)]
    for (q, a), (q2, a2, mv) in program.transitions.items():
        idx = instruction_index(q, a)
        tables[0][idx] = (q2 >> 2) & 1
        tables[1][idx] = (q2 >> 1) & 1
        tables[2][idx] = q2 & 1
        tables[3][idx] = (a2 >> 1) & 1
        tables[4][idx] = a2 & 1
        tables[5][idx] = 1 if mv == "R" else 0
    return tuple(BoolFn(5, tuple(t)) for t in tables)


# Fixed fixture shared across the suite: the instruction pairs of an 8-state,
# 4-symbol machine whose written symbol has its high bit set.  Frozen as data
# so tests never depend on reconstructing the machine behind it.
_WRITE_HIGH_PAIRS = (
    (7, 0),
    (6, 0), (6, 1), (6, 2),
    (5, 0), (5, 1), (5, 2),
    (4, 0), (4, 2),
    (3, 1), (3, 2),
    (2, 3), (2, 1), (2, 0),
)


def reference_write_high_set() -> frozenset[tuple[int, int]]:
    return frozenset(_WRITE_HIGH_PAIRS)


def reference_write_high_indicator() -> BoolFn:
    """Indicator of the fixture set on the packed 5-bit domain."""
    return BoolFn.from_members(
        5, [instruction_index(q, a) for q, a in _WRITE_HIGH_PAIRS]
    )


# ---------------------------------------------------------------------------
# canned machine + text format
# ---------------------------------------------------------------------------


def binary_incrementer(bits: Sequence[int]) -> tuple[TmProgram, TmConfig]:
    """Increment a binary number written on cells 0..len-1, head on the
    least significant bit (the last cell)."""
    if not bits or any(b not in (0, 1) for b in bits):
        raise ValueError("bits must be a nonempty 0/1 sequence")
    program = TmProgram(
        2, 2, {(0, 1): (0, 0, "L"), (0, 0): (1, 1, "R")}
    )
    tape = {cell: b for cell, b in enumerate(bits) if b}
    return program, TmConfig(tape, len(bits) - 1, 0)


def endless_counter() -> tuple[TmProgram, TmConfig]:
    """A 2-state, 3-symbol machine that counts forever.

    Digits 1/2 stand for bits 0/1 with the low digit on cell 0, so blank
    never appears inside the number and end detection is unambiguous.
    State 0 increments at the head, state 1 walks back to the low end.
    Five of the six instruction pairs occur from a blank start, which makes
    this a convenient driver for long, varied scheduler traces.
    """
    program = TmProgram(
        2,
        3,
        {
            (0, 1): (1, 2, "L"),   # bit 0 -> bit 1, done
            (0, 2): (0, 1, "R"),   # bit 1 -> bit 0, carry right
            (0, 0): (1, 2, "L"),   # fresh high digit
            (1, 1): (1, 1, "L"),
            (1, 2): (1, 2, "L"),
            (1, 0): (0, 0, "R"),   # stepped past cell 0, turn around
        },
    )
    return program, TmConfig({}, 0, 0)


def machine_to_text(program: TmProgram, config: TmConfig | None = None) -> str:
    lines = [f"states={program.num_states}", f"alphabet={program.num_symbols}"]
    if config is not None:
        lines.append(f"start={config.state}")
        if config.tape and min(config.tape) < 0:
            raise ValueError("only tapes on nonnegative cells serialize")
        top = max(config.tape) if config.tape else -1
        codes = ",".join(str(config.tape.get(i, 0)) for i in range(top + 1))
        lines.append(f"tape={codes}@{config.head}")
    for (q, a), (q2, a2, mv) in sorted(program.transitions.items()):
        lines.append(f"{q} {a} -> {q2} {a2} {mv}")
    return "\n".join(lines) + "\n"


def machine_from_text(text: str) -> tuple[TmProgram, TmConfig]:
    """Parse a machine file; missing start/tape lines default to a blank
    tape with the head on cell 0 in state 0."""
    header: dict[str, str] = {}
    rules: dict[tuple[int, int], Rule] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line and "->" not in line:
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
            continue
        tokens = line.split()
        if len(tokens) != 6 or tokens[2] != "->":
            raise MachineFormatError(f"bad rule line: {raw!r}")
        try:
            q, a = int(tokens[0]), int(tokens[1])
            q2, a2 = int(tokens[3]), int(tokens[4])
        except ValueError:
            raise MachineFormatError(f"bad rule line: {raw!r}") from None
        if (q, a) in rules:
            raise MachineFormatError(f"duplicate rule for pair ({q},{a})")
        rules[(q, a)] = (q2, a2, tokens[5])
    try:
        num_states = int(header["states"])
        num_symbols = int(header["alphabet"])
    except KeyError as exc:
        raise MachineFormatError(f"missing {exc} header line") from None
    except ValueError as exc:
        raise MachineFormatError(str(exc)) from None
    try:
        program = TmProgram(num_states, num_symbols, rules)
    except ValueError as exc:
        raise MachineFormatError(str(exc)) from None

    state = 0
    if "start" in header:
        try:
            state = int(header["start"])
        except ValueError as exc:
            raise MachineFormatError(str(exc)) from None
        if not 0 <= state < num_states:
            raise MachineFormatError(f"start state {state} out of range")
    tape: dict[int, int] = {}
    head = 0
    if "tape" in header:
        codes, sep, head_part = header["tape"].partition("@")
        if not sep:
            raise MachineFormatError("tape line needs <codes>@<head>")
        try:
            head = int(head_part)
            cells = [int(c) for c in codes.split(",")] if codes else []
        except ValueError as exc:
            raise MachineFormatError(str(exc)) from None
        if any(not 0 <= sym < num_symbols for sym in cells):
            raise MachineFormatError("tape symbol outside the alphabet")
        tape = {i: sym for i, sym in enumerate(cells) if sym}
    return program, TmConfig(tape, head, state)


def write_machine(program: TmProgram, config: TmConfig, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(machine_to_text(program, config))


def read_machine(path) -> tuple[TmProgram, TmConfig]:
    with open(path, "r", encoding="ascii") as fh:
        return machine_from_text(fh.read())
