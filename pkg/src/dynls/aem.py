"""A small self-modifying firing-network machine.

Elements fire at integer ticks when incoming pulse amplitudes reach their
threshold; meta commands installed on trigger elements rewrite connections
or element parameters one tick after the trigger fires.  A compiler turns
one level-set step (map, random part, logical bit) into a command batch
whose readout firing pattern reproduces the step's physical output.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, NamedTuple, Union

from .bitcore import BitVec, InvertibleMap, XorFamily
from .tm import TmConfig, TmProgram, instruction_index, instruction_trace, transition_components


class AemSyntaxError(ValueError):
    """Malformed program text; the message carries the line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class AemLinkError(ValueError):
    """A command referenced an element the machine does not have, or a
    fire was scheduled for a tick the machine already passed."""


class ElementKind(Enum):
    RANDOM = "random"
    COMPUTING = "computing"
    PLAIN = "plain"


class MetaKind(Enum):
    """What a meta command's payload is allowed to rewrite."""

    CONNECTIONS = "MC"
    ELEMENTS = "ME"


_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Element:
    name: str
    threshold: int
    refractory: int
    kind: ElementKind

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValueError(f"bad element name {self.name!r}")
        if self.refractory < 0:
            raise ValueError(f"refractory must be >= 0, got {self.refractory}")


@dataclass(frozen=True)
class Connection:
    source: str
    target: str
    amplitude: int
    delay: int

    def __post_init__(self):
        if self.delay < 1:
            raise ValueError(f"delay must be >= 1, got {self.delay}")


@dataclass(frozen=True)
class ElementCmd:
    """Create an element, or replace the one with the same name."""

    element: Element


@dataclass(frozen=True)
class ConnectionCmd:
    """Install a connection; amplitude 0 deletes the (source, target) edge."""

    connection: Connection


@dataclass(frozen=True)
class FireCmd:
    """Force `name` to fire at `tick`, regardless of kind or refractory."""

    name: str
    tick: int

    def __post_init__(self):
        if self.tick < 0:
            raise ValueError(f"tick must be >= 0, got {self.tick}")


RuleCmd = Union[ElementCmd, ConnectionCmd]


@dataclass(frozen=True)
class MetaCmd:
    """A payload of rule rewrites applied one tick after `trigger` fires.

    Installing a meta command for a (kind, trigger) pair the machine
    already holds replaces that payload wholesale.
    """

    kind: MetaKind
    trigger: str
    payload: tuple[RuleCmd, ...]

    def __post_init__(self):
        want = ConnectionCmd if self.kind is MetaKind.CONNECTIONS else ElementCmd
        for cmd in self.payload:
            if not isinstance(cmd, want):
                raise ValueError(
                    f"{self.kind.value} payload may only hold "
                    f"{want.__name__} entries, got {type(cmd).__name__}"
                )


Command = Union[ElementCmd, ConnectionCmd, FireCmd, MetaCmd]


@dataclass(frozen=True)
class AemProgram:
    commands: tuple[Command, ...]


FiringTrace = dict[int, frozenset]


# ---------------------------------------------------------------------------
# concrete syntax

_KINDS = {k.value: k for k in ElementKind}


def _int(token: str, what: str, lineno: int) -> int:
    try:
        return int(token, 10)
    except ValueError:
        raise AemSyntaxError(lineno, f"{what} must be an integer, got {token!r}") from None


def _name(token: str, lineno: int) -> str:
    if not _NAME_RE.match(token):
        raise AemSyntaxError(lineno, f"bad element name {token!r}")
    return token


def _parse_element(tokens: list, lineno: int) -> ElementCmd:
    if len(tokens) != 5:
        raise AemSyntaxError(lineno, "expected: E <name> <threshold> <refractory> <kind>")
    name = _name(tokens[1], lineno)
    threshold = _int(tokens[2], "threshold", lineno)
    refractory = _int(tokens[3], "refractory", lineno)
    if refractory < 0:
        raise AemSyntaxError(lineno, f"refractory must be >= 0, got {refractory}")
    kind = _KINDS.get(tokens[4])
    if kind is None:
        raise AemSyntaxError(lineno, f"unknown element kind {tokens[4]!r}")
    return ElementCmd(Element(name, threshold, refractory, kind))


def _parse_connection(tokens: list, lineno: int) -> ConnectionCmd:
    if len(tokens) != 5:
        raise AemSyntaxError(lineno, "expected: C <from> <to> <amplitude> <delay>")
    source = _name(tokens[1], lineno)
    target = _name(tokens[2], lineno)
    amplitude = _int(tokens[3], "amplitude", lineno)
    delay = _int(tokens[4], "delay", lineno)
    if delay < 1:
        raise AemSyntaxError(lineno, f"delay must be >= 1, got {delay}")
    return ConnectionCmd(Connection(source, target, amplitude, delay))


def _parse_fire(tokens: list, lineno: int) -> FireCmd:
    if len(tokens) != 3:
        raise AemSyntaxError(lineno, "expected: F <name> <tick>")
    name = _name(tokens[1], lineno)
    tick = _int(tokens[2], "tick", lineno)
    if tick < 0:
        raise AemSyntaxError(lineno, f"tick must be >= 0, got {tick}")
    return FireCmd(name, tick)


def parse(text: str) -> AemProgram:
    """Parse program text.  Comments run from `#` to end of line."""
    lines = text.splitlines()
    commands: list = []
    seen = set()
    i = 0
    while i < len(lines):
        lineno = i + 1
        stripped = lines[i].split("#", 1)[0].strip()
        i += 1
        if not stripped:
            continue
        tokens = stripped.split()
        head = tokens[0]
        if head == "E":
            cmd = _parse_element(tokens, lineno)
            if cmd.element.name in seen:
                raise AemSyntaxError(lineno, f"duplicate element {cmd.element.name!r}")
            seen.add(cmd.element.name)
            commands.append(cmd)
        elif head == "C":
            commands.append(_parse_connection(tokens, lineno))
        elif head == "F":
            commands.append(_parse_fire(tokens, lineno))
        elif head in ("MC", "ME"):
            if len(tokens) != 3 or tokens[2] != "{":
                raise AemSyntaxError(lineno, f"expected: {head} <trigger> {{")
            kind = MetaKind(head)
            trigger = _name(tokens[1], lineno)
            payload = []
            opened_at = lineno
            while True:
                if i >= len(lines):
                    raise AemSyntaxError(
                        opened_at, "unterminated meta block (missing '}')"
                    )
                inner_no = i + 1
                inner = lines[i].split("#", 1)[0].strip()
                i += 1
                if not inner:
                    continue
                if inner == "}":
                    break
                inner_tokens = inner.split()
                inner_head = inner_tokens[0]
                if kind is MetaKind.CONNECTIONS and inner_head == "C":
                    payload.append(_parse_connection(inner_tokens, inner_no))
                elif kind is MetaKind.ELEMENTS and inner_head == "E":
                    payload.append(_parse_element(inner_tokens, inner_no))
                else:
                    raise AemSyntaxError(
                        inner_no,
                        f"{head} payload only takes "
                        f"{'C' if kind is MetaKind.CONNECTIONS else 'E'} lines, "
                        f"got {inner_head!r}",
                    )
            commands.append(MetaCmd(kind, trigger, tuple(payload)))
        else:
            raise AemSyntaxError(lineno, f"unknown command {head!r}")
    return AemProgram(tuple(commands))


def _print_cmd(cmd: Command) -> list:
    if isinstance(cmd, ElementCmd):
        e = cmd.element
        return [f"E {e.name} {e.threshold} {e.refractory} {e.kind.value}"]
    if isinstance(cmd, ConnectionCmd):
        c = cmd.connection
        return [f"C {c.source} {c.target} {c.amplitude} {c.delay}"]
    if isinstance(cmd, FireCmd):
        return [f"F {cmd.name} {cmd.tick}"]
    lines = [f"{cmd.kind.value} {cmd.trigger} {{"]
    for inner in cmd.payload:
        lines.extend("  " + ln for ln in _print_cmd(inner))
    lines.append("}")
    return lines


def print_program(program: AemProgram) -> str:
    lines = []
    for cmd in program.commands:
        lines.extend(_print_cmd(cmd))
    return "".join(line + "\n" for line in lines)


def read_program(path) -> AemProgram:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def write_program(path, program: AemProgram) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(print_program(program))


# ---------------------------------------------------------------------------
# execution


class Machine:
    """Mutable machine state: elements, connections, metas, and the trace.

    `step()` advances one tick in three phases: pending meta payloads land
    first, then firings are computed against the updated rules, then metas
    whose triggers just fired queue their payloads for the next tick.
    Pulses are integrated against the connection set current at their
    arrival tick, not the one in place when they were emitted.
    """

    def __init__(self):
        self.clock = 0
        self.elements: dict[str, Element] = {}
        self.connections: dict[tuple, Connection] = {}
        self.metas: dict[tuple, MetaCmd] = {}
        self.trace: FiringTrace = {}
        self._forced: dict[int, set] = {}
        self._fired_at: dict[str, set] = {}
        self._last_fire: dict[str, int] = {}
        self._pending: dict[int, list] = {}

    def apply(self, commands: Union[AemProgram, Iterable[Command]]) -> None:
        if isinstance(commands, AemProgram):
            commands = commands.commands
        for cmd in commands:
            if isinstance(cmd, ElementCmd):
                self._install_element(cmd)
            elif isinstance(cmd, ConnectionCmd):
                self._install_connection(cmd)
            elif isinstance(cmd, FireCmd):
                self._require(cmd.name, "fire target")
                if cmd.tick < self.clock:
                    raise AemLinkError(
                        f"cannot fire {cmd.name!r} at past tick {cmd.tick} "
                        f"(clock is {self.clock})"
                    )
                self._forced.setdefault(cmd.tick, set()).add(cmd.name)
            elif isinstance(cmd, MetaCmd):
                self._require(cmd.trigger, "meta trigger")
                self.metas[(cmd.kind, cmd.trigger)] = cmd
            else:
                raise TypeError(f"not a command: {cmd!r}")

    def _require(self, name: str, role: str) -> None:
        if name not in self.elements:
            raise AemLinkError(f"{role} {name!r} is not an element of this machine")

    def _install_element(self, cmd: ElementCmd) -> None:
        self.elements[cmd.element.name] = cmd.element

    def _install_connection(self, cmd: ConnectionCmd) -> None:
        c = cmd.connection
        self._require(c.source, "connection source")
        self._require(c.target, "connection target")
        key = (c.source, c.target)
        if c.amplitude == 0:
            self.connections.pop(key, None)
        else:
            self.connections[key] = c

    def step(self) -> frozenset:
        """Advance one tick; returns the set of names that fired."""
        t = self.clock
        for cmd in self._pending.pop(t, ()):
            if isinstance(cmd, ElementCmd):
                self._install_element(cmd)
            else:
                self._install_connection(cmd)

        fired = set(self._forced.pop(t, ()))
        sums: dict[str, int] = {}
        for (source, target), conn in self.connections.items():
            history = self._fired_at.get(source)
            if history and (t - conn.delay) in history:
                sums[target] = sums.get(target, 0) + conn.amplitude
        for name, total in sums.items():
            if name in fired:
                continue
            elem = self.elements[name]
            if elem.kind is ElementKind.RANDOM:
                continue
            if total >= elem.threshold:
                last = self._last_fire.get(name)
                if last is None or t > last + elem.refractory:
                    fired.add(name)

        for name in fired:
            self._fired_at.setdefault(name, set()).add(t)
            self._last_fire[name] = t
        result = frozenset(fired)
        self.trace[t] = result

        if fired:
            queue = None
            for (kind, trigger), meta in self.metas.items():
                if trigger in fired:
                    if queue is None:
                        queue = self._pending.setdefault(t + 1, [])
                    queue.extend(meta.payload)
        self.clock = t + 1
        return result

    def run_until(self, tick: int) -> None:
        """Run steps through `tick` inclusive."""
        while self.clock <= tick:
            self.step()


def trace_to_jsonl(trace: FiringTrace) -> str:
    lines = [
        json.dumps({"tick": t, "fired": sorted(trace[t])}, separators=(",", ":"))
        for t in sorted(trace)
    ]
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# compiling level-set steps onto the machine

GO = "go"
BIT_IN = "bit_in"
BIT_OUT = "bit_out"

EPOCH_TICKS = 3


class StepElements(NamedTuple):
    randoms: tuple[str, ...]
    outputs: tuple[str, ...]


def element_names(width: int) -> StepElements:
    """The per-coordinate element names for maps of this width."""
    k = width - 1
    return StepElements(
        randoms=tuple(f"r{i}" for i in range(k)),
        outputs=tuple(f"d{i}" for i in range(k)),
    )


def _mask_wiring(names: StepElements, mask: int, flip: int) -> tuple:
    """Connection templates computing x XOR mask onto the output bank.

    Where the mask bit is set, the strobe excites the output and the input
    element vetoes it (NOT); where clear, the input alone drives it (copy).
    The logical-bit path gets the same treatment from `flip`.
    """
    wires = []
    for i, (rn, dn) in enumerate(zip(names.randoms, names.outputs)):
        if (mask >> i) & 1:
            wires.append(ConnectionCmd(Connection(GO, dn, 1, 2)))
            wires.append(ConnectionCmd(Connection(rn, dn, -1, 2)))
        else:
            wires.append(ConnectionCmd(Connection(GO, dn, 0, 2)))
            wires.append(ConnectionCmd(Connection(rn, dn, 1, 2)))
    if flip:
        wires.append(ConnectionCmd(Connection(GO, BIT_OUT, 1, 2)))
        wires.append(ConnectionCmd(Connection(BIT_IN, BIT_OUT, -1, 2)))
    else:
        wires.append(ConnectionCmd(Connection(GO, BIT_OUT, 0, 2)))
        wires.append(ConnectionCmd(Connection(BIT_IN, BIT_OUT, 1, 2)))
    return tuple(wires)


def _value_wiring(names: StepElements, value: BitVec) -> tuple:
    """Connection templates firing exactly the set bits of `value`.

    Used for maps with no special structure: the output is known once the
    inputs are, so the strobe drives each set coordinate directly and any
    input-to-output edges left by earlier epochs are deleted.
    """
    wires = []
    for i, (rn, dn) in enumerate(zip(names.randoms, names.outputs)):
        wires.append(ConnectionCmd(Connection(GO, dn, 1 if value.bit(i) else 0, 2)))
        wires.append(ConnectionCmd(Connection(rn, dn, 0, 2)))
    top = value.width - 1
    wires.append(ConnectionCmd(Connection(GO, BIT_OUT, 1 if value.bit(top) else 0, 2)))
    wires.append(ConnectionCmd(Connection(BIT_IN, BIT_OUT, 0, 2)))
    return tuple(wires)


def compile_step(
    state,
    family_map: InvertibleMap,
    r: BitVec,
    logical_bit: int,
    base_tick: int = 0,
) -> AemProgram:
    """Commands realizing one step as a firing pattern.

    The epoch spans three ticks from `base_tick`: inputs are forced to
    fire at the base tick, their metas rewire the machine at base+1, and
    the in-flight pulses (all on delay-2 edges) land on the output bank
    at base+2, the readout tick.  The strobe element fires every epoch
    and triggers the base wiring for logical bit 0; the bit-input element
    fires only when the logical bit is 1, and its payload, applied after
    the strobe's, overrides the wiring with the bit-1 variant.
    """
    width = family_map.width
    k = width - 1
    if r.width != k:
        raise ValueError(f"random part must have width {k}, got {r.width}")
    if logical_bit not in (0, 1):
        raise ValueError(f"logical bit must be 0 or 1, got {logical_bit!r}")
    names = element_names(width)

    cmds: list = [
        ElementCmd(Element(GO, 1, 0, ElementKind.RANDOM)),
        ElementCmd(Element(BIT_IN, 1, 0, ElementKind.RANDOM)),
        ElementCmd(Element(BIT_OUT, 1, 0, ElementKind.COMPUTING)),
    ]
    cmds.extend(
        ElementCmd(Element(n, 1, 0, ElementKind.RANDOM)) for n in names.randoms
    )
    cmds.extend(
        ElementCmd(Element(n, 1, 0, ElementKind.COMPUTING)) for n in names.outputs
    )

    cmds.append(FireCmd(GO, base_tick))
    for i in range(k):
        if r.bit(i):
            cmds.append(FireCmd(names.randoms[i], base_tick))
    if logical_bit:
        cmds.append(FireCmd(BIT_IN, base_tick))

    if isinstance(family_map, XorFamily):
        cmds.append(
            MetaCmd(
                MetaKind.CONNECTIONS,
                GO,
                _mask_wiring(names, family_map.mask0, family_map.flip),
            )
        )
        cmds.append(
            MetaCmd(
                MetaKind.CONNECTIONS,
                BIT_IN,
                _mask_wiring(names, family_map.mask1, family_map.flip),
            )
        )
    else:
        value = family_map.apply(r.concat(BitVec(1, logical_bit)))
        cmds.append(MetaCmd(MetaKind.CONNECTIONS, GO, _value_wiring(names, value)))
        # clear any bit-1 override a previous epoch may have installed
        cmds.append(MetaCmd(MetaKind.CONNECTIONS, BIT_IN, ()))

    cmds.append(
        MetaCmd(
            MetaKind.ELEMENTS,
            GO,
            tuple(
                ElementCmd(Element(n, 1, 0, ElementKind.COMPUTING))
                for n in (*names.outputs, BIT_OUT)
            ),
        )
    )
    return AemProgram(tuple(cmds))


def readout_physical(trace: FiringTrace, base_tick: int, width: int) -> BitVec:
    """Reassemble the physical word from the epoch's readout tick."""
    fired = trace[base_tick + EPOCH_TICKS - 1]
    names = element_names(width)
    value = 0
    for i, dn in enumerate(names.outputs):
        if dn in fired:
            value |= 1 << i
    if BIT_OUT in fired:
        value |= 1 << (width - 1)
    return BitVec(width, value)


# ---------------------------------------------------------------------------
# whole runs driven by a tape machine


@dataclass(frozen=True)
class RealizationMismatch:
    step: int
    state: tuple
    expected: BitVec
    got: BitVec


@dataclass(frozen=True)
class UtmRunReport:
    requested_steps: int
    effective_steps: int
    violations: tuple
    observables: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def distinct_observables(self) -> int:
        return len(set(self.observables))

    def to_text(self) -> str:
        lines = [
            f"steps={self.effective_steps}/{self.requested_steps}",
            f"violations={len(self.violations)}",
            f"distinct_observables={self.distinct_observables}",
        ]
        for v in self.violations:
            lines.append(
                f"step={v.step} state={v.state!r} "
                f"expected={v.expected} got={v.got}"
            )
        return "".join(line + "\n" for line in lines)


def run_utm_realization(
    program: TmProgram,
    dls,
    initial: TmConfig,
    steps: int,
    source=None,
    bit_fn=None,
):
    """Run a tape machine and realize every step on one firing machine.

    Step j occupies the epoch at base tick 3j.  For each step the logical
    bit comes from `bit_fn` on the packed (state, symbol) instruction
    (default: the high write-symbol transition component), the engine
    draws the random part, and the machine's readout is checked against
    the engine's physical word.  A machine that halts early simply yields
    a shorter run; the report records both step counts.

    Returns (trace, report).
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if source is not None:
        dls = replace(dls, source=source)
    if bit_fn is None:
        bit_fn = transition_components(program)[3]
    pairs = instruction_trace(program, initial, steps)

    machine = Machine()
    mask = (1 << (dls.width - 1)) - 1
    observables = []
    violations = []
    for j, pair in enumerate(pairs):
        bit = bit_fn(BitVec(5, instruction_index(*pair)))
        real = dls.realize(j, bit)
        if real.state != pair:
            raise ValueError(
                f"scheduler produced {real.state!r} at step {j} but the "
                f"machine trace has {pair!r}; drive both from the same run"
            )
        base = EPOCH_TICKS * j
        machine.apply(compile_step(pair, dls.map_for(pair), real.random_part, bit, base))
        machine.run_until(base + EPOCH_TICKS - 1)
        got = readout_physical(machine.trace, base, dls.width)
        _, decoded_bit = dls.decode(got, pair)
        if got != real.physical or decoded_bit != bit:
            violations.append(RealizationMismatch(j, pair, real.physical, got))
        observables.append(got.value & mask)

    report = UtmRunReport(
        requested_steps=steps,
        effective_steps=len(pairs),
        violations=tuple(violations),
        observables=tuple(observables),
    )
    return machine.trace, report
