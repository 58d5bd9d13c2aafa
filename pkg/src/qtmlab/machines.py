"""Machine definitions: grammar, validation, configuration spaces.

Machine documents are line oriented:

    machine <name>
    tapes <n>
    window <n>
    states <s1> <s2> ...
    start <s>
    final <s>
    rule <q> <syms> -> <q'> <syms'> <moves> <re> <im>

Symbols come from {0, 1, #}; <syms> and <moves> have one character per tape
(moves from {L, R}); amplitudes are rational `p/q` / integer tokens (exact)
or decimals (float intent).  Blank lines and lines starting with `//` are
ignored; `#` cannot introduce comments because it is a tape symbol.

Tape convention: tape 0 carries the input; the output is read from tape 0
for single-tape machines and tape 1 otherwise.  Heads start at the origin.
The final state may not be the source of any rule (the evolution builder
completes it with the revival permutation, see evolution module).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .exactnum import AmplitudeSyntaxError, ExactComplex, parse_rational_token

SYMBOLS = "01#"
SYMBOL_DIGIT = {"0": 0, "1": 1, "#": 2}
DIGIT_SYMBOL = {v: k for k, v in SYMBOL_DIGIT.items()}


class MachineSyntaxError(ValueError):
    """Parse failure; carries the offending 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class MachineValidationError(ValueError):
    """Structurally valid document violating a machine invariant."""


@dataclass(frozen=True)
class Rule:
    source: str
    reads: str
    target: str
    writes: str
    moves: str
    amp: ExactComplex
    declared_exact: bool
    line: int

    def key(self) -> tuple:
        return (self.source, self.reads, self.target, self.writes, self.moves)


@dataclass(frozen=True)
class QTMDef:
    """Validated machine definition."""

    name: str
    states: tuple[str, ...]
    tapes: int
    window: int
    start: str
    final: str
    rules: tuple[Rule, ...]
    source_path: Optional[str] = None

    @property
    def is_exact(self) -> bool:
        return all(r.declared_exact for r in self.rules)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, name: str) -> int:
        return self.states.index(name)

    def read_code(self, reads: str) -> int:
        return sum(SYMBOL_DIGIT[reads[t]] * 3**t for t in range(self.tapes))

    def rule_groups(self) -> dict[tuple[int, int], list[Rule]]:
        """Rules grouped by (source state index, read code)."""
        groups: dict[tuple[int, int], list[Rule]] = {}
        for r in self.rules:
            key = (self.state_index(r.source), self.read_code(r.reads))
            groups.setdefault(key, []).append(r)
        return groups

    def rule_table(self):
        """Flat arrays for the assembly kernels (see _core.fallback)."""
        n_groups = self.n_states * 3**self.tapes
        groups = self.rule_groups()
        offsets = np.zeros(n_groups + 1, dtype=np.int64)
        rule_q: list[int] = []
        rule_write: list[int] = []
        rule_move: list[int] = []
        rule_amp: list[complex] = []
        for g in range(n_groups):
            q, rc = divmod(g, 3**self.tapes)
            for r in groups.get((q, rc), ()):
                if r.amp.is_zero():
                    continue
                rule_q.append(self.state_index(r.target))
                rule_write.append(
                    sum(SYMBOL_DIGIT[r.writes[t]] * 3**t for t in range(self.tapes))
                )
                rule_move.append(
                    sum((1 << t) for t in range(self.tapes) if r.moves[t] == "R")
                )
                rule_amp.append(r.amp.shadow)
            offsets[g + 1] = len(rule_q)
        return (
            offsets,
            np.asarray(rule_q, dtype=np.int64),
            np.asarray(rule_write, dtype=np.int64),
            np.asarray(rule_move, dtype=np.int64),
            np.asarray(rule_amp, dtype=np.complex128),
        )


def parse_machine(text: str, source_path: Optional[str] = None) -> QTMDef:
    """Parse and validate a machine document."""
    header: dict[str, object] = {}
    rules: list[Rule] = []
    seen_rule_keys: dict[tuple, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        parts = line.split()
        kw = parts[0]
        if kw == "machine":
            if len(parts) != 2:
                raise MachineSyntaxError("machine takes one name", lineno)
            header["name"] = parts[1]
        elif kw in ("tapes", "window"):
            if len(parts) != 2:
                raise MachineSyntaxError(f"{kw} takes one integer", lineno)
            try:
                header[kw] = int(parts[1])
            except ValueError:
                raise MachineSyntaxError(f"bad integer {parts[1]!r}", lineno)
        elif kw == "states":
            if len(parts) < 2:
                raise MachineSyntaxError("states needs at least one name", lineno)
            header["states"] = tuple(parts[1:])
        elif kw in ("start", "final"):
            if len(parts) != 2:
                raise MachineSyntaxError(f"{kw} takes one state name", lineno)
            header[kw] = parts[1]
        elif kw == "rule":
            if "tapes" not in header or "states" not in header:
                raise MachineSyntaxError("rule before tapes/states headers", lineno)
            if len(parts) != 9 or parts[3] != "->":
                raise MachineSyntaxError(
                    "rule format: rule <q> <syms> -> <q'> <syms'> <moves> <re> <im>",
                    lineno,
                )
            tapes = int(header["tapes"])
            _, src, reads, _, tgt, writes, moves, re_tok, im_tok = parts
            states = header["states"]
            for nm in (src, tgt):
                if nm not in states:
                    raise MachineSyntaxError(f"unknown state {nm!r}", lineno)
            for label, syms in (("read", reads), ("write", writes)):
                if len(syms) != tapes or any(c not in SYMBOLS for c in syms):
                    raise MachineSyntaxError(
                        f"{label} symbols {syms!r} must be {tapes} of {SYMBOLS!r}", lineno
                    )
            if len(moves) != tapes or any(c not in "LR" for c in moves):
                raise MachineSyntaxError(f"moves {moves!r} must be {tapes} of LR", lineno)
            try:
                re_v, re_exact = parse_rational_token(re_tok)
                im_v, im_exact = parse_rational_token(im_tok)
            except AmplitudeSyntaxError as exc:
                raise MachineSyntaxError(str(exc), lineno)
            rule = Rule(
                source=src,
                reads=reads,
                target=tgt,
                writes=writes,
                moves=moves,
                amp=ExactComplex(re_v, im_v),
                declared_exact=re_exact and im_exact,
                line=lineno,
            )
            prev = seen_rule_keys.get(rule.key())
            if prev is not None:
                raise MachineSyntaxError(
                    f"duplicate rule (first at line {prev})", lineno
                )
            seen_rule_keys[rule.key()] = lineno
            rules.append(rule)
        else:
            raise MachineSyntaxError(f"unknown keyword {kw!r}", lineno)

    for req in ("name", "tapes", "window", "states", "start", "final"):
        if req not in header and req != "name":
            raise MachineSyntaxError(f"missing {req} header")
    name = str(header.get("name", "anonymous"))
    tapes = int(header["tapes"])
    window = int(header["window"])
    states = header["states"]
    start = str(header["start"])
    final = str(header["final"])

    if tapes not in (1, 2, 3):
        raise MachineValidationError(f"tapes must be 1..3, got {tapes}")
    if window < 2:
        raise MachineValidationError(f"window must be >= 2, got {window}")
    if len(set(states)) != len(states):
        raise MachineValidationError("duplicate state names")
    for nm in (start, final):
        if nm not in states:
            raise MachineValidationError(f"unknown state {nm!r}")
    if start == final:
        raise MachineValidationError("start and final state must differ")
    for r in rules:
        if r.source == final:
            raise MachineValidationError(
                f"line {r.line}: rule out of final state {final!r} (final is reserved)"
            )

    return QTMDef(
        name=name,
        states=tuple(states),
        tapes=tapes,
        window=window,
        start=start,
        final=final,
        rules=tuple(rules),
        source_path=source_path,
    )


def load_machine(path) -> QTMDef:
    p = Path(path)
    return parse_machine(p.read_text(), source_path=str(p))


def corpus_dir() -> Path:
    return Path(str(resources.files("qtmlab") / "corpus"))


def corpus_path(name: str) -> Path:
    if "." not in name:
        name += ".qtm"
    return corpus_dir() / name


def load_corpus_machine(name: str) -> QTMDef:
    return load_machine(corpus_path(name))


CORPUS_MACHINES = ("id1", "copy1", "branch1", "nohalt1", "mz1", "tri1")


class ConfigSpace:
    """Looped-window configuration space of a machine.

    Per-tape block size B = 3^W * W (content times head position); total
    dimension n_states * B^tapes with the control state as the slowest
    index, so each state's configurations form one contiguous slice.
    """

    def __init__(self, machine: QTMDef, window: Optional[int] = None):
        self.machine = machine
        self.window = int(window) if window is not None else machine.window
        if self.window < 2:
            raise MachineValidationError(f"window must be >= 2, got {self.window}")
        self.tapes = machine.tapes
        self.n_states = machine.n_states
        self.block = 3**self.window * self.window
        self.dim = self.n_states * self.block**self.tapes
        self.final_index = machine.state_index(machine.final)
        self.start_index = machine.state_index(machine.start)
        self.out_tape = 0 if machine.tapes == 1 else 1
        self._pow3 = [3**i for i in range(self.window + 1)]
        self.blank_content = sum(2 * self._pow3[i] for i in range(self.window))

    def __repr__(self):
        return (
            f"ConfigSpace({self.machine.name}, window={self.window}, dim={self.dim})"
        )

    def encode(self, state: int, contents, heads) -> int:
        idx = state
        for t in range(self.tapes):
            idx = idx * self.block + contents[t] * self.window + heads[t]
        return idx

    def decode(self, index: int):
        codes = []
        rem = index
        for _ in range(self.tapes):
            codes.append(rem % self.block)
            rem //= self.block
        codes.reverse()
        contents = tuple(c // self.window for c in codes)
        heads = tuple(c % self.window for c in codes)
        return rem, contents, heads

    def tape_string(self, content: int) -> str:
        digits = []
        for i in range(self.window):
            digits.append(DIGIT_SYMBOL[content % 3])
            content //= 3
        return "".join(digits)

    def describe(self, index: int) -> str:
        state, contents, heads = self.decode(index)
        tapes = ", ".join(
            f"tape{t}='{self.tape_string(contents[t])}'@{heads[t]}"
            for t in range(self.tapes)
        )
        return f"state={self.machine.states[state]}, {tapes}"

    @property
    def final_slice(self) -> slice:
        per_state = self.block**self.tapes
        return slice(self.final_index * per_state, (self.final_index + 1) * per_state)

    def input_content(self, bits: str) -> int:
        """Tape content for `bits` at the origin followed by blanks."""
        if len(bits) > self.window:
            raise ValueError(f"input length {len(bits)} exceeds window {self.window}")
        content = self.blank_content
        for i, c in enumerate(bits):
            content += (SYMBOL_DIGIT[c] - 2) * self._pow3[i]
        return content

    def embed_indices(self, k: int, aux: Optional[str] = None) -> np.ndarray:
        """Config index of each Q_k basis string (MSB of the string at cell 0).

        `aux` is a classical parameter string; with three or more tapes it is
        written on the last tape, otherwise carrying it is a no-op (the
        parameter is then part of the run configuration, not the tape)."""
        if k > self.window:
            raise ValueError(f"k={k} exceeds window {self.window}")
        out = np.empty(1 << k, dtype=np.int64)
        blank = self.blank_content
        aux_content = blank
        if aux and self.tapes >= 3:
            aux_content = self.input_content(aux)
        for b in range(1 << k):
            bits = format(b, f"0{k}b") if k else ""
            contents = [blank] * self.tapes
            contents[0] = self.input_content(bits)
            if self.tapes >= 3:
                contents[-1] = aux_content
            out[b] = self.encode(self.start_index, contents, [0] * self.tapes)
        return out
