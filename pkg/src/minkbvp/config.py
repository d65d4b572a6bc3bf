"""Problem configuration files.

Format::

    # comment
    bc = neumann
    weight { T = 2; breaks = [1]; values = [1, -10] }
    nonlinearity {
        kind = exp_power
        p = 2
    }
    solver { c_max = 3; n_scan = 600 }
    output { directory = out; samples = 201 }

Entries are separated by newlines or ``;``. Blocks may span several lines.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .nonlinearity import KINDS, Nonlinearity, make_builtin
from .phase_flow import EXTENSIONS
from .shooting import BoundaryCondition, Problem
from .weight import WeightFunction, build_step_weight, load_sampled_weight


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.key = key


@dataclass(frozen=True)
class WeightConfig:
    T: float
    breaks: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    samples_file: str | None = None

    def build(self, base_dir: Path | None = None) -> WeightFunction:
        if self.samples_file is not None:
            path = Path(self.samples_file)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            w = load_sampled_weight(path)
            if abs(w.period_T - self.T) > 1e-12 * max(1.0, self.T):
                raise ConfigError(f"samples_file spans [0, {w.period_T}] but T = {self.T}", key="T")
            return w
        return build_step_weight(self.breaks, self.values, self.T)


@dataclass(frozen=True)
class NonlinearityConfig:
    kind: str
    p: float
    kappa: float | None = None
    lam: float = 1.0

    def build(self) -> Nonlinearity:
        return make_builtin(self.kind, self.p, self.kappa)


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    c_min: float = 1e-3
    c_max: float | None = None
    n_scan: int = 2000
    step: float = 0.02
    sup_ceiling: float = 50.0
    extension: str = "negative_part"


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "."
    samples: int = 201


@dataclass(frozen=True)
class ProblemConfig:
    weight: WeightConfig
    nonlinearity: NonlinearityConfig
    bc: BoundaryCondition = BoundaryCondition.NEUMANN
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str | None = field(default=None, compare=False)

    def build_problem(self, lam: float | None = None, kappa: float | None = None) -> Problem:
        nl = self.nonlinearity
        if kappa is not None:
            nl = dataclasses.replace(nl, kappa=kappa)
        try:
            nonlin = nl.build()
        except ValueError as exc:
            raise ConfigError(str(exc), key="nonlinearity") from None
        base = Path(self.base_dir) if self.base_dir else None
        return Problem(self.weight.build(base), nonlin, self.bc,
                       lam=self.nonlinearity.lam if lam is None else lam,
                       extension=self.solver.extension,
                       rtol=self.solver.rtol, atol=self.solver.atol)

    @property
    def scan(self) -> tuple[float, float, int]:
        c_max = self.solver.c_max if self.solver.c_max is not None else 10.0 + self.weight.T
        return self.solver.c_min, c_max, self.solver.n_scan


# -- parsing -----------------------------------------------------------------------

_BLOCKS = ("weight", "nonlinearity", "solver", "output")
_TOP_KEYS = ("bc",)
_KEYS = {
    "weight": ("T", "breaks", "values", "samples_file"),
    "nonlinearity": ("kind", "p", "kappa", "lambda"),
    "solver": tuple(f.name for f in dataclasses.fields(SolverConfig)),
    "output": ("directory", "samples"),
}
_OPEN = re.compile(r"^([A-Za-z_]\w*)\s*\{(.*)$")
_ENTRY = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.+)$")


def _entries(text: str):
    """Yield (line, block or None, key, raw value)."""
    block = None
    block_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        while line:
            if block is None:
                m = _OPEN.match(line)
                if m:
                    block, block_line = m.group(1), lineno
                    if block not in _BLOCKS:
                        raise ConfigError(f"unknown block {block!r}", lineno, block)
                    line = m.group(2).strip()
                    continue
            if block is not None and line.startswith("}"):
                block = None
                line = line[1:].lstrip(" ;")
                continue
            # one entry, up to ';' or a closing brace (brackets never contain either)
            cut = len(line)
            for sep in (";", "}"):
                k = line.find(sep)
                if k != -1:
                    cut = min(cut, k)
            item, line = line[:cut].strip(), line[cut:]
            if line.startswith(";"):
                line = line[1:].strip()
            if not item:
                continue
            m = _ENTRY.match(item)
            if not m:
                raise ConfigError(f"cannot parse {item!r}; expected key = value", lineno)
            yield lineno, block, m.group(1), m.group(2).strip()
    if block is not None:
        raise ConfigError(f"block {block!r} is not closed", block_line, block)


def _number(raw: str, key: str, line: int) -> float:
    try:
        x = float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}", line, key) from None
    if not math.isfinite(x):
        raise ConfigError(f"{key} must be finite", line, key)
    return x


def _integer(raw: str, key: str, line: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}", line, key) from None


def _list(raw: str, key: str, line: int) -> tuple[float, ...]:
    if not (raw.startswith("[") and raw.endswith("]")):
        raise ConfigError(f"{key} must be a list like [1, 2]", line, key)
    body = raw[1:-1].strip()
    if not body:
        return ()
    return tuple(_number(x.strip(), key, line) for x in body.split(","))


def parse_config(text: str, base_dir: str | Path | None = None) -> ProblemConfig:
    """Parse and validate a configuration; errors name the key and line."""
    seen: dict[tuple, tuple[int, str]] = {}
    blocks_seen: dict[str, int] = {}
    for lineno, block, key, raw in _entries(text):
        if block is None:
            if key not in _TOP_KEYS:
                raise ConfigError(f"unknown key {key!r}", lineno, key)
        elif key not in _KEYS[block]:
            raise ConfigError(f"unknown key {key!r} in block {block!r}", lineno, key)
        if (block, key) in seen:
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        seen[(block, key)] = (lineno, raw)
        if block is not None:
            blocks_seen.setdefault(block, lineno)

    def get(block, key):
        return seen.get((block, key), (None, None))

    for name in ("weight", "nonlinearity"):
        if name not in blocks_seen:
            raise ConfigError(f"missing block {name!r}", None, name)

    # weight
    ln, raw = get("weight", "T")
    if raw is None:
        raise ConfigError("weight block needs T", blocks_seen["weight"], "T")
    T = _number(raw, "T", ln)
    if T <= 0:
        raise ConfigError("T must be positive", ln, "T")
    ln_f, samples_file = get("weight", "samples_file")
    ln_b, raw_b = get("weight", "breaks")
    ln_v, raw_v = get("weight", "values")
    if samples_file is not None:
        if raw_b is not None or raw_v is not None:
            raise ConfigError("give either samples_file or breaks/values", ln_f, "samples_file")
        path = Path(samples_file)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError(f"samples_file {samples_file!r} does not exist", ln_f, "samples_file")
        weight = WeightConfig(T, samples_file=samples_file)
    else:
        breaks = _list(raw_b, "breaks", ln_b) if raw_b is not None else ()
        if raw_v is None:
            raise ConfigError("weight block needs values", blocks_seen["weight"], "values")
        values = _list(raw_v, "values", ln_v)
        if len(values) != len(breaks) + 1:
            raise ConfigError(f"values needs {len(breaks) + 1} entries for {len(breaks)} breaks",
                              ln_v, "values")
        edges = (0.0, *breaks, T)
        if any(not a < b for a, b in zip(edges, edges[1:])):
            raise ConfigError("breaks must increase strictly inside (0, T)", ln_b, "breaks")
        weight = WeightConfig(T, breaks, values)

    # nonlinearity
    ln, kind = get("nonlinearity", "kind")
    if kind is None:
        raise ConfigError("nonlinearity block needs kind", blocks_seen["nonlinearity"], "kind")
    if kind not in KINDS or kind == "custom":
        raise ConfigError(f"kind must be one of power, exp_power, power_exp; got {kind!r}", ln, "kind")
    ln, raw = get("nonlinearity", "p")
    if raw is None:
        raise ConfigError("nonlinearity block needs p", blocks_seen["nonlinearity"], "p")
    p = _number(raw, "p", ln)
    if p <= 1:
        raise ConfigError("p must exceed 1", ln, "p")
    ln, raw = get("nonlinearity", "kappa")
    kappa = None if raw is None else _number(raw, "kappa", ln)
    if kind == "power_exp" and kappa is None:
        raise ConfigError("power_exp needs kappa", blocks_seen["nonlinearity"], "kappa")
    if kappa is not None and kappa <= 0:
        raise ConfigError("kappa must be positive", ln, "kappa")
    ln, raw = get("nonlinearity", "lambda")
    lam = 1.0 if raw is None else _number(raw, "lambda", ln)
    if lam <= 0:
        raise ConfigError("lambda must be positive", ln, "lambda")
    nonlin = NonlinearityConfig(kind, p, kappa, lam)

    ln, raw = get(None, "bc")
    try:
        bc = BoundaryCondition.NEUMANN if raw is None else BoundaryCondition.parse(raw)
    except ValueError as exc:
        raise ConfigError(str(exc), ln, "bc") from None

    solver_kw = {}
    for f in dataclasses.fields(SolverConfig):
        ln, raw = get("solver", f.name)
        if raw is None:
            continue
        if f.name == "extension":
            if raw not in EXTENSIONS:
                raise ConfigError(f"extension must be one of {', '.join(EXTENSIONS)}", ln, f.name)
            solver_kw[f.name] = raw
        elif f.name == "n_scan":
            solver_kw[f.name] = _integer(raw, f.name, ln)
        else:
            solver_kw[f.name] = _number(raw, f.name, ln)
    solver = SolverConfig(**solver_kw)
    checks = [("rtol", solver.rtol > 0), ("atol", solver.atol > 0), ("c_min", solver.c_min > 0),
              ("n_scan", solver.n_scan >= 2), ("step", solver.step > 0),
              ("sup_ceiling", solver.sup_ceiling > 0),
              ("c_max", solver.c_max is None or solver.c_max > solver.c_min)]
    for key, ok in checks:
        if not ok:
            raise ConfigError(f"{key} out of range", get("solver", key)[0], key)

    out_kw = {}
    ln, raw = get("output", "directory")
    if raw is not None:
        out_kw["directory"] = raw
    ln, raw = get("output", "samples")
    if raw is not None:
        out_kw["samples"] = _integer(raw, "samples", ln)
        if out_kw["samples"] < 2:
            raise ConfigError("samples must be at least 2", ln, "samples")
    output = OutputConfig(**out_kw)

    return ProblemConfig(weight, nonlin, bc, solver, output,
                         str(base_dir) if base_dir is not None else None)


def load_config(path: str | Path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def serialize(cfg: ProblemConfig) -> str:
    """Text that parses back to an equal configuration."""
    lines = [f"bc = {cfg.bc.value}", "weight {", f"    T = {_fmt(cfg.weight.T)}"]
    if cfg.weight.samples_file is not None:
        lines.append(f"    samples_file = {cfg.weight.samples_file}")
    else:
        lines.append(f"    breaks = [{', '.join(_fmt(b) for b in cfg.weight.breaks)}]")
        lines.append(f"    values = [{', '.join(_fmt(v) for v in cfg.weight.values)}]")
    lines += ["}", "nonlinearity {", f"    kind = {cfg.nonlinearity.kind}",
              f"    p = {_fmt(cfg.nonlinearity.p)}"]
    if cfg.nonlinearity.kappa is not None:
        lines.append(f"    kappa = {_fmt(cfg.nonlinearity.kappa)}")
    lines += [f"    lambda = {_fmt(cfg.nonlinearity.lam)}", "}", "solver {"]
    for f in dataclasses.fields(SolverConfig):
        val = getattr(cfg.solver, f.name)
        if val is not None:
            lines.append(f"    {f.name} = {_fmt(val)}")
    lines += ["}", "output {", f"    directory = {cfg.output.directory}",
              f"    samples = {cfg.output.samples}", "}"]
    return "\n".join(lines) + "\n"
