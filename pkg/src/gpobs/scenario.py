"""Line-oriented scenario files.

A scenario is a sequence of ``[section]`` headers, ``key = numbers`` lines and
matrix blocks introduced by ``key:`` whose rows follow on indented lines.
``#`` starts a comment. See ``docs/formats.md`` for the full grammar.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GpobsError, ScenarioError
from .plant import AgentBlock, IntervalVector, PlantModel, PrivacyBudget, assemble_global

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 100
DEFAULT_SEED = 0

_VECTOR_KEYS = ("x0_lo", "x0_hi", "w_lo", "w_hi", "v_lo", "v_hi")
_MATRIX_KEYS = ("A", "C", "W", "V")


@dataclass(frozen=True)
class RunOptions:
    horizon: int = DEFAULT_HORIZON
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class GainBlock:
    L: np.ndarray
    alpha: float = 1.0


@dataclass
class Scenario:
    plant: PlantModel
    budget: PrivacyBudget | None
    options: RunOptions
    gain: GainBlock | None = None
    mask: np.ndarray | None = None
    name: str = ""
    defaulted: list = field(default_factory=list)


@dataclass
class _Entry:
    line: int
    value: object  # list of float (vector) or ndarray (matrix)
    is_matrix: bool


def _parse_numbers(tokens, lineno, key):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ScenarioError(f"not a number: {exc}", line=lineno, field=key) from None


def parse_sections(text):
    """Parse scenario text into ``[(section, lineno, {key: _Entry})]``."""
    sections = []
    current = None
    matrix_key = None
    rows = []
    matrix_line = 0

    def close_matrix():
        nonlocal matrix_key, rows
        if matrix_key is None:
            return
        if not rows:
            raise ScenarioError("matrix block has no rows", line=matrix_line, field=matrix_key)
        if len({len(r) for r in rows}) != 1:
            raise ScenarioError("matrix rows have different lengths", line=matrix_line, field=matrix_key)
        current[2][matrix_key] = _Entry(matrix_line, np.array(rows, dtype=float), True)
        matrix_key, rows = None, []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if matrix_key is not None and line[0] in " \t":
            rows.append(_parse_numbers(line.split(), lineno, matrix_key))
            continue
        close_matrix()
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ScenarioError("unterminated section header", line=lineno)
            current = (stripped[1:-1].strip(), lineno, {})
            sections.append(current)
            continue
        if current is None:
            raise ScenarioError("content before the first [section]", line=lineno)
        if stripped.endswith(":"):
            matrix_key = " ".join(stripped[:-1].split())
            matrix_line = lineno
            if matrix_key in current[2]:
                raise ScenarioError("duplicate key", line=lineno, field=matrix_key)
            continue
        if "=" not in stripped:
            raise ScenarioError("expected 'key = value' or 'key:'", line=lineno)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key in current[2]:
            raise ScenarioError("duplicate key", line=lineno, field=key)
        if key == "name":
            current[2][key] = _Entry(lineno, value, False)
        else:
            current[2][key] = _Entry(lineno, _parse_numbers(value.split(), lineno, key), False)
    close_matrix()
    return sections


def _scalar(entries, key, section, default=None, required=False):
    if key not in entries:
        if required:
            raise ScenarioError(f"{key} required", field=f"{section}.{key}")
        return default
    e = entries[key]
    if e.is_matrix or len(e.value) != 1:
        raise ScenarioError("expected a single number", line=e.line, field=f"{section}.{key}")
    return e.value[0]


def _matrix(entries, key, section, required=True):
    if key not in entries:
        if required:
            raise ScenarioError(f"{key} required", field=f"{section}.{key}")
        return None
    e = entries[key]
    if e.is_matrix:
        return e.value
    return np.array([e.value], dtype=float)


def _vector(entries, key, section):
    if key not in entries:
        raise ScenarioError(f"{key} required", field=f"{section}.{key}")
    e = entries[key]
    if e.is_matrix:
        raise ScenarioError("expected a vector on one line", line=e.line, field=f"{section}.{key}")
    return np.array(e.value, dtype=float)


def _check_keys(entries, allowed, section):
    for key, e in entries.items():
        if key not in allowed and not (section.startswith("agent") and key.startswith("couple ")):
            raise ScenarioError("unknown key", line=e.line, field=f"{section}.{key}")


def _wrap(section, fn):
    try:
        return fn()
    except ScenarioError:
        raise
    except (GpobsError, ValueError) as exc:
        raise ScenarioError(str(exc), field=section) from None


def _agent(label, entries):
    _check_keys(entries, _MATRIX_KEYS + _VECTOR_KEYS, label)
    couplings = {}
    for key, e in entries.items():
        if key.startswith("couple "):
            try:
                j = int(key.split()[1])
            except (IndexError, ValueError):
                raise ScenarioError("coupling key must be 'couple <agent>'", line=e.line, field=f"{label}.{key}") from None
            couplings[j] = _matrix(entries, key, label)
    kwargs = {k: _matrix(entries, k, label) for k in _MATRIX_KEYS}
    kwargs.update({k: _vector(entries, k, label) for k in _VECTOR_KEYS})
    return _wrap(label, lambda: AgentBlock(couplings=couplings, name=label, **kwargs))


def _blocks(sizes):
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return tuple((int(offs[i]), int(offs[i + 1])) for i in range(len(sizes)))


def scenario_from_text(text, source="<string>") -> Scenario:
    sections = parse_sections(text)
    agents = {}
    plant_entries = None
    budget = None
    run = {}
    gain = None
    mask = None
    name = ""
    seen = set()
    for title, lineno, entries in sections:
        kind = title.split()[0] if title else ""
        if kind == "agent":
            try:
                idx = int(title.split()[1])
            except (IndexError, ValueError):
                raise ScenarioError("agent sections are written [agent <index>]", line=lineno) from None
            if idx in agents:
                raise ScenarioError("duplicate agent section", line=lineno, field=title)
            agents[idx] = _agent(f"agent {idx}", entries)
            continue
        if title in seen:
            raise ScenarioError("duplicate section", line=lineno, field=title)
        seen.add(title)
        if title == "plant":
            plant_entries = entries
        elif title == "privacy":
            _check_keys(entries, ("epsilon", "delta", "rho"), title)
            eps, dlt, rho = (_scalar(entries, k, title, required=True) for k in ("epsilon", "delta", "rho"))
            budget = _wrap(title, lambda: PrivacyBudget(eps, dlt, rho))
        elif title == "run":
            _check_keys(entries, ("horizon", "seed", "name"), title)
            for key in ("horizon", "seed"):
                val = _scalar(entries, key, title)
                if val is not None:
                    if val != int(val) or val < (1 if key == "horizon" else 0):
                        raise ScenarioError("must be a nonnegative integer (horizon >= 1)",
                                            line=entries[key].line, field=f"run.{key}")
                    run[key] = int(val)
            if "name" in entries:
                name = entries["name"].value
        elif title == "gain":
            _check_keys(entries, ("L", "alpha"), title)
            alpha = _scalar(entries, "alpha", title, default=1.0)
            if not alpha > 0:
                raise ScenarioError("alpha must be positive", line=entries["alpha"].line, field="gain.alpha")
            gain = GainBlock(L=_matrix(entries, "L", title), alpha=alpha)
        elif title == "synth":
            _check_keys(entries, ("mask",), title)
            mask = _matrix(entries, "mask", title, required=False)
        else:
            raise ScenarioError("unknown section", line=lineno, field=title)

    if plant_entries is None:
        raise ScenarioError("missing [plant] section (Gamma required)", field="plant")
    gamma = _matrix(plant_entries, "Gamma", "plant")
    if agents:
        _check_keys(plant_entries, ("Gamma",), "plant")
        order = sorted(agents)
        if order != list(range(1, len(order) + 1)):
            raise ScenarioError(f"agent indices must be 1..N, got {order}", field="agent")
        plant = _wrap("plant", lambda: assemble_global([agents[i] for i in order], gamma))
    else:
        _check_keys(plant_entries, ("Gamma",) + _MATRIX_KEYS + _VECTOR_KEYS + ("agent_states", "agent_outputs"), "plant")
        mats = {k: _matrix(plant_entries, k, "plant") for k in _MATRIX_KEYS}
        vecs = {k: _vector(plant_entries, k, "plant") for k in _VECTOR_KEYS}
        blocks = {}
        if "agent_states" in plant_entries:
            blocks["state_blocks"] = _blocks([int(s) for s in _vector(plant_entries, "agent_states", "plant")])
            blocks["output_blocks"] = _blocks([int(s) for s in _vector(plant_entries, "agent_outputs", "plant")])
        plant = _wrap("plant", lambda: PlantModel(
            Gamma=gamma, **mats,
            x0=IntervalVector(vecs["x0_lo"], vecs["x0_hi"]),
            w_bounds=IntervalVector(vecs["w_lo"], vecs["w_hi"]),
            v_bounds=IntervalVector(vecs["v_lo"], vecs["v_hi"]),
            **blocks,
        ))
    if gain is not None and gain.L.shape != (plant.n, plant.m):
        raise ScenarioError(f"gain L has shape {gain.L.shape}, expected {(plant.n, plant.m)}", field="gain.L")
    if mask is not None and mask.shape != (plant.n, plant.m):
        raise ScenarioError(f"mask has shape {mask.shape}, expected {(plant.n, plant.m)}", field="synth.mask")
    defaulted = []
    for key, default in (("horizon", DEFAULT_HORIZON), ("seed", DEFAULT_SEED)):
        if key not in run:
            run[key] = default
            defaulted.append(f"{key} = {default}")
            log.info("%s: defaulting run.%s = %s", source, key, default)
    return Scenario(plant=plant, budget=budget, options=RunOptions(**run), gain=gain,
                    mask=mask, name=name, defaulted=defaulted)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; missing run options get defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    return scenario_from_text(text, source=str(path))


def load_gain(path) -> GainBlock:
    """Read the ``[gain]`` section of a gain or scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read gain file {path}: {exc.strerror}") from None
    for title, lineno, entries in parse_sections(text):
        if title == "gain":
            alpha = _scalar(entries, "alpha", title, default=1.0)
            return GainBlock(L=_matrix(entries, "L", title), alpha=alpha)
    raise ScenarioError(f"{path} has no [gain] section")


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------

def _num(x) -> str:
    # repr() of a float parses back to the identical double
    return repr(float(x))


def _fmt_vector(key, v):
    return f"{key} = " + " ".join(_num(x) for x in np.ravel(v))


def _fmt_matrix(key, M):
    M = np.atleast_2d(M)
    return [f"{key}:"] + ["  " + " ".join(_num(x) for x in row) for row in M]


def gain_lines(L, alpha):
    return ["[gain]", f"alpha = {_num(alpha)}", *_fmt_matrix("L", L)]


def dump_gain(L, alpha, header=()):
    return "\n".join([f"# {h}" for h in header] + gain_lines(L, alpha)) + "\n"


def dump_scenario(scn: Scenario) -> str:
    """Serialise a scenario in global ``[plant]`` form (bit-exact round trip)."""
    p = scn.plant
    out = ["[plant]"]
    for key in _MATRIX_KEYS + ("Gamma",):
        out.extend(_fmt_matrix(key, getattr(p, key)))
    for key, iv in (("x0", p.x0), ("w", p.w_bounds), ("v", p.v_bounds)):
        out.append(_fmt_vector(f"{key}_lo", iv.lo))
        out.append(_fmt_vector(f"{key}_hi", iv.hi))
    out.append(_fmt_vector("agent_states", [b - a for a, b in p.state_blocks]))
    out.append(_fmt_vector("agent_outputs", [b - a for a, b in p.output_blocks]))
    if scn.budget is not None:
        b = scn.budget
        out += ["", "[privacy]", f"epsilon = {_num(b.epsilon)}", f"delta = {_num(b.delta)}", f"rho = {_num(b.rho)}"]
    out += ["", "[run]", f"horizon = {scn.options.horizon}", f"seed = {scn.options.seed}"]
    if scn.name:
        out.append(f"name = {scn.name}")
    if scn.gain is not None:
        out += [""] + gain_lines(scn.gain.L, scn.gain.alpha)
    if scn.mask is not None:
        out += ["", "[synth]", *_fmt_matrix("mask", scn.mask)]
    return "\n".join(out) + "\n"


def bundled_path(name) -> Path:
    """Path of a scenario shipped in ``gpobs/data``."""
    return Path(__file__).with_name("data") / name
