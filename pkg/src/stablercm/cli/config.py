"""Experiment configuration: a flat INI file with dotted section names.

Every value is a JSON literal (numbers, strings in double quotes, lists,
``null``); bare words are read as strings.  Unknown sections or keys are
errors.  Example::

    [experiment]
    kind = "homogenization-rate"

    [model]
    d = 1
    alpha = 1.5

    [environment.marginal]
    kind = "uniform02"

    [run]
    seeds = [0, 1, 2, 3]

Times are in the units of the unscaled environment clock; lengths of the box
(``lattice.R``) are in continuum units, so the lattice ``k^{-1} Z^d`` has
``2 R k`` sites per axis.
"""

from __future__ import annotations

import configparser
import copy
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..environment import EnvironmentSpec, MarginalLaw, MeanProfile
from ..errors import ConfigurationError
from ..solver import SolveParams

EXPERIMENT_KINDS = {
    "homogenization-rate": "sup_t ||u_k - ubar||_L2 against k over seeds, with rate fit",
    "corrector-scaling": "normalized corrector energy Q(m) on dyadic boxes",
    "operator-gaps": "deterministic and random operator gaps against k",
    "poincare-suite": "good-vertex fractions, Poincare and multi-scale constants",
    "cutoff-lemma": "cutoff gap G(R) against R for a decaying profile",
    "time-change-check": "u_k(t) against the time-changed solution v_k(a_k(t))",
}

_INF = float("inf")

# section -> key -> default; ``...`` marks a required key
SCHEMA: dict[str, dict[str, Any]] = {
    "experiment": {"kind": ..., "name": None},
    "model": {"d": 1, "alpha": ..., "T": 1.0, "beta": "inf"},
    "environment": {"kind": "piecewise-linear", "split": 0.5},
    "environment.marginal": {"kind": "uniform02", "q": 0.0, "lo": 0.5, "hi": 2.0},
    "environment.profile": {"kind": "constant", "K": 1.0, "A": 0.0, "rho": 1.0},
    "lattice": {"R": 4.0, "k_list": [8, 16, 32, 64], "mode": "periodic"},
    "solver": {"cfl_fraction": 0.5, "n_snapshots": 32, "scheme": "euler", "dt_override": None, "limit_steps": 8},
    "source": {"kind": "duhamel-cutoff", "g_radius": 1.0, "cutoff_n": 1.0},
    "corrector": {"m_list": [3, 4, 5], "drift_radius": None},
    "gaps": {"L": 16.0, "f_radius": 3.0, "random_L": 8.0, "nodes": 64},
    "cutoff": {"R_list": [4, 8, 16, 32], "h": 0.125, "L_factor": 32.0, "profile": "modulated-decay",
               "frequency": 1.0},
    "poincare": {"r_list": [8, 16, 32, 64], "m_list": [4, 5, 6, 7], "n": 1, "draws": 20, "delta": 0.5,
                 "vertex_radii": [16, 32, 64], "vertex_samples": 100},
    "run": {"seeds": [0], "threads": 1, "out": "results"},
}


def _is_dyadic(k: int) -> bool:
    return isinstance(k, int) and k >= 1 and (k & (k - 1)) == 0


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


@dataclass
class ExperimentConfig:
    """Validated experiment configuration with every default resolved."""

    kind: str
    values: dict[str, dict[str, Any]]
    source: str | None = None
    notes: list[str] = field(default_factory=list)

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    # -- typed views -------------------------------------------------------
    @property
    def d(self) -> int:
        return self.values["model"]["d"]

    @property
    def alpha(self) -> float:
        return self.values["model"]["alpha"]

    @property
    def T(self) -> float:
        return self.values["model"]["T"]

    @property
    def beta(self) -> float:
        return self.values["model"]["beta"]

    @property
    def seeds(self) -> list[int]:
        return list(self.values["run"]["seeds"])

    @property
    def k_list(self) -> list[int]:
        return list(self.values["lattice"]["k_list"])

    @property
    def threads(self) -> int:
        return self.values["run"]["threads"]

    @property
    def out(self) -> str:
        return self.values["run"]["out"]

    def solve_params(self, T: float | None = None) -> SolveParams:
        s = self.values["solver"]
        return SolveParams(
            T=self.T if T is None else T, cfl_fraction=s["cfl_fraction"], n_snapshots=s["n_snapshots"],
            scheme=s["scheme"], dt_override=s["dt_override"], limit_steps=s["limit_steps"],
        )

    def environment_spec(self, seed: int) -> EnvironmentSpec:
        e = self.values["environment"]
        m = self.values["environment.marginal"]
        p = self.values["environment.profile"]
        return EnvironmentSpec(
            kind=e["kind"],
            marginal=MarginalLaw(kind=m["kind"], q=m["q"], lo=m["lo"], hi=m["hi"]),
            profile=MeanProfile(kind=p["kind"], K=p["K"], A=p["A"], rho=p["rho"]),
            seed=seed,
            split=e["split"],
        )

    def profile(self) -> MeanProfile:
        p = self.values["environment.profile"]
        return MeanProfile(kind=p["kind"], K=p["K"], A=p["A"], rho=p["rho"])

    def with_overrides(self, *, threads: int | None = None, out: str | None = None,
                       seed_offset: int = 0) -> "ExperimentConfig":
        values = copy.deepcopy(self.values)
        if threads is not None:
            values["run"]["threads"] = threads
        if out is not None:
            values["run"]["out"] = out
        if seed_offset:
            values["run"]["seeds"] = [s + seed_offset for s in values["run"]["seeds"]]
        with warnings.catch_warnings():
            # the notes were already raised when the file was parsed
            warnings.simplefilter("ignore", UserWarning)
            return validate(values, source=self.source)

    def echo(self) -> dict[str, Any]:
        """Resolved configuration, JSON-safe (infinite beta is written as the string ``inf``)."""
        out = copy.deepcopy(self.values)
        if math.isinf(out["model"]["beta"]):
            out["model"]["beta"] = "inf"
        return out

    def to_text(self) -> str:
        """Round-trippable config text for the resolved values."""
        lines = []
        for section, body in self.echo().items():
            lines.append(f"[{section}]")
            for key, value in body.items():
                lines.append(f"{key} = {json.dumps(value)}")
            lines.append("")
        return "\n".join(lines)


def _require(cond: bool, field_name: str, message: str):
    if not cond:
        raise ConfigurationError(f"{field_name}: {message}")


def _number(values, section, key, *, integer=False, positive=False, allow_none=False):
    v = values[section][key]
    name = f"{section}.{key}"
    if v is None and allow_none:
        return
    if integer:
        _require(isinstance(v, int) and not isinstance(v, bool), name, f"expected an integer, got {v!r}")
    else:
        _require(isinstance(v, (int, float)) and not isinstance(v, bool), name, f"expected a number, got {v!r}")
        values[section][key] = float(v)
    if positive:
        _require(values[section][key] > 0, name, f"must be positive, got {v!r}")


def _int_list(values, section, key, *, dyadic=False, distinct=False, sorted_=False, min_len=1):
    v = values[section][key]
    name = f"{section}.{key}"
    _require(isinstance(v, list) and len(v) >= min_len, name, f"expected a list of at least {min_len} integers")
    _require(all(isinstance(x, int) and not isinstance(x, bool) for x in v), name, f"entries must be integers: {v}")
    if dyadic:
        _require(all(_is_dyadic(x) for x in v), name, f"entries must be powers of two: {v}")
    if distinct:
        _require(len(set(v)) == len(v), name, f"entries must be distinct: {v}")
    if sorted_:
        _require(all(a < b for a, b in zip(v, v[1:])), name, f"entries must be strictly increasing: {v}")


def validate(raw: dict[str, dict[str, Any]], source: str | None = None) -> ExperimentConfig:
    """Fill defaults, type-check and validate a section dictionary."""
    values: dict[str, dict[str, Any]] = {}
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown section [{section}]; known sections: {sorted(SCHEMA)}")
        for key in body:
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"unknown key {section}.{key}; known keys: {sorted(SCHEMA[section])}")
    for section, defaults in SCHEMA.items():
        body = dict(raw.get(section, {}))
        for key, default in defaults.items():
            if key not in body:
                if default is ...:
                    raise ConfigurationError(f"{section}.{key}: required key is missing")
                body[key] = copy.deepcopy(default)
        values[section] = body

    kind = values["experiment"]["kind"]
    _require(kind in EXPERIMENT_KINDS, "experiment.kind", f"unknown kind {kind!r}; expected one of {list(EXPERIMENT_KINDS)}")

    m = values["model"]
    _number(values, "model", "d", integer=True)
    _require(1 <= m["d"] <= 3, "model.d", f"dimension must be 1, 2 or 3, got {m['d']}")
    _number(values, "model", "alpha")
    _require(0.0 < m["alpha"] < 2.0, "model.alpha", f"must lie in (0, 2), got {m['alpha']}")
    _require(m["alpha"] != m["d"], "model.alpha",
             f"alpha={m['alpha']} equals d={m['d']}; the convergence theory needs d > alpha")
    notes = []
    if m["d"] < m["alpha"]:
        msg = f"d={m['d']} < alpha={m['alpha']}: outside the hypothesis d > alpha of the convergence theorem"
        warnings.warn(msg, UserWarning, stacklevel=3)
        notes.append(msg)
    _number(values, "model", "T", positive=True)
    beta = m["beta"]
    if isinstance(beta, str):
        _require(beta.lower() in ("inf", "infinity"), "model.beta", f"expected a positive number or \"inf\", got {beta!r}")
        m["beta"] = _INF
    else:
        _number(values, "model", "beta", positive=True)

    lat = values["lattice"]
    _number(values, "lattice", "R", positive=True)
    _int_list(values, "lattice", "k_list", dyadic=True, sorted_=True)
    _require(lat["mode"] in ("periodic", "regional"), "lattice.mode", f"expected periodic or regional, got {lat['mode']!r}")
    for k in lat["k_list"]:
        n = 2 * lat["R"] * k
        _require(abs(n - round(n)) < 1e-9, "lattice.R", f"2*R*k must be an integer (R={lat['R']}, k={k})")

    s = values["solver"]
    _number(values, "solver", "cfl_fraction", positive=True)
    _require(s["cfl_fraction"] <= 1.0, "solver.cfl_fraction", f"must lie in (0, 1], got {s['cfl_fraction']}")
    _number(values, "solver", "n_snapshots", integer=True, positive=True)
    _require(s["scheme"] in ("euler", "heun"), "solver.scheme", f"expected euler or heun, got {s['scheme']!r}")
    _number(values, "solver", "dt_override", positive=True, allow_none=True)
    _number(values, "solver", "limit_steps", integer=True, positive=True)

    src = values["source"]
    _require(src["kind"] in ("separable", "duhamel-cutoff"), "source.kind", f"unknown source kind {src['kind']!r}")
    _number(values, "source", "g_radius", positive=True)
    _number(values, "source", "cutoff_n", positive=True)

    _int_list(values, "corrector", "m_list", distinct=True, sorted_=True,
              min_len=3 if kind == "corrector-scaling" else 1)
    _number(values, "corrector", "drift_radius", positive=True, allow_none=True)

    for key in ("L", "f_radius", "random_L"):
        _number(values, "gaps", key, positive=True)
    _number(values, "gaps", "nodes", integer=True, positive=True)

    c = values["cutoff"]
    _int_list(values, "cutoff", "R_list", dyadic=True, sorted_=True, min_len=3)
    _require(min(c["R_list"]) >= 1, "cutoff.R_list", "radii must be at least 1")
    for key in ("h", "L_factor", "frequency"):
        _number(values, "cutoff", key, positive=True)
    _require(c["profile"] in ("polynomial-decay", "modulated-decay"), "cutoff.profile",
             f"expected polynomial-decay or modulated-decay, got {c['profile']!r}")
    if kind == "cutoff-lemma":
        _require(math.isfinite(m["beta"]), "model.beta", "the cutoff lemma needs a finite decay index beta")

    p = values["poincare"]
    _int_list(values, "poincare", "r_list", distinct=True, sorted_=True, min_len=2)
    _int_list(values, "poincare", "m_list", distinct=True, sorted_=True, min_len=2)
    _int_list(values, "poincare", "vertex_radii", distinct=True, sorted_=True)
    _number(values, "poincare", "n", integer=True)
    _require(0 <= p["n"] <= min(p["m_list"]), "poincare.n", "need 0 <= n <= min(m_list)")
    _number(values, "poincare", "draws", integer=True, positive=True)
    _number(values, "poincare", "vertex_samples", integer=True, positive=True)
    _number(values, "poincare", "delta", positive=True)

    r = values["run"]
    _int_list(values, "run", "seeds", distinct=True)
    _require(all(x >= 0 for x in r["seeds"]), "run.seeds", f"seeds must be nonnegative: {r['seeds']}")
    _number(values, "run", "threads", integer=True, positive=True)
    _require(isinstance(r["out"], str) and r["out"], "run.out", "expected a directory name")

    cfg = ExperimentConfig(kind=kind, values=values, source=source, notes=notes)
    # build the environment once so inconsistent combinations fail here
    try:
        cfg.environment_spec(r["seeds"][0])
    except ConfigurationError as exc:
        raise ConfigurationError(f"environment: {exc}") from None
    return cfg


def parse_text(text: str, source: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    raw = {sec: {k: _parse_value(v) for k, v in parser[sec].items()} for sec in parser.sections()}
    return validate(raw, source=source)


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    return parse_text(path.read_text(), source=str(path))
