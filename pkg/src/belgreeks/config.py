"""Run configurations: TOML files describing one experiment.

A configuration names a model, a payoff, one or more estimators and a
(paths x steps) schedule. Every block is checked against a fixed set of keys
and every estimator is built (which runs the weight/payoff legality check)
before any path is simulated.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from . import payoffs as pf
from .estimators import FiniteDifferenceGreek, LocalisedGreek, PathwiseGreek, WeightedGreek
from .models import (GBM, Merton, SvjParams, TruncationLevel, make_bachelier_jump_asian,
                     make_exp_levy_asian, make_svj, make_svjj)
from .payoffs import LegalityError
from .stochastic_core import LogNormalReturnMarks, NormalMarks
from .weights import Tempering, make_weight


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key, ``rule`` the violated rule."""

    def __init__(self, field_name: str, rule: str):
        super().__init__(f"{field_name}: {rule}")
        self.field = field_name
        self.rule = rule


# --- schema ------------------------------------------------------------------

_TOP = {"experiment", "model", "payoff", "estimator", "schedule"}
_EXPERIMENT = {"name", "description", "seed", "out", "workers"}
_SCHEDULE = {"paths", "steps"}

_MODEL_KEYS = {
    "gbm": {"s0", "sigma", "r", "coordinates"},
    "merton": {"s0", "sigma", "r", "intensity", "jump_mean", "jump_sd", "coordinates"},
    "svj": {"r", "rho", "kappa", "theta", "eta", "sigma0_sq", "intensity", "jump_mean", "jump_sd",
            "s0", "compensation", "vol_scheme", "truncation"},
    "bachelier_asian": {"sigma", "jump_rate", "s0"},
    "exp_levy_asian": {"beta", "sigma", "s0", "intensity", "jump_mean", "jump_sd", "trunc"},
}
_MODEL_KEYS["svjj"] = _MODEL_KEYS["svj"] | {"gamma"}
_TRUNCATION = {"N", "floor"}

_PAYOFF_KEYS = {
    "european_call": {"strike", "maturity"},
    "european_put": {"strike", "maturity"},
    "double_digital": {"lower", "upper", "maturity"},
    "digital_cliquet": {"lower", "upper", "reset", "maturity"},
    "asian_fixed_strike": {"strike", "maturity"},
}

_ESTIMATOR_KEYS = {
    "weighted": {"family", "tempering", "label"},
    "fd": {"bump", "order", "crn", "label"},
    "pathwise": {"label"},
    "localised": {"family", "smooth_method", "bandwidth", "bump", "label"},
}


def _check_keys(block: dict, allowed: set, where: str):
    if not isinstance(block, dict):
        raise ConfigError(where, "must be a table")
    for key in block:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}", f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"{where}.{key}", "required key is missing")
    return block[key]


def _int_list(value, where):
    vals = [value] if isinstance(value, int) else value
    if not isinstance(vals, list) or not vals or not all(isinstance(v, int) and not isinstance(v, bool)
                                                         for v in vals):
        raise ConfigError(where, "must be a positive integer or a non-empty list of them")
    if any(v <= 0 for v in vals):
        raise ConfigError(where, "values must be positive")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(where, "values must be strictly increasing")
    return tuple(vals)


# --- builders ----------------------------------------------------------------

def build_model(block: dict):
    block = dict(block)
    name = _require(block, "name", "model")
    if name not in _MODEL_KEYS:
        raise ConfigError("model.name", f"unknown model {name!r} (known: {', '.join(sorted(_MODEL_KEYS))})")
    del block["name"]
    _check_keys(block, _MODEL_KEYS[name], "model")
    try:
        if name == "gbm":
            return GBM(**block)
        if name == "merton":
            return Merton(**block)
        if name in ("svj", "svjj"):
            trunc_block = block.pop("truncation", {})
            _check_keys(trunc_block, _TRUNCATION, "model.truncation")
            vol_scheme = block.pop("vol_scheme", "implicit")
            marks = NormalMarks(block.pop("jump_mean", -0.1), block.pop("jump_sd", 0.1))
            params = SvjParams(jump_law=marks, **block)
            trunc = TruncationLevel(**trunc_block)
            build = make_svjj if name == "svjj" else make_svj
            return build(params, trunc, vol_scheme=vol_scheme)
        if name == "bachelier_asian":
            return make_bachelier_jump_asian(block.get("sigma", 1.0), block.get("jump_rate", 0.0),
                                             block.get("s0", 0.0))
        marks = None
        if block.get("intensity", 1.0) > 0:
            marks = LogNormalReturnMarks(block.get("jump_mean", -0.1), block.get("jump_sd", 0.1))
        return make_exp_levy_asian(block.get("beta", 0.0), block.get("sigma", 0.2), marks,
                                   block.get("trunc", 1e-3), block.get("s0", 100.0),
                                   block.get("intensity", 1.0))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from exc


def build_payoff(block: dict):
    block = dict(block)
    kind = _require(block, "kind", "payoff")
    if kind not in _PAYOFF_KEYS:
        raise ConfigError("payoff.kind", f"unknown payoff {kind!r} (known: {', '.join(sorted(_PAYOFF_KEYS))})")
    del block["kind"]
    _check_keys(block, _PAYOFF_KEYS[kind], "payoff")
    T = block.get("maturity", 1.0)
    try:
        if kind in ("european_call", "european_put", "asian_fixed_strike"):
            make = {"european_call": pf.european_call, "european_put": pf.european_put,
                    "asian_fixed_strike": pf.asian_fixed_strike}[kind]
            return make(_require(block, "strike", "payoff"), T)
        lo, hi = _require(block, "lower", "payoff"), _require(block, "upper", "payoff")
        if kind == "double_digital":
            return pf.double_digital(lo, hi, T)
        return pf.digital_cliquet(lo, hi, block.get("reset", 0.5 * T), T)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("payoff", str(exc)) from exc


def _tempering(value, payoff, where):
    if value is None:
        return None
    if value == "minimal":
        return Tempering.minimal(min(payoff.dates))
    if value == "constant":
        return Tempering.constant(payoff.horizon)
    raise ConfigError(where, "tempering must be 'minimal' or 'constant'")


def build_estimator(block: dict, model, payoff, index: int = 0):
    where = f"estimator[{index}]"
    block = dict(block)
    kind = _require(block, "kind", where)
    if kind not in _ESTIMATOR_KEYS:
        raise ConfigError(f"{where}.kind",
                          f"unknown estimator {kind!r} (known: {', '.join(sorted(_ESTIMATOR_KEYS))})")
    del block["kind"]
    _check_keys(block, _ESTIMATOR_KEYS[kind], where)
    try:
        if kind == "weighted":
            family = _require(block, "family", where)
            options = {}
            temp = _tempering(block.get("tempering"), payoff, f"{where}.tempering")
            if temp is not None:
                if family.lower() != "bel_delta":
                    raise ConfigError(f"{where}.tempering", "only the BEL delta weight takes a tempering")
                options["tempering"] = temp
            if family.lower() == "hypoelliptic_closed_form":
                if model.name != "exp_levy_asian":
                    raise ConfigError(f"{where}.family", "the closed-form weight exists only for exp_levy_asian")
            elif family not in model.families:
                raise ConfigError(f"{where}.family",
                                  f"weight family {family} is not valid for model {model.name}")
            return WeightedGreek(model, payoff, make_weight(family, **options))
        if kind == "fd":
            return FiniteDifferenceGreek(model, payoff, block.get("bump", 1e-2), block.get("order", 1),
                                         block.get("crn", True))
        if kind == "pathwise":
            return PathwiseGreek(model, payoff)
        split = None
        if "bandwidth" in block:
            split = pf.localise(payoff, block["bandwidth"])
        return LocalisedGreek(model, payoff, block.get("family"), split, block.get("smooth_method", "pathwise"),
                              block.get("bump", 1e-2))
    except ConfigError:
        raise
    except LegalityError as exc:
        raise ConfigError(f"{where}.family", f"illegal combination: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from exc


# --- the configuration object ------------------------------------------------

@dataclass
class RunConfig:
    name: str
    description: str
    model: object
    payoff: object
    estimators: list
    labels: list
    paths: tuple
    steps: tuple
    seed: int = 0
    out: str | None = None
    workers: int = 1
    source: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        _check_keys(raw, _TOP, "config")
        exp = raw.get("experiment", {})
        _check_keys(exp, _EXPERIMENT, "experiment")
        name = _require(exp, "name", "experiment")
        seed = exp.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError("experiment.seed", "must be an integer in [0, 2^64)")
        workers = exp.get("workers", 1)
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError("experiment.workers", "must be a positive integer")
        sched = raw.get("schedule", {})
        _check_keys(sched, _SCHEDULE, "schedule")
        paths = _int_list(_require(sched, "paths", "schedule"), "schedule.paths")
        steps = _int_list(_require(sched, "steps", "schedule"), "schedule.steps")
        if any(p < 2 for p in paths):
            raise ConfigError("schedule.paths", "need at least two paths per cell")
        model = build_model(_require(raw, "model", "config"))
        payoff = build_payoff(_require(raw, "payoff", "config"))
        blocks = _require(raw, "estimator", "config")
        if isinstance(blocks, dict):
            blocks = [blocks]
        if not blocks:
            raise ConfigError("estimator", "at least one estimator is required")
        estimators, labels = [], []
        for i, b in enumerate(blocks):
            est = build_estimator(b, model, payoff, i)
            estimators.append(est)
            labels.append(b.get("label", est.tag))
        if len(set(labels)) != len(labels):
            raise ConfigError("estimator.label", "estimator labels must be unique within an experiment")
        return cls(name, exp.get("description", ""), model, payoff, estimators, labels, paths, steps, seed,
                   exp.get("out"), workers, raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("config", f"not valid TOML: {exc}") from exc
        return cls.from_dict(raw)

    def override(self, seed=None, paths=None, steps=None, out=None, workers=None) -> "RunConfig":
        if seed is not None:
            if not 0 <= seed < 2**64:
                raise ConfigError("--seed", "must be an integer in [0, 2^64)")
            self.seed = seed
        if paths is not None:
            self.paths = _int_list(paths, "--paths")
            if any(p < 2 for p in self.paths):
                raise ConfigError("--paths", "need at least two paths per cell")
        if steps is not None:
            self.steps = _int_list(steps, "--steps")
        if out is not None:
            self.out = out
        if workers is not None:
            if workers < 1:
                raise ConfigError("--workers", "must be a positive integer")
            self.workers = workers
        return self


# --- presets -----------------------------------------------------------------

PRESET_DIR = Path(__file__).with_name("presets")


class PresetCollisionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    path: Path


def list_presets(directories=None) -> list:
    """Presets found in ``directories`` (default: the shipped set), sorted by name.

    A preset's name is its ``experiment.name``; two files declaring the same
    name are an error.
    """
    if directories is None:
        directories = [PRESET_DIR]
        extra = os.environ.get("BELGREEKS_PRESET_PATH")
        if extra:
            directories += [Path(p) for p in extra.split(os.pathsep) if p]
    found = {}
    for d in directories:
        d = Path(d)
        if not d.is_dir():
            continue
        for f in sorted(d.glob("*.toml")):
            with open(f, "rb") as fh:
                exp = tomli.load(fh).get("experiment", {})
            name = exp.get("name", f.stem)
            if name in found:
                raise PresetCollisionError(f"preset {name!r} is defined by both {found[name].path} and {f}")
            found[name] = Preset(name, exp.get("description", ""), f)
    return [found[k] for k in sorted(found)]


def find_preset(name: str, directories=None) -> Preset:
    for p in list_presets(directories):
        if p.name == name:
            return p
    raise ConfigError("--preset", f"no preset named {name!r}")
