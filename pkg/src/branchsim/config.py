"""Experiment configuration: INI parsing, validation and the process bundle.

A config file has three sections::

    [experiment]
    kind = theorem1            ; theorem1 | theorem2 | lemma1 | lemmas456 | lemma8 | variance | conditions | curves
    seed = 20240601
    n_list = 500, 2000
    replicates = 200

    [offspring]
    law = bernoulli            ; bernoulli | poisson | three_point
    a = 1.0

    [immigration]
    model = block_sum          ; independent | block_sum | two_point | markov
    m = 3
    alpha = 1.0
    perturbation = inv_log

Every numeric knob has a default; unknown keys are rejected so typos surface
as errors instead of silently falling back.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from branchsim.immigration import (DEFAULT_PSI_CAP, PERTURBATIONS, IndependentPoisson,
                                   MarkovModulated, MDependentBlockSum, RowMean, TwoPointBlockMin)
from branchsim.limits import DriftParam
from branchsim.offspring import BernoulliOffspring, PoissonOffspring, ThreePointOffspring
from branchsim.regvar import DEFAULT_PROBES, RegVarSeq

KINDS = ("theorem1", "theorem2", "lemma1", "lemmas456", "lemma8", "variance", "conditions", "curves")


class ConfigError(ValueError):
    """Parse or validation failure; ``where`` names the section/key."""

    def __init__(self, message: str, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class ProcessConfig:
    """Offspring law, immigration model and the regularly varying targets."""

    law: object
    immigration: object
    alpha_seq: RegVarSeq
    beta_seq: RegVarSeq
    name: str = "process"

    @property
    def m(self) -> int:
        return int(self.immigration.m)

    @property
    def drift(self) -> DriftParam:
        return DriftParam(self.law.drift, self.alpha_seq.index, self.beta_seq.index)


def targets_for(model) -> tuple[RegVarSeq, RegVarSeq]:
    """Default alpha/beta targets of C1 for a built-in immigration model."""
    if isinstance(model, TwoPointBlockMin):
        return model.alpha_target(), model.beta_target()
    seq = model.row_mean.seq
    if isinstance(model, MarkovModulated):
        spread = model.level_variance
        if spread > 0:
            # beta(n,k) = alpha + alpha^2 Var(h): the quadratic term dominates
            return seq, RegVarSeq(2 * seq.index, seq.const**2 * spread, 2 * seq.log_power)
    return seq, seq


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    process: ProcessConfig
    seed: int
    n_list: tuple = (500, 2000)
    replicates: int = 200
    time_points: tuple = (0.25, 0.5, 0.75, 1.0)
    grid_points: int = 100
    horizon: float = 1.0
    threshold: float = 0.1
    ks_alpha: float = 0.01
    lags: tuple = (1, 2, 3, 4, 5)
    probes: tuple = DEFAULT_PROBES
    theta: tuple = (-2.0, -1.0, 0.0, 1.0)
    threads: int = 1
    output_dir: str = "runs"
    text: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}",
                              "experiment.kind")
        if len(self.n_list) < 1 or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError("n ladder must be strictly increasing", "experiment.n_list")
        if any(n < 2 for n in self.n_list):
            raise ConfigError("every n must be >= 2", "experiment.n_list")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1", "experiment.replicates")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "experiment.seed")
        if any(not 0 < t <= self.horizon for t in self.time_points):
            raise ConfigError("time points must lie in (0, horizon]", "experiment.time_points")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.grid_points + 1) * (self.horizon / self.grid_points)

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None,
                       output_dir: Optional[str] = None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if threads is not None:
            changes["threads"] = int(threads)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes) if changes else self

    def canonical_text(self) -> str:
        """Config text with the effective seed; hashed into every artifact."""
        cp = _parser()
        cp.read_string(self.text)
        if not cp.has_section("experiment"):
            cp.add_section("experiment")
        cp.set("experiment", "seed", str(self.seed))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


_ALLOWED = {
    "experiment": {"kind", "seed", "n_list", "replicates", "time_points", "grid_points", "horizon",
                   "threshold", "ks_alpha", "lags", "probes", "theta", "threads", "output_dir",
                   "name"},
    "offspring": {"law", "a", "c"},
    "immigration": {"model", "m", "alpha", "alpha_const", "alpha_log_power", "perturbation",
                    "transition", "levels", "psi_cap"},
}


def _parser():
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    return cp


def _floats(text, where):
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got {text!r}", where) from None


def _ints(text, where):
    vals = _floats(text, where)
    if any(v != math.floor(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}", where)
    return tuple(int(v) for v in vals)


def _get(sec, key, conv, default, where):
    if key not in sec:
        return default
    raw = sec[key]
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse {raw!r}", f"{where}.{key}") from None


def _matrix(text, where):
    rows = [r for r in text.split("|") if r.strip()]
    mat = [_floats(r, where) for r in rows]
    if len({len(r) for r in mat}) != 1:
        raise ConfigError("ragged transition matrix", where)
    return tuple(mat)


def build_law(sec):
    law = sec.get("law", "poisson").strip().lower()
    if law == "bernoulli":
        return BernoulliOffspring(_get(sec, "a", float, 1.0, "offspring"))
    if law == "poisson":
        return PoissonOffspring(_get(sec, "a", float, 0.0, "offspring"))
    if law == "three_point":
        return ThreePointOffspring(_get(sec, "c", float, 1.0, "offspring"))
    raise ConfigError(f"unknown law {law!r}", "offspring.law")


def build_immigration(sec):
    model = sec.get("model", "independent").strip().lower()
    pert = sec.get("perturbation", "none").strip()
    if pert not in PERTURBATIONS:
        raise ConfigError(f"unknown perturbation {pert!r}", "immigration.perturbation")
    m = _get(sec, "m", int, 0, "immigration")
    psi_cap = _get(sec, "psi_cap", float, DEFAULT_PSI_CAP, "immigration")
    if model == "two_point":
        return TwoPointBlockMin(pert, m, psi_cap)
    try:
        seq = RegVarSeq(_get(sec, "alpha", float, 1.0, "immigration"),
                        _get(sec, "alpha_const", float, 1.0, "immigration"),
                        _get(sec, "alpha_log_power", float, 0.0, "immigration"))
    except ValueError as exc:
        raise ConfigError(str(exc), "immigration.alpha") from None
    rm = RowMean(seq, pert)
    if model == "independent":
        return IndependentPoisson(rm)
    if model == "block_sum":
        if m < 0:
            raise ConfigError("m must be nonnegative", "immigration.m")
        return MDependentBlockSum(rm, m, psi_cap)
    if model == "markov":
        if "transition" not in sec or "levels" not in sec:
            raise ConfigError("markov model needs 'transition' and 'levels'", "immigration")
        try:
            return MarkovModulated(rm, _matrix(sec["transition"], "immigration.transition"),
                                   _floats(sec["levels"], "immigration.levels"))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), "immigration.transition") from None
    raise ConfigError(f"unknown model {model!r}", "immigration.model")


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = _parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), source) from None
    for section in cp.sections():
        if section not in _ALLOWED:
            raise ConfigError(f"unknown section [{section}]", source)
        extra = set(cp[section]) - _ALLOWED[section]
        if extra:
            raise ConfigError(f"unknown key(s) {sorted(extra)}", f"{section}")
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section", source)
    ex = cp["experiment"]
    if "seed" not in ex:
        raise ConfigError("seed is required", "experiment.seed")
    law = build_law(cp["offspring"] if cp.has_section("offspring") else {})
    imm = build_immigration(cp["immigration"] if cp.has_section("immigration") else {})
    aseq, bseq = targets_for(imm)
    process = ProcessConfig(law, imm, aseq, bseq, ex.get("name", "process"))
    w = "experiment"
    return ExperimentConfig(
        kind=ex.get("kind", "").strip(),
        process=process,
        seed=_get(ex, "seed", int, 0, w),
        n_list=_get(ex, "n_list", lambda s: _ints(s, "experiment.n_list"), (500, 2000), w),
        replicates=_get(ex, "replicates", int, 200, w),
        time_points=_get(ex, "time_points", lambda s: _floats(s, "experiment.time_points"),
                         (0.25, 0.5, 0.75, 1.0), w),
        grid_points=_get(ex, "grid_points", int, 100, w),
        horizon=_get(ex, "horizon", float, 1.0, w),
        threshold=_get(ex, "threshold", float, 0.1, w),
        ks_alpha=_get(ex, "ks_alpha", float, 0.01, w),
        lags=_get(ex, "lags", lambda s: _ints(s, "experiment.lags"), (1, 2, 3, 4, 5), w),
        probes=_get(ex, "probes", lambda s: _ints(s, "experiment.probes"), DEFAULT_PROBES, w),
        theta=_get(ex, "theta", lambda s: _floats(s, "experiment.theta"), (-2.0, -1.0, 0.0, 1.0), w),
        threads=_get(ex, "threads", int, 1, w),
        output_dir=ex.get("output_dir", "runs"),
        text=text,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))
