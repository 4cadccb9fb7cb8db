"""Versioned JSON experiment configs and the shipped presets."""

from __future__ import annotations

import copy
import json
import numbers
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional

from .errors import ConfigError
from .synth import ENTRY_LAWS, NOISE_LAWS, VECTOR_FAMILIES, NoiseSpec, SignalSpec

SCHEMA_VERSION = 1
EXPERIMENTS = ("comparison", "phase_transition", "rates", "outlier_count")
METHODS = ("stepwise", "rie", "tsvd")
PRESETS = ("fig1", "fig2", "fig3", "fig4", "table1", "phase", "rates")


def _is_int(x):
    return isinstance(x, numbers.Integral) and not isinstance(x, bool)


def _is_num(x):
    return isinstance(x, numbers.Real) and not isinstance(x, bool)


@dataclass
class ExperimentConfig:
    name: str
    experiment: str
    M: int
    N: int
    signal: dict
    noise: dict = field(default_factory=lambda: {"distribution": "gaussian", "sigma": 1.0})
    seed: int = 0
    trials: int = 50
    estimators: list = field(default_factory=list)
    baseline: Optional[str] = None
    sweep: dict = field(default_factory=dict)
    ladder: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def c(self) -> float:
        return self.N / self.M

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "experiment": self.experiment,
            "M": self.M,
            "N": self.N,
            "signal": copy.deepcopy(self.signal),
            "noise": copy.deepcopy(self.noise),
            "seed": self.seed,
            "trials": self.trials,
            "estimators": copy.deepcopy(self.estimators),
            "baseline": self.baseline,
            "sweep": copy.deepcopy(self.sweep),
            "ladder": copy.deepcopy(self.ladder),
        }

    def signal_spec(self, M=None, N=None, d_values=None) -> SignalSpec:
        M = self.M if M is None else M
        N = self.N if N is None else N
        sig = self.signal
        family = sig.get("vector_family", "dense_orthonormal")
        k_left = k_right = None
        if family == "sparse":
            if "sparsity" in sig:
                k_left = max(1, int(round(sig["sparsity"] * M)))
                k_right = max(1, int(round(sig["sparsity"] * N)))
            k_left = sig.get("k_left", k_left)
            k_right = sig.get("k_right", k_right)
        return SignalSpec(
            M=int(M),
            N=int(N),
            d_values=tuple(sig["d_values"] if d_values is None else d_values),
            vector_family=family,
            k_left=k_left,
            k_right=k_right,
            disjoint_supports=bool(sig.get("disjoint_supports", True)),
            entry_law=sig.get("entry_law", "gaussian"),
            seed=int(self.seed),
        )

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(self.noise.get("distribution", "gaussian"), float(self.noise.get("sigma", 1.0)))


def _check_signal(sig, M, N, bad):
    if not isinstance(sig, dict):
        bad.append("signal")
        return
    d = sig.get("d_values")
    if not isinstance(d, list) or not d or not all(_is_num(x) and x > 0 for x in d):
        bad.append("signal.d_values")
    elif any(a <= b for a, b in zip(d, d[1:])):
        bad.append("signal.d_values")
    elif _is_int(M) and _is_int(N) and len(d) > min(M, N):
        bad.append("signal.d_values")
    fam = sig.get("vector_family", "dense_orthonormal")
    if fam not in VECTOR_FAMILIES:
        bad.append("signal.vector_family")
    if sig.get("entry_law", "gaussian") not in ENTRY_LAWS:
        bad.append("signal.entry_law")
    if fam == "sparse":
        has_ratio = "sparsity" in sig
        if has_ratio and not (_is_num(sig["sparsity"]) and 0 < sig["sparsity"] <= 1):
            bad.append("signal.sparsity")
        for key in ("k_left", "k_right"):
            if key in sig and not (_is_int(sig[key]) and sig[key] >= 1):
                bad.append(f"signal.{key}")
        if not has_ratio and not ("k_left" in sig and "k_right" in sig):
            bad.append("signal.sparsity")


def _check_estimators(ests, bad):
    if not isinstance(ests, list):
        bad.append("estimators")
        return
    names = set()
    for i, e in enumerate(ests):
        if not isinstance(e, dict) or e.get("method") not in METHODS:
            bad.append(f"estimators[{i}].method")
            continue
        name = e.get("name", e["method"])
        if name in names:
            bad.append(f"estimators[{i}].name")
        names.add(name)
        if e["method"] == "tsvd":
            if e.get("mode", "rank") not in ("rank", "hard", "soft"):
                bad.append(f"estimators[{i}].mode")
            v = e.get("value", "r")
            if not (v in ("K", "r") or (_is_num(v) and v >= 0)):
                bad.append(f"estimators[{i}].value")
        sigma = e.get("sigma", 1.0)
        if not (sigma == "auto" or (_is_num(sigma) and sigma > 0)):
            bad.append(f"estimators[{i}].sigma")


def parse_config(doc: Any) -> ExperimentConfig:
    """Validate a config document; raises ``ConfigError`` listing every offending field."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", ["<root>"])
    bad = []
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        bad.append("schema_version")
    exp = doc.get("experiment", "comparison")
    if exp not in EXPERIMENTS:
        bad.append("experiment")
    M, N = doc.get("M"), doc.get("N")
    if not (_is_int(M) and M > 0):
        bad.append("M")
    if not (_is_int(N) and N > 0):
        bad.append("N")
    _check_signal(doc.get("signal"), M, N, bad)
    noise = doc.get("noise", {})
    if not isinstance(noise, dict):
        bad.append("noise")
    else:
        if noise.get("distribution", "gaussian") not in NOISE_LAWS:
            bad.append("noise.distribution")
        s = noise.get("sigma", 1.0)
        if not (_is_num(s) and s >= 0):
            bad.append("noise.sigma")
    if not _is_int(doc.get("seed", 0)):
        bad.append("seed")
    if not (_is_int(doc.get("trials", 1)) and doc.get("trials", 1) >= 1):
        bad.append("trials")
    ests = doc.get("estimators", [])
    _check_estimators(ests, bad)
    if exp == "comparison" and isinstance(ests, list) and not ests:
        bad.append("estimators")
    base = doc.get("baseline")
    if base is not None and isinstance(ests, list):
        if base not in {e.get("name", e.get("method")) for e in ests if isinstance(e, dict)}:
            bad.append("baseline")
    sweep = doc.get("sweep", {})
    if not isinstance(sweep, dict) or any(
        k not in ("d", "c", "M") or not isinstance(v, list) or not v or not all(_is_num(x) and x > 0 for x in v)
        for k, v in sweep.items()
    ):
        bad.append("sweep")
    ladder = doc.get("ladder", {})
    if exp == "rates":
        ok = isinstance(ladder, dict) and isinstance(ladder.get("N"), list) and all(_is_int(n) and n > 0 for n in ladder.get("N", []))
        ok = ok and _is_num(ladder.get("c")) and ladder.get("c") > 0
        cases = ladder.get("cases") if isinstance(ladder, dict) else None
        ok = ok and isinstance(cases, list) and bool(cases) and all(
            isinstance(cs, dict) and _is_num(cs.get("d")) and cs["d"] > 0 and "label" in cs for cs in cases
        )
        if not ok:
            bad.append("ladder")
    if bad:
        raise ConfigError(f"invalid config fields: {', '.join(bad)}", bad)
    return ExperimentConfig(
        name=str(doc.get("name", "experiment")),
        experiment=exp,
        M=int(M),
        N=int(N),
        signal=copy.deepcopy(doc["signal"]),
        noise=copy.deepcopy(noise) if noise else {"distribution": "gaussian", "sigma": 1.0},
        seed=int(doc.get("seed", 0)),
        trials=int(doc.get("trials", 50)),
        estimators=copy.deepcopy(ests),
        baseline=base,
        sweep=copy.deepcopy(sweep),
        ladder=copy.deepcopy(ladder),
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", ["<root>"]) from exc
    return parse_config(doc)


def preset_document(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}", ["preset"])
    text = resources.files("mpdenoise").joinpath("presets", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_preset(name: str, trials: Optional[int] = None) -> ExperimentConfig:
    doc = preset_document(name)
    if trials is not None:
        doc["trials"] = trials
    return parse_config(doc)
