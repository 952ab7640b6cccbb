"""Configuration dataclasses and key=value config-file handling.

Two knob groups: sampling/extraction (`SamplerConfig`) and fitting
(`FitConfig`).  Three sampler fields default to data-dependent values and
are stored as None until `SamplerConfig.resolved` fills them in from the
domain diagonal D and the current point count n:

    tau0    -> max(D / (2n), D / 8)     (Newton step clip)
    sigma_p -> 16 D / n                 (repulsion kernel bandwidth)
    alpha   -> sqrt(D / n)              (repulsion step size)

Config files hold one ``key = value`` per line with ``#`` comments; keys
are exactly the dataclass field names.  Flag values override file values
override defaults, and the provenance of every key is recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import FormatError


@dataclass
class SamplerConfig:
    tau0: float | None = None
    eps_start: float = 1e-4
    eps_end: float = 1e-5
    max_newton_iters: int = 10
    K: int = 8
    sigma_p: float | None = None
    alpha: float | None = None
    resample_rounds: int = 10
    resample_stop_frac: float = 0.01
    insert_cap_frac: float = 0.1
    edge_lambda: float = 1.0

    def __post_init__(self) -> None:
        if self.eps_end > self.eps_start:
            raise ValueError("eps_end must not exceed eps_start")
        for name in ("eps_start", "eps_end", "resample_stop_frac", "edge_lambda"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau0", "sigma_p", "alpha"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive when given")
        if self.max_newton_iters < 1 or self.K < 1 or self.resample_rounds < 0:
            raise ValueError("iteration counts must be positive")
        if not 0 < self.insert_cap_frac <= 1:
            raise ValueError("insert_cap_frac must be in (0, 1]")

    def resolved(self, diagonal: float, n: int) -> "SamplerConfig":
        """Copy with data-dependent defaults filled in for n points."""
        return replace(
            self,
            tau0=self.tau0 if self.tau0 is not None else max(diagonal / (2 * n), diagonal / 8),
            sigma_p=self.sigma_p if self.sigma_p is not None else 16 * diagonal / n,
            alpha=self.alpha if self.alpha is not None else math.sqrt(diagonal / n),
        )


@dataclass
class FitConfig:
    gamma_on: float = 1000.0
    gamma_normal: float = 100.0
    gamma_off: float = 50.0
    gamma_eik: float = 100.0
    alpha_off: float = 100.0
    sigma_n: float = 60.0  # degrees
    warmup_iters: int = 300
    iso_update_period: int = 2000
    iso_init_subsample: float = 0.125
    iters: int = 5000
    batch_size: int = 2048
    learning_rate: float = 1e-4
    seed: int = 0
    outlier_weighting: bool = True
    iso_losses: bool = True
    psi_literal: bool = False
    width: int = 256
    hidden_layers: int = 3
    omega: float = 30.0

    def __post_init__(self) -> None:
        for name in ("gamma_on", "gamma_normal", "gamma_off", "gamma_eik"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.iso_init_subsample <= 1:
            raise ValueError("iso_init_subsample must be in (0, 1]")
        if not 0 < self.sigma_n < 180:
            raise ValueError("sigma_n must be in (0, 180) degrees")
        if min(self.iters, self.batch_size, self.width, self.hidden_layers) < 1:
            raise ValueError("iters, batch_size, width, hidden_layers must be >= 1")


def _parse_value(name: str, text: str, target_type) -> object:
    text = text.strip()
    if target_type is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise FormatError(f"config key {name}: expected boolean, got {text!r}")
    if target_type is int:
        try:
            return int(text)
        except ValueError:
            raise FormatError(f"config key {name}: expected integer, got {text!r}") from None
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"config key {name}: expected number, got {text!r}") from None


def parse_config_text(text: str) -> dict[str, str]:
    """Raw key -> value strings from config text; duplicate keys rejected."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise FormatError(f"config line {lineno}: empty key or value")
        if key in out:
            raise FormatError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass
class RunConfig:
    """Sampler + fit settings with per-key provenance (default|file|flag)."""

    sampler: SamplerConfig
    fit: FitConfig
    provenance: dict[str, str]


# Fields whose None default means "derived at runtime"; file/flag values
# for them are plain floats.
_OPTIONAL_FLOATS = {"tau0", "sigma_p", "alpha"}


def _field_types(cls) -> dict[str, type]:
    out = {}
    for f in fields(cls):
        if f.name in _OPTIONAL_FLOATS:
            out[f.name] = float
        elif isinstance(f.default, bool):
            out[f.name] = bool
        elif isinstance(f.default, int):
            out[f.name] = int
        else:
            out[f.name] = float
    return out


def load_run_config(
    file_text: str | None = None, flags: dict[str, object] | None = None
) -> RunConfig:
    """Layer defaults <- config file <- explicit flags, tracking provenance.

    Unknown keys in either layer are rejected.  ``flags`` values may
    already be typed (from argparse) or strings.
    """
    sampler_types = _field_types(SamplerConfig)
    fit_types = _field_types(FitConfig)
    values: dict[str, object] = {}
    provenance = {name: "default" for name in (*sampler_types, *fit_types)}

    def apply(layer: dict[str, object], source: str) -> None:
        for key, raw in layer.items():
            if key in sampler_types:
                t = sampler_types[key]
            elif key in fit_types:
                t = fit_types[key]
            else:
                raise FormatError(f"unknown config key {key!r}")
            values[key] = _parse_value(key, raw, t) if isinstance(raw, str) else t(raw)
            provenance[key] = source

    if file_text is not None:
        apply(parse_config_text(file_text), "file")
    if flags:
        apply({k: v for k, v in flags.items() if v is not None}, "flag")

    try:
        sampler = SamplerConfig(**{k: v for k, v in values.items() if k in sampler_types})
        fit = FitConfig(**{k: v for k, v in values.items() if k in fit_types})
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return RunConfig(sampler=sampler, fit=fit, provenance=provenance)
