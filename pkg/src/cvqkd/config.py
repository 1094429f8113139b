"""Plain-text experiment configuration.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines
ignored. Unknown keys are rejected rather than silently dropped. Lists are
comma separated; distance grids also accept ``start:stop:step``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

__all__ = ["ExperimentConfig", "parse_config", "load_config"]

_VALID_ESTIMATORS = ("mle", "mm", "opt")
_VALID_CONVENTIONS = ("paper", "gaussian")


def _default_distances() -> list[float]:
    return [float(d) for d in range(0, 201, 5)]


def _default_mc_distances() -> list[float]:
    return [0.0, 20.0, 50.0, 100.0]


def _default_n_list() -> list[int]:
    return [10**5, 10**7, 10**9, 10**12]


def _default_estimators() -> list[str]:
    return ["mle", "mm", "opt"]


@dataclass
class ExperimentConfig:
    V_A: float = 3.0
    xi: float = 0.01
    N: int = 100_000
    m: int = 50_000
    beta: float = 0.95
    V_M2: float = 10.0
    epsilon_pe: float = 1e-10
    loss_db_per_km: float = 0.2
    distances_km: list[float] = field(default_factory=_default_distances)
    mc_distances_km: list[float] = field(default_factory=_default_mc_distances)
    trials: int = 2000
    seed: int = 12345
    estimators: list[str] = field(default_factory=_default_estimators)
    n_list: list[int] = field(default_factory=_default_n_list)
    fig3_N: int = 10**9
    out_dir: str = "results"
    convention: str = "paper"
    asymptotic_includes_beta: bool = True
    mm_key_printed_variance: bool = False
    mm_key_cross_denominator_full: bool = False
    raw_lines: list[str] = field(default_factory=list, repr=False)

    def validate(self) -> None:
        if self.V_A <= 0:
            raise ValueError(f"V_A must be > 0, got {self.V_A}")
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if not 0 <= self.m <= self.N:
            raise ValueError(f"m must be in [0, N], got {self.m}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.V_M2 < 0:
            raise ValueError(f"V_M2 must be >= 0, got {self.V_M2}")
        if not 0 < self.epsilon_pe < 1:
            raise ValueError(f"epsilon_pe must be in (0, 1), got {self.epsilon_pe}")
        if self.loss_db_per_km < 0:
            raise ValueError(f"loss_db_per_km must be >= 0")
        if self.trials < 2:
            raise ValueError(f"trials must be >= 2, got {self.trials}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if any(d < 0 for d in self.distances_km + self.mc_distances_km):
            raise ValueError("distances must be >= 0")
        for e in self.estimators:
            if e not in _VALID_ESTIMATORS:
                raise ValueError(f"unknown estimator {e!r}, "
                                 f"expected one of {_VALID_ESTIMATORS}")
        if self.convention not in _VALID_CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}, "
                             f"expected one of {_VALID_CONVENTIONS}")
        if any(n < 2 for n in self.n_list) or self.fig3_N < 2:
            raise ValueError("block sizes must be >= 2")

    def echo_lines(self) -> list[str]:
        """Effective configuration, one key = value line per field."""
        lines = []
        for f in fields(self):
            if f.name == "raw_lines":
                continue
            val = getattr(self, f.name)
            if isinstance(val, list):
                val = ",".join(str(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{f.name} = {val}")
        return lines


def _parse_int(key: str, text: str) -> int:
    # accept 1e5-style notation for counts
    val = float(text)
    if val != int(val):
        raise ValueError(f"{key} must be an integer, got {text!r}")
    return int(val)


def _parse_bool(key: str, text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"{key} must be a boolean, got {text!r}")


def _parse_float_list(key: str, text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"{key} range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"{key} range must have step > 0 and stop >= start")
        out, d = [], start
        while d <= stop + 1e-9:
            out.append(round(d, 9))
            d += step
        return out
    return [float(p) for p in text.split(",") if p.strip()]


_PARSERS = {
    "V_A": float, "xi": float, "beta": float, "V_M2": float,
    "epsilon_pe": float, "loss_db_per_km": float,
    "N": lambda v: _parse_int("N", v),
    "m": lambda v: _parse_int("m", v),
    "trials": lambda v: _parse_int("trials", v),
    "seed": lambda v: _parse_int("seed", v),
    "fig3_N": lambda v: _parse_int("fig3_N", v),
    "distances_km": lambda v: _parse_float_list("distances_km", v),
    "mc_distances_km": lambda v: _parse_float_list("mc_distances_km", v),
    "n_list": lambda v: [_parse_int("n_list", p) for p in v.split(",") if p.strip()],
    "estimators": lambda v: [p.strip() for p in v.split(",") if p.strip()],
    "out_dir": str,
    "convention": str,
    "asymptotic_includes_beta": lambda v: _parse_bool("asymptotic_includes_beta", v),
    "mm_key_printed_variance": lambda v: _parse_bool("mm_key_printed_variance", v),
    "mm_key_cross_denominator_full":
        lambda v: _parse_bool("mm_key_cross_denominator_full", v),
}


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    raw = text.splitlines()
    for lineno, line in enumerate(raw, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _PARSERS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        try:
            setattr(cfg, key, _PARSERS[key](value))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    cfg.raw_lines = raw
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
