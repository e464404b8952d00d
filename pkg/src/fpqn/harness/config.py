"""Plain-text ``key = value`` run configuration files.

Blank lines and ``#`` comments are ignored.  Keys use the long CLI flag
names with or without dashes (``max-iter``, ``max_iter``).
"""

from __future__ import annotations

__all__ = ["ConfigError", "parse_config", "KEYS"]


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _lam(text: str):
    # "auto" asks for the largest step admitted by the convergence bound
    return "auto" if text.strip().lower() == "auto" else float(text)


KEYS = {
    "scenario": str,
    "image": str,
    "algo": str,
    "mu": float,
    "lambda": _lam,
    "gamma": float,
    "kappa": float,
    "epsilon": float,
    "beta": float,
    "tol": float,
    "max_iter": int,
    "seed": int,
    "out_dir": str,
    "jobs": int,
    "allow_lambda_violation": _bool,
}


def parse_config(path) -> dict:
    """Parse a config file into typed values keyed by normalized name."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = KEYS[key](value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out
