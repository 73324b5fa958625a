"""JSON parameter files shared by ``fit``, ``baseline`` and ``render``."""
from __future__ import annotations

import json

import numpy as np

from .errors import FormatError
from .fdn import ConstrainedParams, UnconstrainedParams

SCHEMA_VERSION = 1
REQUIRED = ("schema_version", "sample_rate", "N", "Q", "delays", "feedback_matrix",
            "orthogonal_part", "absorption", "input_gains", "output_gains", "direct_gain")


def to_dict(cp, sample_rate, unconstrained=None, provenance=None):
    out = {
        "schema_version": SCHEMA_VERSION,
        "sample_rate": int(sample_rate),
        "N": cp.n_lines,
        "Q": int(cp.Q),
        "delays": cp.m.tolist(),
        "feedback_matrix": cp.A.tolist(),
        "orthogonal_part": cp.U.tolist(),
        "absorption": cp.gamma.tolist(),
        "input_gains": cp.b.tolist(),
        "output_gains": cp.c.tolist(),
        "direct_gain": float(cp.d),
    }
    if unconstrained is not None:
        out["unconstrained"] = unconstrained.to_dict()
    out["provenance"] = provenance or {}
    return out


def save(path, cp, sample_rate, unconstrained=None, provenance=None):
    with open(path, "w") as fh:
        json.dump(to_dict(cp, sample_rate, unconstrained, provenance), fh, indent=2)
        fh.write("\n")


def _vector(data, key, n):
    v = np.asarray(data[key], dtype=np.float64)
    if v.shape != (n,):
        raise FormatError(f"{key!r} must have {n} entries, got shape {v.shape}")
    return v


def _matrix(data, key, n):
    v = np.asarray(data[key], dtype=np.float64)
    if v.shape != (n, n):
        raise FormatError(f"{key!r} must be {n}x{n}, got shape {v.shape}")
    return v


def from_dict(data):
    """Validate a parsed parameter file.

    Returns ``(ConstrainedParams, sample_rate, UnconstrainedParams or None,
    provenance)``.
    """
    if not isinstance(data, dict):
        raise FormatError("parameter file must contain a JSON object")
    missing = [k for k in REQUIRED if k not in data]
    if missing:
        raise FormatError(f"missing fields: {', '.join(missing)}")
    if data["schema_version"] != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {data['schema_version']!r}")
    try:
        n, q, rate = int(data["N"]), int(data["Q"]), int(data["sample_rate"])
        m = _vector(data, "delays", n)
        b = _vector(data, "input_gains", n)
        c = _vector(data, "output_gains", n)
        gamma = _vector(data, "absorption", n)
        A = _matrix(data, "feedback_matrix", n)
        U = _matrix(data, "orthogonal_part", n)
        d = float(data["direct_gain"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed parameter file: {exc}") from exc
    if n < 1 or q < 1 or rate <= 0:
        raise FormatError("N, Q and sample_rate must be positive")
    if np.any(b < 0) or np.any(c < 0) or d < 0:
        raise FormatError("gains must be nonnegative")
    if np.any(m < 0) or np.any(m > q - 1):
        raise FormatError(f"delays must lie in [0, {q - 1}]")
    arrays = (m, b, c, gamma, A, U)
    if not all(np.all(np.isfinite(a)) for a in arrays) or not np.isfinite(d):
        raise FormatError("parameters must be finite")
    cp = ConstrainedParams(b=b, c=c, d=d, U=U, gamma=gamma, m=m, Q=q, A=A)
    proxies = None
    if data.get("unconstrained") is not None:
        try:
            proxies = UnconstrainedParams.from_dict(data["unconstrained"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed unconstrained block: {exc}") from exc
    return cp, rate, proxies, data.get("provenance", {})


def load(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(data)
