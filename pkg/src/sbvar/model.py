"""Piecewise stationary VAR specifications and their simulation.

Time is 1-based throughout: observations are ``y_1 .. y_T`` and a break at
``t`` means the new coefficient block governs ``y_t`` onward.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

BURN_IN = 500


class InvalidSpecError(ValueError):
    """Raised when a specification violates one or more invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian innovation covariance.

    ``kind="diagonal"`` gives ``sigma2 * I``; ``kind="ar1_profile"`` gives
    ``sigma2 * rho**|i-j|``.
    """

    kind: str = "diagonal"
    sigma2: float = 0.01
    rho: float = 0.0

    def covariance(self, p: int) -> np.ndarray:
        if self.kind == "diagonal":
            return self.sigma2 * np.eye(p)
        if self.kind == "ar1_profile":
            idx = np.arange(p)
            return self.sigma2 * self.rho ** np.abs(idx[:, None] - idx[None, :])
        raise ValueError(f"unknown noise kind {self.kind!r}")

    def problems(self) -> list[str]:
        out = []
        if self.kind not in ("diagonal", "ar1_profile"):
            out.append(f"unknown noise kind {self.kind!r}")
        if not self.sigma2 > 0:
            out.append(f"noise variance must be positive, got {self.sigma2}")
        if self.kind == "ar1_profile" and not abs(self.rho) < 1:
            out.append(f"noise correlation must satisfy |rho| < 1, got {self.rho}")
        return out


@dataclass
class PiecewiseVarSpec:
    """Ground truth for a piecewise VAR(q) process.

    Attributes
    ----------
    T, p, q : int
        Length, dimension and lag order.
    breaks : list[int]
        Strictly increasing break times in ``(q, T]``.
    segment_coeffs : list[np.ndarray]
        ``len(breaks) + 1`` blocks ``(Phi_1 ... Phi_q)``, each ``p x pq``.
    noise : NoiseSpec
        Innovation covariance shared by all segments unless
        ``segment_noise`` overrides it.
    """

    T: int
    p: int
    q: int
    breaks: list[int]
    segment_coeffs: list[np.ndarray]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    segment_noise: list[NoiseSpec] | None = None

    def __post_init__(self) -> None:
        self.breaks = [int(b) for b in self.breaks]
        self.segment_coeffs = [np.asarray(c, dtype=float) for c in self.segment_coeffs]

    @property
    def n_segments(self) -> int:
        return len(self.breaks) + 1

    def segment_bounds(self) -> list[tuple[int, int]]:
        """Half-open ``[start, end)`` time ranges of each segment."""
        edges = [1, *self.breaks, self.T + 1]
        return [(edges[j], edges[j + 1]) for j in range(len(edges) - 1)]

    def noise_for(self, j: int) -> NoiseSpec:
        if self.segment_noise is not None:
            return self.segment_noise[j]
        return self.noise

    def coeff_at(self, t: int) -> np.ndarray:
        """Coefficient block governing time ``t``."""
        return self.segment_coeffs[int(np.searchsorted(self.breaks, t, side="right"))]


@dataclass
class SpecSummary:
    spec: PiecewiseVarSpec
    min_spacing: int
    total_sparsity: int
    max_abs_coeff: float
    spectral_radii: list[float]


@dataclass
class TimeSeries:
    """``T x p`` observation matrix with the lag order used downstream."""

    values: np.ndarray
    q: int = 1

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2:
            raise ValueError("time series must be a 2-D array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("time series contains non-finite values")
        if self.values.shape[0] <= self.q:
            raise ValueError(f"need T > q, got T={self.values.shape[0]}, q={self.q}")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def companion(block: np.ndarray, q: int) -> np.ndarray:
    """VAR(1) companion form of a ``p x pq`` coefficient block."""
    p = block.shape[0]
    if q == 1:
        return block.copy()
    comp = np.zeros((p * q, p * q))
    comp[:p, :] = block
    comp[p:, :-p] = np.eye(p * (q - 1))
    return comp


def spectral_radius(block: np.ndarray, q: int) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion(block, q)))))


def validate_spec(spec: PiecewiseVarSpec) -> SpecSummary:
    """Check invariants and return derived quantities.

    Raises
    ------
    InvalidSpecError
        Listing every violated invariant.
    """
    problems: list[str] = []
    T, p, q = spec.T, spec.p, spec.q
    if T < 1 or p < 1 or q < 1:
        problems.append(f"T, p, q must be positive, got {T}, {p}, {q}")
    b = spec.breaks
    if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
        problems.append(f"breaks must be strictly increasing, got {b}")
    if b and (b[0] <= q or b[-1] > T):
        problems.append(f"breaks must lie in ({q}, {T}], got {b}")
    if len(spec.segment_coeffs) != len(b) + 1:
        problems.append(
            f"need {len(b) + 1} coefficient blocks, got {len(spec.segment_coeffs)}"
        )
    radii: list[float] = []
    for j, block in enumerate(spec.segment_coeffs):
        if block.shape != (p, p * q):
            problems.append(f"segment {j} block has shape {block.shape}, expected {(p, p * q)}")
            continue
        if not np.all(np.isfinite(block)):
            problems.append(f"segment {j} block has non-finite entries")
            continue
        r = spectral_radius(block, q)
        radii.append(r)
        if r >= 1.0 - 1e-12:
            problems.append(f"segment {j} companion spectral radius {r:.6g} >= 1")
    noises = spec.segment_noise if spec.segment_noise is not None else [spec.noise]
    if spec.segment_noise is not None and len(spec.segment_noise) != len(b) + 1:
        problems.append("segment_noise must have one entry per segment")
    for ns in noises:
        sub = ns.problems()
        problems.extend(sub)
        if not sub:
            try:
                np.linalg.cholesky(ns.covariance(p))
            except np.linalg.LinAlgError:
                problems.append("noise covariance is not positive definite")
    if problems:
        raise InvalidSpecError(problems)

    edges = [0, *b, T + 1]
    return SpecSummary(
        spec=spec,
        min_spacing=min(e2 - e1 for e1, e2 in zip(edges, edges[1:])),
        total_sparsity=int(sum(np.count_nonzero(c) for c in spec.segment_coeffs)),
        max_abs_coeff=float(max(np.max(np.abs(c)) for c in spec.segment_coeffs)),
        spectral_radii=radii,
    )


def simulate(spec: PiecewiseVarSpec, seed: int) -> TimeSeries:
    """Draw one realisation of ``spec``.

    A zero-initialised burn-in of ``BURN_IN`` steps under the first segment
    precedes ``t = 1`` and is discarded. Segments are chained: each one starts
    from the last ``q`` observations of the previous segment.
    """
    validate_spec(spec)
    T, p, q = spec.T, spec.p, spec.q
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((BURN_IN + T, p))
    chol = [np.linalg.cholesky(spec.noise_for(j).covariance(p)) for j in range(spec.n_segments)]

    y = np.zeros((BURN_IN + T + q, p))
    seg_of = np.zeros(BURN_IN + T, dtype=np.intp)
    for j, (start, end) in enumerate(spec.segment_bounds()):
        seg_of[BURN_IN + start - 1 : BURN_IN + end - 1] = j
    for s in range(BURN_IN + T):
        j = seg_of[s]
        lags = y[s : s + q][::-1].reshape(-1)  # (y_{t-1}, ..., y_{t-q})
        y[s + q] = spec.segment_coeffs[j] @ lags + chol[j] @ z[s]
    return TimeSeries(y[q + BURN_IN :].copy(), q=q)


# ---------------------------------------------------------------- scenarios

def one_off_diagonal(p: int, value: float) -> np.ndarray:
    """``p x p`` matrix with ``value`` on the first superdiagonal."""
    return np.diag(np.full(p - 1, float(value)), k=1)


def random_sparse(
    p: int,
    rng: np.random.Generator,
    density: float = 0.05,
    low: float = 0.5,
    high: float = 0.9,
    max_radius: float = 0.95,
) -> np.ndarray:
    """Sparse off-diagonal matrix with spectral radius at most ``max_radius``.

    Draws ``ceil(density * p**2)`` off-diagonal positions and magnitudes on
    ``[low, high]`` with random signs, rejecting until the radius bound holds.
    """
    k = math.ceil(density * p * p)
    off = np.flatnonzero(~np.eye(p, dtype=bool))
    for _ in range(10_000):
        phi = np.zeros(p * p)
        pos = rng.choice(off, size=k, replace=False)
        phi[pos] = rng.uniform(low, high, size=k) * rng.choice([-1.0, 1.0], size=k)
        phi = phi.reshape(p, p)
        if spectral_radius(phi, 1) <= max_radius:
            return phi
    raise RuntimeError("could not draw a stable random sparse matrix")


SCENARIO_1_VALUES = (-0.6, 0.75, -0.8)


def builtin_scenario(scenario_id: int, generator_seed: int = 2018) -> PiecewiseVarSpec:
    """The five simulation designs (1-3 main text, 4-5 supplementary).

    ``generator_seed`` only affects scenario 4, whose matrices are drawn by
    :func:`random_sparse`.
    """
    if scenario_id in (1, 2, 5):
        p = 20
        blocks = [one_off_diagonal(p, v) for v in SCENARIO_1_VALUES]
        breaks = [50, 250] if scenario_id == 2 else [100, 200]
        noise = (
            NoiseSpec("ar1_profile", 0.01, 0.5) if scenario_id == 5 else NoiseSpec("diagonal", 0.01)
        )
        return PiecewiseVarSpec(300, p, 1, breaks, blocks, noise)
    if scenario_id == 3:
        p = 100
        blocks = [one_off_diagonal(p, v) for v in SCENARIO_1_VALUES[:2]]
        return PiecewiseVarSpec(80, p, 1, [40], blocks, NoiseSpec("diagonal", 0.01))
    if scenario_id == 4:
        p = 20
        rng = np.random.default_rng(generator_seed)
        blocks = [random_sparse(p, rng) for _ in range(3)]
        return PiecewiseVarSpec(300, p, 1, [100, 200], blocks, NoiseSpec("diagonal", 0.01))
    raise ValueError(f"unknown scenario {scenario_id}; expected 1..5")


# ----------------------------------------------------------- serialisation

def _noise_to_dict(ns: NoiseSpec) -> dict[str, Any]:
    d: dict[str, Any] = {"kind": ns.kind, "sigma2": ns.sigma2}
    if ns.kind == "ar1_profile":
        d["rho"] = ns.rho
    return d


def _noise_from_dict(d: dict[str, Any]) -> NoiseSpec:
    return NoiseSpec(d.get("kind", "diagonal"), float(d.get("sigma2", 0.01)), float(d.get("rho", 0.0)))


def _block_from_record(rec: Any, p: int, q: int) -> np.ndarray:
    if isinstance(rec, dict):
        kind = rec.get("kind")
        if kind == "one_off_diagonal":
            lag1 = one_off_diagonal(p, rec["value"])
        elif kind == "random_sparse":
            rng = np.random.default_rng(rec.get("seed", 0))
            lag1 = random_sparse(p, rng, density=rec.get("density", 0.05))
        else:
            raise ValueError(f"unknown coefficient pattern {kind!r}")
        block = np.zeros((p, p * q))
        block[:, :p] = lag1
        return block
    return np.asarray(rec, dtype=float).reshape(p, p * q)


def spec_to_dict(spec: PiecewiseVarSpec) -> dict[str, Any]:
    d: dict[str, Any] = {
        "T": spec.T,
        "p": spec.p,
        "q": spec.q,
        "breaks": list(spec.breaks),
        "segment_coeffs": [c.tolist() for c in spec.segment_coeffs],
        "noise": _noise_to_dict(spec.noise),
    }
    if spec.segment_noise is not None:
        d["segment_noise"] = [_noise_to_dict(n) for n in spec.segment_noise]
    return d


def spec_from_dict(d: dict[str, Any]) -> PiecewiseVarSpec:
    p, q = int(d["p"]), int(d.get("q", 1))
    seg_noise = d.get("segment_noise")
    return PiecewiseVarSpec(
        T=int(d["T"]),
        p=p,
        q=q,
        breaks=list(d.get("breaks", [])),
        segment_coeffs=[_block_from_record(r, p, q) for r in d["segment_coeffs"]],
        noise=_noise_from_dict(d.get("noise", {})),
        segment_noise=[_noise_from_dict(n) for n in seg_noise] if seg_noise else None,
    )


def save_spec(spec: PiecewiseVarSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2))


def load_spec(path: str | Path) -> PiecewiseVarSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))


def write_csv(series: TimeSeries, path: str | Path, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"y{k + 1}" for k in range(series.p)])
        for row in series.values:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path: str | Path, q: int = 1, delimiter: str = ",") -> TimeSeries:
    """Read a ``T x p`` CSV; a non-numeric first row is treated as a header."""
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delimiter) if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    return TimeSeries(np.array([[float(v) for v in r] for r in rows]), q=q)
