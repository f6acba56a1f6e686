"""Oscillation events, mixed-mode signatures, attractor classes and c1 sweeps."""
from __future__ import annotations

import csv
import enum
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import FoldkitError
from .integrate import Trajectory, integrate
from .system import Params, SystemDefinition, fhn_system, python_field

DEFAULT_INITIAL_STATE = (-0.9, -1.5, -2.0, -1.125)
SWEEP_HEADER = ["c1", "class", "signature", "final_x1", "final_x2", "final_y1", "final_y2"]


@dataclass(frozen=True)
class Peak:
    t: float
    value: float
    prominence: float


def extract_peaks(traj: Trajectory, component: int = 0, transient_fraction: float = 0.5,
                  noise_floor: float = 1e-4) -> list:
    """Local maxima of one component after discarding the transient.

    Prominence is the drop to the surrounding minima (as in
    ``scipy.signal.find_peaks``), except when one side's base is the edge of
    the analysed window: the oscillation is then cut off on that side and the
    complete side alone measures it.
    """
    if not 0 <= transient_fraction < 1:
        raise ValueError("transient_fraction must lie in [0, 1)")
    start = int(len(traj.times) * transient_fraction)
    x = np.asarray(traj.states)[start:, component]
    t = np.asarray(traj.times)[start:]
    if len(x) < 3:
        return []
    idx, props = find_peaks(x, prominence=0.0)
    last = len(x) - 1
    out = []
    for i, prom, lb, rb in zip(idx, props["prominences"], props["left_bases"],
                               props["right_bases"]):
        if rb == last and lb != 0:
            prom = x[i] - x[lb]
        elif lb == 0 and rb != last:
            prom = x[i] - x[rb]
        if prom > noise_floor:
            out.append(Peak(float(t[i]), float(x[i]), float(prom)))
    return out


@dataclass(frozen=True)
class MmoSignature:
    blocks: tuple  # ((L, s), ...)

    def __str__(self):
        return " ".join(f"{L}^{s}" for L, s in self.blocks)

    def tokens(self) -> str:
        return "".join("L" * L + "s" * s for L, s in self.blocks)

    @property
    def large(self) -> int:
        return sum(L for L, _ in self.blocks)

    @property
    def small(self) -> int:
        return sum(s for _, s in self.blocks)

    def is_mixed(self) -> bool:
        return self.large > 0 and self.small > 0


def signature_from_tokens(tokens: str) -> MmoSignature:
    """Compress an ``L``/``s`` string into canonical ``(L, s)`` blocks."""
    blocks = []
    L = s = 0
    for c in tokens:
        if c == "L":
            if s:
                blocks.append((L, s))
                L = s = 0
            L += 1
        elif c == "s":
            s += 1
        else:
            raise ValueError(f"unknown token {c!r}")
    if L or s:
        blocks.append((L, s))
    return MmoSignature(tuple(blocks))


def signature(peaks: Sequence[Peak], large: float = 1.5, small: float = 0.01) -> MmoSignature:
    """Peaks with prominence >= ``large`` are L events, those in
    ``[small, large)`` s events; anything below ``small`` is ignored."""
    if not large > small > 0:
        raise ValueError("need large > small > 0")
    toks = "".join("L" if p.prominence >= large else "s"
                   for p in peaks if p.prominence >= small)
    return signature_from_tokens(toks)


class AttractorKind(str, enum.Enum):
    EQUILIBRIUM = "Equilibrium"
    SMALL_CYCLE = "SmallCycle"
    MMO = "MMO"
    RELAXATION = "Relaxation"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class AnalysisConfig:
    component: int = 0
    transient_fraction: float = 0.5
    noise_floor: float = 1e-4
    large_threshold: float = 1.5
    small_threshold: float = 0.01
    eq_tol: float = 1e-4
    decay_ratio: float = 0.5

    def __post_init__(self):
        if not 0 <= self.transient_fraction < 1:
            raise ValueError("transient_fraction must lie in [0, 1)")
        for name in ("noise_floor", "small_threshold", "eq_tol", "decay_ratio"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.large_threshold > self.small_threshold:
            raise ValueError("large_threshold must exceed small_threshold")


@dataclass
class AttractorClass:
    kind: AttractorKind
    signature: MmoSignature
    range: float
    n_peaks: int
    decay: float              # late/early mean prominence (nan with < 2 peaks)
    aux_range: float = float("nan")   # post-transient range of the other fast variable

    def __str__(self):
        return self.kind.value


def decay_ratio(peaks: Sequence[Peak]) -> float:
    """Mean prominence of the last quarter of the peaks over the first quarter."""
    if len(peaks) < 2:
        return float("nan")
    q = max(1, len(peaks) // 4)
    pr = np.array([p.prominence for p in peaks])
    return float(pr[-q:].mean() / pr[:q].mean())


def classify_attractor(traj: Trajectory, config: AnalysisConfig = AnalysisConfig()) -> AttractorClass:
    """Rules, in order:

    1. post-transient range of the component below ``eq_tol``: Equilibrium;
    2. no peaks: Unclassified;
    3. both L and s events: MMO; only L events: Relaxation;
    4. small oscillations only: Equilibrium when their amplitude decays (late
       over early mean prominence below ``decay_ratio``), SmallCycle otherwise.
    """
    start = int(len(traj.times) * config.transient_fraction)
    tail = np.asarray(traj.states)[start:]
    rng = float(np.ptp(tail[:, config.component])) if len(tail) else float("nan")
    aux = float(np.ptp(tail[:, 1 - config.component])) if len(tail) and tail.shape[1] > 1 else float("nan")
    peaks = extract_peaks(traj, config.component, config.transient_fraction, config.noise_floor)
    sig = signature(peaks, config.large_threshold, config.small_threshold)
    dec = decay_ratio(peaks)

    if rng < config.eq_tol:
        kind = AttractorKind.EQUILIBRIUM
    elif not peaks:
        kind = AttractorKind.UNCLASSIFIED
    elif sig.large and sig.small:
        kind = AttractorKind.MMO
    elif sig.large:
        kind = AttractorKind.RELAXATION
    elif np.isfinite(dec) and dec < config.decay_ratio:
        kind = AttractorKind.EQUILIBRIUM
    else:
        kind = AttractorKind.SMALL_CYCLE
    return AttractorClass(kind, sig, rng, len(peaks), dec, aux)


@dataclass(frozen=True)
class SimConfig:
    params: Params = Params()
    dt: float = 0.001
    t_end: float = 500.0
    t0: float = 0.0
    record_every: int = 10
    initial_state: tuple = DEFAULT_INITIAL_STATE

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.t0:
            raise ValueError("t_end must not precede t0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if len(self.initial_state) != 4 or not np.all(np.isfinite(self.initial_state)):
            raise ValueError("initial_state must be 4 finite numbers")

    def replace(self, **kw) -> "SimConfig":
        from dataclasses import replace
        return replace(self, **kw)


def simulate(config: SimConfig, system: Optional[SystemDefinition] = None) -> Trajectory:
    system = system or fhn_system()
    p = config.params
    meta = dict(params=p.as_dict(), system=system.name)
    if system.compiled_rhs is not None:
        return integrate(system.compiled_rhs, config.initial_state, config.t0, config.t_end,
                         config.dt, config.record_every, args=(p.as_array(),), meta=meta,
                         runner=system.compiled_run)
    return integrate(python_field(system, p), config.initial_state, config.t0, config.t_end,
                     config.dt, config.record_every, meta=meta)


@dataclass
class SweepRow:
    c1: float
    kind: str
    signature: str
    final_state: np.ndarray
    error: str = ""

    def csv_row(self) -> list:
        return [repr(float(self.c1)), self.kind, self.signature] + \
            [repr(float(x)) for x in self.final_state]


# systems sent to worker processes by name: unpickled numba kernels recompile
_BY_NAME = {"fhn": fhn_system}


def _sweep_one(c1, sim: SimConfig, analysis: AnalysisConfig, system) -> SweepRow:
    if isinstance(system, str):
        system = _BY_NAME[system]()
    cfg = sim.replace(params=sim.params.replace(c1=float(c1)))
    try:
        traj = simulate(cfg, system)
    except FoldkitError as exc:
        return SweepRow(c1, AttractorKind.UNCLASSIFIED.value, "", np.full(4, np.nan), str(exc))
    if traj.blowup:
        return SweepRow(c1, AttractorKind.UNCLASSIFIED.value, "", traj.final_state,
                        f"blow-up at t={traj.blowup_time!r}")
    cls = classify_attractor(traj, analysis)
    return SweepRow(c1, cls.kind.value, str(cls.signature), traj.final_state)


def sweep_c1(c1_values, sim: SimConfig = SimConfig(), analysis: AnalysisConfig = AnalysisConfig(),
             system: Optional[SystemDefinition] = None, jobs: Optional[int] = 1) -> list:
    """Simulate and classify each ``c1``; rows come back in input order.

    ``jobs`` > 1 runs rows in worker processes (``None``: one per CPU).
    """
    c1_values = [float(c) for c in c1_values]
    if not c1_values:
        raise ValueError("empty c1 list")
    system = system or fhn_system()
    jobs = jobs or os.cpu_count() or 1
    if jobs == 1 or len(c1_values) == 1:
        return [_sweep_one(c, sim, analysis, system) for c in c1_values]
    ref = system.name if _BY_NAME.get(system.name, lambda: None)() == system else system
    with ProcessPoolExecutor(max_workers=min(jobs, len(c1_values))) as ex:
        futs = [ex.submit(_sweep_one, c, sim, analysis, ref) for c in c1_values]
        return [f.result() for f in futs]


def write_sweep_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow(r.csv_row())
