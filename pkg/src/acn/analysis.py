"""Experiment machinery run on built networks and their clusterings."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erfc, zeta

from .chain import GroundTruth
from .lpa import Clustering, seed_ceiling, seeded_lpa
from .metrics import metrics_report
from .network import CorrespondenceNetwork, with_edges
from .rng import derive_seed, make_rng


# --------------------------------------------------------------------------
# power-law fit

class PowerLawFitError(ValueError):
    pass


@dataclass
class PowerLawFit:
    alpha: float
    xmin: int
    ks_statistic: float
    lr_vs_exponential: float
    lr_p_value: float
    n_tail: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


def _alpha_mle(tail: np.ndarray, xmin: int) -> float:
    n = tail.size
    sum_log = float(np.log(tail).sum())

    def nll(alpha: float) -> float:
        return n * math.log(zeta(alpha, xmin)) + alpha * sum_log

    res = minimize_scalar(nll, bounds=(1.0 + 1e-6, 20.0), method="bounded", options={"xatol": 1e-7})
    return float(res.x)


def _ks_distance(tail: np.ndarray, alpha: float, xmin: int) -> float:
    values, counts = np.unique(tail, return_counts=True)
    ecdf = np.cumsum(counts) / tail.size
    z0 = zeta(alpha, xmin)
    model_at = 1.0 - zeta(alpha, values + 1.0) / z0
    # between observed values the ECDF is flat while the model keeps rising
    before = values[1:] - 1
    model_before = 1.0 - zeta(alpha, before + 1.0) / z0
    d = np.abs(ecdf - model_at).max()
    if before.size:
        d = max(d, np.abs(ecdf[:-1] - model_before).max())
    return float(d)


def _loglik_powerlaw(x: np.ndarray, alpha: float, xmin: int) -> np.ndarray:
    return -alpha * np.log(x) - math.log(zeta(alpha, xmin))


def _loglik_exponential(x: np.ndarray, xmin: int) -> np.ndarray:
    mean_excess = float(x.mean()) - xmin
    lam = math.log1p(1.0 / mean_excess)
    return math.log(-math.expm1(-lam)) - lam * (x - xmin)


def fit_power_law(samples: Iterable[int], xmin: int | None = None, min_tail: int = 50) -> PowerLawFit:
    """Discrete maximum-likelihood power-law fit.

    ``xmin`` minimises the Kolmogorov-Smirnov distance unless given. The fit is
    compared with a discrete exponential on the same tail by a normalised
    log-likelihood ratio; positive ``lr_vs_exponential`` favours the power law.
    """
    x = np.asarray(list(samples), dtype=np.int64)
    if x.size == 0 or np.any(x < 1):
        raise PowerLawFitError("samples must be positive integers")
    x.sort()
    if xmin is not None:
        candidates = [int(xmin)]
    else:
        uniq = np.unique(x)
        tail_sizes = x.size - np.searchsorted(x, uniq, side="left")
        candidates = [int(v) for v, k in zip(uniq, tail_sizes) if k >= min_tail]
    best = None
    for xm in candidates:
        tail = x[x >= xm]
        if tail.size < min_tail or tail[0] == tail[-1]:
            continue
        alpha = _alpha_mle(tail.astype(np.float64), xm)
        ks = _ks_distance(tail, alpha, xm)
        if best is None or ks < best[0]:
            best = (ks, xm, alpha)
    if best is None:
        raise PowerLawFitError(f"no candidate xmin leaves {min_tail} non-degenerate tail samples")
    ks, xm, alpha = best
    tail = x[x >= xm].astype(np.float64)
    diff = _loglik_powerlaw(tail, alpha, xm) - _loglik_exponential(tail, xm)
    lr = float(diff.sum())
    sigma = float(diff.std())
    p_value = 1.0 if sigma == 0 else float(erfc(abs(lr) / (math.sqrt(2 * tail.size) * sigma)))
    return PowerLawFit(alpha, xm, ks, lr, p_value, int(tail.size))


# --------------------------------------------------------------------------
# intra / inter cluster degrees

@dataclass
class ClusterDegrees:
    cluster: str
    size: int
    intra_degree: int
    inter_degree: int
    connected: bool

    @property
    def intra_edges(self) -> int:
        return self.intra_degree // 2


def intra_inter_degrees(net: CorrespondenceNetwork, c: Clustering) -> list[ClusterDegrees]:
    """Per cluster: twice the internal edge count, the boundary edge count, and internal connectivity."""
    sizes = Counter(c.assignment[a] for a in net.nodes)
    intra = Counter()
    inter = Counter()
    parent = {a: a for a in net.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in net.edges:
        ca, cb = c.assignment[a], c.assignment[b]
        if ca == cb:
            intra[ca] += 2
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
        else:
            inter[ca] += 1
            inter[cb] += 1
    components = Counter()
    for a in net.nodes:
        if find(a) == a:
            components[c.assignment[a]] += 1
    return [ClusterDegrees(lab, sizes[lab], intra[lab], inter[lab], components[lab] == 1)
            for lab in sorted(sizes)]


def ols_slope(points: Sequence[tuple[float, float]]) -> dict[str, float]:
    xy = np.asarray(points, dtype=np.float64)
    if xy.ndim != 2 or len(xy) < 2:
        raise ValueError("need at least two points")
    x, y = xy[:, 0], xy[:, 1]
    xc = x - x.mean()
    sxx = float((xc ** 2).sum())
    if sxx == 0.0:
        raise ValueError("x values have zero variance")
    slope = float((xc * (y - y.mean())).sum() / sxx)
    return {"slope": slope, "intercept": float(y.mean() - slope * x.mean())}


def degree_scaling(records: Sequence[ClusterDegrees]) -> dict[str, dict[str, float]]:
    """Log-log OLS of intra and inter degree against cluster size; zero-degree clusters dropped."""
    out = {}
    for key in ("intra_degree", "inter_degree"):
        pts = [(math.log(r.size), math.log(getattr(r, key))) for r in records if getattr(r, key) > 0]
        out[key] = ols_slope(pts)
    return out


# --------------------------------------------------------------------------
# Maslov-Sneppen randomization

def randomize_network(net: CorrespondenceNetwork, swap_count: int, rng_seed: int) -> CorrespondenceNetwork:
    """Degree-preserving double-edge swaps; every attempt counts toward ``swap_count``.

    (a,b),(c,d) -> (a,d),(c,b); attempts creating a self-loop or an existing
    edge are rejected. Weights move with their edges.
    """
    items = sorted(net.edges.items())
    m = len(items)
    if m < 2 or swap_count <= 0:
        return with_edges(net, net.edges)
    idx = net.node_index
    names = net.node_list
    ea = [idx[a] for (a, _), _ in items]
    eb = [idx[b] for (_, b), _ in items]
    ws = [w for _, w in items]
    present = {(min(a, b), max(a, b)) for a, b in zip(ea, eb)}

    rng = make_rng(rng_seed)
    first = rng.integers(m, size=swap_count).tolist()
    second = rng.integers(m, size=swap_count).tolist()
    flip = (rng.random(swap_count) < 0.5).tolist()
    accepted = 0
    for i, j, f in zip(first, second, flip):
        if i == j:
            continue
        a, b = ea[i], eb[i]
        c, d = (eb[j], ea[j]) if f else (ea[j], eb[j])
        if a == d or c == b:
            continue
        e1 = (a, d) if a < d else (d, a)
        e2 = (c, b) if c < b else (b, c)
        if e1 in present or e2 in present or e1 == e2:
            continue
        present.discard((a, b) if a < b else (b, a))
        present.discard((c, d) if c < d else (d, c))
        present.add(e1)
        present.add(e2)
        ea[i], eb[i] = a, d
        ea[j], eb[j] = c, b
        accepted += 1
    edges = {}
    for a, b, w in zip(ea, eb, ws):
        x, y = names[a], names[b]
        edges[(x, y) if x < y else (y, x)] = w
    out = with_edges(net, edges)
    out.meta["randomized"] = {"swap_count": swap_count, "rng_seed": rng_seed, "accepted": accepted}
    return out


def degree_sequence(net: CorrespondenceNetwork) -> list[int]:
    return sorted(net.degrees().values())


# --------------------------------------------------------------------------
# p sweep

SWEEP_COLUMNS = ["p", "rng_seed", "cluster_count", "modularity", "ami", "ari", "homogeneity"]


@dataclass
class SweepResult:
    rows: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in SWEEP_COLUMNS])
        return buf.getvalue()

    def column(self, p: float, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows if r["p"] == p], dtype=np.float64)

    def summary(self, key: str) -> dict[float, tuple[float, float]]:
        """p -> (mean, sample standard deviation) of ``key`` over repeats."""
        out = {}
        for p in dict.fromkeys(r["p"] for r in self.rows):
            v = self.column(p, key)
            out[p] = (float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0)
        return out


_WORKER: dict = {}


def _init_worker(net, gt, max_iters):
    _WORKER.update(net=net, gt=gt, max_iters=max_iters)


def _sweep_point(p: float, seed: int) -> dict:
    net, gt = _WORKER["net"], _WORKER["gt"]
    c = seeded_lpa(net, gt, p, seed, max_iters=_WORKER["max_iters"])
    report = metrics_report(net, c, gt)
    row = {"p": p, "rng_seed": seed, **{k: report.scalars()[k] for k in SWEEP_COLUMNS[2:]}}
    row["converged"] = c.converged
    row["iterations_used"] = c.iterations_used
    return row


def p_sweep(net: CorrespondenceNetwork, gt: GroundTruth, p_grid: Sequence[float], repeats: int,
            rng_seed: int, max_iters: int = 100, jobs: int = 1) -> SweepResult:
    """Seeded LPA plus metrics at every (p, repeat).

    Repeat ``r`` uses the same derived seed at every p, so seed sets grow
    nested along the grid.
    """
    ceiling = seed_ceiling(net)
    bad = [p for p in p_grid if not 0 <= p <= ceiling + 1e-12]
    if bad:
        raise ValueError(f"p values {bad} outside [0, {ceiling:.6g}]")
    tasks = [(float(p), derive_seed(rng_seed, "repeat", r)) for p in p_grid for r in range(repeats)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(net, gt, max_iters)) as ex:
            rows = list(ex.map(_sweep_point, *zip(*tasks)))
    else:
        _init_worker(net, gt, max_iters)
        rows = [_sweep_point(p, s) for p, s in tasks]
        _WORKER.clear()
    return SweepResult(rows)
