"""Monte-Carlo checks of the kernel laws against their closed forms.

Each suite returns :class:`CheckRow` records; ``passed`` on every row is the
verdict. Simulations build the geometry directly (random rotations,
cross-sections of the sphere) and never call the closed form they are
compared with.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .configs import (JEstimate, assign_batch, build_pol, build_ran, build_sym, compare_j, estimate_j,
                      reference_cosines)
from .kernels import AnglePair, k1_cdf, k2_batch, p2_bound
from .linalg import SubspaceLayout, make_rng, random_orthogonal_complement, sample_uniform_sphere
from .special import refangle_lower_bound

CSV_COLUMNS = ("test", "d", "phi", "psi", "theta", "n", "empirical", "closed_form", "abs_err", "pass")


@dataclass
class CheckRow:
    test: str
    d: int
    phi: float
    psi: float
    theta: float
    n: int
    empirical: float
    closed_form: float
    abs_err: float
    passed: bool

    def as_csv(self) -> dict:
        row = asdict(self)
        row["pass"] = int(row.pop("passed"))
        return row


def rows_to_csv(rows: Iterable[CheckRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r.as_csv())
    return buf.getvalue()


def ks_statistic(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov distance sup |F_n - F|."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def one_sided_ks_2samp(low: np.ndarray, high: np.ndarray) -> tuple:
    """Largest excess of the empirical CDF of ``low`` over that of ``high``.

    Returns the statistic and its asymptotic p-value under the null that
    F_low <= F_high everywhere.
    """
    a = np.sort(low)
    b = np.sort(high)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    stat = float(max(np.max(fa - fb), 0.0))
    eff = a.size * b.size / (a.size + b.size)
    return stat, float(math.exp(-2.0 * eff * stat * stat))


def _frame(d: int, phi: float) -> tuple:
    q = np.zeros(d)
    q[0] = 1.0
    v = np.zeros(d)
    v[0], v[1] = math.cos(phi), math.sin(phi)
    return q, v


def cross_section_sample(q: np.ndarray, psi: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform points of {u on the sphere : <u, q> = cos(psi)} for unit q."""
    omega = random_orthogonal_complement(q, rng, n)
    return math.cos(psi) * q[None, :] + math.sin(psi) * omega


def cdf_check(d: int, phi: float, psi: float, n: int = 200_000, seed: int = 0,
              tol: float = 0.01) -> CheckRow:
    """KS distance between simulated <v, u> on the cross-section and k1_cdf."""
    q, v = _frame(d, phi)
    rng = make_rng(seed, "cdf", d, int(phi * 1e6), int(psi * 1e6))
    x = np.empty(n)
    step = 50_000
    for s in range(0, n, step):
        u = cross_section_sample(q, psi, min(step, n - s), rng)
        x[s:s + u.shape[0]] = u @ v
    angles = AnglePair(phi, psi)
    stat = ks_statistic(x, lambda t: k1_cdf(t, angles, d))
    return CheckRow("cdf", d, phi, psi, float("nan"), n, stat, 0.0, stat, stat < tol)


def cdf_suite(ds: Sequence[int] = (4, 16, 64),
              phis: Sequence[float] = (math.pi / 6, math.pi / 3, 2 * math.pi / 3),
              psis: Sequence[float] = (math.pi / 12, math.pi / 6, math.pi / 3),
              n: int = 200_000, seed: int = 0) -> List[CheckRow]:
    return [cdf_check(d, phi, psi, n, seed) for d in ds for phi in phis for psi in psis]


@dataclass
class ComparisonPoint:
    psi: float
    prob: float
    stderr: float
    trials: int


def verify_comparison_monotonicity(d: int, phi1: float, phi2: float, psi_grid: Sequence[float],
                                   trials: int = 200_000, seed: int = 0,
                                   gamma: float = math.pi / 2) -> List[ComparisonPoint]:
    """P[<v1, u> > <v2, u>] for u uniform on the cross-section at each psi.

    ``v1`` and ``v2`` sit at angles phi1 < phi2 from q, with ``gamma`` the
    angle between their components orthogonal to q. The same cross-section
    directions are reused for every psi (common random numbers).
    """
    if not math.cos(phi1) > math.cos(phi2):
        raise ValueError("needs cos(phi1) > cos(phi2)")
    q = np.zeros(d)
    q[0] = 1.0
    v1 = np.zeros(d)
    v1[0], v1[1] = math.cos(phi1), math.sin(phi1)
    v2 = np.zeros(d)
    v2[0] = math.cos(phi2)
    v2[1], v2[2] = math.sin(phi2) * math.cos(gamma), math.sin(phi2) * math.sin(gamma)
    rng = make_rng(seed, "comparison", d)
    omega = random_orthogonal_complement(q, rng, trials)
    w1, w2 = omega @ v1, omega @ v2
    out = []
    for psi in psi_grid:
        # <v, u> = cos(psi) <v, q> + sin(psi) <v, omega>
        k_1 = math.cos(psi) * v1[0] + math.sin(psi) * w1
        k_2 = math.cos(psi) * v2[0] + math.sin(psi) * w2
        p = float(np.mean(k_1 > k_2))
        out.append(ComparisonPoint(float(psi), p, math.sqrt(max(p * (1 - p), 1e-12) / trials), trials))
    return out


def comparison_rows(points: Sequence[ComparisonPoint], d: int) -> List[CheckRow]:
    rows = []
    for i, pt in enumerate(points):
        ok = True
        if pt.psi < math.pi / 2:
            ok = pt.prob > 0.5
        if i > 0:
            prev = points[i - 1]
            ok = ok and pt.prob <= prev.prob + 2 * math.hypot(pt.stderr, prev.stderr)
        rows.append(CheckRow("comparison", d, float("nan"), pt.psi, float("nan"), pt.trials,
                             pt.prob, 0.5, abs(pt.prob - 0.5), ok))
    return rows


@dataclass
class SensitivityBucket:
    phi: float
    psi_lo: float
    psi_hi: float
    count: int
    pass_rate: float
    bound: float  # mean p2 over the bucket, or nan when phi <= theta


def simulate_k2_events(S, phi: float, n: int, seed: int = 0):
    """k2 values and reference angles for n random rotations of a pair at angle phi.

    For Haar H, (Hv, Hq) is a uniformly random pair of unit vectors at angle
    phi, which is sampled directly here.
    """
    rng = make_rng(seed, "k2-events", S.d, int(phi * 1e6))
    ks, psis = [], []
    step = 100_000
    for s in range(0, n, step):
        c = min(step, n - s)
        hv = sample_uniform_sphere(S.d, rng, c)
        g = rng.standard_normal((c, S.d))
        g -= np.sum(g * hv, axis=1, keepdims=True) * hv
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        hq = math.cos(phi) * hv + math.sin(phi) * g
        ks.append(k2_batch(S, hq, hv))
        _, a_s = assign_batch(hv, S)
        psis.append(np.arccos(np.clip(a_s, -1, 1)))
    return np.concatenate(ks), np.concatenate(psis)


def sensitivity_buckets(S, theta: float, phi: float, n: int = 1_000_000, seed: int = 0,
                        width: float = 0.02, min_count: int = 40_000) -> List[SensitivityBucket]:
    """Empirical P[k2 >= cos(theta)] per reference-angle bucket of ``width`` radians.

    Buckets with fewer than ``min_count`` events are dropped; the default
    keeps the binomial standard error at or below 0.0025.
    """
    ks, psis = simulate_k2_events(S, phi, n, seed)
    hit = ks >= math.cos(theta)
    edges = np.arange(0.0, math.pi / 2 + width, width)
    idx = np.digitize(psis, edges) - 1
    out = []
    for b in np.unique(idx):
        lo, hi = float(edges[b]), float(edges[b] + width)
        sel = idx == b
        if sel.sum() < min_count or hi >= math.pi / 2:
            continue
        if math.cos(phi) < math.cos(theta):
            bound = float(np.mean(p2_bound(phi, theta, psis[sel], S.d)))
        else:
            bound = float("nan")
        out.append(SensitivityBucket(phi, lo, hi, int(sel.sum()), float(hit[sel].mean()), bound))
    return out


def sensitivity_suite(d: int = 16, theta: float = math.pi / 4,
                      phis: Sequence[float] = (math.pi / 3.5, math.pi / 3, math.pi / 2.5),
                      low_phis: Sequence[float] = (math.pi / 6, math.pi / 5),
                      m: int = 16, n: int = 2_000_000, seed: int = 0,
                      slack: float = 0.01, floor: float = 0.49) -> List[CheckRow]:
    """Angle-sensitivity of k2 per reference-angle bucket, plus p2 monotonicity.

    Buckets must hold enough events that the binomial standard error is at
    most a quarter of ``slack``.
    """
    S = build_sym(m, SubspaceLayout(d, 1), seed)
    min_count = int(math.ceil(0.25 / (slack / 4) ** 2))
    rows = []
    for phi in phis:
        for b in sensitivity_buckets(S, theta, phi, n, seed, min_count=min_count):
            psi = 0.5 * (b.psi_lo + b.psi_hi)
            rows.append(CheckRow("sensitivity-upper", d, phi, psi, theta, b.count, b.pass_rate,
                                 b.bound, abs(b.pass_rate - b.bound), b.pass_rate <= b.bound + slack))
    for phi in low_phis:
        for b in sensitivity_buckets(S, theta, phi, n, seed, min_count=min_count):
            psi = 0.5 * (b.psi_lo + b.psi_hi)
            rows.append(CheckRow("sensitivity-lower", d, phi, psi, theta, b.count, b.pass_rate,
                                 0.5, abs(b.pass_rate - 0.5), b.pass_rate >= floor))
    grid = np.linspace(theta, math.pi, 52)[1:-1]
    vals = np.array([p2_bound(p, theta, math.pi / 6, d) for p in grid])
    diffs = np.diff(vals)
    # once the bound reaches its zero convention it stays there
    positive = vals[:-1] > 0
    strict = bool(np.all(diffs[positive] < 0) and np.all(vals[~np.r_[positive, True]] == 0))
    rows.append(CheckRow("p2-decreasing", d, float("nan"), math.pi / 6, theta, grid.size,
                         float(np.max(diffs)), 0.0, 0.0, strict))
    return rows


def jstat_check(m: int, d: int, L: int, N: int = 1_000_000, seed: int = 0,
                tol: float = 0.005) -> CheckRow:
    """Monte-Carlo J of S_ran against the closed-form integral."""
    layout = SubspaceLayout(d, L)
    est = estimate_j(build_ran(m, layout, seed), N, seed)
    exact = refangle_lower_bound(m, layout)
    err = abs(est.mean - exact)
    return CheckRow("jstat", d, float("nan"), float("nan"), float("nan"), N, est.mean, exact, err, err <= tol)


def paired_sym_ran_gap(m: int, layout: SubspaceLayout, N: int, configs: int, seed: int = 0) -> JEstimate:
    """Mean of J(S_sym) - J(S_ran) over ``configs`` independent configuration pairs.

    Each pair shares its base points and one evaluation sample of
    N / configs points. The standard error is taken across the per-pair
    means, so it covers both the configuration draw and the sample.
    """
    if configs < 2:
        raise ValueError("need at least two configuration pairs for a standard error")
    per = N // configs
    if per < 1:
        raise ValueError("N must be at least the number of configuration pairs")
    gaps = np.empty(configs)
    for c in range(configs):
        pair_seed = seed * configs + c
        gaps[c] = compare_j(build_sym(m, layout, pair_seed), build_ran(m, layout, pair_seed), per, pair_seed).mean
    return JEstimate(float(gaps.mean()), float(gaps.std(ddof=1) / math.sqrt(configs)), per * configs)


def dominance_checks(m: int, d: int, L: int = 1, N: int = 20_000_000, ks_n: int = 100_000,
                     seed: int = 0, sigmas: float = 5.0, alpha: float = 1e-3,
                     configs: int = 1000) -> List[CheckRow]:
    """J(S_sym) > J(S_ran) by a paired margin, and a one-sided KS on the A_S laws."""
    layout = SubspaceLayout(d, L)
    diff = paired_sym_ran_gap(m, layout, N, configs, seed)
    z = diff.mean / diff.stderr if diff.stderr > 0 else float("inf")
    rows = [CheckRow("dominance-mean", d, float("nan"), float("nan"), float("nan"), diff.n,
                     diff.mean, sigmas * diff.stderr, z, z > sigmas)]
    sym, ran = build_sym(m, layout, seed), build_ran(m, layout, seed)
    a_sym = reference_cosines(sym, ks_n, seed + 1)
    a_ran = reference_cosines(ran, ks_n, seed + 2)
    stat, p = one_sided_ks_2samp(a_sym, a_ran)
    rows.append(CheckRow("dominance-ks", d, float("nan"), float("nan"), float("nan"), ks_n,
                         stat, p, stat, p > alpha))
    return rows


def pol_vs_sym_check(m: int = 256, d_sub: int = 16, N: int = 1_000_000, seed: int = 0,
                     slack: float = 0.002) -> CheckRow:
    layout = SubspaceLayout(d_sub, 1)
    pol = estimate_j(build_pol(m, layout, seed=seed), N, seed)
    sym = estimate_j(build_sym(m, layout, seed), N, seed)
    return CheckRow("pol-vs-sym", d_sub, float("nan"), float("nan"), float("nan"), N,
                    pol.mean, sym.mean, pol.mean - sym.mean, pol.mean >= sym.mean - slack)


def simplex_check(n: int = 10_000, d: int = 8, seed: int = 0, tol: float = 1e-9) -> CheckRow:
    """cos(beta) = cos(phi)cos(psi) + sin(phi)sin(psi)cos(alpha) on built simplices.

    O is the origin, OA a unit vector, B and C lie on the hyperplane through
    A orthogonal to OA; angles are measured from the constructed points.
    """
    rng = make_rng(seed, "simplex", d)
    worst = 0.0
    for _ in range(n):
        a = sample_uniform_sphere(d, rng)
        e1, e2 = random_orthogonal_complement(a, rng, 2)
        phi, psi = rng.uniform(0.01, math.pi / 2 - 0.01, size=2)
        b = a + math.tan(phi) * e1
        c = a + math.tan(psi) * e2
        ab, ac = b - a, c - a
        cos_alpha = ab @ ac / (np.linalg.norm(ab) * np.linalg.norm(ac))
        cos_beta = b @ c / (np.linalg.norm(b) * np.linalg.norm(c))
        phi_m = math.acos(np.clip(a @ b / np.linalg.norm(b), -1, 1))
        psi_m = math.acos(np.clip(a @ c / np.linalg.norm(c), -1, 1))
        pred = math.cos(phi_m) * math.cos(psi_m) + math.sin(phi_m) * math.sin(psi_m) * cos_alpha
        worst = max(worst, abs(cos_beta - pred))
    return CheckRow("simplex", d, float("nan"), float("nan"), float("nan"), n, worst, 0.0, worst, worst <= tol)


def failing(rows: Iterable[CheckRow]) -> Optional[CheckRow]:
    for r in rows:
        if not r.passed:
            return r
    return None
