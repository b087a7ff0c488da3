"""Pathwise functionals of adapted processes.

Most operations come in two forms: a tree-level wrapper taking a
:class:`~martkit.tree.TreeProcess` and a vectorized kernel acting on a path
matrix of shape (depth+1, n_paths), one column per root-to-leaf path.  The
kernels are shared with the grid-time layers, which feed sampled path
bundles through the same code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tree import FiltrationTree, Martingale, TreeProcess


# -- maximal and square functions ----------------------------------------


def maximal_paths(pathmat: np.ndarray) -> np.ndarray:
    """Running maximum of |f_k|, k <= n, along each path."""
    return np.maximum.accumulate(np.abs(pathmat), axis=0)


def maximal(f: TreeProcess) -> TreeProcess:
    return TreeProcess.from_paths(f.tree, maximal_paths(f.paths()), validate=False)


def increments(pathmat: np.ndarray) -> np.ndarray:
    """df_k = f_k - f_{k-1} for k = 1..N (no k = 0 term)."""
    return np.diff(pathmat, axis=0)


def square_function_paths(pathmat: np.ndarray) -> np.ndarray:
    """Sf_n = (sum_{k<=n} |df_k|^2)^(1/2) with increments counted from k = 1."""
    df2 = increments(pathmat) ** 2
    out = np.zeros_like(pathmat)
    out[1:] = np.sqrt(np.cumsum(df2, axis=0))
    return out


def square_function(f: Martingale) -> TreeProcess:
    return TreeProcess.from_paths(f.tree, square_function_paths(f.paths()), validate=False)


def predictable_square_paths(f: Martingale) -> np.ndarray:
    """sf_n = (sum_{k=1}^n E_{k-1}|df_k|^2)^(1/2) as a path matrix."""
    tree = f.tree
    pm = f.paths()
    out = np.zeros_like(pm)
    acc = np.zeros(tree.n_leaves)
    for k in range(1, tree.depth + 1):
        df2 = (pm[k] - pm[k - 1]) ** 2
        acc = acc + tree.atom_average_leaves(k - 1, df2)
        out[k] = np.sqrt(acc)
    return out


def predictable_square(f: Martingale) -> TreeProcess:
    return TreeProcess.from_paths(f.tree, predictable_square_paths(f), validate=False)


# -- Davis decomposition ---------------------------------------------------


@dataclass
class DavisParts:
    """Splitting f = f_pred + f_bv into a martingale with predictably bounded
    jumps and a martingale of integrable total variation."""

    f_pred: Martingale
    f_bv: Martingale
    g: TreeProcess
    h: TreeProcess


def _norm_reduce(arr: np.ndarray, exponent: float) -> np.ndarray:
    """Pointwise norm across the trailing component axis (scalar arrays pass
    through as absolute values)."""
    if arr.ndim == 2:
        return np.abs(arr)
    if np.isinf(exponent):
        return np.abs(arr).max(axis=-1)
    return (np.abs(arr) ** exponent).sum(axis=-1) ** (1.0 / exponent)


def davis_decompose(f: Martingale, norm_exponent: float = 2.0) -> DavisParts:
    """Split a martingale against the running maximum of its jump sizes.

    Jump sizes are |df_n| for scalar processes and the l^p norm across
    components (``norm_exponent``) for vector processes.  Conventions:
    M df_0 = 0 (the first increment goes entirely to the bounded-variation
    part) and the 0/0 scaling factor at df_n = 0 is taken to be 0.
    """
    tree = f.tree
    pm = f.paths()
    df = increments(pm)
    size = _norm_reduce(df, norm_exponent)  # (N, L)
    mdf_prev = np.zeros(tree.n_leaves)  # M df_{n-1}, starting from M df_0 = 0

    pred = np.zeros_like(pm)
    bv = np.zeros_like(pm)
    g = np.zeros_like(pm)
    h = np.zeros_like(pm)
    bv[0] = pm[0]
    h[0] = pm[0]

    for n in range(1, tree.depth + 1):
        dfn = df[n - 1]
        sz = size[n - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(sz > 0, np.minimum(1.0, mdf_prev / np.where(sz > 0, sz, 1.0)), 0.0)
        dg = (factor if dfn.ndim == 1 else factor[:, None]) * dfn
        dh = dfn - dg
        if dfn.ndim == 1:
            e_dg = tree.atom_average_leaves(n - 1, dg)
            e_dh = tree.atom_average_leaves(n - 1, dh)
        else:
            e_dg = tree.atom_average(n - 1, dg)[tree.ancestors[n - 1]]
            e_dh = tree.atom_average(n - 1, dh)[tree.ancestors[n - 1]]
        pred[n] = pred[n - 1] + dg - e_dg
        bv[n] = bv[n - 1] + dh - e_dh
        g[n] = g[n - 1] + dg
        h[n] = h[n - 1] + dh
        mdf_prev = np.maximum(mdf_prev, sz)

    def as_mart(mat):
        return Martingale(tree, TreeProcess.from_paths(tree, mat).values, validate=False)

    return DavisParts(
        f_pred=as_mart(pred),
        f_bv=as_mart(bv),
        g=TreeProcess.from_paths(tree, g),
        h=TreeProcess.from_paths(tree, h),
    )


# -- r-variation -----------------------------------------------------------


@dataclass
class VariationResult:
    value: float
    witness: list[int] = field(default_factory=list)
    r: float = 2.0

    def recompute(self, values: np.ndarray) -> float:
        """Re-evaluate the witness chain; reproduces value**r for finite r."""
        values = np.asarray(values, dtype=np.float64)
        w = self.witness
        if len(w) < 2:
            return 0.0
        d = [_dist(values[w[i]], values[w[i + 1]]) for i in range(len(w) - 1)]
        if np.isinf(self.r):
            return float(max(d))
        return float(sum(x**self.r for x in d))


def _dist(a, b) -> float:
    d = np.atleast_1d(np.asarray(a) - np.asarray(b))
    return float(np.sqrt((d * d).sum()))


def _pairwise_dist(values: np.ndarray) -> np.ndarray:
    """(n, n) matrix of |f_i - f_j| (Euclidean for vector paths)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        return np.abs(v[:, None] - v[None, :])
    diff = v[:, None, :] - v[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def chain_dp(cost: np.ndarray) -> tuple[float, list[int]]:
    """Maximize sum of cost[u_{j-1}, u_j] over increasing chains u_0 < ... < u_J.

    cost must be nonnegative above the diagonal.  Returns the best total and
    one maximizing chain (a single index when the best total is 0).
    """
    n = cost.shape[0]
    best = np.zeros(n)
    prev = np.full(n, -1, dtype=np.int64)
    for j in range(1, n):
        cand = best[:j] + cost[:j, j]
        i = int(np.argmax(cand))
        if cand[i] > 0.0:
            best[j] = cand[i]
            prev[j] = i
    end = int(np.argmax(best))
    total = float(best[end])
    chain = [end]
    while prev[chain[-1]] >= 0:
        chain.append(int(prev[chain[-1]]))
    return total, chain[::-1]


def variation(values: np.ndarray, r: float) -> VariationResult:
    """Exact r-variation of a finite sequence via dynamic programming.

    ``r = inf`` returns the maximal oscillation with its witness pair.
    """
    if not r > 0:
        raise ValueError("variation exponent must be positive")
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n <= 1:
        return VariationResult(0.0, list(range(n)), r)
    dist = _pairwise_dist(values)
    if np.isinf(r):
        iu = np.triu_indices(n, k=1)
        k = int(np.argmax(dist[iu]))
        i, j = int(iu[0][k]), int(iu[1][k])
        return VariationResult(float(dist[i, j]), [i, j], r)
    total, chain = chain_dp(np.triu(dist**r, k=1))
    return VariationResult(total ** (1.0 / r), chain, r)


def variation_paths(pathmat: np.ndarray, r: float) -> np.ndarray:
    """Per-path r-variation values for a (N+1, L) path matrix."""
    if not r > 0:
        raise ValueError("variation exponent must be positive")
    pm = np.asarray(pathmat, dtype=np.float64)
    n = pm.shape[0]
    if np.isinf(r):
        osc = np.zeros(pm.shape[1])
        for j in range(1, n):
            osc = np.maximum(osc, np.abs(pm[:j] - pm[j]).max(axis=0))
        return osc
    best = np.zeros_like(pm)
    for j in range(1, n):
        best[j] = (best[:j] + np.abs(pm[:j] - pm[j]) ** r).max(axis=0)
    return best.max(axis=0) ** (1.0 / r)


def two_param_variation_paths(cost: np.ndarray, rho: float) -> np.ndarray:
    """Chain DP over a per-path cost tensor of shape (n, n, L)."""
    if not rho > 0:
        raise ValueError("variation exponent must be positive")
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    best = np.zeros((n,) + c.shape[2:])
    for j in range(1, n):
        best[j] = (best[:j] + np.abs(c[:j, j]) ** rho).max(axis=0)
    return best.max(axis=0) ** (1.0 / rho)


# -- Lepingle stopping times and pathwise domination ------------------------


def running_oscillation(pathmat: np.ndarray) -> np.ndarray:
    """M_t = sup_{t'' <= t' <= t} |f_{t'} - f_{t''}| per path."""
    return np.maximum.accumulate(pathmat, axis=0) - np.minimum.accumulate(pathmat, axis=0)


@dataclass
class GreedyPartition:
    """Per-path stopping indices of one greedy oscillation scale m."""

    m: int
    stops: list[list[int]]  # per path, starting with 0

    def stopping_rules(self, tree: FiltrationTree) -> list:
        """Materialize tau_j as validated StoppingRules (INFINITY past the end)."""
        from .tree import INFINITY, StoppingRule

        count = max(len(s) for s in self.stops)
        rules = []
        for j in range(count):
            times = np.full(len(self.stops), INFINITY, dtype=np.int64)
            for leaf, s in enumerate(self.stops):
                if j < len(s):
                    times[leaf] = s[j]
            rules.append(StoppingRule.from_times(tree, times))
        return rules


def lepingle_partition_path(values: np.ndarray, m: int) -> list[int]:
    """Greedy partition of one path: stop as soon as the move from the last
    stop reaches 2^-m times the running oscillation."""
    values = np.asarray(values, dtype=np.float64)
    osc = running_oscillation(values[:, None])[:, 0]
    thr = 2.0**-m
    stops = [0]
    anchor = values[0]
    for t in range(1, len(values)):
        if osc[t] > 0 and abs(values[t] - anchor) >= thr * osc[t]:
            stops.append(t)
            anchor = values[t]
    return stops


def lepingle_partition(f: TreeProcess, m: int) -> GreedyPartition:
    pm = f.paths()
    stops = [lepingle_partition_path(pm[:, leaf], m) for leaf in range(pm.shape[1])]
    return GreedyPartition(m=m, stops=stops)


def _greedy_squares(pathmat: np.ndarray, m: int, active: np.ndarray) -> np.ndarray:
    """Sum of squared sampled jumps of the scale-m greedy partition, per path."""
    pm = pathmat
    osc = running_oscillation(pm)
    thr = 2.0**-m
    anchor = pm[0].copy()
    s2 = np.zeros(pm.shape[1])
    for t in range(1, pm.shape[0]):
        jump = pm[t] - anchor
        trig = active & (osc[t] > 0) & (np.abs(jump) >= thr * osc[t])
        s2[trig] += jump[trig] ** 2
        anchor[trig] = pm[t][trig]
    return s2


def min_nonzero_pairwise(pathmat: np.ndarray) -> np.ndarray:
    """Smallest nonzero |f_i - f_j| over index pairs, per path (inf if none)."""
    pm = pathmat
    n = pm.shape[0]
    out = np.full(pm.shape[1], np.inf)
    for j in range(1, n):
        d = np.abs(pm[:j] - pm[j])
        d[d == 0] = np.inf
        out = np.minimum(out, d.min(axis=0))
    return out


def lepingle_pathwise_bound(pathmat: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the square-scale domination of the r-variation.

    lhs = V^r(f)^2 and rhs = 64 * sum_m 2^{-(m-2)(r-2)} S_(m)^2, the m-sum
    truncated at the first scale where 2^-m M_inf falls below a quarter of
    the smallest nonzero pathwise jump (all later buckets are empty, so the
    truncation only sharpens the asserted inequality).
    """
    if not r > 2:
        raise ValueError("pathwise domination needs r > 2")
    pm = np.asarray(pathmat, dtype=np.float64)
    if pm.ndim == 1:
        pm = pm[:, None]
    lhs = variation_paths(pm, r) ** 2
    m_inf = running_oscillation(pm)[-1]
    d_min = min_nonzero_pairwise(pm)
    with np.errstate(divide="ignore", invalid="ignore"):
        m_star = np.where(m_inf > 0, np.floor(np.log2(4.0 * m_inf / d_min)), 1.0)
    m_star = np.where(np.isfinite(m_star), np.maximum(m_star, 2), 2).astype(np.int64)
    rhs = np.zeros(pm.shape[1])
    m_max = int(m_star.max(initial=2))
    for m in range(2, m_max + 1):
        active = (m <= m_star) & (m_inf > 0)
        if not active.any():
            break
        s2 = _greedy_squares(pm, m, active)
        rhs += 2.0 ** (-(m - 2) * (r - 2)) * s2
    return lhs, 64.0 * rhs


def comparable_jump_check(values: np.ndarray, r: float) -> dict:
    """Check the greedy partitions against the witness jumps of the r-variation.

    Every nonzero witness jump d = |f_{t'} - f_t| falls in the unique window
    2 < d / (2^-m M_t) <= 4; the claim is that the scale-m partition has a
    stop in (t', t] whose own jump is at least d / 8.
    """
    values = np.asarray(values, dtype=np.float64)
    res = variation(values, r)
    osc = running_oscillation(values[:, None])[:, 0]
    checked = 0
    failures = []
    parts: dict[int, list[int]] = {}
    for a, b in zip(res.witness, res.witness[1:]):
        d = abs(values[b] - values[a])
        if d == 0:
            continue
        m_t = osc[b]
        m = max(2, math.ceil(math.log2(2.0 * m_t / d) - 1e-12))
        while d / (2.0**-m * m_t) <= 2.0:
            m += 1
        while d / (2.0**-m * m_t) > 4.0:
            m -= 1
        if m < 2:
            continue  # outside the window handled by smaller scales
        if m not in parts:
            parts[m] = lepingle_partition_path(values, m)
        stops = parts[m]
        inside = [j for j, s in enumerate(stops) if a < s <= b]
        checked += 1
        if not inside:
            failures.append((a, b, m, "no stop in window"))
            continue
        j = max(j for j, s in enumerate(stops) if s <= b)
        if j == 0:
            failures.append((a, b, m, "stop has no predecessor"))
            continue
        jump = abs(values[stops[j]] - values[stops[j - 1]])
        if d > 8.0 * jump + 1e-12 * max(1.0, d):
            failures.append((a, b, m, f"jump ratio {d / jump if jump else np.inf:.3f}"))
    return {"checked": checked, "failures": failures}


# -- paraproducts -----------------------------------------------------------


def paraproduct_pairs(F: np.ndarray, g_pm: np.ndarray) -> np.ndarray:
    """Pi(F, g)_{s,t} = sum_{s<j<=t} F_{s,j-1} dg_j for all index pairs.

    F has shape (n, n, L) with F[s, j] the F_j-measurable row value; the
    result has the same shape with zeros on and below the diagonal.
    """
    n, L = g_pm.shape
    dg = np.diff(g_pm, axis=0)
    out = np.zeros((n, n, L))
    for s in range(n):
        acc = np.zeros(L)
        for t in range(s + 1, n):
            acc = acc + F[s, t - 1] * dg[t - 1]
            out[s, t] = acc
    return out


def paraproduct_deltaf_pairs(f_pm: np.ndarray, g_pm: np.ndarray) -> np.ndarray:
    """Pi(delta f, g)_{s,t} for all pairs, via the incremental recursion
    Pi_{s,t+1} = Pi_{s,t} + (f_t - f_s) dg_{t+1}."""
    n, L = g_pm.shape
    dg = np.diff(g_pm, axis=0)
    out = np.zeros((n, n, L))
    for s in range(n):
        acc = np.zeros(L)
        for t in range(s + 1, n):
            acc = acc + (f_pm[t - 1] - f_pm[s]) * dg[t - 1]
            out[s, t] = acc
    return out


def paraproduct(F: np.ndarray, g: TreeProcess | np.ndarray, s: int, t: int) -> np.ndarray:
    """Single paraproduct value per path; requires s <= t."""
    g_pm = g.paths() if isinstance(g, TreeProcess) else np.asarray(g, dtype=np.float64)
    if not 0 <= s <= t < g_pm.shape[0]:
        raise ValueError("need 0 <= s <= t within the time horizon")
    dg = np.diff(g_pm, axis=0)
    acc = np.zeros(g_pm.shape[1])
    for j in range(s + 1, t + 1):
        acc = acc + F[s, j - 1] * dg[j - 1]
    return acc


def paraproduct_deltaf(f, g, s: int, t: int) -> np.ndarray:
    f_pm = f.paths() if isinstance(f, TreeProcess) else np.asarray(f, dtype=np.float64)
    g_pm = g.paths() if isinstance(g, TreeProcess) else np.asarray(g, dtype=np.float64)
    if not 0 <= s <= t < g_pm.shape[0]:
        raise ValueError("need 0 <= s <= t within the time horizon")
    dg = np.diff(g_pm, axis=0)
    acc = np.zeros(g_pm.shape[1])
    for j in range(s + 1, t + 1):
        acc = acc + (f_pm[j - 1] - f_pm[s]) * dg[j - 1]
    return acc


def chen_residuals(pi_pairs: np.ndarray, f_pm: np.ndarray, g_pm: np.ndarray) -> float:
    """Max |delta Pi_{s,t,u} - (f_t - f_s)(g_u - g_t)| over all index triples."""
    n = pi_pairs.shape[0]
    worst = 0.0
    for s in range(n):
        for t in range(s, n):
            for u in range(t, n):
                resid = (
                    pi_pairs[s, u]
                    - pi_pairs[s, t]
                    - pi_pairs[t, u]
                    - (f_pm[t] - f_pm[s]) * (g_pm[u] - g_pm[t])
                )
                worst = max(worst, float(np.abs(resid).max()))
    return worst


def running_pair_sup(pi_pairs: np.ndarray) -> np.ndarray:
    """Pi*_t = sup_{0 <= n < n' <= t} |Pi_{n,n'}| per path, shape (n, L)."""
    n, _, L = pi_pairs.shape
    out = np.zeros((n, L))
    for t in range(1, n):
        out[t] = np.maximum(out[t - 1], np.abs(pi_pairs[:t, t]).max(axis=0))
    return out


def block_sup(pi_pairs: np.ndarray) -> np.ndarray:
    """B[t', t] = max_{t' <= u < t} |Pi_{u,t}| per path (suffix maxima)."""
    n, _, L = pi_pairs.shape
    B = np.zeros((n, n, L))
    for t in range(1, n):
        B[t - 1, t] = np.abs(pi_pairs[t - 1, t])
        for u in range(t - 2, -1, -1):
            B[u, t] = np.maximum(np.abs(pi_pairs[u, t]), B[u + 1, t])
    return B


def paraproduct_partition_path(pi_pairs_one: np.ndarray, m: int) -> list[int]:
    """Greedy partition of one path of a two-parameter process at scale m."""
    n = pi_pairs_one.shape[0]
    star = running_pair_sup(pi_pairs_one[:, :, None])[:, 0]
    stops = [0]
    for t in range(1, n):
        a = stops[-1]
        sup = np.abs(pi_pairs_one[a:t, t]).max(initial=0.0)
        if sup > 2.0 ** (-m - 1) * star[t]:
            stops.append(t)
    return stops


def paraproduct_partition_blocks(pi_pairs: np.ndarray, m: int, rho: float = 2.0) -> np.ndarray:
    """Per-path sum over blocks of (sup_{tau_{j-1} <= t < tau_j} |Pi_{t, tau_j}|)^rho
    for the scale-m greedy partition."""
    n, _, L = pi_pairs.shape
    B = block_sup(pi_pairs)
    star = running_pair_sup(pi_pairs)
    anchor = np.zeros(L, dtype=np.int64)
    acc = np.zeros(L)
    cols = np.arange(L)
    for t in range(1, n):
        sup_here = B[anchor, t, cols]
        trig = sup_here > 2.0 ** (-m - 1) * star[t]
        acc[trig] += sup_here[trig] ** rho
        anchor[trig] = t
    return acc


def paraproduct_variation_bound(pi_pairs: np.ndarray, r: float, rho: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the greedy-partition domination of the r-variation of a
    two-parameter adapted process (requires Pi_{t,t} = 0 and rho < r)."""
    if not 0 < rho < r:
        raise ValueError("need 0 < rho < r")
    n, _, L = pi_pairs.shape
    lhs = two_param_variation_paths(pi_pairs, r) ** r
    star = running_pair_sup(pi_pairs)[-1]
    d_min = np.full(L, np.inf)
    for t in range(1, n):
        d = np.abs(pi_pairs[:t, t])
        d[d == 0] = np.inf
        d_min = np.minimum(d_min, d.min(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        m_star = np.where(star > 0, np.floor(np.log2(star / d_min)), 0.0)
    m_star = np.where(np.isfinite(m_star), np.maximum(m_star, 0), 0).astype(np.int64)
    rhs = star**r / (1.0 - 2.0**-r)
    for m in range(int(m_star.max(initial=0)) + 1):
        active = m <= m_star
        if not active.any():
            break
        blocks = paraproduct_partition_blocks(pi_pairs, m, rho)
        rhs = rhs + np.where(active, 2.0**rho * (2.0**-m * star) ** (r - rho) * blocks, 0.0)
    return lhs, rhs


def variation_buckets(jumps: np.ndarray, star_at_end: np.ndarray) -> dict[int, list[int]]:
    """Scale buckets of a chain: index l lands at the unique m with
    2^{-m-1} Pi*_{u_l} < |Pi_{u_{l-1},u_l}| <= 2^{-m} Pi*_{u_l}."""
    out: dict[int, list[int]] = {}
    for l, (d, s) in enumerate(zip(jumps, star_at_end)):
        if d == 0 or s == 0:
            continue
        m = int(math.floor(-math.log2(d / s) + 1e-12))
        m = max(m, 0)
        while d > 2.0**-m * s:
            m -= 1
        while d <= 2.0 ** (-m - 1) * s:
            m += 1
        out.setdefault(m, []).append(l)
    return out


# -- weighted maximal data ---------------------------------------------------


def weighted_maximal_data(
    f_sub: np.ndarray, w_leaf: np.ndarray, tree: FiltrationTree
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted weak-type data for a nonnegative submartingale path matrix.

    Returns (lambdas, lhs, rhs) where at each breakpoint v of Mf_N (scanned
    via the closed sets {Mf_N >= v}) lhs = v * w{Mf_N >= v} and
    rhs = int_{Mf_N >= v} f_N Mw_N dmu, with w_k = E_k w and Mw its running
    maximum.
    """
    w_leaf = np.asarray(w_leaf, dtype=np.float64)
    if np.any(w_leaf <= 0):
        raise ValueError("weight must be positive")
    w_mart = Martingale.from_leaf_values(tree, w_leaf)
    mw = maximal_paths(w_mart.paths())[-1]
    mf = maximal_paths(f_sub)[-1]
    f_n = f_sub[-1]
    order = np.argsort(-mf, kind="stable")
    w_mass = np.cumsum((tree.leaf_prob * w_leaf)[order])
    mix_mass = np.cumsum((tree.leaf_prob * f_n * mw)[order])
    sorted_mf = mf[order]
    # last position of each distinct value in the descending order
    boundaries = np.nonzero(np.diff(sorted_mf) != 0)[0]
    idx = np.append(boundaries, len(sorted_mf) - 1)
    lams = sorted_mf[idx]
    keep = lams > 0
    return lams[keep], lams[keep] * w_mass[idx][keep], mix_mass[idx][keep]
