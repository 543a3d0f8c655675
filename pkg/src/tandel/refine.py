"""Refinement loop: grow the sample until every star is small and fat.

Two rules drive the loop, always in priority order.  Rule 1 fires on a
"big" configuration -- a cell corner at tangent distance >= epsilon
from its base (box-supported corners count on compact manifolds, where
an unbounded cell can only mean a coverage hole).  It inserts the
manifold point under the corner.  Rule 2 fires on a "bad" simplex --
one that fails the gamma0 quality test, either inside a star or among
the almost-cospherical simplices seen from a star -- and inserts a
point picked uniformly from a ball around the offending center, redrawn
until it is not a vertex of any small thin simplex (a "hitting set").
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import flake_pair_candidates, flake_triple_candidates
from .errors import (
    AttemptBudgetExhausted,
    DegenerateSimplex,
    HypothesesFailed,
    IterationCap,
    NoConvergence,
    OutOfChart,
    PickAuditFailed,
    SparsityViolation,
)
from .geometry import (
    ElementaryWeight,
    GammaClass,
    classify_gamma,
    edge_extremes,
    min_weighted_radius,
)
from .manifolds import Manifold, SampleSet, lift_from_tangent
from .stars import TangentialComplex, assemble_complex, cosph_star

# how far past reach/2 a chart lift may be attempted before shrinking
_CHART_SLACK = 2.0

MU0 = 1.0 / 9.0
EPS_TILDE0 = 1.0 / 4624.0  # = 1 / (2^4 (2^4 + 1)^2)


# ===== parameters =====

@dataclass
class Parameters:
    """Run parameters.  Construction is lenient; check_hypotheses judges."""
    epsilon: float
    gamma0: float
    alpha: float
    beta: float
    delta0: float
    mode: str = "practical"
    seed: int = 0
    pick_attempt_budget: int = 1000
    iteration_cap: int = 10 ** 6
    update_radius_mult: float = 12.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.gamma0 < 1.0:
            raise ValueError("gamma0 must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.0 < self.delta0 < 1.0:
            raise ValueError("delta0 must lie in (0, 1)")
        self.mode = str(self.mode).lower()
        if self.mode not in ("strict", "practical"):
            raise ValueError("mode must be 'strict' or 'practical'")
        if self.pick_attempt_budget < 1 or self.iteration_cap < 1:
            raise ValueError("budgets must be at least 1")
        if self.update_radius_mult <= 0:
            raise ValueError("update_radius_mult must be positive")


_PARAM_ORDER = ("epsilon", "gamma0", "alpha", "beta", "delta0", "mode",
                "seed", "pick_attempt_budget", "iteration_cap",
                "update_radius_mult")
_PARAM_TYPES = {"epsilon": float, "gamma0": float, "alpha": float,
                "beta": float, "delta0": float, "mode": str, "seed": int,
                "pick_attempt_budget": int, "iteration_cap": int,
                "update_radius_mult": float}


def read_parameters(path) -> Parameters:
    """Parse a `key = value` parameter file (# starts a comment)."""
    got = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _PARAM_TYPES:
                raise ValueError(f"{path}:{ln}: unknown parameter {key!r}")
            got[key] = _PARAM_TYPES[key](val)
    return Parameters(**got)


def write_parameters(path, params: Parameters):
    with open(path, "w") as fh:
        for key in _PARAM_ORDER:
            val = getattr(params, key)
            if isinstance(val, float):
                fh.write(f"{key} = {val:.17g}\n")
            else:
                fh.write(f"{key} = {val}\n")


# ===== derived constants and hypotheses =====

def unit_ball_volume(m: int) -> float:
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0)


@dataclass(frozen=True)
class DerivedConstants:
    mu0: float
    eps_tilde0: float
    beta_prime: float
    b_hyp: float
    b_lemma: float
    xi: float
    a_vol: float
    e_bound: float
    d_vol: float
    eps_tilde: float
    nu_m: float

    @property
    def b_eff(self) -> float:
        return max(self.b_hyp, self.b_lemma)


def derive_constants(params: Parameters, manifold: Manifold,
                     xi: float | None = None,
                     a_vol: float | None = None) -> DerivedConstants:
    """All quantities downstream bounds need, from (params, manifold).

    ``xi`` is the tubular-neighborhood margin used when comparing charts
    (default reach/16) and ``a_vol`` the chart-overlap multiplicity
    bound (default 2^m); both are heuristics and may be overridden.
    """
    m = manifold.m
    rch = manifold.reach
    beta = params.beta
    beta_prime = beta / (1.0 - 16.0 * EPS_TILDE0)
    b_hyp = 4.0 + 2.0 * (1.0 + 1152.0 * beta ** 2) ** 2
    b_lemma = 4.0 + 96.0 * beta * (1.0 + 1152.0 * beta ** 2)
    if a_vol is None:
        a_vol = float(2 ** m)
    if xi is None:
        xi = rch / 16.0
        xi_tilde = 1.0 / 16.0
    else:
        xi_tilde = xi / rch if math.isfinite(rch) else 0.0
    ax = a_vol * xi_tilde
    if ax >= 1.0:
        raise ValueError(
            f"overlap bound times chart margin must stay below 1 (got {ax:g})")
    e_bound = 2.0 * ((1.0 + ax) / (1.0 - ax)) * (
        18.0 * (params.alpha + 2.0 * beta_prime + 6.5 * EPS_TILDE0) + 1.0) ** m
    nu_m = unit_ball_volume(m)
    b_eff = max(b_hyp, b_lemma)
    d_vol = nu_m * ((b_eff + 1.0) * 2 ** m + a_vol * (2 ** (m + 1) + 1))
    eps_tilde = params.epsilon / rch if math.isfinite(rch) else 0.0
    return DerivedConstants(
        mu0=MU0, eps_tilde0=EPS_TILDE0, beta_prime=beta_prime,
        b_hyp=b_hyp, b_lemma=b_lemma, xi=xi, a_vol=a_vol,
        e_bound=e_bound, d_vol=d_vol, eps_tilde=eps_tilde, nu_m=nu_m)


@dataclass(frozen=True)
class HypothesisItem:
    name: str
    satisfied: bool
    value: float
    bound: float
    note: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    mode: str
    ok: bool
    items: tuple

    def failed(self):
        return [it.name for it in self.items if not it.satisfied]

    def item(self, name: str) -> HypothesisItem:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)


def check_hypotheses(params: Parameters, manifold: Manifold,
                     constants: DerivedConstants | None = None
                     ) -> HypothesisReport:
    """Evaluate the six parameter conditions the guarantees rest on.

    In strict mode the report is ok only when all six hold.  Practical
    mode demands the two structural ones (alpha < 1/2 and the beta
    floor) plus delta0 < 1/4, and records the rest as margins.
    """
    if constants is None:
        constants = derive_constants(params, manifold)
    m = manifold.m
    a, b, g0, d0 = params.alpha, params.beta, params.gamma0, params.delta0
    items = []

    items.append(HypothesisItem(
        "H0", a < 0.5, a, 0.5, "alpha below one half"))

    h1_bound = 2.0 / ((1.0 - d0 ** 2) * (1.0 - a - 4.5 * EPS_TILDE0))
    items.append(HypothesisItem(
        "H1", b >= h1_bound, b, h1_bound, "beta floor"))

    b_eff = constants.b_eff
    h2_bound = min(
        constants.nu_m * a ** m /
        (constants.e_bound ** (m + 1) * b ** m * constants.d_vol),
        1.0 / (b_eff + 1.0))
    items.append(HypothesisItem(
        "H2", g0 < h2_bound, g0, h2_bound, "gamma0 ceiling"))

    h3_bound = g0 ** (m + 1)
    items.append(HypothesisItem(
        "H3", d0 ** 2 <= h3_bound, d0 ** 2, h3_bound,
        "delta0 squared under gamma0^(m+1)"))

    if math.isfinite(manifold.reach):
        xi_tilde = constants.xi / manifold.reach
    else:
        xi_tilde = 1.0 / 16.0
    h4_bound = min(xi_tilde / (2.0 * (b + constants.beta_prime)),
                   g0 ** (m + 1) / (8.0 * b))
    items.append(HypothesisItem(
        "H4", constants.eps_tilde <= h4_bound, constants.eps_tilde, h4_bound,
        "scale fits the chart margin and quality budget"))

    h5_bound = d0 ** 2 * g0 ** (2 * m) / 1.1e9
    items.append(HypothesisItem(
        "H5", constants.eps_tilde <= h5_bound, constants.eps_tilde, h5_bound,
        "scale small enough for protection"))

    if params.mode == "strict":
        ok = all(it.satisfied for it in items)
    else:
        ok = items[0].satisfied and items[1].satisfied and d0 < 0.25
    return HypothesisReport(mode=params.mode, ok=ok, items=tuple(items))


# ===== configurations =====

class ConfigKind(enum.Enum):
    BIG = "big"
    BAD_STAR = "bad_star"
    BAD_COSPH = "bad_cosph"
    INCONSISTENT = "inconsistent"


@dataclass(frozen=True)
class UnfitConfiguration:
    kind: ConfigKind
    base: int
    simplex: tuple | None   # None for a box-supported corner
    radius: float
    target: np.ndarray      # tangent coordinates of the driving center


class RefinementState:
    """Everything the loop mutates: complex, cosph stars, logs, caches."""

    def __init__(self, cplx: TangentialComplex, params: Parameters,
                 constants: DerivedConstants):
        self.complex = cplx
        self.params = params
        self.constants = constants
        self.cosph = {}
        self.quality = {}
        self.event_log: list[str] = []
        self.events: list[dict] = []
        self.counters = {
            "rule1": 0, "rule2_star": 0, "rule2_cosph": 0,
            "rule2_inconsistent": 0,
            "pick_attempts": 0, "pick_audit_miss": 0, "shrinks": 0,
            "iterations": 0, "stale_big": 0,
        }
        self.pick_counter = 0
        self.final_audit = None

    @property
    def manifold(self):
        return self.complex.manifold

    @property
    def epsilon(self) -> float:
        return self.complex.epsilon

    def gamma_class(self, simplex) -> GammaClass:
        got = self.quality.get(simplex)
        if got is None:
            got = classify_gamma(simplex, self.params.gamma0,
                                 self.complex.points)
            self.quality[simplex] = got
        return got

    def refresh_cosph(self, p: int):
        self.cosph[p] = cosph_star(p, self.params.delta0, self.complex,
                                   self.params.gamma0)

    def summary(self) -> dict:
        radii = [r for star in self.complex.stars.values()
                 for _s, (_c, r) in star.centers.items()]
        n_entries = sum(len(cs.entries) for cs in self.cosph.values())
        return {
            "n_points": self.complex.n_points,
            "insertions": len(self.events),
            "max_center_radius": max(radii) if radii else 0.0,
            "cosph_entries": n_entries,
            "counters": dict(self.counters),
        }


def make_state(sample: SampleSet, manifold: Manifold, params: Parameters,
               prune_mult: float = 8.0,
               constants: DerivedConstants | None = None) -> RefinementState:
    """Assemble the complex, the cosph stars, and gate on the hypotheses."""
    if constants is None:
        constants = derive_constants(params, manifold)
    report = check_hypotheses(params, manifold, constants)
    if not report.ok:
        raise HypothesesFailed(
            f"{params.mode} mode rejects parameters: {report.failed()}")
    if abs(sample.epsilon - params.epsilon) > 1e-12 * params.epsilon:
        sample = SampleSet(points=sample.points, epsilon=params.epsilon,
                           sparsity=sample.sparsity)
    cplx = assemble_complex(sample, manifold, prune_mult=prune_mult)
    state = RefinementState(cplx, params, constants)
    for p in cplx.stars:
        state.refresh_cosph(p)
    return state


def _tangent_of(star, c):
    return star.chart.frame.basis @ (np.asarray(c) - star.chart.base)


def _star_bigs(state: RefinementState, p: int):
    """Big configurations of one star: real corners with R >= eps first
    (lex by simplex), then box-supported corners (compact manifolds only)."""
    star = state.complex.stars[p]
    eps = state.epsilon
    out = []
    for s in sorted(star.m_simplices()):
        c, r = star.centers[s]
        if r >= eps:
            out.append(UnfitConfiguration(
                ConfigKind.BIG, p, s, r, _tangent_of(star, c)))
    if math.isfinite(state.manifold.reach):
        synth = [t for t, s in zip(star.corners, star.corner_simplex)
                 if s is None]
        synth.sort(key=lambda t: tuple(np.round(t, 12)))
        for t in synth:
            out.append(UnfitConfiguration(
                ConfigKind.BIG, p, None, float(np.linalg.norm(t)),
                np.asarray(t, dtype=float)))
    return out


def _star_bad_stars(state: RefinementState, p: int):
    star = state.complex.stars[p]
    out = []
    for s in sorted(star.m_simplices()):
        if state.gamma_class(s) is not GammaClass.GOOD:
            c, r = star.centers[s]
            out.append(UnfitConfiguration(
                ConfigKind.BAD_STAR, p, s, r, _tangent_of(star, c)))
    return out


def _cosph_generator(state: RefinementState, p: int, tau):
    """The star m-simplex whose tangent ball exhibits tau, smallest gap."""
    star = state.complex.stars[p]
    m = state.manifold.m
    tau_set = set(tau)
    best = None
    for sigma in sorted(star.centers):
        if len(sigma) != m + 1 or not set(sigma) <= tau_set:
            continue
        (q,) = tau_set - set(sigma)
        c, r = star.centers[sigma]
        gap = float(((state.complex.points[q] - c) ** 2).sum() - r * r)
        if best is None or gap < best[0]:
            best = (gap, sigma, c, r)
    if best is None:
        raise KeyError(f"no generator for {tau} in the star of {p}")
    return best[1], best[2], best[3]


def _star_bad_cosph(state: RefinementState, p: int):
    # Every cosphericity entry is unfit, not only the thin ones: on a
    # curved manifold a near-cocircular quadruple lifts into a perfectly
    # thick (m+1)-simplex, yet leaving it in place lets neighboring
    # stars disagree about the diagonal and the union complex pinches.
    out = []
    for tau, _w in state.cosph[p].entries:
        star = state.complex.stars[p]
        _sigma, c, r = _cosph_generator(state, p, tau)
        out.append(UnfitConfiguration(
            ConfigKind.BAD_COSPH, p, tau, r, _tangent_of(star, c)))
    return out


def _star_inconsistent(state: RefinementState, p: int):
    """Star m-simplices of p that some other vertex's star rejects.

    Protection makes these impossible once the sample is fine enough;
    at coarse scale they do occur and are refined away like any other
    unfit configuration (inserting inside the driving tangent ball
    removes the contested simplex from the star that claims it).
    """
    star = state.complex.stars[p]
    stars = state.complex.stars
    out = []
    for s in sorted(star.m_simplices()):
        if any(q != p and s not in stars[q].centers for q in s):
            c, r = star.centers[s]
            out.append(UnfitConfiguration(
                ConfigKind.INCONSISTENT, p, s, r, _tangent_of(star, c)))
    return out


def classify_configurations(state: RefinementState):
    """All currently unfit configurations, in processing order."""
    bases = sorted(state.complex.stars)
    out = []
    for p in bases:
        out.extend(_star_bigs(state, p))
    for p in bases:
        out.extend(_star_bad_stars(state, p))
    for p in bases:
        out.extend(_star_bad_cosph(state, p))
    for p in bases:
        out.extend(_star_inconsistent(state, p))
    return out


def first_unfit(state: RefinementState) -> UnfitConfiguration | None:
    """First entry of classify_configurations, without building the list."""
    bases = sorted(state.complex.stars)
    for scan in (_star_bigs, _star_bad_stars, _star_bad_cosph,
                 _star_inconsistent):
        for p in bases:
            got = scan(state, p)
            if got:
                return got[0]
    return None


# ===== picking =====

@dataclass(frozen=True)
class PickingRegion:
    center: np.ndarray        # ambient coordinates
    center_tangent: np.ndarray
    radius: float
    volume: float


def picking_region(config: UnfitConfiguration,
                   state: RefinementState) -> PickingRegion:
    """Ball around the driving center with radius alpha * R."""
    star = state.complex.stars[config.base]
    m = state.manifold.m
    r = state.params.alpha * config.radius
    c = star.chart.base + star.chart.frame.basis.T @ config.target
    vol = unit_ball_volume(m) * r ** m
    return PickingRegion(center=c, center_tangent=np.array(config.target),
                         radius=r, volume=vol)


def find_hitting_set(x, r_ref: float, state: RefinementState):
    """Smallest-lex simplex sigma of sample points such that x * sigma
    is a gamma0 flake carrying a small weighted ball (radius < beta*R).

    Returns the vertex tuple or None.  Candidate pairs and triples come
    from the vectorized prefilter kernels; larger subsets (needed only
    for m >= 3) use a direct scan.
    """
    params = state.params
    pts = state.complex.points
    m = state.manifold.m
    # A flake only matters if it can later surface as a refinement
    # target, and rule priority keeps every target's tangent-centered
    # radius below epsilon, so the target's witness ball has radius at
    # most epsilon * sqrt(1 + (2*delta0/(1-delta0^2))^2), which
    # epsilon / (1 - 4*delta0^2) dominates.  Capping the search there
    # is what keeps the rejection test meaningful on round manifolds:
    # every sample quadruple on a sphere is exactly cospherical at
    # radius rch, so once beta*R exceeds rch the forbidden zones of
    # globe-spanning quadruples would blanket the whole picking region
    # and no candidate would ever be accepted.
    r_cap = min(params.beta * r_ref,
                params.epsilon / (1.0 - 4.0 * params.delta0 ** 2))
    edge_scale = 1.0 / math.sqrt(1.0 - 4.0 * params.delta0 ** 2)
    r_query = 2.0 * r_cap * edge_scale * (1.0 + 1e-9)
    cand = sorted(state.complex.tree.query_ball_point(np.asarray(x), r_query))
    if not cand:
        return None
    cand_pts = pts[cand]
    x = np.asarray(x, dtype=float)
    pts_aug = np.vstack([pts, x[None]])
    x_idx = len(pts)

    def confirmed(local_sigma):
        sigma = tuple(int(cand[i]) for i in local_sigma)
        tau = tuple(sorted(sigma)) + (x_idx,)
        if classify_gamma(tau, params.gamma0, pts_aug) is not GammaClass.FLAKE:
            return None
        try:
            rmin, _w = min_weighted_radius(tau, pts_aug, params.delta0)
        except DegenerateSimplex:
            # affinely degenerate: no circumscribing sphere in the span,
            # so no small ball either
            return None
        return sigma if rmin < r_cap else None

    for row in flake_pair_candidates(x, cand_pts, params.gamma0,
                                     r_cap * edge_scale):
        got = confirmed(row)
        if got:
            return got
    if m + 1 >= 3:
        for row in flake_triple_candidates(x, cand_pts, params.gamma0,
                                           r_cap * edge_scale):
            got = confirmed(row)
            if got:
                return got
    if m + 1 >= 4:
        d_edge = 2.0 * r_cap * edge_scale * (1.0 + 1e-9)
        dmat = np.linalg.norm(cand_pts[:, None] - cand_pts[None], axis=2)
        for k in range(4, m + 2):
            for combo in itertools.combinations(range(len(cand)), k):
                sub = dmat[np.ix_(combo, combo)]
                if sub[np.triu_indices(k, 1)].max() > d_edge:
                    continue
                got = confirmed(combo)
                if got:
                    return got
    return None


def _pick_audit(x, config: UnfitConfiguration, state: RefinementState):
    """Distance checks a valid pick must satisfy under the hypotheses."""
    star = state.complex.stars[config.base]
    c = star.chart.base + star.chart.frame.basis.T @ config.target
    r_ref = config.radius
    a = state.params.alpha
    slack = 4.5 * EPS_TILDE0
    d_center = float(np.linalg.norm(np.asarray(x) - c))
    d_sample = float(state.complex.tree.query(np.asarray(x))[0])
    ok_center = d_center <= (a + slack) * r_ref * (1.0 + 1e-12)
    floor = (1.0 - a - slack) * r_ref
    ok_sample = d_sample >= floor * (1.0 - 1e-12) and d_sample > r_ref / 3.0
    return (ok_center and ok_sample,
            f"|x-c|={d_center:.6g} cap={(a + slack) * r_ref:.6g} "
            f"d(x,P)={d_sample:.6g} floor={floor:.6g}")


def pick_valid(config: UnfitConfiguration, state: RefinementState):
    """Draw from the picking region until no hitting set exists.

    Raises:
        AttemptBudgetExhausted: every draw within the budget was a
            vertex of some small flake.
        PickAuditFailed: strict mode only -- the accepted point misses
            the distance bounds the guarantees promise.
    """
    params = state.params
    star = state.complex.stars[config.base]
    chart = star.chart
    m = state.manifold.m
    rch = state.manifold.reach
    cap = _CHART_SLACK * rch / 2.0 if math.isfinite(rch) else None
    rng = np.random.default_rng([params.seed, state.pick_counter])
    state.pick_counter += 1
    t_c = np.asarray(config.target, dtype=float)
    r_pick = params.alpha * config.radius
    for _ in range(params.pick_attempt_budget):
        state.counters["pick_attempts"] += 1
        direction = rng.normal(size=m)
        norm = np.linalg.norm(direction)
        if norm < 1e-300:
            continue
        y = t_c + direction / norm * r_pick * rng.uniform() ** (1.0 / m)
        try:
            x = lift_from_tangent(chart, y, max_radius=cap)
        except (OutOfChart, NoConvergence):
            continue
        if find_hitting_set(x, config.radius, state) is not None:
            continue
        ok, detail = _pick_audit(x, config, state)
        if not ok:
            if params.mode == "strict":
                raise PickAuditFailed(detail)
            state.counters["pick_audit_miss"] += 1
        return x
    raise AttemptBudgetExhausted(
        f"no valid pick in {params.pick_attempt_budget} attempts "
        f"(base={config.base}, kind={config.kind.value})")


# ===== insertion =====

def _witness_updates(state: RefinementState, p: int, x_idx: int):
    """Add the new site as a cosph witness to an untouched star."""
    star = state.complex.stars[p]
    cs = state.cosph.get(p)
    if cs is None:
        return
    params = state.params
    m = state.manifold.m
    pts = state.complex.points
    x = pts[x_idx]
    best = dict(cs.entries)
    changed = False
    for sigma, (c, r) in star.centers.items():
        if len(sigma) != m + 1 or r >= state.epsilon:
            continue
        if state.gamma_class(sigma) is not GammaClass.GOOD:
            continue
        gap = float(((x - c) ** 2).sum() - r * r)
        if gap < 0.0:
            continue
        ell_sigma, _ = edge_extremes(sigma, pts)
        dq = np.linalg.norm(pts[list(sigma)] - x, axis=1)
        ell_tau = min(ell_sigma, float(dq.min()))
        if gap <= (params.delta0 * ell_tau) ** 2:
            tau = tuple(sorted(sigma + (x_idx,)))
            w = ElementaryWeight(x_idx, float(np.sqrt(gap)))
            if tau not in best or w.weight < best[tau].weight:
                best[tau] = w
                changed = True
    if changed:
        cs.entries = [(tau, best[tau]) for tau in sorted(best)]


def insert(x, state: RefinementState, rule: str = "RULE2",
           base: int = -1, simplex=None) -> dict:
    """Insert x into the complex and keep every cache coherent.

    Raises:
        SparsityViolation: x sits within mu0 * epsilon of the sample,
            which would break the packing argument (always fatal).
    """
    x = np.asarray(x, dtype=float)
    d = float(state.complex.tree.query(x)[0])
    floor = state.constants.mu0 * state.epsilon
    if d <= floor:
        raise SparsityViolation(
            f"insertion at distance {d:.6g} <= mu0*eps = {floor:.6g}")
    info = state.complex.insert_point(
        x, update_radius=state.params.update_radius_mult * state.epsilon)
    x_idx = info["index"]
    for p in info["recomputed"]:
        state.refresh_cosph(p)
    state.refresh_cosph(x_idx)
    for p in info["untouched"]:
        _witness_updates(state, p, x_idx)
    ids = "synthetic" if simplex is None else ",".join(str(v) for v in simplex)
    coords = ",".join(f"{v:.17g}" for v in x)
    line = f"{rule} base={base} simplex={ids} inserted={coords} dist_to_P={d:.17g}"
    state.event_log.append(line)
    state.events.append({"rule": rule, "base": base, "simplex": simplex,
                         "x": x, "dist": d, "index": x_idx,
                         "recomputed": info["recomputed"]})
    return info


def _rule1(state: RefinementState, config: UnfitConfiguration):
    """Insert the manifold point under a big corner, shrinking toward
    the base until the lift lands strictly inside the corner ball."""
    star = state.complex.stars[config.base]
    chart = star.chart
    rch = state.manifold.reach
    cap = _CHART_SLACK * rch / 2.0 if math.isfinite(rch) else None
    t_star = np.asarray(config.target, dtype=float)
    c = chart.base + chart.frame.basis.T @ t_star
    r = config.radius
    s = 1.0
    for _ in range(400):
        y = s * t_star
        try:
            x = lift_from_tangent(chart, y, max_radius=cap)
        except (OutOfChart, NoConvergence):
            state.counters["shrinks"] += 1
            s *= 0.85
            continue
        if np.linalg.norm(x - c) < r * (1.0 - 1e-12):
            state.counters["rule1"] += 1
            return insert(x, state, rule="RULE1", base=config.base,
                          simplex=config.simplex)
        state.counters["shrinks"] += 1
        s *= 0.85
    raise NoConvergence(
        f"rule 1 failed to land inside the corner ball at base {config.base}")


def _revalidated_big(state: RefinementState, p: int):
    """Big corners can go stale when an insertion lands outside the
    update radius but still cuts a far-flung cell; rebuild before use."""
    state.complex.recompute_star(p)
    state.refresh_cosph(p)
    got = _star_bigs(state, p)
    if not got:
        state.counters["stale_big"] += 1
    return got[0] if got else None


def refine(state: RefinementState) -> RefinementState:
    """Run the two rules to quiescence (rule 1 always first).

    Raises:
        IterationCap: the loop exceeded params.iteration_cap.
    """
    params = state.params
    if not 0.0 < params.delta0 < 0.25:
        raise HypothesesFailed("refinement needs 0 < delta0 < 1/4")
    for _ in range(params.iteration_cap):
        state.counters["iterations"] += 1
        config = first_unfit(state)
        if config is None:
            state.final_audit = _final_audit(state)
            return state
        if config.kind is ConfigKind.BIG:
            fresh = _revalidated_big(state, config.base)
            if fresh is None:
                continue
            _rule1(state, fresh)
        else:
            x = pick_valid(config, state)
            key = {ConfigKind.BAD_STAR: "rule2_star",
                   ConfigKind.BAD_COSPH: "rule2_cosph",
                   ConfigKind.INCONSISTENT: "rule2_inconsistent"}[config.kind]
            state.counters[key] += 1
            insert(x, state, rule="RULE2", base=config.base,
                   simplex=config.simplex)
    raise IterationCap(f"no quiescence within {params.iteration_cap} iterations")


def refine_sample(sample: SampleSet, manifold: Manifold,
                  params: Parameters) -> RefinementState:
    """Convenience wrapper: build the state and refine it."""
    return refine(make_state(sample, manifold, params))


def _final_audit(state: RefinementState) -> dict:
    """Post-quiescence measurements recorded for reporting."""
    eps = state.epsilon
    radii = []
    bad = 0
    for star in state.complex.stars.values():
        for s in star.m_simplices():
            _c, r = star.centers[s]
            radii.append(r)
            if state.gamma_class(s) is not GammaClass.GOOD:
                bad += 1
    entries = [(p, tau, w) for p, cs in state.cosph.items()
               for tau, w in cs.entries]
    bad_entries = [t for _p, t, _w in entries
                   if state.gamma_class(t) is not GammaClass.GOOD]
    pts = state.complex.points
    if len(pts) > 1:
        d_nn = cKDTree(pts).query(pts, k=2)[0][:, 1]
        min_pair = float(d_nn.min())
    else:
        min_pair = float("inf")
    return {
        "max_center_radius": max(radii) if radii else 0.0,
        "radius_ok": (not radii) or max(radii) < eps,
        "bad_m_simplices": bad,
        "cosph_entries": len(entries),
        "bad_cosph_entries": len(bad_entries),
        "inconsistencies": len(state.complex.consistency_report()),
        "min_pairwise_distance": min_pair,
        "sparsity_ok": min_pair > state.constants.mu0 * eps,
    }
