"""Deterministic scenario generators: adversarial constructions and random
instance families.

Each construction reproduces a demand pattern that forces a welfare loss on a
class of online schedulers; adaptive ones observe the algorithm's executed
blocks (only) and branch accordingly, and every branch decision is
recomputable from the run trace via the generator's ``audit`` dict, which
also carries the construction's reference optimum for ratio reporting.

Constructions stated at unit target size are generated at a configurable
integer target ``B`` by scaling sizes; values are multiples of the price
floor where the construction normalizes it to 1.  All generators are
deterministic functions of their arguments and seed; adaptive generators are
single-run objects.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .adversary import InclusionPolicy, TipPriority, ValueAscending
from .core import (
    BlockRecord,
    Discount,
    Patience,
    Scenario,
    ScenarioError,
    Transaction,
    welfare,
)
from .mechanisms import (
    InfeasibleParametersError,
    MechanismParams,
    RunResult,
    run_price_based,
)

__all__ = [
    "ScenarioBundle",
    "random_family",
    "c_below_two",
    "eip_c2_failure",
    "log_range",
    "discount_mix",
    "patience_global",
    "three_resources",
    "three_resources_params",
    "adaptive_price_adversary",
    "PriceAdversaryReport",
    "measure_t_star",
    "measure_climb",
]


@dataclass
class ScenarioBundle:
    """A scenario plus the inclusion policy it requires and builder notes."""

    scenario: Scenario
    policy: InclusionPolicy | None = None
    notes: dict = field(default_factory=dict)

    def audit(self) -> dict:
        gen = self.scenario.generator
        return dict(getattr(gen, "audit", {})) if gen is not None else {}


# ---------------------------------------------------------------------------
# Seeded random instances (positive-theorem harness)
# ---------------------------------------------------------------------------


def random_family(
    seed: int,
    horizon: int,
    value_range: tuple[float, float],
    q_max: int,
    load_factor: float,
    *,
    B: int,
    eta: float,
    p_min: float = 1.0,
) -> Scenario:
    """Per-step arrivals with log-uniform unit values and uniform sizes.

    The per-step count is chosen so the expected arriving size per step is
    ``load_factor * B``.  Values must respect the dominance hypothesis
    v >= e^eta * p_min.  Deterministic in ``seed``.
    """
    v_lo, v_hi = value_range
    if v_lo < math.exp(eta) * p_min * (1.0 - 1e-12):
        raise ValueError(
            f"lowest value {v_lo} below e^eta * p_min = {math.exp(eta) * p_min}"
        )
    if v_hi < v_lo:
        raise ValueError(f"empty value range [{v_lo}, {v_hi}]")
    if q_max < 1 or B < 1:
        raise ValueError("sizes are positive integers")
    if load_factor < 0:
        raise ValueError(f"load factor must be >= 0, got {load_factor}")
    rng = random.Random(seed)
    txs: list[Transaction] = []
    if load_factor > 0:
        per_step = max(1, round(load_factor * B / ((1 + q_max) / 2)))
        ln_lo, ln_hi = math.log(v_lo), math.log(v_hi)
        nid = 0
        for t in range(1, horizon + 1):
            for _ in range(per_step):
                q = rng.randint(1, q_max)
                v = math.exp(rng.uniform(ln_lo, ln_hi))
                txs.append(Transaction(id=nid, arrival=t, size=(q,), unit_value=v))
                nid += 1
    return Scenario(
        capacities=(float(B),), transactions=txs, horizon_hint=horizon, seed=seed
    )


# ---------------------------------------------------------------------------
# Max-block-size construction (c < 2)
# ---------------------------------------------------------------------------


class _CBelowTwoGenerator:
    """First half: each step one red (size B, unit value 1) and one green
    (size just over c*B/2, unit value 2); at most one fits per block.  At
    half time, branch on the number of executed greens G: few greens means
    high-value size-B demand arrives next (the first half was wasted on
    reds), many greens means unit-value dust floods in (the capacity spent
    on greens is unrecoverable)."""

    def __init__(self, horizon: int, c: float, B: int, eps: float) -> None:
        self.horizon = horizon
        self.half = horizon // 2
        self.quarter = horizon // 4
        self.B = B
        self.green_size = int(math.floor(c * B / 2.0)) + max(1, round(eps * B))
        if not (self.green_size <= B):
            raise InfeasibleParametersError(
                f"green size {self.green_size} exceeds target {B}; shrink eps"
            )
        assert self.green_size > (c - 1) * B  # holds for any c < 2
        self.dust_size = max(1, B // 64)
        self.dust_target = 2 * math.ceil(c * B / self.dust_size)
        self.green_ids: set[int] = set()
        self.dust_ids: set[int] = set()
        self.dust_outstanding = 0
        self.greens_first_half = 0
        self.branch: str | None = None
        self.audit: dict = {}
        self._next_id = 0
        self._started = False

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def _observe(self, previous: BlockRecord | None) -> None:
        if previous is None:
            return
        for tid, _frac in previous.executed:
            if tid in self.green_ids and previous.time <= self.half:
                self.greens_first_half += 1
            if tid in self.dust_ids:
                self.dust_outstanding -= 1

    def arrivals(self, t: int, previous: BlockRecord | None) -> list[Transaction]:
        if t == 1:
            if self._started:
                raise ScenarioError("adaptive generators are single-run objects")
            self._started = True
        self._observe(previous)
        out: list[Transaction] = []
        if t <= self.half:
            out.append(
                Transaction(id=self._new_id(), arrival=t, size=(self.B,), unit_value=1.0)
            )
            gid = self._new_id()
            self.green_ids.add(gid)
            out.append(
                Transaction(id=gid, arrival=t, size=(self.green_size,), unit_value=2.0)
            )
        elif t <= self.horizon:
            if self.branch is None:
                g = self.greens_first_half
                self.branch = "I" if g <= self.quarter else "II"
                optimum = (
                    2.0 * self.horizon * self.B
                    if self.branch == "I"
                    else 1.5 * self.horizon * self.B
                )
                self.audit = {
                    "greens_first_half": g,
                    "branch": self.branch,
                    "optimum": optimum,
                }
            if self.branch == "I":
                out.append(
                    Transaction(
                        id=self._new_id(), arrival=t, size=(self.B,), unit_value=2.0
                    )
                )
            else:
                while self.dust_outstanding < self.dust_target:
                    did = self._new_id()
                    self.dust_ids.add(did)
                    out.append(
                        Transaction(
                            id=did, arrival=t, size=(self.dust_size,), unit_value=1.0
                        )
                    )
                    self.dust_outstanding += 1
        return out


def c_below_two(horizon: int, c: float, B: int, eps: float, seed: int = 0) -> ScenarioBundle:
    """Adaptive construction forcing a loss on any max-block-size c*B
    scheduler with c < 2; reports the branch optimum (2*T*B or 1.5*T*B)."""
    if not (1.0 < c < 2.0):
        raise InfeasibleParametersError(f"requires 1 < c < 2, got {c}")
    if horizon % 2 != 0 or horizon < 8:
        raise ValueError(f"horizon must be even and >= 8, got {horizon}")
    if eps <= 0 or eps >= 1.0 - c / 2.0:
        raise ValueError(f"eps must be in (0, {1.0 - c / 2.0}), got {eps}")
    gen = _CBelowTwoGenerator(horizon, c, B, eps)
    scenario = Scenario(
        capacities=(float(B),), generator=gen, horizon_hint=horizon, seed=seed
    )
    return ScenarioBundle(
        scenario=scenario,
        policy=None,
        notes={"half": horizon // 2, "green_size": gen.green_size, "c": c},
    )


# ---------------------------------------------------------------------------
# c = 2 failure stream (tip-prioritized just-over-target demand)
# ---------------------------------------------------------------------------


def eip_c2_failure(
    params: MechanismParams, eps: float, horizon: int | None = None, seed: int = 0
) -> ScenarioBundle:
    """Static stream defeating the c = 2 mechanism: once the price sits at
    the floor, each step brings one high transaction (size B, 10x floor) and
    tip-prioritized low demand totaling (1+eps)*B at 2x floor, so blocks
    close at (1+eps)*B, the high transaction never fits, and the price climbs
    only at rate eta*eps per block."""
    if abs(params.c - 2.0) > 1e-9:
        raise ValueError(f"requires c = 2, got c = {params.c}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    B = int(params.B)
    if B != params.B:
        raise ValueError("target size must be an integer number of gas units")
    low_size = round((1.0 + eps) * B)
    if low_size <= B:
        raise ValueError(f"eps*B must round to at least one gas unit (eps={eps}, B={B})")
    eps_eff = low_size / B - 1.0
    decay = (
        math.ceil(math.log(params.p_1 / params.p_min) / params.eta)
        if params.p_1 > params.p_min
        else 0
    )
    climb = math.ceil(math.log(2.0) / (params.eta * eps_eff))
    if horizon is None:
        horizon = decay + climb + 10
    txs: list[Transaction] = []
    tips: dict[int, float] = {}
    nid = 0
    for t in range(decay + 1, horizon + 1):
        txs.append(
            Transaction(id=nid, arrival=t, size=(B,), unit_value=10.0 * params.p_min)
        )
        nid += 1
        txs.append(
            Transaction(
                id=nid, arrival=t, size=(low_size,), unit_value=2.0 * params.p_min
            )
        )
        tips[nid] = 1.0
        nid += 1
    scenario = Scenario(
        capacities=(float(B),), transactions=txs, horizon_hint=horizon, seed=seed
    )
    return ScenarioBundle(
        scenario=scenario,
        policy=TipPriority(tips=tips),
        notes={
            "decay": decay,
            "expected_climb": math.log(2.0) / (params.eta * eps_eff),
            "eps_effective": eps_eff,
            "optimum_per_block": 10.0 * params.p_min * B,
            "low_size": low_size,
        },
    )


def measure_t_star(result: RunResult, params: MechanismParams) -> int:
    """Half the time for the posted price to exceed twice the floor."""
    threshold = math.log(2.0 * params.p_min)
    for rec in result.trace.records:
        if rec.log_prices[0] > threshold + 1e-12:
            return rec.time // 2
    return result.trace.records[-1].time // 2


# ---------------------------------------------------------------------------
# Logarithmic value-range stream
# ---------------------------------------------------------------------------


def log_range(
    params: MechanismParams,
    H: float,
    L: float,
    horizon: int | None = None,
    seed: int = 0,
) -> ScenarioBundle:
    """Unbounded demand at value H and tip-prioritized unbounded demand at
    value L (both times the floor).  While the price is at most L the blocks
    fill to c*B with low demand, so the climb out of the floor takes about
    ln(L) / ((c-1) * eta) blocks and accumulates slackness (c-1) per block."""
    if not (H > L > 1.0):
        raise ValueError(f"requires H > L > 1, got H={H}, L={L}")
    B = int(params.B)
    if B != params.B:
        raise ValueError("target size must be an integer number of gas units")
    n_chunks = math.ceil(params.c)
    chunk = params.c * B / n_chunks
    if chunk != int(chunk):
        raise ValueError(
            f"c*B must split into {n_chunks} integer chunks (c={params.c}, B={B})"
        )
    chunk = int(chunk)
    decay = (
        math.ceil(math.log(params.p_1 / params.p_min) / params.eta)
        if params.p_1 > params.p_min
        else 0
    )
    expected_climb = math.log(L) / (params.eta * (params.c - 1.0))
    if horizon is None:
        horizon = decay + math.ceil(expected_climb) + 20
    txs: list[Transaction] = []
    tips: dict[int, float] = {}
    nid = 0
    for t in range(decay + 1, horizon + 1):
        for _ in range(n_chunks):
            txs.append(
                Transaction(
                    id=nid, arrival=t, size=(chunk,), unit_value=H * params.p_min
                )
            )
            nid += 1
        for _ in range(n_chunks):
            txs.append(
                Transaction(
                    id=nid, arrival=t, size=(chunk,), unit_value=L * params.p_min
                )
            )
            tips[nid] = 1.0
            nid += 1
    scenario = Scenario(
        capacities=(float(B),), transactions=txs, horizon_hint=horizon, seed=seed
    )
    return ScenarioBundle(
        scenario=scenario,
        policy=TipPriority(tips=tips),
        notes={
            "decay": decay,
            "expected_climb": expected_climb,
            "optimum_per_block": H * params.p_min * B,
            "chunk": chunk,
        },
    )


def measure_climb(result: RunResult, params: MechanismParams, L: float, decay: int) -> int:
    """Consecutive blocks after the decay prefix with posted price <= L*floor."""
    limit = math.log(L * params.p_min)
    climb = 0
    for rec in result.trace.records:
        if rec.time <= decay:
            continue
        if rec.log_prices[0] <= limit + 1e-12:
            climb += 1
        else:
            break
    return climb


# ---------------------------------------------------------------------------
# Discount-mix construction (time-decaying values)
# ---------------------------------------------------------------------------


class _DiscountMixGenerator:
    """p patient double-value transactions up front, one decaying unit-value
    ("hasty") transaction per step for p steps.  If at least p/2 hasty ones
    executed by time p, a wave of 2p more patient double-value transactions
    arrives; otherwise one fresh decaying transaction arrives per step for
    the middle third, and the final third is silent."""

    def __init__(self, rho_min: float, B: int, p: int) -> None:
        self.rho = rho_min
        self.B = B
        self.p = p
        self.horizon = 3 * p
        self.hasty_ids: set[int] = set()
        self.hasty_executed = 0
        self.branch: str | None = None
        self.audit: dict = {}
        self._next_id = 0
        self._started = False

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def _observe(self, previous: BlockRecord | None) -> None:
        if previous is None:
            return
        if previous.time <= self.p:
            for tid, _f in previous.executed:
                if tid in self.hasty_ids:
                    self.hasty_executed += 1

    def arrivals(self, t: int, previous: BlockRecord | None) -> list[Transaction]:
        if t == 1:
            if self._started:
                raise ScenarioError("adaptive generators are single-run objects")
            self._started = True
        self._observe(previous)
        out: list[Transaction] = []
        p, B = self.p, self.B
        if t == 1:
            for _ in range(p):
                out.append(
                    Transaction(id=self._new_id(), arrival=1, size=(B,), unit_value=2.0)
                )
        if t <= p:
            hid = self._new_id()
            self.hasty_ids.add(hid)
            out.append(
                Transaction(
                    id=hid,
                    arrival=t,
                    size=(B,),
                    unit_value=1.0,
                    sensitivity=Discount(rho=self.rho),
                )
            )
        elif t <= 2 * p:
            if self.branch is None:
                h = self.hasty_executed
                self.branch = "I" if 2 * h >= p else "II"
                optimum = 6.0 * p * B if self.branch == "I" else 4.0 * p * B
                self.audit = {
                    "hasty_executed": h,
                    "branch": self.branch,
                    "optimum": optimum,
                }
            if self.branch == "I":
                if t == p + 1:
                    for _ in range(2 * p):
                        out.append(
                            Transaction(
                                id=self._new_id(), arrival=t, size=(B,), unit_value=2.0
                            )
                        )
            else:
                out.append(
                    Transaction(
                        id=self._new_id(),
                        arrival=t,
                        size=(B,),
                        unit_value=1.0,
                        sensitivity=Discount(rho=self.rho),
                    )
                )
        return out


def discount_mix(
    rho_min: float,
    B: int,
    K: int,
    gamma_delta: int = 24,
    seed: int = 0,
) -> ScenarioBundle:
    """Adaptive mixed-patience construction over horizon 3p; p satisfies both
    (1 - rho_min)^p <= 1/2 and 3p >= K * gamma_delta (headroom over the
    tested algorithm's extension-plus-slackness)."""
    if not (0.0 < rho_min < 1.0):
        raise ValueError(f"rho_min must be in (0, 1), got {rho_min}")
    if K < 1 or gamma_delta < 1:
        raise ValueError("headroom factors must be >= 1")
    p_rho = math.ceil(math.log(2.0) / -math.log1p(-rho_min))
    p = max(p_rho, math.ceil(K * gamma_delta / 3.0), 2)
    gen = _DiscountMixGenerator(rho_min, B, p)
    scenario = Scenario(
        capacities=(float(B),), generator=gen, horizon_hint=3 * p, seed=seed
    )
    return ScenarioBundle(
        scenario=scenario, policy=None, notes={"p": p, "horizon": 3 * p, "rho": rho_min}
    )


# ---------------------------------------------------------------------------
# Global-patience construction
# ---------------------------------------------------------------------------


class _PatienceGlobalGenerator:
    """p unit-value greens at time 1, one double-value red per step for the
    next p-1 steps, all with the same patience window p.  Branch at time p on
    the number of executed reds: many reds means the greens are about to
    expire unscheduled and nothing more arrives; few reds means a wave of p
    fresh double-value transactions lands at p+1."""

    def __init__(self, p: int, B: int) -> None:
        self.p = p
        self.B = B
        self.horizon = 2 * p
        self.red_ids: set[int] = set()
        self.reds_executed = 0
        self.branch: str | None = None
        self.audit: dict = {}
        self._next_id = 0
        self._started = False

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def _observe(self, previous: BlockRecord | None) -> None:
        if previous is None:
            return
        if previous.time <= self.p:
            for tid, _f in previous.executed:
                if tid in self.red_ids:
                    self.reds_executed += 1

    def arrivals(self, t: int, previous: BlockRecord | None) -> list[Transaction]:
        if t == 1:
            if self._started:
                raise ScenarioError("adaptive generators are single-run objects")
            self._started = True
        self._observe(previous)
        out: list[Transaction] = []
        p, B = self.p, self.B
        if t == 1:
            for _ in range(p):
                out.append(
                    Transaction(
                        id=self._new_id(),
                        arrival=1,
                        size=(B,),
                        unit_value=1.0,
                        sensitivity=Patience(window=p),
                    )
                )
        elif t <= p:
            rid = self._new_id()
            self.red_ids.add(rid)
            out.append(
                Transaction(
                    id=rid,
                    arrival=t,
                    size=(B,),
                    unit_value=2.0,
                    sensitivity=Patience(window=p),
                )
            )
        elif t == p + 1:
            r = self.reds_executed
            self.branch = "I" if 2 * r >= p else "II"
            optimum = (3.0 * p - 2.0) * B if self.branch == "I" else (4.0 * p - 1.0) * B
            self.audit = {"reds_executed": r, "branch": self.branch, "optimum": optimum}
            if self.branch == "II":
                for _ in range(p):
                    out.append(
                        Transaction(
                            id=self._new_id(),
                            arrival=t,
                            size=(B,),
                            unit_value=2.0,
                            sensitivity=Patience(window=p),
                        )
                    )
        return out


def patience_global(p: int, B: int, seed: int = 0) -> ScenarioBundle:
    """Adaptive construction showing a fixed shared patience window still
    forces a constant welfare loss; horizon is 2p."""
    if p < 2:
        raise ValueError(f"patience level must be >= 2, got {p}")
    gen = _PatienceGlobalGenerator(p, B)
    scenario = Scenario(
        capacities=(float(B),), generator=gen, horizon_hint=2 * p, seed=seed
    )
    return ScenarioBundle(scenario=scenario, policy=None, notes={"p": p, "horizon": 2 * p})


# ---------------------------------------------------------------------------
# Three-resource construction
# ---------------------------------------------------------------------------


class _ThreeResourceGenerator:
    """Resources (anchor, X, Y, Z) with unit caps on X, Y, Z; the anchor
    carries the value-bearing size and never binds.  At time 1: t units of
    the bundle {X, Z} and t of {Y, Z}, all unit value.  Z's capacity forces
    one bundle type to at most half allocation over the first t blocks; the
    second wave demands the matching singleton, which the clairvoyant packs
    alongside the withheld bundles."""

    def __init__(self, t_half: int) -> None:
        self.t_half = t_half
        self.horizon = 2 * t_half
        self.xz_ids: set[int] = set()
        self.yz_ids: set[int] = set()
        self.xz_executed = 0
        self.yz_executed = 0
        self.branch: str | None = None
        self.audit: dict = {}
        self._next_id = 0
        self._started = False

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def _observe(self, previous: BlockRecord | None) -> None:
        if previous is None:
            return
        if previous.time <= self.t_half:
            for tid, _f in previous.executed:
                if tid in self.xz_ids:
                    self.xz_executed += 1
                elif tid in self.yz_ids:
                    self.yz_executed += 1

    def arrivals(self, t: int, previous: BlockRecord | None) -> list[Transaction]:
        if t == 1:
            if self._started:
                raise ScenarioError("adaptive generators are single-run objects")
            self._started = True
        self._observe(previous)
        out: list[Transaction] = []
        if t == 1:
            for _ in range(self.t_half):
                xid = self._new_id()
                self.xz_ids.add(xid)
                out.append(
                    Transaction(id=xid, arrival=1, size=(1, 1, 0, 1), unit_value=1.0)
                )
                yid = self._new_id()
                self.yz_ids.add(yid)
                out.append(
                    Transaction(id=yid, arrival=1, size=(1, 0, 1, 1), unit_value=1.0)
                )
        elif t == self.t_half + 1:
            starved = "X" if self.xz_executed <= self.yz_executed else "Y"
            self.branch = starved
            self.audit = {
                "alloc_xz": self.xz_executed,
                "alloc_yz": self.yz_executed,
                "starved": starved,
                "optimum": 3.0 * self.t_half,
            }
            size = (1, 1, 0, 0) if starved == "X" else (1, 0, 1, 0)
            for _ in range(self.t_half):
                out.append(
                    Transaction(id=self._new_id(), arrival=t, size=size, unit_value=1.0)
                )
        return out


def three_resources(t_half: int, seed: int = 0) -> ScenarioBundle:
    """Adaptive three-resource construction (plus a non-binding anchor
    resource carrying the value units); reference optimum is 3*t_half."""
    if t_half < 2:
        raise ValueError(f"t must be >= 2, got {t_half}")
    gen = _ThreeResourceGenerator(t_half)
    anchor_cap = 8.0  # block demand on the anchor never exceeds a few units
    scenario = Scenario(
        capacities=(anchor_cap, 1.0, 1.0, 1.0),
        generator=gen,
        horizon_hint=2 * t_half,
        seed=seed,
    )
    return ScenarioBundle(
        scenario=scenario, policy=None, notes={"t": t_half, "horizon": 2 * t_half}
    )


def three_resources_params(eta: float = 0.125) -> list[MechanismParams]:
    """Per-resource parameters for running the price mechanism on the
    three-resource construction: low floors so unit-value demand clears."""
    floor = 0.05
    anchor = MechanismParams(B=8.0, c=2.0, eta=eta, p_min=floor, p_1=floor)
    unit = MechanismParams(B=1.0, c=2.0, eta=eta, p_min=floor, p_1=floor)
    return [anchor, unit, unit, unit]


# ---------------------------------------------------------------------------
# Interactive adversary against price-based mechanisms
# ---------------------------------------------------------------------------


@dataclass
class PriceAdversaryReport:
    r: float
    T: int
    R: int
    m: int
    m_prime: int
    fraction: float
    bound: float
    passed: bool
    alg_welfare: float
    optimum: float
    price_transcripts_identical: bool

    def to_json(self) -> dict:
        return {
            "check": "price_adversary",
            "pass": self.passed,
            "r": self.r,
            "m": self.m,
            "m_prime": self.m_prime,
            "ratio": self.fraction,
            "bound": self.bound,
        }


def adaptive_price_adversary(
    params: MechanismParams, gamma: int, delta: int, H: float
) -> PriceAdversaryReport:
    """Drive a price-posting mechanism down its decision tree and exhibit two
    leaf-colliding demand profiles.

    With T = gamma + delta, R = T + gamma and r = H^(1/4^(gamma+delta)),
    profile number m (0 <= m <= 2^R) contains (R + delta) transactions of
    size B at each value r^i * floor for i <= m, all arriving at time 1; the
    adversary always serves the lowest-value eligible transactions.  Two
    profiles m < m' must produce identical executed histories (hence
    bit-identical price transcripts), and replaying profile m' shows the
    mechanism earns at most a 2/r fraction of the clairvoyant r^{m'}-per-block
    optimum over [1, T].
    """
    if gamma < 1 or delta < 0:
        raise ValueError("need gamma >= 1 and delta >= 0")
    if abs(params.p_1 - params.p_min) > 1e-12 * params.p_min:
        raise ValueError("profile values are floor-normalized; use p_1 = p_min")
    T = gamma + delta
    R = T + gamma
    if R > 16:
        raise InfeasibleParametersError(f"R = {R} enumerates 2^R profiles; keep R <= 16")
    r = H ** (1.0 / 4 ** (gamma + delta))
    if r < 2.0 * (1.0 - 1e-12):
        raise InfeasibleParametersError(
            f"value range too small: r = {r} < 2; raise H or shrink gamma+delta"
        )
    B = int(params.B)
    per_value = R + delta

    def build(m_idx: int) -> Scenario:
        txs = []
        nid = 0
        for i in range(m_idx + 1):
            v = (r**i) * params.p_min
            for _ in range(per_value):
                txs.append(Transaction(id=nid, arrival=1, size=(B,), unit_value=v))
                nid += 1
        return Scenario(capacities=(float(B),), transactions=txs, seed=0)

    def run(m_idx: int) -> RunResult:
        return run_price_based(build(m_idx), params, ValueAscending(), R)

    def executed_history(res: RunResult) -> tuple:
        index = res.scenario.index()
        return tuple(
            tuple((index[tid].q, index[tid].unit_value) for tid, _f in rec.executed)
            for rec in res.trace.records
        )

    seen: dict[tuple, int] = {}
    collision: tuple[int, int] | None = None
    for m_idx in range(2**R + 1):
        key = executed_history(run(m_idx))
        if key in seen:
            collision = (seen[key], m_idx)
            break
        seen[key] = m_idx
    if collision is None:  # 2^R + 1 profiles over <= 2^R leaves
        raise ScenarioError("no colliding profiles found; transcript map is broken")
    m_low, m_high = collision
    res_low = run(m_low)
    res_high = run(m_high)
    prices_equal = all(
        a.log_prices == b.log_prices
        for a, b in zip(res_low.trace.records, res_high.trace.records)
    )
    sw = welfare(res_high.schedule, res_high.scenario, R)
    optimum = (r**m_high) * params.p_min * T * B
    fraction = sw / optimum
    bound = 2.0 / r
    return PriceAdversaryReport(
        r=r,
        T=T,
        R=R,
        m=m_low,
        m_prime=m_high,
        fraction=fraction,
        bound=bound,
        passed=fraction <= bound * (1.0 + 1e-9) and prices_equal,
        alg_welfare=sw,
        optimum=optimum,
        price_transcripts_identical=prices_equal,
    )
