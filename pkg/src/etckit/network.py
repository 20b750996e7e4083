"""Distributed triggering over a network: graph/Laplacian machinery, dynamic
average consensus with its tracking bound, the consensus-driven barrier
trigger with jump map, the partitioned and time-regularized baselines, and
the conservative gain advisor.

The simulator has the global state view; reference-signal derivatives are
computed from it by chain rule (agents would need two-hop communication for
the same quantities -- documented, not emulated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import numerics, sim
from .errors import ValidationError
from .nonlinear import DistributedPB
from .sim import EventLog, HybridProgram, SimConfig, Trajectory, VectorField

_FD_STEP = 1e-6  # central-difference step for reference derivatives


@dataclass(frozen=True)
class NetworkTopology:
    """Connected undirected graph with Laplacian L = D - A.

    lambda2 (algebraic connectivity) is None only for the trivial N = 1
    graph; consensus operations reject that case.
    """

    n_agents: int
    adjacency: np.ndarray
    laplacian: np.ndarray
    lambda2: float | None

    @classmethod
    def from_adjacency(cls, adjacency) -> "NetworkTopology":
        A = numerics.as_matrix(adjacency)
        n = A.shape[0]
        if A.shape != (n, n) or not np.allclose(A, A.T):
            raise ValidationError("adjacency must be square and symmetric")
        if not np.all((A == 0) | (A == 1)) or np.any(np.diag(A) != 0):
            raise ValidationError("adjacency must be 0/1 with zero diagonal")
        L = np.diag(A.sum(axis=1)) - A
        if n == 1:
            return cls(n_agents=1, adjacency=A, laplacian=L, lambda2=None)
        eigs = numerics.eig_sym(L)
        lam2 = float(eigs[1])
        if lam2 <= 1e-9:
            raise ValidationError("graph is disconnected (lambda2 = 0)")
        return cls(n_agents=n, adjacency=A, laplacian=L, lambda2=lam2)

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[tuple[int, int]]) -> "NetworkTopology":
        """Edges as 1-indexed (i, j) pairs."""
        A = np.zeros((n, n))
        for i, j in edges:
            if not (1 <= i <= n and 1 <= j <= n) or i == j:
                raise ValidationError(f"bad edge ({i}, {j}) for n = {n}")
            A[i - 1, j - 1] = A[j - 1, i - 1] = 1.0
        return cls.from_adjacency(A)

    @classmethod
    def path(cls, n: int) -> "NetworkTopology":
        return cls.from_edges(n, [(i, i + 1) for i in range(1, n)])


def dac_step_reference(y, w_dot, rho: float, laplacian) -> np.ndarray:
    """Right-hand side of the dynamic average consensus: ydot = Wdot - rho L y."""
    y = numerics.as_vector(y)
    w_dot = numerics.as_vector(w_dot)
    L = numerics.as_matrix(laplacian)
    return w_dot - rho * (L @ y)


def tracking_bound(c_w_dot: float, r: float, rho: float, lambda2: float,
                   eps0_norm: float, t: float) -> float:
    """Tracking-error envelope for exponentially bounded reference rates:

    ||eps(t)|| <= c/(rho lam2 - r) e^{-rt} + (||eps(0)|| - c/(rho lam2 - r))
                  e^{-rho lam2 t},  valid when rho lam2 > r.
    """
    gap = rho * lambda2 - r
    if gap <= 0:
        raise ValidationError(
            f"bound needs rho*lambda2 > r (got {rho * lambda2:.6g} <= {r:.6g})"
        )
    c = c_w_dot / gap
    return c * math.exp(-r * t) + (eps0_norm - c) * math.exp(-rho * lambda2 * t)


def simulate_consensus(topology: NetworkTopology, w_fn, w_dot_fn, rho: float,
                       y0, horizon: float, step_h: float = 1e-3,
                       sample_stride: int = 1):
    """Integrate ydot = Wdot - rho L y with RK4; returns (times, Y, eps_norms)
    where eps = y - 1 avg(W)."""
    if topology.lambda2 is None:
        raise ValidationError("consensus needs at least 2 agents")
    L = topology.laplacian
    n = topology.n_agents
    y = numerics.as_vector(y0).copy()
    if y.shape[0] != n:
        raise ValidationError(f"y0 must have dim {n}")

    def rhs(t, yv):
        return dac_step_reference(yv, w_dot_fn(t), rho, L)

    times, ys = [0.0], [y.copy()]
    t = 0.0
    k = 0
    while t < horizon - 1e-15:
        h = min(step_h, horizon - t)
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        k += 1
        if k % sample_stride == 0 or t >= horizon - 1e-15:
            times.append(t)
            ys.append(y.copy())
    times = np.array(times)
    Y = np.array(ys)
    eps = np.empty(len(times))
    for i, ti in enumerate(times):
        avg = float(np.sum(w_fn(ti))) / n
        eps[i] = np.linalg.norm(Y[i] - avg)
    return times, Y, eps


@dataclass(frozen=True)
class NetworkConstants:
    """Global certificate/trigger constants shared by all agents."""

    c_alpha: float
    c_gamma: float
    c1: float
    c2: float
    r: float
    sigma: float
    c_beta: float


@dataclass(frozen=True)
class NetworkSystem:
    """Agent decomposition V(x) = sum_i V_i plus the global field.

    V_i / g_x_i / g_e_i take the full state (they are documented to read
    only neighborhood entries; the information pattern is not emulated).
    g_x_i and g_e_i default to the generic quadratic split
    (sigma-1) c_alpha ||x_i||^2 and c_gamma ||e_i||^2; structured surrogates
    (e.g. the platoon's) may replace them.
    """

    topology: NetworkTopology
    agent_dims: tuple[int, ...]
    v_i: tuple[Callable, ...]
    field: VectorField
    constants: NetworkConstants
    agent_e_dims: tuple[int, ...] | None = None
    g_x_i: tuple[Callable, ...] | None = None
    g_e_i: tuple[Callable, ...] | None = None

    def __post_init__(self):
        n = self.topology.n_agents
        if len(self.agent_dims) != n or len(self.v_i) != n:
            raise ValidationError("agent_dims and v_i must have one entry per agent")
        if sum(self.agent_dims) != self.field.dim_x:
            raise ValidationError("agent_dims must sum to the field dimension")
        c = self.constants
        # residual-gain floor of the distributed analysis; stated in terms of
        # the generic quadratic split, so it is only checkable there (custom
        # structured surrogates carry their own margins)
        if self.g_x_i is None and self.g_e_i is None:
            floor = (1.0 - c.sigma) * (c.c_alpha / c.c1) - c.r
            if c.c_beta <= floor:
                raise ValidationError(
                    f"need c_beta > (1-sigma) c_alpha/c1 - r = {floor:.6g}, "
                    f"got {c.c_beta}"
                )

    @property
    def n_agents(self) -> int:
        return self.topology.n_agents

    def x_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.agent_dims)])

    def e_offsets(self) -> np.ndarray:
        dims = self.agent_e_dims if self.agent_e_dims is not None else self.agent_dims
        return np.concatenate([[0], np.cumsum(dims)])

    def agent_x(self, x, i: int) -> np.ndarray:
        off = self.x_offsets()
        return np.asarray(x)[off[i]:off[i + 1]]

    def agent_e(self, e, i: int) -> np.ndarray:
        off = self.e_offsets()
        return np.asarray(e)[off[i]:off[i + 1]]

    def V(self, x) -> float:
        return float(sum(v(x) for v in self.v_i))

    def _g_x(self, x, i: int) -> float:
        if self.g_x_i is not None:
            return float(self.g_x_i[i](x))
        xi = self.agent_x(x, i)
        return (self.constants.sigma - 1.0) * self.constants.c_alpha * float(xi @ xi)

    def _g_e(self, x, e, i: int) -> float:
        if self.g_e_i is not None:
            return float(self.g_e_i[i](x, e))
        ei = self.agent_e(e, i)
        return self.constants.c_gamma * float(ei @ ei)


@dataclass
class ConsensusState:
    """Agent estimates a (of avg W^xe) and z (of avg W^x) with their gains."""

    a: np.ndarray
    z: np.ndarray
    rho_a: float
    rho_z: float


def w_x(sys: NetworkSystem, x) -> np.ndarray:
    """Per-agent reference vector W^x_i = g_x_i + (r + c_beta) V_i, so that
    1'W^x equals the global barrier aggregate without the error term."""
    c = sys.constants
    return np.array(
        [sys._g_x(x, i) + (c.r + c.c_beta) * sys.v_i[i](x) for i in range(sys.n_agents)]
    )


def w_xe(sys: NetworkSystem, x, e) -> np.ndarray:
    """Per-agent reference vector W^xe_i = W^x_i + g_e_i."""
    return w_x(sys, x) + np.array(
        [sys._g_e(x, e, i) for i in range(sys.n_agents)]
    )


def _w_dots(sys: NetworkSystem, x, e) -> tuple[np.ndarray, np.ndarray]:
    """(d/dt W^x, d/dt W^xe) along the flow, by central difference in the
    flow direction (exact for the quadratic forms used here)."""
    xdot = sys.field.eval(x, e)
    edot = sys.field.edot(xdot)
    d = _FD_STEP
    wx_p = w_x(sys, x + d * xdot)
    wx_m = w_x(sys, x - d * xdot)
    wxe_p = wx_p + np.array(
        [sys._g_e(x + d * xdot, e + d * edot, i) for i in range(sys.n_agents)]
    )
    wxe_m = wx_m + np.array(
        [sys._g_e(x - d * xdot, e - d * edot, i) for i in range(sys.n_agents)]
    )
    return (wx_p - wx_m) / (2 * d), (wxe_p - wxe_m) / (2 * d)


def init_consensus(sys: NetworkSystem, x0, rho_a: float, rho_z: float) -> ConsensusState:
    """Exact-average initialization a(0) = z(0) = 1 * (sum_i W^x_i(x0))/N,
    which makes both tracking errors zero at t = 0 (e(0) = 0)."""
    n = sys.n_agents
    avg = float(np.sum(w_x(sys, x0))) / n
    return ConsensusState(a=np.full(n, avg), z=np.full(n, avg),
                          rho_a=rho_a, rho_z=rho_z)


def init_consensus_local(sys: NetworkSystem, x0, rho_a: float, rho_z: float) -> ConsensusState:
    """Deployable variant a_i(0) = z_i(0) = W^x_i(x0): preserves only the
    mean-zero tracking-error property."""
    w0 = w_x(sys, x0)
    return ConsensusState(a=w0.copy(), z=w0.copy(), rho_a=rho_a, rho_z=rho_z)


def consensus_jump(cstate: ConsensusState) -> ConsensusState:
    """Trigger-time reinitialization a+ = z (z continues; e resets alongside,
    which restores the mean-zero tracking error of a)."""
    return ConsensusState(a=cstate.z.copy(), z=cstate.z, rho_a=cstate.rho_a,
                          rho_z=cstate.rho_z)


def distributed_trigger_values(sys: NetworkSystem, cstate: ConsensusState,
                               t: float, v0: float) -> np.ndarray:
    """Per-agent conditions a_i - c_beta V(x0) e^{-rt} / N; a network-wide
    update fires when any component reaches zero."""
    c = sys.constants
    return cstate.a - c.c_beta * v0 * math.exp(-c.r * t) / sys.n_agents


def baseline_naive(sys: NetworkSystem, x, e, v_i_vals=None) -> np.ndarray:
    """Partitioned derivative trigger, one condition per agent:
    (sigma-1) c_alpha ||x_i||^2 + c_gamma ||e_i||^2 + r V_i; any crossing
    fires network-wide. May exhibit inter-event collapse (suspected Zeno)."""
    c = sys.constants
    if v_i_vals is None:
        v_i_vals = [sys.v_i[i](x) for i in range(sys.n_agents)]
    out = np.empty(sys.n_agents)
    for i in range(sys.n_agents):
        xi = sys.agent_x(x, i)
        ei = sys.agent_e(e, i)
        out[i] = (
            (c.sigma - 1.0) * c.c_alpha * float(xi @ xi)
            + c.c_gamma * float(ei @ ei)
            + c.r * float(v_i_vals[i])
        )
    return out


def baseline_time_reg(sys: NetworkSystem, x, e, v_i_vals, t: float, t_k: float,
                      tau_d: float) -> np.ndarray | None:
    """Time-regularized baseline: condition monitoring is suppressed until
    t_k + tau_d (returns None while inhibited), then as baseline_naive with
    the budget variable fixed to zero."""
    if tau_d <= 0:
        raise ValidationError("tau_d must be positive")
    if t < t_k + tau_d:
        return None
    return baseline_naive(sys, x, e, v_i_vals)


# ---------------------------------------------------------------------------
# Distributed runs through the hybrid engine
# ---------------------------------------------------------------------------


def _distributed_program(sys: NetworkSystem, policy: DistributedPB, x0) -> HybridProgram:
    n = sys.n_agents
    if sys.topology.lambda2 is None:
        raise ValidationError("distributed trigger needs at least 2 agents")
    L = sys.topology.laplacian
    c = sys.constants
    v0 = sys.V(np.asarray(x0, dtype=float))
    rho_a, rho_z = policy.rho_a, policy.rho_z

    def aux0(x_init):
        cs = init_consensus(sys, x_init, rho_a, rho_z)
        return np.concatenate([cs.a, cs.z])

    def aux_rhs(t, x, e, aux):
        a, z = aux[:n], aux[n:]
        wx_dot, wxe_dot = _w_dots(sys, x, e)
        return np.concatenate([
            dac_step_reference(a, wxe_dot, rho_a, L),
            dac_step_reference(z, wx_dot, rho_z, L),
        ])

    def jump(t, x, aux):
        z = aux[n:]
        return np.concatenate([z, z])

    def trig(t, t_last, x, e, aux):
        return float(np.max(aux[:n]) - c.c_beta * v0 * math.exp(-c.r * t) / n)

    s_of = lambda t, x, aux: v0 * math.exp(-c.r * t)
    return HybridProgram(trigger_value=trig, v_of=sys.V, s_of=s_of,
                         n_aux=2 * n, aux0=aux0, aux_rhs=aux_rhs, jump=jump)


def simulate_distributed(sys: NetworkSystem, x0, cfg: SimConfig,
                         policy: DistributedPB):
    """Run the consensus-driven distributed barrier trigger. The returned
    trajectory's aux column block is [a_1..a_N, z_1..z_N] per sample."""
    program = _distributed_program(sys, policy, x0)
    return sim.run_hybrid(sys.field, program, x0, cfg)


def run_baseline_naive(sys: NetworkSystem, x0, cfg: SimConfig):
    """Simulate the partitioned baseline trigger."""
    program = HybridProgram(
        trigger_value=lambda t, t_last, x, e, aux: float(
            np.max(baseline_naive(sys, x, e))
        ),
        v_of=sys.V,
        s_of=lambda t, x, aux: math.nan,
    )
    return sim.run_hybrid(sys.field, program, x0, cfg)


def run_baseline_time_reg(sys: NetworkSystem, x0, cfg: SimConfig, tau_d: float):
    """Simulate the time-regularized baseline (budget fixed to zero)."""

    def trig(t, t_last, x, e, aux):
        vals = baseline_time_reg(sys, x, e, None, t, t_last, tau_d)
        if vals is None:
            return -1.0  # inhibited
        return float(np.max(vals))

    program = HybridProgram(trigger_value=trig, v_of=sys.V,
                            s_of=lambda t, x, aux: math.nan)
    return sim.run_hybrid(sys.field, program, x0, cfg)


# ---------------------------------------------------------------------------
# Conservative gain selection
# ---------------------------------------------------------------------------


def omega_constants(sys: NetworkSystem, l_f: float, l_dv: float,
                    n_grid: int = 2000) -> tuple[float, float, float]:
    """Assemble (Omega_xe, Omega_x, Omega_star) for the gain advisor.

    Omega_xe bounds ||d/dt W^xe|| by Omega_xe V(x_k) e^{-r dt} on inter-event
    intervals; Omega_x bounds ||d/dt W^x|| by Omega_x V(x0) e^{-rt} globally;
    Omega_star is the margin of the centralized barrier condition, minimized
    on a grid over [0, tau_d]. All three are conservative heuristics built
    from the quadratic-term bounds ||x||^2 <= V/c1 etc.
    """
    from . import nonlinear

    c = sys.constants
    cert = nonlinear.IssCertificate(
        V=sys.V, alpha=lambda s: c.c_alpha * s * s,
        gamma=lambda s: c.c_gamma * s * s,
        alpha_inv=lambda s: math.sqrt(s / c.c_alpha),
        quad=nonlinear.QuadConstants(c1=c.c1, c2=c.c2, c_alpha=c.c_alpha,
                                     c_gamma=c.c_gamma, L_f=l_f),
    )
    tau_d = nonlinear.miet_deriv_exp(cert, c.sigma, c.r)

    inv_sqrt_c1 = 1.0 / math.sqrt(c.c1)
    kappa_e = ((1.0 - c.sigma) * c.c_alpha / c.c1 - c.r) / c.c_gamma
    if kappa_e < 0:
        raise ValidationError("inconsistent constants: (1-sigma) c_alpha/c1 < r")
    sqrt_kappa = math.sqrt(kappa_e)
    coef_x = ((1.0 - c.sigma) * c.c_alpha + (c.r + c.c_beta) * l_dv) * inv_sqrt_c1
    omega_xe = l_f * (coef_x + c.c_gamma * sqrt_kappa) * (inv_sqrt_c1 + sqrt_kappa)
    omega_x = l_f * coef_x * (inv_sqrt_c1 + math.sqrt(c.c_beta / c.c_gamma))

    taus = np.linspace(0.0, tau_d, n_grid + 1)
    margin = math.inf
    for tau in taus:
        integral = nonlinear.xi_integral(cert, c.sigma, float(tau))
        expo = math.exp(integral)
        term = (nonlinear.xi(float(tau), cert, c.sigma) + c.r) * expo - c.c_beta * (
            math.exp(-c.r * tau) - expo
        )
        margin = min(margin, -term)
    if margin <= 0:
        raise ValidationError(
            f"nonpositive Omega* candidate ({margin:.6g}): parameters inconsistent"
        )
    return float(omega_xe), float(omega_x), float(margin)


def rho_advisor(sys: NetworkSystem, omega_x: float, omega_xe: float,
                omega_star: float, tau_d: float) -> tuple[float, float]:
    """Lower bounds on the consensus gains that guarantee the distributed
    trigger inherits the derivative-trigger MIET:

        rho_a > (N Omega_xe / Omega* + r) / lambda2,
        rho_z > (N Omega_x / Omega* + N Omega_x / (c_beta e^{-r tau_d}) + r)
                / lambda2.

    These are conservative; practical gains below them are often observed to
    work, but then carry no guarantee.
    """
    if sys.topology.lambda2 is None:
        raise ValidationError("gain advisor needs at least 2 agents")
    for name, val in (("Omega_x", omega_x), ("Omega_xe", omega_xe),
                      ("Omega_star", omega_star), ("tau_d", tau_d)):
        if val <= 0:
            raise ValidationError(f"{name} must be positive")
    c = sys.constants
    lam2 = sys.topology.lambda2
    n = sys.n_agents
    rho_a_min = (n * omega_xe / omega_star + c.r) / lam2
    rho_z_min = (
        n * omega_x / omega_star
        + n * omega_x / (c.c_beta * math.exp(-c.r * tau_d))
        + c.r
    ) / lam2
    return float(rho_a_min), float(rho_z_min)
