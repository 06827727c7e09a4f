"""Brute-force reference solution of the constrained quadratic control problem.

The response matrices are assembled from simulated unit-impulse experiments
rather than from :mod:`netctl.network`'s block builders, and the problem is
solved through its dense KKT system, so the oracle shares no code path with
the closed-form controls it checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ReachabilityError
from ..network import ControlProblem, ControlSequence, LinearNetwork


@dataclass
class OracleSolution:
    u: ControlSequence
    cost: float
    kkt_residual: float


def impulse_responses(net: LinearNetwork, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H, G)``: responses of ``[y(1);...;y(T-1)]`` and ``y(T)`` to each stacked input coordinate."""
    mT = net.m * T
    H = np.zeros((net.p * (T - 1), mT))
    G = np.zeros((net.p, mT))
    for col in range(mT):
        t_hit = T - 1 - col // net.m  # stacked coordinate col belongs to u(t_hit)
        x = np.zeros(net.n)
        for t in range(T):
            u = np.zeros(net.m)
            if t == t_hit:
                u[col % net.m] = 1.0
            x = net.A.dot(x) + net.B.dot(u)
            y = net.C.dot(x)
            if t < T - 1:
                H[t * net.p : (t + 1) * net.p, col] = y
            else:
                G[:, col] = y
    return H, G


def quadratic_cost(net: LinearNetwork, prob: ControlProblem, u: ControlSequence) -> float:
    """``y_{1:T-1}^T Q y_{1:T-1} + u^T R u`` evaluated by simulation."""
    Q, R = prob.dense_weights(net.p, net.m)
    forward = u.forward()
    x = np.zeros(net.n)
    ys = []
    for t in range(prob.T):
        x = net.A @ x + net.B @ forward[t]
        ys.append(net.C @ x)
    y_mid = np.concatenate(ys[:-1]) if prob.T > 1 else np.zeros(0)
    return float(y_mid @ Q @ y_mid + u.stacked @ R @ u.stacked)


def oracle_kkt(net: LinearNetwork, prob: ControlProblem) -> OracleSolution:
    """Solve ``[2(H^T Q H + R), G^T; G, 0] [u; lam] = [0; y_f]`` densely."""
    H, G = impulse_responses(net, prob.T)
    Q, R = prob.dense_weights(net.p, net.m)
    mT, p = G.shape[1], G.shape[0]
    K = np.zeros((mT + p, mT + p))
    K[:mT, :mT] = 2 * (H.T @ Q @ H + R)
    K[:mT, mT:] = G.T
    K[mT:, :mT] = G
    rhs = np.concatenate([np.zeros(mT), prob.y_f])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise ReachabilityError("KKT system is singular; target unreachable") from exc
    residual = float(np.linalg.norm(K @ sol - rhs))
    u = ControlSequence(sol[:mT], net.m)
    return OracleSolution(u, quadratic_cost(net, prob, u), residual)
