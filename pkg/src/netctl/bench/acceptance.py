"""Acceptance checks, one function per criterion, each at its stated tolerance.

Every check returns a :class:`CriterionResult`; nothing here loosens a
threshold to make a check pass. Criteria that cannot be met in double
precision are listed in ``KNOWN_LIMITATIONS`` with the reason.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import ddcontrol, swing, sysid
from ..experiments import DataMatrices, NoiseSpec, add_noise, random_inputs, run_episodic, simulate_long, sliding_window
from ..graphs import random_network
from ..linalg import absolute_tol, pinv
from ..network import ControlProblem, is_output_controllable, model_based_optimal
from .oracle import oracle_kkt, quadratic_cost
from .studies import final_error, run_study

COST_SLACK = 1e-9  # round-off allowance below the optimal cost

KNOWN_LIMITATIONS = {
    9: "with sqrt(n)-normalized ER networks the spectral radius grows past 1.8 at n=1000, so over "
    "T=50 steps Y_T spans ~12 decades and float64 cannot resolve the final-state error below 1e-5",
}


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        note = " (known limitation)" if not self.passed and self.number in KNOWN_LIMITATIONS else ""
        return f"[{status}] criterion {self.number:2d} {self.title}: {self.detail}{note} ({self.seconds:.1f}s)"


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


def _fig2_instance(seed: int, N: int):
    rng = _rng(2, seed)
    net, _ = random_network(100, 5, 20, rng)
    y_f = rng.standard_normal(20)
    data = run_episodic(net, random_inputs(5, 10, N, rng), 10)
    return net, y_f, data


def criterion_1(seeds: int = 50) -> CriterionResult:
    t0 = time.perf_counter()
    errs, ratios = [], []
    for s in range(seeds):
        net, y_f, data = _fig2_instance(s, 50)
        oracle = oracle_kkt(net, ControlProblem.scalar(10, y_f, 1.0, 1.0))
        u = ddcontrol.dd_optimal(data, 1.0, 1.0, y_f).u
        errs.append(_rel(u.stacked, oracle.u.stacked))
        ratios.append(quadratic_cost(net, ControlProblem.scalar(10, y_f, 1.0, 1.0), u) / oracle.cost)
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-6 and min(ratios) >= 1 - COST_SLACK and max(ratios) <= 1 + 1e-8 and elapsed < 60
    detail = (
        f"max rel err {max(errs):.2e} (<=1e-6), cost ratio in [{min(ratios) - 1:+.1e}, {max(ratios) - 1:+.1e}]+1 "
        f"(<=1e-8 above), {elapsed:.1f}s (<60s)"
    )
    return CriterionResult(1, "exact reconstruction at N=mT", ok, detail, {"max_err": max(errs)})


def criterion_2(seeds: int = 50) -> CriterionResult:
    errs, ratios = [], []
    for s in range(seeds):
        net, y_f, data = _fig2_instance(s, 20)
        prob = ControlProblem.scalar(10, y_f, 1.0, 1.0)
        oracle = oracle_kkt(net, prob)
        u = ddcontrol.dd_optimal(data, 1.0, 1.0, y_f).u
        errs.append(final_error(net, u, y_f))
        ratios.append(quadratic_cost(net, prob, u) / oracle.cost)
    ratios = np.array(ratios)
    strict = float(np.mean(ratios > 1 + COST_SLACK))
    ok = max(errs) <= 1e-6 and ratios.min() >= 1 - COST_SLACK and strict >= 0.9
    detail = f"max final err {max(errs):.2e} (<=1e-6), min cost ratio {ratios.min():.3f}, strictly above in {strict:.0%} (>=90%)"
    return CriterionResult(2, "feasibility at N=p", ok, detail, {"strict_fraction": strict})


def _penrose_residuals(M: np.ndarray, X: np.ndarray) -> list[float]:
    scale = max(np.linalg.norm(M), 1.0) * max(np.linalg.norm(X), 1.0)
    MX, XM = M @ X, X @ M
    return [
        float(np.linalg.norm(MX @ M - M) / max(np.linalg.norm(M), 1e-300)),
        float(np.linalg.norm(XM @ X - X) / max(np.linalg.norm(X), 1e-300)),
        float(np.linalg.norm(MX - MX.T) / scale),
        float(np.linalg.norm(XM - XM.T) / scale),
    ]


def min_energy_forms_instance(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Consistent data ``Y_T = C_T U`` whose ``U`` is rank deficient about half of the time."""
    p = int(rng.integers(1, 6))
    mT = int(rng.integers(p, 13))
    C_T = rng.standard_normal((p, mT))
    if rng.random() < 0.5:
        r = int(rng.integers(max(p, 1), mT + 1))
        N = int(rng.integers(r, 2 * mT + 2))
        U = rng.standard_normal((mT, r)) @ rng.standard_normal((r, N))
        # rank-deficient U still has to reach every target for the map to be meaningful
        if np.linalg.matrix_rank(C_T @ U) < p:
            U = rng.standard_normal((mT, N))
    else:
        U = rng.standard_normal((mT, int(rng.integers(p, 2 * mT + 2))))
    return U, C_T @ U


def criterion_3(count: int = 200) -> CriterionResult:
    worst_form, worst_penrose, deficient = 0.0, 0.0, 0
    for s in range(count):
        U, YT = min_energy_forms_instance(_rng(3, s))
        deficient += int(np.linalg.matrix_rank(U) < U.shape[0])
        long = ddcontrol.min_energy_map(U, YT, "long")
        compact = ddcontrol.min_energy_map(U, YT, "compact")
        worst_form = max(worst_form, float(np.linalg.norm(long - compact)))
        worst_penrose = max(worst_penrose, *_penrose_residuals(YT @ pinv(U), long))
    ok = worst_form <= 1e-8 and worst_penrose <= 1e-8
    detail = f"max ||long - compact||_F {worst_form:.1e}, max Penrose residual {worst_penrose:.1e} (<=1e-8); {deficient} rank-deficient U"
    return CriterionResult(3, "long and compact minimum-energy forms", ok, detail)


def criterion_4(N: int = 1_000_000, sigma: float = 0.5, y_f: float = 1.0) -> CriterionResult:
    rng = _rng(4)
    U = rng.standard_normal((1, N))
    clean = DataMatrices(U, np.zeros((0, N)), U.copy(), 1)  # T=1 with C B = 1
    noisy = add_noise(clean, NoiseSpec(sigma_YT2=sigma**2), rng)
    plain = ddcontrol.dd_min_energy_approx(noisy, [y_f]).u.stacked[0]
    corrected = ddcontrol.dd_min_energy_approx_corrected(noisy, [y_f], sigma**2).u.stacked[0]
    biased = y_f / (1 + sigma**2)
    e_plain, e_corr = abs(plain - biased) / biased, abs(corrected - y_f) / y_f
    ok = e_plain <= 0.01 and e_corr <= 0.01
    detail = f"uncorrected {plain:.4f} vs {biased:.4f} ({e_plain:.2%}), corrected {corrected:.4f} vs {y_f:.4f} ({e_corr:.2%}), both <=1%"
    return CriterionResult(4, "scalar output-noise bias", ok, detail)


def criterion_5(seeds: int = 200) -> CriterionResult:
    res = run_study("thm1-coverage", {"reps": seeds}, seed=5)
    covered = res.raw["covered"]
    frac = float(covered.fillna(0).mean())
    ok = frac >= 0.95
    detail = f"coverage {frac:.3f} over {len(covered)} seeds (>=0.95), {int(covered.isna().sum())} failed trials, median eta {res.raw['eta'].median():.3f}"
    return CriterionResult(5, "high-probability bound coverage", ok, detail, {"coverage": frac})


def controllable_network(rng, n: int, m: int, p: int, T: int, full_state: bool = False, attempts: int = 100):
    """Random ER network that is output controllable in ``T`` steps (rejection sampling)."""
    for tries in range(1, attempts + 1):
        net, _ = random_network(n, m, p, rng, full_state=full_state)
        if is_output_controllable(net, T):
            return net, tries - 1
    raise RuntimeError(f"no network output controllable in {T} steps after {attempts} draws")


def criterion_6(seeds: int = 50) -> CriterionResult:
    worst_A, worst_B, rejected, sizes = 0.0, 0.0, 0, []
    for s in range(seeds):
        rng = _rng(6, s)
        n = int(rng.integers(10, 51))
        m = max(n // 5, 1)
        T = math.ceil(n / m) + 2
        # exact recovery of A needs controllability within T - 1 steps
        net, rej = controllable_network(rng, n, m, n, T - 1, full_state=True)
        rejected += rej
        sizes.append(n)
        data = run_episodic(net, random_inputs(m, T, m * T + 10, rng), T)
        model = sysid.subspace_id(data)
        worst_A = max(worst_A, float(np.linalg.norm(model.A_hat - net.A)))
        worst_B = max(worst_B, float(np.linalg.norm(model.B_hat - net.B)))
    ok = worst_A <= 1e-6 and worst_B <= 1e-6
    detail = (
        f"n in [{min(sizes)}, {max(sizes)}], m=n/5, T=ceil(n/m)+2 ({rejected} uncontrollable draws skipped): "
        f"max ||A_hat - A||_F {worst_A:.1e}, max ||B_hat - B||_F {worst_B:.1e} (<=1e-6)"
    )
    return CriterionResult(6, "subspace identification exactness", ok, detail)


def _median_by(raw, keys: list[str], column: str):
    vals = raw[column].fillna(np.inf)  # a failed solve counts as unbounded error
    return vals.groupby([raw[k] for k in keys]).median()


def criterion_7(reps: int = 100) -> CriterionResult:
    ns = [20, 40, 60, 80, 100]
    res = run_study("fig1c", {"n": ns, "deltas": [0.0, 1e-3], "reps": reps}, seed=7)
    med = _median_by(res.raw, ["n", "delta"], "err")
    pert = [float(med[(n, 1e-3)]) for n in ns]
    base = float(med[(100, 0.0)])
    monotone = all(b >= a for a, b in zip(pert, pert[1:]))
    ratio = pert[-1] / base if base > 0 else math.inf
    ok = monotone and ratio >= 10
    detail = "perturbed medians " + ", ".join(f"{e:.1e}" for e in pert) + f"; ratio to unperturbed at n=100 {ratio:.1e} (>=10)"
    return CriterionResult(7, "perturbed Gramian error trend", ok, detail)


def criterion_8(reps: int = 50) -> CriterionResult:
    ns = [50, 100, 200]
    res = run_study("fig3b", {"n": ns, "epsilons": [0.05], "reps": reps}, seed=8)
    two = _median_by(res.raw, ["n"], "err_two_step")
    direct = _median_by(res.raw, ["n"], "err_exact")
    ordered = all(two[n] >= direct[n] for n in ns)
    ratio = float(two[200] / direct[200]) if direct[200] > 0 else math.inf
    ok = ordered and ratio >= 10
    detail = ", ".join(f"n={n}: two-step {two[n]:.1e} vs direct {direct[n]:.1e}" for n in ns) + f"; ratio at n=200 {ratio:.1e} (>=10)"
    return CriterionResult(8, "two-step versus direct", ok, detail)


def _fig3c_instance(n: int, seed: int):
    m, p, T = n // 100, n // 50, 50
    rng = _rng(9, n, seed)
    net, _ = random_network(n, m, p, rng)
    y_f = rng.standard_normal(p)
    data = run_episodic(net, random_inputs(m, T, m * T + 100, rng), T)
    return net, y_f, data


def criterion_9(seeds: int = 3) -> CriterionResult:
    t0 = time.perf_counter()
    worst = {}
    for n in (1000, 2000):
        for s in range(seeds):
            net, y_f, data = _fig3c_instance(n, s)
            tol = absolute_tol(data.YT)
            for tag, fn in (("exact", ddcontrol.dd_min_energy), ("approx", ddcontrol.dd_min_energy_approx)):
                try:
                    err = final_error(net, fn(data, y_f, tol).u, y_f)
                except Exception:
                    err = math.inf
                worst[(n, tag)] = max(worst.get((n, tag), 0.0), err)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-5 and elapsed < 600
    detail = ", ".join(f"n={n} {t}: {e:.1e}" for (n, t), e in sorted(worst.items())) + f" (<=1e-5), {elapsed:.0f}s (<600s)"
    return CriterionResult(9, "data-driven error ceiling at n>=1000", ok, detail)


def criterion_10(runs: int = 10) -> CriterionResult:
    net, y_f, data = _fig3c_instance(2000, 0)
    prob = ControlProblem.min_energy(50, y_f)
    tol = absolute_tol(data.YT)

    def median_time(fn: Callable) -> float:
        times = []
        for _ in range(runs):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return float(np.median(times))

    t_dd = median_time(lambda: ddcontrol.dd_min_energy_approx(data, y_f, tol))
    t_mb = median_time(lambda: model_based_optimal(net, prob, check_reachable=False))
    ok = t_dd < t_mb
    detail = f"n=2000 median over {runs}: data-driven {t_dd * 1e3:.1f} ms < model-based {t_mb * 1e3:.1f} ms"
    return CriterionResult(10, "timing order", ok, detail)


def criterion_11(seeds: int = 20) -> CriterionResult:
    Ns = [1000, 10000, 100000]
    res = run_study("noise-consistency", {"N": Ns, "reps": seeds, "sigma_U2": 0.01}, seed=11)
    corrected = _median_by(res.raw, ["N"], "uerr_exact_corrected")
    plain = _median_by(res.raw, ["N"], "uerr_exact")
    decreasing = all(corrected[b] < corrected[a] for a, b in zip(Ns, Ns[1:]))
    ratio = float(corrected[Ns[-1]] / plain[Ns[-1]])
    ok = decreasing and ratio < 0.5
    detail = "corrected medians " + ", ".join(f"{corrected[N]:.1e}" for N in Ns) + f"; ratio to uncorrected at N=1e5 {ratio:.2f} (<0.5)"
    return CriterionResult(11, "input-noise correction consistency", ok, detail)


def criterion_12(N: int = 4000) -> CriterionResult:
    sc = swing.load_grid_config()
    eq = swing.operating_point(sc)
    data = swing.harvest_perturbation_data(sc.pre, eq, N, sc.horizon, sc.Ts, rng=_rng(12))
    ctrl = swing.run_fault_recovery(sc, eq, swing.data_driven_controller(data), record_every=100)
    free = swing.run_fault_recovery(sc, eq, None, record_every=100)
    ok = ctrl.recovered and not free.recovered
    detail = (
        f"controlled: {'recovered' if ctrl.recovered else 'not recovered'} (max |w| {ctrl.max_final_omega:.1e}); "
        f"uncontrolled: {'recovered' if free.recovered else 'not recovered'} (max |w| {free.max_final_omega:.1e})"
    )
    return CriterionResult(12, "swing-equation fault recovery", ok, detail)


def criterion_13(seeds: int = 20, n: int = 6, m: int = 2, p: int = 3, T: int = 6) -> CriterionResult:
    worst, min_rank_gap = 0.0, math.inf
    for s in range(seeds):
        rng = _rng(13, s)
        net, _ = controllable_network(rng, n, m, p, T)
        S = 3 * (m * T + n)
        u_long = rng.standard_normal((S, m))
        states, outputs = simulate_long(net, u_long, rng.standard_normal(n))
        data = sliding_window(u_long, outputs, T, states)
        stacked_rank = np.linalg.matrix_rank(np.vstack([data.U, data.X0]))
        min_rank_gap = min(min_rank_gap, stacked_rank - (m * T + n))
        y_f = rng.standard_normal(p)
        prob = ControlProblem.scalar(T, y_f, 0.5, 1.0)
        u = ddcontrol.dd_optimal_x0(data, 0.5, 1.0, y_f).u
        worst = max(worst, _rel(u.stacked, oracle_kkt(net, prob).u.stacked))
    ok = worst <= 1e-6 and min_rank_gap == 0
    detail = f"sliding-window data, rank([U; X0]) full in all seeds: {min_rank_gap == 0}; max rel err vs oracle {worst:.1e} (<=1e-6)"
    return CriterionResult(13, "nonzero initial states", ok, detail)


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    i: fn
    for i, fn in enumerate(
        (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
         criterion_8, criterion_9, criterion_10, criterion_11, criterion_12, criterion_13),
        start=1,
    )
}


def run_criterion(number: int) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        res = CRITERIA[number]()
    except Exception as exc:  # a crash is a failure, reported like one
        res = CriterionResult(number, CRITERIA[number].__name__, False, f"raised {type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


def run_acceptance(numbers=None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    results = []
    for k in numbers or sorted(CRITERIA):
        res = run_criterion(k)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
