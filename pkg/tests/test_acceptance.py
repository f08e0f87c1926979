"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from geosmc.desired import attitude_sinusoid, lemniscate
from geosmc.dynamics import (ReducedState, UnicycleParams, spacecraft_system,
                             state_no_slip_residual, unconstrained_rhs,
                             unicycle_connection, unicycle_connection_pinv,
                             unicycle_system)
from geosmc.errors import AbortNearCriticalSet, NearAntipodal
from geosmc.integrate import IntegratorConfig, simulate
from geosmc.kinematic import (KinematicControllerSE2, KinematicControllerSO3,
                              check_assumption3, check_definition1,
                              se2_sampler, so3_sampler)
from geosmc.lie import PoseSE2, Rotation3, se2_log, so3_exp
from geosmc.report import log_slope, read_trajectory_csv
from geosmc.scenario import load_scenario, run_scenario
from geosmc.sliding import (SlidingGains, SlidingModeLaw,
                            constrained_tracking_force, state_on_sliding_set,
                            tracking_force)

from conftest import random_pose, random_rotation


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return emit


# --------------------------------------------------------------------------- #
# Shared runs
# --------------------------------------------------------------------------- #

@pytest.fixture(scope="module")
def reference_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("reference")
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "geosmc.cli", "simulate", "unicycle-lemniscate",
                           "--out", str(out)], capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    assert proc.returncode == 0, proc.stderr
    return elapsed, read_trajectory_csv(out / "unicycle-lemniscate.csv")


def _random_tracking_start(rng, g_d0):
    radius = 1.5 * math.sqrt(rng.uniform())
    phi = rng.uniform(-math.pi, math.pi)
    g_e = PoseSE2(radius * math.cos(phi), radius * math.sin(phi), rng.uniform(-2.5, 2.5))
    return ReducedState(g_d0 @ g_e, np.zeros(2), np.zeros(2))


@pytest.fixture(scope="module")
def unicycle_random_runs():
    """20 closed-loop runs from random admissible errors; W and residuals at every step."""
    scn = load_scenario("unicycle-lemniscate")
    law = scn.build_law()
    g_d0 = law.desired.g_d(0.0)
    rng = np.random.default_rng(0)
    cfg = IntegratorConfig(h=1e-3, t_end=40.0)
    runs = []
    for k in range(20):
        start = _random_tracking_start(rng, g_d0)
        t_log, W_log, res_log = [], [], []

        def sample(t, s):
            ev = law.evaluate(t, s)
            t_log.append(t)
            W_log.append(ev.W)
            res_log.append(float(np.max(np.abs(state_no_slip_residual(law.sys, s)))))
            return None, law.rate_from(s, ev)

        aborted = None
        try:
            simulate(law.rhs, start, cfg, sample=sample, margin=law.margin)
        except AbortNearCriticalSet as exc:
            aborted = exc
        runs.append(dict(index=k, e0=se2_log(g_d0.inverse() @ start.g), t=np.array(t_log),
                         W=np.array(W_log), residual=np.array(res_log), aborted=aborted))
    return runs


def envelope_rate(t, W):
    """Tightest c with W(t) <= 1.05 W(1) exp(c (t - 1)) for all logged t > 1."""
    i1 = int(np.searchsorted(t, 1.0))
    later = t > t[i1]
    return float(np.max(np.log(W[later] / (1.05 * W[i1])) / (t[later] - t[i1])))


# --------------------------------------------------------------------------- #
# Criteria
# --------------------------------------------------------------------------- #

def test_criterion_01_reference_experiment(verdict, reference_run):
    elapsed, traj = reference_run
    t = traj["t"]
    final = {k: float(traj[k][-1]) for k in ("err_frobenius", "err_xi", "sliding_norm")}
    slope = log_slope(t, traj["lyapunov_W"], 1.0, 40.0)
    ok = (elapsed < 30.0 and t[-1] == pytest.approx(60.0) and all(v < 1e-3 for v in final.values())
          and slope < 0)
    verdict(1, ok, f"run {elapsed:.1f} s (< 30); at t = 60 s err_F {final['err_frobenius']:.2e}, "
                   f"err_xi {final['err_xi']:.2e}, sliding {final['sliding_norm']:.2e} (< 1e-3); "
                   f"log W slope on [1, 40] s {slope:.4f} (< 0)")
    assert ok


def test_criterion_02_exponential_envelope(verdict, unicycle_random_runs):
    failures = []
    rates = []
    for run in unicycle_random_runs:
        if run["aborted"] is not None:
            failures.append(f"#{run['index']} aborted at t = {run['aborted'].t:.2f} s "
                            f"(theta_e(0) = {run['e0'][2]:+.2f})")
            continue
        c = envelope_rate(run["t"], run["W"])
        max_inc = float(np.max(np.diff(run["W"])))
        rates.append(c)
        if not (c < 0 and max_inc <= 1e-10):
            failures.append(f"#{run['index']} c = {c:.3g}, max W increase {max_inc:.2e}")
    ok = not failures
    detail = (f"{20 - len(failures)}/20 runs inside the envelope"
              + (f", worst accepted c = {max(rates):.3g}" if rates else "")
              + ("; failures: " + "; ".join(failures) if failures else ""))
    verdict(2, ok, detail)
    assert ok, detail


def test_criterion_03_no_slip_constraint(verdict, reference_run, unicycle_random_runs):
    _, traj = reference_run
    worst = float(np.max(traj["constraint_residual"]))
    accepted = [r for r in unicycle_random_runs if r["aborted"] is None]
    for run in accepted:
        worst = max(worst, float(np.max(run["residual"])))
    ok = worst < 1e-9
    verdict(3, ok, f"max |no-slip residual| {worst:.2e} (< 1e-9) over the reference run "
                   f"and {len(accepted)} accepted random runs")
    assert ok


def test_criterion_04_spacecraft_suite(verdict):
    rng = np.random.default_rng(4)
    sys_ = spacecraft_system()

    # (a) free spin, no control
    s0 = ReducedState(random_rotation(rng), np.zeros(3), rng.normal(size=3), rng.normal(size=3))
    p0, E0 = np.linalg.norm(s0.p), sys_.kinetic_energy(s0)
    drift = [0.0, 0.0]

    def spin_sample(t, s):
        drift[0] = max(drift[0], abs(np.linalg.norm(s.p) - p0))
        drift[1] = max(drift[1], abs(sys_.kinetic_energy(s) - E0))
        return None, None

    simulate(lambda t, s: unconstrained_rhs(sys_, s, np.zeros(3)), s0,
             IntegratorConfig(h=1e-3, t_end=10.0), sample=spin_sample)
    ok_a = drift[0] < 1e-9 and drift[1] < 1e-6

    # (b) tracking from 20 sampled starts in the basin
    scn = load_scenario("spacecraft-tracking")
    scn.integrator = IntegratorConfig(h=5e-3, t_end=30.0, log_stride=100)
    R_d0 = scn.build_desired().g_d(0.0)
    draw = so3_sampler()
    worst_V = worst_s = 0.0
    for _ in range(20):
        start = scn.initial_state().replace(g=R_d0 @ draw(rng))
        last = run_scenario(scn, initial=start).samples[-1]
        worst_V, worst_s = max(worst_V, last.morse_V), max(worst_s, last.sliding_norm)
    ok_b = worst_V < 1e-4 and worst_s < 1e-4

    # (c) starts with tr(R_e(0)) < -1 + 1e-6
    paths = []
    for gap in (3e-4, 3e-5):
        start = scn.initial_state().replace(g=R_d0 @ so3_exp((0.0, 0.0, math.pi - gap)))
        assert np.trace((R_d0.inverse() @ start.g).m) < -1 + 1e-6
        try:
            run_scenario(scn, initial=start)
            paths.append("no abort")
        except AbortNearCriticalSet as exc:
            cause = type(exc.__cause__).__name__ if exc.__cause__ else "margin guard"
            paths.append(f"abort at t = {exc.t:g} via {cause}")
    ok_c = all(p.startswith("abort") for p in paths) and "NearAntipodal" in paths[1]

    ok = ok_a and ok_b and ok_c
    verdict(4, ok, f"(a) ||p|| drift {drift[0]:.1e} (< 1e-9), energy drift {drift[1]:.1e} (< 1e-6); "
                   f"(b) 20 starts at 30 s: max V {worst_V:.1e}, max ||sigma|| {worst_s:.1e} (< 1e-4); "
                   f"(c) {', '.join(paths)}")
    assert ok


def test_criterion_05_controller_properties(verdict):
    so3 = check_definition1(KinematicControllerSO3(), so3_sampler(), n=10_000, seed=5)
    se2 = check_definition1(KinematicControllerSE2(), se2_sampler(), n=10_000, seed=5)
    neg = check_definition1(KinematicControllerSE2(k_b=1.0, allow_uncertified=True), se2_sampler(),
                            n=10_000, seed=5)
    parts = {
        "SO(3) (i)": so3.prop_i_ok, "SO(3) (ii)": so3.prop_ii_ok,
        "SO(3) (iii)": so3.prop_iii_violations == 0,
        "SE(2) (i)": se2.prop_i_ok, "SE(2) (ii)": se2.prop_ii_ok,
        "SE(2) (iii)": se2.prop_iii_violations == 0,
        "k_b = 1 negative control": neg.prop_iii_violations >= 1,
    }
    ok = all(parts.values())
    verdict(5, ok, ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in parts.items())
            + f"; SE(2) max |xi_u(g^-1) + xi_u(g)| = {se2.max_inverse_error:.2e} (tol 1e-10); "
              f"k_b = 1 violations: {neg.prop_iii_violations}")
    assert ok


def test_criterion_06_morse_lower_bound(verdict):
    ctrl = KinematicControllerSE2()
    ok, worst = check_assumption3(ctrl, ctrl.k1 / 8, se2_sampler(), n=100_000, seed=6)
    verdict(6, ok, f"V >= (k1/8)||I - Ad(g^-1)||_F^2 over 1e5 samples, |theta| <= pi - 0.01: "
                   f"worst ratio V / ||.||^2 = {worst:.4g} vs k1/8 = {ctrl.k1 / 8:.4g}")
    assert ok


def test_criterion_07_cross_implementation(verdict):
    rng = np.random.default_rng(7)
    gains = SlidingGains(1.5, 2.2)
    sc, uni = spacecraft_system(), unicycle_system()
    cases = {
        "spacecraft": (sc, KinematicControllerSO3(), attitude_sinusoid(), tracking_force,
                       lambda: ReducedState(random_rotation(rng, 2.8), rng.normal(size=3),
                                            rng.normal(size=3), rng.normal(size=3))),
        "unicycle": (uni, KinematicControllerSE2(), lemniscate(), constrained_tracking_force,
                     lambda: ReducedState(random_pose(rng, 1.5, 2.8), rng.normal(size=2),
                                          rng.normal(size=2))),
    }
    worst = {}
    for name, (system, ctrl, des, generic, draw) in cases.items():
        law = SlidingModeLaw(system, ctrl, gains, des, closed_form=True)
        w = 0.0
        for _ in range(1000):
            s, t = draw(), float(rng.uniform(0, 60))
            ref = generic(system, ctrl, s, des, gains, t)
            w = max(w, float(np.max(np.abs(law.force(t, s) - ref)) / max(1.0, float(np.max(np.abs(ref))))))
        worst[name] = w
    ok = max(worst.values()) < 1e-10
    verdict(7, ok, ", ".join(f"{k}: max difference {v:.2e}" for k, v in worst.items())
            + " over 1000 states each (< 1e-10)")
    assert ok


def test_criterion_08_lie_core(verdict):
    rng = np.random.default_rng(8)
    rt = ax = ad = 0.0
    for _ in range(10_000):
        R = random_rotation(rng, math.pi - 1e-3)
        rt = max(rt, float(np.max(np.abs(Rotation3.exp(R.log()).m - R.m))))
        w = rng.normal(size=3)
        w *= rng.uniform(0, math.pi - 1e-3) / np.linalg.norm(w)
        rt = max(rt, float(np.max(np.abs(Rotation3.exp(w).log() - w))))
        a, b, c = (random_pose(rng, 2.0, math.pi - 1e-3) for _ in range(3))
        rt = max(rt, float(np.max(np.abs(PoseSE2.exp(a.log()).matrix() - a.matrix()))))
        e = PoseSE2.identity()
        ax = max(ax, float(np.max(np.abs(((a @ b) @ c).matrix() - (a @ (b @ c)).matrix()))),
                 float(np.max(np.abs((a @ e).matrix() - a.matrix()))),
                 float(np.max(np.abs((a @ a.inverse()).matrix() - np.eye(3)))))
        S = random_rotation(rng)
        ad = max(ad, float(np.max(np.abs((a @ b).Ad() - a.Ad() @ b.Ad()))),
                 float(np.max(np.abs((R @ S).Ad() - R.Ad() @ S.Ad()))))
    p = UnicycleParams()
    conn = float(np.max(np.abs(unicycle_connection_pinv(p) @ unicycle_connection(p) - np.eye(2))))
    ok = rt < 1e-9 and ax < 1e-12 and ad < 1e-12 and conn <= 2 * np.finfo(float).eps
    verdict(8, ok, f"exp/log roundtrip {rt:.1e} (< 1e-9), SE(2) axioms {ax:.1e} (< 1e-12), "
                   f"Ad homomorphism {ad:.1e} (< 1e-12), |AA^+ AA - I_2| {conn:.1e} (machine precision)")
    assert ok


def test_criterion_09_gradient_checks(verdict):
    rng = np.random.default_rng(9)
    h = 1e-6
    worst = {}
    for name, ctrl, draw in (("SO(3)", KinematicControllerSO3(), lambda: random_rotation(rng, 2.8)),
                             ("SE(2)", KinematicControllerSE2(), lambda: random_pose(rng, 1.5, 2.8))):
        G = ctrl.group
        w, n = 0.0, 0
        while n < 100:
            g = draw()
            if name == "SE(2)" and abs(se2_log(g)[0]) < 1e-3:
                continue  # beta jumps across z_x = 0, where the gradient is undefined
            fd = np.array([(ctrl.morse(g @ G.exp(h * e)) - ctrl.morse(g @ G.exp(-h * e))) / (2 * h)
                           for e in np.eye(3)])
            an = ctrl.morse_body_grad(g)
            w = max(w, float(np.linalg.norm(fd - an) / np.linalg.norm(an)))
            n += 1
        worst[name] = w
    ok = max(worst.values()) < 1e-5
    verdict(9, ok, ", ".join(f"{k}: max relative error {v:.1e}" for k, v in worst.items())
            + " at 100 points each (< 1e-5)")
    assert ok


def test_criterion_10_forward_invariance(verdict):
    rng = np.random.default_rng(10)
    sc = spacecraft_system()
    cases = {
        "spacecraft": (SlidingModeLaw(sc, KinematicControllerSO3(), SlidingGains(1.0, 2.0), None,
                                      coupling=False),
                       ReducedState(random_rotation(rng, 2.0), np.zeros(3), np.zeros(3), rng.normal(size=3))),
        "unicycle": (SlidingModeLaw(unicycle_system(), KinematicControllerSE2(), SlidingGains(1.5, 2.2),
                                    None, coupling=False),
                     ReducedState(random_pose(rng, 1.0, 2.0), np.zeros(2), np.zeros(2))),
    }
    worst = {}
    for name, (law, s0) in cases.items():
        s0 = state_on_sliding_set(law, 0.0, s0)
        res = [0.0]

        def sample(t, s, law=law, res=res):
            ev = law.evaluate(t, s)
            res[0] = max(res[0], float(np.linalg.norm(ev.residual)))
            return None, law.rate_from(s, ev)

        simulate(law.rhs, s0, IntegratorConfig(h=1e-4, t_end=10.0), sample=sample)
        worst[name] = res[0]
    ok = max(worst.values()) < 1e-4
    verdict(10, ok, ", ".join(f"{k}: max ||xi + lam xi_u|| {v:.1e}" for k, v in worst.items())
            + " over 10 s at h = 1e-4 (< 1e-4; reaching law, gradient coupling off)")
    assert ok


def test_near_antipodal_is_reported_by_the_map():
    # the guard in criterion 4(c) relies on this error type
    with pytest.raises(NearAntipodal):
        so3_exp((math.pi - 1e-10, 0.0, 0.0)).log()
