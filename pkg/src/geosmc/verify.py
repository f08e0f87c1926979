"""
Verification battery behind ``geosmc verify``.

Each group is a function ``(seed, options) -> GroupResult``.  Groups are
independent, use fixed seeds, and can run in parallel processes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .desired import lemniscate
from .dynamics import (ReducedState, UnicycleParams, spacecraft_system,
                       state_no_slip_residual, unicycle_connection,
                       unicycle_connection_pinv, unicycle_system)
from .integrate import IntegratorConfig, simulate
from .kinematic import (KinematicControllerSE2, KinematicControllerSO3,
                        check_assumption3, check_definition1,
                        gain_feasibility_se2, se2_sampler, so3_sampler)
from .lie import PoseSE2, Rotation3, so3_exp
from .sliding import SlidingGains, SlidingModeLaw, state_on_sliding_set

SUITES = ("lie", "kinctrl", "dynamics", "sliding")


@dataclass
class GroupResult:
    name: str
    ok: bool
    lines: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "seconds": round(self.seconds, 3),
                "values": self.values}


def _rand_so3(rng, max_angle=math.pi - 1e-3):
    ax = rng.normal(size=3)
    ax /= np.linalg.norm(ax)
    return so3_exp(ax * rng.uniform(0.0, max_angle))


def _rand_se2(rng, box=2.0, theta_max=math.pi - 1e-3):
    return PoseSE2(*rng.uniform(-box, box, 2), rng.uniform(-theta_max, theta_max))


# --------------------------------------------------------------------------- #
# lie
# --------------------------------------------------------------------------- #

def lie_roundtrip(seed: int, opts: dict) -> GroupResult:
    rng = np.random.default_rng(seed)
    n = opts.get("n", 10_000)
    e_so3 = e_se2 = 0.0
    for _ in range(n):
        R = _rand_so3(rng)
        e_so3 = max(e_so3, float(np.max(np.abs(Rotation3.exp(R.log()).m - R.m))))
        w = rng.normal(size=3)
        w *= rng.uniform(0, math.pi - 1e-3) / np.linalg.norm(w)
        e_so3 = max(e_so3, float(np.max(np.abs(Rotation3.exp(w).log() - w))))
        g = _rand_se2(rng)
        e_se2 = max(e_se2, float(np.max(np.abs(PoseSE2.exp(g.log()).matrix() - g.matrix()))))
    ok = max(e_so3, e_se2) < 1e-9
    return GroupResult("lie.exp_log_roundtrip", ok,
                       [f"SO(3) exp/log roundtrip max error {e_so3:.3e} over {n} samples",
                        f"SE(2) exp/log roundtrip max error {e_se2:.3e} over {n} samples"],
                       {"so3_max_error": e_so3, "se2_max_error": e_se2, "tol": 1e-9})


def lie_axioms(seed: int, opts: dict) -> GroupResult:
    rng = np.random.default_rng(seed)
    n = opts.get("n", 10_000)
    assoc = ident = inv = ad_hom = 0.0
    for _ in range(n):
        a, b, c = _rand_se2(rng), _rand_se2(rng), _rand_se2(rng)
        assoc = max(assoc, float(np.max(np.abs(((a @ b) @ c).matrix() - (a @ (b @ c)).matrix()))))
        e = PoseSE2.identity()
        ident = max(ident, float(np.max(np.abs((a @ e).matrix() - a.matrix()))),
                    float(np.max(np.abs((e @ a).matrix() - a.matrix()))))
        inv = max(inv, float(np.max(np.abs((a @ a.inverse()).matrix() - np.eye(3)))))
        ad_hom = max(ad_hom, float(np.max(np.abs((a @ b).Ad() - a.Ad() @ b.Ad()))))
        R, S = _rand_so3(rng), _rand_so3(rng)
        ad_hom = max(ad_hom, float(np.max(np.abs((R @ S).Ad() - R.Ad() @ S.Ad()))))
    ok = max(assoc, ident, inv, ad_hom) < 1e-12
    return GroupResult("lie.group_axioms", ok,
                       [f"SE(2) associativity {assoc:.3e}, identity {ident:.3e}, inverse {inv:.3e}",
                        f"Ad homomorphism (SO(3), SE(2)) {ad_hom:.3e}"],
                       {"assoc": assoc, "identity": ident, "inverse": inv,
                        "ad_homomorphism": ad_hom, "tol": 1e-12})


def lie_orthogonality(seed: int, opts: dict) -> GroupResult:
    rng = np.random.default_rng(seed)
    n = opts.get("n", 100_000)
    R = Rotation3.identity()
    worst = 0.0
    for i in range(n):
        R = (R @ so3_exp(rng.normal(scale=0.3, size=3))).orthonormalized()
        if i % 100 == 0 or i == n - 1:
            worst = max(worst, float(np.linalg.norm(R.m.T @ R.m - np.eye(3))))
    ok = worst < 1e-12
    return GroupResult("lie.long_composition", ok,
                       [f"||R^T R - I||_F after {n} compositions: max {worst:.3e}"],
                       {"orthogonality": worst, "compositions": n})


# --------------------------------------------------------------------------- #
# kinctrl
# --------------------------------------------------------------------------- #

def _se2_ctrl(opts):
    k_b = opts.get("k_b", 10.0)
    return KinematicControllerSE2(k_b=k_b, k1=0.01, k2=0.1, allow_uncertified=True)


def kin_so3(seed: int, opts: dict) -> GroupResult:
    rep = check_definition1(KinematicControllerSO3(), so3_sampler(), n=opts.get("n", 10_000), seed=seed)
    return GroupResult("kinctrl.so3_definition1", rep.ok, rep.summary().splitlines(),
                       {"prop_i": rep.prop_i_ok, "prop_ii": rep.prop_ii_ok,
                        "prop_iii_violations": rep.prop_iii_violations,
                        "y": rep.prop_iv_rate_estimate})


def kin_se2_descent(seed: int, opts: dict) -> GroupResult:
    ctrl = _se2_ctrl(opts)
    rep = check_definition1(ctrl, se2_sampler(), n=opts.get("n", 10_000), seed=seed)
    ok = rep.prop_i_ok and rep.prop_iii_violations == 0 and rep.prop_iv_rate_estimate > 0
    lines = [f"k_b = {ctrl.k_b:g}"] + [ln for ln in rep.summary().splitlines() if "(ii)" not in ln]
    if rep.prop_iii_violations:
        lines.append(f"Definition 1(iii) FLAGGED: {rep.prop_iii_violations} descent violation(s)")
    return GroupResult("kinctrl.se2_descent", ok, lines,
                       {"k_b": ctrl.k_b, "prop_i": rep.prop_i_ok,
                        "prop_iii_violations": rep.prop_iii_violations,
                        "y": rep.prop_iv_rate_estimate})


def kin_se2_odd(seed: int, opts: dict) -> GroupResult:
    ctrl = _se2_ctrl(opts)
    rep = check_definition1(ctrl, se2_sampler(), n=opts.get("n", 10_000), seed=seed)
    return GroupResult("kinctrl.se2_odd_symmetry", rep.prop_ii_ok,
                       [f"max |xi_u(g^-1) + xi_u(g)| = {rep.max_inverse_error:.3e} (tol 1e-10); "
                        "beta = -arctan(z_y/z_x) is even under inversion"],
                       {"max_inverse_error": rep.max_inverse_error})


def kin_assumption3(seed: int, opts: dict) -> GroupResult:
    ctrl = _se2_ctrl(opts)
    n = opts.get("n_assumption", 100_000)
    ok, worst = check_assumption3(ctrl, ctrl.k1 / 8.0, n=n, seed=seed)
    return GroupResult("kinctrl.assumption3", ok,
                       [f"V >= (k1/8)||I - Ad(g^-1)||_F^2 over {n} samples: worst ratio {worst:.4g}"],
                       {"ok": ok, "worst_ratio": worst, "samples": n})


def kin_gains(seed: int, opts: dict) -> GroupResult:
    cases = [((10.0, 0.01, 0.1), True), ((1.0, 0.01, 0.1), False), ((10.0, 0.01, 0.0), False)]
    lines, ok = [], True
    for (kb, k1, k2), expect in cases:
        v = gain_feasibility_se2(kb, k1, k2)
        ok &= v.feasible == expect
        lines.append(f"(k_b, k1, k2) = ({kb:g}, {k1:g}, {k2:g}): {v}")
    return GroupResult("kinctrl.gain_feasibility", ok, lines)


def kin_gradients(seed: int, opts: dict) -> GroupResult:
    rng = np.random.default_rng(seed)
    h = 1e-6
    worst = {}
    for name, ctrl, draw in (("so3", KinematicControllerSO3(), lambda: _rand_so3(rng, 2.8)),
                             ("se2", _se2_ctrl(opts), lambda: _rand_se2(rng, 1.5, 2.8))):
        G = ctrl.group
        w = 0.0
        n = 0
        while n < 100:
            g = draw()
            if name == "se2" and abs(g.log()[0]) < 1e-3:
                continue  # beta has a ridge on z_x = 0
            fd = np.array([(ctrl.morse(g @ G.exp(h * e)) - ctrl.morse(g @ G.exp(-h * e))) / (2 * h)
                           for e in np.eye(3)])
            an = ctrl.morse_body_grad(g)
            w = max(w, float(np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1e-8)))
            n += 1
        worst[name] = w
    ok = max(worst.values()) < 1e-5
    return GroupResult("kinctrl.gradients", ok,
                       [f"{k}: max relative FD error {v:.3e}" for k, v in worst.items()], worst)


# --------------------------------------------------------------------------- #
# dynamics
# --------------------------------------------------------------------------- #

def dyn_connection(seed: int, opts: dict) -> GroupResult:
    p = UnicycleParams()
    err = float(np.max(np.abs(unicycle_connection_pinv(p) @ unicycle_connection(p) - np.eye(2))))
    return GroupResult("dynamics.unicycle_connection", err < 1e-14,
                       [f"|AA^+ AA - I_2| = {err:.3e}"], {"error": err})


def dyn_free_spin(seed: int, opts: dict) -> GroupResult:
    rng = np.random.default_rng(seed)
    sys = spacecraft_system()
    state = ReducedState(_rand_so3(rng), np.zeros(3), rng.normal(size=3), rng.normal(size=3))
    cfg = IntegratorConfig(h=1e-3, t_end=opts.get("t_end", 10.0), log_stride=100)

    def rhs(t, s):
        from .dynamics import unconstrained_rhs
        return unconstrained_rhs(sys, s, np.zeros(3))

    p0 = float(np.linalg.norm(state.p))
    E0 = sys.kinetic_energy(state)
    pn, En = [], []

    def sample(t, s):
        pn.append(abs(float(np.linalg.norm(s.p)) - p0))
        En.append(abs(sys.kinetic_energy(s) - E0))
        return None, None

    simulate(rhs, state, cfg, sample=sample)
    dp, dE = max(pn), max(En)
    ok = dp < 1e-9 and dE < 1e-6
    return GroupResult("dynamics.free_spin", ok,
                       [f"||p|| drift {dp:.3e} (tol 1e-9), energy drift {dE:.3e} (tol 1e-6)"],
                       {"momentum_drift": dp, "energy_drift": dE})


def _unicycle_law(coupling=True, desired=True):
    sys = unicycle_system()
    return SlidingModeLaw(sys, KinematicControllerSE2(), SlidingGains(1.5, 2.2),
                          lemniscate() if desired else None, coupling=coupling)


def _reference_unicycle_state():
    return ReducedState(PoseSE2(-1.0, -1.0, -math.pi / 4), np.zeros(2), np.zeros(2))


def dyn_no_slip(seed: int, opts: dict) -> GroupResult:
    law = _unicycle_law()
    worst = [0.0]

    def sample(t, s):
        ev = law.evaluate(t, s)
        worst[0] = max(worst[0], float(np.max(np.abs(state_no_slip_residual(law.sys, s)))))
        return None, law.rate_from(s, ev)

    simulate(law.rhs, _reference_unicycle_state(), IntegratorConfig(h=1e-3, t_end=opts.get("t_end", 10.0)),
             sample=sample)
    return GroupResult("dynamics.no_slip", worst[0] < 1e-9,
                       [f"max |no-slip residual| over closed-loop run: {worst[0]:.3e}"],
                       {"max_residual": worst[0]})


# --------------------------------------------------------------------------- #
# sliding
# --------------------------------------------------------------------------- #

def slide_cross(seed: int, opts: dict) -> GroupResult:
    from .desired import attitude_sinusoid
    rng = np.random.default_rng(seed)
    n = opts.get("n_states", 1000)
    sc = spacecraft_system()
    pairs = {
        "spacecraft": (SlidingModeLaw(sc, KinematicControllerSO3(), SlidingGains(), attitude_sinusoid()),
                       SlidingModeLaw(sc, KinematicControllerSO3(), SlidingGains(), attitude_sinusoid(),
                                      closed_form=False),
                       lambda: ReducedState(_rand_so3(rng, 2.8), rng.normal(size=3), rng.normal(size=3),
                                            rng.normal(size=3))),
        "unicycle": (_unicycle_law(), SlidingModeLaw(unicycle_system(), KinematicControllerSE2(),
                                                     SlidingGains(1.5, 2.2), lemniscate(),
                                                     closed_form=False),
                     lambda: ReducedState(_rand_se2(rng, 1.5, 2.8), rng.normal(size=2),
                                          rng.normal(size=2))),
    }
    worst = {}
    for name, (fast, generic, draw) in pairs.items():
        w = 0.0
        for _ in range(n):
            s = draw()
            t = float(rng.uniform(0, 60))
            a, b = fast.force(t, s), generic.force(t, s)
            w = max(w, float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b))))))
        worst[name] = w
    ok = max(worst.values()) < 1e-10
    return GroupResult("sliding.cross_implementation", ok,
                       [f"{k}: closed form vs generic max rel. difference {v:.3e} over {n} states"
                        for k, v in worst.items()], worst)


def slide_invariance(seed: int, opts: dict) -> GroupResult:
    rng = np.random.default_rng(seed)
    t_end = opts.get("t_end_invariance", 2.0)
    worst = {}
    sc = spacecraft_system()
    cases = {
        "spacecraft": (SlidingModeLaw(sc, KinematicControllerSO3(), SlidingGains(1.0, 2.0), None, coupling=False),
                       ReducedState(_rand_so3(rng, 2.0), np.zeros(3), np.zeros(3), rng.normal(size=3))),
        "unicycle": (_unicycle_law(coupling=False, desired=False),
                     ReducedState(_rand_se2(rng, 1.0, 2.0), np.zeros(2), np.zeros(2))),
    }
    for name, (law, s0) in cases.items():
        s0 = state_on_sliding_set(law, 0.0, s0)
        res = [0.0]

        def sample(t, s, law=law, res=res):
            ev = law.evaluate(t, s)
            res[0] = max(res[0], float(np.linalg.norm(ev.residual)))
            return None, law.rate_from(s, ev)

        simulate(law.rhs, s0, IntegratorConfig(h=1e-3, t_end=t_end), sample=sample)
        worst[name] = res[0]
    ok = max(worst.values()) < 1e-4
    return GroupResult("sliding.forward_invariance", ok,
                       [f"{k}: max ||xi + lam xi_u|| from the sliding set over {t_end:g} s: {v:.3e}"
                        for k, v in worst.items()], worst)


def slide_decrease(seed: int, opts: dict) -> GroupResult:
    law = _unicycle_law()
    Ws = []

    def sample(t, s):
        ev = law.evaluate(t, s)
        Ws.append(ev.W)
        return None, law.rate_from(s, ev)

    simulate(law.rhs, _reference_unicycle_state(), IntegratorConfig(h=1e-3, t_end=opts.get("t_end", 10.0)),
             sample=sample)
    inc = float(np.max(np.diff(Ws)))
    ok = inc <= 1e-10
    return GroupResult("sliding.lyapunov_decrease", ok,
                       [f"reference run: W {Ws[0]:.4g} -> {Ws[-1]:.4g}, largest step increase {inc:.3e}"],
                       {"W0": Ws[0], "W_end": Ws[-1], "max_increase": inc})


GROUPS = {
    "lie": [lie_roundtrip, lie_axioms, lie_orthogonality],
    "kinctrl": [kin_so3, kin_se2_descent, kin_se2_odd, kin_assumption3, kin_gains, kin_gradients],
    "dynamics": [dyn_connection, dyn_free_spin, dyn_no_slip],
    "sliding": [slide_cross, slide_invariance, slide_decrease],
}


def _run_one(args):
    fn, seed, opts = args
    t0 = time.perf_counter()
    try:
        res = fn(seed, opts)
    except Exception as exc:  # a crashing group is a failed group
        res = GroupResult(fn.__name__, False, [f"raised {type(exc).__name__}: {exc}"])
    res.seconds = time.perf_counter() - t0
    return res


def run_suite(suite: str, seed: int = 0, jobs: int = 1, opts: dict | None = None) -> list:
    """Run the groups of ``suite`` (or ``"all"``) and return their results in order."""
    if suite != "all" and suite not in GROUPS:
        raise ValueError(f"unknown suite '{suite}'")
    fns = [f for s in SUITES for f in GROUPS[s]] if suite == "all" else GROUPS[suite]
    work = [(fn, seed, dict(opts or {})) for fn in fns]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, work))
    return [_run_one(w) for w in work]
