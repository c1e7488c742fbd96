"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Closed-form oracles: the shortest orbit of a ball is a diameter (length 4r), of
the (2, 1) ellipse and the (2, 1) smoothed box the short axis (length 4). The
derivative and inertia checks use finite differences and dense eigenvalues.
"""

import time

import numpy as np
import pytest
from helpers import central_gradient, random_loop

from billiardcap.actionloop import (
    action,
    action_grad,
    action_hessian,
    find_critical_point,
    fixed_tau_hessian,
    make_seeds,
    morse_index_fixed_tau,
)
from billiardcap.billiard import ellipse_invariant, reflect, shoot
from billiardcap.geometry import default_d0, domain_from_spec
from billiardcap.penalty import PenaltyConfig
from conftest import DOMAINS

ALL = ["disk", "ball3", "disk_r2", "ellipse", "box", "dumbbell"]


def _best_stages(report):
    idx = report["best"]["seed_index"]
    return next(b["stages"] for b in report["branches"] if b["seed_index"] == idx)


def _packed_grad(domain, cfg, loop):
    dG, dtau = action_grad(domain, cfg, loop, 0.5)
    return np.append(dG.ravel(), dtau)


class TestAcceptance:
    def test_criterion_01_ball(self, find_run, acceptance):
        ok, parts = True, []
        for name in ("disk", "ball3"):
            run = find_run(name)
            best = run["report"]["best"]
            n = DOMAINS[name]["dim"]
            good = (run["code"] == 0 and best is not None
                    and 3.999 <= best["length"] <= 4.001
                    and best["bounce_count"] == 2 <= n + 1
                    and abs(best["ratio"] - 4.0) <= 1e-3
                    and run["elapsed"] <= 60.0)
            ok &= good
            parts.append(f"{name}: L={best['length']:.6f} bounces={best['bounce_count']} "
                         f"ratio={best['ratio']:.6f} t={run['elapsed']:.1f}s" if best else f"{name}: no orbit")
        acceptance(1, ok, "; ".join(parts))
        assert ok

    def test_criterion_02_scaling(self, find_run, acceptance):
        a = find_run("disk")["report"]["best"]
        b = find_run("disk_r2")["report"]["best"]
        rel = abs(b["length"] / a["length"] - 2.0) / 2.0
        ok = rel <= 1e-3 and a["bounce_count"] == b["bounce_count"]
        acceptance(2, ok, f"L(r=2)/L(r=1)={b['length'] / a['length']:.6f} rel.err={rel:.1e} "
                          f"bounces {a['bounce_count']}/{b['bounce_count']}")
        assert ok

    def test_criterion_03_ellipse_box(self, find_run, acceptance):
        ok, parts = True, []
        for name in ("ellipse", "box"):
            best = find_run(name)["report"]["best"]
            L = best["length"]
            worst = max(max(r["normal_flip_err"], r["tangential_err"]) for r in best["residuals"])
            disp = best["crosscheck"]["displacement"]
            good = (abs(L - 4.0) <= 0.005 * 4.0 and best["bounce_count"] == 2
                    and worst <= 1e-3 and disp <= 1e-3 * L)
            ok &= good
            parts.append(f"{name}: L={L:.6f} bounces={best['bounce_count']} "
                         f"residual={worst:.1e} displacement={disp:.1e}")
        acceptance(3, ok, "; ".join(parts))
        assert ok

    def test_criterion_04_dumbbell(self, find_run, acceptance):
        run = find_run("dumbbell")
        best = run["report"]["best"]
        ok = (best is not None and best["bounce_count"] <= 3 and best["ratio"] <= 10.0
              and best["crosscheck"]["passed"])
        detail = (f"L={best['length']:.6f} bounces={best['bounce_count']} ratio={best['ratio']:.4f} "
                  f"crosscheck={best['crosscheck']['passed']} t={run['elapsed']:.1f}s"
                  if best else "no orbit")
        acceptance(4, ok, detail)
        assert ok

    def test_criterion_05_gradient_suite(self, acceptance):
        rng = np.random.default_rng(5)
        t0 = time.perf_counter()
        worst_g = worst_h = 0.0
        for name in ("ball3", "ellipse", "box", "dumbbell"):
            d = domain_from_spec(DOMAINS[name])
            cfg = PenaltyConfig(default_d0(d), 0.02)
            for j in range(20):
                loop = random_loop(d, rng, graded=j % 2 == 1, reach=rng.uniform(0.85, 0.98))
                x = loop.pack()
                g = _packed_grad(d, cfg, loop)
                fd = central_gradient(lambda y: action(d, cfg, loop.unpack(y), 0.5), x)
                worst_g = max(worst_g, np.linalg.norm(g - fd) / np.linalg.norm(g))
                H = action_hessian(d, cfg, loop, 0.5)
                for _ in range(2):
                    v = rng.standard_normal(len(x))
                    v /= np.linalg.norm(v)
                    hv = (_packed_grad(d, cfg, loop.unpack(x + 1e-6 * v))
                          - _packed_grad(d, cfg, loop.unpack(x - 1e-6 * v))) / 2e-6
                    worst_h = max(worst_h, np.linalg.norm(hv - H @ v) / np.linalg.norm(H @ v))
        elapsed = time.perf_counter() - t0
        ok = worst_g <= 1e-5 and worst_h <= 1e-3 and elapsed <= 120.0
        acceptance(5, ok, f"80 loops, max grad rel.err={worst_g:.1e}, max Hessian rel.err={worst_h:.1e}, "
                          f"t={elapsed:.1f}s")
        assert ok

    def test_criterion_06_el_energy(self, find_run, acceptance):
        el = en = 0.0
        for name in ALL:
            for st in _best_stages(find_run(name)["report"]):
                el = max(el, st["el_residual_max"])
                en = max(en, st["energy_std"])
        ok = el <= 1e-6 and en <= 1e-4
        acceptance(6, ok, f"6 domains, max EL residual={el:.1e}, max energy stdev={en:.1e}")
        assert ok

    def test_criterion_07_morse_index(self, find_run, acceptance):
        bound_ok, worst = True, []
        for name in ALL:
            n = DOMAINS[name]["dim"]
            idx = [st["morse_index"] for st in _best_stages(find_run(name)["report"])]
            bound_ok &= max(idx) <= n + 1
            worst.append(f"{name}:{max(idx)}")

        rng = np.random.default_rng(7)
        checked = mismatched = 0

        def compare(d, cfg, loop):
            lam = np.linalg.eigvalsh(fixed_tau_hessian(d, cfg, loop))
            dense = int(np.sum(lam < -1e-7 * np.max(np.abs(lam))))
            return dense == morse_index_fixed_tau(d, cfg, loop)

        for name in ("ball3", "ellipse", "box", "dumbbell"):
            d = domain_from_spec(DOMAINS[name])
            cfg = PenaltyConfig(default_d0(d), 0.02)
            for j in range(10):
                loop = random_loop(d, rng, graded=j % 2 == 1, reach=rng.uniform(0.85, 0.98))
                checked += 1
                mismatched += not compare(d, cfg, loop)
        for name in ("disk", "ball3"):
            d = domain_from_spec(DOMAINS[name])
            cfg = PenaltyConfig(default_d0(d), 0.02)
            for seed in make_seeds(d, cfg, 32, 4, np.random.default_rng(3)):
                try:
                    cp = find_critical_point(d, cfg, seed)
                except Exception:
                    continue
                checked += 1
                mismatched += not compare(d, cfg, cp.loop)
        ok = bound_ok and mismatched == 0 and checked >= 44
        acceptance(7, ok, f"max index per domain {' '.join(worst)}; N=32 oracle "
                          f"{checked - mismatched}/{checked} exact")
        assert ok

    def test_criterion_08_tau_length(self, find_run, acceptance):
        rel_worst = speed_worst = 0.0
        for name in ALL:
            best = find_run(name)["report"]["best"]
            rel_worst = max(rel_worst, abs(best["tau_inf"] - best["length"]) / best["length"])
            speed_worst = max(speed_worst, best["speed_deviation"])
        ok = rel_worst <= 0.01 and speed_worst <= 0.02
        acceptance(8, ok, f"max |tau_inf-L|/L={rel_worst:.1e}, max speed deviation={speed_worst:.4f}")
        assert ok

    def test_criterion_09_period_ceiling(self, find_run, acceptance):
        worst, count = -np.inf, 0
        for name in ALL:
            for br in find_run(name)["report"]["branches"]:
                for st in br["stages"]:
                    worst = max(worst, st["tau"] - (196.0 * st["kinetic_integral"] + 1.0))
                    count += 1
        ok = worst <= 0.0
        acceptance(9, ok, f"{count} stages, max tau-(196K+1)={worst:.2f}")
        assert ok

    def test_criterion_10_reflection(self, acceptance):
        rng = np.random.default_rng(10)
        M = 10 ** 6
        nu = rng.standard_normal((M, 3))
        nu /= np.linalg.norm(nu, axis=1, keepdims=True)
        v = rng.standard_normal((M, 3))
        v *= np.sign(np.sum(v * nu, axis=1))[:, None]
        out = np.array([reflect(None, a, b) for a, b in zip(nu, v)])
        speed = np.max(np.abs(np.linalg.norm(out, axis=1) - np.linalg.norm(v, axis=1)))
        an_in = np.sum(v * nu, axis=1)
        an_out = np.sum(out * nu, axis=1)
        tang = np.max(np.linalg.norm((out - an_out[:, None] * nu) - (v - an_in[:, None] * nu), axis=1))

        d = domain_from_spec(DOMAINS["ellipse"])
        u = np.array([np.cos(0.7), np.sin(0.7)])
        shot = shoot(d, np.array([0.3, 0.1]), u, 1000)
        inv = [ellipse_invariant((2.0, 1.0), p, w) for p, w in zip(shot.polyline[:-1], shot.directions)]
        drift = float(np.max(np.abs(np.array(inv) - inv[0])))
        ok = speed <= 1e-12 and tang <= 1e-12 and drift <= 1e-6 and len(shot.bounces) == 1000
        acceptance(10, ok, f"1e6 reflects: speed err={speed:.1e}, tangential err={tang:.1e}; "
                           f"ellipse 1000 bounces invariant drift={drift:.1e}")
        assert ok

    def test_criterion_11_determinism(self, find_run, acceptance):
        a = find_run("disk", "a")["out"]
        b = find_run("disk", "b")["out"]
        same = {f: (a / f).read_bytes() == (b / f).read_bytes()
                for f in ("report.json", "trace.csv", "trajectory.json", "trajectory.svg")}
        ok = all(same.values())
        acceptance(11, ok, "byte-identical: " + ", ".join(f"{k}={v}" for k, v in same.items()))
        assert ok
