"""Property suites run by ``coarea-tv selftest`` with a fixed seed."""

from __future__ import annotations

import numpy as np

from .anisotropy import AnisotropyDensity, sphere_directions
from .denoise import DenoiseProblem, solve_first_order, solve_oracle
from .lattice import GridDomain, GridFunction, GridSet, coarea_check, eval_Jh, submodularity_of_Jh_check
from .stencil import BUILTIN_POTENTIALS, check_submodular, extension_properties_check


def _random_function(rng, F, shape, levels):
    dom = GridDomain(1.0 / max(shape), (0,) * F.stencil.dim, np.ones(shape, dtype=bool))
    vals = rng.choice(rng.normal(size=levels), size=shape)
    return GridFunction(dom, vals)


def run_selftest(seed: int = 0, samples: int = 200) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for name, make in BUILTIN_POTENTIALS.items():
        F = make()
        out.append((f"{name}: submodular", check_submodular(F).ok))
        out.append((f"{name}: coercive", F.coercivity_c > 0))
        out.append((f"{name}: extension properties", extension_properties_check(F, samples, seed).ok))

        ok = True
        for _ in range(20):
            u = _random_function(rng, F, (12, 12), int(rng.integers(2, 8)))
            r = coarea_check(u, F)
            ok &= r.gap <= 1e-10 * (1 + r.lhs)
        out.append((f"{name}: coarea identity", ok))

        ok = True
        for _ in range(20):
            u = _random_function(rng, F, (10, 10), 6)
            lam, c = float(rng.uniform(0.1, 5)), float(rng.normal())
            J = eval_Jh(u, F)
            ok &= abs(eval_Jh(u.with_values(lam * u.values), F) - lam * J) <= 1e-12 * max(1, lam * J)
            ok &= abs(eval_Jh(u.with_values(u.values + c), F) - J) <= 1e-12 * max(1, J)
        out.append((f"{name}: homogeneity and shift invariance of J_h", ok))

        ok = True
        dom = GridDomain(1 / 16, (0, 0), np.ones((16, 16), dtype=bool))
        for _ in range(samples):
            E1 = GridSet(dom, rng.random((16, 16)) < 0.5)
            E2 = GridSet(dom, rng.random((16, 16)) < 0.5)
            ok &= submodularity_of_Jh_check(E1, E2, F).ok
        out.append((f"{name}: submodularity of J_h", ok))

        dens = AnisotropyDensity(F)
        th = sphere_directions(2, 90)
        ok = bool(np.all(dens.many(th) > 0))
        lam = 2.5
        ok &= bool(np.allclose(dens.many(lam * th), lam * dens.many(th), rtol=1e-12))
        out.append((f"{name}: anisotropy positive and homogeneous", ok))

        ok_eq, ok_mono, ok_fo, ok_trunc = True, True, True, True
        for _ in range(5):
            dom = GridDomain(1.0, (0, 0), np.ones((3, 3), dtype=bool))
            g = GridFunction(dom, rng.uniform(0, 1, (3, 3)))
            gv = g.cell_values()
            P = DenoiseProblem(g, F, float(rng.choice([0.1, 1.0, 10.0])), np.linspace(gv.min(), gv.max(), 4))
            try:
                o = solve_oracle(P)
            except Exception:
                ok_eq = ok_mono = False
                continue
            ok_eq &= o.oracle_b_energy is not None and abs(o.energy - o.oracle_b_energy) <= 1e-9
            fo = solve_first_order(P, max_iter=20000, tol=1e-6)
            ok_fo &= fo.energy <= o.energy * (1 + 1e-3)
            gs = g.sup_norm() + 1e-12
            ok_trunc &= o.u.sup_norm() <= gs and fo.u.sup_norm() <= gs
        out.append((f"{name}: denoise oracles agree", ok_eq))
        out.append((f"{name}: denoise level sets nested", ok_mono))
        out.append((f"{name}: first-order reaches oracle energy", ok_fo))
        out.append((f"{name}: truncation bound", ok_trunc))
    return out
