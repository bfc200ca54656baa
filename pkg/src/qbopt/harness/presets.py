"""Named scenario presets.

Budgets: the Bose-Hubbard ramp uses 100 random evaluations followed by 1750
BO iterations with refits every 10 iterations and a UCB weight falling
linearly from 5 to 0; noiseless Rydberg pulses use 24 random evaluations and
10 EI iterations; imperfect-lattice Rydberg pulses use 6 random evaluations
and 50 EI iterations.
"""

from __future__ import annotations

from qbopt.harness.config import ConfigError, ScenarioConfig, parse_config

_BH_BO = {"n_init": 100, "m_iters": 1750, "refit_every": 10, "acquisition": "UCB", "ucb_k_start": 5.0, "ucb_k_end": 0.0}
_BH_BO_DESK = dict(_BH_BO, m_iters=500)
_RY_CLEAN = {"n_init": 24, "m_iters": 10, "refit_every": 10, "acquisition": "EI"}
_RY_NOISY = {"n_init": 6, "m_iters": 50, "refit_every": 10, "acquisition": "EI"}
_IMPERFECT = {"detection_prob": 0.9, "fill_prob": 0.9}


def _bh(name, optimizer="bo", fom="fidelity", bo=_BH_BO, budget=1850, note=""):
    doc = {"name": name, "system": "bose-hubbard", "fom": fom, "optimizer": optimizer, "repeats": 30,
           "output_dir": f"runs/{name}"}
    if optimizer == "bo":
        doc["bo"] = bo
    else:
        doc["baseline"] = {"budget": budget}
    return doc, note


def _ry(name, system, bo, fom="manifold", rydberg=None, note=""):
    doc = {"name": name, "system": system, "fom": fom, "optimizer": "bo", "bo": bo, "repeats": 5,
           "output_dir": f"runs/{name}", "rydberg": rydberg or {}}
    return doc, note


_PRESETS = dict(
    [
        ("bh-bo", _bh("bh-bo", note="SF to MI ramp at T = T_QSL, exact fidelity, 100 + 1750 BO evaluations")),
        ("bh-bo-desk", _bh("bh-bo-desk", bo=_BH_BO_DESK,
                           note="desk-scale SF to MI ramp: 100 + 500 BO evaluations, otherwise as bh-bo")),
        ("bh-fexp-bo", _bh("bh-fexp-bo", fom="fexp", bo=_BH_BO_DESK,
                           note="SF to MI ramp optimized on the 1000-shot occupation-variance estimate")),
        ("bh-nm", _bh("bh-nm", "nm", budget=1500, note="Nelder-Mead on the exact-fidelity ramp problem")),
        ("bh-spsa", _bh("bh-spsa", "spsa", budget=1500, note="SPSA on the exact-fidelity ramp problem")),
        ("bh-de", _bh("bh-de", "de", budget=1500, note="differential evolution on the exact-fidelity ramp problem")),
        ("bh-random", _bh("bh-random", "random", budget=600, note="uniform random search on the ramp problem")),
        ("rydberg-1d-bo", _ry("rydberg-1d-bo", "rydberg-1d", _RY_CLEAN,
                              note="F_5 crystal on the 9-site chain, perfect lattice, 24 + 10 EI evaluations")),
        ("rydberg-2d-bo", _ry("rydberg-2d-bo", "rydberg-2d", _RY_CLEAN,
                              note="F_5 crystal on the 3x3 square, perfect lattice, 24 + 10 EI evaluations")),
        ("rydberg-3d-bo", _ry("rydberg-3d-bo", "rydberg-3d", _RY_CLEAN,
                              note="F_4 crystal on the 2x2x2 cube, perfect lattice, 24 + 10 EI evaluations")),
        ("rydberg-1d-imperfect-bo", _ry("rydberg-1d-imperfect-bo", "rydberg-1d", _RY_NOISY, "detected-count",
                                        _IMPERFECT,
                                        note="chain with 0.9 filling and 0.9 detection, 6 + 50 EI evaluations")),
        ("rydberg-2d-imperfect-bo", _ry("rydberg-2d-imperfect-bo", "rydberg-2d", _RY_NOISY, "detected-count",
                                        _IMPERFECT,
                                        note="square with 0.9 filling and 0.9 detection, 6 + 50 EI evaluations")),
        ("rydberg-3d-imperfect-bo", _ry("rydberg-3d-imperfect-bo", "rydberg-3d", _RY_NOISY, "detected-count",
                                        _IMPERFECT,
                                        note="cube with 0.9 filling and 0.9 detection, 6 + 50 EI evaluations")),
        ("rydberg-1d-noisy-bo", _ry("rydberg-1d-noisy-bo", "rydberg-1d", _RY_NOISY, "detected-count",
                                    dict(_IMPERFECT, pulse_noise=0.05),
                                    note="as rydberg-1d-imperfect-bo plus 5% relative noise on every pulse knot")),
    ]
)


def list_presets() -> list[tuple[str, str]]:
    return [(name, note) for name, (_, note) in _PRESETS.items()]


def get_preset(name: str) -> ScenarioConfig:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; run 'qbopt presets' for the list")
    return parse_config(dict(_PRESETS[name][0]))
