"""Experiment configuration: JSON schema, defaults, and range validation.

A config file is a single JSON object with an ``experiment`` kind and a
set of nested sections.  Unknown experiments and out-of-range physical
parameters are rejected with a single error that lists every violation
found, not just the first.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field

from . import constitutive as law
from .errors import ConfigError

EXPERIMENTS = (
    "simulate",
    "cell-perm",
    "block-asymptotics",
    "kernel-check",
    "delta-sweep",
    "subgrid-compare",
)

DEFAULTS = {
    "seed": 0,
    "rocks": {
        "fracture": {"phi": 0.2, "k": 1.0, "a": 1.0, "law": "power", "exp_w": 2, "exp_n": 2},
        "matrix": {"phi": 0.4, "k": 0.05, "a": 2.0, "law": "power", "exp_w": 2, "exp_n": 2},
    },
    "grid": {"lx": 1.0, "ly": 1.0, "nx": 64, "ny": 64,
             "injection_edges": ["left", "right"]},
    "time": {"dt": 0.005, "nsteps": 200},
    "boundary": {
        "p_gamma": {"left": 1.0, "right": 0.0},
        "s_gamma": {"left": 0.85, "right": 0.2},
    },
    "initial": {"s_f0": 0.2},
    "model": {"level": "limit", "delta": 0.1, "d": 2, "sigma_d": None,
              "psi_m": None, "cell_resolution": 256},
    "cell": {"d": 2, "deltas": [0.2, 0.1, 0.05], "n": 512, "kf": 1.0},
    "block": {"d": 3, "deltas": [0.1, 0.05, 0.02], "lambdas": [1.0, 4.0],
              "n_sub": 32, "use_series": True},
    "kernel": {"dts": [4e-3, 2e-3, 1e-3]},
    # the horizon must be long enough for the imbibition layer to span a
    # few sub-grid cells at the smallest delta (layer width ~ delta*sqrt(
    # k_m*psi_m*t/phi_m)), otherwise the sub-grid source is unresolved
    "subgrid": {"deltas": [0.1, 0.05, 0.02], "n_sub": 32, "dt": 1.0,
                "nsteps": 120, "s_start": 0.2, "s_end": 0.8, "t_ramp": 30.0},
    "sweep": {"deltas": [0.2, 0.1, 0.05]},
}


@dataclass
class ExperimentConfig:
    """Typed, validated configuration with defaults filled in."""

    experiment: str
    raw: dict
    seed: int = 0
    system: object = None
    sections: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.sections[key]

    def input_hash(self):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _merge(defaults, user):
    out = copy.deepcopy(defaults)
    for k, v in user.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_rock(name, sec, errs):
    phi, k, a = sec.get("phi"), sec.get("k"), sec.get("a")
    if not (isinstance(phi, (int, float)) and 0.0 < phi < 1.0):
        errs.append(f"rocks.{name}.phi must lie in the open interval (0, 1), got {phi}")
    if not (isinstance(k, (int, float)) and k > 0.0):
        errs.append(f"rocks.{name}.k must be positive, got {k}")
    if not (isinstance(a, (int, float)) and a > 0.0):
        errs.append(f"rocks.{name}.a (capillary entry scale) must be positive, got {a}")
    if sec.get("law", "power") != "power":
        errs.append(f"rocks.{name}.law: only 'power' is built in, got {sec.get('law')!r}")


def _build_rock(name, sec):
    curves = law.power_law(sec["a"], sec.get("exp_w", 2), sec.get("exp_n", 2))
    return law.RockParams(name, phi=sec["phi"], k=sec["k"], a=sec["a"], law=curves)


def _edge_values(raw, edges, errs, path):
    """Normalize a scalar-or-mapping boundary entry to an edge dict."""
    if isinstance(raw, dict):
        missing = [e for e in edges if e not in raw]
        if missing:
            errs.append(f"{path} missing values for injection edges {missing}")
            return None
        return {e: float(raw[e]) for e in edges}
    return {e: float(raw) for e in edges}


def validate_config(raw):
    """Validate a raw JSON dict; raise ConfigError with all violations."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    errs = []
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        errs.append(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    cfg = _merge(DEFAULTS, {k: v for k, v in raw.items() if k != "experiment"})

    seed = cfg["seed"]
    if not isinstance(seed, int) or seed < 0:
        errs.append(f"seed must be a nonnegative integer, got {seed!r}")

    for name in ("fracture", "matrix"):
        _check_rock(name, cfg["rocks"].get(name, {}), errs)

    g = cfg["grid"]
    for key in ("lx", "ly"):
        if not (isinstance(g[key], (int, float)) and g[key] > 0):
            errs.append(f"grid.{key} must be positive, got {g[key]}")
    for key in ("nx", "ny"):
        if not (isinstance(g[key], int) and g[key] >= 1):
            errs.append(f"grid.{key} must be a positive integer, got {g[key]}")
    edges = g.get("injection_edges", [])
    if not edges or any(e not in ("left", "right", "bottom", "top") for e in edges):
        errs.append(f"grid.injection_edges must be a nonempty subset of "
                    f"left/right/bottom/top, got {edges}")

    t = cfg["time"]
    if not (isinstance(t["dt"], (int, float)) and t["dt"] > 0):
        errs.append(f"time.dt must be positive, got {t['dt']}")
    if not (isinstance(t["nsteps"], int) and t["nsteps"] >= 0):
        errs.append(f"time.nsteps must be a nonnegative integer, got {t['nsteps']}")

    m = cfg["model"]
    if m["level"] not in ("delta", "limit"):
        errs.append(f"model.level must be 'delta' or 'limit', got {m['level']!r}")
    if not (isinstance(m["d"], int) and m["d"] >= 2):
        errs.append(f"model.d must be an integer >= 2, got {m['d']}")
    if m["level"] == "delta" and not (0.0 < m["delta"] < 1.0):
        errs.append(f"model.delta must lie in (0, 1), got {m['delta']}")

    system = None
    if not errs:
        rock_f = _build_rock("fracture", cfg["rocks"]["fracture"])
        rock_m = _build_rock("matrix", cfg["rocks"]["matrix"])
        system = law.TwoRockSystem(fracture=rock_f, matrix=rock_m)
        th_star = law.theta_star(rock_f)

        b = cfg["boundary"]
        p_gamma = _edge_values(b.get("p_gamma", 0.0), edges, errs, "boundary.p_gamma")
        if "theta_gamma" in b:
            th_gamma = _edge_values(b["theta_gamma"], edges, errs, "boundary.theta_gamma")
        else:
            s_gamma = _edge_values(b.get("s_gamma", 1.0), edges, errs, "boundary.s_gamma")
            th_gamma = None
            if s_gamma is not None:
                bad = {e: v for e, v in s_gamma.items() if not 0.0 <= v <= 1.0}
                if bad:
                    errs.append(f"boundary.s_gamma values must lie in [0, 1], got {bad}")
                else:
                    th_gamma = {e: float(law.beta(rock_f, v)) for e, v in s_gamma.items()}
        if th_gamma is not None:
            bad = {e: v for e, v in th_gamma.items()
                   if not 0.0 <= v <= th_star * (1 + 1e-12)}
            if bad:
                errs.append(
                    f"boundary theta values must lie in [0, theta_star="
                    f"{th_star:.6g}] (admissible boundary-data range), got {bad}")
        cfg["boundary"] = {"p_gamma": p_gamma, "theta_gamma": th_gamma}

        ini = cfg["initial"]
        s_f0 = ini.get("s_f0")
        if not (isinstance(s_f0, (int, float)) and 0.0 <= s_f0 <= 1.0):
            errs.append(f"initial.s_f0 must lie in [0, 1], got {s_f0}")
        if "s_m0" in ini and ini["s_m0"] is not None:
            expect = float(law.matching_P(system, float(s_f0)))
            if abs(ini["s_m0"] - expect) > 1e-10 * max(1.0, expect):
                errs.append(
                    f"initial.s_m0={ini['s_m0']} is not capillary-consistent with "
                    f"s_f0={s_f0} (equal-capillary-pressure matching gives {expect:.12g})")

        for d_ in cfg["cell"]["deltas"] + cfg["block"]["deltas"] + cfg["sweep"]["deltas"]:
            if not 0.0 < d_ < 1.0:
                errs.append(f"fissure thickness delta must lie in (0, 1), got {d_}")
        if any(x <= 0 for x in cfg["kernel"]["dts"]):
            errs.append(f"kernel.dts must be positive, got {cfg['kernel']['dts']}")
        if any(x <= 0 for x in cfg["block"]["lambdas"]):
            errs.append(f"block.lambdas must be positive, got {cfg['block']['lambdas']}")

    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(experiment=exp, raw=raw, seed=seed,
                            system=system, sections=cfg)


def load_config(path):
    with open(path) as f:
        raw = json.load(f)
    return validate_config(raw)
