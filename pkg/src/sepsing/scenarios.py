"""Bundled scenario builders and the JSON scenario format.

A scenario bundles a validated admissible system with target functions and
solver knobs.  The JSON grammar mirrors the builders: circular-arc or
Chebyshev-coefficient arcs, expression-string maps, arc-to-J assignment,
alpha, corner fraction, optional explicit sectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioFormatError, UnknownScenario
from .expressions import parse_expr
from .geometry import (
    AdmissibleSystem,
    AnalyticArc,
    AnalyticMap,
    Sector,
    attach_rotations,
    build_boundary,
    build_partition,
    make_corner,
    validate_admissible,
)


@dataclass
class Scenario:
    name: str
    system: AdmissibleSystem
    corner_fraction: float
    functions: dict            # name -> ("boundary", expr str) or ("curve", expr str)
    checks: list = field(default_factory=lambda: ["decomposition"])
    knobs: dict = field(default_factory=dict)
    family: object = None      # optional epsilon -> AdmissibleSystem builder
    description: str = ""

    def partition(self):
        return build_partition(self.system, self.corner_fraction)


def _finish_system(system, corner_fraction, junctions=None):
    """Attach corner data with default sectors and scanned rotations."""
    n_j = len(system.boundary.corner_angles)
    corner_junctions = junctions
    if corner_junctions is None:
        corner_junctions = list(range(system.n)) if system.n > 1 else []
    system.corners = []
    for k in range(len(corner_junctions)):
        make_corner(system, k, corner_fraction)
    if system.corners:
        attach_rotations(system)
    return system


# ----------------------------------------------------------------------
# identity disk
# ----------------------------------------------------------------------

def build_disk_system(n_arcs=1):
    if n_arcs == 1:
        arcs = [AnalyticArc.circular(0.0, 1.0, 0.0, 2 * np.pi)]
    else:
        arcs = [AnalyticArc.circular(0.0, 1.0, 2 * np.pi * k / n_arcs,
                                     2 * np.pi * (k + 1) / n_arcs)
                for k in range(n_arcs)]
    boundary = build_boundary(arcs)
    system = AdmissibleSystem(boundary, [AnalyticMap.identity()],
                              [list(range(n_arcs))], alpha=1.0,
                              name="identity_disk")
    system.continuation_margins = [0.3]
    return system


# ----------------------------------------------------------------------
# two-arc lens
# ----------------------------------------------------------------------

LENS_CENTER = 0.5
LENS_RADIUS = 1.2


def lens_arcs(c=LENS_CENTER, r=LENS_RADIUS):
    ys = np.sqrt(r * r - c * c)
    th = np.arctan2(ys, c)
    right = AnalyticArc.circular(-c, r, -th, th)
    left = AnalyticArc.circular(c, r, np.pi - th, np.pi + th)
    return [right, left]


def build_lens_system(kind="mobius", corner_fraction=0.25, c=LENS_CENTER, r=LENS_RADIUS):
    boundary = build_boundary(lens_arcs(c, r))
    if kind == "mobius":
        maps = [AnalyticMap.from_expr(f"(z + {c})/{r}", validity="right lens disk"),
                AnalyticMap.from_expr(f"(z - {c})/{r}", validity="left lens disk")]
    elif kind == "squared":
        maps = [AnalyticMap.from_expr(f"((z + {c})/{r})**2", validity="right lens disk"),
                AnalyticMap.from_expr(f"((z - {c})/{r})**2", validity="left lens disk")]
    else:
        raise ScenarioFormatError(f"unknown lens kind {kind!r}")
    system = AdmissibleSystem(boundary, maps, [[0], [1]],
                              alpha=1.0 if kind == "mobius" else 0.9,
                              name=f"lens_{kind}")
    system.continuation_margins = [0.15, 0.15]
    return _finish_system(system, corner_fraction)


def build_lens_family(eps):
    """Moebius lens post-composed with the disk automorphism B_eps.

    Geometry, arcs, partitions and Omega_k are shared across eps; only the
    maps move, continuously in C^{1+alpha}.
    """
    system = build_lens_system("mobius")
    if eps == 0.0:
        return system
    c, r = LENS_CENTER, LENS_RADIUS
    maps = [AnalyticMap.from_expr(f"((z + {c})/{r} - {eps})/(1 - {eps}*(z + {c})/{r})",
                                  validity="right lens disk"),
            AnalyticMap.from_expr(f"((z - {c})/{r} - {eps})/(1 - {eps}*(z - {c})/{r})",
                                  validity="left lens disk")]
    system.maps = maps
    system.name = f"lens_mobius_eps={eps}"
    return system


# ----------------------------------------------------------------------
# three-disk trefoil with a common critical point at the origin
# ----------------------------------------------------------------------

TREFOIL_OFFSET = 0.15
TREFOIL_RHO = 0.5


def trefoil_corners(d=TREFOIL_OFFSET, R=1.0):
    corner_r = (np.sqrt(4 * R * R - 3 * d * d) - d) / 2
    return [corner_r * np.exp(1j * np.angle(d * np.exp(2j * np.pi * ((k + 2) % 3) / 3)))
            for k in range(3)]


def build_trefoil_system(d=TREFOIL_OFFSET, rho=TREFOIL_RHO, corner_fraction=0.25):
    """Three unit disks centered at d*e^{2 pi i k/3}; maps are degree-two
    Blaschke compositions with a common critical point exactly at z = 0."""
    R = 1.0
    centers = [d * np.exp(2j * np.pi * k / 3) for k in range(3)]
    Ks = trefoil_corners(d, R)   # K[k] between J_k and J_{k+1}
    arcs = []
    for k, c in enumerate(centers):
        k_prev = Ks[(k - 1) % 3]
        k_next = Ks[k]
        a0 = np.angle(k_prev - c)
        a1 = np.angle(k_next - c)
        # orient CCW around disk k, passing through the -c direction
        mid = np.angle(-c)
        while a0 > mid:
            a0 -= 2 * np.pi
        while a1 < mid:
            a1 += 2 * np.pi
        arcs.append(AnalyticArc.circular(c, R, a0, a1))
    boundary = build_boundary(arcs)
    maps = []
    for k, c in enumerate(centers):
        wc = -c / R
        s = rho * np.exp(1j * (np.angle(c) + np.pi / 2))
        # phi = B_{s^2}( T(m(z))^2 ), T the automorphism sending wc -> 0
        m = (parse_expr("z") - complex(c)) / R
        T_num = m - complex(wc)
        T_den = 1.0 - np.conj(complex(wc)) * m
        u2 = (T_num * T_num) / (T_den * T_den)
        s2 = complex(s * s)
        expr = (u2 - s2) / (1.0 - np.conj(s2) * u2)
        maps.append(AnalyticMap.from_expr(expr, validity=f"disk {k} plus collar"))
    system = AdmissibleSystem(boundary, maps, [[0], [1], [2]], alpha=1.0,
                              name="critical_point")
    system.continuation_margins = [0.08, 0.08, 0.08]
    return _finish_system(system, corner_fraction)


# ----------------------------------------------------------------------
# JSON interface
# ----------------------------------------------------------------------

def _arc_from_spec(spec):
    if "circle" in spec:
        c = spec["circle"]
        return AnalyticArc.circular(complex(c["center"][0], c["center"][1]),
                                    float(c["radius"]),
                                    float(c["theta0"]), float(c["theta1"]))
    if "chebyshev" in spec:
        coeffs = [complex(re, im) for re, im in spec["chebyshev"]]
        return AnalyticArc(np.asarray(coeffs, dtype=complex))
    raise ScenarioFormatError("arc spec needs 'circle' or 'chebyshev'")


def system_from_dict(doc):
    try:
        arcs = [_arc_from_spec(a) for a in doc["arcs"]]
        boundary = build_boundary(arcs)
        maps = [AnalyticMap.from_expr(expr) for expr in doc["maps"]]
        system = AdmissibleSystem(boundary, maps, doc["assignment"],
                                  alpha=float(doc.get("alpha", 1.0)),
                                  name=doc.get("name", "custom"))
        if "continuation_margins" in doc:
            system.continuation_margins = [float(x) for x in doc["continuation_margins"]]
        fraction = float(doc.get("corner_fraction", 0.25))
        system = _finish_system(system, fraction)
        if "sectors" in doc:
            from dataclasses import replace
            for k, sec in enumerate(doc["sectors"]):
                s1 = Sector(complex(*sec["s1"]["vertex"]), sec["s1"]["radius"],
                            sec["s1"]["a0"], sec["s1"]["a1"])
                s2 = Sector(complex(*sec["s2"]["vertex"]), sec["s2"]["radius"],
                            sec["s2"]["a0"], sec["s2"]["a1"])
                system.corners[k] = replace(system.corners[k], sectors=(s1, s2))
            attach_rotations(system)
        return system, fraction
    except KeyError as exc:
        raise ScenarioFormatError(f"missing scenario key: {exc}") from exc


_DEFAULT_KNOBS = {"nodes": 8, "grading": 12, "tau": 1e-8, "tolerance": 1e-6, "seed": 0}


def scenario_from_dict(doc):
    if "geometry" in doc and isinstance(doc["geometry"], str):
        base = bundled(doc["geometry"])
        system, fraction = base.system, base.corner_fraction
    else:
        system, fraction = system_from_dict(doc.get("geometry", doc))
    knobs = dict(_DEFAULT_KNOBS)
    knobs.update(doc.get("knobs", {}))
    functions = doc.get("functions", {"one": ["boundary", "z*0 + 1"]})
    functions = {k: tuple(v) for k, v in functions.items()}
    checks = doc.get("checks", ["decomposition"])
    return Scenario(doc.get("name", system.name), system, fraction, functions,
                    checks, knobs, description=doc.get("description", ""))


def load_scenario(path):
    with open(path) as fh:
        doc = json.load(fh)
    return scenario_from_dict(doc)


# ----------------------------------------------------------------------
# Bundled registry
# ----------------------------------------------------------------------

def _scn_identity_disk():
    return Scenario(
        "identity_disk", build_disk_system(), 0.25,
        {"square": ("boundary", "z**2"), "cube": ("boundary", "z**3")},
        checks=["decomposition"],
        knobs=dict(_DEFAULT_KNOBS, grading=0),
        description="unit disk, phi = z; the remainder vanishes identically")


def _scn_lens_mobius():
    return Scenario(
        "lens_mobius", build_lens_system("mobius"), 0.25,
        {"one": ("boundary", "z*0 + 1"), "linear": ("boundary", "z"),
         "exp": ("boundary", "exp(z)"), "pole": ("boundary", "1/(z - 3)"),
         "product": ("curve", "w1*w2"), "mixed": ("curve", "exp(w1) + w2**2")},
        checks=["decomposition", "extension"],
        knobs=dict(_DEFAULT_KNOBS),
        description="lens D(-0.5,1.2) cap D(0.5,1.2) with Moebius maps")


def _scn_lens_squared():
    return Scenario(
        "lens_squared", build_lens_system("squared"), 0.25,
        {"one": ("boundary", "z*0 + 1"), "exp": ("boundary", "exp(z)")},
        checks=["decomposition", "kernel_bound"],
        knobs=dict(_DEFAULT_KNOBS),
        description="lens with squared Moebius maps (alpha = 0.9 declared)")


def _scn_critical_point():
    return Scenario(
        "critical_point", build_trefoil_system(), 0.25,
        {"coordinate": ("curve", "w1"), "product": ("curve", "w1*w2")},
        checks=["decomposition", "extension"],
        knobs=dict(_DEFAULT_KNOBS, tolerance=1e-6),
        description="three-disk trefoil; all phi_k' vanish at z0 = 0")


def _scn_continuity_sweep():
    base = Scenario(
        "continuity_sweep", build_lens_system("mobius"), 0.25,
        {"exp": ("boundary", "exp(z)")},
        checks=["continuity"],
        knobs=dict(_DEFAULT_KNOBS, eps_max=0.05, eps_count=6),
        description="Moebius lens family B_eps o m_k, eps in [0, 0.05]")
    base.family = build_lens_family
    return base


_BUNDLED = {
    "identity_disk": _scn_identity_disk,
    "lens_mobius": _scn_lens_mobius,
    "lens_squared": _scn_lens_squared,
    "critical_point": _scn_critical_point,
    "continuity_sweep": _scn_continuity_sweep,
}


def list_scenarios():
    return sorted(_BUNDLED)


def bundled(name):
    try:
        return _BUNDLED[name]()
    except KeyError:
        raise UnknownScenario(f"no bundled scenario named {name!r}") from None


def describe(name):
    scn = bundled(name)
    report = validate_admissible(scn.system, 128)
    return {
        "name": scn.name,
        "description": scn.description,
        "n_maps": scn.system.n,
        "alpha": scn.system.alpha,
        "checks": scn.checks,
        "functions": {k: list(v) for k, v in scn.functions.items()},
        "knobs": scn.knobs,
        "admissible": report.all_passed,
    }
