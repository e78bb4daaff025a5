"""Convergence studies for interface and volume quadrature.

Builds structured simplicial meshes over a box, samples a level-set
function, decomposes every cut element, and measures integration errors
against reference values in several norms:

  interface   eps_1    relative length/area error,
              eps_phi  signed integral of the analytic level-set function
                       over the reconstruction (zero in the ideal case),
              eps_f    relative error of an integrand evaluated exactly,
              eps_f*h  the same integrand interpolated by interface- or
                       background-element shape functions;
  volume      eps_1, eps_f, eps_fh over the negative region.

Records where any element needed recursive refinement are flagged and
excluded from rate fits.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import cos, pi, sin

import numpy as np

from .decomposition import decompose_mesh, map_to_physical
from .errors import ConfigError, InsufficientDataError, InvalidArgumentError
from .levelset import (
    AnalyticField,
    DEFAULT_RADIUS,
    bumpy_sphere,
    default_integrand,
    named_field,
    sample_to_mesh,
)
from .mesh import build_structured_mesh
from .quadrature import DEFAULT_ORDER, build_rule, map_rule
from .reconstruction import ReconstructionConfig, SearchVariant
from .reference_elements import ElementFamily, reference_element

RESOLUTIONS_2D = (6, 10, 20, 30, 50, 70, 100, 150, 200, 300)
RESOLUTIONS_3D = (6, 10, 14, 20, 30, 50, 70, 100)

# Relative errors below this are quadrature/rounding noise; rate fits
# ignore them.
ERROR_FLOOR = 1e-12

_CHUNK = 20000  # uncut-element batch size, bounds peak memory


@dataclass(frozen=True)
class StudyConfig:
    dimension: int = 2
    order: int = 1
    resolutions: tuple = ()
    level_set: object = None  # name or AnalyticField; None: circle/sphere
    variant: str = ""  # empty: 13 in 2D, A13 in 3D
    quadrature_order: int = DEFAULT_ORDER
    box: tuple = None
    depth_limit: int = 5
    sample_density: int = 0
    integrand: object = None  # callable on (m, dim) points
    references: dict = None  # overrides: interface_one/interface_f/volume_one/volume_f

    def with_resolutions(self):
        if self.resolutions:
            return tuple(self.resolutions)
        return RESOLUTIONS_2D if self.dimension == 2 else RESOLUTIONS_3D


@dataclass
class ErrorRecord:
    h: float
    n: int
    n_elements: int
    errors: dict
    refined: int = 0
    flagged: bool = False
    wall_time: float = 0.0


@dataclass(frozen=True)
class RateEstimate:
    norm: str
    slope: float
    window: tuple


def _resolve_field(config):
    ls = config.level_set
    if ls is None:
        ls = "circle" if config.dimension == 2 else "sphere"
    if isinstance(ls, str):
        return named_field(ls, config.dimension), ls
    if isinstance(ls, AnalyticField):
        return ls, None
    raise ConfigError(f"level_set must be a name or AnalyticField, got {type(ls)}")


def _resolve_cfg(config):
    code = config.variant or ("13" if config.dimension == 2 else "A13")
    return ReconstructionConfig(
        variant=SearchVariant.parse(code),
        sample_density=config.sample_density,
        depth_limit=config.depth_limit,
    )


# -- reference values --------------------------------------------------------------


def _circle_references(radius):
    r = radius
    return {
        "interface_one": 2 * pi * r,
        "interface_f": pi * r ** 3,  # only x^2 survives the symmetry
        "volume_one": pi * r ** 2,
        "volume_f": pi * r ** 4 / 4,
    }


def _sphere_references(radius):
    r = radius
    return {
        "interface_one": 4 * pi * r ** 2,
        "interface_f": (8.0 / 3.0) * pi * r ** 4 + 2 * pi * r * sin(r),
        "volume_one": (4.0 / 3.0) * pi * r ** 3,
        "volume_f": (8.0 / 15.0) * pi * r ** 5 + 2 * pi * (sin(r) - r * cos(r)),
    }


@lru_cache(maxsize=None)
def _flower_references(base=0.5, amplitude=0.1, lobes=8, panels=1 << 20):
    """Dense parametric quadrature of the radial star shape.

    The boundary is r = R(theta); periodic trapezoid sums converge
    spectrally for these smooth integrands.  Radial inner integrals of
    the polynomial integrand are carried out in closed form.
    """
    theta = np.linspace(0.0, 2 * pi, panels, endpoint=False)
    dt = 2 * pi / panels
    ct, st = np.cos(theta), np.sin(theta)
    R = base + amplitude * np.sin(lobes * theta)
    Rp = amplitude * lobes * np.cos(lobes * theta)
    arc = np.sqrt(R * R + Rp * Rp)
    x, y = R * ct, R * st
    f_bnd = 0.5 * x + 0.25 * y + x ** 2 + 2.0 * y ** 3
    radial = (
        ct * R ** 3 / 6.0
        + st * R ** 3 / 12.0
        + ct ** 2 * R ** 4 / 4.0
        + 2.0 * st ** 3 * R ** 5 / 5.0
    )
    return {
        "interface_one": float(arc.sum() * dt),
        "interface_f": float((f_bnd * arc).sum() * dt),
        "volume_one": float((R ** 2 / 2.0).sum() * dt),
        "volume_f": float(radial.sum() * dt),
    }


def _bumpy_radii(field, directions, lo=0.05, hi=1.8):
    """Radial distance of the zero set per unit direction.

    The surface is star shaped for the default parameters; a dense scan
    guards the assumption before the bracketed solve.
    """
    m = directions.shape[0]
    grid = np.linspace(lo, hi, 256)
    vals = field((directions[:, None, :] * grid[None, :, None]).reshape(-1, 3))
    vals = vals.reshape(m, grid.size)
    signs = np.sign(vals)
    changes = (signs[:, :-1] * signs[:, 1:] < 0).sum(axis=1)
    if np.any(changes != 1):
        raise InsufficientDataError(
            "level set is not star shaped along sampled directions"
        )
    idx = np.argmax(signs[:, :-1] * signs[:, 1:] < 0, axis=1)
    a, b = grid[idx], grid[idx + 1]
    fa = vals[np.arange(m), idx]
    for _ in range(80):
        mid = 0.5 * (a + b)
        fm = field(directions * mid[:, None])
        neg = fa * fm <= 0.0
        b = np.where(neg, mid, b)
        a = np.where(neg, a, mid)
        fa = np.where(neg, fa, fm)
    return 0.5 * (a + b)


def _bumpy_quadrature(field, n_polar, n_azimuth):
    u, wu = np.polynomial.legendre.leggauss(n_polar)
    phi = np.linspace(0.0, 2 * pi, n_azimuth, endpoint=False)
    dphi = 2 * pi / n_azimuth
    su = np.sqrt(1.0 - u ** 2)
    dirs = np.stack(
        [
            np.outer(su, np.cos(phi)),
            np.outer(su, np.sin(phi)),
            np.broadcast_to(u[:, None], (n_polar, n_azimuth)).copy(),
        ],
        axis=-1,
    ).reshape(-1, 3)
    weights = np.repeat(wu * dphi, n_azimuth)
    rho = _bumpy_radii(field, dirs)
    pts = dirs * rho[:, None]
    grads = field.gradient(pts)
    nhat = grads / np.linalg.norm(grads, axis=1, keepdims=True)
    proj = np.einsum("md,md->m", dirs, nhat)
    area = weights @ (rho ** 2 / proj)
    volume = weights @ (rho ** 3 / 3.0)
    f_surface = weights @ (
        (pts[:, 0] ** 2 + pts[:, 1] ** 2 + 0.5 * np.cos(pts[:, 2]))
        * rho ** 2
        / proj
    )
    # closed-form radial integral of x^2+y^2+cos(z)/2 along each ray
    a = dirs[:, 2] * rho
    s2 = dirs[:, 0] ** 2 + dirs[:, 1] ** 2
    poly = s2 * rho ** 5 / 5.0
    az = dirs[:, 2]
    small = np.abs(az) < 1e-8
    azs = np.where(small, 1.0, az)
    trig = (
        2.0 * rho * np.cos(a) / azs ** 2
        + (rho ** 2 / azs - 2.0 / azs ** 3) * np.sin(a)
    )
    trig = np.where(small, rho ** 3 / 3.0, trig)
    f_volume = weights @ (poly + 0.5 * trig)
    return area, volume, f_surface, f_volume


@lru_cache(maxsize=None)
def _bumpy_references(radius=DEFAULT_RADIUS, amplitude=0.1):
    field = bumpy_sphere(radius, amplitude)
    coarse = _bumpy_quadrature(field, 192, 384)
    fine = _bumpy_quadrature(field, 384, 768)
    drift = max(abs(c - f) / max(abs(f), 1.0) for c, f in zip(coarse, fine))
    if drift > 1e-9:
        raise InsufficientDataError(
            f"reference quadrature did not settle (drift {drift:.2e})"
        )
    area, volume, f_surface, f_volume = fine
    return {
        "interface_one": float(area),
        "interface_f": float(f_surface),
        "volume_one": float(volume),
        "volume_f": float(f_volume),
    }


def reference_values(config):
    """Reference integrals for the configured level set.

    Named fields use the oracle registry; custom fields must carry a
    ``references`` dict on the config.
    """
    refs = dict(config.references or {})
    keys = ("interface_one", "interface_f", "volume_one", "volume_f")
    if all(k in refs for k in keys):
        return refs
    _, name = _resolve_field(config)
    registry = {
        "circle": lambda: _circle_references(DEFAULT_RADIUS),
        "sphere": lambda: _sphere_references(DEFAULT_RADIUS),
        "flower": _flower_references,
        "bumpy": _bumpy_references,
    }
    if name not in registry:
        missing = [k for k in keys if k not in refs]
        raise ConfigError(
            f"custom level set needs reference values for {missing}"
        )
    out = registry[name]()
    out.update(refs)
    return out


# -- per-mesh error sums -----------------------------------------------------------


@lru_cache(maxsize=None)
def _rule_tables(family, order, quad_order):
    """Quadrature rule plus shape tables of the geometry family at its
    points, reused across all elements of a study."""
    elem = reference_element(family, order)
    rule = build_rule(family, quad_order)
    shapes = elem.shape_functions(rule.points)
    shapes.setflags(write=False)
    return rule, shapes


def _measure_mesh(config, fld, mesh, result, integrand):
    """One pass over a decomposition: surface and volume error sums."""
    dim = mesh.dim
    p = mesh.order
    q = config.quadrature_order
    bg_elem = reference_element(mesh.family, p)

    s_w = s_phi = s_f = s_f_ifc = s_f_bg = 0.0
    v_w = v_f = v_fh = 0.0

    whole_neg = []
    for ent in result.elements:
        subs = ent.volume
        is_whole = (
            not ent.interfaces
            and len(subs) == 1
            and subs[0].family is mesh.family
            and subs[0].lineage == ()
        )
        if is_whole:
            if subs[0].sign < 0:
                whole_neg.append(ent.element)
            continue

        coords = mesh.element_nodes(ent.element)
        f_bg_nodes = integrand(coords)

        for ifc in ent.interfaces:
            rule, shapes = _rule_tables(ifc.family, ifc.order, q)
            phys = map_to_physical(mesh, ent.element, ifc.nodes)
            mapped = map_rule(rule, ifc.family, ifc.order, phys, surface=True)
            w, x = mapped.weights, mapped.points
            s_w += w.sum()
            s_phi += w @ fld(x)
            s_f += w @ integrand(x)
            s_f_ifc += w @ (shapes @ integrand(phys))
            ref_pts = shapes @ ifc.nodes
            s_f_bg += w @ (bg_elem.shape_functions(ref_pts) @ f_bg_nodes)

        for sub in subs:
            if sub.sign >= 0:
                continue
            rule, shapes = _rule_tables(sub.family, sub.order, q)
            phys = map_to_physical(mesh, ent.element, sub.nodes)
            mapped = map_rule(rule, sub.family, sub.order, phys)
            w, x = mapped.weights, mapped.points
            v_w += w.sum()
            v_f += w @ integrand(x)
            ref_pts = shapes @ sub.nodes
            v_fh += w @ (bg_elem.shape_functions(ref_pts) @ f_bg_nodes)

    # uncut elements fully inside the negative region, batched
    rule, shapes = _rule_tables(mesh.family, p, q)
    bary = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
    ids = np.asarray(whole_neg, dtype=int)
    for k in range(0, ids.size, _CHUNK):
        chunk = ids[k : k + _CHUNK]
        corner_ids = mesh.elements[chunk][:, : dim + 1]
        corners = mesh.nodes[corner_ids]  # (E, d+1, d)
        edges = corners[:, 1:, :] - corners[:, :1, :]
        dets = np.linalg.det(edges)
        pts = np.einsum("mk,ekd->emd", bary, corners)
        fvals = integrand(pts.reshape(-1, dim)).reshape(len(chunk), -1)
        v_w += float(dets.sum() * rule.weights.sum())
        v_f += float(dets @ (fvals @ rule.weights))
        node_ids = mesh.elements[chunk]
        f_nodes = integrand(mesh.nodes[node_ids].reshape(-1, dim)).reshape(
            len(chunk), -1
        )
        v_fh += float(dets @ ((f_nodes @ shapes.T) @ rule.weights))

    return (s_w, s_phi, s_f, s_f_ifc, s_f_bg), (v_w, v_f, v_fh)


def run_combined_study(config):
    """Interface and volume error records from one decomposition pass
    per resolution."""
    fld, _ = _resolve_field(config)
    refs = reference_values(config)
    cfg = _resolve_cfg(config)
    integrand = config.integrand or default_integrand(config.dimension)
    dim = config.dimension
    p = config.order

    i1, if_ = refs["interface_one"], refs["interface_f"]
    v1, vf = refs["volume_one"], refs["volume_f"]

    ifc_records, vol_records = [], []
    for n in config.with_resolutions():
        t0 = time.time()
        mesh = build_structured_mesh(dim, n, p, config.box)
        values = sample_to_mesh(fld, mesh)
        result = decompose_mesh(mesh, values, cfg)
        (s_w, s_phi, s_f, s_f_ifc, s_f_bg), (v_w, v_f, v_fh) = _measure_mesh(
            config, fld, mesh, result, integrand
        )
        dt = time.time() - t0
        refined = result.refined_elements
        flagged = refined > 0
        if dim == 2:
            surf = {
                "eps_1": abs(s_w - i1) / abs(i1),
                "eps_phi": s_phi,
                "eps_f": abs(s_f - if_) / abs(if_),
                "eps_f1h": abs(s_f_ifc - if_) / abs(if_),
                "eps_f2h": abs(s_f_bg - if_) / abs(if_),
            }
        else:
            surf = {
                "eps_1": abs(s_w - i1) / abs(i1),
                "eps_phi": s_phi,
                "eps_f": abs(s_f - if_) / abs(if_),
                "eps_f2h": abs(s_f_ifc - if_) / abs(if_),
                "eps_f3h": abs(s_f_bg - if_) / abs(if_),
            }
        vol = {
            "eps_1": abs(v_w - v1) / abs(v1),
            "eps_f": abs(v_f - vf) / abs(vf),
            "eps_fh": abs(v_fh - vf) / abs(vf),
        }
        ifc_records.append(
            ErrorRecord(mesh.h, n, mesh.n_elements, surf, refined, flagged, dt)
        )
        vol_records.append(
            ErrorRecord(mesh.h, n, mesh.n_elements, vol, refined, flagged, dt)
        )
    return ifc_records, vol_records


def run_interface_study(config):
    return run_combined_study(config)[0]


def run_volume_study(config):
    return run_combined_study(config)[1]


# -- rate estimation ---------------------------------------------------------------


def estimate_rate(records, norm):
    """Least-squares slope of log error against log h over unflagged
    records above the error floor."""
    hs, errs, window = [], [], []
    for rec in records:
        if rec.flagged:
            continue
        err = abs(rec.errors[norm])
        if err <= ERROR_FLOOR:
            continue
        hs.append(rec.h)
        errs.append(err)
        window.append(rec.n)
    if len(hs) < 3:
        raise InsufficientDataError(
            f"need at least 3 usable records for {norm}, have {len(hs)}"
        )
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    return RateEstimate(norm, float(slope), tuple(window))


def sweep_variants(config, variants):
    """Run the interface study once per search-variant code.

    Per-variant failures are recorded, not raised, so one bad variant
    cannot sink a comparison table.
    """
    table = {}
    for code in variants:
        entry = {}
        try:
            records = run_interface_study(replace(config, variant=code))
            entry["records"] = records
            entry["rates"] = {}
            for norm in records[0].errors:
                try:
                    entry["rates"][norm] = estimate_rate(records, norm)
                except InsufficientDataError as exc:
                    entry["rates"][norm] = None
        except Exception as exc:  # noqa: BLE001 - per-variant isolation
            entry["error"] = f"{type(exc).__name__}: {exc}"
        table[code] = entry
    return table
