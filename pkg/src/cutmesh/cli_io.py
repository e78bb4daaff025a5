"""Command-line front end: config parsing, CSV results, and mesh export.

Subcommands
-----------
reconstruct   mesh the zero set of a level-set function and export the
              interface elements as linear cells
decompose     decompose all cut elements and export volume sub-elements
              together with the interface
convergence   run an interface + volume convergence study and write the
              error records as CSV (volume records go to a sibling file
              with a ``.volume`` suffix)
export-mesh   export the plain background mesh

Exit codes: 0 success, 2 configuration error, 3 refinement exhausted,
4 I/O error.  ``CUTMESH_THREADS`` caps element-loop parallelism in the
decomposition driver.

Exports are legacy-ASCII unstructured-grid files.  Higher-order cells are
subdivided into linear cells at a configurable lattice density, so any
standard viewer can read them; curvature shows up in the subdivided
geometry rather than in high-order cell types.
"""

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .convergence_harness import StudyConfig, run_combined_study
from .decomposition import DecompositionResult, ElementDecomposition, SubElement, decompose_mesh, map_to_physical
from .errors import ConfigError, CutmeshError, InvalidArgumentError, RefinementExhaustedError
from .levelset import named_field, sample_to_mesh
from .mesh import build_structured_mesh
from .quadrature import DEFAULT_ORDER
from .reconstruction import ReconstructionConfig, SearchVariant
from .reference_elements import MAX_ORDER, ElementFamily, reference_element

SUBCOMMANDS = ("reconstruct", "decompose", "convergence", "export-mesh")

_LEVELSET_DIMENSION = {"circle": 2, "flower": 2, "sphere": 3, "bumpy": 3}

_NORM_ORDER = ("eps_1", "eps_phi", "eps_f", "eps_f1h", "eps_f2h", "eps_f3h", "eps_fh")


@dataclass(frozen=True)
class RunConfig:
    """Fully validated description of one CLI invocation."""

    subcommand: str
    dimension: int = 2
    order: int = 1
    n: int = 10
    resolutions: tuple = ()
    levelset: str = ""
    variant: str = ""
    quadrature_order: int = DEFAULT_ORDER
    depth_limit: int = 5
    sample_density: int = 0
    box: tuple = ()
    out: str = ""
    export_density: int = 4
    seed: int = 0


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"subcommand"}

_INT_KEYS = ("dimension", "order", "n", "quadrature_order", "depth_limit",
             "sample_density", "export_density", "seed")


def _as_int(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return int(value)


def parse_config(subcommand, config_path=None, **overrides):
    """Build a RunConfig from an optional config file plus flag overrides.

    The file is a JSON object over the RunConfig key set; flags override
    file entries.  All validation errors carry the offending key.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"subcommand: unknown subcommand {subcommand!r}")
    raw = {}
    if config_path:
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {config_path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except ValueError as exc:
            raise ConfigError(f"config: {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config: {config_path} must hold a JSON object")
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value

    for key in raw:
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key}")

    cfg = {"subcommand": subcommand}
    for key in _INT_KEYS:
        if key in raw:
            cfg[key] = _as_int(key, raw[key])
    for key in ("levelset", "variant", "out"):
        if key in raw:
            if not isinstance(raw[key], str):
                raise ConfigError(f"{key}: expected a string, got {raw[key]!r}")
            cfg[key] = raw[key]

    if "resolutions" in raw:
        try:
            res = tuple(_as_int("resolutions", v) for v in raw["resolutions"])
        except TypeError:
            raise ConfigError(f"resolutions: expected a list of integers")
        if any(v < 1 for v in res) or any(a >= b for a, b in zip(res, res[1:])):
            raise ConfigError("resolutions: must be strictly increasing positive integers")
        cfg["resolutions"] = res
    if "box" in raw:
        try:
            box = tuple((float(lo), float(hi)) for lo, hi in raw["box"])
        except (TypeError, ValueError):
            raise ConfigError("box: expected [[lo, hi], ...] per dimension")
        if any(hi <= lo for lo, hi in box):
            raise ConfigError("box: each interval needs lo < hi")
        cfg["box"] = box

    levelset = cfg.get("levelset", "")
    if "dimension" not in cfg and levelset in _LEVELSET_DIMENSION:
        cfg["dimension"] = _LEVELSET_DIMENSION[levelset]
    run = RunConfig(**cfg)

    if run.dimension not in (2, 3):
        raise ConfigError(f"dimension: must be 2 or 3, got {run.dimension}")
    if not 1 <= run.order <= MAX_ORDER:
        raise ConfigError(f"order: must be in 1..{MAX_ORDER}, got {run.order}")
    if run.n < 1:
        raise ConfigError(f"n: must be positive, got {run.n}")
    if run.quadrature_order < 1:
        raise ConfigError(f"quadrature_order: must be positive, got {run.quadrature_order}")
    if run.depth_limit < 0:
        raise ConfigError(f"depth_limit: must be non-negative, got {run.depth_limit}")
    if run.sample_density < 0:
        raise ConfigError(f"sample_density: must be non-negative, got {run.sample_density}")
    if run.export_density < 1:
        raise ConfigError(f"export_density: must be >= 1, got {run.export_density}")
    if run.box and len(run.box) != run.dimension:
        raise ConfigError(
            f"box: got {len(run.box)} intervals for dimension {run.dimension}")
    if run.levelset:
        try:
            named_field(run.levelset, run.dimension)
        except InvalidArgumentError as exc:
            raise ConfigError(f"levelset: {exc}") from exc
    if run.variant:
        try:
            SearchVariant.parse(run.variant)
        except InvalidArgumentError as exc:
            raise ConfigError(f"variant: {exc}") from exc
        has_prefix = run.variant[0] in "ABC"
        if run.dimension == 2 and has_prefix:
            raise ConfigError(
                f"variant: inner-node prefix {run.variant[0]!r} is a 3D code, config is 2D")
    return run


# -- CSV -------------------------------------------------------------------------


def write_convergence_csv(records, path):
    """Write error records as CSV, one row per resolution, sorted by n.

    Columns follow the record's norm set (surface or volume) in a fixed
    canonical order; floats carry 17 significant digits so reruns are
    byte-identical.
    """
    records = sorted(records, key=lambda r: r.n)
    if not records:
        raise InvalidArgumentError("no records to write")
    norms = [k for k in _NORM_ORDER if k in records[0].errors]
    lines = ["h,n_elements," + ",".join(norms) + ",refined,flagged"]
    for rec in records:
        vals = [f"{rec.h:.17g}", str(rec.n_elements)]
        vals += [f"{rec.errors[k]:.17g}" for k in norms]
        vals += [str(rec.refined), "1" if rec.refined > 0 else "0"]
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")
    return path


# -- linear subdivision of reference cells ---------------------------------------


def _tri_lattice(density):
    idx = {}
    pts = []
    for j in range(density + 1):
        for i in range(density + 1 - j):
            idx[(i, j)] = len(pts)
            pts.append((i / density, j / density))
    cells = []
    for j in range(density):
        for i in range(density - j):
            cells.append((idx[(i, j)], idx[(i + 1, j)], idx[(i, j + 1)]))
            if i + j <= density - 2:
                cells.append((idx[(i + 1, j)], idx[(i + 1, j + 1)], idx[(i, j + 1)]))
    return np.array(pts), cells


def _tet_lattice(density):
    idx = {}
    pts = []
    for k in range(density + 1):
        for j in range(density + 1 - k):
            for i in range(density + 1 - k - j):
                idx[(i, j, k)] = len(pts)
                pts.append((i / density, j / density, k / density))
    cells = []
    for k in range(density):
        for j in range(density - k):
            for i in range(density - k - j):
                a, b, c, d = (i, j, k), (i + 1, j, k), (i, j + 1, k), (i, j, k + 1)
                cells.append(tuple(idx[v] for v in (a, b, c, d)))
                if i + j + k <= density - 2:
                    # octahedral core of the lattice cell, split about the
                    # (i+1,j,k)-(i,j+1,k+1) diagonal
                    A, F = (i + 1, j, k), (i, j + 1, k + 1)
                    ring = ((i, j + 1, k), (i, j, k + 1), (i + 1, j, k + 1), (i + 1, j + 1, k))
                    for m in range(4):
                        tet = (A, F, ring[m], ring[(m + 1) % 4])
                        cells.append(tuple(idx[v] for v in tet))
                if i + j + k <= density - 3:
                    tet = ((i + 1, j + 1, k), (i, j + 1, k + 1), (i + 1, j, k + 1),
                           (i + 1, j + 1, k + 1))
                    cells.append(tuple(idx[v] for v in tet))
    return np.array(pts), cells


@lru_cache(maxsize=None)
def _subdivision(family, density):
    """Reference lattice points and linear cells tiling the family.

    Returns (points, cells, vtk_type); cells index into points.
    """
    d = density
    if family is ElementFamily.LINE:
        pts = np.linspace(-1.0, 1.0, d + 1)[:, None]
        return pts, [(i, i + 1) for i in range(d)], 3
    if family is ElementFamily.TRIANGLE:
        pts, cells = _tri_lattice(d)
        return pts, cells, 5
    if family is ElementFamily.QUAD:
        u = np.linspace(-1.0, 1.0, d + 1)
        U, V = np.meshgrid(u, u, indexing="ij")
        pts = np.column_stack([U.ravel(), V.ravel()])
        at = lambda i, j: i * (d + 1) + j
        cells = []
        for i in range(d):
            for j in range(d):
                cells.append((at(i, j), at(i + 1, j), at(i + 1, j + 1)))
                cells.append((at(i, j), at(i + 1, j + 1), at(i, j + 1)))
        return pts, cells, 5
    if family is ElementFamily.TETRA:
        pts, cells = _tet_lattice(d)
        return pts, cells, 10
    if family is ElementFamily.PRISM:
        tp, tc = _tri_lattice(d)
        w = np.linspace(-1.0, 1.0, d + 1)
        pts = np.vstack([np.column_stack([tp, np.full(len(tp), wl)]) for wl in w])
        layer = len(tp)
        cells = []
        for l in range(d):
            for (a0, a1, a2) in tc:
                b = (a0 + (l + 1) * layer, a1 + (l + 1) * layer, a2 + (l + 1) * layer)
                a = (a0 + l * layer, a1 + l * layer, a2 + l * layer)
                cells.append((a[0], a[1], a[2], b[0]))
                cells.append((a[1], a[2], b[0], b[1]))
                cells.append((a[2], b[0], b[1], b[2]))
        return pts, cells, 10
    raise InvalidArgumentError(f"no subdivision for family {family}")


@dataclass
class ExportMesh:
    """Linear visualization cells: vertices plus per-cell scalar tags."""

    vertices: np.ndarray
    cells: list
    cell_types: list
    sign: list
    function_id: list
    parent: list

    @property
    def n_cells(self):
        return len(self.cells)


def _append_piece(exp, family, order, nodes, mesh, element_id, density, sign, fid):
    pts, cells, vtk_type = _subdivision(family, density)
    shapes = reference_element(family, order).shape_functions(pts)
    ref = shapes @ nodes
    phys = map_to_physical(mesh, element_id, ref)
    base = len(exp.vertices)
    exp.vertices = np.vstack([exp.vertices, phys]) if base else phys
    for cell in cells:
        exp.cells.append(tuple(base + v for v in cell))
        exp.cell_types.append(vtk_type)
        exp.sign.append(sign)
        exp.function_id.append(fid)
        exp.parent.append(element_id)


def collect_export(result, density, volume=True, interface=True):
    """Gather linear cells from a decomposition result."""
    mesh = result.mesh
    exp = ExportMesh(np.zeros((0, mesh.dim)), [], [], [], [], [])
    for entry in result.elements:
        if volume:
            for sub in entry.volume:
                _append_piece(exp, sub.family, sub.order, sub.nodes, mesh,
                              entry.element, density, sub.sign, -1)
        if interface:
            for ifc in entry.interfaces:
                _append_piece(exp, ifc.family, ifc.order, ifc.nodes, mesh,
                              entry.element, density, 0, ifc.generation)
    return exp


def write_vtk(exp, path, title="cutmesh export"):
    """Legacy-ASCII unstructured grid with per-cell scalar data."""
    verts = exp.vertices
    if verts.shape[1] == 2:
        verts = np.column_stack([verts, np.zeros(len(verts))])
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(verts)} double",
    ]
    out += [" ".join(f"{x:.17g}" for x in v) for v in verts]
    sizes = sum(len(c) + 1 for c in exp.cells)
    out.append(f"CELLS {exp.n_cells} {sizes}")
    out += [f"{len(c)} " + " ".join(map(str, c)) for c in exp.cells]
    out.append(f"CELL_TYPES {exp.n_cells}")
    out += [str(t) for t in exp.cell_types]
    out.append(f"CELL_DATA {exp.n_cells}")
    for name, data in (("sign", exp.sign), ("function_id", exp.function_id),
                       ("parent_element", exp.parent)):
        out.append(f"SCALARS {name} int 1")
        out.append("LOOKUP_TABLE default")
        out += [str(v) for v in data]
    Path(path).write_text("\n".join(out) + "\n")
    return path


def export_visualization(result, mesh, path, density, volume=True, interface=True):
    """Subdivide a decomposition into linear cells and write them."""
    if density < 1:
        raise InvalidArgumentError(f"density must be >= 1, got {density}")
    if mesh is not result.mesh:
        raise InvalidArgumentError("result does not belong to the given mesh")
    exp = collect_export(result, density, volume=volume, interface=interface)
    return write_vtk(exp, path)


# -- subcommand drivers ----------------------------------------------------------


def _study_config(run):
    return StudyConfig(
        dimension=run.dimension,
        order=run.order,
        resolutions=run.resolutions,
        level_set=run.levelset or None,
        variant=run.variant,
        quadrature_order=run.quadrature_order,
        box=run.box or None,
        depth_limit=run.depth_limit,
        sample_density=run.sample_density,
    )


def _volume_csv_path(path):
    p = Path(path)
    return str(p.with_name(p.stem + ".volume" + (p.suffix or ".csv")))


def _reconstruction_config(run):
    code = run.variant or ("13" if run.dimension == 2 else "A13")
    return ReconstructionConfig(
        variant=SearchVariant.parse(code),
        sample_density=run.sample_density,
        depth_limit=run.depth_limit,
    )


def _decompose_run(run):
    field = named_field(run.levelset or ("circle" if run.dimension == 2 else "sphere"),
                        run.dimension)
    mesh = build_structured_mesh(run.dimension, run.n, run.order, box=run.box or None)
    values = sample_to_mesh(field, mesh)
    return decompose_mesh(mesh, values, _reconstruction_config(run))


def run_command(run):
    """Execute one validated RunConfig; returns the primary output path."""
    if run.subcommand == "convergence":
        out = run.out or "convergence.csv"
        cfg = _study_config(run)
        if run.resolutions == () and run.n != RunConfig.n:
            cfg = dataclasses.replace(cfg, resolutions=(run.n,))
        ifc_records, vol_records = run_combined_study(cfg)
        write_convergence_csv(ifc_records, out)
        write_convergence_csv(vol_records, _volume_csv_path(out))
        return out
    if run.subcommand == "export-mesh":
        out = run.out or "mesh.vtk"
        mesh = build_structured_mesh(run.dimension, run.n, run.order, box=run.box or None)
        elem = reference_element(mesh.family, mesh.order)
        entries = [
            ElementDecomposition(e, [SubElement(mesh.family, mesh.order,
                                                elem.nodes.copy(), 0, ())], [])
            for e in range(mesh.n_elements)
        ]
        result = DecompositionResult(mesh, entries)
        export_visualization(result, mesh, out, run.export_density, interface=False)
        return out
    out = run.out or f"{run.subcommand}.vtk"
    result = _decompose_run(run)
    export_visualization(result, result.mesh, out, run.export_density,
                         volume=(run.subcommand == "decompose"), interface=True)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cutmesh",
        description="higher-order quadrature on implicitly defined geometries",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--order", type=int, default=None)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--variant", default=None)
        p.add_argument("--levelset", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--export-density", dest="export_density", type=int, default=None)
        p.add_argument("--depth-limit", dest="depth_limit", type=int, default=None)
        p.add_argument("--quad-order", dest="quadrature_order", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        run = parse_config(
            args.subcommand,
            config_path=args.config,
            order=args.order,
            n=args.n,
            variant=args.variant,
            levelset=args.levelset,
            out=args.out,
            export_density=args.export_density,
            depth_limit=args.depth_limit,
            quadrature_order=args.quadrature_order,
        )
    except ConfigError as exc:
        print(f"cutmesh: {exc}", file=sys.stderr)
        return 2
    try:
        out = run_command(run)
    except RefinementExhaustedError as exc:
        print(f"cutmesh: refinement exhausted: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"cutmesh: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cutmesh: I/O error: {exc}", file=sys.stderr)
        return 4
    except CutmeshError as exc:
        print(f"cutmesh: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
