"""Configuration parsing, experiment entry points and output writing.

Configs are plain ``key=value`` text with '#' comments; unknown keys are
rejected and every value is range checked.  A run writes the mesh, a matrix
summary, trajectory/control frames, rate CSVs, the optimization history and
a manifest that is itself a valid config (re-running from it reproduces the
outputs bit for bit given the same build).

Exit codes: 0 success, 2 config error, 3 numerical/solver error, 4 I/O error.
"""
from __future__ import annotations

import os
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .errors import ConfigError, FracExtError, GeometryError, MeshParseError, \
    MeshValidationError, ParameterError, SolverError
from .evolve import TimeGrid, make_factor, solve_forward, system_matrix
from .fracform import FracParams, assemble_forms
from .identify import ControlField, PbfgsOptions, SourceIdentification
from .mesh import Disk, GeometrySpec, Square, SquareAnnulus, TriMesh, generate_mesh, \
    load_mesh, refine_uniform, save_mesh
from .study import ExactSolution, manufactured_data, robin_dirichlet_rate, \
    spatial_rate, write_rate_csv

MODES = ("solve", "rate", "spatial-rate", "identify")


def _parse_n_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"n_list: could not parse {text!r} as comma-separated "
                          "floats") from None
    if len(vals) < 2 or not all(b > a for a, b in zip(vals, vals[1:])):
        raise ConfigError("n_list: need >= 2 increasing values")
    return vals


@dataclass
class RunConfig:
    mode: str
    outdir: str = "out"
    # geometry / mesh
    mesh_file: str = ""
    omega_shape: str = "disk"          # disk | square
    omega_radius: float = 0.5
    omega_half_width: float = 0.4
    omega_tilde_radius: float = 1.5
    control: str = "none"              # none | square_annulus
    control_inner_half: float = 0.6
    control_outer_half: float = 0.8
    target_h: float = 0.1
    # physics
    s: float = 0.6
    n: float = 1e4
    kappa: float = 1.0
    xi: float = 1e-8
    T: float = 1.0
    K: int = 100
    quad_order: int = 4
    # mode extras
    data: str = "manufactured"         # solve mode: manufactured | zero
    n_list: str = "1e2,1e3,1e4,1e5"
    refine_levels: int = 3
    noise_sigma: float = 0.005
    seed: int = 0
    bfgs_memory: int = 10
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    grad_tol: float = 0.0
    max_iters: int = 200
    frame_stride: int = 1


_RANGES = {
    "mode": f"one of {MODES}",
    "omega_shape": "one of ('disk', 'square')",
    "control": "one of ('none', 'square_annulus')",
    "data": "one of ('manufactured', 'zero')",
    "s": "(0, 1)",
    "n": "[1, inf)",
    "kappa": "(0, inf)",
    "xi": "[0, inf)",
    "T": "(0, inf)",
    "K": "integer >= 1",
    "quad_order": "one of (2, 4, 6)",
    "target_h": "(0, inf)",
    "omega_radius": "(0, omega_tilde_radius)",
    "omega_half_width": "(0, omega_tilde_radius/sqrt(2))",
    "omega_tilde_radius": "(0, inf)",
    "refine_levels": "integer >= 1",
    "noise_sigma": "[0, inf)",
    "frame_stride": "integer >= 1",
    "bfgs_memory": "integer >= 1",
    "armijo_c": "(0, 1)",
    "backtrack": "(0, 1)",
    "grad_tol": "[0, inf)",
    "max_iters": "integer >= 1",
}


def _check(cfg: RunConfig):
    def bad(key):
        raise ConfigError(f"{key}={getattr(cfg, key)!r} out of range; "
                          f"accepted: {_RANGES[key]}")
    if cfg.mode not in MODES:
        bad("mode")
    if cfg.omega_shape not in ("disk", "square"):
        bad("omega_shape")
    if cfg.control not in ("none", "square_annulus"):
        bad("control")
    if cfg.data not in ("manufactured", "zero"):
        bad("data")
    if not 0.0 < cfg.s < 1.0:
        bad("s")
    if cfg.n < 1.0:
        bad("n")
    if cfg.kappa <= 0:
        bad("kappa")
    if cfg.xi < 0:
        bad("xi")
    if cfg.T <= 0:
        bad("T")
    if cfg.K < 1:
        bad("K")
    if cfg.quad_order not in (2, 4, 6):
        bad("quad_order")
    if cfg.target_h <= 0:
        bad("target_h")
    if cfg.omega_tilde_radius <= 0:
        bad("omega_tilde_radius")
    if cfg.refine_levels < 1:
        bad("refine_levels")
    if cfg.noise_sigma < 0:
        bad("noise_sigma")
    if cfg.frame_stride < 1:
        bad("frame_stride")
    if cfg.bfgs_memory < 1:
        bad("bfgs_memory")
    if not 0 < cfg.armijo_c < 1:
        bad("armijo_c")
    if not 0 < cfg.backtrack < 1:
        bad("backtrack")
    if cfg.grad_tol < 0:
        bad("grad_tol")
    if cfg.max_iters < 1:
        bad("max_iters")
    if cfg.mode == "identify" and cfg.control == "none" and not cfg.mesh_file:
        raise ConfigError("identify mode requires control=square_annulus or a "
                          "mesh_file with control-masked elements")
    _parse_n_list(cfg.n_list)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CONVERT = {"str": str, "float": float, "int": int}


def _assign(values: dict, key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown key {key!r}")
    typ = _FIELD_TYPES[key]
    try:
        values[key] = _CONVERT[typ](raw)
    except (ValueError, KeyError):
        raise ConfigError(f"{key}: could not parse {raw!r} as {typ}") from None


def parse_config(path, overrides=()) -> RunConfig:
    """Read key=value config, apply --key=value overrides, validate ranges."""
    values = {}
    try:
        with open(path) as f:
            raw = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(raw, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {lineno}: expected key=value, got {text!r}")
        key, _, val = text.partition("=")
        _assign(values, key.strip(), val.strip())
    for ov in overrides:
        if not ov.startswith("--") or "=" not in ov:
            raise ConfigError(f"override {ov!r} must look like --key=value")
        key, _, val = ov[2:].partition("=")
        _assign(values, key.strip(), val.strip())
    if "mode" not in values:
        raise ConfigError("missing required key 'mode'; accepted: "
                          + _RANGES["mode"])
    cfg = RunConfig(**values)
    _check(cfg)
    return cfg


def write_field_csv(mesh: TriMesh, values, path, node_subset=None) -> None:
    """Deterministic "node,x,y,value" rows at full precision."""
    values = np.asarray(values, dtype=float)
    nodes = np.arange(mesh.num_vertices) if node_subset is None \
        else np.asarray(node_subset, dtype=np.int64)
    with open(path, "w") as f:
        f.write("node,x,y,value\n")
        for i in nodes:
            x, y = mesh.vertices[i]
            f.write(f"{i},{x:.17g},{y:.17g},{values[i]:.17g}\n")


def _geometry(cfg: RunConfig) -> GeometrySpec:
    omega = Disk(cfg.omega_radius) if cfg.omega_shape == "disk" \
        else Square(cfg.omega_half_width)
    ctrl = None
    if cfg.control == "square_annulus":
        ctrl = SquareAnnulus(cfg.control_inner_half, cfg.control_outer_half)
    return GeometrySpec(omega=omega, omega_tilde=Disk(cfg.omega_tilde_radius),
                        control_support=ctrl, target_h=cfg.target_h)


def _build_mesh(cfg: RunConfig) -> TriMesh:
    if cfg.mesh_file:
        return load_mesh(cfg.mesh_file)
    return generate_mesh(_geometry(cfg))


def _write_matrix_summary(forms, path):
    def stats(name, M):
        asym = float(np.abs(M - M.T).max())
        scale = float(np.abs(M).max())
        return (f"{name}: shape={M.shape[0]}x{M.shape[1]} "
                f"max_abs={scale:.6e} max_asym={asym:.3e}\n")
    with open(path, "w") as f:
        f.write(f"ndof={forms.ndof}\n")
        f.write(stats("A", forms.A))
        f.write(stats("M_omega", forms.M_omega))
        f.write(stats("M_kappa", forms.M_kappa))


def _write_manifest(cfg: RunConfig, path, status, wall, outputs, extra=()):
    with open(path, "w") as f:
        f.write("# fracext run manifest (valid config; re-run with: "
                "fracext <this file>)\n")
        f.write(f"# version={__version__}\n")
        f.write(f"# wallclock_s={wall:.3f}\n")
        f.write(f"# status={status}\n")
        for line in extra:
            f.write(f"# {line}\n")
        for name in sorted(_FIELD_TYPES):
            f.write(f"{name}={getattr(cfg, name)}\n")
        for out in outputs:
            f.write(f"# output={out}\n")


def _export_frames(traj, mesh, outdir, prefix, stride, nodes=None, start=0):
    paths = []
    for k in range(start, traj.frames.shape[0], stride):
        p = os.path.join(outdir, f"{prefix}_{k:05d}.csv")
        write_field_csv(mesh, traj.frames[k], p, node_subset=nodes)
        paths.append(p)
    return paths


def run(cfg: RunConfig) -> list:
    """Execute one mode; returns the list of written artifact paths."""
    t0 = time.perf_counter()
    os.makedirs(cfg.outdir, exist_ok=True)
    outputs = []
    status = "failed"
    extra = []
    try:
        mesh = _build_mesh(cfg)
        mesh_path = os.path.join(cfg.outdir, "mesh.txt")
        save_mesh(mesh, mesh_path)
        outputs.append(mesh_path)
        grid = TimeGrid(T=cfg.T, K=cfg.K)

        if cfg.mode == "rate":
            result = robin_dirichlet_rate(mesh, grid, cfg.s,
                                          _parse_n_list(cfg.n_list),
                                          quad_order=cfg.quad_order)
            path = os.path.join(cfg.outdir, "rate.csv")
            write_rate_csv(result, path)
            outputs.append(path)
            extra.append(f"fitted_slope={result.slope:.6f}")
        elif cfg.mode == "spatial-rate":
            meshes = [mesh]
            for _ in range(cfg.refine_levels):
                meshes.append(refine_uniform(meshes[-1]))
            result = spatial_rate(meshes, grid, cfg.s, cfg.n,
                                  quad_order=cfg.quad_order)
            path = os.path.join(cfg.outdir, "spatial_rate.csv")
            write_rate_csv(result, path)
            outputs.append(path)
            extra.append(f"fitted_slope={result.slope:.6f}")
        elif cfg.mode == "solve":
            params = FracParams(s=cfg.s, n_penalty=cfg.n, xi=cfg.xi,
                                kappa_value=cfg.kappa)
            forms = assemble_forms(mesh, params, quad_order=cfg.quad_order)
            summary = os.path.join(cfg.outdir, "matrices_summary.txt")
            _write_matrix_summary(forms, summary)
            outputs.append(summary)
            if cfg.data == "manufactured":
                z, f, u0 = manufactured_data(mesh, ExactSolution(cfg.s), grid)
            else:
                z = f = u0 = None
            traj = solve_forward(forms, params, grid, z_frames=z, f_frames=f,
                                 u0=u0, factor=make_factor(forms, params, grid, mesh))
            outputs += _export_frames(traj, mesh, cfg.outdir, "state",
                                      cfg.frame_stride)
        else:  # identify
            params = FracParams(s=cfg.s, n_penalty=cfg.n, xi=cfg.xi,
                                kappa_value=cfg.kappa)
            forms = assemble_forms(mesh, params, quad_order=cfg.quad_order)
            summary = os.path.join(cfg.outdir, "matrices_summary.txt")
            _write_matrix_summary(forms, summary)
            outputs.append(summary)
            prob = SourceIdentification(mesh, forms, params, grid)
            z_true = prob.new_control(1.0)
            u_d = prob.synthesize_data(z_true, cfg.noise_sigma, cfg.seed)
            opts = PbfgsOptions(memory=cfg.bfgs_memory, armijo_c=cfg.armijo_c,
                                backtrack=cfg.backtrack, grad_tol=cfg.grad_tol,
                                max_iters=cfg.max_iters, seed=cfg.seed)
            res = prob.pbfgs_minimize(prob.new_control(0.0), u_d, opts)
            hist_path = os.path.join(cfg.outdir, "history.csv")
            with open(hist_path, "w") as f:
                f.write("iter,objective,proj_grad_norm,step_length\n")
                for it, obj, pg, step in res.history:
                    f.write(f"{it},{obj:.17g},{pg:.17g},{step:.17g}\n")
            outputs.append(hist_path)
            extra.append(f"optimizer_status={res.status}")
            extra.append(f"iterations={res.iterations}")
            # control frames k = 1..K restricted to the support nodes
            for j in range(0, grid.K, cfg.frame_stride):
                p = os.path.join(cfg.outdir, f"control_{j + 1:05d}.csv")
                full = np.zeros(mesh.num_vertices)
                full[res.z.support_nodes] = res.z.frames[j]
                write_field_csv(mesh, full, p, node_subset=res.z.support_nodes)
                outputs.append(p)
        status = "ok"
    finally:
        wall = time.perf_counter() - t0
        manifest = os.path.join(cfg.outdir, "manifest.txt")
        try:
            _write_manifest(cfg, manifest, status, wall, outputs, extra)
            outputs.append(manifest)
        except OSError:
            pass
    return outputs


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_usage())
        return 0
    config_path, overrides = argv[0], argv[1:]
    try:
        cfg = parse_config(config_path, overrides)
        run(cfg)
    except (ConfigError, ParameterError, GeometryError, MeshParseError,
            MeshValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except FracExtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    return 0


def _usage() -> str:
    lines = [
        "usage: fracext CONFIG [--key=value ...]",
        "",
        "Modes (key 'mode'): solve | rate | spatial-rate | identify",
        "Config is key=value text; '#' starts a comment; overrides are applied",
        "after the file. Defaults:",
    ]
    cfg = RunConfig(mode="solve")
    for name in sorted(_FIELD_TYPES):
        rng = _RANGES.get(name, "")
        rng = f"  [{rng}]" if rng else ""
        lines.append(f"  {name}={getattr(cfg, name)}{rng}")
    lines += [
        "",
        "Exit codes: 0 ok, 2 config error, 3 numerical/solver error, 4 I/O error.",
    ]
    return "\n".join(lines)


if __name__ == "__main__":
    sys.exit(main())
