"""Command-line front end.

    qiup simulate            --config PATH [--out DIR] [--workers N] [--seed N]
    qiup reconstruct STACK   [--out DIR] [--config PATH] [--workers N]
    qiup verify-magnification --config PATH [--out DIR] [--workers N]
    qiup oracle-check        --config PATH [--seed N] [--workers N]

Exit codes: 0 success, 1 verification failure, 2 input or config error.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import artifacts, files
from .config import ConfigError, RunConfig, disk_mask_values, load_config, parse_config
from .correlation import DeltaKernel, gaussian_kernel
from .grid import FieldGrid, ObjectMask, PhaseScreen, PlaneMapping, load_mask
from .interferometer import InterferometerConfig, add_shot_noise, fringe_stack
from .oracle import MAX_MODES_PER_AXIS, compare_oracle, random_instance
from .reconstruction import (FeatureDetectionError, fit_fringes, measure_magnification, phase_image,
                             rms_error, visibility_image)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
ORACLE_TOL = 1e-6


# ---------------------------------------------------------------------------
# Scene assembly
# ---------------------------------------------------------------------------

def build_mask(cfg: RunConfig) -> ObjectMask:
    if cfg.mask_preset == "disks":
        grid = FieldGrid(cfg.mask_nx, cfg.mask_ny, cfg.mask_pitch)
        return ObjectMask(grid, disk_mask_values(cfg))
    if cfg.mask_amplitude is None:
        raise ConfigError("config needs mask.amplitude or mask.preset")
    raster = files.read_raster(cfg.mask_amplitude)
    grid = FieldGrid(raster.shape[1], raster.shape[0], cfg.mask_pitch)
    return load_mask(raster, cfg.mask_phase, grid)


def build_camera(cfg: RunConfig, mask: ObjectMask) -> FieldGrid:
    return FieldGrid(cfg.camera_nx or mask.grid.nx, cfg.camera_ny or mask.grid.ny,
                     cfg.camera_pitch or mask.grid.pitch)


def _phase(spec, grid: FieldGrid):
    if isinstance(spec, Path):
        return PhaseScreen(grid, files.read_matrix(spec))
    return float(spec)


def build_kernel(cfg: RunConfig):
    if cfg.kernel_type == "delta":
        return DeltaKernel(cfg.eta)
    if cfg.kernel_type == "gaussian":
        return gaussian_kernel(cfg.eta, cfg.sigma_minus, cfg.sigma_plus)
    return files.load_kernel(cfg.kernel_file)


def build_interferometer(cfg: RunConfig, mask: ObjectMask, camera: FieldGrid) -> InterferometerConfig:
    return InterferometerConfig(
        a1_mag=cfg.a1, a2_mag=cfg.a2, phi_in=cfg.ladder[0],
        phi_s=_phase(cfg.phi_s, camera),
        phi_i=_phase(cfg.phi_i, mask.grid),
        phi_i_prime=_phase(cfg.phi_i_prime, mask.grid.scaled(1.0 / cfg.m_i)),
        mapping=PlaneMapping(cfg.m_s, cfg.m_i, cfg.eta),
        signal_wavelength=cfg.signal_wavelength,
        idler_wavelength=cfg.idler_wavelength,
    )


def simulate(cfg: RunConfig, workers=None):
    """Noise-applied fringe stack plus the scene it was computed from."""
    mask = build_mask(cfg)
    camera = build_camera(cfg, mask)
    icfg = build_interferometer(cfg, mask, camera)
    kernel = build_kernel(cfg)
    stack = fringe_stack(mask, kernel, icfg, camera, cfg.ladder, pad=cfg.pad, workers=workers)
    diagnostics = dict(stack.frames[0].diagnostics)
    if cfg.noise_mode == "poisson":
        stack = add_shot_noise(stack, cfg.noise_scale, cfg.seed)
    return stack, mask, camera, icfg, diagnostics


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "out", None) is not None:
        cfg.output_dir = Path(args.out).resolve()
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig, default: str) -> Path:
    return files.ensure_dir(cfg.output_dir or Path(default).resolve())


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    stack, *_, diagnostics = simulate(cfg, cfg.workers)
    out = _out_dir(cfg, "qiup_stack")
    artifacts.save_stack(stack, out, cfg.echo(), diagnostics)
    print(f"wrote {len(stack.frames)} frames to {out}")
    return EXIT_OK


def cmd_reconstruct(stack_dir, cfg: RunConfig = None, out=None) -> int:
    stack, pairs, text = artifacts.load_stack(stack_dir)
    default_out = Path(stack_dir) / "reconstruction"
    if cfg is None:
        # the echoed output.dir is the stack directory itself; keep maps separate
        cfg = parse_config(text, base=Path(stack_dir).resolve())
        out = out or default_out
    out = files.ensure_dir(out or cfg.output_dir or default_out)
    fit = fit_fringes(stack)
    mask = build_mask(cfg)
    camera = stack.grid
    icfg = build_interferometer(cfg, mask, camera)
    mapping = icfg.mapping
    amplitude = visibility_image(fit.visibility, mapping, mask.grid, clear_visibility=icfg.cross)
    phase = phase_image(fit.phase, icfg.phi_s, icfg.phi_i, icfg.phi_i_prime, 0.0, mapping,
                        mask.grid, fit.visibility)
    artifacts.write_plane_map(out, "visibility", fit.visibility, 0.0, 1.0)
    artifacts.write_plane_map(out, "fringe_phase", fit.phase, -math.pi, math.pi)
    artifacts.write_plane_map(out, "object_amplitude", amplitude, 0.0, 1.0)
    artifacts.write_plane_map(out, "object_phase", phase, -math.pi, math.pi)

    ok = ~amplitude.masked
    err = np.abs(amplitude.values - mask.amplitude)[ok]
    entries = [
        ("frames", len(stack.frames)),
        ("fit.method", fit.method),
        ("noise", pairs.get("stack.noise", "model=off")),
        ("masked_pixels.camera", int(fit.visibility.masked.sum())),
        ("masked_pixels.object", int(amplitude.masked.sum())),
        ("phase_masked_pixels.object", int(phase.masked.sum())),
        ("visibility_clipped_pixels", fit.clipped_pixels),
        ("visibility_error.rms", repr(rms_error(amplitude, mask.amplitude))),
        ("visibility_error.max", repr(float(err.max()) if err.size else float("nan"))),
    ]
    for key in sorted(pairs):
        if key.startswith("diagnostics."):
            entries.append((key, pairs[key]))
    entries.append(("magnification.expected", repr(mapping.magnification)))
    try:
        est = measure_magnification(mask, fit.visibility)
        entries += [
            ("magnification.measured", repr(est.magnification)),
            ("magnification.uncertainty", repr(est.uncertainty)),
            ("magnification.residual_rms", repr(est.residual_rms)),
        ]
    except FeatureDetectionError as exc:
        entries.append(("magnification.measured", f"n/a ({exc})"))
    artifacts.write_report(out / "report.txt", entries)
    for k, v in entries:
        print(f"{k} = {v}")
    print(f"wrote reconstruction to {out}")
    return EXIT_OK


def cmd_verify_magnification(cfg: RunConfig) -> int:
    stack, mask, camera, icfg, _ = simulate(cfg, cfg.workers)
    fit = fit_fringes(stack)
    expected = icfg.mapping.magnification
    try:
        est = measure_magnification(mask, fit.visibility)
    except FeatureDetectionError as exc:
        print(f"error: feature detection failed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    err = est.position_error(expected)
    verdict = "PASS" if est.agrees_with(expected, camera.pitch) else "FAIL"
    entries = [
        ("magnification.measured", f"{est.magnification:.6f} +- {est.uncertainty:.2g}"),
        ("magnification.expected", f"{expected:.6f} (eta * m_s / m_i = {cfg.eta:g} * {cfg.m_s:g} / {cfg.m_i:g})"),
        ("features", len(est.truth_centroids)),
        ("max_feature_displacement", f"{err:.4g} (tolerance {camera.pitch / 2:g} = half a camera pixel)"),
        ("result", verdict),
    ]
    for k, v in entries:
        print(f"{k} = {v}")
    if cfg.output_dir is not None:
        artifacts.write_report(files.ensure_dir(cfg.output_dir) / "magnification_report.txt", entries)
    return EXIT_OK if verdict == "PASS" else EXIT_FAIL


def cmd_oracle_check(cfg: RunConfig) -> int:
    if not 2 <= cfg.oracle_modes <= MAX_MODES_PER_AXIS:
        raise ConfigError(f"oracle.modes = {cfg.oracle_modes} outside 2..{MAX_MODES_PER_AXIS} (mode cap)")
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for k in range(cfg.oracle_instances):
        inst = random_instance(cfg.oracle_modes, rng, cfg.oracle_alpha2, cfg.oracle_object)
        dev, oracle, _ = compare_oracle(inst, cfg.workers)
        shifted = compare_oracle(_shift_phi_in(inst, math.pi / 2), cfg.workers)[1]
        sens = float(np.max(np.abs(oracle - shifted)))
        worst = max(worst, dev)
        print(f"instance {k}: modes={cfg.oracle_modes}x{cfg.oracle_modes} "
              f"m_s={inst.cfg.mapping.m_s:g} m_i={inst.cfg.mapping.m_i:g} "
              f"a2={inst.cfg.a2_mag:.4f} deviation={dev:.3e} phi_in_sensitivity={sens:.3e}")
    verdict = "PASS" if worst < ORACLE_TOL else "FAIL"
    print(f"max relative deviation = {worst:.3e} (tolerance {ORACLE_TOL:g})")
    print(verdict)
    return EXIT_OK if verdict == "PASS" else EXIT_FAIL


def _shift_phi_in(inst, delta):
    from dataclasses import replace
    return replace(inst, cfg=inst.cfg.with_phi_in(inst.cfg.phi_in + delta))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, help="override noise / oracle seed")

    p = argparse.ArgumentParser(prog="qiup", description=__doc__.split("\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "verify-magnification", "oracle-check"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--config", required=True,
                        help="config file, or a bundled preset name (fig2, disks, oracle)")
    rp = sub.add_parser("reconstruct", parents=[common])
    rp.add_argument("stack", help="stack directory written by simulate")
    rp.add_argument("--config", help="config overriding the manifest echo")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "reconstruct":
            cfg = _apply_overrides(load_config(args.config), args) if args.config else None
            return cmd_reconstruct(args.stack, cfg, args.out)
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "verify-magnification":
            return cmd_verify_magnification(cfg)
        return cmd_oracle_check(cfg)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
