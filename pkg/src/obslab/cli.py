"""Configuration-driven experiment runner.

    obslab <command> --config <path> [--out <dir>] [--seed <int>] [--quiet]

Commands: eig, forward, observability, probe, reconstruct, stability,
selftest.  Configs are JSON with a versioned schema; every run writes a
manifest listing each output file with its content hash.  Exit codes:
0 ok, 1 compute error, 2 validation/usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time as _time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import jsonschema

from . import io as obsio
from .expressions import ExpressionError, parse_expression
from .forward import (
    ObservationConfig,
    solve_beam,
    solve_heat,
    solve_wave,
    wave_min_time,
)
from .grid import CoefficientField, Grid1D, TimeGrid
from .observability import estimate_kappa, perturbation_margin_check
from .reconstruct import (
    probe_coefficient,
    reconstruct_field,
    stability_curve,
)
from .spectral import (
    PerturbationTooLarge,
    beam_eigenpairs,
    dirichlet_eigenpairs,
    gap_statistics,
    perturbed_spectrum,
    weyl_check,
)

SCHEMA_VERSION = 1

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "equation", "domain", "time"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "equation": {"enum": ["wave", "beam", "heat"]},
        "domain": {
            "type": "object",
            "required": ["length", "n_interior"],
            "additionalProperties": False,
            "properties": {
                "length": {"type": "number", "exclusiveMinimum": 0},
                "n_interior": {"type": "integer", "minimum": 3},
            },
        },
        "time": {
            "type": "object",
            "required": ["tau", "n_steps"],
            "additionalProperties": False,
            "properties": {
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "n_steps": {"type": "integer", "minimum": 8},
            },
        },
        "boundary": {
            "type": "array",
            "items": {"enum": ["left", "right"]},
            "minItems": 1,
            "maxItems": 2,
        },
        "coefficients": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                name: {"type": ["string", "array"]}
                for name in ("q0", "a0", "q", "a")
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "u0": {"type": ["string", "array"]},
                "u1": {"type": ["string", "array"]},
            },
        },
        "source": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "modulation": {"type": "string"},
                "profile": {"type": ["string", "array"]},
            },
        },
        "probes": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {
                    "enum": [
                        "potential",
                        "damping_zero",
                        "joint",
                        "damping_nonzero",
                        "beam_damping",
                        "heat",
                    ]
                },
                "K": {"type": "integer", "minimum": 1},
                "k_dict": {"type": "integer", "minimum": 1},
                "k_list": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
        "truncation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["fixed", "auto"]},
                "lambda_cutoff": {"type": "number"},
                "prior_radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "perturbed_spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"delta": {"type": "number"}},
        },
        "observability": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "perturbation": {"type": "string"},
                "which": {"enum": ["q", "a"]},
                "sizes": {"type": "array", "items": {"type": "number"}},
            },
        },
        "stability": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["scale", "noise"]},
                "sizes": {"type": "array", "items": {"type": "number"}, "minItems": 4},
                "direction_q": {"type": "string"},
                "direction_a": {"type": "string"},
                "base_amplitude": {"type": "number"},
                "n_draws": {"type": "integer", "minimum": 1},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"sigma": {"type": "number", "minimum": 0}},
        },
        "seed": {"type": "integer"},
    },
}


class ValidationFailure(Exception):
    """Config or usage problem: exit code 2."""


@dataclass
class Experiment:
    raw: dict
    grid: Grid1D
    time: TimeGrid
    config: ObservationConfig
    seed: int
    warnings: list = field(default_factory=list)

    def coefficient(self, name: str, default: float = 0.0) -> CoefficientField:
        spec = self.raw.get("coefficients", {}).get(name)
        return self._field_from(spec, default)

    def _field_from(self, spec, default: float = 0.0) -> CoefficientField:
        if spec is None:
            return CoefficientField.constant(self.grid, default)
        if isinstance(spec, str):
            try:
                fn = parse_expression(spec)
            except ExpressionError as exc:
                raise ValidationFailure(str(exc)) from exc
            return CoefficientField(self.grid, fn(self.grid.nodes))
        values = np.asarray(spec, dtype=float)
        if values.shape != (self.grid.n_interior,):
            raise ValidationFailure(
                f"inline array has {values.size} entries, grid has {self.grid.n_interior}"
            )
        return CoefficientField(self.grid, values)


def load_experiment(path: str, seed_override=None) -> Experiment:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationFailure(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationFailure(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationFailure(f"config violates schema: {exc.message}") from exc

    grid = Grid1D(raw["domain"]["length"], raw["domain"]["n_interior"])
    tg = TimeGrid(raw["time"]["tau"], raw["time"]["n_steps"])
    boundary = tuple(raw.get("boundary", ["left"]))
    cfg = ObservationConfig(raw["equation"], tg, boundary)
    seed = int(seed_override if seed_override is not None else raw.get("seed", 0))
    exp = Experiment(raw=raw, grid=grid, time=tg, config=cfg, seed=seed)

    if raw["equation"] == "wave" and tg.tau < wave_min_time(grid.length) - 1e-12:
        exp.warnings.append(
            f"tau = {tg.tau:.6g} is below the observability threshold "
            f"2L = {wave_min_time(grid.length):.6g} for the 1D wave equation"
        )
    return exp


def _probe_count(exp: Experiment, default: int = 5) -> int:
    K = exp.raw.get("probes", {}).get("K", default)
    limit = exp.grid.n_interior - (2 if exp.config.equation == "beam" else 0)
    if K > limit:
        raise ValidationFailure(
            f"probes.K = {K} exceeds the {limit} modes resolvable on this grid"
        )
    return K


# ---------------------------------------------------------------------------
# commands


def cmd_eig(exp: Experiment, out: Path) -> list[Path]:
    K = _probe_count(exp, default=10)
    outputs = []
    if exp.config.equation == "beam":
        basis = beam_eigenpairs(K, exp.grid)
        rows = [(k + 1, basis.eigenvalues[k], float(np.sqrt(basis.eigenvalues[k]))) for k in range(K)]
        outputs.append(obsio.write_csv(out / "eigs.csv", ["k", "eigenvalue", "rho"], rows))
        min_gap, asym = gap_statistics(np.sqrt(basis.eigenvalues))
        outputs.append(
            obsio.write_json(
                out / "weyl.json",
                {"applicable": False, "reason": "fourth-order growth", "min_gap": min_gap, "asymptotic_gap": asym},
            )
        )
        return outputs

    q0 = exp.coefficient("q0")
    basis = dirichlet_eigenpairs(q0, K)
    a0 = exp.coefficient("a0")
    if np.any(a0.values != 0) and exp.config.equation == "wave":
        delta = exp.raw.get("perturbed_spectrum", {}).get("delta", 0.5)
        riesz = perturbed_spectrum(a0, "wave", delta=delta)
        rows = [
            (k + 1, basis.eigenvalues[k], riesz.mu[k].real, riesz.mu[k].imag)
            for k in range(K)
        ]
        outputs.append(
            obsio.write_csv(out / "eigs.csv", ["k", "eigenvalue", "re_mu", "im_mu"], rows)
        )
    else:
        rows = [(k + 1, basis.eigenvalues[k]) for k in range(K)]
        outputs.append(obsio.write_csv(out / "eigs.csv", ["k", "eigenvalue"], rows))
    c, ok = weyl_check(basis)
    outputs.append(obsio.write_json(out / "weyl.json", {"applicable": True, "c": c, "ok": ok}))
    return outputs


def cmd_forward(exp: Experiment, out: Path) -> list[Path]:
    eq = exp.config.equation
    init = exp.raw.get("initial", {})
    u0 = exp._field_from(init.get("u0")) if "u0" in init else None
    u1 = exp._field_from(init.get("u1")) if "u1" in init else None
    source = None
    if "source" in exp.raw:
        mod = parse_expression(exp.raw["source"].get("modulation", "1"))
        prof = exp._field_from(exp.raw["source"].get("profile", "0"))
        source = (np.asarray(mod(exp.time.t), dtype=float), prof)
    if eq == "wave":
        res = solve_wave(exp.coefficient("q"), exp.coefficient("a"), u0, u1, exp.config, source=source)
    elif eq == "beam":
        res = solve_beam(exp.coefficient("a"), u0, u1, exp.config, source=source)
    else:
        res = solve_heat(exp.coefficient("q"), u0, exp.config, source=source)
    outputs = [obsio.write_trace_csv(out / "trace.csv", res.trace)]
    if eq == "heat":
        outputs.append(
            obsio.write_csv(out / "final.csv", ["x", "u"], zip(exp.grid.nodes, res.final))
        )
    return outputs


def cmd_observability(exp: Experiment, out: Path) -> list[Path]:
    obs = exp.raw.get("observability", {})
    K = obs.get("K", exp.raw.get("probes", {}).get("K", 8))
    q = exp.coefficient("q0")
    a = exp.coefficient("a0")
    eq = exp.config.equation
    import warnings as _w

    with _w.catch_warnings():
        _w.simplefilter("ignore")
        est = estimate_kappa(
            eq,
            q if eq != "beam" else None,
            a if eq != "heat" else None,
            exp.config,
            K,
        )
    outputs = [obsio.atomic_write_text(out / "kappa.json", est.to_json() + "\n")]
    exp.warnings.extend(est.notes)
    if "perturbation" in obs:
        pert = exp._field_from(obs["perturbation"])
        with _w.catch_warnings():
            _w.simplefilter("ignore")
            report = perturbation_margin_check(
                eq,
                q if eq != "beam" else None,
                a if eq != "heat" else None,
                pert,
                obs.get("which", "a"),
                exp.config,
                K,
                sizes=obs.get("sizes", [1.0]),
            )
        outputs.append(obsio.write_json(out / "margin.json", report))
    return outputs


def _probe_setup(exp: Experiment):
    probes = exp.raw.get("probes", {})
    kind = probes.get("kind")
    if kind is None:
        raise ValidationFailure("probes.kind is required for this command")
    q0 = exp.coefficient("q0")
    a0 = exp.coefficient("a0")
    q = exp.coefficient("q") if "q" in exp.raw.get("coefficients", {}) else None
    a = exp.coefficient("a") if "a" in exp.raw.get("coefficients", {}) else None
    return kind, q, a, q0, a0


def cmd_probe(exp: Experiment, out: Path) -> list[Path]:
    kind, q, a, q0, a0 = _probe_setup(exp)
    probes = exp.raw.get("probes", {})
    k_list = probes.get("k_list") or list(range(1, _probe_count(exp) + 1))
    k_dict = probes.get("k_dict")
    sigma = exp.raw.get("noise", {}).get("sigma", 0.0)
    rng = np.random.default_rng(exp.seed)
    rows = []
    for k in sorted(k_list):
        res = probe_coefficient(
            kind, k, exp.config, q=q, a=a, q0=q0, a0=a0, k_dict=k_dict,
            noise_sigma=sigma, rng=rng,
        )
        c = complex(res.c_hat)
        rows.append((k, c.real, c.imag, res.residual, res.dy_norm, res.condition))
    return [
        obsio.write_csv(
            out / "probes.csv",
            ["k", "re_c", "im_c", "residual", "dy_norm", "condition"],
            rows,
        )
    ]


def cmd_reconstruct(exp: Experiment, out: Path) -> list[Path]:
    kind, q, a, q0, a0 = _probe_setup(exp)
    probes = exp.raw.get("probes", {})
    K = _probe_count(exp)
    trunc = exp.raw.get("truncation", {"mode": "fixed"})
    sigma = exp.raw.get("noise", {}).get("sigma", 0.0)
    rng = np.random.default_rng(exp.seed)

    ground_truth = {}
    if q is not None:
        ground_truth["q"] = q - q0
    if a is not None and kind != "damping_zero":
        ground_truth["a"] = a - a0
    elif a is not None:
        ground_truth["a"] = a

    kwargs = dict(
        q=q, a=a, q0=q0, a0=a0, k_max=K, k_dict=probes.get("k_dict"),
        ground_truth=ground_truth or None, noise_sigma=sigma, rng=rng,
    )
    if trunc.get("mode", "fixed") == "auto":
        kwargs["plan"] = "auto"
        kwargs["prior_radius"] = trunc.get("prior_radius", 1.0)
    else:
        cutoff = trunc.get("lambda_cutoff")
        if cutoff is None:
            base = (
                beam_eigenpairs(K, exp.grid)
                if kind == "beam_damping"
                else dirichlet_eigenpairs(q0, K)
            )
            cutoff = float(base.eigenvalues[K - 1])
        kwargs["plan"] = float(cutoff)

    report = reconstruct_field(kind, exp.config, **kwargs)
    outputs = []
    probe_rows = [
        (p.k, complex(p.c_hat).real, complex(p.c_hat).imag, p.residual, p.dy_norm)
        for p in report.probes
    ]
    outputs.append(
        obsio.write_csv(out / "probes.csv", ["k", "re_c", "im_c", "residual", "dy_norm"], probe_rows)
    )
    for name, fld in report.fields.items():
        outputs.append(obsio.write_field_csv(out / f"field_{name}.csv", fld))
    payload = {
        "kind": report.kind,
        "plan": {
            "lambda_cutoff": report.plan.lambda_cutoff,
            "n_modes": report.plan.n_modes,
            "prior_radius": report.plan.prior_radius,
        },
        "delta_lambda_norm": report.delta_lambda_norm,
        "exponent_p": report.exponent_p,
        "bound_value": report.bound_value if np.isfinite(report.bound_value) else None,
        "errors": report.errors,
        "diagnostics": report.diagnostics,
    }
    outputs.append(obsio.write_json(out / "report.json", payload))
    return outputs


def cmd_stability(exp: Experiment, out: Path) -> list[Path]:
    kind, q, a, q0, a0 = _probe_setup(exp)
    stab = exp.raw.get("stability")
    if not stab:
        raise ValidationFailure("stability section is required for this command")
    direction = {}
    if "direction_q" in stab:
        direction["q"] = exp._field_from(stab["direction_q"])
    if "direction_a" in stab:
        direction["a"] = exp._field_from(stab["direction_a"])
    if not direction:
        raise ValidationFailure("stability needs direction_q or direction_a")
    trunc = exp.raw.get("truncation", {"mode": "auto"})
    if trunc.get("mode", "auto") == "auto":
        plan = "auto"
    else:
        plan = float(trunc["lambda_cutoff"])
    table = stability_curve(
        kind,
        exp.config,
        direction,
        stab["sizes"],
        q0=q0,
        a0=a0,
        mode=stab.get("mode", "scale"),
        plan=plan,
        prior_radius=trunc.get("prior_radius", 1.0),
        k_max=_probe_count(exp),
        k_dict=exp.raw.get("probes", {}).get("k_dict"),
        base_amplitude=stab.get("base_amplitude", 0.1),
        n_draws=stab.get("n_draws", 20),
        seed=exp.seed,
    )
    outputs = [obsio.write_stability_csv(out / "stability.csv", table)]
    outputs.append(
        obsio.write_json(
            out / "fit.json",
            {
                "kind": table.kind,
                "mode": table.mode,
                "exponent_p": table.exponent_p,
                "fitted_p": table.fitted_p,
                "fitted_p_stderr": table.fitted_p_stderr,
                "fitted_C": table.fitted_C,
                "envelope_C": table.envelope_C,
                "log_anchor": table.log_anchor,
                "monotone": table.monotone(),
                "envelope_holds": table.envelope_holds(),
            },
        )
    )
    return outputs


# ---------------------------------------------------------------------------
# selftest

EXTRA_CHECKS: list = []  # test hook: append (name, callable) pairs


def _selftest_checks():
    import math

    from .grid import inner_l2, norm, weak_norm_star
    from .reconstruct import ProbeSession
    from .volterra import ModulationSignal, apply_S, deconvolve

    def grid_checks():
        g = Grid1D(np.pi, 400)
        f = CoefficientField(g, np.sqrt(2 / np.pi) * np.sin(g.nodes))
        ok = abs(inner_l2(f, f) - 1.0) < 1e-8
        q0 = CoefficientField.zero(g)
        basis = dirichlet_eigenpairs(q0, 6)
        coeffs = basis.analyze(f.values)
        ok &= abs(np.sum(coeffs**2) - inner_l2(f, f)) < 1e-10
        ok &= weak_norm_star(f, basis, 1.0) <= norm(f, "L2") + 1e-12
        return ok, "discrete L2 pairing, Parseval, weak norm domination"

    def spectral_checks():
        g = Grid1D(np.pi, 500)
        basis = dirichlet_eigenpairs(CoefficientField.zero(g), 6)
        lam_ok = np.allclose(basis.eigenvalues, np.arange(1, 7) ** 2, rtol=1e-3)
        c, ok = weyl_check(basis)
        gb = Grid1D(1.0, 200)
        bb = beam_eigenpairs(2, gb)
        rho1 = math.sqrt(bb.eigenvalues[0])
        beam_ok = abs(rho1 - 22.3733) / 22.3733 < 1e-2
        return bool(lam_ok and ok and beam_ok), f"lam ~ k^2, weyl c = {c:.4f}, beam rho1 = {rho1:.3f}"

    def volterra_checks():
        tg = TimeGrid(1.0, 400)
        lam = ModulationSignal(tg, np.cos(3 * tg.t))
        h = np.sin(5 * tg.t)
        rec = deconvolve(lam, apply_S(lam, h)).values
        err = np.linalg.norm(rec - h) / np.linalg.norm(h)
        return err < 1e-3, f"round-trip error {err:.2e}"

    def forward_checks():
        g = Grid1D(np.pi, 200)
        q0 = CoefficientField.zero(g)
        basis = dirichlet_eigenpairs(q0, 3)
        tg = TimeGrid(2 * np.pi, 800)
        cfg = ObservationConfig("wave", tg, ("left",))
        res = solve_wave(q0, None, basis.mode(1), None, cfg)
        ref = -np.sqrt(2 / np.pi) * np.cos(np.sqrt(basis.eigenvalues[0]) * tg.t)
        err = np.linalg.norm(res.trace.values[0] - ref) / np.linalg.norm(ref)
        cfgh = ObservationConfig("heat", TimeGrid(0.5, 200), ("left",))
        resh = solve_heat(q0, basis.mode(1), cfgh)
        refh = np.exp(-basis.eigenvalues[0] * 0.5) * basis.mode(1).values
        errh = np.max(np.abs(resh.final - refh))
        return err < 1e-2 and errh < 1e-3, f"wave trace err {err:.2e}, heat decay err {errh:.2e}"

    def kappa_checks():
        g = Grid1D(np.pi, 120)
        q0 = CoefficientField.zero(g)
        cfg = ObservationConfig("wave", TimeGrid(2 * np.pi, 700), ("left",))
        est = estimate_kappa("wave", q0, None, cfg, 5)
        return est.kappa > 0.5, f"kappa = {est.kappa:.3f} at tau = 2pi"

    def probe_checks():
        g = Grid1D(np.pi, 150)
        q0 = CoefficientField.zero(g)
        basis = dirichlet_eigenpairs(q0, 12)
        dq = CoefficientField(g, 0.1 * basis.eigenvectors[:, 1])
        cfg = ObservationConfig("wave", TimeGrid(2 * np.pi, 900), ("left",))
        sess = ProbeSession("potential", cfg, q=q0 + dq, q0=q0, k_max=2, k_dict=8)
        c2 = sess.probe(2).c_hat
        return abs(c2 - 0.1) < 5e-3, f"c_hat = {c2:.4f} (want 0.1)"

    def riesz_checks():
        g = Grid1D(np.pi, 80)
        a0 = CoefficientField.constant(g, 0.2)
        rz = perturbed_spectrum(a0, "wave", delta=0.5)
        dev_ok = np.all(rz.deviations() <= rz.budget.alpha_bar + 1e-8)
        frame_ok = 0 < rz.alpha_frame <= rz.beta_frame
        return bool(dev_ok and frame_ok), (
            f"max dev {rz.deviations().max():.3f} <= {rz.budget.alpha_bar:.3f}, "
            f"frame [{rz.alpha_frame:.3f}, {rz.beta_frame:.3f}]"
        )

    checks = [
        ("grid", grid_checks),
        ("spectral", spectral_checks),
        ("volterra", volterra_checks),
        ("forward", forward_checks),
        ("observability", kappa_checks),
        ("probe", probe_checks),
        ("riesz", riesz_checks),
    ]
    checks.extend(EXTRA_CHECKS)
    return checks


def cmd_selftest(quiet: bool = False) -> int:
    failures = 0
    for name, fn in _selftest_checks():
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        if not quiet:
            print(f"[selftest] {name:14s} {status}  {detail}")
    if not quiet:
        print(f"[selftest] {'OK' if failures == 0 else f'{failures} failure(s)'}")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {
    "eig": cmd_eig,
    "forward": cmd_forward,
    "observability": cmd_observability,
    "probe": cmd_probe,
    "reconstruct": cmd_reconstruct,
    "stability": cmd_stability,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="obslab", description=__doc__)
    parser.add_argument("command", choices=list(COMMANDS) + ["selftest"])
    parser.add_argument("--config", help="path to the experiment JSON config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--quiet", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    if args.command == "selftest":
        return cmd_selftest(quiet=args.quiet)

    out = Path(args.out)
    started = _time.time()
    try:
        if not args.config:
            raise ValidationFailure(f"command {args.command!r} requires --config")
        exp = load_experiment(args.config, seed_override=args.seed)
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](exp, out)
    except ValidationFailure as exc:
        _emit_error(out, "validation", str(exc), args.quiet)
        return 2
    except (ValueError, PerturbationTooLarge) as exc:
        _emit_error(out, "validation", str(exc), args.quiet)
        return 2
    except Exception as exc:  # noqa: BLE001
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        _emit_error(out, "compute", detail, args.quiet)
        return 1

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "config_hash": obsio.config_hash(exp.raw),
        "seed": exp.seed,
        "duration_s": round(_time.time() - started, 3),
        "warnings": exp.warnings,
        "outputs": [
            {"path": str(p.relative_to(out)), "sha256": obsio.sha256_file(p)}
            for p in outputs
        ],
    }
    obsio.write_json(out / "manifest.json", manifest)
    if not args.quiet:
        for entry in manifest["outputs"]:
            print(f"wrote {out / entry['path']}")
        for w in exp.warnings:
            print(f"warning: {w}", file=sys.stderr)
    return 0


def _emit_error(out: Path, kind: str, message: str, quiet: bool) -> None:
    payload = {"error": {"type": kind, "message": message}}
    try:
        out.mkdir(parents=True, exist_ok=True)
        obsio.write_json(out / "error.json", payload)
    except OSError:
        pass
    if not quiet:
        print(json.dumps(payload), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
