"""Command-line interface.

Exit codes: 0 success, 2 precondition or usage error, 3 numerical
non-convergence. Errors are reported on stderr as one JSON object.

Every command writes a run manifest: to ``--manifest`` if given, else next
to ``--out`` as ``<out>.manifest.json``, else as one JSON line on stderr.
``aniso replay MANIFEST`` re-runs the recorded command.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, elliptic, field_sim, inversion_hd, io, isotropy_test
from . import palm_stats, pipeline, power
from .errors import AnisoError, ConvergenceError, PreconditionError

EXIT_PRECONDITION = 2
EXIT_CONVERGENCE = 3


def _exit_code(exc: AnisoError) -> int:
    return EXIT_CONVERGENCE if isinstance(exc, ConvergenceError) else EXIT_PRECONDITION


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except AnisoError as exc:
            click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
            ctx.exit(_exit_code(exc))


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def _argv_from_params(cmd: click.Command, params: dict) -> list:
    argv = []
    for p in cmd.params:
        v = params.get(p.name)
        if isinstance(p, click.Argument):
            argv.append(_fmt(v))
            continue
        if not isinstance(p, click.Option) or v is None:
            continue
        name = p.opts[0]
        if p.is_flag:
            if v:
                argv.append(name)
            elif p.secondary_opts:
                argv.append(p.secondary_opts[0])
            continue
        values = v if p.multiple else [v]
        for item in values:
            argv.append(name)
            if isinstance(item, tuple):
                argv.extend(_fmt(x) for x in item)
            else:
                argv.append(_fmt(item))
    return argv


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def _write_manifest(ctx: click.Context, seed: int = 0, out=None, inputs=(), resolved=None) -> None:
    params = dict(ctx.params)
    manifest_path = params.pop("manifest", None)
    m = io.RunManifest(
        command=ctx.info_name,
        config=io.to_jsonable({**params, **(resolved or {})}),
        seed=int(seed),
        tool_version=__version__,
        argv=_argv_from_params(ctx.command, {**params, "manifest": None}),
        inputs={str(p): io.file_sha256(p) for p in inputs},
    )
    if manifest_path:
        m.write(manifest_path)
    elif out:
        m.write(str(out) + ".manifest.json")
    else:
        click.echo(io.dumps(m.to_dict(), indent=None), err=True, nl=False)


_manifest_opt = click.option("--manifest", type=click.Path(dir_okay=False), default=None,
                             help="Where to write the run manifest.")


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="aniso")
def cli():
    """Anisotropy estimation and isotropy testing for 2-D random fields."""


@cli.command()
@click.option("--rows", type=int, default=512, show_default=True)
@click.option("--cols", type=int, default=512, show_default=True)
@click.option("--domain", type=float, default=100.0, show_default=True, help="Window side length.")
@click.option("--kappa", type=float, default=None, help="Anisotropy in [0, 1); sets a.")
@click.option("--a", "a", type=float, default=None, help="Covariance anisotropy scale (> 0).")
@click.option("--theta0", type=float, default=0.0, show_default=True)
@click.option("--mu", type=float, default=0.0, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--pad", type=int, default=2, show_default=True, help="Periodic padding factor.")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output grid (.grf or .csv).")
@_manifest_opt
@click.pass_context
def simulate(ctx, rows, cols, domain, kappa, a, theta0, mu, sigma, seed, pad, out, manifest):
    """Simulate a squared-exponential Gaussian field."""
    if kappa is not None and a is not None:
        raise PreconditionError("give at most one of --kappa and --a")
    if kappa is not None:
        a = field_sim.a_from_kappa(kappa)
    elif a is None:
        a = 1.0
    cfg = field_sim.SimConfig(rows, cols, domain, a, theta0, mu, sigma, seed, pad)
    io.save_field(out, field_sim.simulate(cfg))
    _write_manifest(ctx, seed, out, resolved={"a": a, "kappa": cfg.kappa})


def _input_grid(path, dx, dy):
    return io.load_field(path, dx, dy)


_input_opts = [
    click.argument("input", type=click.Path(exists=True, dir_okay=False)),
    click.option("--level", type=float, default=None, help="Level u (required for field input)."),
    click.option("--binary", is_flag=True, help="Treat the input as an excursion mask (level 0.5)."),
    click.option("--smoothing", type=float, default=0.0, show_default=True,
                 help="Gaussian pre-smoothing radius in pixels (binary input only)."),
    click.option("--points", type=int, default=pipeline.DEFAULT_POINTS, show_default=True,
                 help="Arc-length resampling points."),
    click.option("--dx", type=float, default=1.0, show_default=True,
                 help="Pixel spacing for CSV/image input."),
    click.option("--dy", type=float, default=1.0, show_default=True),
]


def _with_input_opts(f):
    for dec in reversed(_input_opts):
        f = dec(f)
    return f


def _resolve_level(level, binary):
    if binary:
        return 0.5
    if level is None:
        raise PreconditionError("--level is required for field input")
    return level


@cli.command()
@_with_input_opts
@click.option("--method", type=click.Choice(["contour", "lkc", "combined", "oracle", "palm-hd", "all"]),
              default="contour", show_default=True)
@click.option("--alpha1", type=float, default=0.5, show_default=True,
              help="Weight of the LKC term in the combined estimator.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_manifest_opt
@click.pass_context
def estimate(ctx, input, level, binary, smoothing, points, dx, dy, method, alpha1, out, manifest):
    """Estimate anisotropy from a grid or excursion image."""
    grid = _input_grid(input, dx, dy)
    u = _resolve_level(level, binary)
    methods = ("contour", "lkc", "combined", "oracle", "palm-hd") if method == "all" else (method,)
    res = pipeline.analyze(grid, u, points, methods, binary=binary, smoothing=smoothing,
                           alpha1=alpha1)
    if method != "all" and method in res.errors:
        raise res.errors[method]
    doc = {
        "level": res.level,
        "estimates": [e.to_dict() for e in res.estimates.values()],
        "errors": {k: {"error": type(v).__name__, "message": str(v)} for k, v in res.errors.items()},
        "palm_summary": res.palm.to_dict(),
        "lkc_summary": res.lkc_summary.to_dict() if res.lkc_summary else None,
    }
    _emit(io.dumps(doc), out)
    _write_manifest(ctx, 0, out, [input])


@cli.command()
@_with_input_opts
@click.option("--blocks", type=int, default=None, help="Partition side N (default 10, or 25 near |u|=1).")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_manifest_opt
@click.pass_context
def test(ctx, input, level, binary, smoothing, points, dx, dy, blocks, alpha, out, manifest):
    """Chi-squared contour test of quasi-isotropy."""
    grid = _input_grid(input, dx, dy)
    u = _resolve_level(level, binary)
    N = isotropy_test.default_blocks(u) if blocks is None else blocks
    if N * N < 4:
        raise PreconditionError("--blocks must be >= 2 (N^2 >= 4 cells)")
    cs = pipeline.extract(grid, u, points, binary, smoothing)
    summary = palm_stats.summarize(cs)
    result = isotropy_test.chi2_contour_test(summary, palm_stats.cell_stats(cs, grid.window, N))
    _emit(io.dumps(result.to_dict(alpha)), out)
    _write_manifest(ctx, 0, out, [input])


@cli.command("power")
@click.option("--kappa", "kappas", type=float, multiple=True, default=(0.0, 0.5), show_default=True)
@click.option("--level", "levels", type=float, multiple=True, default=(0.0,), show_default=True)
@click.option("--blocks", type=int, multiple=True, default=(), help="Partition sides (default per level).")
@click.option("--reps", type=int, default=200, show_default=True)
@click.option("--grid", type=int, default=512, show_default=True)
@click.option("--domain", type=float, default=100.0, show_default=True)
@click.option("--theta0", type=float, default=1.0, show_default=True)
@click.option("--points", type=int, default=pipeline.DEFAULT_POINTS, show_default=True)
@click.option("--methods", type=click.Choice(list(power.METHODS)), multiple=True,
              default=("chi2-contour",), show_default=True)
@click.option("--n-null", type=int, default=1000, show_default=True,
              help="Null simulations for model-based tests.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=None, help="Process count (default ANISO_THREADS or CPUs).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Rejection-rate CSV.")
@click.option("--ecdf-out", type=click.Path(dir_okay=False), default=None, help="p-value ECDF CSV.")
@_manifest_opt
@click.pass_context
def power_cmd(ctx, kappas, levels, blocks, reps, grid, domain, theta0, points, methods, n_null, seed,
              workers, out, ecdf_out, manifest):
    """Monte-Carlo calibration and power table."""
    configs = []
    for k in kappas:
        for u in levels:
            for N in blocks or (isotropy_test.default_blocks(u),):
                configs.append(power.PowerConfig(k, u, N, reps, grid, domain, theta0, points))
    study = power.run_calibration_power(configs, seed=seed, methods=methods, n_null=n_null,
                                        workers=workers)
    _emit(study.rows_csv(), out)
    if ecdf_out:
        Path(ecdf_out).write_text(study.ecdf_csv())
    _write_manifest(ctx, seed, out)


def _parse_vector(text: str):
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    try:
        v = json.loads(text)
    except ValueError as exc:
        raise PreconditionError(f"--z must be a JSON array ({exc})") from exc
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) for x in v):
        raise PreconditionError("--z must be a JSON array of numbers")
    return np.array(v, dtype=np.float64)


@cli.command("invert-hd")
@click.option("--z", "z_text", required=True, help="JSON array of eigenvalues, or @file.")
@click.option("--box", type=(float, float), default=None, help="Box [a, b] for the descent.")
@click.option("--r", "r", type=float, default=3.0, show_default=True,
              help="Conditioning guess; box = (1/(2 r^2), 2 r^2) unless --box.")
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--max-iter", type=int, default=2_000_000, show_default=True)
@click.option("--iterates", is_flag=True, help="Include all descent iterates in the report.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_manifest_opt
@click.pass_context
def invert_hd(ctx, z_text, box, r, tol, max_iter, iterates, out, manifest):
    """Invert Palm normalized-gradient eigenvalues to anisotropy parameters."""
    Z = _parse_vector(z_text)
    box = inversion_hd.default_box(r) if box is None else box
    pi_hat, kappa_hat, report = inversion_hd.invert_palm(Z, box=box, tol=tol, max_iter=max_iter)
    doc = {"kappa_hat": kappa_hat, "pi_hat": pi_hat, "permutation": report.permutation,
           "report": report.to_dict(include_iterates=iterates)}
    _emit(io.dumps(doc), out)
    _write_manifest(ctx, 0, out)
    if not report.converged:
        raise ConvergenceError(f"descent did not reach tol {tol} (residual {report.final_residual:.3g})")


@cli.command("link-table")
@click.option("--n", "n", type=int, default=201, show_default=True, help="Number of kappa knots.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_manifest_opt
@click.pass_context
def link_table(ctx, n, out, manifest):
    """Tabulate kappa, g(kappa), R(kappa)."""
    _emit(elliptic.link_table_csv(n), out)
    _write_manifest(ctx, 0, out)


@cli.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Redirect the primary output of the replayed run.")
def replay(manifest_path, out):
    """Re-run the command recorded in a manifest."""
    m = io.RunManifest.read(manifest_path)
    argv = list(m.argv)
    if out is not None:
        if "--out" in argv:
            argv[argv.index("--out") + 1] = out
        else:
            argv += ["--out", out]
    for path, digest in m.inputs.items():
        if not Path(path).exists() or io.file_sha256(path) != digest:
            raise PreconditionError(f"input {path} is missing or changed since the recorded run")
    cli.main([m.command, *argv], standalone_mode=False)


def main(argv=None):
    try:
        rv = cli.main(argv, prog_name="aniso", standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_PRECONDITION)
    except click.Abort:
        sys.exit(1)
    sys.exit(rv if isinstance(rv, int) else 0)


__all__ = ["cli", "main"]
