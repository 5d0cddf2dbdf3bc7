"""Command-line driver: verification suites, indicial data, model tables, expansions, descent."""

import math
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import suites as su


# -- JSON emission ------------------------------------------------------------

def _float(v):
    v = float(v)
    if not math.isfinite(v):
        return "null"
    s = format(v, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps(obj, indent=2, _level=0):
    """JSON text with sorted keys and floats written with 17 significant digits."""
    import json
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps([obj.real, obj.imag], indent, _level)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = ",\n".join(f"{pad}{json.dumps(k, ensure_ascii=False)}: "
                          f"{dumps(v, indent, _level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        obj = list(obj)
        if not obj:
            return "[]"
        body = ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit(report, path=None):
    text = dumps(report) + "\n"
    if path is None or str(path) == "-":
        click.echo(text, nl=False)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise click.FileError(str(path), hint=str(exc)) from exc


# -- commands -------------------------------------------------------------------

@click.group()
@click.version_option(package_name="artifact")
def main():
    """Almost Hermitian geometry: verification suites and boundary expansions."""


def _config(config, suite, overrides):
    try:
        cfg = su.SuiteConfig.load(config) if config else su.SuiteConfig()
        for key, v in overrides.items():
            if v is not None:
                setattr(cfg, key, v)
        if suite:
            cfg.suites = tuple(suite)
        cfg.validate()
        su.workers()
    except su.ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    return cfg


@main.command()
@click.option("--suite", "suite", multiple=True, type=click.Choice(su.SUITES),
              help="Suite to run; repeat for several (default: all, or the config's list).")
@click.option("--config", type=click.Path(dir_okay=False), help="JSON config file.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report path (default stdout).")
@click.option("--n", type=int, default=None, help="Complex dimension.")
@click.option("--extent", type=int, default=None, help="Lattice points per axis.")
@click.option("--seed", type=int, default=None)
@click.option("--samples", type=int, default=None, help="Random samples per randomized check.")
@click.option("--fd-scheme", type=click.Choice(["order2", "order4", "order6", "spectral"]),
              default=None)
@click.option("--timings/--no-timings", default=None,
              help="Include wall-clock seconds per suite (omit for byte-identical reruns).")
def verify(suite, config, out, n, extent, seed, samples, fd_scheme, timings):
    """Run verification suites and write a JSON report; exit 1 if any check fails."""
    cfg = _config(config, suite, {"n": n, "extent": extent, "seed": seed, "samples": samples,
                                  "fd_scheme": fd_scheme, "timings": timings})
    report = su.run(cfg)
    emit(report, out)
    s = report["summary"]
    click.echo(f"{s['passed']}/{s['total']} checks passed", err=True)
    sys.exit(0 if s["pass"] else 1)


@main.command()
@click.option("--n", type=click.IntRange(min=2), default=2, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def indicial(n, out):
    """Indicial roots and radius of the model operator."""
    from . import ach_model as am
    d = am.indicial_data(n)
    doc = d.to_json()
    doc["scale"] = str(am.INDICIAL_SCALE)
    doc["constants"] = am.indicial_constants(n)
    emit(doc, out)


def _load_tw(path):
    from . import ach_model as am
    try:
        tw = am.TWBoundaryData.load(path)
        tw.check()
    except (OSError, ValueError, KeyError) as exc:
        raise click.UsageError(f"cannot use boundary data {path}: {exc}") from exc
    return tw


@main.command()
@click.option("--tw", "tw_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Boundary data JSON.")
@click.option("--max-degree", type=click.IntRange(min=2), default=4, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def model(tw_path, max_degree, out):
    """Torsion and gradient of the model pair attached to boundary data."""
    from . import ach_model as am
    from .series_expansion import SeriesTensor
    tw = _load_tw(tw_path)
    ms = am.model_structure(tw, max_degree=max_degree)
    be = ms.geometry.be
    S = ms.s_series()
    doc = {"n": tw.n, "max_degree": max_degree, "consistency": tw.consistency(),
           "einstein_constant": ms.einstein_constant,
           "torsion_table_residual": be.maxabs(ms.torsion.N - am.torsion_table(ms)),
           "T_max": be.maxabs(ms.torsion.T),
           "N": SeriesTensor(ms.torsion.N, be).to_json(),
           "S": SeriesTensor(S, be).to_json(),
           "S_lowest_degree": SeriesTensor(S, be).lowest_degree()}
    emit(doc, out)


@main.command()
@click.option("--tw", "tw_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--metric", "metric_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Metric series JSON (default: the model metric).")
@click.option("--split", type=click.Choice(["truncate", "carry"]), default="truncate",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def expand(tw_path, metric_path, split, out):
    """Solve for J order by order and verify the result independently."""
    import json
    from . import ach_model as am
    from . import series_expansion as se
    from .backends import SeriesBackend
    tw = _load_tw(tw_path)
    be = SeriesBackend(tw.n, 2 * tw.n)
    if metric_path:
        try:
            doc = json.loads(Path(metric_path).read_text(encoding="utf-8"))
            g = se.SeriesTensor.from_json(doc, be, (2 * tw.n, 2 * tw.n)).data
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise click.UsageError(f"cannot read metric series {metric_path}: {exc}") from exc
    else:
        g = am.model_metric(tw, be)
    t0 = time.perf_counter()
    state = se.solve_expansion(g, tw, split=split)
    elapsed = time.perf_counter() - t0
    check = se.verify_state(state, g, tw)
    orders = []
    for rec in state.orders:
        entry = {"l": rec["l"], "denominators": se.indicial_denominators(tw.n, rec["l"]),
                 "S_l": am._serialize(rec["S_l"]), "A": am._serialize(rec["A"])}
        if "B" in rec:
            entry["B"] = am._serialize(rec["B"])
        orders.append(entry)
    doc = {"n": tw.n, "split": split, "orders": orders,
           "J": se.SeriesTensor(state.J, be).to_json(), "verification": check,
           "seconds": elapsed}
    emit(doc, out)
    sys.exit(0 if check["S_vanishes"] else 1)


@main.command()
@click.option("--steps", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--rate", type=float, default=0.1, show_default=True)
@click.option("--n", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--extent", type=int, default=12, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--amplitude", type=float, default=0.1, show_default=True)
@click.option("--scheme", type=click.Choice(["order2", "order4", "order6", "spectral"]),
              default="spectral", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def flow(steps, rate, n, extent, seed, amplitude, scheme, out):
    """Gradient descent of the energy from a random perturbation of the flat structure."""
    from . import variational as va
    from .lattice import TorusLattice, random_pair
    if rate <= 0:
        raise click.BadParameter("rate must be positive", param_hint="--rate")
    try:
        lat = TorusLattice(n, extent)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--extent") from exc
    pair = random_pair(lat, np.random.default_rng(seed), amplitude=amplitude)
    traj = va.gradient_descend(pair, steps, rate, scheme=scheme)
    doc = traj.to_json()
    doc.update({"n": n, "extent": extent, "rate": rate, "seed": seed, "scheme": scheme})
    emit(doc, out)
    if traj.halted:
        click.echo(traj.diagnostic, err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
