"""Command-line entry point: ``richcf {ingest,synth,run,sweep,report}``.

Settings resolve as built-in defaults, then ``--config`` (a ``key = value``
file or a previous run's ``manifest.json``), then explicit flags. Every
command writes ``manifest.json`` holding the resolved settings; passing it
back through ``--config`` reproduces the run's files byte for byte.

Randomness flows from the single ``seed``: synthetic instances spawn block,
channel and erasure streams from it, the evaluation protocol spawns split
and noise streams, and sweeps derive trial ``t`` at grid point ``i`` from
``SeedSequence(seed, spawn_key=(i, t))``.

The default output directory is ``$RICHCF_OUT`` or ``./richcf-out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import ALGORITHMS, CompletedMatrix
from .evaluation import (evaluate, phase_sweep, run_protocol, summarize_sweep,
                         write_sweep_csv)
from .ratings import MaskSplit, RatingError, load_ratings, quantize_binary
from .synth import SynthConfig, generate_instance, thresholds

OUT_ENV = "RICHCF_OUT"
_NOT_SET = object()

_SYNTH_FLAGS = {
    "U": ("U", int), "M": ("M", int), "K": ("K", int), "G": ("G", int),
    "p": ("p", float), "alpha": ("alpha", float), "beta": ("beta", float),
    "eta": ("eta", int), "rich-users": ("rich_per_user_cluster", int),
    "rich-items": ("rich_per_item_cluster", int), "mu-cap": ("mu_cap", float),
}
_SYNTH_DEFAULTS = {k: v for k, v in SynthConfig().to_dict().items() if k != "seed"}

# per command: setting -> default (None means "not given")
_DEFAULTS = {
    "ingest": {"data": None, "format": "movielens-dat", "levels": None,
               "index": "contiguous"},
    "synth": dict(_SYNTH_DEFAULTS, seed=0),
    "run": dict(_SYNTH_DEFAULTS, data=None, format="movielens-dat", levels=None,
                index="contiguous", algo="hcor", hide=0.7, noise=0.0, seed=0,
                quantize=None, threshold=3.5, cluster_size=None,
                item_cluster_size=None, T=None, T_items=None, k=None),
    "sweep": dict(_SYNTH_DEFAULTS, param="alpha", start=0.005, stop=0.1,
                  steps=10, trials=20, algo="ucr", seed=0),
    "report": {"run_dir": None},
}


class CliError(Exception):
    pass


def _add_synth_flags(p):
    g = p.add_argument_group("synthetic model")
    for flag, (dest, typ) in _SYNTH_FLAGS.items():
        g.add_argument(f"--{flag}", dest=dest, type=typ, default=_NOT_SET)


def _add_common(p):
    p.add_argument("--config", help="key = value file or a manifest.json")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./richcf-out)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")


def _parser():
    top = argparse.ArgumentParser(prog="richcf", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)
    S = _NOT_SET

    p = sub.add_parser("ingest", help="load a ratings file and write CSV triples")
    p.add_argument("--data", default=S)
    p.add_argument("--format", choices=["movielens-dat", "csv-triples"], default=S)
    p.add_argument("--levels", type=int, default=S)
    p.add_argument("--index", choices=["contiguous", "raw"], default=S)
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic instance")
    _add_synth_flags(p)
    p.add_argument("--seed", type=int, default=S)
    _add_common(p)

    p = sub.add_parser("run", help="complete a matrix and score it on hidden ratings")
    p.add_argument("--algo", choices=sorted(ALGORITHMS), default=S)
    p.add_argument("--data", default=S, help="ratings file; omit for a synthetic instance")
    p.add_argument("--format", choices=["movielens-dat", "csv-triples"], default=S)
    p.add_argument("--levels", type=int, default=S)
    p.add_argument("--index", choices=["contiguous", "raw"], default=S)
    p.add_argument("--hide", type=float, default=S, help="fraction of ratings hidden")
    p.add_argument("--noise", type=float, default=S, help="flip probability on training ratings")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--quantize", dest="quantize", action="store_true", default=S)
    p.add_argument("--no-quantize", dest="quantize", action="store_false")
    p.add_argument("--threshold", type=float, default=S)
    p.add_argument("--cluster-size", dest="cluster_size", type=int, default=S)
    p.add_argument("--item-cluster-size", dest="item_cluster_size", type=int, default=S)
    p.add_argument("--T", dest="T", type=int, default=S)
    p.add_argument("--T-items", dest="T_items", type=int, default=S)
    p.add_argument("--k", type=int, default=S)
    _add_synth_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="exact-recovery fraction over a parameter grid")
    p.add_argument("--param", default=S)
    p.add_argument("--from", dest="start", type=float, default=S)
    p.add_argument("--to", dest="stop", type=float, default=S)
    p.add_argument("--steps", type=int, default=S)
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--algo", choices=sorted(ALGORITHMS), default=S)
    p.add_argument("--seed", type=int, default=S)
    _add_synth_flags(p)
    _add_common(p)

    p = sub.add_parser("report", help="recompute metrics from a finished run directory")
    p.add_argument("--run-dir", dest="run_dir", default=S)
    _add_common(p)
    return top


_TYPES = {"levels": int, "cluster_size": int, "item_cluster_size": int, "T": int,
          "T_items": int, "k": int, "quantize": bool, "data": str, "run_dir": str}


def _coerce(key, value, default):
    if value is None or (isinstance(value, str) and value.lower() in ("", "none", "null")):
        return None
    typ = _TYPES.get(key) or type(default)
    if typ is bool:
        if isinstance(value, bool):
            return value
        if value.lower() not in ("true", "false"):
            raise CliError(f"setting '{key}' must be true or false, got {value!r}")
        return value.lower() == "true"
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise CliError(f"setting '{key}' must be {typ.__name__}, got {value!r}") from None


def _read_config(path, command):
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        if doc.get("command", command) != command:
            raise CliError(f"{path} is a manifest for '{doc['command']}', not '{command}'")
        return dict(doc.get("config", {}))
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def resolve(command, args):
    """Merge defaults, config file and flags into one settings dict."""
    settings = dict(_DEFAULTS[command])
    if args.config:
        for key, val in _read_config(args.config, command).items():
            if key not in settings:
                raise CliError(f"unknown setting '{key}' for '{command}' in {args.config}")
            settings[key] = _coerce(key, val, settings[key])
    for key in settings:
        val = getattr(args, key, _NOT_SET)
        if val is not _NOT_SET:
            settings[key] = val
    return settings


def _synth_config(s):
    return SynthConfig(**{k: s[k] for k in _SYNTH_DEFAULTS}, seed=s["seed"])


def _out_dir(args):
    d = Path(args.out or os.environ.get(OUT_ENV) or "richcf-out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path, doc):
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")


def _manifest(out, command, settings, files):
    _write_json(out / "manifest.json", {
        "command": command, "version": __version__, "seed": settings.get("seed"),
        "config": settings, "outputs": sorted(files)})


def _load_data(s):
    r = load_ratings(s["data"], format=s["format"], levels=s["levels"], index=s["index"])
    return r


# -- commands -------------------------------------------------------------

def cmd_ingest(s, out, jobs):
    if not s["data"]:
        raise CliError("ingest needs --data PATH")
    r = _load_data(s)
    r.to_csv(out / "ratings.csv")
    summary = {"users": r.n_users, "items": r.n_items, "ratings": r.nnz,
               "levels": r.levels}
    _write_json(out / "summary.json", summary)
    return ["ratings.csv", "summary.json"], f"{r.n_users} users, {r.n_items} items, {r.nnz} ratings"


def cmd_synth(s, out, jobs):
    cfg = _synth_config(s)
    inst = generate_instance(cfg)
    inst.export(out)
    th = thresholds(cfg).to_dict()
    th["achieved_mu"] = inst.truth.achieved_mu()
    th["observed"] = inst.observed.nnz
    _write_json(out / "thresholds.json", th)
    files = ["instance_observed.csv", "instance_truth.csv", "instance_clusters.csv",
             "thresholds.json"]
    return files, f"{inst.observed.nnz} observed entries of {cfg.U * cfg.M}"


_PARAM_FLAGS = {
    "ucr": ("cluster_size",), "icr": ("cluster_size",),
    "cor": ("cluster_size", "item_cluster_size"), "hucr": ("T",), "hicr": ("T",),
    "hcor": ("T", "T_items"), "paf": ("k",),
}
_PARAM_NAMES = {
    "cor": {"cluster_size": "user_cluster_size"},
    "hcor": {"T": "T_users"},
}


def _algo_params(s):
    algo = s["algo"]
    names = _PARAM_NAMES.get(algo, {})
    used = _PARAM_FLAGS[algo]
    for key in ("cluster_size", "item_cluster_size", "T", "T_items", "k"):
        if key not in used and s[key] is not None:
            raise CliError(f"--{key.replace('_', '-')} does not apply to --algo {algo}")
    return {names.get(k, k): s[k] for k in used}


def _run_data(s):
    """Ratings for ``run``/``report`` plus whether quantization applies."""
    if s["data"]:
        r = _load_data(s)
        quantize = True if s["quantize"] is None else s["quantize"]
    else:
        r = generate_instance(_synth_config(s)).observed
        quantize = False if s["quantize"] is None else s["quantize"]
    return r, quantize


def cmd_run(s, out, jobs):
    if not 0 <= s["hide"] <= 1:
        raise CliError(f"--hide must lie in [0, 1], got {s['hide']}")
    if not 0 <= s["noise"] <= 1:
        raise CliError(f"--noise must lie in [0, 1], got {s['noise']}")
    params = _algo_params(s)
    r, quantize = _run_data(s)
    report, completed, split = run_protocol(
        r, s["algo"], params, hide_fraction=s["hide"], noise=s["noise"],
        seed=s["seed"], quantize=quantize, threshold=s["threshold"], n_jobs=jobs)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    completed.save(out / "predictions.npz")
    test = split.test_of(quantize_binary(r, s["threshold"]) if quantize else r)
    completed.to_csv(out / "predictions.csv", test.users, test.items)
    split.to_csv(r, out / "mask.csv")
    files = ["report.json", "report.csv", "predictions.npz", "predictions.csv", "mask.csv"]
    return files, f"overall error {report.overall_error:.4f}"


def cmd_sweep(s, out, jobs):
    if s["steps"] < 1:
        raise CliError("--steps must be at least 1")
    base = _synth_config(s)
    if s["param"] not in _SYNTH_DEFAULTS:
        raise CliError(f"--param must be one of {', '.join(_SYNTH_DEFAULTS)}")
    like = _SYNTH_DEFAULTS[s["param"]]
    values = np.linspace(s["start"], s["stop"], s["steps"]).tolist()
    if isinstance(like, int):
        values = [int(round(v)) for v in values]
    rows = phase_sweep(base, s["param"], values, s["trials"], algo=s["algo"],
                       seed=s["seed"], n_jobs=jobs)
    write_sweep_csv(rows, out / "sweep.csv")
    with open(out / "sweep_summary.csv", "w") as fh:
        fh.write("value,recovery_fraction,trials\n")
        for v, f, n in summarize_sweep(rows):
            fh.write(f"{v!r},{f!r},{n}\n")
    return ["sweep.csv", "sweep_summary.csv"], f"{len(rows)} trials"


def cmd_report(s, out, jobs):
    if not s["run_dir"]:
        raise CliError("report needs --run-dir DIR (a finished 'run' output)")
    run_dir = Path(s["run_dir"])
    man_path = run_dir / "manifest.json"
    if not man_path.exists():
        raise CliError(f"no manifest.json in {run_dir}")
    man = json.loads(man_path.read_text())
    if man.get("command") != "run":
        raise CliError(f"{man_path} is not a 'run' manifest")
    rs = man["config"]
    r, quantize = _run_data(rs)
    if quantize:
        r = quantize_binary(r, rs["threshold"])
    split = MaskSplit.from_csv(r, run_dir / "mask.csv", rs["hide"], rs["seed"])
    completed = CompletedMatrix.load(run_dir / "predictions.npz")
    stored = json.loads((run_dir / "report.json").read_text())
    report = evaluate(completed, split.test_of(r), split.train_of(r),
                      protocol=stored.get("protocol"))
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    same = report.to_dict() == stored
    return ["report.json", "report.csv"], ("matches stored report" if same
                                           else "DIFFERS from stored report")


_COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth, "run": cmd_run,
             "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise CliError("--jobs must be at least 1")
        settings = resolve(args.command, args)
        out = _out_dir(args)
        files, summary = _COMMANDS[args.command](settings, out, args.jobs)
        _manifest(out, args.command, settings, files)
    except (CliError, RatingError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"richcf {args.command}: error: {msg}", file=sys.stderr)
        return 2
    print(f"{args.command}: {summary}; wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
