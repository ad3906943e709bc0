"""Command-line driver: ``drchance solve|eval|compare|oracle``.

Exit codes: 0 success, 1 bad input (config, flags, result file), 2 solver
failure.  Every command writes its outputs atomically and records them in
a ``<output>.manifest.json`` next to the main artifact.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .oracle import OracleError, compare, feasible_set_oracle
from .problem import VARIANTS, ConfigError, ProblemSpec, load_spec, spec_from_json
from .relaxation import RelaxationError, build
from .sdpiface import SolveError, SolveResult, SolveSettings, extract_inner, solve

log = logging.getLogger("drchance")

TABLE_EPSILONS = (0.5, 0.25, 0.125, 0.0625, 0.03125)


class UsageError(ValueError):
    """Bad flags or inputs; maps to exit code 1."""


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects stage timings and emitted files for the manifest."""

    def __init__(self, command: str, input_hash: str):
        self.command = command
        self.input_hash = input_hash
        self.timings: dict[str, float] = {}
        self.files: list[Path] = []
        self._t = time.perf_counter()

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = round(now - self._t, 6)
        self._t = now

    def emit(self, path, text: str) -> Path:
        path = Path(path)
        write_atomic(path, text)
        self.files.append(path)
        return path

    def finish(self, main: Path) -> Path:
        manifest = {
            "command": self.command,
            "input_hash": self.input_hash,
            "artifacts": [{"path": str(p), "sha256": _sha256(p)} for p in self.files],
            "timings": self.timings,
            "tool_version": tool_version(),
        }
        out = Path(str(main) + ".manifest.json")
        write_atomic(out, json.dumps(manifest, indent=2) + "\n")
        return out


# ---------------------------------------------------------------------------
def _epsilon(value) -> float:
    eps = float(value)
    if not 0.0 < eps < 1.0:
        raise UsageError(f"epsilon: must lie in (0, 1), got {eps}")
    return eps


def _run_spec(path: str, degree: int | None, variant: str | None) -> ProblemSpec:
    spec = load_spec(path)
    changes = {}
    if degree is not None:
        changes["degree"] = degree
    if variant is not None:
        changes["variant"] = variant
    return spec.with_(**changes) if changes else spec


def _grid_points(spec: str | None, x_box) -> np.ndarray:
    """'201' or '41,41' (steps over the X box) or 'lo:hi:n[,lo:hi:n]' per axis."""
    if x_box is None:
        raise UsageError("grid: the result has no X box; give explicit lo:hi:n axes")
    n = len(x_box)
    parts = (spec or "201").split(",")
    if len(parts) == 1 and n > 1:
        parts = parts * n
    if len(parts) != n:
        raise UsageError(f"grid: expected {n} axes, got {len(parts)}")
    axes = []
    try:
        for part, (lo, hi) in zip(parts, x_box):
            bits = part.split(":")
            if len(bits) == 3:
                lo, hi, k = float(bits[0]), float(bits[1]), int(bits[2])
            elif len(bits) == 1:
                k = int(bits[0])
            else:
                raise ValueError(part)
            if k < 1:
                raise ValueError(part)
            axes.append(np.linspace(lo, hi, k) if k > 1 else np.array([0.5 * (lo + hi)]))
    except ValueError:
        raise UsageError(f"grid: cannot parse {spec!r}") from None
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _default_out(base: str, suffix: str) -> Path:
    return Path(Path(base).stem + suffix)


# ---------------------------------------------------------------------------
def cmd_solve(args) -> int:
    spec = _run_spec(args.config, args.degree, args.variant)
    run = Run("solve", spec.canonical_hash())
    relax = build(spec)
    run.stage("build")
    st = SolveSettings.from_env(backend=args.backend, verbose=args.verbose, max_iter=args.max_iter)
    res = solve(relax, st, problem_hash=spec.canonical_hash())
    run.stage("solve")
    out = Path(args.out) if args.out else _default_out(args.config, f".d{spec.degree}.{spec.variant}.result.json")
    payload = res.to_json()
    payload["problem"] = spec.to_json()
    payload["relaxation"] = relax.stats()
    run.emit(out, json.dumps(payload, indent=1) + "\n")
    run.finish(out)
    print(f"{res.status} rho_d={res.rho_d:.9g} degree={spec.degree} variant={spec.variant} -> {out}")
    return 0 if res.ok else 2


def _load_result(path: str) -> tuple[SolveResult, dict]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SolveError(f"malformed result file: {exc}") from None
    if not isinstance(data, dict) or "w" not in data:
        raise SolveError("malformed result file: no certificate polynomial 'w'")
    return SolveResult.from_json(data), data


def cmd_eval(args) -> int:
    res, _ = _load_result(args.result)
    eps = _epsilon(args.epsilon if args.epsilon is not None else res.epsilon)
    run = Run("eval", hashlib.sha256(Path(args.result).read_bytes()).hexdigest())
    inner = extract_inner(res, eps)
    pts = _grid_points(args.grid, res.x_box)
    w = inner.evaluate(pts)
    member = inner.member(pts)
    run.stage("evaluate")
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    n = pts.shape[1]
    wr.writerow([f"x{i + 1}" for i in range(n)] + ["w", f"member({eps:g})"])
    for p, v, m in zip(pts, w, member):
        wr.writerow([f"{c:.12g}" for c in p] + [f"{v:.12g}", int(m)])
    out = Path(args.out) if args.out else _default_out(args.result, ".eval.csv")
    run.emit(out, buf.getvalue())
    if n == 1 and res.x_box is not None:
        ivs = inner.intervals()
        ibuf = io.StringIO()
        iw = csv.writer(ibuf, lineterminator="\n")
        iw.writerow(["lo", "hi"])
        for lo, hi in ivs:
            iw.writerow([f"{lo:.9g}", f"{hi:.9g}"])
        run.emit(out.with_name(out.stem + ".intervals.csv"), ibuf.getvalue())
        print("intervals: " + (", ".join(f"[{lo:.4f}, {hi:.4f}]" for lo, hi in ivs) or "empty"))
    run.stage("intervals")
    run.finish(out)
    print(f"{int(member.sum())}/{len(member)} grid points in the inner set -> {out}")
    return 0


def _oracle_kwargs(args) -> dict:
    return dict(X_steps=args.x_steps, A_steps=args.a_steps, samples=args.samples,
                seed=args.seed, method=args.method)


def cmd_compare(args) -> int:
    res, data = _load_result(args.result)
    if args.config:
        spec = load_spec(args.config).with_(degree=res.degree, variant=res.variant)
    elif "problem" in data:
        spec = spec_from_json(data["problem"])
    else:
        raise UsageError("config: required (the result file does not embed its problem)")
    if res.problem_hash and spec.canonical_hash() != res.problem_hash:
        raise UsageError("problem_hash: result and config describe different problems")
    run = Run("compare", spec.canonical_hash())
    epsilons = TABLE_EPSILONS if args.table else (
        (_epsilon(args.epsilon),) if args.epsilon is not None else (spec.epsilon,))
    rows = []
    grid = None
    for eps in epsilons:
        orc = feasible_set_oracle(spec, epsilon=eps, grid=grid, **_oracle_kwargs(args))
        grid = orc.grid
        rep = compare(extract_inner(res, eps), orc)
        row = {"epsilon": eps, **rep.to_json(), "method": orc.method}
        rows.append(row)
        print(f"eps={eps:g} coverage={rep.coverage:.4f} violations={rep.violations} "
              f"oracle_feasible={rep.n_feasible} inner={rep.n_member}")
    run.stage("compare")
    body = rows[0] if len(rows) == 1 else {"degree": res.degree, "rows": rows}
    out = Path(args.out) if args.out else _default_out(args.result, ".compare.json")
    run.emit(out, json.dumps(body, indent=2) + "\n")
    run.finish(out)
    return 0


def cmd_oracle(args) -> int:
    spec = load_spec(args.config)
    eps = _epsilon(args.epsilon) if args.epsilon is not None else spec.epsilon
    run = Run("oracle", spec.canonical_hash())
    orc = feasible_set_oracle(spec, epsilon=eps, **_oracle_kwargs(args))
    run.stage("oracle")
    out = Path(args.out) if args.out else _default_out(args.config, ".oracle.csv")
    run.emit(out, orc.to_csv())
    run.finish(out)
    n_feas = int(orc.feasible.sum())
    msg = f"{n_feas}/{len(orc.feasible)} grid points feasible ({orc.method})"
    if orc.grid.shape[1] == 1:
        msg += "; intervals: " + (", ".join(f"[{a:.4f}, {b:.4f}]" for a, b in orc.feasible_intervals()) or "empty")
    print(msg + f" -> {out}")
    return 0


# ---------------------------------------------------------------------------
def _add_oracle_flags(p) -> None:
    p.add_argument("--x-steps", type=int, default=None, help="grid points per X axis")
    p.add_argument("--a-steps", type=int, default=None, help="parameter grid size")
    p.add_argument("--samples", type=int, default=None, help="Monte Carlo draws per parameter")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--method", choices=("auto", "closed_form", "grid_mc"), default="auto")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drchance", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="build and solve a relaxation")
    s.add_argument("config")
    s.add_argument("--degree", type=int, default=None,
                   help="moment degree 2d (relaxation order is degree // 2)")
    s.add_argument("--variant", choices=VARIANTS, default=None)
    s.add_argument("--backend", choices=("hankel", "clarabel"), default="hankel")
    s.add_argument("--max-iter", type=int, default=SolveSettings.max_iter, help="interior-point iteration cap")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="evaluate w_d on a grid")
    e.add_argument("result")
    e.add_argument("--grid", default=None, help="'201', '41,41' or 'lo:hi:n,...'")
    e.add_argument("--epsilon", type=float, default=None)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="coverage and violations against the oracle")
    c.add_argument("result")
    c.add_argument("--config", default=None)
    c.add_argument("--epsilon", type=float, default=None)
    c.add_argument("--table", action="store_true", help=f"sweep eps over {TABLE_EPSILONS}")
    c.add_argument("--out", default=None)
    _add_oracle_flags(c)
    c.set_defaults(func=cmd_compare)

    o = sub.add_parser("oracle", help="worst-case violation probability on a grid")
    o.add_argument("config")
    o.add_argument("--epsilon", type=float, default=None)
    o.add_argument("--out", default=None)
    _add_oracle_flags(o)
    o.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, RelaxationError, SolveError, OracleError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
