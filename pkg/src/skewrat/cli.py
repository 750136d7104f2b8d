"""Command-line interface.

Subcommands follow the pipeline: ``expand`` (digits), ``blocks``, ``visits``,
``genfun``, ``rat``, ``experiment`` and ``verify``.  With ``--out DIR`` the
primary artifact is written to ``DIR`` next to ``manifest.json``; otherwise it
goes to stdout.  Exit codes: 0 ok, 1 invariant failure, 2 usage, 3 resource cap.

Randomness: the master ``--seed`` feeds ``numpy.random.SeedSequence``; Monte
Carlo shard ``j`` uses the ``j``-th spawned child, so artifacts are identical
for identical configurations.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PrecisionExhausted, SkewRatError
from .mcf import DigitSequence, expand

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    command: str
    kind: str | None = None
    digits: dict | None = None
    beta: str | None = None
    count: int | None = None
    levels: int | None = None
    nmax: int | None = None
    trials: int | None = None
    seed: int | None = None
    p: int | None = None
    fmt: str = "csv"
    caps: dict = field(default_factory=dict)
    coupling: str = "independent"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


class UsageError(SkewRatError):
    exit_code = EXIT_USAGE


# --------------------------------------------------------------------------
# helpers


def _digits(cfg: ExperimentConfig) -> DigitSequence:
    if cfg.digits is not None:
        return DigitSequence.from_json(cfg.digits)
    if cfg.beta is not None:
        return expand(cfg.beta, cfg.count or 40)
    raise UsageError("--digits or --beta is required")


def _need(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


# --------------------------------------------------------------------------
# commands; each returns {filename: text} plus a status code


def cmd_expand(cfg: ExperimentConfig):
    count = _need(cfg.count, "--count")
    status = EXIT_OK
    note = ""
    try:
        ds = expand(_need(cfg.beta, "--beta"), count)
        digits = ds.head(count)
    except PrecisionExhausted as exc:
        digits = exc.digits
        note = str(exc)
        status = EXIT_RESOURCE
    if cfg.fmt == "json":
        text = _json({"digits": digits, "certified": len(digits), "note": note})
    else:
        text = "k,digit\n" + "".join(f"{k},{d}\n" for k, d in enumerate(digits, 1))
    return {"digits." + cfg.fmt: text}, status


def cmd_blocks(cfg: ExperimentConfig):
    from .cocycle import DEFAULT_BLOCK_CAP, orbit_block, sign_blocks, substitution_blocks

    ds = _digits(cfg)
    k = _need(cfg.levels, "--levels")
    cap = cfg.caps.get("block", DEFAULT_BLOCK_CAP)
    kind = cfg.kind or "substitution"
    if kind == "substitution":
        blocks = substitution_blocks(ds, k, cap)
    elif kind == "sign":
        blocks = sign_blocks(ds, k, cap)[:2]
    elif kind == "orbit":
        blocks = orbit_block(ds, k, cap)
    else:
        raise UsageError(f"unknown block kind {kind!r}")
    if cfg.fmt == "json":
        text = _json({f"flavor{i}": b.to_rle() for i, b in enumerate(blocks)})
    else:
        text = "flavor,rle\n" + "".join(f"{i},{b.to_rle()}\n" for i, b in enumerate(blocks))
    return {f"blocks_{kind}.{cfg.fmt}": text}, EXIT_OK


def cmd_visits(cfg: ExperimentConfig):
    from .visits import VisitFrame, frames

    ds = _digits(cfg)
    K = _need(cfg.levels, "--levels")
    start = None
    if cfg.extra.get("resume"):
        start = VisitFrame.from_json(Path(cfg.extra["resume"]).read_text())
    fr = frames(ds, K, start)
    last = fr[-1]
    rows = ["level,flavor,kind,T,value,count\n"]
    for f in fr:
        for i, U, V in ((0, f.U0, f.V0), (1, f.U1, f.V1)):
            rows += [f"{f.k},{i},raw,,{v},{c}\n" for v, c in U.counts.items()]
            rows += [f"{f.k},{i},simplified,{f.state.T},{v},{c}\n" for v, c in V.counts.items()]
    out = {"visits.csv": "".join(rows), "checkpoint.json": last.to_json() + "\n"}
    return out, EXIT_OK


def cmd_genfun(cfg: ExperimentConfig):
    from .genfun import phi_sequence

    ds = _digits(cfg)
    K = _need(cfg.levels, "--levels")
    phis = phi_sequence(ds, K)
    rows = ["level,flavor,exponent,coefficient\n"]
    for k, pair in enumerate(phis):
        for i, P in enumerate(pair):
            rows += [f"{k},{i},{e},{c}\n" for e, c in P.coeffs.items()]
    return {"genfun.csv": "".join(rows)}, EXIT_OK


def cmd_rat(cfg: ExperimentConfig):
    from .rat import alpha_rat_sequence, dump_corpus, periodicity_group, predicates, spec_rat_sequence

    ds = _digits(cfg)
    K = _need(cfg.levels, "--levels")
    if cfg.kind == "classify":
        rows = ["k,coefficient,parity,irreducible,mean_contractive,balanced,adapted,partially_adapted,strongly_adapted,kappa,gamma_kind\n"]
        for k, F in enumerate(spec_rat_sequence(ds, K), 1):
            pr = predicates(F)
            rows.append(
                f"{k},{F.coefficient},{F.parity},{int(pr.irreducible)},{int(pr.mean_contractive)},"
                f"{int(pr.balanced)},{int(pr.adapted)},{int(pr.partially_adapted)},"
                f"{int(pr.strongly_adapted)},{pr.kappa},{periodicity_group(F).kind}\n"
            )
        return {"classification.csv": "".join(rows)}, EXIT_OK
    return {"rats.json": dump_corpus(alpha_rat_sequence(ds, K)) + "\n"}, EXIT_OK


def cmd_experiment(cfg: ExperimentConfig):
    from . import analysis

    kind = _need(cfg.kind, "experiment kind")
    if kind == "railways":
        ds = _digits(cfg)
        nmax = _need(cfg.nmax, "--nmax")
        rep = analysis.railways_report(ds, analysis.log_spaced(min(100, nmax), nmax), cfg.caps.get("psi", analysis.PSI_CAP))
    elif kind == "wrllt":
        ds = _digits(cfg)
        rep = analysis.wrllt_report(ds, _need(cfg.levels, "--levels"), cfg.p or 2, cfg.extra.get("nu"))
    elif kind == "clt":
        ds = _digits(cfg)
        K = _need(cfg.levels, "--levels")
        rep = analysis.clt_report(ds, 0, len(ds.tail or (1,)), list(range(10, K + 1, 10)) or [K])
    elif kind == "proof-chain":
        rep = analysis.proof_chain_report(_digits(cfg), _need(cfg.levels, "--levels"))
    elif kind == "simulate":
        return _simulate(cfg)
    else:
        raise UsageError(f"unknown experiment {kind!r}")
    name = f"{kind}.{cfg.fmt}"
    return {name: rep.to_json() + "\n" if cfg.fmt == "json" else rep.to_csv()}, EXIT_OK


def _simulate(cfg: ExperimentConfig):
    from .rat import alpha_rat_sequence, exact_arw_law, load_corpus, simulate

    seed = _need(cfg.seed, "--seed")
    trials = _need(cfg.trials, "--trials")
    if cfg.extra.get("rats"):
        rats = load_corpus(Path(cfg.extra["rats"]).read_text())
        steps = cfg.levels or len(rats)
        seq = rats[0] if len(rats) == 1 else rats
    else:
        steps = _need(cfg.levels, "--levels")
        seq = alpha_rat_sequence(_digits(cfg), steps)
    emp = simulate(seq, steps, trials, seed)
    rows = ["coordinate,value,count\n"]
    d = len(next(iter(emp.counts)))
    for k in range(d):
        rows += [f"{k},{v},{c}\n" for v, c in emp.marginal(k).items()]
    out = {"simulation.csv": "".join(rows)}
    if cfg.extra.get("exact") and not isinstance(seq, list):
        seq = [seq] * steps
    if cfg.extra.get("exact"):
        law = exact_arw_law(seq, steps, cfg.caps.get("state", 10**7))
        rows = ["coordinate,value,probability\n"]
        for k in range(d):
            rows += [f"{k},{v},{p}\n" for v, p in law.marginal(k).items()]
        out["exact.csv"] = "".join(rows)
    return out, EXIT_OK


def cmd_verify(cfg: ExperimentConfig):
    from . import checks

    suite = _need(cfg.kind, "suite")
    if suite not in checks.SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(sorted(checks.SUITES))}")
    ns = argparse.Namespace(
        digits=DigitSequence.from_json(cfg.digits) if cfg.digits else None,
        max_len=cfg.extra.get("max_len") or 10**5,
        levels=cfg.levels,
        instances=cfg.extra.get("instances"),
        seed=cfg.seed if cfg.seed is not None else 7,
        nmax=cfg.nmax,
        trials=cfg.trials,
    )
    results = checks.SUITES[suite](ns)
    lines = [r.line() for r in results]
    payload = {"suite": suite, "results": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]}
    status = EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT
    text = _json(payload) if cfg.fmt == "json" else "\n".join(lines) + "\n"
    return {f"verify_{suite}.{cfg.fmt}": text}, status


COMMANDS = {
    "expand": cmd_expand,
    "blocks": cmd_blocks,
    "visits": cmd_visits,
    "genfun": cmd_genfun,
    "rat": cmd_rat,
    "experiment": cmd_experiment,
    "verify": cmd_verify,
}


def run(cfg: ExperimentConfig, out: str | None = None, stream=None) -> int:
    """Execute ``cfg``; write artifacts and a manifest to ``out`` (or ``stream``)."""
    stream = stream or sys.stdout
    t0 = time.perf_counter()
    artifacts, status = COMMANDS[cfg.command](cfg)
    wall = time.perf_counter() - t0
    if out is None:
        for text in artifacts.values():
            stream.write(text)
        return status
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, text in sorted(artifacts.items()):
        (path / name).write_text(text)
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
    manifest = {
        "config": json.loads(cfg.to_json()),
        "config_sha256": cfg.digest(),
        "artifacts": digests,
        "status": status,
        "versions": {"skewrat": __version__, "python": platform.python_version(), "numpy": np.__version__},
        "wall_time_s": round(wall, 3),
    }
    (path / "manifest.json").write_text(_json(manifest))
    return status


# --------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser, digits: bool = True) -> None:
    if digits:
        p.add_argument("--digits", type=json.loads, help='digit sequence, e.g. \'{"prefix":[5],"tail":[4]}\'')
        p.add_argument("--beta", help="beta = 2 alpha as an expression or decimal")
        p.add_argument("--count", type=int, help="digits to expand from --beta")
    p.add_argument("--levels", type=int)
    p.add_argument("--nmax", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--p", type=int, choices=(1, 2))
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    p.add_argument("--cap-block", type=int)
    p.add_argument("--cap-state", type=int)
    p.add_argument("--cap-psi", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skewrat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="minus continued fraction digits of beta")
    p.add_argument("--beta", required=True)
    p.add_argument("--digits", dest="count", type=int, required=True, help="number of digits")
    _add_common(p, digits=False)

    p = sub.add_parser("blocks", help="substitution, sign or orbit blocks")
    p.add_argument("kind", nargs="?", default="substitution", choices=("substitution", "sign", "orbit"))
    _add_common(p)

    p = sub.add_parser("visits", help="visit distributions level by level")
    p.add_argument("--resume", help="checkpoint JSON to resume from")
    _add_common(p)

    p = sub.add_parser("genfun", help="temporal-law generating functions")
    _add_common(p)

    p = sub.add_parser("rat", help="alpha-RAT corpus or spec-RAT classification")
    p.add_argument("kind", nargs="?", default="sequence", choices=("sequence", "classify"))
    _add_common(p)

    p = sub.add_parser("experiment", help="railways, wrllt, clt, proof-chain or simulate")
    p.add_argument("kind", choices=("railways", "wrllt", "clt", "proof-chain", "simulate"))
    p.add_argument("--rats", help="RAT corpus JSON for simulate")
    p.add_argument("--exact", action="store_true", help="also write the exact law (simulate)")
    _add_common(p)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("kind", metavar="suite")
    p.add_argument("--max-len", type=int)
    p.add_argument("--instances", type=int)
    _add_common(p)
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    caps = {k: v for k, v in (("block", ns.cap_block), ("state", ns.cap_state), ("psi", ns.cap_psi)) if v is not None}
    extra = {}
    for name in ("resume", "rats", "exact", "max_len", "instances"):
        v = getattr(ns, name, None)
        if v:
            extra[name] = v
    kind = getattr(ns, "kind", None)
    return ExperimentConfig(
        command=ns.command,
        kind=kind,
        digits=getattr(ns, "digits", None),
        beta=getattr(ns, "beta", None),
        count=getattr(ns, "count", None),
        levels=ns.levels,
        nmax=ns.nmax,
        trials=ns.trials,
        seed=ns.seed,
        p=ns.p,
        fmt=ns.fmt,
        caps=caps,
        extra=extra,
    )


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    cfg = config_from_args(ns)
    try:
        return run(cfg, ns.out)
    except SkewRatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
