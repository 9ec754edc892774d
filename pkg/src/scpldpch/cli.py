"""Command-line front end.

Every run writes a JSON manifest holding the fully resolved configuration
and an argument vector that replays the run (``scpldpch replay MANIFEST``).

Exit status: 0 on success, 1 on invalid input (bad flags, files or
matrices), 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .codec import (CodecError, build_code, code_from_lift, encode_stream, pack_frames, pipeline_decode,
                    read_llrs, unpack_frames, verify_window)
from .ga import GaConfig, evolve
from .gf2 import SingularMatrix
from .hadamard import LLR_CLIP
from .lifting import LiftError, LiftedSplit, load_lift, save_lift
from .pexit import MiSampleConfig, LayeredPexit, StartTooLow, threshold_search
from .protograph import ProtographError, load_split, rate_block, rate_terminated, save_split, validate_split
from .sim import StopRule, run_ber

SEED_ENV = "SCPLDPCH_SEED"


class UsageError(Exception):
    """Invalid flags, files or matrices (exit status 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load(path, W=None):
    split, r = load_split(path)
    bad = validate_split(split)
    if bad is not None:
        raise UsageError(f"{path}: parts do not sum to the base at entry {bad}")
    if W is not None and split.W != W:
        raise UsageError(f"{path}: split has W={split.W}, --W is {W}")
    return split, r


def _code(args):
    split, r = _load(args.split)
    if args.lift:
        stacked = load_lift(args.lift)
        want = np.vstack([p.entries for p in split.parts])
        if stacked.base_rows != want.shape[0] or not np.array_equal(stacked.collapse(), want):
            raise UsageError(f"{args.lift} does not lift {args.split}")
        try:
            return code_from_lift(LiftedSplit(split, stacked), r)
        except SingularMatrix as exc:
            raise UsageError(f"{args.lift}: {exc}") from None
    return build_code(split, r, args.z1, args.z2, seed=args.seed)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- subcommands --------------------------------------------------------------------

def cmd_lift(args) -> dict:
    split, r = _load(args.split)
    code = build_code(split, r, args.z1, args.z2, seed=args.seed)
    save_lift(args.out, code.lifted.stacked)
    print(f"lifted {split.m}x{split.n} x{split.W + 1} parts with z={args.z1}*{args.z2}: "
          f"M={code.M} N={code.N} K={code.K} (lift seed {code.seed})")
    return {"outputs": [args.out], "lift_seed": code.seed}


def cmd_encode(args) -> dict:
    code = _code(args)
    rng = np.random.default_rng(args.seed)
    info = rng.integers(0, 2, size=(args.frames, code.K), dtype=np.uint8)
    frames = encode_stream(code, info)
    if args.verify:
        W = code.W
        hist = [np.zeros(code.N, dtype=np.uint8)] * W
        for t, (P, D) in enumerate(frames, 1):
            hist = (hist + [P])[-(W + 1):]
            bad = verify_window(code, hist, D)
            if bad is not None:
                raise RuntimeError(f"frame {t}: H-CN {bad} is not a Hadamard codeword")
    Path(args.out).write_bytes(pack_frames(frames))
    Path(args.info_out).write_bytes(np.packbits(info, axis=1).tobytes())
    print(f"encoded {args.frames} frames of {code.K} info bits ({code.frame_bits} coded bits each)")
    return {"outputs": [args.out, args.info_out]}


def cmd_decode(args) -> dict:
    code = _code(args)
    if args.llr:
        frames = read_llrs(code, args.llr)
    else:
        frames = [((1.0 - 2.0 * P) * LLR_CLIP, (1.0 - 2.0 * D) * LLR_CLIP)
                  for P, D in unpack_frames(code, Path(args.bits).read_bytes())]
    dec = np.zeros((len(frames), code.K), dtype=np.uint8)
    for t, phat in pipeline_decode(code, frames, args.I):
        dec[t - 1] = phat[code.info_cols]
    Path(args.out).write_bytes(np.packbits(dec, axis=1).tobytes())
    out = {"outputs": [args.out], "frames": len(frames)}
    if args.reference:
        ref = np.frombuffer(Path(args.reference).read_bytes(), dtype=np.uint8)
        nbytes = (code.K + 7) // 8
        if ref.size != len(frames) * nbytes:
            raise UsageError(f"{args.reference} does not hold {len(frames)} frames of {code.K} bits")
        ref = np.unpackbits(ref.reshape(len(frames), nbytes), axis=1)[:, :code.K]
        errs = int((ref != dec).sum())
        ferr = int((ref != dec).any(axis=1).sum())
        out.update(bit_errors=errs, frame_errors=ferr)
        print(f"decoded {len(frames)} frames: {errs} bit errors, {ferr} frame errors")
    else:
        print(f"decoded {len(frames)} frames")
    return out


def format_table(rows, n_max: int) -> str:
    """Iteration counts per Eb/N0 laid out as columns."""
    rows = sorted(rows, key=lambda x: -x[0])
    head = ["Eb/N0 (dB)"] + [f"{db:.2f}" for db, _, _ in rows]
    body = ["N_it"] + [str(n) if ok else f">{n_max}" for _, ok, n in rows]
    width = max(len(s) for s in head + body)
    return "\n".join(" ".join(s.rjust(width) for s in line) for line in (head, body))


def cmd_pexit(args) -> dict:
    split, r = _load(args.split)
    r = args.r if args.r is not None else r
    cfg = MiSampleConfig(w=args.w, seed=args.mi_seed, resample=not args.fixed_pool)
    t0 = time.perf_counter()
    if args.ebn0:
        pex = LayeredPexit(split, args.L, r=r, cfg=cfg)
        ladder = [pex.run(db, args.n_max) for db in args.ebn0]
        ok = [p.ebn0_db for p in ladder if p.converged]
        threshold = min(ok) if ok else None
    else:
        try:
            res = threshold_search(split, split.W, args.L, args.n_max, args.start_db, args.step_db, cfg, r,
                                   coarse_step_db=args.coarse_step_db)
        except StartTooLow as exc:
            raise UsageError(str(exc)) from None
        ladder, threshold = res.ladder, res.threshold_db
    rows = [(p.ebn0_db, p.converged, p.n_it) for p in ladder]
    rate = rate_terminated(split.base, r, split.W, args.L)
    print(f"layered PEXIT: L={args.L} W={split.W} r={r} rate={float(rate):.6f} N_max={args.n_max} w={args.w}"
          f"{' (fixed pool)' if args.fixed_pool else ''}")
    print(format_table(rows, args.n_max))
    print("threshold: " + (f"{threshold:.2f} dB" if threshold is not None else "none on this grid"))
    out = {"threshold_db": threshold, "ladder": [p.record() for p in ladder],
           "seconds": round(time.perf_counter() - t0, 3)}
    if args.out:
        Path(args.out).write_text(json.dumps({k: v for k, v in out.items() if k != "seconds"}, indent=2))
        out["outputs"] = [args.out]
    return out


def cmd_ga(args) -> dict:
    split, r = _load(args.base)
    if args.config:
        try:
            base_cfg = GaConfig.from_file(args.config)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"{args.config}: {exc}") from None
        vals = {f: getattr(base_cfg, f) for f in base_cfg.__dataclass_fields__}
    else:
        vals = {}
    for key in ("K", "N_g", "p_c", "p_m", "W", "L", "n_max", "start_db", "step_db", "max_levels",
                "max_generations", "patience", "mi_samples", "mi_seed", "jobs", "seed", "r"):
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    if args.fixed_pool:
        vals["mi_resample"] = False
    vals.setdefault("W", split.W)
    vals.setdefault("r", r)
    try:
        cfg = GaConfig(**vals)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    initial = [split] if args.include_input and split.W == cfg.W else None

    def log(g):
        print(f"gen {g.generation:3d}  best {g.best:5d}  mean {g.mean:8.2f}  evals {g.evaluations}", flush=True)

    res = evolve(cfg, split.base, initial=initial, checkpoint=args.checkpoint, resume=args.resume, log=log)
    save_split(args.out, res.best.split, cfg.r)
    print(f"best fitness {res.best.fitness}; split written to {args.out}")
    outputs = [args.out] + ([args.checkpoint] if args.checkpoint else [])
    return {"outputs": outputs, "ga_config": {f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
            "best_fitness": res.best.fitness, "history": [vars(h) for h in res.history]}


def cmd_ber(args) -> dict:
    code = _code(args)
    split = code.lifted.split
    stop = StopRule(args.max_errors, args.max_bits)
    recs = run_ber(code, args.grid, I=args.I, stop=stop, seed=args.seed, code_id=args.code_id,
                   frames_per_segment=args.frames_per_segment, csv_path=args.csv, json_path=args.json)
    rate = float(rate_block(split.base, code.hcode.r))
    print(f"code {args.code_id}: K={code.K} rate={rate:.5f} I={args.I}")
    print(f"{'Eb/N0':>7} {'bits':>10} {'errors':>7} {'BER':>10}")
    for rec in recs:
        ber = f"<{1 / rec.bits:.2e}" if rec.upper_bound_only else f"{rec.ber:.3e}"
        print(f"{rec.ebn0_db:7.2f} {rec.bits:10d} {rec.bit_errors:7d} {ber:>10}")
    return {"outputs": [p for p in (args.csv, args.json) if p], "records": [r.row() for r in recs]}


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scpldpch", description="Spatially coupled LDPC-Hadamard code tools.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, manifest=True):
        sp.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV} or 0)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (GA fitness only)")
        if manifest:
            sp.add_argument("--manifest", default=None, help="manifest path (default derived from the output)")

    def code_args(sp):
        sp.add_argument("--split", required=True, help="split file (m n W r header)")
        sp.add_argument("--lift", default=None, help="lift file from `scpldpch lift`")
        sp.add_argument("--z1", type=int, default=4)
        sp.add_argument("--z2", type=int, default=16)

    sp = sub.add_parser("lift", help="lift a split into a quasi-cyclic code")
    sp.add_argument("--split", required=True)
    sp.add_argument("--z1", type=int, default=4)
    sp.add_argument("--z2", type=int, default=16)
    sp.add_argument("-o", "--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_lift)

    sp = sub.add_parser("encode", help="encode random frames")
    code_args(sp)
    sp.add_argument("--frames", type=int, default=100)
    sp.add_argument("--verify", action="store_true", help="check every window after encoding")
    sp.add_argument("-o", "--out", required=True, help="packed coded bits")
    sp.add_argument("--info-out", required=True, help="packed info bits")
    common(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="pipeline-decode a bitstream or LLR file")
    code_args(sp)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--bits", help="packed coded bits (noiseless loopback)")
    src.add_argument("--llr", help="float32 LLR file")
    sp.add_argument("--I", type=int, default=10, help="pipeline processors")
    sp.add_argument("--reference", default=None, help="packed info bits to count errors against")
    sp.add_argument("-o", "--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("pexit", help="layered PEXIT threshold of a terminated code")
    sp.add_argument("--split", required=True)
    sp.add_argument("--L", type=int, default=10)
    sp.add_argument("--r", type=int, default=None)
    sp.add_argument("--n-max", dest="n_max", type=int, default=150)
    sp.add_argument("--start-db", type=float, default=None)
    sp.add_argument("--step-db", type=float, default=0.05)
    sp.add_argument("--coarse-step-db", type=float, default=None)
    sp.add_argument("--ebn0", type=_floats, default=None, help="evaluate these points instead of searching")
    sp.add_argument("--w", type=int, default=100_000, help="Monte-Carlo samples per MI estimate")
    sp.add_argument("--mi-seed", type=int, default=0)
    sp.add_argument("--fixed-pool", action="store_true",
                    help="reuse one Monte-Carlo pool for every check node instead of fresh draws")
    sp.add_argument("-o", "--out", default=None, help="JSON results")
    common(sp)
    sp.set_defaults(func=cmd_pexit)

    sp = sub.add_parser("ga", help="genetic search over splits of a base matrix")
    sp.add_argument("--base", required=True, help="split file; its base is searched")
    sp.add_argument("--config", default=None, help="key = value config file")
    sp.add_argument("--K", type=int)
    sp.add_argument("--N-g", dest="N_g", type=int)
    sp.add_argument("--p-c", dest="p_c", type=float)
    sp.add_argument("--p-m", dest="p_m", type=float)
    sp.add_argument("--W", type=int)
    sp.add_argument("--L", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--n-max", dest="n_max", type=int)
    sp.add_argument("--start-db", dest="start_db", type=float)
    sp.add_argument("--step-db", dest="step_db", type=float)
    sp.add_argument("--max-levels", dest="max_levels", type=int)
    sp.add_argument("--generations", dest="max_generations", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--w", dest="mi_samples", type=int)
    sp.add_argument("--mi-seed", dest="mi_seed", type=int)
    sp.add_argument("--fixed-pool", action="store_true",
                    help="reuse one Monte-Carlo pool for every check node instead of fresh draws")
    sp.add_argument("--include-input", action="store_true", help="seed the population with the input split")
    sp.add_argument("--checkpoint", default=None)
    sp.add_argument("--resume", default=None)
    sp.add_argument("-o", "--out", required=True, help="best split")
    common(sp)
    sp.set_defaults(func=cmd_ga)

    sp = sub.add_parser("ber", help="Monte-Carlo BER of the pipeline decoder")
    code_args(sp)
    sp.add_argument("--grid", type=_floats, required=True, help="Eb/N0 points in dB, comma separated")
    sp.add_argument("--I", type=int, default=10)
    sp.add_argument("--max-errors", type=int, default=100)
    sp.add_argument("--max-bits", type=int, default=10**7)
    sp.add_argument("--frames-per-segment", type=int, default=100)
    sp.add_argument("--code-id", default="code")
    sp.add_argument("--csv", default=None)
    sp.add_argument("--json", default=None)
    common(sp)
    sp.set_defaults(func=cmd_ber)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    sp.set_defaults(func=None)
    return p


def _resolved_argv(parser, args) -> list[str]:
    """An explicit argument vector reproducing ``args``."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    argv = [args.command]
    for act in sub._actions:
        if not act.option_strings or act.dest in ("help", "manifest"):
            continue
        v = getattr(args, act.dest, None)
        flag = act.option_strings[-1]
        if isinstance(act, argparse._StoreTrueAction):
            if v:
                argv.append(flag)
        elif v is not None:
            argv += [flag, ",".join(repr(x) for x in v) if isinstance(v, list) else str(v)]
    return argv


def _manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = getattr(args, "out", None)
    return Path(f"{out}.manifest.json") if out else Path(f"{args.command}.manifest.json")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        if args.command == "replay":
            man = json.loads(Path(args.manifest).read_text())
            args = parser.parse_args(man["argv"])
        if args.seed is None:
            args.seed = _default_seed()
        if args.jobs < 1:
            raise UsageError("--jobs must be positive")
        argv_full = _resolved_argv(parser, args)
        t0 = time.perf_counter()
        out = args.func(args)
        manifest = {
            "tool": "scpldpch",
            "version": __version__,
            "command": args.command,
            "config": {k: v for k, v in vars(args).items() if k not in ("func",)},
            "argv": argv_full,
            "result": {k: v for k, v in out.items() if k != "outputs"},
            "outputs": {p: _sha256(p) for p in out.get("outputs", [])},
            "seconds": round(time.perf_counter() - t0, 3),
        }
        _manifest_path(args).write_text(json.dumps(manifest, indent=2, default=str) + "\n")
        return 0
    except (UsageError, ProtographError, LiftError, CodecError, FileNotFoundError, IsADirectoryError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
