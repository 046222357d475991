"""Command-line interface: config loading, validation, run orchestration, manifests.

Exit codes: 0 success, 2 configuration problems (all reported, not just the
first), 3 backend or network failures, 4 file I/O failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .decomp import SIGMA_BASE_WIDTH, Decomposition, decomposition_from_config
from .oracle import OraclePredictor, mixtures_from_config
from .remote import RemoteClient, RemoteEndpoint, RemoteError
from .sampler import (
    Condition,
    PredictorError,
    SamplerConfig,
    sample_factorized,
    sample_inverse,
)
from .schedule import Schedule
from .sweep import ScorerError, blur_sweep
from .tensor import load_image, resample, save_image

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_IO = 4


class ValidationError(Exception):
    """Configuration is unusable; carries every detected problem."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _load_config(path) -> tuple[dict, str | None]:
    if path is None:
        return {}, None
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError([f"config {path} is not valid JSON: {exc}"]) from exc
    if not isinstance(cfg, dict):
        raise ValidationError([f"config {path} must hold a JSON object"])
    return cfg, os.path.dirname(os.path.abspath(path))


def _merge_flags(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        cfg.setdefault("sampler", {})
        cfg["sampler"] = {**cfg["sampler"], "steps": args.steps}
    if getattr(args, "backend", None) is not None:
        cfg["backend"] = args.backend
    if getattr(args, "endpoint", None) is not None:
        cfg["endpoint"] = args.endpoint
    return cfg


class Run:
    """A validated, fully built sampling run."""

    def __init__(self, cfg: dict, base_dir: str | None):
        problems: list[str] = []
        self.cfg = cfg
        self.base_dir = base_dir

        backend = cfg.get("backend", "oracle")
        if backend not in ("oracle", "remote"):
            problems.append(f"backend must be 'oracle' or 'remote', got {backend!r}")
        self.backend = backend

        sampler_cfg = cfg.get("sampler", {})
        kind = sampler_cfg.get("kind", "ddim")
        steps = int(sampler_cfg.get("steps", 100))
        seed = int(cfg.get("seed", 0))
        resolution = cfg.get("resolution")
        channels = cfg.get("channels")

        # remote runs may inherit resolution and schedule from the server
        self.schedule: Schedule | None = None
        self.server_meta: dict = {}
        if backend == "remote":
            self._endpoint_url = cfg.get("endpoint")
        else:
            sched_cfg = cfg.get("schedule", {})
            try:
                self.schedule = Schedule.linear_beta(
                    T=int(sched_cfg.get("T", 1000)),
                    beta_start=float(sched_cfg.get("beta_start", 1e-4)),
                    beta_end=float(sched_cfg.get("beta_end", 0.02)),
                )
            except ValueError as exc:
                problems.append(f"schedule: {exc}")

        decomp_cfg = cfg.get("decomposition")
        if not isinstance(decomp_cfg, dict):
            problems.append("missing 'decomposition' object in config")
            decomp_cfg = None

        conds_cfg = cfg.get("conditions")
        if not isinstance(conds_cfg, list) or not conds_cfg:
            problems.append("missing non-empty 'conditions' list in config")
            conds_cfg = []

        self.conditions: list[Condition] = []
        payload_key = "mixture" if backend == "oracle" else "prompt"
        for i, entry in enumerate(conds_cfg):
            if not isinstance(entry, dict) or payload_key not in entry:
                problems.append(
                    f"condition {i} must be an object with a {payload_key!r} field "
                    f"(backend {backend})"
                )
                continue
            guidance = float(entry.get("guidance", 1.0))
            if guidance < 0:
                problems.append(f"condition {i}: guidance must be >= 0, got {guidance}")
                continue
            self.conditions.append(
                Condition(
                    payload=str(entry[payload_key]),
                    guidance=guidance,
                    label=str(entry.get("label", "")),
                )
            )

        if backend == "oracle" and resolution is None:
            resolution = [64, 64]
        if backend == "oracle" and channels is None:
            channels = 3
        self._resolution = resolution
        self._channels = channels
        self._decomp_cfg = decomp_cfg
        self._steps = steps
        self._kind = kind
        self._seed = seed
        self._problems = problems

    def connect(self):
        """Contact the server (remote backend) and finish building the run.

        Local validation problems raise before any network traffic.
        """
        problems = self._problems
        if problems:
            raise ValidationError(problems)

        if self.backend == "remote":
            endpoint = _make_endpoint(self._endpoint_url, self.cfg)
            self.client = RemoteClient(endpoint)
            self.schedule, self.server_meta = self.client.fetch_info()
            c, h, w = self.server_meta["resolution"]
            if self._resolution is not None and tuple(self._resolution) != (h, w):
                problems.append(
                    f"config resolution {self._resolution} does not match server {h}x{w}"
                )
            if self._channels is not None and int(self._channels) != c:
                problems.append(f"config channels {self._channels} does not match server {c}")
            self._resolution = [h, w]
            self._channels = c
            self.predictor = self.client
        else:
            mix_cfg = self.cfg.get("mixtures")
            if isinstance(mix_cfg, str):
                path = os.path.join(self.base_dir, mix_cfg) if self.base_dir else mix_cfg
                try:
                    with open(path, "r", encoding="utf-8") as fh:
                        mix_cfg = json.load(fh)
                except OSError as exc:
                    problems.append(f"cannot read mixtures file {path}: {exc}")
                    mix_cfg = None
            if mix_cfg is None:
                problems.append("oracle backend needs a 'mixtures' object or file path")
            else:
                shape = (int(self._channels), int(self._resolution[0]), int(self._resolution[1]))
                try:
                    mixtures = mixtures_from_config(mix_cfg, shape=shape, base_dir=self.base_dir)
                    self.predictor = OraclePredictor(mixtures)
                except ValueError as exc:
                    problems.append(f"mixtures: {exc}")
        if problems:
            raise ValidationError(problems)

        h, w = (int(v) for v in self._resolution)
        sigma_scale = w / float(self.cfg.get("sigma_base_width", SIGMA_BASE_WIDTH))
        try:
            self.decomposition: Decomposition = decomposition_from_config(
                self._decomp_cfg, sigma_scale=sigma_scale, base_dir=self.base_dir
            )
        except ValueError as exc:
            problems.append(f"decomposition: {exc}")
            raise ValidationError(problems)

        if len(self.conditions) != self.decomposition.n:
            problems.append(
                f"got {len(self.conditions)} conditions for {self.decomposition.n} "
                f"components {self.decomposition.labels}"
            )
        try:
            self.sampler = SamplerConfig(
                steps=self._steps,
                kind=self._kind,
                seed=self._seed,
                resolution=(h, w),
                channels=int(self._channels),
            )
            if self._steps > self.schedule.T:
                problems.append(
                    f"steps {self._steps} exceeds schedule length T={self.schedule.T}"
                )
        except ValueError as exc:
            problems.append(f"sampler: {exc}")
        if problems:
            raise ValidationError(problems)
        return self


def _make_endpoint(url, cfg) -> RemoteEndpoint:
    kwargs = {}
    if "timeout" in cfg:
        kwargs["timeout"] = float(cfg["timeout"])
    if "retries" in cfg:
        kwargs["retries"] = int(cfg["retries"])
    try:
        return RemoteEndpoint.from_env(url, **kwargs)
    except ValueError as exc:
        raise ValidationError([str(exc)]) from exc


def _display_tensor(comp, values: np.ndarray) -> np.ndarray:
    if comp.display != "minmax":
        return values
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo) * 2.0 - 1.0


def _write_outputs(run: Run, x0: np.ndarray, out_dir: str, manifest: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    image_path = os.path.join(out_dir, "output.png")
    save_image(x0, image_path)
    components = {}
    for comp, values in zip(run.decomposition.components, run.decomposition.apply(x0)):
        name = f"component_{comp.label}.png"
        save_image(_display_tensor(comp, values), os.path.join(out_dir, name))
        components[comp.label] = name
    manifest["outputs"] = {"image": "output.png", "components": components}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _base_manifest(run: Run, command: str, step_seconds) -> dict:
    return {
        "command": command,
        "config": run.cfg,
        "seed": run.sampler.seed,
        "sampler": {"kind": run.sampler.kind, "steps": run.sampler.steps},
        "resolution": list(run.sampler.shape),
        "decomposition": run.decomposition.labels,
        "schedule_digest": run.schedule.digest(),
        "server": run.server_meta,
        "per_step_seconds": step_seconds,
    }


def cmd_generate(args) -> int:
    cfg, base_dir = _load_config(args.config)
    run = Run(_merge_flags(cfg, args), base_dir).connect()
    times: list[float] = []
    x0 = sample_factorized(
        run.predictor,
        run.decomposition,
        run.conditions,
        run.sampler,
        run.schedule,
        on_step=lambda t, s: times.append(round(s, 6)),
    )
    _write_outputs(run, x0, args.out, _base_manifest(run, "generate", times))
    print(f"wrote {os.path.join(args.out, 'output.png')}")
    return EXIT_OK


def cmd_inverse(args) -> int:
    cfg, base_dir = _load_config(args.config)
    run = Run(_merge_flags(cfg, args), base_dir).connect()
    if args.fixed not in run.decomposition.labels:
        raise ValidationError(
            [f"unknown component {args.fixed!r}; valid labels: {run.decomposition.labels}"]
        )
    fixed = run.decomposition.index_of(args.fixed)
    ref = load_image(args.ref)
    c, h, w = run.sampler.shape
    if ref.shape[0] != c:
        if c == 3 and ref.shape[0] == 1:
            ref = np.repeat(ref, 3, axis=0)
        else:
            ref = ref.mean(axis=0, keepdims=True)
    if ref.shape[1:] != (h, w):
        ref = resample(ref, h, w)
    times: list[float] = []
    x0 = sample_inverse(
        run.predictor,
        run.decomposition,
        run.conditions,
        ref,
        fixed,
        run.sampler,
        run.schedule,
        on_step=lambda t, s: times.append(round(s, 6)),
    )
    manifest = _base_manifest(run, "inverse", times)
    residual = float(
        np.max(
            np.abs(
                run.decomposition.components[fixed](x0)
                - run.decomposition.components[fixed](ref)
            )
        )
    )
    manifest["fixed"] = args.fixed
    manifest["reference"] = os.path.abspath(args.ref)
    manifest["fixed_residual"] = residual
    _write_outputs(run, x0, args.out, manifest)
    print(f"wrote {os.path.join(args.out, 'output.png')} (fixed-component residual {residual:.2e})")
    return EXIT_OK


def cmd_sweep_sigma(args) -> int:
    cfg, base_dir = _load_config(args.config)
    cfg = _merge_flags(cfg, args)
    try:
        sigmas = [float(s) for s in args.sigmas.split(",") if s.strip()]
    except ValueError as exc:
        raise ValidationError([f"cannot parse --sigmas {args.sigmas!r}: {exc}"]) from exc
    problems = []
    if not sigmas:
        problems.append("--sigmas must list at least one value")
    if any(s <= 0 for s in sigmas):
        problems.append(f"sigma values must be positive, got {sigmas}")
    if cfg.get("decomposition", {}).get("kind") != "hybrid":
        problems.append("sweep-sigma needs a 'hybrid' decomposition (it sweeps its sigma)")
    if problems:
        raise ValidationError(problems)
    os.makedirs(args.out, exist_ok=True)
    panels = []
    entries = []
    run = None
    for sigma in sigmas:
        cfg_i = dict(cfg)
        cfg_i["decomposition"] = {**cfg["decomposition"], "sigma": sigma}
        run = Run(cfg_i, base_dir).connect()
        x0 = sample_factorized(
            run.predictor, run.decomposition, run.conditions, run.sampler, run.schedule
        )
        name = f"sigma_{sigma:g}.png"
        save_image(x0, os.path.join(args.out, name))
        panels.append(np.clip(x0, -1.0, 1.0))
        entries.append({"sigma": sigma, "image": name})
    grid = np.concatenate(panels, axis=2)
    save_image(grid, os.path.join(args.out, "grid.png"))
    manifest = _base_manifest(run, "sweep-sigma", None)
    manifest["sweep"] = entries
    manifest["outputs"] = {"grid": "grid.png"}
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(sigmas)} images and grid.png to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, _ = _load_config(args.config)
    cfg = _merge_flags(cfg, args)
    if not args.prompt:
        raise ValidationError(["at least one --prompt is required"])
    image = load_image(args.image)
    scorer = RemoteClient(_make_endpoint(cfg.get("endpoint"), cfg))
    os.makedirs(args.out, exist_ok=True)
    failures = []
    for i, prompt in enumerate(args.prompt):
        try:
            report = blur_sweep(image, prompt, scorer)
        except (ScorerError, RemoteError) as exc:
            failures.append(f"prompt {prompt!r}: {exc}")
            print(f"error scoring prompt {prompt!r}: {exc}", file=sys.stderr)
            continue
        stem = os.path.join(args.out, f"sweep_{i}")
        with open(stem + ".json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")
        with open(stem + ".csv", "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(
            f"prompt {prompt!r}: max score {report.max_score:.4f} "
            f"at factor {report.argmax_factor:g}"
        )
    if failures:
        raise RemoteError(f"{len(failures)} prompt(s) failed: " + "; ".join(failures))
    return EXIT_OK


def cmd_info(args) -> int:
    cfg, _ = _load_config(args.config)
    cfg = _merge_flags(cfg, args)
    client = RemoteClient(_make_endpoint(cfg.get("endpoint"), cfg))
    schedule, meta = client.fetch_info()
    print(
        json.dumps(
            {
                "model": meta["model"],
                "resolution": list(meta["resolution"]),
                "T": schedule.T,
                "alpha_bar_final": schedule.alpha_bar(schedule.T),
                "schedule_digest": schedule.digest(),
            },
            indent=2,
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisefactor",
        description="Sample images whose decomposition components follow different prompts.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="JSON run config; flags override its fields")
        p.add_argument("--seed", type=int, help="RNG seed override")
        p.add_argument("--steps", type=int, help="sampler steps override")
        p.add_argument("--backend", choices=["oracle", "remote"], help="backend override")
        p.add_argument("--endpoint", help="remote server URL (or FD_ENDPOINT)")
        if out:
            p.add_argument("--out", default="out", help="output directory (default: out)")

    p = sub.add_parser("generate", help="sample an image from the configured decomposition")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inverse", help="fix one component to a reference image and sample the rest")
    common(p)
    p.add_argument("--ref", required=True, help="reference PNG")
    p.add_argument("--fixed", required=True, help="label of the component to pin")
    p.set_defaults(func=cmd_inverse)

    p = sub.add_parser("sweep-sigma", help="one generation per sigma with a shared seed")
    common(p)
    p.add_argument("--sigmas", required=True, help="comma-separated sigma values")
    p.set_defaults(func=cmd_sweep_sigma)

    p = sub.add_parser("eval", help="blur-sweep alignment scores for an image")
    common(p)
    p.add_argument("--image", required=True, help="PNG to score")
    p.add_argument("--prompt", action="append", default=[], help="prompt (repeatable)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("info", help="print the remote server's model metadata")
    common(p, out=False)
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print("configuration problems:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RemoteError, PredictorError, ScorerError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
