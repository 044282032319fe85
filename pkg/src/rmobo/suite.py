"""Benchmark suite: many seeded runs, scoring against reference fronts, aggregation."""

from __future__ import annotations

import configparser
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .driver import (
    RunConfig,
    cached_reference_front,
    load_record,
    package_digest,
    run,
    score_run,
)

log = logging.getLogger(__name__)


def _parse_seeds(text: str) -> tuple[int, ...]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return tuple(seeds)


def _parse_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


@dataclass(frozen=True)
class SuiteConfig:
    """Grid of runs; by default the full protocol (5 problems, 30 seeds, both methods)."""

    problems: tuple = ("vlmop2", "sinlinforrester", "mdtp2", "mdtp3", "braningmm")
    methods: tuple = ("rmobo", "mobo_nonrobust")
    acquisitions: tuple = ("ehvi",)
    seeds: tuple = tuple(range(30))
    n_iter_ehvi: int = 60
    n_iter_qehvi: int = 30
    q_qehvi: int = 2
    out: str = "results/suite"
    reference_dir: str | None = None
    reference_seed: int = 0
    score: bool = True
    workers: int = 1
    n_samples: int = 2000
    gp_restarts: int = 10
    raw_per_dim: int = 1024
    starts: int = 8

    @classmethod
    def from_text(cls, text: str) -> "SuiteConfig":
        parser = configparser.ConfigParser()
        parser.read_string("[suite]\n" + text)
        sec = parser["suite"]
        kwargs = {}
        for key, raw in sec.items():
            if key in ("problems", "methods", "acquisitions"):
                kwargs[key] = _parse_list(raw)
            elif key == "seeds":
                kwargs[key] = _parse_seeds(raw)
            elif key in ("n_iter_ehvi", "n_iter_qehvi", "q_qehvi", "reference_seed", "workers", "n_samples",
                         "gp_restarts", "raw_per_dim", "starts"):
                kwargs[key] = int(raw)
            elif key == "score":
                kwargs[key] = sec.getboolean(key)
            elif key in ("out", "reference_dir"):
                kwargs[key] = raw
            else:
                raise ValueError(f"unknown suite key {key!r}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "SuiteConfig":
        return cls.from_text(Path(path).read_text())

    def run_configs(self) -> list[RunConfig]:
        configs = []
        for problem in self.problems:
            for method in self.methods:
                for acq in self.acquisitions:
                    q = self.q_qehvi if acq == "qehvi" else 1
                    n_iter = self.n_iter_qehvi if acq == "qehvi" else self.n_iter_ehvi
                    for seed in self.seeds:
                        out = Path(self.out) / problem / f"{method.replace('-', '_')}_{acq}" / f"seed{seed}"
                        configs.append(RunConfig(problem, method, acq, q, n_iter, seed=seed,
                                                 n_samples=self.n_samples, gp_restarts=self.gp_restarts,
                                                 raw_per_dim=self.raw_per_dim, starts=self.starts, out=str(out)))
        return configs

    @property
    def references(self) -> Path:
        return Path(self.reference_dir or Path(self.out) / "reference")


def _is_cached(cfg: RunConfig, digest: str, need_score: bool) -> bool:
    out = Path(cfg.out)
    manifest = out / "manifest.json"
    if not manifest.exists() or (need_score and not (out / "avd.csv").exists()):
        return False
    meta = json.loads(manifest.read_text())
    return meta.get("config_hash") == cfg.digest() and meta.get("package_digest") == digest and meta["completed"]


def _execute(args):
    cfg, reference_dir, reference_seed, score, digest = args
    if _is_cached(cfg, digest, score):
        return cfg.out
    record = run(cfg)
    if score:
        ref = cached_reference_front(cfg.problem, reference_dir, reference_seed)
        history = score_run(record, ref)
        np.savetxt(Path(cfg.out) / "avd.csv", history, fmt="%.17g", header="avd", comments="")
    return cfg.out


def run_suite(suite: SuiteConfig) -> Path:
    """Execute (or reuse cached) runs and write ``summary.csv`` with median and quartiles."""
    digest = package_digest()
    configs = suite.run_configs()
    if suite.score:
        for problem in suite.problems:
            cached_reference_front(problem, suite.references, suite.reference_seed)
    jobs = [(cfg, suite.references, suite.reference_seed, suite.score, digest) for cfg in configs]
    if suite.workers > 1:
        with ProcessPoolExecutor(suite.workers) as pool:
            list(pool.map(_execute, jobs))
    else:
        for job in jobs:
            _execute(job)
            log.info("finished %s", job[0].out)
    out = Path(suite.out)
    if suite.score:
        write_summary(suite, out / "summary.csv")
    return out


def load_histories(suite: SuiteConfig) -> dict:
    """``{(problem, method, acquisition): array (seeds, iterations)}`` of AVD histories."""
    groups: dict = {}
    for cfg in suite.run_configs():
        hist = np.atleast_1d(np.loadtxt(Path(cfg.out) / "avd.csv", skiprows=1))
        groups.setdefault((cfg.problem, cfg.method, cfg.acquisition), []).append(hist)
    return {k: np.array(v) for k, v in groups.items()}


def load_records(suite: SuiteConfig) -> dict:
    groups: dict = {}
    for cfg in suite.run_configs():
        groups.setdefault((cfg.problem, cfg.method, cfg.acquisition), []).append(load_record(cfg.out))
    return groups


def write_summary(suite: SuiteConfig, path) -> None:
    lines = ["problem,method,acquisition,iteration,median,q25,q75,n"]
    for (problem, method, acq), H in sorted(load_histories(suite).items()):
        med = np.median(H, axis=0)
        q25, q75 = np.percentile(H, [25, 75], axis=0)
        for t in range(H.shape[1]):
            lines.append(f"{problem},{method},{acq},{t},{med[t]:.17g},{q25[t]:.17g},{q75[t]:.17g},{H.shape[0]}")
    Path(path).write_text("\n".join(lines) + "\n")
