"""Command line pipeline.

Every subcommand reads one JSON config (``--config``), lets flags override
it, writes its outputs to the output directory and finishes with a
``manifest_<command>.json`` recording input hashes, the effective config and
package versions.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import platform
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy
import shapely

from . import __version__
from . import io as nio
from .criticism import QuantileGrid, balanced_accuracy_distribution, grouped_histogram
from .events import CountMatrix, count_by_severity, snap_events
from .exposure import ExposureVector, segment_exposure
from .inference import (
    MODEL_IDS,
    ChainConfig,
    FixedEffectsDesign,
    HyperpriorConfig,
    build_model,
    dic,
    model_spec,
    rate_quantile_classes,
    run_mcmc,
    scale_covariates,
    waic,
)
from .maup import compare_rates, reaggregate
from .network import (
    build_lattice,
    contract_network,
    distance_threshold_adjacency,
    drop_islands,
    higher_order_adjacency,
)
from .synth import SynthConfig, TrueParameters, default_truth, simulate_data, simulate_lattice

logger = logging.getLogger("netcar")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "seed": 0,
    "output_dir": "out",
    "inputs": {},
    "network": {"tolerance": 1e-3, "adjacency": "order1", "threshold": None, "drop_islands": True,
                "matrix_max_n": 1000},
    "exposure": {"flow_floor": 1.0},
    "snap": {"max_distance": 10.0, "levels": 2},
    "model": {"ids": ["F"], "numeric": None, "categorical": {}, "hyperpriors": {}},
    "chains": {"iterations": 20000, "burn_in": 5000, "thin": 5, "rho_steps": 4},
    "criticism": {"model": None, "N": 5000, "levels": ["mean", 0.025, 0.25, 0.5, 0.75, 0.975],
                  "thresholds": [1], "bins": 30},
    "maup": {"model": "F", "merge_across_class": False, "n_classes": 10},
    "synth": {"n": 200, "topology": "grid-dual", "model": "F", "length_range": [50.0, 400.0],
              "exposure_range": [5.0, 50.0], "n_covariates": 1, "truth": None},
}


class ValidationError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return cfg


def effective_config(file_cfg: dict, flags: dict) -> dict:
    """Defaults, then the config file, then command line flags."""
    cfg = _merge(DEFAULTS, file_cfg)
    for dotted, v in flags.items():
        if v is None:
            continue
        node = cfg
        *head, last = dotted.split(".")
        for h in head:
            node = node.setdefault(h, {})
        node[last] = v
    ids = cfg["model"]["ids"]
    if isinstance(ids, str):
        cfg["model"]["ids"] = ids = [s.strip() for s in ids.split(",") if s.strip()]
    bad = [m for m in ids if m not in MODEL_IDS]
    if bad:
        raise ValidationError(f"unknown model ids {bad}; expected a subset of {list(MODEL_IDS)}")
    return cfg


class Run:
    """Bookkeeping for one subcommand: inputs read and outputs written."""

    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["output_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: dict = {}
        self.outputs: list = []

    def input(self, name: str, required: bool = True):
        p = self.cfg["inputs"].get(name)
        if p is None:
            if required:
                raise ValidationError(f"missing input {name!r} (set inputs.{name} in the config or --{name.replace('_', '-')})")
            return None
        path = Path(p)
        if not path.exists():
            raise ValidationError(f"input {name!r} not found: {path}")
        if path.is_file():
            self.inputs[name] = {"path": str(path), "sha256": nio.sha256(path)}
        return path

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(name)
        return p

    def manifest(self):
        doc = {
            "command": self.command,
            "config": self.cfg,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "versions": {"netcar": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "shapely": shapely.__version__, "python": platform.python_version()},
        }
        (self.out / f"manifest_{self.command.replace('-', '_')}.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True, default=str), encoding="utf-8")


# ----- shared loading -------------------------------------------------------
def _apply_variant(lattice, net: dict):
    variant = net.get("adjacency", "order1")
    if variant == "order1":
        return lattice
    if variant in ("order2", "order3"):
        W = higher_order_adjacency(lattice.adjacency, int(variant[-1]))
    elif variant == "distance":
        if net.get("threshold") is None:
            raise ValidationError("network.threshold is required for the distance adjacency")
        W = distance_threshold_adjacency(lattice, float(net["threshold"]))
    else:
        raise ValidationError(f"unknown adjacency variant {variant!r}")
    return replace(lattice, adjacency=W)


def load_lattice(run: Run, with_report: bool = False):
    path = run.input("lattice", required=False) or run.input("segments")
    net = run.cfg["network"]
    lattice = build_lattice(nio.read_segments(path), float(net["tolerance"]))
    report = None
    if net.get("drop_islands", True):
        lattice, report = drop_islands(lattice)
    lattice = _apply_variant(lattice, net)
    return (lattice, report) if with_report else lattice


def load_data(run: Run, lattice):
    counts = nio.read_counts(run.input("counts"))
    ev = nio.read_exposure(run.input("exposure"))
    ids = lattice.ids
    ci = nio.align(ids, counts.segment_ids, "counts")
    ei = nio.align(ids, ev.segment_ids, "exposure")
    counts = CountMatrix(counts.Y[ci], ids)
    ev = ExposureVector(ev.E[ei], ev.length_km[ei], ev.zone_flow[ei], ids)
    raw = {}
    cpath = run.input("covariates", required=False)
    if cpath is not None:
        cids, cols = nio.read_covariates(cpath)
        ki = nio.align(ids, cids, "covariates", cpath)
        raw = {c: [v[k] for k in ki] for c, v in cols.items()}
    return counts, ev, raw


def design_from(raw: dict, model_cfg: dict, J: int, n: int) -> FixedEffectsDesign:
    cat = dict(model_cfg.get("categorical") or {})
    numeric = model_cfg.get("numeric")
    names = [c for c in raw if (numeric is None and c not in cat) or (numeric is not None and c in numeric)]
    names += [c for c in cat if c in raw]
    missing = [c for c in list(cat) + list(numeric or []) if c not in raw]
    if missing:
        raise ValidationError(f"covariates not found: {missing}")
    if not names:
        return FixedEffectsDesign.empty(n, J)
    chosen = {}
    for c in names:
        if c in cat:
            chosen[c] = raw[c]
        else:
            try:
                chosen[c] = [float(v) for v in raw[c]]
            except ValueError:
                raise ValidationError(f"covariate {c!r} is not numeric; declare it under model.categorical") from None
    return scale_covariates(chosen, cat, J=J)


def hyperpriors_from(cfg: dict) -> HyperpriorConfig:
    hp = dict(cfg["model"].get("hyperpriors") or {})
    for k in ("theta_gamma", "omega_gamma"):
        if k in hp:
            hp[k] = tuple(hp[k])
    if "wishart_scale" in hp and hp["wishart_scale"] is not None:
        hp["wishart_scale"] = tuple(map(tuple, hp["wishart_scale"]))
    return HyperpriorConfig(**hp)


def chain_config(cfg: dict) -> ChainConfig:
    c = cfg["chains"]
    return ChainConfig(int(c["iterations"]), int(c["burn_in"]), int(c["thin"]), int(cfg["seed"]),
                       int(c.get("rho_steps", 4)))


def fit_one(model_id, lattice, counts, ev, design, cfg):
    spec = model_spec(model_id, J=counts.J, hyperpriors=hyperpriors_from(cfg))
    model = build_model(lattice, counts, ev, design, spec)
    chains = run_mcmc(model, chain_config(cfg))
    return model, chains


# ----- subcommands ----------------------------------------------------------
def cmd_build_network(cfg: dict) -> Run:
    run = Run("build-network", cfg)
    lattice, report = load_lattice(run, with_report=True)
    nio.write_segments(run.path("lattice.geojson"), lattice.segments)
    nio.write_adjacency(run.path("adjacency.csv"), lattice)
    if lattice.n <= int(cfg["network"]["matrix_max_n"]):
        nio.write_adjacency_matrix(run.path("adjacency_matrix.csv"), lattice)
    rep = {"removed_ids": list(report.removed_ids) if report else [],
           "removed_length": report.removed_length if report else 0.0,
           "n_segments": lattice.n, "n_pairs": int(len(lattice.adjacency.pairs))}
    run.path("removal_report.json").write_text(json.dumps(rep, indent=2), encoding="utf-8")
    return run


def cmd_exposure(cfg: dict) -> Run:
    run = Run("exposure", cfg)
    lattice = load_lattice(run)
    zones = nio.read_zones(run.input("zones"))
    flows = nio.read_flows(run.input("flows"))
    ev, assignment = segment_exposure(lattice.segments, zones, flows, float(cfg["exposure"]["flow_floor"]))
    nio.write_exposure(run.path("exposure.csv"), ev, assignment)
    return run


def cmd_snap(cfg: dict) -> Run:
    run = Run("snap", cfg)
    lattice = load_lattice(run)
    events = nio.read_events(run.input("events"))
    a, d = snap_events(events, lattice, float(cfg["snap"]["max_distance"]))
    counts = count_by_severity(a, lattice.ids, int(cfg["snap"]["levels"]))
    nio.write_counts(run.path("counts.csv"), counts)
    nio.write_table(run.path("assignments.csv"), "netcar/assignments", ("event_id", "segment_id", "distance", "severity"),
                    ((x.event_id, x.segment_id, x.distance, x.severity) for x in a))
    nio.write_table(run.path("discarded.csv"), "netcar/discarded", ("event_id", "nearest_segment_id", "distance"),
                    ((x.event_id, x.nearest_segment_id, x.distance) for x in d))
    return run


def _summary_doc(model_id, chains, crit):
    s = chains.summary()
    fixed = {k: v for k, v in s.items() if k.startswith("beta[")}
    hyper = {k: v for k, v in s.items() if not k.startswith("beta[")}
    diag = {k: v for k, v in chains.diagnostics.items() if not k.startswith("seconds")}
    return {"model": model_id, "n_kept": chains.n_kept, "seed": chains.seed,
            "fixed_effects": fixed, "hyperparameters": hyper, "criteria": crit, "diagnostics": diag}


def _write_rates_geojson(path, lattice, chains):
    lam = chains.lam.mean(axis=0)
    cls = rate_quantile_classes(chains)
    feats = []
    for k, seg in enumerate(lattice.segments):
        for j in range(lam.shape[1]):
            feats.append({"type": "Feature",
                          "properties": {"segment_id": int(seg.id), "severity": j + 1,
                                         "post_mean": float(lam[k, j]), "class": int(cls[k, j])},
                          "geometry": {"type": "LineString", "coordinates": [list(p) for p in seg.polyline]}})
    doc = {"type": "FeatureCollection", "schema": "netcar/rates", "version": nio.SCHEMA_VERSION, "features": feats}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def _criteria(chains, model):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = dic(chains, model, min_draws=1, return_parts=True)
        w = waic(chains, model, min_draws=1, return_parts=True)
    for c in caught:
        logger.warning("%s", c.message)
    return {**d, **w}


def _write_comparison(run, rows):
    rows = sorted(rows, key=lambda r: (r["DIC"], r["model"]))
    nio.write_table(run.path("comparison.csv"), "netcar/comparison", ("model", "DIC", "p_D", "WAIC", "p_WAIC"),
                    ((r["model"], r["DIC"], r["p_D"], r["WAIC"], r["p_WAIC"]) for r in rows))
    return rows


def cmd_fit(cfg: dict) -> Run:
    run = Run("fit", cfg)
    lattice = load_lattice(run)
    counts, ev, raw = load_data(run, lattice)
    design = design_from(raw, cfg["model"], counts.J, lattice.n)
    rows = []
    for mid in cfg["model"]["ids"]:
        model, chains = fit_one(mid, lattice, counts, ev, design, cfg)
        crit = _criteria(chains, model)
        rows.append({"model": mid, **crit})
        sd = chains.scalar_draws()
        names = list(sd)
        nio.write_table(run.path(f"chains_{mid}.csv"), "netcar/chains", ["draw"] + names,
                        ([s] + [sd[nm][s] for nm in names] for s in range(chains.n_kept)), model=mid, seed=chains.seed)
        np.savez_compressed(run.path(f"latent_{mid}.npz"), eta=chains.draws["eta"], theta=chains.draws["theta"],
                            phi=chains.draws["phi"], segment_ids=lattice.ids)
        run.path(f"summary_{mid}.json").write_text(
            json.dumps(_summary_doc(mid, chains, crit), indent=2, sort_keys=True), encoding="utf-8")
        _write_rates_geojson(run.path(f"rates_{mid}.geojson"), lattice, chains)
    _write_comparison(run, rows)
    return run


class _LoadedChains:
    """Latent draws reloaded from ``latent_<id>.npz``."""

    def __init__(self, path, ids):
        with np.load(path) as z:
            self.draws = {k: z[k] for k in ("eta", "theta", "phi")}
            sid = z["segment_ids"]
        if not np.array_equal(sid, ids):
            idx = nio.align(ids, sid, "latent draws", path)
            self.draws = {k: v[:, idx] for k, v in self.draws.items()}

    @property
    def lam(self):
        return np.exp(self.draws["eta"])


def _chains_path(run: Run, mid: str) -> Path:
    base = Path(run.cfg["inputs"].get("fit_dir") or run.cfg["output_dir"])
    p = base / f"latent_{mid}.npz"
    if not p.exists():
        raise ValidationError(f"chains for model {mid} not found at {p}; run `netcar fit` first")
    run.inputs[f"latent_{mid}"] = {"path": str(p), "sha256": nio.sha256(p)}
    return p


def cmd_compare(cfg: dict) -> Run:
    run = Run("compare", cfg)
    lattice = load_lattice(run)
    counts, ev, raw = load_data(run, lattice)
    design = design_from(raw, cfg["model"], counts.J, lattice.n)
    rows = []
    for mid in cfg["model"]["ids"]:
        ch = _LoadedChains(_chains_path(run, mid), lattice.ids)
        model = build_model(lattice, counts, ev, design, model_spec(mid, J=counts.J))
        rows.append({"model": mid, **_criteria(ch, model)})
    _write_comparison(run, rows)
    return run


def cmd_criticize(cfg: dict) -> Run:
    run = Run("criticize", cfg)
    crit = cfg["criticism"]
    mid = crit.get("model") or cfg["model"]["ids"][0]
    lattice = load_lattice(run)
    counts, ev, _ = load_data(run, lattice)
    ch = _LoadedChains(_chains_path(run, mid), lattice.ids)
    levels = tuple(lv if lv == "mean" else float(lv) for lv in crit["levels"])
    grid = QuantileGrid.from_chains(ch, ev, levels)
    thresholds = tuple(crit["thresholds"])
    dist = balanced_accuracy_distribution(grid, counts, int(crit["N"]), int(cfg["seed"]), thresholds)
    rows, summ = [], []
    for (j, lv), vals in dist.items():
        rows.extend((j + 1, lv, r, v) for r, v in enumerate(vals))
        q = np.quantile(vals, [0.025, 0.5, 0.975])
        summ.append({"severity": j + 1, "summary_level": lv, "mean": float(vals.mean()),
                     "q0.025": float(q[0]), "median": float(q[1]), "q0.975": float(q[2])})
    nio.write_table(run.path("balanced_accuracy.csv"), "netcar/balanced-accuracy",
                    ("severity", "summary_level", "replicate", "balanced_accuracy"), rows, model=mid)
    hist_rows = []
    for lv in [x for x in ("mean", 0.5) if x in grid.values]:
        for j in range(counts.J):
            h = grouped_histogram(grid.values[lv][:, j], counts.Y[:, j], bins=int(crit["bins"]))
            for g, lab in enumerate(h.group_labels):
                for b in range(len(h.edges) - 1):
                    hist_rows.append((j + 1, lv, lab, h.edges[b], h.edges[b + 1], int(h.counts[g, b])))
    nio.write_table(run.path("grouped_histogram.csv"), "netcar/grouped-histogram",
                    ("severity", "summary_level", "observed_group", "bin_low", "bin_high", "count"), hist_rows, model=mid)
    run.path("criticism_summary.json").write_text(json.dumps({"model": mid, "levels": summ}, indent=2), encoding="utf-8")
    return run


def cmd_contract(cfg: dict) -> Run:
    run = Run("contract", cfg)
    lattice = load_lattice(run)
    new, cmap = contract_network(lattice, bool(cfg["maup"]["merge_across_class"]))
    nio.write_segments(run.path("contracted.geojson"), new.segments)
    nio.write_adjacency(run.path("contracted_adjacency.csv"), new)
    nio.write_table(run.path("contraction_map.csv"), "netcar/contraction-map", ("new_id", "original_id", "position"),
                    ((nid, o, k) for nid in sorted(cmap.merged) for k, o in enumerate(cmap.merged[nid])))
    return run


def cmd_maup(cfg: dict) -> Run:
    run = Run("maup", cfg)
    mc = cfg["maup"]
    mid = mc["model"]
    if mid not in MODEL_IDS:
        raise ValidationError(f"unknown model id {mid!r}")
    lattice = load_lattice(run)
    counts, ev, raw = load_data(run, lattice)
    cat = dict(cfg["model"].get("categorical") or {})
    new, cmap = contract_network(lattice, bool(mc["merge_across_class"]))
    new = _apply_variant(new, cfg["network"])
    agg = reaggregate(lattice, new, cmap, counts, ev, raw, categorical=set(cat))
    d0 = design_from(raw, cfg["model"], counts.J, lattice.n)
    d1 = design_from(agg.covariates, cfg["model"], counts.J, new.n)
    _, ch0 = fit_one(mid, lattice, counts, ev, d0, cfg)
    _, ch1 = fit_one(mid, new, agg.counts, agg.exposure, d1, cfg)
    r0 = ch0.lam.mean(axis=0)
    r1 = ch1.lam.mean(axis=0)
    cmp_ = compare_rates(lattice.ids, r0, cmap, new.ids, r1, int(mc["n_classes"]))
    report = {
        "model": mid,
        "n_original": lattice.n, "n_contracted": new.n, "identity": cmap.is_identity,
        "spearman": cmp_.spearman.tolist(), "class_agreement": cmp_.class_agreement.tolist(),
        "count_totals": {"original": counts.Y.sum(axis=0).tolist(), "contracted": agg.counts.Y.sum(axis=0).tolist()},
        "exposure_totals": {"original": math.fsum(ev.E), "contracted": math.fsum(agg.exposure.E)},
    }
    run.path("maup_report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    o2n = cmap.original_to_new
    rows = []
    for k, s in enumerate(lattice.ids):
        for j in range(counts.J):
            rows.append((int(s), o2n[int(s)], j + 1, cmp_.original_rates[k, j], cmp_.mapped_rates[k, j]))
    nio.write_table(run.path("maup_rates.csv"), "netcar/maup-rates",
                    ("segment_id", "contracted_id", "severity", "original_rate", "contracted_rate"), rows)
    K = int(mc["n_classes"])
    nio.write_table(run.path("maup_class_table.csv"), "netcar/maup-classes",
                    ("severity", "original_class", "contracted_class", "count"),
                    ((j + 1, a + 1, b + 1, int(cmp_.class_tables[j, a, b]))
                     for j in range(counts.J) for a in range(K) for b in range(K)))
    return run


def cmd_synth(cfg: dict) -> Run:
    run = Run("synth", cfg)
    sc = cfg["synth"]
    mid = sc["model"]
    if mid not in MODEL_IDS:
        raise ValidationError(f"unknown model id {mid!r}")
    truth = default_truth(mid)
    if sc.get("truth"):
        t = sc["truth"]
        rho = t.get("rho")
        truth = TrueParameters.from_summary(np.asarray(t["beta"], dtype=float), t["sigma2_theta"], t.get("rho_theta", 0.0),
                                            t["sigma2_phi"], t.get("rho_phi", 0.0), tuple(rho) if isinstance(rho, list) else rho)
    M = truth.beta.shape[0] - 1
    scfg = SynthConfig(int(sc["n"]), sc["topology"], tuple(sc["length_range"]), tuple(sc["exposure_range"]),
                       M, int(cfg["seed"]), truth)
    lattice = simulate_lattice(scfg)
    spec = model_spec(mid)
    data = simulate_data(lattice, spec, truth, int(cfg["seed"]), scfg.exposure_range)
    nio.write_segments(run.path("segments.geojson"), lattice.segments)
    nio.write_counts(run.path("counts.csv"), data.counts)
    nio.write_exposure(run.path("exposure.csv"), data.exposure)
    if data.covariates:
        nio.write_covariates(run.path("covariates.csv"), lattice.ids, data.covariates)
    tdoc = {"model": mid, "beta": truth.beta.tolist(), "Sigma_theta": truth.Sigma_theta.tolist(),
            "Omega": truth.Omega.tolist(), "rho": None if truth.rho is None else np.atleast_1d(truth.rho).tolist()}
    run.path("truth.json").write_text(json.dumps(tdoc, indent=2), encoding="utf-8")
    return run


COMMANDS = {
    "build-network": cmd_build_network,
    "exposure": cmd_exposure,
    "snap": cmd_snap,
    "fit": cmd_fit,
    "compare": cmd_compare,
    "criticize": cmd_criticize,
    "contract": cmd_contract,
    "maup": cmd_maup,
    "synth": cmd_synth,
}

# flag name -> dotted config key
_INPUT_FLAGS = ("segments", "lattice", "zones", "flows", "events", "covariates", "counts", "exposure", "fit_dir")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netcar", description="Multivariate CAR modelling of event counts on road networks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", dest="output_dir", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
        for f in _INPUT_FLAGS:
            sp.add_argument(f"--{f.replace('_', '-')}", dest=f"inputs.{f}")
        sp.add_argument("--adjacency", dest="network.adjacency", choices=["order1", "order2", "order3", "distance"])
        sp.add_argument("--threshold", dest="network.threshold", type=float)
        sp.add_argument("--models", dest="model.ids", help="comma separated model ids")
        sp.add_argument("--iterations", dest="chains.iterations", type=int)
        sp.add_argument("--burn-in", dest="chains.burn_in", type=int)
        sp.add_argument("--thin", dest="chains.thin", type=int)
        if name == "snap":
            sp.add_argument("--max-distance", dest="snap.max_distance", type=float)
        if name == "criticize":
            sp.add_argument("--model", dest="criticism.model")
            sp.add_argument("--replicates", dest="criticism.N", type=int)
        if name in ("maup", "contract"):
            sp.add_argument("--model", dest="maup.model")
            sp.add_argument("--merge-across-class", dest="maup.merge_across_class", action="store_const", const=True)
        if name == "synth":
            sp.add_argument("--n", dest="synth.n", type=int)
            sp.add_argument("--topology", dest="synth.topology", choices=["path", "grid-dual", "random-planar"])
            sp.add_argument("--model", dest="synth.model")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = effective_config(load_config(args.config), flags)
        run = COMMANDS[args.command](cfg)
        run.manifest()
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"netcar {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"netcar {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
