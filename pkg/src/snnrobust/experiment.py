"""Experiment orchestration: graph-dataset generation with the parameter
filter, the (graph x initialization) training/attack sweep, correlation
analysis, the random-pruning baseline, and report rendering.

Every task derives its own seed from (master_seed, graph_id, init_method,
stage), so results are independent of scheduling order and bit-reproducible
for a fixed manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import data as data_mod
from .attack import (ATTACK_CSV_HEADER, DEConfig, fgsm_eps_search, fgsm_many,
                     one_pixel)
from .data import Dataset
from .graph import (Dag, compute_metrics, generate_ws, layer_dag, make_graph,
                    to_dag)
from .measure import (MEASURE_COLUMNS, CorrelationTable, RobustnessRecord,
                      correlation_cell, robustness_record, tukey_fences)
from .network import (MaskedNetwork, build_network, init_weights,
                      load_checkpoint, network_to_graph, param_count,
                      prune_random, save_checkpoint)
from .store import GraphEntry, ResultsStore
from .train import TrainConfig, evaluate_f1, predict, train

log = logging.getLogger("snnrobust")

MANIFEST_SCHEMA_VERSION = 1

INPUT_DIM = 784
OUTPUT_DIM = 10


class ExperimentError(RuntimeError):
    pass


class CorrelationWithheldError(ExperimentError):
    """Too few surviving models to report correlations."""


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and a stage path."""
    text = "|".join([str(master_seed), *map(str, parts)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


GRID_SIZE_CHOICES = (250, 300, 350, 400, 500)
GRID_NEI_CHOICES = (2, 4, 6, 8, 10, 20)
GRID_P_CHOICES = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class GridSpec:
    size: list[int] = field(default_factory=lambda: list(GRID_SIZE_CHOICES))
    nei: list[int] = field(default_factory=lambda: list(GRID_NEI_CHOICES))
    p: list[float] = field(default_factory=lambda: list(GRID_P_CHOICES))

    def __post_init__(self):
        for values, choices, name in ((self.size, GRID_SIZE_CHOICES, "size"),
                                      (self.nei, GRID_NEI_CHOICES, "nei"),
                                      (self.p, GRID_P_CHOICES, "p")):
            bad = [v for v in values if v not in choices]
            if bad:
                raise ExperimentError(
                    f"grid {name} values {bad} outside the declared set {choices}")


@dataclass
class AttackSettings:
    fgsm_eps: float = 0.1
    search_start: float = 0.001
    search_step: float = 0.01
    search_cap: float = 1.0
    de_pop_size: int = 500
    de_max_iter: int = 500
    de_F: float = 0.5
    de_CR: float = 0.9
    one_pixel_images: int = 100


@dataclass
class ScaleFactors:
    """Multipliers shrinking the study for desk-scale runs; all 1.0 = full scale."""

    epochs: float = 1.0
    train_subset: float = 1.0
    test_subset: float = 1.0
    search_subset: float = 1.0
    one_pixel: float = 1.0
    de_pop: float = 1.0
    de_iter: float = 1.0

    def is_full_scale(self) -> bool:
        return all(v == 1.0 for v in asdict(self).values())

    def scaled_by(self, factor: float) -> "ScaleFactors":
        return ScaleFactors(**{k: v * factor for k, v in asdict(self).items()})


@dataclass
class PruningSettings:
    alpha: float = 0.1
    steps: int = 20
    retrain_epochs: int = 5
    hidden_layers: list[int] = field(default_factory=lambda: [50, 100, 100, 50])
    init_method: str = "He_N"


DEFAULT_PROPERTIES = ["num_parameters", "density", "avg_path_length",
                      "avg_eccentricity", "diameter"]


@dataclass
class ExperimentManifest:
    grid: GridSpec = field(default_factory=GridSpec)
    target_graph_count: int = 100
    param_range: tuple[int, int] = (50_000, 91_000)
    init_methods: list[str] = field(default_factory=lambda:
                                    ["G_N", "G_U", "He_N", "He_U", "N", "U"])
    train: TrainConfig = field(default_factory=TrainConfig)
    attacks: AttackSettings = field(default_factory=AttackSettings)
    scale: ScaleFactors = field(default_factory=ScaleFactors)
    pruning: PruningSettings = field(default_factory=PruningSettings)
    master_seed: int = 20240101
    dataset: str = "mnist"  # mnist | synthetic | auto
    synthetic_train_n: int = 12_000
    synthetic_test_n: int = 2_000
    properties: list[str] = field(default_factory=lambda: list(DEFAULT_PROPERTIES))
    outlier_mode: str = "run"  # run | model
    max_generation_rounds: int = 50

    def __post_init__(self):
        if self.param_range[0] >= self.param_range[1]:
            raise ExperimentError("param_range low must be < high")
        if self.outlier_mode not in ("run", "model"):
            raise ExperimentError(f"unknown outlier_mode {self.outlier_mode!r}")
        if self.dataset not in ("mnist", "synthetic", "auto"):
            raise ExperimentError(f"unknown dataset {self.dataset!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["param_range"] = list(self.param_range)
        d["schema_version"] = MANIFEST_SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentManifest":
        d = dict(d)
        d.pop("schema_version", None)
        d["grid"] = GridSpec(**d.get("grid", {}))
        d["train"] = TrainConfig(**d.get("train", {}))
        d["attacks"] = AttackSettings(**d.get("attacks", {}))
        d["scale"] = ScaleFactors(**d.get("scale", {}))
        d["pruning"] = PruningSettings(**d.get("pruning", {}))
        d["param_range"] = tuple(d.get("param_range", (50_000, 91_000)))
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @property
    def manifest_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def mode(self) -> str:
        return "full" if self.scale.is_full_scale() else "desk"

    # effective (scaled) quantities -------------------------------------

    def effective_epochs(self) -> int:
        if self.train.epochs == 0:
            return 0
        return max(1, round(self.train.epochs * self.scale.epochs))

    def effective_retrain_epochs(self) -> int:
        return max(1, round(self.pruning.retrain_epochs * self.scale.epochs))

    def train_subset_n(self, full_n: int) -> int:
        return max(1, min(full_n, round(full_n * self.scale.train_subset)))

    def test_subset_n(self, full_n: int) -> int:
        return max(1, min(full_n, round(full_n * self.scale.test_subset)))

    def search_subset_n(self, test_n: int) -> int:
        return max(1, round(test_n * self.scale.search_subset))

    def one_pixel_n(self) -> int:
        return max(1, round(self.attacks.one_pixel_images * self.scale.one_pixel))

    def de_config(self, seed: int) -> DEConfig:
        return DEConfig(
            pop_size=max(4, round(self.attacks.de_pop_size * self.scale.de_pop)),
            max_iter=max(1, round(self.attacks.de_max_iter * self.scale.de_iter)),
            F=self.attacks.de_F, CR=self.attacks.de_CR, seed=seed,
        )

    def train_config(self, epochs: int, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.train.learning_rate,
            beta1=self.train.beta1, beta2=self.train.beta2,
            adam_eps=self.train.adam_eps, epochs=epochs,
            batch_size=self.train.batch_size, seed=seed,
        )


# --- dataset resolution ------------------------------------------------


def resolve_data_source(manifest: ExperimentManifest, data_dir) -> tuple:
    """Pick the dataset backing this run; returns a picklable descriptor."""
    if manifest.dataset in ("mnist", "auto"):
        found = data_mod.find_mnist(data_dir) if data_dir else None
        if found:
            return ("mnist", str(data_dir))
        if manifest.dataset == "mnist":
            raise ExperimentError(
                f"manifest requests MNIST but IDX files were not found under {data_dir!r}; "
                "set dataset='synthetic' or provide the files")
        log.warning("MNIST IDX files not found under %r; falling back to the "
                    "synthetic stand-in corpus", data_dir)
    return ("synthetic", manifest.synthetic_train_n, manifest.synthetic_test_n,
            derive_seed(manifest.master_seed, "synthetic-data"))


def load_data_source(source: tuple) -> tuple[Dataset, Dataset]:
    if source[0] == "mnist":
        return data_mod.load_mnist(source[1])
    _, train_n, test_n, seed = source
    return (data_mod.synthetic_dataset(train_n, seed, "train"),
            data_mod.synthetic_dataset(test_n, seed + 1, "test"))


# --- graph dataset -------------------------------------------------------


def candidate_param_count(g) -> int:
    return param_count(build_network(layer_dag(to_dag(g)), INPUT_DIM, OUTPUT_DIM))


def build_graph_dataset(manifest: ExperimentManifest,
                        store: ResultsStore | None = None) -> list[GraphEntry]:
    """Grid-search WS generator parameters, keeping graphs whose induced
    network lands inside the parameter range, until the target count."""
    combos = list(product(manifest.grid.size, manifest.grid.nei, manifest.grid.p))
    lo, hi = manifest.param_range
    accepted: list[GraphEntry] = []
    rejected = 0
    rejected_by_combo: dict[str, int] = {}

    for round_i in range(manifest.max_generation_rounds):
        for size, nei, p in combos:
            if len(accepted) >= manifest.target_graph_count:
                break
            seed = derive_seed(manifest.master_seed, "gen", round_i, size, nei, p)
            g = generate_ws(size, nei, p, seed)
            n_params = candidate_param_count(g)
            if not (lo <= n_params <= hi):
                rejected += 1
                key = f"size={size},nei={nei},p={p}"
                rejected_by_combo[key] = rejected_by_combo.get(key, 0) + 1
                continue
            graph_id = f"g{len(accepted):04d}"
            entry = GraphEntry(
                graph_id=graph_id,
                graph=g,
                generator={"size": size, "nei": nei, "p": p, "seed": seed},
                metrics=compute_metrics(g),
                param_count=n_params,
            )
            accepted.append(entry)
            if store is not None:
                store.save_graph_entry(entry)
        if len(accepted) >= manifest.target_graph_count:
            break

    if len(accepted) < manifest.target_graph_count:
        log.warning("grid exhausted after %d rounds: accepted %d of %d graphs",
                    manifest.max_generation_rounds, len(accepted),
                    manifest.target_graph_count)
    if store is not None:
        store.save_generation_log({
            "accepted": len(accepted),
            "rejected": rejected,
            "rejected_by_combo": rejected_by_combo,
            "target": manifest.target_graph_count,
            "exhausted": len(accepted) < manifest.target_graph_count,
        })
        store.append_provenance("gen-graphs", manifest_hash=manifest.manifest_hash,
                                accepted=len(accepted), rejected=rejected)
    return accepted


# --- sweep ---------------------------------------------------------------

_WORKER_DATA: tuple[Dataset, Dataset] | None = None
_WORKER_SOURCE: tuple | None = None


def _worker_init(source: tuple) -> None:
    global _WORKER_DATA, _WORKER_SOURCE
    _WORKER_DATA = load_data_source(source)
    _WORKER_SOURCE = source


def _get_worker_data(source: tuple) -> tuple[Dataset, Dataset]:
    global _WORKER_DATA, _WORKER_SOURCE
    if _WORKER_DATA is None or _WORKER_SOURCE != source:
        _worker_init(source)
    return _WORKER_DATA


def run_attacks(net: MaskedNetwork, test_set: Dataset,
                manifest: ExperimentManifest, seed_path: tuple,
                ) -> tuple[dict[str, list], dict]:
    """Run the three attacks against one trained model.

    Fixed-epsilon FGSM targets every correctly classified image of the
    (scaled) test subset; epsilon search and the one-pixel attack target the
    first correctly classified images in dataset order.
    """
    atk = manifest.attacks
    test_n = manifest.test_subset_n(test_set.n)
    subset = test_set.subset(np.arange(test_n))
    probs = predict(net, subset.images)
    correct = np.flatnonzero(probs.argmax(axis=1) == subset.labels)

    outcomes: dict[str, list] = {"fgsm": [], "fgsm_search": [], "one_pixel": []}
    if correct.size:
        outcomes["fgsm"] = fgsm_many(net, subset.images[correct],
                                     subset.labels[correct], atk.fgsm_eps,
                                     indices=correct)
        for i in correct[:manifest.search_subset_n(test_n)]:
            outcomes["fgsm_search"].append(fgsm_eps_search(
                net, subset.images[i], int(subset.labels[i]),
                start=atk.search_start, step=atk.search_step, cap=atk.search_cap,
                index=int(i)))
        for i in correct[:manifest.one_pixel_n()]:
            cfg = manifest.de_config(
                derive_seed(manifest.master_seed, *seed_path, "one_pixel", int(i)))
            outcomes["one_pixel"].append(one_pixel(
                net, subset.images[i], int(subset.labels[i]), cfg,
                index=int(i), keep_image=False))
    info = {
        "test_subset_n": int(test_n),
        "clean_correct": int(correct.size),
        "clean_error_rate": float(1.0 - correct.size / test_n),
    }
    return outcomes, info


def _sweep_task(payload: dict) -> dict:
    """Train and attack one (graph, init) pair; writes per-model files."""
    manifest = ExperimentManifest.from_dict(payload["manifest"])
    train_set, test_set = _get_worker_data(tuple(payload["data_source"]))
    store = ResultsStore(payload["out_dir"])
    graph_id = payload["graph_id"]
    init_method = payload["init_method"]

    entry = store.load_graph_entry(graph_id)
    ld = layer_dag(to_dag(entry.graph))
    net = build_network(ld, INPUT_DIM, OUTPUT_DIM)
    init_seed = derive_seed(manifest.master_seed, graph_id, init_method, "init")
    net = init_weights(net, init_method, init_seed)

    cfg = manifest.train_config(
        epochs=manifest.effective_epochs(),
        seed=derive_seed(manifest.master_seed, graph_id, init_method, "train"),
    )
    subset = train_set.subset(np.arange(manifest.train_subset_n(train_set.n)))
    history = train(net, subset, cfg)
    report = evaluate_f1(net, test_set.subset(
        np.arange(manifest.test_subset_n(test_set.n))))

    outcomes, attack_info = run_attacks(net, test_set, manifest,
                                        (graph_id, init_method))
    records = [robustness_record(graph_id, init_method, kind, outs)
               for kind, outs in outcomes.items() if outs]

    save_checkpoint(net, store.checkpoint_path(graph_id, init_method),
                    extra={"graph_id": graph_id, "train_seed": cfg.seed,
                           "init_seed": init_seed,
                           "manifest_hash": manifest.manifest_hash})
    store.save_history(graph_id, init_method, history.rows())
    store.save_eval(graph_id, init_method, report.to_dict())
    for kind, outs in outcomes.items():
        store.save_attack_rows(graph_id, init_method, kind, ATTACK_CSV_HEADER,
                               [o.csv_row() for o in outs])
    store.save_robustness(graph_id, init_method, records)
    return {
        "graph_id": graph_id,
        "init_method": init_method,
        "macro_f1": report.macro_f1,
        "accuracy": report.accuracy,
        "attack_info": attack_info,
        "init_seed": init_seed,
        "train_seed": cfg.seed,
    }


def run_sweep(manifest: ExperimentManifest, store: ResultsStore,
              data_source: tuple, workers: int = 1,
              resume: bool = True) -> list[dict]:
    """Train and attack every (graph, init_method) pair, resumably."""
    entries = store.load_graph_entries()
    if not entries:
        raise ExperimentError("no graphs in store; run gen-graphs first")
    mhash = manifest.manifest_hash
    store.save_manifest(manifest.to_dict(), mhash)

    pending = []
    for entry in entries:
        for init_method in manifest.init_methods:
            if resume and store.pair_done(entry.graph_id, init_method, mhash):
                continue
            pending.append({
                "graph_id": entry.graph_id,
                "init_method": init_method,
                "manifest": manifest.to_dict(),
                "data_source": list(data_source),
                "out_dir": str(store.root),
            })
    log.info("sweep: %d pairs pending (%d graphs x %d inits, resume=%s)",
             len(pending), len(entries), len(manifest.init_methods), resume)

    def record_failure(payload: dict, exc: Exception) -> None:
        # task failures are recorded and the sweep continues
        log.error("task %s/%s failed: %s", payload["graph_id"],
                  payload["init_method"], exc)
        store.append_provenance("task-failed", graph_id=payload["graph_id"],
                                init_method=payload["init_method"],
                                error=str(exc))

    def record_success(summary: dict) -> None:
        store.mark_pair_done(summary["graph_id"], summary["init_method"],
                             mhash, seeds={"init": summary["init_seed"],
                                           "train": summary["train_seed"]})
        summaries.append(summary)

    summaries: list[dict] = []
    if workers <= 1:
        for payload in pending:
            try:
                record_success(_sweep_task(payload))
            except Exception as exc:
                record_failure(payload, exc)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(data_source,)) as pool:
            futures = [(payload, pool.submit(_sweep_task, payload))
                       for payload in pending]
            for payload, fut in futures:
                try:
                    record_success(fut.result())
                except Exception as exc:
                    record_failure(payload, exc)
    store.append_provenance("sweep", manifest_hash=mhash,
                            completed=len(summaries), mode=manifest.mode,
                            dataset=data_source[0])
    return summaries


def rerun_attacks(manifest: ExperimentManifest, store: ResultsStore,
                  data_source: tuple) -> int:
    """Re-run attacks against stored checkpoints (models stay untouched).

    Pairs completed under any manifest hash qualify, so attack settings can
    change without retraining."""
    _, test_set = load_data_source(data_source)
    count = 0
    for graph_id, init_method in store.completed_pairs(None):
        net, _ = load_checkpoint(store.checkpoint_path(graph_id, init_method))
        outcomes, _ = run_attacks(net, test_set, manifest, (graph_id, init_method))
        records = [robustness_record(graph_id, init_method, kind, outs)
                   for kind, outs in outcomes.items() if outs]
        for kind, outs in outcomes.items():
            store.save_attack_rows(graph_id, init_method, kind, ATTACK_CSV_HEADER,
                                   [o.csv_row() for o in outs])
        store.save_robustness(graph_id, init_method, records)
        count += 1
    store.append_provenance("attack", manifest_hash=manifest.manifest_hash,
                            models=count)
    return count


# --- correlation ----------------------------------------------------------


PROPERTY_GETTERS = {
    "num_parameters": lambda e: e.param_count,
    "vertex_count": lambda e: e.metrics.vertex_count,
    "edge_count": lambda e: e.metrics.edge_count,
    "density": lambda e: e.metrics.density_undirected,
    "density_directed": lambda e: e.metrics.density_directed,
    "diameter": lambda e: e.metrics.diameter,
    "avg_path_length": lambda e: e.metrics.avg_path_length,
    "avg_eccentricity": lambda e: e.metrics.avg_eccentricity,
    "avg_betweenness": lambda e: e.metrics.avg_betweenness,
    "avg_closeness": lambda e: e.metrics.avg_closeness,
}


def _measure_value(record: RobustnessRecord, measure: str) -> float | None:
    return getattr(record, measure)


def _aggregate_column(records: list[RobustnessRecord], attack: str, measure: str,
                      mode: str) -> tuple[dict[str, float], dict]:
    """Per-model mean of per-run measure values after outlier filtering.

    'run' mode pools every (model, init) value, computes the Tukey fences on
    the pooled distribution, and discards flagged runs before averaging;
    'model' mode averages first and discards models whose mean is outside
    the fences of the mean distribution.
    """
    per_model: dict[str, list[float]] = {}
    for r in records:
        if r.attack != attack:
            continue
        v = _measure_value(r, measure)
        if v is None:
            continue
        per_model.setdefault(r.model_id, []).append(float(v))

    info = {"attack": attack, "measure": measure, "mode": mode,
            "n_models": len(per_model),
            "n_runs": sum(len(v) for v in per_model.values()),
            "discarded_runs": 0, "discarded_models": 0}
    if not per_model:
        return {}, info

    if mode == "run":
        pooled = [v for vals in per_model.values() for v in vals]
        if len(pooled) >= 4:
            lo, hi = tukey_fences(pooled)
        else:
            lo, hi = -np.inf, np.inf
        means: dict[str, float] = {}
        for model_id, vals in per_model.items():
            kept = [v for v in vals if lo <= v <= hi]
            info["discarded_runs"] += len(vals) - len(kept)
            if not kept:
                info["discarded_models"] += 1
                log.info("model %s dropped for %s/%s: all runs outliers",
                         model_id, attack, measure)
                continue
            means[model_id] = float(np.mean(kept))
        return means, info

    raw_means = {m: float(np.mean(vs)) for m, vs in per_model.items()}
    if len(raw_means) >= 4:
        lo, hi = tukey_fences(list(raw_means.values()))
    else:
        lo, hi = -np.inf, np.inf
    means = {m: v for m, v in raw_means.items() if lo <= v <= hi}
    info["discarded_models"] = len(raw_means) - len(means)
    return means, info


def correlate(manifest: ExperimentManifest, store: ResultsStore,
              records: list[RobustnessRecord] | None = None,
              entries: list[GraphEntry] | None = None,
              subdir: str = "") -> CorrelationTable:
    """Correlate every configured graph property against every measure column."""
    if records is None:
        records = store.load_robustness()
    if entries is None:
        entries = store.load_graph_entries()
    if not records:
        raise CorrelationWithheldError("no robustness records in store")
    by_id = {e.graph_id: e for e in entries}
    models_with_records = {r.model_id for r in records}
    if len(models_with_records) < 3:
        raise CorrelationWithheldError(
            f"only {len(models_with_records)} models have records; need >= 3")

    cells = []
    logs = []
    for attack, measure in MEASURE_COLUMNS:
        means, info = _aggregate_column(records, attack, measure,
                                        manifest.outlier_mode)
        logs.append(info)
        model_ids = sorted(m for m in means if m in by_id)
        for prop in manifest.properties:
            getter = PROPERTY_GETTERS[prop]
            xs = [getter(by_id[m]) for m in model_ids]
            ys = [means[m] for m in model_ids]
            cells.append(correlation_cell(prop, attack, measure, xs, ys))
    table = CorrelationTable(cells=cells, properties=list(manifest.properties))
    store.save_correlations(table, subdir=subdir)
    store.save_correlation_log({"columns": logs,
                                "outlier_mode": manifest.outlier_mode},
                               subdir=subdir)
    return table


# --- pruning baseline -------------------------------------------------------


def dense_stack_dag(hidden_layers: list[int]) -> Dag:
    """Fully connected consecutive-layer DAG over contiguous vertex blocks."""
    offsets = np.concatenate([[0], np.cumsum(hidden_layers)])
    edges = set()
    for b in range(len(hidden_layers) - 1):
        for u in range(offsets[b], offsets[b + 1]):
            for v in range(offsets[b + 1], offsets[b + 2]):
                edges.add((int(u), int(v)))
    return Dag(int(offsets[-1]), frozenset(edges))


def hidden_edge_count(net: MaskedNetwork) -> int:
    return int(sum(g.n_connections for g in net.hidden_groups()))


PRUNING_STEP_HEADER = [
    "step", "param_count", "hidden_edges", "accuracy", "macro_f1",
    "fgsm_error_rate", "fgsm_avg_confidence", "fgsm_search_avg_epsilon",
    "one_pixel_error_rate", "one_pixel_avg_confidence",
    "num_parameters", "density", "avg_path_length", "avg_eccentricity",
    "diameter", "avg_betweenness", "avg_closeness", "disconnected",
]


def _pruning_step_record(step: int, net: MaskedNetwork, test_set: Dataset,
                         manifest: ExperimentManifest) -> dict:
    report = evaluate_f1(net, test_set.subset(
        np.arange(manifest.test_subset_n(test_set.n))))
    outcomes, _ = run_attacks(net, test_set, manifest, ("prune", step))
    measures = {}
    for kind, outs in outcomes.items():
        if not outs:
            measures[kind] = None
            continue
        measures[kind] = robustness_record("prune", "baseline", kind, outs)

    hidden_dag = network_to_graph(net)
    hidden_undirected = compute_metrics(
        make_graph(hidden_dag.vertex_count, hidden_dag.directed_edges))

    def m(kind, attr):
        rec = measures.get(kind)
        return getattr(rec, attr) if rec is not None else None

    return {
        "step": step,
        "param_count": param_count(net),
        "hidden_edges": hidden_edge_count(net),
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "fgsm_error_rate": m("fgsm", "error_rate"),
        "fgsm_avg_confidence": m("fgsm", "avg_confidence"),
        "fgsm_search_avg_epsilon": m("fgsm_search", "avg_epsilon"),
        "one_pixel_error_rate": m("one_pixel", "error_rate"),
        "one_pixel_avg_confidence": m("one_pixel", "avg_confidence"),
        "num_parameters": param_count(net),
        "density": hidden_undirected.density_undirected,
        "avg_path_length": hidden_undirected.avg_path_length,
        "avg_eccentricity": hidden_undirected.avg_eccentricity,
        "diameter": hidden_undirected.diameter,
        "avg_betweenness": hidden_undirected.avg_betweenness,
        "avg_closeness": hidden_undirected.avg_closeness,
        "disconnected": hidden_undirected.disconnected,
    }


def run_pruning_baseline(manifest: ExperimentManifest, store: ResultsStore,
                         data_source: tuple) -> list[dict]:
    """Dense reference model pruned randomly for the configured number of
    steps, with retraining, attacks, and hidden-structure metrics per step."""
    train_set, test_set = load_data_source(data_source)
    p = manifest.pruning
    ld = layer_dag(dense_stack_dag(p.hidden_layers))
    net = build_network(ld, INPUT_DIM, OUTPUT_DIM)
    net = init_weights(net, p.init_method,
                       derive_seed(manifest.master_seed, "prune", "init"))

    subset = train_set.subset(np.arange(manifest.train_subset_n(train_set.n)))
    base_cfg = manifest.train_config(
        epochs=manifest.effective_epochs(),
        seed=derive_seed(manifest.master_seed, "prune", "train", 0))
    train(net, subset, base_cfg)

    steps = [_pruning_step_record(0, net, test_set, manifest)]
    for step in range(1, p.steps + 1):
        net = prune_random(net, p.alpha,
                           derive_seed(manifest.master_seed, "prune", "mask", step))
        retrain_cfg = manifest.train_config(
            epochs=manifest.effective_retrain_epochs(),
            seed=derive_seed(manifest.master_seed, "prune", "train", step))
        train(net, subset, retrain_cfg)
        steps.append(_pruning_step_record(step, net, test_set, manifest))
        log.info("pruning step %d: %d hidden edges, f1=%.4f", step,
                 steps[-1]["hidden_edges"], steps[-1]["macro_f1"])

    rows = [PRUNING_STEP_HEADER] + [
        ["" if rec[k] is None else rec[k] for k in PRUNING_STEP_HEADER]
        for rec in steps
    ]
    store.save_pruning_steps(rows)

    cells = []
    for attack, measure in MEASURE_COLUMNS:
        col = {"fgsm": {"error_rate": "fgsm_error_rate",
                        "avg_confidence": "fgsm_avg_confidence"},
               "fgsm_search": {"avg_epsilon": "fgsm_search_avg_epsilon"},
               "one_pixel": {"error_rate": "one_pixel_error_rate",
                             "avg_confidence": "one_pixel_avg_confidence"}}[attack][measure]
        pairs = [(rec, rec[col]) for rec in steps if rec[col] is not None]
        for prop in manifest.properties:
            xs = [rec[prop] for rec, _ in pairs]
            ys = [v for _, v in pairs]
            cells.append(correlation_cell(prop, attack, measure, xs, ys))
    table = CorrelationTable(cells=cells, properties=list(manifest.properties))
    store.save_correlations(table, subdir="pruning")
    store.append_provenance("prune-baseline", manifest_hash=manifest.manifest_hash,
                            steps=p.steps, alpha=p.alpha,
                            retrain_epochs=manifest.effective_retrain_epochs())
    return steps


# --- report ----------------------------------------------------------------


def render_report(manifest: ExperimentManifest, store: ResultsStore) -> str:
    """Human-readable summary: run mode, counts, and the two strongest
    graph properties per robustness measure."""
    lines = [
        "Sparse network robustness study",
        "=" * 34,
        f"manifest_hash: {manifest.manifest_hash}",
        f"mode: {manifest.mode} (scale factors {asdict(manifest.scale)})",
        f"dataset: {manifest.dataset}",
        "note: parameter counts include biases",
        "",
    ]
    gen_path = store.root / "generation.json"
    if gen_path.exists():
        gen = json.loads(gen_path.read_text())
        lines.append(f"graphs: {gen['accepted']} accepted, "
                     f"{gen['rejected']} rejected by the parameter filter")
    records = store.load_robustness()
    models = sorted({r.model_id for r in records})
    inits = sorted({r.init_method for r in records})
    lines.append(f"models: {len(models)} graphs x {len(inits)} initializations")
    lines.append("")

    corr_path = store.root / "correlations_long.csv"
    if corr_path.exists():
        with open(corr_path) as f:
            rows = list(csv.reader(f))
        header, body = rows[0], rows[1:]
        cells = []
        for row in body:
            d = dict(zip(header, row))
            if d["rho"]:
                cells.append(d)
        lines.append("strongest correlations per measure "
                     "(two largest |rho| per column):")
        for attack, measure in MEASURE_COLUMNS:
            col = [c for c in cells if c["attack"] == attack and c["measure"] == measure]
            col.sort(key=lambda c: -abs(float(c["rho"])))
            lines.append(f"  {attack} / {measure}:")
            if not col:
                lines.append("    (no defined cells)")
            for c in col[:2]:
                lines.append(
                    f"    {c['graph_property']}: rho={float(c['rho']):+.3f} "
                    f"tau={float(c['tau']):+.3f} ({c['label']}, n={c['n']})")
    else:
        lines.append("correlations: not computed yet")

    if (store.root / "pruning" / "steps.csv").exists():
        lines.append("")
        lines.append("pruning baseline: see pruning/steps.csv and "
                     "pruning/correlations.csv")
    text = "\n".join(lines) + "\n"
    store.save_report(text)
    return text
