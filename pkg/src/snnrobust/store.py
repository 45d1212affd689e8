"""Append-only on-disk results store for experiment runs.

Layout under the output directory:
  manifest.json, generation.json, provenance.json
  graphs/<graph_id>.json
  models/<graph_id>__<init>/   checkpoint.bin, history.csv, eval.json,
                               fgsm.csv, fgsm_search.csv, one_pixel.csv,
                               robustness.json, done.json
  correlations.csv, correlations_long.csv, report.txt
  pruning/steps.csv, pruning/correlations.csv, pruning/correlations_long.csv

done.json is written last for a (graph, init) pair; a pair counts as
completed only if its done.json carries the current manifest hash.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

from .graph import GraphMetrics, UndirectedGraph, graph_from_json, graph_to_json
from .measure import CorrelationTable, RobustnessRecord


@dataclass
class GraphEntry:
    graph_id: str
    graph: UndirectedGraph
    generator: dict
    metrics: GraphMetrics
    param_count: int


class ResultsStore:
    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "graphs").mkdir(exist_ok=True)
        (self.root / "models").mkdir(exist_ok=True)

    # --- generic helpers ---------------------------------------------

    def _write_json(self, path: Path, payload) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True))

    def _write_csv(self, path: Path, rows) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            csv.writer(f).writerows(rows)

    # --- manifest & provenance ---------------------------------------

    def save_manifest(self, manifest_dict: dict, manifest_hash: str) -> None:
        self._write_json(self.root / "manifest.json",
                         {"manifest": manifest_dict, "manifest_hash": manifest_hash})

    def append_provenance(self, event: str, **fields) -> None:
        path = self.root / "provenance.json"
        log = json.loads(path.read_text()) if path.exists() else []
        log.append({"event": event, "timestamp": time.time(), **fields})
        self._write_json(path, log)

    # --- graphs -------------------------------------------------------

    def save_graph_entry(self, entry: GraphEntry) -> None:
        doc = json.loads(graph_to_json(entry.graph, entry.generator, entry.metrics))
        doc["graph_id"] = entry.graph_id
        doc["param_count"] = entry.param_count
        self._write_json(self.root / "graphs" / f"{entry.graph_id}.json", doc)

    def _entry_from_doc(self, doc: dict) -> GraphEntry:
        g, generator, metrics = graph_from_json(json.dumps(doc))
        return GraphEntry(
            graph_id=doc["graph_id"],
            graph=g,
            generator=generator or {},
            metrics=metrics,
            param_count=doc["param_count"],
        )

    def load_graph_entry(self, graph_id: str) -> GraphEntry:
        path = self.root / "graphs" / f"{graph_id}.json"
        return self._entry_from_doc(json.loads(path.read_text()))

    def load_graph_entries(self) -> list[GraphEntry]:
        return [self._entry_from_doc(json.loads(path.read_text()))
                for path in sorted((self.root / "graphs").glob("*.json"))]

    def save_generation_log(self, log: dict) -> None:
        self._write_json(self.root / "generation.json", log)

    # --- per-model records --------------------------------------------

    def model_dir(self, graph_id: str, init_method: str) -> Path:
        d = self.root / "models" / f"{graph_id}__{init_method}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def pair_done(self, graph_id: str, init_method: str, manifest_hash: str) -> bool:
        marker = self.root / "models" / f"{graph_id}__{init_method}" / "done.json"
        if not marker.exists():
            return False
        return json.loads(marker.read_text()).get("manifest_hash") == manifest_hash

    def mark_pair_done(self, graph_id: str, init_method: str, manifest_hash: str,
                       **fields) -> None:
        self._write_json(self.model_dir(graph_id, init_method) / "done.json",
                         {"manifest_hash": manifest_hash, "graph_id": graph_id,
                          "init_method": init_method, **fields})

    def save_history(self, graph_id: str, init_method: str, rows) -> None:
        self._write_csv(self.model_dir(graph_id, init_method) / "history.csv",
                        [["epoch", "loss", "accuracy"], *rows])

    def save_eval(self, graph_id: str, init_method: str, eval_dict: dict) -> None:
        self._write_json(self.model_dir(graph_id, init_method) / "eval.json", eval_dict)

    def save_attack_rows(self, graph_id: str, init_method: str, attack: str,
                         header, rows) -> None:
        self._write_csv(self.model_dir(graph_id, init_method) / f"{attack}.csv",
                        [header, *rows])

    def save_robustness(self, graph_id: str, init_method: str,
                        records: list[RobustnessRecord]) -> None:
        self._write_json(self.model_dir(graph_id, init_method) / "robustness.json",
                         [r.to_dict() for r in records])

    def load_robustness(self) -> list[RobustnessRecord]:
        records = []
        for path in sorted((self.root / "models").glob("*/robustness.json")):
            done = path.parent / "done.json"
            if not done.exists():
                continue
            for d in json.loads(path.read_text()):
                records.append(RobustnessRecord.from_dict(d))
        return records

    def checkpoint_path(self, graph_id: str, init_method: str) -> Path:
        return self.model_dir(graph_id, init_method) / "checkpoint.bin"

    def completed_pairs(self, manifest_hash: str | None) -> list[tuple[str, str]]:
        """Completed (graph, init) pairs; None matches any manifest hash."""
        pairs = []
        for marker in sorted((self.root / "models").glob("*/done.json")):
            doc = json.loads(marker.read_text())
            if manifest_hash is None or doc.get("manifest_hash") == manifest_hash:
                pairs.append((doc["graph_id"], doc["init_method"]))
        return pairs

    # --- correlations, pruning, report ---------------------------------

    def save_correlations(self, table: CorrelationTable, subdir: str = "") -> None:
        base = self.root / subdir if subdir else self.root
        self._write_csv(base / "correlations.csv", table.layout_rows())
        self._write_csv(base / "correlations_long.csv", table.long_rows())

    def save_correlation_log(self, log: dict, subdir: str = "") -> None:
        base = self.root / subdir if subdir else self.root
        self._write_json(base / "correlate_log.json", log)

    def save_pruning_steps(self, rows) -> None:
        self._write_csv(self.root / "pruning" / "steps.csv", rows)

    def save_report(self, text: str) -> None:
        (self.root / "report.txt").write_text(text)
