from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from snnrobust.experiment import (CorrelationWithheldError, ExperimentError,
                                  ExperimentManifest, GridSpec, ScaleFactors,
                                  build_graph_dataset, candidate_param_count,
                                  correlate, dense_stack_dag, derive_seed,
                                  hidden_edge_count, load_data_source,
                                  render_report, resolve_data_source,
                                  run_pruning_baseline, run_sweep)
from snnrobust.graph import generate_ws, layer_dag
from snnrobust.measure import RobustnessRecord
from snnrobust.network import build_network, param_count
from snnrobust.store import ResultsStore


def tiny_manifest(**overrides) -> ExperimentManifest:
    """Smallest worthwhile end-to-end configuration for unit tests."""
    m = ExperimentManifest(
        grid=GridSpec(size=[250], nei=[2], p=[0.5, 0.9]),
        target_graph_count=2,
        param_range=(1, 10**9),
        init_methods=["He_N"],
        master_seed=777,
        dataset="synthetic",
        synthetic_train_n=220,
        synthetic_test_n=90,
        scale=ScaleFactors(epochs=1 / 30, train_subset=1.0, test_subset=1.0,
                           search_subset=0.04, one_pixel=0.03,
                           de_pop=0.016, de_iter=0.004),
    )
    for k, v in overrides.items():
        setattr(m, k, v)
    return m


class TestManifest:
    def test_round_trip(self, tmp_path):
        m = tiny_manifest()
        path = tmp_path / "m.json"
        m.save(path)
        loaded = ExperimentManifest.from_file(path)
        assert loaded.to_dict() == m.to_dict()
        assert loaded.manifest_hash == m.manifest_hash

    def test_hash_changes_with_content(self):
        a = tiny_manifest()
        b = tiny_manifest(master_seed=778)
        assert a.manifest_hash != b.manifest_hash

    def test_mode_label(self):
        assert ExperimentManifest().mode == "full"
        assert tiny_manifest().mode == "desk"

    def test_grid_values_must_come_from_declared_sets(self):
        with pytest.raises(ExperimentError):
            GridSpec(size=[123])
        with pytest.raises(ExperimentError):
            GridSpec(p=[0.25])

    def test_param_range_validated(self):
        with pytest.raises(ExperimentError):
            ExperimentManifest(param_range=(100, 100))

    def test_effective_scaling(self):
        m = tiny_manifest()
        assert m.effective_epochs() == 1
        assert ExperimentManifest().effective_epochs() == 30
        cfg = m.de_config(seed=1)
        assert cfg.pop_size >= 4 and cfg.max_iter >= 1

    def test_derive_seed_stable_and_distinct(self):
        a = derive_seed(1, "g0", "He_N", "train")
        assert a == derive_seed(1, "g0", "He_N", "train")
        assert a != derive_seed(1, "g0", "He_N", "init")
        assert a != derive_seed(2, "g0", "He_N", "train")


class TestBuildGraphDataset:
    def test_vacuous_filter_accepts_first_candidates(self, tmp_path):
        store = ResultsStore(tmp_path)
        entries = build_graph_dataset(tiny_manifest(), store)
        assert len(entries) == 2
        assert entries[0].graph_id == "g0000"
        on_disk = store.load_graph_entries()
        assert [e.graph_id for e in on_disk] == ["g0000", "g0001"]
        assert on_disk[0].param_count == entries[0].param_count

    def test_infeasible_filter_warns_and_returns_partial(self, tmp_path, caplog):
        m = tiny_manifest(param_range=(1, 2), max_generation_rounds=2)
        store = ResultsStore(tmp_path)
        entries = build_graph_dataset(m, store)
        assert entries == []
        log = json.loads((tmp_path / "generation.json").read_text())
        assert log["exhausted"] is True
        assert log["rejected"] == 2 * 2  # combos x rounds

    def test_full_scale_filter_bounds(self):
        m = ExperimentManifest(grid=GridSpec(size=[500], nei=[2], p=[0.9]),
                               target_graph_count=1)
        entries = build_graph_dataset(m)
        assert len(entries) == 1
        assert 50_000 <= entries[0].param_count <= 91_000

    def test_candidate_count_matches_build(self):
        from snnrobust.graph import to_dag
        g = generate_ws(250, 2, 0.7, seed=0)
        net = build_network(layer_dag(to_dag(g)), 784, 10)
        assert candidate_param_count(g) == param_count(net)


@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    """One tiny sweep shared by the read-only assertions below."""
    out = tmp_path_factory.mktemp("sweep")
    manifest = tiny_manifest()
    store = ResultsStore(out)
    build_graph_dataset(manifest, store)
    source = resolve_data_source(manifest, None)
    summaries = run_sweep(manifest, store, source, workers=1)
    return manifest, store, summaries


class TestRunSweep:
    def test_cardinality(self, sweep_run):
        manifest, store, summaries = sweep_run
        assert len(summaries) == 2 * 1  # graphs x inits
        assert len(store.completed_pairs(manifest.manifest_hash)) == 2

    def test_records_written(self, sweep_run):
        manifest, store, _ = sweep_run
        records = store.load_robustness()
        assert {r.attack for r in records} >= {"fgsm", "fgsm_search"}
        model_dir = store.model_dir("g0000", "He_N")
        for name in ("checkpoint.bin", "history.csv", "eval.json",
                     "fgsm.csv", "fgsm_search.csv", "one_pixel.csv",
                     "robustness.json", "done.json"):
            assert (model_dir / name).exists(), name

    def test_resume_skips_completed(self, sweep_run):
        manifest, store, _ = sweep_run
        again = run_sweep(manifest, store,
                          resolve_data_source(manifest, None), workers=1)
        assert again == []

    def test_attack_csv_schema(self, sweep_run):
        _, store, _ = sweep_run
        with open(store.model_dir("g0000", "He_N") / "fgsm.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["image_index", "success", "confidence",
                           "epsilon_used", "p_x", "p_y", "I", "generations_used"]
        assert len(rows) > 1


class TestCorrelate:
    def test_table_layout_and_flags(self, sweep_run):
        manifest, store, _ = sweep_run
        with pytest.raises(CorrelationWithheldError):
            correlate(manifest, store)  # only 2 models < 3

    def test_with_enough_models(self, tmp_path):
        manifest = tiny_manifest(target_graph_count=3,
                                 grid=GridSpec(size=[250], nei=[2],
                                               p=[0.5, 0.7, 0.9]))
        store = ResultsStore(tmp_path)
        build_graph_dataset(manifest, store)
        run_sweep(manifest, store, resolve_data_source(manifest, None))
        table = correlate(manifest, store)
        assert len(table.cells) == len(manifest.properties) * 5
        assert (tmp_path / "correlations.csv").exists()
        with open(tmp_path / "correlations.csv") as f:
            rows = list(csv.reader(f))
        assert len(rows) == 1 + len(manifest.properties)
        assert len(rows[0]) == 1 + 5
        for row in rows[1:]:
            for cell in row[1:]:
                assert cell.startswith(("rho=", "undefined:"))
        # per-column run accounting reconciles: kept + discarded = total
        log = json.loads((tmp_path / "correlate_log.json").read_text())
        for col in log["columns"]:
            assert 0 <= col["discarded_runs"] <= col["n_runs"]
            defined = [c for c in table.cells
                       if (c.attack, c.measure) == (col["attack"], col["measure"])
                       and c.defined]
            for c in defined:
                assert c.n <= col["n_models"]
        strongest = table.strongest("fgsm", "error_rate")
        if strongest:
            assert abs(strongest[0].rho) == max(
                abs(c.rho) for c in table.cells
                if c.attack == "fgsm" and c.measure == "error_rate" and c.defined)
        text = render_report(manifest, store)
        assert "strongest correlations" in text

    def test_task_failure_recorded_and_sweep_continues(self, tmp_path, monkeypatch):
        from snnrobust import experiment as exp_mod
        manifest = tiny_manifest()
        store = ResultsStore(tmp_path)
        build_graph_dataset(manifest, store)
        real_task = exp_mod._sweep_task

        def flaky(payload):
            if payload["graph_id"] == "g0000":
                raise RuntimeError("injected task failure")
            return real_task(payload)

        monkeypatch.setattr(exp_mod, "_sweep_task", flaky)
        summaries = run_sweep(manifest, store,
                              resolve_data_source(manifest, None), workers=1)
        assert [s["graph_id"] for s in summaries] == ["g0001"]
        prov = json.loads((tmp_path / "provenance.json").read_text())
        assert any(e["event"] == "task-failed" and e["graph_id"] == "g0000"
                   for e in prov)
        # the failed pair is retried on resume
        monkeypatch.setattr(exp_mod, "_sweep_task", real_task)
        retried = run_sweep(manifest, store,
                            resolve_data_source(manifest, None), workers=1)
        assert [s["graph_id"] for s in retried] == ["g0000"]

    def test_parallel_workers_match_serial(self, tmp_path):
        manifest = tiny_manifest()
        results = {}
        for mode, workers in (("serial", 1), ("parallel", 2)):
            store = ResultsStore(tmp_path / mode)
            build_graph_dataset(manifest, store)
            run_sweep(manifest, store, resolve_data_source(manifest, None),
                      workers=workers)
            results[mode] = (
                (tmp_path / mode / "models" / "g0000__He_N" / "robustness.json")
                .read_text())
        assert results["serial"] == results["parallel"]

    def test_synthetic_records_roundtrip(self, tmp_path):
        store = ResultsStore(tmp_path)
        rec = RobustnessRecord("g0", "U", "fgsm", 0.5, 0.9, None, 10, 5, 0)
        store.save_robustness("g0", "U", [rec])
        store.mark_pair_done("g0", "U", "h")
        loaded = store.load_robustness()
        assert loaded == [rec]


class TestPruningBaseline:
    def test_edge_counts_follow_floor_recurrence(self, tmp_path):
        manifest = tiny_manifest()
        manifest.pruning.hidden_layers = [8, 12, 8]
        manifest.pruning.steps = 6
        manifest.pruning.alpha = 0.25
        manifest.pruning.retrain_epochs = 1
        store = ResultsStore(tmp_path)
        steps = run_pruning_baseline(manifest, store,
                                     resolve_data_source(manifest, None))
        assert len(steps) == 7
        n = 8 * 12 + 12 * 8
        assert steps[0]["hidden_edges"] == n
        for k in range(1, 7):
            n = n - int(np.floor(0.25 * n))
            assert steps[k]["hidden_edges"] == n
        assert (tmp_path / "pruning" / "steps.csv").exists()
        assert (tmp_path / "pruning" / "correlations.csv").exists()

    def test_dense_stack_dag_layers(self):
        ld = layer_dag(dense_stack_dag([3, 4, 2]))
        assert [len(layer) for layer in ld.layers] == [3, 4, 2]
        net = build_network(ld, 5, 2)
        assert hidden_edge_count(net) == 3 * 4 + 4 * 2


class TestDeterminism:
    def test_same_manifest_reproduces_records(self, tmp_path):
        manifest = tiny_manifest()
        outputs = []
        for sub in ("a", "b"):
            store = ResultsStore(tmp_path / sub)
            build_graph_dataset(manifest, store)
            run_sweep(manifest, store, resolve_data_source(manifest, None))
            outputs.append(
                (tmp_path / sub / "models" / "g0000__He_N" / "robustness.json")
                .read_text())
        assert outputs[0] == outputs[1]


class TestDataResolution:
    def test_synthetic_source(self):
        manifest = tiny_manifest()
        source = resolve_data_source(manifest, None)
        assert source[0] == "synthetic"
        train, test = load_data_source(source)
        assert train.n == 220 and test.n == 90

    def test_mnist_missing_raises_when_required(self, tmp_path):
        manifest = tiny_manifest(dataset="mnist")
        with pytest.raises(ExperimentError):
            resolve_data_source(manifest, tmp_path)

    def test_auto_falls_back(self, tmp_path):
        manifest = tiny_manifest(dataset="auto")
        assert resolve_data_source(manifest, tmp_path)[0] == "synthetic"

    def test_auto_prefers_idx_files(self, tmp_path):
        from snnrobust.data import write_synthetic_idx
        write_synthetic_idx(tmp_path, train_n=12, test_n=6, seed=0)
        manifest = tiny_manifest(dataset="auto")
        source = resolve_data_source(manifest, tmp_path)
        assert source[0] == "mnist"
        train, test = load_data_source(source)
        assert train.n == 12 and test.n == 6
