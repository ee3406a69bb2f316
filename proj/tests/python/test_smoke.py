import math

import numpy as np
import pytest

import kgrec


def test_metrics_closed_forms():
    assert kgrec.hr_at_k([7, 3, 9], 7, 1) == 1.0
    assert kgrec.ndcg_at_k([7, 3, 9], 9, 5) == 0.5
    with pytest.raises(kgrec.ContractError):
        kgrec.hr_at_k([1, 1], 1, 2)


def test_geometry_and_time():
    assert kgrec.haversine_km(10, 20, 11, 20) == pytest.approx(6371 * math.pi / 180, rel=1e-12)
    pairs = kgrec.adjacent_pairs([1.0, 1.0, 1.0], [1.0, 1.001, 1.01], 0.2)
    assert pairs == [(0, 1)]
    monday = 1672617600
    assert kgrec.time_bucket(monday) == 0
    assert kgrec.time_bucket(monday + 5 * 86400 + 12 * 3600) == 36


def test_quantize_and_project():
    rng = np.random.default_rng(0)
    books = [rng.normal(size=(4, 3)), rng.normal(size=(4, 3))]
    h = rng.normal(size=3)
    idx, q = kgrec.quantize(h, books)
    first = int(np.argmin(((books[0] - h) ** 2).sum(axis=1)))
    assert idx[0] == first
    assert np.allclose(q, books[0][idx[0]] + books[1][idx[1]])
    x = np.vstack([rng.normal(size=(10, 4)), rng.normal(size=(10, 4)) + 8.0])
    coords, sil = kgrec.project(x, [0] * 10 + [1] * 10)
    assert coords.shape == (20, 2)
    assert sil > 0.5


def test_config_overrides():
    cfg = kgrec.load_config(overrides=["lm.epochs=3"])
    assert cfg["lm"]["epochs"] == 3
    assert cfg["kg"]["d_km"] == 0.2
    with pytest.raises(kgrec.ConfigError):
        kgrec.load_config(overrides=["lm.nope=1"])


def test_pipeline_and_recommender(tmp_path):
    raw = tmp_path / "city.tsv"
    n = kgrec.synthetic_city(raw, users=6, pois=20, days=3, grid_side=2, categories=4)
    assert n > 0
    overrides = [
        f'paths.raw="{raw}"',
        f'paths.workdir="{tmp_path / "work"}"',
        "ingest.cells_per_axis=2",
        "tokenizer.rgcn_layers=1",
        "tokenizer.dim=4",
        "tokenizer.levels=2",
        "tokenizer.epochs=2",
        "tokenizer.codebook_size={user=4, poi=4, category=2, region=2}",
        "corpus.window=3",
        "lm.d_model=8",
        "lm.n_layers=1",
        "lm.n_heads=2",
        "lm.epochs=1",
        "eval.beam_width=10",
    ]
    with pytest.raises(kgrec.MissingArtifact):
        kgrec.run_stage("evaluate", overrides=overrides)
    kgrec.run_pipeline(overrides=overrides)
    assert kgrec.run_stage("evaluate", overrides=overrides) is False
    assert (tmp_path / "work" / "eval" / "report.json").exists()

    rec = kgrec.Recommender(tmp_path / "work")
    examples = rec.test_examples("poi")
    assert examples
    ranked = rec.rank(examples[0]["input_ids"], "poi", k=5, beam_width=10)
    assert 0 < len(ranked) <= 5
    ids = [r[0] for r in ranked]
    assert len(set(ids)) == len(ids)
    assert all(rec.struid("poi", i) == r[2] for i, r in zip(ids, ranked))
    scores = [r[1] for r in ranked]
    assert scores == sorted(scores, reverse=True)
