import json

import numpy as np
import pytest

from mimo_rade.harness import (
    ConfigError,
    ExperimentConfig,
    clear_trial_cache,
    eval_count,
    exp5_defaults,
    run_experiment1,
    run_experiment2,
    run_experiment3,
    run_experiment4,
    run_experiment5,
    run_observation2,
    slot_trials,
)
from mimo_rade.linalg_core import SeededRng


def small(**kw):
    base = dict(n_list=[4], sigma_list=[0.5, 1.0], matrices_per_n=2, messages_per_matrix=40,
                nnx_k=["1", "2n+1"], t_list=[1, 2], k1="2n")
    base.update(kw)
    return ExperimentConfig(**base)


class TestCountExpressions:
    @pytest.mark.parametrize("expr,n,value", [
        ("1", 6, 1), ("2n+1", 6, 13), ("2n^2+1", 6, 73), ("n^3", 7, 343), ("n^4", 6, 1296),
        ("n^5+1", 8, 32769), (5, 3, 5), ("2*n", 4, 8),
    ])
    def test_values(self, expr, n, value):
        assert eval_count(expr, n) == value

    @pytest.mark.parametrize("expr", ["__import__('os')", "n/2", "x+1", "1-n", "", True])
    def test_rejects(self, expr):
        with pytest.raises(ValueError):
            eval_count(expr, 3)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.from_dict({"n_list": [6], "sigma_list": [0.25]})
        assert cfg.matrices_per_n == 5 and cfg.messages_per_matrix == 1000
        assert cfg.brute_force_mode == "budgeted" and cfg.master_seed == 42

    def test_zero_messages(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({"messages_per_matrix": 0})
        assert exc.value.key == "messages_per_matrix"

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({"n_list": [6], "colour": 1})
        assert exc.value.key == "colour"

    @pytest.mark.parametrize("key,value", [
        ("n_list", []), ("n_list", [1]), ("sigma_list", [-1.0]), ("brute_force_mode", "fast"),
        ("nnx_k", ["0"]), ("t_list", [0]), ("chi_stop", 2.0), ("workers", 0), ("supercharge", "yes"),
        ("exp5", {"speed": 3}),
    ])
    def test_invalid(self, key, value):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({key: value})
        assert exc.value.key == key

    def test_reduced_messages(self):
        cfg = ExperimentConfig(n_list=[6, 8])
        assert cfg.messages_for(6) == 1000
        assert cfg.messages_for(8) == 200


class TestExperiments:
    def test_noiseless_limit(self):
        for n in (3, 5):
            rep = run_experiment1(small(n_list=[n], sigma_list=[1e-9]))
            assert rep.cells[0].proportion == 1.0

    def test_cells_present_once(self):
        cfg = small()
        rep = run_experiment3(cfg)
        keys = [c.key() for c in rep.cells]
        assert len(keys) == len(set(keys)) == 2 * 2 * 2
        for c in rep.cells:
            assert 0 <= c.numerator <= c.denominator
            assert c.messages_processed == 80

    def test_conditioning_uses_brute_reference(self):
        cfg = small(sigma_list=[1.0])
        rep1 = run_experiment1(cfg)
        rep2 = run_experiment2(cfg)
        hits = rep1.cells[0].numerator
        assert all(c.denominator == hits for c in rep2.cells)

    def test_exhaustive_nnx_is_exact(self):
        cfg = small(n_list=[3], nnx_k=[str(8**3)], sigma_list=[0.75, 1.25])
        assert all(c.proportion == 1.0 for c in run_experiment2(cfg).cells)

    def test_paired_supercharge_never_worse(self):
        cfg = small(paired_supercharge=True, sigma_list=[0.75, 1.25], t_list=[1], k1="2n^2")
        for kind, run in (("rade1", run_experiment3), ("rade2", run_experiment4)):
            rep = run(cfg)
            for s in cfg.sigma_list:
                bare = rep.cell(4, s, kind, T=1)
                sup = rep.cell(4, s, f"{kind}_super", T=1)
                assert sup.numerator >= bare.numerator

    def test_scheme_streams_are_independent(self):
        a = run_experiment3(small(t_list=[1]))
        b = run_experiment3(small(t_list=[1, 2]))
        assert a.cell(4, 0.5, "rade1", T=1).numerator == b.cell(4, 0.5, "rade1", T=1).numerator

    def test_zero_denominator_is_undefined(self):
        cfg = small(n_list=[3], sigma_list=[50.0], messages_per_matrix=3, matrices_per_n=1)
        rep = run_experiment2(cfg)
        for c in rep.cells:
            if c.denominator == 0:
                assert c.proportion is None and c.status == "undefined"

    def test_budget_skip(self):
        cfg = small(n_list=[4], brute_budget=100)
        rep = run_experiment2(cfg)
        assert all(c.status == "skipped" and "budget" in c.reason for c in rep.cells)
        assert rep.skipped

    def test_skip_mode_is_unconditional(self):
        cfg = small(brute_force_mode="skip", sigma_list=[0.5])
        rep = run_experiment2(cfg)
        for c in rep.cells:
            assert not c.conditional
            assert c.denominator == 80
        with pytest.raises(ConfigError):
            run_experiment1(cfg)

    def test_experiment5_blocks(self):
        cfg = small(n_list=[4], sigma_list=[0.25, 0.75], exp5={"nnx_k": "2n+1", "rade1_iters": 2,
                                                             "rade1_k1": "2n", "rade2_iters": 1,
                                                             "rade2_k1": "0"})
        rep = run_experiment5(cfg)
        blocks = {}
        for c in rep.cells:
            blocks.setdefault(c.block, []).append(c.scheme)
        assert sorted(blocks) == ["n=4,sigma=0.25", "n=4,sigma=0.75"]
        assert all(v == ["nnx", "rade1_super", "rade2"] for v in blocks.values())

    def test_exp5_table(self):
        assert exp5_defaults(8, 0.75) == {"nnx_k": "n^5+1", "rade1_iters": 20, "rade1_k1": "2n^2",
                                          "rade2_iters": 3, "rade2_k1": "0"}

    def test_workers_match_serial(self):
        cfg = small(sigma_list=[0.75], t_list=[1])
        serial = run_experiment3(cfg).to_json(include_timing=False)
        clear_trial_cache()
        parallel = run_experiment3(small(sigma_list=[0.75], t_list=[1], workers=2)).to_json(include_timing=False)
        a, b = json.loads(serial), json.loads(parallel)
        a["config"].pop("workers"), b["config"].pop("workers")
        assert a == b


class TestReports:
    def test_byte_identical_minus_timing(self):
        cfg = small()
        first = run_experiment4(cfg).to_json(include_timing=False)
        clear_trial_cache()
        second = run_experiment4(cfg).to_json(include_timing=False)
        assert first == second

    def test_json_is_canonical(self):
        text = run_experiment1(small()).to_json()
        data = json.loads(text)
        assert text == json.dumps(data, sort_keys=True, indent=2) + "\n"
        assert data["provenance"]["seed"] == 42
        assert data["config"]["messages_per_matrix"] == 40
        assert "timestamp" in data["provenance"]

    def test_csv_rows(self):
        rep = run_experiment2(small())
        lines = rep.to_csv().strip().splitlines()
        assert len(lines) == 1 + len(rep.cells)
        assert lines[0].startswith("n,sigma,scheme,params")

    def test_table(self):
        text = run_experiment2(small()).to_table()
        assert "n=4  scheme=nnx" in text and "k=9" in text

    def test_reduced_messages_echoed(self):
        cfg = small(n_list=[3], large_n_threshold=3, large_n_messages=10)
        rep = run_experiment1(cfg)
        assert rep.extra["reduced_messages"] == {"3": 10}
        assert rep.cells[0].messages_per_matrix == 10


class TestTrials:
    def test_trials_are_consistent(self):
        cfg = small()
        tr = slot_trials(cfg, 4, 0.5, 0)
        pts = tr.model.constellation.points
        resid = tr.y - pts[tr.x_true] @ tr.model.h.T
        assert np.mean(np.abs(resid) ** 2) == pytest.approx(2 * 0.25, rel=0.3)

    def test_same_matrices_across_sigma(self):
        cfg = small()
        a = slot_trials(cfg, 4, 0.5, 1).model.h
        b = slot_trials(cfg, 4, 1.0, 1).model.h
        assert np.array_equal(a, b)


class TestObservation2:
    def test_positive_and_deterministic(self):
        a = run_observation2(6, 50, SeededRng(3))
        b = run_observation2(6, 50, SeededRng(3))
        assert a == b
        assert a[0] > 0 and a[1] > 0

    def test_domain(self):
        with pytest.raises(ValueError):
            run_observation2(5, 10, SeededRng(0))
