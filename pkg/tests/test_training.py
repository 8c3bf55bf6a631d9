import dataclasses

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from porepinn.bc import dirichlet
from porepinn.cases import Budget, CaseSpec, LossWeights, preset
from porepinn.net import Jet, NetworkConfig, ParameterSet, TrainingDivergence, forward_jet, init_network
from porepinn.physics import TransportParams, residual_ade_1d
from porepinn.training import CollocationSet, LossProblem, assemble_loss, sample_points, train_case


def test_case1_counts():
    case = preset("case1").case
    s = sample_points(case, Budget(5000, 5000), 0)
    c = s.counts
    assert c["pde"] == 5000 and c["boundary"] + c["initial"] == 5000 and c["data"] == 0
    # two faces and the t = 0 segment share the budget by (equal) normalized measure
    assert sorted([len(b.points) for b in s.boundary] + [c["initial"]]) == [1666, 1667, 1667]


def test_sampling_is_deterministic():
    case = preset("case3").case
    a, b = sample_points(case, Budget(300, 300, 4), 5), sample_points(case, Budget(300, 300, 4), 5)
    assert np.array_equal(a.interior, b.interior) and np.array_equal(a.initial, b.initial)
    assert all(np.array_equal(x.points, y.points) for x, y in zip(a.boundary, b.boundary))
    c = sample_points(case, Budget(300, 300, 4), 6)
    assert not np.array_equal(a.interior, c.interior)


@given(st.sampled_from(["case1", "case2-advection", "case3"]), st.integers(0, 10_000), st.integers(1, 200))
def test_points_satisfy_region_predicates(name, seed, n):
    case = preset(name).case
    s = sample_points(case, Budget(n, n, 4), seed)
    d = case.input_dim
    assert np.all((s.interior >= 0) & (s.interior <= 1))
    assert np.all(s.initial[:, -1] == 0)
    assert np.all((s.initial >= 0) & (s.initial <= 1))
    for b in s.boundary:
        axis = {"x0": 0, "x1": 0, "y0": 1, "y1": 1}[b.face]
        want = 0.0 if b.face.endswith("0") else 1.0
        assert np.all(b.points[:, axis] == want)
        assert b.points.shape[1] == d and np.all((b.points >= 0) & (b.points <= 1))


def test_case3_anchors_map_to_normalized_pressure():
    case = preset("case3").case
    s = sample_points(case, Budget(10, 10, 4), 0)
    corners = {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}
    assert {tuple(p[:2]) for p in s.anchors} == corners
    assert np.all(s.anchor_fields == case.fields.index("P"))
    assert np.allclose(s.anchor_targets, (0.55 - 0.1) / 0.9)


def test_injection_segment_targets():
    case = preset("case2-dispersion").case
    s = sample_points(case, Budget(10, 2000), 0)
    b = next(b for b in s.boundary if b.face == "x0")
    kind, target = b.conditions["C"]
    y = b.points[:, 1]
    assert kind == "dirichlet"
    assert np.array_equal(target, np.where((y >= 0.3) & (y <= 0.7), 1.0, 0.0))


def _constant_net(cfg, value):
    vec = np.zeros(cfg.n_params)
    vec[-cfg.output_dim:] = value
    return ParameterSet.unflatten(cfg, vec)


def test_constant_network_matching_ic_gives_zero_loss():
    case = preset("case1").case
    cfg = NetworkConfig(2, (4,), 1)
    sets = sample_points(case, Budget(0, 50), 0)
    sets = dataclasses.replace(sets, boundary=[])
    total, terms = assemble_loss(_constant_net(cfg, 0.0), sets, LossWeights(), case)
    assert total == 0.0 and all(v == 0 for v in terms.values())


def test_single_point_pde_term_equals_squared_residual():
    case = preset("case1").case
    cfg = NetworkConfig(2, (5, 5), 1, first_layer_frequency=3.0)
    p = init_network(cfg, 2)
    x = np.array([[0.4, 0.3]])
    sets = CollocationSet(x, [], np.zeros((0, 2)), {"C": np.zeros(0)}, np.zeros((0, 2)),
                          np.zeros(0, int), np.zeros(0), 0)
    _, terms = assemble_loss(p, sets, LossWeights(), case)
    r = residual_ade_1d(forward_jet(p, x).component(0), case.transport, case.normalization)
    assert terms["PDE"] == pytest.approx(float(r[0] ** 2), rel=1e-12)


@given(st.integers(0, 1000), st.floats(0.1, 10), st.floats(0.1, 10))
def test_loss_terms_nonnegative_and_weights_linear(seed, w_b, w_p):
    case = preset("case3").case
    cfg = NetworkConfig(3, (6, 6), 2, first_layer_frequency=3.0)
    p = init_network(cfg, seed)
    sets = sample_points(case, Budget(40, 40, 4), seed)
    w = LossWeights(1.0, w_b, 1.0, w_p)
    total, terms = assemble_loss(p, sets, w, case)
    assert all(v >= 0 for v in terms.values())
    total2, terms2 = assemble_loss(p, sets, dataclasses.replace(w, w_p=2 * w_p), case)
    assert terms2 == terms
    assert total2 - total == pytest.approx(w_p * terms["PDE"], rel=1e-10, abs=1e-14)


def test_exact_solution_has_tiny_loss():
    # C = 1 - x/L solves the steady u = 0 problem with these Dirichlet ends
    case = CaseSpec(name="linear", dim=1, L=2.0, T=1.0, transport=TransportParams(D0=0.1, u=(0.0,), C0=1.0),
                    c_bc={"x0": dirichlet(1.0), "x1": dirichlet(0.0)}, c_initial=0.0)
    cfg = NetworkConfig(2, (1,), 1)
    sets = sample_points(case, Budget(200, 200), 0)
    problem = LossProblem(case, dataclasses.replace(sets, initial=np.zeros((0, 2))), LossWeights(), cfg)

    class Linear:
        def jet(self, x, d2_axes=None, **kw):
            x = torch.as_tensor(x)
            d1 = torch.zeros(len(x), 2, 1, dtype=x.dtype)
            d1[:, 0, 0] = -1.0
            return Jet(1 - x[:, :1], d1, torch.zeros(len(x), d2_axes or 2, 1, dtype=x.dtype))

        def value(self, x):
            return 1 - torch.as_tensor(x)[:, :1]

    terms = problem.terms(Linear())
    assert sum(float(v) for v in problem.weighted(terms).values()) < 1e-8


def test_network_shape_mismatch_rejected():
    case = preset("case3").case
    with pytest.raises(ValueError):
        LossProblem(case, sample_points(case, Budget(5, 5), 0), LossWeights(), NetworkConfig(3, (4,), 1))


def test_zero_iteration_budget_returns_initial_model():
    b = preset("case1").smoke(points=50, iters=0)
    model, report = train_case(b)
    assert not report.converged and report.iterations == 0
    assert model.params == init_network(b.net, b.train.seed)


def test_short_training_reduces_loss_and_reports(tmp_path):
    b = preset("case2-dispersion").smoke(points=200, iters=30)
    model, report = train_case(b)
    init_loss = LossProblem(b.case, sample_points(b.case, b.train.budget, 0), b.train.weights,
                            b.net).evaluate(init_network(b.net, 0).flatten())[0]
    assert report.final_loss < init_loss
    best = [h["best"] for h in report.history]
    assert all(y <= x for x, y in zip(best, best[1:]))
    assert set(report.final_terms) == {"IC", "BC", "Data", "PDE"}
    report.write(tmp_path / "r.txt")
    report.write_history(tmp_path / "h.csv")
    text = (tmp_path / "r.txt").read_text()
    assert "converged=false" in text and "loss_PDE=" in text
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "iteration,loss,best,IC,BC,Data,PDE" and len(lines) == len(report.history) + 1
    assert report.inference_time_per_1e4 > 0


def test_training_is_deterministic():
    b = preset("case1").smoke(points=100, iters=10)
    m1, r1 = train_case(b)
    m2, r2 = train_case(b)
    assert m1.params.flatten().tobytes() == m2.params.flatten().tobytes()
    assert r1.final_loss == r2.final_loss


def test_warmup_changes_start():
    b = preset("case1").smoke(points=100, iters=0).replace(warmup_steps=5)
    model, report = train_case(b)
    assert report.warmup_steps == 5
    assert model.params != init_network(b.net, 0)


def test_divergence_names_term():
    case = preset("case1").case
    cfg = NetworkConfig(2, (4,), 1)
    sets = sample_points(case, Budget(10, 10), 0)
    problem = LossProblem(case, sets, LossWeights(), cfg)
    vec = np.full(cfg.n_params, np.nan)
    with pytest.raises(TrainingDivergence) as info:
        problem.objective(vec)
    assert info.value.term in {"IC", "BC", "Data", "PDE"}


def test_predict_and_velocity_shapes():
    b = preset("case3").smoke(points=20, iters=0)
    model, _ = train_case(b)
    pts = np.random.default_rng(0).random((7, 3))
    out = model.predict(pts)
    assert set(out) == {"P", "C"} and out["P"].shape == (7,)
    ux, uy, U = model.velocity(pts)
    assert np.allclose(U, np.hypot(ux, uy))
    with pytest.raises(ValueError):
        train_case(preset("case1").smoke(points=20, iters=0))[0].velocity(pts[:, :2])
