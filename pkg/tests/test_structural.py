import numpy as np
import pytest
import torch

from amcen.errors import DataError
from amcen.structural import SnapshotGraph, StructuralEncoder, compose

from oracles import assert_grads_close, brute_circular_correlation, central_difference_grads

@pytest.fixture(autouse=True)
def _double_precision():
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)


def make_graph(facts, num_entities, num_relations):
    return SnapshotGraph.from_facts(np.asarray(facts, dtype=np.int64).reshape(-1, 4),
                                    num_entities, num_relations)


class TestCompose:
    def test_subtract_identity(self):
        h = torch.randn(5, 8)
        assert torch.allclose(compose(h, torch.zeros(5, 8), "subtract"), h)

    def test_multiply_identity(self):
        h = torch.randn(5, 8)
        assert torch.allclose(compose(h, torch.ones(5, 8), "multiply"), h)

    def test_circular_correlation_matches_double_loop(self):
        rng = np.random.default_rng(3)
        for d in (3, 4, 7):
            a, b = rng.normal(size=d), rng.normal(size=d)
            expected = brute_circular_correlation(a, b)
            got = compose(torch.from_numpy(a), torch.from_numpy(b), "circular_correlation")
            assert np.allclose(got.numpy(), expected, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            compose(torch.zeros(3), torch.zeros(4), "subtract")

    def test_unknown_operator(self):
        with pytest.raises(DataError):
            compose(torch.zeros(3), torch.zeros(3), "conv")


class TestSnapshotGraph:
    def test_edge_layout(self):
        g = make_graph([[0, 0, 1, 0]], num_entities=3, num_relations=2)
        # base edge targets the subject, inverse targets the object, then self-loops
        assert g.target.tolist() == [0, 1, 0, 1, 2]
        assert g.source.tolist() == [1, 0, 0, 1, 2]
        assert g.rel.tolist() == [0, 2, 4, 4, 4]

    def test_rejects_inverse_ids(self):
        with pytest.raises(DataError, match="base facts"):
            make_graph([[0, 3, 1, 0]], num_entities=3, num_relations=2)

    def test_rejects_out_of_range_entity(self):
        with pytest.raises(DataError, match="out of range"):
            make_graph([[0, 0, 9, 0]], num_entities=3, num_relations=2)


class TestEncodeSnapshot:
    def test_zero_layers_identity(self):
        enc = StructuralEncoder(4, num_layers=0)
        ents = torch.randn(3, 4)
        rels = torch.randn(5, 4)
        g = make_graph([[0, 0, 1, 0]], 3, 2)
        out_e, out_r = enc(g, ents, rels)
        assert torch.equal(out_e, ents) and torch.equal(out_r, rels)

    def test_self_loop_fixed_point(self):
        # single node, self-loop only, identity weight, subtract composition
        # against a zero self-loop relation embedding, identity activation
        enc = StructuralEncoder(3, num_layers=1, composition="subtract", activation="identity")
        with torch.no_grad():
            enc.w_self[0].copy_(torch.eye(3))
        ents = torch.tensor([[0.5, -1.0, 2.0]])
        rels = torch.zeros(1, 3)  # only the self-loop relation exists here
        g = make_graph(np.empty((0, 4)), num_entities=1, num_relations=0)
        out_e, _ = enc(g, ents, rels)
        assert torch.allclose(out_e, ents)

    def test_manual_forward_three_nodes(self):
        # straight-line recomputation of one layer on facts (0,0,1) and (1,0,2)
        d, E, R = 2, 3, 1
        enc = StructuralEncoder(d, num_layers=1, composition="subtract", activation="relu")
        rng = np.random.default_rng(11)
        w_out = rng.normal(size=(d, d))
        w_in = rng.normal(size=(d, d))
        w_self = rng.normal(size=(d, d))
        w_rel = rng.normal(size=(d, d))
        with torch.no_grad():
            enc.w_out[0].copy_(torch.from_numpy(w_out))
            enc.w_in[0].copy_(torch.from_numpy(w_in))
            enc.w_self[0].copy_(torch.from_numpy(w_self))
            enc.w_rel[0].copy_(torch.from_numpy(w_rel))
        ents = rng.normal(size=(E, d))
        rels = rng.normal(size=(2 * R + 1, d))  # rows: base 0, inverse 1, self-loop 2

        def relu(x):
            return np.maximum(x, 0.0)

        msg = lambda h_src, h_r, w: (h_src - h_r) @ w
        expected = np.zeros((E, d))
        expected[0] = relu(msg(ents[1], rels[0], w_out) + msg(ents[0], rels[2], w_self))
        expected[1] = relu(msg(ents[2], rels[0], w_out) + msg(ents[0], rels[1], w_in)
                           + msg(ents[1], rels[2], w_self))
        expected[2] = relu(msg(ents[1], rels[1], w_in) + msg(ents[2], rels[2], w_self))
        expected_rels = rels @ w_rel

        g = make_graph([[0, 0, 1, 0], [1, 0, 2, 0]], E, R)
        out_e, out_r = enc(g, torch.from_numpy(ents), torch.from_numpy(rels))
        assert np.allclose(out_e.detach().numpy(), expected, atol=1e-12)
        assert np.allclose(out_r.detach().numpy(), expected_rels, atol=1e-12)

    def test_isolated_entities_get_self_loop_branch(self):
        enc = StructuralEncoder(4, num_layers=2)
        ents = torch.randn(6, 4)
        rels = torch.randn(5, 4)
        g = make_graph([[0, 0, 1, 0]], 6, 2)
        out_e, _ = enc(g, ents, rels)
        assert torch.isfinite(out_e).all()
        assert out_e.shape == (6, 4)

    def test_permutation_equivariance(self):
        torch.manual_seed(0)
        enc = StructuralEncoder(4, num_layers=2, composition="multiply")
        E, R = 5, 2
        facts = np.array([[0, 0, 1, 0], [1, 1, 2, 0], [3, 0, 4, 0]])
        ents = torch.randn(E, 4)
        rels = torch.randn(2 * R + 1, 4)
        out, _ = enc(make_graph(facts, E, R), ents, rels)

        perm = np.array([2, 0, 4, 1, 3])  # new id of each old id
        permuted_facts = facts.copy()
        permuted_facts[:, 0] = perm[facts[:, 0]]
        permuted_facts[:, 2] = perm[facts[:, 2]]
        ents_perm = torch.empty_like(ents)
        ents_perm[perm] = ents
        out_perm, _ = enc(make_graph(permuted_facts, E, R), ents_perm, rels)
        assert torch.allclose(out_perm[perm], out, atol=1e-12)

    def test_locality_beyond_l_hops(self):
        torch.manual_seed(1)
        E, R, L = 6, 1, 2
        enc = StructuralEncoder(4, num_layers=L, composition="multiply")
        # chain 0-1-2-3-4, plus far-away node 5; node 5 and node 4 are > L hops from 0
        facts = np.array([[0, 0, 1, 0], [1, 0, 2, 0], [2, 0, 3, 0], [3, 0, 4, 0]])
        ents = torch.randn(E, 4)
        rels = torch.randn(3, 4)
        base, _ = enc(make_graph(facts, E, R), ents, rels)
        ents2 = ents.clone()
        ents2[5] += 10.0
        ents2[4] += 3.0
        moved, _ = enc(make_graph(facts, E, R), ents2, rels)
        assert torch.allclose(moved[0], base[0], atol=1e-12)
        assert not torch.allclose(moved[2], base[2], atol=1e-6)  # 2 hops: affected by 4

    def test_softmax_relu_activation_normalizes_rows(self):
        enc = StructuralEncoder(4, num_layers=1, activation="softmax_relu")
        ents = torch.randn(3, 4)
        rels = torch.randn(3, 4)
        out, _ = enc(make_graph([[0, 0, 1, 0]], 3, 1), ents, rels)
        assert torch.allclose(out.sum(dim=-1), torch.ones(3))

    def test_gradients_match_finite_differences(self):
        torch.manual_seed(2)
        E, R, d = 5, 2, 4
        enc = StructuralEncoder(d, num_layers=2, composition="multiply")
        ents = torch.randn(E, d, requires_grad=True)
        rels = torch.randn(2 * R + 1, d, requires_grad=True)
        facts = np.array([[0, 0, 1, 0], [1, 1, 2, 0], [2, 0, 3, 0]])
        g = make_graph(facts, E, R)
        target = torch.randn(E, d)

        def loss_fn():
            out_e, out_r = enc(g, ents, rels)
            return ((out_e - target) ** 2).sum() + (out_r ** 2).sum()

        loss = loss_fn()
        params = {"ents": ents, "rels": rels,
                  **{n: p for n, p in enc.named_parameters()}}
        grads = torch.autograd.grad(loss, list(params.values()))
        analytic = {n: g.numpy() for n, g in zip(params, grads)}
        numeric = central_difference_grads(loss_fn, params)
        assert_grads_close(analytic, numeric)
