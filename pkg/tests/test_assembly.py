import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from elastobem.assembly import (
    F_DRX, F_DRY, KernelContext, assemble, assemble_mass, assemble_operators, classify_pairs, dump_matrix_csv,
    fundamental_tensor, local_blocks, quadrature_moments, series_moments, weight_combos, _geo,
)
from elastobem.core import BlockMatrix, DomainError, ElasticMedium
from elastobem.geometry import BoundaryMesh, Circle, Kite, RoundedTriangle, sample_curve
from elastobem.quadrature import corner_rule, diagonal_rule, tensor_rule
from elastobem.solver import Manufactured, PointSourceP
from elastobem.specfun import hankel1

MEDIUM = ElasticMedium()


def segment_mesh(h):
    """Triangle whose first segment has length h."""
    return BoundaryMesh(np.array([[0.0, 0.0], [h, 0.0], [0.5 * h, 2.0 * h]]), (0,), (3,))


class TestFundamentalTensor:
    def test_against_hankel_composition(self):
        ctx = KernelContext.build(MEDIUM, sample_curve(Circle(), 8))
        E = fundamental_tensor(ctx, np.array([1.0, 0.0]), np.array([0.0, 0.0]))
        H = lambda n, x: hankel1(n, x)  # noqa: E731
        iso = 0.25j * H(0, 1.0) - 0.25j * (H(1, 1.0) - 0.5 * H(1, 0.5))
        rr = 0.25j * (H(2, 1.0) - 0.25 * H(2, 0.5))
        assert_allclose(E, [[iso + rr, 0], [0, iso]], atol=1e-15)

    def test_symmetry(self):
        ctx = KernelContext.build(MEDIUM.with_omega(3.0), sample_curve(Circle(), 8))
        rng = np.random.default_rng(0)
        x, y = rng.uniform(-2, 2, (100, 2)), rng.uniform(-2, 2, (100, 2))
        assert_allclose(fundamental_tensor(ctx, x, y), np.swapaxes(fundamental_tensor(ctx, y, x), -1, -2),
                        rtol=0, atol=1e-14)

    def test_coincident_points(self):
        ctx = KernelContext.build(MEDIUM, sample_curve(Circle(), 8))
        with pytest.raises(DomainError):
            fundamental_tensor(ctx, [0.5, 0.5], [0.5, 0.5])


class TestSameElement:
    @pytest.mark.parametrize("omega", [1.0, 5.0])
    def test_series_matches_graded_quadrature(self, omega):
        mesh = segment_mesh(0.1)
        ctx = KernelContext.build(MEDIUM.with_omega(omega), mesh)
        e = np.array([0])
        ser = series_moments(ctx, e)
        quad = quadrature_moments(ctx, e, e, diagonal_rule())
        # D r . n vanishes on a straight element; series stores zero there
        quad[:, [F_DRX, F_DRY]] = 0
        geo = _geo(mesh, e)
        bs = local_blocks(ctx.medium, ser, geo, geo)
        bq = local_blocks(ctx.medium, quad, geo, geo)
        for op in ("V", "K", "Kp", "W"):
            scale = np.abs(bq[op]).max()
            assert_allclose(bs[op], bq[op], rtol=0, atol=1e-8 * max(scale, 1e-3)), op

    def test_single_layer_vanishes_with_h(self):
        norms = []
        for h in (0.1, 0.01, 0.001):
            mesh = segment_mesh(h)
            ctx = KernelContext.build(MEDIUM, mesh)
            e = np.array([0])
            g = _geo(mesh, e)
            norms.append(np.abs(local_blocks(MEDIUM, series_moments(ctx, e), g, g, ("V",))["V"]).max())
        assert norms[0] > norms[1] > norms[2]
        scaled = [v / (h * h * abs(math.log(h))) for v, h in zip(norms, (0.1, 0.01, 0.001))]
        assert max(scaled) / min(scaled) < 2.0

    def test_hypersingular_diagonal_is_order_one(self):
        vals = []
        for h in (0.1, 0.01):
            mesh = segment_mesh(h)
            ctx = KernelContext.build(MEDIUM, mesh)
            e = np.array([0])
            g = _geo(mesh, e)
            vals.append(np.abs(local_blocks(MEDIUM, series_moments(ctx, e), g, g, ("W",))["W"]).max())
        assert 0.1 < vals[1] / vals[0] < 10

    def test_adjoint_double_layer_orientation(self):
        # reversing the element swaps its end nodes and flips t, n
        mesh = segment_mesh(0.1)
        rev = BoundaryMesh(np.array([mesh.nodes[1], mesh.nodes[0], mesh.nodes[2] * [1, -1]]), (0,), (3,))
        out = []
        for m in (mesh, rev):
            ctx = KernelContext.build(MEDIUM, m)
            e = np.array([0])
            g = _geo(m, e)
            out.append(local_blocks(MEDIUM, series_moments(ctx, e), g, g, ("Kp",))["Kp"][0])
        # rotation by pi maps one element frame to the other
        assert_allclose(np.abs(out[0][0]).sum(), np.abs(out[1][1]).sum(), rtol=1e-12)


class TestOffDiagonal:
    def setup_method(self):
        self.mesh = sample_curve(Circle(), 16)
        self.ctx = KernelContext.build(MEDIUM, self.mesh)
        self.geo = lambda e: _geo(self.mesh, e)  # noqa: E731

    def _blocks(self, e1, e2, rule):
        mom = quadrature_moments(self.ctx, e1, e2, rule)
        return local_blocks(MEDIUM, mom, self.geo(e1), self.geo(e2))

    def test_regular_pairs_self_refinement(self):
        e1 = np.array([0, 0, 3, 5])
        e2 = np.array([4, 8, 11, 12])
        lo = self._blocks(e1, e2, tensor_rule(8))
        hi = self._blocks(e1, e2, tensor_rule(32))
        for op in lo:
            assert_allclose(lo[op], hi[op], rtol=0, atol=1e-9 * np.abs(hi[op]).max())

    def test_adjacent_pairs_graded_rule(self):
        e1 = np.array([0, 5])
        e2 = self.mesh.next[e1]
        lo = self._blocks(e1, e2, corner_rule((1, -1), 8, 10))
        hi = self._blocks(e1, e2, corner_rule((1, -1), 24, 40))
        for op in lo:
            assert_allclose(lo[op], hi[op], rtol=0, atol=1e-9 * np.abs(hi[op]).max())

    def test_classification(self):
        e1 = np.repeat(np.arange(16), 16)
        e2 = np.tile(np.arange(16), 16)
        cats = classify_pairs(self.mesh, e1, e2)
        total = sum(len(v) for v in cats.values())
        assert total == 256
        assert len(cats["same"]) == 16 and len(cats["next"]) == 16 and len(cats["prev"]) == 16

    def test_far_pair_decay(self):
        far = []
        for d in (50.0, 200.0):
            nodes = np.array([[0, 0], [0.1, 0], [0.05, 0.1], [d, 0], [d + 0.1, 0], [d + 0.05, 0.1]])
            mesh = BoundaryMesh(nodes, (0, 3), (3, 3))
            ctx = KernelContext.build(MEDIUM, mesh)
            mom = quadrature_moments(ctx, np.array([0]), np.array([3]), tensor_rule(8))
            far.append(np.abs(local_blocks(MEDIUM, mom, _geo(mesh, [0]), _geo(mesh, [3]), ("V",))["V"]).max())
        assert_allclose(far[0] / far[1], 2.0, rtol=0.2)


@pytest.fixture(scope="module")
def ops128():
    medium = MEDIUM.with_omega(3.0)
    mesh = sample_curve(RoundedTriangle(), 128)
    ctx = KernelContext.build(medium, mesh)
    return ctx, assemble_operators(ctx)


class TestGlobalOperators:
    def _traces(self, ctx):
        man = Manufactured(PointSourceP((0.0, 0.0)))
        src = man.source
        mesh = ctx.mesh
        u = src.displacement(mesh.nodes, ctx.medium).ravel()
        t = src.traction(mesh.midpoints, mesh.normals, ctx.medium).ravel()
        return u, t

    def test_calderon_first_row(self, ops128):
        ctx, ops = ops128
        u, t = self._traces(ctx)
        I1, I2 = assemble_mass(ctx)
        lhs = (0.5 * I1.data - ops["K"].data) @ u
        res = lhs + ops["V"].data @ t
        assert np.linalg.norm(res) < 1e-2 * np.linalg.norm(lhs)

    def test_calderon_second_row(self, ops128):
        ctx, ops = ops128
        u, t = self._traces(ctx)
        I1, I2 = assemble_mass(ctx)
        wu = ops["W"].data @ u
        res = wu + (0.5 * I2.data + ops["Kp"].data) @ t
        assert np.linalg.norm(res) < 1e-2 * np.linalg.norm(wu)

    def test_finite(self, ops128):
        _, ops = ops128
        assert all(m.is_finite() for m in ops.values())

    def test_deterministic_and_threaded(self):
        mesh = sample_curve(Kite(), 40)
        ctx1 = KernelContext.build(MEDIUM, mesh)
        ctx2 = KernelContext.build(MEDIUM, mesh, threads=2)
        a = assemble_operators(ctx1)
        b = assemble_operators(ctx1)
        c = assemble_operators(ctx2)
        for op in a:
            assert np.array_equal(a[op].data, b[op].data)
            assert np.array_equal(a[op].data, c[op].data)

    def test_combined_targets_match_separate(self):
        mesh = sample_curve(Kite(), 24)
        ctx = KernelContext.build(MEDIUM, mesh)
        ops = assemble_operators(ctx)
        A = BlockMatrix(24)
        assemble(ctx, [(A, {"W": 1.0, "K": -2j})])
        assert_allclose(A.data, ops["W"].data - 2j * ops["K"].data, rtol=1e-13, atol=1e-13)

    def test_unknown_operator(self):
        ctx = KernelContext.build(MEDIUM, sample_curve(Circle(), 8))
        with pytest.raises(ValueError):
            assemble(ctx, [(BlockMatrix(8), {"X": 1.0})])


class TestMass:
    def test_uniform_values(self):
        mesh = sample_curve(Circle(), 12)
        h = mesh.lengths[0]
        I1, I2 = assemble_mass(mesh)
        assert_allclose(I1.get_block(3, 3), 2 * h / 3 * np.eye(2), rtol=1e-13)
        assert_allclose(I1.get_block(3, 4), h / 6 * np.eye(2), rtol=1e-13)
        assert_allclose(I1.get_block(3, 2), h / 6 * np.eye(2), rtol=1e-13)
        assert_allclose(I1.get_block(3, 6), 0)
        assert_allclose(I2.get_block(3, 3), h / 2 * np.eye(2), rtol=1e-13)
        assert_allclose(I2.get_block(3, 2), h / 2 * np.eye(2), rtol=1e-13)
        assert_allclose(I2.get_block(3, 4), 0)

    def test_row_sums(self):
        mesh = sample_curve(Kite(), 30)
        I1, I2 = assemble_mass(mesh)
        h = mesh.lengths
        expect = 0.5 * (h[mesh.prev] + h)
        assert_allclose(I1.blocks.sum(axis=2)[:, 0, 0], expect, rtol=1e-14)
        assert_allclose(I2.blocks.sum(axis=2)[:, 1, 1], expect, rtol=1e-14)


def test_weight_combos_partition():
    xi = np.linspace(-1, 1, 5)
    w = weight_combos(xi, xi[::-1])
    assert_allclose(w[:, 1] + w[:, 2], 1)
    assert_allclose(w[:, 5:].sum(axis=1), 1)


def test_dump_matrix_csv(tmp_path):
    m = BlockMatrix(2)
    m.set_block(0, 1, [[1 + 2j, 0], [0, 3]])
    n = dump_matrix_csv(m, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "row,col,re,im" and n == 2
    assert lines[1] == "0,2,1.0,2.0"
