import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _scenes import line_and_tangent_curve, line_scene, two_lines
from varifold_lab.constants import build_table
from varifold_lab.geometry import closed_ball, line_at_angle as line
from varifold_lab.partition import (LadderPremiseError, SeparationError, ValueSet, cluster_values,
                                    holder_certificate, nested_partition, partition_at_scale, separate,
                                    stabilization_index)
from varifold_lab.report import PASS, PREMISE_VIOLATED
from varifold_lab.varifold import lq_seminorm, scene

T2 = build_table(1, 2, 2.0, 2, 1.0)


@pytest.fixture(scope="module")
def ladder():
    return nested_partition(two_lines(), [0, 0], 1.0, "S", 0.3, 6, T2)


def test_cluster_values_scalar():
    groups = cluster_values([0.0, 0.1, 5.0, 5.05], 0.2)
    assert [g.tolist() for g in groups] == [[0, 1], [2, 3]]
    assert len(cluster_values([0.0, 0.1, 5.0, 5.05], 3.0)) == 1


def test_cluster_values_threshold_is_closed():
    assert len(cluster_values([0.0, 1.0], 0.5)) == 1
    assert len(cluster_values([0.0, 1.0], 0.499)) == 2


def test_cluster_values_projections():
    vals = [line(0.0).proj.ravel(), line(0.0).proj.ravel(), line(math.pi / 2).proj.ravel()]
    assert [g.tolist() for g in cluster_values(vals, 0.5)] == [[0, 1], [2]]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(0.0, 2.0))
def test_cluster_thickenings_disjoint(vals, tau):
    groups = cluster_values(vals, tau)
    v = np.asarray(vals)
    assert sorted(np.concatenate(groups).tolist()) == list(range(len(vals)))
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            gap = np.min(np.abs(v[groups[i]][:, None] - v[groups[j]][None, :]))
            assert gap > 2 * tau


def test_value_set_distance():
    K = ValueSet(np.array([[0.0], [3.0]]), 0.5)
    assert K.distance(np.array([[1.0], [3.2], [-2.0]])).tolist() == pytest.approx([0.5, 0.0, 1.5])
    assert K.gap_to(ValueSet(np.array([[10.0]]), 1.0)) == pytest.approx(5.5)


def test_separate_two_lines():
    V = two_lines()
    S = V.S.reshape(len(V), -1)
    K = ValueSet(line(0.0).proj.ravel()[None, :])
    D = ValueSet(line(math.pi / 2).proj.ravel()[None, :])
    sep = separate(V, "S", D, K, 0.5)
    assert len(sep.W) + len(sep.rest) == len(V)
    assert np.allclose(sep.W.S.reshape(len(sep.W), -1), S[0])
    assert sep.additivity_gap <= 1e-12
    assert sep.cutoff_slope <= sep.cutoff_bound == pytest.approx(8.0)


def test_separate_rejects_close_sets():
    V = two_lines()
    K = ValueSet(line(0.0).proj.ravel()[None, :])
    D = ValueSet(line(math.pi / 2).proj.ravel()[None, :])
    with pytest.raises(SeparationError, match="too close"):
        separate(V, "S", D, K, 1.0)


def test_separate_rejects_stray_values():
    V = two_lines(second=math.pi / 4)
    K = ValueSet(line(0.0).proj.ravel()[None, :])
    D = ValueSet(line(math.pi / 2).proj.ravel()[None, :])
    with pytest.raises(SeparationError, match="separation violated"):
        separate(V, "S", D, K, 0.3)


def test_partition_at_scale_two_lines():
    part = partition_at_scale(two_lines(), [0, 0], 1.0, "S", 0.01, T2)
    assert len(part.components) == 2 and part.tau == 0.0
    assert part.report.status == PASS


def test_partition_at_scale_lambda_premise():
    part = partition_at_scale(two_lines(), [0, 0], 1.0, "S", 0.3, T2)
    assert part.report.status == PREMISE_VIOLATED
    lax = partition_at_scale(two_lines(), [0, 0], 1.0, "S", 0.3, T2, strict_lambda=False)
    assert lax.report.status == PASS and lax.report.data["lambda_admissible"] is False


def test_ladder_two_lines_counts(ladder):
    assert [len(l) for l in ladder.levels[1:]] == [2] * 6
    assert ladder.prime_counts()[1:] == [2] * 6
    assert ladder.k0 == 1
    assert ladder.report.status == PASS
    assert ladder.report.data["lambda_admissible"] is False


def test_ladder_two_lines_nesting(ladder):
    for k in range(1, len(ladder.levels)):
        for c in ladder.levels[k]:
            parent = ladder.component(c.parent)
            assert parent.level == k - 1
            assert np.isin(c.atom_ids, parent.atom_ids).all()
            assert c.value_support_diameter == 0.0


def test_ladder_level_zero_is_whole_ball(ladder):
    V = two_lines()
    (root,) = ladder.levels[0]
    inside = np.linalg.norm(V.x, axis=1) < 1.0
    assert sorted(root.atom_ids.tolist()) == sorted(V.ids[inside].tolist())


def test_ladder_mass_additivity(ladder):
    for k in range(1, len(ladder.levels)):
        for p in ladder.levels[k - 1]:
            kids = [c for c in ladder.levels[k] if c.parent == p.id]
            if kids:
                assert sum(c.mass for c in kids) <= p.mass + 1e-12


def test_ladder_deterministic(ladder):
    again = nested_partition(two_lines(), [0, 0], 1.0, "S", 0.3, 6, T2)
    assert again.to_json() == ladder.to_json()


def test_ladder_single_line():
    lad = nested_partition(line_scene(resolution=4000), [0, 0], 1.0, "S", 0.3, 4, T2)
    assert lad.prime_counts() == [1] * 5 and lad.k0 == 1


def test_ladder_rejects_high_density():
    V = line_scene(resolution=400, multiplicity=3)
    with pytest.raises(LadderPremiseError) as err:
        nested_partition(V, [0, 0], 1.0, "S", 0.3, 2, T2)
    assert err.value.level == 0


def test_stabilization_index():
    assert stabilization_index([1, 2, 2, 2]) == 1
    assert stabilization_index([1, 1, 2, 2]) == 2
    assert stabilization_index([1, 1, 1, 2]) == 3
    assert stabilization_index([1]) == 0


def test_holder_certificate_tangent_curve():
    r = 1e-4
    V = line_and_tangent_curve(r)
    lad = nested_partition(V, [0, 0], r, "S", T2.lambda_holder_max, 3, T2)
    sigma = r ** 0.5 * lq_seminorm(V, closed_ball([0, 0], r), "B", 2)
    rep = holder_certificate(lad, sigma, T2, q=2)
    assert rep.status == PASS
    assert len(rep.data["Upsilon"]) == 1


def test_holder_certificate_lambda_premise(ladder):
    rep = holder_certificate(ladder, 1.0, T2, q=2)
    assert rep.status == PREMISE_VIOLATED
    assert any(c.name.startswith("lambda") for c in rep.failures())
