"""Metric definitions on hand-built episode results."""

import numpy as np
import pytest

from curbnav.metrics import (
    EpisodeResult,
    cumulative_cost,
    make_report,
    route_completion,
    sns,
    spl,
)


def result(**kw):
    base = dict(
        scene_ref="straight-0",
        success=True,
        agent_path_length=52.0,
        shortest_path_length=50.0,
        collision_steps=0,
        social_violation_steps=0,
        completed_route=48.0,
        total_route=48.0,
        terminal="success",
    )
    base.update(kw)
    return EpisodeResult(**base)


def test_spl_weighs_success_by_path_ratio():
    rs = [
        result(),  # 50/52
        result(scene_ref="a", success=False, terminal="timeout", completed_route=10.0),
        result(scene_ref="b", agent_path_length=50.0),  # ratio 1
    ]
    assert spl(rs) == pytest.approx((50.0 / 52.0 + 0.0 + 1.0) / 3.0)


def test_spl_never_exceeds_one_when_agent_beats_reference():
    # agent path shorter than the reference: ratio clips at 1 via the max
    assert spl([result(agent_path_length=40.0)]) == pytest.approx(1.0)


def test_spl_requires_positive_shortest():
    with pytest.raises(ValueError):
        spl([result(shortest_path_length=0.0)])


def test_route_completion_fraction_and_success_override():
    r = result(success=False, terminal="timeout", completed_route=12.0, total_route=48.0)
    assert route_completion(r) == pytest.approx(0.25)
    # success forces 1.0 even though progress stops short of the last vertex
    assert route_completion(result(completed_route=45.0)) == 1.0


def test_cumulative_cost_is_collision_tick_count():
    assert cumulative_cost(result(collision_steps=7)) == 7.0


def test_sns_blend():
    assert sns(result()) == pytest.approx(1.0)
    assert sns(result(social_violation_steps=50)) == pytest.approx(0.75)
    assert sns(result(social_violation_steps=500)) == pytest.approx(0.5)  # exposure saturates
    assert sns(result(success=False, terminal="timeout")) == pytest.approx(0.5)


def test_result_invariants():
    with pytest.raises(ValueError):
        result(completed_route=50.0, total_route=48.0)
    with pytest.raises(ValueError):
        result(agent_path_length=-1.0)


def test_report_sorts_and_aggregates():
    rs = [
        result(scene_ref="z-9", collision_steps=2),
        result(scene_ref="a-1", success=False, terminal="timeout", completed_route=24.0),
    ]
    rep = make_report(rs, config_digest="cafe", seeds=[3])
    assert [r.scene_ref for r in rep.results] == ["a-1", "z-9"]
    agg = rep.aggregate()
    assert agg["SR"] == pytest.approx(0.5)
    assert agg["CC"] == pytest.approx(1.0)
    assert agg["RC"] == pytest.approx((1.0 + 0.5) / 2)
    assert set(agg) == {"SR", "SPL", "SNS", "CC", "RC"}


def test_aggregate_empty_raises():
    with pytest.raises(ValueError):
        make_report([]).aggregate()


def test_from_episode_clamps_progress_overshoot():
    # progress can float a hair past total; the adapter clamps it
    from curbnav.records import EpisodeRecord

    ep = EpisodeRecord(
        episode_id="e",
        scene_ref="straight-0",
        source="expert",
        seed=0,
        created_at="",
        terminal="success",
        metrics=dict(
            success=1.0,
            agent_path_length=10.0,
            shortest_path_length=9.0,
            collision_steps=0,
            social_violation_steps=0,
            completed_route=48.0 + 1e-12,
            total_route=48.0,
        ),
    )
    r = EpisodeResult.from_episode(ep)
    assert r.completed_route == pytest.approx(48.0)
    assert np.isclose(route_completion(r), 1.0)
