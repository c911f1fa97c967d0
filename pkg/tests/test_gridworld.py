"""Environment rule suite: movement, pushes, consumption, penalties, termination."""

import numpy as np
import pytest

from cavdn.gridworld import (
    DEFAULT_LAYOUT,
    AgentAction,
    EpisodeError,
    GridLayout,
    GridWorld,
    LayoutError,
)

UP, DOWN, LEFT, RIGHT, IDLE = (
    AgentAction.UP,
    AgentAction.DOWN,
    AgentAction.LEFT,
    AgentAction.RIGHT,
    AgentAction.IDLE,
)


def world(agents, resources, **kwargs):
    layout = GridLayout(agent_starts=tuple(agents), resource_cells=tuple(resources))
    return GridWorld(layout, **kwargs)


class TestReset:
    def test_default_layout_places_eight_distinct_cells(self):
        env = GridWorld()
        cells = list(env.agent_positions) + list(env.layout.resource_cells)
        assert len(cells) == 8
        assert len(set(cells)) == 8
        assert env.step_count == 0
        assert not any(env.resource_consumed)

    def test_overlapping_layout_rejected(self):
        with pytest.raises(LayoutError):
            world([(0, 0), (0, 0)], [(1, 1), (2, 2)])
        with pytest.raises(LayoutError):
            world([(0, 0)], [(0, 0)])

    def test_out_of_bounds_layout_rejected(self):
        with pytest.raises(LayoutError):
            world([(4, 0)], [(1, 1)])

    def test_reset_is_deterministic(self):
        a = GridWorld(seed=1)
        b = GridWorld(seed=1)
        assert a.agent_positions == b.agent_positions
        assert np.array_equal(a.encode(), b.encode())


class TestConsumptionAndPenalties:
    def test_moving_onto_resource_grants_ten_and_consumes(self):
        env = world([(0, 0)], [(0, 1)])
        out = env.step([RIGHT])
        assert out.rewards[0] == 10.0
        assert env.resource_consumed == [True]
        assert any(e.kind == "consumption" for e in out.events)

    def test_each_resource_consumed_at_most_once(self):
        env = world([(0, 0)], [(0, 1), (3, 3)])
        env.step([RIGHT])  # consume (0, 1)
        env.step([LEFT])
        out = env.step([RIGHT])  # revisit the consumed cell
        assert out.rewards[0] == 0.0  # no second +10; safe spot exempts the penalty
        assert env.resource_consumed == [True, False]

    def test_penalty_is_one_per_unconsumed_resource(self):
        env = world([(0, 0)], [(3, 3), (3, 2), (3, 1)])
        out = env.step([IDLE])
        assert out.rewards[0] == -3.0

    def test_consuming_agent_not_penalized_same_step(self):
        # penalties use the post-consumption count and the consumer stands on a safe spot
        env = world([(0, 0)], [(0, 1), (3, 3)])
        out = env.step([RIGHT])
        assert out.rewards[0] == 10.0

    def test_resource_cell_is_safe_spot(self):
        env = world([(0, 0)], [(0, 1), (3, 3)])
        env.step([RIGHT])
        out = env.step([IDLE])  # idle on the consumed resource cell
        assert out.rewards[0] == 0.0

    def test_safe_spot_switch_excludes_consumed_cells(self):
        env = world([(0, 0)], [(0, 1), (3, 3)], safe_spot_includes_consumed=False)
        env.step([RIGHT])
        out = env.step([IDLE])
        assert out.rewards[0] == -1.0

    def test_unconsumed_resource_cell_is_safe_under_both_settings(self):
        for flag in (True, False):
            env = world([(0, 2)], [(0, 1), (3, 3)], safe_spot_includes_consumed=flag)
            out = env.step([LEFT])  # consume (0,1); (3,3) still out there
            assert out.rewards[0] == 10.0


class TestPush:
    def test_pusher_stays_and_pushed_agent_moves_one_cell(self):
        env = world([(1, 2), (1, 1)], [(3, 3), (3, 2)])
        out = env.step([LEFT, IDLE])
        assert env.agent_positions[0] == (1, 2)
        assert env.agent_positions[1] == (1, 0)
        assert any(e.kind == "push" for e in out.events)

    def test_push_into_resource_consumes_it(self):
        env = world([(1, 2), (1, 1)], [(1, 0), (3, 3)])
        out = env.step([LEFT, IDLE])
        assert env.agent_positions[1] == (1, 0)
        assert out.rewards[1] == 10.0
        assert env.resource_consumed == [True, False]

    def test_push_off_grid_fails_and_both_stay(self):
        env = world([(1, 1), (1, 0)], [(3, 3), (3, 2)])
        env.step([LEFT, IDLE])
        assert env.agent_positions == [(1, 1), (1, 0)]

    def test_push_into_occupied_cell_fails(self):
        env = world([(1, 2), (1, 1), (1, 0)], [(3, 3), (3, 2), (3, 1)])
        env.step([LEFT, IDLE, IDLE])
        assert env.agent_positions == [(1, 2), (1, 1), (1, 0)]

    def test_non_idle_agent_cannot_be_pushed(self):
        # the target moves too, so this is no push; conservative blocking keeps both in place
        env = world([(0, 0), (0, 1)], [(3, 3), (3, 2)])
        env.step([RIGHT, LEFT])
        assert env.agent_positions == [(0, 0), (0, 1)]

    def test_two_pushers_of_same_agent_both_fail(self):
        env = world([(1, 0), (0, 1), (1, 1)], [(3, 3), (3, 2), (3, 1)])
        env.step([RIGHT, DOWN, IDLE])
        assert env.agent_positions == [(1, 0), (0, 1), (1, 1)]


class TestMovement:
    def test_move_off_grid_is_blocked_but_penalties_apply(self):
        env = world([(0, 0)], [(3, 3)])
        out = env.step([UP])
        assert env.agent_positions[0] == (0, 0)
        assert out.rewards[0] == -1.0
        assert any(e.kind == "blocked" for e in out.events)

    def test_two_agents_contending_for_same_cell_both_stay(self):
        env = world([(0, 0), (0, 2)], [(3, 3), (3, 2)])
        env.step([RIGHT, LEFT])
        assert env.agent_positions == [(0, 0), (0, 2)]

    def test_trailing_move_into_movers_origin_is_blocked(self):
        # conservative single-pass resolution: B's origin still counts as occupied
        env = world([(0, 0), (0, 1)], [(3, 3), (3, 2)])
        env.step([RIGHT, RIGHT])
        assert env.agent_positions == [(0, 0), (0, 2)]


class TestTermination:
    def test_done_when_all_resources_consumed(self):
        env = world([(0, 0), (2, 2)], [(0, 1), (2, 3)], max_steps=20)
        out = env.step([RIGHT, RIGHT])
        assert out.done
        assert env.is_terminal()
        assert env.step_count < env.max_steps

    def test_done_at_max_steps_with_resources_left(self):
        env = world([(0, 0)], [(3, 3)], max_steps=3)
        for _ in range(2):
            assert not env.step([IDLE]).done
        out = env.step([IDLE])
        assert out.done
        assert out.truncated  # cut short by the limit, not finished

    def test_full_consumption_is_termination_not_truncation(self):
        env = world([(0, 0)], [(0, 1)], max_steps=5)
        out = env.step([RIGHT])
        assert out.done
        assert not out.truncated

    def test_consuming_last_resource_on_final_step_is_not_truncation(self):
        env = world([(0, 0)], [(0, 1)], max_steps=1)
        out = env.step([RIGHT])
        assert out.done
        assert not out.truncated

    def test_not_done_with_unconsumed_resource_before_limit(self):
        env = world([(0, 0)], [(0, 1), (3, 3)], max_steps=10)
        out = env.step([RIGHT])
        assert not out.done

    def test_step_after_done_raises(self):
        env = world([(0, 0)], [(0, 1)])
        env.step([RIGHT])
        with pytest.raises(EpisodeError):
            env.step([IDLE])


class TestEncoding:
    def test_length_constant_across_episode(self):
        env = GridWorld()
        dim = env.encode().shape[0]
        assert dim == 4 * 16 + 4
        rng = np.random.default_rng(0)
        while not env.is_terminal():
            out = env.step(rng.integers(0, 5, size=4))
            assert out.next_state_encoding.shape == (dim,)

    def test_consumption_flag_changes_encoding(self):
        a = world([(0, 0)], [(0, 1), (3, 3)])
        b = world([(0, 0)], [(0, 1), (3, 3)])
        b.step([RIGHT])
        b.agent_positions = [(0, 0)]  # same position, different consumption flag
        assert not np.array_equal(a.encode(), b.encode())

    def test_encode_deterministic(self):
        env = GridWorld()
        assert np.array_equal(env.encode(), env.encode())

    def test_injective_over_visited_states(self):
        rng = np.random.default_rng(42)
        seen = {}
        for _ in range(60):
            env = GridWorld()
            while not env.is_terminal():
                env.step(rng.integers(0, 5, size=4))
                key = env.encode().tobytes()
                state = (tuple(env.agent_positions), tuple(env.resource_consumed))
                assert seen.setdefault(key, state) == state


class TestInvariants:
    def test_random_rollouts_keep_agents_disjoint_and_rewards_bounded(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            env = GridWorld()
            consumption_total = 0.0
            while not env.is_terminal():
                out = env.step(rng.integers(0, 5, size=4))
                assert len(set(env.agent_positions)) == 4
                assert np.all(out.rewards >= -4.0)
                assert np.all(out.rewards <= 10.0)
                consumption_total += out.rewards[out.rewards > 0].sum()
            assert consumption_total == 10.0 * sum(env.resource_consumed)
            assert consumption_total <= 40.0

    def test_step_is_deterministic(self):
        rng = np.random.default_rng(9)
        actions = [rng.integers(0, 5, size=4) for _ in range(20)]
        results = []
        for _ in range(2):
            env = GridWorld()
            trace = []
            for a in actions:
                if env.is_terminal():
                    break
                out = env.step(a)
                trace.append((tuple(out.rewards), out.done, tuple(env.agent_positions)))
            results.append(trace)
        assert results[0] == results[1]

    def test_default_layout_min_agent_resource_distance_is_two(self):
        # keeps single-step grabs out of the greedy optimum
        for a in DEFAULT_LAYOUT.agent_starts:
            dists = [
                abs(a[0] - r[0]) + abs(a[1] - r[1]) for r in DEFAULT_LAYOUT.resource_cells
            ]
            assert min(dists) == 2
