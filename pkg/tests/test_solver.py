import math

import numpy as np
import pytest

from beltflow.experiments import REFINEMENT_ROWS, l2_error
from beltflow.flux import FluxParams
from beltflow.network import BeltArc, JunctionKind, JunctionSpec, Network, standard_topology
from beltflow.profiles import Constant, Gaussian, Zero, gaussian_bump
from beltflow.solver import (CFLViolation, NumericFault, NetworkState, initial_state,
                             junction_fluxes_diverge, junction_fluxes_merge,
                             junction_fluxes_one_to_one, make_grids, simulate, step)

from conftest import reference_run


def single_arc(velocity=1.0, capacity=1.0, lo=-math.pi, hi=0.0, inflow=None):
    arc = BeltArc("1", lo, hi, velocity, capacity)
    return Network({"1": arc}, (JunctionSpec("src", "source", out_arcs=("1",), inflow=inflow),
                                JunctionSpec("sink", "sink", in_arcs=("1",))))


class _Translate:
    """Free transport of a profile: the analytic solution on a lone arc."""

    def __init__(self, profile, velocity):
        self.profile, self.velocity = profile, velocity

    def evaluate(self, arc_id, x, t):
        return self.profile.value(np.asarray(x) - self.velocity * t)


def test_grids_cover_arcs_exactly():
    net = standard_topology("one_to_two", (4, 1, 2), mu=0.5)
    for dx in (0.1, 0.02, 0.005, 0.0037):
        for arc_id, g in make_grids(net, dx).items():
            assert g.n_cells * g.dx == pytest.approx(net.arcs[arc_id].length, rel=1e-12)
            assert abs(g.dx - dx) <= dx / 2
        assert len({g.dx for g in make_grids(net, dx).values()}) == 1


def test_steady_advection_is_preserved():
    c, a = 0.6, 1.5
    net = single_arc(a, inflow=a * c)
    grids = make_grids(net, 0.05)
    state = NetworkState(0.0, {"1": np.full(grids["1"].n_cells, c)})
    for _ in range(10):
        state = step(state, net, grids, 1e-4, 0.01)
    assert np.allclose(state.fields["1"], c, atol=1e-14)


def test_vacuum_is_preserved():
    net = standard_topology("two_to_one", (1, 2, 1), q=0.4)
    traj = simulate(net, {}, 0.5, 0.05, 5e-5, 0.01)
    assert all(np.all(s.fields[a] == 0.0) for s in traj.states for a in s.fields)


def test_step_refuses_large_dt():
    net = single_arc()
    grids = make_grids(net, 5e-3)
    state = initial_state(net, grids, {})
    with pytest.raises(CFLViolation) as info:
        step(state, net, grids, 1e-3, 0.01)
    assert info.value.limit == pytest.approx(2.5e-5, rel=1e-3)
    assert "need dt <=" in str(info.value)


def test_nan_is_reported_with_locus():
    net = single_arc()
    grids = make_grids(net, 0.1)
    fields = {"1": np.zeros(grids["1"].n_cells)}
    fields["1"][7] = np.nan
    with pytest.raises(NumericFault) as info:
        step(NetworkState(0.0, fields), net, grids, 1e-4, 0.01)
    assert info.value.arc_id == "1" and info.value.cell == 7


@pytest.mark.parametrize("dx,dt,reference", [REFINEMENT_ROWS[2] + (0.0184,), REFINEMENT_ROWS[4] + (0.0057,)])
def test_gaussian_transport_error_below_reference(dx, dt, reference):
    net = single_arc(1.0)
    bump = gaussian_bump()
    traj = simulate(net, {"1": bump}, 1.0, dx, dt, 0.01, output_times=[1.0])
    final = type(traj)(traj.network, traj.grids, traj.delta, traj.dt, traj.times[-1:], traj.states[-1:],
                       traj.inflow[-1:], traj.outflow[-1:])
    err = l2_error(final, _Translate(bump, 1.0), "mean_square")
    assert err < reference


def test_initial_state_point_and_average():
    net = single_arc()
    grids = make_grids(net, 0.01)
    g = Gaussian(-1.5, 0.4)
    point = initial_state(net, grids, {"1": g}, "point").fields["1"]
    avg = initial_state(net, grids, {"1": g}, "average").fields["1"]
    assert np.max(np.abs(point - avg)) < 1e-3
    assert avg.sum() * grids["1"].dx == pytest.approx(g.integral(-math.pi, 0.0), rel=1e-12)


def test_output_times_snap_to_steps_and_zero_horizon():
    net = single_arc()
    traj = simulate(net, {"1": Constant(0.2)}, 0.0, 0.05, 1e-4, 0.01)
    assert list(traj.times) == [0.0]
    traj = simulate(net, {"1": Constant(0.2)}, 0.01005, 0.05, 1e-4, 0.01, output_times=[0.00504])
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(0.01005)
    assert any(abs(t - 0.0050) < 1e-12 for t in traj.times)


# ---- junction fluxes ---------------------------------------------------------

def params(*velocities, delta=0.01):
    return tuple(FluxParams(a, 1.0, delta) for a in velocities)


def test_one_to_one_examples():
    p_in, p_out = params(1, 2)
    assert junction_fluxes_one_to_one(0.5, 0.0, p_in, p_out).h_out["in"] == pytest.approx(0.5)
    p_in, p_out = params(2, 1)
    jf = junction_fluxes_one_to_one(0.9, 1.0, p_in, p_out)
    assert jf.h_out["in"] == pytest.approx(1.0) and jf.congested
    assert junction_fluxes_one_to_one(0.0, 0.0, p_in, p_out).h_out["in"] == 0.0


def test_diverge_examples():
    net = standard_topology("one_to_two", (4, 1, 2), mu=0.5)
    spec = net.junction("J")
    jf = junction_fluxes_diverge(0.4, 0.0, 0.0, spec, params(4, 1, 2))
    assert jf.h_out["1"] == pytest.approx(1.6)
    assert (jf.h_in["2"], jf.h_in["3"]) == pytest.approx((0.8, 0.8))
    jf = junction_fluxes_diverge(1.0, 0.0, 0.0, spec, params(4, 1, 2))
    assert (jf.h_in["2"], jf.h_in["3"], jf.h_out["1"]) == pytest.approx((1.0, 1.0, 2.0))
    active = standard_topology("one_to_two", (4, 1, 2), mu=0.5, active=True).junction("J")
    jf = junction_fluxes_diverge(1.0, 0.0, 0.0, active, params(4, 1, 2))
    assert (jf.h_in["2"], jf.h_in["3"], jf.h_out["1"]) == pytest.approx((1.0, 2.0, 3.0))


def test_diverge_rejects_bad_mu():
    spec = JunctionSpec("J", JunctionKind.DIVERGE_PASSIVE, ("1",), ("2", "3"), mu=1.5)
    with pytest.raises(ValueError):
        junction_fluxes_diverge(0.2, 0, 0, spec, params(1, 1, 1))


def test_merge_examples():
    spec = standard_topology("two_to_one", (1, 1, 1), q=0.3).junction("J")
    jf = junction_fluxes_merge(1.0, 1.0, 0.0, spec, params(1, 1, 1))
    assert (jf.h_out["1"], jf.h_out["2"]) == pytest.approx((0.3, 0.7))
    spec = standard_topology("two_to_one", (0.25, 1, 1), q=0.5).junction("J")
    jf = junction_fluxes_merge(1.0, 1.0, 0.0, spec, params(0.25, 1, 1))
    assert (jf.h_out["1"], jf.h_out["2"]) == pytest.approx((0.25, 0.75))
    spec = standard_topology("two_to_one", (1, 1, 1), q=0.3).junction("J")
    jf = junction_fluxes_merge(0.4, 0.0, 0.0, spec, params(1, 1, 1))
    assert jf.h_out["1"] == pytest.approx(0.4) and jf.h_out["2"] == 0.0


def test_merge_rejects_bad_q():
    spec = JunctionSpec("J", JunctionKind.MERGE, ("1", "2"), ("3",), q=-0.1)
    with pytest.raises(ValueError):
        junction_fluxes_merge(0.2, 0.2, 0, spec, params(1, 1, 1))


def test_merge_run_empties_incoming_arcs():
    sc, _, traj = reference_run("test5_merge")
    final = traj.states[-1]
    incoming = sum(final.fields[a].sum() * traj.grids[a].dx for a in ("1", "2"))
    assert incoming < 1e-10
    assert final.fields["3"].sum() * traj.grids["3"].dx == pytest.approx(traj.masses()[0] - traj.outflow[-1],
                                                                          rel=1e-10)


def test_free_flow_run_matches_oracle():
    sc, oracle, traj = reference_run("test1")
    for t, state in zip(traj.times[::20], traj.states[::20]):
        for a, g in traj.grids.items():
            away = np.abs(g.cell_centers) > 0.1
            ref = oracle.evaluate(a, g.cell_centers, float(t))
            assert np.max(np.abs(state.fields[a] - ref)[away]) < 0.03


def test_source_inflow_is_accounted():
    net = single_arc(1.0, inflow=0.5)
    traj = simulate(net, {"1": Zero()}, 1.0, 0.05, 2e-4, 0.01)
    assert traj.inflow[-1] == pytest.approx(0.5, rel=1e-12)
    assert traj.masses()[-1] + traj.outflow[-1] == pytest.approx(traj.inflow[-1], rel=1e-12)
