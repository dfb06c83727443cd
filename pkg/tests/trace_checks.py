"""Trace-scan assertions shared by the engine tests and the acceptance suite."""
from __future__ import annotations


def master_iterations(trace):
    return [e for e in trace if e["kind"] == "master_iteration"]


def check_inactive_freeze(trace, n_workers):
    """Master-side w_j and phi_j digests stay fixed while j is inactive."""
    prev = None
    for event in master_iterations(trace):
        payload = event["payload"]
        if prev is not None:
            active = set(payload["active"])
            for j in range(n_workers):
                if j not in active:
                    assert payload["w_digest"][j] == prev["w_digest"][j], (
                        f"inactive worker {j} moved at t={event['t']}"
                    )
                    assert payload["phi_digest"][j] == prev["phi_digest"][j], (
                        f"inactive worker {j} dual moved at t={event['t']}"
                    )
        prev = payload


def check_staleness(trace, tau):
    worst = 0
    for event in master_iterations(trace):
        worst = max(worst, max(event["payload"]["staleness"]))
    assert worst <= tau, f"observed staleness {worst} exceeds tau={tau}"
    return worst


def check_plane_dual_pairing(trace):
    for event in master_iterations(trace):
        payload = event["payload"]
        assert len(payload["duals"]) == payload["planes"], (
            f"dual/plane pairing broken at t={event['t']}"
        )


def check_boxes(trace, bounds, tol=1e-12):
    for event in master_iterations(trace):
        p = event["payload"]
        assert p["w_max"] <= bounds.alpha1 + tol
        assert p["z_max"] <= bounds.alpha1 + tol
        assert 0.0 <= p["h"] <= bounds.alpha2 + tol
        assert p["dual_max"] <= bounds.alpha3 + tol
        assert p["phi_max"] <= bounds.alpha4 + tol


def check_plane_broadcast_consistency(trace):
    for event in trace:
        if event["kind"] == "plane_broadcast":
            p = event["payload"]
            assert all(d == p["digest"] for d in p["worker_digests"]), (
                f"worker plane copies diverge at t={event['t']}"
            )


def check_vtime_monotone(trace):
    last = -float("inf")
    for event in trace:
        assert event["vtime"] >= last
        last = event["vtime"]


def run_all_checks(trace, n_workers, tau, bounds):
    check_inactive_freeze(trace, n_workers)
    check_staleness(trace, tau)
    check_plane_dual_pairing(trace)
    check_boxes(trace, bounds)
    check_plane_broadcast_consistency(trace)
    check_vtime_monotone(trace)
