import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ilv.service import create_app
from ilv.service.state import InstanceConfig, DimSpec, replay_events

BUDGET_DIMS = [
    {"label": "National Defense", "baseline": 600.0, "kind": "expenditure"},
    {"label": "Healthcare", "baseline": 1100.0, "kind": "expenditure"},
    {"label": "Transportation, Science, & Education", "baseline": 190.0,
     "kind": "expenditure"},
    {"label": "Individual Income Tax", "baseline": 1600.0, "kind": "income"},
]


@pytest.fixture()
def client(tmp_path):
    app = create_app(data_dir=tmp_path, assignment_seed=7)
    with TestClient(app) as c:
        c.data_dir = tmp_path
        yield c


def create_linf_instance(client, instance_id="linf-0", r0=80.0, batch_size=10,
                         starts=None, q="inf"):
    starts = starts or [[600.0, 1100.0, 190.0, 1600.0],
                        [500.0, 1000.0, 250.0, 1500.0]]
    resp = client.post("/instances", json={
        "kind": "constrained", "q": q, "r0": r0,
        "batch_size": batch_size, "decay_every": 60,
        "dims": BUDGET_DIMS, "starting_points": starts,
        "instance_id": instance_id,
    })
    assert resp.status_code == 200, resp.text
    return resp.json()["instance_id"]


def assign(client, session):
    r = client.post("/assign", json={"session_id": session})
    assert r.status_code == 200, r.text
    return r.json()["instance_id"]


class TestInstanceLifecycle:
    def test_create_and_state(self, client):
        iid = create_linf_instance(client)
        state = client.get(f"/instances/{iid}").json()
        assert state["status"] == "open"
        assert [d["label"] for d in state["dims"]] == [d["label"] for d in BUDGET_DIMS]
        assert len(state["sets"]) == 2
        assert state["sets"][0]["radius"] == 80.0
        assert state["sets"][0]["version"] == 0

    def test_full_elicitation_instance(self, client):
        resp = client.post("/instances", json={
            "kind": "full_elicitation", "dims": BUDGET_DIMS,
            "starting_points": [[600.0, 1100.0, 190.0, 1600.0]],
            "instance_id": "full-0"})
        assert resp.status_code == 200
        state = client.get("/instances/full-0").json()
        assert state["kind"] == "full_elicitation"
        assert state["sets"][0]["radius"] is None

    def test_dimension_mismatch_rejected(self, client):
        resp = client.post("/instances", json={
            "kind": "constrained", "q": "inf", "r0": 10.0, "dims": BUDGET_DIMS,
            "starting_points": [[600.0, 1100.0]], "instance_id": "bad"})
        assert resp.status_code == 422

    def test_unknown_instance_404(self, client):
        assert client.get("/instances/nope").status_code == 404


class TestAssignment:
    def test_sticky(self, client):
        create_linf_instance(client, "a")
        create_linf_instance(client, "b")
        first = assign(client, "sess-1")
        again = assign(client, "sess-1")
        assert first == again

    def test_balanced_across_instances(self, client):
        ids = [create_linf_instance(client, f"inst-{i}") for i in range(10)]
        counts = {i: 0 for i in ids}
        for k in range(1000):
            counts[assign(client, f"sess-{k}")] += 1
        for iid, n in counts.items():
            assert abs(n - 100) <= 10, (iid, n)

    def test_busy_instances_skipped(self, client):
        create_linf_instance(client, "busy-1", batch_size=2)
        create_linf_instance(client, "busy-2", batch_size=2)
        # fill busy-1's first set to one-short-of-commit
        s = "filler"
        while assign(client, s) != "busy-1":
            s += "x"
        cur = client.get("/instances/busy-1/current", params={"session": s}).json()
        pt = cur["sets"][0]["point"]
        r = client.post("/instances/busy-1/votes", json={
            "session_id": s, "set_index": 0, "point": pt, "point_version": 0})
        assert r.status_code == 200
        assert client.get("/instances/busy-1").json()["busy"]
        for k in range(6):
            assert assign(client, f"avoid-{k}") == "busy-2"

    def test_all_closed_rejected(self, client):
        create_linf_instance(client, "only")
        client.post("/instances/only/close")
        r = client.post("/assign", json={"session_id": "late"})
        assert r.status_code == 409


class TestCurrent:
    def test_fresh_instance_view(self, client):
        iid = create_linf_instance(client, starts=[[660.0, 1100.0, 190.0, 1600.0]])
        sess = "v-1"
        assign(client, sess)
        cur = client.get(f"/instances/{iid}/current", params={"session": sess}).json()
        s0 = cur["sets"][0]
        assert s0["point"] == [660.0, 1100.0, 190.0, 1600.0]
        assert s0["radius"] == 80.0
        # +10% defense, everything else on baseline
        assert s0["percent_from_baseline"][0] == pytest.approx(10.0)
        assert s0["percent_from_baseline"][1] == pytest.approx(0.0)
        # deficit = expenditures - income
        assert s0["deficit"] == pytest.approx(660 + 1100 + 190 - 1600)

    def test_requires_assignment(self, client):
        iid = create_linf_instance(client)
        r = client.get(f"/instances/{iid}/current", params={"session": "stranger"})
        assert r.status_code == 403


class TestVoting:
    def _setup(self, client, batch_size=10, q="inf", r0=80.0):
        iid = create_linf_instance(client, "vote-inst", batch_size=batch_size, q=q,
                                   r0=r0)
        sessions = []
        for k in range(batch_size + 3):
            s = f"voter-{k}"
            assert assign(client, s) == iid
            sessions.append(s)
        return iid, sessions

    def test_batch_of_ten_commits_projected_mean(self, client):
        iid, sessions = self._setup(client)
        base = np.array([600.0, 1100.0, 190.0, 1600.0])
        submitted = []
        for k, s in enumerate(sessions[:10]):
            pt = base + np.array([(-1) ** k * 40.0, 20.0, -10.0, 30.0])
            submitted.append(pt)
            r = client.post(f"/instances/{iid}/votes", json={
                "session_id": s, "set_index": 0, "point": pt.tolist(),
                "point_version": 0})
            assert r.status_code == 200, r.text
            body = r.json()
            assert body["committed"] == (k == 9)
        cur = client.get(f"/instances/{iid}/current",
                         params={"session": sessions[0]}).json()
        expected = np.mean(np.stack(submitted), axis=0)
        np.testing.assert_allclose(cur["sets"][0]["point"], expected, atol=1e-9)
        assert cur["sets"][0]["version"] == 1

    def test_constraint_violation_reports_overage(self, client):
        iid, sessions = self._setup(client, q="1", r0=50.0)
        base = [600.0, 1100.0, 190.0, 1600.0]
        pt = [630.0, 1070.0, 190.0, 1600.0]  # L1 usage 60 > 50
        r = client.post(f"/instances/{iid}/votes", json={
            "session_id": sessions[0], "set_index": 0, "point": pt,
            "point_version": 0})
        assert r.status_code == 422
        body = r.json()
        assert body["reason"] == "constraint_violation"
        assert body["info"]["overage"] == pytest.approx(10.0)

    def test_duplicate_submission_rejected(self, client):
        iid, sessions = self._setup(client)
        pt = [610.0, 1100.0, 190.0, 1600.0]
        ok = client.post(f"/instances/{iid}/votes", json={
            "session_id": sessions[0], "set_index": 0, "point": pt,
            "point_version": 0})
        assert ok.status_code == 200
        dup = client.post(f"/instances/{iid}/votes", json={
            "session_id": sessions[0], "set_index": 0, "point": pt,
            "point_version": 0})
        assert dup.status_code == 409
        assert dup.json()["reason"] == "duplicate_submission"
        # the same session may still vote in the other set
        other = client.post(f"/instances/{iid}/votes", json={
            "session_id": sessions[0], "set_index": 1,
            "point": [500.0, 1000.0, 250.0, 1500.0], "point_version": 0})
        assert other.status_code == 200

    def test_stale_point_rejected_after_commit(self, client):
        iid, sessions = self._setup(client, batch_size=2)
        base = [600.0, 1100.0, 190.0, 1600.0]
        for s in sessions[:2]:
            assert client.post(f"/instances/{iid}/votes", json={
                "session_id": s, "set_index": 0, "point": base,
                "point_version": 0}).status_code == 200
        stale = client.post(f"/instances/{iid}/votes", json={
            "session_id": sessions[2], "set_index": 0, "point": base,
            "point_version": 0})
        assert stale.status_code == 409
        body = stale.json()
        assert body["reason"] == "stale_point"
        assert body["info"]["current_version"] == 1

    def test_radius_halves_after_decay_every_submissions(self, client):
        # decay_every=60: submission 61 sees r0/2
        iid = create_linf_instance(client, "decay", batch_size=1, r0=80.0)
        for k in range(60):
            s = f"d-{k}"
            assign(client, s)
            cur = client.get(f"/instances/{iid}/current", params={"session": s}).json()
            assert cur["sets"][0]["radius"] == pytest.approx(80.0)
            r = client.post(f"/instances/{iid}/votes", json={
                "session_id": s, "set_index": 0, "point": cur["sets"][0]["point"],
                "point_version": cur["sets"][0]["version"]})
            assert r.status_code == 200
        s = "d-60"
        assign(client, s)
        cur = client.get(f"/instances/{iid}/current", params={"session": s}).json()
        assert cur["sets"][0]["radius"] == pytest.approx(40.0)


class TestFullElicitation:
    def _setup(self, client):
        resp = client.post("/instances", json={
            "kind": "full_elicitation", "dims": BUDGET_DIMS,
            "starting_points": [[600.0, 1100.0, 190.0, 1600.0]],
            "instance_id": "full"})
        assert resp.status_code == 200
        assign(client, "e-1")
        return "full"

    def test_all_default_weights_flagged(self, client):
        iid = self._setup(client)
        r = client.post(f"/instances/{iid}/elicitation", json={
            "session_id": "e-1", "ideals": [600.0, 1100.0, 190.0, 1600.0],
            "weights": [5.0, 5.0, 5.0, 5.0], "deficit_weight": 5.0})
        assert r.status_code == 200
        assert r.json()["all_default_weights"] is True
        agg = client.get(f"/instances/{iid}/elicitation/aggregate").json()
        assert agg["all_default_weight_count"] == 1
        assert agg["medians"] == [600.0, 1100.0, 190.0, 1600.0]

    def test_slider_maximum_accepted(self, client):
        iid = self._setup(client)
        r = client.post(f"/instances/{iid}/elicitation", json={
            "session_id": "e-1", "ideals": [1200.0, 2200.0, 380.0, 3200.0],
            "weights": [10.0, 0.0, 5.0, 7.0], "deficit_weight": 0.0})
        assert r.status_code == 200
        assert r.json()["all_default_weights"] is False

    def test_weight_out_of_range_rejected(self, client):
        iid = self._setup(client)
        r = client.post(f"/instances/{iid}/elicitation", json={
            "session_id": "e-1", "ideals": [600.0, 1100.0, 190.0, 1600.0],
            "weights": [11.0, 5.0, 5.0, 5.0], "deficit_weight": 5.0})
        assert r.status_code == 422
        assert r.json()["reason"] == "weight_out_of_range"


class TestExportAndReplay:
    def test_fresh_instance_trajectory_length_one(self, client):
        iid = create_linf_instance(client)
        out = client.get(f"/instances/{iid}/export").json()
        assert len(out["trajectories"][0]) == 1
        assert out["trajectories"][0][0]["t"] == 0

    def test_commits_extend_trajectory(self, client):
        iid = create_linf_instance(client, "traj", batch_size=2)
        base = [600.0, 1100.0, 190.0, 1600.0]
        for k in range(4):
            s = f"t-{k}"
            assign(client, s)
            cur = client.get(f"/instances/{iid}/current", params={"session": s}).json()
            client.post(f"/instances/{iid}/votes", json={
                "session_id": s, "set_index": 0, "point": cur["sets"][0]["point"],
                "point_version": cur["sets"][0]["version"]})
        out = client.get(f"/instances/{iid}/export").json()
        assert len(out["trajectories"][0]) == 3  # start + 2 commits

    def test_event_log_replay_reproduces_state(self, client):
        iid = create_linf_instance(client, "replayed", batch_size=3)
        rng = np.random.default_rng(3)
        for k in range(8):
            s = f"r-{k}"
            assign(client, s)
            cur = client.get(f"/instances/{iid}/current", params={"session": s}).json()
            view = cur["sets"][0]
            move = rng.uniform(-1, 1, size=4) * view["radius"]
            pt = np.asarray(view["point"]) + move
            client.post(f"/instances/{iid}/votes", json={
                "session_id": s, "set_index": 0, "point": pt.tolist(),
                "point_version": view["version"]})
        out = client.get(f"/instances/{iid}/export").json()
        state = replay_events(out["events"])
        live = client.app.state.store._instances[iid]
        assert state.to_dict() == live.to_dict()

    def test_restart_from_disk_preserves_state(self, client):
        iid = create_linf_instance(client, "persisted", batch_size=2)
        for k in range(5):
            s = f"p-{k}"
            assign(client, s)
            cur = client.get(f"/instances/{iid}/current", params={"session": s}).json()
            client.post(f"/instances/{iid}/votes", json={
                "session_id": s, "set_index": 0, "point": cur["sets"][0]["point"],
                "point_version": cur["sets"][0]["version"]})
        before = client.app.state.store._instances[iid].to_dict()
        fresh = create_app(data_dir=client.data_dir)
        after = fresh.state.store._instances[iid].to_dict()
        assert before == after
        # sticky assignments survive the restart too
        assert fresh.state.store.assignment_of("p-0") == iid

    def test_close_discards_partial_batch(self, client):
        iid = create_linf_instance(client, "closing", batch_size=10)
        s = "c-1"
        assign(client, s)
        cur = client.get(f"/instances/{iid}/current", params={"session": s}).json()
        client.post(f"/instances/{iid}/votes", json={
            "session_id": s, "set_index": 0, "point": cur["sets"][0]["point"],
            "point_version": 0})
        out = client.post(f"/instances/{iid}/close").json()
        assert out == {"status": "closed", "pending_discarded": 1}
        state = client.get(f"/instances/{iid}").json()
        assert state["status"] == "closed"
        assert state["sets"][0]["pending"] == 0

    def test_snapshot_written_and_used(self, client):
        iid = create_linf_instance(client, "snappy", batch_size=1)
        for k in range(120):
            s = f"s-{k}"
            assign(client, s)
            cur = client.get(f"/instances/{iid}/current", params={"session": s}).json()
            client.post(f"/instances/{iid}/votes", json={
                "session_id": s, "set_index": 0, "point": cur["sets"][0]["point"],
                "point_version": cur["sets"][0]["version"]})
        snap = client.data_dir / "instances" / iid / "snapshot.json"
        assert snap.exists()
        payload = json.loads(snap.read_text())
        assert payload["seq"] % 100 == 0
        fresh = create_app(data_dir=client.data_dir)
        assert fresh.state.store._instances[iid].to_dict() == \
            client.app.state.store._instances[iid].to_dict()


class TestFeedback:
    def test_feedback_appended(self, client):
        r = client.post("/feedback", json={"session_id": "s", "text": "neat idea"})
        assert r.status_code == 200
        lines = (client.data_dir / "feedback.ndjson").read_text().strip().split("\n")
        assert json.loads(lines[-1])["text"] == "neat idea"


class TestInvariants:
    def test_every_logged_vote_satisfies_its_recorded_constraint(self, client):
        from ilv.geometry import lq_norm
        from ilv.service.state import (
            CONSTRAINT_SLACK,
            InstanceConfig,
            apply_event,
            initial_state,
        )
        iid = create_linf_instance(client, "sound", batch_size=3, q="2", r0=60.0)
        rng = np.random.default_rng(9)
        for k in range(11):
            s = f"snd-{k}"
            assign(client, s)
            cur = client.get(f"/instances/{iid}/current", params={"session": s}).json()
            view = cur["sets"][0]
            direction = rng.normal(size=4)
            direction /= np.linalg.norm(direction)
            pt = np.asarray(view["point"]) + rng.uniform(0, view["radius"]) * direction
            pt = np.clip(pt, 0, None)
            client.post(f"/instances/{iid}/votes", json={
                "session_id": s, "set_index": 0, "point": pt.tolist(),
                "point_version": view["version"]})
        events = client.get(f"/instances/{iid}/export").json()["events"]
        state = initial_state(InstanceConfig.from_dict(events[0]["payload"]))
        checked = 0
        for ev in events[1:]:
            if ev["type"] == "vote":
                p = ev["payload"]
                current = state.sets[p["set_index"]].current
                usage = lq_norm(np.asarray(p["point"]) - current, 2.0)
                assert usage <= p["radius"] * (1 + CONSTRAINT_SLACK)
                checked += 1
            apply_event(state, ev)
        assert checked >= 9

    def test_concurrent_submissions_across_instances(self, client):
        import threading
        ids = [create_linf_instance(client, f"conc-{i}", batch_size=5)
               for i in range(3)]
        sessions = {}
        for i, iid in enumerate(ids):
            for k in range(10):
                s = f"conc-{i}-{k}"
                while assign(client, s) != iid:
                    s += "x"
                sessions.setdefault(iid, []).append(s)
        store = client.app.state.store
        errors = []

        def worker(iid, sess_list):
            try:
                for s in sess_list:
                    view = store.view(iid)["sets"][0]
                    store.submit_vote(iid, s, 0, view["point"], view["version"])
            except Exception as exc:  # stale rejections would show up here
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(iid, sess))
                   for iid, sess in sessions.items()]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        for iid in ids:
            view = store.view(iid)["sets"][0]
            assert view["submissions"] == 10
            assert view["version"] == 2  # two committed batches of five
