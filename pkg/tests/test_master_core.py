import random

import pytest

from forgeci.master import (
    BadSha,
    ConfigInvalid,
    Ignored,
    MalformedPayload,
    MasterCore,
    MemoryStore,
    NoSuchJob,
    NotManuallyTriggerable,
    NotRunning,
    UnknownBuild,
    WebhookEvent,
    parse_master_config,
)
from forgeci.model import BuildState
from forgeci.status import InMemoryStatusClient, StatusState

SHA = "c" * 40
SHA2 = "e" * 40

CONFIG_TEXT = """\
port: 0
agent_port: 0
bot_account: cobrabot
retention: 30
maintenance_time: 03:00
repo_path: repo
data_dir: data
versions:
  - R2014b
  - R2015b
  - R2016b
  - R2017b
agents:
  - linux-agent linux
  - mac-agent macOS
  - win7-agent windows7
  - win10-agent windows10
jobs:
  - COBRAToolbox-branches-auto-linux branches_auto linux R2014b,R2015b,R2016b,R2017b
  - COBRAToolbox-branches-auto-macOS branches_auto macOS R2014b,R2015b,R2016b,R2017b
  - COBRAToolbox-branches-auto-windows7 branches_auto windows7 R2014b,R2015b,R2016b,R2017b
  - COBRAToolbox-branches-auto-windows10 branches_auto windows10 R2014b,R2015b,R2016b,R2017b
  - COBRAToolbox-pr-auto-linux pr_auto linux R2014b,R2015b,R2016b,R2017b
  - COBRAToolbox-pr-auto-macOS pr_auto macOS R2016b
  - COBRAToolbox-pr-auto-windows7 pr_auto windows7 R2016b
  - COBRAToolbox-pr-auto-windows10 pr_auto windows10 R2016b
  - COBRAToolbox-branches-manual-linux branches_manual linux R2014b,R2015b,R2016b,R2017b
  - COBRAToolbox-pr-manual-linux pr_manual linux R2014b,R2015b,R2016b,R2017b
compatibility:
  - linux R2016b solverA 1.0
"""


class FakeClock:
    def __init__(self, start: float = 1000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


def make_core(tmp_path, clock=None, store=None, notify=None):
    config = parse_master_config(CONFIG_TEXT, config_dir=str(tmp_path))
    repo = tmp_path / "repo"
    repo.mkdir(exist_ok=True)
    (repo / "travis.yml").write_text("script:\n  - echo test\n")
    return MasterCore(
        config,
        store if store is not None else MemoryStore(),
        status_client=InMemoryStatusClient(),
        notify=notify,
        clock=clock or FakeClock(),
        status_sleep=lambda _: None,
    )


def push_event(sha=SHA, branch="develop", sender="alice", delivery="d1"):
    return WebhookEvent(
        kind="push", repo_id="r", sha=sha, branch=branch, sender=sender, delivery_id=delivery
    )


def register_all(core):
    core.register_agent("linux-agent", "linux")
    core.register_agent("mac-agent", "macOS")
    core.register_agent("win7-agent", "windows7")
    core.register_agent("win10-agent", "windows10")


class TestIngestWebhook:
    def test_develop_push_creates_16_pending(self, tmp_path):
        core = make_core(tmp_path)
        group = core.ingest_webhook(push_event())
        assert len(group.builds) == 16
        assert core.counts() == {"total": 16, "pending": 16, "running": 0, "terminal": 0}
        statuses = core.status_client.list(SHA)
        assert len(statuses) == 16
        assert all(s.state is StatusState.PENDING for s in statuses)

    def test_pr_event_creates_7(self, tmp_path):
        core = make_core(tmp_path)
        event = WebhookEvent(kind="pr_opened", repo_id="r", sha=SHA, pr_number=12, delivery_id="d2")
        group = core.ingest_webhook(event)
        assert len(group.builds) == 7

    def test_bot_sender_ignored(self, tmp_path):
        core = make_core(tmp_path)
        result = core.ingest_webhook(push_event(sender="cobrabot"))
        assert result == Ignored("self-event")
        assert core.counts()["total"] == 0

    def test_status_changed_ignored(self, tmp_path):
        core = make_core(tmp_path)
        event = WebhookEvent(kind="status_changed", repo_id="r", sha=SHA, pr_number=1, delivery_id="d")
        assert core.ingest_webhook(event) == Ignored("no-builds")

    def test_unwatched_branch_ignored(self, tmp_path):
        core = make_core(tmp_path)
        assert core.ingest_webhook(push_event(branch="feature-x")) == Ignored("no-builds")

    def test_duplicate_delivery_creates_one_group(self, tmp_path):
        core = make_core(tmp_path)
        first = core.ingest_webhook(push_event())
        second = core.ingest_webhook(push_event())
        assert second == Ignored("duplicate-delivery")
        assert len(core.groups) == 1
        assert core.counts()["total"] == len(first.builds)

    def test_malformed_payloads(self):
        with pytest.raises(MalformedPayload):
            WebhookEvent(kind="push", repo_id="r", sha="short")
        with pytest.raises(MalformedPayload):
            WebhookEvent(kind="push", repo_id="r", sha=SHA)  # no branch
        with pytest.raises(MalformedPayload):
            WebhookEvent(kind="pr_opened", repo_id="r", sha=SHA)  # no pr number
        with pytest.raises(MalformedPayload):
            WebhookEvent.from_payload("push", "d", {"sha": SHA, "branch": None})


class TestManualTrigger:
    def test_manual_linux_job_runs_four_versions(self, tmp_path):
        core = make_core(tmp_path)
        group = core.manual_trigger("COBRAToolbox-branches-manual-linux", SHA, actor="admin")
        assert len(group.builds) == 4
        assert core.store.audit[-1]["action"] == "manual_trigger"
        assert core.store.audit[-1]["actor"] == "admin"

    def test_auto_job_not_triggerable(self, tmp_path):
        core = make_core(tmp_path)
        with pytest.raises(NotManuallyTriggerable):
            core.manual_trigger("COBRAToolbox-branches-auto-linux", SHA)

    def test_no_such_job(self, tmp_path):
        core = make_core(tmp_path)
        with pytest.raises(NoSuchJob):
            core.manual_trigger("nope", SHA)

    def test_bad_sha(self, tmp_path):
        core = make_core(tmp_path)
        with pytest.raises(BadSha):
            core.manual_trigger("COBRAToolbox-pr-manual-linux", "xyz")
        with pytest.raises(BadSha):
            core.manual_trigger("COBRAToolbox-pr-manual-linux", "abc12")  # too short

    def test_abbreviated_sha_expansion(self, tmp_path):
        core = make_core(tmp_path)
        core.ingest_webhook(push_event())
        group = core.manual_trigger("COBRAToolbox-branches-manual-linux", SHA[:8])
        assert group.commit.sha == SHA

    def test_unknown_abbreviation_rejected(self, tmp_path):
        core = make_core(tmp_path)
        with pytest.raises(BadSha):
            core.manual_trigger("COBRAToolbox-branches-manual-linux", "abcdef0")


class TestDispatch:
    def test_one_build_per_agent(self, tmp_path):
        core = make_core(tmp_path)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        assignments = core.dispatch()
        assert len(assignments) == 1
        agent_name, assignment = assignments[0]
        assert agent_name == "linux-agent"
        assert core.get_build(assignment.build_id).state is BuildState.RUNNING
        # nothing more until the result comes back
        assert core.dispatch() == []

    def test_wrong_platform_not_assigned(self, tmp_path):
        core = make_core(tmp_path)
        core.register_agent("mac-agent", "macOS")
        event = WebhookEvent(kind="pr_opened", repo_id="r", sha=SHA, pr_number=5, delivery_id="d")
        core.ingest_webhook(event)
        assignments = core.dispatch()
        # only the single macOS cell goes out; the 4 queued linux builds wait
        assert len(assignments) == 1
        build = core.get_build(assignments[0][1].build_id)
        assert build.platform == "macOS"
        assert core.counts()["pending"] == 6

    def test_four_agents_run_simultaneously(self, tmp_path):
        core = make_core(tmp_path)
        register_all(core)
        core.ingest_webhook(push_event())
        assignments = core.dispatch()
        assert len(assignments) == 4
        assert core.counts() == {"total": 16, "pending": 12, "running": 4, "terminal": 0}
        platforms = {core.get_build(a.build_id).platform for _, a in assignments}
        assert platforms == {"linux", "macOS", "windows7", "windows10"}

    def test_fifo_per_platform(self, tmp_path):
        core = make_core(tmp_path)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        started = []
        for _ in range(4):
            (_, assignment), = core.dispatch()
            started.append(assignment.build_id)
            core.record_result(assignment.build_id, 0)
        assert started == sorted(started)

    def test_assignment_carries_script_and_bindings(self, tmp_path):
        core = make_core(tmp_path)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        (_, assignment), = core.dispatch()
        bindings = dict(assignment.bindings)
        assert bindings["ARCH"] == "linux"
        assert bindings["MATLAB_VER"] in ("R2014b", "R2015b", "R2016b", "R2017b")
        assert "echo test" in assignment.script_text
        assert assignment.script_text.startswith("#!/bin/sh\nset -e\n")

    def test_unparseable_pipeline_aborts_build(self, tmp_path):
        core = make_core(tmp_path)
        (tmp_path / "repo" / "travis.yml").write_text("bogus_key:\n  - x\n")
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        assert core.dispatch() == []
        aborted = [b for b in core.builds.values() if b.state is BuildState.ABORTED]
        assert len(aborted) == 1
        assert "pipeline_error" in aborted[0].cause


class TestRecordResult:
    def prepared(self, tmp_path, notify=None):
        core = make_core(tmp_path, notify=notify)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        (_, assignment), = core.dispatch()
        return core, assignment.build_id

    def test_success_green_status(self, tmp_path):
        core, build_id = self.prepared(tmp_path)
        build = core.record_result(build_id, 0)
        assert build.state is BuildState.SUCCESS
        context = f"ci/{build.job_name}/{build.version}/{build.platform}"
        status = {s.context: s for s in core.status_client.list(SHA)}[context]
        assert status.state is StatusState.SUCCESS

    def test_failure_red_status_and_notification(self, tmp_path):
        notifications = []
        core, build_id = self.prepared(tmp_path, notify=lambda b, m: notifications.append(m))
        build = core.record_result(build_id, 1)
        assert build.state is BuildState.FAILURE
        context = f"ci/{build.job_name}/{build.version}/{build.platform}"
        status = {s.context: s for s in core.status_client.list(SHA)}[context]
        assert status.state is StatusState.FAILURE
        assert len(notifications) == 1

    def test_agent_freed_after_result(self, tmp_path):
        core, build_id = self.prepared(tmp_path)
        core.record_result(build_id, 0)
        assert core.agents["linux-agent"].state.value == "idle"
        assert core.dispatch()  # next build flows

    def test_unknown_build(self, tmp_path):
        core = make_core(tmp_path)
        with pytest.raises(UnknownBuild):
            core.record_result(999, 0)

    def test_not_running(self, tmp_path):
        core = make_core(tmp_path)
        core.ingest_webhook(push_event())
        with pytest.raises(NotRunning):
            core.record_result(1, 0)

    def test_duration_recorded(self, tmp_path):
        clock = FakeClock()
        core = make_core(tmp_path, clock=clock)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        (_, a), = core.dispatch()
        clock.advance(10.0)
        core.record_result(a.build_id, 0)
        trend = core.build_time_trend("COBRAToolbox-branches-auto-linux")
        assert trend.points == ((a.build_id, 10000, BuildState.SUCCESS),)


class TestLiveness:
    def test_lost_agent_fails_running_build(self, tmp_path):
        clock = FakeClock()
        notifications = []
        core = make_core(tmp_path, clock=clock, notify=lambda b, m: notifications.append(m))
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        (_, assignment), = core.dispatch()
        clock.advance(31.0)  # timeout is 30s
        lost = core.check_liveness()
        assert lost == ["linux-agent"]
        build = core.get_build(assignment.build_id)
        assert build.state is BuildState.FAILURE
        assert build.cause == "agent_lost"
        assert build.exit_code == 1
        assert notifications

    def test_heartbeat_keeps_agent_alive(self, tmp_path):
        clock = FakeClock()
        core = make_core(tmp_path, clock=clock)
        core.register_agent("linux-agent", "linux")
        clock.advance(25.0)
        core.heartbeat("linux-agent")
        clock.advance(25.0)
        assert core.check_liveness() == []

    def test_reconnect_supersedes_same_name(self, tmp_path):
        core = make_core(tmp_path)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        (_, assignment), = core.dispatch()
        superseded = core.register_agent("linux-agent", "linux")
        assert superseded == []  # same name: no foreign registration displaced
        # old registration's build failed, fresh agent is idle
        assert core.get_build(assignment.build_id).state is BuildState.FAILURE
        assert core.agents["linux-agent"].state.value == "idle"

    def test_new_agent_displaces_platform_holder(self, tmp_path):
        core = make_core(tmp_path)
        core.register_agent("linux-agent", "linux")
        superseded = core.register_agent("linux-agent-2", "linux")
        assert superseded == ["linux-agent"]
        assert list(core.agents) == ["linux-agent-2"]


class TestTrend:
    def test_two_builds_trend(self, tmp_path):
        clock = FakeClock()
        core = make_core(tmp_path, clock=clock)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        (_, a1), = core.dispatch()
        clock.advance(10)
        core.record_result(a1.build_id, 0)
        (_, a2), = core.dispatch()
        clock.advance(20)
        core.record_result(a2.build_id, 1)
        trend = core.build_time_trend("COBRAToolbox-branches-auto-linux")
        assert trend.points == (
            (a1.build_id, 10000, BuildState.SUCCESS),
            (a2.build_id, 20000, BuildState.FAILURE),
        )

    def test_empty_series(self, tmp_path):
        core = make_core(tmp_path)
        assert core.build_time_trend("COBRAToolbox-pr-manual-linux").points == ()

    def test_no_such_job(self, tmp_path):
        core = make_core(tmp_path)
        with pytest.raises(NoSuchJob):
            core.build_time_trend("ghost")


class TestRetention:
    def fill_job(self, core, n):
        core.register_agent("linux-agent", "linux")
        for i in range(n):
            core.manual_trigger("COBRAToolbox-pr-manual-linux", SHA if i % 2 else SHA2)
        # pr-manual expands 4 versions per trigger; run them all to completion
        while True:
            assignments = core.dispatch()
            if not assignments:
                break
            for _, a in assignments:
                core.append_log(a.build_id, b"log line\n")
                core.record_result(a.build_id, 0)

    def test_keep_30_of_35(self, tmp_path):
        core = make_core(tmp_path)
        core.register_agent("linux-agent", "linux")
        # 35 builds on one job: 8 manual triggers x 4 versions = 32, plus 3 more
        for i in range(9):
            core.manual_trigger("COBRAToolbox-pr-manual-linux", SHA)
        while True:
            assignments = core.dispatch()
            if not assignments:
                break
            for _, a in assignments:
                core.append_log(a.build_id, b"x")
                core.record_result(a.build_id, 0)
        job_builds = [b for b in core.builds.values() if b.job_name == "COBRAToolbox-pr-manual-linux"]
        assert len(job_builds) == 36
        # keep only the newest 30 logs; 6 discarded
        assert core.prune_retention(keep_last=30) == 6
        survivors = [b for b in sorted(job_builds, key=lambda b: b.id) if core.store.has_log(b.log_ref)]
        assert len(survivors) == 30
        assert survivors[0].id == sorted(b.id for b in job_builds)[6]
        # records all kept
        assert len([b for b in core.builds.values() if b.job_name == "COBRAToolbox-pr-manual-linux"]) == 36

    def test_fewer_than_keep_is_noop(self, tmp_path):
        core = make_core(tmp_path)
        self.fill_job(core, 1)
        assert core.prune_retention(keep_last=30) == 0

    def test_keep_one_leaves_newest(self, tmp_path):
        core = make_core(tmp_path)
        core.register_agent("linux-agent", "linux")
        core.manual_trigger("COBRAToolbox-pr-manual-linux", SHA)
        while True:
            assignments = core.dispatch()
            if not assignments:
                break
            for _, a in assignments:
                core.append_log(a.build_id, b"x")
                core.record_result(a.build_id, 0)
        assert core.prune_retention(keep_last=1) == 3
        newest = max(b.id for b in core.builds.values())
        assert core.store.has_log(core.get_build(newest).log_ref)


class TestMaintenance:
    def core_at(self, tmp_path, hour, minute=0):
        import datetime as dt

        start = dt.datetime(2024, 5, 20, hour, minute).timestamp()
        clock = FakeClock(start)
        return make_core(tmp_path, clock=clock), clock

    def test_due_and_idle_reloads(self, tmp_path):
        core, clock = self.core_at(tmp_path, hour=2)
        clock.advance(2 * 3600)  # now 04:00, past 03:00
        assert core.maintenance_reload() == ("reloaded", "")

    def test_due_but_busy_skips(self, tmp_path):
        core, clock = self.core_at(tmp_path, hour=2)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        core.dispatch()
        clock.advance(2 * 3600)
        assert core.maintenance_reload() == ("skipped", "busy")

    def test_not_due_skips(self, tmp_path):
        core, clock = self.core_at(tmp_path, hour=4)
        clock.advance(3600)  # 05:00, already past today's 03:00 but started after it
        assert core.maintenance_reload() == ("skipped", "not-due")

    def test_reload_happens_once_per_night(self, tmp_path):
        core, clock = self.core_at(tmp_path, hour=2)
        clock.advance(2 * 3600)
        assert core.maintenance_reload() == ("reloaded", "")
        clock.advance(60)
        assert core.maintenance_reload() == ("skipped", "not-due")
        clock.advance(24 * 3600)
        assert core.maintenance_reload() == ("reloaded", "")

    def test_invalid_config_keeps_old(self, tmp_path):
        config_path = tmp_path / "master.yml"
        config_path.write_text(CONFIG_TEXT)
        repo = tmp_path / "repo"
        repo.mkdir(exist_ok=True)
        (repo / "travis.yml").write_text("script:\n  - echo ok\n")
        import datetime as dt

        clock = FakeClock(dt.datetime(2024, 5, 20, 2, 0).timestamp())
        core = MasterCore(
            parse_master_config(CONFIG_TEXT, config_dir=str(tmp_path)),
            MemoryStore(),
            clock=clock,
            config_path=str(config_path),
            status_sleep=lambda _: None,
        )
        config_path.write_text("retention: -5\n")
        clock.advance(2 * 3600)
        old = core.config
        with pytest.raises(ConfigInvalid):
            core.maintenance_reload()
        assert core.config is old
        # fixing the file lets the next attempt through
        config_path.write_text(CONFIG_TEXT)
        assert core.maintenance_reload() == ("reloaded", "")


class TestPersistenceRecovery:
    def test_pending_builds_survive_restart(self, tmp_path):
        store = MemoryStore()
        core = make_core(tmp_path, store=store)
        core.ingest_webhook(push_event())
        assert core.counts()["pending"] == 16

        reborn = make_core(tmp_path, store=store)
        assert reborn.counts()["pending"] == 16
        reborn.register_agent("linux-agent", "linux")
        assert len(reborn.dispatch()) == 1

    def test_running_builds_orphaned_on_restart(self, tmp_path):
        store = MemoryStore()
        core = make_core(tmp_path, store=store)
        core.register_agent("linux-agent", "linux")
        core.ingest_webhook(push_event())
        (_, a), = core.dispatch()

        reborn = make_core(tmp_path, store=store)
        build = reborn.get_build(a.build_id)
        assert build.state is BuildState.FAILURE
        assert build.cause == "orphaned"

    def test_build_ids_continue_after_restart(self, tmp_path):
        store = MemoryStore()
        core = make_core(tmp_path, store=store)
        core.ingest_webhook(push_event())
        reborn = make_core(tmp_path, store=store)
        group = reborn.manual_trigger("COBRAToolbox-branches-manual-linux", SHA2)
        assert min(group.builds) == 17


class TestStatusMatrix:
    def test_aggregation_through_core(self, tmp_path):
        core = make_core(tmp_path)
        register_all(core)
        core.ingest_webhook(push_event())
        while True:
            assignments = core.dispatch()
            if not assignments:
                break
            for name, a in assignments:
                build = core.get_build(a.build_id)
                # fail exactly the windows10/R2017b cell
                bad = build.platform == "windows10" and build.version == "R2017b"
                core.record_result(a.build_id, 1 if bad else 0)
        matrix = core.status_matrix(SHA)
        assert matrix.platform("windows10") is StatusState.FAILURE
        for p in ("linux", "macOS", "windows7"):
            assert matrix.platform(p) is StatusState.SUCCESS
        assert matrix.global_state is StatusState.FAILURE

    def test_badges_follow_develop_head(self, tmp_path):
        core = make_core(tmp_path)
        register_all(core)
        core.ingest_webhook(push_event())
        while True:
            assignments = core.dispatch()
            if not assignments:
                break
            for _, a in assignments:
                core.record_result(a.build_id, 0)
        badge = core.badge("linux")
        assert b"#4c1" in badge.svg and b"passing" in badge.svg

    def test_badge_with_no_builds_is_pending(self, tmp_path):
        core = make_core(tmp_path)
        assert b"#dfb317" in core.badge("linux").svg


# --- reference state machine for the random model test -------------------------


class ReferenceMachine:
    """Independent mirror of the scheduling rules, tracking only counts and
    occupancy; used to cross-check conservation and one-build-per-agent."""

    def __init__(self):
        self.pending = set()
        self.running = {}  # build_id -> agent
        self.terminal = set()
        self.total = 0

    def create(self, build_ids):
        self.total += len(build_ids)
        self.pending.update(build_ids)

    def start(self, build_id, agent):
        assert build_id in self.pending
        assert agent not in self.running.values(), "agent already busy"
        self.pending.remove(build_id)
        self.running[build_id] = agent

    def finish(self, build_id):
        self.running.pop(build_id)
        self.terminal.add(build_id)

    def abort_pending(self, build_id):
        self.pending.remove(build_id)
        self.terminal.add(build_id)

    def check(self, counts):
        assert counts["total"] == self.total
        assert counts["pending"] == len(self.pending)
        assert counts["running"] == len(self.running)
        assert counts["terminal"] == len(self.terminal)
        assert counts["pending"] + counts["running"] + counts["terminal"] == counts["total"]


def run_scheduler_model(tmp_path, steps, seed):
    rng = random.Random(seed)
    clock = FakeClock()
    core = make_core(tmp_path, clock=clock)
    ref = ReferenceMachine()
    register_all(core)
    delivery = 0
    pr = 0

    for _ in range(steps):
        op = rng.random()
        if op < 0.18:
            delivery += 1
            sha = "".join(rng.choice("0123456789abcdef") for _ in range(40))
            result = core.ingest_webhook(
                push_event(sha=sha, branch=rng.choice(["develop", "master", "junk"]),
                           delivery=f"d{delivery}")
            )
            if not isinstance(result, Ignored):
                ref.create(result.builds)
        elif op < 0.24:
            pr += 1
            sha = "".join(rng.choice("0123456789abcdef") for _ in range(40))
            event = WebhookEvent(
                kind="pr_opened", repo_id="r", sha=sha, pr_number=pr, delivery_id=f"pr{pr}"
            )
            result = core.ingest_webhook(event)
            if not isinstance(result, Ignored):
                ref.create(result.builds)
        elif op < 0.55:
            for agent_name, assignment in core.dispatch():
                ref.start(assignment.build_id, agent_name)
        elif op < 0.85:
            running = list(ref.running)
            if running:
                build_id = rng.choice(running)
                core.record_result(build_id, rng.choice([0, 0, 0, 1]))
                ref.finish(build_id)
        elif op < 0.93:
            clock.advance(rng.choice([5.0, 20.0]))
            for name in list(core.agents):
                if rng.random() < 0.8:
                    core.heartbeat(name)
        else:
            clock.advance(31.0)
            lost = core.check_liveness()
            for build_id in list(ref.running):
                if core.get_build(build_id).state is not BuildState.RUNNING:
                    ref.finish(build_id)
            for name in lost:
                core.register_agent(name, core_platform(name))
        ref.check(core.counts())
        # one-build-per-agent, directly on the core's own records
        busy = [a.build_id for a in core.agents.values() if a.build_id is not None]
        assert len(busy) == len(set(busy))
    return core, ref


def core_platform(agent_name):
    return {
        "linux-agent": "linux",
        "mac-agent": "macOS",
        "win7-agent": "windows7",
        "win10-agent": "windows10",
    }[agent_name]


def test_scheduler_model_short(tmp_path):
    run_scheduler_model(tmp_path, steps=800, seed=7)
