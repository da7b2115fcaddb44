import os
import random
import threading
import time

import pytest

from forgeci.agent import (
    FetchFailed,
    FileVanished,
    empty_fetcher,
    follow_log,
    local_dir_fetcher,
    run_build,
)
from forgeci.protocol import Assignment

SHA = "d" * 40


def make_assignment(script_body: str, build_id: int = 1, policy: str = "clean_after") -> Assignment:
    return Assignment(
        build_id=build_id,
        repo_id="repo",
        sha=SHA,
        script_text="#!/bin/sh\n" + script_body + "\n",
        script_name="hudson-test.sh",
        bindings=(("ARCH", "linux"), ("MATLAB_VER", "R2016b")),
        workspace_policy=policy,
    )


class FakeProcess:
    """Process double for driving follow_log without a real child."""

    def __init__(self):
        self._alive = True
        self._code = None

    def exit(self, code: int = 0) -> None:
        self._code = code
        self._alive = False

    def is_alive(self) -> bool:
        return self._alive

    def exit_code(self):
        return self._code


class TestFollowLog:
    def test_appends_delivered_in_order(self, tmp_path):
        path = str(tmp_path / "out.log")
        proc = FakeProcess()
        chunks = []

        def writer():
            with open(path, "wb") as fh:
                fh.write(b"a\n")
                fh.flush()
                time.sleep(0.02)
                fh.write(b"b\n")
                fh.flush()
            proc.exit(0)

        thread = threading.Thread(target=writer)
        thread.start()
        for chunk in follow_log(path, proc, poll_interval=0.005):
            chunks.append(chunk)
        thread.join()
        assert b"".join(chunks) == b"a\nb\n"

    def test_write_then_immediate_exit_still_delivered(self, tmp_path):
        path = str(tmp_path / "out.log")
        proc = FakeProcess()
        with open(path, "wb") as fh:
            fh.write(b"final words")
        proc.exit(0)  # already dead before the follower ever polls
        collected = b"".join(follow_log(path, proc, poll_interval=0.002))
        assert collected == b"final words"

    def test_no_writes_quick_exit_is_empty_clean_stream(self, tmp_path):
        path = str(tmp_path / "out.log")
        open(path, "wb").close()
        proc = FakeProcess()
        proc.exit(0)
        assert list(follow_log(path, proc, poll_interval=0.002)) == []

    def test_file_never_created(self, tmp_path):
        proc = FakeProcess()
        proc.exit(0)
        with pytest.raises(FileVanished):
            list(follow_log(str(tmp_path / "never.log"), proc, poll_interval=0.002, create_grace=0.05))

    def test_file_vanishing_mid_follow(self, tmp_path):
        path = str(tmp_path / "out.log")
        with open(path, "wb") as fh:
            fh.write(b"x")
        proc = FakeProcess()
        stream = follow_log(path, proc, poll_interval=0.005)
        assert next(stream) == b"x"
        os.unlink(path)
        proc.exit(0)
        with pytest.raises(FileVanished):
            list(stream)

    def test_race_harness_randomized_writers(self, tmp_path):
        rng = random.Random(4242)
        for trial in range(60):
            path = str(tmp_path / f"race-{trial}.log")
            proc = FakeProcess()
            expected = bytearray()

            def writer():
                with open(path, "wb") as fh:
                    for _ in range(rng.randint(0, 12)):
                        blob = rng.randbytes(rng.randint(1, 8192))
                        fh.write(blob)
                        expected.extend(blob)
                        fh.flush()
                        if rng.random() < 0.5:
                            time.sleep(rng.random() * 0.004)
                proc.exit(0)  # exit immediately after the last write

            thread = threading.Thread(target=writer)
            thread.start()
            streamed = b"".join(follow_log(path, proc, poll_interval=0.001))
            thread.join()
            assert streamed == bytes(expected), f"trial {trial} lost bytes"


class TestRunBuild:
    def test_exit_zero(self, tmp_path):
        outcome = run_build(
            make_assignment("exit 0"), empty_fetcher, str(tmp_path), poll_interval=0.004
        )
        assert outcome.exit_code == 0

    def test_echo_and_exit_code(self, tmp_path):
        outcome = run_build(
            make_assignment("echo hi; exit 3"), empty_fetcher, str(tmp_path), poll_interval=0.004
        )
        assert outcome.exit_code == 3
        assert b"hi" in outcome.streamed

    def test_megabyte_streamed_equals_file(self, tmp_path):
        script = 'i=0; while [ $i -lt 1024 ]; do printf "%01024d" $i; i=$((i+1)); done'
        outcome = run_build(
            make_assignment(script, policy="keep"), empty_fetcher, str(tmp_path), poll_interval=0.002
        )
        assert outcome.exit_code == 0
        assert len(outcome.streamed) == 1024 * 1024
        with open(outcome.log_path, "rb") as fh:
            assert fh.read() == outcome.streamed

    def test_clean_after_removes_workspace(self, tmp_path):
        outcome = run_build(
            make_assignment("exit 0", build_id=7), empty_fetcher, str(tmp_path), poll_interval=0.004
        )
        assert not os.path.exists(str(tmp_path / "build-7"))
        assert outcome.cleanup_error is None

    def test_keep_policy_keeps_workspace(self, tmp_path):
        run_build(
            make_assignment("exit 0", build_id=8, policy="keep"),
            empty_fetcher,
            str(tmp_path),
            poll_interval=0.004,
        )
        assert os.path.isdir(str(tmp_path / "build-8"))

    def test_bindings_exported_into_child(self, tmp_path):
        outcome = run_build(
            make_assignment('echo "$ARCH/$MATLAB_VER/$INSTALLDIR"', policy="keep"),
            empty_fetcher,
            str(tmp_path),
            extra_env={"INSTALLDIR": "/opt/m"},
            poll_interval=0.004,
        )
        assert b"linux/R2016b//opt/m" in outcome.streamed

    def test_unset_vars_removed(self, tmp_path):
        os.environ["FORGECI_TEST_SENTINEL"] = "leak"
        try:
            outcome = run_build(
                make_assignment('echo "got:${FORGECI_TEST_SENTINEL:-none}"', policy="keep"),
                empty_fetcher,
                str(tmp_path),
                unset_vars=("FORGECI_TEST_SENTINEL",),
                poll_interval=0.004,
            )
        finally:
            del os.environ["FORGECI_TEST_SENTINEL"]
        assert b"got:none" in outcome.streamed

    def test_local_dir_fetcher_copies_tree(self, tmp_path):
        src = tmp_path / "src"
        (src / ".ci").mkdir(parents=True)
        (src / ".ci" / "runtests.sh").write_text("#!/bin/sh\necho from-repo\n")
        outcome = run_build(
            make_assignment("sh .ci/runtests.sh", policy="keep"),
            local_dir_fetcher(str(src)),
            str(tmp_path / "ws"),
            poll_interval=0.004,
        )
        assert outcome.exit_code == 0
        assert b"from-repo" in outcome.streamed

    def test_fetch_failure(self, tmp_path):
        with pytest.raises(FetchFailed):
            run_build(
                make_assignment("exit 0"),
                local_dir_fetcher(str(tmp_path / "missing")),
                str(tmp_path / "ws"),
                poll_interval=0.004,
            )

    def test_exit_code_fidelity_sample(self, tmp_path):
        for code in (0, 1, 2, 42, 127, 255):
            outcome = run_build(
                make_assignment(f"exit {code}"), empty_fetcher, str(tmp_path), poll_interval=0.003
            )
            assert outcome.exit_code == code

    def test_on_chunk_sees_all_bytes(self, tmp_path):
        seen = bytearray()
        outcome = run_build(
            make_assignment("printf abc; sleep 0.02; printf def"),
            empty_fetcher,
            str(tmp_path),
            on_chunk=seen.extend,
            poll_interval=0.003,
        )
        assert bytes(seen) == outcome.streamed == b"abcdef"
