#!/usr/bin/env python3
"""Desk-scale demo: a master, four platform agents, one signed push webhook.

Stands everything up in a temp directory, lets the 16-cell build matrix run
to completion, then prints the per-platform status matrix and writes the
badges. Run it straight from the repo:

    python3 examples/desk_run.py
"""

import json
import shutil
import tempfile
import time
import urllib.request
from pathlib import Path

from forgeci.agent import AgentClient, AgentConfig
from forgeci.master import parse_master_config
from forgeci.master.server import MasterService, webhook_signature
from forgeci.status import StatusState

SHA = "feed" * 10
SECRET = "desk-demo-secret"

CONFIG = """\
port: 0
agent_port: 0
bot_account: cobrabot
secret_path: secret.txt
retention: 30
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
  - COBRAToolbox-branches-manual-linux branches_manual linux R2014b,R2015b,R2016b,R2017b
"""

# one deliberately red cell so the aggregation has something to chew on
TRAVIS = """\
script:
  - echo testing $ARCH with $MATLAB_VER
  - sleep 0.1
  - if [ "$ARCH" = "windows7" ] && [ "$MATLAB_VER" = "R2015b" ]; then exit 1; fi
"""


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="forgeci-demo-"))
    (workdir / "secret.txt").write_text(SECRET + "\n")
    (workdir / "repo").mkdir()
    (workdir / "repo" / "travis.yml").write_text(TRAVIS)

    service = MasterService(
        parse_master_config(CONFIG, config_dir=str(workdir)), pump_interval=0.02
    )
    service.start()
    print(f"master: http :{service.http_port}, agents :{service.agent_port}")

    agents = []
    for name, platform in (
        ("linux-agent", "linux"),
        ("mac-agent", "macOS"),
        ("win7-agent", "windows7"),
        ("win10-agent", "windows10"),
    ):
        client = AgentClient(
            AgentConfig(
                master_host="127.0.0.1",
                master_port=service.agent_port,
                agent_name=name,
                platform=platform,
                workspace_root=str(workdir / f"ws-{name}"),
                heartbeat_interval=1.0,
                poll_interval=0.01,
            )
        )
        client.start()
        agents.append(client)

    body = json.dumps(
        {"repo_id": "demo", "sha": SHA, "branch": "develop", "sender": "dev"}
    ).encode()
    request = urllib.request.Request(
        f"http://127.0.0.1:{service.http_port}/webhook",
        data=body,
        method="POST",
        headers={
            "X-Event-Kind": "push",
            "X-Delivery-Id": "demo-1",
            "X-Signature": webhook_signature(SECRET, body),
        },
    )
    with urllib.request.urlopen(request) as resp:
        accepted = json.loads(resp.read())
    print(f"webhook accepted: {len(accepted['builds'])} builds queued")

    while not all(service.core.get_build(b).state.terminal for b in accepted["builds"]):
        time.sleep(0.1)

    matrix = service.core.status_matrix(SHA)
    print(f"\ncommit {SHA[:12]} -> global {matrix.global_state.value}")
    for platform, state in matrix.per_platform:
        glyph = {"success": "+", "failure": "x", "pending": "."}[state.value]
        print(f"  [{glyph}] {platform:<10} {state.value}")

    badges = workdir / "badges"
    badges.mkdir()
    for platform, _ in matrix.per_platform:
        badge = service.core.badge(platform)
        (badges / f"{platform}.svg").write_bytes(badge.svg)
    print(f"\nbadges written to {badges}")
    print(f"console example: http://127.0.0.1:{service.http_port}"
          f"/job/COBRAToolbox-branches-auto-linux/1/R2014b/linux/console")

    for client in agents:
        client.stop()
    service.stop()
    shutil.rmtree(workdir, ignore_errors=True)

    ok = matrix.platform("windows7") is StatusState.FAILURE and matrix.global_state is StatusState.FAILURE
    print("\ndemo result:", "as expected (one red cell fails its platform)" if ok else "UNEXPECTED")


if __name__ == "__main__":
    main()
