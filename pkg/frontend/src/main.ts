/**
 * Dashboard entry point: hash routing over the four screens (home with the
 * trigger form, group matrix, live console, trend), with a 5 s polling
 * fallback keeping the matrix fresh while builds run.
 */

import { ApiClient, BuildInfo } from "./api.js";
import { ConsoleView } from "./console-view.js";
import { MatrixView } from "./matrix-view.js";
import { TrendChart } from "./trend-chart.js";
import { TriggerForm } from "./trigger-form.js";

const POLL_MS = 5000;

const api = new ApiClient("");
let pollTimer: number | undefined;

function content(): HTMLElement {
  const element = document.getElementById("content");
  if (!element) throw new Error("missing #content root");
  element.textContent = "";
  if (pollTimer !== undefined) {
    clearInterval(pollTimer);
    pollTimer = undefined;
  }
  return element;
}

async function showHome(): Promise<void> {
  const root = content();
  const formRoot = document.createElement("section");
  const jobsRoot = document.createElement("section");
  root.append(formRoot, jobsRoot);

  const form = new TriggerForm(formRoot, api, (result) => {
    location.hash = `#/group/${result.event_id}`;
  });
  const jobs = await api.jobs();
  form.setJobs(jobs);

  const list = document.createElement("table");
  list.className = "jobs";
  for (const job of jobs) {
    const row = list.insertRow();
    const nameCell = row.insertCell();
    const link = document.createElement("a");
    link.href = `#/trend/${encodeURIComponent(job.name)}`;
    link.textContent = job.name;
    nameCell.append(link);
    row.insertCell().textContent = job.platform;
    row.insertCell().textContent = job.versions.join(", ");
    const badgeCell = row.insertCell();
    const badge = document.createElement("img");
    badge.src = `/badges/${encodeURIComponent(job.platform)}.svg`;
    badge.alt = `${job.platform} status`;
    badgeCell.append(badge);
  }
  jobsRoot.append(list);
}

async function showGroup(eventId: string): Promise<void> {
  const root = content();
  const view = new MatrixView(root, {
    onOpenConsole: (build) => {
      location.hash = `#/console/${build.id}`;
    },
    onRelaunch: (build) => void relaunch(build),
  });
  view.setManualJobs(await api.jobs());

  const refresh = async () => {
    const group = await api.group(eventId);
    view.render(group);
    if (group.builds.every((b) => b.state !== "Pending" && b.state !== "Running")) {
      if (pollTimer !== undefined) clearInterval(pollTimer);
      pollTimer = undefined;
    }
  };
  await refresh();
  pollTimer = setInterval(() => void refresh(), POLL_MS) as unknown as number;
}

async function relaunch(build: BuildInfo): Promise<void> {
  const manual = (await api.jobs()).filter((j) => j.manual);
  if (manual.length === 0) return;
  const result = await api.trigger(manual[0].name, build.sha);
  location.hash = `#/group/${result.event_id}`;
}

async function showConsole(buildId: number): Promise<void> {
  const root = content();
  const build = await api.build(buildId);
  const header = document.createElement("div");
  header.className = "console-header";
  header.textContent = `${build.job_name} #${build.id} (${build.version}, ${build.platform})`;
  root.append(header);
  const view = new ConsoleView(root, api);
  await view.follow(build);
}

async function showTrend(job: string): Promise<void> {
  const root = content();
  const chart = new TrendChart(root);
  chart.render(await api.trend(job));
}

async function route(): Promise<void> {
  const hash = location.hash || "#/";
  let match: RegExpMatchArray | null;
  try {
    if ((match = hash.match(/^#\/group\/([0-9a-f]+)$/))) {
      await showGroup(match[1]);
    } else if ((match = hash.match(/^#\/console\/(\d+)$/))) {
      await showConsole(Number(match[1]));
    } else if ((match = hash.match(/^#\/trend\/(.+)$/))) {
      await showTrend(decodeURIComponent(match[1]));
    } else {
      await showHome();
    }
  } catch (error) {
    const root = content();
    const banner = document.createElement("div");
    banner.className = "error-banner";
    banner.textContent = String(error);
    root.append(banner);
  }
}

window.addEventListener("hashchange", () => void route());
window.addEventListener("DOMContentLoaded", () => void route());
