/**
 * Build-matrix grid for one trigger group: job rows, version columns, one
 * mark per cell (check / cross / dot). Failed builds get a relaunch button
 * that resubmits the commit to a manual job.
 */

import type { BuildInfo, GroupInfo, JobInfo } from "./api.js";
import { glyphFor, markFor } from "./marks.js";

export interface MatrixCallbacks {
  onOpenConsole?: (build: BuildInfo) => void;
  onRelaunch?: (build: BuildInfo) => void;
}

export class MatrixView {
  readonly table: HTMLTableElement;
  readonly heading: HTMLElement;
  private manualJobs: JobInfo[] = [];

  constructor(
    private root: HTMLElement,
    private callbacks: MatrixCallbacks = {},
  ) {
    this.root.classList.add("matrix-view");
    this.heading = document.createElement("div");
    this.heading.className = "matrix-heading";
    this.table = document.createElement("table");
    this.table.className = "matrix";
    this.root.append(this.heading, this.table);
  }

  setManualJobs(jobs: JobInfo[]): void {
    this.manualJobs = jobs.filter((j) => j.manual);
  }

  render(group: GroupInfo): void {
    this.heading.textContent = `commit ${group.sha.slice(0, 12)} (${group.cause}, ${group.builds.length} builds)`;

    const jobs: string[] = [];
    const versions: string[] = [];
    for (const build of group.builds) {
      if (!jobs.includes(build.job_name)) jobs.push(build.job_name);
      if (!versions.includes(build.version)) versions.push(build.version);
    }

    this.table.textContent = "";
    const head = this.table.createTHead().insertRow();
    head.insertCell().textContent = "job";
    for (const version of versions) {
      const cell = document.createElement("th");
      cell.textContent = version;
      head.append(cell);
    }

    const body = this.table.createTBody();
    for (const job of jobs) {
      const row = body.insertRow();
      row.insertCell().textContent = job;
      for (const version of versions) {
        const cell = row.insertCell();
        const build = group.builds.find(
          (b) => b.job_name === job && b.version === version,
        );
        if (!build) {
          cell.textContent = "";
          continue;
        }
        const mark = markFor(build.state);
        const span = document.createElement("span");
        span.className = `mark mark-${mark}`;
        span.textContent = glyphFor(mark);
        span.title = `${build.state} (build ${build.id})`;
        span.dataset.buildId = String(build.id);
        span.addEventListener("click", () => this.callbacks.onOpenConsole?.(build));
        cell.append(span);

        if (build.state === "Failure" && this.manualJobs.length > 0) {
          const relaunch = document.createElement("button");
          relaunch.className = "relaunch";
          relaunch.textContent = "relaunch";
          relaunch.title = `rebuild ${build.sha.slice(0, 12)} on ${this.manualJobs[0].name}`;
          relaunch.addEventListener("click", () => this.callbacks.onRelaunch?.(build));
          cell.append(relaunch);
        }
      }
    }
  }

  /** Marks currently on display, keyed by build id (for tests and polling). */
  marks(): Map<number, string> {
    const out = new Map<number, string>();
    for (const span of Array.from(this.table.querySelectorAll<HTMLElement>(".mark"))) {
      const id = Number(span.dataset.buildId);
      const mark = Array.from(span.classList)
        .find((c) => c.startsWith("mark-"))
        ?.slice("mark-".length);
      if (!Number.isNaN(id) && mark) out.set(id, mark);
    }
    return out;
  }
}
