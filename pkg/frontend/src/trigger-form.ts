/**
 * Manual trigger form: pick a manually-triggerable job, paste a commit SHA
 * (abbreviations of 7+ hex chars allowed), submit. Invalid SHAs never leave
 * the client; server rejections surface verbatim in the error banner.
 */

import { ApiClient, ApiError, JobInfo, TriggerResult } from "./api.js";
import { isValidSha } from "./marks.js";

export class TriggerForm {
  readonly form: HTMLFormElement;
  readonly jobSelect: HTMLSelectElement;
  readonly shaInput: HTMLInputElement;
  readonly submitButton: HTMLButtonElement;
  readonly error: HTMLElement;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private onTriggered: (result: TriggerResult) => void,
  ) {
    this.root.classList.add("trigger-form");
    this.form = document.createElement("form");
    this.jobSelect = document.createElement("select");
    this.jobSelect.name = "job";
    this.shaInput = document.createElement("input");
    this.shaInput.name = "sha";
    this.shaInput.placeholder = "commit SHA1 (7-40 hex chars)";
    this.submitButton = document.createElement("button");
    this.submitButton.type = "submit";
    this.submitButton.textContent = "build this commit";
    this.error = document.createElement("div");
    this.error.className = "error-banner";
    this.form.append(this.jobSelect, this.shaInput, this.submitButton);
    this.root.append(this.form, this.error);
    this.form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });
  }

  setJobs(jobs: JobInfo[]): void {
    this.jobSelect.textContent = "";
    for (const job of jobs.filter((j) => j.manual)) {
      const option = document.createElement("option");
      option.value = job.name;
      option.textContent = job.name;
      this.jobSelect.append(option);
    }
  }

  /** Returns the trigger result, or null when nothing was submitted. */
  async submit(): Promise<TriggerResult | null> {
    const sha = this.shaInput.value.trim();
    if (!isValidSha(sha)) {
      this.error.textContent = "enter at least 7 hex characters of the commit SHA1";
      return null;
    }
    this.error.textContent = "";
    try {
      const result = await this.api.trigger(this.jobSelect.value, sha);
      this.onTriggered(result);
      return result;
    } catch (error) {
      if (error instanceof ApiError) {
        this.error.textContent = error.name;
      } else {
        this.error.textContent = String(error);
      }
      return null;
    }
  }
}
