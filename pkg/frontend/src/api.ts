/**
 * Typed client for the master HTTP API.
 *
 * The fetch implementation is injectable so views can be driven by scripted
 * sources in tests and by the real network in the browser.
 */

export type BuildState = "Pending" | "Running" | "Success" | "Failure" | "Aborted";

export interface JobInfo {
  name: string;
  trigger: string;
  platform: string;
  versions: string[];
  manual: boolean;
}

export interface BuildInfo {
  id: number;
  job_name: string;
  platform: string;
  version: string;
  sha: string;
  state: BuildState;
  exit_code: number | null;
  duration_ms: number | null;
}

export interface GroupInfo {
  event_id: string;
  cause: string;
  sha: string;
  builds: BuildInfo[];
}

export interface StatusMatrix {
  sha: string;
  cells: { platform: string; version: string; state: string }[];
  per_platform: Record<string, string>;
  global: string;
}

export interface TrendPoint {
  build_id: number;
  duration_ms: number;
  state: BuildState;
}

export interface TrendSeries {
  job_name: string;
  points: TrendPoint[];
}

export interface TriggerResult {
  event_id: string;
  sha: string;
  builds: number[];
}

/** Server-reported failure; `name` is the error identifier (NoSuchJob, ...). */
export class ApiError extends Error {
  constructor(public override name: string, public detail: string, public status: number) {
    super(`${name}: ${detail}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function throwApiError(response: Response): Promise<never> {
  let name = `HTTP ${response.status}`;
  let detail = "";
  try {
    const payload = await response.json();
    if (payload && payload.error) {
      name = payload.error;
      detail = payload.detail ?? "";
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(name, detail, response.status);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) await throwApiError(response);
    return (await response.json()) as T;
  }

  async jobs(): Promise<JobInfo[]> {
    const payload = await this.getJson<{ jobs: JobInfo[] }>("/api/jobs");
    return payload.jobs;
  }

  async trigger(job: string, sha: string): Promise<TriggerResult> {
    const response = await this.fetchFn(
      `${this.baseUrl}/api/jobs/${encodeURIComponent(job)}/trigger`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ sha }),
      },
    );
    if (!response.ok) await throwApiError(response);
    return (await response.json()) as TriggerResult;
  }

  async group(eventId: string): Promise<GroupInfo> {
    return this.getJson<GroupInfo>(`/api/groups/${eventId}`);
  }

  async build(id: number): Promise<BuildInfo> {
    return this.getJson<BuildInfo>(`/api/builds/${id}`);
  }

  async statusMatrix(sha: string): Promise<StatusMatrix> {
    return this.getJson<StatusMatrix>(`/api/status/${sha}`);
  }

  async trend(job: string): Promise<TrendSeries> {
    return this.getJson<TrendSeries>(`/api/jobs/${encodeURIComponent(job)}/trend`);
  }

  consoleUrl(build: BuildInfo, offset: number): string {
    return (
      `${this.baseUrl}/job/${encodeURIComponent(build.job_name)}/${build.id}/` +
      `${encodeURIComponent(build.version)}/${encodeURIComponent(build.platform)}/console` +
      (offset > 0 ? `?offset=${offset}` : "")
    );
  }

  /** Stream the live console from a byte offset; yields raw chunks. */
  async *consoleStream(build: BuildInfo, offset: number): AsyncGenerator<Uint8Array> {
    const response = await this.fetchFn(this.consoleUrl(build, offset));
    if (!response.ok) await throwApiError(response);
    if (!response.body) {
      const text = await response.text();
      yield new TextEncoder().encode(text);
      return;
    }
    const reader = response.body.getReader();
    while (true) {
      const { done, value } = await reader.read();
      if (done) break;
      if (value && value.byteLength > 0) yield value;
    }
  }
}

/** Console byte source signature the views depend on (injectable). */
export type ConsoleSource = (build: BuildInfo, offset: number) => AsyncIterable<Uint8Array>;
