/**
 * Live console viewer.
 *
 * Consumes the chunked console endpoint through an injectable byte source,
 * appends chunks in arrival order (rendered text === concatenated chunks),
 * and on a dropped connection resumes from the byte offset already received.
 * When the build is complete it fetches the final state and shows the exit
 * code in a banner that is kept outside the log text itself.
 */

import type { ApiClient, BuildInfo, ConsoleSource } from "./api.js";

const RECONNECT_DELAY_MS = 250;

export interface ConsoleViewOptions {
  reconnectDelayMs?: number;
  maxReconnects?: number;
  autoscroll?: boolean;
}

export class ConsoleView {
  readonly pre: HTMLPreElement;
  readonly banner: HTMLElement;
  autoscroll: boolean;

  private decoder = new TextDecoder();
  private received = 0;
  private reconnects = 0;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private source?: ConsoleSource,
    private options: ConsoleViewOptions = {},
  ) {
    this.autoscroll = options.autoscroll ?? true;
    this.root.classList.add("console-view");
    this.pre = document.createElement("pre");
    this.pre.className = "console-log";
    this.banner = document.createElement("div");
    this.banner.className = "console-banner";
    this.root.append(this.pre, this.banner);
  }

  /** Bytes of log received so far (the resume offset). */
  get offset(): number {
    return this.received;
  }

  text(): string {
    return this.pre.textContent ?? "";
  }

  private append(chunk: Uint8Array): void {
    this.received += chunk.byteLength;
    this.pre.textContent = this.text() + this.decoder.decode(chunk, { stream: true });
    if (this.autoscroll && typeof this.pre.scrollTo === "function") {
      this.pre.scrollTo(0, this.pre.scrollHeight);
    }
  }

  /**
   * Follow the build's console until the server closes the stream on a
   * finished build. Stream errors trigger reconnects at the current offset.
   */
  async follow(build: BuildInfo): Promise<void> {
    const source: ConsoleSource =
      this.source ?? ((b, offset) => this.api.consoleStream(b, offset));
    const delay = this.options.reconnectDelayMs ?? RECONNECT_DELAY_MS;
    const maxReconnects = this.options.maxReconnects ?? 20;

    for (;;) {
      try {
        for await (const chunk of source(build, this.received)) {
          this.append(chunk);
        }
        break; // clean end of stream: build finished and log drained
      } catch (error) {
        this.reconnects += 1;
        if (this.reconnects > maxReconnects) throw error;
        this.banner.textContent = `connection lost, resuming at byte ${this.received}`;
        await new Promise((resolve) => setTimeout(resolve, delay));
      }
    }

    const finished = await this.api.build(build.id);
    if (finished.exit_code !== null) {
      this.banner.textContent = `build ${finished.state.toLowerCase()} (exit code ${finished.exit_code})`;
    } else {
      this.banner.textContent = `build ${finished.state.toLowerCase()}`;
    }
    this.banner.dataset.state = finished.state;
  }
}
