/** Thin client for the compositing job service. */

export interface ComposeRequest {
  background: string;
  foreground: string;
  /** Serialized ControlSpec JSON, passed through verbatim. */
  control: string;
  checkpoint?: string;
  steps?: number;
  seed?: number;
  fg_mask?: string;
}

export interface JobInfo {
  id: string;
  status: "queued" | "running" | "done" | "failed";
  result_path?: string | null;
  error?: string | null;
}

/** Raised for HTTP 4xx responses; carries the service's field-level detail. */
export class RequestError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(detail);
  }
}

async function readDetail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body
  }
  return `request failed with status ${resp.status}`;
}

export async function submitCompose(req: ComposeRequest): Promise<{ id: string }> {
  const resp = await fetch("/jobs/compose", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(req),
  });
  if (!resp.ok) {
    throw new RequestError(resp.status, await readDetail(resp));
  }
  return resp.json();
}

export async function getJob(id: string): Promise<JobInfo> {
  const resp = await fetch(`/jobs/${id}`);
  if (!resp.ok) {
    throw new RequestError(resp.status, await readDetail(resp));
  }
  return resp.json();
}

export function frameUrl(jobId: string, frame: number): string {
  return `/videos/${jobId}/frame/${frame}`;
}

export interface PollOptions {
  /** Called on every state change worth surfacing to the user. */
  onStatus?: (message: string) => void;
  intervalMs?: number;
  /** Backoff parameters for network failures. */
  maxRetries?: number;
  backoffBaseMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/** Polls until the job reaches done or failed. Network failures retry with
 * exponential backoff and a visible status; HTTP errors propagate. */
export async function pollJob(id: string, opts: PollOptions = {}): Promise<JobInfo> {
  const interval = opts.intervalMs ?? 500;
  const maxRetries = opts.maxRetries ?? 5;
  const base = opts.backoffBaseMs ?? 250;
  const sleep = opts.sleep ?? defaultSleep;
  let retries = 0;
  for (;;) {
    let info: JobInfo;
    try {
      info = await getJob(id);
    } catch (e) {
      if (e instanceof RequestError) throw e;
      retries += 1;
      if (retries > maxRetries) {
        throw new Error(`service unreachable after ${maxRetries} retries`);
      }
      const wait = base * 2 ** (retries - 1);
      opts.onStatus?.(`connection lost, retrying in ${wait} ms (${retries}/${maxRetries})`);
      await sleep(wait);
      continue;
    }
    retries = 0;
    opts.onStatus?.(`job ${id}: ${info.status}`);
    if (info.status === "done" || info.status === "failed") {
      return info;
    }
    await sleep(interval);
  }
}
