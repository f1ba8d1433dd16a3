/** Typed client for the election service HTTP API. */

export interface DimView {
  label: string;
  baseline: number;
  kind: "expenditure" | "income";
  lo: number;
  hi: number;
  description: string;
}

export interface SetView {
  index: number;
  point: number[];
  radius: number | null;
  version: number;
  submissions: number;
  pending: number;
  percent_from_baseline: number[];
  deficit: number;
}

export interface CurrentView {
  instance_id: string;
  kind: "constrained" | "full_elicitation";
  q: number | string | null;
  status: string;
  dims: DimView[];
  sets: SetView[];
}

export interface VoteResult {
  accepted: boolean;
  committed?: boolean;
  version?: number;
  reason?: string;
  info?: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(public status: number, public body: unknown) {
    super(`service error ${status}`);
  }
}

async function parse(res: Response): Promise<any> {
  const body = await res.json().catch(() => null);
  if (!res.ok && (body === null || body.accepted === undefined)) {
    throw new ApiError(res.status, body);
  }
  return body;
}

export class ElectionApi {
  constructor(private base: string = "",
              private fetchFn: typeof fetch = fetch.bind(globalThis)) {}

  private async post(path: string, body: unknown): Promise<any> {
    const res = await this.fetchFn(`${this.base}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parse(res);
  }

  async assign(sessionId: string): Promise<string> {
    const out = await this.post("/assign", { session_id: sessionId });
    return out.instance_id;
  }

  async current(instanceId: string, sessionId: string): Promise<CurrentView> {
    const res = await this.fetchFn(
      `${this.base}/instances/${instanceId}/current?session=${encodeURIComponent(sessionId)}`);
    return parse(res);
  }

  async vote(instanceId: string, body: {
    session_id: string;
    set_index: number;
    point: number[];
    point_version: number;
    justification?: string;
  }): Promise<VoteResult> {
    return this.post(`/instances/${instanceId}/votes`, body);
  }

  async elicit(instanceId: string, body: {
    session_id: string;
    ideals: number[];
    weights: number[];
    deficit_weight: number;
  }): Promise<VoteResult> {
    return this.post(`/instances/${instanceId}/elicitation`, body);
  }

  async feedback(sessionId: string | null, text: string): Promise<void> {
    await this.post("/feedback", { session_id: sessionId, text });
  }
}
