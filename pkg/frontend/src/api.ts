// Typed client for the theratwin HTTP service. The UI never computes doses
// or recommendations itself; everything it shows comes from these payloads.

export const ORGANS = ["liver", "kidney", "tumor"] as const;
export const COMPARTMENTS = ["plasma", "liver", "kidney", "tumor"] as const;

export type Organ = (typeof ORGANS)[number];
export type Compartment = (typeof COMPARTMENTS)[number];

export interface DoseReportPayload {
  tia_mbq_h: Record<Compartment, number>;
  dose_gy: Record<Organ, number>;
  cumulative: boolean;
}

export interface RecommendationPayload {
  action_mbq: number;
  action_index: number;
  q_values: number[];
  state: number;
  clamped: boolean;
}

export interface WhatIfResponse {
  per_cycle: DoseReportPayload;
  cumulative: DoseReportPayload;
  reward: number;
  next_state: number;
  next_state_terminal: boolean;
  recommendation: RecommendationPayload;
  projection: { cycle: number; cumulative: DoseReportPayload }[];
}

export interface RewardConfigPayload {
  w_tumor: number;
  w_kidney: number;
  w_liver: number;
  kidney_limit: number;
  liver_limit: number;
  tumor_target: number;
  violation_penalty: number;
  completion_bonus: number;
}

export interface ServiceConfig {
  policy_loaded: boolean;
  actions_mbq?: number[];
  max_cycles?: number;
  cycle_interval_h?: number;
  reward?: RewardConfigPayload;
  patient?: PatientPayload;
}

export interface TrajectoryPayload {
  time_h: number[];
  plasma: number[];
  liver: number[];
  kidney: number[];
  tumor: number[];
}

// Patient parameters are opaque to the UI beyond the plasma volume used to
// convert an administered activity into an initial concentration.
export interface PatientPayload {
  volumes: Record<Compartment, number>;
  [key: string]: unknown;
}

export interface WhatIfRequest {
  patient: PatientPayload;
  cumulative: DoseReportPayload;
  cycle: number;
  candidate_activity: number;
  horizon_cycles: number;
}

export function zeroDoseReport(): DoseReportPayload {
  return {
    tia_mbq_h: { plasma: 0, liver: 0, kidney: 0, tumor: 0 },
    dose_gy: { liver: 0, kidney: 0, tumor: 0 },
    cumulative: true,
  };
}

export class ApiError extends Error {
  readonly status: number;
  readonly path: string | null;

  constructor(status: number, message: string, path: string | null) {
    super(message);
    this.status = status;
    this.path = path;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Small JSON client; at most one what-if request is in flight and newer
 * requests abort older ones. */
export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;
  private whatIfController: AbortController | null = null;

  constructor(base: string, fetchFn?: FetchLike) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown,
                           signal?: AbortSignal): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
      signal,
    });
    const text = await resp.text();
    if (!resp.ok) {
      let message = text;
      let errPath: string | null = null;
      try {
        const parsed = JSON.parse(text) as { error?: string; path?: string | null };
        message = parsed.error ?? text;
        errPath = parsed.path ?? null;
      } catch {
        // non-JSON error body; keep raw text
      }
      throw new ApiError(resp.status, message, errPath);
    }
    return JSON.parse(text) as T;
  }

  config(): Promise<ServiceConfig> {
    return this.request("GET", "/config");
  }

  cohort(): Promise<{ patients: PatientPayload[] }> {
    return this.request("GET", "/cohort");
  }

  simulate(patient: PatientPayload, initial: number[], tEnd: number,
           dt: number): Promise<TrajectoryPayload> {
    return this.request("POST", "/simulate",
                        { patient, initial, t_end: tEnd, dt });
  }

  /** Aborts any previous still-running what-if request. */
  whatIf(req: WhatIfRequest): Promise<WhatIfResponse> {
    this.whatIfController?.abort();
    this.whatIfController = new AbortController();
    return this.request("POST", "/whatif", req, this.whatIfController.signal);
  }
}
