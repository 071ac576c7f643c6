// Typed client for the tuning session service. All state lives server-side;
// the UI never sees the hidden optimal values.

export type ParamName =
  | "mass_g"
  | "lambda"
  | "ywr"
  | "t_egg_c"
  | "t_yolk_c"
  | "altitude_m";

export type ParamValues = Record<ParamName, number>;

export interface ScenarioSummary {
  id: string;
  egg_type: string;
  is_training: boolean;
  bounds: Record<ParamName, [number, number]>;
  fixed: Partial<ParamValues>;
  recommended: ParamValues;
}

export type BlockName = "training" | "baseline" | "treatment";
export type EggStatus = "pending" | "active" | "success" | "failure";

export interface TrialView {
  trial_index: number;
  grade: string;
  submitted: ParamValues;
}

export interface EggView {
  scenario_id: string;
  egg_type: string;
  block: BlockName;
  status: EggStatus;
  trials_used: number;
  trials: TrialView[];
  difficulty: number | null;
}

export interface SessionView {
  session_id: string;
  condition: "rules" | "visual" | "language";
  seed: number;
  status: "in_progress" | "completed";
  eggs: EggView[];
  current_egg: EggView | null;
  pending_difficulty: string | null;
}

export interface VisualBar {
  name: ParamName;
  signed_length: number;
  tune_class: "tune" | "no_tune";
  tune_range: [number, number] | null;
}

export interface VisualSpecPayload {
  bars: VisualBar[];
  axis_label: string;
}

export interface ExplanationView {
  format: "rules" | "visual" | "language" | "none";
  payload: string | VisualSpecPayload | null;
}

export interface TrialResult {
  grade: string;
  trial_index: number;
  trials_used: number;
  egg_status: EggStatus;
  session_status: "in_progress" | "completed";
  next_egg: EggView | null;
}

export interface ApiError {
  code: string;
  message: string;
}

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiError,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

export class WorkbenchApi {
  constructor(private readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiRequestError(resp.status, body as ApiError);
    }
    return body as T;
  }

  listScenarios(): Promise<ScenarioSummary[]> {
    return this.request("/scenarios");
  }

  createSession(condition: string, seed: number): Promise<SessionView> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify({ condition, seed }),
    });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}`);
  }

  submitTrial(sessionId: string, values: Partial<ParamValues>): Promise<TrialResult> {
    return this.request(`/sessions/${sessionId}/trials`, {
      method: "POST",
      body: JSON.stringify({ values }),
    });
  }

  currentExplanation(sessionId: string): Promise<ExplanationView> {
    return this.request(`/sessions/${sessionId}/eggs/current/explanation`);
  }

  rateDifficulty(sessionId: string, rating: number): Promise<unknown> {
    return this.request(`/sessions/${sessionId}/eggs/current/difficulty`, {
      method: "POST",
      body: JSON.stringify({ rating }),
    });
  }

  getMetrics(sessionId: string): Promise<unknown> {
    return this.request(`/sessions/${sessionId}/metrics`);
  }
}
