// Pure view-state for one tuning task. The DOM layer renders from this and
// forwards events into it, so sliders, text boxes and the submitted payload
// can never disagree about a value.

import type {
  BlockName,
  ParamName,
  ParamValues,
  ScenarioSummary,
} from "./api.js";

export const PARAM_ORDER: ParamName[] = [
  "mass_g",
  "lambda",
  "ywr",
  "t_egg_c",
  "t_yolk_c",
  "altitude_m",
];

export const PARAM_LABELS: Record<ParamName, string> = {
  mass_g: "Mass M (g)",
  lambda: "lambda λ",
  ywr: "yolk-to-white ratio ywr",
  t_egg_c: "egg temperature Tegg (°C)",
  t_yolk_c: "yolk temperature Tyolk (°C)",
  altitude_m: "altitude A (m)",
};

export const PARAM_HELP: Record<ParamName, string> = {
  mass_g: "Weight of the egg in grams.",
  lambda: "Thermal coefficient of the egg; scales the cooking time directly.",
  ywr: "Ratio of yolk to white; higher means proportionally more yolk.",
  t_egg_c: "Temperature of the egg before it enters the water.",
  t_yolk_c: "Target temperature at the yolk boundary when cooking stops.",
  altitude_m: "Altitude of the cooker; height lowers the boiling point.",
};

export const PARAM_STEP: Record<ParamName, number> = {
  mass_g: 1,
  lambda: 1,
  ywr: 0.01,
  t_egg_c: 1,
  t_yolk_c: 1,
  altitude_m: 1,
};

export const TRIALS_PER_EGG = 5;

// Five feedback grades, colour plus text (never colour alone).
export const GRADE_DISPLAY: Record<string, { text: string; color: string }> = {
  Undercooked: { text: "Undercooked — far too runny", color: "#1f77b4" },
  SlightlyUndercooked: { text: "Slightly undercooked", color: "#6baed6" },
  Perfect: { text: "Perfect soft-boiled egg!", color: "#2ca02c" },
  SlightlyOvercooked: { text: "Slightly overcooked", color: "#fd8d3c" },
  Overcooked: { text: "Overcooked — solid yolk", color: "#d62728" },
};

export interface FeedbackState {
  grade: string;
  trialIndex: number;
  eggResolved: boolean;
  success: boolean;
}

export class TaskViewState {
  readonly scenario: ScenarioSummary;
  readonly block: BlockName;
  private values: ParamValues;
  trialsUsed: number;
  eggResolved = false;
  feedback: FeedbackState | null = null;

  constructor(scenario: ScenarioSummary, block: BlockName, trialsUsed = 0) {
    this.scenario = scenario;
    this.block = block;
    this.trialsUsed = trialsUsed;
    this.values = { ...scenario.recommended };
  }

  isFixed(name: ParamName): boolean {
    return name in this.scenario.fixed;
  }

  value(name: ParamName): number {
    return this.values[name];
  }

  /** Single write path for sliders and text boxes; clamps and ignores fixed. */
  setValue(name: ParamName, raw: number): number {
    if (this.isFixed(name) || !Number.isFinite(raw)) {
      return this.values[name];
    }
    const [lo, hi] = this.scenario.bounds[name];
    const clamped = Math.min(Math.max(raw, lo), hi);
    this.values[name] = clamped;
    return clamped;
  }

  /** Back to the recommendation; the cook button disables again. */
  resetToRecommendation(): void {
    this.values = { ...this.scenario.recommended };
  }

  isAdjusted(): boolean {
    return PARAM_ORDER.some(
      (name) =>
        !this.isFixed(name) &&
        this.values[name] !== this.scenario.recommended[name],
    );
  }

  cookEnabled(): boolean {
    return this.isAdjusted() && this.trialsUsed < TRIALS_PER_EGG && !this.eggResolved;
  }

  /** Trial payload: tunable values only; fixed parameters are never sent. */
  submission(): Partial<ParamValues> {
    const out: Partial<ParamValues> = {};
    for (const name of PARAM_ORDER) {
      if (!this.isFixed(name)) {
        out[name] = this.values[name];
      }
    }
    return out;
  }

  explanationVisible(): boolean {
    return this.block === "treatment";
  }

  applyFeedback(grade: string, trialIndex: number, eggStatus: string): FeedbackState {
    this.trialsUsed = trialIndex;
    this.eggResolved = eggStatus === "success" || eggStatus === "failure";
    this.feedback = {
      grade,
      trialIndex,
      eggResolved: this.eggResolved,
      success: eggStatus === "success",
    };
    return this.feedback;
  }

  dismissFeedback(): void {
    this.feedback = null;
  }
}

export interface ProgressInfo {
  block: BlockName;
  eggIndex: number;   // 1-based position within the session
  eggCount: number;
  trialsUsed: number;
  trialsPerEgg: number;
}

export function isValidDifficulty(rating: number): boolean {
  return Number.isInteger(rating) && rating >= 1 && rating <= 7;
}
