// Pure mapping from API payloads to what the panel displays. Displayed
// numbers are the payload values serialized verbatim (JSON serialization),
// never recomputed, so the rendered text is byte-equal to the payload.

import { ORGANS, Organ, RewardConfigPayload, WhatIfResponse } from "./api.js";

export interface DoseRowView {
  organ: Organ;
  perCycleGy: string;
  cumulativeGy: string;
  limitGy: number | null;
  exceedsLimit: boolean;
}

export interface QBarView {
  actionMbq: string;
  value: string;
  recommended: boolean;
}

export interface WhatIfView {
  recommendedActionMbq: string;
  rewardValue: string;
  doseRows: DoseRowView[];
  qBars: QBarView[];
  clamped: boolean;
  nextStateTerminal: boolean;
}

export function exact(value: number): string {
  return JSON.stringify(value);
}

const LIMIT_OF: Record<Organ, (r: RewardConfigPayload) => number | null> = {
  liver: (r) => r.liver_limit,
  kidney: (r) => r.kidney_limit,
  tumor: () => null, // target, not a limit; shown separately
};

export function whatIfView(response: WhatIfResponse, actions: number[],
                           reward: RewardConfigPayload): WhatIfView {
  const doseRows = ORGANS.map((organ): DoseRowView => {
    const limit = LIMIT_OF[organ](reward);
    const cumulative = response.cumulative.dose_gy[organ];
    return {
      organ,
      perCycleGy: exact(response.per_cycle.dose_gy[organ]),
      cumulativeGy: exact(cumulative),
      limitGy: limit,
      exceedsLimit: limit !== null && cumulative > limit,
    };
  });
  const qBars = response.recommendation.q_values.map((q, i): QBarView => ({
    actionMbq: exact(actions[i] ?? NaN),
    value: exact(q),
    recommended: i === response.recommendation.action_index,
  }));
  return {
    recommendedActionMbq: exact(response.recommendation.action_mbq),
    rewardValue: exact(response.reward),
    doseRows,
    qBars,
    clamped: response.recommendation.clamped,
    nextStateTerminal: response.next_state_terminal,
  };
}

export interface PatientRowView {
  index: number;
  label: string;
  kidneyClearance: string;
  tumorUptake: string;
}

export function cohortView(patients: { [k: string]: unknown }[]): PatientRowView[] {
  return patients.map((p, index) => ({
    index,
    label: `patient ${index}`,
    kidneyClearance: exact(p["k_ex"] as number),
    tumorUptake: exact(p["k_p_t"] as number),
  }));
}
