// Session state machine for the what-if explorer. A session tracks one
// virtual patient's committed cycles; the cumulative dose report is always
// the componentwise sum of the logged per-cycle reports, and the decision
// log length always equals the cycle index.

import { DoseReportPayload, ORGANS, COMPARTMENTS, WhatIfResponse, zeroDoseReport } from "./api.js";

export interface CommittedCycle {
  activity_mbq: number;
  per_cycle: DoseReportPayload;
}

export interface SessionState {
  patientId: string;
  cycle: number;
  cumulative: DoseReportPayload;
  log: CommittedCycle[];
}

export function newSession(patientId: string): SessionState {
  return { patientId, cycle: 0, cumulative: zeroDoseReport(), log: [] };
}

/** Commit the probed cycle: append to the log, advance the cycle counter,
 * and adopt the server-computed updated cumulative report. */
export function commitCycle(state: SessionState, activity: number,
                            response: WhatIfResponse): SessionState {
  return {
    patientId: state.patientId,
    cycle: state.cycle + 1,
    cumulative: response.cumulative,
    log: [...state.log, { activity_mbq: activity, per_cycle: response.per_cycle }],
  };
}

export function sumOfLog(state: SessionState): DoseReportPayload {
  const total = zeroDoseReport();
  for (const entry of state.log) {
    for (const organ of ORGANS) {
      total.dose_gy[organ] += entry.per_cycle.dose_gy[organ];
    }
    for (const compartment of COMPARTMENTS) {
      total.tia_mbq_h[compartment] += entry.per_cycle.tia_mbq_h[compartment];
    }
  }
  return total;
}

/** Invariant check: returns human-readable violations (empty when healthy). */
export function invariantViolations(state: SessionState): string[] {
  const problems: string[] = [];
  if (state.log.length !== state.cycle) {
    problems.push(`decision log has ${state.log.length} entries but cycle index is ${state.cycle}`);
  }
  const expected = sumOfLog(state);
  for (const organ of ORGANS) {
    if (expected.dose_gy[organ] !== state.cumulative.dose_gy[organ]) {
      problems.push(`cumulative ${organ} dose ${state.cumulative.dose_gy[organ]} != sum of log ${expected.dose_gy[organ]}`);
    }
  }
  return problems;
}

// -- local persistence -------------------------------------------------------

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const STORAGE_KEY = "theratwin.session";

export function saveSession(state: SessionState, storage: StorageLike): void {
  storage.setItem(STORAGE_KEY, JSON.stringify(state));
}

export function loadSession(storage: StorageLike): SessionState | null {
  const raw = storage.getItem(STORAGE_KEY);
  if (raw === null) return null;
  try {
    const parsed = JSON.parse(raw) as SessionState;
    return invariantViolations(parsed).length === 0 ? parsed : null;
  } catch {
    return null;
  }
}

export function clearSession(storage: StorageLike): void {
  storage.removeItem(STORAGE_KEY);
}
