// Application wiring: API client, session state, view models, and the DOM
// renderers. All numbers shown come from API payloads.

import {
  ApiClient,
  ApiError,
  PatientPayload,
  ServiceConfig,
  WhatIfResponse,
} from "./api.js";
import { trajectoryChart } from "./charts.js";
import {
  renderBanner,
  renderCohortList,
  renderSessionHeader,
  renderTrajectory,
  renderWhatIfPanel,
} from "./render.js";
import {
  SessionState,
  commitCycle,
  invariantViolations,
  loadSession,
  newSession,
  saveSession,
} from "./state.js";
import { cohortView, whatIfView } from "./viewmodel.js";

const api = new ApiClient(window.location.origin.includes("8080")
  ? window.location.origin
  : "http://127.0.0.1:8080");

let config: ServiceConfig = { policy_loaded: false };
let patients: PatientPayload[] = [];
let session: SessionState | null = null;
let lastResponse: WhatIfResponse | null = null;
let lastCandidate = 0;

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    const where = err.path ? ` (field: ${err.path})` : "";
    return `service error ${err.status}: ${err.message}${where}`;
  }
  if (err instanceof DOMException && err.name === "AbortError") {
    return ""; // superseded request; stay quiet
  }
  return `cannot reach the service: ${String(err)}`;
}

function startSession(index: number): void {
  session = newSession(String(index));
  lastResponse = null;
  saveSession(session, window.localStorage);
  renderSession();
  void probe();
}

function renderSession(): void {
  if (!session) return;
  const done = config.max_cycles !== undefined && session.cycle >= config.max_cycles;
  renderSessionHeader(document, session, lastResponse !== null && !done);
}

async function probe(): Promise<void> {
  if (!session || !config.policy_loaded) return;
  const patient = patients[Number(session.patientId)];
  if (!patient) return;
  const candidateSelect = document.getElementById("candidate") as HTMLSelectElement;
  lastCandidate = Number(candidateSelect.value);
  renderBanner(document, null);
  try {
    const response = await api.whatIf({
      patient,
      cumulative: session.cumulative,
      cycle: session.cycle,
      candidate_activity: lastCandidate,
      horizon_cycles: Math.max(1, (config.max_cycles ?? 1) - session.cycle),
    });
    lastResponse = response;
    if (config.reward && config.actions_mbq) {
      renderWhatIfPanel(document,
                        whatIfView(response, config.actions_mbq, config.reward));
    }
    if (lastCandidate > 0) {
      const initial = [lastCandidate / patient.volumes.plasma, 0, 0, 0];
      const traj = await api.simulate(patient, initial,
                                      config.cycle_interval_h ?? 72, 2.0);
      renderTrajectory(document, trajectoryChart(traj));
    } else {
      renderTrajectory(document,
                       "<p>withheld cycle: no activity administered</p>");
    }
  } catch (err) {
    const message = describeError(err);
    if (message) renderBanner(document, message);
  }
  renderSession();
}

function onCommit(): void {
  if (!session || !lastResponse) return;
  session = commitCycle(session, lastCandidate, lastResponse);
  const problems = invariantViolations(session);
  if (problems.length > 0) {
    renderBanner(document, `session invariant violated: ${problems.join("; ")}`);
    return;
  }
  saveSession(session, window.localStorage);
  lastResponse = null;
  renderSession();
  void probe();
}

async function init(): Promise<void> {
  try {
    config = await api.config();
  } catch (err) {
    renderBanner(document, describeError(err));
    return;
  }
  if (!config.policy_loaded) {
    renderBanner(document,
                 "service has no policy loaded; start it with --policy/--config");
    return;
  }
  const candidate = document.getElementById("candidate") as HTMLSelectElement;
  candidate.innerHTML = "";
  for (const action of config.actions_mbq ?? []) {
    const option = document.createElement("option");
    option.value = String(action);
    option.textContent = `${action} MBq`;
    candidate.appendChild(option);
  }
  candidate.selectedIndex = candidate.options.length - 1;
  candidate.addEventListener("change", () => void probe());
  document.getElementById("commit")!.addEventListener("click", onCommit);
  document.getElementById("reset")!.addEventListener("click", () => {
    if (session) startSession(Number(session.patientId));
  });

  try {
    patients = (await api.cohort()).patients;
  } catch (err) {
    renderBanner(document, describeError(err));
  }
  renderCohortList(document, cohortView(patients), startSession);

  const restored = loadSession(window.localStorage);
  if (restored && Number(restored.patientId) < patients.length) {
    session = restored;
    renderSession();
    void probe();
  }
}

void init();
