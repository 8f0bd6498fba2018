// DOM rendering for the what-if panel. Takes a Document so tests can drive
// it under jsdom; displayed numbers come from the view model verbatim.

import { doseBarsChart, qBarChart } from "./charts.js";
import { SessionState } from "./state.js";
import { PatientRowView, WhatIfView } from "./viewmodel.js";

function el<T extends HTMLElement>(doc: Document, id: string): T {
  const node = doc.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function renderBanner(doc: Document, message: string | null): void {
  const box = el<HTMLDivElement>(doc, "banner");
  box.hidden = message === null;
  box.textContent = message ?? "";
}

export function renderCohortList(doc: Document, rows: PatientRowView[],
                                 onSelect: (index: number) => void): void {
  const list = el<HTMLUListElement>(doc, "cohort");
  list.innerHTML = "";
  el<HTMLParagraphElement>(doc, "cohort-empty").hidden = rows.length > 0;
  for (const row of rows) {
    const item = doc.createElement("li");
    const button = doc.createElement("button");
    button.textContent =
      `${row.label} — k_ex ${row.kidneyClearance}, k_p_t ${row.tumorUptake}`;
    button.addEventListener("click", () => onSelect(row.index));
    item.appendChild(button);
    list.appendChild(item);
  }
}

export function renderSessionHeader(doc: Document, session: SessionState,
                                    commitEnabled: boolean): void {
  el<HTMLSpanElement>(doc, "session-patient").textContent =
    `patient ${session.patientId}`;
  el<HTMLSpanElement>(doc, "session-cycle").textContent = String(session.cycle);
  const log = el<HTMLUListElement>(doc, "decision-log");
  log.innerHTML = "";
  session.log.forEach((entry, i) => {
    const item = doc.createElement("li");
    item.textContent = `cycle ${i}: ${entry.activity_mbq} MBq -> ` +
      `tumor +${entry.per_cycle.dose_gy.tumor.toFixed(2)} Gy, ` +
      `kidney +${entry.per_cycle.dose_gy.kidney.toFixed(2)} Gy`;
    log.appendChild(item);
  });
  el<HTMLButtonElement>(doc, "commit").disabled = !commitEnabled;
  el<HTMLDivElement>(doc, "whatif-panel").hidden = false;
}

export function renderWhatIfPanel(doc: Document, view: WhatIfView): void {
  el<HTMLSpanElement>(doc, "recommended").textContent =
    `${view.recommendedActionMbq} MBq`;
  el<HTMLSpanElement>(doc, "reward").textContent = view.rewardValue;
  el<HTMLSpanElement>(doc, "clamped").hidden = !view.clamped;

  const rows = el<HTMLTableSectionElement>(doc, "dose-rows");
  rows.innerHTML = "";
  for (const row of view.doseRows) {
    const tr = doc.createElement("tr");
    if (row.exceedsLimit) tr.className = "violation";
    const cells = [row.organ, row.perCycleGy, row.cumulativeGy,
                   row.limitGy === null ? "—" : String(row.limitGy)];
    for (const text of cells) {
      const td = doc.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    rows.appendChild(tr);
  }

  el<HTMLDivElement>(doc, "dose-bars").innerHTML = doseBarsChart(
    view.doseRows.map((row) => ({
      organ: row.organ,
      cumulativeGy: Number(row.cumulativeGy),
      perCycleGy: Number(row.perCycleGy),
      limitGy: row.limitGy,
    })));
  el<HTMLDivElement>(doc, "q-bars").innerHTML = qBarChart(
    view.qBars.map((bar) => ({
      actionMbq: bar.actionMbq,
      value: Number(bar.value),
      recommended: bar.recommended,
    })));
}

export function renderTrajectory(doc: Document, svgOrMessage: string): void {
  el<HTMLDivElement>(doc, "trajectory").innerHTML = svgOrMessage;
}
