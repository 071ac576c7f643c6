// Session driver: intro -> training egg -> baseline block -> treatment block
// -> done, with a difficulty prompt after every egg.

import { ApiRequestError, WorkbenchApi, type EggView, type SessionView } from "./api.js";
import { TRIALS_PER_EGG, TaskViewState, isValidDifficulty } from "./state.js";
import { renderFeedbackModal, renderTaskScreen } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const api = new WorkbenchApi(params.get("api") ?? "");
const condition = params.get("condition") ?? "rules";
const seed = Number(params.get("seed") ?? "0");

const app = document.getElementById("app")!;

function swap(node: HTMLElement): void {
  app.replaceChildren(node);
}

async function showEgg(session: SessionView, egg: EggView): Promise<void> {
  const scenarios = await api.listScenarios();
  const scenario = scenarios.find((sc) => sc.id === egg.scenario_id)!;
  const state = new TaskViewState(scenario, egg.block, egg.trials_used);
  const explanation = await api.currentExplanation(session.session_id);
  const eggIndex = session.eggs.findIndex((e) => e.scenario_id === egg.scenario_id) + 1;

  const screen = renderTaskScreen(
    state,
    explanation,
    {
      block: egg.block,
      eggIndex,
      eggCount: session.eggs.length,
      trialsUsed: state.trialsUsed,
      trialsPerEgg: TRIALS_PER_EGG,
    },
    {
      onReset: () => undefined,
      onCook: async () => {
        let result;
        try {
          result = await api.submitTrial(session.session_id, state.submission());
        } catch (err) {
          if (err instanceof ApiRequestError) {
            alert(`${err.body.code}: ${err.body.message}`);
            return;
          }
          throw err;
        }
        state.applyFeedback(result.grade, result.trial_index, result.egg_status);
        const modal = renderFeedbackModal(result.grade, async () => {
          modal.remove();
          if (state.eggResolved) {
            await promptDifficulty(session.session_id);
            await resume();
          } else {
            await resume();
          }
        });
        document.body.appendChild(modal);
      },
    },
  );
  swap(screen);
}

async function promptDifficulty(sessionId: string): Promise<void> {
  const raw = window.prompt("Overall, this task was? (1 very easy … 7 very difficult, empty to skip)");
  if (raw === null || raw.trim() === "") return;
  const rating = Number(raw);
  if (!isValidDifficulty(rating)) return;
  await api.rateDifficulty(sessionId, rating);
}

async function showDone(sessionId: string): Promise<void> {
  const metrics = await api.getMetrics(sessionId);
  const div = document.createElement("div");
  div.className = "done-screen";
  const h = document.createElement("h2");
  h.textContent = "All eggs cooked — thanks for tuning!";
  const pre = document.createElement("pre");
  pre.textContent = JSON.stringify(metrics, null, 2);
  div.appendChild(h);
  div.appendChild(pre);
  swap(div);
}

let sessionId: string | null = null;

async function resume(): Promise<void> {
  const session = sessionId
    ? await api.getSession(sessionId)
    : await api.createSession(condition, seed);
  sessionId = session.session_id;
  if (session.status === "completed" || session.current_egg === null) {
    await showDone(session.session_id);
    return;
  }
  await showEgg(session, session.current_egg);
}

resume().catch((err) => {
  const banner = document.createElement("div");
  banner.className = "error-banner";
  banner.textContent = `Cannot reach the tuning service: ${err}. Retry?`;
  const retry = document.createElement("button");
  retry.textContent = "Retry";
  retry.addEventListener("click", () => window.location.reload());
  banner.appendChild(retry);
  swap(banner);
});
