/** Page wiring: assignment, panels per set, submission flow, feedback. */

import { ElectionApi, CurrentView } from "./api.js";
import { parseOrder } from "./credit.js";
import { SliderPanel } from "./panel.js";
import { ElicitationForm } from "./elicitation.js";
import { VoteSubmitter } from "./submit.js";
import { SessionFlow } from "./flow.js";
import { el, renderMechanismPanel, renderElicitation } from "./dom.js";

const INSTRUCTIONS: Record<string, string> = {
  "1": "Move the sliders to the budget you prefer. The credits you spend " +
    "are the sum of all changes you make, so spreading changes across " +
    "items costs as much as one big change.",
  "2": "Move the sliders to the budget you prefer. Credits grow with the " +
    "square of each change, so large moves on a single item are " +
    "disproportionately expensive.",
  inf: "Move each slider up to the credit limit, independently of the " +
    "others. Changing one item does not limit the others.",
  full: "Set every slider to your ideal value for that item, then say how " +
    "much you care about each item (0 = not at all, 10 = most important).",
};

function sessionId(): string {
  const k = "ilv-session";
  let s = sessionStorage.getItem(k);
  if (!s) {
    s = `web-${Math.random().toString(36).slice(2, 12)}`;
    sessionStorage.setItem(k, s);
  }
  return s;
}

async function start(): Promise<void> {
  const root = document.getElementById("app")!;
  const api = new ElectionApi("");
  const session = sessionId();
  const flow = new SessionFlow(true);

  const render = async () => {
    root.replaceChildren();
    if (flow.page === "welcome") {
      root.append(
        el("h2", {}, "Budget voting study"),
        el("p", {}, "You will adjust a shared budget within a movement " +
          "limit. Your submission is combined with other voters'."),
        button("Begin", async () => {
          flow.advance();
          await render();
        }));
      return;
    }
    if (flow.page === "instructions" || flow.page === "mechanism") {
      const instanceId = await api.assign(session);
      const view = await api.current(instanceId, session);
      if (flow.page === "instructions") {
        const key = view.kind === "full_elicitation" ? "full" : String(view.q);
        root.append(
          el("h2", {}, "Instructions"),
          el("p", {}, INSTRUCTIONS[key] ?? INSTRUCTIONS.inf),
          button("I understand", async () => {
            flow.advance();
            await render();
          }));
        return;
      }
      await mechanismPage(root, api, session, instanceId, view, flow, render);
      return;
    }
    if (flow.page === "elicitation") {
      flow.advance(); // elicitation shown only by instance kind, above
      await render();
      return;
    }
    if (flow.page === "feedback") {
      const box = el("textarea", { rows: "5", cols: "60" }) as HTMLTextAreaElement;
      root.append(
        el("h2", {}, "Feedback"),
        el("p", {}, "Anything confusing, broken, or interesting?"), box,
        button("Send", async () => {
          if (box.value.trim()) await api.feedback(session, box.value.trim());
          flow.advance();
          await render();
        }));
      return;
    }
    root.append(el("h2", {}, "Done"), el("p", {}, "Thank you for voting."),
      el("pre", {}, JSON.stringify(flow.summary(), null, 1)));
  };

  await render();
}

async function mechanismPage(root: HTMLElement, api: ElectionApi,
                             session: string, instanceId: string,
                             view: CurrentView, flow: SessionFlow,
                             render: () => Promise<void>): Promise<void> {
  root.append(el("h2", {}, view.kind === "full_elicitation"
    ? "Your ideal budget" : "Adjust the current budget"));

  if (view.kind === "full_elicitation") {
    const form = new ElicitationForm(view.dims);
    renderElicitation(root, form, async () => {
      const out = await api.elicit(instanceId, form.payload(session));
      if (out.accepted) {
        flow.advance();
        await render();
      }
    });
    return;
  }

  const q = parseOrder(view.q as number | string);
  const submitter = new VoteSubmitter(api, instanceId, session);
  const pendingSets = new Set(view.sets.map((s) => s.index));
  for (const set of view.sets) {
    const panel = new SliderPanel(view.dims, q, set);
    const redraw = renderMechanismPanel(root, view, panel, set.index, async () => {
      const outcome = await submitter.submit(panel, set.index);
      if (outcome.kind === "accepted") {
        pendingSets.delete(set.index);
        if (pendingSets.size === 0) {
          flow.advance();
          await render();
        }
      } else if (outcome.kind === "refresh_needed") {
        const fresh = await api.current(instanceId, session);
        panel.refresh(fresh.sets[set.index]);
        redraw();
        alert("The budget moved while you were deciding; your sliders were " +
          "kept where the new limit allows. Please review and resubmit.");
      } else {
        redraw();
        alert(`Vote rejected (${outcome.reason}` +
          (outcome.overage ? `, ${outcome.overage.toFixed(3)} credits over` : "") + ")");
      }
    });
  }
}

function button(label: string, onClick: () => void): HTMLButtonElement {
  const b = el("button", {}, label) as HTMLButtonElement;
  b.addEventListener("click", onClick);
  return b;
}

start().catch((err) => {
  document.getElementById("app")!.textContent = `failed to start: ${err}`;
});
