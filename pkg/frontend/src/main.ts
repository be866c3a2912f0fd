/** Browser bootstrap: wires the view-models to the DOM. The page is
 * fully re-rendered from service state after every interaction. */

import { Direction, RelationTypeName, ServiceClient } from "./api.js";
import { renderProgress, renderQuery, renderTable } from "./render.js";
import { DEFAULT_OPTIONS, ReviewViewModel, tablePage } from "./review.js";
import { SessionViewModel } from "./session.js";

function param(name: string): string | null {
  return new URLSearchParams(window.location.search).get(name);
}

export async function boot(root: HTMLElement): Promise<void> {
  const baseUrl = param("service") ?? "";
  const client = new ServiceClient(baseUrl);
  const sessionId = param("session");
  const runId = param("run");

  if (runId !== null) {
    const review = new ReviewViewModel(client);
    const status = await review.load(runId);
    if (status.kind === "ready") {
      root.innerHTML = renderTable(tablePage(status.predictions, DEFAULT_OPTIONS));
    } else if (status.kind === "failed") {
      root.innerHTML = `<div class="banner error">run failed: ${status.descriptor.error ?? ""}</div>`;
    } else {
      root.innerHTML = `<div class="banner waiting">run ${runId} still in progress</div>`;
    }
    return;
  }

  if (sessionId === null) {
    root.innerHTML = `<div class="banner">open with ?session=&lt;id&gt; or ?run=&lt;id&gt;</div>`;
    return;
  }

  const session = new SessionViewModel(client, sessionId);

  const redraw = (): void => {
    const snapshot = session.snapshot();
    root.innerHTML =
      (snapshot.state ? renderProgress(snapshot.state) : "") + renderQuery(snapshot);
    root.querySelectorAll<HTMLInputElement>('input[name="rtype"]').forEach((input) => {
      input.addEventListener("change", () => {
        session.choose(input.value as RelationTypeName, null);
        redraw();
      });
    });
    root.querySelectorAll<HTMLInputElement>('input[name="direction"]').forEach((input) => {
      input.addEventListener("change", () => {
        session.choose(session.snapshot().selection.type, input.value as Direction);
        redraw();
      });
    });
    const form = root.querySelector<HTMLFormElement>("form.label-form");
    form?.addEventListener("submit", (event) => {
      event.preventDefault();
      void session.submit().then(() => session.fetchNext().then(redraw));
    });
  };

  await session.fetchNext();
  redraw();
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement !== null) {
  void boot(rootElement);
}
