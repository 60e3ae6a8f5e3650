import type { ExplorerApi } from "./api";
import type { RunInfo } from "./types";

/** Poll a run until it leaves the queue (1 s cadence, matching the
 *  single-worker server). Resolves on done, rejects on failed/timeout. */
export function pollRun(
  api: ExplorerApi,
  runId: string,
  intervalMs = 1000,
  timeoutMs = 600000,
  onTick?: (run: RunInfo) => void,
): Promise<RunInfo> {
  const deadline = Date.now() + timeoutMs;
  return new Promise((resolve, reject) => {
    const tick = async () => {
      let run: RunInfo;
      try {
        run = await api.run(runId);
      } catch (err) {
        reject(err);
        return;
      }
      onTick?.(run);
      if (run.status === "done") {
        resolve(run);
      } else if (run.status === "failed") {
        reject(new Error(`run ${runId} failed: ${run.error ?? "unknown"}`));
      } else if (Date.now() > deadline) {
        reject(new Error(`run ${runId} timed out while ${run.status}`));
      } else {
        setTimeout(tick, intervalMs);
      }
    };
    tick();
  });
}
