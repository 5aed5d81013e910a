import type { ApiClient, JobRecord } from './api.js';

/**
 * Poll a job until it reaches a terminal state (done / failed).
 * Resolves with the final record either way: a failed job is rendered,
 * not thrown. Transport errors reject.
 */
export function pollJob(
  api: ApiClient,
  jobId: string,
  intervalMs = 500,
  onUpdate?: (record: JobRecord) => void,
): Promise<JobRecord> {
  return new Promise((resolve, reject) => {
    const tick = async () => {
      try {
        const record = await api.getJob(jobId);
        onUpdate?.(record);
        if (record.state === 'done' || record.state === 'failed') {
          clearInterval(timer);
          resolve(record);
        }
      } catch (err) {
        clearInterval(timer);
        reject(err);
      }
    };
    const timer = setInterval(tick, intervalMs);
    void tick();
  });
}
