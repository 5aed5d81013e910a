/**
 * Typed client for the darkstrip patching service.
 *
 * Endpoints: POST /api/apks, GET /api/apks/{id}/patches, POST /api/jobs,
 * GET /api/jobs/{id}, GET /api/jobs/{id}/artifact.
 */

export interface AppMeta {
  package_name: string;
  version_code: number;
}

export interface UploadResult {
  apk_id: string;
  app_meta: AppMeta;
}

export interface PatchInfo {
  id: string;
  name: string;
  description: string;
  author: string;
  class: string;
  mechanism: string;
  specificity: string;
  applicable: boolean;
  not_applicable_reason: string | null;
  verified: boolean;
  reviewers: string[];
}

export interface JobPolicy {
  require_verified?: boolean;
  on_conflict?: 'warn' | 'abort';
}

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export interface StepResult {
  kind: string;
  status: string;
  detail: string;
  count: number;
}

export interface PatchResult {
  id: string;
  status: string;
  steps: StepResult[];
}

export interface JobReport {
  app: AppMeta;
  input_sha256: string;
  output_sha256: string;
  signer_fingerprint: string;
  conflicts: string[];
  patches: PatchResult[];
}

export interface JobRecord {
  job_id: string;
  state: JobState;
  report?: JobReport;
  error?: string;
}

/** Service-level failure, carrying the HTTP status for error mapping. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

function friendly(status: number, detail: string): string {
  if (status === 413) return 'That file is too large to upload.';
  if (status === 422) return `That file does not look like an APK (${detail}).`;
  return detail;
}

export class ApiClient {
  private readonly doFetch: typeof fetch;

  constructor(
    private readonly baseUrl = '',
    fetchFn?: typeof fetch,
  ) {
    const impl = fetchFn ?? fetch;
    this.doFetch = (input, init) => impl(input, init);
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.doFetch(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, friendly(response.status, detail));
    }
    return response;
  }

  async uploadApk(data: BodyInit): Promise<UploadResult> {
    const response = await this.request('/api/apks', {
      method: 'POST',
      headers: { 'content-type': 'application/octet-stream' },
      body: data,
    });
    return (await response.json()) as UploadResult;
  }

  async listPatches(apkId: string): Promise<PatchInfo[]> {
    const response = await this.request(`/api/apks/${apkId}/patches`);
    const body = (await response.json()) as { patches: PatchInfo[] };
    return body.patches;
  }

  async createJob(apkId: string, patchIds: string[], policy: JobPolicy = {}): Promise<string> {
    const response = await this.request('/api/jobs', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ apk_id: apkId, patch_ids: patchIds, policy }),
    });
    const body = (await response.json()) as { job_id: string };
    return body.job_id;
  }

  async getJob(jobId: string): Promise<JobRecord> {
    const response = await this.request(`/api/jobs/${jobId}`);
    return (await response.json()) as JobRecord;
  }

  artifactUrl(jobId: string): string {
    return `${this.baseUrl}/api/jobs/${jobId}/artifact`;
  }

  async downloadArtifact(jobId: string): Promise<ArrayBuffer> {
    const response = await this.request(`/api/jobs/${jobId}/artifact`);
    return response.arrayBuffer();
  }
}
