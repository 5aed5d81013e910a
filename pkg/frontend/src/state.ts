/**
 * Wizard state machine for the three-step flow:
 * select_app -> select_patches -> download.
 *
 * Transitions only move forward; going back is an explicit action.
 * Every reducer returns a fresh state object, and the whole wizard can
 * be reconstructed from (apk_id, selected ids, job_id), which is what
 * makes a page refresh safe.
 */

import type { ApiClient, AppMeta, JobRecord, JobReport, JobState, PatchInfo } from './api.js';

export type Step = 'select_app' | 'select_patches' | 'download';

export interface WizardState {
  step: Step;
  apkId: string | null;
  appMeta: AppMeta | null;
  patches: PatchInfo[];
  selected: ReadonlySet<string>;
  requireVerified: boolean;
  jobId: string | null;
  jobState: JobState | null;
  report: JobReport | null;
  jobError: string | null;
  /** Inline, non-blocking message; cleared by the next successful action. */
  error: string | null;
}

export function initialState(requireVerified = true): WizardState {
  return {
    step: 'select_app',
    apkId: null,
    appMeta: null,
    patches: [],
    selected: new Set(),
    requireVerified,
    jobId: null,
    jobState: null,
    report: null,
    jobError: null,
    error: null,
  };
}

export function withError(state: WizardState, message: string): WizardState {
  return { ...state, error: message };
}

/** Upload succeeded: advance to patch selection. Re-upload replaces the
 * previous app and clears any stale selection or job. */
export function apkUploaded(state: WizardState, apkId: string, meta: AppMeta): WizardState {
  return {
    ...initialState(state.requireVerified),
    step: 'select_patches',
    apkId,
    appMeta: meta,
  };
}

export function patchesLoaded(state: WizardState, patches: PatchInfo[]): WizardState {
  const stillSelectable = new Set(
    [...state.selected].filter((id) => {
      const patch = patches.find((p) => p.id === id);
      return patch !== undefined && selectablePatch(patch, state.requireVerified).enabled;
    }),
  );
  return { ...state, patches, selected: stillSelectable, error: null };
}

export interface Selectable {
  enabled: boolean;
  reason?: string;
}

/** Why a patch can or cannot be toggled: inapplicable patches are
 * disabled with the service's reason, unverified ones with the policy. */
export function selectablePatch(patch: PatchInfo, requireVerified: boolean): Selectable {
  if (!patch.applicable) {
    return { enabled: false, reason: patch.not_applicable_reason ?? 'not applicable to this app' };
  }
  if (requireVerified && !patch.verified) {
    return { enabled: false, reason: 'not signed by a trusted reviewer (strict policy)' };
  }
  return { enabled: true };
}

export function togglePatch(state: WizardState, patchId: string): WizardState {
  const patch = state.patches.find((p) => p.id === patchId);
  if (patch === undefined || !selectablePatch(patch, state.requireVerified).enabled) {
    return state;
  }
  const selected = new Set(state.selected);
  if (selected.has(patchId)) {
    selected.delete(patchId);
  } else {
    selected.add(patchId);
  }
  return { ...state, selected };
}

export function canConfirm(state: WizardState): boolean {
  return state.step === 'select_patches' && state.selected.size >= 1;
}

export function jobCreated(state: WizardState, jobId: string): WizardState {
  return { ...state, step: 'download', jobId, jobState: 'queued', report: null, jobError: null, error: null };
}

export function jobUpdated(state: WizardState, record: JobRecord): WizardState {
  return {
    ...state,
    jobState: record.state,
    report: record.report ?? state.report,
    jobError: record.error ?? null,
  };
}

/** The download link may only exist once the service reports done. */
export function canDownload(state: WizardState): boolean {
  return state.step === 'download' && state.jobState === 'done';
}

export function goBack(state: WizardState): WizardState {
  if (state.step === 'download') {
    return { ...state, step: 'select_patches', jobId: null, jobState: null, report: null, jobError: null };
  }
  if (state.step === 'select_patches') {
    return { ...initialState(state.requireVerified), apkId: state.apkId, appMeta: state.appMeta };
  }
  return state;
}

/** Patches grouped by dark-pattern class so users browse by harm type. */
export function groupByClass(patches: PatchInfo[]): Map<string, PatchInfo[]> {
  const groups = new Map<string, PatchInfo[]>();
  for (const patch of patches) {
    const bucket = groups.get(patch.class);
    if (bucket === undefined) {
      groups.set(patch.class, [patch]);
    } else {
      bucket.push(patch);
    }
  }
  return groups;
}

export interface PersistedState {
  apkId: string | null;
  selected: string[];
  jobId: string | null;
}

export function persist(state: WizardState): PersistedState {
  return { apkId: state.apkId, selected: [...state.selected], jobId: state.jobId };
}

/**
 * Rebuild the wizard after a refresh from the three persisted ids.
 * Falls back to the earliest step that still makes sense when the
 * service no longer knows an id (uploads expire with the TTL).
 */
export async function rehydrate(
  api: ApiClient,
  saved: PersistedState,
  requireVerified = true,
): Promise<WizardState> {
  let state = initialState(requireVerified);
  if (saved.apkId === null) return state;
  let patches: PatchInfo[];
  try {
    patches = await api.listPatches(saved.apkId);
  } catch {
    return withError(state, 'The uploaded app has expired; please upload it again.');
  }
  state = { ...state, step: 'select_patches', apkId: saved.apkId };
  state = patchesLoaded(state, patches);
  for (const id of saved.selected) {
    if (!state.selected.has(id)) state = togglePatch(state, id);
  }
  if (saved.jobId === null) return state;
  try {
    const record = await api.getJob(saved.jobId);
    return jobUpdated(jobCreated(state, saved.jobId), record);
  } catch {
    return withError(state, 'The previous job has expired; confirm your selection to start a new one.');
  }
}
